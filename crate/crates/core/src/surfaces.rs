//! Local-variance surface families with certified bounds and analytic
//! time-average envelopes.
//!
//! Three families are provided. All evaluate a local variance rate
//! `sigma2(s, t)` that is strictly positive, bounded by a certified
//! constant `M`, and uniformly Lipschitz in the price argument with a
//! certified constant `K`:
//!
//! * `Constant`:      sigma2 = alpha
//! * `Seasonal`:      sigma2 = alpha (1 + a sin(omega t))
//! * `DecayingSmile`: sigma2 = alpha (1 + a sin(omega t)) (1 + b e^{-t/tau} psi(s))
//!
//! with `psi(s) = (s - s_ref) / (1 + |s - s_ref|)`, a bounded smile shape
//! whose price-Lipschitz constant is 1. For every family the time average
//! of `sigma2` over a window of length `T` stays within `theta / T` of
//! `alpha`, with `theta` computable from the parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Configuration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceFamily {
    Constant,
    Seasonal,
    DecayingSmile,
}

/// A parametric local-variance surface with certified bound and
/// price-Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolSurface {
    family: SurfaceFamily,
    alpha: f64,
    a: f64,
    omega: f64,
    b: f64,
    tau: f64,
    s_ref: f64,
    bound: f64,
    lipschitz: f64,
}

impl VolSurface {
    pub fn constant(alpha: f64) -> Result<Self, SurfaceError> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(SurfaceError::Parameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        Ok(Self {
            family: SurfaceFamily::Constant,
            alpha,
            a: 0.0,
            omega: 1.0,
            b: 0.0,
            tau: 1.0,
            s_ref: 1.0,
            bound: alpha,
            lipschitz: 0.0,
        })
    }

    pub fn seasonal(alpha: f64, a: f64, omega: f64) -> Result<Self, SurfaceError> {
        let mut s = Self::constant(alpha)?;
        if !a.is_finite() || a.abs() >= 1.0 {
            return Err(SurfaceError::Parameter(format!(
                "|a| must be < 1, got {a}"
            )));
        }
        if !omega.is_finite() || omega <= 0.0 {
            return Err(SurfaceError::Parameter(format!(
                "omega must be > 0, got {omega}"
            )));
        }
        s.family = SurfaceFamily::Seasonal;
        s.a = a;
        s.omega = omega;
        s.bound = alpha * (1.0 + a.abs());
        Ok(s)
    }

    pub fn decaying_smile(
        alpha: f64,
        a: f64,
        omega: f64,
        b: f64,
        tau: f64,
        s_ref: f64,
    ) -> Result<Self, SurfaceError> {
        let mut s = Self::seasonal(alpha, a, omega)?;
        if !(0.0..1.0).contains(&b) {
            return Err(SurfaceError::Parameter(format!(
                "b out of range [0, 1), got {b}"
            )));
        }
        if !tau.is_finite() || tau <= 0.0 {
            return Err(SurfaceError::Parameter(format!(
                "tau must be > 0, got {tau}"
            )));
        }
        if !s_ref.is_finite() || s_ref <= 0.0 {
            return Err(SurfaceError::Parameter(format!(
                "s_ref must be > 0, got {s_ref}"
            )));
        }
        s.family = SurfaceFamily::DecayingSmile;
        s.b = b;
        s.tau = tau;
        s.s_ref = s_ref;
        s.bound = alpha * (1.0 + a.abs()) * (1.0 + b);
        s.lipschitz = alpha * (1.0 + a.abs()) * b;
        Ok(s)
    }

    pub fn family(&self) -> SurfaceFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Certified upper bound M on sigma2.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Certified Lipschitz constant K in the price argument.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// True when sigma2 does not depend on the price argument.
    pub fn is_price_independent(&self) -> bool {
        self.family != SurfaceFamily::DecayingSmile
    }

    /// Reference price of the smile family (its own value for the others).
    pub fn s_ref(&self) -> f64 {
        self.s_ref
    }

    /// Local variance rate at price `s`, time `t`, with domain checks.
    pub fn sigma2(&self, s: f64, t: f64) -> Result<f64, SurfaceError> {
        if !s.is_finite() || s <= 0.0 {
            return Err(SurfaceError::Domain(format!("price must be > 0, got {s}")));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(SurfaceError::Domain(format!("time must be >= 0, got {t}")));
        }
        Ok(self.sigma2_raw(s, t))
    }

    /// Unchecked evaluation for simulation hot loops.
    #[inline]
    pub fn sigma2_raw(&self, s: f64, t: f64) -> f64 {
        match self.family {
            SurfaceFamily::Constant => self.alpha,
            SurfaceFamily::Seasonal => self.alpha * (1.0 + self.a * (self.omega * t).sin()),
            SurfaceFamily::DecayingSmile => {
                let seasonal = 1.0 + self.a * (self.omega * t).sin();
                let u = s - self.s_ref;
                let psi = u / (1.0 + u.abs());
                self.alpha * seasonal * (1.0 + self.b * (-t / self.tau).exp() * psi)
            }
        }
    }

    /// sup over price of sigma2 at time `t`.
    pub fn sigma2_sup(&self, t: f64) -> f64 {
        match self.family {
            SurfaceFamily::DecayingSmile => {
                let seasonal = 1.0 + self.a * (self.omega * t).sin();
                self.alpha * seasonal * (1.0 + self.b * (-t / self.tau).exp())
            }
            _ => self.sigma2_raw(1.0, t),
        }
    }

    /// inf over price of sigma2 at time `t`.
    pub fn sigma2_inf(&self, t: f64) -> f64 {
        match self.family {
            SurfaceFamily::DecayingSmile => {
                let seasonal = 1.0 + self.a * (self.omega * t).sin();
                let psi_min = -self.s_ref / (1.0 + self.s_ref);
                self.alpha * seasonal * (1.0 + self.b * (-t / self.tau).exp() * psi_min)
            }
            _ => self.sigma2_raw(1.0, t),
        }
    }

    /// Analytic time-average envelope of sigma2 over `[v, v + t_len]`.
    pub fn time_average_envelope(
        &self,
        v: f64,
        t_len: f64,
    ) -> Result<TimeAverageEnvelope, SurfaceError> {
        if !t_len.is_finite() || t_len <= 0.0 {
            return Err(SurfaceError::Domain(format!(
                "window length must be > 0, got {t_len}"
            )));
        }
        if !v.is_finite() || v < 0.0 {
            return Err(SurfaceError::Domain(format!(
                "window start must be >= 0, got {v}"
            )));
        }
        let (lower, upper) = match self.family {
            SurfaceFamily::Constant => (self.alpha, self.alpha),
            SurfaceFamily::Seasonal => {
                let avg = self.alpha * (1.0 + self.a * avg_sin(self.omega, v, t_len));
                (avg, avg)
            }
            SurfaceFamily::DecayingSmile => {
                let psi_min = -self.s_ref / (1.0 + self.s_ref);
                let upper = self.smile_average(v, t_len, self.b);
                let lower = self.smile_average(v, t_len, self.b * psi_min);
                (lower, upper)
            }
        };
        Ok(TimeAverageEnvelope {
            lower,
            upper,
            window_start: v,
            window_len: t_len,
        })
    }

    // (1/T) int_v^{v+T} alpha (1 + a sin wt)(1 + c e^{-t/tau}) dt, closed form.
    fn smile_average(&self, v: f64, t_len: f64, c: f64) -> f64 {
        let w = self.omega;
        let tau = self.tau;
        let end = v + t_len;
        let avg_exp = tau * ((-v / tau).exp() - (-end / tau).exp()) / t_len;
        let k = tau / (1.0 + w * w * tau * tau);
        let sin_exp_at =
            |t: f64| (-t / tau).exp() * ((w * t).sin() + w * tau * (w * t).cos());
        let avg_sin_exp = k * (sin_exp_at(v) - sin_exp_at(end)) / t_len;
        self.alpha
            * (1.0
                + self.a * avg_sin(w, v, t_len)
                + c * avg_exp
                + self.a * c * avg_sin_exp)
    }

    /// Coefficient `theta` such that both envelope sides stay within
    /// `theta / T` of `alpha` uniformly in the window start (the bound
    /// convergence holds with exponent gamma = 1 for every family).
    pub fn envelope_theta(&self) -> f64 {
        match self.family {
            SurfaceFamily::Constant => 0.0,
            SurfaceFamily::Seasonal => 2.0 * self.alpha * self.a.abs() / self.omega,
            SurfaceFamily::DecayingSmile => {
                2.0 * self.alpha * self.a.abs() / self.omega
                    + self.alpha * (1.0 + self.a.abs()) * self.b * self.tau
            }
        }
    }

    /// Cumulative expected variance `Lambda(t)` for price-independent
    /// families, in closed form.
    pub fn lambda_analytic(&self, t: f64) -> Option<f64> {
        match self.family {
            SurfaceFamily::Constant => Some(self.alpha * t),
            SurfaceFamily::Seasonal => Some(
                self.alpha * t
                    + self.alpha * self.a / self.omega * (1.0 - (self.omega * t).cos()),
            ),
            SurfaceFamily::DecayingSmile => None,
        }
    }

    /// d Lambda / dt for price-independent families (equals sigma2(t)).
    pub fn lambda_derivative_analytic(&self, t: f64) -> Option<f64> {
        if self.is_price_independent() {
            Some(self.sigma2_raw(1.0, t))
        } else {
            None
        }
    }
}

fn avg_sin(omega: f64, v: f64, t_len: f64) -> f64 {
    ((omega * v).cos() - (omega * (v + t_len)).cos()) / (omega * t_len)
}

/// Bounds on the time-average of sigma2 over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAverageEnvelope {
    pub lower: f64,
    pub upper: f64,
    pub window_start: f64,
    pub window_len: f64,
}

/// Convergence-bound parameters: |QV/T - alpha| <= theta / T^gamma for
/// windows T >= t0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QVParams {
    pub alpha: f64,
    pub theta: f64,
    pub gamma: f64,
    pub t0: f64,
}

impl QVParams {
    pub fn new(alpha: f64, theta: f64, gamma: f64, t0: f64) -> Result<Self, SurfaceError> {
        for (name, v) in [("alpha", alpha), ("theta", theta), ("gamma", gamma), ("t0", t0)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(SurfaceError::Parameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            alpha,
            theta,
            gamma,
            t0,
        })
    }

    /// Half-width of the admissible band at window length `t_len`.
    pub fn band(&self, t_len: f64) -> f64 {
        self.theta / t_len.powf(self.gamma)
    }
}

/// Monte Carlo table of `Lambda(t)` on a uniform grid with linear
/// interpolation between nodes. Built by the engine from a simulated
/// ensemble; this is the required context for price-dependent surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTable {
    times: Vec<f64>,
    values: Vec<f64>,
    std_errs: Vec<f64>,
}

impl LambdaTable {
    pub fn new(times: Vec<f64>, values: Vec<f64>, std_errs: Vec<f64>) -> Result<Self, SurfaceError> {
        if times.len() < 2 || times.len() != values.len() || times.len() != std_errs.len() {
            return Err(SurfaceError::Configuration(
                "lambda table needs at least two aligned nodes".into(),
            ));
        }
        if times[0] != 0.0 || values[0] != 0.0 {
            return Err(SurfaceError::Configuration(
                "lambda table must start at (0, 0)".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SurfaceError::Configuration(
                "lambda table times must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(SurfaceError::Configuration(
                "lambda table values must be nondecreasing".into(),
            ));
        }
        Ok(Self {
            times,
            values,
            std_errs,
        })
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn value(&self, t: f64) -> Result<f64, SurfaceError> {
        if t < 0.0 || t > self.end_time() * (1.0 + 1e-12) {
            return Err(SurfaceError::Domain(format!(
                "lambda table covers [0, {}], got {t}",
                self.end_time()
            )));
        }
        let t = t.min(self.end_time());
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i,
        };
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }

    pub fn std_err(&self, t: f64) -> f64 {
        let i = self
            .times
            .partition_point(|&x| x <= t)
            .min(self.times.len() - 1);
        self.std_errs[i]
    }

    /// Piecewise-constant slope of the interpolant.
    pub fn derivative(&self, t: f64) -> Result<f64, SurfaceError> {
        if t < 0.0 || t > self.end_time() * (1.0 + 1e-12) {
            return Err(SurfaceError::Domain(format!(
                "lambda table covers [0, {}], got {t}",
                self.end_time()
            )));
        }
        let idx = self
            .times
            .partition_point(|&x| x <= t)
            .clamp(1, self.times.len() - 1);
        Ok((self.values[idx] - self.values[idx - 1]) / (self.times[idx] - self.times[idx - 1]))
    }
}

/// Accessor for the cumulative expected variance: analytic when the family
/// permits, otherwise a Monte Carlo table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaFn {
    Analytic(VolSurface),
    Table(LambdaTable),
}

impl LambdaFn {
    /// Analytic accessor; errors for price-dependent families.
    pub fn analytic(surface: &VolSurface) -> Result<Self, SurfaceError> {
        if surface.is_price_independent() {
            Ok(LambdaFn::Analytic(*surface))
        } else {
            Err(SurfaceError::Configuration(
                "price-dependent surface requires a Monte Carlo lambda table".into(),
            ))
        }
    }

    pub fn value(&self, t: f64) -> Result<f64, SurfaceError> {
        if !t.is_finite() || t < 0.0 {
            return Err(SurfaceError::Domain(format!("time must be >= 0, got {t}")));
        }
        match self {
            LambdaFn::Analytic(s) => Ok(s.lambda_analytic(t).expect("analytic family")),
            LambdaFn::Table(tab) => tab.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64, SurfaceError> {
        match self {
            LambdaFn::Analytic(s) => Ok(s.lambda_derivative_analytic(t).expect("analytic family")),
            LambdaFn::Table(tab) => tab.derivative(t),
        }
    }

    /// Standard error of the estimate at `t` (zero for analytic accessors).
    pub fn std_err(&self, t: f64) -> f64 {
        match self {
            LambdaFn::Analytic(_) => 0.0,
            LambdaFn::Table(tab) => tab.std_err(t),
        }
    }
}

/// Value of `Lambda(t)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Cumulative expected variance at time `t`. Analytic for
/// price-independent families; for price-dependent families the Monte
/// Carlo table built from an ensemble (see the engine) must be supplied.
pub fn capital_lambda(
    surface: &VolSurface,
    t: f64,
    mc_table: Option<&LambdaTable>,
) -> Result<LambdaEstimate, SurfaceError> {
    if !t.is_finite() || t < 0.0 {
        return Err(SurfaceError::Domain(format!("time must be >= 0, got {t}")));
    }
    if let Some(v) = surface.lambda_analytic(t) {
        return Ok(LambdaEstimate {
            value: v,
            std_err: 0.0,
        });
    }
    let table = mc_table.ok_or_else(|| {
        SurfaceError::Configuration(
            "price-dependent surface requires an ensemble-backed lambda table".into(),
        )
    })?;
    Ok(LambdaEstimate {
        value: table.value(t)?,
        std_err: table.std_err(t),
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_family_is_flat() {
        let s = VolSurface::constant(0.04).unwrap();
        assert_eq!(s.sigma2(123.0, 7.7).unwrap(), 0.04);
        assert_eq!(s.bound(), 0.04);
        assert_eq!(s.lipschitz(), 0.0);
    }

    #[test]
    fn seasonal_peak_and_trough() {
        let s = VolSurface::seasonal(0.04, 0.5, 2.0 * PI).unwrap();
        // sin = 1 at t = 0.25
        assert!((s.sigma2(50.0, 0.25).unwrap() - 0.06).abs() < 1e-15);
        // sin = -1 at t = 0.75
        assert!((s.sigma2(50.0, 0.75).unwrap() - 0.02).abs() < 1e-15);
        assert!((s.bound() - 0.06).abs() < 1e-15);
    }

    #[test]
    fn smile_at_reference_price() {
        let s = VolSurface::decaying_smile(0.04, 0.0, 1.0, 0.8, 1.0, 100.0).unwrap();
        assert!((s.sigma2(100.0, 0.0).unwrap() - 0.04).abs() < 1e-15);
        assert!((s.bound() - 0.072).abs() < 1e-15);
        assert!((s.lipschitz() - 0.032).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_parameters_are_rejected() {
        assert!(matches!(
            VolSurface::decaying_smile(0.04, 0.0, 1.0, 1.0, 1.0, 100.0),
            Err(SurfaceError::Parameter(msg)) if msg.contains('b')
        ));
        assert!(VolSurface::seasonal(0.04, 1.0, 1.0).is_err());
        assert!(VolSurface::constant(-0.1).is_err());
        assert!(VolSurface::seasonal(0.04, 0.5, -1.0).is_err());
    }

    #[test]
    fn domain_checks() {
        let s = VolSurface::constant(0.04).unwrap();
        assert!(s.sigma2(0.0, 1.0).is_err());
        assert!(s.sigma2(1.0, -0.5).is_err());
    }

    #[test]
    fn seasonal_envelope_full_and_quarter_period() {
        let s = VolSurface::seasonal(0.04, 0.5, 2.0 * PI).unwrap();
        let full = s.time_average_envelope(0.0, 1.0).unwrap();
        assert!((full.lower - 0.04).abs() < 1e-15);
        assert!((full.upper - 0.04).abs() < 1e-15);
        // quarter period: 0.04 (1 + 0.5 (1/(2 pi)) / 0.25), mpmath 0.052732395447351627
        let quarter = s.time_average_envelope(0.0, 0.25).unwrap();
        assert!((quarter.upper - 0.052732395447351627).abs() < 1e-15);
        assert!((quarter.lower - quarter.upper).abs() < 1e-18);
    }

    #[test]
    fn envelope_theta_bounds_hold_on_a_grid() {
        let surfaces = [
            VolSurface::constant(0.04).unwrap(),
            VolSurface::seasonal(0.04, 0.5, 2.0 * PI).unwrap(),
            VolSurface::decaying_smile(0.04, 0.5, 2.0 * PI, 0.8, 1.0, 100.0).unwrap(),
        ];
        for s in &surfaces {
            let theta = s.envelope_theta();
            for &v in &[0.0, 0.3, 1.7, 5.0] {
                for &t_len in &[1.0, 2.5, 10.0, 40.0] {
                    let env = s.time_average_envelope(v, t_len).unwrap();
                    assert!(env.lower <= env.upper);
                    assert!(
                        (env.upper - s.alpha()).abs() * t_len <= theta + 1e-12,
                        "upper violates theta for {:?} at v={v}, T={t_len}",
                        s.family()
                    );
                    assert!(
                        (s.alpha() - env.lower).abs() * t_len <= theta + 1e-12,
                        "lower violates theta for {:?} at v={v}, T={t_len}",
                        s.family()
                    );
                }
            }
        }
    }

    #[test]
    fn envelope_matches_quadrature() {
        // midpoint-rule oracle for the decaying-smile envelope integrals
        let s = VolSurface::decaying_smile(0.05, 0.3, 3.0, 0.6, 2.0, 80.0).unwrap();
        let (v, t_len) = (0.4, 3.7);
        let n = 200_000;
        let h = t_len / n as f64;
        let mut up = 0.0;
        let mut lo = 0.0;
        for k in 0..n {
            let t = v + (k as f64 + 0.5) * h;
            up += s.sigma2_sup(t);
            lo += s.sigma2_inf(t);
        }
        up *= h / t_len;
        lo *= h / t_len;
        let env = s.time_average_envelope(v, t_len).unwrap();
        assert!((env.upper - up).abs() < 1e-9, "upper {} vs {}", env.upper, up);
        assert!((env.lower - lo).abs() < 1e-9, "lower {} vs {}", env.lower, lo);
    }

    #[test]
    fn lipschitz_certificate_sampled() {
        let s = VolSurface::decaying_smile(0.04, 0.5, 2.0 * PI, 0.8, 1.0, 100.0).unwrap();
        let k = s.lipschitz();
        let prices: Vec<f64> = (1..200).map(|i| i as f64).collect();
        for &t in &[0.0, 0.1, 0.9, 3.0] {
            for w in prices.windows(2) {
                let d = (s.sigma2_raw(w[0], t) - s.sigma2_raw(w[1], t)).abs();
                assert!(d <= k * (w[1] - w[0]).abs() + 1e-14);
            }
        }
    }

    #[test]
    fn positivity_and_bound_sampled() {
        let s = VolSurface::decaying_smile(0.04, 0.5, 2.0 * PI, 0.8, 1.0, 100.0).unwrap();
        for i in 0..500 {
            let price = 0.5 + 0.9 * i as f64;
            let t = 0.01 * i as f64;
            let v = s.sigma2_raw(price, t);
            assert!(v > 0.0 && v <= s.bound() + 1e-15);
        }
    }

    #[test]
    fn lambda_analytic_values() {
        let c = VolSurface::constant(0.04).unwrap();
        assert!((capital_lambda(&c, 10.0, None).unwrap().value - 0.4).abs() < 1e-15);
        assert_eq!(capital_lambda(&c, 0.0, None).unwrap().value, 0.0);
        let s = VolSurface::seasonal(0.04, 0.5, 2.0 * PI).unwrap();
        // seasonal term integrates to zero over a full period
        assert!((capital_lambda(&s, 1.0, None).unwrap().value - 0.04).abs() < 1e-15);
    }

    #[test]
    fn lambda_requires_context_for_smile() {
        let s = VolSurface::decaying_smile(0.04, 0.0, 1.0, 0.8, 1.0, 100.0).unwrap();
        assert!(matches!(
            capital_lambda(&s, 1.0, None),
            Err(SurfaceError::Configuration(_))
        ));
    }

    #[test]
    fn lambda_table_interpolates() {
        let tab = LambdaTable::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.04, 0.1],
            vec![0.0, 1e-4, 2e-4],
        )
        .unwrap();
        assert!((tab.value(0.5).unwrap() - 0.02).abs() < 1e-15);
        assert!((tab.value(1.5).unwrap() - 0.07).abs() < 1e-15);
        assert!((tab.derivative(1.5).unwrap() - 0.06).abs() < 1e-15);
        assert!(tab.value(3.0).is_err());
    }
}
