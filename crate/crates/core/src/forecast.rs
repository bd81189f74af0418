//! Conditional Gaussian forecasting of scaled log returns, the
//! finite-horizon corrected variant, log-normal price forecasts, and
//! mean-variance present-value analysis of derivative portfolios.
//!
//! Scaling convention: with a history split at `z T` and horizons
//! `(z + t_i) T`, forecasts describe `X((z + t_i) T) / sqrt(T)` given
//! `X(z T) / sqrt(T) = x`, where `X` is the centered log return from
//! time 0.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ConditionalSamples, CovParams, EngineError};
use crate::math::{
    ks_critical, ks_statistic, mean_and_std_err, norm_cdf, psd_cholesky,
};
use crate::pricing::{OptionKind, OptionSpec};
use crate::rng::substream;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("singular conditioning: {0}")]
    SingularConditioning(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForecastVariant {
    Limit,
    CorrectedGammaGt1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub z: f64,
    pub x: f64,
    pub big_t: f64,
}

/// Multivariate Gaussian forecast of scaled conditional log returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDistribution {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub variant: ForecastVariant,
    pub conditioning: Conditioning,
}

fn check_times(times: &[f64]) -> Result<(), ForecastError> {
    if times.is_empty() {
        return Err(ForecastError::Domain("times must be nonempty".into()));
    }
    if times[0] <= 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(ForecastError::Domain(
            "times must be positive and sorted ascending".into(),
        ));
    }
    Ok(())
}

/// Limiting forecast: mean `(z + t_i)/z x`, covariance
/// `t_i (z + t_j)/z alpha` for `i <= j`.
pub fn limit_forecast(
    x: f64,
    z: f64,
    times: &[f64],
    alpha: f64,
) -> Result<ForecastDistribution, ForecastError> {
    if z == 0.0 {
        return Err(ForecastError::SingularConditioning(
            "conditioning time z must be > 0".into(),
        ));
    }
    if !z.is_finite() || z <= 0.0 || !alpha.is_finite() || alpha <= 0.0 {
        return Err(ForecastError::Domain(
            "need z > 0 and alpha > 0".into(),
        ));
    }
    check_times(times)?;
    let n = times.len();
    let mean: Vec<f64> = times.iter().map(|t| (z + t) / z * x).collect();
    let mut cov = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = times[i] * (z + times[j]) / z * alpha;
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(ForecastDistribution {
        times: times.to_vec(),
        mean,
        cov,
        variant: ForecastVariant::Limit,
        conditioning: Conditioning {
            z,
            x,
            big_t: f64::INFINITY,
        },
    })
}

/// Finite-horizon corrected forecast, `gamma > 1` branch:
///
/// mean_i = ((z + t_i)/z - alpha t_i / (beta z^2 T)) x
/// cov_ij = alpha t_i (z + t_j)/z - alpha^2 t_i t_j / (beta z^2 T)
///
/// For `gamma <= 1` the correction only changes the error order, so the
/// limiting forecast is returned unchanged. Errors if the corrected
/// covariance loses positive semidefiniteness (horizon too small for the
/// correction; use exact conditional simulation instead).
pub fn corrected_forecast(
    x: f64,
    z: f64,
    times: &[f64],
    cov_params: &CovParams,
    big_t: f64,
    gamma: f64,
) -> Result<ForecastDistribution, ForecastError> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(ForecastError::Domain(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    if gamma <= 1.0 {
        return limit_forecast(x, z, times, cov_params.alpha);
    }
    if !cov_params.beta.is_finite() || cov_params.beta <= 0.0 {
        return Err(ForecastError::Domain(
            "corrected forecast needs beta > 0".into(),
        ));
    }
    if !big_t.is_finite() || big_t <= 0.0 {
        return Err(ForecastError::Domain(format!(
            "horizon scale T must be > 0, got {big_t}"
        )));
    }
    let base = limit_forecast(x, z, times, cov_params.alpha)?;
    let alpha = cov_params.alpha;
    let correction = alpha / (cov_params.beta * z * z * big_t);
    let n = times.len();
    let mean: Vec<f64> = times
        .iter()
        .map(|t| ((z + t) / z - correction * t) * x)
        .collect();
    let mut cov = base.cov;
    for i in 0..n {
        for j in 0..n {
            cov[i][j] -= alpha * correction * times[i] * times[j];
        }
    }
    if psd_cholesky(&cov, 1e-10).is_err() {
        return Err(ForecastError::Regime(format!(
            "corrected covariance is not positive semidefinite at T = {big_t}; \
             use exact conditional simulation instead"
        )));
    }
    Ok(ForecastDistribution {
        times: times.to_vec(),
        mean,
        cov,
        variant: ForecastVariant::CorrectedGammaGt1,
        conditioning: Conditioning { z, x, big_t },
    })
}

/// Joint log-normal forecast of prices `S((z + t_i) T)`:
/// `log S` is Gaussian with mean
/// `log s0 + lambda0((z + t_i) T) + psi_i sqrt(T)` and covariance
/// `Theta_ij T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalForecast {
    /// Payoff times measured from the conditioning epoch: `t_i T`.
    pub horizons: Vec<f64>,
    pub mean_log: Vec<f64>,
    pub cov_log: Vec<Vec<f64>>,
    pub s0: f64,
    pub s_z: f64,
    pub big_t: f64,
}

/// Builds the price forecast from a scaled-return forecast. The
/// conditioning value of `forecast` must equal
/// `(log(s_z/s0) - mean_rate z T) / sqrt(T)`.
#[allow(clippy::needless_range_loop)]
pub fn lognormal_price_forecast(
    s0: f64,
    s_z: f64,
    mean_rate: f64,
    forecast: &ForecastDistribution,
    big_t: f64,
) -> Result<LogNormalForecast, ForecastError> {
    if !s0.is_finite() || s0 <= 0.0 || !s_z.is_finite() || s_z <= 0.0 {
        return Err(ForecastError::Domain("prices must be > 0".into()));
    }
    if !big_t.is_finite() || big_t <= 0.0 {
        return Err(ForecastError::Domain(format!(
            "scale T must be > 0, got {big_t}"
        )));
    }
    if forecast.conditioning.big_t.is_finite()
        && (forecast.conditioning.big_t - big_t).abs() > 1e-9 * big_t
    {
        return Err(ForecastError::Consistency(format!(
            "forecast was built for T = {}, got {big_t}",
            forecast.conditioning.big_t
        )));
    }
    let z = forecast.conditioning.z;
    let x_implied = ((s_z / s0).ln() - mean_rate * z * big_t) / big_t.sqrt();
    if (x_implied - forecast.conditioning.x).abs() > 1e-9 * (1.0 + x_implied.abs()) {
        return Err(ForecastError::Consistency(format!(
            "conditioning mismatch: forecast has x = {}, prices imply x = {x_implied}",
            forecast.conditioning.x
        )));
    }
    let sqrt_t = big_t.sqrt();
    let n = forecast.times.len();
    let mut mean_log = Vec::with_capacity(n);
    let mut horizons = Vec::with_capacity(n);
    for (i, &t) in forecast.times.iter().enumerate() {
        let lambda0 = mean_rate * (z + t) * big_t;
        mean_log.push(s0.ln() + lambda0 + forecast.mean[i] * sqrt_t);
        horizons.push(t * big_t);
    }
    let mut cov_log = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            cov_log[i][j] = forecast.cov[i][j] * big_t;
        }
    }
    Ok(LogNormalForecast {
        horizons,
        mean_log,
        cov_log,
        s0,
        s_z,
        big_t,
    })
}

/// Short-horizon Gaussian parameters for `log(S((z+t)T) / S(zT))`: mean
/// `m_bar - alpha t T / 2` and variance `alpha t T`, where `m_bar` is the
/// user's expected cumulative return over the window.
pub fn short_horizon_forecast(m_bar: f64, alpha: f64, t: f64, big_t: f64) -> (f64, f64) {
    let span = t * big_t;
    (m_bar - 0.5 * alpha * span, alpha * span)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Instrument {
    /// A position in the underlying marked at a forecast horizon.
    UnderlyingShare { horizon: f64 },
    /// A European claim with expiry measured from the conditioning epoch.
    EuropeanOption(OptionSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub positions: Vec<(f64, Instrument)>,
}

impl Portfolio {
    pub fn new(positions: Vec<(f64, Instrument)>) -> Result<Self, ForecastError> {
        if positions.is_empty() {
            return Err(ForecastError::Domain("portfolio must be nonempty".into()));
        }
        Ok(Self { positions })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PvMethod {
    MonteCarlo,
    ClosedFormCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PVReport {
    pub mean_pv: f64,
    pub var_pv: f64,
    pub n_samples: usize,
    pub method: PvMethod,
}

fn horizon_index(forecast: &LogNormalForecast, horizon: f64) -> Result<usize, ForecastError> {
    forecast
        .horizons
        .iter()
        .position(|&h| (h - horizon).abs() <= 1e-9 * h.abs().max(1.0))
        .ok_or_else(|| {
            ForecastError::Configuration(format!(
                "payoff time {horizon} is not among the forecast horizons {:?}",
                forecast.horizons
            ))
        })
}

/// Samples the joint log-normal price forecast and aggregates discounted
/// instrument payoffs into the portfolio present value.
pub fn portfolio_pv(
    portfolio: &Portfolio,
    forecast: &LogNormalForecast,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PVReport, ForecastError> {
    if n_samples == 0 {
        return Err(ForecastError::Domain("n_samples must be >= 1".into()));
    }
    // resolve each position to (quantity, horizon index, payoff)
    let mut legs: Vec<(f64, usize, f64, Option<OptionSpec>)> = Vec::new();
    for (qty, instrument) in &portfolio.positions {
        match instrument {
            Instrument::UnderlyingShare { horizon } => {
                legs.push((*qty, horizon_index(forecast, *horizon)?, *horizon, None));
            }
            Instrument::EuropeanOption(spec) => {
                legs.push((
                    *qty,
                    horizon_index(forecast, spec.expiry)?,
                    spec.expiry,
                    Some(*spec),
                ));
            }
        }
    }
    let n = forecast.horizons.len();
    let factor = psd_cholesky(&forecast.cov_log, 1e-10).map_err(|pivot| {
        ForecastError::Regime(format!(
            "forecast covariance is not positive semidefinite (pivot {pivot})"
        ))
    })?;

    let mut pvs = Vec::with_capacity(n_samples);
    let mut z = vec![0.0f64; n];
    let mut log_s = vec![0.0f64; n];
    let mut rng = substream(seed, 0);
    for _ in 0..n_samples {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..n {
            let mut v = forecast.mean_log[i];
            for k in 0..=i {
                v += factor[i][k] * z[k];
            }
            log_s[i] = v;
        }
        let mut pv = 0.0;
        for &(qty, idx, horizon, spec) in &legs {
            let s = log_s[idx].exp();
            let payoff = match spec {
                None => s,
                Some(opt) => match opt.kind {
                    OptionKind::Call => (s - opt.strike).max(0.0),
                    OptionKind::Put => (opt.strike - s).max(0.0),
                    OptionKind::Forward => s - opt.strike,
                    OptionKind::VarianceCall | OptionKind::VariancePut => {
                        return Err(ForecastError::Configuration(
                            "variance options are not priced from a price forecast".into(),
                        ))
                    }
                },
            };
            pv += qty * (-r * horizon).exp() * payoff;
        }
        pvs.push(pv);
    }
    let (mean, se) = mean_and_std_err(&pvs);
    let var = se * se * n_samples as f64;
    Ok(PVReport {
        mean_pv: mean,
        var_pv: var,
        n_samples,
        method: PvMethod::MonteCarlo,
    })
}

/// Closed-form present value for single-position portfolios under the
/// log-normal forecast (calls, puts, forwards, shares). Returns None for
/// portfolios the closed form does not cover.
pub fn portfolio_pv_closed_form(
    portfolio: &Portfolio,
    forecast: &LogNormalForecast,
    r: f64,
) -> Result<Option<PVReport>, ForecastError> {
    if portfolio.positions.len() != 1 {
        return Ok(None);
    }
    let (qty, instrument) = &portfolio.positions[0];
    let (horizon, value) = match instrument {
        Instrument::UnderlyingShare { horizon } => {
            let idx = horizon_index(forecast, *horizon)?;
            let (m, v) = (forecast.mean_log[idx], forecast.cov_log[idx][idx]);
            (*horizon, (m + 0.5 * v).exp())
        }
        Instrument::EuropeanOption(spec) => {
            let idx = horizon_index(forecast, spec.expiry)?;
            let (m, v) = (forecast.mean_log[idx], forecast.cov_log[idx][idx]);
            let value = match spec.kind {
                OptionKind::Forward => (m + 0.5 * v).exp() - spec.strike,
                OptionKind::Call | OptionKind::Put => {
                    if v <= 0.0 {
                        let s = m.exp();
                        match spec.kind {
                            OptionKind::Call => (s - spec.strike).max(0.0),
                            _ => (spec.strike - s).max(0.0),
                        }
                    } else {
                        let sd = v.sqrt();
                        let d1 = (m + v - spec.strike.ln()) / sd;
                        let d2 = d1 - sd;
                        let call =
                            (m + 0.5 * v).exp() * norm_cdf(d1) - spec.strike * norm_cdf(d2);
                        match spec.kind {
                            OptionKind::Call => call,
                            // put = call - (E S - K)
                            _ => call - ((m + 0.5 * v).exp() - spec.strike),
                        }
                    }
                }
                _ => return Ok(None),
            };
            (spec.expiry, value)
        }
    };
    Ok(Some(PVReport {
        mean_pv: qty * (-r * horizon).exp() * value,
        var_pv: 0.0,
        n_samples: 0,
        method: PvMethod::ClosedFormCheck,
    }))
}

/// Kolmogorov-Smirnov and moment audit of conditional samples against a
/// Gaussian forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub ks: Vec<f64>,
    pub ks_critical: f64,
    pub ks_pass: bool,
    pub mean_checks: Vec<MomentCheck>,
    pub cov_pass: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub time: f64,
    pub sample: f64,
    pub forecast: f64,
    pub std_err: f64,
}

/// Standardizes each marginal of the conditional samples with the
/// forecast's mean and variance, tests it against the standard normal at
/// the 1% KS level, and checks sample means and covariances against the
/// forecast within 3 standard errors.
#[allow(clippy::needless_range_loop)]
pub fn clt_audit(
    samples: &ConditionalSamples,
    forecast: &ForecastDistribution,
) -> Result<CltReport, ForecastError> {
    // Limit-variant forecasts carry no finite scale; infer it from the
    // samples' conditioning time.
    let big_t = if forecast.conditioning.big_t.is_finite() {
        forecast.conditioning.big_t
    } else {
        samples.z_time / forecast.conditioning.z
    };
    if !big_t.is_finite() || big_t <= 0.0 {
        return Err(ForecastError::Configuration(
            "cannot infer the horizon scale from the samples".into(),
        ));
    }
    let n_times = forecast.times.len();
    if samples.times.len() != n_times {
        return Err(ForecastError::Configuration(format!(
            "sample times {:?} do not match forecast times {:?}",
            samples.times, forecast.times
        )));
    }
    for (got, want) in samples.times.iter().zip(&forecast.times) {
        let expect = (forecast.conditioning.z + want) * big_t;
        if (got - expect).abs() > 1e-9 * expect.abs().max(1.0) {
            return Err(ForecastError::Configuration(format!(
                "sample time {got} does not match forecast horizon {expect}"
            )));
        }
    }
    let z_expect = forecast.conditioning.z * big_t;
    if (samples.z_time - z_expect).abs() > 1e-9 * z_expect.abs().max(1.0) {
        return Err(ForecastError::Configuration(
            "sample conditioning time does not match the forecast".into(),
        ));
    }
    let x_expect = forecast.conditioning.x * big_t.sqrt();
    if (samples.x_value - x_expect).abs() > 1e-9 * x_expect.abs().max(1.0) {
        return Err(ForecastError::Configuration(
            "sample conditioning value does not match the forecast".into(),
        ));
    }

    let n = samples.n_paths;
    let sqrt_t = big_t.sqrt();
    let critical = ks_critical(0.01, n);
    let mut ks = Vec::with_capacity(n_times);
    let mut mean_checks = Vec::with_capacity(n_times);
    let mut scaled: Vec<Vec<f64>> = Vec::with_capacity(n_times);
    for i in 0..n_times {
        let col: Vec<f64> = samples.column(i).iter().map(|v| v / sqrt_t).collect();
        let sd = forecast.cov[i][i].sqrt();
        let standardized: Vec<f64> =
            col.iter().map(|v| (v - forecast.mean[i]) / sd).collect();
        ks.push(ks_statistic(&standardized, norm_cdf));
        let (mean, se) = mean_and_std_err(&col);
        mean_checks.push(MomentCheck {
            time: forecast.times[i],
            sample: mean,
            forecast: forecast.mean[i],
            std_err: se,
        });
        scaled.push(col);
    }
    let ks_pass = ks.iter().all(|&d| d < critical);
    let mean_pass = mean_checks
        .iter()
        .all(|c| (c.sample - c.forecast).abs() <= 3.0 * c.std_err);

    // sample covariance against the forecast covariance
    let nf = n as f64;
    let mut cov_pass = true;
    for i in 0..n_times {
        for j in i..n_times {
            let (mi, mj) = (mean_checks[i].sample, mean_checks[j].sample);
            let mut c = 0.0;
            for p in 0..n {
                c += (scaled[i][p] - mi) * (scaled[j][p] - mj);
            }
            c /= nf - 1.0;
            let want = forecast.cov[i][j];
            // Gaussian sampling error of a covariance entry
            let se = ((forecast.cov[i][i] * forecast.cov[j][j] + want * want) / nf).sqrt();
            if (c - want).abs() > 3.0 * se {
                cov_pass = false;
            }
        }
    }

    Ok(CltReport {
        ks,
        ks_critical: critical,
        ks_pass,
        mean_checks,
        cov_pass,
        pass: ks_pass && mean_pass && cov_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate_canonical_conditional;
    use crate::math::sym_eigenvalues;
    use crate::surfaces::VolSurface;

    #[test]
    fn limit_forecast_hand_values() {
        let f = limit_forecast(0.1, 1.0, &[1.0], 0.04).unwrap();
        assert!((f.mean[0] - 0.2).abs() < 1e-15);
        assert!((f.cov[0][0] - 0.08).abs() < 1e-15);

        let f2 = limit_forecast(0.1, 1.0, &[1.0, 2.0], 0.04).unwrap();
        assert!((f2.cov[0][1] - 0.12).abs() < 1e-15);
        assert!((f2.cov[1][1] - 0.24).abs() < 1e-15);
    }

    #[test]
    fn limit_forecast_mean_is_linear_in_x() {
        let a = limit_forecast(0.1, 2.0, &[1.0, 3.0], 0.04).unwrap();
        let b = limit_forecast(0.3, 2.0, &[1.0, 3.0], 0.04).unwrap();
        for i in 0..2 {
            assert!((3.0 * a.mean[i] - b.mean[i]).abs() < 1e-15);
        }
        let zero = limit_forecast(0.0, 2.0, &[1.0, 3.0], 0.04).unwrap();
        assert!(zero.mean.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn limit_forecast_cov_is_psd_over_a_sweep() {
        for &z in &[0.25, 1.0, 7.0] {
            let times: Vec<f64> = (1..8).map(|k| 0.4 * k as f64).collect();
            let f = limit_forecast(0.2, z, &times, 0.04).unwrap();
            let trace: f64 = (0..times.len()).map(|i| f.cov[i][i]).sum();
            let evs = sym_eigenvalues(&f.cov);
            assert!(evs.iter().all(|&e| e >= -1e-10 * trace));
        }
    }

    #[test]
    fn rejects_zero_conditioning_time() {
        assert!(matches!(
            limit_forecast(0.1, 0.0, &[1.0], 0.04),
            Err(ForecastError::SingularConditioning(_))
        ));
    }

    #[test]
    fn corrected_forecast_hand_values() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let f = corrected_forecast(0.1, 1.0, &[1.0], &cov, 100.0, 2.0).unwrap();
        assert!((f.mean[0] - 0.196).abs() < 1e-15);
        assert!((f.cov[0][0] - 0.0784).abs() < 1e-15);
        assert_eq!(f.variant, ForecastVariant::CorrectedGammaGt1);
    }

    #[test]
    fn corrected_converges_to_limit() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let times = [1.0, 2.0];
        let limit = limit_forecast(0.1, 1.0, &times, 0.04).unwrap();
        let mut last = f64::INFINITY;
        for &big_t in &[100.0, 1000.0, 10000.0] {
            let c = corrected_forecast(0.1, 1.0, &times, &cov, big_t, 2.0).unwrap();
            let gap = c
                .mean
                .iter()
                .zip(&limit.mean)
                .map(|(a, b)| (a - b).abs())
                .chain(
                    c.cov
                        .iter()
                        .flatten()
                        .zip(limit.cov.iter().flatten())
                        .map(|(a, b)| (a - b).abs()),
                )
                .fold(0.0f64, f64::max);
            assert!(gap < last);
            assert!(gap * big_t < 1.0); // entrywise O(1/T)
            last = gap;
        }
    }

    #[test]
    fn corrected_gamma_below_one_maps_to_limit() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let f = corrected_forecast(0.1, 1.0, &[1.0], &cov, 100.0, 0.8).unwrap();
        assert_eq!(f.variant, ForecastVariant::Limit);
        assert!((f.mean[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn corrected_rejects_tiny_horizon() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        assert!(matches!(
            corrected_forecast(0.1, 1.0, &[1.0, 2.0, 4.0], &cov, 0.5, 2.0),
            Err(ForecastError::Regime(_))
        ));
    }

    #[test]
    fn lognormal_forecast_hand_values() {
        // z = 1, t = 1, T = 100, alpha = 0.04, x sqrt(T) = 1
        let x = 0.1;
        let f = limit_forecast(x, 1.0, &[1.0], 0.04).unwrap();
        let s0 = 100.0;
        let s_z = s0 * (x * 100.0f64.sqrt()).exp(); // log(s_z/s0) = 1
        let ln = lognormal_price_forecast(s0, s_z, 0.0, &f, 100.0).unwrap();
        assert!((ln.mean_log[0] - (s0.ln() + 2.0)).abs() < 1e-12);
        assert!((ln.cov_log[0][0] - 8.0).abs() < 1e-12);
        assert!((ln.horizons[0] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn lognormal_forecast_zero_conditioning() {
        // s_z at the drift line: centered return is 0, so the mean log
        // price stays at log s0 and the variance is alpha t (z+t) T / z
        let f = limit_forecast(0.0, 1.0, &[1.0], 0.04).unwrap();
        let ln = lognormal_price_forecast(100.0, 100.0, 0.0, &f, 100.0).unwrap();
        assert!((ln.mean_log[0] - 100.0f64.ln()).abs() < 1e-12);
        assert!((ln.cov_log[0][0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn clt_audit_limit_variant_passes_at_large_horizon() {
        // at T = 1e4 the corrected/limit gap is O(1/T), inside KS noise
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let surface = VolSurface::constant(0.04).unwrap();
        let big_t: f64 = 1e4;
        let samples = simulate_canonical_conditional(
            &cov,
            &surface,
            1.0 * big_t,
            0.1 * big_t.sqrt(),
            &[2.0 * big_t],
            10_000,
            29,
        )
        .unwrap();
        let forecast = limit_forecast(0.1, 1.0, &[1.0], 0.04).unwrap();
        let rep = clt_audit(&samples, &forecast).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn lognormal_forecast_checks_consistency() {
        let f = limit_forecast(0.1, 1.0, &[1.0], 0.04).unwrap();
        assert!(matches!(
            lognormal_price_forecast(100.0, 90.0, 0.0, &f, 100.0),
            Err(ForecastError::Consistency(_))
        ));
    }

    #[test]
    fn short_horizon_values() {
        let (m, v) = short_horizon_forecast(0.03, 0.04, 0.1, 100.0);
        assert!((m - (0.03 - 0.2)).abs() < 1e-15);
        assert!((v - 0.4).abs() < 1e-15);
    }

    fn small_price_forecast() -> LogNormalForecast {
        let x = 0.05;
        let f = limit_forecast(x, 1.0, &[0.5, 1.0], 0.04).unwrap();
        let s0 = 100.0;
        let s_z = s0 * (x * 2.0f64).exp(); // T = 4 => sqrt(T) = 2
        lognormal_price_forecast(s0, s_z, 0.0, &f, 4.0).unwrap()
    }

    #[test]
    fn parity_triple_has_zero_pv() {
        let forecast = small_price_forecast();
        let spec_call = OptionSpec::new(OptionKind::Call, 100.0, 4.0).unwrap();
        let spec_put = OptionSpec::new(OptionKind::Put, 100.0, 4.0).unwrap();
        let spec_fwd = OptionSpec::new(OptionKind::Forward, 100.0, 4.0).unwrap();
        let p = Portfolio::new(vec![
            (1.0, Instrument::EuropeanOption(spec_call)),
            (-1.0, Instrument::EuropeanOption(spec_put)),
            (-1.0, Instrument::EuropeanOption(spec_fwd)),
        ])
        .unwrap();
        let rep = portfolio_pv(&p, &forecast, 0.03, 5_000, 3).unwrap();
        assert_eq!(rep.mean_pv, 0.0);
        assert_eq!(rep.var_pv, 0.0);
    }

    #[test]
    fn long_short_same_call_cancels() {
        let forecast = small_price_forecast();
        let spec = OptionSpec::new(OptionKind::Call, 110.0, 2.0).unwrap();
        let p = Portfolio::new(vec![
            (2.0, Instrument::EuropeanOption(spec)),
            (-2.0, Instrument::EuropeanOption(spec)),
        ])
        .unwrap();
        let rep = portfolio_pv(&p, &forecast, 0.01, 1_000, 9).unwrap();
        assert_eq!(rep.mean_pv, 0.0);
        assert_eq!(rep.var_pv, 0.0);
    }

    #[test]
    fn single_call_matches_closed_form() {
        let forecast = small_price_forecast();
        let spec = OptionSpec::new(OptionKind::Call, 105.0, 4.0).unwrap();
        let p = Portfolio::new(vec![(1.0, Instrument::EuropeanOption(spec))]).unwrap();
        let mc = portfolio_pv(&p, &forecast, 0.02, 40_000, 5).unwrap();
        let cf = portfolio_pv_closed_form(&p, &forecast, 0.02)
            .unwrap()
            .unwrap();
        let se = (mc.var_pv / mc.n_samples as f64).sqrt();
        assert!(
            (mc.mean_pv - cf.mean_pv).abs() <= 3.0 * se,
            "mc {} vs cf {}, se {se}",
            mc.mean_pv,
            cf.mean_pv
        );
    }

    #[test]
    fn degenerate_share_recovers_discounted_spot() {
        // variance -> 0 as t -> 0: share PV -> e^{-r t} s_z
        let x = 0.05;
        let t_small = 1e-8;
        let f = limit_forecast(x, 1.0, &[t_small], 0.04).unwrap();
        let s0 = 100.0;
        let big_t: f64 = 4.0;
        let s_z = s0 * (x * big_t.sqrt()).exp();
        let ln = lognormal_price_forecast(s0, s_z, 0.0, &f, big_t).unwrap();
        let p = Portfolio::new(vec![(
            1.0,
            Instrument::UnderlyingShare {
                horizon: t_small * big_t,
            },
        )])
        .unwrap();
        let rep = portfolio_pv(&p, &ln, 0.05, 2_000, 1).unwrap();
        let want = (-0.05 * t_small * big_t).exp() * s_z;
        assert!((rep.mean_pv - want).abs() < 1e-3);
    }

    #[test]
    fn missing_payoff_time_is_an_error() {
        let forecast = small_price_forecast();
        let spec = OptionSpec::new(OptionKind::Call, 100.0, 3.0).unwrap();
        let p = Portfolio::new(vec![(1.0, Instrument::EuropeanOption(spec))]).unwrap();
        assert!(matches!(
            portfolio_pv(&p, &forecast, 0.0, 100, 1),
            Err(ForecastError::Configuration(_))
        ));
    }

    #[test]
    fn clt_audit_passes_on_exact_conditional_samples() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let surface = VolSurface::constant(0.04).unwrap();
        let big_t = 100.0;
        let samples = simulate_canonical_conditional(
            &cov,
            &surface,
            1.0 * big_t,
            0.1 * big_t.sqrt(),
            &[2.0 * big_t],
            10_000,
            23,
        )
        .unwrap();
        let forecast = corrected_forecast(0.1, 1.0, &[1.0], &cov, big_t, 2.0).unwrap();
        let rep = clt_audit(&samples, &forecast).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn clt_audit_rejects_mismatched_times() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let surface = VolSurface::constant(0.04).unwrap();
        let samples = simulate_canonical_conditional(
            &cov,
            &surface,
            100.0,
            1.0,
            &[150.0],
            100,
            1,
        )
        .unwrap();
        let forecast = corrected_forecast(0.1, 1.0, &[1.0], &cov, 100.0, 2.0).unwrap();
        assert!(matches!(
            clt_audit(&samples, &forecast),
            Err(ForecastError::Configuration(_))
        ));
    }
}
