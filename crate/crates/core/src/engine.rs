//! Path simulation for price and centered-log-return dynamics.
//!
//! Prices evolve by Euler-Maruyama applied in log space,
//!
//! `dlog S = (mu(S, t) - sigma2(S, t)/2) dt + sigma(S, t) sqrt(dt) Z`,
//!
//! which keeps every node strictly positive and reproduces the exact
//! terminal law when the variance rate is constant. The variance rate is
//! sampled at the midpoint of each step in time (and at the left node in
//! price), which removes the O(dt) quadrature bias of left-node sampling
//! for time-varying surfaces.
//!
//! Determinism contract: an ensemble is a pure function of
//! `(parameters, grid, n_paths, seed)`. Each path draws from its own
//! counter-derived stream, so partitioning paths across worker threads
//! never changes the output.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

use crate::math::mean_and_std_err;
use crate::rng::substream;
use crate::surfaces::{LambdaFn, LambdaTable, SurfaceError, VolSurface};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Uniform time grid `t_start + k dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub t_start: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl PathGrid {
    pub fn new(t_start: f64, dt: f64, n_steps: usize) -> Result<Self, EngineError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(EngineError::Domain(format!("dt must be > 0, got {dt}")));
        }
        if n_steps == 0 {
            return Err(EngineError::Domain("n_steps must be >= 1".into()));
        }
        if !t_start.is_finite() || t_start < 0.0 {
            return Err(EngineError::Domain(format!(
                "t_start must be >= 0, got {t_start}"
            )));
        }
        Ok(Self {
            t_start,
            dt,
            n_steps,
        })
    }

    pub fn time(&self, node: usize) -> f64 {
        self.t_start + node as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Node index whose time matches `t` to relative tolerance 1e-9.
    pub fn node_of_time(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t_start) / self.dt).round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        let tol = 1e-9 * t.abs().max(1.0);
        if (self.time(k) - t).abs() <= tol {
            Some(k)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    Price,
    CenteredLogReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Physical,
    RiskNeutral,
    Canonical,
}

/// Coefficients of the wide-sense-Markov covariance model.
///
/// `beta` must be nonnegative on an unbounded time domain; a negative
/// `beta` is admissible only with an explicit bounded domain end, with the
/// growth function checked positive there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovParams {
    pub alpha: f64,
    pub beta: f64,
    pub domain_end: Option<f64>,
}

impl CovParams {
    pub fn new(alpha: f64, beta: f64, domain_end: Option<f64>) -> Result<Self, EngineError> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(EngineError::Parameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        if !beta.is_finite() {
            return Err(EngineError::Parameter(format!("beta must be finite, got {beta}")));
        }
        match domain_end {
            None => {
                if beta < 0.0 {
                    return Err(EngineError::Parameter(format!(
                        "beta must be >= 0 on an unbounded domain, got {beta}; \
                         set domain_end to allow negative beta"
                    )));
                }
            }
            Some(r) => {
                if !r.is_finite() || r <= 0.0 {
                    return Err(EngineError::Parameter(format!(
                        "domain_end must be > 0, got {r}"
                    )));
                }
            }
        }
        Ok(Self {
            alpha,
            beta,
            domain_end,
        })
    }
}

/// Growth function `g(t) = 1 + (beta/alpha^2) Lambda(t)` with its clock
/// `int_0^t sigma2/g^2`, used by the canonical centered-return dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFunction {
    pub cov: CovParams,
    pub lambda: LambdaFn,
}

impl GrowthFunction {
    pub fn new(cov: CovParams, lambda: LambdaFn) -> Result<Self, EngineError> {
        let g = Self { cov, lambda };
        if let Some(r) = cov.domain_end {
            let g_end = g.value(r)?;
            if g_end <= 0.0 {
                return Err(EngineError::Parameter(format!(
                    "growth function nonpositive at domain end: g({r}) = {g_end}; \
                     beta must exceed -alpha^2/Lambda(domain_end)"
                )));
            }
        }
        Ok(g)
    }

    pub fn value(&self, t: f64) -> Result<f64, EngineError> {
        let lam = self.lambda.value(t)?;
        Ok(1.0 + self.cov.beta / (self.cov.alpha * self.cov.alpha) * lam)
    }

    /// `g'(t) / g(t)`, the mean-reversion-in-level coefficient of the
    /// centered-return SDE.
    pub fn log_derivative(&self, t: f64) -> Result<f64, EngineError> {
        let g = self.value(t)?;
        if g <= 0.0 {
            return Err(EngineError::Parameter(format!(
                "growth function nonpositive at t = {t}"
            )));
        }
        let dl = self.lambda.derivative(t)?;
        Ok(self.cov.beta / (self.cov.alpha * self.cov.alpha) * dl / g)
    }

    /// Brownian clock `int_0^t sigma2 / g^2 dw`, in closed form.
    pub fn clock(&self, t: f64) -> Result<f64, EngineError> {
        if self.cov.beta == 0.0 {
            return Ok(self.lambda.value(t)?);
        }
        let g = self.value(t)?;
        if g <= 0.0 {
            return Err(EngineError::Parameter(format!(
                "growth function nonpositive at t = {t}"
            )));
        }
        let a2 = self.cov.alpha * self.cov.alpha;
        Ok(a2 / self.cov.beta * (1.0 - 1.0 / g))
    }

    fn check_positive_on(&self, grid: &PathGrid) -> Result<(), EngineError> {
        if let Some(r) = self.cov.domain_end {
            if grid.end_time() > r * (1.0 + 1e-12) {
                return Err(EngineError::Parameter(format!(
                    "grid end {} exceeds bounded domain end {r}",
                    grid.end_time()
                )));
            }
        }
        // g is monotone in t (Lambda is nondecreasing), so the endpoints decide.
        for t in [grid.t_start, grid.end_time()] {
            if self.value(t)? <= 0.0 {
                return Err(EngineError::Parameter(format!(
                    "growth function nonpositive at t = {t} (illegal beta)"
                )));
            }
        }
        Ok(())
    }
}

/// Drift specification for price simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftSpec {
    /// dS/S = mu dt + sigma dB
    ConstantMu { mu: f64 },
    /// dS/S = r dt + sigma dB
    RiskNeutral { r: f64 },
    /// Drift implied by the canonical centered-return dynamics:
    /// mu(s, t) = (g'/g)(log(s/s0) - lambda0(t)) + m(t) + sigma2(s, t)/2,
    /// with constant mean-log-return rate m and lambda0(t) = m t.
    GrowthImplied {
        growth: GrowthFunction,
        mean_rate: f64,
        s0: f64,
    },
}

/// Maps a covariance model onto the physical price drift that reproduces
/// the centered-return law after centering by `lambda0(t) = mean_rate t`.
pub fn drift_from_growth(
    cov: CovParams,
    lambda: LambdaFn,
    mean_rate: f64,
    s0: f64,
) -> Result<DriftSpec, EngineError> {
    if !s0.is_finite() || s0 <= 0.0 {
        return Err(EngineError::Domain(format!("s0 must be > 0, got {s0}")));
    }
    Ok(DriftSpec::GrowthImplied {
        growth: GrowthFunction::new(cov, lambda)?,
        mean_rate,
        s0,
    })
}

/// Noise source: per-path seeded streams, or an injected Z sequence laid
/// out as `z[path * n_steps + step]` (unit-test hook).
#[derive(Debug, Clone)]
pub enum Noise<'a> {
    Seeded,
    Forced(&'a [f64]),
}

/// Which grid nodes an ensemble records.
#[derive(Debug, Clone)]
pub enum Record {
    All,
    /// Sorted node indices; node 0 is added if missing.
    Nodes(Vec<usize>),
}

/// Simulation options beyond the required arguments.
#[derive(Debug, Clone)]
pub struct SimulateSpec<'a> {
    pub record: Record,
    pub noise: Noise<'a>,
}

impl Default for SimulateSpec<'_> {
    fn default() -> Self {
        Self {
            record: Record::All,
            noise: Noise::Seeded,
        }
    }
}

/// A set of simulated trajectories on a uniform grid.
///
/// Values are stored at the recorded nodes only; for price ensembles the
/// running quadratic variation of the log path, accumulated at full step
/// resolution, is stored alongside so realized-variance payoffs stay exact
/// under subsampled recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub grid: PathGrid,
    pub kind: PathKind,
    pub measure: Measure,
    pub seed: u64,
    recorded: Vec<usize>,
    n_paths: usize,
    values: Vec<f64>,
    cum_qv: Option<Vec<f64>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_recorded(&self) -> usize {
        self.recorded.len()
    }

    pub fn recorded_nodes(&self) -> &[usize] {
        &self.recorded
    }

    pub fn recorded_times(&self) -> Vec<f64> {
        self.recorded.iter().map(|&k| self.grid.time(k)).collect()
    }

    pub fn value(&self, path: usize, rec: usize) -> f64 {
        self.values[path * self.recorded.len() + rec]
    }

    pub fn path_values(&self, path: usize) -> &[f64] {
        let n = self.recorded.len();
        &self.values[path * n..(path + 1) * n]
    }

    /// Running quadratic variation of log S at a recorded node.
    pub fn cum_qv(&self, path: usize, rec: usize) -> Option<f64> {
        self.cum_qv
            .as_ref()
            .map(|q| q[path * self.recorded.len() + rec])
    }

    /// Recorded index whose time matches `t` (offset grid time).
    pub fn rec_index_of_time(&self, t: f64) -> Result<usize, EngineError> {
        let node = self.grid.node_of_time(t).ok_or_else(|| {
            EngineError::Domain(format!("time {t} is not on the simulation grid"))
        })?;
        self.recorded
            .binary_search(&node)
            .map_err(|_| EngineError::Domain(format!("time {t} was not recorded")))
    }

    /// Writes `path_id,t,value` rows, 17 significant digits, after any
    /// `# key = value` metadata comments.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), EngineError> {
        writeln!(w, "# kind = {}", kind_tag(self.kind))?;
        writeln!(w, "# measure = {}", measure_tag(self.measure))?;
        writeln!(w, "# seed = {}", self.seed)?;
        writeln!(w, "path_id,t,value")?;
        for p in 0..self.n_paths {
            for (i, &node) in self.recorded.iter().enumerate() {
                writeln!(
                    w,
                    "{p},{:.16e},{:.16e}",
                    self.grid.time(node),
                    self.value(p, i)
                )?;
            }
        }
        Ok(())
    }

    /// Reads the schema written by `write_csv`. Requires the same node
    /// times for every path and uniform spacing; the recorded nodes become
    /// the grid.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, EngineError> {
        let mut kind = PathKind::Price;
        let mut measure = Measure::Physical;
        let mut seed = 0u64;
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    match k.trim() {
                        "kind" => {
                            kind = parse_kind(v.trim()).ok_or_else(|| EngineError::Csv {
                                line: lineno,
                                message: format!("unknown kind {v}"),
                            })?
                        }
                        "measure" => {
                            measure = parse_measure(v.trim()).ok_or_else(|| EngineError::Csv {
                                line: lineno,
                                message: format!("unknown measure {v}"),
                            })?
                        }
                        "seed" => {
                            seed = v.trim().parse().map_err(|_| EngineError::Csv {
                                line: lineno,
                                message: format!("bad seed {v}"),
                            })?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if trimmed != "path_id,t,value" {
                    return Err(EngineError::Csv {
                        line: lineno,
                        message: format!("expected header path_id,t,value, got {trimmed}"),
                    });
                }
                header_seen = true;
                continue;
            }
            let mut parts = trimmed.split(',');
            let parse_err = |message: String| EngineError::Csv {
                line: lineno,
                message,
            };
            let p: usize = parts
                .next()
                .ok_or_else(|| parse_err("missing path_id".into()))?
                .trim()
                .parse()
                .map_err(|_| parse_err("bad path_id".into()))?;
            let t: f64 = parts
                .next()
                .ok_or_else(|| parse_err("missing t".into()))?
                .trim()
                .parse()
                .map_err(|_| parse_err("bad t".into()))?;
            let v: f64 = parts
                .next()
                .ok_or_else(|| parse_err("missing value".into()))?
                .trim()
                .parse()
                .map_err(|_| parse_err("bad value".into()))?;
            if parts.next().is_some() {
                return Err(parse_err("too many columns".into()));
            }
            rows.push((p, t, v));
        }
        if rows.is_empty() {
            return Err(EngineError::Csv {
                line: 0,
                message: "no data rows".into(),
            });
        }
        let n_paths = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let per_path = rows.len() / n_paths;
        if per_path < 2 || rows.len() != n_paths * per_path {
            return Err(EngineError::Csv {
                line: 0,
                message: "paths have unequal node counts".into(),
            });
        }
        let times: Vec<f64> = rows[..per_path].iter().map(|r| r.1).collect();
        let dt = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(EngineError::Csv {
                    line: 0,
                    message: "non-uniform grid in ensemble csv".into(),
                });
            }
        }
        let grid = PathGrid::new(times[0].max(0.0), dt, per_path - 1)?;
        let mut values = vec![0.0; rows.len()];
        for (i, row) in rows.iter().enumerate() {
            let (p, t, v) = *row;
            let expect_t = times[i % per_path];
            if p != i / per_path || (t - expect_t).abs() > 1e-9 * expect_t.abs().max(1.0) {
                return Err(EngineError::Csv {
                    line: 0,
                    message: "rows must be grouped by path and share node times".into(),
                });
            }
            values[i] = v;
        }
        let cum_qv = if kind == PathKind::Price {
            if values.iter().any(|&v| v <= 0.0) {
                return Err(EngineError::Csv {
                    line: 0,
                    message: "price ensemble contains nonpositive values".into(),
                });
            }
            let mut q = vec![0.0; values.len()];
            for p in 0..n_paths {
                let base = p * per_path;
                let mut acc = 0.0;
                for k in 1..per_path {
                    let d = (values[base + k] / values[base + k - 1]).ln();
                    acc += d * d;
                    q[base + k] = acc;
                }
            }
            Some(q)
        } else {
            None
        };
        Ok(Self {
            grid,
            kind,
            measure,
            seed,
            recorded: (0..per_path).collect(),
            n_paths,
            values,
            cum_qv,
        })
    }
}

fn kind_tag(k: PathKind) -> &'static str {
    match k {
        PathKind::Price => "price",
        PathKind::CenteredLogReturn => "centered_log_return",
    }
}

fn parse_kind(s: &str) -> Option<PathKind> {
    match s {
        "price" => Some(PathKind::Price),
        "centered_log_return" => Some(PathKind::CenteredLogReturn),
        _ => None,
    }
}

fn measure_tag(m: Measure) -> &'static str {
    match m {
        Measure::Physical => "physical",
        Measure::RiskNeutral => "risk_neutral",
        Measure::Canonical => "canonical",
    }
}

fn parse_measure(s: &str) -> Option<Measure> {
    match s {
        "physical" => Some(Measure::Physical),
        "risk_neutral" => Some(Measure::RiskNeutral),
        "canonical" => Some(Measure::Canonical),
        _ => None,
    }
}

fn resolve_record(record: &Record, n_steps: usize) -> Result<Vec<usize>, EngineError> {
    match record {
        Record::All => Ok((0..=n_steps).collect()),
        Record::Nodes(nodes) => {
            let mut out = nodes.clone();
            out.sort_unstable();
            out.dedup();
            if out.first() != Some(&0) {
                out.insert(0, 0);
            }
            if out.iter().any(|&k| k > n_steps) {
                return Err(EngineError::Domain(
                    "recorded node index beyond grid end".into(),
                ));
            }
            Ok(out)
        }
    }
}

fn check_noise(noise: &Noise, n_paths: usize, n_steps: usize) -> Result<(), EngineError> {
    if let Noise::Forced(z) = noise {
        if z.len() != n_paths * n_steps {
            return Err(EngineError::Configuration(format!(
                "forced noise needs n_paths*n_steps = {} values, got {}",
                n_paths * n_steps,
                z.len()
            )));
        }
    }
    Ok(())
}

enum DriftCoeffs {
    Constant(f64),
    // per-step (g'/g at midpoint, lambda0 at midpoint), plus log s0
    Growth {
        h: Vec<f64>,
        lam0: Vec<f64>,
        mean_rate: f64,
        ln_s0: f64,
    },
}

/// Simulates price paths. Records every node; see `simulate_price_with`
/// for subsampled recording and noise injection.
pub fn simulate_price(
    surface: &VolSurface,
    drift: &DriftSpec,
    s0: f64,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, EngineError> {
    simulate_price_with(surface, drift, s0, grid, n_paths, seed, &SimulateSpec::default())
}

pub fn simulate_price_with(
    surface: &VolSurface,
    drift: &DriftSpec,
    s0: f64,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
    spec: &SimulateSpec,
) -> Result<PathEnsemble, EngineError> {
    if !s0.is_finite() || s0 <= 0.0 {
        return Err(EngineError::Domain(format!("s0 must be > 0, got {s0}")));
    }
    if n_paths == 0 {
        return Err(EngineError::Domain("n_paths must be >= 1".into()));
    }
    check_noise(&spec.noise, n_paths, grid.n_steps)?;
    let recorded = resolve_record(&spec.record, grid.n_steps)?;

    let measure = match drift {
        DriftSpec::RiskNeutral { .. } => Measure::RiskNeutral,
        _ => Measure::Physical,
    };
    let coeffs = match drift {
        DriftSpec::ConstantMu { mu } => DriftCoeffs::Constant(*mu),
        DriftSpec::RiskNeutral { r } => DriftCoeffs::Constant(*r),
        DriftSpec::GrowthImplied {
            growth,
            mean_rate,
            s0: drift_s0,
        } => {
            growth.check_positive_on(grid)?;
            if (drift_s0 - s0).abs() > 1e-9 * s0 {
                return Err(EngineError::Configuration(format!(
                    "drift was built for s0 = {drift_s0}, simulation uses s0 = {s0}"
                )));
            }
            let mut h = Vec::with_capacity(grid.n_steps);
            let mut lam0 = Vec::with_capacity(grid.n_steps);
            for k in 0..grid.n_steps {
                let t_mid = grid.t_start + (k as f64 + 0.5) * grid.dt;
                h.push(growth.log_derivative(t_mid)?);
                lam0.push(mean_rate * t_mid);
            }
            DriftCoeffs::Growth {
                h,
                lam0,
                mean_rate: *mean_rate,
                ln_s0: s0.ln(),
            }
        }
    };

    // Midpoint times of every step, shared across paths.
    let t_mid: Vec<f64> = (0..grid.n_steps)
        .map(|k| grid.t_start + (k as f64 + 0.5) * grid.dt)
        .collect();
    let sig2_flat: Option<Vec<f64>> = if surface.is_price_independent() {
        Some(t_mid.iter().map(|&t| surface.sigma2_raw(1.0, t)).collect())
    } else {
        None
    };

    let n_rec = recorded.len();
    let mut values = vec![0.0f64; n_paths * n_rec];
    let mut cum = vec![0.0f64; n_paths * n_rec];
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let forced = match &spec.noise {
        Noise::Seeded => None,
        Noise::Forced(z) => Some(*z),
    };

    values
        .par_chunks_mut(n_rec)
        .zip(cum.par_chunks_mut(n_rec))
        .enumerate()
        .for_each(|(p, (vrow, qrow))| {
            let mut rng = substream(seed, p as u64);
            let mut log_s = s0.ln();
            let mut qv = 0.0f64;
            let mut rec_i = 0usize;
            if recorded[0] == 0 {
                vrow[0] = s0;
                qrow[0] = 0.0;
                rec_i = 1;
            }
            for k in 0..grid.n_steps {
                let sig2 = match &sig2_flat {
                    Some(flat) => flat[k],
                    None => surface.sigma2_raw(log_s.exp(), t_mid[k]),
                };
                let det = match &coeffs {
                    DriftCoeffs::Constant(mu) => mu - 0.5 * sig2,
                    DriftCoeffs::Growth {
                        h,
                        lam0,
                        mean_rate,
                        ln_s0,
                    } => h[k] * (log_s - ln_s0 - lam0[k]) + mean_rate,
                };
                let z: f64 = match forced {
                    Some(zs) => zs[p * grid.n_steps + k],
                    None => rng.sample(StandardNormal),
                };
                let dlog = det * dt + (sig2).sqrt() * sqrt_dt * z;
                log_s += dlog;
                qv += dlog * dlog;
                if rec_i < n_rec && recorded[rec_i] == k + 1 {
                    vrow[rec_i] = log_s.exp();
                    qrow[rec_i] = qv;
                    rec_i += 1;
                }
            }
        });

    Ok(PathEnsemble {
        grid: *grid,
        kind: PathKind::Price,
        measure,
        seed,
        recorded,
        n_paths,
        values,
        cum_qv: Some(cum),
    })
}

/// Simulates centered log returns under the canonical dynamics
/// `dX = (g'/g) X dt + sigma(t) dB`, `X(0) = 0`.
///
/// Price-independent surfaces only; use
/// `simulate_centered_returns_with` with a lambda table and a price map
/// for the price-dependent case.
pub fn simulate_centered_returns(
    cov: &CovParams,
    surface: &VolSurface,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble, EngineError> {
    let lambda = LambdaFn::analytic(surface)?;
    simulate_centered_returns_with(
        cov,
        surface,
        &lambda,
        None,
        grid,
        n_paths,
        seed,
        &SimulateSpec::default(),
    )
}

/// Price reconstruction for price-dependent surfaces:
/// `S(t) = s0 exp(mean_rate t + X(t))`.
#[derive(Debug, Clone, Copy)]
pub struct PriceMap {
    pub s0: f64,
    pub mean_rate: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_centered_returns_with(
    cov: &CovParams,
    surface: &VolSurface,
    lambda: &LambdaFn,
    price_map: Option<&PriceMap>,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
    spec: &SimulateSpec,
) -> Result<PathEnsemble, EngineError> {
    if grid.t_start != 0.0 {
        return Err(EngineError::Domain(
            "centered-return grid must start at t = 0".into(),
        ));
    }
    if n_paths == 0 {
        return Err(EngineError::Domain("n_paths must be >= 1".into()));
    }
    if !surface.is_price_independent() && price_map.is_none() {
        return Err(EngineError::Unsupported(
            "price-dependent surface requires a price map (s0, mean_rate)".into(),
        ));
    }
    check_noise(&spec.noise, n_paths, grid.n_steps)?;
    let recorded = resolve_record(&spec.record, grid.n_steps)?;
    let growth = GrowthFunction::new(*cov, lambda.clone())?;
    growth.check_positive_on(grid)?;

    let mut h = Vec::with_capacity(grid.n_steps);
    let mut t_mid = Vec::with_capacity(grid.n_steps);
    for k in 0..grid.n_steps {
        let tm = (k as f64 + 0.5) * grid.dt;
        t_mid.push(tm);
        h.push(growth.log_derivative(tm)?);
    }
    let sig2_flat: Option<Vec<f64>> = if surface.is_price_independent() {
        Some(t_mid.iter().map(|&t| surface.sigma2_raw(1.0, t)).collect())
    } else {
        None
    };

    let n_rec = recorded.len();
    let mut values = vec![0.0f64; n_paths * n_rec];
    let dt = grid.dt;
    let sqrt_dt = dt.sqrt();
    let forced = match &spec.noise {
        Noise::Seeded => None,
        Noise::Forced(z) => Some(*z),
    };
    let pm = price_map.copied();

    values
        .par_chunks_mut(n_rec)
        .enumerate()
        .for_each(|(p, vrow)| {
            let mut rng = substream(seed, p as u64);
            let mut x = 0.0f64;
            let mut rec_i = 0usize;
            if recorded[0] == 0 {
                vrow[0] = 0.0;
                rec_i = 1;
            }
            for k in 0..grid.n_steps {
                let sig2 = match &sig2_flat {
                    Some(flat) => flat[k],
                    None => {
                        let pm = pm.as_ref().expect("price map checked above");
                        let t_left = k as f64 * dt;
                        let s = pm.s0 * (pm.mean_rate * t_left + x).exp();
                        surface.sigma2_raw(s, t_mid[k])
                    }
                };
                let z: f64 = match forced {
                    Some(zs) => zs[p * grid.n_steps + k],
                    None => rng.sample(StandardNormal),
                };
                x += h[k] * x * dt + sig2.sqrt() * sqrt_dt * z;
                if rec_i < n_rec && recorded[rec_i] == k + 1 {
                    vrow[rec_i] = x;
                    rec_i += 1;
                }
            }
        });

    Ok(PathEnsemble {
        grid: *grid,
        kind: PathKind::CenteredLogReturn,
        measure: Measure::Canonical,
        seed,
        recorded,
        n_paths,
        values,
        cum_qv: None,
    })
}

/// Samples of the centered-return process at fixed horizon times given a
/// pinned value at an earlier time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSamples {
    pub z_time: f64,
    pub x_value: f64,
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// Row-major `n_paths x times.len()`.
    pub samples: Vec<f64>,
    /// True for the exact time-changed-Brownian sampler; false for the
    /// binned fallback.
    pub exact: bool,
    pub seed: u64,
}

impl ConditionalSamples {
    pub fn column(&self, time_idx: usize) -> Vec<f64> {
        (0..self.n_paths)
            .map(|p| self.samples[p * self.times.len() + time_idx])
            .collect()
    }
}

/// Exact conditional sampling of the centered-return process via its
/// time-changed Brownian representation `X(t) = g(t) B*(clock(t))`:
/// the Brownian motion is pinned to `x / g(z)` at `clock(z)` and extended
/// by independent Gaussian increments over the clock increments.
///
/// Exact only when the surface is price-independent (deterministic
/// clock); price-dependent surfaces are unsupported here — use
/// `simulate_canonical_conditional_binned`.
pub fn simulate_canonical_conditional(
    cov: &CovParams,
    surface: &VolSurface,
    z_time: f64,
    x_value: f64,
    horizon_times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<ConditionalSamples, EngineError> {
    if !surface.is_price_independent() {
        return Err(EngineError::Unsupported(
            "price-dependent surface: exact conditional sampling unavailable; \
             use the binned fallback"
                .into(),
        ));
    }
    if !z_time.is_finite() || z_time <= 0.0 {
        return Err(EngineError::Domain(format!(
            "conditioning time must be > 0, got {z_time}"
        )));
    }
    if horizon_times.is_empty() {
        return Err(EngineError::Domain("horizon times must be nonempty".into()));
    }
    if horizon_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EngineError::Domain(
            "horizon times must be strictly increasing".into(),
        ));
    }
    if horizon_times[0] <= z_time {
        return Err(EngineError::Domain(
            "horizon times must exceed the conditioning time".into(),
        ));
    }
    if n_paths == 0 {
        return Err(EngineError::Domain("n_paths must be >= 1".into()));
    }
    if let Some(r) = cov.domain_end {
        if *horizon_times.last().unwrap() > r * (1.0 + 1e-12) {
            return Err(EngineError::Parameter(format!(
                "horizon beyond bounded domain end {r}"
            )));
        }
    }
    let growth = GrowthFunction::new(*cov, LambdaFn::analytic(surface)?)?;
    let clock_z = growth.clock(z_time)?;
    let g_z = growth.value(z_time)?;
    if g_z <= 0.0 {
        return Err(EngineError::Parameter(
            "growth function nonpositive at conditioning time".into(),
        ));
    }
    let mut g_t = Vec::with_capacity(horizon_times.len());
    let mut d_clock = Vec::with_capacity(horizon_times.len());
    let mut prev = clock_z;
    for &t in horizon_times {
        let c = growth.clock(t)?;
        if c < prev - 1e-15 {
            return Err(EngineError::Parameter(
                "clock must be nondecreasing over the horizons".into(),
            ));
        }
        d_clock.push((c - prev).max(0.0));
        g_t.push(growth.value(t)?);
        prev = c;
    }

    let m = horizon_times.len();
    let b_start = x_value / g_z;
    let mut samples = vec![0.0f64; n_paths * m];
    samples
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(p, row)| {
            let mut rng = substream(seed, p as u64);
            let mut b = b_start;
            for i in 0..m {
                let z: f64 = rng.sample(StandardNormal);
                b += d_clock[i].sqrt() * z;
                row[i] = g_t[i] * b;
            }
        });

    Ok(ConditionalSamples {
        z_time,
        x_value,
        times: horizon_times.to_vec(),
        n_paths,
        samples,
        exact: true,
        seed,
    })
}

/// Binned-conditioning fallback for price-dependent surfaces: simulates an
/// oversampled centered-return ensemble and keeps the paths whose value at
/// the conditioning time is closest to `x`. Result is flagged inexact.
#[allow(clippy::too_many_arguments)]
pub fn simulate_canonical_conditional_binned(
    cov: &CovParams,
    surface: &VolSurface,
    lambda: &LambdaFn,
    price_map: Option<&PriceMap>,
    grid: &PathGrid,
    z_time: f64,
    x_value: f64,
    horizon_times: &[f64],
    n_keep: usize,
    oversample: usize,
    seed: u64,
) -> Result<ConditionalSamples, EngineError> {
    if n_keep == 0 || oversample == 0 {
        return Err(EngineError::Domain(
            "n_keep and oversample must be >= 1".into(),
        ));
    }
    let z_node = grid.node_of_time(z_time).ok_or_else(|| {
        EngineError::Domain(format!("conditioning time {z_time} not on grid"))
    })?;
    let mut nodes = vec![z_node];
    for &t in horizon_times {
        nodes.push(grid.node_of_time(t).ok_or_else(|| {
            EngineError::Domain(format!("horizon time {t} not on grid"))
        })?);
    }
    let spec = SimulateSpec {
        record: Record::Nodes(nodes),
        noise: Noise::Seeded,
    };
    let n_sim = n_keep * oversample;
    let ens = simulate_centered_returns_with(
        cov, surface, lambda, price_map, grid, n_sim, seed, &spec,
    )?;
    let z_rec = ens.rec_index_of_time(z_time)?;
    let mut order: Vec<usize> = (0..n_sim).collect();
    order.sort_by(|&a, &b| {
        let da = (ens.value(a, z_rec) - x_value).abs();
        let db = (ens.value(b, z_rec) - x_value).abs();
        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
    });
    let m = horizon_times.len();
    let mut samples = vec![0.0f64; n_keep * m];
    for (i, &p) in order[..n_keep].iter().enumerate() {
        for (j, &t) in horizon_times.iter().enumerate() {
            let rec = ens.rec_index_of_time(t)?;
            samples[i * m + j] = ens.value(p, rec);
        }
    }
    Ok(ConditionalSamples {
        z_time,
        x_value,
        times: horizon_times.to_vec(),
        n_paths: n_keep,
        samples,
        exact: false,
        seed,
    })
}

/// Builds the Monte Carlo `Lambda` table from a fully recorded price
/// ensemble: per-path running integrals of sigma2 along the path,
/// averaged across paths, with standard errors. Grid step equals the
/// simulation step.
pub fn lambda_table_from_ensemble(
    surface: &VolSurface,
    ens: &PathEnsemble,
) -> Result<LambdaTable, EngineError> {
    if ens.kind != PathKind::Price {
        return Err(EngineError::Configuration(
            "lambda estimation needs a price ensemble".into(),
        ));
    }
    if ens.grid.t_start != 0.0 {
        return Err(EngineError::Configuration(
            "lambda estimation needs a grid starting at t = 0".into(),
        ));
    }
    if ens.recorded.len() != ens.grid.n_steps + 1 {
        return Err(EngineError::Configuration(
            "lambda estimation needs every node recorded".into(),
        ));
    }
    let n_nodes = ens.grid.n_steps + 1;
    let n_paths = ens.n_paths();
    let dt = ens.grid.dt;
    // integral per path at each node (left endpoint follows the scheme's
    // midpoint-in-time, left-in-price sampling)
    let mut acc = vec![0.0f64; n_paths];
    let mut values = vec![0.0f64; n_nodes];
    let mut std_errs = vec![0.0f64; n_nodes];
    let mut column = vec![0.0f64; n_paths];
    for k in 1..n_nodes {
        let t_mid = (k as f64 - 0.5) * dt;
        for (p, a) in acc.iter_mut().enumerate() {
            let s_left = ens.value(p, k - 1);
            *a += surface.sigma2_raw(s_left, t_mid) * dt;
            column[p] = *a;
        }
        let (mean, se) = mean_and_std_err(&column);
        values[k] = mean;
        std_errs[k] = se;
    }
    // enforce exact monotonicity against float rounding
    for k in 1..n_nodes {
        if values[k] < values[k - 1] {
            values[k] = values[k - 1];
        }
    }
    let times: Vec<f64> = (0..n_nodes).map(|k| ens.grid.time(k)).collect();
    Ok(LambdaTable::new(times, values, std_errs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{ks_critical, ks_statistic, norm_cdf};

    fn constant_004() -> VolSurface {
        VolSurface::constant(0.04).unwrap()
    }

    #[test]
    fn one_step_forced_zero_noise() {
        let grid = PathGrid::new(0.0, 1.0, 1).unwrap();
        let spec = SimulateSpec {
            record: Record::All,
            noise: Noise::Forced(&[0.0]),
        };
        let ens = simulate_price_with(
            &constant_004(),
            &DriftSpec::RiskNeutral { r: 0.0 },
            100.0,
            &grid,
            1,
            1,
            &spec,
        )
        .unwrap();
        let want = 100.0 * (-0.02f64).exp();
        assert!((ens.value(0, 1) - want).abs() < 1e-12);
    }

    #[test]
    fn forced_zero_noise_keeps_centered_returns_at_zero() {
        let grid = PathGrid::new(0.0, 0.5, 1).unwrap();
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let spec = SimulateSpec {
            record: Record::All,
            noise: Noise::Forced(&[0.0]),
        };
        let lambda = LambdaFn::analytic(&constant_004()).unwrap();
        let ens = simulate_centered_returns_with(
            &cov,
            &constant_004(),
            &lambda,
            None,
            &grid,
            1,
            9,
            &spec,
        )
        .unwrap();
        assert_eq!(ens.value(0, 1), 0.0);
    }

    #[test]
    fn ensembles_identical_across_thread_counts() {
        let grid = PathGrid::new(0.0, 0.01, 50).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                simulate_price(
                    &constant_004(),
                    &DriftSpec::RiskNeutral { r: 0.05 },
                    100.0,
                    &grid,
                    64,
                    12345,
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(8);
        assert_eq!(a, b);
    }

    #[test]
    fn prices_stay_positive() {
        let grid = PathGrid::new(0.0, 0.05, 200).unwrap();
        let surface = VolSurface::decaying_smile(0.09, 0.5, 7.0, 0.9, 0.5, 100.0).unwrap();
        let ens = simulate_price(
            &surface,
            &DriftSpec::ConstantMu { mu: -0.3 },
            100.0,
            &grid,
            50,
            3,
        )
        .unwrap();
        for p in 0..50 {
            assert!(ens.path_values(p).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn constant_surface_terminal_law_is_exact_gaussian() {
        // the log-Euler scheme with constant sigma2 is exact for any dt
        let grid = PathGrid::new(0.0, 0.25, 4).unwrap();
        let (r, alpha, t_end) = (0.05, 0.04, 1.0);
        let n = 20_000;
        let ens = simulate_price(
            &constant_004(),
            &DriftSpec::RiskNeutral { r },
            100.0,
            &grid,
            n,
            77,
        )
        .unwrap();
        let mean = (r - alpha / 2.0) * t_end;
        let sd = (alpha * t_end).sqrt();
        let z: Vec<f64> = (0..n)
            .map(|p| ((ens.value(p, 4) / 100.0).ln() - mean) / sd)
            .collect();
        let d = ks_statistic(&z, norm_cdf);
        assert!(d < ks_critical(0.01, n), "KS = {d}");
    }

    #[test]
    fn driftless_centered_returns_have_brownian_variance() {
        let grid = PathGrid::new(0.0, 0.01, 200).unwrap();
        let cov = CovParams::new(0.04, 0.0, None).unwrap();
        let n = 20_000;
        let ens = simulate_centered_returns(&cov, &constant_004(), &grid, n, 5).unwrap();
        let t_end = 2.0;
        let xs: Vec<f64> = (0..n).map(|p| ens.value(p, 200)).collect();
        let (mean, se) = mean_and_std_err(&xs);
        assert!(mean.abs() < 3.0 * se);
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let want = 0.04 * t_end;
        let var_se = want * (2.0f64 / n as f64).sqrt();
        assert!((var - want).abs() < 3.0 * var_se, "var {var} want {want}");
    }

    #[test]
    fn conditional_sampler_brownian_restart() {
        // x = 0, beta = 0: forward law is N(0, alpha (t - z))
        let cov = CovParams::new(0.04, 0.0, None).unwrap();
        let n = 50_000;
        let s = simulate_canonical_conditional(
            &cov,
            &constant_004(),
            1.0,
            0.0,
            &[3.0],
            n,
            11,
        )
        .unwrap();
        assert!(s.exact);
        let col = s.column(0);
        let (mean, se) = mean_and_std_err(&col);
        assert!(mean.abs() < 3.0 * se);
        let var = col.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let want = 0.04 * 2.0;
        assert!((var - want).abs() < 3.0 * want * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn conditional_sampler_rejects_price_dependent_surface() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let smile = VolSurface::decaying_smile(0.04, 0.0, 1.0, 0.8, 1.0, 100.0).unwrap();
        assert!(matches!(
            simulate_canonical_conditional(&cov, &smile, 1.0, 0.1, &[2.0], 10, 1),
            Err(EngineError::Unsupported(_))
        ));
    }

    #[test]
    fn negative_beta_needs_bounded_domain() {
        assert!(CovParams::new(0.04, -0.01, None).is_err());
        // bounded domain: beta > -alpha^2 / Lambda(R) = -alpha/R = -0.004
        let ok = CovParams::new(0.04, -0.003, Some(10.0)).unwrap();
        let lambda = LambdaFn::analytic(&constant_004()).unwrap();
        assert!(GrowthFunction::new(ok, lambda.clone()).is_ok());
        let bad = CovParams::new(0.04, -0.005, Some(10.0)).unwrap();
        assert!(GrowthFunction::new(bad, lambda).is_err());
    }

    #[test]
    fn growth_drift_vanishes_in_log_space_at_the_reference_price() {
        // at s = s0 with m = 0 the drift is sigma2/2, so the log increment
        // under forced zero noise is exactly zero
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let lambda = LambdaFn::analytic(&constant_004()).unwrap();
        let drift = drift_from_growth(cov, lambda, 0.0, 100.0).unwrap();
        let grid = PathGrid::new(0.0, 0.5, 1).unwrap();
        let spec = SimulateSpec {
            record: Record::All,
            noise: Noise::Forced(&[0.0]),
        };
        let ens =
            simulate_price_with(&constant_004(), &drift, 100.0, &grid, 1, 1, &spec).unwrap();
        assert!((ens.value(0, 1) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn centered_returns_have_zero_mean_within_se() {
        let grid = PathGrid::new(0.0, 0.02, 100).unwrap();
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let ens = simulate_centered_returns(&cov, &constant_004(), &grid, 20_000, 37).unwrap();
        for rec in [50, 100] {
            let xs: Vec<f64> = (0..ens.n_paths()).map(|p| ens.value(p, rec)).collect();
            let (mean, se) = mean_and_std_err(&xs);
            assert!(mean.abs() <= 3.0 * se, "node {rec}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn growth_drift_reduces_to_mean_rate_plus_half_variance_when_beta_zero() {
        // beta = 0 makes g' = 0; a forced single step moves log S by m dt
        let cov = CovParams::new(0.04, 0.0, None).unwrap();
        let lambda = LambdaFn::analytic(&constant_004()).unwrap();
        let drift = drift_from_growth(cov, lambda, 0.07, 100.0).unwrap();
        let grid = PathGrid::new(0.0, 1.0, 1).unwrap();
        let spec = SimulateSpec {
            record: Record::All,
            noise: Noise::Forced(&[0.0]),
        };
        let ens =
            simulate_price_with(&constant_004(), &drift, 100.0, &grid, 1, 1, &spec).unwrap();
        let want = 100.0 * (0.07f64).exp();
        assert!((ens.value(0, 1) - want).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let grid = PathGrid::new(0.0, 0.5, 3).unwrap();
        let ens = simulate_price(
            &constant_004(),
            &DriftSpec::RiskNeutral { r: 0.01 },
            100.0,
            &grid,
            4,
            99,
        )
        .unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let back = PathEnsemble::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.n_paths(), 4);
        assert_eq!(back.measure, Measure::RiskNeutral);
        for p in 0..4 {
            for i in 0..4 {
                assert_eq!(back.value(p, i), ens.value(p, i));
            }
        }
    }

    #[test]
    fn csv_rejects_garbage() {
        let bad = "path_id,t,value\n0,0.0,abc\n";
        match PathEnsemble::read_csv(bad.as_bytes()) {
            Err(EngineError::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn grid_validation() {
        assert!(PathGrid::new(0.0, 0.0, 10).is_err());
        assert!(PathGrid::new(0.0, 0.1, 0).is_err());
        let g = PathGrid::new(0.0, 0.1, 10).unwrap();
        assert_eq!(g.node_of_time(0.5), Some(5));
        assert_eq!(g.node_of_time(0.55), None);
        assert_eq!(g.node_of_time(1.2), None);
    }

    #[test]
    fn lambda_table_matches_analytic_for_constant_surface() {
        let grid = PathGrid::new(0.0, 0.1, 20).unwrap();
        let surface = constant_004();
        let ens = simulate_price(
            &surface,
            &DriftSpec::ConstantMu { mu: 0.0 },
            100.0,
            &grid,
            500,
            4,
        )
        .unwrap();
        let tab = lambda_table_from_ensemble(&surface, &ens).unwrap();
        // constant surface integrates exactly regardless of paths
        assert!((tab.value(2.0).unwrap() - 0.08).abs() < 1e-12);
        assert!((tab.value(1.05).unwrap() - 0.042).abs() < 1e-12);
    }
}
