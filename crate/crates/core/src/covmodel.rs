//! The wide-sense-Markov covariance model for centered log returns:
//! exact covariance, large-horizon asymptotics, autocorrelation formulas,
//! the wide-sense-Markov residual test, empirical covariance estimation
//! with jackknife errors, and least-squares recovery of (alpha, beta).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{CovParams, EngineError, PathEnsemble, PathKind};
use crate::surfaces::{LambdaFn, SurfaceError};

#[derive(Debug, Error)]
pub enum CovError {
    #[error("argument-order error: {0}")]
    ArgumentOrder(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("singular: {0}")]
    Singular(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Exact covariance model `r(t1, t2) = dL1 (1 + (beta/alpha^2) dL2)` with
/// `dLi = Lambda(z + ti) - Lambda(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub cov: CovParams,
    pub lambda: LambdaFn,
}

impl CovarianceModel {
    pub fn new(cov: CovParams, lambda: LambdaFn) -> Self {
        Self { cov, lambda }
    }

    /// Covariance of centered returns at offsets `t1 <= t2` from
    /// reference time `z`.
    pub fn covariance(&self, z: f64, t1: f64, t2: f64) -> Result<f64, CovError> {
        if t1 > t2 {
            return Err(CovError::ArgumentOrder(format!(
                "need t1 <= t2, got ({t1}, {t2})"
            )));
        }
        if t1 < 0.0 || z < 0.0 {
            return Err(CovError::Range("offsets and z must be >= 0".into()));
        }
        let lz = self.lambda.value(z)?;
        let l1 = self.lambda.value(z + t1)? - lz;
        let l2 = self.lambda.value(z + t2)? - lz;
        let c = self.cov.beta / (self.cov.alpha * self.cov.alpha);
        Ok(l1 * (1.0 + c * l2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovRegime {
    /// gamma > 1, beta > 0: t1 T (alpha + beta t2 T), error O(T^{2-gamma})
    LinearPlusGrowth,
    /// 0 < gamma <= 1, beta > 0: beta t1 t2 T^2, error O(T^{2-gamma})
    GrowthDominated,
    /// beta = 0: alpha t1 T, error O(T^{1-gamma})
    BrownianLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCov {
    pub value: f64,
    pub regime: CovRegime,
    /// Exponent of the error order O(T^p).
    pub error_exponent: f64,
}

/// Leading-order covariance of centered returns at scaled offsets
/// `(t1 T, t2 T)` for large `T`.
pub fn asymptotic_covariance(
    cov: &CovParams,
    _z: f64,
    t1: f64,
    t2: f64,
    big_t: f64,
    gamma: f64,
) -> Result<AsymptoticCov, CovError> {
    if t1 > t2 {
        return Err(CovError::ArgumentOrder(format!(
            "need t1 <= t2, got ({t1}, {t2})"
        )));
    }
    if !t1.is_finite() || t1 <= 0.0 || !big_t.is_finite() || big_t <= 0.0 || !gamma.is_finite() || gamma <= 0.0 {
        return Err(CovError::Range(
            "need t1 > 0, T > 0, gamma > 0".into(),
        ));
    }
    if cov.beta < 0.0 && cov.domain_end.is_none() {
        return Err(CovError::Parameter(
            "beta < 0 requires a bounded domain".into(),
        ));
    }
    if cov.beta == 0.0 {
        return Ok(AsymptoticCov {
            value: cov.alpha * t1 * big_t,
            regime: CovRegime::BrownianLike,
            error_exponent: 1.0 - gamma,
        });
    }
    if gamma > 1.0 {
        Ok(AsymptoticCov {
            value: t1 * big_t * (cov.alpha + cov.beta * t2 * big_t),
            regime: CovRegime::LinearPlusGrowth,
            error_exponent: 2.0 - gamma,
        })
    } else {
        Ok(AsymptoticCov {
            value: cov.beta * t1 * t2 * big_t * big_t,
            regime: CovRegime::GrowthDominated,
            error_exponent: 2.0 - gamma,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutocorrKind {
    Returns,
    SquaredReturns,
}

/// Asymptotic autocorrelation of (squared) returns over windows of scaled
/// length `s T` separated by `u T`, within the stated parameter ranges
/// (`t > 1`, `u >= s > 0`).
pub fn autocorr_asymptotic(
    cov: &CovParams,
    kind: AutocorrKind,
    s: f64,
    t: f64,
    u: f64,
    big_t: f64,
    gamma: f64,
) -> Result<f64, CovError> {
    if !t.is_finite() || t <= 1.0 {
        return Err(CovError::Precondition(format!("need t > 1, got {t}")));
    }
    if !s.is_finite() || s <= 0.0 || u < s {
        return Err(CovError::Precondition(format!(
            "need u >= s > 0, got s = {s}, u = {u}"
        )));
    }
    if !big_t.is_finite() || big_t <= 0.0 || !gamma.is_finite() || gamma <= 0.0 {
        return Err(CovError::Range("need T > 0 and gamma > 0".into()));
    }
    if cov.beta < 0.0 && cov.domain_end.is_none() {
        return Err(CovError::Parameter(
            "beta < 0 requires a bounded domain".into(),
        ));
    }
    if cov.beta == 0.0 {
        return Ok(0.0);
    }
    if gamma <= 1.0 {
        return Ok(1.0);
    }
    let scale = match kind {
        AutocorrKind::Returns => 1.0,
        AutocorrKind::SquaredReturns => 2.0,
    };
    let value = 1.0 - scale * cov.alpha / (cov.beta * s * big_t);
    if !(0.0..=1.0).contains(&value) {
        return Err(CovError::Precondition(format!(
            "T = {big_t} is below the asymptotic regime for s = {s} \
             (formula value {value} outside [0, 1])"
        )));
    }
    Ok(value)
}

/// Sample covariance matrix of centered returns re-based at `z`, with
/// leave-one-path-out jackknife standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCovariance {
    pub z: f64,
    pub times: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub std_err_matrix: Vec<Vec<f64>>,
    pub n_paths: usize,
    /// Jackknife covariance of the vech(matrix) entries (i <= j ordering),
    /// used to propagate errors through downstream fits.
    pub entry_cov: Vec<Vec<f64>>,
}

fn vech_index(m: usize, i: usize, j: usize) -> usize {
    // i <= j, row-major over the upper triangle
    i * m - i * (i + 1) / 2 + j
}

/// Estimates `E[X(z, t_i) X(z, t_j)]` across paths, where
/// `X(z, t) = X(z + t) - X(z)` is read off a centered-log-return ensemble.
#[allow(clippy::needless_range_loop)]
pub fn empirical_covariance(
    ens: &PathEnsemble,
    z: f64,
    times: &[f64],
) -> Result<EmpiricalCovariance, CovError> {
    if ens.kind != PathKind::CenteredLogReturn {
        return Err(CovError::Range(
            "empirical covariance needs a centered-log-return ensemble".into(),
        ));
    }
    let n = ens.n_paths();
    if n < 30 {
        return Err(CovError::InsufficientData(format!(
            "need >= 30 paths, got {n}"
        )));
    }
    if times.is_empty() {
        return Err(CovError::Range("times must be nonempty".into()));
    }
    let z_rec = ens
        .rec_index_of_time(z)
        .map_err(|e| CovError::Range(e.to_string()))?;
    let mut recs = Vec::with_capacity(times.len());
    for &t in times {
        recs.push(
            ens.rec_index_of_time(z + t)
                .map_err(|e| CovError::Range(e.to_string()))?,
        );
    }

    let m = times.len();
    let nf = n as f64;
    // per-path rebased values
    let mut data = vec![0.0f64; n * m];
    for p in 0..n {
        let base = ens.value(p, z_rec);
        for (j, &rec) in recs.iter().enumerate() {
            data[p * m + j] = ens.value(p, rec) - base;
        }
    }
    let mut sums = vec![0.0f64; m];
    let mut cross = vec![0.0f64; m * m];
    for p in 0..n {
        let row = &data[p * m..(p + 1) * m];
        for i in 0..m {
            sums[i] += row[i];
            for j in i..m {
                cross[i * m + j] += row[i] * row[j];
            }
        }
    }
    let cov_full = |i: usize, j: usize| -> f64 {
        (cross[i * m + j] - sums[i] * sums[j] / nf) / (nf - 1.0)
    };
    let mut matrix = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let c = cov_full(i, j);
            matrix[i][j] = c;
            matrix[j][i] = c;
        }
    }

    // leave-one-out covariances via downdated sums
    let n_vech = m * (m + 1) / 2;
    let mut jack_mean = vec![0.0f64; n_vech];
    let mut jack = vec![0.0f64; n * n_vech];
    let n1 = nf - 1.0;
    for p in 0..n {
        let row = &data[p * m..(p + 1) * m];
        for i in 0..m {
            for j in i..m {
                let sxy = cross[i * m + j] - row[i] * row[j];
                let sx = sums[i] - row[i];
                let sy = sums[j] - row[j];
                let c = (sxy - sx * sy / n1) / (n1 - 1.0);
                let k = vech_index(m, i, j);
                jack[p * n_vech + k] = c;
                jack_mean[k] += c;
            }
        }
    }
    for v in &mut jack_mean {
        *v /= nf;
    }
    let factor = (nf - 1.0) / nf;
    let mut entry_cov = vec![vec![0.0; n_vech]; n_vech];
    for p in 0..n {
        let row = &jack[p * n_vech..(p + 1) * n_vech];
        for a in 0..n_vech {
            let da = row[a] - jack_mean[a];
            for b in a..n_vech {
                entry_cov[a][b] += da * (row[b] - jack_mean[b]);
            }
        }
    }
    for a in 0..n_vech {
        for b in a..n_vech {
            entry_cov[a][b] *= factor;
            entry_cov[b][a] = entry_cov[a][b];
        }
    }
    let mut std_err_matrix = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let se = entry_cov[vech_index(m, i, j)][vech_index(m, i, j)].sqrt();
            std_err_matrix[i][j] = se;
            std_err_matrix[j][i] = se;
        }
    }

    Ok(EmpiricalCovariance {
        z,
        times: times.to_vec(),
        matrix,
        std_err_matrix,
        n_paths: n,
        entry_cov,
    })
}

/// Wide-sense-Markov residual `q = y(t1,t2) y(t2,t3) - y(t1,t3)` with
/// `y(a,b) = r(a,b)/r(a,a)`. Vanishes identically iff the covariance has
/// the wide-sense-Markov product form.
pub fn wsm_residual<F: Fn(f64, f64) -> f64>(
    cov_fn: F,
    t1: f64,
    t2: f64,
    t3: f64,
) -> Result<f64, CovError> {
    if !t1.is_finite() || t1 <= 0.0 || t1 > t2 || t2 > t3 {
        return Err(CovError::ArgumentOrder(format!(
            "need 0 < t1 <= t2 <= t3, got ({t1}, {t2}, {t3})"
        )));
    }
    let r11 = cov_fn(t1, t1);
    let r22 = cov_fn(t2, t2);
    if r11 == 0.0 || r22 == 0.0 {
        return Err(CovError::Singular(
            "diagonal covariance vanishes on the triple".into(),
        ));
    }
    let y12 = cov_fn(t1, t2) / r11;
    let y23 = cov_fn(t2, t3) / r22;
    let y13 = cov_fn(t1, t3) / r11;
    Ok(y12 * y23 - y13)
}

/// Least-squares recovery of (alpha, beta) from an empirical covariance,
/// targeting the constant-Lambda form `alpha t1 + beta t1 t2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// Unclamped least-squares beta (negative values are clamped to the
    /// admissible domain and reported here).
    pub beta_raw: f64,
    pub clamped: bool,
    pub se_alpha: f64,
    pub se_beta: f64,
    pub residual_rms: f64,
    pub entries_used: usize,
}

pub fn fit_cov_params(emp: &EmpiricalCovariance) -> Result<CovFit, CovError> {
    let m = emp.times.len();
    let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new(); // (vech idx, u, v, y)
    for i in 0..m {
        for j in i..m {
            let t1 = emp.times[i].min(emp.times[j]);
            let t2 = emp.times[i].max(emp.times[j]);
            if t1 <= 0.0 {
                continue; // zero-length return carries no information
            }
            rows.push((vech_index(m, i, j), t1, t1 * t2, emp.matrix[i][j]));
        }
    }
    let distinct: std::collections::BTreeSet<u64> = rows
        .iter()
        .map(|r| (r.1 / r.2 * 1e12) as u64) // distinct u/v ratios break collinearity
        .collect();
    if rows.len() < 3 || distinct.len() < 2 {
        return Err(CovError::InsufficientData(
            "need >= 3 usable entries over >= 2 distinct time pairs".into(),
        ));
    }
    // normal equations for y ~ alpha u + beta v
    let (mut suu, mut suv, mut svv, mut suy, mut svy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(_, u, v, y) in &rows {
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suy += u * y;
        svy += v * y;
    }
    let det = suu * svv - suv * suv;
    if det.abs() <= 1e-12 * suu * svv {
        return Err(CovError::Singular(
            "design matrix is singular (times too aligned)".into(),
        ));
    }
    let alpha_raw = (svv * suy - suv * svy) / det;
    let beta_raw = (suu * svy - suv * suy) / det;

    // A = (X'X)^{-1} X' rows, needed for error propagation either way
    let a_row = |u: f64, v: f64| {
        (
            (svv * u - suv * v) / det, // d alpha / d y
            (suu * v - suv * u) / det, // d beta / d y
        )
    };

    let admissible_floor = 0.0; // unbounded-domain fits clamp at beta = 0
    let (alpha_hat, beta_hat, clamped) = if beta_raw < admissible_floor {
        // refit alpha alone with beta pinned at the boundary
        let alpha_c = suy / suu;
        (alpha_c, admissible_floor, true)
    } else {
        (alpha_raw, beta_raw, false)
    };

    let mut rss = 0.0;
    for &(_, u, v, y) in &rows {
        let e = y - alpha_hat * u - beta_hat * v;
        rss += e * e;
    }
    let residual_rms = (rss / rows.len() as f64).sqrt();

    // propagate the jackknife entry covariance through the linear
    // estimator maps; the clamped fit maps alpha through u/suu and
    // reports the raw beta's spread
    let n_vech = m * (m + 1) / 2;
    let have_entry_cov =
        emp.entry_cov.len() == n_vech && emp.entry_cov.iter().all(|r| r.len() == n_vech);
    let (mut var_a, mut var_b) = (0.0, 0.0);
    if have_entry_cov {
        for &(ki, ui, vi, _) in &rows {
            let (ai_raw, bi) = a_row(ui, vi);
            let ai = if clamped { ui / suu } else { ai_raw };
            for &(kj, uj, vj, _) in &rows {
                let (aj_raw, bj) = a_row(uj, vj);
                let aj = if clamped { uj / suu } else { aj_raw };
                let cov_entry = emp.entry_cov[ki][kj];
                var_a += ai * aj * cov_entry;
                var_b += bi * bj * cov_entry;
            }
        }
    }

    Ok(CovFit {
        alpha_hat,
        beta_hat,
        beta_raw,
        clamped,
        se_alpha: var_a.max(0.0).sqrt(),
        se_beta: var_b.max(0.0).sqrt(),
        residual_rms,
        entries_used: rows.len(),
    })
}

/// Empirical autocorrelation report at scale `s T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutocorrReport {
    pub kind: AutocorrKind,
    pub s: f64,
    pub t: f64,
    pub u: f64,
    pub big_t: f64,
    pub value: f64,
    pub asymptotic: f64,
    pub std_err: f64,
}

/// Product-moment correlation across paths of window returns
/// `X(z + (t+s)T) - X(z + tT)` and `X(z + (t+u+s)T) - X(z + (t+u)T)`
/// (squared for `SquaredReturns`), with a leave-one-out jackknife SE.
#[allow(clippy::too_many_arguments)]
pub fn empirical_autocorr(
    ens: &PathEnsemble,
    cov: &CovParams,
    kind: AutocorrKind,
    z: f64,
    s: f64,
    t: f64,
    u: f64,
    big_t: f64,
    gamma: f64,
) -> Result<AutocorrReport, CovError> {
    if ens.kind != PathKind::CenteredLogReturn {
        return Err(CovError::Range(
            "autocorrelation needs a centered-log-return ensemble".into(),
        ));
    }
    let asymptotic = autocorr_asymptotic(cov, kind, s, t, u, big_t, gamma)?;
    let nodes = [
        z + t * big_t,
        z + (t + s) * big_t,
        z + (t + u) * big_t,
        z + (t + u + s) * big_t,
    ];
    let mut recs = [0usize; 4];
    for (i, &time) in nodes.iter().enumerate() {
        recs[i] = ens
            .rec_index_of_time(time)
            .map_err(|e| CovError::Range(e.to_string()))?;
    }
    let n = ens.n_paths();
    if n < 30 {
        return Err(CovError::InsufficientData(format!(
            "need >= 30 paths, got {n}"
        )));
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for p in 0..n {
        let mut a = ens.value(p, recs[1]) - ens.value(p, recs[0]);
        let mut b = ens.value(p, recs[3]) - ens.value(p, recs[2]);
        if kind == AutocorrKind::SquaredReturns {
            a *= a;
            b *= b;
        }
        xs.push(a);
        ys.push(b);
    }
    let (value, std_err) = jackknife_correlation(&xs, &ys)?;
    Ok(AutocorrReport {
        kind,
        s,
        t,
        u,
        big_t,
        value,
        asymptotic,
        std_err,
    })
}

fn jackknife_correlation(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), CovError> {
    let n = xs.len();
    let nf = n as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let corr_from = |sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64, n: f64| -> Option<f64> {
        let vx = sxx - sx * sx / n;
        let vy = syy - sy * sy / n;
        if vx <= 0.0 || vy <= 0.0 {
            return None;
        }
        Some((sxy - sx * sy / n) / (vx * vy).sqrt())
    };
    let value = corr_from(sx, sy, sxx, syy, sxy, nf)
        .ok_or_else(|| CovError::Singular("degenerate variance in correlation".into()))?;
    let mut jack = Vec::with_capacity(n);
    let mut jack_sum = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        if let Some(c) = corr_from(
            sx - x,
            sy - y,
            sxx - x * x,
            syy - y * y,
            sxy - x * y,
            nf - 1.0,
        ) {
            jack.push(c);
            jack_sum += c;
        }
    }
    let jn = jack.len() as f64;
    let jmean = jack_sum / jn;
    let var = (jn - 1.0) / jn * jack.iter().map(|c| (c - jmean) * (c - jmean)).sum::<f64>();
    Ok((value, var.max(0.0).sqrt()))
}

/// Writes a covariance matrix as `t_i,t_j,value,std_err` rows.
pub fn write_covariance_csv<W: std::io::Write>(
    emp: &EmpiricalCovariance,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "t_i,t_j,value,std_err")?;
    for i in 0..emp.times.len() {
        for j in i..emp.times.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                emp.times[i], emp.times[j], emp.matrix[i][j], emp.std_err_matrix[i][j]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate_centered_returns, PathGrid};
    use crate::math::sym_eigenvalues;
    use crate::surfaces::VolSurface;
    use rand::Rng;

    fn constant_lambda_model(alpha: f64, beta: f64) -> CovarianceModel {
        let surface = VolSurface::constant(alpha).unwrap();
        CovarianceModel::new(
            CovParams::new(alpha, beta, None).unwrap(),
            LambdaFn::analytic(&surface).unwrap(),
        )
    }

    #[test]
    fn covariance_hand_values() {
        let m = constant_lambda_model(0.04, 0.01);
        // 0.04 * 1 * (1 + 6.25 * 0.08) = 0.06
        assert!((m.covariance(0.0, 1.0, 2.0).unwrap() - 0.06).abs() < 1e-15);
        // independent of z for constant Lambda
        assert!((m.covariance(5.0, 1.0, 2.0).unwrap() - 0.06).abs() < 1e-15);
        let b0 = constant_lambda_model(0.04, 0.0);
        assert!((b0.covariance(0.0, 1.0, 7.0).unwrap() - 0.04).abs() < 1e-16);
        assert_eq!(m.covariance(0.0, 0.0, 5.0).unwrap(), 0.0);
        assert!(m.covariance(0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn model_covariance_matrix_is_psd() {
        let m = constant_lambda_model(0.04, 0.01);
        let times = [0.5f64, 1.0, 2.0, 4.0, 8.0];
        let mut mat = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (times[i].min(times[j]), times[i].max(times[j]));
                mat[i][j] = m.covariance(0.0, a, b).unwrap();
            }
        }
        let trace: f64 = (0..5).map(|i| mat[i][i]).sum();
        let evs = sym_eigenvalues(&mat);
        assert!(evs.iter().all(|&e| e >= -1e-10 * trace), "{evs:?}");
    }

    #[test]
    fn asymptotic_branches() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        // gamma = 2: 100 (0.04 + 0.01 * 100) = 104
        let a = asymptotic_covariance(&cov, 0.0, 1.0, 1.0, 100.0, 2.0).unwrap();
        assert!((a.value - 104.0).abs() < 1e-10);
        assert_eq!(a.regime, CovRegime::LinearPlusGrowth);
        let b0 = CovParams::new(0.04, 0.0, None).unwrap();
        let b = asymptotic_covariance(&b0, 0.0, 1.0, 1.0, 100.0, 2.0).unwrap();
        assert!((b.value - 4.0).abs() < 1e-12);
        assert_eq!(b.regime, CovRegime::BrownianLike);
        let g = asymptotic_covariance(&cov, 0.0, 1.0, 2.0, 100.0, 0.5).unwrap();
        assert!((g.value - 0.01 * 2.0 * 1e4).abs() < 1e-9);
        assert_eq!(g.regime, CovRegime::GrowthDominated);
    }

    #[test]
    fn asymptotics_approach_exact_covariance() {
        // constant Lambda makes the asymptotic formula exact, so probe the
        // error decay with a seasonal Lambda whose wiggle is O(1)
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let surface = VolSurface::seasonal(0.04, 0.5, 2.0 * std::f64::consts::PI).unwrap();
        let model = CovarianceModel::new(cov, LambdaFn::analytic(&surface).unwrap());
        let gap = |big_t: f64| {
            let exact = model.covariance(0.0, big_t, 2.0 * big_t).unwrap();
            let asym = asymptotic_covariance(&cov, 0.0, 1.0, 2.0, big_t, 2.0)
                .unwrap()
                .value;
            ((exact - asym) / exact).abs()
        };
        let (small, large) = (gap(10.3), gap(1000.3));
        assert!(large < small, "gap(1000.3) = {large} vs gap(10.3) = {small}");
        assert!(large < 1e-3);
        // constant Lambda: exact agreement
        let flat = constant_lambda_model(0.04, 0.01);
        let exact = flat.covariance(0.0, 50.0, 100.0).unwrap();
        let asym = asymptotic_covariance(&cov, 0.0, 1.0, 2.0, 50.0, 2.0)
            .unwrap()
            .value;
        assert!((exact - asym).abs() < 1e-12 * exact);
    }

    #[test]
    fn autocorr_hand_values() {
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let r = autocorr_asymptotic(&cov, AutocorrKind::Returns, 1.0, 1.5, 1.0, 100.0, 2.0)
            .unwrap();
        assert!((r - 0.96).abs() < 1e-15);
        let r2 = autocorr_asymptotic(
            &cov,
            AutocorrKind::SquaredReturns,
            1.0,
            1.5,
            1.0,
            100.0,
            2.0,
        )
        .unwrap();
        assert!((r2 - 0.92).abs() < 1e-15);
        let b0 = CovParams::new(0.04, 0.0, None).unwrap();
        for kind in [AutocorrKind::Returns, AutocorrKind::SquaredReturns] {
            assert_eq!(
                autocorr_asymptotic(&b0, kind, 1.0, 1.5, 1.0, 100.0, 2.0).unwrap(),
                0.0
            );
        }
        // outside Corollary ranges
        assert!(
            autocorr_asymptotic(&cov, AutocorrKind::Returns, 1.0, 0.5, 1.0, 100.0, 2.0).is_err()
        );
        assert!(
            autocorr_asymptotic(&cov, AutocorrKind::Returns, 2.0, 1.5, 1.0, 100.0, 2.0).is_err()
        );
    }

    #[test]
    fn wsm_residual_vanishes_on_the_model() {
        let m = constant_lambda_model(0.04, 0.01);
        let f = |a: f64, b: f64| m.covariance(0.0, a, b).unwrap();
        let mut rng = crate::rng::substream(17, 0);
        for _ in 0..1000 {
            let mut ts: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..50.0)).collect();
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q = wsm_residual(f, ts[0], ts[1], ts[2]).unwrap();
            assert!(q.abs() <= 1e-12, "q = {q} at {ts:?}");
        }
    }

    #[test]
    fn wsm_residual_detects_corruption() {
        let m = constant_lambda_model(0.04, 0.01);
        let (t1, t2, t3) = (1.0, 2.0, 4.0);
        let f = |a: f64, b: f64| {
            let v = m.covariance(0.0, a, b).unwrap();
            if (a - t1).abs() < 1e-12 && (b - t3).abs() < 1e-12 {
                v * 1.1
            } else {
                v
            }
        };
        let q = wsm_residual(f, t1, t2, t3).unwrap();
        let y13 = m.covariance(0.0, t1, t3).unwrap() / m.covariance(0.0, t1, t1).unwrap();
        assert!((q - (-0.1 * y13)).abs() < 1e-12);
    }

    #[test]
    fn wsm_brownian_case() {
        let m = constant_lambda_model(0.04, 0.0);
        let f = |a: f64, b: f64| m.covariance(0.0, a, b).unwrap();
        assert!(wsm_residual(f, 1.0, 3.0, 9.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn empirical_covariance_matches_model() {
        let surface = VolSurface::constant(0.04).unwrap();
        let cov = CovParams::new(0.04, 0.01, None).unwrap();
        let grid = PathGrid::new(0.0, 0.01, 300).unwrap();
        let n = 8_000;
        let ens = simulate_centered_returns(&cov, &surface, &grid, n, 31).unwrap();
        let emp = empirical_covariance(&ens, 0.0, &[1.0, 2.0, 3.0]).unwrap();
        let model = constant_lambda_model(0.04, 0.01);
        for i in 0..3 {
            for j in i..3 {
                let want = model
                    .covariance(0.0, emp.times[i], emp.times[j])
                    .unwrap();
                let got = emp.matrix[i][j];
                let se = emp.std_err_matrix[i][j];
                assert!(
                    (got - want).abs() <= 3.5 * se,
                    "entry ({i},{j}): {got} vs {want}, se {se}"
                );
            }
        }
    }

    #[test]
    fn degenerate_times_give_zero_matrix() {
        let surface = VolSurface::constant(0.04).unwrap();
        let cov = CovParams::new(0.04, 0.0, None).unwrap();
        let grid = PathGrid::new(0.0, 0.1, 10).unwrap();
        let ens = simulate_centered_returns(&cov, &surface, &grid, 50, 2).unwrap();
        let emp = empirical_covariance(&ens, 0.5, &[0.0]).unwrap();
        assert_eq!(emp.matrix[0][0], 0.0);
        assert_eq!(emp.std_err_matrix[0][0], 0.0);
        // and the fit refuses it
        assert!(fit_cov_params(&emp).is_err());
    }

    #[test]
    fn fit_recovers_noiseless_synthetic_matrix() {
        let times = vec![1.0f64, 2.0, 4.0, 8.0];
        let m = times.len();
        let model = constant_lambda_model(0.04, 0.01);
        let mut matrix = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let (a, b) = (times[i].min(times[j]), times[i].max(times[j]));
                matrix[i][j] = model.covariance(0.0, a, b).unwrap();
            }
        }
        let n_vech = m * (m + 1) / 2;
        let emp = EmpiricalCovariance {
            z: 0.0,
            times,
            matrix,
            std_err_matrix: vec![vec![0.0; m]; m],
            n_paths: 1000,
            entry_cov: vec![vec![0.0; n_vech]; n_vech],
        };
        let fit = fit_cov_params(&emp).unwrap();
        assert!((fit.alpha_hat - 0.04).abs() < 1e-10);
        assert!((fit.beta_hat - 0.01).abs() < 1e-10);
        assert!(!fit.clamped);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn fit_clamps_negative_beta() {
        // corrupt a Brownian matrix downward so raw beta goes negative
        let times = vec![1.0f64, 2.0, 4.0];
        let m = times.len();
        let mut matrix = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let t1 = times[i].min(times[j]);
                let t2 = times[i].max(times[j]);
                matrix[i][j] = 0.04 * t1 - 0.001 * t1 * t2;
            }
        }
        let n_vech = m * (m + 1) / 2;
        let emp = EmpiricalCovariance {
            z: 0.0,
            times,
            matrix,
            std_err_matrix: vec![vec![0.0; m]; m],
            n_paths: 1000,
            entry_cov: vec![vec![0.0; n_vech]; n_vech],
        };
        let fit = fit_cov_params(&emp).unwrap();
        assert!(fit.clamped);
        assert_eq!(fit.beta_hat, 0.0);
        assert!((fit.beta_raw + 0.001).abs() < 1e-10);
    }

    #[test]
    fn empirical_autocorr_nonnegative_for_brownian() {
        let surface = VolSurface::constant(0.04).unwrap();
        let cov = CovParams::new(0.04, 0.0, None).unwrap();
        let big_t = 2.0;
        let grid = PathGrid::new(0.0, 0.05, 140).unwrap();
        let ens = simulate_centered_returns(&cov, &surface, &grid, 4_000, 19).unwrap();
        let rep = empirical_autocorr(
            &ens,
            &cov,
            AutocorrKind::Returns,
            0.0,
            1.0,
            1.1,
            1.0,
            big_t,
            2.0,
        )
        .unwrap();
        assert_eq!(rep.asymptotic, 0.0);
        assert!(rep.value.abs() <= 3.5 * rep.std_err, "{rep:?}");
    }
}
