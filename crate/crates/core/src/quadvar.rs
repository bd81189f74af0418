//! Realized quadratic-variation analytics: window sums of squared log
//! increments, convergence-bound checks, and estimation of the
//! (alpha, theta, gamma) bound parameters from windows of many lengths.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

use crate::engine::{EngineError, PathEnsemble, PathKind};
use crate::math::{golden_minimize, line_fit};
use crate::surfaces::QVParams;

#[derive(Debug, Error)]
pub enum QvError {
    #[error("range error: {0}")]
    Range(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A price trajectory on a (possibly non-uniform) strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
}

impl PricePath {
    pub fn new(times: Vec<f64>, prices: Vec<f64>) -> Result<Self, QvError> {
        if times.len() != prices.len() || times.len() < 2 {
            return Err(QvError::InsufficientData(
                "a path needs at least two aligned nodes".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QvError::Range("times must be strictly increasing".into()));
        }
        if prices.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(QvError::Range("prices must be positive and finite".into()));
        }
        Ok(Self { times, prices })
    }

    /// Extracts one member of a price ensemble at its recorded nodes.
    pub fn from_ensemble_member(ens: &PathEnsemble, path: usize) -> Result<Self, QvError> {
        if ens.kind != PathKind::Price {
            return Err(QvError::Range("ensemble member must be a price path".into()));
        }
        if path >= ens.n_paths() {
            return Err(QvError::Range(format!(
                "path index {path} out of range (n_paths = {})",
                ens.n_paths()
            )));
        }
        Self::new(ens.recorded_times(), ens.path_values(path).to_vec())
    }

    fn node_of_time(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => Some(i),
            Err(i) => {
                if i < self.times.len() && (self.times[i] - t).abs() <= tol {
                    Some(i)
                } else if i > 0 && (self.times[i - 1] - t).abs() <= tol {
                    Some(i - 1)
                } else {
                    None
                }
            }
        }
    }
}

/// Realized quadratic variation over one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QVReport {
    pub window_start: f64,
    pub window_len: f64,
    pub qv: f64,
    pub time_avg: f64,
}

/// Sum of squared log increments over `[t, t + t_len]`; both endpoints
/// must be grid nodes.
pub fn realized_qv(path: &PricePath, t: f64, t_len: f64) -> Result<QVReport, QvError> {
    if !t_len.is_finite() || t_len <= 0.0 {
        return Err(QvError::Range(format!(
            "window length must be > 0, got {t_len}"
        )));
    }
    let i0 = path.node_of_time(t).ok_or_else(|| {
        QvError::Range(format!("window start {t} is not a grid node"))
    })?;
    let i1 = path.node_of_time(t + t_len).ok_or_else(|| {
        QvError::Range(format!("window end {} is not a grid node", t + t_len))
    })?;
    if i1 <= i0 {
        return Err(QvError::Range("window needs at least two nodes".into()));
    }
    let mut qv = 0.0;
    for k in i0..i1 {
        let d = (path.prices[k + 1] / path.prices[k]).ln();
        qv += d * d;
    }
    Ok(QVReport {
        window_start: t,
        window_len: t_len,
        qv,
        time_avg: qv / t_len,
    })
}

/// Per-path realized QV over a window of a price ensemble, using the
/// full-resolution running QV accumulated during simulation.
pub fn ensemble_qv(ens: &PathEnsemble, t: f64, t_len: f64) -> Result<Vec<QVReport>, QvError> {
    if ens.kind != PathKind::Price {
        return Err(QvError::Range("ensemble must contain price paths".into()));
    }
    let i0 = ens.rec_index_of_time(t)?;
    let i1 = ens.rec_index_of_time(t + t_len)?;
    if i1 <= i0 {
        return Err(QvError::Range("window needs at least two nodes".into()));
    }
    let mut out = Vec::with_capacity(ens.n_paths());
    for p in 0..ens.n_paths() {
        let q0 = ens.cum_qv(p, i0).ok_or_else(|| {
            QvError::Range("ensemble carries no running QV".into())
        })?;
        let q1 = ens.cum_qv(p, i1).unwrap();
        let qv = q1 - q0;
        out.push(QVReport {
            window_start: t,
            window_len: t_len,
            qv,
            time_avg: qv / t_len,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundStatus {
    Pass,
    Fail,
    SkippedBelowOnset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub report: QVReport,
    /// `band - |time_avg - alpha|`; negative means violation.
    pub margin: f64,
    pub status: BoundStatus,
}

/// Checks `|QV/T - alpha| <= theta / T^gamma` per report. Windows shorter
/// than the onset horizon are skipped with a warning status.
pub fn check_bound(reports: &[QVReport], qv: &QVParams) -> Vec<BoundCheck> {
    reports
        .iter()
        .map(|r| {
            let band = qv.band(r.window_len);
            let dev = (r.time_avg - qv.alpha).abs();
            let status = if r.window_len < qv.t0 {
                BoundStatus::SkippedBelowOnset
            } else if dev <= band {
                BoundStatus::Pass
            } else {
                BoundStatus::Fail
            };
            BoundCheck {
                report: *r,
                margin: band - dev,
                status,
            }
        })
        .collect()
}

/// Fitted convergence-bound parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QVFit {
    pub alpha_hat: f64,
    /// None when the deviations are indistinguishable from zero or carry
    /// no decaying signal (degenerate regression).
    pub theta_hat: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub residual_rms: f64,
    pub windows_used: usize,
}

// Deviations at or below this relative size count as numerically zero and
// are dropped from the rate regression.
const DEV_FLOOR_REL: f64 = 1e3 * f64::EPSILON;

fn rate_regression(
    reports: &[QVReport],
    alpha: f64,
) -> Option<(f64, f64, f64, usize)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in reports {
        let dev = (r.time_avg - alpha).abs();
        if dev <= DEV_FLOOR_REL * r.time_avg.abs().max(alpha.abs()) {
            continue;
        }
        xs.push(r.window_len.ln());
        ys.push(dev.ln());
    }
    let n = xs.len();
    let (slope, intercept, rss) = line_fit(&xs, &ys)?;
    Some((slope, intercept, rss, n))
}

// Linear least squares of time_avg on [1, T^{-gamma}] for a trial gamma.
// Returns (alpha, theta, rss); the model is linear in (alpha, theta) once
// gamma is fixed, which keeps the level refinement well conditioned.
fn level_rate_ls(reports: &[QVReport], gamma: f64) -> Option<(f64, f64, f64)> {
    let n = reports.len() as f64;
    let (mut su, mut suu, mut sd, mut sud) = (0.0, 0.0, 0.0, 0.0);
    for r in reports {
        let u = r.window_len.powf(-gamma);
        su += u;
        suu += u * u;
        sd += r.time_avg;
        sud += u * r.time_avg;
    }
    let det = n * suu - su * su;
    if det.abs() <= 1e-14 * n * suu {
        return None;
    }
    let theta = (n * sud - su * sd) / det;
    let alpha = (sd - theta * su) / n;
    let rss: f64 = reports
        .iter()
        .map(|r| {
            let e = r.time_avg - alpha - theta * r.window_len.powf(-gamma);
            e * e
        })
        .sum();
    Some((alpha, theta, rss))
}

/// Two-stage fit of (alpha, theta, gamma) from windows of many lengths.
///
/// Stage one estimates the level as the inverse-length-weighted mean of
/// the time averages over the largest-length quartile. Stage two refines
/// the level by variable projection — for each trial gamma the model
/// `alpha + theta T^{-gamma}` is solved linearly and the best gamma is
/// found by a scan plus golden search — and then reads (theta, gamma)
/// off the least-squares line on `(log T, log |time_avg - alpha_hat|)`:
/// slope `-gamma_hat`, intercept `log theta_hat`. The combination is
/// exact on noiseless inputs of the form `alpha + theta / T^gamma`.
/// Windows whose deviation underflows are dropped from the regression.
pub fn fit_qv_params(reports: &[QVReport]) -> Result<QVFit, QvError> {
    let mut distinct: Vec<f64> = reports.iter().map(|r| r.window_len).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));
    if distinct.len() < 4 {
        return Err(QvError::InsufficientData(format!(
            "need >= 4 distinct window lengths, got {}",
            distinct.len()
        )));
    }
    let span = distinct.last().unwrap() / distinct.first().unwrap();
    if span < 10.0 {
        return Err(QvError::InsufficientData(format!(
            "window lengths must span at least one decade, ratio {span:.3}"
        )));
    }

    // stage one: level from the largest-length quartile
    let mut sorted: Vec<&QVReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.window_len.partial_cmp(&b.window_len).unwrap());
    let q = reports.len().div_ceil(4);
    let top = &sorted[sorted.len() - q..];
    let wsum: f64 = top.iter().map(|r| 1.0 / r.window_len).sum();
    let alpha0: f64 = top
        .iter()
        .map(|r| r.time_avg / r.window_len)
        .sum::<f64>()
        / wsum;

    // stage two: level refinement by variable projection over gamma
    let objective = |g: f64| match level_rate_ls(reports, g) {
        Some((_, _, rss)) => rss,
        None => f64::INFINITY,
    };
    let (g_lo, g_hi) = (0.05f64, 8.0f64);
    let scan = 160;
    let mut best_g = 1.0;
    let mut best_val = f64::INFINITY;
    for i in 0..=scan {
        let g = g_lo * (g_hi / g_lo).powf(i as f64 / scan as f64);
        let v = objective(g);
        if v < best_val {
            best_val = v;
            best_g = g;
        }
    }
    let alpha_hat = if best_val.is_finite() {
        let step = (g_hi / g_lo).powf(1.0 / scan as f64);
        let refined = golden_minimize(objective, best_g / step, best_g * step, 200);
        let g_star = if objective(refined) <= best_val {
            refined
        } else {
            best_g
        };
        level_rate_ls(reports, g_star).map(|(a, _, _)| a).unwrap_or(alpha0)
    } else {
        alpha0
    };

    match rate_regression(reports, alpha_hat) {
        Some((slope, intercept, rss, n)) if n >= 2 && slope < 0.0 => Ok(QVFit {
            alpha_hat,
            theta_hat: Some(intercept.exp()),
            gamma_hat: Some(-slope),
            residual_rms: (rss / n as f64).sqrt(),
            windows_used: n,
        }),
        _ => Ok(QVFit {
            alpha_hat: alpha0,
            theta_hat: None,
            gamma_hat: None,
            residual_rms: 0.0,
            windows_used: 0,
        }),
    }
}

/// Parses a `t,price` CSV into a price path. `#` lines are comments;
/// errors carry the offending line number.
pub fn ingest_price_csv<R: BufRead>(reader: R) -> Result<PricePath, QvError> {
    let mut times = Vec::new();
    let mut prices = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != "t,price" {
                return Err(QvError::Parse {
                    line: lineno,
                    message: format!("expected header t,price, got {trimmed}"),
                });
            }
            header_seen = true;
            continue;
        }
        let (t_str, p_str) = trimmed.split_once(',').ok_or_else(|| QvError::Parse {
            line: lineno,
            message: "expected two comma-separated fields".into(),
        })?;
        let t: f64 = t_str.trim().parse().map_err(|_| QvError::Parse {
            line: lineno,
            message: format!("bad time {t_str}"),
        })?;
        let p: f64 = p_str.trim().parse().map_err(|_| QvError::Parse {
            line: lineno,
            message: format!("bad price {p_str}"),
        })?;
        if !p.is_finite() || p <= 0.0 {
            return Err(QvError::Parse {
                line: lineno,
                message: format!("price must be > 0, got {p}"),
            });
        }
        if let Some(&last) = times.last() {
            if t <= last {
                return Err(QvError::Parse {
                    line: lineno,
                    message: format!("times must be strictly increasing, got {t} after {last}"),
                });
            }
        }
        times.push(t);
        prices.push(p);
    }
    PricePath::new(times, prices)
}

/// Writes reports as `window_start,T,qv,time_avg`.
pub fn write_reports_csv<W: Write>(reports: &[QVReport], mut w: W) -> Result<(), QvError> {
    writeln!(w, "window_start,T,qv,time_avg")?;
    for r in reports {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.window_start, r.window_len, r.qv, r.time_avg
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate_price, DriftSpec, PathGrid};
    use crate::surfaces::VolSurface;
    use std::f64::consts::PI;

    fn two_node_path(log_inc: f64) -> PricePath {
        PricePath::new(vec![0.0, 1.0], vec![100.0, 100.0 * log_inc.exp()]).unwrap()
    }

    #[test]
    fn single_increment_qv() {
        let p = two_node_path(0.1);
        let r = realized_qv(&p, 0.0, 1.0).unwrap();
        assert!((r.qv - 0.01).abs() < 1e-15);
        assert!((r.time_avg - 0.01).abs() < 1e-15);
    }

    #[test]
    fn two_increment_qv() {
        let prices = vec![100.0, 100.0 * (0.1f64).exp(), 100.0];
        let p = PricePath::new(vec![0.0, 1.0, 2.0], prices).unwrap();
        let r = realized_qv(&p, 0.0, 2.0).unwrap();
        assert!((r.qv - 0.02).abs() < 1e-15);
    }

    #[test]
    fn qv_is_additive_and_scale_invariant() {
        let times: Vec<f64> = (0..9).map(|k| k as f64 * 0.5).collect();
        let prices: Vec<f64> = (0..9)
            .map(|k| 100.0 * (0.03 * (k as f64 * 1.3).sin()).exp())
            .collect();
        let p = PricePath::new(times.clone(), prices.clone()).unwrap();
        let whole = realized_qv(&p, 0.0, 4.0).unwrap().qv;
        let a = realized_qv(&p, 0.0, 1.5).unwrap().qv;
        let b = realized_qv(&p, 1.5, 2.5).unwrap().qv;
        assert!((whole - (a + b)).abs() < 1e-15);
        let scaled =
            PricePath::new(times, prices.iter().map(|v| v * 7.0).collect()).unwrap();
        assert!((realized_qv(&scaled, 0.0, 4.0).unwrap().qv - whole).abs() < 1e-15);
    }

    #[test]
    fn window_must_align_with_nodes() {
        let p = two_node_path(0.1);
        assert!(realized_qv(&p, 0.25, 0.5).is_err());
        assert!(realized_qv(&p, 0.0, 2.0).is_err());
    }

    #[test]
    fn bound_checks() {
        let qv = QVParams::new(0.04, 0.01, 1.0, 1.0).unwrap();
        let mk = |time_avg: f64, t_len: f64| QVReport {
            window_start: 0.0,
            window_len: t_len,
            qv: time_avg * t_len,
            time_avg,
        };
        let checks = check_bound(
            &[
                mk(0.04, 10.0),
                mk(0.04 + 2.0 * 0.01 / 10.0, 10.0),
                mk(0.04, 0.5),
            ],
            &qv,
        );
        assert_eq!(checks[0].status, BoundStatus::Pass);
        assert_eq!(checks[1].status, BoundStatus::Fail);
        assert_eq!(checks[2].status, BoundStatus::SkippedBelowOnset);
    }

    #[test]
    fn seasonal_deterministic_windows_pass_their_band() {
        // deterministic sigma2 time averages; theta = 2 alpha |a| / omega
        let s = VolSurface::seasonal(0.04, 0.5, 2.0 * PI).unwrap();
        let qv = QVParams::new(0.04, s.envelope_theta(), 1.0, 1.0).unwrap();
        let reports: Vec<QVReport> = [5.0, 10.0, 20.0]
            .iter()
            .map(|&t_len| {
                let avg = s.time_average_envelope(0.0, t_len).unwrap().upper;
                QVReport {
                    window_start: 0.0,
                    window_len: t_len,
                    qv: avg * t_len,
                    time_avg: avg,
                }
            })
            .collect();
        assert!(check_bound(&reports, &qv)
            .iter()
            .all(|c| c.status == BoundStatus::Pass));
    }

    #[test]
    fn fit_recovers_noiseless_synthetic_bound() {
        let reports: Vec<QVReport> = (0..10)
            .map(|k| {
                let t_len = 5.0 * 2f64.powi(k);
                QVReport {
                    window_start: 0.0,
                    window_len: t_len,
                    qv: (0.04 + 0.1 / t_len) * t_len,
                    time_avg: 0.04 + 0.1 / t_len,
                }
            })
            .collect();
        let fit = fit_qv_params(&reports).unwrap();
        assert!((fit.alpha_hat - 0.04).abs() < 1e-6, "alpha {}", fit.alpha_hat);
        assert!((fit.gamma_hat.unwrap() - 1.0).abs() < 1e-6);
        assert!((fit.theta_hat.unwrap() - 0.1).abs() < 1e-6);
    }

    #[test]
    fn fit_degenerates_gracefully_on_flat_input() {
        let reports: Vec<QVReport> = [5.0, 10.0, 55.0, 100.0]
            .iter()
            .map(|&t_len| QVReport {
                window_start: 0.0,
                window_len: t_len,
                qv: 0.04 * t_len,
                time_avg: 0.04,
            })
            .collect();
        let fit = fit_qv_params(&reports).unwrap();
        assert!((fit.alpha_hat - 0.04).abs() < 1e-14);
        assert!(fit.gamma_hat.is_none());
        assert!(fit.theta_hat.is_none());
    }

    #[test]
    fn fit_needs_enough_windows() {
        let reports: Vec<QVReport> = [5.0, 10.0, 20.0]
            .iter()
            .map(|&t_len| QVReport {
                window_start: 0.0,
                window_len: t_len,
                qv: 0.04 * t_len,
                time_avg: 0.04,
            })
            .collect();
        assert!(matches!(
            fit_qv_params(&reports),
            Err(QvError::InsufficientData(_))
        ));
    }

    #[test]
    fn seasonal_quarter_offset_windows_fit_gamma_one() {
        let s = VolSurface::seasonal(0.04, 0.5, 2.0 * PI).unwrap();
        let reports: Vec<QVReport> = [5.25, 10.25, 20.25, 40.25, 80.25]
            .iter()
            .map(|&t_len| {
                let avg = s.time_average_envelope(0.0, t_len).unwrap().upper;
                QVReport {
                    window_start: 0.0,
                    window_len: t_len,
                    qv: avg * t_len,
                    time_avg: avg,
                }
            })
            .collect();
        let fit = fit_qv_params(&reports).unwrap();
        assert!((fit.alpha_hat - 0.04).abs() < 1e-3);
        assert!((fit.gamma_hat.unwrap() - 1.0).abs() < 0.1);
    }

    #[test]
    fn ingest_happy_path_and_errors() {
        let good = "t,price\n0,100\n1,110\n";
        let p = ingest_price_csv(good.as_bytes()).unwrap();
        assert_eq!(p.times.len(), 2);

        let bad_price = "t,price\n0,100\n1,-5\n";
        match ingest_price_csv(bad_price.as_bytes()) {
            Err(QvError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_order = "t,price\n1,100\n0,100\n";
        assert!(matches!(
            ingest_price_csv(bad_order.as_bytes()),
            Err(QvError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn export_ingest_round_trip_preserves_qv() {
        let grid = PathGrid::new(0.0, 0.125, 16).unwrap();
        let surface = VolSurface::constant(0.04).unwrap();
        let ens = simulate_price(
            &surface,
            &DriftSpec::RiskNeutral { r: 0.02 },
            100.0,
            &grid,
            3,
            21,
        )
        .unwrap();
        let member = PricePath::from_ensemble_member(&ens, 1).unwrap();
        let qv_direct = realized_qv(&member, 0.0, 2.0).unwrap().qv;
        let mut csv = String::from("t,price\n");
        for (t, p) in member.times.iter().zip(&member.prices) {
            csv.push_str(&format!("{t:.16e},{p:.16e}\n"));
        }
        let back = ingest_price_csv(csv.as_bytes()).unwrap();
        let qv_back = realized_qv(&back, 0.0, 2.0).unwrap().qv;
        assert!((qv_direct - qv_back).abs() <= 1e-12);
    }

    #[test]
    fn constant_family_time_avg_moments() {
        // across paths, time_avg has mean alpha and variance ~ 2 alpha^2 dt / T
        let grid = PathGrid::new(0.0, 1e-3, 2_000).unwrap();
        let surface = VolSurface::constant(0.04).unwrap();
        let n = 2_000;
        let ens = simulate_price(
            &surface,
            &DriftSpec::RiskNeutral { r: 0.0 },
            100.0,
            &grid,
            n,
            12,
        )
        .unwrap();
        let t_len = 2.0;
        let avgs: Vec<f64> = ensemble_qv(&ens, 0.0, t_len)
            .unwrap()
            .iter()
            .map(|r| r.time_avg)
            .collect();
        let mean = avgs.iter().sum::<f64>() / n as f64;
        let var = avgs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n as f64 - 1.0);
        let want_var = 2.0 * 0.04 * 0.04 * grid.dt / t_len;
        let se_mean = (var / n as f64).sqrt();
        assert!((mean - 0.04).abs() <= 3.0 * se_mean, "mean {mean}");
        let var_se = want_var * (2.0 / n as f64).sqrt();
        assert!(
            (var - want_var).abs() <= 4.0 * var_se,
            "var {var} vs {want_var}"
        );
    }

    #[test]
    fn ensemble_qv_matches_member_path() {
        let grid = PathGrid::new(0.0, 0.25, 8).unwrap();
        let surface = VolSurface::constant(0.04).unwrap();
        let ens = simulate_price(
            &surface,
            &DriftSpec::RiskNeutral { r: 0.0 },
            100.0,
            &grid,
            5,
            8,
        )
        .unwrap();
        let per_path = ensemble_qv(&ens, 0.0, 2.0).unwrap();
        for (p, report) in per_path.iter().enumerate() {
            let member = PricePath::from_ensemble_member(&ens, p).unwrap();
            let direct = realized_qv(&member, 0.0, 2.0).unwrap().qv;
            assert!((report.qv - direct).abs() < 1e-14);
        }
    }
}
