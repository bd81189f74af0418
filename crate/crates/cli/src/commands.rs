//! Subcommand implementations. Every artifact embeds the resolved config
//! (CSV comment block or a `config` JSON field) plus the seed, so
//! re-running the embedded config reproduces the file byte for byte.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde_json::json;

use qvlab_core::covmodel::{empirical_covariance, fit_cov_params, write_covariance_csv};
use qvlab_core::engine::{
    drift_from_growth, simulate_centered_returns_with, simulate_price_with, DriftSpec, Noise,
    Record, SimulateSpec,
};
use qvlab_core::forecast::{
    corrected_forecast, limit_forecast, lognormal_price_forecast, portfolio_pv,
    portfolio_pv_closed_form, ForecastDistribution, Instrument, Portfolio,
};
use qvlab_core::pricing::{
    flattening_report, implied_vol_surface, martingale_audit, mc_price, parity_audit,
    sandwich_checks, write_iv_csv, Market, OptionKind, OptionSpec,
};
use qvlab_core::quadvar::{
    ensemble_qv, fit_qv_params, ingest_price_csv, realized_qv, write_reports_csv, QVReport,
};
use qvlab_core::acceptance;
use qvlab_core::rng::derive_seed;
use qvlab_core::surfaces::{LambdaFn, QVParams};

use crate::config::Config;
use crate::CliError;

fn write_artifact(out_dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    fs::write(&path, bytes)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn drift_spec(cfg: &Config) -> Result<DriftSpec, CliError> {
    match cfg.opt("engine", "drift").unwrap_or("risk_neutral") {
        "risk_neutral" => {
            let (_, r) = cfg.market()?;
            Ok(DriftSpec::RiskNeutral { r })
        }
        "constant_mu" => Ok(DriftSpec::ConstantMu {
            mu: cfg.get_f64("engine", "mu")?,
        }),
        "growth" => {
            let (s0, _) = cfg.market()?;
            let cov = cfg.cov_params()?;
            let surface = cfg.surface()?;
            let lambda = LambdaFn::analytic(&surface).map_err(|e| {
                CliError::Validation(format!(
                    "growth drift needs a price-independent surface: {e}"
                ))
            })?;
            let mean_rate = cfg.opt_f64("engine", "mean_rate")?.unwrap_or(0.0);
            drift_from_growth(cov, lambda, mean_rate, s0)
                .map_err(|e| CliError::Validation(e.to_string()))
        }
        other => Err(CliError::Validation(format!(
            "config key `engine.drift`: unknown form `{other}` \
             (risk_neutral | constant_mu | growth)"
        ))),
    }
}

pub fn cmd_simulate(cfg: &Config, out_dir: &Path) -> Result<(), CliError> {
    let surface = cfg.surface()?;
    let grid = cfg.grid()?;
    let n_paths = cfg.n_paths()?;
    let seed = derive_seed(cfg.seed()?, "simulate");
    let (s0, _) = cfg.market()?;
    let drift = drift_spec(cfg)?;
    // thin the exported nodes without changing the simulation step
    let export_every = match cfg.opt("engine", "export_every") {
        None => 1,
        Some(_) => cfg.get_usize("engine", "export_every")?.max(1),
    };
    let record = if export_every == 1 {
        Record::All
    } else {
        let mut nodes: Vec<usize> = (0..=grid.n_steps).step_by(export_every).collect();
        if nodes.last() != Some(&grid.n_steps) {
            nodes.push(grid.n_steps);
        }
        Record::Nodes(nodes)
    };
    let ens = simulate_price_with(
        &surface,
        &drift,
        s0,
        &grid,
        n_paths,
        seed,
        &SimulateSpec {
            record,
            noise: Noise::Seeded,
        },
    )?;
    let mut bytes = cfg.comment_block().into_bytes();
    ens.write_csv(&mut bytes)?;
    write_artifact(out_dir, "paths.csv", &bytes)?;
    println!(
        "simulated {n_paths} paths on [{}, {}] with dt = {} (seed {seed})",
        grid.t_start,
        grid.end_time(),
        grid.dt
    );
    Ok(())
}

fn qv_windows(cfg: &Config) -> Result<(f64, Vec<f64>), CliError> {
    let start = cfg.opt_f64("qv", "window_start")?.unwrap_or(0.0);
    let windows = cfg.get_f64_list("qv", "windows")?;
    if windows.is_empty() {
        return Err(CliError::Validation(
            "config key `qv.windows` must list at least one window".into(),
        ));
    }
    Ok((start, windows))
}

pub fn cmd_qv(
    cfg: &Config,
    out_dir: &Path,
    fit: bool,
    input: Option<&Path>,
) -> Result<(), CliError> {
    let (start, windows) = qv_windows(cfg)?;
    let reports: Vec<QVReport> = match input {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| {
                CliError::Validation(format!("cannot open {}: {e}", path.display()))
            })?;
            let price_path = ingest_price_csv(BufReader::new(file))?;
            windows
                .iter()
                .map(|&w| realized_qv(&price_path, start, w))
                .collect::<Result<_, _>>()?
        }
        None => {
            let surface = cfg.surface()?;
            let grid = cfg.grid()?;
            let seed = derive_seed(cfg.seed()?, "qv");
            let (s0, _) = cfg.market()?;
            let drift = drift_spec(cfg)?;
            let mut nodes = vec![grid.node_of_time(start).ok_or_else(|| {
                CliError::Validation(format!("qv.window_start {start} is not on the grid"))
            })?];
            for &w in &windows {
                nodes.push(grid.node_of_time(start + w).ok_or_else(|| {
                    CliError::Validation(format!("window end {} is not on the grid", start + w))
                })?);
            }
            let ens = simulate_price_with(
                &surface,
                &drift,
                s0,
                &grid,
                cfg.n_paths()?,
                seed,
                &SimulateSpec {
                    record: Record::Nodes(nodes),
                    noise: Noise::Seeded,
                },
            )?;
            // cross-path mean realized QV per window
            windows
                .iter()
                .map(|&w| {
                    let per_path = ensemble_qv(&ens, start, w)?;
                    let qv =
                        per_path.iter().map(|r| r.qv).sum::<f64>() / per_path.len() as f64;
                    Ok(QVReport {
                        window_start: start,
                        window_len: w,
                        qv,
                        time_avg: qv / w,
                    })
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    let mut bytes = cfg.comment_block().into_bytes();
    write_reports_csv(&reports, &mut bytes)?;
    write_artifact(out_dir, "qv_reports.csv", &bytes)?;
    for r in &reports {
        println!(
            "window [{}, {}]: QV = {:.6e}, QV/T = {:.6e}",
            r.window_start,
            r.window_start + r.window_len,
            r.qv,
            r.time_avg
        );
    }
    if fit {
        let fit_result = fit_qv_params(&reports)?;
        let doc = json!({
            "config": cfg.json_value(),
            "fit": fit_result,
        });
        write_artifact(
            out_dir,
            "qv_fit.json",
            serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
        )?;
    }
    Ok(())
}

fn parse_kind(s: &str) -> Result<OptionKind, CliError> {
    match s {
        "call" => Ok(OptionKind::Call),
        "put" => Ok(OptionKind::Put),
        "forward" => Ok(OptionKind::Forward),
        "variance_call" => Ok(OptionKind::VarianceCall),
        "variance_put" => Ok(OptionKind::VariancePut),
        other => Err(CliError::Validation(format!(
            "unknown option kind `{other}` \
             (call | put | forward | variance_call | variance_put)"
        ))),
    }
}

pub fn cmd_price(cfg: &Config, out_dir: &Path) -> Result<(), CliError> {
    let surface = cfg.surface()?;
    let grid = cfg.grid()?;
    let (s0, r) = cfg.market()?;
    let seed = derive_seed(cfg.seed()?, "price");
    let strikes = cfg.get_f64_list("price", "strikes")?;
    let expiries = cfg.get_f64_list("price", "expiries")?;
    let kinds: Vec<OptionKind> = cfg
        .opt("price", "kinds")
        .unwrap_or("call,put")
        .split(',')
        .map(|s| parse_kind(s.trim()))
        .collect::<Result<_, _>>()?;
    let mut nodes = Vec::new();
    for &e in &expiries {
        nodes.push(grid.node_of_time(grid.t_start + e).ok_or_else(|| {
            CliError::Validation(format!("expiry {e} is not on the grid"))
        })?);
    }
    let ens = simulate_price_with(
        &surface,
        &DriftSpec::RiskNeutral { r },
        s0,
        &grid,
        cfg.n_paths()?,
        seed,
        &SimulateSpec {
            record: Record::Nodes(nodes),
            noise: Noise::Seeded,
        },
    )?;

    let mut csv = cfg.comment_block();
    csv.push_str("kind,strike,expiry,mean,std_err,n_paths\n");
    for &expiry in &expiries {
        for &strike in &strikes {
            for &kind in &kinds {
                let est = mc_price(&ens, &OptionSpec::new(kind, strike, expiry)?, r)?;
                csv.push_str(&format!(
                    "{kind:?},{strike:.16e},{expiry:.16e},{:.16e},{:.16e},{}\n",
                    est.mean, est.std_err, est.n_paths
                ));
            }
        }
    }
    write_artifact(out_dir, "prices.csv", csv.as_bytes())?;

    let mut audits = Vec::new();
    for &expiry in &expiries {
        for &strike in &strikes {
            let rep = parity_audit(&ens, strike, expiry, r)?;
            audits.push(json!({
                "check": format!("parity strike {strike} expiry {expiry}"),
                "margin": 1e-12 * rep.scale - rep.max_pathwise_residual,
                "pass": rep.pass,
            }));
        }
    }
    let mart = martingale_audit(&ens, r)?;
    audits.push(json!({
        "check": "martingale",
        "margin": 3.0 - mart.worst_dev_in_se,
        "pass": mart.pass,
    }));
    let doc = json!({ "config": cfg.json_value(), "audits": audits });
    write_artifact(
        out_dir,
        "price_audits.json",
        serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
    )?;
    Ok(())
}

fn bound_params(cfg: &Config) -> Result<Option<QVParams>, CliError> {
    if cfg.opt("bound", "alpha").is_none() {
        return Ok(None);
    }
    QVParams::new(
        cfg.get_f64("bound", "alpha")?,
        cfg.get_f64("bound", "theta")?,
        cfg.get_f64("bound", "gamma")?,
        cfg.get_f64("bound", "t0")?,
    )
    .map(Some)
    .map_err(|e| CliError::Validation(format!("section [bound]: {e}")))
}

pub fn cmd_ivsurface(cfg: &Config, out_dir: &Path) -> Result<(), CliError> {
    let surface = cfg.surface()?;
    let (s0, r) = cfg.market()?;
    let seed = derive_seed(cfg.seed()?, "ivsurface");
    let strikes = cfg.get_f64_list("price", "strikes")?;
    let expiries = cfg.get_f64_list("price", "expiries")?;
    let dt = cfg.get_f64("engine", "dt")?;
    let points = implied_vol_surface(
        &surface,
        &Market { s0, r },
        &strikes,
        &expiries,
        dt,
        cfg.n_paths()?,
        seed,
    )?;
    let mut bytes = cfg.comment_block().into_bytes();
    write_iv_csv(&points, &mut bytes)
        .map_err(|e| CliError::Validation(format!("cannot render iv grid: {e}")))?;
    write_artifact(out_dir, "ivsurface.csv", &bytes)?;

    if let Some(qv) = bound_params(cfg)? {
        let flat = flattening_report(&points, &surface, &qv);
        let sandwich = sandwich_checks(&points, &surface)?;
        let worst_sandwich = sandwich
            .iter()
            .map(|c| c.margin)
            .fold(f64::INFINITY, f64::min);
        let doc = json!({
            "config": cfg.json_value(),
            "audits": [
                {"check": "iv_flattening", "margin": flat.worst_margin, "pass": flat.pass},
                {"check": "iv_sandwich", "margin": worst_sandwich,
                 "pass": sandwich.iter().all(|c| c.margin >= 0.0)},
            ],
            "flattening": flat,
        });
        write_artifact(
            out_dir,
            "ivsurface_audits.json",
            serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
        )?;
    }
    Ok(())
}

pub fn cmd_cov(cfg: &Config, out_dir: &Path) -> Result<(), CliError> {
    let surface = cfg.surface()?;
    let cov = cfg.cov_params()?;
    let grid = cfg.grid()?;
    let seed = derive_seed(cfg.seed()?, "cov");
    let z = cfg.opt_f64("cov", "z")?.unwrap_or(0.0);
    let times = cfg.get_f64_list("cov", "times")?;
    let lambda = LambdaFn::analytic(&surface).map_err(|e| {
        CliError::Validation(format!(
            "cov estimation needs a price-independent surface: {e}"
        ))
    })?;
    let mut nodes = vec![grid.node_of_time(z).ok_or_else(|| {
        CliError::Validation(format!("cov.z = {z} is not on the grid"))
    })?];
    for &t in &times {
        nodes.push(grid.node_of_time(z + t).ok_or_else(|| {
            CliError::Validation(format!("cov time {} is not on the grid", z + t))
        })?);
    }
    let ens = simulate_centered_returns_with(
        &cov,
        &surface,
        &lambda,
        None,
        &grid,
        cfg.n_paths()?,
        seed,
        &SimulateSpec {
            record: Record::Nodes(nodes),
            noise: Noise::Seeded,
        },
    )?;
    let emp = empirical_covariance(&ens, z, &times)?;
    let mut bytes = cfg.comment_block().into_bytes();
    write_covariance_csv(&emp, &mut bytes)
        .map_err(|e| CliError::Validation(format!("cannot render covariance: {e}")))?;
    write_artifact(out_dir, "cov.csv", &bytes)?;

    let fit = fit_cov_params(&emp)?;
    println!(
        "fitted alpha = {:.6e} (se {:.1e}), beta = {:.6e} (se {:.1e}){}",
        fit.alpha_hat,
        fit.se_alpha,
        fit.beta_hat,
        fit.se_beta,
        if fit.clamped { " [beta clamped]" } else { "" }
    );
    let doc = json!({ "config": cfg.json_value(), "fit": fit });
    write_artifact(
        out_dir,
        "cov_fit.json",
        serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
    )?;
    Ok(())
}

fn build_forecast(cfg: &Config) -> Result<ForecastDistribution, CliError> {
    let z = cfg.get_f64("forecast", "z")?;
    let x = cfg.get_f64("forecast", "x")?;
    let times = cfg.get_f64_list("forecast", "times")?;
    match cfg.opt("forecast", "variant").unwrap_or("limit") {
        "limit" => {
            let alpha = cfg.get_f64("cov", "alpha")?;
            Ok(limit_forecast(x, z, &times, alpha)?)
        }
        "corrected" => {
            let cov = cfg.cov_params()?;
            let big_t = cfg.get_f64("forecast", "t_scale")?;
            let gamma = cfg.get_f64("forecast", "gamma")?;
            Ok(corrected_forecast(x, z, &times, &cov, big_t, gamma)?)
        }
        other => Err(CliError::Validation(format!(
            "config key `forecast.variant`: unknown variant `{other}` (limit | corrected)"
        ))),
    }
}

pub fn cmd_forecast(cfg: &Config, out_dir: &Path) -> Result<(), CliError> {
    let forecast = build_forecast(cfg)?;
    let mut doc = json!({
        "config": cfg.json_value(),
        "forecast": forecast,
    });
    if let Some(s_z) = cfg.opt_f64("forecast", "s_z")? {
        let (s0, _) = cfg.market()?;
        let big_t = cfg.get_f64("forecast", "t_scale")?;
        let mean_rate = cfg.opt_f64("forecast", "mean_rate")?.unwrap_or(0.0);
        let ln = lognormal_price_forecast(s0, s_z, mean_rate, &forecast, big_t)?;
        doc["lognormal"] = serde_json::to_value(&ln).unwrap();
    }
    write_artifact(
        out_dir,
        "forecast.json",
        serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
    )?;
    Ok(())
}

fn parse_portfolio_csv(text: &str) -> Result<Portfolio, CliError> {
    let mut positions = Vec::new();
    let mut header_seen = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != "quantity,kind,strike,expiry" {
                return Err(CliError::Validation(format!(
                    "portfolio line {lineno}: expected header quantity,kind,strike,expiry"
                )));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if fields.len() != 4 {
            return Err(CliError::Validation(format!(
                "portfolio line {lineno}: expected 4 fields"
            )));
        }
        let qty: f64 = fields[0].parse().map_err(|_| {
            CliError::Validation(format!("portfolio line {lineno}: bad quantity"))
        })?;
        let strike: f64 = fields[2].parse().map_err(|_| {
            CliError::Validation(format!("portfolio line {lineno}: bad strike"))
        })?;
        let expiry: f64 = fields[3].parse().map_err(|_| {
            CliError::Validation(format!("portfolio line {lineno}: bad expiry"))
        })?;
        let instrument = match fields[1] {
            "share" => Instrument::UnderlyingShare { horizon: expiry },
            kind => Instrument::EuropeanOption(
                OptionSpec::new(parse_kind(kind)?, strike, expiry)
                    .map_err(|e| CliError::Validation(format!("portfolio line {lineno}: {e}")))?,
            ),
        };
        positions.push((qty, instrument));
    }
    Portfolio::new(positions).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn cmd_pv(cfg: &Config, out_dir: &Path) -> Result<(), CliError> {
    let portfolio_path = cfg.get("pv", "portfolio")?;
    let text = fs::read_to_string(portfolio_path).map_err(|e| {
        CliError::Validation(format!("cannot read portfolio {portfolio_path}: {e}"))
    })?;
    let portfolio = parse_portfolio_csv(&text)?;
    let forecast = build_forecast(cfg)?;
    let (s0, r) = cfg.market()?;
    let s_z = cfg.get_f64("forecast", "s_z")?;
    let big_t = cfg.get_f64("forecast", "t_scale")?;
    let mean_rate = cfg.opt_f64("forecast", "mean_rate")?.unwrap_or(0.0);
    let ln = lognormal_price_forecast(s0, s_z, mean_rate, &forecast, big_t)?;
    let n_samples = cfg.get_usize("pv", "n_samples")?;
    let seed = derive_seed(cfg.seed()?, "pv");
    let report = portfolio_pv(&portfolio, &ln, r, n_samples, seed)?;
    let closed_form = portfolio_pv_closed_form(&portfolio, &ln, r)?;
    println!(
        "portfolio PV: mean = {:.6e}, variance = {:.6e} ({} samples)",
        report.mean_pv, report.var_pv, report.n_samples
    );
    let doc = json!({
        "config": cfg.json_value(),
        "monte_carlo": report,
        "closed_form_check": closed_form,
    });
    write_artifact(
        out_dir,
        "pv.json",
        serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_verify(
    suite: &str,
    cfg: Option<&Config>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let results = acceptance::run_suite(suite).map_err(CliError::Validation)?;
    for r in &results {
        println!(
            "[{}] {}: measured = {:.6e}, bound = {:.6e} — {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.criterion_id,
            r.measured,
            r.bound,
            r.description
        );
    }
    let doc = json!({
        "suite": suite,
        "config": cfg.map(|c| c.json_value()).unwrap_or(serde_json::Value::Null),
        "results": results,
    });
    write_artifact(
        out_dir,
        &format!("verify_{suite}.json"),
        serde_json::to_string_pretty(&doc).unwrap().as_bytes(),
    )?;
    let failures = results.iter().filter(|r| !r.pass).count();
    if failures > 0 {
        return Err(CliError::AcceptanceFailure(format!(
            "{failures} criterion(s) failed in suite `{suite}`"
        )));
    }
    println!("suite `{suite}`: all {} criteria passed", results.len());
    Ok(())
}
