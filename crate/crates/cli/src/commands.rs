use std::path::Path;
use std::sync::Arc;

use osband_id::calibration::{size_power_study, wald_calibration_test, ForecastSeries, Scenario};
use osband_id::catalog::{parse_key, Functional, SharedIdFn};
use osband_id::distributions::{Distribution, ScalarDistribution};
use osband_id::osband::{grid_points, perturbation_battery, sweep_recover_h, MatrixTransform, DEFAULT_RESIDUAL_TOL};
use osband_id::verifier::{
    atoms_family, bivariate_family, convex_level_sets_check, default_family, es_witness_search, gaussian_family,
    quantile_trichotomy, remark1_counterexample_check, scalar_family, symmetric_class_demo, verify_identification,
    Exclusion, Family, MonteCarloConfig, VerificationReport, VerifyConfig, XGrid,
};
use osband_id::zestimate::{z_estimate, Sample, DEFAULT_TOL};
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::io::{emit, read_json, read_table, to_json};
use crate::{Check, Cli, Command, Format, RecoverArgs, VerifyArgs};

pub fn run(cli: &Cli) -> CliResult<()> {
    let out = cli.common.output.as_deref();
    let seed = cli.common.seed;
    let tol = cli.common.tol;
    if let Some(t) = tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("--tol must be positive, got {t}")));
        }
    }
    match &cli.command {
        Command::Estimate { functional, input } => estimate(functional, input, tol, seed, out),
        Command::Backtest { functional, input, transform, level } => {
            backtest(functional, input, transform.as_deref(), *level, out)
        }
        Command::Verify(args) => verify(args, tol, seed, out),
        Command::RecoverH(args) => recover(args, tol, out),
        Command::PowerStudy { config, format } => power_study(config, *format, seed, out),
    }
}

fn lookup(key: &str) -> CliResult<SharedIdFn> {
    parse_key(key).map_err(|e| CliError::Config(e.to_string()))
}

fn estimate(key: &str, input: &Path, tol: Option<f64>, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    let v = lookup(key)?;
    let d = v.obs_dim();
    let data: Vec<f64> = read_table(input, d)?.into_iter().flatten().collect();
    let sample = Sample::new(data, d)?;
    let est = z_estimate(v.as_ref(), &sample, tol.unwrap_or(DEFAULT_TOL), seed.unwrap_or(0))?;
    emit(out, &to_json(&est))
}

fn backtest(key: &str, input: &Path, transform: Option<&str>, level: f64, out: Option<&Path>) -> CliResult<()> {
    let v = lookup(key)?;
    let (k, d) = (v.action_dim(), v.obs_dim());
    let rows = read_table(input, k + d)?;
    let forecasts = rows.iter().map(|r| r[..k].to_vec()).collect();
    let obs = rows.iter().flat_map(|r| r[k..].iter().copied()).collect();
    let series = ForecastSeries::new(forecasts, Sample::new(obs, d)?)?;
    let h = transform
        .map(|t| MatrixTransform::parse(t, v.dim()).map_err(|e| CliError::Config(e.to_string())))
        .transpose()?;
    let report = wald_calibration_test(v.as_ref(), &series, level, h.as_ref())?;
    emit(out, &to_json(&report))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FamilyFile {
    Named(Family),
    Laws(Vec<Distribution>),
}

fn family(name: &str, functional: &Functional) -> CliResult<Family> {
    let f = match name {
        "default" => default_family(functional)?,
        "gaussian" => gaussian_family()?,
        "scalar" => scalar_family()?,
        "bivariate" => bivariate_family()?,
        "atoms" => atoms_family()?,
        path => match read_json::<FamilyFile>(Path::new(path))? {
            FamilyFile::Named(f) => f,
            FamilyFile::Laws(laws) => Family { name: path.to_string(), laws },
        },
    };
    Ok(f)
}

fn exclusion(spec: &str) -> CliResult<Exclusion> {
    let bad = || CliError::Config(format!("--exclusion expects relative:c or distance:d, got `{spec}`"));
    let (kind, value) = spec.split_once(':').ok_or_else(bad)?;
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    match kind.trim() {
        "relative" => Ok(Exclusion::Relative(value)),
        "distance" => Ok(Exclusion::Distance(value)),
        _ => Err(bad()),
    }
}

fn print_summary(r: &VerificationReport) {
    eprintln!("{:<28} {:<10} {:>5} {:>8} {:>8} {:>6} {:>8} {:>10} {:>12} {:>12}",
        "key", "family", "laws", "forward", "reverse", "mc", "flagged", "unflagged", "worst zero", "min margin");
    let worst = r.worst_zero.as_ref().map_or("-".to_string(), |e| format!("{:.3e}", e.value));
    let margin = r.smallest_margin.as_ref().map_or("-".to_string(), |e| format!("{:.3e}", e.value));
    eprintln!("{:<28} {:<10} {:>5} {:>8} {:>8} {:>6} {:>8} {:>10} {:>12} {:>12}",
        r.key, r.family, r.distributions, r.forward_checked, r.reverse_checked, r.monte_carlo_checked,
        r.flagged, r.unflagged, worst, margin);
}

fn verify(args: &VerifyArgs, tol: Option<f64>, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    if let Some(check) = args.check {
        return named_check(check, args.functional.as_deref(), out);
    }
    let key = args.functional.as_deref().ok_or_else(|| CliError::Config("--functional is required".into()))?;
    let v = lookup(key)?;
    let functional = v
        .functional()
        .ok_or_else(|| CliError::Config(format!("{key} has no associated functional")))?;
    let family = family(&args.family, &functional)?;
    let grid = match &args.grid {
        Some(p) => read_json::<XGrid>(p)?,
        None => XGrid::around_truth(v.action_dim()),
    };
    let config = VerifyConfig {
        tol: tol.unwrap_or(VerifyConfig::default().tol),
        margin: args.margin,
        exclusion: exclusion(&args.exclusion)?,
        monte_carlo: args.draws.map(|draws| MonteCarloConfig { draws, seed: seed.unwrap_or(0), z: 3.0 }),
    };
    let report = verify_identification(v.as_ref(), &functional, &family, &grid, &config)?;
    print_summary(&report);
    emit(out, &to_json(&report))?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} unflagged failures", report.unflagged)))
    }
}

fn outcome(passed: bool, what: &str) -> CliResult<()> {
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{what} not reproduced")))
    }
}

fn named_check(check: Check, key: Option<&str>, out: Option<&Path>) -> CliResult<()> {
    match check {
        Check::Trichotomy => {
            let r = quantile_trichotomy()?;
            emit(out, &to_json(&r))?;
            outcome(r.reproduced, "quantile trichotomy")
        }
        Check::Remark1 => {
            let axes = vec![vec![-1.0, 0.0, 1.0], vec![-1.0, -0.5, 0.5, 3.0]];
            let y_grid: Vec<f64> = (0..=24).map(|i| -3.0 + 0.25 * i as f64).collect();
            let r = remark1_counterexample_check(&grid_points(&axes), &y_grid)?;
            emit(out, &to_json(&r))?;
            outcome(r.passed, "modified mean-variance counterexample")
        }
        Check::Symmetric => {
            let mut laws = Vec::new();
            for mu in [-1.0, 0.0, 2.0] {
                for s2 in [0.5, 1.0, 3.0] {
                    laws.push(ScalarDistribution::normal(mu, s2)?);
                }
                laws.push(ScalarDistribution::student_t(5.0, mu, 1.0)?);
                laws.push(ScalarDistribution::uniform(mu - 1.0, mu + 1.0)?);
            }
            let r = symmetric_class_demo(&laws)?;
            emit(out, &to_json(&r))?;
            outcome(r.passed, "symmetric class contrast")
        }
        Check::EsWitness => {
            let alpha = match key.map(lookup).transpose()?.and_then(|v| v.functional()) {
                Some(Functional::QuantileEs { alpha } | Functional::ExpectedShortfall { alpha }) => alpha,
                _ => 0.05,
            };
            let r = es_witness_search(alpha)?;
            emit(out, &to_json(&r))?;
            outcome(r.found, "expected shortfall witness")
        }
        Check::VarianceWitness => {
            let f = ScalarDistribution::normal(0.0, 1.0)?;
            let g = ScalarDistribution::normal(2.0, 1.0)?;
            let r = convex_level_sets_check(&Functional::Variance, &f, &g, &[0.5])?;
            emit(out, &to_json(&r))?;
            outcome(r.violated, "variance witness")
        }
    }
}

fn parse_axis(raw: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| CliError::Config(format!("bad --axis `{raw}`")))
}

fn recover(args: &RecoverArgs, tol: Option<f64>, out: Option<&Path>) -> CliResult<()> {
    let v = lookup(&args.base)?;
    let v_prime = lookup(&args.prime)?;
    let axes = args.axes.iter().map(|a| parse_axis(a)).collect::<CliResult<Vec<_>>>()?;
    if axes.len() != v.action_dim() {
        return Err(CliError::Config(format!("{} needs {} --axis values, got {}", args.base, v.action_dim(), axes.len())));
    }
    let grid = grid_points(&axes);
    let tol = tol.unwrap_or(DEFAULT_RESIDUAL_TOL);
    let sweep = match &args.battery {
        Some(path) => {
            let laws: Vec<Distribution> = read_json(path)?;
            sweep_recover_h(v.as_ref(), v_prime.as_ref(), &grid, |_| Ok(laws.clone()), tol)
        }
        None => {
            let functional = v
                .functional()
                .ok_or_else(|| CliError::Config(format!("{} has no associated functional", args.base)))?;
            let spread = args.spread;
            sweep_recover_h(v.as_ref(), v_prime.as_ref(), &grid, |x| Ok(perturbation_battery(&functional, x, spread)?.all()), tol)
        }
    };
    if let Some(p) = &args.csv {
        std::fs::write(p, sweep.to_csv()).map_err(|source| CliError::Io { path: p.display().to_string(), source })?;
    }
    emit(out, &to_json(&sweep))?;
    // a singular battery anywhere on the grid takes precedence over residual misfit
    if let Some(condition) = sweep.rows.iter().find_map(|r| r.singular_condition) {
        return Err(CliError::Core(osband_id::Error::SingularBattery { condition }));
    }
    if sweep.consistent {
        Ok(())
    } else {
        Err(CliError::Failed(format!("held-out residual {:e} exceeds {tol:e} or recovery failed", sweep.max_residual)))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyConfig {
    functional: String,
    transforms: Vec<String>,
    scenario: Scenario,
    n: usize,
    replications: usize,
    #[serde(default = "default_level")]
    level: f64,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_level() -> f64 {
    0.05
}

fn power_study(config: &Path, format: Format, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    let cfg: StudyConfig = read_json(config)?;
    let v = lookup(&cfg.functional)?;
    let h_list = cfg
        .transforms
        .iter()
        .map(|t| MatrixTransform::parse(t, v.dim()).map_err(|e| CliError::Config(e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    let seed = seed.or(cfg.seed).ok_or_else(|| CliError::Config("power-study needs a seed (--seed or config)".into()))?;
    let table = size_power_study(Arc::clone(&v), &h_list, &cfg.scenario, cfg.n, cfg.replications, cfg.level, seed)?;
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => to_json(&table),
    };
    emit(out, &text)
}
