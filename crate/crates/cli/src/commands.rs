use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ncdoa::array_model::{build_grid_manifold, generate_snapshot, make_ula, uniform_grid, PhaseMode, Scenario};
use ncdoa::baselines::{run_music, run_sparsity_only, MusicOptions};
use ncdoa::harness::{
    estimate_all, method_slug, run_sweep, write_aggregate_csv, write_results_csv, write_spectra, SweepConfig,
};
use ncdoa::pipeline::{run_proposed1, run_proposed2, EstimatorParams, Method, SpectrumEstimate};
use ncdoa::solver::SolverOptions;

use crate::manifest::Manifest;
use crate::plot::{line_chart, Series};
use crate::{Failure, RunArgs};

const DEFAULT_CONFIG: &str = include_str!("../configs/fig1.toml");

type Outcome = Result<(), Failure>;
type Estimates = Vec<(Method, Result<SpectrumEstimate, String>)>;

fn load_config(args: &RunArgs, required: bool) -> Result<SweepConfig, Failure> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("--config {}: {e}", path.display())))?,
        None if required => return Err(Failure::Usage("--config is required for this command".into())),
        None => DEFAULT_CONFIG.to_string(),
    };
    let mut cfg = SweepConfig::from_toml_str(&text)?;
    if !args.snr.is_empty() {
        cfg.sweep.snr_db = args.snr.clone();
    }
    if let Some(seed) = args.seed {
        cfg.sweep.base_seed = seed;
    }
    if let Some(n) = args.trials {
        cfg.sweep.n_trials = n;
    }
    if !args.methods.is_empty() {
        cfg.sweep.methods = args.methods.clone();
    }
    if let Some(step) = args.grid_step {
        cfg.grid.step_deg = step;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Writes the effective config and returns its text.
fn write_effective_config(dir: &Path, cfg: &SweepConfig) -> Result<String, Failure> {
    let text = cfg.to_toml_string();
    fs::write(dir.join("config.toml"), &text)?;
    Ok(text)
}

fn method_names(cfg: &SweepConfig) -> Vec<String> {
    cfg.sweep.methods.iter().map(|m| m.name().to_string()).collect()
}

pub fn sweep(args: &RunArgs) -> Outcome {
    let cfg = load_config(args, true)?;
    prepare_out(&args.out)?;
    let text = write_effective_config(&args.out, &cfg)?;
    let out = run_sweep(&cfg)?;

    let mut manifest = Manifest::new("sweep", &text, cfg.sweep.base_seed, cfg.sweep.snr_db.clone(), method_names(&cfg));
    manifest.artifacts.push("config.toml".into());
    write_results_csv(BufWriter::new(fs::File::create(args.out.join("results.csv"))?), &out.trials, cfg.num_sources())?;
    manifest.artifacts.push("results.csv".into());
    write_aggregate_csv(BufWriter::new(fs::File::create(args.out.join("aggregate.csv"))?), &out.report)?;
    manifest.artifacts.push("aggregate.csv".into());
    if cfg.sweep.keep_spectra {
        let n = write_spectra(&args.out.join("spectra"), &out.trials)?;
        manifest.artifacts.push(format!("spectra/ ({n} files)"));
    }
    if args.plots {
        let series: Vec<Series> = cfg
            .sweep
            .methods
            .iter()
            .map(|&m| Series {
                label: m.name().into(),
                points: cfg
                    .sweep
                    .snr_db
                    .iter()
                    .filter_map(|&snr| out.report.cell(m, snr).map(|c| (snr, c.rmse)))
                    .collect(),
            })
            .collect();
        fs::write(args.out.join("rmse.svg"), line_chart("RMSE vs SNR", "SNR (dB)", "RMSE (deg)", &series, true))?;
        manifest.artifacts.push("rmse.svg".into());
    }
    manifest.write(&args.out)?;

    println!("{:<13} {:>7} {:>12} {:>9}", "method", "snr_db", "rmse_deg", "failures");
    for c in &out.report.cells {
        println!("{:<13} {:>7} {:>12.5} {:>5}/{}", c.method.name(), c.snr_db, c.rmse, c.failures, c.n_trials);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

/// One snapshot through every selected method; writes spectrum CSVs and
/// returns the estimates in method order.
fn single_run(
    command: &'static str,
    args: &RunArgs,
    cfg: &SweepConfig,
) -> Result<(Estimates, Vec<f64>, Manifest), Failure> {
    if cfg.sweep.snr_db.len() != 1 && !args.snr.is_empty() {
        return Err(Failure::Usage("--snr takes a single value for this command".into()));
    }
    let snr = cfg.sweep.snr_db[0];
    let seed = cfg.sweep.base_seed;
    let scenario = cfg.scenario(snr)?;
    let manifold = build_grid_manifold(&scenario.geometry, &cfg.grid.angles()?)?;
    let snapshot = generate_snapshot(&scenario, seed)?;
    let truth = snapshot.truth.clone().map(|t| t.doas).unwrap_or_default();

    prepare_out(&args.out)?;
    let text = write_effective_config(&args.out, cfg)?;
    let mut manifest = Manifest::new(command, &text, seed, vec![snr], method_names(cfg));
    manifest.artifacts.push("config.toml".into());

    let mut results = Vec::new();
    for (method, est, _ms) in estimate_all(cfg, &scenario, &manifold, &snapshot) {
        if let Ok(spec) = &est {
            let name = format!("spectrum_{}.csv", method_slug(method));
            spec.write_csv(BufWriter::new(fs::File::create(args.out.join(&name))?))?;
            manifest.artifacts.push(name);
        }
        results.push((method, est));
    }
    if args.plots {
        let series: Vec<Series> = results
            .iter()
            .filter_map(|(m, r)| r.as_ref().ok().map(|s| (m, s)))
            .map(|(m, s)| {
                let peak = s.magnitudes.iter().cloned().fold(0.0, f64::max);
                let scale = if peak > 0.0 { peak } else { 1.0 };
                Series {
                    label: m.name().into(),
                    points: s.grid_degrees.iter().zip(&s.magnitudes).map(|(&a, &v)| (a, v / scale)).collect(),
                }
            })
            .collect();
        let title = format!("Normalised spectra, SNR {snr} dB, seed {seed}");
        fs::write(args.out.join("spectra.svg"), line_chart(&title, "angle (deg)", "magnitude", &series, false))?;
        manifest.artifacts.push("spectra.svg".into());
    }
    Ok((results, truth, manifest))
}

fn report_errors(results: &Estimates) -> Outcome {
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(m, r)| r.as_ref().err().map(|e| format!("{m}: {e}")))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(failed.join("; ")))
    }
}

pub fn estimate(args: &RunArgs) -> Outcome {
    let cfg = load_config(args, false)?;
    let (results, truth, mut manifest) = single_run("estimate", args, &cfg)?;
    let q = cfg.num_sources();
    let mut out = BufWriter::new(fs::File::create(args.out.join("doas.csv"))?);
    let cols: Vec<String> = (1..=q).map(|k| format!("doa_{k}")).collect();
    writeln!(out, "method,{},status", cols.join(","))?;
    println!("true DOAs: {truth:?}");
    for (method, r) in &results {
        match r {
            Ok(spec) => {
                let mut doas: Vec<String> = spec.doas().iter().map(|d| format!("{d:?}")).collect();
                doas.resize(q, String::new());
                let status = if spec.shortfall { "shortfall" } else { "ok" };
                writeln!(out, "{method},{},{status}", doas.join(","))?;
                println!("{:<13} {:?}{}", method.name(), spec.doas(), if spec.shortfall { " (shortfall)" } else { "" });
            }
            Err(_) => {
                writeln!(out, "{method},{}error", ",".repeat(q))?;
            }
        }
    }
    out.flush()?;
    manifest.artifacts.push("doas.csv".into());
    manifest.write(&args.out)?;
    report_errors(&results)
}

pub fn spectra(args: &RunArgs) -> Outcome {
    let cfg = load_config(args, true)?;
    let (results, _, manifest) = single_run("spectra", args, &cfg)?;
    manifest.write(&args.out)?;
    for (method, r) in &results {
        if r.is_ok() {
            println!("{:<13} {}", method.name(), args.out.join(format!("spectrum_{}.csv", method_slug(*method))).display());
        }
    }
    report_errors(&results)
}

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check_exact(name: &str, est: ncdoa::error::Result<SpectrumEstimate>, truth: &[f64]) -> Check {
    match est {
        Ok(s) => {
            let doas = s.doas();
            let pass = doas.len() == truth.len() && doas.iter().zip(truth).all(|(a, b)| (a - b).abs() < 1e-9);
            Check { name: name.into(), pass, detail: format!("estimated {doas:?}, true {truth:?}") }
        }
        Err(e) => Check { name: name.into(), pass: false, detail: e.to_string() },
    }
}

fn run_checks() -> Result<Vec<Check>, Failure> {
    let opts = SolverOptions::default();
    let params = EstimatorParams::default();
    let mut checks = Vec::new();

    let g = make_ula(24, 0.5, &[6, 6, 6, 6])?;
    let grid = uniform_grid(-60.0, 60.0, 1.0)?;
    let m = build_grid_manifold(&g, &grid)?;
    for (k, theta) in [-37.0, 0.0, 22.0].into_iter().enumerate() {
        let s = Scenario::new(g.clone(), vec![theta], f64::INFINITY)?;
        let snap = generate_snapshot(&s, k as u64)?;
        let truth = [theta];
        checks.push(check_exact(&format!("one source at {theta}, Proposed1"), run_proposed1(&snap, &m, &params, 1, &opts), &truth));
        checks.push(check_exact(&format!("one source at {theta}, Proposed2"), run_proposed2(&snap, &m, &params, 1, &opts), &truth));
        checks.push(check_exact(
            &format!("one source at {theta}, SparsityOnly"),
            run_sparsity_only(&snap, &m, &params, 1, &opts),
            &truth,
        ));
        checks.push(check_exact(
            &format!("one source at {theta}, MUSIC"),
            run_music(&snap, &g, &grid, &MusicOptions::new(1)),
            &truth,
        ));
    }

    let s = Scenario::new(g.clone(), vec![0.0, 15.0], f64::INFINITY)?;
    let snap = generate_snapshot(&s, 3)?;
    checks.push(check_exact("two sources at 0 and 15, Proposed2", run_proposed2(&snap, &m, &params, 2, &opts), &[0.0, 15.0]));

    // Phase sign: two halves with a known offset.
    let g2 = make_ula(12, 0.5, &[6, 6])?;
    let m2 = build_grid_manifold(&g2, &uniform_grid(-30.0, 30.0, 1.0)?)?;
    let s2 = Scenario::new(g2, vec![7.0], f64::INFINITY)?.with_phase_mode(PhaseMode::Fixed(vec![0.0, 0.7]))?;
    let snap2 = generate_snapshot(&s2, 1)?;
    let check = match run_proposed2(&snap2, &m2, &params, 1, &opts) {
        Ok(est) => {
            let p = est.phases.map(|p| p.phases).unwrap_or_default();
            let diff = p.get(1).zip(p.first()).map(|(b, a)| b - a).unwrap_or(f64::NAN);
            Check { name: "phase offset 0.7 rad recovered".into(), pass: (diff - 0.7).abs() < 0.05, detail: format!("estimated {diff:.4}") }
        }
        Err(e) => Check { name: "phase offset 0.7 rad recovered".into(), pass: false, detail: e.to_string() },
    };
    checks.push(check);
    Ok(checks)
}

pub fn selftest(out: &Path) -> Outcome {
    let checks = run_checks()?;
    prepare_out(out)?;
    let mut log = BufWriter::new(fs::File::create(out.join("selftest.txt"))?);
    let mut failed = 0;
    for c in &checks {
        let line = format!("{} {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        println!("{line}");
        writeln!(log, "{line}")?;
        failed += usize::from(!c.pass);
    }
    log.flush()?;
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{failed} of {} checks failed", checks.len())))
    }
}
