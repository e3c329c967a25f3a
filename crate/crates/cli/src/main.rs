//! Command-line front end: scenario simulation, closed-loop runs over seed
//! lists, fixed-point rate recovery, parameter sweeps, and report
//! aggregation. Exit codes: 0 success, 1 config error, 2 runtime failure.

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use sirmpc_core::closed_loop::run_closed_loop;
use sirmpc_core::config::RunConfig;
use sirmpc_core::error::{Error, Result};
use sirmpc_core::estimators::EstimatorVariant;
use sirmpc_core::identify::{recover_beta_report, SmoothSeries};
use sirmpc_core::metrics::{aggregate, MetricsReport};
use sirmpc_core::sir::{fmt_f64, observe_infected, simulate, SirState};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(
    name = "sirmpc",
    version,
    about = "Closed-loop SIR epidemic control with neural state estimation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the configured scenario without estimation or control.
    Simulate(CommonOpts),
    /// Run the full closed loop for each seed and aggregate metrics.
    Run(CommonOpts),
    /// Recover the transmission and recovery rates from a noiseless
    /// trajectory via the fixed-point identifier.
    Recover(CommonOpts),
    /// Closed-loop runs over the configured (gamma, R0, kappa, variant) grid.
    Sweep(CommonOpts),
    /// Aggregate metrics.txt files found under run directories.
    Report(CommonOpts),
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML config file; omitted means built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds; omitted means the config's seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Estimator variant override (pinns, ls-pinns, si-pinns, gen-pinns,
    /// gen-ls-pinns, gen-s-pinns).
    #[arg(long)]
    variant: Option<String>,
    /// Feed true states and parameters to the MPC; train estimators offline.
    #[arg(long)]
    ideal_mpc: bool,
    /// Disable observation noise (observed infected equals truth).
    #[arg(long)]
    noiseless: bool,
}

fn main() {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Simulate(opts) => cmd_simulate(&opts),
        Cmd::Run(opts) => cmd_run(&opts),
        Cmd::Recover(opts) => cmd_recover(&opts),
        Cmd::Sweep(opts) => cmd_sweep(&opts),
        Cmd::Report(opts) => cmd_report(&opts),
    };
    if let Err(e) = res {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn load_config(opts: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match &opts.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &opts.variant {
        cfg.scenario.variant = EstimatorVariant::parse(name)?;
    }
    if opts.noiseless {
        cfg.scenario.noiseless = true;
    }
    if opts.ideal_mpc {
        cfg.scenario.ideal_mpc = true;
    }
    Ok(cfg)
}

fn seeds(opts: &CommonOpts, cfg: &RunConfig) -> Vec<u64> {
    if opts.seeds.is_empty() {
        vec![cfg.scenario.seed]
    } else {
        opts.seeds.clone()
    }
}

fn scenario_hash(cfg: &RunConfig, seeds: &[u64]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(cfg.to_toml_string()?.as_bytes());
    for s in seeds {
        hasher.update(s.to_le_bytes());
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_manifest(dir: &Path, cfg: &RunConfig, seeds: &[u64], failures: &[u64]) -> Result<()> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let seeds_str: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let failed_str: Vec<String> = failures.iter().map(u64::to_string).collect();
    let text = format!(
        "version={}\ncreated_at={created}\nscenario_hash={}\nseeds={}\nfailed_seeds={}\n",
        env!("CARGO_PKG_VERSION"),
        scenario_hash(cfg, seeds)?,
        seeds_str.join(","),
        failed_str.join(","),
    );
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

/// Uncontrolled trajectory with observations, as `trajectory.csv`.
fn cmd_simulate(opts: &CommonOpts) -> Result<()> {
    let cfg = load_config(opts)?;
    let seed = seeds(opts, &cfg)[0];
    let scn = cfg.scenario(seed)?;
    let horizon = scn.schedule.final_time;
    let controls = vec![0.0; horizon];
    let traj = simulate(
        SirState::early_epidemic(scn.i0)?,
        scn.params,
        &controls,
        horizon,
    )?;
    let mut rng = scn.seed.stream("obs");
    let mut obs = Vec::with_capacity(horizon + 1);
    for st in &traj.states {
        obs.push(if scn.noiseless {
            st.i
        } else {
            observe_infected(st.i, scn.kappa, scn.n_pop, &mut rng)?
        });
    }
    fs::create_dir_all(&opts.out)?;
    let path = opts.out.join("trajectory.csv");
    fs::write(&path, traj.to_csv(Some(&obs)))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(opts: &CommonOpts) -> Result<()> {
    let cfg = load_config(opts)?;
    let seed_list = seeds(opts, &cfg);
    fs::create_dir_all(&opts.out)?;

    let results: Vec<(u64, Result<MetricsReport>)> = seed_list
        .par_iter()
        .map(|&seed| {
            let run = cfg.scenario(seed).and_then(|scn| {
                let rec = run_closed_loop(&scn)?;
                rec.write_outputs(&opts.out.join(format!("seed_{seed}")))?;
                Ok(rec.metrics)
            });
            (seed, run)
        })
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (seed, res) in results {
        match res {
            Ok(m) => reports.push(m),
            Err(e) => {
                eprintln!("seed {seed} failed: {e}");
                failures.push(seed);
                first_err.get_or_insert(e);
            }
        }
    }
    write_manifest(&opts.out, &cfg, &seed_list, &failures)?;
    if reports.is_empty() {
        return Err(first_err.unwrap_or_else(|| Error::config("no seeds given")));
    }
    let agg = aggregate_reports(&reports)?;
    let path = opts.out.join("aggregate.txt");
    fs::write(&path, &agg)?;
    print!("{agg}");
    println!("wrote {}", path.display());
    Ok(())
}

/// Trimmed mean and standard deviation per metric key across seeds.
fn aggregate_reports(reports: &[MetricsReport]) -> Result<String> {
    let mut by_key: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for rep in reports {
        for (k, v) in rep.iter() {
            by_key.entry(k).or_default().push(v);
        }
    }
    let mut out = String::new();
    for (key, values) in by_key {
        let a = aggregate(&values, true)?;
        out.push_str(&format!(
            "{key}_mean={}\n{key}_std={}\n{key}_n={}\n",
            fmt_f64(a.mean),
            fmt_f64(a.std),
            a.n_used
        ));
    }
    Ok(out)
}

fn cmd_recover(opts: &CommonOpts) -> Result<()> {
    let cfg = load_config(opts)?;
    let scn = cfg.scenario(seeds(opts, &cfg)[0])?;
    let days = scn.schedule.final_time;
    let controls = vec![0.0; days];
    let series = SmoothSeries::from_fine_resimulation(
        SirState::early_epidemic(scn.i0)?,
        scn.params,
        &controls,
        days,
        0.01,
    )?;
    // The damped fixed-point map is only contractive on part of the epidemic
    // (it is marginal during pure exponential growth), so probe each interior
    // day and keep the ones that converge.
    let t_set: Vec<usize> = series
        .interior_days()
        .filter(|&t| recover_beta_report(&series, &controls, scn.params.r0(), &[t]).is_ok())
        .collect();
    if t_set.is_empty() {
        return Err(Error::NoConvergence {
            iters: 0,
            delta: f64::NAN,
        });
    }
    let report = recover_beta_report(&series, &controls, scn.params.r0(), &t_set)?;
    println!("beta={}", fmt_f64(report.beta));
    println!("gamma={}", fmt_f64(report.gamma));
    fs::create_dir_all(&opts.out)?;
    let mut csv = String::from("day,beta,iterations,residual\n");
    for r in &report.per_t {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.day,
            fmt_f64(r.beta),
            r.iterations,
            fmt_f64(r.residual)
        ));
    }
    fs::write(opts.out.join("recovery.csv"), csv)?;
    Ok(())
}

fn cmd_sweep(opts: &CommonOpts) -> Result<()> {
    let cfg = load_config(opts)?;
    let grid = &cfg.sweep;
    let mut cells = Vec::new();
    for &gamma in &grid.gammas {
        for &r0 in &grid.r0s {
            for &kappa in &grid.kappas {
                for &variant in &grid.variants {
                    cells.push((gamma, r0, kappa, variant));
                }
            }
        }
    }
    if cells.is_empty() {
        println!("empty sweep grid; nothing to do");
        return Ok(());
    }
    if cells.len() > grid.max_runs {
        return Err(Error::config(format!(
            "sweep of {} cells exceeds the budget of {}",
            cells.len(),
            grid.max_runs
        )));
    }

    let rows: Vec<Result<String>> = cells
        .par_iter()
        .map(|&(gamma, r0, kappa, variant)| {
            let mut cell_cfg = cfg.clone();
            cell_cfg.scenario.gamma = gamma;
            cell_cfg.scenario.beta = r0 * gamma;
            cell_cfg.scenario.variant = variant;
            cell_cfg.scenario.known_gamma = None;
            cell_cfg.scenario.known_r0 = None;
            cell_cfg.noise.kappa = kappa;
            cell_cfg.mpc.s_star = 1.0 / r0;
            let scn = cell_cfg.scenario(cell_cfg.scenario.seed)?;
            let rec = run_closed_loop(&scn)?;
            let mut out = String::new();
            for (metric, value) in rec.metrics.iter() {
                out.push_str(&format!(
                    "{gamma},{r0},{kappa},{},{metric},{}\n",
                    variant.name(),
                    fmt_f64(value)
                ));
            }
            Ok(out)
        })
        .collect();

    let mut csv = String::from("gamma,r0,kappa,variant,metric,value\n");
    let mut ok = 0usize;
    let mut first_err = None;
    for row in rows {
        match row {
            Ok(r) => {
                csv.push_str(&r);
                ok += 1;
            }
            Err(e) => {
                eprintln!("sweep cell failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if ok == 0 {
        return Err(first_err.unwrap());
    }
    fs::create_dir_all(&opts.out)?;
    let path = opts.out.join("sweep.csv");
    fs::write(&path, csv)?;
    println!("wrote {} ({ok}/{} cells)", path.display(), cells.len());
    Ok(())
}

/// Scan `--out` for per-run `metrics.txt` files and aggregate them.
fn cmd_report(opts: &CommonOpts) -> Result<()> {
    let mut reports = Vec::new();
    for entry in fs::read_dir(&opts.out)? {
        let path = entry?.path().join("metrics.txt");
        if path.is_file() {
            reports.push(MetricsReport::parse_kv(&fs::read_to_string(path)?)?);
        }
    }
    if reports.is_empty() {
        return Err(Error::config(format!(
            "no metrics.txt found under {}",
            opts.out.display()
        )));
    }
    let agg = aggregate_reports(&reports)?;
    print!("{agg}");
    fs::write(opts.out.join("aggregate.txt"), &agg)?;
    Ok(())
}
