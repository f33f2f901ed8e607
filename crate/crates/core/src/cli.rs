//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analytics::{classify, LaplaceProfile, Verdict};
use crate::backward_tree::{stability_diagnostic, BackwardOptions, Stability};
use crate::config::{Config, ModelSpec};
use crate::error::{Error, Result};
use crate::report::RunReport;
use crate::simulator::run_replicates;
use crate::statistics::estimate::EstimateOptions;
use crate::statistics::experiments::series;
use crate::statistics::{boundary_decay_test, fit_gumbel, intensity_check, speed_fit_clustered};
use crate::table::{backward_table, generations_table, merge, Table};

#[derive(Debug, Parser)]
#[command(name = "brw-lab", version, about = "Branching random walks from exponential Poisson seeds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Replace scenario.seed.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roots, speeds and persistence verdicts.
    Classify,
    /// Simulate replicates and write generations.csv.
    Simulate,
    /// Backward-tree stability diagnostic.
    Backward,
    /// Exponential-moment decay for BBM with c = sqrt 2.
    Boundary {
        /// Allow c != sqrt 2.
        #[arg(long)]
        negative_control: bool,
    },
    /// Concatenate CSV files with a common header.
    ReportMerge {
        inputs: Vec<PathBuf>,
    },
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<Config> {
    let text = fs::read_to_string(path)?;
    let mut cfg: Config = text.parse()?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_report(report: &RunReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("report.txt"), report.to_string())?;
    report.table().write(fs::File::create(out.join("report.csv"))?)
}

pub fn cmd_classify(cfg: &Config) -> Result<RunReport> {
    let model = cfg.model.build()?;
    let profile = LaplaceProfile::compute(&model)?;
    let mut r = RunReport::new("classify", cfg);
    r.push("profile", "phi0", profile.phi0);
    r.push("profile", "criticality", profile.criticality);
    r.push("profile", "beta0", profile.beta0);
    r.push("profile", "roots", format!("{:?}", profile.roots));
    r.push("profile", "k_st", format!("{:?}", profile.k_st));
    if profile.roots.is_empty() {
        r.note("no exponential equilibrium intensity: phi has no root");
    }
    for (i, &l) in profile.roots.iter().enumerate() {
        let c = classify(&model, l)?;
        let key = format!("root_{}", i + 1);
        r.push(&key, "lambda", l);
        r.push(&key, "phi_prime", model.phi_prime(l));
        r.push(&key, "product", c.product);
        r.push(&key, "verdict", c.verdict);
        if c.verdict == Verdict::Inconclusive {
            r.note(format!(
                "lambda = {l} is a boundary root; the criterion is silent there (for BBM with drift -sqrt 2 the dynamics dies out locally)"
            ));
        }
    }
    Ok(r)
}

pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<RunReport> {
    let raw = cfg.scenario()?;
    let verdict = classify(&raw.model, raw.lambda).map(|c| c.verdict);
    let sc = raw.prepare()?;
    let runs = run_replicates(&sc)?;
    fs::create_dir_all(out)?;
    generations_table(&runs, sc.bins).write(fs::File::create(out.join("generations.csv"))?)?;

    let mut r = RunReport::new("simulate", cfg);
    r.push("scenario", "lambda", sc.lambda);
    r.push("scenario", "engine", sc.engine);
    r.push("scenario", "mirrored", sc.mirrored);
    if sc.mirrored {
        r.note("lambda < 0: space was reflected and positions are reported in reflected coordinates");
    }
    if sc.engine == crate::simulator::Engine::Forward {
        r.push("scenario", "seed_window", format!("[{}; {}]", sc.seed_window.0, sc.seed_window.1));
    }
    match verdict {
        Ok(v) => r.push("scenario", "verdict", v),
        Err(e) => r.note(format!("no verdict: {e}")),
    }
    let last = sc.n_gens as usize;
    let empty = runs.iter().filter(|rows| rows[last].count_in_obs == 0).count();
    r.push("final", "replicates_empty_in_window", empty);
    r.push("final", "replicates", runs.len());
    let chk = intensity_check(&runs, &sc, last);
    r.push("final", "bins_within_4se", format!("{}/{}", chk.within, chk.expected.len()));
    let maxima: Vec<f64> = runs.iter().filter_map(|rows| rows[last].max_pos).collect();
    if maxima.len() >= 200 {
        match fit_gumbel(&maxima, sc.lambda) {
            Ok(g) => {
                r.push("gumbel", "c_hat", g.c_hat);
                r.push("gumbel", "ks_d", g.ks.d);
                r.push("gumbel", "ks_p", g.ks.p);
            }
            Err(e) => r.note(format!("gumbel fit skipped: {e}")),
        }
    }
    let n_min = (f64::from(sc.n_gens) / 2.0).floor();
    for (name, pick) in [("max_pos", 0), ("leader_root_pos", 1)] {
        let s = series(&runs, |g| if pick == 0 { g.max_pos } else { g.leader_root_pos });
        match speed_fit_clustered(&s, n_min) {
            Ok(f) => {
                r.push(name, "slope", f.slope);
                r.push(name, "stderr", f.stderr);
            }
            Err(e) => r.note(format!("{name} speed fit skipped: {e}")),
        }
    }
    write_report(&r, out)?;
    Ok(r)
}

pub fn cmd_backward(cfg: &Config, out: &Path) -> Result<RunReport> {
    let model = cfg.model.build()?;
    let lambda = cfg.lambda.resolve(&model)?;
    let t = &cfg.test;
    let rep = stability_diagnostic(&model, lambda, t.depth, t.a, t.reps as usize, cfg.seed, &BackwardOptions::default())?;
    fs::create_dir_all(out)?;
    backward_table(&rep).write(fs::File::create(out.join("backward.csv"))?)?;
    let mut r = RunReport::new("backward", cfg);
    r.push("backward", "lambda", lambda);
    r.push("backward", "verdict", rep.verdict);
    if let Some((slope, se)) = rep.slope {
        r.push("backward", "log_p_slope", slope);
        r.push("backward", "log_p_slope_se", se);
    }
    r.push("backward", "hits_total", rep.hits.iter().sum::<u64>());
    r.push("backward", "truncated", rep.truncated);
    for (n, p) in rep.p_hat.iter().enumerate() {
        r.push("p_hat", &format!("n_{}", n + 1), p);
    }
    if rep.truncated > 0 && rep.verdict == Stability::Inconclusive {
        r.note(format!("{} trees hit the cousin cap; truncated levels were counted as hits", rep.truncated));
    }
    write_report(&r, out)?;
    Ok(r)
}

/// The drift of unit-time BBM on the boundary: c = sqrt 2.
const BOUNDARY_TOL: f64 = 1e-9;

pub fn cmd_boundary(cfg: &Config, out: &Path, negative_control: bool) -> Result<RunReport> {
    let drift = match cfg.model {
        ModelSpec::Bbm { drift } => drift,
        _ => return Err(Error::config(0, "boundary needs model.kind = bbm")),
    };
    if (drift + std::f64::consts::SQRT_2).abs() > BOUNDARY_TOL && !negative_control {
        return Err(Error::config(0, format!("boundary pins bbm_drift = -sqrt 2, got {drift}; pass --negative-control to override")));
    }
    let model = cfg.model.build()?;
    let t = match cfg.test.t {
        Some(t) => t,
        None => cfg.lambda.resolve(&model)?,
    };
    let opts = EstimateOptions { eps_prune: cfg.eps_prune, node_cap: cfg.test.population_cap.min(EstimateOptions::default().node_cap) };
    let rep = boundary_decay_test(&model, t, &cfg.test.n_list, cfg.test.reps, cfg.seed, &opts)?;
    let mut r = RunReport::new("boundary", cfg);
    r.push("boundary", "t", t);
    r.push("boundary", "phi_t", model.log_laplace(t));
    for p in &rep.points {
        let key = format!("n_{}", p.n);
        r.push(&key, "c_hat", p.c_hat);
        r.push(&key, "ci_lo", p.ci.0);
        r.push(&key, "ci_hi", p.ci.1);
    }
    r.push("boundary", "trend_z", rep.trend_z);
    r.push("boundary", "verdict", rep.verdict);
    write_report(&r, out)?;
    Ok(r)
}

pub fn cmd_report_merge(inputs: &[PathBuf], out: &Path) -> Result<Table> {
    let tables = inputs
        .iter()
        .map(|p| Table::parse(&fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    let merged = merge(&tables)?;
    fs::create_dir_all(out)?;
    merged.write(fs::File::create(out.join("merged.csv"))?)?;
    Ok(merged)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    if let Command::ReportMerge { inputs } = &cli.command {
        let t = cmd_report_merge(inputs, &out)?;
        println!("merged {} rows into {}", t.rows.len(), out.join("merged.csv").display());
        return Ok(());
    }
    let path = cli.config.as_deref().ok_or_else(|| Error::config(0, "--config is required"))?;
    let cfg = load_config(path, cli.seed_override)?;
    let report = match &cli.command {
        Command::Classify => {
            let r = cmd_classify(&cfg)?;
            if cli.out.is_some() {
                write_report(&r, &out)?;
            }
            r
        }
        Command::Simulate => cmd_simulate(&cfg, &out)?,
        Command::Backward => cmd_backward(&cfg, &out)?,
        Command::Boundary { negative_control } => cmd_boundary(&cfg, &out, *negative_control)?,
        Command::ReportMerge { .. } => unreachable!(),
    };
    print!("{report}");
    Ok(())
}

/// Parse arguments and run; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let result = match pool.build() {
        Ok(p) => p.install(|| dispatch(&cli)),
        Err(e) => Err(Error::OutOfDomain(e.to_string())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
