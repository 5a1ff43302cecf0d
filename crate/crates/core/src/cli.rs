use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use jumpsde::config::{ExperimentConfig, SchemeChoice};
use jumpsde::harness::{self, Ladder};
use jumpsde::model::{compute_q, validate_jump, validate_params, JumpCoefficient, JumpRequirement, ProbeGrid, Regime};
use jumpsde::solver::{epsilon_upper, step_size_diagnostics, SolverConfig, Tjabem};
use jumpsde::{generate_bundle, Error};

const SEED_ENV: &str = "JUMPSDE_SEED";

#[derive(Parser, Debug)]
#[command(name = "jumpsde", version, about = "Positivity-preserving simulation of the Ait-Sahalia model with jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check parameters, jump coefficient and step sizes without simulating.
    Validate(Common),
    /// Dump one trajectory and its mesh.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        path_index: u64,
        /// Grid size; defaults to the coarsest ladder entry.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Strong-error ladder with fitted order.
    Convergence(Common),
    /// Percentages of non-positive values.
    Positivity {
        #[command(flatten)]
        common: Common,
        /// Comma-separated preset names.
        #[arg(long, value_delimiter = ',')]
        presets: Option<Vec<String>>,
        /// Comma-separated jump coefficients, e.g. `linear:-0.5,sine:1`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        families: Option<Vec<String>>,
    },
    /// Empirical moments of the running maximum (minimum for p < 0) and of X_T.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated moment orders.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Option<Vec<f64>>,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled preset (set1, set2); used when no --config is given.
    #[arg(long)]
    preset: Option<String>,
    /// Jump coefficient `family:param`, e.g. `linear:-0.5`.
    #[arg(long = "h", allow_hyphen_values = true)]
    h: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// tjabem, bem or both.
    #[arg(long)]
    scheme: Option<SchemeChoice>,
    /// Overrides the config seed and the JUMPSDE_SEED variable.
    #[arg(long)]
    seed: Option<u64>,
    /// 1000 paths and a ladder one level coarser.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    parallelism: Option<usize>,
    /// Dyadic ladder `lo:hi:ref` as exponents of two, e.g. `6:10:13`.
    #[arg(long)]
    ladder: Option<String>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => bail!(Error::Input("give either --config or --preset, not both".into())),
            (Some(path), None) => ExperimentConfig::from_file(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::preset("set1")?,
        };
        if let Some(h) = &self.h {
            let coeff: JumpCoefficient = h.parse()?;
            cfg.jump = jumpsde::config::JumpBlock::from_coefficient(&coeff)?;
        }
        if let Some(lambda) = self.lambda {
            cfg.model.lambda = lambda;
        }
        if let Some(s) = self.scheme {
            cfg.run.scheme = s;
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.run.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(n) = self.paths {
            cfg.run.n_paths = n;
        }
        if let Some(p) = self.parallelism {
            cfg.run.parallelism = p;
        }
        if let Some(spec) = &self.ladder {
            let ladder = parse_ladder(spec)?;
            cfg.ladder.m_list = ladder.m_list;
            cfg.ladder.m_ref = ladder.m_ref;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        cfg.run.fast |= self.fast;
        Ok(cfg.resolved()?)
    }
}

fn parse_ladder(spec: &str) -> Result<Ladder, Error> {
    let bad = || Error::Input(format!("ladder '{spec}' must be lo:hi:ref exponents with lo <= hi <= ref <= 30"));
    let parts: Vec<u32> = spec
        .split(':')
        .map(|s| s.trim().parse::<u32>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [lo, hi, reference] if lo <= hi && hi <= reference && reference <= 30 => Ok(Ladder::dyadic(lo, hi, reference)),
        _ => Err(bad()),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<Error>().is_some_and(Error::is_validation);
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Validate(common) => cmd_validate(&common.load()?),
        Command::Simulate { common, path_index, m } => cmd_simulate(&common.load()?, path_index, m),
        Command::Convergence(common) => cmd_convergence(&common.load()?),
        Command::Positivity {
            common,
            presets,
            families,
        } => {
            let mut cfg = common.load()?;
            if let Some(p) = presets {
                cfg.positivity.sets = p;
            }
            if let Some(f) = families {
                cfg.positivity.families = f;
            }
            cmd_positivity(&cfg)
        }
        Command::Moments { common, m, p } => {
            let mut cfg = common.load()?;
            if let Some(m) = m {
                cfg.moments.m = m;
            }
            if let Some(p) = p {
                cfg.moments.p = p;
            }
            cmd_moments(&cfg)
        }
    }
}

fn warn_step_size(q: f64, dt: f64) {
    if q * dt > SolverConfig::STEP_SAFETY_WARN {
        eprintln!(
            "warning: Q*dt = {} at dt = {dt} is above {}; values stay positive but error constants grow as Q*dt approaches 1",
            q * dt,
            SolverConfig::STEP_SAFETY_WARN
        );
    }
}

fn cmd_validate(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let params = &cfg.model;
    cfg.solver.validate().context("gate 'solver'")?;
    let regime = validate_params(params).context("gate 'parameters'")?;
    println!("regime: {:?}", regime.regime);
    if let Some(cap) = regime.critical_moment_cap {
        println!("critical moment cap: {cap}");
    }
    let q = compute_q(params)?;
    println!("Q: {q}");

    let h = cfg.jump_coefficient()?;
    let jc = validate_jump(&h, params, &ProbeGrid::default(), JumpRequirement::Positivity).context("gate 'jump growth'")?;
    println!("jump coefficient: {h}");
    println!("growth: mu = {}, r = {}", jc.mu, jc.r);
    println!(
        "band: [{}, {}] {}{}",
        jc.mu1,
        jc.mu2,
        if jc.band_holds() { "ok" } else { "FAILED" },
        if jc.sampled_only { " (probe grid only)" } else { "" }
    );

    println!("ladder (M_ref = {}):", cfg.ladder.m_ref);
    let mut step_failure = None;
    for &m in cfg.ladder.m_list.iter().chain(std::iter::once(&cfg.ladder.m_ref)) {
        let dt = params.horizon / m as f64;
        let ok = q * dt <= cfg.solver.step_safety;
        warn_step_size(q, dt);
        println!("  M = {m}: dt = {dt}, Q*dt = {} {}", q * dt, if ok { "ok" } else { "FAILED" });
        if !ok && step_failure.is_none() {
            step_failure = Some(m);
        }
    }
    cfg.ladder.m_list.first().context("empty ladder")?;

    if regime.regime == Regime::Supercritical {
        let p = cfg.diagnostics.p;
        let upper = epsilon_upper(params, p);
        let eps = cfg.diagnostics.epsilon.unwrap_or(0.5 * upper);
        println!("step-size diagnostics (advisory; p = {p}, epsilon = {eps}, admissible < {upper}):");
        for &m in &cfg.ladder.m_list {
            let d = step_size_diagnostics(params, q, params.horizon / m as f64, eps, p)?;
            println!(
                "  M = {m}: noise condition {}, drift condition {}",
                yes_no(d.noise_condition_ok),
                yes_no(d.drift_condition_ok)
            );
        }
    } else {
        println!("step-size diagnostics: not defined in the critical regime");
    }

    if !jc.band_holds() {
        validate_jump(&h, params, &ProbeGrid::default(), JumpRequirement::Convergence).context("gate 'jump band'")?;
    }
    if let Some(m) = step_failure {
        return Err(anyhow::Error::new(Error::StepGuard {
            q_dt: q * params.horizon / m as f64,
            safety: cfg.solver.step_safety,
        })
        .context("gate 'step size'"));
    }
    println!("all gates passed");
    Ok(ExitCode::SUCCESS)
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "holds"
    } else {
        "does not hold"
    }
}

fn out_dir(cfg: &ExperimentConfig) -> anyhow::Result<&Path> {
    let dir = cfg.output.dir.as_path();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: PathBuf, contents: &str) -> anyhow::Result<()> {
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'static str,
    global_seed: u64,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(cfg: &ExperimentConfig, name: &str, command: &'static str, body: T) -> anyhow::Result<()> {
    if !cfg.output.wants("json") {
        return Ok(());
    }
    let env = Envelope {
        command,
        global_seed: cfg.run.seed,
        config: cfg,
        body,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    write(out_dir(cfg)?.join(name), &text)
}

fn cmd_simulate(cfg: &ExperimentConfig, path_index: u64, m: Option<usize>) -> anyhow::Result<ExitCode> {
    let params = &cfg.model;
    validate_params(params)?;
    let h = cfg.jump_coefficient()?;
    validate_jump(&h, params, &ProbeGrid::default(), JumpRequirement::Positivity)?;
    let m = match m {
        Some(m) => m,
        None => *cfg.ladder.m_list.first().context("empty ladder")?,
    };
    let bundle = generate_bundle(params, m, cfg.run.seed, path_index)?;
    let (traj, x_t) = Tjabem::new(params, &h, cfg.solver)?
        .path(&bundle.fine_mesh, &bundle.dw_fine)
        .map_err(|e| Error::PathFailed {
            seed: cfg.run.seed,
            path_index,
            source: Box::new(e),
        })?;
    let dir = out_dir(cfg)?;
    write(dir.join(format!("trajectory_{path_index}.csv")), &traj.to_csv())?;
    write(dir.join(format!("mesh_{path_index}.csv")), &bundle.fine_mesh.to_csv())?;
    println!("M = {m}, jumps = {}, X_T = {x_t}", bundle.fine_mesh.jump_count());
    Ok(ExitCode::SUCCESS)
}

fn cmd_convergence(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    if let (Ok(q), Some(&m)) = (compute_q(&cfg.model), cfg.ladder.m_list.first()) {
        warn_step_size(q, cfg.model.horizon / m as f64);
    }
    let h = cfg.jump_coefficient()?;
    let schemes = cfg.run.scheme.schemes();
    let reports = harness::strong_error_ladders(&cfg.model, &h, &schemes, &cfg.ladder(), &cfg.run_spec(), &cfg.solver)?;
    let dir = out_dir(cfg)?;
    if cfg.output.wants("csv") {
        write(dir.join("convergence.csv"), &harness::convergence_csv(&reports))?;
        for r in &reports {
            write(dir.join(format!("plot_{}.csv", r.scheme.label())), &harness::plot_csv(r))?;
        }
    }
    #[derive(Serialize)]
    struct Body<'a> {
        reports: &'a [harness::ConvergenceReport],
    }
    write_json(cfg, "convergence.json", "convergence", Body { reports: &reports })?;
    for r in &reports {
        println!(
            "{}: slope = {:.4}, intercept = {:.4}, r2 = {:.4}{}",
            r.scheme.label(),
            r.fit.slope,
            r.fit.intercept,
            r.fit.r2,
            if r.monotone_ok { "" } else { " (error not monotone in dt)" }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_positivity(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let sets = if cfg.positivity.sets.is_empty() {
        vec![(cfg.run.label.clone(), cfg.model)]
    } else {
        cfg.positivity
            .sets
            .iter()
            .map(|name| Ok((name.clone(), ExperimentConfig::preset(name)?.model)))
            .collect::<Result<Vec<_>, Error>>()?
    };
    let families = cfg
        .positivity
        .families
        .iter()
        .map(|f| f.parse())
        .collect::<Result<Vec<JumpCoefficient>, Error>>()?;
    let report = harness::positivity_table(
        &sets,
        &families,
        &cfg.positivity.m_list,
        cfg.model.lambda,
        &cfg.run_spec(),
        &cfg.solver,
    )?;
    if cfg.output.wants("csv") {
        write(out_dir(cfg)?.join("positivity.csv"), &harness::positivity_csv(&report))?;
    }
    write_json(cfg, "positivity.json", "positivity", &report)?;
    for c in &report.cells {
        println!("{:<6} {:<12} dt = {:<10} {:>3}%", c.param_set, c.h_family, c.dt, c.percent);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_moments(cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let h = cfg.jump_coefficient()?;
    let table = harness::moment_probe(&cfg.model, &h, cfg.moments.m, &cfg.moments.p, &cfg.run_spec(), &cfg.solver)?;
    if cfg.output.wants("csv") {
        write(out_dir(cfg)?.join("moments.csv"), &harness::moments_csv(&table))?;
    }
    write_json(cfg, "moments.json", "moments", &table)?;
    for r in &table.rows {
        println!(
            "p = {}: E[sup X^p] = {} +- {}, E[X_T^p] = {} +- {}",
            r.p, r.sup_mean, r.sup_stderr, r.terminal_mean, r.terminal_stderr
        );
    }
    Ok(ExitCode::SUCCESS)
}
