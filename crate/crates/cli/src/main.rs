//! `thermal-eit`: forward solves, data synthesis, condition maps and
//! reconstructions driven by a TOML experiment file.
//!
//! Every subcommand resolves one [`ExperimentConfig`] (file, then flags, then
//! `THERMAL_EIT_*` environment variables through clap), validates it, runs
//! the selected stages and writes `manifest.json` into the output directory.

mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use config::{ExperimentConfig, Kind, ModelKind, Stage};
use stages::{FileRecord, Runner, StageRecord};

#[derive(Parser, Debug)]
#[command(
    name = "thermal-eit",
    version,
    about = "Thermal-noise conductivity imaging experiments"
)]
struct Cli {
    /// Experiment file (TOML, or a previous manifest.json).
    #[arg(long, global = true, env = "THERMAL_EIT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "THERMAL_EIT_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "THERMAL_EIT_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "THERMAL_EIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the forward problems on the fine grid.
    Forward {
        #[command(flatten)]
        setup: SetupArgs,
    },
    /// Synthesize internal data on the coarse grid.
    Measure {
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        measure: MeasureArgs,
    },
    /// Worst-case principal-symbol condition numbers per node.
    SymbolMap {
        #[command(flatten)]
        setup: SetupArgs,
        #[arg(long, env = "THERMAL_EIT_KIND")]
        kind: Option<KindArg>,
        #[arg(long, env = "THERMAL_EIT_DIRECTIONS")]
        directions: Option<usize>,
    },
    /// Gauss-Newton reconstruction from a measurement directory.
    Reconstruct {
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        recon: ReconArgs,
    },
    /// Run the stages listed in the experiment file.
    Run {
        /// Experiment file; same as `--config`.
        path: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct SetupArgs {
    /// Coarse nodes per side.
    #[arg(long, env = "THERMAL_EIT_N")]
    n: Option<usize>,
    #[arg(long, env = "THERMAL_EIT_FINE_FACTOR")]
    fine_factor: Option<usize>,
    /// Side length, cm.
    #[arg(long, env = "THERMAL_EIT_EXTENT")]
    extent: Option<f64>,
    /// `constant:<v>[,<im>]`, `two-bumps` or `complex-default`.
    #[arg(long, env = "THERMAL_EIT_PHANTOM", conflicts_with = "sigma_csv")]
    phantom: Option<String>,
    /// Fine-grid CSV of sigma'.
    #[arg(long, env = "THERMAL_EIT_SIGMA_CSV")]
    sigma_csv: Option<PathBuf>,
    /// Fine-grid CSV of sigma''.
    #[arg(long, env = "THERMAL_EIT_SIGMA_IM_CSV", requires = "sigma_csv")]
    sigma_im_csv: Option<PathBuf>,
    /// Electrode function, repeatable: `g1`, `h2`, `gt1`, `ht2`, `affine:c,a,b`.
    #[arg(long = "bc", env = "THERMAL_EIT_BC", value_delimiter = ';')]
    bc: Vec<String>,
    /// Insulating gap centred on each side, cm.
    #[arg(long, env = "THERMAL_EIT_GAP_WIDTH")]
    gap_width: Option<f64>,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[arg(long, env = "THERMAL_EIT_MODEL")]
    model: Option<ModelArg>,
    /// Heating pattern width, cm^2.
    #[arg(long, env = "THERMAL_EIT_A")]
    a: Option<f64>,
    #[arg(long, env = "THERMAL_EIT_T0")]
    t0: Option<f64>,
    /// rad/s.
    #[arg(long, env = "THERMAL_EIT_DELTA_OMEGA")]
    delta_omega: Option<f64>,
    /// cm.
    #[arg(long, env = "THERMAL_EIT_DELTA_Z")]
    delta_z: Option<f64>,
    #[arg(long, env = "THERMAL_EIT_REALIZATIONS")]
    realizations: Option<usize>,
}

#[derive(Args, Debug)]
struct ReconArgs {
    /// Directory written by `measure`.
    #[arg(long, env = "THERMAL_EIT_DATA")]
    data: Option<PathBuf>,
    #[arg(long, env = "THERMAL_EIT_KIND")]
    kind: Option<KindArg>,
    #[arg(long, env = "THERMAL_EIT_GAMMA")]
    gamma: Option<f64>,
    #[arg(long, env = "THERMAL_EIT_STEP_TOL")]
    step_tol: Option<f64>,
    /// Known boundary band, cm.
    #[arg(long, env = "THERMAL_EIT_BAND")]
    band: Option<f64>,
    /// Initial conductivity `re[,im]`.
    #[arg(long, env = "THERMAL_EIT_SIGMA0")]
    sigma0: Option<String>,
    #[arg(long, env = "THERMAL_EIT_MAX_ITERS")]
    max_iters: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Real,
    Complex,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Real => Kind::Real,
            KindArg::Complex => Kind::Complex,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Det,
    Stoch,
}

/// Record of one invocation.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    seed: u64,
    config: ExperimentConfig,
    stages: Vec<StageRecord>,
    total_seconds: f64,
    files: Vec<FileRecord>,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_slice(&text)?;
        let cfg = value.get("config").cloned().unwrap_or(value);
        return serde_json::from_value(cfg)
            .with_context(|| format!("parsing config in {}", path.display()));
    }
    ExperimentConfig::load(path)
}

fn apply_setup(cfg: &mut ExperimentConfig, s: SetupArgs) {
    if let Some(n) = s.n {
        cfg.grid.n = n;
    }
    if let Some(f) = s.fine_factor {
        cfg.grid.fine_factor = f;
    }
    if let Some(e) = s.extent {
        cfg.grid.extent = e;
    }
    if let Some(p) = s.phantom {
        cfg.conductivity.phantom = Some(p);
        cfg.conductivity.csv_re = None;
        cfg.conductivity.csv_im = None;
    }
    if let Some(p) = s.sigma_csv {
        cfg.conductivity.phantom = None;
        cfg.conductivity.csv_re = Some(p);
        cfg.conductivity.csv_im = s.sigma_im_csv;
    }
    if !s.bc.is_empty() {
        cfg.boundary.functions = s.bc;
    }
    if s.gap_width.is_some() {
        cfg.boundary.gap_width = s.gap_width;
    }
}

fn parse_sigma0(s: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("--sigma0 {s}"))?;
    match v.as_slice() {
        [re] => Ok([*re, 0.0]),
        [re, im] => Ok([*re, *im]),
        _ => anyhow::bail!("--sigma0 takes `re` or `re,im`, got {s}"),
    }
}

fn resolve(cli: Cli) -> Result<(ExperimentConfig, Option<usize>)> {
    let path = match &cli.command {
        Command::Run { path: Some(p) } => Some(p.clone()),
        _ => cli.config.clone(),
    };
    let mut cfg = match &path {
        Some(p) => load_config(p)?,
        None => {
            if matches!(cli.command, Command::Run { .. }) {
                anyhow::bail!("run: an experiment file is required (positional path or --config)");
            }
            ExperimentConfig::default()
        }
    };
    match cli.command {
        Command::Run { .. } => {}
        Command::Forward { setup } => {
            apply_setup(&mut cfg, setup);
            cfg.pipeline = vec![Stage::Forward];
        }
        Command::Measure { setup, measure } => {
            apply_setup(&mut cfg, setup);
            let m = &mut cfg.measure;
            if let Some(model) = measure.model {
                m.model = match model {
                    ModelArg::Det => ModelKind::Deterministic,
                    ModelArg::Stoch => ModelKind::Stochastic,
                };
            }
            m.a = measure.a.unwrap_or(m.a);
            m.t0 = measure.t0.unwrap_or(m.t0);
            m.delta_omega = measure.delta_omega.unwrap_or(m.delta_omega);
            m.delta_z = measure.delta_z.unwrap_or(m.delta_z);
            m.realizations = measure.realizations.unwrap_or(m.realizations);
            cfg.pipeline = vec![Stage::Measure];
        }
        Command::SymbolMap {
            setup,
            kind,
            directions,
        } => {
            apply_setup(&mut cfg, setup);
            if let Some(k) = kind {
                cfg.symbol.kind = k.into();
            }
            cfg.symbol.directions = directions.unwrap_or(cfg.symbol.directions);
            cfg.pipeline = vec![Stage::SymbolMap];
        }
        Command::Reconstruct { setup, recon } => {
            apply_setup(&mut cfg, setup);
            let r = &mut cfg.reconstruct;
            if recon.data.is_some() {
                r.data = recon.data;
            }
            if let Some(k) = recon.kind {
                r.kind = k.into();
            }
            if recon.gamma.is_some() {
                r.gamma = recon.gamma;
            }
            r.step_tol = recon.step_tol.unwrap_or(r.step_tol);
            r.band = recon.band.unwrap_or(r.band);
            r.max_iters = recon.max_iters.unwrap_or(r.max_iters);
            if let Some(s) = recon.sigma0 {
                r.sigma0 = Some(parse_sigma0(&s)?);
            }
            cfg.pipeline = if r.data.is_some() {
                vec![Stage::Reconstruct]
            } else {
                vec![Stage::Measure, Stage::Reconstruct]
            };
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    Ok((cfg, cli.threads))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (cfg, threads) = resolve(cli)?;
    if let Some(k) = threads {
        anyhow::ensure!(k >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the thread pool")?;
    }
    cfg.validate()?;

    let t = Instant::now();
    let mut runner = Runner::new(&cfg);
    runner.run()?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config: cfg.clone(),
        stages: runner.stages,
        total_seconds: t.elapsed().as_secs_f64(),
        files: runner.files,
    };
    write_atomic(
        &cfg.out.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    for s in &manifest.stages {
        eprintln!(
            "{:<12} {:>8.2}s{}",
            s.stage.name(),
            s.seconds,
            if s.cached { "  (cached)" } else { "" }
        );
    }
    eprintln!("manifest: {}", cfg.out.join("manifest.json").display());
    Ok(())
}
