use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use oml_core::config::TaskConfig;
use oml_core::finetune::{finetune, FinetuneProblem, FinetuneReport};
use oml_core::io::write_atomic;
use oml_core::materials::MaterialLibrary;
use oml_core::optics::{average_quantity, evaluate_stack, Quantity, SpectrumQuery};
use oml_core::photometry::{photometry_report, AveragedReflectance, LuminosityCurve, SpectralBand};
use oml_core::ppo::{write_trace_csv, Trainer};
use oml_core::structure::{ResolvedStructure, Structure};
use oml_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "oml",
    version,
    about = "Reinforcement-learning design of optical multilayer thin films"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the layer generator and refine the best design found.
    Train {
        #[command(flatten)]
        common: Common,
        /// Skip thickness refinement of the best design.
        #[arg(long)]
        no_finetune: bool,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compute the spectrum and summary metrics of a structure.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        structure: PathBuf,
        /// Incidence angles in degrees (defaults to the reward grid).
        #[arg(long, value_delimiter = ',')]
        angles_deg: Option<Vec<f64>>,
    },
    /// Refine the thicknesses of a structure within the configured bounds.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        structure: PathBuf,
    },
    /// Emitter temperature and visible enhancement factor for a filter.
    Photometry {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        structure: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long)]
    workers: Option<usize>,
    /// Run directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Run {
    cfg: TaskConfig,
    seed: u64,
    workers: usize,
    dir: PathBuf,
}

impl Run {
    fn prepare(common: &Common, command: &str) -> Result<Self> {
        let mut cfg = TaskConfig::load(&common.config)?;
        let seed = common.seed.or(cfg.task.seed).unwrap_or_else(rand::random);
        cfg.task.seed = Some(seed);
        let workers = common.workers.unwrap_or(cfg.train.workers);
        if workers == 0 {
            return Err(Error::Invalid("--workers must be at least 1".into()));
        }
        cfg.train.workers = workers;
        cfg.validate()?;
        let dir = match &common.out {
            Some(d) => d.clone(),
            None => {
                let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
                cfg.output
                    .dir
                    .join(format!("{}-{command}-{seed}-{stamp}", cfg.task.name))
            }
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
        write_atomic(&dir.join("seed.txt"), format!("{seed}\n").as_bytes())?;
        info!("run directory {} (seed {seed}, {workers} worker(s))", dir.display());
        Ok(Run {
            cfg,
            seed,
            workers,
            dir,
        })
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        write_atomic(&self.dir.join(name), text.as_bytes())
    }

    fn finetune(&self, structure: &Structure, library: &MaterialLibrary) -> Result<FinetuneReport> {
        let spec = self.cfg.reward_spec()?;
        let f = &self.cfg.finetune;
        let problem = FinetuneProblem::uniform(structure.clone(), f.lower_nm, f.upper_nm, &spec, library)?;
        finetune(&problem, &f.options())
    }
}

fn install_pool(workers: usize) {
    if rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .is_err()
    {
        warn!("thread pool already initialised");
    }
}

fn cmd_train(common: &Common, no_finetune: bool, resume: Option<&Path>) -> Result<()> {
    let run = Run::prepare(common, "train")?;
    install_pool(run.workers);
    let library = run.cfg.load_library()?;
    let vocab = run.cfg.vocabulary(&library)?;
    let spec = run.cfg.reward_spec()?;
    let train_cfg = run.cfg.train_config(run.seed);
    let mut trainer = match resume {
        Some(path) => Trainer::resume(train_cfg, oml_core::nn::Checkpoint::load(path)?, &spec, &library)?,
        None => Trainer::new(train_cfg, vocab, &spec, &library)?,
    };
    let ckpt_dir = run.dir.join("checkpoints");
    let every = run.cfg.output.checkpoint_every;
    while !trainer.is_done() {
        let row = trainer.run_epoch()?;
        if row.epoch % 10 == 0 || trainer.is_done() {
            info!(
                "epoch {:>5}  mean {:.4}  max {:.4}  best {:.4}  kl {:.4}  clip {:.3}",
                row.epoch, row.mean_reward, row.max_reward, row.best_so_far, row.approx_kl, row.clip_fraction
            );
        }
        if every > 0 && trainer.epoch % every == 0 {
            trainer
                .checkpoint()
                .save(&ckpt_dir.join(format!("epoch_{:06}.json", trainer.epoch)))?;
        }
    }
    trainer.checkpoint().save(&ckpt_dir.join("final.json"))?;

    let mut trace = Vec::new();
    write_trace_csv(&trainer.trace, &mut trace)?;
    write_atomic(&run.dir.join("trace.csv"), &trace)?;

    let Some(best) = trainer.best.entry.clone() else {
        info!("no epochs run; nothing to report");
        return Ok(());
    };
    write_atomic(&run.dir.join("best.json"), (best.structure.to_json() + "\n").as_bytes())?;
    let mut summary = json!({
        "seed": run.seed,
        "best_reward": best.reward,
        "best_epoch": best.epoch,
        "layers": best.structure.len(),
    });
    info!(
        "best design {} with reward {:.4} (epoch {})",
        best.structure, best.reward, best.epoch
    );
    if !no_finetune {
        let report = run.finetune(&best.structure, &library)?;
        write_atomic(
            &run.dir.join("best_finetuned.json"),
            (report.after.to_json() + "\n").as_bytes(),
        )?;
        info!(
            "finetuned reward {:.4} -> {:.4}",
            report.reward_before, report.reward_after
        );
        summary["finetuned_reward"] = json!(report.reward_after);
        run.write_json("finetune.json", &serde_json::to_value(&report)?)?;
    }
    run.write_json("summary.json", &summary)
}

fn cmd_eval(common: &Common, structure_path: &Path, angles_deg: Option<&[f64]>) -> Result<()> {
    let run = Run::prepare(common, "eval")?;
    install_pool(run.workers);
    let library = run.cfg.load_full_library()?;
    let structure = Structure::read(structure_path)?;
    let spec = run.cfg.reward_spec()?;
    let mut query: SpectrumQuery = spec.grid.clone();
    if let Some(a) = angles_deg {
        query.angles_rad = a.iter().map(|d| d.to_radians()).collect();
    }
    let resolved = ResolvedStructure::new(&structure, &library, &run.cfg.environment)?;
    let spectrum = evaluate_stack(&resolved, &query)?;
    for w in resolved.warnings.take() {
        warn!("{w}");
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["wavelength_nm", "angle_deg", "R", "T", "A"])
        .map_err(csv_err)?;
    for (i, wl) in spectrum.wavelengths_nm.iter().enumerate() {
        for (j, a) in spectrum.angles_rad.iter().enumerate() {
            w.write_record([
                wl.to_string(),
                a.to_degrees().to_string(),
                spectrum.at(Quantity::R, i, j).to_string(),
                spectrum.at(Quantity::T, i, j).to_string(),
                spectrum.at(Quantity::A, i, j).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    write_atomic(&run.dir.join("spectrum.csv"), &bytes)?;

    let mut metrics = json!({
        "layers": structure.len(),
        "average_absorption": average_quantity(&spectrum, Quantity::A)?,
        "average_reflectance": average_quantity(&spectrum, Quantity::R)?,
        "average_transmittance": average_quantity(&spectrum, Quantity::T)?,
    });
    if angles_deg.is_none() {
        metrics["reward"] = json!(spec.score(&spectrum)?);
    }
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    run.write_json("metrics.json", &metrics)
}

fn cmd_finetune(common: &Common, structure_path: &Path) -> Result<()> {
    let run = Run::prepare(common, "finetune")?;
    install_pool(run.workers);
    let library = run.cfg.load_full_library()?;
    let structure = Structure::read(structure_path)?;
    let report = run.finetune(&structure, &library)?;
    write_atomic(
        &run.dir.join("before.json"),
        (report.before.to_json() + "\n").as_bytes(),
    )?;
    write_atomic(&run.dir.join("after.json"), (report.after.to_json() + "\n").as_bytes())?;
    let delta = json!({
        "reward_before": report.reward_before,
        "reward_after": report.reward_after,
        "delta": report.reward_after - report.reward_before,
        "improved": report.improved,
        "iterations": report.iterations,
        "evaluations": report.evaluations,
        "stop": report.stop,
    });
    println!("{}", serde_json::to_string_pretty(&delta)?);
    run.write_json("finetune.json", &delta)
}

fn cmd_photometry(common: &Common, structure_path: &Path) -> Result<()> {
    let run = Run::prepare(common, "photometry")?;
    install_pool(run.workers);
    let section = run
        .cfg
        .photometry
        .clone()
        .ok_or_else(|| Error::Invalid("config has no [photometry] section".into()))?;
    let library = run.cfg.load_full_library()?;
    let structure = Structure::read(structure_path)?;
    let luminosity = LuminosityCurve::read_csv(&run.cfg.resolve(&section.luminosity))?;
    let emitter = section.emitter(1.0)?;
    let averaged =
        AveragedReflectance::for_structure(&structure, &library, &run.cfg.environment, SpectralBand::default(), 64)?;
    let reports = photometry_report(&averaged, &emitter, &section.view_factors, &luminosity)?;
    let value = serde_json::to_value(&reports)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    run.write_json("photometry.json", &value)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            common,
            no_finetune,
            resume,
        } => cmd_train(common, *no_finetune, resume.as_deref()),
        Command::Eval {
            common,
            structure,
            angles_deg,
        } => cmd_eval(common, structure, angles_deg.as_deref()),
        Command::Finetune { common, structure } => cmd_finetune(common, structure),
        Command::Photometry { common, structure } => cmd_photometry(common, structure),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
