use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fisale::data_io::{
    build_manifest, gen_piston_dataset, gen_potential_dataset, manifest_path, Manifest, PistonDatasetSpec, Split,
    SplitRatios,
};
use fisale::harness::{
    dump_attention, evaluate_trajectories, rollout, sidecar_path, train_loop, RunConfig, TrainData, TrainOutputs,
};
use fisale::model::{init_params, random_state, LossObjective, Task};
use fisale::pcm::Step;
use fisale::tensor_core::checkpoint::{load_checkpoint, save_checkpoint};
use fisale::tensor_core::{grad_check, ParameterStore};

#[derive(Parser)]
#[command(name = "fisale", about = "Latent ALE-grid surrogate for fluid-solid interaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset with the reference solvers.
    #[command(subcommand)]
    Gen(Gen),
    /// Assign splits and compute normalization statistics.
    Split {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "8:1:1")]
        ratios: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model; writes the checkpoint, its settings sidecar and `<out>.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-step errors on a split, as JSON.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Autoregressive rollout of one trajectory, as JSON.
    Rollout {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        traj: String,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Compare analytic and finite-difference gradients on a random sample.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dense attention logits of one coupling substep, as CSV.
    DumpAttn {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        level: usize,
        #[arg(long)]
        pathway: usize,
        #[arg(long)]
        step: String,
        /// Trajectory whose first frame is the input; defaults to the first test trajectory.
        #[arg(long)]
        traj: Option<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Gen {
    /// Piston-in-a-channel trajectories.
    Piston {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trajectories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        ood_fraction: Option<f64>,
    },
    /// Steady potential flow past a cylinder.
    Potential {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(Gen::Piston {
            out,
            trajectories,
            seed,
            steps,
            dt,
            ood_fraction,
        }) => {
            let base = PistonDatasetSpec::default();
            let spec = PistonDatasetSpec {
                trajectories,
                seed,
                steps: steps.unwrap_or(base.steps),
                dt: dt.unwrap_or(base.dt),
                ood_fraction: ood_fraction.unwrap_or(base.ood_fraction),
                ..base
            };
            let m = gen_piston_dataset(&out, &spec)?;
            eprintln!("wrote {} trajectories to {}", m.entries.len(), out.display());
        }
        Command::Gen(Gen::Potential { out, samples, seed, dim }) => {
            let m = gen_potential_dataset(&out, samples, seed, dim)?;
            eprintln!("wrote {} samples to {}", m.entries.len(), out.display());
        }
        Command::Split { dir, ratios, seed } => {
            let ratios: SplitRatios = ratios.parse()?;
            let m = build_manifest(&dir, ratios, seed)?;
            let s = &m.splits;
            eprintln!(
                "train {} val {} test {} ood {}",
                s.train.len(),
                s.val.len(),
                s.test.len(),
                s.ood.len()
            );
        }
        Command::Train { data, config, out } => train(&data, &config, &out)?,
        Command::Eval { data, ckpt, split } => {
            let split: Split = split.parse()?;
            let m = manifest(&data)?;
            let (store, run) = load_model(&ckpt)?;
            let trajs = m.load_split(&data, split)?;
            let name = format!("{split:?}").to_lowercase();
            let report = evaluate_trajectories(&store, &run.model, m.stats()?, &m.channels, &trajs, &name)?;
            print_json(&report)?;
        }
        Command::Rollout {
            data,
            ckpt,
            steps,
            traj,
            start,
        } => {
            let m = manifest(&data)?;
            let (store, run) = load_model(&ckpt)?;
            let t = m.load(&data, &traj)?;
            let (_, report) = rollout(&store, &run.model, m.stats()?, &m.channels, &t, start, steps, m.mask.as_ref())?;
            print_json(&report)?;
        }
        Command::Gradcheck { config, tol, seed } => {
            let mut run = RunConfig::read(&config)?;
            run.model.task = Task::SingleStep;
            let cfg = &run.model;
            cfg.validate()?;
            let store = init_params::<f64>(cfg, seed)?;
            let input = random_state(cfg, [12, 6, 4], seed.wrapping_add(1))?;
            let target = random_state(cfg, [12, 6, 4], seed.wrapping_add(2))?;
            let mut obj = LossObjective {
                cfg,
                input: &input,
                target: &target,
            };
            let report = grad_check(&mut obj, &store, tol)?;
            for (name, err) in &report.per_param {
                println!("{name},{err:e}");
            }
            eprintln!(
                "{} entries, worst {:e}, {} refined",
                report.entries,
                report.worst(),
                report.refined
            );
            if !report.passed() {
                bail!("gradient check failed: worst {:e} above {tol:e}", report.worst());
            }
        }
        Command::DumpAttn {
            ckpt,
            data,
            level,
            pathway,
            step,
            traj,
            out,
        } => {
            let step: Step = step.parse()?;
            let m = manifest(&data)?;
            let (store, run) = load_model(&ckpt)?;
            let id = match traj {
                Some(id) => id,
                None => m
                    .splits
                    .test
                    .first()
                    .or(m.entries.first().map(|e| &e.id))
                    .context("dataset is empty")?
                    .clone(),
            };
            let t = m.load(&data, &id)?;
            let input = m.stats()?.normalize_state(&t.frames[0])?;
            let dump = dump_attention(&store, &run.model, &input, level, pathway, step)?;
            match out {
                Some(path) => dump.write_csv(&path)?,
                None => std::io::stdout().write_all(dump.to_csv().as_bytes())?,
            }
        }
    }
    Ok(())
}

fn manifest(dir: &Path) -> Result<Manifest> {
    let path = manifest_path(dir);
    let m = Manifest::read(&path).with_context(|| format!("reading {}; run `fisale split` first", path.display()))?;
    Ok(m)
}

fn load_model(ckpt: &Path) -> Result<(ParameterStore<f64>, RunConfig)> {
    let side = sidecar_path(ckpt);
    let run = RunConfig::read(&side).with_context(|| format!("reading {}", side.display()))?;
    let store = load_checkpoint(ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    Ok((store, run))
}

fn train(data: &Path, config: &Path, out: &Path) -> Result<()> {
    let m = manifest(data)?;
    let mut run = RunConfig::read(config)?;
    run.fit_to(&m)?;
    let mut store = init_params::<f64>(&run.model, run.train.seed)?;
    let td = TrainData {
        train: m.load_split(data, Split::Train)?,
        val: m.load_split(data, Split::Val)?,
        stats: m.stats()?.clone(),
        channels: m.channels.clone(),
    };
    std::fs::write(sidecar_path(out), run.to_string())?;
    let mut log = out.as_os_str().to_owned();
    log.push(".csv");
    let outputs = TrainOutputs {
        log: Some(PathBuf::from(log)),
        checkpoint: Some(out.to_path_buf()),
    };
    let outcome = train_loop(&mut store, &run.model, &run.train, &td, &outputs)?;
    save_checkpoint(&outcome.best, out)?;
    eprintln!(
        "{} steps, final loss {:e}, best val {}",
        outcome.steps,
        outcome.log.last().map_or(f64::NAN, |r| r.train_loss),
        outcome.best_val.map_or("n/a".into(), |v| format!("{v:e}"))
    );
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
