//! Benchmark CLI: dataset generation, single-episode packing, training,
//! evaluation, sweeps, and plan rendering.

use clap::{Parser, Subcommand};
use packbench::config::ExperimentConfig;
use packbench::episode::{generate_episode, Difficulty};
use packbench::error::{PackError, Result};
use packbench::hrl::{FeatureSpec, LearnedPolicy, Trainer};
use packbench::nn::{read_pkqn, write_pkqn, CheckpointMeta, ManagerArch, ManagerNet, WorkerArch, WorkerNet};
use packbench::object::OrientedObject;
use packbench::packing::{apply_placement, compute_z, PackingState, Placement};
use packbench::planners::{PlacementRule, PreparedPool, SequenceRule};
use packbench::runner::{export_plan, run_episode, PlanDocument};
use packbench::sweep::{episode_report, run_sweep, sweep_csv};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "packbench", about = "Irregular-object packing benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an episode dataset: manifest + voxel grids.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        difficulty: Option<Difficulty>,
        #[arg(long)]
        pool_size: Option<usize>,
    },
    /// Run one episode with a heuristic planner.
    Pack {
        #[arg(long, default_value = "bbox-hm")]
        planner: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        difficulty: Option<Difficulty>,
        /// Box dimensions in mm, WxLxH.
        #[arg(long, value_name = "WxLxH")]
        box_mm: Option<String>,
        /// Heightmap cells along the box width.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// real | off; off zeroes latency for byte-stable outputs.
        #[arg(long)]
        timing: Option<String>,
    },
    /// Train the hierarchical policy.
    Train {
        #[arg(long)]
        stage: Option<u8>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training log CSV; defaults next to the checkpoint.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against the heuristic baselines.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a config-driven sweep, one CSV row per config.
    Sweep {
        #[arg(long)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a plan JSON into heightmap PGM frames.
    Render {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("PACKBENCH_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_planner(config: &mut ExperimentConfig, planner: &str) -> Result<()> {
    let (seq, place, stable) = match planner {
        "random" => (SequenceRule::Random, PlacementRule::Random, false),
        "bbox-hm" => (SequenceRule::BboxVolumeDesc, PlacementRule::Hm, false),
        "packit" => (SequenceRule::BboxVolumeDesc, PlacementRule::PackitBlb, false),
        "stable-hm" => (SequenceRule::BboxVolumeDesc, PlacementRule::Hm, true),
        other => {
            return Err(PackError::Config(format!(
                "unknown planner '{other}' (random | bbox-hm | packit | stable-hm)"
            )))
        }
    };
    config.sequence_rule = seq;
    config.placement_rule = place;
    config.stability_constrained = stable;
    Ok(())
}

fn parse_box(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split('x')
        .map(|p| p.parse().map_err(|_| PackError::Config(format!("bad box spec: {s}"))))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(PackError::Config(format!("bad box spec: {s}")));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            out,
            config,
            seed,
            difficulty,
            pool_size,
        } => {
            let mut c = load_config(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(d) = difficulty {
                c.difficulty = d;
            }
            if let Some(n) = pool_size {
                c.pool_size = n;
            }
            c.validate()?;
            let episode = generate_episode(
                c.seed,
                c.difficulty,
                c.pool_size,
                c.cell_mm,
                (c.box_width_mm, c.box_length_mm, c.box_height_mm),
            )?;
            std::fs::create_dir_all(&out)?;
            let manifest = episode.manifest(
                c.cell_mm,
                [c.box_width_mm, c.box_length_mm, c.box_height_mm],
            );
            let mut json = serde_json::to_vec_pretty(&manifest)?;
            json.push(b'\n');
            std::fs::write(out.join("manifest.json"), json)?;
            for obj in &episode.objects {
                let mut f = std::fs::File::create(out.join(format!("{}.pkvx", obj.id)))?;
                obj.grid.write_pkvx(&mut f)?;
            }
            println!(
                "wrote {} objects to {} (seed {}, {:?})",
                episode.objects.len(),
                out.display(),
                c.seed,
                c.difficulty
            );
        }
        Command::Pack {
            planner,
            seed,
            difficulty,
            box_mm,
            resolution,
            export,
            config,
            timing,
        } => {
            let mut c = load_config(&config)?;
            apply_planner(&mut c, &planner)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(d) = difficulty {
                c.difficulty = d;
            }
            if let Some(b) = &box_mm {
                let (w, l, h) = parse_box(b)?;
                c.box_width_mm = w;
                c.box_length_mm = l;
                c.box_height_mm = h;
            }
            if let Some(r) = resolution {
                if r == 0 {
                    return Err(PackError::Config("resolution must be positive".into()));
                }
                c.cell_mm = c.box_width_mm / r as f64;
            }
            if let Some(t) = &timing {
                c.apply("timing", t)?;
            }
            c.validate()?;
            let report = episode_report(&c, c.seed)?;
            let doc = PlanDocument {
                plan: report.plan.clone(),
                metrics: report.metrics,
                termination: report.termination,
                j_trace: report.j_trace.clone(),
                config_hash: c.hash(),
            };
            println!("{}", serde_json::to_string_pretty(&doc)?);
            if let Some(dir) = export {
                std::fs::create_dir_all(&dir)?;
                export_plan(&report, &c.hash(), &dir, &format!("seed-{:04}", c.seed))?;
            }
        }
        Command::Train {
            stage,
            epochs,
            checkpoint,
            config,
            log,
        } => {
            let mut c = load_config(&config)?;
            if let Some(s) = stage {
                c.stage = s;
            }
            if let Some(e) = epochs {
                c.epochs = e;
            }
            c.validate()?;
            let schedule = c.schedule();
            let grid = c.orientation_grid()?;
            let box_spec = c.box_spec();
            let mut pools = Vec::with_capacity(c.episodes);
            for i in 0..c.episodes as u64 {
                let ep = generate_episode(
                    c.seed + i,
                    c.difficulty,
                    c.pool_size,
                    c.cell_mm,
                    (c.box_width_mm, c.box_length_mm, c.box_height_mm),
                )?;
                pools.push(PreparedPool::new(&ep, &grid)?);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let (worker, manager, prior_epochs) = if checkpoint.exists() {
                let (meta, w, m) = read_pkqn(&checkpoint)?;
                (w, m, meta.epochs_trained)
            } else {
                let w = WorkerNet::new(WorkerArch::default(), &mut rng);
                let m = ManagerNet::new(
                    ManagerArch {
                        slots: c.k,
                        ..ManagerArch::default()
                    },
                    &mut rng,
                );
                (w, m, 0)
            };
            let mut trainer = Trainer::new(
                schedule,
                c.weights(),
                c.thresholds(),
                worker,
                manager,
            );
            let rows = trainer.train(&pools, box_spec, &mut rng)?;
            let meta = CheckpointMeta {
                worker: trainer.worker.arch,
                manager: trainer.manager.arch,
                epochs_trained: prior_epochs + c.epochs,
                stage: c.stage,
            };
            write_pkqn(&checkpoint, &meta, &trainer.worker, &trainer.manager)?;
            let log_path = log.unwrap_or_else(|| checkpoint.with_extension("log.csv"));
            packbench::hrl::write_training_log(&log_path, &rows)?;
            let last = rows.last();
            println!(
                "trained stage {} for {} epochs; final J {:.4}; checkpoint {}",
                c.stage,
                c.epochs,
                last.map_or(0.0, |r| r.mean_j),
                checkpoint.display()
            );
        }
        Command::Eval {
            checkpoint,
            config,
            episodes,
            seed,
        } => {
            let mut c = load_config(&config)?;
            if let Some(e) = episodes {
                c.episodes = e;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            c.validate()?;
            let (meta, worker, manager) = read_pkqn(&checkpoint)?;
            let grid = c.orientation_grid()?;
            let box_spec = c.box_spec();
            let mut policy = LearnedPolicy {
                worker,
                manager: if meta.stage >= 2 { Some(manager) } else { None },
                features: FeatureSpec {
                    train_res: c.train_res,
                    k: c.k,
                },
            };
            // Learned policy over paired seeds.
            let mut learned = [0.0f64; 4];
            let mut n = 0usize;
            for i in 0..c.episodes as u64 {
                let ep = generate_episode(
                    c.seed + i,
                    c.difficulty,
                    c.pool_size,
                    c.cell_mm,
                    (c.box_width_mm, c.box_length_mm, c.box_height_mm),
                )?;
                let pool = PreparedPool::new(&ep, &grid)?;
                let mut rng = ChaCha8Rng::seed_from_u64(c.seed + i);
                let rep = run_episode(
                    &mut policy,
                    &pool,
                    box_spec,
                    &c.weights(),
                    &c.thresholds(),
                    &mut rng,
                    c.timing,
                )?;
                learned[0] += rep.metrics.compactness;
                learned[1] += rep.metrics.pyramidality;
                learned[2] += rep.metrics.stability;
                learned[3] += rep.metrics.packed_count as f64;
                n += 1;
            }
            println!("planner,difficulty,C,P,S,packed_count");
            let nf = n.max(1) as f64;
            println!(
                "learned,{},{:.6},{:.6},{:.6},{:.3}",
                match c.difficulty {
                    Difficulty::Easy => "easy",
                    Difficulty::Hard => "hard",
                },
                learned[0] / nf,
                learned[1] / nf,
                learned[2] / nf,
                learned[3] / nf
            );
            for planner in ["random", "bbox-hm"] {
                let mut bc = c.clone();
                apply_planner(&mut bc, planner)?;
                let rows = run_sweep(std::slice::from_ref(&bc))?;
                let r = &rows[0];
                println!(
                    "{},{},{:.6},{:.6},{:.6},{:.3}",
                    planner, r.difficulty, r.compactness, r.pyramidality, r.stability, r.packed_count
                );
            }
        }
        Command::Sweep { config, out } => {
            if config.is_empty() {
                return Err(PackError::Config("sweep needs at least one --config".into()));
            }
            let configs: Vec<ExperimentConfig> = config
                .iter()
                .map(|p| ExperimentConfig::load(p))
                .collect::<Result<_>>()?;
            let rows = run_sweep(&configs)?;
            let csv = sweep_csv(&rows);
            match out {
                Some(p) => {
                    std::fs::write(&p, &csv)?;
                    println!("wrote {} rows to {}", rows.len(), p.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Render {
            plan,
            out,
            config,
            seed,
        } => {
            let mut c = load_config(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            c.validate()?;
            let doc: PlanDocument = serde_json::from_slice(&std::fs::read(&plan)?)?;
            let episode = generate_episode(
                c.seed,
                c.difficulty,
                c.pool_size,
                c.cell_mm,
                (c.box_width_mm, c.box_length_mm, c.box_height_mm),
            )?;
            let grid = c.orientation_grid()?;
            let box_spec = c.box_spec();
            let cell_mm = c.cell_mm;
            let mut state = PackingState::new(
                box_spec,
                episode.objects.iter().map(|o| o.id.clone()),
            );
            std::fs::create_dir_all(&out)?;
            let stem = plan
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("plan")
                .trim_end_matches(".plan")
                .to_string();
            std::fs::write(
                out.join(format!("{stem}.frame-000.pgm")),
                state.box_map.to_pgm(),
            )?;
            for (i, step) in doc.plan.iter().enumerate() {
                let obj = episode
                    .objects
                    .iter()
                    .find(|o| o.id == step.object_id)
                    .ok_or_else(|| {
                        PackError::Format(format!("plan references unknown object {}", step.object_id))
                    })?;
                let (oi, oj) = step.orientation;
                let oriented = OrientedObject::build(obj, &grid, oi, oj)?;
                let x = (step.x_mm / cell_mm - 0.5).round() as usize;
                let y = (step.y_mm / cell_mm - 0.5).round() as usize;
                let z = compute_z(&state.box_map, &oriented.views.h_b, x, y)?;
                let placement = Placement {
                    object_id: obj.id.clone(),
                    orientation: (oi, oj),
                    position: (x, y),
                    z_q: z,
                    score: step.score,
                };
                state = apply_placement(&state, &placement, &oriented.views, obj.volume_mm3(), step.stable)?;
                std::fs::write(
                    out.join(format!("{stem}.frame-{:03}.pgm", i + 1)),
                    state.box_map.to_pgm(),
                )?;
            }
            println!("rendered {} frames to {}", doc.plan.len() + 1, out.display());
        }
    }
    Ok(())
}
