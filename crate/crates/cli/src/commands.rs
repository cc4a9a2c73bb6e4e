//! Subcommand implementations. Each returns a JSON metrics value that is
//! also written into the run record beside its output.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use manic_core::agent::{run_episode, EpisodeScorer, EpisodeTrace, FrameStorage, ManicAgent};
use manic_core::bootstrap::{collect_held_walk, continue_training, estimate_beliefs, pretrain, BeliefEstimates, WalkDataset};
use manic_core::contentment::evolve_contentment;
use manic_core::env::make_env;
use manic_core::{Approximator, ContentmentModel, LearningSystem};
use manic_teacher::{router, serve, AgentStatus, ContentmentHandle, Store, TeacherService};
use serde_json::{json, Value};

use crate::artifacts::{check_overwrite, write_atomic, write_dir_atomic, write_record, OutputLock};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::metrics::{r2_report, rollout_table, spearman, StartBelief};

/// Horizons listed in the rollout-error table.
pub const EVAL_HORIZONS: [usize; 6] = [1, 5, 10, 25, 50, 100];

fn or_default(flag: &Option<PathBuf>, fallback: &Path) -> PathBuf {
    flag.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

pub fn load_contentment(path: &Path) -> CliResult<ContentmentModel> {
    Ok(ContentmentModel::from_approximator(Approximator::load(path)?)?)
}

/// `h` from `path` when given, otherwise a fresh model from the config.
fn contentment_or_fresh(path: Option<&Path>, cfg: &RunConfig, d: usize) -> CliResult<ContentmentModel> {
    match path {
        Some(p) => {
            require_file(p, "contentment model")?;
            let cm = load_contentment(p)?;
            if cm.belief_dims() != d {
                return Err(CliError::Usage(format!(
                    "contentment model takes {} belief dims, the learning system has {d}",
                    cm.belief_dims()
                )));
            }
            Ok(cm)
        }
        None => Ok(ContentmentModel::new(d, &cfg.contentment_hidden, cfg.seed)?),
    }
}

#[derive(Debug, Clone, Args)]
pub struct CollectArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub fn collect(cfg: &RunConfig, args: &CollectArgs) -> CliResult<Value> {
    let out = or_default(&args.out, &cfg.paths.dataset);
    let steps = args.steps.unwrap_or(cfg.walk_steps);
    let _lock = OutputLock::acquire(&out)?;
    check_overwrite(&out, args.force)?;
    let mut env = make_env(cfg.env, cfg.noise);
    let ds = collect_held_walk(env.as_mut(), steps, cfg.seed, cfg.walk_hold)?;
    write_atomic(&out, &ds.to_bytes())?;
    let metrics = json!({
        "frames": ds.len(),
        "frame": [ds.frame.width, ds.frame.height, ds.frame.channels],
        "action_dims": ds.action_dims,
    });
    write_record(&out, "collect", cfg, &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Quality of belief estimates against ground truth, when the data has it.
fn belief_quality(beliefs: &[Vec<f64>], states: Option<&Vec<Vec<f64>>>) -> Value {
    let Some(states) = states else {
        return Value::Null;
    };
    let r2 = r2_report(beliefs, states);
    let monotone = (beliefs.first().map_or(0, |b| b.len()) == 1).then(|| {
        let b: Vec<f64> = beliefs.iter().map(|v| v[0]).collect();
        let s: Vec<f64> = states.iter().map(|v| v[0]).collect();
        spearman(&b, &s)
    });
    json!({ "r2": r2, "spearman": monotone.flatten() })
}

pub fn bootstrap(cfg: &RunConfig, args: &BootstrapArgs) -> CliResult<Value> {
    let input = or_default(&args.input, &cfg.paths.dataset);
    let out = or_default(&args.out, &cfg.paths.beliefs);
    require_file(&input, "dataset")?;
    let _lock = OutputLock::acquire(&out)?;
    check_overwrite(&out, args.force)?;
    let ds = WalkDataset::load(&input)?;
    let d = args.dims.unwrap_or(cfg.belief_dims);
    let k = args.k.unwrap_or(cfg.nldr_k);
    let be = estimate_beliefs(&ds, d, k)?;
    write_atomic(&out, &be.to_bytes())?;
    let metrics = json!({
        "frames": be.len(),
        "dims": be.dims,
        "k": k,
        "quality": belief_quality(&be.beliefs, ds.true_states.as_ref()),
    });
    write_record(&out, "bootstrap", cfg, &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub beliefs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub refine_epochs: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

pub fn pretrain_cmd(cfg: &RunConfig, args: &PretrainArgs) -> CliResult<Value> {
    let data = or_default(&args.data, &cfg.paths.dataset);
    let beliefs = or_default(&args.beliefs, &cfg.paths.beliefs);
    let out = or_default(&args.out, &cfg.paths.model);
    require_file(&data, "dataset")?;
    require_file(&beliefs, "belief estimates")?;
    let _lock = OutputLock::acquire(&out)?;
    check_overwrite(&out, args.force)?;
    let ds = WalkDataset::load(&data)?;
    let be = BeliefEstimates::load(&beliefs)?;
    let mut train = cfg.train.clone();
    if let Some(e) = args.epochs {
        train.epochs = e;
    }
    let (mut ls, log) = pretrain(&ds, &be, &train)?;
    let refine_epochs = args.refine_epochs.unwrap_or(cfg.refine_epochs);
    let refine_log = if refine_epochs > 0 {
        train.epochs = refine_epochs;
        Some(continue_training(&mut ls, &ds, &be, &train)?)
    } else {
        None
    };
    let metrics = json!({
        "pretrain": log,
        "refine": refine_log,
        "hashes": {
            "f": ls.f.hash(),
            "g": ls.g.hash(),
            "g_plus": ls.g_plus.as_ref().map(|e| e.hash()),
        },
    });
    write_dir_atomic(&out, |dir| Ok(ls.save_dir(dir)?))?;
    write_record(&out, "pretrain", cfg, &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub contentment: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed passed to the environment reset.
    #[arg(long)]
    pub episode_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Embed frames in the trace instead of writing PNG files.
    #[arg(long)]
    pub inline_frames: bool,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cfg: &RunConfig, args: &RunArgs) -> CliResult<Value> {
    let steps = args.steps.unwrap_or(cfg.episode_steps);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let model = or_default(&args.model, &cfg.paths.model);
    let out = or_default(&args.out, &cfg.paths.trace);
    require_file(&model, "model directory")?;
    let _lock = OutputLock::acquire(&out)?;
    check_overwrite(&out, args.force)?;
    let ls = LearningSystem::load_dir(&model)?;
    let cm = contentment_or_fresh(args.contentment.as_deref(), cfg, ls.belief_dims())?;
    let mut env = make_env(cfg.env, cfg.noise);
    let mut agent = ManicAgent::new(cfg.agent.clone(), ls, cm, env.action_space())?;
    let trace = run_episode(&mut agent, env.as_mut(), steps, args.episode_seed.unwrap_or(cfg.seed))?;
    let storage = if args.inline_frames {
        FrameStorage::Inline
    } else {
        FrameStorage::PngFiles
    };
    trace.save_jsonl(&out, storage)?;
    let metrics = json!({
        "steps": trace.len(),
        "mean_error_norm": trace.mean_error_norm(),
        "final_state": trace.final_state,
    });
    write_record(&out, "run", cfg, &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Closed-loop trace written by `run`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Random-walk dataset to score open-loop rollouts on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of evenly spaced rollout starts.
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Write the report here as well as printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

fn spaced_starts(len: usize, horizon: usize, count: usize) -> Vec<usize> {
    let room = len.saturating_sub(horizon + 1);
    if count == 0 || room == 0 {
        return vec![0];
    }
    (0..count).map(|i| i * room / count.max(1)).collect()
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> CliResult<Value> {
    if args.trace.is_none() && args.data.is_none() {
        return Err(CliError::Usage("eval needs --trace and/or --data".into()));
    }
    let model = or_default(&args.model, &cfg.paths.model);
    require_file(&model, "model directory")?;
    let ls = LearningSystem::load_dir(&model)?;
    let start = StartBelief::for_system(&ls);
    let longest = *EVAL_HORIZONS.iter().max().expect("horizons");
    let mut report = serde_json::Map::new();
    if let Some(path) = &args.trace {
        require_file(path, "trace")?;
        let trace = EpisodeTrace::load_jsonl(path)?;
        let observations: Vec<_> = trace.steps.iter().map(|s| s.observation.clone()).collect();
        let actions: Vec<_> = trace
            .steps
            .iter()
            .map(|s| manic_core::ActionVector::new(s.action.clone()))
            .collect();
        let beliefs: Vec<Vec<f64>> = trace.steps.iter().filter_map(|s| s.belief.clone()).collect();
        let states: Vec<Vec<f64>> = trace
            .steps
            .iter()
            .filter(|s| s.belief.is_some())
            .map(|s| s.state.clone())
            .collect();
        let horizons: Vec<usize> = EVAL_HORIZONS.iter().copied().filter(|&h| h < observations.len()).collect();
        let starts = spaced_starts(observations.len(), horizons.iter().copied().max().unwrap_or(0), args.starts);
        let table = if horizons.is_empty() {
            Vec::new()
        } else {
            rollout_table(&ls, &observations, &actions, &starts, &horizons, start)?
        };
        report.insert(
            "trace".into(),
            json!({
                "steps": trace.len(),
                "mean_error_norm": trace.mean_error_norm(),
                "rollout": table,
                "r2": r2_report(&beliefs, &states),
            }),
        );
    }
    if let Some(path) = &args.data {
        require_file(path, "dataset")?;
        let ds = WalkDataset::load(path)?;
        let starts = spaced_starts(ds.len(), longest, args.starts);
        let table = rollout_table(&ls, &ds.observations, &ds.actions, &starts, &EVAL_HORIZONS, start)?;
        let beliefs: Vec<Vec<f64>> = ds
            .observations
            .iter()
            .map(|x| start.belief(&ls, x).map(|b| b.into_inner()))
            .collect::<manic_core::Result<_>>()?;
        report.insert(
            "data".into(),
            json!({
                "frames": ds.len(),
                "rollout": table,
                "quality": belief_quality(&beliefs, ds.true_states.as_ref()),
            }),
        );
    }
    let report = Value::Object(report);
    if let Some(out) = &args.out {
        let _lock = OutputLock::acquire(out)?;
        check_overwrite(out, args.force)?;
        write_atomic(out, &serde_json::to_vec_pretty(&report)?)?;
        write_record(out, "eval", cfg, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct TeachArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub contentment: Option<PathBuf>,
    #[arg(long)]
    pub store_dir: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
}

/// File under the store where retrained `h` snapshots are kept.
pub const STORE_CONTENTMENT: &str = "h.mncm";

pub fn build_teacher(cfg: &RunConfig, args: &TeachArgs) -> CliResult<TeacherService> {
    let model = or_default(&args.model, &cfg.paths.model);
    require_file(&model, "model directory")?;
    let store_dir = or_default(&args.store_dir, &cfg.paths.store);
    let ls = LearningSystem::load_dir(&model)?;
    let stored = store_dir.join(STORE_CONTENTMENT);
    let source = if stored.exists() {
        Some(stored)
    } else {
        args.contentment.clone()
    };
    let cm = contentment_or_fresh(source.as_deref(), cfg, ls.belief_dims())?;
    let space = make_env(cfg.env, cfg.noise).action_space();
    let svc = TeacherService::new(
        Store::open(&store_dir)?,
        Arc::new(ls),
        space,
        ContentmentHandle::new(cm),
        cfg.preference.clone(),
        cfg.teach.generate.clone(),
    )?;
    svc.set_status(AgentStatus {
        agent_mode: format!("{:?}", cfg.agent.mode).to_lowercase(),
        ..AgentStatus::default()
    });
    Ok(svc.persist_contentment_to(store_dir.join(STORE_CONTENTMENT)))
}

/// Serves the teacher API until interrupted.
pub fn teach(cfg: &RunConfig, args: &TeachArgs) -> CliResult<Value> {
    let svc = Arc::new(build_teacher(cfg, args)?);
    let port = args.port.unwrap_or(cfg.teach.port);
    let app = router(svc, args.static_dir.as_deref());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
        eprintln!("teacher service on http://{}", listener.local_addr()?);
        tokio::select! {
            r = serve(listener, app) => r,
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })?;
    Ok(json!({ "port": port }))
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Starting `h`; fresh when omitted.
    #[arg(long)]
    pub contentment: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

pub fn evolve(cfg: &RunConfig, args: &EvolveArgs) -> CliResult<Value> {
    let model = or_default(&args.model, &cfg.paths.model);
    let out = or_default(&args.out, &cfg.paths.contentment);
    require_file(&model, "model directory")?;
    let _lock = OutputLock::acquire(&out)?;
    check_overwrite(&out, args.force)?;
    let ls = LearningSystem::load_dir(&model)?;
    let base = contentment_or_fresh(args.contentment.as_deref(), cfg, ls.belief_dims())?;
    let env = make_env(cfg.env, cfg.noise);
    let target = cfg.evolve.target.clone();
    if target.len() != env.state().len() {
        return Err(CliError::Usage(format!(
            "evolve.target has {} entries, the environment state has {}",
            target.len(),
            env.state().len()
        )));
    }
    let seeds: Vec<u64> = (0..cfg.evolve.episodes as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let scorer = EpisodeScorer::new(env, ls, cfg.agent.clone(), cfg.evolve.steps, seeds, move |s: &[f64]| {
        -s.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    });
    let mut search = cfg.evolve.search.clone();
    if let Some(g) = args.generations {
        search.generations = g;
    }
    let report = evolve_contentment(&base, &scorer, &search)?;
    write_atomic(&out, &report.best.h.to_bytes())?;
    let metrics = json!({
        "best_fitness": report.best_fitness,
        "best_per_generation": report.best_per_generation,
        "h": report.best.hash(),
    });
    write_record(&out, "evolve", cfg, &metrics)?;
    Ok(metrics)
}
