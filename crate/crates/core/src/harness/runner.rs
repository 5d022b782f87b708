//! The curriculum loop: each worker owns an environment and a progression,
//! all workers feed one shared Q-table.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{BudgetUnit, EnvironmentKind, ExperimentConfig, ProgressionConfig, Spacing};
use super::stats::{mean_ci95, MeanCi};
use crate::envs::{Action, CurriculumEnv, GridWorld, GridWorldLayout, PredatorPrey, StateKey};
use crate::error::{Error, Result};
use crate::learner::{performance, PerformanceKind, QTable};
use crate::mapping::{map_complexity, MappingSpec, TaskParameters};
use crate::noise::{apply_noise, NoiseFunction};
use crate::progression::{
    solve_mass, Complexity, ExponentialParams, FrictionFormulation, FrictionParams, LinearParams,
    Progression,
};

/// Bounds from which per-worker progression parameters are spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamBounds {
    Exponential {
        s_min: f64,
        s_max: f64,
        spacing: Spacing,
    },
    Friction {
        interval_min: usize,
        /// When absent: 10x `interval_min` for more than four workers, 3x otherwise.
        interval_max: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkerParam {
    Slope(f64),
    Interval(usize),
}

/// Spreads progression parameters over `workers` so that the extremes of
/// the range are always covered.
pub fn assign_worker_params(bounds: ParamBounds, workers: usize) -> Result<Vec<WorkerParam>> {
    if workers == 0 {
        return Err(Error::invalid("workers", "must be at least 1"));
    }
    let frac = |k: usize| {
        if workers == 1 {
            0.0
        } else {
            k as f64 / (workers - 1) as f64
        }
    };
    match bounds {
        ParamBounds::Exponential {
            s_min,
            s_max,
            spacing,
        } => {
            if workers == 1 {
                let s = match spacing {
                    Spacing::Geometric => s_min.signum() * (s_min * s_max).sqrt(),
                    Spacing::Linear => 0.5 * (s_min + s_max),
                };
                return Ok(vec![WorkerParam::Slope(s)]);
            }
            Ok((0..workers)
                .map(|k| {
                    let s = match (k, spacing) {
                        (0, _) => s_min,
                        (k, _) if k == workers - 1 => s_max,
                        (k, Spacing::Geometric) => s_min * (s_max / s_min).powf(frac(k)),
                        (k, Spacing::Linear) => s_min + (s_max - s_min) * frac(k),
                    };
                    WorkerParam::Slope(s)
                })
                .collect())
        }
        ParamBounds::Friction {
            interval_min,
            interval_max,
        } => {
            let factor = if workers > 4 { 10 } else { 3 };
            let max = interval_max.unwrap_or(interval_min * factor);
            Ok((0..workers)
                .map(|k| {
                    let i = interval_min as f64 + (max as f64 - interval_min as f64) * frac(k);
                    WorkerParam::Interval((i.round() as usize).max(1))
                })
                .collect())
        }
    }
}

/// Row of `trace.csv`: one per training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub worker: usize,
    pub episode: u64,
    /// Environment steps consumed when the episode ended (across all
    /// workers in round-robin mode, per worker in threaded mode).
    pub step: u64,
    pub complexity: f64,
    pub noisy_complexity: f64,
    pub episode_return: f64,
    pub performance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub seed: u64,
    /// Training episodes completed (all workers) before the evaluation.
    pub episode: u64,
    /// Budget consumed before the evaluation, in budget units.
    pub progress: u64,
    pub metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub complexity: Complexity,
    pub noisy_complexity: Complexity,
    pub episode_return: f64,
    pub length: u32,
    pub performance: f64,
    /// Whether this episode had to build a new task.
    pub rebuilt_task: bool,
}

/// Access to the shared learner from inside an episode.
pub trait LearnerHandle {
    fn act(&mut self, key: StateKey, rng: &mut ChaCha8Rng) -> Action;
    fn learn(&mut self, s: StateKey, a: Action, r: f64, next: StateKey, done: bool);
}

impl LearnerHandle for QTable {
    fn act(&mut self, key: StateKey, rng: &mut ChaCha8Rng) -> Action {
        self.select_action(key, rng)
    }

    fn learn(&mut self, s: StateKey, a: Action, r: f64, next: StateKey, done: bool) {
        self.update(s, a, r, next, done);
    }
}

/// Threaded mode: every read and write goes through the one lock.
impl LearnerHandle for &Mutex<QTable> {
    fn act(&mut self, key: StateKey, rng: &mut ChaCha8Rng) -> Action {
        self.lock()
            .expect("learner lock poisoned")
            .select_action(key, rng)
    }

    fn learn(&mut self, s: StateKey, a: Action, r: f64, next: StateKey, done: bool) {
        self.lock()
            .expect("learner lock poisoned")
            .update(s, a, r, next, done);
    }
}

/// Everything a worker needs besides its own state.
pub struct EpisodeContext<'a> {
    pub mapping: &'a MappingSpec,
    pub noise: &'a NoiseFunction,
    pub performance: PerformanceKind,
    pub unit: BudgetUnit,
}

pub struct WorkerState {
    pub worker_id: usize,
    pub progression: Progression,
    pub env: Box<dyn CurriculumEnv>,
    pub task: Option<TaskParameters>,
    pub last_complexity: Option<Complexity>,
    pub noisy_complexity: Complexity,
    pub episodes: u64,
    /// Budget units this worker has consumed; the clock of fixed progressions.
    pub elapsed: u64,
    pub steps: u64,
    pub tasks_built: u64,
    env_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
}

impl WorkerState {
    pub fn new(
        worker_id: usize,
        progression: Progression,
        env: Box<dyn CurriculumEnv>,
        seed: u64,
    ) -> Self {
        Self {
            worker_id,
            progression,
            env,
            task: None,
            last_complexity: None,
            noisy_complexity: Complexity::EASIEST,
            episodes: 0,
            elapsed: 0,
            steps: 0,
            tasks_built: 0,
            env_rng: stream_rng(seed, Stream::Env, worker_id as u64),
            policy_rng: stream_rng(seed, Stream::Policy, worker_id as u64),
        }
    }
}

/// Runs one training episode for `w`: query the progression, rebuild the
/// task if the complexity changed (noise, then mapping), play the episode
/// with the shared learner and report the performance back.
pub fn run_worker_episode<L: LearnerHandle + ?Sized>(
    w: &mut WorkerState,
    learner: &mut L,
    ctx: &EpisodeContext<'_>,
) -> Result<EpisodeRecord> {
    let wrap = |worker: usize, episode: u64| {
        move |e: Error| Error::Worker {
            worker,
            episode,
            source: Box::new(e),
        }
    };
    let c = w.progression.complexity(w.elapsed);
    let rebuilt_task = w.last_complexity != Some(c);
    if rebuilt_task {
        let noisy = apply_noise(ctx.noise, c);
        w.task = Some(map_complexity(ctx.mapping, noisy));
        w.last_complexity = Some(c);
        w.noisy_complexity = noisy;
        w.tasks_built += 1;
    }
    let task = w.task.as_ref().expect("task built above");

    let mut key = w
        .env
        .reset_task(task, &mut w.env_rng)
        .map_err(wrap(w.worker_id, w.episodes))?;
    let mut episode_return = 0.0;
    let mut length = 0u32;
    let reached_goal = loop {
        let action = learner.act(key, &mut w.policy_rng);
        let out = w.env.step(action).map_err(wrap(w.worker_id, w.episodes))?;
        learner.learn(key, action, out.reward, out.key, out.done);
        episode_return += out.reward;
        length += 1;
        key = out.key;
        if out.done {
            break out.reached_goal;
        }
    };

    let perf = performance(
        ctx.performance,
        w.episodes,
        episode_return,
        length,
        reached_goal,
    );
    w.progression.observe(perf.value);
    let record = EpisodeRecord {
        episode: w.episodes,
        complexity: c,
        noisy_complexity: w.noisy_complexity,
        episode_return,
        length,
        performance: perf.value,
        rebuilt_task,
    };
    w.episodes += 1;
    w.steps += length as u64;
    w.elapsed += match ctx.unit {
        BudgetUnit::Episodes => 1,
        BudgetUnit::Steps => length as u64,
    };
    Ok(record)
}

/// Greedy rollouts on the final task. Grid World reports the return from
/// the designated start, Predator-Prey the survival time.
pub fn evaluate(
    q: &QTable,
    env: &mut dyn CurriculumEnv,
    environment: EnvironmentKind,
    episodes: u32,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut key = env.reset_final(rng)?;
        let (mut ret, mut len) = (0.0, 0u32);
        loop {
            let out = env.step(q.greedy(key))?;
            ret += out.reward;
            len += 1;
            key = out.key;
            if out.done {
                break;
            }
        }
        total += match environment {
            EnvironmentKind::Gridworld => ret,
            EnvironmentKind::PredatorPrey => len as f64,
        };
    }
    Ok(total / episodes as f64)
}

#[derive(Clone, Copy)]
enum Stream {
    Env = 1,
    Policy = 2,
    Progression = 3,
    Noise = 4,
    Eval = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream as u64) ^ index)
}

fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, stream, index))
}

#[derive(Debug, Clone)]
enum ProgressionTemplate {
    Constant,
    Linear(LinearParams),
    Exponential(ExponentialParams),
    Friction {
        params: FrictionParams,
        baseline: f64,
    },
}

impl ProgressionTemplate {
    fn instantiate(&self, seed: u64) -> Progression {
        match self {
            ProgressionTemplate::Constant => Progression::Constant(Complexity::FINAL),
            ProgressionTemplate::Linear(p) => Progression::Linear(*p),
            ProgressionTemplate::Exponential(p) => Progression::Exponential(*p),
            ProgressionTemplate::Friction { params, baseline } => {
                Progression::friction(*params, *baseline, seed)
            }
        }
    }
}

/// Results of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: Vec<TraceRow>,
    pub evals: Vec<EvalRow>,
    /// Per worker: how many distinct tasks were built.
    pub tasks_built: Vec<u64>,
    pub q_table: QTable,
}

impl SeedRun {
    pub fn final_metric(&self) -> Option<f64> {
        self.evals.last().map(|e| e.metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub progress: u64,
    pub stats: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetric {
    pub seed: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    /// Last evaluation of each seed, aggregated.
    pub final_metric: Option<MeanCi>,
    pub per_seed_final: Vec<SeedMetric>,
    pub curve: Vec<CurvePoint>,
    pub config: ExperimentConfig,
    pub git_describe: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn trace(&self) -> impl Iterator<Item = &TraceRow> {
        self.runs.iter().flat_map(|r| r.trace.iter())
    }

    pub fn evals(&self) -> impl Iterator<Item = &EvalRow> {
        self.runs.iter().flat_map(|r| r.evals.iter())
    }
}

/// A validated, resolved experiment ready to run seed by seed.
pub struct ExperimentPlan {
    config: ExperimentConfig,
    mapping: MappingSpec,
    performance: PerformanceKind,
    layout: Option<Arc<GridWorldLayout>>,
    final_task: TaskParameters,
    templates: Vec<ProgressionTemplate>,
}

impl ExperimentPlan {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let config = config.resolved()?;
        let mapping = config
            .mapping
            .clone()
            .expect("resolved config has a mapping");
        let performance = config
            .performance
            .expect("resolved config has a performance kind");
        let layout = match config.environment {
            EnvironmentKind::Gridworld => Some(Arc::new(config.load_layout()?)),
            EnvironmentKind::PredatorPrey => None,
        };
        let final_task = map_complexity(&mapping, Complexity::FINAL);
        let templates = Self::templates(&config)?;
        Ok(Self {
            config,
            mapping,
            performance,
            layout,
            final_task,
            templates,
        })
    }

    fn templates(cfg: &ExperimentConfig) -> Result<Vec<ProgressionTemplate>> {
        let n = cfg.workers;
        let end_step = |fraction: f64| {
            let per_worker = cfg.budget.amount as f64 / n as f64;
            ((fraction * per_worker).round() as u64).max(1)
        };
        match &cfg.progression {
            ProgressionConfig::None => Ok(vec![ProgressionTemplate::Constant; n]),
            ProgressionConfig::Linear { end_fraction } => Ok(vec![
                ProgressionTemplate::Linear(
                    LinearParams::new(end_step(*end_fraction))?
                );
                n
            ]),
            ProgressionConfig::Exponential {
                end_fraction,
                s_min,
                s_max,
                spacing,
            } => assign_worker_params(
                ParamBounds::Exponential {
                    s_min: *s_min,
                    s_max: *s_max,
                    spacing: *spacing,
                },
                n,
            )?
            .into_iter()
            .map(|p| match p {
                WorkerParam::Slope(s) => Ok(ProgressionTemplate::Exponential(
                    ExponentialParams::new(end_step(*end_fraction), s)?,
                )),
                WorkerParam::Interval(_) => unreachable!("exponential bounds yield slopes"),
            })
            .collect(),
            ProgressionConfig::Friction {
                formulation,
                interval_min,
                interval_max,
                target_performance,
                baseline_performance,
                gravity,
            } => {
                let baseline = baseline_performance.expect("resolved");
                let target = target_performance.expect("resolved");
                let mass = solve_mass(target - baseline, *gravity)?;
                assign_worker_params(
                    ParamBounds::Friction {
                        interval_min: *interval_min,
                        interval_max: *interval_max,
                    },
                    n,
                )?
                .into_iter()
                .map(|p| match p {
                    WorkerParam::Interval(i) => Ok(ProgressionTemplate::Friction {
                        params: FrictionParams::with_gravity(mass, *gravity, i, *formulation)?,
                        baseline,
                    }),
                    WorkerParam::Slope(_) => unreachable!("friction bounds yield intervals"),
                })
                .collect()
            }
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn mapping(&self) -> &MappingSpec {
        &self.mapping
    }

    pub fn make_env(&self) -> Box<dyn CurriculumEnv> {
        match &self.layout {
            Some(layout) => Box::new(GridWorld::new(layout.clone())),
            None => Box::new(PredatorPrey::new(
                self.config.predator_prey.clone(),
                self.final_task.clone(),
            )),
        }
    }

    pub fn new_worker(&self, worker_id: usize, seed: u64) -> WorkerState {
        let progression = self.templates[worker_id].instantiate(stream_seed(
            seed,
            Stream::Progression,
            worker_id as u64,
        ));
        WorkerState::new(worker_id, progression, self.make_env(), seed)
    }

    pub fn noise_for_seed(&self, seed: u64) -> Result<NoiseFunction> {
        self.config
            .noise
            .generate(&mut stream_rng(seed, Stream::Noise, 0))
    }

    /// Friction readout of worker 0, if the progression is friction-based.
    pub fn formulation(&self) -> Option<FrictionFormulation> {
        match &self.config.progression {
            ProgressionConfig::Friction { formulation, .. } => Some(*formulation),
            _ => None,
        }
    }

    pub fn run_seed(&self, seed: u64) -> Result<SeedRun> {
        if self.config.threads {
            self.run_seed_threaded(seed)
        } else {
            self.run_seed_round_robin(seed)
        }
    }

    /// Deterministic schedule: workers take turns, one episode each.
    fn run_seed_round_robin(&self, seed: u64) -> Result<SeedRun> {
        let cfg = &self.config;
        let budget = cfg.budget;
        let noise = self.noise_for_seed(seed)?;
        let ctx = EpisodeContext {
            mapping: &self.mapping,
            noise: &noise,
            performance: self.performance,
            unit: budget.unit,
        };
        let mut q = QTable::from_config(&cfg.learner);
        let mut workers: Vec<WorkerState> = (0..cfg.workers)
            .map(|id| self.new_worker(id, seed))
            .collect();
        let mut eval_env = self.make_env();
        let mut eval_rng = stream_rng(seed, Stream::Eval, 0);

        let mut trace = Vec::new();
        let mut evals = Vec::new();
        let (mut consumed, mut global_steps, mut episodes) = (0u64, 0u64, 0u64);
        let mut next_eval = budget.eval_every;
        'training: loop {
            for w in workers.iter_mut() {
                if consumed >= budget.amount {
                    break 'training;
                }
                q.set_epsilon(
                    cfg.learner
                        .epsilon
                        .at(consumed as f64 / budget.amount as f64),
                );
                let rec = run_worker_episode(w, &mut q, &ctx)?;
                consumed += match budget.unit {
                    BudgetUnit::Episodes => 1,
                    BudgetUnit::Steps => rec.length as u64,
                };
                global_steps += rec.length as u64;
                episodes += 1;
                trace.push(trace_row(seed, w.worker_id, &rec, global_steps));

                while consumed >= next_eval && next_eval <= budget.amount {
                    let metric = evaluate(
                        &q,
                        eval_env.as_mut(),
                        cfg.environment,
                        budget.eval_episodes,
                        &mut eval_rng,
                    )?;
                    evals.push(EvalRow {
                        seed,
                        episode: episodes,
                        progress: next_eval,
                        metric,
                    });
                    next_eval += budget.eval_every;
                }
            }
        }
        Ok(SeedRun {
            seed,
            trace,
            evals,
            tasks_built: workers.iter().map(|w| w.tasks_built).collect(),
            q_table: q,
        })
    }

    /// One thread per worker; the Q-table sits behind a single lock. Each
    /// worker gets an equal share of the budget, and only the final policy
    /// is evaluated.
    fn run_seed_threaded(&self, seed: u64) -> Result<SeedRun> {
        let cfg = &self.config;
        let budget = cfg.budget;
        let noise = self.noise_for_seed(seed)?;
        let ctx = EpisodeContext {
            mapping: &self.mapping,
            noise: &noise,
            performance: self.performance,
            unit: budget.unit,
        };
        let learner = Mutex::new(QTable::from_config(&cfg.learner));
        let n = cfg.workers as u64;
        let workers: Vec<WorkerState> = (0..cfg.workers)
            .map(|id| self.new_worker(id, seed))
            .collect();

        let results: Vec<Result<(Vec<TraceRow>, u64, u64)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = workers
                .into_iter()
                .map(|mut w| {
                    let share =
                        budget.amount / n + u64::from((w.worker_id as u64) < budget.amount % n);
                    let (ctx, learner) = (&ctx, &learner);
                    let schedule = cfg.learner.epsilon;
                    scope.spawn(move || {
                        let mut handle = learner;
                        let mut rows = Vec::new();
                        while w.elapsed < share {
                            let eps = schedule.at(w.elapsed as f64 / share.max(1) as f64);
                            learner
                                .lock()
                                .expect("learner lock poisoned")
                                .set_epsilon(eps);
                            let rec = run_worker_episode(&mut w, &mut handle, ctx)?;
                            rows.push(trace_row(seed, w.worker_id, &rec, w.steps));
                        }
                        Ok((rows, w.tasks_built, w.episodes))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .collect()
        });

        let mut trace = Vec::new();
        let mut tasks_built = Vec::new();
        let mut episodes = 0;
        for r in results {
            let (rows, built, eps) = r?;
            trace.extend(rows);
            tasks_built.push(built);
            episodes += eps;
        }
        trace.sort_by_key(|r| (r.worker, r.episode));

        let q = learner.into_inner().expect("learner lock poisoned");
        let mut eval_env = self.make_env();
        let mut eval_rng = stream_rng(seed, Stream::Eval, 0);
        let metric = evaluate(
            &q,
            eval_env.as_mut(),
            cfg.environment,
            budget.eval_episodes,
            &mut eval_rng,
        )?;
        Ok(SeedRun {
            seed,
            trace,
            evals: vec![EvalRow {
                seed,
                episode: episodes,
                progress: budget.amount,
                metric,
            }],
            tasks_built,
            q_table: q,
        })
    }

    pub fn summarize(&self, runs: &[SeedRun]) -> Summary {
        let per_seed_final: Vec<SeedMetric> = runs
            .iter()
            .filter_map(|r| {
                r.final_metric().map(|value| SeedMetric {
                    seed: r.seed,
                    value,
                })
            })
            .collect();
        let finals: Vec<f64> = per_seed_final.iter().map(|m| m.value).collect();
        let mut by_progress: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for e in runs.iter().flat_map(|r| &r.evals) {
            by_progress.entry(e.progress).or_default().push(e.metric);
        }
        let curve = by_progress
            .into_iter()
            .filter_map(|(progress, vals)| {
                mean_ci95(&vals).map(|stats| CurvePoint { progress, stats })
            })
            .collect();
        Summary {
            metric: self.config.environment.metric_name().to_string(),
            final_metric: mean_ci95(&finals),
            per_seed_final,
            curve,
            config: self.config.clone(),
            git_describe: "unknown".to_string(),
        }
    }

    pub fn run(&self) -> Result<ExperimentResult> {
        let runs = self
            .config
            .seeds
            .iter()
            .map(|&seed| self.run_seed(seed))
            .collect::<Result<Vec<_>>>()?;
        let summary = self.summarize(&runs);
        Ok(ExperimentResult { runs, summary })
    }
}

fn trace_row(seed: u64, worker: usize, rec: &EpisodeRecord, step: u64) -> TraceRow {
    TraceRow {
        seed,
        worker,
        episode: rec.episode,
        step,
        complexity: rec.complexity.value(),
        noisy_complexity: rec.noisy_complexity.value(),
        episode_return: rec.episode_return,
        performance: rec.performance,
    }
}

/// Validates `cfg`, runs every seed and aggregates the final evaluations.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    ExperimentPlan::new(cfg)?.run()
}
