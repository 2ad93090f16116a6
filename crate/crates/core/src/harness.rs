//! The full optimization loop: coupled oracle evaluations, per-iteration MAP
//! refits of both models, acquisition of the next candidate, regret
//! bookkeeping, seeded parallel repetitions, and aggregation.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::acquisition::{self, AcquisitionContext, SearchOptions};
use crate::baselines::{self, PenaltyStrategy};
use crate::benchmarks::{self, BenchmarkId, BenchmarkSpec, HybridObservation};
use crate::error::{Error, Result};
use crate::exec::{self, derive_seed};
use crate::gp::{GpDataset, GpModel};
use crate::gpcr::{EpOptions, GpcrHyper, GpcrModel, HybridDataset, SiteParams};
use crate::hyperopt::{self, BetaPrior, GammaPrior, MapOptions, PriorSpec};

/// Which optimizer drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Eic2,
    Hc,
    Mc,
    Ac,
}

impl Method {
    pub fn all() -> [Method; 4] {
        [Self::Eic2, Self::Hc, Self::Mc, Self::Ac]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Eic2 => "eic2",
            Self::Hc => "hc",
            Self::Mc => "mc",
            Self::Ac => "ac",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eic2" => Ok(Self::Eic2),
            "hc" => Ok(Self::Hc),
            "mc" => Ok(Self::Mc),
            "ac" => Ok(Self::Ac),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected eic2|hc|mc|ac)"
            ))),
        }
    }
}

/// A full experiment description: problem, method, budgets, seed, priors and
/// solver options. Everything a repetition needs is derived from this value.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkId,
    pub method: Method,
    pub iterations: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub objective_priors: PriorSpec,
    pub constraint_priors: PriorSpec,
    pub delta: f64,
    pub ep: EpOptions,
    pub search: SearchOptions,
    pub map: MapOptions,
    pub noise_std_objective: Option<f64>,
    pub noise_std_constraint: Option<f64>,
}

impl ExperimentConfig {
    /// Per-benchmark defaults: shared Beta(1.5, 15) lengthscale prior, the
    /// benchmark's Gamma scale priors, a Gamma(2, 1) threshold prior, fixed
    /// noise deviation 0.01 on both channels, and the protocol budgets of
    /// 100 iterations x 100 repetitions.
    pub fn defaults(benchmark: BenchmarkId, method: Method) -> Self {
        let lengthscale = BetaPrior { alpha: 1.5, beta: 15.0 };
        let (objective_scale, constraint_scale) = match benchmark {
            BenchmarkId::Michalewicz10 => (
                GammaPrior { shape: 2.0, rate: 1.0 },
                GammaPrior { shape: 2.0, rate: 2.0 },
            ),
            BenchmarkId::Hartman6 => (
                GammaPrior { shape: 2.0, rate: 0.5 },
                GammaPrior { shape: 2.0, rate: 1.0 },
            ),
            BenchmarkId::EggCrate2 => (
                GammaPrior { shape: 2.0, rate: 1.0 },
                GammaPrior { shape: 2.0, rate: 1.0 },
            ),
        };
        let threshold = GammaPrior { shape: 2.0, rate: 1.0 };
        let noise_variance = 0.01 * 0.01;
        Self {
            benchmark,
            method,
            iterations: 100,
            repetitions: 100,
            seed: 0,
            objective_priors: PriorSpec {
                lengthscale,
                scale: objective_scale,
                threshold,
                noise_variance,
                threshold_anchor: 0.0,
            },
            constraint_priors: PriorSpec {
                lengthscale,
                scale: constraint_scale,
                threshold,
                noise_variance,
                threshold_anchor: 0.0,
            },
            delta: 0.1,
            ep: EpOptions::default(),
            search: SearchOptions::default(),
            map: MapOptions::default(),
            noise_std_objective: None,
            noise_std_constraint: None,
        }
    }

    /// The benchmark with any configured noise overrides applied.
    pub fn benchmark_spec(&self) -> BenchmarkSpec {
        let mut spec = BenchmarkSpec::load(self.benchmark);
        if let Some(s) = self.noise_std_objective {
            spec.noise_std_objective = s;
        }
        if let Some(s) = self.noise_std_constraint {
            spec.noise_std_constraint = s;
        }
        spec
    }

    /// Seed of repetition `rep`, from the documented counter scheme.
    pub fn repetition_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, rep as u64)
    }
}

/// One evaluated iteration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub success: bool,
    pub objective_obs: Option<f64>,
    pub constraint_obs: Option<f64>,
    /// Best constrained objective observation after this iteration.
    pub eta_cons: Option<f64>,
    /// Threshold estimate after this iteration's refit; absent for baselines.
    pub c_hat: Option<f64>,
    /// Instantaneous simple regret; present only on success.
    pub regret: Option<f64>,
    /// Running minimum of the instantaneous regrets so far.
    pub regret_best: Option<f64>,
}

/// A completed (or partially completed) run of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTrace {
    pub records: Vec<IterationRecord>,
    pub x_best: Option<Vec<f64>>,
    /// False when the final report had to fall back to the most-probably-safe
    /// probe because nothing reached the feasibility level.
    pub best_feasible: bool,
    pub final_c_hat: Option<f64>,
    pub failure_count: usize,
    /// False when a numerical failure survived the retry and cut the run
    /// short; the partial records are preserved.
    pub completed: bool,
    pub wall_clock_secs: f64,
}

impl ExperimentTrace {
    /// Instantaneous regret at the last successful iteration.
    pub fn final_regret(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.regret)
    }

    pub fn best_regret(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.regret_best)
    }
}

/// Instantaneous simple regret of each observation against the reference
/// minimum, plus its running best-so-far series.
pub fn simple_regret(
    objective_obs: &[Option<f64>],
    f_min: f64,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let mut best: Option<f64> = None;
    let mut instant = Vec::with_capacity(objective_obs.len());
    let mut running = Vec::with_capacity(objective_obs.len());
    for obs in objective_obs {
        let r = obs.map(|y| y - f_min);
        if let Some(r) = r {
            best = Some(best.map_or(r, |b| b.min(r)));
        }
        instant.push(r);
        running.push(best);
    }
    (instant, running)
}

struct RunState {
    evals: Vec<(Vec<f64>, HybridObservation)>,
    gp_data: GpDataset,
    hybrid: HybridDataset,
    eta_cons: Option<f64>,
    warm_sites: Option<SiteParams>,
    records: Vec<IterationRecord>,
    best_success: Option<(Vec<f64>, f64)>,
}

impl RunState {
    fn new() -> Self {
        Self {
            evals: Vec::new(),
            gp_data: GpDataset::empty(),
            hybrid: HybridDataset::default(),
            eta_cons: None,
            warm_sites: None,
            records: Vec::new(),
            best_success: None,
        }
    }

    /// Folds one oracle outcome into the datasets, maintaining the coupled
    /// invariants the observation model promises.
    fn absorb(&mut self, x: Vec<f64>, obs: HybridObservation, f_min: f64, n: usize) -> Result<()> {
        self.evals.push((x.clone(), obs));
        if let (Some(y_f), Some(y_g)) = (obs.objective_value(), obs.constraint_value()) {
            self.gp_data.push(x.clone(), y_f)?;
            // Keep warm sites aligned: a new safe site enters at the end of
            // the safe block.
            if let Some(w) = &mut self.warm_sites {
                let at = self.hybrid.n_safe();
                w.precisions.insert(at, 0.0);
                w.shifts.insert(at, 0.0);
            }
            self.hybrid.push_safe(x.clone(), y_g)?;
            self.eta_cons = Some(self.eta_cons.map_or(y_f, |e| e.min(y_f)));
            if self.best_success.as_ref().is_none_or(|(_, b)| y_f < *b) {
                self.best_success = Some((x.clone(), y_f));
            }
        } else {
            if let Some(w) = &mut self.warm_sites {
                w.precisions.push(0.0);
                w.shifts.push(0.0);
            }
            self.hybrid.push_fail(x.clone())?;
        }

        // Coupled-evaluation invariant: the objective dataset and the safe
        // block of the hybrid dataset always hold exactly the same inputs.
        assert_eq!(
            self.gp_data.inputs(),
            self.hybrid.safe_inputs(),
            "objective and constraint datasets diverged"
        );
        assert_eq!(self.gp_data.len() + self.hybrid.n_fail(), self.evals.len());

        let regret = obs.objective_value().map(|y| y - f_min);
        let regret_best = match (regret, self.records.last().and_then(|r| r.regret_best)) {
            (Some(r), Some(b)) => Some(r.min(b)),
            (Some(r), None) => Some(r),
            (None, prev) => prev,
        };
        // Monotonicity of the incumbent.
        if let (Some(prev), Some(now)) = (
            self.records.last().and_then(|r| r.eta_cons),
            self.eta_cons,
        ) {
            assert!(now <= prev, "best constrained observation increased");
        }
        self.records.push(IterationRecord {
            iteration: n,
            x,
            success: obs.is_success(),
            objective_obs: obs.objective_value(),
            constraint_obs: obs.constraint_value(),
            eta_cons: self.eta_cons,
            c_hat: None,
            regret,
            regret_best,
        });
        Ok(())
    }
}

/// Fits both models at the current datasets. The objective model only sees
/// successes; the constraint model sees the full hybrid record.
fn fit_models(
    config: &ExperimentConfig,
    state: &RunState,
    rep_seed: u64,
    n: usize,
    base_jitter: f64,
) -> Result<(GpModel, GpcrModel)> {
    let map_obj = hyperopt::map_fit_objective(
        &state.gp_data,
        &config.objective_priors,
        &config.map,
        derive_seed(rep_seed, (n * 8 + 1) as u64),
    );
    let objective = GpModel::fit_with_jitter(
        state.gp_data.clone(),
        map_obj.hyper,
        config.objective_priors.noise_variance,
        base_jitter,
    )?;

    let map_gpcr = hyperopt::map_fit_gpcr(
        &state.hybrid,
        &config.constraint_priors,
        &config.map,
        &config.ep,
        state.warm_sites.as_ref(),
        derive_seed(rep_seed, (n * 8 + 2) as u64),
    )?;
    let threshold = map_gpcr.threshold.expect("gpcr fit always carries a threshold");
    if let Some(y_max) = state.hybrid.y_max() {
        assert!(threshold > y_max, "threshold {threshold} violates its support (y_max {y_max})");
    }
    let constraint = GpcrModel::fit_with_jitter(
        state.hybrid.clone(),
        GpcrHyper {
            kernel: map_gpcr.hyper.clone(),
            noise_variance: config.constraint_priors.noise_variance,
            threshold,
        },
        &config.ep,
        state.warm_sites.as_ref(),
        derive_seed(rep_seed, (n * 8 + 3) as u64),
        base_jitter,
    )?;
    Ok((objective, constraint))
}

enum PlanOutcome {
    Next(Vec<f64>),
    Report { point: Vec<f64>, feasible: bool },
}

struct Plan {
    outcome: PlanOutcome,
    c_hat: f64,
    sites: SiteParams,
}

/// Refits both models and either picks the next candidate or, at the last
/// iteration, produces the final report. Conditioning failures get one retry
/// with a stiffer starting jitter.
fn plan_step(config: &ExperimentConfig, state: &RunState, rep_seed: u64, n: usize) -> Result<Plan> {
    let (objective, constraint) =
        match fit_models(config, state, rep_seed, n, crate::kernel::DEFAULT_JITTER) {
            Ok(models) => models,
            Err(_) => fit_models(config, state, rep_seed, n, 1e-6)?,
        };
    let c_hat = constraint.threshold();
    let sites = constraint.ep().sites.clone();
    let constraints = [constraint];
    let ctx = AcquisitionContext {
        objective: &objective,
        constraints: &constraints,
        eta_cons: state.eta_cons,
        delta: config.delta,
    };
    let outcome = if n < config.iterations {
        PlanOutcome::Next(acquisition::maximize(
            &ctx,
            &config.search,
            derive_seed(rep_seed, (n * 8 + 4) as u64),
        )?)
    } else {
        let guess = acquisition::best_guess(
            &ctx,
            &config.search,
            derive_seed(rep_seed, (n * 8 + 5) as u64),
        )?;
        PlanOutcome::Report { point: guess.point, feasible: guess.feasible }
    };
    Ok(Plan { outcome, c_hat, sites })
}

/// One repetition with constrained expected improvement over the learned
/// constraint model; fully deterministic given the repetition seed.
pub fn run_eic2(config: &ExperimentConfig, rep_seed: u64) -> Result<ExperimentTrace> {
    let spec = config.benchmark_spec();
    let start = Instant::now();
    let mut oracle_rng = ChaCha12Rng::seed_from_u64(derive_seed(rep_seed, 0));
    let mut state = RunState::new();
    let mut completed = true;
    let mut x_best = None;
    let mut best_feasible = true;
    let mut final_c_hat = None;

    let mut x_next = benchmarks::sample_safe_start(&spec, &mut oracle_rng)?;
    assert!(
        spec.constraint(&x_next) <= spec.true_threshold,
        "initial point must be safe"
    );

    for n in 1..=config.iterations {
        let obs = benchmarks::crash_oracle(&spec, &x_next, &mut oracle_rng);
        state.absorb(x_next.clone(), obs, spec.f_min, n)?;

        match plan_step(config, &state, rep_seed, n) {
            Ok(plan) => {
                state.warm_sites = Some(plan.sites);
                state.records.last_mut().expect("record just pushed").c_hat = Some(plan.c_hat);
                final_c_hat = Some(plan.c_hat);
                match plan.outcome {
                    PlanOutcome::Next(next) => x_next = next,
                    PlanOutcome::Report { point, feasible } => {
                        x_best = Some(point);
                        best_feasible = feasible;
                    }
                }
            }
            Err(_) => {
                completed = false;
                break;
            }
        }
    }

    Ok(ExperimentTrace {
        failure_count: state.records.iter().filter(|r| !r.success).count(),
        records: state.records,
        x_best,
        best_feasible,
        final_c_hat,
        completed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// One repetition of a penalty baseline: plain expected improvement on the
/// penalized objective dataset. Threshold fields stay empty.
pub fn run_baseline(config: &ExperimentConfig, rep_seed: u64) -> Result<ExperimentTrace> {
    let spec = config.benchmark_spec();
    let strategy = match config.method {
        Method::Hc => PenaltyStrategy::HighCost { bound: spec.hc_bound },
        Method::Mc => PenaltyStrategy::MiddleCost { fallback_bound: spec.hc_bound },
        Method::Ac => PenaltyStrategy::AdaptiveCost { fallback_bound: spec.hc_bound },
        Method::Eic2 => {
            return Err(Error::InvalidParameter(
                "eic2 is not a penalty baseline".into(),
            ))
        }
    };
    let start = Instant::now();
    let mut oracle_rng = ChaCha12Rng::seed_from_u64(derive_seed(rep_seed, 0));
    let mut state = RunState::new();
    let mut completed = true;

    let mut x_next = benchmarks::sample_safe_start(&spec, &mut oracle_rng)?;
    for n in 1..=config.iterations {
        let obs = benchmarks::crash_oracle(&spec, &x_next, &mut oracle_rng);
        state.absorb(x_next.clone(), obs, spec.f_min, n)?;
        if n == config.iterations {
            break;
        }
        let step = baselines::baseline_step(
            &state.evals,
            &strategy,
            &config.objective_priors,
            &config.map,
            &config.search,
            derive_seed(rep_seed, (n * 8 + 6) as u64),
        );
        match step {
            Ok(next) => x_next = next,
            Err(_) => {
                completed = false;
                break;
            }
        }
    }

    Ok(ExperimentTrace {
        failure_count: state.records.iter().filter(|r| !r.success).count(),
        records: state.records,
        x_best: state.best_success.map(|(x, _)| x),
        best_feasible: true,
        final_c_hat: None,
        completed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs one repetition of the configured method.
pub fn run_repetition(config: &ExperimentConfig, rep: usize) -> Result<ExperimentTrace> {
    let rep_seed = config.repetition_seed(rep);
    match config.method {
        Method::Eic2 => run_eic2(config, rep_seed),
        _ => run_baseline(config, rep_seed),
    }
}

/// Runs every repetition, in parallel when the `rayon` feature is active.
/// Trace order always matches repetition order.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<ExperimentTrace>> {
    let results = exec::map_indexed(config.repetitions, |rep| run_repetition(config, rep));
    results.into_iter().collect()
}

/// Aggregate statistics of a batch of traces from one method.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub completed_runs: usize,
    pub mean_final_regret: Option<f64>,
    pub std_final_regret: Option<f64>,
    pub median_final_regret: Option<f64>,
    pub mean_final_regret_best: Option<f64>,
    pub mean_c_hat: Option<f64>,
    pub std_c_hat: Option<f64>,
    pub mean_failures: f64,
    pub total_failures: usize,
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

/// Reduces a batch of traces to summary statistics; permutation invariant.
pub fn aggregate(traces: &[ExperimentTrace]) -> Summary {
    let final_regrets: Vec<f64> = traces.iter().filter_map(ExperimentTrace::final_regret).collect();
    let best_regrets: Vec<f64> = traces.iter().filter_map(ExperimentTrace::best_regret).collect();
    let c_hats: Vec<f64> = traces.iter().filter_map(|t| t.final_c_hat).collect();
    let (mean_final_regret, std_final_regret) = mean_std(&final_regrets).unzip();
    let (mean_c_hat, std_c_hat) = mean_std(&c_hats).unzip();
    let total_failures: usize = traces.iter().map(|t| t.failure_count).sum();
    Summary {
        runs: traces.len(),
        completed_runs: traces.iter().filter(|t| t.completed).count(),
        mean_final_regret,
        std_final_regret,
        median_final_regret: median(&final_regrets),
        mean_final_regret_best: mean_std(&best_regrets).map(|(m, _)| m),
        mean_c_hat,
        std_c_hat,
        mean_failures: if traces.is_empty() {
            0.0
        } else {
            total_failures as f64 / traces.len() as f64
        },
        total_failures,
    }
}
