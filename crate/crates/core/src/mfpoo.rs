//! Multi-fidelity parallel optimistic optimization.
//!
//! Spawns a schedule of MFHOO instances with decreasing `rho`, splits the
//! budget evenly between them, lets them share an evaluation cache and the
//! bias estimator, and returns the candidate that scores best in one fresh
//! top-fidelity evaluation.

use std::collections::HashMap;
use std::f64::consts::{E, LN_2};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::fidelity::{BiasEstimator, BiasModel, BiasSource};
use crate::mfhoo::{
    Aborted, Answer, ConfigError, EvalRecord, Mfhoo, MfhooConfig, Nu, QueryRouter, Recommendation,
    RecommendationMode, RefreshScope, RunResult,
};
use crate::objective::{EvalError, MultiFidelityObjective, Observation};
use crate::partition::CellId;

/// Two queries of the same cell closer than this in fidelity share one evaluation.
pub const REUSE_TOLERANCE: f64 = 0.01;

/// `nu_max` used by the single-fidelity baseline when none is configured.
pub const BASELINE_NU: f64 = 1.0;

const STREAM_MASTER: u64 = 0;
const STREAM_CONFIRM: u64 = 1;
const STREAM_FIRST_INSTANCE: u64 = 2;

/// `N = max(1, round(D_max / 2 * ln(budget / ln budget)))` with
/// `D_max = ln 2 / ln(1 / rho_max)`; a budget of at most `e` gives one instance.
pub fn instance_count(budget: f64, rho_max: f64) -> usize {
    if budget <= E {
        return 1;
    }
    let d_max = LN_2 / (1.0 / rho_max).ln();
    let n = (0.5 * d_max * (budget / budget.ln()).ln()).round();
    n.max(1.0) as usize
}

/// `rho_i = rho_max^(N / (N - i))` for `i = 0..N`.
///
/// The values start at `rho_max` and space `1 / ln(1 / rho)` evenly by
/// `1 / (N ln(1 / rho_max))`.
pub fn rho_schedule(n: usize, rho_max: f64) -> Vec<f64> {
    (0..n)
        .map(|i| rho_max.powf(n as f64 / (n - i) as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CachedEval {
    z: f64,
    y: f64,
}

/// Evaluations keyed by cell, reusable across instances within a fidelity tolerance.
#[derive(Debug, Clone)]
pub struct EvalCache {
    entries: HashMap<CellId, Vec<CachedEval>>,
    tolerance: f64,
    hits: u64,
    misses: u64,
}

impl Default for EvalCache {
    fn default() -> Self {
        Self::new(REUSE_TOLERANCE)
    }
}

impl EvalCache {
    pub fn new(tolerance: f64) -> Self {
        Self {
            entries: HashMap::new(),
            tolerance,
            hits: 0,
            misses: 0,
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// First stored `(z, y)` of `cell` with `|z - z_stored| < tolerance`.
    pub fn get(&self, cell: &CellId, z: f64) -> Option<(f64, f64)> {
        self.entries
            .get(cell)?
            .iter()
            .find(|e| (e.z - z).abs() < self.tolerance)
            .map(|e| (e.z, e.y))
    }

    /// Like [`get`](Self::get) but counts the outcome.
    pub fn lookup(&mut self, cell: &CellId, z: f64) -> Option<(f64, f64)> {
        let found = self.get(cell, z);
        if found.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        found
    }

    /// Stores an evaluation and returns the ones previously held for the cell.
    pub fn insert(&mut self, cell: CellId, z: f64, y: f64) -> Vec<(f64, f64)> {
        let slot = self.entries.entry(cell).or_default();
        let previous = slot.iter().map(|e| (e.z, e.y)).collect();
        slot.push(CachedEval { z, y });
        previous
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Routes an instance's queries through the shared cache and feeds pairs of
/// evaluations of the same cell to the bias estimator.
pub struct CachedRouter<'a> {
    pub objective: &'a dyn MultiFidelityObjective,
    pub cache: Option<&'a Mutex<EvalCache>>,
    pub bias: &'a BiasSource,
    pub calls: &'a AtomicU64,
}

impl QueryRouter for CachedRouter<'_> {
    fn query(
        &mut self,
        cell: &CellId,
        x: &[f64],
        z: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Answer, EvalError> {
        let Some(cache) = self.cache else {
            self.calls.fetch_add(1, Ordering::Relaxed);
            let obs = self.objective.evaluate(x, z, rng)?;
            return Ok(Answer {
                y: obs.y,
                z: obs.z,
                cost: obs.cost,
                cached: false,
            });
        };
        if let Some((z_stored, y)) = lock(cache).lookup(cell, z) {
            return Ok(Answer {
                y,
                z: z_stored,
                cost: 0.0,
                cached: true,
            });
        }
        // the lock is released while the objective runs
        self.calls.fetch_add(1, Ordering::Relaxed);
        let obs = self.objective.evaluate(x, z, rng)?;
        let previous = lock(cache).insert(cell.clone(), obs.z, obs.y);
        for (z_prev, y_prev) in previous {
            self.bias.observe_pair(z_prev, y_prev, obs.z, obs.y);
        }
        Ok(Answer {
            y: obs.y,
            z: obs.z,
            cost: obs.cost,
            cached: false,
        })
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// How the bias model is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasSpec {
    Known(BiasModel),
    /// Linear model estimated online from two initial probes.
    Estimate,
}

#[derive(Debug, Clone)]
pub struct MfpooConfig {
    pub nu_max: Nu,
    pub rho_max: f64,
    pub budget: f64,
    pub sigma: f64,
    pub bias: BiasSpec,
    pub seed: u64,
    /// Run the instances concurrently. Ignored for objectives that cannot
    /// take concurrent queries.
    pub parallel: bool,
    pub cache: bool,
    pub refresh: RefreshScope,
}

impl MfpooConfig {
    pub fn new(budget: f64, sigma: f64) -> Self {
        Self {
            nu_max: Nu::Auto,
            rho_max: 0.95,
            budget,
            sigma,
            bias: BiasSpec::Estimate,
            seed: 0,
            parallel: false,
            cache: true,
            refresh: RefreshScope::Path,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSummary {
    pub rho: f64,
    pub budget: f64,
    pub spent: f64,
    pub rounds: u64,
    pub recommendation: Recommendation,
    /// Top-fidelity observation of the recommendation.
    pub confirmation: f64,
}

#[derive(Debug, Clone)]
pub struct MfpooResult {
    /// Combined log: probes, every instance's queries in instance order, then
    /// the confirming evaluations. The recommendation's score is its
    /// confirming observation.
    pub run: RunResult,
    pub instances: Vec<InstanceSummary>,
    pub best_instance: usize,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub objective_calls: u64,
    /// Cost of the bias probes (zero with a known model).
    pub probe_cost: f64,
    pub confirm_cost: f64,
    pub estimator: Option<BiasEstimator>,
}

#[derive(Debug, Error)]
pub enum MfpooError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Aborted(#[from] Aborted),
}

fn renumber(records: &mut [EvalRecord]) {
    for (k, r) in records.iter_mut().enumerate() {
        r.t = k as u64 + 1;
    }
}

fn probe_record(obs: &Observation) -> EvalRecord {
    EvalRecord {
        t: 0,
        cell: None,
        x: obs.x.clone(),
        z: obs.z,
        y: obs.y,
        cost: obs.cost,
        cached: false,
    }
}

pub fn run(
    cfg: &MfpooConfig,
    objective: &dyn MultiFidelityObjective,
) -> Result<MfpooResult, MfpooError> {
    if !(cfg.rho_max > 0.0 && cfg.rho_max < 1.0) {
        return Err(ConfigError::Rho(cfg.rho_max).into());
    }
    if cfg.budget.is_nan() || cfg.budget <= 0.0 {
        return Err(ConfigError::Budget(cfg.budget).into());
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    master.set_stream(STREAM_MASTER);
    let calls = AtomicU64::new(0);
    let mut log = Vec::new();

    let (bias, estimator) = match cfg.bias {
        BiasSpec::Known(model) => (BiasSource::Known(model), None),
        BiasSpec::Estimate => {
            calls.fetch_add(2, Ordering::Relaxed);
            let (est, probes) =
                BiasEstimator::init(objective, &mut master).map_err(|error| Aborted {
                    error,
                    records: Vec::new(),
                    spent: 0.0,
                })?;
            log.extend(probes.iter().map(probe_record));
            (BiasSource::estimated(est), Some(est))
        }
    };
    let probe_cost = estimator.map_or(0.0, |e| e.spent());
    let top_cost = objective.cost(1.0);

    let mut n = instance_count(cfg.budget, cfg.rho_max);
    while n > 0
        && cfg.budget.partial_cmp(&(n as f64 * top_cost + probe_cost))
            != Some(std::cmp::Ordering::Greater)
    {
        n -= 1;
    }
    if n == 0 {
        return Err(ConfigError::InfeasibleBudget {
            budget: cfg.budget,
            instances: 1,
            reserved: probe_cost,
        }
        .into());
    }
    let per_instance = (cfg.budget - n as f64 * top_cost - probe_cost) / n as f64;

    let instances: Vec<Mfhoo> = rho_schedule(n, cfg.rho_max)
        .into_iter()
        .enumerate()
        .map(|(i, rho)| {
            let icfg = MfhooConfig {
                nu: cfg.nu_max,
                rho,
                sigma: cfg.sigma,
                budget: per_instance,
                bias: bias.clone(),
                recommendation: RecommendationMode::Practical,
                refresh: cfg.refresh,
                seed: cfg.seed,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(STREAM_FIRST_INSTANCE + i as u64);
            Mfhoo::with_rng(icfg, objective.domain(), rng)
        })
        .collect::<Result<_, _>>()?;

    let cache = cfg.cache.then(|| Mutex::new(EvalCache::default()));
    let exec = if cfg.parallel && objective.concurrent() {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let finished = exec::map(instances, exec, |mut inst| {
        let mut router = CachedRouter {
            objective,
            cache: cache.as_ref(),
            bias: &bias,
            calls: &calls,
        };
        let outcome = inst.run_to_budget(&mut router);
        (inst, outcome)
    });

    let mut failure = None;
    let mut states = Vec::with_capacity(n);
    for (inst, outcome) in finished {
        log.extend_from_slice(inst.records());
        if let (Err(e), None) = (outcome, &failure) {
            failure = Some(e);
        }
        states.push(inst);
    }
    if let Some(error) = failure {
        renumber(&mut log);
        let spent = log.iter().map(|r| r.cost).sum();
        return Err(Aborted {
            error,
            records: log,
            spent,
        }
        .into());
    }

    let mut confirm_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    confirm_rng.set_stream(STREAM_CONFIRM);
    let mut summaries = Vec::with_capacity(n);
    let mut confirm_cost = 0.0;
    let mut confirm_records = Vec::with_capacity(n);
    for mut inst in states {
        let rec = inst
            .recommend()
            .expect("every instance queries at least once");
        let cell = inst.records()[rec.record].cell.clone();
        calls.fetch_add(1, Ordering::Relaxed);
        let obs = match objective.evaluate(&rec.x, 1.0, &mut confirm_rng) {
            Ok(obs) => obs,
            Err(error) => {
                log.extend(confirm_records);
                renumber(&mut log);
                let spent = log.iter().map(|r| r.cost).sum();
                return Err(Aborted {
                    error,
                    records: log,
                    spent,
                }
                .into());
            }
        };
        confirm_cost += obs.cost;
        confirm_records.push(EvalRecord {
            cell,
            ..probe_record(&obs)
        });
        summaries.push(InstanceSummary {
            rho: inst.config().rho,
            budget: per_instance,
            spent: inst.spent(),
            rounds: inst.rounds(),
            recommendation: rec,
            confirmation: obs.y,
        });
    }

    let mut best_instance = 0;
    for (i, s) in summaries.iter().enumerate() {
        if s.confirmation > summaries[best_instance].confirmation {
            best_instance = i;
        }
    }
    let confirm_start = log.len();
    log.extend(confirm_records);
    renumber(&mut log);

    let instance_spent: f64 = summaries.iter().map(|s| s.spent).sum();
    let best = &summaries[best_instance];
    let recommendation = Recommendation {
        x: best.recommendation.x.clone(),
        score: best.confirmation,
        record: confirm_start + best_instance,
    };
    let (cache_hits, cache_misses) = cache
        .map(|c| {
            let c = c.into_inner().unwrap_or_else(|e| e.into_inner());
            (c.hits(), c.misses())
        })
        .unwrap_or((0, 0));
    let rounds = log.len() as u64;
    Ok(MfpooResult {
        run: RunResult {
            recommendation,
            records: log,
            spent: probe_cost + instance_spent + confirm_cost,
            rounds,
        },
        instances: summaries,
        best_instance,
        cache_hits,
        cache_misses,
        objective_calls: calls.into_inner(),
        probe_cost,
        confirm_cost,
        estimator: bias.estimator(),
    })
}

/// Single-fidelity parallel optimistic optimization: the same schedule with
/// no bias model, so every query is made at `z = 1`.
pub fn poo_baseline(
    cfg: &MfpooConfig,
    objective: &dyn MultiFidelityObjective,
) -> Result<MfpooResult, MfpooError> {
    let mut cfg = cfg.clone();
    cfg.bias = BiasSpec::Known(BiasModel::None);
    if cfg.nu_max == Nu::Auto {
        cfg.nu_max = Nu::Fixed(BASELINE_NU);
    }
    run(&cfg, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::CostFunction;
    use crate::objective::{hartmann3, Synthetic};
    use crate::partition::BoxDomain;

    #[test]
    fn instance_count_examples() {
        assert_eq!(instance_count(100.0, 0.95), 21);
        assert_eq!(instance_count(100.0, 0.5), 2);
        assert_eq!(instance_count(2.0, 0.95), 1);
        assert_eq!(instance_count(E, 0.5), 1);
    }

    #[test]
    fn rho_schedule_examples() {
        assert_eq!(rho_schedule(1, 0.9), vec![0.9]);
        let s = rho_schedule(2, 0.9);
        assert!((s[0] - 0.9).abs() < 1e-15);
        assert!((s[1] - 0.81).abs() < 1e-15);
        let n = 21;
        let s = rho_schedule(n, 0.95);
        let step = 1.0 / (n as f64 * (1.0 / 0.95f64).ln());
        for (i, rho) in s.iter().enumerate() {
            assert!(*rho > 0.0 && *rho <= 0.95);
            let inv = 1.0 / (1.0 / rho).ln();
            assert!((inv - (n - i) as f64 * step).abs() < 1e-12);
        }
    }

    #[test]
    fn cache_reuses_within_tolerance() {
        let obj = Synthetic::new(
            "lin",
            BoxDomain::unit(1),
            CostFunction::power(0.1, 1.0, 2.0),
            0.0,
            |x, z| x[0] + z,
        );
        let cache = Mutex::new(EvalCache::default());
        let bias = BiasSource::Known(BiasModel::None);
        let calls = AtomicU64::new(0);
        let mut router = CachedRouter {
            objective: &obj,
            cache: Some(&cache),
            bias: &bias,
            calls: &calls,
        };
        let cell = CellId::new(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = router.query(&cell, &[0.25], 0.5, &mut rng).unwrap();
        let b = router.query(&cell, &[0.25], 0.505, &mut rng).unwrap();
        assert!(!a.cached && b.cached);
        assert_eq!(b.y, a.y);
        assert_eq!(b.z, 0.5);
        assert_eq!(a.cost + b.cost, 0.35);
        assert_eq!(calls.load(Ordering::Relaxed), 1);
        // outside the tolerance: a fresh evaluation
        let c = router.query(&cell, &[0.25], 0.52, &mut rng).unwrap();
        assert!(!c.cached);
        let c = cache.into_inner().unwrap();
        assert_eq!((c.hits(), c.misses(), c.len()), (1, 2, 2));
    }

    #[test]
    fn cache_feeds_estimator() {
        let obj = Synthetic::new(
            "steep",
            BoxDomain::unit(1),
            CostFunction::Constant(1.0),
            0.0,
            |x, z| x[0] + 5.0 * z,
        );
        let cache = Mutex::new(EvalCache::default());
        let bias = BiasSource::estimated(BiasEstimator::from_probes(0.0, 0.3, 0.0));
        let calls = AtomicU64::new(0);
        let mut router = CachedRouter {
            objective: &obj,
            cache: Some(&cache),
            bias: &bias,
            calls: &calls,
        };
        let cell = CellId::new(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        router.query(&cell, &[0.6], 0.5, &mut rng).unwrap();
        router.query(&cell, &[0.6], 0.7, &mut rng).unwrap();
        // slope 5 > c = 1
        assert!((bias.estimator().unwrap().c() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_instance_reduction() {
        let obj = hartmann3();
        let mut cfg = MfpooConfig::new(2.0, obj.sigma()).with_seed(3);
        cfg.bias = BiasSpec::Known(BiasModel::linear(0.5));
        cfg.nu_max = Nu::Fixed(1.0);
        let res = run(&cfg, &obj).unwrap();
        assert_eq!(res.instances.len(), 1);
        assert!((res.instances[0].budget - (2.0 - obj.cost(1.0))).abs() < 1e-12);
        assert_eq!(res.confirm_cost, obj.cost(1.0));
        let last = res.run.records.last().unwrap();
        assert_eq!(last.z, 1.0);
    }

    #[test]
    fn infeasible_budget() {
        let obj = hartmann3();
        let cfg = MfpooConfig::new(0.9, obj.sigma());
        assert!(matches!(
            run(&cfg, &obj),
            Err(MfpooError::Config(ConfigError::InfeasibleBudget { .. }))
        ));
    }

    #[test]
    fn baseline_pins_top_fidelity() {
        let obj = hartmann3();
        let cfg = MfpooConfig::new(30.0, obj.sigma()).with_seed(1);
        let res = poo_baseline(&cfg, &obj).unwrap();
        assert_eq!(res.instances.len(), instance_count(30.0, 0.95));
        assert!(res.run.records.iter().all(|r| r.z == 1.0));
        let charged: Vec<&EvalRecord> = res.run.records.iter().filter(|r| !r.cached).collect();
        for r in &charged {
            assert_eq!(r.cost, obj.cost(1.0));
        }
        assert!((res.run.spent - obj.cost(1.0) * charged.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_outcome() {
        let obj = hartmann3();
        let cfg = MfpooConfig::new(15.0, obj.sigma()).with_seed(42);
        let a = run(&cfg, &obj).unwrap();
        let b = run(&cfg, &obj).unwrap();
        assert_eq!(a.run.recommendation, b.run.recommendation);
        assert_eq!(a.cache_hits, b.cache_hits);
        assert_eq!(a.run.records, b.run.records);
    }

    #[test]
    fn parallel_mode_accounts_every_query() {
        let obj = hartmann3();
        let mut cfg = MfpooConfig::new(20.0, obj.sigma()).with_seed(5);
        cfg.parallel = true;
        let res = run(&cfg, &obj).unwrap();
        let charged: f64 = res.run.records.iter().map(|r| r.cost).sum();
        assert!((charged - res.run.spent).abs() < 1e-9);
        let queries = res.run.records.iter().filter(|r| r.cell.is_some()).count() as u64;
        let instance_queries = queries - res.instances.len() as u64;
        assert_eq!(res.cache_hits + res.cache_misses, instance_queries);
    }
}
