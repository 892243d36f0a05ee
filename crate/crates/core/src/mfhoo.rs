//! Multi-fidelity hierarchical optimistic optimization.
//!
//! Each round walks down the expanded tree following the larger B-value,
//! queries the representative point of the first cell outside the tree at the
//! fidelity matched to its depth, then refreshes the statistics of every cell
//! on the walked path and backs the B-values up to the root.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fidelity::{BiasModel, BiasSource};
use crate::objective::{EvalError, MultiFidelityObjective};
use crate::partition::{self, BoxDomain, Cell, CellId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("rho must lie in (0, 1), got {0}")]
    Rho(f64),
    #[error("nu must be positive, got {0}")]
    Nu(f64),
    #[error("budget must be positive, got {0}")]
    Budget(f64),
    #[error("sigma must be nonnegative, got {0}")]
    Sigma(f64),
    #[error("nu = auto needs an estimated bias model")]
    AutoNuWithoutEstimator,
    #[error("budget {budget} cannot cover {instances} top-fidelity evaluations plus {reserved} of probes")]
    InfeasibleBudget {
        budget: f64,
        instances: usize,
        reserved: f64,
    },
}

/// Smoothness scale `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nu {
    Fixed(f64),
    /// Read `nu_max = 2c` from the shared bias estimator at every use.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecommendationMode {
    /// Best lower bound `y_i - zeta(z_i)` over the evaluated points.
    #[default]
    Practical,
    /// A uniformly random evaluated point.
    Theoretical,
}

/// Which U-values are refreshed after a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefreshScope {
    /// Only the cells on the walked path.
    #[default]
    Path,
    /// Every cell in the tree, followed by a full B backup.
    WholeTree,
}

#[derive(Debug, Clone)]
pub struct MfhooConfig {
    pub nu: Nu,
    pub rho: f64,
    pub sigma: f64,
    pub budget: f64,
    pub bias: BiasSource,
    pub recommendation: RecommendationMode,
    pub refresh: RefreshScope,
    pub seed: u64,
}

impl MfhooConfig {
    pub fn new(nu: f64, rho: f64, sigma: f64, budget: f64, bias: BiasModel) -> Self {
        Self {
            nu: Nu::Fixed(nu),
            rho,
            sigma,
            budget,
            bias: BiasSource::Known(bias),
            recommendation: RecommendationMode::Practical,
            refresh: RefreshScope::Path,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(ConfigError::Rho(self.rho));
        }
        if self.budget.is_nan() || self.budget <= 0.0 {
            return Err(ConfigError::Budget(self.budget));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return Err(ConfigError::Sigma(self.sigma));
        }
        match (self.nu, &self.bias) {
            (Nu::Fixed(nu), _) if !(nu > 0.0 && nu.is_finite()) => Err(ConfigError::Nu(nu)),
            (Nu::Auto, BiasSource::Known(_)) => Err(ConfigError::AutoNuWithoutEstimator),
            _ => Ok(()),
        }
    }
}

/// `zeta^{-1}(nu rho^h)`: the fidelity at which depth-`h` cells are queried.
pub fn fidelity_for_height(bias: &BiasModel, nu: f64, rho: f64, h: u32) -> f64 {
    bias.inverse(nu * rho.powi(h as i32))
}

/// Child chosen by the larger B-value; equal values are a fair coin flip.
pub fn choose_child(b_left: f64, b_right: f64, rng: &mut dyn RngCore) -> usize {
    if b_left > b_right {
        0
    } else if b_left < b_right {
        1
    } else {
        usize::from(rng.random_bool(0.5))
    }
}

/// A cell of the expanded tree with its statistics.
#[derive(Debug, Clone)]
pub struct Node {
    cell: Cell,
    parent: Option<usize>,
    children: [Option<usize>; 2],
    visits: u64,
    mean: f64,
    upper: f64,
    b_value: f64,
}

impl Node {
    fn new(cell: Cell, parent: Option<usize>) -> Self {
        Self {
            cell,
            parent,
            children: [None, None],
            visits: 0,
            mean: 0.0,
            upper: f64::INFINITY,
            b_value: f64::INFINITY,
        }
    }

    pub fn cell(&self) -> &Cell {
        &self.cell
    }

    pub fn depth(&self) -> u32 {
        self.cell.depth()
    }

    pub fn parent(&self) -> Option<usize> {
        self.parent
    }

    pub fn children(&self) -> [Option<usize>; 2] {
        self.children
    }

    /// Number of queries that landed in this cell's subtree.
    pub fn visits(&self) -> u64 {
        self.visits
    }

    /// Running mean of the values observed in this cell's subtree.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn u_value(&self) -> f64 {
        self.upper
    }

    pub fn b_value(&self) -> f64 {
        self.b_value
    }
}

/// Expanded tree stored as an arena; index 0 is the root and children are
/// always created after their parent.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn new(domain: &BoxDomain) -> Self {
        Self {
            nodes: vec![Node::new(partition::root(domain), None)],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// B-value of the `side` child of `idx`; unexpanded children count as `+inf`.
    pub fn child_b(&self, idx: usize, side: usize) -> f64 {
        self.nodes[idx].children[side].map_or(f64::INFINITY, |c| self.nodes[c].b_value)
    }

    /// `min(U, max(B_left, B_right))` for a node, from the current stored values.
    pub fn backed_up(&self, idx: usize) -> f64 {
        let node = &self.nodes[idx];
        node.upper
            .min(self.child_b(idx, 0).max(self.child_b(idx, 1)))
    }
}

/// Answer to a query routed through a [`QueryRouter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Answer {
    pub y: f64,
    /// Fidelity of the evaluation the value came from.
    pub z: f64,
    /// Cost charged to the querying instance.
    pub cost: f64,
    pub cached: bool,
}

/// Delivers observations for cells; lets a caller interpose a cache.
pub trait QueryRouter {
    fn query(
        &mut self,
        cell: &CellId,
        x: &[f64],
        z: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Answer, EvalError>;
}

/// Sends every query straight to the objective.
pub struct Direct<'a>(pub &'a dyn MultiFidelityObjective);

impl QueryRouter for Direct<'_> {
    fn query(
        &mut self,
        _cell: &CellId,
        x: &[f64],
        z: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Answer, EvalError> {
        let obs = self.0.evaluate(x, z, rng)?;
        Ok(Answer {
            y: obs.y,
            z: obs.z,
            cost: obs.cost,
            cached: false,
        })
    }
}

/// One query of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// 1-based position in the run.
    pub t: u64,
    /// Queried cell; `None` for probes that are not tied to a cell.
    pub cell: Option<CellId>,
    pub x: Vec<f64>,
    pub z: f64,
    pub y: f64,
    /// Cost charged for this query (zero on a cache hit).
    pub cost: f64,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub x: Vec<f64>,
    pub score: f64,
    /// Index into the run's records.
    pub record: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub recommendation: Recommendation,
    pub records: Vec<EvalRecord>,
    pub spent: f64,
    pub rounds: u64,
}

/// A run stopped by an evaluation failure, with everything gathered so far.
#[derive(Debug, Error)]
#[error("run aborted after {} evaluations: {error}", records.len())]
pub struct Aborted {
    #[source]
    pub error: EvalError,
    pub records: Vec<EvalRecord>,
    pub spent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no evaluations to recommend from")]
pub struct EmptyRun;

/// State of one MFHOO instance.
#[derive(Debug, Clone)]
pub struct Mfhoo {
    cfg: MfhooConfig,
    tree: Tree,
    rounds: u64,
    spent: f64,
    records: Vec<EvalRecord>,
    last_path: Vec<usize>,
    rng: ChaCha8Rng,
}

impl Mfhoo {
    pub fn new(cfg: MfhooConfig, domain: &BoxDomain) -> Result<Self, ConfigError> {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::with_rng(cfg, domain, rng)
    }

    pub fn with_rng(
        cfg: MfhooConfig,
        domain: &BoxDomain,
        rng: ChaCha8Rng,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tree: Tree::new(domain),
            rounds: 0,
            spent: 0.0,
            records: Vec::new(),
            last_path: Vec::new(),
            rng,
        })
    }

    pub fn config(&self) -> &MfhooConfig {
        &self.cfg
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    /// Arena indices of the path refreshed by the last step, root first.
    pub fn last_path(&self) -> &[usize] {
        &self.last_path
    }

    /// Current `nu` (live when it tracks the estimator).
    pub fn nu(&self) -> f64 {
        match self.cfg.nu {
            Nu::Fixed(nu) => nu,
            Nu::Auto => self
                .cfg
                .bias
                .estimator()
                .map(|e| e.nu_max())
                .expect("validated: auto nu has an estimator"),
        }
    }

    pub fn bias_model(&self) -> BiasModel {
        self.cfg.bias.model()
    }

    pub fn fidelity_for_height(&self, h: u32) -> f64 {
        fidelity_for_height(&self.bias_model(), self.nu(), self.cfg.rho, h)
    }

    /// `U = mean + sqrt(2 sigma^2 ln n / T) + nu rho^h + zeta(z_h)`.
    pub fn u_value(&self, mean: f64, visits: u64, h: u32) -> f64 {
        let bias = self.bias_model();
        let nu = self.nu();
        let resolution = nu * self.cfg.rho.powi(h as i32);
        let fidelity_gap = bias.bias(bias.inverse(resolution));
        let log_n = (self.rounds as f64).ln().max(0.0);
        let width = (2.0 * self.cfg.sigma * self.cfg.sigma * log_n / visits as f64).sqrt();
        mean + width + resolution + fidelity_gap
    }

    fn select(&mut self) -> (Vec<usize>, usize) {
        let mut path = vec![0];
        let mut idx = 0;
        loop {
            let side = choose_child(
                self.tree.child_b(idx, 0),
                self.tree.child_b(idx, 1),
                &mut self.rng,
            );
            match self.tree.nodes[idx].children[side] {
                Some(child) => {
                    path.push(child);
                    idx = child;
                }
                None => return (path, side),
            }
        }
    }

    /// Walks the tree from the root and returns the cells visited, ending with
    /// the first cell outside the expanded tree. Consumes tie-break draws.
    pub fn select_path(&mut self) -> Vec<CellId> {
        let (path, side) = self.select();
        let leaf = *path.last().expect("path starts at the root");
        let (l, r) = self.tree.nodes[leaf].cell.id().children();
        let mut ids: Vec<CellId> = path
            .iter()
            .map(|&i| self.tree.nodes[i].cell.id().clone())
            .collect();
        ids.push(if side == 0 { l } else { r });
        ids
    }

    /// One round: select, query, update statistics, back up.
    ///
    /// A failed query leaves the state untouched.
    pub fn step(&mut self, router: &mut dyn QueryRouter) -> Result<&EvalRecord, EvalError> {
        let (mut path, side) = self.select();
        let parent = *path.last().expect("path starts at the root");
        let (left, right) = self.tree.nodes[parent].cell.split();
        let cell = if side == 0 { left } else { right };
        let z = self.fidelity_for_height(cell.depth());
        let x = cell.representative();
        let answer = router.query(cell.id(), &x, z, &mut self.rng)?;

        let new_idx = self.tree.nodes.len();
        let cell_id = cell.id().clone();
        self.tree.nodes.push(Node::new(cell, Some(parent)));
        self.tree.nodes[parent].children[side] = Some(new_idx);
        path.push(new_idx);

        self.rounds += 1;
        self.spent += answer.cost;

        for &i in &path {
            let node = &mut self.tree.nodes[i];
            node.visits += 1;
            let t = node.visits as f64;
            node.mean = (1.0 - 1.0 / t) * node.mean + answer.y / t;
        }

        match self.cfg.refresh {
            RefreshScope::Path => {
                for &i in &path {
                    self.refresh_u(i);
                }
                for &i in path.iter().rev() {
                    self.tree.nodes[i].b_value = self.tree.backed_up(i);
                }
            }
            RefreshScope::WholeTree => {
                for i in 0..self.tree.nodes.len() {
                    self.refresh_u(i);
                }
                for i in (0..self.tree.nodes.len()).rev() {
                    self.tree.nodes[i].b_value = self.tree.backed_up(i);
                }
            }
        }
        self.last_path = path;

        self.records.push(EvalRecord {
            t: self.rounds,
            cell: Some(cell_id),
            x,
            z: answer.z,
            y: answer.y,
            cost: answer.cost,
            cached: answer.cached,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    fn refresh_u(&mut self, i: usize) {
        let node = &self.tree.nodes[i];
        let u = self.u_value(node.mean, node.visits, node.depth());
        self.tree.nodes[i].upper = u;
    }

    /// Steps while the spent cost is within budget; the last step may overshoot.
    pub fn run_to_budget(&mut self, router: &mut dyn QueryRouter) -> Result<(), EvalError> {
        while self.spent <= self.cfg.budget {
            self.step(router)?;
        }
        Ok(())
    }

    pub fn recommend(&mut self) -> Result<Recommendation, EmptyRun> {
        if self.records.is_empty() {
            return Err(EmptyRun);
        }
        let bias = self.bias_model();
        let record = match self.cfg.recommendation {
            RecommendationMode::Practical => practical_choice(&self.records, &bias),
            RecommendationMode::Theoretical => self.rng.random_range(0..self.records.len()),
        };
        let r = &self.records[record];
        Ok(Recommendation {
            x: r.x.clone(),
            score: r.y - bias.bias(r.z),
            record,
        })
    }

    pub fn into_result(mut self) -> Result<RunResult, EmptyRun> {
        let recommendation = self.recommend()?;
        Ok(RunResult {
            recommendation,
            records: self.records,
            spent: self.spent,
            rounds: self.rounds,
        })
    }

    pub(crate) fn into_aborted(self, error: EvalError) -> Aborted {
        Aborted {
            error,
            records: self.records,
            spent: self.spent,
        }
    }
}

/// Index of the record maximizing `y - zeta(z)`; the earliest wins ties.
pub fn practical_choice(records: &[EvalRecord], bias: &BiasModel) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, r) in records.iter().enumerate() {
        let score = r.y - bias.bias(r.z);
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

/// Runs one MFHOO instance against an objective until the budget is spent.
pub fn run(
    cfg: MfhooConfig,
    objective: &dyn MultiFidelityObjective,
) -> Result<RunResult, RunError> {
    let mut state = Mfhoo::new(cfg, objective.domain())?;
    if let Err(e) = state.run_to_budget(&mut Direct(objective)) {
        return Err(RunError::Aborted(state.into_aborted(e)));
    }
    Ok(state
        .into_result()
        .expect("a run performs at least one query"))
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Aborted(#[from] Aborted),
}
