//! Query-count and regret-bound evaluators.
//!
//! Bound expressions are evaluated up to constants: every universal constant
//! is set to 1. They are meant for shape and monotonicity checks, not for
//! absolute prediction.

use crate::exec::{self, Execution};
use crate::fidelity::{BiasModel, CostFunction};
use crate::mfhoo::fidelity_for_height;
use crate::objective::MultiFidelityObjective;
use crate::partition;

/// Near-optimality dimension `d` and its constant `C` for a given `(nu, rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearOptimalityParams {
    pub nu: f64,
    pub rho: f64,
    pub d: f64,
    pub c: f64,
}

impl NearOptimalityParams {
    pub fn new(nu: f64, rho: f64, d: f64, c: f64) -> Self {
        assert!(d >= 0.0 && c > 0.0, "need d >= 0 and C > 0");
        Self { nu, rho, d, c }
    }
}

/// Largest `n` with `sum_{h=1..n} lambda(zeta^{-1}(nu rho^h)) < budget`.
///
/// This is the cost of the deepest possible walk, one new level per query,
/// so every run with that budget makes at least this many queries.
pub fn n_lambda(budget: f64, cost: &CostFunction, bias: &BiasModel, nu: f64, rho: f64) -> u64 {
    let mut total = 0.0;
    let mut n = 0u64;
    loop {
        let h = (n + 1) as u32;
        total += cost.eval(fidelity_for_height(bias, nu, rho, h));
        if total < budget {
            n += 1;
        } else {
            return n;
        }
    }
}

/// `C^(1/(d+2)) * n^(-1/(d+2)) * (sigma^2 ln n)^(1/(d+2))`.
pub fn simple_regret_bound(n: u64, params: &NearOptimalityParams, sigma: f64) -> f64 {
    assert!(n >= 2, "bound needs n >= 2");
    let e = 1.0 / (params.d + 2.0);
    let n = n as f64;
    params.c.powf(e) * n.powf(-e) * (sigma * sigma * n.ln()).powf(e)
}

/// `C^(1/(d+2)) * n^((d+1)/(d+2)) * (sigma^2 ln n)^(1/(d+2))`.
pub fn cumulative_regret_bound(n: u64, params: &NearOptimalityParams, sigma: f64) -> f64 {
    assert!(n >= 2, "bound needs n >= 2");
    let e = 1.0 / (params.d + 2.0);
    let n = n as f64;
    params.c.powf(e) * n.powf((params.d + 1.0) * e) * (sigma * sigma * n.ln()).powf(e)
}

/// Outcome of checking `lambda(z*_h) <= min(beta h, lambda(1))` for `h = 1..=h_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionCheck {
    pub holds: bool,
    pub first_violation: Option<u32>,
}

pub fn check_condition_geom(
    cost: &CostFunction,
    bias: &BiasModel,
    nu_star: f64,
    rho_star: f64,
    beta: f64,
    h_max: u32,
) -> ConditionCheck {
    let top = cost.top();
    let first_violation = (1..=h_max).find(|&h| {
        let z = fidelity_for_height(bias, nu_star, rho_star, h);
        cost.eval(z) > (beta * h as f64).min(top)
    });
    ConditionCheck {
        holds: first_violation.is_none(),
        first_violation,
    }
}

/// Guaranteed query count `sqrt(2 (budget - lambda(1)) / beta)` under the
/// geometric cost condition.
pub fn geometric_query_lower_bound(budget: f64, top_cost: f64, beta: f64) -> f64 {
    (2.0 * (budget - top_cost) / beta).max(0.0).sqrt()
}

/// Grid estimate of the number of depth-`h` cells whose best value is within
/// `eps` of the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCount {
    pub count: usize,
    pub cells: usize,
    /// Grid points per coordinate inside each cell.
    pub resolution: usize,
}

/// Counts cells `(h, i)` with `max_grid f(x, 1) >= f* - eps`.
///
/// Each cell is probed on a cell-centred grid of `resolution^d` points, so no
/// grid point sits on a shared face. `f*` is the objective's known optimum
/// when it has one and the best grid value otherwise.
pub fn near_optimal_cell_count(
    objective: &dyn MultiFidelityObjective,
    h: u32,
    eps: f64,
    resolution: usize,
    exec: Execution,
) -> CellCount {
    assert!(resolution >= 1);
    let cells = partition::root(objective.domain()).descendants_at(h);
    let n_cells = cells.len();
    let best = exec::map(cells, exec, |cell| {
        cell_grid_max(objective, &cell, resolution)
    });
    let f_star = objective
        .optimum()
        .map(|o| o.value)
        .unwrap_or_else(|| best.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    CellCount {
        count: best.iter().filter(|&&v| v >= f_star - eps).count(),
        cells: n_cells,
        resolution,
    }
}

fn cell_grid_max(
    objective: &dyn MultiFidelityObjective,
    cell: &partition::Cell,
    resolution: usize,
) -> f64 {
    let dim = cell.bounds().len();
    let total = resolution.pow(dim as u32);
    let mut x = vec![0.0; dim];
    let mut best = f64::NEG_INFINITY;
    for k in 0..total {
        let mut rest = k;
        for (coord, &(lo, hi)) in cell.bounds().iter().enumerate() {
            let step = rest % resolution;
            rest /= resolution;
            x[coord] = lo + (step as f64 + 0.5) * (hi - lo) / resolution as f64;
        }
        let v = objective
            .mean(&x, 1.0)
            .expect("grid counting needs a closed-form objective");
        best = best.max(v);
    }
    best
}
