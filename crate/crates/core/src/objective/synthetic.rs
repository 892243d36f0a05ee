//! Multi-fidelity versions of the Currin exponential, Hartmann-3, Hartmann-6
//! and Branin benchmarks. All four are posed as maximization problems.
//!
//! Reference optima below were located by multi-start bounded quasi-Newton
//! refinement of the `z = 1` function (200 uniform starts each) and are
//! re-checked by a gradient-free multi-start search in the test suite.

use std::f64::consts::PI;

use super::Synthetic;
use crate::fidelity::CostFunction;
use crate::partition::BoxDomain;

pub const SYNTHETIC_NAMES: [&str; 4] = ["currin", "hartmann3", "hartmann6", "branin"];

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN3_A: [[f64; 3]; 4] = [
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
];

const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann<const D: usize>(a: &[[f64; D]; 4], p: &[[f64; D]; 4], x: &[f64], z: f64) -> f64 {
    let shift = 0.1 * (1.0 - z);
    (0..4)
        .map(|i| {
            let r: f64 = (0..D).map(|j| a[i][j] * (x[j] - p[i][j]).powi(2)).sum();
            (HARTMANN_ALPHA[i] - shift) * (-r).exp()
        })
        .sum()
}

fn currin_mean(x: &[f64], z: f64) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    // x2 = 0 gives exp(-inf) = 0
    let damp = 1.0 - 0.1 * (1.0 - z) * (-1.0 / (2.0 * x2)).exp();
    let num = 2300.0 * x1.powi(3) + 1900.0 * x1.powi(2) + 2092.0 * x1 + 60.0;
    let den = 100.0 * x1.powi(3) + 500.0 * x1.powi(2) + 4.0 * x1 + 20.0;
    damp * num / den
}

fn branin_mean(x: &[f64], z: f64) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let lag = 1.0 - z;
    let b = 5.1 / (4.0 * PI * PI) - 0.01 * lag;
    let c = 5.0 / PI - 0.1 * lag;
    let t = 1.0 / (8.0 * PI) + 0.05 * lag;
    let (a, r, s) = (1.0, 6.0, 10.0);
    let g = a * (x2 - b * x1 * x1 + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s;
    -g
}

/// Currin exponential on `[0, 1]^2`, `lambda(z) = 0.1 + z^2`, `sigma^2 = 0.5`.
///
/// At `z = 1` the value does not depend on `x2`; the stored maximizer fixes
/// `x2 = 0.5`. The maximizing `x1` is exactly `13 / 60`.
pub fn currin() -> Synthetic {
    Synthetic::new(
        "currin",
        BoxDomain::unit(2),
        CostFunction::power(0.1, 1.0, 2.0),
        0.5f64.sqrt(),
        currin_mean,
    )
    .with_optimum(vec![13.0 / 60.0, 0.5], 13.798_722_044_728_434)
}

/// Hartmann-3 on `[0, 1]^3`, `lambda(z) = 0.05 + 0.95 z^3`, `sigma^2 = 0.01`.
pub fn hartmann3() -> Synthetic {
    Synthetic::new(
        "hartmann3",
        BoxDomain::unit(3),
        CostFunction::power(0.05, 0.95, 3.0),
        0.01f64.sqrt(),
        |x, z| hartmann(&HARTMANN3_A, &HARTMANN3_P, x, z),
    )
    .with_optimum(
        vec![
            0.114_588_877_186_370,
            0.555_648_889_671_286,
            0.852_546_984_591_730,
        ],
        3.862_779_787_332_662,
    )
}

/// Hartmann-6 on `[0, 1]^6`, `lambda(z) = 0.05 + 0.95 z^3`, `sigma^2 = 0.05`.
pub fn hartmann6() -> Synthetic {
    Synthetic::new(
        "hartmann6",
        BoxDomain::unit(6),
        CostFunction::power(0.05, 0.95, 3.0),
        0.05f64.sqrt(),
        |x, z| hartmann(&HARTMANN6_A, &HARTMANN6_P, x, z),
    )
    .with_optimum(
        vec![
            0.201_689_507_251_180,
            0.150_010_689_389_466,
            0.476_873_974_275_496,
            0.275_332_428_391_796,
            0.311_651_616_794_819,
            0.657_300_528_814_077,
        ],
        3.322_368_011_415_514,
    )
}

/// Negated Branin on `[-5, 10] x [0, 15]`, `lambda(z) = 0.05 + z^3`, `sigma^2 = 0.05`.
///
/// One of the three global maximizers, `(pi, 2.275)`, is stored.
pub fn branin() -> Synthetic {
    let domain = BoxDomain::new(vec![(-5.0, 10.0), (0.0, 15.0)]).expect("static bounds");
    let x_star = vec![PI, 2.275];
    let f_star = branin_mean(&x_star, 1.0);
    Synthetic::new(
        "branin",
        domain,
        CostFunction::power(0.05, 1.0, 3.0),
        0.05f64.sqrt(),
        branin_mean,
    )
    .with_optimum(x_star, f_star)
}

pub fn by_name(name: &str) -> Option<Synthetic> {
    match name {
        "currin" => Some(currin()),
        "hartmann3" => Some(hartmann3()),
        "hartmann6" => Some(hartmann6()),
        "branin" => Some(branin()),
        _ => None,
    }
}
