//! Bias and cost models, bias inversion, and the online bias estimator.

use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, RngCore};

use crate::objective::{EvalError, MultiFidelityObjective, Observation};

/// Floor on the slope of a linear bias model.
///
/// Two probes at the same value would otherwise give `c = 0`, leaving the
/// inverse undefined.
pub const C_MIN: f64 = 1e-3;

/// Fidelity bias `zeta(z)`, an upper bound on `|f_z(x) - f(x)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasModel {
    /// No cheap approximation is modeled: every query goes to `z = 1`.
    None,
    /// `zeta(z) = c (1 - z)`.
    Linear { c: f64 },
}

impl BiasModel {
    /// Linear model with slope floored at [`C_MIN`].
    pub fn linear(c: f64) -> Self {
        BiasModel::Linear { c: c.max(C_MIN) }
    }

    pub fn bias(&self, z: f64) -> f64 {
        match *self {
            BiasModel::None => 0.0,
            BiasModel::Linear { c } => c * (1.0 - z),
        }
    }

    /// Smallest fidelity whose bias is at most `b`.
    ///
    /// For the linear model this is `clamp(1 - b / c, 0, 1)`. With no bias
    /// model the answer is pinned to `z = 1`, which turns the tree search into
    /// its single-fidelity counterpart.
    pub fn inverse(&self, b: f64) -> f64 {
        match *self {
            BiasModel::None => 1.0,
            BiasModel::Linear { c } => (1.0 - b / c).clamp(0.0, 1.0),
        }
    }

    /// `zeta(0)`, the largest bias the model can express.
    pub fn max_bias(&self) -> f64 {
        self.bias(0.0)
    }
}

/// Evaluation cost `lambda(z)`; positive and nondecreasing in `z`.
#[derive(Clone)]
pub enum CostFunction {
    Constant(f64),
    /// `offset + scale * z^exponent`.
    Power {
        offset: f64,
        scale: f64,
        exponent: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl CostFunction {
    pub fn power(offset: f64, scale: f64, exponent: f64) -> Self {
        CostFunction::Power {
            offset,
            scale,
            exponent,
        }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CostFunction::Custom(Arc::new(f))
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            CostFunction::Constant(c) => *c,
            CostFunction::Power {
                offset,
                scale,
                exponent,
            } => offset + scale * z.powf(*exponent),
            CostFunction::Custom(f) => f(z),
        }
    }

    /// `lambda(1)`.
    pub fn top(&self) -> f64 {
        self.eval(1.0)
    }

    /// Parses `"<c>"` (constant) or `"<offset>, <scale>, <exponent>"` (power law).
    pub fn parse(s: &str) -> Option<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .ok()?;
        let cost = match parts.as_slice() {
            [c] => CostFunction::Constant(*c),
            [offset, scale, exponent] => CostFunction::power(*offset, *scale, *exponent),
            _ => return None,
        };
        let positive = cost.eval(0.0) > 0.0;
        let monotone = *parts.get(1).unwrap_or(&0.0) >= 0.0 && *parts.get(2).unwrap_or(&1.0) > 0.0;
        (positive && monotone).then_some(cost)
    }
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFunction::Constant(c) => write!(f, "Constant({c})"),
            CostFunction::Power {
                offset,
                scale,
                exponent,
            } => write!(f, "Power({offset} + {scale} z^{exponent})"),
            CostFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Online estimate of the slope `c` of a linear bias model.
///
/// Initialised from two probes of a random point at `z = 0.8` and `z = 0.2`,
/// then doubled whenever a pair of observations of the same point shows a
/// larger slope than the current estimate. `c` never shrinks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEstimator {
    c: f64,
    nu_max: f64,
    spent: f64,
}

impl BiasEstimator {
    pub const PROBE_HIGH: f64 = 0.8;
    pub const PROBE_LOW: f64 = 0.2;

    /// Estimator from the two probe values observed at [`Self::PROBE_HIGH`]
    /// and [`Self::PROBE_LOW`].
    pub fn from_probes(y_high: f64, y_low: f64, spent: f64) -> Self {
        let slope = 2.0 * (y_high - y_low).abs() / (Self::PROBE_HIGH - Self::PROBE_LOW);
        let c = if slope.is_finite() {
            slope.max(C_MIN)
        } else {
            C_MIN
        };
        Self {
            c,
            nu_max: 2.0 * c,
            spent,
        }
    }

    /// Probes one uniformly drawn point of the objective's domain at both
    /// probe fidelities. The probes are returned so they can be logged and
    /// charged to the run.
    pub fn init(
        objective: &dyn MultiFidelityObjective,
        rng: &mut dyn RngCore,
    ) -> Result<(Self, [Observation; 2]), EvalError> {
        let x: Vec<f64> = objective
            .domain()
            .bounds()
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..=hi))
            .collect();
        let high = objective.evaluate(&x, Self::PROBE_HIGH, rng)?;
        let low = objective.evaluate(&x, Self::PROBE_LOW, rng)?;
        let est = Self::from_probes(high.y, low.y, high.cost + low.cost);
        Ok((est, [high, low]))
    }

    /// Doubles `c` when `|y1 - y2| / |z1 - z2| > c`. Returns whether it did.
    pub fn update(&mut self, z1: f64, y1: f64, z2: f64, y2: f64) -> bool {
        let dz = (z1 - z2).abs();
        if dz == 0.0 {
            return false;
        }
        if (y1 - y2).abs() / dz > self.c {
            self.c *= 2.0;
            self.nu_max = 2.0 * self.c;
            true
        } else {
            false
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn nu_max(&self) -> f64 {
        self.nu_max
    }

    /// Cost consumed by the two initial probes.
    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn model(&self) -> BiasModel {
        BiasModel::Linear { c: self.c }
    }
}

/// Where a tree search reads its bias model from.
///
/// The estimator variant is shared between every instance of a run; each read
/// or update takes the lock once, so updates are atomic read-modify-writes.
#[derive(Debug, Clone)]
pub enum BiasSource {
    Known(BiasModel),
    Estimated(Arc<Mutex<BiasEstimator>>),
}

impl BiasSource {
    pub fn estimated(est: BiasEstimator) -> Self {
        BiasSource::Estimated(Arc::new(Mutex::new(est)))
    }

    pub fn model(&self) -> BiasModel {
        match self {
            BiasSource::Known(m) => *m,
            BiasSource::Estimated(est) => lock(est).model(),
        }
    }

    pub fn estimator(&self) -> Option<BiasEstimator> {
        match self {
            BiasSource::Known(_) => None,
            BiasSource::Estimated(est) => Some(*lock(est)),
        }
    }

    /// Feeds a pair of observations of the same point. No-op for a known model.
    pub fn observe_pair(&self, z1: f64, y1: f64, z2: f64, y2: f64) -> bool {
        match self {
            BiasSource::Known(_) => false,
            BiasSource::Estimated(est) => lock(est).update(z1, y1, z2, y2),
        }
    }
}

fn lock(est: &Mutex<BiasEstimator>) -> std::sync::MutexGuard<'_, BiasEstimator> {
    // a panic while holding the lock cannot leave the estimator half-updated
    est.lock().unwrap_or_else(|e| e.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Synthetic;
    use crate::partition::BoxDomain;
    use proptest::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_bias_values() {
        assert_eq!(BiasModel::linear(1.0).bias(1.0), 0.0);
        assert_eq!(BiasModel::linear(2.0).bias(0.5), 1.0);
        assert_eq!(BiasModel::linear(0.5).bias(0.0), 0.5);
        assert_eq!(BiasModel::linear(0.0), BiasModel::Linear { c: C_MIN });
    }

    #[test]
    fn inverse_examples() {
        let m = BiasModel::linear(1.0);
        assert_eq!(m.inverse(0.5), 0.5);
        assert_eq!(m.inverse(2.0), 0.0);
        for c in [0.01, 1.0, 37.0] {
            assert_eq!(BiasModel::linear(c).inverse(0.0), 1.0);
        }
        assert_eq!(BiasModel::None.inverse(0.3), 1.0);
    }

    #[test]
    fn inverse_round_trip_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let c = rng.random_range(C_MIN..10.0);
            let b = rng.random_range(0.0..2.0 * c);
            let m = BiasModel::linear(c);
            let back = m.bias(m.inverse(b));
            assert!(back <= b + 1e-12, "c={c} b={b}");
            if b <= c {
                assert!((back - b).abs() <= 1e-12, "c={c} b={b} back={back}");
            }
        }
    }

    proptest! {
        #[test]
        fn inverse_is_nonincreasing(c in C_MIN..50.0, b1 in 0.0..100.0f64, b2 in 0.0..100.0f64) {
            let m = BiasModel::linear(c);
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            prop_assert!(m.inverse(lo) >= m.inverse(hi));
        }
    }

    #[test]
    fn update_doubles_only_above_threshold() {
        let mut est = BiasEstimator::from_probes(0.0, 0.3, 0.0);
        assert!((est.c() - 1.0).abs() < 1e-12);
        let mut e2 = est;
        assert!(!e2.update(0.5, 0.0, 0.4, 0.09));
        assert_eq!(e2.c(), est.c());
        assert!(est.update(0.5, 0.0, 0.3, 0.3));
        assert!((est.c() - 2.0).abs() < 1e-12);
        assert!((est.nu_max() - 4.0).abs() < 1e-12);
        assert!(est.update(0.5, 0.0, 0.3, 0.9));
        assert!((est.c() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn init_recovers_constructed_bias() {
        let c0 = 0.7;
        let obj = Synthetic::new(
            "biased",
            BoxDomain::unit(2),
            CostFunction::power(0.1, 1.0, 2.0),
            0.0,
            move |x, z| x[0] - c0 * (1.0 - z),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (est, probes) = BiasEstimator::init(&obj, &mut rng).unwrap();
        assert!((est.c() - 2.0 * c0).abs() < 1e-12);
        assert!((est.nu_max() - 4.0 * c0).abs() < 1e-12);
        assert_eq!(probes[0].x, probes[1].x);
        let expected_spent = (0.1 + 0.04) + (0.1 + 0.64);
        assert!((est.spent() - expected_spent).abs() < 1e-12);
    }

    #[test]
    fn init_floors_flat_objective() {
        let obj = Synthetic::new(
            "flat",
            BoxDomain::unit(1),
            CostFunction::Constant(1.0),
            0.0,
            |x, _| x[0],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (est, _) = BiasEstimator::init(&obj, &mut rng).unwrap();
        assert_eq!(est.c(), C_MIN);
        assert_eq!(est.spent(), 2.0);
    }

    #[test]
    fn cost_parse() {
        assert!(matches!(CostFunction::parse("2.5"), Some(CostFunction::Constant(c)) if c == 2.5));
        let p = CostFunction::parse("0.05, 0.95, 3").unwrap();
        assert!((p.top() - 1.0).abs() < 1e-15);
        assert!(CostFunction::parse("0, 1, 1").is_none());
        assert!(CostFunction::parse("1, 2").is_none());
        assert!(CostFunction::parse("abc").is_none());
    }

    #[test]
    fn shared_source_sees_updates() {
        let src = BiasSource::estimated(BiasEstimator::from_probes(1.0, 1.0, 0.0));
        let other = src.clone();
        assert!(other.observe_pair(1.0, 0.0, 0.0, 1.0));
        assert_eq!(src.model(), BiasModel::Linear { c: 2.0 * C_MIN });
        assert!(!BiasSource::Known(BiasModel::None).observe_pair(1.0, 0.0, 0.0, 5.0));
    }
}
