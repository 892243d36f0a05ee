//! Infinite binary partition of a box domain.
//!
//! A cell `(h, i)` lives at depth `h` with a 1-based index `i` in `[1, 2^h]`.
//! Its children are `(h + 1, 2i - 1)` and `(h + 1, 2i)`. Splitting halves the
//! widest coordinate at its midpoint (lowest coordinate index wins ties), the
//! left child taking the lower half.
//!
//! Cells are half-open on the upper side except along the outer boundary of
//! the domain, so every point of the domain belongs to exactly one cell per
//! depth.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("domain must have at least one coordinate")]
    Empty,
    #[error("coordinate {coord}: lower bound {lower} is not below upper bound {upper}")]
    InvalidBounds {
        coord: usize,
        lower: f64,
        upper: f64,
    },
    #[error("point has {got} coordinates, domain has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {coord} = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
}

/// Axis-aligned box `[l_1, u_1] x ... x [l_d, u_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    bounds: Vec<(f64, f64)>,
}

impl BoxDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, DomainError> {
        if bounds.is_empty() {
            return Err(DomainError::Empty);
        }
        for (coord, &(lower, upper)) in bounds.iter().enumerate() {
            // also rejects NaN bounds
            if !lower.is_finite() || !upper.is_finite() || lower >= upper {
                return Err(DomainError::InvalidBounds {
                    coord,
                    lower,
                    upper,
                });
            }
        }
        Ok(Self { bounds })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        assert!(dim >= 1, "unit cube needs at least one coordinate");
        Self {
            bounds: vec![(0.0, 1.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Checks that `x` lies in the closed box.
    pub fn check(&self, x: &[f64]) -> Result<(), DomainError> {
        if x.len() != self.dim() {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (coord, (&value, &(lower, upper))) in x.iter().zip(&self.bounds).enumerate() {
            if !(lower <= value && value <= upper) {
                return Err(DomainError::OutOfBounds {
                    coord,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.check(x).is_ok()
    }

    /// Maps a point of the unit cube onto the box.
    pub fn scale_from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(&t, &(lo, hi))| lo + t * (hi - lo))
            .collect()
    }
}

/// Position `(h, i)` of a cell in the infinite binary tree.
///
/// The index grows as `2^h`, so it is stored as an arbitrary precision integer:
/// deep exploitation in one dimension easily passes depth 64.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    depth: u32,
    index: BigUint,
}

impl CellId {
    pub fn root() -> Self {
        Self {
            depth: 0,
            index: BigUint::one(),
        }
    }

    /// Builds an id from small coordinates. Returns `None` when `index` is not in `[1, 2^depth]`.
    pub fn new(depth: u32, index: u64) -> Option<Self> {
        let index = BigUint::from(index);
        if index < BigUint::one() || index > (BigUint::one() << depth) {
            return None;
        }
        Some(Self { depth, index })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn index(&self) -> &BigUint {
        &self.index
    }

    /// Index as `u64` when it fits.
    pub fn index_u64(&self) -> Option<u64> {
        self.index.to_u64()
    }

    /// `(h + 1, 2i - 1)` and `(h + 1, 2i)`.
    pub fn children(&self) -> (CellId, CellId) {
        let right = &self.index << 1u32;
        let left = &right - BigUint::one();
        (
            CellId {
                depth: self.depth + 1,
                index: left,
            },
            CellId {
                depth: self.depth + 1,
                index: right,
            },
        )
    }

    pub fn parent(&self) -> Option<CellId> {
        if self.depth == 0 {
            return None;
        }
        // ceil(i / 2) = (i + 1) / 2
        let index = (&self.index + BigUint::one()) >> 1u32;
        Some(CellId {
            depth: self.depth - 1,
            index,
        })
    }

    /// True when `other` is this cell or one of its descendants.
    pub fn contains_cell(&self, other: &CellId) -> bool {
        if other.depth < self.depth {
            return false;
        }
        let shift = other.depth - self.depth;
        let offset = (&other.index - BigUint::one()) >> shift;
        offset + BigUint::one() == self.index
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.depth, self.index)
    }
}

/// A node of the partition together with its sub-box.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    id: CellId,
    bounds: Vec<(f64, f64)>,
}

/// The cell `(0, 1)` covering the whole domain.
pub fn root(domain: &BoxDomain) -> Cell {
    Cell {
        id: CellId::root(),
        bounds: domain.bounds().to_vec(),
    }
}

impl Cell {
    pub fn id(&self) -> &CellId {
        &self.id
    }

    pub fn depth(&self) -> u32 {
        self.id.depth
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.bounds.iter().map(|&(lo, hi)| hi - lo)
    }

    pub fn max_width(&self) -> f64 {
        self.widths().fold(0.0, f64::max)
    }

    /// Coordinate split next: the widest one, lowest index on ties.
    pub fn split_coordinate(&self) -> usize {
        let mut best = 0;
        let mut best_width = f64::NEG_INFINITY;
        for (coord, width) in self.widths().enumerate() {
            if width > best_width {
                best = coord;
                best_width = width;
            }
        }
        best
    }

    pub fn split(&self) -> (Cell, Cell) {
        let coord = self.split_coordinate();
        let (lo, hi) = self.bounds[coord];
        let mid = 0.5 * (lo + hi);
        let (left_id, right_id) = self.id.children();
        let mut left = self.bounds.clone();
        let mut right = self.bounds.clone();
        left[coord] = (lo, mid);
        right[coord] = (mid, hi);
        (
            Cell {
                id: left_id,
                bounds: left,
            },
            Cell {
                id: right_id,
                bounds: right,
            },
        )
    }

    /// Coordinate-wise midpoint.
    pub fn representative(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Half-open membership: `lower <= x < upper`, closed where the cell touches
    /// the domain's upper boundary.
    pub fn contains(&self, x: &[f64], domain: &BoxDomain) -> bool {
        x.len() == self.bounds.len()
            && x.iter().zip(&self.bounds).zip(domain.bounds()).all(
                |((&v, &(lo, hi)), &(_, outer_hi))| {
                    lo <= v && (v < hi || (hi == outer_hi && v == hi))
                },
            )
    }

    /// Bounds of the descendant `id`, obtained by replaying splits from this cell.
    pub fn descend_to(&self, id: &CellId) -> Option<Cell> {
        if !self.id.contains_cell(id) {
            return None;
        }
        let steps = id.depth - self.id.depth;
        let offset = id.index() - BigUint::one();
        let mut cell = self.clone();
        for k in (0..steps).rev() {
            let (left, right) = cell.split();
            cell = if offset.bit(u64::from(k)) {
                right
            } else {
                left
            };
        }
        Some(cell)
    }

    /// All `2^levels` descendants `levels` below this cell, in index order.
    pub fn descendants_at(&self, levels: u32) -> Vec<Cell> {
        let mut layer = vec![self.clone()];
        for _ in 0..levels {
            layer = layer
                .iter()
                .flat_map(|c| {
                    let (l, r) = c.split();
                    [l, r]
                })
                .collect();
        }
        layer
    }
}
