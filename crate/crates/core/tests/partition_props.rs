use mftree::partition::{self, BoxDomain, CellId};
use num_bigint::BigUint;
use proptest::prelude::*;

fn overlaps(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    a.iter()
        .zip(b)
        .all(|(&(alo, ahi), &(blo, bhi))| alo < bhi && blo < ahi)
}

fn volume(bounds: &[(f64, f64)]) -> f64 {
    bounds.iter().map(|(lo, hi)| hi - lo).product()
}

#[test]
fn levels_tile_the_domain() {
    let domains = [
        BoxDomain::new(vec![(-1.0, 3.0)]).unwrap(),
        BoxDomain::new(vec![(0.0, 1.0), (-2.0, 2.0)]).unwrap(),
        BoxDomain::new(vec![(-1.0, 3.0), (0.0, 0.5), (2.0, 5.0)]).unwrap(),
    ];
    for domain in &domains {
        let root = partition::root(domain);
        let total = volume(domain.bounds());
        for h in 0..=10 {
            let cells = root.descendants_at(h);
            assert_eq!(cells.len(), 1 << h);
            let sum: f64 = cells.iter().map(|c| volume(c.bounds())).sum();
            assert!(
                (sum - total).abs() <= 1e-9 * total,
                "h={h}: {sum} vs {total}"
            );
            for (k, c) in cells.iter().enumerate() {
                for (&(lo, hi), &(dlo, dhi)) in c.bounds().iter().zip(domain.bounds()) {
                    assert!(dlo <= lo && lo < hi && hi <= dhi);
                }
                for other in &cells[k + 1..] {
                    assert!(
                        !overlaps(c.bounds(), other.bounds()),
                        "h={h}: {:?} {:?}",
                        c.id(),
                        other.id()
                    );
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn index_arithmetic(depth in 0u32..300, bits in proptest::collection::vec(any::<u32>(), 10)) {
        let span = BigUint::from(1u32) << depth;
        let raw = BigUint::new(bits) % &span + 1u32;
        // rebuild through the public constructor by descending from the root
        let mut id = CellId::root();
        let offset = &raw - 1u32;
        for k in (0..depth).rev() {
            let (l, r) = id.children();
            id = if offset.bit(u64::from(k)) { r } else { l };
        }
        prop_assert_eq!(id.index(), &raw);
        let (l, r) = id.children();
        prop_assert_eq!(l.index(), &(&raw * 2u32 - 1u32));
        prop_assert_eq!(r.index(), &(&raw * 2u32));
        prop_assert_eq!(l.depth(), depth + 1);
        prop_assert_eq!(l.parent(), Some(id.clone()));
        prop_assert_eq!(r.parent(), Some(id.clone()));
        prop_assert!(id.contains_cell(&l) && id.contains_cell(&r) && !l.contains_cell(&r));
    }

    #[test]
    fn max_width_halves_every_d_splits(d in 1usize..=3, h in 0u32..=10) {
        let domain = BoxDomain::unit(d);
        let expected = 2f64.powi(-((h as usize / d) as i32));
        for cell in partition::root(&domain).descendants_at(h) {
            prop_assert_eq!(cell.max_width(), expected);
        }
    }

    #[test]
    fn points_land_in_their_cell(x in proptest::collection::vec(0.0f64..1.0, 2), h in 0u32..40) {
        let domain = BoxDomain::unit(2);
        let root = partition::root(&domain);
        let mut cell = root.clone();
        for _ in 0..h {
            let (l, r) = cell.split();
            prop_assert!(l.contains(&x, &domain) != r.contains(&x, &domain));
            cell = if l.contains(&x, &domain) { l } else { r };
        }
        prop_assert_eq!(root.descend_to(cell.id()), Some(cell.clone()));
    }
}
