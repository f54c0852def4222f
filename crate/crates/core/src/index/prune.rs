use crate::dataset::{Neighbor, VectorId};

/// Greedy relative-neighborhood selection.
///
/// Candidates carry their distance to `base`. They are scanned in
/// `(distance, id)` order and a candidate `c` is dropped when an already
/// kept `u` is closer to it than `base` is (`base -> c` would be the longest
/// edge of triangle `base, u, c`). Stops once `budget` neighbors are kept.
/// With `check_domination == false` this degenerates to the `budget`
/// nearest candidates.
pub fn rng_prune<F>(
    base: VectorId,
    candidates: &[Neighbor],
    budget: usize,
    check_domination: bool,
    mut dist: F,
) -> Vec<Neighbor>
where
    F: FnMut(VectorId, VectorId) -> f32,
{
    let mut sorted = candidates.to_vec();
    sorted.sort();
    sorted.dedup_by_key(|n| n.id);
    let mut kept: Vec<Neighbor> = Vec::with_capacity(budget);
    for c in sorted {
        if kept.len() >= budget {
            break;
        }
        if c.id == base {
            continue;
        }
        if check_domination && kept.iter().any(|u| dist(u.id, c.id) < c.distance) {
            continue;
        }
        kept.push(c);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(points: &[f32]) -> impl Fn(VectorId, VectorId) -> f32 + '_ {
        move |a, b| {
            let d = points[a as usize] - points[b as usize];
            d * d
        }
    }

    #[test]
    fn dominated_point_is_dropped() {
        // base at 0 (id 0), candidates at 1 (id 1) and 2 (id 2).
        let pts = [0.0, 1.0, 2.0];
        let d = line(&pts);
        let cands = [Neighbor::new(2, d(0, 2)), Neighbor::new(1, d(0, 1))];
        let kept = rng_prune(0, &cands, 2, true, &d);
        assert_eq!(kept.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1]);
        let kept = rng_prune(0, &cands, 2, false, &d);
        assert_eq!(kept.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn trivial_budgets() {
        let c = [Neighbor::new(4, 1.0)];
        assert_eq!(rng_prune(0, &c, 1, true, |_, _| 0.0), c.to_vec());
        assert!(rng_prune(0, &c, 0, true, |_, _| 0.0).is_empty());
        assert!(rng_prune(4, &c, 3, true, |_, _| 0.0).is_empty());
    }

    proptest! {
        #[test]
        fn kept_set_is_locally_non_dominated(
            pts in prop::collection::vec((-100i32..100, -100i32..100), 2..40),
            budget in 1usize..12,
        ) {
            let dist = |a: VectorId, b: VectorId| {
                let (p, q) = (pts[a as usize], pts[b as usize]);
                let (dx, dy) = ((p.0 - q.0) as f32, (p.1 - q.1) as f32);
                dx * dx + dy * dy
            };
            let cands: Vec<Neighbor> = (1..pts.len() as VectorId)
                .map(|i| Neighbor::new(i, dist(0, i)))
                .collect();
            let kept = rng_prune(0, &cands, budget, true, dist);
            prop_assert!(kept.len() <= budget);
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            for c in &kept {
                for u in &kept {
                    prop_assert!(!(dist(u.id, c.id) < c.distance && u.distance < c.distance));
                }
            }
            // Exhaustive: every rejected candidate before the last kept one
            // must have been dominated by an earlier kept neighbor.
            if let Some(last) = kept.last() {
                let mut sorted = cands.clone();
                sorted.sort();
                for c in sorted.iter().take_while(|c| *c <= last) {
                    if !kept.contains(c) {
                        prop_assert!(kept.iter().any(|u| *u < *c && dist(u.id, c.id) < c.distance));
                    }
                }
            }
        }
    }
}
