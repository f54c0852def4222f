use proptest::prelude::*;

use wow_core::index::expected_top;
use wow_core::oracle::{brute_knn_filtered, edge_quality};
use wow_core::{DistanceCounter, IndexParams, Metric, RangeFilter, WowIndex};

#[derive(Debug, Clone)]
enum Op {
    Insert(Vec<f32>, i64),
    Delete(usize),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    let insert = (prop::collection::vec(-10.0f32..10.0, 3), -30i64..30).prop_map(|(v, a)| Op::Insert(v, a));
    let delete = any::<usize>().prop_map(Op::Delete);
    prop::collection::vec(prop_oneof![6 => insert, 1 => delete], 1..160)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn invariants_survive_any_insert_sequence(ops in ops(), m in (1usize..5).prop_map(|h| h * 2), o in 2usize..6) {
        let params = IndexParams { m, omega_c: m.max(8), o, metric: Metric::L2, ..IndexParams::default() };
        let mut idx = WowIndex::new(params, 3).unwrap();
        for op in &ops {
            match op {
                Op::Insert(v, a) => {
                    idx.insert(v, *a).unwrap();
                    prop_assert_eq!(idx.top(), expected_top(o, idx.unique_count()));
                }
                Op::Delete(i) if !idx.is_empty() => {
                    idx.soft_delete((*i % idx.len()) as u32).unwrap();
                }
                Op::Delete(_) => {}
            }
        }
        let violations = idx.check_invariants();
        prop_assert!(violations.is_empty(), "{:?}", violations);
        let q = edge_quality(&idx);
        prop_assert!((0.0..=1.0).contains(&q.domination_rate));

        let mut ctx = idx.context();
        for (x, y) in [(-30, 30), (-5, 5), (0, 0), (10, 29)] {
            let r = RangeFilter::new(x, y).unwrap();
            let res = idx.search_knn(&[0.0; 3], &r, 5, 8, &mut ctx).unwrap();
            prop_assert!(res.len() <= 5);
            for n in &res {
                prop_assert!(r.contains(idx.dataset().attribute(n.id)));
                prop_assert!(!idx.is_deleted(n.id));
            }
            let live = brute_knn_filtered(idx.dataset(), &[0.0; 3], &r, 5, &mut DistanceCounter::new(), |id| !idx.is_deleted(id));
            if live.ids.is_empty() {
                prop_assert!(res.is_empty());
            }
        }
    }

    #[test]
    fn bytes_round_trip(ops in ops()) {
        let mut idx = WowIndex::new(IndexParams { m: 4, omega_c: 8, ..IndexParams::default() }, 3).unwrap();
        for op in &ops {
            match op {
                Op::Insert(v, a) => { idx.insert(v, *a).unwrap(); }
                Op::Delete(i) if !idx.is_empty() => { idx.soft_delete((*i % idx.len()) as u32).unwrap(); }
                Op::Delete(_) => {}
            }
        }
        let bytes = idx.to_image().encode();
        let back = WowIndex::from_image(wow_core::index::IndexImage::decode(&bytes).unwrap(), idx.dataset().clone()).unwrap();
        prop_assert_eq!(back.to_image().encode(), bytes);
    }
}
