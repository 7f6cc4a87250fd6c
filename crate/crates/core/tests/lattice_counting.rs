use proptest::prelude::*;
use thermoclust::lattice::{
    counting_run, is_r_connected, supercluster_decompose, LatticeGeometry, Region, Site,
};

#[test]
fn counts_through_a_site_in_one_dimension() {
    // Nearest-neighbour sets through a fixed site in Z are intervals: k of them.
    let g = LatticeGeometry::new(1, 1, Region::hypercube(1, 20)).unwrap();
    let origin = Site::origin(1);
    let reach2: Vec<usize> = (1..=5)
        .map(|k| g.count_connected_sets(&origin, k).unwrap())
        .collect();
    // With R = 1, gaps of one site are allowed (distance 2).
    assert_eq!(reach2[0], 1);
    assert_eq!(reach2[1], 4);
    let chain = LatticeGeometry::chain(6, 1).unwrap();
    let total: usize = chain
        .lattice()
        .iter()
        .map(|v| chain.count_connected_sets(v, 6).unwrap())
        .sum();
    assert_eq!(total, 6);
}

#[test]
fn every_enumerated_set_replays_from_its_run() {
    let g = LatticeGeometry::new(2, 1, Region::hypercube(2, 4)).unwrap();
    let origin = Site::origin(2);
    for s in g.enumerate_connected_sets(&origin, 4).unwrap() {
        assert!(is_r_connected(&s, 1));
        let run = counting_run(&s, &origin, 1).unwrap();
        assert_eq!(run.replay(&origin, 1), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_is_a_partition(mask in 0u64..(1 << 16), split in 0u64..(1 << 16)) {
        let chain = Region::chain(16);
        let all = chain.subset_by_mask(mask);
        let a = all.subset_by_mask(split & ((1u64 << all.len()) - 1));
        let b = all.difference(&a);
        let parts = supercluster_decompose(&[a, b], 1);
        let mut union = Region::empty();
        for p in &parts {
            prop_assert!(union.is_disjoint(p));
            union = union.union(p);
        }
        prop_assert_eq!(union, all);
        for (i, p) in parts.iter().enumerate() {
            prop_assert!(is_r_connected(p, 1));
            for q in &parts[i + 1..] {
                prop_assert!(!thermoclust::lattice::regions_r_connected(p, q, 1));
            }
        }
    }

    #[test]
    fn closure_contains_set_and_interior_is_inside(mask in 1u64..(1 << 9)) {
        let g = LatticeGeometry::chain(9, 1).unwrap();
        let s = g.lattice().subset_by_mask(mask);
        let cl = g.closure(&s).unwrap();
        prop_assert!(s.is_subset(&cl));
        prop_assert!(g.interior(&s).unwrap().is_subset(&s));
    }
}
