use thermoclust::algebra::{sigma_x, sigma_z, ComplexMatrix, GlobalOperator};
use thermoclust::expansion::{
    covariance_from_expansion, partition_ratio, subset_sum_identity_check, term_norm,
    verify_factorization, verify_resummation, verify_supercluster_resummation, verify_weight_sum,
    weight, Cluster,
};
use thermoclust::lattice::Region;
use thermoclust::model::{free_chain, xxz_chain, HamiltonianSpec};
use thermoclust::Error;

fn at(x: i64, m: ComplexMatrix) -> GlobalOperator {
    GlobalOperator::new(Region::line([x]), 2, m).unwrap()
}

fn certified_specs() -> Vec<(&'static str, HamiltonianSpec)> {
    vec![
        ("free", free_chain(5, 1).unwrap()),
        ("weak", xxz_chain(5, 0.02, 0.02, 0.0, 0).unwrap()),
        ("disordered", xxz_chain(5, 0.05, 0.03, 0.8, 11).unwrap()),
    ]
}

#[test]
fn resummation_on_every_certified_instance() {
    for (name, spec) in certified_specs() {
        let mut seen = Vec::new();
        for beta in [0.5, 2.0, 10.0] {
            let r = verify_resummation(&spec, beta).unwrap();
            assert!(r <= 1e-10, "{name} β={beta}: {r}");
            seen.push(r);
        }
        let spread =
            seen.iter().cloned().fold(0.0, f64::max) - seen.iter().cloned().fold(1.0, f64::min);
        assert!(spread <= 1e-10);
    }
}

#[test]
fn weight_sum_matches_partition_function() {
    let spec = xxz_chain(6, 0.03, 0.01, 0.4, 2).unwrap();
    let id = GlobalOperator::identity(Region::empty(), 2).unwrap();
    for beta in [0.5, 3.0] {
        let (lhs, rhs) = verify_weight_sum(&spec, &id, beta).unwrap();
        assert!((lhs - rhs).norm() / rhs.norm() < 1e-10);
        let (lhs, rhs) = verify_weight_sum(&spec, &at(2, sigma_z()), beta).unwrap();
        assert!(
            (lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1e-12),
            "{lhs} {rhs}"
        );
    }
}

#[test]
fn term_norms_respect_certified_constant() {
    for n in [5usize, 6, 7, 8] {
        let spec = xxz_chain(n, 0.03, 0.02, 0.5, n as u64).unwrap();
        let a = spec.a();
        let interior = spec.interior();
        for mask in 0u64..1 << interior.len() {
            let i = interior.subset_by_mask(mask);
            if i.len() > 3 {
                continue;
            }
            let norm = term_norm(&spec, &i, 2.0).unwrap();
            assert!(
                norm <= (2.0 * a).powi(i.len() as i32) + 1e-12,
                "n={n} {i:?}"
            );
        }
    }
}

#[test]
fn weights_respect_configuration_bound() {
    let spec = xxz_chain(7, 0.03, 0.02, 0.5, 3).unwrap();
    let p = 2.0 * spec.a() * 2f64.powi(3);
    let interior = spec.interior();
    for mask in 0u64..1 << interior.len() {
        let i = interior.subset_by_mask(mask);
        if i.len() <= 3 {
            let w = weight(&spec, &i, 4.0).unwrap();
            assert!(w.abs() <= p.powi(i.len() as i32) + 1e-12);
        }
    }
}

#[test]
fn factorization_free_and_interacting() {
    let free = free_chain(9, 1).unwrap();
    let c1 = Cluster {
        configuration: Region::empty(),
        observable: at(0, sigma_z()),
    };
    let c2 = Cluster {
        configuration: Region::empty(),
        observable: at(8, sigma_z()),
    };
    assert!(verify_factorization(&free, &c1, &c2, 1.0).unwrap().residual <= 1e-12);

    let spec = xxz_chain(9, 0.02, 0.02, 0.3, 7).unwrap();
    let c1 = Cluster {
        configuration: Region::line([1]),
        observable: at(0, sigma_z()),
    };
    let c2 = Cluster {
        configuration: Region::line([6, 7]),
        observable: at(8, sigma_z()),
    };
    for beta in [0.5, 5.0] {
        let r = verify_factorization(&spec, &c1, &c2, beta).unwrap();
        assert!(r.residual <= 1e-10, "{r:?}");
    }
}

#[test]
fn supercluster_with_nonempty_complement() {
    let spec = xxz_chain(9, 0.02, 0.02, 0.3, 7).unwrap();
    let a = at(2, sigma_z());
    let b = at(3, sigma_x());
    let r =
        verify_supercluster_resummation(&spec, &Region::line([2]), &Region::line([3]), &a, &b, 2.0)
            .unwrap();
    assert!(r.pairs > 1);
    assert!(r.ratio_factor < 1.0);
    assert!((r.ratio_factor - r.ratio_factor_from_weights).abs() <= 1e-12);
    assert!(r.residual <= 1e-10 && r.residual_split <= 1e-10, "{r:?}");
}

#[test]
fn supercluster_requires_connected_core() {
    let spec = xxz_chain(8, 0.02, 0.02, 0.3, 7).unwrap();
    let r = verify_supercluster_resummation(
        &spec,
        &Region::empty(),
        &Region::empty(),
        &at(0, sigma_z()),
        &at(7, sigma_z()),
        1.0,
    );
    assert!(matches!(r, Err(Error::NotConnected)));
}

#[test]
fn partition_ratio_on_normalized_chain() {
    let spec = xxz_chain(8, 0.02, 0.02, 0.3, 7)
        .unwrap()
        .normalize_nonpositive()
        .unwrap();
    let r = partition_ratio(&spec, &Region::line([3, 4]), 5.0).unwrap();
    // With every v_x ⪯ 0 the ratio cannot exceed one.
    assert!(r.ratio > 0.9 && r.ratio <= 1.0 && r.ratio <= r.bound);
    assert_eq!(r.bound, 64.0);
    assert!(r.closure_link_ok && r.monotone_link_ok);
}

#[test]
fn covariance_matches_direct_state() {
    let spec = xxz_chain(6, 0.05, 0.03, 0.3, 7).unwrap();
    for (a, b) in [
        (at(0, sigma_x()), at(3, sigma_x())),
        (at(1, sigma_x()), at(3, sigma_x())),
        (at(1, sigma_z()), at(2, sigma_z())),
    ] {
        let r = covariance_from_expansion(&spec, &a, &b, 2.0).unwrap();
        assert!(r.residual <= 1e-9, "{r:?}");
        assert!(r.direct.norm() > 0.0 && r.pairs > 0);
    }
}

#[test]
fn subset_sum_matches_binomial() {
    for (n, p) in [(5usize, 0.3), (12, 1.7), (20, 0.01)] {
        let (l, r) = subset_sum_identity_check(n, p).unwrap();
        assert!((l - r).abs() <= 1e-12 * r);
    }
    assert!(matches!(
        subset_sum_identity_check(25, 0.5),
        Err(Error::SizeCap { .. })
    ));
}
