use serde::Serialize;
use serde_json::json;
use thermoclust::algebra::{sigma_x, sigma_z, GlobalOperator, PauliOp, PauliString};
use thermoclust::expansion::{
    connected_subsets, partition_ratio_cached, subset_sum_identity_check, term_norm,
    verify_factorization, verify_resummation, verify_supercluster_resummation,
    verify_swap_identity, Cluster, PartitionCache,
};
use thermoclust::gibbs::{
    bound_certificate, covariance_profile, fit_decay, ising_closed_form, ising_correlation_length,
    ising_covariances, DecayFit, Spectrum, COVARIANCE_FLOOR,
};
use thermoclust::lattice::{connected_set_bound, LatticeGeometry, Region, Site};
use thermoclust::model::HamiltonianSpec;
use thermoclust::Error;

use crate::config::{ExperimentConfig, Observable};
use crate::report::{Check, Report};
use crate::CliError;

/// Largest lattice for the exhaustive partition-ratio scan.
const MAX_RATIO_SITES: usize = 10;
const MAX_ISING_SITES: usize = 12;
const MAX_COUNT_DIM: usize = 3;
const MAX_COUNT_K: usize = 6;
/// Counting stops when the bound itself exceeds this many sets.
const MAX_COUNT_BOUND: f64 = 1e8;

pub struct Outcome {
    pub report: Report,
    pub csv: Option<Vec<[String; 4]>>,
}

fn model(config: &ExperimentConfig) -> Result<HamiltonianSpec, CliError> {
    let m = config
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a \"model\"".into()))?;
    Ok(m.build()?)
}

fn describe(spec: &HamiltonianSpec) -> String {
    format!(
        "|Λ|={} D={} R={} a={:.6}",
        spec.lattice().len(),
        spec.dim(),
        spec.range(),
        spec.a()
    )
}

fn single(op: thermoclust::algebra::ComplexMatrix, x: &Site) -> Result<GlobalOperator, CliError> {
    Ok(GlobalOperator::new(Region::from_sites([x.clone()]), 2, op)?)
}

fn placed(o: &Observable) -> Result<GlobalOperator, CliError> {
    Ok(o.pauli.place(&o.anchor)?)
}

pub fn verify(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = model(config)?;
    let betas = if config.betas.is_empty() {
        vec![1.0]
    } else {
        config.betas.clone()
    };
    let lattice = spec.lattice().clone();
    let interior = spec.interior();
    let first = lattice.iter().next().expect("nonempty lattice").clone();
    let last = lattice.iter().last().expect("nonempty lattice").clone();
    let (a_op, b_op) = match config.observables.as_slice() {
        [] => (single(sigma_z(), &first)?, single(sigma_z(), &last)?),
        [a] => (placed(a)?, placed(a)?),
        [a, b, ..] => (placed(a)?, placed(b)?),
    };
    let mut report = Report::new("verify");
    let inst = describe(&spec);

    for &beta in &betas {
        let tag = |extra: &str| format!("{inst} β={beta}{extra}");
        report.push(Check::new(
            "resummation",
            tag(""),
            verify_resummation(&spec, beta)?,
            config.tolerance("resummation"),
        ));

        let mut worst = 0.0f64;
        for mask in 0u64..1 << interior.len() {
            let i = interior.subset_by_mask(mask);
            if i.len() <= 3 {
                let excess = term_norm(&spec, &i, beta)? - (2.0 * spec.a()).powi(i.len() as i32);
                worst = worst.max(excess);
            }
        }
        report.push(Check::new(
            "norm_bound",
            tag(" |I|≤3"),
            worst,
            config.tolerance("norm_bound"),
        ));

        if let (Some(i1), Some(i2)) = (interior.iter().next(), interior.iter().last()) {
            let c1 = Cluster {
                configuration: Region::from_sites([i1.clone()]),
                observable: a_op.clone(),
            };
            let c2 = Cluster {
                configuration: Region::from_sites([i2.clone()]),
                observable: b_op.clone(),
            };
            match verify_factorization(&spec, &c1, &c2, beta) {
                Ok(r) => report.push(Check::new(
                    "factorization",
                    tag(&format!(" I1={{{i1}}} I2={{{i2}}}")),
                    r.residual,
                    config.tolerance("factorization"),
                )),
                Err(Error::SupportsConnected) => report.skip(
                    "factorization",
                    "clusters at the lattice ends are R-connected",
                ),
                Err(e) => return Err(e.into()),
            }
        } else {
            report.skip("factorization", "empty interior");
        }

        match verify_swap_identity(&spec, &a_op, &b_op, beta) {
            Ok(r) => {
                let sum = if r.involution_ok {
                    r.residual
                } else {
                    f64::INFINITY
                };
                report.push(Check::new(
                    "swap",
                    tag(&format!(" pairs={}", r.pairs_in_event)),
                    sum,
                    config.tolerance("swap"),
                ));
                if r.pairs_compared > 0 {
                    report.push(Check::new(
                        "swap_pairwise",
                        tag(&format!(
                            " compared={}/{}",
                            r.pairs_compared, r.pairs_in_event
                        )),
                        r.max_pair_residual,
                        config.tolerance("swap"),
                    ));
                }
                if r.pairs_compared < r.pairs_in_event {
                    report.skip(
                        "swap_pairwise",
                        format!(
                            "β={beta}: {} of {} pairs involve weights evaluated by alternating sums, \
                             whose relative error is not controlled",
                            r.pairs_in_event - r.pairs_compared,
                            r.pairs_in_event
                        ),
                    );
                }
            }
            Err(e @ (Error::SizeCap { .. } | Error::NotConnected)) => {
                report.skip("swap", e.to_string())
            }
            Err(e) => return Err(e.into()),
        }

        if let Some(c) = interior.iter().nth(interior.len() / 2) {
            let s = Region::from_sites([c.clone()]);
            let r = verify_supercluster_resummation(
                &spec,
                &s,
                &s,
                &single(sigma_z(), c)?,
                &single(sigma_x(), c)?,
                beta,
            );
            match r {
                Ok(r) => report.push(Check::new(
                    "supercluster",
                    tag(&format!(" S0={{{c}}} pairs={}", r.pairs)),
                    r.residual.max(r.residual_split),
                    config.tolerance("supercluster"),
                )),
                Err(e @ Error::SizeCap { .. }) => report.skip("supercluster", e.to_string()),
                Err(e) => return Err(e.into()),
            }
        }

        if lattice.len() <= MAX_RATIO_SITES {
            let normalized = if spec.require_nonpositive().is_ok() {
                spec.clone()
            } else {
                spec.normalize_nonpositive()?
            };
            let mut cache = PartitionCache::new(&normalized, beta);
            let sets = connected_subsets(&normalized, 3)?;
            let mut worst = 0.0f64;
            for s in &sets {
                let r = partition_ratio_cached(&mut cache, s)?;
                worst = worst
                    .max(r.ratio - r.bound)
                    .max(r.split_over_full - 1.0)
                    .max(1.0 - 1e-9 - r.z_closure);
            }
            report.push(Check::new(
                "partition_ratio",
                tag(&format!(" |S|≤3 sets={}", sets.len())),
                worst,
                config.tolerance("partition_ratio"),
            ));
        } else {
            report.skip(
                "partition_ratio",
                format!("lattice has more than {MAX_RATIO_SITES} sites"),
            );
        }
    }

    let (lhs, rhs) = subset_sum_identity_check(10, 0.5)?;
    report.push(Check::new(
        "subset_sum",
        "|F|=10 p=0.5",
        (lhs - rhs).abs() / rhs,
        config.tolerance("subset_sum"),
    ));
    report.data = json!({ "a": spec.a(), "betas": betas, "interior": interior.len() });
    Ok(Outcome { report, csv: None })
}

#[derive(Serialize)]
struct FitEntry {
    beta: f64,
    fit: Option<DecayFit>,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

fn number(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

pub fn decay(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = model(config)?;
    if config.betas.is_empty() {
        return Err(CliError::Config(
            "decay needs a nonempty \"betas\" list".into(),
        ));
    }
    if config.distances.is_empty() {
        return Err(CliError::Config(
            "decay needs a nonempty \"distances\" list".into(),
        ));
    }
    let first = spec
        .lattice()
        .iter()
        .next()
        .expect("nonempty lattice")
        .clone();
    let default = Observable {
        pauli: PauliString::single(PauliOp::X, spec.dim()),
        anchor: first,
    };
    let (a, b) = match config.observables.as_slice() {
        [] => (default.clone(), default),
        [a] => (a.clone(), a.clone()),
        [a, b, ..] => (a.clone(), b.clone()),
    };
    let h = spec.hamiltonian(spec.lattice())?;
    let spectrum = Spectrum::new(&h)?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &beta in &config.betas {
        let state = spectrum.state(beta)?;
        let profile = covariance_profile(&state, &a.pauli, &b.pauli, &a.anchor, &config.distances)?;
        for &(d, c) in &profile {
            rows.push([number(beta), d.to_string(), number(c), number(c.ln())]);
        }
        fits.push(match fit_decay(&profile) {
            Ok(fit) => FitEntry {
                beta,
                fit: Some(fit),
                degenerate: false,
                reason: None,
            },
            Err(e @ (Error::DecayFloor { .. } | Error::NoDecay { .. })) => FitEntry {
                beta,
                fit: None,
                degenerate: true,
                reason: Some(e.to_string()),
            },
            Err(e) => return Err(e.into()),
        });
    }
    let xis: Vec<f64> = fits
        .iter()
        .filter_map(|f| f.fit.as_ref().map(|f| f.xi))
        .collect();
    let max_xi = xis
        .iter()
        .cloned()
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let min_xi = xis
        .iter()
        .cloned()
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    let mut report = Report::new("decay");
    report.data = json!({
        "instance": describe(&spec),
        "covariance_floor": COVARIANCE_FLOOR,
        "fits": fits,
        "max_xi": max_xi,
        "xi_ratio": max_xi.zip(min_xi).map(|(hi, lo)| hi / lo),
    });
    Ok(Outcome {
        report,
        csv: Some(rows),
    })
}

pub fn count(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let c = config
        .count
        .as_ref()
        .ok_or_else(|| CliError::Config("count needs a \"count\" block".into()))?;
    if c.dim == 0 || c.range == 0 || c.k_max == 0 {
        return Err(CliError::Config("D, R and k_max must be positive".into()));
    }
    if c.dim > MAX_COUNT_DIM {
        return Err(Error::SizeCap {
            what: "counting dimension",
            limit: MAX_COUNT_DIM,
            got: c.dim,
        }
        .into());
    }
    if c.k_max > MAX_COUNT_K {
        return Err(Error::SizeCap {
            what: "counting set size",
            limit: MAX_COUNT_K,
            got: c.k_max,
        }
        .into());
    }
    let top = connected_set_bound(c.dim, c.range, c.k_max);
    if top > MAX_COUNT_BOUND {
        return Err(Error::SizeCap {
            what: "counting bound at k_max",
            limit: MAX_COUNT_BOUND as usize,
            got: top.min(usize::MAX as f64) as usize,
        }
        .into());
    }
    let origin = Site::origin(c.dim);
    let mut report = Report::new("count");
    let mut table = Vec::new();
    for k in 1..=c.k_max {
        let half = i64::from(2 * c.range * (k as u32 - 1));
        let g = LatticeGeometry::new(c.dim, c.range, Region::hypercube(c.dim, half))?;
        let n = g.count_connected_sets(&origin, k)?;
        let bound = connected_set_bound(c.dim, c.range, k);
        table.push(json!({ "k": k, "count": n, "bound": bound, "ratio": n as f64 / bound }));
        report.push(Check::new(
            "count_bound",
            format!("D={} R={} k={k}", c.dim, c.range),
            (n as f64 - bound).max(0.0),
            0.0,
        ));
    }
    report.data = json!({ "table": table });
    Ok(Outcome { report, csv: None })
}

pub fn ising(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let c = config
        .ising
        .as_ref()
        .ok_or_else(|| CliError::Config("ising needs an \"ising\" block".into()))?;
    if c.n < 2 {
        return Err(CliError::Config("ising chain needs n >= 2".into()));
    }
    if c.n > MAX_ISING_SITES {
        return Err(Error::SizeCap {
            what: "Ising chain length",
            limit: MAX_ISING_SITES,
            got: c.n,
        }
        .into());
    }
    if !c.j.is_finite() || c.j == 0.0 {
        return Err(CliError::Config("J must be finite and nonzero".into()));
    }
    let betas = if config.betas.is_empty() {
        vec![0.5]
    } else {
        config.betas.clone()
    };
    let mut report = Report::new("ising");
    let mut rows = Vec::new();
    for &beta in &betas {
        let covs = ising_covariances(c.n, c.j, beta)?;
        let dev = covs
            .iter()
            .map(|&(i, j, v)| (v - ising_closed_form(c.j, beta, (j - i) as u64)).abs())
            .fold(0.0, f64::max);
        let inst = format!("n={} J={} β={beta}", c.n, c.j);
        report.push(Check::new(
            "ising_covariance",
            inst.clone(),
            dev,
            config.tolerance("ising"),
        ));
        let points: Vec<(u64, f64)> = covs
            .iter()
            .filter(|(i, _, _)| *i == 0)
            .map(|&(_, j, v)| (j as u64, v.abs()))
            .collect();
        let exact = ising_correlation_length(c.j, beta);
        let fitted = match fit_decay(&points) {
            Ok(fit) => {
                let rel = (fit.xi - exact).abs() / exact;
                report.push(Check::new(
                    "ising_xi",
                    inst,
                    rel,
                    config.tolerance("ising_xi"),
                ));
                Some(fit.xi)
            }
            Err(e @ (Error::DecayFloor { .. } | Error::NoDecay { .. })) => {
                report.skip("ising_xi", format!("{inst}: {e}"));
                None
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(
            json!({ "beta": beta, "max_deviation": dev, "xi_fit": fitted, "xi_exact": exact }),
        );
    }
    report.data = json!({ "runs": rows });
    Ok(Outcome { report, csv: None })
}

pub fn certify(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = model(config)?;
    let constants = &spec.metadata().center_constants;
    let worst = constants
        .iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(c, _)| c.to_string())
        .unwrap_or_else(|| "none".into());
    let mut report = Report::new("certify");
    let a_max = config.tolerance("certify_a_max");
    let mut check = Check::new(
        "certify_a",
        format!("{} worst center {worst}", describe(&spec)),
        spec.a(),
        a_max,
    );
    check.pass = spec.a() < a_max;
    report.push(check);
    report.data = json!({
        "a": spec.a(),
        "centers": constants.iter().map(|(c, a)| json!({ "center": c, "a": a })).collect::<Vec<_>>(),
        "certificate": bound_certificate(&spec),
    });
    Ok(Outcome { report, csv: None })
}
