//! Gibbs states, covariances, decay fits, the Ising chain oracle and the
//! bound certificate.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    embed_add, herm_eig, ComplexMatrix, Eigensystem, GlobalOperator, PauliString,
};
use crate::error::{Error, Result};
use crate::lattice::{Region, Site};
use crate::model::HamiltonianSpec;

/// Covariances at or below this are treated as numerical zero by fits.
pub const COVARIANCE_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionFunction {
    pub z: f64,
    pub log_z: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "beta must be positive and finite, got {beta}"
        )))
    }
}

fn log_partition(eigenvalues: &[f64], beta: f64) -> f64 {
    let shift = eigenvalues
        .iter()
        .map(|e| -beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = eigenvalues.iter().map(|e| (-beta * e - shift).exp()).sum();
    shift + sum.ln()
}

/// `Z = Σ_j exp(−βE_j)`.
pub fn partition_function(h: &GlobalOperator, beta: f64) -> Result<PartitionFunction> {
    check_beta(beta)?;
    let eig = herm_eig(&h.matrix)?;
    let log_z = log_partition(&eig.eigenvalues, beta);
    Ok(PartitionFunction {
        z: log_z.exp(),
        log_z,
    })
}

/// The eigensystem of a Hamiltonian, reusable across temperatures.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub region: Region,
    pub q: usize,
    pub eig: Arc<Eigensystem>,
}

impl Spectrum {
    pub fn new(h: &GlobalOperator) -> Result<Self> {
        Ok(Spectrum {
            region: h.region.clone(),
            q: h.q,
            eig: Arc::new(herm_eig(&h.matrix)?),
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    pub fn state(&self, beta: f64) -> Result<ThermalState> {
        check_beta(beta)?;
        let ev = &self.eig.eigenvalues;
        let log_z = log_partition(ev, beta);
        let weights = ev.iter().map(|e| (-beta * e - log_z).exp()).collect();
        let mut state = ThermalState {
            region: self.region.clone(),
            q: self.q,
            beta,
            log_z,
            weights,
            trace: 1.0,
            eig: Arc::clone(&self.eig),
        };
        let n = self.eig.vectors.dim();
        state.trace = (0..n).map(|r| state.rho_entry(r, r).re).sum();
        Ok(state)
    }
}

/// `ρ = exp(−βH)/Z`, kept in the eigenbasis of `H`.
#[derive(Clone, Debug)]
pub struct ThermalState {
    pub region: Region,
    pub q: usize,
    pub beta: f64,
    pub log_z: f64,
    /// Boltzmann weights `exp(−βE_k)/Z`.
    pub weights: Vec<f64>,
    /// `tr ρ` as represented, one up to rounding.
    trace: f64,
    eig: Arc<Eigensystem>,
}

pub fn gibbs_state(h: &GlobalOperator, beta: f64) -> Result<ThermalState> {
    Spectrum::new(h)?.state(beta)
}

impl ThermalState {
    pub fn rho(&self) -> GlobalOperator {
        GlobalOperator {
            region: self.region.clone(),
            q: self.q,
            matrix: self.eig.reconstruct_with(&self.weights),
        }
    }

    fn rho_entry(&self, c: usize, r: usize) -> Complex64 {
        let u = &self.eig.vectors;
        let (uc, ur) = (u.row(c), u.row(r));
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                acc += uc[k] * ur[k].conj() * w;
            }
        }
        acc
    }

    fn check_region(&self, o: &GlobalOperator) -> Result<()> {
        if o.region != self.region || o.q != self.q {
            return Err(Error::InvalidArgument(
                "observable and state act on different regions".into(),
            ));
        }
        Ok(())
    }

    /// `tr(Oρ)/tr ρ`, costing one pass over the eigenbasis per nonzero of `O`.
    pub fn expectation(&self, o: &GlobalOperator) -> Result<Complex64> {
        self.check_region(o)?;
        let n = o.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            for (c, &value) in o.matrix.row(r).iter().enumerate() {
                if value != Complex64::new(0.0, 0.0) {
                    acc += value * self.rho_entry(c, r);
                }
            }
        }
        Ok(acc / self.trace)
    }
}

/// `tr(ABρ) − tr(Aρ)tr(Bρ)`.
pub fn covariance(
    state: &ThermalState,
    a: &GlobalOperator,
    b: &GlobalOperator,
) -> Result<Complex64> {
    state.check_region(a)?;
    state.check_region(b)?;
    let ab = a.matmul(b)?;
    Ok(state.expectation(&ab)? - state.expectation(a)? * state.expectation(b)?)
}

/// Least-squares line through `(d, ln|cov|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub points: Vec<(u64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub xi: f64,
    pub points_used: usize,
}

/// Fits only points strictly above [`COVARIANCE_FLOOR`].
pub fn fit_decay(points: &[(u64, f64)]) -> Result<DecayFit> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, c)| *c > COVARIANCE_FLOOR)
        .map(|&(d, c)| (d as f64, c.ln()))
        .collect();
    if used.len() < 2 {
        return Err(Error::DecayFloor { usable: used.len() });
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DecayFloor { usable: 1 });
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::NoDecay { slope });
    }
    Ok(DecayFit {
        points: points.to_vec(),
        slope,
        intercept: my - slope * mx,
        xi: -1.0 / slope,
        points_used: used.len(),
    })
}

/// Places `template` at `anchor` and embeds it into the state's region.
pub fn place_observable(
    template: &PauliString,
    anchor: &Site,
    region: &Region,
) -> Result<GlobalOperator> {
    let local = template.place(anchor)?;
    if !local.region.is_subset(region) {
        return Err(Error::NotSubset("the lattice"));
    }
    local.embed_into(region)
}

/// `|Cov(A at anchor, B at anchor + d·e₁)|` for each `d`.
pub fn covariance_profile(
    state: &ThermalState,
    a: &PauliString,
    b: &PauliString,
    anchor: &Site,
    distances: &[u64],
) -> Result<Vec<(u64, f64)>> {
    let oa = place_observable(a, anchor, &state.region)?;
    distances
        .iter()
        .map(|&d| {
            let mut shift = vec![0i64; anchor.dim()];
            shift[0] = d as i64;
            let ob = place_observable(b, &anchor.shifted(&shift), &state.region)?;
            Ok((d, covariance(state, &oa, &ob)?.norm()))
        })
        .collect()
}

/// Covariance profile on the full lattice followed by a fit.
pub fn decay_sweep(
    spec: &HamiltonianSpec,
    beta: f64,
    a: &PauliString,
    b: &PauliString,
    anchor: &Site,
    distances: &[u64],
) -> Result<DecayFit> {
    let h = spec.hamiltonian(spec.lattice())?;
    let state = gibbs_state(&h, beta)?;
    fit_decay(&covariance_profile(&state, a, b, anchor, distances)?)
}

/// Classical chain `H = −J Σ σ³_k σ³_{k+1}` with free ends.
pub fn ising_hamiltonian(n: usize, j: f64) -> Result<GlobalOperator> {
    let region = Region::chain(n);
    let mut h = GlobalOperator::zeros(region, 2)?;
    let zz = crate::algebra::sigma_z().kron(&crate::algebra::sigma_z());
    for k in 0..n.saturating_sub(1) as i64 {
        embed_add(
            &mut h,
            &zz,
            &Region::line([k, k + 1]),
            Complex64::new(-j, 0.0),
        )?;
    }
    Ok(h)
}

/// All `Cov(σ³_i, σ³_j)` with `i < j` from the Gibbs state of the Ising chain.
pub fn ising_covariances(n: usize, j: f64, beta: f64) -> Result<Vec<(usize, usize, f64)>> {
    let h = ising_hamiltonian(n, j)?;
    let state = gibbs_state(&h, beta)?;
    let z: Vec<GlobalOperator> = (0..n as i64)
        .map(|k| {
            crate::model::site_operator(&crate::algebra::sigma_z(), &Site::from(k), &h.region, 2)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for i in 0..n {
        for jj in i + 1..n {
            out.push((i, jj, covariance(&state, &z[i], &z[jj])?.re));
        }
    }
    Ok(out)
}

/// `Cov(σ³_i, σ³_j)` for the Ising chain, computed from its Gibbs state.
pub fn ising_oracle(n: usize, j: f64, beta: f64, i: usize, jj: usize) -> Result<f64> {
    if !(i < jj && jj < n) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= i < j < n, got i={i}, j={jj}, n={n}"
        )));
    }
    let h = ising_hamiltonian(n, j)?;
    let state = gibbs_state(&h, beta)?;
    let zi = crate::model::site_operator(
        &crate::algebra::sigma_z(),
        &Site::from(i as i64),
        &h.region,
        2,
    )?;
    let zj = crate::model::site_operator(
        &crate::algebra::sigma_z(),
        &Site::from(jj as i64),
        &h.region,
        2,
    )?;
    Ok(covariance(&state, &zi, &zj)?.re)
}

/// `tanh(βJ)^d`.
pub fn ising_closed_form(j: f64, beta: f64, distance: u64) -> f64 {
    (beta * j).tanh().powi(distance as i32)
}

/// `−1/ln|tanh(βJ)|`.
pub fn ising_correlation_length(j: f64, beta: f64) -> f64 {
    -1.0 / (beta * j).tanh().abs().ln()
}

/// Eigenvalue histogram with bins `round(E/width)`, returned contiguously
/// from the lowest to the highest occupied bin as `(center, count)`.
pub fn mbdos_histogram(h: &GlobalOperator, bin_width: f64) -> Result<Vec<(f64, usize)>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let ev = herm_eig(&h.matrix)?.eigenvalues;
    Ok(histogram(&ev, bin_width))
}

pub fn histogram(values: &[f64], bin_width: f64) -> Vec<(f64, usize)> {
    let bins: Vec<i64> = values
        .iter()
        .map(|e| (e / bin_width).round() as i64)
        .collect();
    let (Some(&lo), Some(&hi)) = (bins.iter().min(), bins.iter().max()) else {
        return Vec::new();
    };
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for b in bins {
        counts[(b - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| ((lo + k as i64) as f64 * bin_width, c))
        .collect()
}

/// Measured surrogates for the constants of the decay bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub a: f64,
    /// `2a·q^{(2R+1)^D}`.
    pub p: f64,
    /// `2e(2R+1)^D`.
    pub counting_constant: f64,
    /// `2p(1+p)·C_count`.
    pub decay_base: f64,
    /// `ln(1/2 + 1/(2p))`; `None` when `p = 0`.
    pub prefactor_exponent: Option<f64>,
    /// Partition-ratio constant, `q^{(2R+1)^D}` unless measured.
    pub ratio_constant: f64,
    /// `decay_base · C_ratio²`, the rate with the ratio factors kept.
    pub full_rate: f64,
    pub active: bool,
}

pub fn bound_certificate(spec: &HamiltonianSpec) -> BoundCertificate {
    let ball_cube = (2 * spec.range() + 1).pow(spec.dim() as u32) as f64;
    let ratio_constant = (spec.q() as f64).powf(ball_cube);
    certificate_from(spec.a(), ratio_constant, ball_cube)
}

fn certificate_from(a: f64, ratio_constant: f64, ball_cube: f64) -> BoundCertificate {
    let p = 2.0 * a * ratio_constant;
    let counting_constant = 2.0 * std::f64::consts::E * ball_cube;
    let decay_base = 2.0 * p * (1.0 + p) * counting_constant;
    let prefactor_exponent = (p > 0.0).then(|| (0.5 + 0.5 / p).ln());
    BoundCertificate {
        a,
        p,
        counting_constant,
        decay_base,
        prefactor_exponent,
        ratio_constant,
        full_rate: decay_base * ratio_constant * ratio_constant,
        active: decay_base < 1.0,
    }
}

impl BoundCertificate {
    /// Replaces the ratio constant by a measured one; `p` is unchanged.
    pub fn with_measured_ratio(&self, ratio_constant: f64) -> BoundCertificate {
        BoundCertificate {
            ratio_constant,
            full_rate: self.decay_base * ratio_constant * ratio_constant,
            ..self.clone()
        }
    }

    /// `2‖A‖‖B‖ exp(c(|X|+|Y|)) r^{⌈d/2R⌉}/(1−r)` with `r` the decay base,
    /// or `None` when the certificate is inactive.
    pub fn covariance_bound(
        &self,
        norm_a: f64,
        norm_b: f64,
        size_x: usize,
        size_y: usize,
        distance: u64,
        range: u32,
    ) -> Option<f64> {
        if !self.active {
            return None;
        }
        let r = self.decay_base;
        let steps = distance.div_ceil(2 * u64::from(range));
        let prefactor = match self.prefactor_exponent {
            Some(c) => (c * (size_x + size_y) as f64).exp(),
            None => return Some(0.0),
        };
        Some(2.0 * norm_a * norm_b * prefactor * r.powi(steps as i32) / (1.0 - r))
    }
}

/// Dense `exp(−βH)` on the Hamiltonian's own region.
pub fn boltzmann_operator(h: &GlobalOperator, beta: f64) -> Result<ComplexMatrix> {
    crate::algebra::herm_exp(&h.matrix, -beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{relative_frobenius, sigma_x, sigma_z, PauliOp};
    use crate::model::{free_chain, site_operator, xxz_chain};
    use proptest::prelude::*;

    fn single(h: &[f64]) -> GlobalOperator {
        GlobalOperator::new(Region::chain(1), h.len(), ComplexMatrix::from_diag(h)).unwrap()
    }

    #[test]
    fn partition_examples() {
        let zero = GlobalOperator::zeros(Region::chain(3), 2).unwrap();
        assert!((partition_function(&zero, 1.3).unwrap().z - 8.0).abs() < 1e-12);
        let h = single(&[0.0, 1.0]);
        let z = partition_function(&h, std::f64::consts::LN_2).unwrap();
        assert!((z.z - 1.5).abs() < 1e-15);
        assert!(partition_function(&h, 0.0).is_err());
    }

    #[test]
    fn free_partition_function_is_a_product() {
        let spec = xxz_chain(4, 0.0, 0.0, 0.7, 5).unwrap();
        let beta = 1.9;
        let h0 = spec.build_restricted(spec.lattice()).unwrap().h0;
        let direct = partition_function(&h0, beta).unwrap().z;
        let product: f64 = spec
            .onsite_terms()
            .iter()
            .map(|h| {
                crate::algebra::herm_exp(&h.matrix, -beta)
                    .unwrap()
                    .trace()
                    .re
            })
            .product();
        assert!((direct - product).abs() < 1e-12 * product);
    }

    #[test]
    fn gibbs_examples() {
        let h = single(&[0.0, 1.0]);
        let rho = gibbs_state(&h, std::f64::consts::LN_2).unwrap().rho();
        let expect = ComplexMatrix::from_diag(&[2.0 / 3.0, 1.0 / 3.0]);
        assert!(relative_frobenius(&rho.matrix, &expect).unwrap() < 1e-15);

        let spec = xxz_chain(4, 0.02, 0.02, 0.3, 1).unwrap();
        let h = spec.hamiltonian(spec.lattice()).unwrap();
        let hot = gibbs_state(&h, 1e-8).unwrap().rho();
        let flat = ComplexMatrix::identity(16).scale_real(1.0 / 16.0);
        assert!(hot.matrix.sub(&flat).unwrap().max_abs() < 1e-6);
        for beta in [1e-8, 0.1, 1.0, 10.0, 100.0] {
            let rho = gibbs_state(&h, beta).unwrap().rho();
            assert!((rho.trace().re - 1.0).abs() < 1e-10);
            assert!(rho.matrix.hermitian_deviation() < 1e-12);
            let ev = herm_eig(&rho.matrix).unwrap().eigenvalues;
            assert!(ev[0] > -1e-12);
            assert!(rho.matrix.commutator(&h.matrix).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn expectation_agrees_with_dense_trace() {
        let spec = xxz_chain(4, 0.02, 0.01, 0.3, 2).unwrap();
        let h = spec.hamiltonian(spec.lattice()).unwrap();
        let state = gibbs_state(&h, 2.0).unwrap();
        let x = site_operator(&sigma_x(), &Site::from(1), &h.region, 2).unwrap();
        let dense = x.matrix.trace_product(&state.rho().matrix).unwrap();
        assert!((state.expectation(&x).unwrap() - dense).norm() < 1e-14);
    }

    #[test]
    fn covariance_examples() {
        let spec = free_chain(4, 1).unwrap();
        let h = spec.hamiltonian(spec.lattice()).unwrap();
        let state = gibbs_state(&h, 0.7).unwrap();
        let id = GlobalOperator::identity(h.region.clone(), 2).unwrap();
        let z0 = site_operator(&sigma_z(), &Site::from(0), &h.region, 2).unwrap();
        let z3 = site_operator(&sigma_z(), &Site::from(3), &h.region, 2).unwrap();
        assert_eq!(covariance(&state, &id, &z3).unwrap().norm(), 0.0);
        assert!(covariance(&state, &z0, &z3).unwrap().norm() < 1e-12);
        let var = covariance(&state, &z0, &z0).unwrap();
        assert!(var.re >= -1e-12 && var.im.abs() < 1e-15);
        let other = GlobalOperator::identity(Region::chain(2), 2).unwrap();
        assert!(covariance(&state, &other, &other).is_err());
    }

    #[test]
    fn free_sweep_hits_the_floor() {
        let spec = free_chain(6, 1).unwrap();
        let z = PauliString::single(PauliOp::Z, 1);
        let err = decay_sweep(&spec, 1.0, &z, &z, &Site::from(0), &[2, 3, 4]).unwrap_err();
        assert!(matches!(err, Error::DecayFloor { usable: 0 }));
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let pts: Vec<(u64, f64)> = (1..6).map(|d| (d, 3.0 * (-0.4 * d as f64).exp())).collect();
        let fit = fit_decay(&pts).unwrap();
        assert!((fit.slope + 0.4).abs() < 1e-12);
        assert!((fit.xi - 2.5).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        let rising: Vec<(u64, f64)> = (1..4).map(|d| (d, d as f64)).collect();
        assert!(matches!(fit_decay(&rising), Err(Error::NoDecay { .. })));
    }

    #[test]
    fn ising_examples() {
        let c = ising_oracle(10, 1.0, 0.5, 3, 6).unwrap();
        assert!((c - 0.5f64.tanh().powi(3)).abs() < 1e-10);
        assert!((c - 0.098_686_166_568_216_1).abs() < 1e-10);
        for beta in [0.3, 1.2] {
            let nn = ising_oracle(6, 0.8, beta, 2, 3).unwrap();
            assert!((nn - (0.8 * beta).tanh()).abs() < 1e-12);
        }
        assert!(ising_oracle(6, 1.0, 1e-8, 0, 5).unwrap().abs() < 1e-6);
        assert!(ising_oracle(6, 1.0, 1.0, 4, 4).is_err());
        assert!(ising_oracle(6, 1.0, 1.0, 2, 6).is_err());
    }

    #[test]
    fn ising_covariance_is_symmetric() {
        let h = ising_hamiltonian(5, 1.0).unwrap();
        let state = gibbs_state(&h, 0.9).unwrap();
        let z1 = site_operator(&sigma_z(), &Site::from(1), &h.region, 2).unwrap();
        let z3 = site_operator(&sigma_z(), &Site::from(3), &h.region, 2).unwrap();
        assert_eq!(
            covariance(&state, &z1, &z3).unwrap(),
            covariance(&state, &z3, &z1).unwrap()
        );
    }

    #[test]
    fn mbdos_examples() {
        let spec = free_chain(6, 1).unwrap();
        let h = spec.hamiltonian(spec.lattice()).unwrap();
        let counts: Vec<usize> = mbdos_histogram(&h, 1.0)
            .unwrap()
            .into_iter()
            .map(|b| b.1)
            .collect();
        assert_eq!(counts, vec![1, 6, 15, 20, 15, 6, 1]);
        let zero = GlobalOperator::zeros(Region::chain(3), 2).unwrap();
        assert_eq!(mbdos_histogram(&zero, 0.5).unwrap(), vec![(0.0, 8)]);
        assert!(mbdos_histogram(&zero, 0.0).is_err());
    }

    #[test]
    fn certificate_examples() {
        let free = bound_certificate(&free_chain(4, 1).unwrap());
        assert_eq!(free.p, 0.0);
        assert_eq!(free.decay_base, 0.0);
        assert!(free.active);
        assert_eq!(free.prefactor_exponent, None);

        let c = certificate_from(1e-4, 8.0, 3.0);
        assert!((c.p - 1.6e-3).abs() < 1e-18);
        let c2 = certificate_from(2e-4, 8.0, 3.0);
        assert_eq!(c2.p, 2.0 * c.p);
        let json = serde_json::to_string(&free).unwrap();
        assert!(json.contains("\"prefactor_exponent\":null"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn covariance_within_norm_bound(seed in any::<u64>(), beta in 0.1f64..20.0) {
            let spec = xxz_chain(5, 0.02, 0.02, 0.5, seed).unwrap();
            let h = spec.hamiltonian(spec.lattice()).unwrap();
            let state = gibbs_state(&h, beta).unwrap();
            let x = site_operator(&sigma_x(), &Site::from(0), &h.region, 2).unwrap();
            let z = site_operator(&sigma_z(), &Site::from(3), &h.region, 2).unwrap();
            prop_assert!(covariance(&state, &x, &z).unwrap().norm() <= 2.0 + 1e-12);
        }
    }
}
