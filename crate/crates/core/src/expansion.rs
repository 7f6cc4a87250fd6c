//! The inclusion-exclusion expansion of `exp(−βH)`: Yarotsky terms,
//! configuration weights, their factorization over superclusters, the swap
//! involution and the partition-function ratio bound.

use std::collections::{BTreeSet, HashMap};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{embed, herm_exp, op_norm, relative_frobenius, ComplexMatrix, GlobalOperator};
use crate::error::{Error, Result};
use crate::gibbs::partition_function;
use crate::lattice::{is_r_connected, regions_r_connected, supercluster_decompose, Region, Site};
use crate::model::HamiltonianSpec;

/// Largest configuration for which the `2^|I|` subset sum is formed.
pub const MAX_TERM_SITES: usize = 20;
/// Largest interior for the full resummation check.
pub const MAX_RESUMMATION_INTERIOR: usize = 12;
/// Largest interior for the paired `(I, J)` sums.
pub const MAX_PAIR_INTERIOR: usize = 6;
pub const MAX_SUBSET_SUM: usize = 20;
/// Largest `4^|I|·dim³` for which terms are formed from the lifted generator.
pub const LIFT_BUDGET: f64 = 1.4e8;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn rel_c(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn cap(what: &'static str, limit: usize, got: usize) -> Result<()> {
    if got > limit {
        Err(Error::SizeCap { what, limit, got })
    } else {
        Ok(())
    }
}

fn check_configuration(spec: &HamiltonianSpec, i: &Region) -> Result<()> {
    if i.iter().all(|x| spec.interaction(x).is_some()) {
        Ok(())
    } else {
        Err(Error::NotSubset("the interior of the lattice"))
    }
}

/// `T^{base}_I` acting on `base ∪ closure(I)`.
#[derive(Clone, Debug)]
pub struct YarotskyTerm {
    pub configuration: Region,
    pub base: Region,
    pub operator: GlobalOperator,
}

/// How `T^{base}_I` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermMethod {
    /// Lifted when `4^|I|·dim³` is within [`LIFT_BUDGET`], alternating otherwise.
    Auto,
    /// The `2^|I|`-term alternating sum of exponentials.
    Alternating,
    /// The corner block of the lifted generator's exponential.
    Lifted,
}

fn lift_fits(k: usize, dim: f64) -> bool {
    k > 0 && 4f64.powi(k as i32) * dim * dim * dim <= LIFT_BUDGET
}

/// Whether [`TermMethod::Auto`] evaluates `T^{base}_I` without cancellation,
/// either because `I` is empty or because the lifted form fits the budget.
pub fn term_is_lifted(spec: &HamiltonianSpec, i: &Region, base: &Region) -> Result<bool> {
    let region = base.union(&spec.closure(i)?);
    let dim = (spec.q() as f64).powi(region.len() as i32);
    Ok(i.is_empty() || lift_fits(i.len(), dim))
}

/// `T^{base}_I = Σ_{M ⊆ I} (−1)^{|I|−|M|} exp(−β(H⁰_base + Σ_{x∈M} v_x))`.
pub fn yarotsky_term(
    spec: &HamiltonianSpec,
    i: &Region,
    base: &Region,
    beta: f64,
) -> Result<YarotskyTerm> {
    yarotsky_term_with(spec, i, base, beta, TermMethod::Auto)
}

pub fn yarotsky_term_with(
    spec: &HamiltonianSpec,
    i: &Region,
    base: &Region,
    beta: f64,
    method: TermMethod,
) -> Result<YarotskyTerm> {
    cap("configuration size", MAX_TERM_SITES, i.len())?;
    check_configuration(spec, i)?;
    let region = base.union(&spec.closure(i)?);
    let h0 = spec.free_hamiltonian(base, &region)?;
    let k = i.len();
    let d = h0.dim() as f64;
    let lift = match method {
        TermMethod::Auto => lift_fits(k, d),
        TermMethod::Alternating => false,
        TermMethod::Lifted => k > 0,
    };
    let acc = if lift {
        let v: Vec<ComplexMatrix> = i
            .iter()
            .map(|x| Ok(spec.interaction_sum(std::iter::once(x), &region)?.matrix))
            .collect::<Result<_>>()?;
        lifted_term(&h0.matrix, &v, beta)?
    } else {
        alternating_term(spec, i, &h0, &region, beta)?
    };
    Ok(YarotskyTerm {
        configuration: i.clone(),
        base: base.clone(),
        operator: GlobalOperator::new(region, spec.q(), acc)?,
    })
}

fn alternating_term(
    spec: &HamiltonianSpec,
    i: &Region,
    h0: &GlobalOperator,
    region: &Region,
    beta: f64,
) -> Result<ComplexMatrix> {
    let k = i.len();
    let terms: Vec<ComplexMatrix> = (0u64..1 << k)
        .into_par_iter()
        .map(|mask| {
            let m = i.subset_by_mask(mask);
            let h = h0.add(&spec.interaction_sum(m.iter(), region)?)?;
            let e = herm_exp(&h.matrix, -beta)?;
            Ok(if (k - mask.count_ones() as usize) % 2 == 1 {
                e.scale_real(-1.0)
            } else {
                e
            })
        })
        .collect::<Result<_>>()?;
    let mut acc = ComplexMatrix::zeros(h0.dim());
    for t in &terms {
        acc.add_assign(t)?;
    }
    Ok(acc)
}

/// Block-triangular matrix over `{0,1}^k ⊗ W`, stored as blocks `(s, t)` with
/// `s ⊆ t` as bitmasks.
struct Lifted {
    n: usize,
    blocks: Vec<Option<ComplexMatrix>>,
}

impl Lifted {
    fn block(&self, s: usize, t: usize) -> Option<&ComplexMatrix> {
        self.blocks[s * self.n + t].as_ref()
    }

    fn identity(n: usize, d: usize) -> Self {
        let mut blocks = vec![None; n * n];
        for z in 0..n {
            blocks[z * n + z] = Some(ComplexMatrix::identity(d));
        }
        Lifted { n, blocks }
    }

    fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .map(|b| b.frobenius_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&self, c: f64) -> Self {
        Lifted {
            n: self.n,
            blocks: self
                .blocks
                .iter()
                .map(|b| b.as_ref().map(|m| m.scale_real(c)))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            match (a.as_mut(), b) {
                (Some(x), Some(y)) => x.add_assign(y)?,
                (None, Some(y)) => *a = Some(y.clone()),
                _ => {}
            }
        }
        Ok(())
    }

    fn matmul(&self, other: &Self) -> Result<Self> {
        let n = self.n;
        let full = n - 1;
        let mut blocks = vec![None; n * n];
        for s in 0..n {
            let free = full & !s;
            let mut sub = free;
            loop {
                let t = s | sub;
                let mut acc: Option<ComplexMatrix> = None;
                let mut mid = sub;
                loop {
                    let u = s | mid;
                    if let (Some(a), Some(b)) = (self.block(s, u), other.block(u, t)) {
                        let p = a.matmul(b)?;
                        match acc.as_mut() {
                            Some(x) => x.add_assign(&p)?,
                            None => acc = Some(p),
                        }
                    }
                    if mid == 0 {
                        break;
                    }
                    mid = (mid - 1) & sub;
                }
                blocks[s * n + t] = acc;
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & free;
            }
        }
        Ok(Lifted { n, blocks })
    }
}

/// `T_I` read off the corner of `exp` of the lifted generator: the diagonal
/// block at `z` is `−β(H⁰ + Σ_{i: z_i=0} v_i)` and each step `z → z ∪ {i}`
/// carries `βv_i`. Every entry of the corner contains all `k` couplings, so
/// it is free of the cancellation in the alternating sum.
fn lifted_term(h0: &ComplexMatrix, v: &[ComplexMatrix], beta: f64) -> Result<ComplexMatrix> {
    let k = v.len();
    let n = 1usize << k;
    let d = h0.dim();
    let mut blocks = vec![None; n * n];
    for z in 0..n {
        let mut h = h0.clone();
        for (b, vi) in v.iter().enumerate() {
            if z & (1 << b) == 0 {
                h.add_assign(vi)?;
                blocks[z * n + (z | 1 << b)] = Some(vi.scale_real(beta));
            }
        }
        blocks[z * n + z] = Some(h.scale_real(-beta));
    }
    let x = Lifted { n, blocks };
    let norm = x.norm();
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let y = x.scale(0.5f64.powi(squarings));
    let mut e = Lifted::identity(n, d);
    let mut term = Lifted::identity(n, d);
    for j in 1..=60 {
        term = term.matmul(&y)?.scale(1.0 / j as f64);
        e.add_assign(&term)?;
        if term.norm() <= 1e-18 * e.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        e = e.matmul(&e)?;
    }
    let corner = e
        .block(0, n - 1)
        .cloned()
        .unwrap_or_else(|| ComplexMatrix::zeros(d));
    Ok(if k % 2 == 1 {
        corner.scale_real(-1.0)
    } else {
        corner
    })
}

/// `Z⁰_S = Π_{x∈S} tr exp(−βh_x)`.
pub fn free_partition(spec: &HamiltonianSpec, s: &Region, beta: f64) -> Result<f64> {
    s.iter()
        .map(|x| {
            let h = spec.onsite(x).ok_or(Error::NotSubset("the lattice"))?;
            Ok(herm_exp(&h.matrix, -beta)?.trace().re)
        })
        .product()
}

/// `tr(T^{closure I}_I) / Z⁰_{closure I}`.
pub fn weight(spec: &HamiltonianSpec, i: &Region, beta: f64) -> Result<f64> {
    let cl = spec.closure(i)?;
    let t = yarotsky_term(spec, i, &cl, beta)?;
    Ok(t.operator.trace().re / free_partition(spec, &cl, beta)?)
}

/// `tr(O T^{closure I ∪ Ω}_I) / Z⁰_{closure I ∪ Ω}` for `O` acting on `Ω`.
pub fn observable_weight(
    spec: &HamiltonianSpec,
    i: &Region,
    o: &GlobalOperator,
    beta: f64,
) -> Result<Complex64> {
    let w = spec.closure(i)?.union(&o.region);
    let t = yarotsky_term(spec, i, &w, beta)?;
    let oe = o.embed_into(&w)?;
    Ok(oe.matrix.trace_product(&t.operator.matrix)? / free_partition(spec, &w, beta)?)
}

/// `‖T^{closure I}_I‖`.
pub fn term_norm(spec: &HamiltonianSpec, i: &Region, beta: f64) -> Result<f64> {
    let cl = spec.closure(i)?;
    Ok(op_norm(&yarotsky_term(spec, i, &cl, beta)?.operator.matrix))
}

/// Relative Frobenius residual of `Σ_I T_I` against `exp(−βH_Λ)`, with
/// `T_I = exp(−βH⁰_{Λ∖closure I}) T^{closure I}_I`.
pub fn verify_resummation(spec: &HamiltonianSpec, beta: f64) -> Result<f64> {
    let interior = spec.interior();
    cap("interior size", MAX_RESUMMATION_INTERIOR, interior.len())?;
    let lattice = spec.lattice();
    let exact = herm_exp(&spec.hamiltonian(lattice)?.matrix, -beta)?;
    let terms: Vec<ComplexMatrix> = (0u64..1 << interior.len())
        .into_par_iter()
        .map(|mask| {
            let i = interior.subset_by_mask(mask);
            let cl = spec.closure(&i)?;
            let rest = lattice.difference(&cl);
            let outside = herm_exp(&spec.free_hamiltonian(&rest, &rest)?.matrix, -beta)?;
            let outside = embed(&outside, &rest, lattice, spec.q())?;
            let inside = yarotsky_term(spec, &i, &cl, beta)?
                .operator
                .embed_into(lattice)?;
            Ok(outside.matmul(&inside)?.matrix)
        })
        .collect::<Result<_>>()?;
    let mut sum = ComplexMatrix::zeros(exact.dim());
    for t in &terms {
        sum.add_assign(t)?;
    }
    relative_frobenius(&sum, &exact)
}

/// Both sides of `Σ_I tr(O T_I)/Z⁰_Λ = tr(O e^{−βH_Λ})/Z⁰_Λ`.
pub fn verify_weight_sum(
    spec: &HamiltonianSpec,
    o: &GlobalOperator,
    beta: f64,
) -> Result<(Complex64, Complex64)> {
    let interior = spec.interior();
    cap("interior size", MAX_RESUMMATION_INTERIOR, interior.len())?;
    let lattice = spec.lattice();
    let mut lhs = Complex64::new(0.0, 0.0);
    for mask in 0u64..1 << interior.len() {
        lhs += observable_weight(spec, &interior.subset_by_mask(mask), o, beta)?;
    }
    let exact = herm_exp(&spec.hamiltonian(lattice)?.matrix, -beta)?;
    let rhs =
        o.embed_into(lattice)?.matrix.trace_product(&exact)? / free_partition(spec, lattice, beta)?;
    Ok((lhs, rhs))
}

/// A configuration with an observable, as in `tr(O T^{closure I ∪ Ω}_I)`.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub configuration: Region,
    pub observable: GlobalOperator,
}

/// `a ⊗ b` on the union of their supports.
pub fn product_operator(a: &GlobalOperator, b: &GlobalOperator) -> Result<GlobalOperator> {
    let region = a.region.union(&b.region);
    a.embed_into(&region)?.matmul(&b.embed_into(&region)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct FactorizationCheck {
    pub joint: Complex64,
    pub product: Complex64,
    pub residual: f64,
}

/// Compares the joint observable weight of two far-apart clusters with the
/// product of their separate weights.
pub fn verify_factorization(
    spec: &HamiltonianSpec,
    first: &Cluster,
    second: &Cluster,
    beta: f64,
) -> Result<FactorizationCheck> {
    let s1 = first.configuration.union(&first.observable.region);
    let s2 = second.configuration.union(&second.observable.region);
    if regions_r_connected(&s1, &s2, spec.range()) {
        return Err(Error::SupportsConnected);
    }
    let joint_config = first.configuration.union(&second.configuration);
    let joint_op = product_operator(&first.observable, &second.observable)?;
    let joint = observable_weight(spec, &joint_config, &joint_op, beta)?;
    let product = observable_weight(spec, &first.configuration, &first.observable, beta)?
        * observable_weight(spec, &second.configuration, &second.observable, beta)?;
    Ok(FactorizationCheck {
        joint,
        product,
        residual: rel_c(joint, product),
    })
}

/// Which of `I, J, X, Y` a site of a supercluster came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub i: bool,
    pub j: bool,
    pub x: bool,
    pub y: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperclusterDecomposition {
    pub components: Vec<Region>,
    pub provenance: Vec<(Site, Provenance)>,
}

impl SuperclusterDecomposition {
    pub fn new(i: &Region, j: &Region, x: &Region, y: &Region, range: u32) -> Self {
        let parts = [i.clone(), j.clone(), x.clone(), y.clone()];
        let components = supercluster_decompose(&parts, range);
        let union = parts.iter().fold(Region::empty(), |u, p| u.union(p));
        let provenance = union
            .iter()
            .map(|s| {
                (
                    s.clone(),
                    Provenance {
                        i: i.contains(s),
                        j: j.contains(s),
                        x: x.contains(s),
                        y: y.contains(s),
                    },
                )
            })
            .collect();
        SuperclusterDecomposition {
            components,
            provenance,
        }
    }

    /// Index of the component holding all of `set`, if one does.
    pub fn component_of(&self, set: &Region) -> Option<usize> {
        let first = set.iter().next()?;
        let k = self.components.iter().position(|c| c.contains(first))?;
        set.is_subset(&self.components[k]).then_some(k)
    }
}

/// Whether `X` and `Y` land in different superclusters of `I ∪ J ∪ X ∪ Y`.
pub fn in_event(i: &Region, j: &Region, x: &Region, y: &Region, range: u32) -> bool {
    let d = SuperclusterDecomposition::new(i, j, x, y, range);
    match d.component_of(x) {
        Some(k) => d.components[k].is_disjoint(y),
        None => false,
    }
}

/// Exchanges the parts of `I` and `J` inside the supercluster containing `X`.
pub fn swap_configurations(
    i: &Region,
    j: &Region,
    x: &Region,
    y: &Region,
    range: u32,
) -> Result<(Region, Region)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let d = SuperclusterDecomposition::new(i, j, x, y, range);
    let k = d.component_of(x).ok_or(Error::NotConnected)?;
    let s1 = &d.components[k];
    if !s1.is_disjoint(y) {
        return Err(Error::EventNotSatisfied);
    }
    let i2 = j.intersection(s1).union(&i.difference(s1));
    let j2 = i.intersection(s1).union(&j.difference(s1));
    Ok((i2, j2))
}

/// Memoized weights for a fixed spec and temperature. Observables are keyed
/// by a caller-chosen tag.
pub struct WeightCache<'a> {
    spec: &'a HamiltonianSpec,
    beta: f64,
    observables: Vec<Option<GlobalOperator>>,
    values: HashMap<(usize, Region), (Complex64, bool)>,
}

impl<'a> WeightCache<'a> {
    pub fn new(spec: &'a HamiltonianSpec, beta: f64) -> Self {
        WeightCache {
            spec,
            beta,
            observables: vec![None],
            values: HashMap::new(),
        }
    }

    /// Registers an observable and returns its tag. Tag 0 is the plain weight.
    pub fn register(&mut self, o: GlobalOperator) -> usize {
        self.observables.push(Some(o));
        self.observables.len() - 1
    }

    fn compute(&self, tag: usize, i: &Region) -> Result<(Complex64, bool)> {
        Ok(match &self.observables[tag] {
            None => (
                Complex64::new(weight(self.spec, i, self.beta)?, 0.0),
                term_is_lifted(self.spec, i, &Region::empty())?,
            ),
            Some(o) => (
                observable_weight(self.spec, i, o, self.beta)?,
                term_is_lifted(self.spec, i, &o.region)?,
            ),
        })
    }

    fn entry(&mut self, tag: usize, i: &Region) -> Result<(Complex64, bool)> {
        if let Some(v) = self.values.get(&(tag, i.clone())) {
            return Ok(*v);
        }
        let v = self.compute(tag, i)?;
        self.values.insert((tag, i.clone()), v);
        Ok(v)
    }

    pub fn get(&mut self, tag: usize, i: &Region) -> Result<Complex64> {
        Ok(self.entry(tag, i)?.0)
    }

    /// Whether the cached value came from a cancellation-free evaluation.
    pub fn is_lifted(&mut self, tag: usize, i: &Region) -> Result<bool> {
        Ok(self.entry(tag, i)?.1)
    }

    /// Fills the cache for every subset of `sites` under each tag, in parallel.
    pub fn prefill(&mut self, tags: &[usize], sites: &Region) -> Result<()> {
        let jobs: Vec<(usize, Region)> = tags
            .iter()
            .flat_map(|&t| (0u64..1 << sites.len()).map(move |m| (t, sites.subset_by_mask(m))))
            .filter(|key| !self.values.contains_key(key))
            .collect();
        let this = &*self;
        let computed: Vec<((usize, Region), (Complex64, bool))> = jobs
            .into_par_iter()
            .map(|(t, i)| Ok(((t, i.clone()), this.compute(t, &i)?)))
            .collect::<Result<_>>()?;
        self.values.extend(computed);
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SwapCheck {
    /// `Σ_{E(X,Y)} w(I)·w(J; AB)`.
    pub lhs: Complex64,
    /// `Σ_{E(X,Y)} w(I; A)·w(J; B)`.
    pub rhs: Complex64,
    pub residual: f64,
    pub pairs_in_event: usize,
    /// Largest per-pair relative residual over pairs whose four weights are
    /// all evaluated without cancellation.
    pub max_pair_residual: f64,
    pub pairs_compared: usize,
    pub involution_ok: bool,
}

fn check_observable_support(spec: &HamiltonianSpec, o: &GlobalOperator) -> Result<()> {
    if o.region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if !o.region.is_subset(spec.lattice()) {
        return Err(Error::NotSubset("the lattice"));
    }
    if !is_r_connected(&o.region, spec.range()) {
        return Err(Error::NotConnected);
    }
    Ok(())
}

/// Both event-restricted double sums plus the per-pair identity under the
/// swap bijection.
pub fn verify_swap_identity(
    spec: &HamiltonianSpec,
    a: &GlobalOperator,
    b: &GlobalOperator,
    beta: f64,
) -> Result<SwapCheck> {
    check_observable_support(spec, a)?;
    check_observable_support(spec, b)?;
    let interior = spec.interior();
    cap(
        "interior size for pair sums",
        MAX_PAIR_INTERIOR,
        interior.len(),
    )?;
    let (x, y) = (a.region.clone(), b.region.clone());
    let range = spec.range();
    let mut cache = WeightCache::new(spec, beta);
    let t_a = cache.register(a.clone());
    let t_b = cache.register(b.clone());
    let t_ab = cache.register(product_operator(a, b)?);
    cache.prefill(&[0, t_a, t_b, t_ab], &interior)?;

    let n = 1u64 << interior.len();
    let mut lhs = Complex64::new(0.0, 0.0);
    let mut rhs = Complex64::new(0.0, 0.0);
    let mut pairs = 0;
    let mut max_pair: f64 = 0.0;
    let mut compared = 0;
    let mut involution_ok = true;
    for mi in 0..n {
        let i = interior.subset_by_mask(mi);
        for mj in 0..n {
            let j = interior.subset_by_mask(mj);
            if !in_event(&i, &j, &x, &y, range) {
                continue;
            }
            pairs += 1;
            let left = cache.get(0, &i)? * cache.get(t_ab, &j)?;
            lhs += left;
            rhs += cache.get(t_a, &i)? * cache.get(t_b, &j)?;
            let (i2, j2) = swap_configurations(&i, &j, &x, &y, range)?;
            let back = swap_configurations(&i2, &j2, &x, &y, range)?;
            involution_ok &= back == (i.clone(), j.clone());
            let right = cache.get(t_a, &i2)? * cache.get(t_b, &j2)?;
            if cache.is_lifted(0, &i)?
                && cache.is_lifted(t_ab, &j)?
                && cache.is_lifted(t_a, &i2)?
                && cache.is_lifted(t_b, &j2)?
            {
                compared += 1;
                let scale = left.norm().max(right.norm()).max(1e-300);
                max_pair = max_pair.max((left - right).norm() / scale);
            }
        }
    }
    Ok(SwapCheck {
        lhs,
        rhs,
        residual: rel_c(lhs, rhs),
        pairs_in_event: pairs,
        max_pair_residual: max_pair,
        pairs_compared: compared,
        involution_ok,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SuperclusterCheck {
    /// The pair-class sum for `w(I)·w(J; AB)`.
    pub lhs: Complex64,
    pub rhs: Complex64,
    /// The pair-class sum for `w(I; A)·w(J; B)`.
    pub lhs_split: Complex64,
    pub rhs_split: Complex64,
    /// `Z_{Λ∖closure S₀} / Z⁰_{Λ∖closure S₀}`.
    pub ratio_factor: f64,
    /// `Σ_{I′} w(I′)` over the interior of `Λ ∖ closure S₀`.
    pub ratio_factor_from_weights: f64,
    pub pairs: usize,
    pub residual: f64,
    pub residual_split: f64,
}

/// Sums over the class of pairs `(I, J)` whose supercluster decomposition
/// contains `S₀ = I₀ ∪ J₀ ∪ X ∪ Y` with `I ∩ S₀ = I₀`, `J ∩ S₀ = J₀`, and
/// compares with the factorized form carrying `(Z/Z⁰)²` of the complement.
pub fn verify_supercluster_resummation(
    spec: &HamiltonianSpec,
    i0: &Region,
    j0: &Region,
    a: &GlobalOperator,
    b: &GlobalOperator,
    beta: f64,
) -> Result<SuperclusterCheck> {
    check_configuration(spec, i0)?;
    check_configuration(spec, j0)?;
    let (x, y) = (a.region.clone(), b.region.clone());
    let range = spec.range();
    let s0 = i0.union(j0).union(&x).union(&y);
    if !is_r_connected(&s0, range) {
        return Err(Error::NotConnected);
    }
    let lattice = spec.lattice();
    let complement = lattice.difference(&spec.closure(&s0)?);
    let outer = spec.interior().difference(&s0);
    let free_outer: Vec<Site> = outer
        .iter()
        .filter(|c| !regions_r_connected(&Region::from_sites([(*c).clone()]), &s0, range))
        .cloned()
        .collect();
    cap("outer interior size", MAX_PAIR_INTERIOR, free_outer.len())?;
    let candidates = outer;
    cap("candidate sites", 2 * MAX_PAIR_INTERIOR, candidates.len())?;

    let mut cache = WeightCache::new(spec, beta);
    let t_a = cache.register(a.clone());
    let t_b = cache.register(b.clone());
    let t_ab = cache.register(product_operator(a, b)?);

    let n = 1u64 << candidates.len();
    let mut lhs = Complex64::new(0.0, 0.0);
    let mut lhs_split = Complex64::new(0.0, 0.0);
    let mut pairs = 0;
    for mi in 0..n {
        let i = i0.union(&candidates.subset_by_mask(mi));
        for mj in 0..n {
            let j = j0.union(&candidates.subset_by_mask(mj));
            let d = SuperclusterDecomposition::new(&i, &j, &x, &y, range);
            if !d.components.contains(&s0) {
                continue;
            }
            pairs += 1;
            lhs += cache.get(0, &i)? * cache.get(t_ab, &j)?;
            lhs_split += cache.get(t_a, &i)? * cache.get(t_b, &j)?;
        }
    }

    let z_rest = if complement.is_empty() {
        1.0
    } else {
        partition_function(&spec.hamiltonian(&complement)?, beta)?.z
            / free_partition(spec, &complement, beta)?
    };
    let inner = spec
        .interior()
        .intersection(&complement)
        .iter()
        .filter(|c| {
            spec.interaction(c)
                .is_some_and(|v| v.support.is_subset(&complement))
        })
        .cloned()
        .collect::<Region>();
    let mut from_weights = 0.0;
    for m in 0u64..1 << inner.len() {
        from_weights += cache.get(0, &inner.subset_by_mask(m))?.re;
    }
    let sq = z_rest * z_rest;
    let rhs = cache.get(0, i0)? * cache.get(t_ab, j0)? * sq;
    let rhs_split = cache.get(t_a, i0)? * cache.get(t_b, j0)? * sq;
    Ok(SuperclusterCheck {
        lhs,
        rhs,
        lhs_split,
        rhs_split,
        ratio_factor: z_rest,
        ratio_factor_from_weights: from_weights,
        pairs,
        residual: rel_c(lhs, rhs),
        residual_split: rel_c(lhs_split, rhs_split),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionRatio {
    /// `Z_{Λ∖closure S} Z⁰_{closure S} / Z_Λ`.
    pub ratio: f64,
    /// `(q^{(2R+1)^D})^{|S|}`.
    pub bound: f64,
    pub bound_ok: bool,
    pub z_closure: f64,
    pub closure_link_ok: bool,
    /// `Z_{Λ∖closure S}·Z_{closure S} / Z_Λ`, at most one.
    pub split_over_full: f64,
    pub monotone_link_ok: bool,
}

/// Partition functions of the full lattice, memoized per region.
pub struct PartitionCache<'a> {
    spec: &'a HamiltonianSpec,
    beta: f64,
    log_z: HashMap<Region, f64>,
}

impl<'a> PartitionCache<'a> {
    pub fn new(spec: &'a HamiltonianSpec, beta: f64) -> Self {
        PartitionCache {
            spec,
            beta,
            log_z: HashMap::new(),
        }
    }

    /// `ln Z_S` for the Hamiltonian restricted to `S`; zero for `S = ∅`.
    pub fn log_z(&mut self, s: &Region) -> Result<f64> {
        if s.is_empty() {
            return Ok(0.0);
        }
        if let Some(v) = self.log_z.get(s) {
            return Ok(*v);
        }
        let v = partition_function(&self.spec.hamiltonian(s)?, self.beta)?.log_z;
        self.log_z.insert(s.clone(), v);
        Ok(v)
    }
}

pub fn partition_ratio(spec: &HamiltonianSpec, s: &Region, beta: f64) -> Result<PartitionRatio> {
    partition_ratio_cached(&mut PartitionCache::new(spec, beta), s)
}

pub fn partition_ratio_cached(
    cache: &mut PartitionCache<'_>,
    s: &Region,
) -> Result<PartitionRatio> {
    let spec = cache.spec;
    let beta = cache.beta;
    if !is_r_connected(s, spec.range()) {
        return Err(Error::NotConnected);
    }
    spec.require_nonpositive()?;
    let lattice = spec.lattice().clone();
    let cl = spec.closure(s)?;
    let rest = lattice.difference(&cl);
    let log_full = cache.log_z(&lattice)?;
    let log_rest = cache.log_z(&rest)?;
    let log_cl = cache.log_z(&cl)?;
    let log_free_cl = free_partition(spec, &cl, beta)?.ln();
    let ratio = (log_rest + log_free_cl - log_full).exp();
    let c = (spec.q() as f64).powi((2 * spec.range() as i32 + 1).pow(spec.dim() as u32));
    let bound = c.powi(s.len() as i32);
    let z_closure = log_cl.exp();
    let split_over_full = (log_rest + log_cl - log_full).exp();
    Ok(PartitionRatio {
        ratio,
        bound,
        bound_ok: ratio <= bound * (1.0 + 1e-12),
        z_closure,
        closure_link_ok: z_closure >= 1.0 - 1e-9,
        split_over_full,
        monotone_link_ok: split_over_full <= 1.0 + 1e-12,
    })
}

/// Every R-connected subset of the lattice with at most `max_size` sites.
pub fn connected_subsets(spec: &HamiltonianSpec, max_size: usize) -> Result<Vec<Region>> {
    let mut all = BTreeSet::new();
    for v in spec.lattice() {
        for k in 1..=max_size {
            for s in spec.geometry().enumerate_connected_sets(v, k)? {
                all.insert(s.sites().to_vec());
            }
        }
    }
    Ok(all.into_iter().map(Region::from_sites).collect())
}

/// `Σ_{E ⊆ F} p^{|E|}` by explicit enumeration with compensated summation,
/// against `(1+p)^{|F|}`.
pub fn subset_sum_identity_check(f_size: usize, p: f64) -> Result<(f64, f64)> {
    cap("subset-sum set size", MAX_SUBSET_SUM, f_size)?;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for m in 0u64..1 << f_size {
        let x = p.powi(m.count_ones() as i32);
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    Ok((sum + comp, (1.0 + p).powi(f_size as i32)))
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionCovariance {
    pub from_expansion: Complex64,
    /// Pairs outside `E(X, Y)`.
    pub pairs: usize,
    pub direct: Complex64,
    pub residual: f64,
}

/// `Cov(A, B)` rebuilt from the paired double sum
/// `(Z⁰/Z)² Σ_{I,J} [w(I)w(J; AB) − w(I; A)w(J; B)]`, against the Gibbs state.
/// Pairs in the event `E(X, Y)` cancel under the swap, so only pairs with
/// `X` and `Y` in a common supercluster are summed.
pub fn covariance_from_expansion(
    spec: &HamiltonianSpec,
    a: &GlobalOperator,
    b: &GlobalOperator,
    beta: f64,
) -> Result<ExpansionCovariance> {
    check_observable_support(spec, a)?;
    check_observable_support(spec, b)?;
    let interior = spec.interior();
    cap(
        "interior size for pair sums",
        MAX_PAIR_INTERIOR,
        interior.len(),
    )?;
    let mut cache = WeightCache::new(spec, beta);
    let t_a = cache.register(a.clone());
    let t_b = cache.register(b.clone());
    let t_ab = cache.register(product_operator(a, b)?);
    cache.prefill(&[0, t_a, t_b, t_ab], &interior)?;
    let n = 1u64 << interior.len();
    let mut z_ratio = 0.0;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut pairs = 0;
    for mi in 0..n {
        let i = interior.subset_by_mask(mi);
        z_ratio += cache.get(0, &i)?.re;
        for mj in 0..n {
            let j = interior.subset_by_mask(mj);
            if in_event(&i, &j, &a.region, &b.region, spec.range()) {
                continue;
            }
            pairs += 1;
            sum += cache.get(0, &i)? * cache.get(t_ab, &j)?
                - cache.get(t_a, &i)? * cache.get(t_b, &j)?;
        }
    }
    let from_expansion = sum / (z_ratio * z_ratio);

    let lattice = spec.lattice();
    let state = crate::gibbs::gibbs_state(&spec.hamiltonian(lattice)?, beta)?;
    let direct =
        crate::gibbs::covariance(&state, &a.embed_into(lattice)?, &b.embed_into(lattice)?)?;
    Ok(ExpansionCovariance {
        from_expansion,
        pairs,
        direct,
        residual: (from_expansion - direct).norm() / direct.norm().max(1e-300),
    })
}

/// Relative difference with the denominator floored at `1e-300`.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    rel(a, b)
}
