//! Gapped on-site terms plus relatively form-bounded finite-range
//! interactions, and the XXZ chain with random field.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{embed, embed_add, herm_eig, op_norm, ComplexMatrix, GlobalOperator, PauliOp};
use crate::error::{Error, Result};
use crate::lattice::{l1_distance, LatticeGeometry, Region, Site};

/// Largest Hilbert-space dimension of a single interaction support.
pub const MAX_INTERACTION_DIM: usize = 1 << 10;

const KERNEL_TOLERANCE: f64 = 1e-9;
const KERNEL_BLOCK_TOLERANCE: f64 = 1e-12;
const GAP_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct OnSiteTerm {
    pub site: Site,
    pub matrix: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionTerm {
    pub center: Site,
    pub support: Region,
    pub matrix: ComplexMatrix,
}

/// Lowest eigenvalue zero and simple, next eigenvalue at least one.
pub fn gap_check(h: &ComplexMatrix) -> bool {
    let Ok(eig) = herm_eig(h) else {
        return false;
    };
    let ev = &eig.eigenvalues;
    ev[0].abs() <= GAP_TOLERANCE && ev.get(1).is_none_or(|&e| e >= 1.0 - GAP_TOLERANCE)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpecMetadata {
    /// `max_x ‖h_x‖`.
    pub onsite_sup_norm: f64,
    /// `max_x ‖v_x‖`.
    pub interaction_sup_norm: f64,
    /// Per-center minimal form-bound constants.
    pub center_constants: Vec<(Site, f64)>,
}

/// A certified Hamiltonian on a finite lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    geometry: LatticeGeometry,
    q: usize,
    onsite: Vec<OnSiteTerm>,
    interactions: BTreeMap<Site, InteractionTerm>,
    a: f64,
    metadata: SpecMetadata,
}

/// The terms before certification.
#[derive(Clone, Debug)]
pub struct SpecBuilder {
    pub geometry: LatticeGeometry,
    pub q: usize,
    pub onsite: Vec<OnSiteTerm>,
    pub interactions: BTreeMap<Site, InteractionTerm>,
}

impl SpecBuilder {
    /// Every interior site gets a zero interaction until one is added.
    pub fn new(geometry: LatticeGeometry, q: usize, onsite: Vec<ComplexMatrix>) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(
                "local dimension q must be at least 2".into(),
            ));
        }
        let lattice = geometry.lattice();
        if onsite.len() != lattice.len() {
            return Err(Error::DimensionMismatch {
                expected: lattice.len(),
                got: onsite.len(),
            });
        }
        let onsite = lattice
            .iter()
            .zip(onsite)
            .map(|(s, matrix)| OnSiteTerm {
                site: s.clone(),
                matrix,
            })
            .collect();
        let mut interactions = BTreeMap::new();
        for c in geometry.interior(lattice)?.iter() {
            let support = geometry.ball(c, geometry.range(), false);
            let dim = interaction_dim(q, &support)?;
            interactions.insert(
                c.clone(),
                InteractionTerm {
                    center: c.clone(),
                    support,
                    matrix: ComplexMatrix::zeros(dim),
                },
            );
        }
        Ok(SpecBuilder {
            geometry,
            q,
            onsite,
            interactions,
        })
    }

    /// Adds `coeff · local` (acting on `sites`) to the interaction at `center`.
    pub fn add_interaction(
        &mut self,
        center: &Site,
        local: &ComplexMatrix,
        sites: &Region,
        coeff: Complex64,
    ) -> Result<()> {
        let term = self
            .interactions
            .get_mut(center)
            .ok_or(Error::NotSubset("the interior of the lattice"))?;
        let mut acc = GlobalOperator::new(term.support.clone(), self.q, term.matrix.clone())?;
        embed_add(&mut acc, local, sites, coeff)?;
        term.matrix = acc.matrix;
        Ok(())
    }

    pub fn set_interaction(&mut self, center: &Site, matrix: ComplexMatrix) -> Result<()> {
        let term = self
            .interactions
            .get_mut(center)
            .ok_or(Error::NotSubset("the interior of the lattice"))?;
        if matrix.dim() != term.matrix.dim() {
            return Err(Error::DimensionMismatch {
                expected: term.matrix.dim(),
                got: matrix.dim(),
            });
        }
        term.matrix = matrix;
        Ok(())
    }

    /// Checks the gap condition on every site and certifies the form bound.
    pub fn build(self) -> Result<HamiltonianSpec> {
        for h in &self.onsite {
            if h.matrix.dim() != self.q {
                return Err(Error::DimensionMismatch {
                    expected: self.q,
                    got: h.matrix.dim(),
                });
            }
            if !gap_check(&h.matrix) {
                return Err(Error::GapViolation {
                    site: h.site.clone(),
                    reason: "needs a simple zero ground state and gap at least 1".into(),
                });
            }
        }
        let mut spec = HamiltonianSpec {
            geometry: self.geometry,
            q: self.q,
            onsite: self.onsite,
            interactions: self.interactions,
            a: 0.0,
            metadata: SpecMetadata {
                onsite_sup_norm: 0.0,
                interaction_sup_norm: 0.0,
                center_constants: Vec::new(),
            },
        };
        let mut constants = Vec::new();
        for v in spec.interactions.values() {
            let dev = v.matrix.hermitian_deviation();
            if dev > crate::algebra::HERMITIAN_TOLERANCE {
                return Err(Error::NotHermitian { deviation: dev });
            }
            constants.push((v.center.clone(), certify_form_bound(v, &spec)?));
        }
        let (worst, a) =
            constants.iter().cloned().fold(
                (None, 0.0),
                |(w, a), (c, x)| if x > a { (Some(c), x) } else { (w, a) },
            );
        if a >= 1.0 {
            return Err(Error::OutsideModelClass {
                center: worst.expect("a positive constant has a center"),
                reason: format!("form-bound constant {a:.6} is not below 1"),
            });
        }
        spec.a = a;
        spec.metadata = SpecMetadata {
            onsite_sup_norm: spec
                .onsite
                .iter()
                .map(|h| op_norm(&h.matrix))
                .fold(0.0, f64::max),
            interaction_sup_norm: spec
                .interactions
                .values()
                .map(|v| op_norm(&v.matrix))
                .fold(0.0, f64::max),
            center_constants: constants,
        };
        Ok(spec)
    }
}

fn interaction_dim(q: usize, support: &Region) -> Result<usize> {
    let dim = q.checked_pow(support.len() as u32).unwrap_or(usize::MAX);
    if dim > MAX_INTERACTION_DIM {
        return Err(Error::SizeCap {
            what: "interaction support dimension",
            limit: MAX_INTERACTION_DIM,
            got: dim,
        });
    }
    Ok(dim)
}

/// The three Hamiltonians restricted to a subregion.
#[derive(Clone, Debug)]
pub struct Restricted {
    pub h0: GlobalOperator,
    pub v: GlobalOperator,
    pub h: GlobalOperator,
}

impl HamiltonianSpec {
    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn lattice(&self) -> &Region {
        self.geometry.lattice()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn range(&self) -> u32 {
        self.geometry.range()
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    /// Certified form-bound constant `a`.
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn metadata(&self) -> &SpecMetadata {
        &self.metadata
    }

    pub fn onsite(&self, x: &Site) -> Option<&OnSiteTerm> {
        self.lattice().index_of(x).map(|k| &self.onsite[k])
    }

    pub fn onsite_terms(&self) -> &[OnSiteTerm] {
        &self.onsite
    }

    pub fn interaction(&self, center: &Site) -> Option<&InteractionTerm> {
        self.interactions.get(center)
    }

    pub fn interactions(&self) -> impl Iterator<Item = &InteractionTerm> {
        self.interactions.values()
    }

    pub fn interior(&self) -> Region {
        Region::from_sites(self.interactions.keys().cloned())
    }

    pub fn closure(&self, m: &Region) -> Result<Region> {
        self.geometry.closure(m)
    }

    fn check_subset(&self, s: &Region) -> Result<()> {
        if s.is_subset(self.lattice()) {
            Ok(())
        } else {
            Err(Error::NotSubset("the lattice"))
        }
    }

    /// `H⁰_base` embedded in `target ⊇ base`.
    pub fn free_hamiltonian(&self, base: &Region, target: &Region) -> Result<GlobalOperator> {
        self.check_subset(base)?;
        let mut acc = GlobalOperator::zeros(target.clone(), self.q)?;
        for x in base {
            let h = self.onsite(x).expect("checked subset");
            embed_add(
                &mut acc,
                &h.matrix,
                &Region::from_sites([x.clone()]),
                Complex64::new(1.0, 0.0),
            )?;
        }
        Ok(acc)
    }

    /// `Σ_{x ∈ centers} v_x` embedded in `target`.
    pub fn interaction_sum<'a>(
        &self,
        centers: impl IntoIterator<Item = &'a Site>,
        target: &Region,
    ) -> Result<GlobalOperator> {
        let mut acc = GlobalOperator::zeros(target.clone(), self.q)?;
        for c in centers {
            let v = self
                .interaction(c)
                .ok_or(Error::NotSubset("the interior of the lattice"))?;
            embed_add(&mut acc, &v.matrix, &v.support, Complex64::new(1.0, 0.0))?;
        }
        Ok(acc)
    }

    /// Centers whose whole R-ball lies in `s`.
    pub fn centers_within(&self, s: &Region) -> Vec<Site> {
        self.interactions
            .values()
            .filter(|v| v.support.is_subset(s))
            .map(|v| v.center.clone())
            .collect()
    }

    pub fn build_restricted(&self, s: &Region) -> Result<Restricted> {
        self.check_subset(s)?;
        let h0 = self.free_hamiltonian(s, s)?;
        let v = self.interaction_sum(&self.centers_within(s), s)?;
        let h = h0.add(&v)?;
        Ok(Restricted { h0, v, h })
    }

    pub fn hamiltonian(&self, s: &Region) -> Result<GlobalOperator> {
        Ok(self.build_restricted(s)?.h)
    }

    /// Largest eigenvalue over all interaction terms.
    pub fn max_interaction_eigenvalue(&self) -> Result<Option<(Site, f64)>> {
        let mut worst: Option<(Site, f64)> = None;
        for v in self.interactions.values() {
            let top = *herm_eig(&v.matrix)?.eigenvalues.last().expect("nonempty");
            if worst.as_ref().is_none_or(|(_, w)| top > *w) {
                worst = Some((v.center.clone(), top));
            }
        }
        Ok(worst)
    }

    /// Errors unless every `v_x ⪯ 0` within `1e-12`.
    pub fn require_nonpositive(&self) -> Result<()> {
        if let Some((center, max_eigenvalue)) = self.max_interaction_eigenvalue()? {
            if max_eigenvalue > 1e-12 {
                return Err(Error::NotNormalized {
                    center,
                    max_eigenvalue,
                });
            }
        }
        Ok(())
    }

    /// Shifts `ã·H⁰_{B_R(x)}` out of every `v_x` and back into the on-site
    /// terms, with `ã = a/|B_R|`. Each `h_y` is scaled by `1 + ã·c_y` where
    /// `c_y` counts the centers whose ball covers `y`, so the full
    /// Hamiltonian on the lattice is unchanged.
    pub fn normalize_nonpositive(&self) -> Result<HamiltonianSpec> {
        let at = self.a / self.geometry.ball_volume() as f64;
        let mut cover = vec![0usize; self.lattice().len()];
        for v in self.interactions.values() {
            for y in &v.support {
                cover[self.lattice().index_of(y).expect("support in lattice")] += 1;
            }
        }
        let onsite = self
            .onsite
            .iter()
            .zip(&cover)
            .map(|(h, &c)| h.matrix.scale_real(1.0 + at * c as f64))
            .collect();
        let mut builder = SpecBuilder::new(self.geometry.clone(), self.q, onsite)?;
        for v in self.interactions.values() {
            let h0 = self.free_hamiltonian(&v.support, &v.support)?;
            let shifted = v.matrix.sub(&h0.matrix.scale_real(at))?;
            builder.set_interaction(&v.center, shifted)?;
        }
        builder.build()
    }
}

/// Least `a′ ≥ 0` with `−a′K ⪯ v ⪯ a′K`, `K = H⁰_{B_R(x)}/|B_R|`.
pub fn certify_form_bound(v: &InteractionTerm, spec: &HamiltonianSpec) -> Result<f64> {
    let ball = spec.geometry.ball(&v.center, spec.range(), true);
    if ball != v.support {
        return Err(Error::OutsideModelClass {
            center: v.center.clone(),
            reason: "support is not the full R-ball inside the lattice".into(),
        });
    }
    let k = spec
        .free_hamiltonian(&v.support, &v.support)?
        .matrix
        .scale_real(1.0 / ball.len() as f64);
    form_bound_constant(&v.matrix, &k).map_err(|reason| Error::OutsideModelClass {
        center: v.center.clone(),
        reason,
    })
}

/// Minimal relative form-bound constant of `v` against the PSD matrix `k`.
/// Fails when `v` has weight on or into the kernel of `k`.
pub fn form_bound_constant(
    v: &ComplexMatrix,
    k: &ComplexMatrix,
) -> std::result::Result<f64, String> {
    let eig = herm_eig(k).map_err(|e| e.to_string())?;
    let u = &eig.vectors;
    let vt = u
        .adjoint()
        .matmul(v)
        .and_then(|m| m.matmul(u))
        .map_err(|e| e.to_string())?;
    let n = k.dim();
    let kernel: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= KERNEL_TOLERANCE)
        .collect();
    let range: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > KERNEL_TOLERANCE)
        .collect();
    let block = |rows: &[usize], cols: &[usize]| {
        let mut m = ComplexMatrix::zeros(rows.len().max(cols.len()).max(1));
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m.set(a, b, vt.get(i, j));
            }
        }
        m
    };
    let kk = op_norm(&block(&kernel, &kernel));
    let kr = op_norm(&block(&kernel, &range));
    if kk > KERNEL_BLOCK_TOLERANCE || kr > KERNEL_BLOCK_TOLERANCE {
        return Err(format!(
            "couples the kernel of the free Hamiltonian (kernel block {kk:.3e}, mixed block {kr:.3e})"
        ));
    }
    if range.is_empty() {
        return Ok(0.0);
    }
    let mut pencil = ComplexMatrix::zeros(range.len());
    for (a, &i) in range.iter().enumerate() {
        for (b, &j) in range.iter().enumerate() {
            let scale = (eig.eigenvalues[i] * eig.eigenvalues[j]).sqrt();
            pencil.set(a, b, vt.get(i, j) / scale);
        }
    }
    let pe = herm_eig(&pencil).map_err(|e| e.to_string())?;
    Ok(pe.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max))
}

/// One pair coupling `J σ⁺_x σ⁻_y + J̄ σ⁻_x σ⁺_y` (for `J12`) or `J N_x N_y`
/// (for `J3`).
#[derive(Clone, Debug, PartialEq)]
pub struct PairCoupling {
    pub x: Site,
    pub y: Site,
    pub value: Complex64,
}

/// Every unordered pair at distance 1, each listed once with `x < y`.
pub fn nearest_neighbour_pairs(lattice: &Region) -> Vec<(Site, Site)> {
    let mut out = Vec::new();
    for (i, x) in lattice.iter().enumerate() {
        for y in &lattice.sites()[i + 1..] {
            if l1_distance(x, y).ok() == Some(1) {
                out.push((x.clone(), y.clone()));
            }
        }
    }
    out
}

/// Canonicalizes a coupling list: endpoints ordered, each unordered pair once.
/// A pair listed in both directions must carry conjugate values.
fn canonical_pairs(
    couplings: &[PairCoupling],
    lattice: &Region,
    range: u32,
) -> Result<BTreeMap<(Site, Site), Complex64>> {
    let mut out: BTreeMap<(Site, Site), (Complex64, bool)> = BTreeMap::new();
    for c in couplings {
        if !lattice.contains(&c.x) || !lattice.contains(&c.y) {
            return Err(Error::NotSubset("the lattice"));
        }
        let d = l1_distance(&c.x, &c.y)?;
        if d == 0 || d > u64::from(range) {
            return Err(Error::CouplingRange {
                x: c.x.clone(),
                y: c.y.clone(),
                range,
            });
        }
        let (key, value, forward) = if c.x < c.y {
            ((c.x.clone(), c.y.clone()), c.value, true)
        } else {
            ((c.y.clone(), c.x.clone()), c.value.conj(), false)
        };
        match out.get(&key) {
            None => {
                out.insert(key, (value, forward));
            }
            Some(&(prev, prev_forward)) => {
                if prev_forward == forward {
                    return Err(Error::InvalidArgument(format!(
                        "coupling {} {} listed twice",
                        key.0, key.1
                    )));
                }
                if (prev - value).norm() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "coupling {} {} is not self-adjoint",
                        key.0, key.1
                    )));
                }
            }
        }
    }
    Ok(out.into_iter().map(|(k, (v, _))| (k, v)).collect())
}

/// The lexicographically smallest interior site whose R-ball holds both ends.
fn pair_center(geometry: &LatticeGeometry, interior: &Region, x: &Site, y: &Site) -> Result<Site> {
    geometry
        .ball(x, geometry.range(), false)
        .iter()
        .find(|c| {
            interior.contains(c)
                && l1_distance(c, y).is_ok_and(|d| d <= u64::from(geometry.range()))
        })
        .cloned()
        .ok_or_else(|| Error::CouplingRange {
            x: x.clone(),
            y: y.clone(),
            range: geometry.range(),
        })
}

/// Disorder values `ω_x ∈ [0, 1)`, one draw per site in canonical order.
pub fn disorder(lattice: &Region, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lattice.iter().map(|_| rng.gen::<f64>()).collect()
}

/// XXZ Hamiltonian with on-site terms `(1 + λω_x)N_x`.
pub fn xxz_spec(
    geometry: LatticeGeometry,
    lambda: f64,
    seed: u64,
    j12: &[PairCoupling],
    j3: &[PairCoupling],
) -> Result<HamiltonianSpec> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    if let Some(c) = j3.iter().find(|c| c.value.im != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "J3 coupling {} {} must be real",
            c.x, c.y
        )));
    }
    let lattice = geometry.lattice().clone();
    let omega = disorder(&lattice, seed);
    let onsite = omega
        .iter()
        .map(|w| PauliOp::N.matrix().scale_real(1.0 + lambda * w))
        .collect();
    let range = geometry.range();
    let interior = geometry.interior(&lattice)?;
    let mut builder = SpecBuilder::new(geometry, 2, onsite)?;
    let hop = PauliOp::Plus.matrix().kron(&PauliOp::Minus.matrix());
    let hop_back = PauliOp::Minus.matrix().kron(&PauliOp::Plus.matrix());
    let nn = PauliOp::N.matrix().kron(&PauliOp::N.matrix());
    for ((x, y), value) in canonical_pairs(j12, &lattice, range)? {
        let center = pair_center(&builder.geometry, &interior, &x, &y)?;
        let pair = Region::from_sites([x, y]);
        builder.add_interaction(&center, &hop, &pair, value)?;
        builder.add_interaction(&center, &hop_back, &pair, value.conj())?;
    }
    for ((x, y), value) in canonical_pairs(j3, &lattice, range)? {
        let center = pair_center(&builder.geometry, &interior, &x, &y)?;
        builder.add_interaction(&center, &nn, &Region::from_sites([x, y]), value)?;
    }
    builder.build()
}

/// Uniform nearest-neighbour couplings of strength `value`.
pub fn uniform_nearest_neighbour(lattice: &Region, value: f64) -> Vec<PairCoupling> {
    if value == 0.0 {
        return Vec::new();
    }
    nearest_neighbour_pairs(lattice)
        .into_iter()
        .map(|(x, y)| PairCoupling {
            x,
            y,
            value: Complex64::new(value, 0.0),
        })
        .collect()
}

/// The free chain `H = Σ N_x` with no interaction.
pub fn free_chain(n: usize, range: u32) -> Result<HamiltonianSpec> {
    xxz_spec(LatticeGeometry::chain(n, range)?, 0.0, 0, &[], &[])
}

/// XXZ chain with uniform nearest-neighbour `J12` and `J3`.
pub fn xxz_chain(n: usize, j12: f64, j3: f64, lambda: f64, seed: u64) -> Result<HamiltonianSpec> {
    let geometry = LatticeGeometry::chain(n, 1)?;
    let lattice = geometry.lattice().clone();
    xxz_spec(
        geometry,
        lambda,
        seed,
        &uniform_nearest_neighbour(&lattice, j12),
        &uniform_nearest_neighbour(&lattice, j3),
    )
}

// ---------------------------------------------------------------------------
// JSON model description
// ---------------------------------------------------------------------------

/// A site written either as a bare integer (one dimension) or as coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteRepr {
    Scalar(i64),
    Coords(Vec<i64>),
}

impl SiteRepr {
    fn to_site(&self) -> Site {
        match self {
            SiteRepr::Scalar(x) => Site::from(*x),
            SiteRepr::Coords(c) => Site::new(c.clone()),
        }
    }
}

/// `[x, y, re, im]` or `[x, y, re]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingEntry {
    Complex(SiteRepr, SiteRepr, f64, f64),
    Real(SiteRepr, SiteRepr, f64),
}

/// Either a uniform nearest-neighbour strength or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Couplings {
    Uniform(f64),
    Pairs(Vec<CouplingEntry>),
}

impl Default for Couplings {
    fn default() -> Self {
        Couplings::Pairs(Vec::new())
    }
}

impl Couplings {
    /// A uniform strength covers the nearest-neighbour pairs that fit inside
    /// some interior R-ball; explicit lists are taken as given.
    fn resolve(&self, geometry: &LatticeGeometry) -> Result<Vec<PairCoupling>> {
        Ok(match self {
            Couplings::Uniform(v) => {
                let interior = geometry.interior(geometry.lattice())?;
                uniform_nearest_neighbour(geometry.lattice(), *v)
                    .into_iter()
                    .filter(|c| pair_center(geometry, &interior, &c.x, &c.y).is_ok())
                    .collect()
            }
            Couplings::Pairs(list) => list
                .iter()
                .map(|e| match e {
                    CouplingEntry::Complex(x, y, re, im) => PairCoupling {
                        x: x.to_site(),
                        y: y.to_site(),
                        value: Complex64::new(*re, *im),
                    },
                    CouplingEntry::Real(x, y, re) => PairCoupling {
                        x: x.to_site(),
                        y: y.to_site(),
                        value: Complex64::new(*re, 0.0),
                    },
                })
                .collect(),
        })
    }
}

/// Matrix as rows of `[re, im]` pairs.
pub type MatrixRepr = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_repr(m: &MatrixRepr) -> Result<ComplexMatrix> {
    let rows: Vec<Vec<Complex64>> = m
        .iter()
        .map(|r| r.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
        .collect();
    ComplexMatrix::from_rows(&rows)
}

pub fn matrix_to_repr(m: &ComplexMatrix) -> MatrixRepr {
    (0..m.dim())
        .map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Xxz,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalMatrix {
    pub site: SiteRepr,
    pub matrix: MatrixRepr,
}

/// Serialized form of a [`HamiltonianSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "R")]
    pub range: u32,
    #[serde(default = "default_q")]
    pub q: usize,
    pub lattice: Region,
    pub model: ModelKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "J12", default)]
    pub j12: Couplings,
    #[serde(rename = "J3", default)]
    pub j3: Couplings,
    /// Custom models: one on-site matrix per site.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub onsite: Vec<LocalMatrix>,
    /// Custom models: interaction matrices keyed by center, on the R-ball.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<LocalMatrix>,
    /// Apply the `v_x ⪯ 0` normalization after building.
    #[serde(default)]
    pub normalize: bool,
}

fn default_q() -> usize {
    2
}

impl ModelConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn build(&self) -> Result<HamiltonianSpec> {
        let geometry = LatticeGeometry::new(self.dim, self.range, self.lattice.clone())?;
        if geometry.lattice().is_empty() {
            return Err(Error::EmptyRegion);
        }
        crate::algebra::checked_dim(self.q, geometry.lattice().len())?;
        let spec = match self.model {
            ModelKind::Xxz => {
                if self.q != 2 {
                    return Err(Error::InvalidArgument("the XXZ model needs q = 2".into()));
                }
                let j12 = self.j12.resolve(&geometry)?;
                let j3 = self.j3.resolve(&geometry)?;
                xxz_spec(geometry, self.lambda, self.seed, &j12, &j3)?
            }
            ModelKind::Custom => self.build_custom(geometry)?,
        };
        if self.normalize {
            spec.normalize_nonpositive()
        } else {
            Ok(spec)
        }
    }

    fn build_custom(&self, geometry: LatticeGeometry) -> Result<HamiltonianSpec> {
        let lattice = geometry.lattice().clone();
        let mut onsite: Vec<Option<ComplexMatrix>> = vec![None; lattice.len()];
        for entry in &self.onsite {
            let site = entry.site.to_site();
            let k = lattice
                .index_of(&site)
                .ok_or(Error::NotSubset("the lattice"))?;
            if onsite[k].is_some() {
                return Err(Error::InvalidArgument(format!(
                    "on-site term at {site} given twice"
                )));
            }
            onsite[k] = Some(matrix_from_repr(&entry.matrix)?);
        }
        let onsite = onsite
            .into_iter()
            .zip(lattice.iter())
            .map(|(m, s)| {
                m.ok_or_else(|| Error::InvalidArgument(format!("missing on-site term at {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut builder = SpecBuilder::new(geometry, self.q, onsite)?;
        for entry in &self.interactions {
            builder.set_interaction(&entry.site.to_site(), matrix_from_repr(&entry.matrix)?)?;
        }
        builder.build()
    }
}

impl HamiltonianSpec {
    /// Explicit custom-model description reproducing this spec.
    pub fn to_config(&self) -> ModelConfig {
        let site_repr = |s: &Site| SiteRepr::Coords(s.coords().to_vec());
        ModelConfig {
            dim: self.dim(),
            range: self.range(),
            q: self.q,
            lattice: self.lattice().clone(),
            model: ModelKind::Custom,
            lambda: 0.0,
            seed: 0,
            j12: Couplings::default(),
            j3: Couplings::default(),
            onsite: self
                .onsite
                .iter()
                .map(|h| LocalMatrix {
                    site: site_repr(&h.site),
                    matrix: matrix_to_repr(&h.matrix),
                })
                .collect(),
            interactions: self
                .interactions
                .values()
                .filter(|v| v.matrix.max_abs() > 0.0)
                .map(|v| LocalMatrix {
                    site: site_repr(&v.center),
                    matrix: matrix_to_repr(&v.matrix),
                })
                .collect(),
            normalize: false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_config()).expect("model configs always serialize")
    }
}

/// Embeds a single-site operator at `x` into `target`.
pub fn site_operator(
    op: &ComplexMatrix,
    x: &Site,
    target: &Region,
    q: usize,
) -> Result<GlobalOperator> {
    embed(op, &Region::from_sites([x.clone()]), target, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{relative_frobenius, sigma_x};
    use proptest::prelude::*;

    #[test]
    fn gap_examples() {
        assert!(gap_check(&ComplexMatrix::from_diag(&[0.0, 1.0])));
        assert!(!gap_check(&ComplexMatrix::from_diag(&[0.0, 0.5])));
        assert!(!gap_check(&ComplexMatrix::from_diag(&[0.0, 0.0, 1.0])));
        assert!(!gap_check(&ComplexMatrix::from_diag(&[0.1, 1.5])));
    }

    #[test]
    fn free_spec_spectrum_is_binomial() {
        let spec = free_chain(4, 1).unwrap();
        assert_eq!(spec.a(), 0.0);
        let h = spec.hamiltonian(spec.lattice()).unwrap();
        let ev = herm_eig(&h.matrix).unwrap().eigenvalues;
        let mut counts = [0usize; 5];
        for e in ev {
            counts[e.round() as usize] += 1;
        }
        assert_eq!(counts, [1, 4, 6, 4, 1]);
    }

    #[test]
    fn single_site_restriction_has_no_interaction() {
        let spec = xxz_chain(4, 0.01, 0.01, 0.0, 0).unwrap();
        let r = spec.build_restricted(&Region::line([2])).unwrap();
        assert_eq!(r.v.matrix.max_abs(), 0.0);
        assert_eq!(r.h.matrix, PauliOp::N.matrix());
        assert!(spec.build_restricted(&Region::line([9])).is_err());
    }

    #[test]
    fn disorder_is_deterministic_and_site_dependent() {
        let a = xxz_chain(5, 0.0, 0.0, 0.3, 7).unwrap();
        let b = xxz_chain(5, 0.0, 0.0, 0.3, 7).unwrap();
        assert_eq!(a, b);
        let d = disorder(&Region::chain(5), 7);
        assert!(d.iter().all(|w| (0.0..1.0).contains(w)));
        assert!(d.windows(2).any(|w| w[0] != w[1]));
        let h0 = a.onsite(&Site::from(0)).unwrap().matrix.get(1, 1).re;
        let h1 = a.onsite(&Site::from(1)).unwrap().matrix.get(1, 1).re;
        assert_ne!(h0, h1);
    }

    #[test]
    fn certify_zero_and_kernel_coupling() {
        let spec = free_chain(3, 1).unwrap();
        let v = spec.interaction(&Site::from(1)).unwrap();
        assert_eq!(certify_form_bound(v, &spec).unwrap(), 0.0);

        let mut bad = v.clone();
        bad.matrix = embed(&sigma_x(), &Region::line([1]), &v.support, 2)
            .unwrap()
            .matrix;
        assert!(matches!(
            certify_form_bound(&bad, &spec),
            Err(Error::OutsideModelClass { .. })
        ));
    }

    #[test]
    fn certify_number_pair_matches_brute_force() {
        // v = −c N_0 N_1 on the ball {0,1,2}; the worst state is |110⟩ with
        // ⟨v⟩ = −c and ⟨H⁰⟩ = 2, so a′ = c·|B_R|/2.
        let c = 0.05;
        let spec = free_chain(3, 1).unwrap();
        let mut v = spec.interaction(&Site::from(1)).unwrap().clone();
        let nn = PauliOp::N.matrix().kron(&PauliOp::N.matrix());
        v.matrix = embed(&nn, &Region::line([0, 1]), &v.support, 2)
            .unwrap()
            .matrix
            .scale_real(-c);
        let a = certify_form_bound(&v, &spec).unwrap();
        assert!((a - c * 3.0 / 2.0).abs() < 1e-12);

        // Brute force over random states.
        let k = spec
            .free_hamiltonian(&v.support, &v.support)
            .unwrap()
            .matrix
            .scale_real(1.0 / 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut best: f64 = 0.0;
        for _ in 0..20000 {
            let psi: Vec<Complex64> = (0..8)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let form = |m: &ComplexMatrix| -> f64 {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..8 {
                    for j in 0..8 {
                        acc += psi[i].conj() * m.get(i, j) * psi[j];
                    }
                }
                acc.re
            };
            let denom = form(&k);
            if denom > 1e-12 {
                best = best.max(form(&v.matrix).abs() / denom);
            }
        }
        assert!(best <= a + 1e-12);
        // Both forms are diagonal, so the supremum is a ratio of diagonals.
        let diag_best = (0..8)
            .filter(|&i| k.get(i, i).re > 0.0)
            .map(|i| v.matrix.get(i, i).re.abs() / k.get(i, i).re)
            .fold(0.0, f64::max);
        assert!((diag_best - a).abs() < 1e-12);
    }

    #[test]
    fn xxz_certifies_small_couplings() {
        let spec = xxz_chain(4, 0.01, 0.0, 0.0, 0).unwrap();
        assert!(spec.a() > 0.0 && spec.a() < 1.0);
        for v in spec.interactions() {
            assert!(certify_form_bound(v, &spec).unwrap() <= spec.a() + 1e-15);
        }
        let err = xxz_chain(4, 2.0, 0.0, 0.0, 0).unwrap_err();
        assert!(matches!(err, Error::OutsideModelClass { .. }));
    }

    #[test]
    fn coupling_range_and_adjointness() {
        let g = LatticeGeometry::chain(5, 1).unwrap();
        let far = [PairCoupling {
            x: Site::from(0),
            y: Site::from(2),
            value: Complex64::new(0.01, 0.0),
        }];
        assert!(matches!(
            xxz_spec(g.clone(), 0.0, 0, &far, &[]),
            Err(Error::CouplingRange { .. })
        ));
        let both = [
            PairCoupling {
                x: Site::from(1),
                y: Site::from(2),
                value: Complex64::new(0.01, 0.02),
            },
            PairCoupling {
                x: Site::from(2),
                y: Site::from(1),
                value: Complex64::new(0.01, -0.02),
            },
        ];
        let once = xxz_spec(g.clone(), 0.0, 0, &both[..1], &[]).unwrap();
        let twice = xxz_spec(g.clone(), 0.0, 0, &both, &[]).unwrap();
        assert_eq!(once, twice);
        let mut skew = both.clone();
        skew[1].value = Complex64::new(0.01, 0.02);
        assert!(xxz_spec(g, 0.0, 0, &skew, &[]).is_err());
    }

    #[test]
    fn pair_terms_land_on_expected_centers() {
        let spec = xxz_chain(5, 0.01, 0.0, 0.0, 0).unwrap();
        // Pairs (0,1) and (1,2) go to center 1, (2,3) to 2, (3,4) to 3.
        let hop = |x: i64, y: i64| {
            let pair = Region::line([x, y]);
            embed(
                &PauliOp::Plus.matrix().kron(&PauliOp::Minus.matrix()),
                &pair,
                &Region::chain(5),
                2,
            )
            .unwrap()
        };
        let v1 = spec
            .interaction_sum(&[Site::from(1)], &Region::chain(5))
            .unwrap();
        let expected = hop(0, 1).add(&hop(1, 2)).unwrap();
        let expected = expected.add(&GlobalOperator {
            matrix: expected.matrix.adjoint(),
            ..expected.clone()
        });
        assert!(
            relative_frobenius(&v1.matrix, &expected.unwrap().scale_real(0.01).matrix).unwrap()
                < 1e-15
        );
    }

    #[test]
    fn normalization_preserves_hamiltonian() {
        let spec = xxz_chain(4, 0.01, 0.01, 0.3, 3).unwrap();
        let norm = spec.normalize_nonpositive().unwrap();
        let h = spec.hamiltonian(spec.lattice()).unwrap();
        let h2 = norm.hamiltonian(norm.lattice()).unwrap();
        assert!(relative_frobenius(&h2.matrix, &h.matrix).unwrap() < 1e-12);
        norm.require_nonpositive().unwrap();
        assert!(spec.require_nonpositive().is_err());
        for h in norm.onsite_terms() {
            assert!(gap_check(&h.matrix));
        }

        let free = free_chain(4, 1).unwrap();
        assert_eq!(free.normalize_nonpositive().unwrap(), free);
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{"D":1,"R":1,"q":2,"lattice":[[0],[1],[2],[3]],"model":"xxz",
            "lambda":0.3,"seed":7,"J12":[[0,1,0.01,0.0],[[1],[2],0.01,0.005]],"J3":0.02}"#;
        let spec = ModelConfig::from_json(json).unwrap().build().unwrap();
        let again = ModelConfig::from_json(&spec.to_json())
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(spec.lattice(), again.lattice());
        let h = spec.hamiltonian(spec.lattice()).unwrap();
        let h2 = again.hamiltonian(again.lattice()).unwrap();
        assert_eq!(h, h2);
        assert!((spec.a() - again.a()).abs() < 1e-15);
        assert!(ModelConfig::from_json(r#"{"D":1}"#).is_err());
        let bad_gap = r#"{"D":1,"R":1,"lattice":[[0]],"model":"custom",
            "onsite":[{"site":0,"matrix":[[[0,0],[0,0]],[[0,0],[0.5,0]]]}]}"#;
        assert!(matches!(
            ModelConfig::from_json(bad_gap).unwrap().build(),
            Err(Error::GapViolation { .. })
        ));
    }

    use rand::Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn split_regions_have_sumset_spectrum(seed in any::<u64>()) {
            let spec = xxz_chain(8, 0.02, 0.02, 0.5, seed).unwrap();
            let s1 = Region::line([0, 1, 2]);
            let s2 = Region::line([6, 7]);
            let ev = |s: &Region| herm_eig(&spec.hamiltonian(s).unwrap().matrix).unwrap().eigenvalues;
            let (e1, e2) = (ev(&s1), ev(&s2));
            let mut sum: Vec<f64> = e1.iter().flat_map(|a| e2.iter().map(move |b| a + b)).collect();
            sum.sort_by(f64::total_cmp);
            let joint = ev(&s1.union(&s2));
            for (a, b) in sum.iter().zip(&joint) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn min_max_bracketing_and_zero_ground_energy(
            seed in any::<u64>(), j12 in -0.03f64..0.03, j3 in -0.03f64..0.03
        ) {
            let spec = xxz_chain(5, j12, j3, 0.4, seed).unwrap();
            let a = spec.a();
            for s in [Region::chain(5), Region::line([1, 2, 3]), Region::line([0, 1, 2, 3])] {
                let r = spec.build_restricted(&s).unwrap();
                let e = herm_eig(&r.h.matrix).unwrap().eigenvalues;
                let e0 = herm_eig(&r.h0.matrix).unwrap().eigenvalues;
                prop_assert!(e[0].abs() < 1e-9);
                for (ej, e0j) in e.iter().zip(&e0) {
                    prop_assert!(*ej >= (1.0 - a) * e0j - 1e-9);
                    prop_assert!(*ej <= (1.0 + a) * e0j + 1e-9);
                }
            }
        }
    }
}
