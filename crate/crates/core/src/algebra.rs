//! Dense complex operators on tensor products of `C^q`.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Region, Site};

pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Largest Hilbert-space dimension any operator may have.
pub const MAX_DIM: usize = 1 << 14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        if self.dim <= 8 {
            for row in self.data.chunks(self.dim) {
                writeln!(f, "  {row:?}")?;
            }
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        ComplexMatrix {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("matrix must be nonempty".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(ComplexMatrix {
            dim,
            data: rows.concat(),
        })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            })
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_dim(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    /// Matrix product. Rows are computed independently and zero entries of
    /// the left factor are skipped, which makes products of embedded local
    /// operators cheap.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        });
        Ok(ComplexMatrix { dim: n, data })
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Result<Complex64> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                if a != ZERO {
                    acc += a * other.data[j * n + i];
                }
            }
        }
        Ok(acc)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|M_ij − conj(M_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        dev
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| (0..n).all(|j| i == j || self.data[i * n + j] == ZERO))
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        let dim = n * m;
        let mut out = Self::zeros(dim);
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                if a == ZERO {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out.data[(i * m + k) * dim + j * m + l] = a * other.data[k * m + l];
                    }
                }
            }
        }
        out
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub eigenvalues: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigensystem {
    /// `U f(Λ) U*`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let fvals: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.reconstruct_with(&fvals)
    }

    pub fn reconstruct_with(&self, values: &[f64]) -> ComplexMatrix {
        let n = self.vectors.dim;
        let u = &self.vectors;
        let mut data = vec![ZERO; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            let ui = u.row(i);
            for (j, o) in out.iter_mut().enumerate() {
                let uj = u.row(j);
                let mut acc = ZERO;
                for k in 0..n {
                    if values[k] != 0.0 {
                        acc += ui[k] * uj[k].conj() * values[k];
                    }
                }
                *o = acc;
            }
        });
        ComplexMatrix { dim: n, data }
    }
}

/// Eigendecomposition of a Hermitian matrix.
pub fn herm_eig(m: &ComplexMatrix) -> Result<Eigensystem> {
    let deviation = m.hermitian_deviation();
    if deviation > HERMITIAN_TOLERANCE || deviation.is_nan() {
        return Err(Error::NotHermitian { deviation });
    }
    let n = m.dim;
    if m.is_diagonal() {
        let mut order: Vec<usize> = (0..n).collect();
        let diag: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
        order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(a.cmp(&b)));
        let mut vectors = ComplexMatrix::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            vectors.set(src, col, ONE);
        }
        return Ok(Eigensystem {
            eigenvalues: order.iter().map(|&i| diag[i]).collect(),
            vectors,
        });
    }
    let (eigenvalues, vectors) = zheevd(&m.add(&m.adjoint())?.scale_real(0.5))?;
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::Eigensolver);
    }
    Ok(Eigensystem {
        eigenvalues,
        vectors,
    })
}

/// LAPACK divide-and-conquer eigensolver; eigenvalues come back ascending.
fn zheevd(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    use lapack_sys::__BindgenComplex as Lc;
    let n = m.dim;
    let ni = i32::try_from(n).map_err(|_| Error::Eigensolver)?;
    // Column-major copy.
    let mut a: Vec<Complex64> = (0..n * n)
        .map(|idx| m.data[(idx % n) * n + idx / n])
        .collect();
    let mut w = vec![0.0; n];
    let (jobz, uplo) = (b'V' as std::ffi::c_char, b'U' as std::ffi::c_char);
    let mut info = 0;
    let mut wq = [ZERO];
    let mut rwq = [0.0];
    let mut iwq = [0];
    let query = -1;
    // SAFETY: buffers match the sizes LAPACK is told about, and Complex64 is
    // `repr(C)` with the same layout as the binding's complex type.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            a.as_mut_ptr() as *mut Lc<f64>,
            &ni,
            w.as_mut_ptr(),
            wq.as_mut_ptr() as *mut Lc<f64>,
            &query,
            rwq.as_mut_ptr(),
            &query,
            iwq.as_mut_ptr(),
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver);
    }
    let lwork = wq[0].re as i32;
    let lrwork = rwq[0] as i32;
    let liwork = iwq[0];
    let mut work = vec![ZERO; lwork.max(1) as usize];
    let mut rwork = vec![0.0; lrwork.max(1) as usize];
    let mut iwork = vec![0; liwork.max(1) as usize];
    // SAFETY: as above, with workspaces of the queried sizes.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            a.as_mut_ptr() as *mut Lc<f64>,
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr() as *mut Lc<f64>,
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigensolver);
    }
    let data = (0..n * n).map(|idx| a[(idx % n) * n + idx / n]).collect();
    Ok((w, ComplexMatrix { dim: n, data }))
}

/// `exp(s·M)` for Hermitian `M`.
pub fn herm_exp(m: &ComplexMatrix, s: f64) -> Result<ComplexMatrix> {
    if s == 0.0 {
        herm_eig(m)?;
        return Ok(ComplexMatrix::identity(m.dim));
    }
    Ok(herm_eig(m)?.apply(|l| (s * l).exp()))
}

/// Largest singular value.
pub fn op_norm(m: &ComplexMatrix) -> f64 {
    if m.is_diagonal() {
        return m.diagonal().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    if m.hermitian_deviation() <= HERMITIAN_TOLERANCE * m.max_abs().max(1.0) {
        if let Ok(eig) = herm_eig(m) {
            return eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
        }
    }
    herm_eig(&m.adjoint().matmul(m).expect("square dims agree"))
        .map(|eig| eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l)).sqrt())
        .unwrap_or(f64::NAN)
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.trace()
}

/// Relative Frobenius distance with the denominator floored at `1e-300`.
pub fn relative_frobenius(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm() / b.frobenius_norm().max(1e-300))
}

pub fn checked_dim(q: usize, sites: usize) -> Result<usize> {
    let dim = u32::try_from(sites)
        .ok()
        .and_then(|s| q.checked_pow(s))
        .filter(|&d| d <= MAX_DIM);
    dim.ok_or(Error::SizeCap {
        what: "Hilbert-space dimension",
        limit: MAX_DIM,
        got: q.saturating_pow(sites.min(64) as u32),
    })
}

/// An operator on `⊗_{x ∈ region} C^q`, basis ordered with the first site
/// most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalOperator {
    pub region: Region,
    pub q: usize,
    pub matrix: ComplexMatrix,
}

impl GlobalOperator {
    pub fn new(region: Region, q: usize, matrix: ComplexMatrix) -> Result<Self> {
        let dim = checked_dim(q, region.len())?;
        if matrix.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: matrix.dim,
            });
        }
        Ok(GlobalOperator { region, q, matrix })
    }

    pub fn identity(region: Region, q: usize) -> Result<Self> {
        let dim = checked_dim(q, region.len())?;
        Ok(GlobalOperator {
            region,
            q,
            matrix: ComplexMatrix::identity(dim),
        })
    }

    pub fn zeros(region: Region, q: usize) -> Result<Self> {
        let dim = checked_dim(q, region.len())?;
        Ok(GlobalOperator {
            region,
            q,
            matrix: ComplexMatrix::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn embed_into(&self, target: &Region) -> Result<GlobalOperator> {
        embed(&self.matrix, &self.region, target, self.q)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.region != other.region || self.q != other.q {
            return Err(Error::InvalidArgument(
                "operators act on different regions".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(GlobalOperator {
            region: self.region.clone(),
            q: self.q,
            matrix: self.matrix.add(&other.matrix)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(GlobalOperator {
            region: self.region.clone(),
            q: self.q,
            matrix: self.matrix.sub(&other.matrix)?,
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(GlobalOperator {
            region: self.region.clone(),
            q: self.q,
            matrix: self.matrix.matmul(&other.matrix)?,
        })
    }

    pub fn scale_real(&self, s: f64) -> Self {
        GlobalOperator {
            region: self.region.clone(),
            q: self.q,
            matrix: self.matrix.scale_real(s),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }
}

/// `local ⊗ 1` on `target`, with tensor factors placed by canonical order.
pub fn embed(
    local: &ComplexMatrix,
    support: &Region,
    target: &Region,
    q: usize,
) -> Result<GlobalOperator> {
    let mut out = GlobalOperator::zeros(target.clone(), q)?;
    embed_add(&mut out, local, support, ONE)?;
    Ok(out)
}

/// `acc += coeff · (local ⊗ 1)` without materializing the embedded operator.
pub fn embed_add(
    acc: &mut GlobalOperator,
    local: &ComplexMatrix,
    support: &Region,
    coeff: Complex64,
) -> Result<()> {
    let target = &acc.region;
    let q = acc.q;
    if !support.is_subset(target) {
        return Err(Error::NotSubset("the target region"));
    }
    let local_dim = checked_dim(q, support.len())?;
    if local.dim != local_dim {
        return Err(Error::DimensionMismatch {
            expected: local_dim,
            got: local.dim,
        });
    }
    let dim = acc.matrix.dim;
    let m = target.len();
    let place = |pos: usize| q.pow((m - 1 - pos) as u32);
    let support_weights: Vec<usize> = support
        .iter()
        .map(|s| place(target.index_of(s).expect("support is a subset")))
        .collect();
    let rest_weights: Vec<usize> = (0..m)
        .filter(|&pos| !support.contains(&target.sites()[pos]))
        .map(place)
        .collect();
    let offsets = |weights: &[usize]| -> Vec<usize> {
        let count = q.pow(weights.len() as u32);
        (0..count)
            .map(|mut idx| {
                let mut off = 0;
                for w in weights.iter().rev() {
                    off += (idx % q) * w;
                    idx /= q;
                }
                off
            })
            .collect()
    };
    let local_off = offsets(&support_weights);
    let rest_off = offsets(&rest_weights);
    let data = &mut acc.matrix.data;
    for i in 0..local_dim {
        for j in 0..local_dim {
            let value = local.get(i, j) * coeff;
            if value == ZERO {
                continue;
            }
            for &r in &rest_off {
                data[(local_off[i] + r) * dim + local_off[j] + r] += value;
            }
        }
    }
    Ok(())
}

/// Single-qubit operators available in Pauli-string templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
    /// Number operator `(1 − σ³)/2`, the projector onto the excited state.
    N,
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl PauliOp {
    /// The 2x2 matrix in the basis `(|0⟩, |1⟩)` with `σ³|0⟩ = |0⟩`.
    pub fn matrix(self) -> ComplexMatrix {
        let c = |re, im| Complex64::new(re, im);
        let rows = match self {
            PauliOp::I => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
            PauliOp::X => [[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
            PauliOp::Y => [[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
            PauliOp::Z => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
            PauliOp::N => [[c(0., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
            PauliOp::Plus => [[c(0., 0.), c(0., 0.)], [c(1., 0.), c(0., 0.)]],
            PauliOp::Minus => [[c(0., 0.), c(1., 0.)], [c(0., 0.), c(0., 0.)]],
        };
        ComplexMatrix {
            dim: 2,
            data: rows.concat(),
        }
    }
}

pub fn sigma_x() -> ComplexMatrix {
    PauliOp::X.matrix()
}

pub fn sigma_y() -> ComplexMatrix {
    PauliOp::Y.matrix()
}

pub fn sigma_z() -> ComplexMatrix {
    PauliOp::Z.matrix()
}

pub fn number_op() -> ComplexMatrix {
    PauliOp::N.matrix()
}

/// One factor of a Pauli string: an operator at `anchor + offset`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PauliFactor {
    pub offset: Vec<i64>,
    pub op: PauliOp,
}

/// A product of single-site operators at fixed offsets from an anchor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PauliString(pub Vec<PauliFactor>);

impl PauliString {
    pub fn single(op: PauliOp, dim: usize) -> Self {
        PauliString(vec![PauliFactor {
            offset: vec![0; dim],
            op,
        }])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: PauliString = serde_json::from_str(s)?;
        if p.0.is_empty() {
            return Err(Error::InvalidArgument("empty Pauli string".into()));
        }
        let dim = p.0[0].offset.len();
        if let Some(bad) = p.0.iter().find(|f| f.offset.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.offset.len(),
            });
        }
        Ok(p)
    }

    /// The operator placed at `anchor`, on its own support. Factors landing on
    /// the same site are multiplied in the listed order.
    pub fn place(&self, anchor: &Site) -> Result<GlobalOperator> {
        if self.0.is_empty() {
            return Err(Error::InvalidArgument("empty Pauli string".into()));
        }
        let mut factors: Vec<(Site, ComplexMatrix)> = Vec::new();
        for f in &self.0 {
            if f.offset.len() != anchor.dim() {
                return Err(Error::DimensionMismatch {
                    expected: anchor.dim(),
                    got: f.offset.len(),
                });
            }
            let site = anchor.shifted(&f.offset);
            let m = f.op.matrix();
            match factors.iter_mut().find(|(s, _)| *s == site) {
                Some((_, acc)) => *acc = acc.matmul(&m)?,
                None => factors.push((site, m)),
            }
        }
        factors.sort_by(|a, b| a.0.cmp(&b.0));
        let matrix = factors
            .iter()
            .skip(1)
            .fold(factors[0].1.clone(), |acc, (_, m)| acc.kron(m));
        GlobalOperator::new(
            Region::from_sites(factors.into_iter().map(|(s, _)| s)),
            2,
            matrix,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        let data = (0..n * n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexMatrix { dim: n, data }
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        let a = random_matrix(rng, n);
        a.add(&a.adjoint()).unwrap().scale_real(0.5)
    }

    fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        let h = random_hermitian(rng, n);
        herm_eig(&h).unwrap().vectors
    }

    #[test]
    fn embed_sigma_z_on_first_of_two() {
        let target = Region::chain(2);
        let e = embed(&sigma_z(), &Region::chain(1), &target, 2).unwrap();
        assert_eq!(e.matrix, ComplexMatrix::from_diag(&[1.0, 1.0, -1.0, -1.0]));
        let e1 = embed(&sigma_z(), &Region::line([1]), &target, 2).unwrap();
        assert_eq!(e1.matrix, ComplexMatrix::from_diag(&[1.0, -1.0, 1.0, -1.0]));
    }

    #[test]
    fn embed_identity_and_trace() {
        let target = Region::chain(4);
        let sup = Region::line([1, 3]);
        let e = embed(&ComplexMatrix::identity(4), &sup, &target, 2).unwrap();
        assert_eq!(e.matrix, ComplexMatrix::identity(16));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 4);
        let ea = embed(&a, &sup, &target, 2).unwrap();
        assert!((ea.trace() - a.trace() * 4.0).norm() < 1e-12);
        assert!(embed(&a, &Region::line([5, 6]), &target, 2).is_err());
        assert!(matches!(
            embed(&a, &Region::line([1]), &target, 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embed_matches_kron_for_adjacent_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 2);
        let b = random_matrix(&mut rng, 4);
        let target = Region::chain(3);
        let ea = embed(&a, &Region::line([0]), &target, 2).unwrap();
        let eb = embed(&b, &Region::line([1, 2]), &target, 2).unwrap();
        let prod = ea.matmul(&eb).unwrap();
        assert!(relative_frobenius(&prod.matrix, &a.kron(&b)).unwrap() < 1e-14);
        let tr = prod.trace();
        assert!((tr - a.trace() * b.trace()).norm() < 1e-12);
    }

    #[test]
    fn eig_examples() {
        let e = herm_eig(&ComplexMatrix::from_diag(&[1.0, 0.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![0.0, 1.0]);
        let e = herm_eig(&sigma_x()).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let mut bad = sigma_x();
        bad.set(0, 1, c(2.0, 0.0));
        assert!(matches!(herm_eig(&bad), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn eig_reconstructs_and_is_unitarily_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(&mut rng, 12);
        let e = herm_eig(&h).unwrap();
        let back = e.apply(|l| l);
        assert!(relative_frobenius(&back, &h).unwrap() < 1e-10);
        let u = random_unitary(&mut rng, 12);
        let conj = u.matmul(&h).unwrap().matmul(&u.adjoint()).unwrap();
        let e2 = herm_eig(&conj).unwrap();
        for (a, b) in e.eigenvalues.iter().zip(&e2.eigenvalues) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn exp_examples() {
        let m = ComplexMatrix::from_diag(&[0.0, 1.0]);
        assert_eq!(herm_exp(&m, 0.0).unwrap(), ComplexMatrix::identity(2));
        let e = herm_exp(&m, -std::f64::consts::LN_2).unwrap();
        assert!(relative_frobenius(&e, &ComplexMatrix::from_diag(&[1.0, 0.5])).unwrap() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(&mut rng, 8);
        let ab = herm_exp(&h, 0.3)
            .unwrap()
            .matmul(&herm_exp(&h, -1.1).unwrap())
            .unwrap();
        assert!(relative_frobenius(&ab, &herm_exp(&h, -0.8).unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(op_norm(&ComplexMatrix::identity(3)), 1.0);
        assert_eq!(op_norm(&ComplexMatrix::from_diag(&[3.0, -5.0])), 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 6);
            assert!(op_norm(&a) <= a.frobenius_norm() + 1e-12);
        }
    }

    #[test]
    fn trace_examples() {
        assert_eq!(trace(&ComplexMatrix::identity(5)), c(5.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_matrix(&mut rng, 7);
        let b = random_matrix(&mut rng, 7);
        let ab = a.matmul(&b).unwrap().trace();
        let ba = b.matmul(&a).unwrap().trace();
        assert!((ab - ba).norm() < 1e-10);
        assert!((a.trace_product(&b).unwrap() - ab).norm() < 1e-12);
    }

    #[test]
    fn disjoint_embeddings_commute_and_exp_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h1 = random_hermitian(&mut rng, 4);
        let h2 = random_hermitian(&mut rng, 2);
        let target = Region::chain(4);
        let e1 = embed(&h1, &Region::line([0, 2]), &target, 2).unwrap();
        let e2 = embed(&h2, &Region::line([3]), &target, 2).unwrap();
        assert!(e1.matrix.commutator(&e2.matrix).unwrap().max_abs() <= 1e-12);

        let beta = 1.7;
        let full = herm_exp(&e1.add(&e2).unwrap().matrix, -beta).unwrap();
        let x1 = embed(
            &herm_exp(&h1, -beta).unwrap(),
            &Region::line([0, 2]),
            &target,
            2,
        )
        .unwrap();
        let x2 = embed(
            &herm_exp(&h2, -beta).unwrap(),
            &Region::line([3]),
            &target,
            2,
        )
        .unwrap();
        let prod = x1.matmul(&x2).unwrap();
        assert!(relative_frobenius(&prod.matrix, &full).unwrap() < 1e-10);
    }

    #[test]
    fn embed_preserves_norm_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_hermitian(&mut rng, 4);
        let e = embed(&h, &Region::line([1, 2]), &Region::chain(4), 2).unwrap();
        assert!(e.matrix.hermitian_deviation() < 1e-15);
        assert!((op_norm(&e.matrix) - op_norm(&h)).abs() < 1e-10);
    }

    #[test]
    fn trace_exp_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let h = random_hermitian(&mut rng, 6);
            let b = random_matrix(&mut rng, 6);
            let psd = b.matmul(&b.adjoint()).unwrap();
            let hp = h.add(&psd).unwrap();
            let t = herm_exp(&h, 1.0).unwrap().trace().re;
            let tp = herm_exp(&hp, 1.0).unwrap().trace().re;
            assert!(t <= tp * (1.0 + 1e-12));
        }
    }

    #[test]
    fn pauli_string_placement() {
        let p =
            PauliString::from_json(r#"[{"offset":[1],"op":"Z"},{"offset":[0],"op":"X"}]"#).unwrap();
        let op = p.place(&Site::from(3)).unwrap();
        assert_eq!(op.region, Region::line([3, 4]));
        assert_eq!(op.matrix, sigma_x().kron(&sigma_z()));
        let same = PauliString::from_json(r#"[{"offset":[0],"op":"X"},{"offset":[0],"op":"X"}]"#)
            .unwrap()
            .place(&Site::from(0))
            .unwrap();
        assert_eq!(same.matrix, ComplexMatrix::identity(2));
        assert!(PauliString::from_json("[]").is_err());
        assert!(PauliString::from_json(r#"[{"offset":[0],"op":"Q"}]"#).is_err());
        let n = PauliOp::N.matrix();
        let from_z = ComplexMatrix::identity(2)
            .sub(&sigma_z())
            .unwrap()
            .scale_real(0.5);
        assert_eq!(n, from_z);
        let pm = PauliOp::Plus
            .matrix()
            .matmul(&PauliOp::Minus.matrix())
            .unwrap();
        assert_eq!(pm, n);
    }

    proptest! {
        #[test]
        fn embed_is_multiplicative(seed in any::<u64>(), s0 in 0i64..4, s1 in 0i64..4) {
            prop_assume!(s0 != s1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 4);
            let b = random_matrix(&mut rng, 4);
            let sup = Region::line([s0, s1]);
            let target = Region::chain(4);
            let lhs = embed(&a.matmul(&b).unwrap(), &sup, &target, 2).unwrap();
            let rhs = embed(&a, &sup, &target, 2).unwrap()
                .matmul(&embed(&b, &sup, &target, 2).unwrap()).unwrap();
            prop_assert!(relative_frobenius(&lhs.matrix, &rhs.matrix).unwrap() < 1e-13);
        }

        #[test]
        fn exp_semigroup(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_hermitian(&mut rng, 5);
            let lhs = herm_exp(&h, s).unwrap().matmul(&herm_exp(&h, t).unwrap()).unwrap();
            let rhs = herm_exp(&h, s + t).unwrap();
            prop_assert!(relative_frobenius(&lhs, &rhs).unwrap() < 1e-10);
        }
    }
}
