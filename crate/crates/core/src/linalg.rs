//! Dense complex linear-algebra kernels shared by every module: guarded
//! Cholesky, sorted Hermitian eigendecomposition, the Padé(13) matrix
//! exponential, the Schur square root and a banded LU for large stencils.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Smallest Cholesky pivot allowed relative to the largest one.
pub const PIVOT_RATIO_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Lift a real vector into the complex ambient space.
pub fn to_complex(v: &[f64]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|&x| real(x)))
}

/// `(x, y) = y* x`, linear in the first argument.
#[inline]
pub fn inner(x: &CVec, y: &CVec) -> C64 {
    y.dotc(x)
}

pub fn hermitian_part(k: &CMat) -> CMat {
    (k + k.adjoint()) * real(0.5)
}

/// `(K - K*) / (2i)`, Hermitian; `u* S u` is the imaginary part of `u* K u`.
pub fn skew_part_hermitian(k: &CMat) -> CMat {
    (k - k.adjoint()) * c64(0.0, -0.5)
}

pub fn is_hermitian(k: &CMat, tol: f64) -> bool {
    let scale = k.norm().max(f64::MIN_POSITIVE);
    (k - k.adjoint()).norm() <= tol * scale
}

pub fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Cholesky factor `L` of a Hermitian positive-definite matrix, rejecting
/// factorizations whose smallest pivot falls below `PIVOT_RATIO_TOL` times
/// the largest.
pub fn cholesky_guarded(g: &CMat) -> Result<CMat> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Gram matrix is {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let sym = hermitian_part(g);
    let chol = sym
        .cholesky()
        .ok_or(Error::SingularGram { ratio: 0.0 })?;
    let l = chol.unpack();
    let pivots: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].norm_sqr()).collect();
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio >= PIVOT_RATIO_TOL) {
        return Err(Error::SingularGram { ratio });
    }
    Ok(l)
}

/// Solve `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &CMat, b: &CMat) -> CMat {
    l.solve_lower_triangular(b)
        .expect("triangular factor with nonzero diagonal")
}

/// Solve `L* X = B` for lower-triangular `L`.
pub fn solve_lower_adjoint(l: &CMat, b: &CMat) -> CMat {
    l.ad_solve_lower_triangular(b)
        .expect("triangular factor with nonzero diagonal")
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues ascending.
pub fn hermitian_eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = hermitian_part(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of the Hermitian pencil `(H, G)` with `G = L L*`, ascending.
pub fn pencil_eigenvalues(h: &CMat, l: &CMat) -> Vec<f64> {
    let reduced = reduce_congruence(h, l);
    hermitian_eigh(&reduced).0
}

/// `L^{-1} X L^{-*}`.
pub fn reduce_congruence(x: &CMat, l: &CMat) -> CMat {
    let left = solve_lower(l, x);
    // (L^{-1} X) L^{-*} = (L^{-1} (L^{-1} X)^*)^*
    solve_lower(l, &left.adjoint()).adjoint()
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;
const MAX_SQUARINGS: i32 = 60;

/// Matrix exponential by scaling and squaring with the diagonal Padé(13)
/// approximant and 1-norm based scaling.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    if n == 1 {
        let z = a[(0, 0)].exp();
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::ExpOverflow(format!("scalar exponent {}", a[(0, 0)])));
        }
        return Ok(CMat::from_element(1, 1, z));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::ExpOverflow("non-finite 1-norm".into()));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    if s > MAX_SQUARINGS {
        return Err(Error::ExpOverflow(format!(
            "1-norm {norm:.3e} needs {s} squarings"
        )));
    }
    let scaled = a * real(0.5f64.powi(s));
    let id = CMat::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| real(PADE13[k]);
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::ExpOverflow("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(Error::ExpOverflow(format!(
            "result overflowed after {s} squarings"
        )));
    }
    Ok(r)
}

/// Complex Schur form `A = Q T Q*`.
pub fn schur(a: &CMat) -> Option<(CMat, CMat)> {
    let s = a.clone().try_schur(1e-15, 10_000)?;
    Some(s.unpack())
}

/// Principal square root via the complex Schur form and the triangular
/// recurrence `R_ii^2 = T_ii`, `R_ii R_ij + R_ij R_jj = T_ij - sum R_ik R_kj`.
/// Requires no eigenvalue on the closed negative real axis.
pub fn sqrtm_schur(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let (q, t) = schur(a).ok_or_else(|| Error::SingularSystem("Schur iteration failed".into()))?;
    let mut r = CMat::zeros(n, n);
    for j in 0..n {
        let d = t[(j, j)];
        if d.re <= 0.0 && d.im == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue {d} on the branch cut of the square root"
            )));
        }
        r[(j, j)] = d.sqrt();
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            let denom = r[(i, i)] + r[(j, j)];
            if denom.norm() == 0.0 {
                return Err(Error::SingularSystem("Sylvester denominator vanished".into()));
            }
            r[(i, j)] = s / denom;
        }
    }
    Ok(&q * r * q.adjoint())
}

/// Square root of a Hermitian positive semidefinite matrix by spectral calculus.
pub fn sqrtm_hermitian(a: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigh(a);
    let d = CMat::from_diagonal(&CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&x| real(x.max(0.0).sqrt())),
    ));
    &vecs * d * vecs.adjoint()
}

/// Spectral norm of a linear map by power iteration on `X* X`.
///
/// `apply` and `apply_adjoint` act on vectors of length `dim`. Stops when the
/// Rayleigh quotient changes by less than `rel_tol` relatively.
pub fn power_norm<F, G>(dim: usize, apply: F, apply_adjoint: G, rel_tol: f64, max_iter: usize) -> f64
where
    F: Fn(&CVec) -> CVec,
    G: Fn(&CVec) -> CVec,
{
    if dim == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start vector.
    let mut x = CVec::from_fn(dim, |i, _| c64(1.0 + (i as f64) * 0.37, 0.11 * i as f64 - 0.5));
    x /= real(x.norm());
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let y = apply(&x);
        let z = apply_adjoint(&y);
        let nz = z.norm();
        let next = y.norm();
        if nz == 0.0 {
            return 0.0;
        }
        x = z / real(nz);
        if (next - estimate).abs() <= rel_tol * next.max(f64::MIN_POSITIVE) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Complex band matrix stored by diagonals with an unpivoted LU.
///
/// Used for the shifted stencil systems `lambda G + K` of large grids, which
/// are accretive with a strictly accretive shift.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    // row-major band: data[i * width + (j + lower - i)]
    data: Vec<C64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![ZERO; n * (lower + upper + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.lower < i || j > i + self.upper {
            None
        } else {
            Some(i * self.width() + (j + self.lower - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.slot(i, j).map_or(ZERO, |k| self.data[k])
    }

    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i},{j}) outside the band"));
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    /// `self + s * other` for matrices with the same band layout.
    pub fn add_scaled(&self, s: C64, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!((self.n, self.lower, self.upper), (other.n, other.lower, other.upper));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        out
    }

    /// Quadratic form `y* A x`.
    pub fn form(&self, x: &[C64], y: &[C64]) -> C64 {
        self.matvec(x).iter().zip(y).map(|(a, b)| a * b.conj()).sum()
    }

    /// In-place LU without pivoting followed by a solve.
    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        Ok(self.lu()?.solve(rhs))
    }

    pub fn lu(&self) -> Result<BandedLu> {
        let mut lu = self.clone();
        lu.factor()?;
        Ok(BandedLu(lu))
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let scale = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.norm() > 1e-14 * scale) {
                return Err(Error::SingularSystem(format!("banded pivot {k} vanished")));
            }
            let imax = (k + self.lower).min(n - 1);
            let jmax = (k + self.upper).min(n - 1);
            for i in (k + 1)..=imax {
                let si = self.slot(i, k).unwrap();
                let factor = self.data[si] / pivot;
                self.data[si] = factor;
                for j in (k + 1)..=jmax {
                    if let Some(sij) = self.slot(i, j) {
                        let ukj = self.get(k, j);
                        self.data[sij] -= factor * ukj;
                    }
                }
            }
        }
        Ok(())
    }

    fn solve_factored(&self, rhs: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(self.lower);
            let mut s = y[i];
            for j in lo..i {
                s -= self.get(i, j) * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + self.upper).min(n - 1);
            let mut s = y[i];
            for j in (i + 1)..=hi {
                s -= self.get(i, j) * y[j];
            }
            y[i] = s / self.get(i, i);
        }
        y
    }
}

/// Factored band matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct BandedLu(BandedMatrix);

impl BandedLu {
    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        self.0.solve_factored(rhs)
    }
}
