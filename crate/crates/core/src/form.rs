//! Sesquilinear forms on subspaces of a finite-dimensional Hilbert space and
//! their associated m-sectorial graphs.
//!
//! A form lives on `V = range(B)` for a (not necessarily orthonormal) basis
//! matrix `B` of shape `N x m`. With Gram matrix `G = B* B` and stiffness
//! `K_ij = a(b_j, b_i)`, the associated graph acts through
//!
//! ```text
//! (lambda I + A)^{-1} f = B (lambda G + K)^{-1} B* f,      P f = B G^{-1} B* f.
//! ```
//!
//! `V` need not be all of the ambient space, so the resolvent has a kernel
//! (`V^perp`) and the semigroup generated by `-A` is degenerate.

use std::sync::OnceLock;

use nalgebra::linalg::LU;
use nalgebra::Dyn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_guarded, hermitian_eigh, hermitian_part, is_hermitian, pencil_eigenvalues, power_norm,
    real, reduce_congruence, skew_part_hermitian, solve_lower, CMat, CVec, C64,
};
use crate::probes::random_complex_vector;

/// Relative tolerance of the Hermitian test on the stiffness matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Floor used as the semiangle of symmetric forms.
pub const SEMIANGLE_FLOOR: f64 = 1e-12;
/// Random unit vectors used to certify a sector estimate.
pub const SECTOR_SAMPLES: usize = 10_000;

/// The ambient Hilbert space `C^N` with the standard inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmbientSpace {
    dim: usize,
}

impl AmbientSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("ambient dimension must be >= 1".into()));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Basis of a form domain, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    columns: CMat,
}

impl SubspaceBasis {
    pub fn new(columns: CMat) -> Result<Self> {
        if columns.ncols() > columns.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} basis vectors in dimension {}",
                columns.ncols(),
                columns.nrows()
            )));
        }
        Ok(Self { columns })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            columns: CMat::identity(n, n),
        }
    }

    /// Canonical unit vectors `e_i` for the listed indices.
    pub fn canonical(ambient: usize, indices: &[usize]) -> Result<Self> {
        let mut b = CMat::zeros(ambient, indices.len());
        for (col, &i) in indices.iter().enumerate() {
            if i >= ambient {
                return Err(Error::DimensionMismatch(format!(
                    "index {i} outside ambient dimension {ambient}"
                )));
            }
            b[(i, col)] = real(1.0);
        }
        Self::new(b)
    }

    pub fn columns(&self) -> &CMat {
        &self.columns
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }
}

/// Vertex `gamma`, semiangle `theta` and closedness shift `omega` of a form:
/// `a(u) - gamma |u|^2` lies in the closed sector `|arg z| <= theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorEstimate {
    pub vertex: f64,
    pub semiangle: f64,
    pub shift: f64,
}

impl SectorEstimate {
    pub fn tan(&self) -> f64 {
        self.semiangle.tan()
    }
}

/// Outcome of sampling the Hille–Yosida bound.
#[derive(Debug, Clone, PartialEq)]
pub struct HilleYosidaReport {
    pub max_value: f64,
    pub worst_k: usize,
    pub worst_lambda: f64,
    pub bound: f64,
    pub passed: bool,
}

/// A sesquilinear form given by its basis, Gram and stiffness matrices.
#[derive(Debug)]
pub struct FormOperator {
    basis: SubspaceBasis,
    gram: CMat,
    stiffness: CMat,
    symmetric: bool,
    gram_factor: OnceLock<CMat>,
    orthonormal: OnceLock<CMat>,
    sector: OnceLock<Result<SectorEstimate>>,
}

impl Clone for FormOperator {
    fn clone(&self) -> Self {
        let out = Self {
            basis: self.basis.clone(),
            gram: self.gram.clone(),
            stiffness: self.stiffness.clone(),
            symmetric: self.symmetric,
            gram_factor: OnceLock::new(),
            orthonormal: OnceLock::new(),
            sector: OnceLock::new(),
        };
        if let Some(l) = self.gram_factor.get() {
            let _ = out.gram_factor.set(l.clone());
        }
        if let Some(e) = self.orthonormal.get() {
            let _ = out.orthonormal.set(e.clone());
        }
        out
    }
}

/// Build the form operator of `stiffness` on `range(basis)`.
pub fn assemble_form_operator(basis: SubspaceBasis, stiffness: CMat) -> Result<FormOperator> {
    let m = basis.dim();
    if stiffness.nrows() != m || stiffness.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "stiffness is {}x{} but the basis has {} vectors",
            stiffness.nrows(),
            stiffness.ncols(),
            m
        )));
    }
    let gram = basis.columns().adjoint() * basis.columns();
    FormOperator::from_parts(basis, gram, stiffness)
}

impl FormOperator {
    fn from_parts(basis: SubspaceBasis, gram: CMat, stiffness: CMat) -> Result<Self> {
        let m = basis.dim();
        if gram.shape() != (m, m) || stiffness.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "basis has {m} vectors, Gram {:?}, stiffness {:?}",
                gram.shape(),
                stiffness.shape()
            )));
        }
        let l = cholesky_guarded(&gram)?;
        let symmetric = is_hermitian(&stiffness, SYMMETRY_TOL);
        let op = Self {
            basis,
            gram,
            stiffness,
            symmetric,
            gram_factor: OnceLock::new(),
            orthonormal: OnceLock::new(),
            sector: OnceLock::new(),
        };
        let _ = op.gram_factor.set(l);
        Ok(op)
    }

    pub fn basis(&self) -> &SubspaceBasis {
        &self.basis
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    pub fn stiffness(&self) -> &CMat {
        &self.stiffness
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.ambient_dim()
    }

    pub fn form_dim(&self) -> usize {
        self.basis.dim()
    }

    /// Cholesky factor `L` of the Gram matrix, `G = L L*`.
    pub fn gram_factor(&self) -> &CMat {
        self.gram_factor
            .get_or_init(|| cholesky_guarded(&self.gram).expect("validated at assembly"))
    }

    /// Orthonormal basis `E = B L^{-*}` of the form domain.
    pub fn orthonormal_basis(&self) -> &CMat {
        self.orthonormal.get_or_init(|| {
            let l = self.gram_factor();
            // E = B L^{-*}  <=>  E* = L^{-1} B*
            solve_lower(l, &self.basis.columns().adjoint()).adjoint()
        })
    }

    /// Form value `a(u, v)` for `u = B x`, `v = B y` given by coefficients.
    pub fn form_value(&self, x: &CVec, y: &CVec) -> C64 {
        (y.adjoint() * &self.stiffness * x)[(0, 0)]
    }

    /// The reduced generator `M = L^{-1} K L^{-*}` acting on orthonormal
    /// coordinates of the form domain.
    pub fn reduced_generator(&self) -> CMat {
        reduce_congruence(&self.stiffness, self.gram_factor())
    }

    /// Eigenvalues of the Hermitian pencil `(Re K, G)`, ascending.
    pub fn real_part_spectrum(&self) -> Vec<f64> {
        pencil_eigenvalues(&hermitian_part(&self.stiffness), self.gram_factor())
    }

    /// `(lambda I + A)^{-1} f`.
    pub fn resolvent_apply(&self, lambda: C64, f: &CVec) -> Result<CVec> {
        self.resolvent(lambda)?.apply(f)
    }

    /// Factor `lambda G + K` once for repeated applications.
    pub fn resolvent(&self, lambda: C64) -> Result<Resolvent<'_>> {
        let shifted = &self.gram * lambda + &self.stiffness;
        let lu = shifted.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem(format!(
                "lambda G + K singular at lambda = {lambda}"
            )));
        }
        Ok(Resolvent { op: self, lu })
    }

    /// Orthogonal projection `B G^{-1} B* f` onto the form domain.
    pub fn orthogonal_projection(&self, f: &CVec) -> CVec {
        let e = self.orthonormal_basis();
        e * (e.adjoint() * f)
    }

    /// Sector estimate, computed once and cached.
    pub fn sector(&self) -> Result<SectorEstimate> {
        self.sector.get_or_init(|| estimate_sector(self)).clone()
    }

    /// `sup ||(lambda - omega)^k (lambda I + A)^{-k}||` over the samples,
    /// as operator norms on the range of the projection.
    pub fn hille_yosida_check(
        &self,
        omega: f64,
        bound: f64,
        k_max: usize,
        lambda_samples: &[f64],
    ) -> Result<HilleYosidaReport> {
        hille_yosida_check(self, omega, bound, k_max, lambda_samples)
    }
}

/// A factored shifted system `lambda G + K`.
pub struct Resolvent<'a> {
    op: &'a FormOperator,
    lu: LU<C64, Dyn, Dyn>,
}

impl Resolvent<'_> {
    /// Coefficients `(lambda G + K)^{-1} r` for a right-hand side in form coordinates.
    pub fn solve_coefficients(&self, rhs: &CVec) -> Result<CVec> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::SingularSystem("resolvent solve failed".into()))
    }

    pub fn apply(&self, f: &CVec) -> Result<CVec> {
        if f.len() != self.op.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} in ambient dimension {}",
                f.len(),
                self.op.ambient_dim()
            )));
        }
        let b = self.op.basis.columns();
        let c = self.solve_coefficients(&(b.adjoint() * f))?;
        let out = b * c;
        if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SingularSystem("non-finite resolvent".into()));
        }
        Ok(out)
    }
}

/// The operator of the real part `(a(u,v) + conj a(v,u)) / 2`.
pub fn real_part_operator(op: &FormOperator) -> FormOperator {
    let mut out = op.clone();
    out.stiffness = hermitian_part(&op.stiffness);
    out.symmetric = true;
    out.sector = OnceLock::new();
    out
}

/// Vertex and semiangle of a form.
///
/// Symmetric forms get the lowest eigenvalue of the pencil `(Re K, G)` as
/// vertex and a floor semiangle. Otherwise the vertex is `0` when the real
/// part is coercive and `lambda_min - 1` if not, and `tan(theta)` is the
/// spectral radius of `L^{-1} S L^{-*}` where `S` is the skew part and
/// `L L* = Re K - vertex G`. The estimate is certified on random unit vectors.
pub fn estimate_sector(op: &FormOperator) -> Result<SectorEstimate> {
    let k = op.stiffness();
    if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NotSectorial("non-finite stiffness".into()));
    }
    let h = hermitian_part(k);
    let lambda_min = op.real_part_spectrum().first().copied().unwrap_or(0.0);
    let scale = k.norm().max(1.0);
    let (vertex, mut tan_theta) = if op.is_symmetric() {
        (lambda_min, SEMIANGLE_FLOOR.tan())
    } else {
        let vertex = if lambda_min > 0.0 { 0.0 } else { lambda_min - 1.0 };
        let shifted = &h - op.gram() * real(vertex);
        let l = cholesky_guarded(&shifted)
            .map_err(|_| Error::NotSectorial("shifted real part not positive definite".into()))?;
        let s = skew_part_hermitian(k);
        let reduced = reduce_congruence(&s, &l);
        let (vals, _) = hermitian_eigh(&reduced);
        let radius = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        (vertex, radius.max(SEMIANGLE_FLOOR.tan()))
    };

    // Certification on random unit vectors of V.
    let m = op.form_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ec7_0a11);
    let tol = 1e-10 * scale;
    for _ in 0..SECTOR_SAMPLES {
        let x = random_complex_vector(&mut rng, m);
        let norm2 = (x.adjoint() * op.gram() * &x)[(0, 0)].re;
        if norm2 <= 0.0 {
            continue;
        }
        let a = op.form_value(&x, &x) / norm2;
        let re = a.re - vertex;
        let im = a.im.abs();
        if im > tan_theta * re + tol {
            if re <= 0.0 {
                return Err(Error::NotSectorial(format!(
                    "sample with Re a(u) - vertex = {re:.3e} and |Im a(u)| = {im:.3e}"
                )));
            }
            tan_theta = im / re;
        }
    }
    let semiangle = tan_theta.atan();
    if semiangle >= std::f64::consts::FRAC_PI_2 - 1e-9 {
        return Err(Error::NotSectorial(format!("semiangle {semiangle} too close to pi/2")));
    }
    Ok(SectorEstimate {
        vertex,
        semiangle,
        shift: (1.0 - vertex).max(0.0),
    })
}

/// Operator-norm tolerance and iteration cap for the Hille–Yosida sampling.
pub const HY_POWER_TOL: f64 = 1e-8;
pub const HY_POWER_MAX_ITER: usize = 500;

pub fn hille_yosida_check(
    op: &FormOperator,
    omega: f64,
    bound: f64,
    k_max: usize,
    lambda_samples: &[f64],
) -> Result<HilleYosidaReport> {
    if let Some(&bad) = lambda_samples.iter().find(|&&l| l <= omega) {
        return Err(Error::InvalidArgument(format!(
            "lambda sample {bad} must exceed omega = {omega}"
        )));
    }
    let m = op.reduced_generator();
    let dim = m.nrows();
    let mut report = HilleYosidaReport {
        max_value: 0.0,
        worst_k: 0,
        worst_lambda: f64::NAN,
        bound,
        passed: true,
    };
    for &lambda in lambda_samples {
        let shifted = &m + CMat::identity(dim, dim) * real(lambda);
        let lu = shifted.clone().lu();
        let lu_adj = shifted.adjoint().lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem(format!("lambda I + A singular at {lambda}")));
        }
        let factor = real(lambda - omega);
        for k in 1..=k_max {
            let apply = |x: &CVec| {
                let mut y = x.clone();
                for _ in 0..k {
                    y = lu.solve(&y).expect("invertible") * factor;
                }
                y
            };
            let apply_adj = |x: &CVec| {
                let mut y = x.clone();
                for _ in 0..k {
                    y = lu_adj.solve(&y).expect("invertible") * factor.conj();
                }
                y
            };
            let value = power_norm(dim, apply, apply_adj, HY_POWER_TOL, HY_POWER_MAX_ITER);
            if value > report.max_value {
                report.max_value = value;
                report.worst_k = k;
                report.worst_lambda = lambda;
            }
        }
    }
    report.passed = report.max_value <= bound * (1.0 + 1e-9);
    Ok(report)
}
