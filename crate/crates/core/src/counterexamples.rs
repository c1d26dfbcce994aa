//! Block-swap (Cayley) family with weak but not strong resolvent
//! convergence, and the square-root identities used with it.

use crate::error::{Error, Result};
use crate::form::{assemble_form_operator, FormOperator, SubspaceBasis};
use crate::linalg::{c64, hermitian_eigh, inner, is_hermitian, real, sqrtm_hermitian, sqrtm_schur, CMat, CVec, C64, ONE};
use crate::par_map;
use crate::quadrature::gauss_legendre_on;
use crate::trace::ConvergenceTrace;

/// `U` swaps coordinate blocks `[0, n)` and `[n, 2n)` and fixes the rest;
/// `V = (1 - 1/n) U` and `A = (I + V)(I - V)^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSwapFamily {
    pub n: usize,
    pub ambient_dim: usize,
    /// `perm[i]` is the coordinate sent to position `i`: `(U x)_i = x_{perm[i]}`.
    perm: Vec<usize>,
}

impl BlockSwapFamily {
    /// `1 - 1/n`.
    pub fn v(&self) -> f64 {
        1.0 - 1.0 / self.n as f64
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn apply_u(&self, x: &CVec) -> CVec {
        CVec::from_iterator(x.len(), self.perm.iter().map(|&j| x[j]))
    }

    pub fn u_matrix(&self) -> CMat {
        let mut u = CMat::zeros(self.ambient_dim, self.ambient_dim);
        for (i, &j) in self.perm.iter().enumerate() {
            u[(i, j)] = ONE;
        }
        u
    }

    /// `A = ((1 + v^2) I + 2 v U) / (1 - v^2)`, using `U^2 = I`.
    pub fn a_matrix(&self) -> CMat {
        let v = self.v();
        let d = 1.0 - v * v;
        let mut a = self.u_matrix() * real(2.0 * v / d);
        for i in 0..self.ambient_dim {
            a[(i, i)] += real((1.0 + v * v) / d);
        }
        a
    }

    /// `A` as the form of the whole truncated space.
    pub fn form_operator(&self) -> Result<FormOperator> {
        assemble_form_operator(SubspaceBasis::identity(self.ambient_dim), self.a_matrix())
    }

    /// Eigenvalues `(1 - v)/(1 + v)` and `(1 + v)/(1 - v)` (plus 1 on the
    /// fixed tail, where `U` acts as the identity).
    pub fn spectrum(&self) -> Vec<f64> {
        hermitian_eigh(&self.a_matrix()).0
    }
}

pub fn block_swap_operator(n: usize, ambient_dim: usize) -> Result<BlockSwapFamily> {
    if n == 0 {
        return Err(Error::InvalidArgument("block size must be positive".into()));
    }
    if ambient_dim < 2 * n {
        return Err(Error::TruncationTooSmall {
            ambient: ambient_dim,
            required: 2 * n,
        });
    }
    let perm = (0..ambient_dim)
        .map(|i| {
            if i < n {
                i + n
            } else if i < 2 * n {
                i - n
            } else {
                i
            }
        })
        .collect::<Vec<_>>();
    let fam = BlockSwapFamily { n, ambient_dim, perm };
    debug_assert!(fam.perm.iter().enumerate().all(|(i, &j)| fam.perm[j] == i));
    Ok(fam)
}

/// `(I + A)^{-1} f = (f - v U f) / 2`.
pub fn cayley_resolvent(family: &BlockSwapFamily, f: &CVec) -> CVec {
    let v = family.v();
    let uf = family.apply_u(f);
    CVec::from_iterator(f.len(), f.iter().zip(uf.iter()).map(|(a, b)| 0.5 * (a - b * v)))
}

/// Residuals of `(I + A_n)^{-1} - I/2` for one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSwapRow {
    pub n: usize,
    /// `max |(((I + A_n)^{-1} - I/2) f, g)|` over probe pairs.
    pub wot_residual: f64,
    /// `max ||((I + A_n)^{-1} - I/2) f||` over probes.
    pub sot_residual: f64,
    /// `(1 - 1/n) / 2 * max ||f||`.
    pub formula_value: f64,
    /// Closed form against a dense solve of the assembled `A_n`.
    pub assembled_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakNotStrongReport {
    pub support: usize,
    pub ambient_dim: usize,
    pub rows: Vec<BlockSwapRow>,
}

impl WeakNotStrongReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,wot_residual,sot_residual,formula_value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.n,
                crate::trace::fmt_value(r.wot_residual),
                crate::trace::fmt_value(r.sot_residual),
                crate::trace::fmt_value(r.formula_value)
            ));
        }
        out
    }

    pub fn to_trace(&self) -> Result<ConvergenceTrace> {
        let mut t = ConvergenceTrace::new(
            "block_swap",
            "n",
            self.rows.iter().map(|r| r.n as f64).collect(),
        );
        t.param("support", self.support);
        t.param("ambient_dim", self.ambient_dim);
        t.param("lambda", 1);
        t.param(
            "note",
            "WOT vanishes exactly only for probes supported in the first support coordinates",
        );
        t.insert("RESOLVENT_WOT", self.rows.iter().map(|r| r.wot_residual).collect())?;
        t.insert("RESOLVENT_SOT", self.rows.iter().map(|r| r.sot_residual).collect())?;
        t.insert("FORMULA", self.rows.iter().map(|r| r.formula_value).collect())?;
        Ok(t)
    }
}

/// Block-swap residuals at `lambda = 1` for each `n`, with probes that
/// must live in the first `support` coordinates.
pub fn weak_not_strong_experiment(
    n_list: &[usize],
    support: usize,
    ambient_dim: usize,
    probes: &[CVec],
) -> Result<WeakNotStrongReport> {
    let min_n = n_list.iter().copied().min().ok_or_else(|| Error::InvalidArgument("empty n list".into()))?;
    if min_n <= support {
        return Err(Error::ProbeSupportTooLarge { support, min_n });
    }
    for p in probes {
        if p.len() != ambient_dim {
            return Err(Error::DimensionMismatch(format!("probe of length {} in dimension {ambient_dim}", p.len())));
        }
        if p.iter().skip(support).any(|z| *z != C64::new(0.0, 0.0)) {
            return Err(Error::SupportViolation(format!("probe not supported in the first {support} coordinates")));
        }
    }
    let rows = par_map(n_list, |&n| -> Result<BlockSwapRow> {
        let fam = block_swap_operator(n, ambient_dim)?;
        let op = fam.form_operator()?;
        let mut wot: f64 = 0.0;
        let mut sot: f64 = 0.0;
        let mut fmax: f64 = 0.0;
        let mut dev: f64 = 0.0;
        for f in probes {
            let r = cayley_resolvent(&fam, f);
            let assembled = op.resolvent_apply(ONE, f)?;
            dev = dev.max((&r - &assembled).norm());
            let diff = CVec::from_iterator(f.len(), r.iter().zip(f.iter()).map(|(a, b)| a - b * 0.5));
            sot = sot.max(diff.norm());
            fmax = fmax.max(f.norm());
            for g in probes {
                wot = wot.max(inner(&diff, g).norm());
            }
        }
        Ok(BlockSwapRow {
            n,
            wot_residual: wot,
            sot_residual: sot,
            formula_value: 0.5 * fam.v() * fmax,
            assembled_deviation: dev,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(WeakNotStrongReport {
        support,
        ambient_dim,
        rows,
    })
}

/// Principal square root: spectral calculus for Hermitian input, Schur
/// recurrence otherwise.
pub fn sqrt_operator(c: &CMat) -> Result<CMat> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch("square matrix required".into()));
    }
    if is_hermitian(c, 1e-13) {
        let (vals, _) = hermitian_eigh(c);
        if vals.first().is_some_and(|&l| l < -1e-12 * vals.last().unwrap().abs().max(1.0)) {
            return Err(Error::InvalidArgument("Hermitian matrix is not positive semidefinite".into()));
        }
        Ok(sqrtm_hermitian(c))
    } else {
        sqrtm_schur(c)
    }
}

/// Form operator on the identity basis whose stiffness is `C^{1/2}`.
pub fn sqrt_form_operator(c: &CMat) -> Result<FormOperator> {
    assemble_form_operator(SubspaceBasis::identity(c.nrows()), sqrt_operator(c)?)
}

fn dense_solve(a: CMat, rhs: &CVec) -> Result<CVec> {
    a.lu()
        .solve(rhs)
        .ok_or_else(|| Error::SingularSystem("dense LU failed".into()))
}

/// Quadrature of `(1/pi) int_0^inf sqrt(mu)/(lambda^2 + mu) (mu + C)^{-1} f dmu`
/// after `mu = lambda^2 tan^2 s`.
fn kato_quadrature(c: &CMat, lambda: f64, nodes: usize, f: &CVec) -> Result<CVec> {
    let n = c.nrows();
    let rule = gauss_legendre_on(nodes, 0.0, std::f64::consts::FRAC_PI_2);
    let mut acc = CVec::zeros(n);
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        let (sn, cs) = s.sin_cos();
        let mut m = c * real(cs * cs);
        for i in 0..n {
            m[(i, i)] += real(lambda * lambda * sn * sn);
        }
        let x = dense_solve(m, f)?;
        acc += x * real(w * 2.0 * lambda * sn * sn / std::f64::consts::PI);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatoCheck {
    /// `max_f ||(lambda + C^{1/2})^{-1} f - quadrature|| / ||f||`.
    pub residual: f64,
    /// Same residual with half the nodes.
    pub coarse_residual: f64,
}

/// Kato's integral for `(lambda + C^{1/2})^{-1}` against the direct solve,
/// on each probe.
pub fn kato_sqrt_resolvent_check(c: &CMat, lambda: f64, nodes: usize, probes: &[CVec]) -> Result<KatoCheck> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if nodes < 2 {
        return Err(Error::InvalidArgument("at least 2 quadrature nodes".into()));
    }
    let a = sqrt_operator(c)?;
    let mut shifted = a.clone();
    for i in 0..a.nrows() {
        shifted[(i, i)] += real(lambda);
    }
    let mut residual: f64 = 0.0;
    let mut coarse_residual: f64 = 0.0;
    for f in probes {
        if f.len() != c.nrows() {
            return Err(Error::DimensionMismatch(format!("probe {} vs matrix {}", f.len(), c.nrows())));
        }
        let direct = dense_solve(shifted.clone(), f)?;
        let fine = kato_quadrature(c, lambda, nodes, f)?;
        let coarse = kato_quadrature(c, lambda, nodes / 2, f)?;
        let scale = f.norm().max(f64::MIN_POSITIVE);
        residual = residual.max((&direct - &fine).norm() / scale);
        coarse_residual = coarse_residual.max((&direct - &coarse).norm() / scale);
        let change = (&fine - &coarse).norm() / direct.norm().max(f64::MIN_POSITIVE);
        if change > 0.1 {
            return Err(Error::QuadratureUnstable {
                quantity: "Kato square-root integral".into(),
                relative_change: change,
            });
        }
    }
    Ok(KatoCheck {
        residual,
        coarse_residual,
    })
}

/// `max_f ||(I + C)^{-1} f - (iI + A)^{-1}(-iI + A)^{-1} f|| / ||f||` with
/// `A = C^{1/2}`.
pub fn sqrt_factorization_check(c: &CMat, probes: &[CVec]) -> Result<f64> {
    let n = c.nrows();
    let a = sqrt_operator(c)?;
    let shift = |z: C64, m: &CMat| {
        let mut out = m.clone();
        for i in 0..n {
            out[(i, i)] += z;
        }
        out
    };
    let i_plus_c = shift(ONE, c);
    let plus = shift(c64(0.0, 1.0), &a);
    let minus = shift(c64(0.0, -1.0), &a);
    let mut worst: f64 = 0.0;
    for f in probes {
        let lhs = dense_solve(i_plus_c.clone(), f)?;
        let inner_solve = dense_solve(minus.clone(), f)?;
        let rhs = dense_solve(plus.clone(), &inner_solve)?;
        worst = worst.max((lhs - rhs).norm() / f.norm().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}
