//! Periodic homogenization: cell problems, the homogenized tensor, the
//! `epsilon`-scaled operators and the convergence of their resolvents and
//! semigroups, plus the oscillatory averaging check.
//!
//! The cell `[0,1)^d` carries a coefficient tensor per cell element
//! (sampled at element centers). Correctors are periodic P1/Q1 functions
//! solved by preconditioned CG on the mean-zero subspace, with the
//! constant-coefficient periodic operator inverted by FFT as preconditioner.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fem::{self, Grid1d, Grid2d};
use crate::form::{assemble_form_operator, FormOperator, SubspaceBasis};
use crate::linalg::{hermitian_eigh, real, BandedMatrix, CMat, CVec, C64, ZERO};
use crate::par_map;
use crate::semigroup::SemigroupEvaluator;
use crate::trace::ConvergenceTrace;

/// Real symmetric 2x2 tensor; 1D fields use entry `[0][0]`.
pub type RealTensor = [[f64; 2]; 2];

pub const CG_TOL: f64 = 1e-13;
pub const CG_MAX_ITER: usize = 5000;
/// Grid points required per period.
pub const POINTS_PER_PERIOD: f64 = 16.0;

/// Coefficient samples `c_kl` on the elements of a uniform cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCoefficientField {
    pub dim: usize,
    /// Elements per axis.
    pub m: usize,
    samples: Vec<RealTensor>,
    pub symmetric: bool,
    pub mu: f64,
}

fn min_eig(c: &RealTensor, dim: usize) -> f64 {
    if dim == 1 {
        return c[0][0];
    }
    let tr = 0.5 * (c[0][0] + c[1][1]);
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    tr - (tr * tr - det).max(0.0).sqrt()
}

impl PeriodicCoefficientField {
    pub fn new(dim: usize, m: usize, samples: Vec<RealTensor>) -> Result<Self> {
        if !(dim == 1 || dim == 2) || m < 2 {
            return Err(Error::InvalidArgument(format!("field of dimension {dim} with {m} cells")));
        }
        if samples.len() != m.pow(dim as u32) {
            return Err(Error::DimensionMismatch(format!("{} samples for {m}^{dim} cells", samples.len())));
        }
        let symmetric = samples.iter().all(|c| (c[0][1] - c[1][0]).abs() <= 1e-14 * (c[0][0].abs() + c[1][1].abs()));
        if !symmetric {
            return Err(Error::InvalidArgument("coefficients must satisfy c_kl = c_lk".into()));
        }
        let mu = samples.iter().map(|c| min_eig(c, dim)).fold(f64::INFINITY, f64::min);
        if !(mu > 0.0) {
            return Err(Error::InvalidArgument(format!("field not uniformly elliptic (mu = {mu})")));
        }
        Ok(Self {
            dim,
            m,
            samples,
            symmetric,
            mu,
        })
    }

    /// Scalar 1D field from a function of the cell coordinate.
    pub fn from_fn_1d<F: Fn(f64) -> f64>(m: usize, c: F) -> Result<Self> {
        let samples = (0..m)
            .map(|i| {
                let v = c((i as f64 + 0.5) / m as f64);
                [[v, 0.0], [0.0, 0.0]]
            })
            .collect();
        Self::new(1, m, samples)
    }

    pub fn from_fn_2d<F: Fn(f64, f64) -> RealTensor>(m: usize, c: F) -> Result<Self> {
        let samples = (0..m * m)
            .map(|e| c(((e % m) as f64 + 0.5) / m as f64, ((e / m) as f64 + 0.5) / m as f64))
            .collect();
        Self::new(2, m, samples)
    }

    /// `lo` on `[0, 1/2)`, `hi` on `[1/2, 1)`.
    pub fn piecewise_1d(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::from_fn_1d(m, |x| if x < 0.5 { lo } else { hi })
    }

    /// `2 + sin(2 pi x)`.
    pub fn sinusoidal_1d(m: usize) -> Result<Self> {
        Self::from_fn_1d(m, |x| 2.0 + (2.0 * std::f64::consts::PI * x).sin())
    }

    /// Laminate `diag(c1(x1), c2(x1))` with both entries piecewise `{lo, hi}`.
    pub fn laminate_2d(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::from_fn_2d(m, |x, _| {
            let v = if x < 0.5 { lo } else { hi };
            [[v, 0.0], [0.0, v]]
        })
    }

    pub fn constant(dim: usize, m: usize, c: RealTensor) -> Result<Self> {
        Self::new(dim, m, vec![c; m.pow(dim as u32)])
    }

    /// Scalar isotropic field from CSV: one value per cell, rows of the cell
    /// grid in row-major order (a single row or column in 1D).
    pub fn from_csv(dim: usize, text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::InvalidArgument(format!("bad CSV value {v:?}: {e}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = match dim {
            1 => values.len(),
            _ => {
                let m = rows.len();
                if rows.iter().any(|r| r.len() != m) {
                    return Err(Error::DimensionMismatch("2D field CSV must be square".into()));
                }
                m
            }
        };
        let samples = values.iter().map(|&v| [[v, 0.0], [0.0, v]]).collect();
        Self::new(dim, m, samples)
    }

    pub fn samples(&self) -> &[RealTensor] {
        &self.samples
    }

    /// Tensor at a point of the unit cell (periodically wrapped).
    pub fn at(&self, x: f64, y: f64) -> RealTensor {
        let idx = |t: f64| (((t - t.floor()) * self.m as f64) as usize).min(self.m - 1);
        if self.dim == 1 {
            self.samples[idx(x)]
        } else {
            self.samples[idx(y) * self.m + idx(x)]
        }
    }

    fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    fn mean(&self) -> RealTensor {
        let n = self.samples.len() as f64;
        let mut out = [[0.0; 2]; 2];
        for c in &self.samples {
            for k in 0..2 {
                for l in 0..2 {
                    out[k][l] += c[k][l] / n;
                }
            }
        }
        out
    }

    /// Harmonic mean of the 1D coefficient, `(int 1/c)^{-1}`.
    pub fn harmonic_mean(&self) -> f64 {
        let n = self.samples.len() as f64;
        1.0 / self.samples.iter().map(|c| 1.0 / c[0][0]).sum::<f64>() * n
    }

    pub fn arithmetic_mean(&self) -> RealTensor {
        self.mean()
    }
}

/// Periodic corrector `chi_j` at the cell nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProblemSolution {
    pub direction: usize,
    pub corrector: Vec<f64>,
    /// `||A chi + b|| / ||b||` of the assembled system.
    pub residual: f64,
    pub iterations: usize,
}

impl CellProblemSolution {
    pub fn mean(&self) -> f64 {
        self.corrector.iter().sum::<f64>() / self.corrector.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.corrector.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Periodic stiffness of the cell field, applied matrix-free.
struct CellOperator<'a> {
    field: &'a PeriodicCoefficientField,
    /// Reference Q1 element matrices for unit tensors `e_k e_l^T`.
    reference: [[[[f64; 4]; 4]; 2]; 2],
}

impl<'a> CellOperator<'a> {
    fn new(field: &'a PeriodicCoefficientField) -> Self {
        let mut reference = [[[[0.0; 4]; 4]; 2]; 2];
        for k in 0..2 {
            for l in 0..2 {
                let unit = move |_: f64, _: f64| {
                    let mut t = [[ZERO; 2]; 2];
                    t[k][l] = real(1.0);
                    t
                };
                let e = fem::q1_element((0.0, 0.0), 1.0, unit, ZERO, 2);
                for a in 0..4 {
                    for b in 0..4 {
                        reference[k][l][a][b] = e[a][b].re;
                    }
                }
            }
        }
        Self { field, reference }
    }

    fn nodes(&self) -> usize {
        self.field.m.pow(self.field.dim as u32)
    }

    fn element_nodes(&self, e: usize) -> ([usize; 4], usize) {
        let m = self.field.m;
        if self.field.dim == 1 {
            ([e, (e + 1) % m, 0, 0], 2)
        } else {
            let (i, j) = (e % m, e / m);
            let (i1, j1) = ((i + 1) % m, (j + 1) % m);
            ([j * m + i, j * m + i1, j1 * m + i, j1 * m + i1], 4)
        }
    }

    fn element_matrix(&self, e: usize) -> [[f64; 4]; 4] {
        let c = &self.field.samples[e];
        let mut k = [[0.0; 4]; 4];
        if self.field.dim == 1 {
            let s = c[0][0] / self.field.h();
            k[0][0] = s;
            k[1][1] = s;
            k[0][1] = -s;
            k[1][0] = -s;
            return k;
        }
        for kk in 0..2 {
            for l in 0..2 {
                for a in 0..4 {
                    for b in 0..4 {
                        k[a][b] += c[kk][l] * self.reference[kk][l][a][b];
                    }
                }
            }
        }
        k
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for e in 0..self.field.samples.len() {
            let (ids, n) = self.element_nodes(e);
            let k = self.element_matrix(e);
            for a in 0..n {
                let mut s = 0.0;
                for b in 0..n {
                    s += k[a][b] * x[ids[b]];
                }
                y[ids[a]] += s;
            }
        }
        y
    }

    /// `b_v = -int (c e_j) . grad v` for every nodal test function `v`.
    fn load(&self, j: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.nodes()];
        let h = self.field.h();
        // int over an element of the basis derivatives, per direction
        let d1 = [[-1.0, 1.0, 0.0, 0.0], [0.0; 4]];
        let d2 = [[-0.5 * h, 0.5 * h, -0.5 * h, 0.5 * h], [-0.5 * h, -0.5 * h, 0.5 * h, 0.5 * h]];
        for e in 0..self.field.samples.len() {
            let c = &self.field.samples[e];
            let (ids, n) = self.element_nodes(e);
            let d = if self.field.dim == 1 { &d1 } else { &d2 };
            for a in 0..n {
                let mut s = 0.0;
                for l in 0..self.field.dim {
                    s += c[j][l] * d[l][a];
                }
                b[ids[a]] -= s;
            }
        }
        b
    }
}

/// FFT inverse of the constant-coefficient periodic operator.
struct FftPreconditioner {
    m: usize,
    dim: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    inverse_symbol: Vec<f64>,
}

impl FftPreconditioner {
    fn new(field: &PeriodicCoefficientField) -> Self {
        let m = field.m;
        let h = field.h();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let ifft = planner.plan_fft_inverse(m);
        let c = field.mean();
        let theta = |p: usize| 2.0 * std::f64::consts::PI * p as f64 / m as f64;
        let s = |p: usize| (2.0 - 2.0 * theta(p).cos()) / h;
        let mass = |p: usize| h / 6.0 * (4.0 + 2.0 * theta(p).cos());
        let inverse_symbol = if field.dim == 1 {
            (0..m)
                .map(|p| if p == 0 { 0.0 } else { 1.0 / (c[0][0] * s(p)) })
                .collect()
        } else {
            (0..m * m)
                .map(|idx| {
                    let (p, q) = (idx % m, idx / m);
                    if idx == 0 {
                        0.0
                    } else {
                        1.0 / (c[0][0] * s(p) * mass(q) + c[1][1] * mass(p) * s(q))
                    }
                })
                .collect()
        };
        Self {
            m,
            dim: field.dim,
            fft,
            ifft,
            inverse_symbol,
        }
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        if self.dim == 1 {
            plan.process(data);
            return;
        }
        for row in data.chunks_mut(m) {
            plan.process(row);
        }
        let mut col = vec![ZERO; m];
        for i in 0..m {
            for j in 0..m {
                col[j] = data[j * m + i];
            }
            plan.process(&mut col);
            for j in 0..m {
                data[j * m + i] = col[j];
            }
        }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut data: Vec<C64> = r.iter().map(|&v| real(v)).collect();
        self.transform(&mut data, &self.fft);
        for (z, s) in data.iter_mut().zip(&self.inverse_symbol) {
            *z *= *s;
        }
        self.transform(&mut data, &self.ifft);
        let scale = 1.0 / data.len() as f64;
        data.iter().map(|z| z.re * scale).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Solve the cell problem in direction `j`:
/// `int c grad chi_j . grad v = -int (c e_j) . grad v` for all periodic `v`,
/// with `chi_j` of zero mean.
pub fn solve_cell_problem(field: &PeriodicCoefficientField, j: usize) -> Result<CellProblemSolution> {
    if j >= field.dim {
        return Err(Error::InvalidArgument(format!("direction {j} in dimension {}", field.dim)));
    }
    let op = CellOperator::new(field);
    let pre = FftPreconditioner::new(field);
    let mut b = op.load(j);
    remove_mean(&mut b);
    let b_norm = dot(&b, &b).sqrt();
    let n = b.len();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CellProblemSolution {
            direction: j,
            corrector: x,
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut r = b.clone();
    let mut z = pre.apply(&r);
    remove_mean(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < CG_MAX_ITER {
        iterations += 1;
        let ap = op.apply(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= CG_TOL {
            break;
        }
        z = pre.apply(&r);
        remove_mean(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    remove_mean(&mut x);
    // true residual of the assembled system
    let ax = op.apply(&x);
    let full_b = op.load(j);
    let res: f64 = ax.iter().zip(&full_b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / b_norm;
    if rel > CG_TOL && res > 1e-10 {
        return Err(Error::SolverStagnation {
            iterations,
            residual: res,
        });
    }
    Ok(CellProblemSolution {
        direction: j,
        corrector: x,
        residual: res,
        iterations,
    })
}

/// All correctors, directions solved in parallel.
pub fn solve_cell_problems(field: &PeriodicCoefficientField) -> Result<Vec<CellProblemSolution>> {
    let dirs: Vec<usize> = (0..field.dim).collect();
    par_map(&dirs, |&j| solve_cell_problem(field, j)).into_iter().collect()
}

/// Effective tensor `c_hat` and its ellipticity `mu'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogenizedTensor {
    pub dim: usize,
    pub entries: RealTensor,
    pub mu_prime: f64,
}

impl HomogenizedTensor {
    pub fn scalar(&self) -> f64 {
        self.entries[0][0]
    }
}

/// Mean gradient of the corrector on element `e`.
fn element_gradient(field: &PeriodicCoefficientField, chi: &[f64], e: usize) -> [f64; 2] {
    let m = field.m;
    let h = field.h();
    if field.dim == 1 {
        return [(chi[(e + 1) % m] - chi[e]) / h, 0.0];
    }
    let (i, j) = (e % m, e / m);
    let (i1, j1) = ((i + 1) % m, (j + 1) % m);
    let v = |a: usize, b: usize| chi[b * m + a];
    [
        0.5 * ((v(i1, j) - v(i, j)) + (v(i1, j1) - v(i, j1))) / h,
        0.5 * ((v(i, j1) - v(i, j)) + (v(i1, j1) - v(i1, j))) / h,
    ]
}

/// `c_hat_kl = int c_kl + sum_j int c_kj d_j chi_l`, i.e. the flux average
/// `int (c (e_l + grad chi_l))_k`.
pub fn homogenized_tensor(
    field: &PeriodicCoefficientField,
    correctors: &[CellProblemSolution],
) -> Result<HomogenizedTensor> {
    let d = field.dim;
    if correctors.len() != d || correctors.iter().any(|c| c.corrector.len() != field.m.pow(d as u32)) {
        return Err(Error::DimensionMismatch("one corrector per direction on the field grid".into()));
    }
    let weight = 1.0 / field.samples.len() as f64;
    let mut entries = [[0.0; 2]; 2];
    for (e, c) in field.samples.iter().enumerate() {
        for (l, sol) in correctors.iter().enumerate() {
            let g = element_gradient(field, &sol.corrector, e);
            for k in 0..d {
                let mut flux = c[k][l];
                for jj in 0..d {
                    flux += c[k][jj] * g[jj];
                }
                entries[k][l] += weight * flux;
            }
        }
    }
    if d == 2 {
        let asym = (entries[0][1] - entries[1][0]).abs();
        if asym > 1e-8 * (entries[0][0].abs() + entries[1][1].abs()) {
            return Err(Error::NotPositiveDefinite(format!("asymmetric tensor (defect {asym:.3e})")));
        }
        let s = 0.5 * (entries[0][1] + entries[1][0]);
        entries[0][1] = s;
        entries[1][0] = s;
    }
    let mu_prime = min_eig(&entries, d);
    if !(mu_prime > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {mu_prime:.3e}")));
    }
    Ok(HomogenizedTensor { dim: d, entries, mu_prime })
}

/// Cell problems and tensor in one step.
pub fn homogenize(field: &PeriodicCoefficientField) -> Result<(Vec<CellProblemSolution>, HomogenizedTensor)> {
    let sols = solve_cell_problems(field)?;
    let t = homogenized_tensor(field, &sols)?;
    Ok((sols, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Interval `(0, L)` or square `(0, L)^2` with `cells` elements per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub dim: usize,
    pub length: f64,
    pub cells: usize,
}

impl DomainSpec {
    pub fn interval(length: f64, cells: usize) -> Self {
        Self { dim: 1, length, cells }
    }

    pub fn square(length: f64, cells: usize) -> Self {
        Self { dim: 2, length, cells }
    }

    pub fn h(&self) -> f64 {
        self.length / self.cells as f64
    }

    /// Smallest grid giving `POINTS_PER_PERIOD` points per period of
    /// `epsilon`.
    pub fn resolving(dim: usize, length: f64, epsilon: f64) -> Self {
        let cells = (length * POINTS_PER_PERIOD / epsilon).round() as usize;
        Self { dim, length, cells }
    }
}

/// Divergence-form operator on a domain grid in lumped-mass coordinates:
/// ambient entries are `sqrt(w_i)` times nodal values, with `w_i` the
/// lumped mass weights divided by `h^d`.
#[derive(Debug, Clone)]
pub struct ScaledOperator {
    pub domain: DomainSpec,
    pub boundary: Boundary,
    /// FE stiffness divided by `h^d`.
    pub stiffness: BandedMatrix,
    /// Unit-coefficient stiffness, for `||grad u||^2`.
    pub gradient: BandedMatrix,
    pub weights: Vec<f64>,
    /// Node coordinates of the unknowns.
    pub nodes: Vec<(f64, f64)>,
}

impl ScaledOperator {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn norm_scale(&self) -> f64 {
        self.domain.h().powi(self.domain.dim as i32).sqrt()
    }

    /// `L2` norm of an ambient vector.
    pub fn norm(&self, v: &CVec) -> f64 {
        self.norm_scale() * v.norm()
    }

    /// Ambient vector of nodal samples of `f`.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> CVec {
        CVec::from_iterator(
            self.dim(),
            self.nodes.iter().zip(&self.weights).map(|(&(x, y), w)| real(w.sqrt() * f(x, y))),
        )
    }

    /// `(lambda + A)^{-1} f` by banded LU.
    pub fn resolvent_apply(&self, lambda: C64, f: &CVec) -> Result<CVec> {
        if f.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("vector {} vs operator {}", f.len(), self.dim())));
        }
        let mut shifted = self.stiffness.clone();
        for (i, w) in self.weights.iter().enumerate() {
            shifted.add(i, i, lambda * *w);
        }
        let rhs: Vec<C64> = f.iter().zip(&self.weights).map(|(v, w)| v * w.sqrt()).collect();
        let x = shifted.solve(&rhs)?;
        Ok(CVec::from_iterator(
            x.len(),
            x.iter().zip(&self.weights).map(|(v, w)| v * w.sqrt()),
        ))
    }

    /// `||grad u||^2` of an ambient vector.
    pub fn gradient_norm_sq(&self, u: &CVec) -> f64 {
        let c: Vec<C64> = u.iter().zip(&self.weights).map(|(v, w)| v / w.sqrt()).collect();
        self.gradient.form(&c, &c).re * self.domain.h().powi(self.domain.dim as i32)
    }

    /// Dense form operator (basis `diag(sqrt w)`), for moderate sizes.
    pub fn form_operator(&self) -> Result<FormOperator> {
        if self.dim() > 4096 {
            return Err(Error::InvalidArgument(format!(
                "dense form operator requested for {} unknowns",
                self.dim()
            )));
        }
        let b = CMat::from_diagonal(&CVec::from_iterator(self.dim(), self.weights.iter().map(|w| real(w.sqrt()))));
        assemble_form_operator(SubspaceBasis::new(b)?, self.stiffness.to_dense())
    }
}

fn domain_maps(domain: &DomainSpec, boundary: Boundary) -> (Vec<Option<usize>>, Vec<f64>, Vec<(f64, f64)>) {
    let n = domain.cells;
    match (domain.dim, boundary) {
        (1, Boundary::Dirichlet) => {
            let g = Grid1d { cells: n, x0: 0.0, length: domain.length };
            let map = g.interior_map();
            let nodes = (1..n).map(|i| (g.node(i), 0.0)).collect();
            (map, vec![1.0; n - 1], nodes)
        }
        (1, Boundary::Neumann) => {
            let g = Grid1d { cells: n, x0: 0.0, length: domain.length };
            let w = (0..=n).map(|i| if i == 0 || i == n { 0.5 } else { 1.0 }).collect();
            let nodes = (0..=n).map(|i| (g.node(i), 0.0)).collect();
            (g.full_map(), w, nodes)
        }
        (_, Boundary::Dirichlet) => {
            let g = Grid2d { nx: n, ny: n, h: domain.h(), origin: (0.0, 0.0) };
            let nodes = (1..n).flat_map(|j| (1..n).map(move |i| (i, j))).map(|(i, j)| g.node(i, j)).collect();
            (g.interior_map(), vec![1.0; (n - 1) * (n - 1)], nodes)
        }
        (_, Boundary::Neumann) => {
            let g = Grid2d { nx: n, ny: n, h: domain.h(), origin: (0.0, 0.0) };
            let edge = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
            let w = (0..=n).flat_map(|j| (0..=n).map(move |i| edge(i) * edge(j))).collect();
            let nodes = (0..=n).flat_map(|j| (0..=n).map(move |i| (i, j))).map(|(i, j)| g.node(i, j)).collect();
            (g.full_map(), w, nodes)
        }
    }
}

fn assemble_scaled<F>(domain: &DomainSpec, boundary: Boundary, coeff: F) -> ScaledOperator
where
    F: Fn(f64, f64) -> RealTensor,
{
    let (map, weights, nodes) = domain_maps(domain, boundary);
    let h = domain.h();
    let (stiffness, gradient) = if domain.dim == 1 {
        let g = Grid1d { cells: domain.cells, x0: 0.0, length: domain.length };
        // element-constant coefficients: sample at the element midpoint
        let k = fem::assemble(
            g.cells,
            fem::map_dim(&map),
            &map,
            |e| g.element_nodes(e).to_vec(),
            |e| {
                let c = coeff(g.node(e) + 0.5 * h, 0.0)[0][0] / h;
                vec![real(c), real(-c), real(-c), real(c)]
            },
        );
        let unit = fem::assemble_p1(&g, &map, |_| real(1.0), ZERO, ZERO, 2);
        (k, unit)
    } else {
        let g = Grid2d { nx: domain.cells, ny: domain.cells, h, origin: (0.0, 0.0) };
        let k = fem::assemble(
            g.elements(),
            fem::map_dim(&map),
            &map,
            |e| g.element(e).1.to_vec(),
            |e| {
                let (corner, _) = g.element(e);
                let c = coeff(corner.0 + 0.5 * h, corner.1 + 0.5 * h);
                let t = [[real(c[0][0]), real(c[0][1])], [real(c[1][0]), real(c[1][1])]];
                fem::q1_element(corner, h, |_, _| t, ZERO, 2).iter().flatten().copied().collect()
            },
        );
        let unit = fem::assemble_q1(&g, &map, |_, _| fem::isotropic(real(1.0)), ZERO, 2);
        (k, unit)
    };
    let scale = real(1.0 / h.powi(domain.dim as i32));
    let stiffness = BandedMatrix::zeros(stiffness.dim(), stiffness.bandwidths().0, stiffness.bandwidths().1)
        .add_scaled(scale, &stiffness);
    ScaledOperator {
        domain: *domain,
        boundary,
        stiffness,
        gradient,
        weights,
        nodes,
    }
}

/// Operator with coefficients `c(x / epsilon mod 1)`, piecewise constant on
/// the domain elements.
pub fn scaled_operator(
    field: &PeriodicCoefficientField,
    epsilon: f64,
    domain: &DomainSpec,
    boundary: Boundary,
) -> Result<ScaledOperator> {
    if domain.dim != field.dim {
        return Err(Error::DimensionMismatch(format!("field dimension {} vs domain {}", field.dim, domain.dim)));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    if domain.h() > epsilon / POINTS_PER_PERIOD * (1.0 + 1e-12) {
        return Err(Error::CellUnderResolved { h: domain.h(), epsilon });
    }
    Ok(assemble_scaled(domain, boundary, |x, y| field.at(x / epsilon, y / epsilon)))
}

/// Operator with the constant homogenized tensor on the same grid.
pub fn homogenized_operator(tensor: &HomogenizedTensor, domain: &DomainSpec, boundary: Boundary) -> ScaledOperator {
    let c = tensor.entries;
    assemble_scaled(domain, boundary, move |_, _| c)
}

pub const RELATIVE_TAG: &str = "RELATIVE_ERROR";
pub const L2_BOUND_TAG: &str = "L2_BOUND_RATIO";
pub const ENERGY_BOUND_TAG: &str = "ENERGY_BOUND_RATIO";

/// Per-epsilon `||(lambda + A_eps)^{-1} f - (lambda + A_hat)^{-1} f||`, all
/// on one grid resolving the smallest epsilon. The two a-priori bounds are
/// recorded as ratios that must stay at most 1.
pub fn homogenization_experiment(
    field: &PeriodicCoefficientField,
    tensor: &HomogenizedTensor,
    domain: &DomainSpec,
    boundary: Boundary,
    lambda: C64,
    f: &dyn Fn(f64, f64) -> f64,
    epsilons: &[f64],
) -> Result<ConvergenceTrace> {
    if !(lambda.re > 0.0) {
        return Err(Error::InvalidArgument("Re lambda must be > 0".into()));
    }
    let hom = homogenized_operator(tensor, domain, boundary);
    let rhs = hom.sample(f);
    let f_norm = hom.norm(&rhs);
    let u_hat = hom.resolvent_apply(lambda, &rhs)?;
    let u_hat_norm = hom.norm(&u_hat);
    let rows = par_map(epsilons, |&eps| -> Result<[f64; 4]> {
        let op = scaled_operator(field, eps, domain, boundary)?;
        let u = op.resolvent_apply(lambda, &rhs)?;
        let err = op.norm(&(&u - &u_hat));
        let l2_ratio = if f_norm > 0.0 { op.norm(&u) * lambda.re / f_norm } else { 0.0 };
        let energy_ratio = if f_norm > 0.0 {
            field.mu * op.gradient_norm_sq(&u) * lambda.re / (f_norm * f_norm)
        } else {
            0.0
        };
        let rel = if u_hat_norm > 0.0 { err / u_hat_norm } else { err };
        Ok([err, rel, l2_ratio, energy_ratio])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let mut trace = ConvergenceTrace::new("homogenization", "epsilon", epsilons.to_vec());
    trace.param("dimension", domain.dim);
    trace.param("length", domain.length);
    trace.param("cells", domain.cells);
    trace.param("boundary", format!("{boundary:?}"));
    trace.param("lambda", format!("{}{:+}i", lambda.re, lambda.im));
    trace.param("c_hat", format!("{:?}", tensor.entries));
    trace.insert(crate::metrics::MetricKind::ResolventSot.tag(), col(0))?;
    trace.insert(RELATIVE_TAG, col(1))?;
    trace.insert(L2_BOUND_TAG, col(2))?;
    trace.insert(ENERGY_BOUND_TAG, col(3))?;
    Ok(trace)
}

/// Per-epsilon `sup_{t in [delta, T]} ||u_eps(t) - u(t)||` with `u` from the
/// homogenized semigroup. Initial data errors are recorded alongside.
#[allow(clippy::too_many_arguments)]
pub fn parabolic_homogenization_experiment(
    field: &PeriodicCoefficientField,
    tensor: &HomogenizedTensor,
    domain: &DomainSpec,
    boundary: Boundary,
    u0_sequence: &[CVec],
    u0: &CVec,
    delta: f64,
    horizon: f64,
    epsilons: &[f64],
    grid: usize,
) -> Result<ConvergenceTrace> {
    if !(delta > 0.0 && delta <= horizon) {
        return Err(Error::InvalidArgument(format!("need 0 < delta <= T, got {delta}, {horizon}")));
    }
    if u0_sequence.len() != epsilons.len() {
        return Err(Error::DimensionMismatch("one initial datum per epsilon".into()));
    }
    let hom = homogenized_operator(tensor, domain, boundary);
    let reference = SemigroupEvaluator::new(hom.form_operator()?)?;
    let grid = grid.max(2);
    let times: Vec<f64> = (0..grid)
        .map(|k| delta + (horizon - delta) * k as f64 / (grid - 1) as f64)
        .collect();
    let target = reference.trajectory(&times, u0)?;
    let idx: Vec<usize> = (0..epsilons.len()).collect();
    let rows = par_map(&idx, |&k| -> Result<(f64, f64)> {
        let op = scaled_operator(field, epsilons[k], domain, boundary)?;
        let ev = SemigroupEvaluator::new(op.form_operator()?)?;
        let path = ev.trajectory(&times, &u0_sequence[k])?;
        let sup = path
            .iter()
            .zip(&target)
            .map(|(a, b)| op.norm(&(a - b)))
            .fold(0.0, f64::max);
        Ok((sup, op.norm(&(&u0_sequence[k] - u0))))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut trace = ConvergenceTrace::new("homogenization_parabolic", "epsilon", epsilons.to_vec());
    trace.param("dimension", domain.dim);
    trace.param("cells", domain.cells);
    trace.param("boundary", format!("{boundary:?}"));
    trace.param("delta", delta);
    trace.param("T", horizon);
    trace.insert(crate::metrics::MetricKind::SupIntervalStrong.tag(), rows.iter().map(|r| r.0).collect())?;
    trace.insert(crate::domains::INITIAL_DATA_TAG, rows.iter().map(|r| r.1).collect())?;
    Ok(trace)
}

/// `|int tau(x / eps) v_eps(x) dx - (int_cell tau)(int v)|` per epsilon, for a
/// piecewise-constant periodic `tau` (cell samples) and P1 functions `v` on
/// `grid`, integrated exactly over the merged breakpoints.
pub fn oscillatory_average_check(
    tau: &[f64],
    grid: &Grid1d,
    support: (f64, f64),
    v_sequence: &[Vec<f64>],
    v_limit: &[f64],
    epsilons: &[f64],
) -> Result<Vec<f64>> {
    if v_sequence.len() != epsilons.len() {
        return Err(Error::DimensionMismatch("one function per epsilon".into()));
    }
    if tau.is_empty() {
        return Err(Error::InvalidArgument("tau needs at least one sample".into()));
    }
    let tol = 1e-12 * grid.h();
    for v in v_sequence.iter().chain(std::iter::once(&v_limit.to_vec())) {
        if v.len() != grid.nodes() {
            return Err(Error::DimensionMismatch(format!("{} values on {} nodes", v.len(), grid.nodes())));
        }
        for (i, &val) in v.iter().enumerate() {
            let x = grid.node(i);
            if val != 0.0 && (x < support.0 - tol || x > support.1 + tol) {
                return Err(Error::SupportViolation(format!("value {val} at x = {x} outside {support:?}")));
            }
        }
    }
    let tau_mean = tau.iter().sum::<f64>() / tau.len() as f64;
    let limit_integral = p1_integral(grid, v_limit);
    let out = par_map(&(0..epsilons.len()).collect::<Vec<_>>(), |&k| {
        let eps = epsilons[k];
        (oscillatory_integral(tau, eps, grid, &v_sequence[k]) - tau_mean * limit_integral).abs()
    });
    Ok(out)
}

fn p1_integral(grid: &Grid1d, v: &[f64]) -> f64 {
    v.windows(2).map(|p| 0.5 * grid.h() * (p[0] + p[1])).sum()
}

fn oscillatory_integral(tau: &[f64], eps: f64, grid: &Grid1d, v: &[f64]) -> f64 {
    let m = tau.len();
    let piece = eps / m as f64;
    let a = grid.x0;
    let b = grid.x0 + grid.length;
    let h = grid.h();
    let eval_v = |x: f64| {
        let s = ((x - a) / h).clamp(0.0, grid.cells as f64);
        let i = (s.floor() as usize).min(grid.cells - 1);
        let t = s - i as f64;
        v[i] * (1.0 - t) + v[i + 1] * t
    };
    let mut total = 0.0;
    for e in 0..grid.cells {
        let (x0, x1) = (grid.node(e), grid.node(e + 1));
        if v[e] == 0.0 && v[e + 1] == 0.0 {
            continue;
        }
        let mut left = x0;
        let mut k = (x0 / piece).floor() as i64 + 1;
        while left < x1 {
            let right = (k as f64 * piece).min(x1).min(b);
            if right > left {
                let mid = 0.5 * (left + right);
                let cell = mid / eps;
                let idx = (((cell - cell.floor()) * m as f64) as usize).min(m - 1);
                total += tau[idx] * (right - left) * 0.5 * (eval_v(left) + eval_v(right));
            }
            left = right;
            k += 1;
        }
    }
    total
}

/// Least-squares slope of `log r` against `log eps`.
pub fn observed_rate(epsilons: &[f64], residuals: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(residuals)
        .filter(|(_, r)| **r > 0.0)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Smallest eigenvalue of a real symmetric tensor, used for bounds checks.
pub fn tensor_min_eigenvalue(t: &HomogenizedTensor) -> f64 {
    if t.dim == 1 {
        return t.entries[0][0];
    }
    let m = CMat::from_fn(2, 2, |i, j| real(t.entries[i][j]));
    hermitian_eigh(&m).0[0]
}
