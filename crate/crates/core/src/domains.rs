//! Increasing open sets `Omega_n` exhausting `Omega`, discretized on one
//! master grid so that `H^1_0(Omega_n)` nesting is node-set inclusion.
//!
//! The ambient space is the set of interior nodes of `Omega` with lumped
//! mass, normalized so the Gram matrix is the identity; level `n` keeps the
//! nodes inside `Omega_n` and extends by zero. Norms of grid functions are
//! reported as `sqrt(h^d)` times the Euclidean norm.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{self, Grid1d, Grid2d, Tensor};
use crate::form::{assemble_form_operator, FormOperator, SubspaceBasis};
use crate::linalg::{c64, real, CMat, CVec, C64, ZERO};
use crate::par_map;
use crate::semigroup::SemigroupEvaluator;
use crate::trace::ConvergenceTrace;

pub const SUP_CLOSED_TAG: &str = "SUP_CLOSED_STRONG";
pub const INITIAL_DATA_TAG: &str = "INITIAL_DATA";
pub const ELLIPTIC_TAG: &str = "RESOLVENT_ERROR";
/// Time nodes of the closed-interval sup, `t = 0` included.
pub const CLOSED_GRID: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MasterGrid {
    Interval(Grid1d),
    Rectangle(Grid2d),
}

impl MasterGrid {
    pub fn dimension(&self) -> usize {
        match self {
            MasterGrid::Interval(_) => 1,
            MasterGrid::Rectangle(_) => 2,
        }
    }

    pub fn h(&self) -> f64 {
        match self {
            MasterGrid::Interval(g) => g.h(),
            MasterGrid::Rectangle(g) => g.h,
        }
    }

    /// Coordinates of every grid node.
    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        match self {
            MasterGrid::Interval(g) => (0..g.nodes()).map(|i| (g.node(i), 0.0)).collect(),
            MasterGrid::Rectangle(g) => (0..=g.ny)
                .flat_map(|j| (0..=g.nx).map(move |i| g.node(i, j)))
                .collect(),
        }
    }

    fn omega_mask(&self) -> Vec<bool> {
        match self {
            MasterGrid::Interval(g) => g.interior_map().iter().map(Option::is_some).collect(),
            MasterGrid::Rectangle(g) => g.interior_map().iter().map(Option::is_some).collect(),
        }
    }
}

/// Masks of interior nodes of `Omega_n`, increasing in `n`, inside `Omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainChain {
    pub grid: MasterGrid,
    pub masks: Vec<Vec<bool>>,
    pub labels: Vec<f64>,
    omega: Vec<bool>,
    /// Position of each `Omega` interior node in the ambient vector.
    ambient_index: Vec<Option<usize>>,
}

impl DomainChain {
    pub fn from_masks(grid: MasterGrid, masks: Vec<Vec<bool>>, labels: Vec<f64>) -> Result<Self> {
        let omega = grid.omega_mask();
        if masks.len() != labels.len() || masks.is_empty() {
            return Err(Error::InvalidArgument("one label per mask, at least one mask".into()));
        }
        for m in &masks {
            if m.len() != omega.len() {
                return Err(Error::DimensionMismatch(format!("mask of {} nodes on a grid of {}", m.len(), omega.len())));
            }
            if m.iter().zip(&omega).any(|(a, o)| *a && !*o) {
                return Err(Error::InvalidArgument("mask leaves Omega".into()));
            }
        }
        for pair in masks.windows(2) {
            if pair[0].iter().zip(&pair[1]).any(|(a, b)| *a && !*b) {
                return Err(Error::InvalidArgument("masks are not increasing".into()));
            }
        }
        let mut next = 0;
        let ambient_index = omega
            .iter()
            .map(|&o| {
                o.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Ok(Self {
            grid,
            masks,
            labels,
            omega,
            ambient_index,
        })
    }

    /// `Omega_n = (0, 1 - 1/n)` inside `(0, 1)`; nodes with `x < 1 - 1/n`.
    pub fn interval_shrink(cells: usize, ns: &[usize]) -> Result<Self> {
        let g = Grid1d::unit(cells);
        let tol = 1e-12 * g.h();
        let masks = ns
            .iter()
            .map(|&n| {
                let right = 1.0 - 1.0 / n as f64;
                (0..g.nodes()).map(|i| i > 0 && g.node(i) < right - tol).collect()
            })
            .collect();
        Self::from_masks(MasterGrid::Interval(g), masks, ns.iter().map(|&n| n as f64).collect())
    }

    /// Staircase rectangles `(0, a_n) x (0, b_n)` inside the unit square.
    pub fn rectangle_chain(cells: usize, corners: &[(f64, f64)], labels: Vec<f64>) -> Result<Self> {
        let g = Grid2d::unit_square(cells);
        let tol = 1e-12 * g.h;
        let masks = corners
            .iter()
            .map(|&(a, b)| {
                (0..=g.ny)
                    .flat_map(|j| (0..=g.nx).map(move |i| (i, j)))
                    .map(|(i, j)| {
                        let (x, y) = g.node(i, j);
                        i > 0 && j > 0 && i < g.nx && j < g.ny && x < a - tol && y < b - tol
                    })
                    .collect()
            })
            .collect();
        Self::from_masks(MasterGrid::Rectangle(g), masks, labels)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Number of interior nodes of `Omega`.
    pub fn ambient_dim(&self) -> usize {
        self.omega.iter().filter(|&&o| o).count()
    }

    /// `sqrt(h^d)`, turning Euclidean norms into `L2` norms.
    pub fn norm_scale(&self) -> f64 {
        self.grid.h().powi(self.grid.dimension() as i32).sqrt()
    }

    /// Grid-function norm of an ambient vector.
    pub fn norm(&self, v: &CVec) -> f64 {
        self.norm_scale() * v.norm()
    }

    /// Node mask of level `level`, or of `Omega` for `None`.
    pub fn mask(&self, level: Option<usize>) -> &[bool] {
        match level {
            Some(k) => &self.masks[k],
            None => &self.omega,
        }
    }

    /// Coordinates of the ambient (interior of `Omega`) nodes.
    pub fn ambient_coordinates(&self) -> Vec<(f64, f64)> {
        self.grid
            .coordinates()
            .into_iter()
            .zip(&self.omega)
            .filter_map(|(c, &o)| o.then_some(c))
            .collect()
    }

    /// Ambient vector sampling `f` at the interior nodes of `Omega`.
    pub fn sample<F: Fn(f64, f64) -> C64>(&self, f: F) -> CVec {
        let c = self.ambient_coordinates();
        CVec::from_iterator(c.len(), c.iter().map(|&(x, y)| f(x, y)))
    }

    /// `v` with entries outside `Omega_n` set to zero.
    pub fn restrict(&self, level: usize, v: &CVec) -> CVec {
        let mut out = v.clone();
        for (node, idx) in self.ambient_index.iter().enumerate() {
            if let Some(i) = idx {
                if !self.masks[level][node] {
                    out[*i] = ZERO;
                }
            }
        }
        out
    }
}

/// Coefficient matrix field `a(x)`.
#[derive(Clone)]
pub struct EllipticCoefficients {
    field: Arc<dyn Fn(f64, f64) -> Tensor + Send + Sync>,
    pub eta: f64,
}

impl fmt::Debug for EllipticCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticCoefficients").field("eta", &self.eta).finish()
    }
}

impl EllipticCoefficients {
    pub fn identity() -> Self {
        Self {
            field: Arc::new(|_, _| fem::isotropic(real(1.0))),
            eta: 1.0,
        }
    }

    /// Field validated at the nodes of `grid` against 8 unit directions:
    /// `Re xi* a xi >= eta |xi|^2 - 1e-12`.
    pub fn new<F>(grid: &MasterGrid, field: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Tensor + Send + Sync + 'static,
    {
        let dirs: Vec<[C64; 2]> = (0..8)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / 8.0;
                if k % 2 == 0 {
                    [real(th.cos()), real(th.sin())]
                } else {
                    [real(th.cos()), c64(0.0, th.sin())]
                }
            })
            .collect();
        let mut eta = f64::INFINITY;
        for (x, y) in grid.coordinates() {
            let a = field(x, y);
            if grid.dimension() == 1 {
                eta = eta.min(a[0][0].re);
                continue;
            }
            for xi in &dirs {
                let mut q = ZERO;
                for k in 0..2 {
                    for l in 0..2 {
                        q += xi[k].conj() * a[k][l] * xi[l];
                    }
                }
                eta = eta.min(q.re);
            }
        }
        if !(eta > 1e-12) {
            return Err(Error::InvalidArgument(format!("coefficients not uniformly elliptic (eta = {eta})")));
        }
        Ok(Self {
            field: Arc::new(field),
            eta,
        })
    }

    pub fn at(&self, x: f64, y: f64) -> Tensor {
        (self.field)(x, y)
    }
}

/// Form operator of `-div(a grad)` on level `level` (or `Omega` for
/// `None`), zero-extended into the ambient interior of `Omega`.
pub fn assemble_dirichlet_operator(
    chain: &DomainChain,
    level: Option<usize>,
    coeffs: &EllipticCoefficients,
) -> Result<FormOperator> {
    let mask = chain.mask(level);
    let mut map = vec![None; mask.len()];
    let mut indices = Vec::new();
    for (node, &keep) in mask.iter().enumerate() {
        if keep {
            map[node] = Some(indices.len());
            indices.push(chain.ambient_index[node].expect("masks lie inside Omega"));
        }
    }
    if indices.is_empty() {
        return Err(Error::EmptyDomain(level.unwrap_or(usize::MAX)));
    }
    let h = chain.grid.h();
    let (k, weight) = match &chain.grid {
        MasterGrid::Interval(g) => (
            fem::assemble_p1(g, &map, |x| coeffs.at(x, 0.0)[0][0], ZERO, ZERO, 3),
            h,
        ),
        MasterGrid::Rectangle(g) => (fem::assemble_q1(g, &map, |x, y| coeffs.at(x, y), ZERO, 3), h * h),
    };
    let stiffness: CMat = k.to_dense() / real(weight);
    assemble_form_operator(SubspaceBasis::canonical(chain.ambient_dim(), &indices)?, stiffness)
}

fn evaluators(chain: &DomainChain, coeffs: &EllipticCoefficients) -> Result<(Vec<FormOperator>, FormOperator)> {
    let levels: Vec<usize> = (0..chain.len()).collect();
    let ops = par_map(&levels, |&k| assemble_dirichlet_operator(chain, Some(k), coeffs))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((ops, assemble_dirichlet_operator(chain, None, coeffs)?))
}

/// Per-level `sup_{t in [0, T]} ||u_n(t) - u(t)||` with `u_n(t) = S^n_t u_{0,n}`
/// and `u(t) = S_t u_0` on `Omega`; the `t = 0` value is `||u_{0,n} - u_0||`.
pub fn varying_domain_parabolic_experiment(
    chain: &DomainChain,
    coeffs: &EllipticCoefficients,
    u0_sequence: &[CVec],
    u0: &CVec,
    horizon: f64,
) -> Result<ConvergenceTrace> {
    if u0_sequence.len() != chain.len() {
        return Err(Error::DimensionMismatch("one initial datum per level".into()));
    }
    let initial: Vec<f64> = u0_sequence.iter().map(|v| chain.norm(&(v - u0))).collect();
    let slack = 1e-14 * initial.first().copied().unwrap_or(0.0).max(1.0);
    if initial.windows(2).any(|p| p[1] > p[0] + slack) {
        return Err(Error::InitialDataNotConverging(format!("initial errors {initial:?} increase along the chain")));
    }
    let (ops, omega) = evaluators(chain, coeffs)?;
    let reference = SemigroupEvaluator::new(omega)?;
    let times: Vec<f64> = (1..CLOSED_GRID)
        .map(|k| horizon * k as f64 / (CLOSED_GRID - 1) as f64)
        .collect();
    let target = reference.trajectory(&times, u0)?;
    let levels: Vec<usize> = (0..chain.len()).collect();
    let sups = par_map(&levels, |&k| -> Result<f64> {
        let ev = SemigroupEvaluator::new(ops[k].clone())?;
        let path = ev.trajectory(&times, &u0_sequence[k])?;
        let inner = path
            .iter()
            .zip(&target)
            .map(|(a, b)| chain.norm(&(a - b)))
            .fold(0.0, f64::max);
        Ok(inner.max(initial[k]))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut trace = ConvergenceTrace::new("domains_parabolic", "n", chain.labels.clone());
    trace.param("dimension", chain.grid.dimension());
    trace.param("h", chain.grid.h());
    trace.param("T", horizon);
    trace.param("grid", CLOSED_GRID);
    trace.insert(SUP_CLOSED_TAG, sups)?;
    trace.insert(INITIAL_DATA_TAG, initial)?;
    Ok(trace)
}

/// Resolvent solutions `u_n = (lambda + A_n)^{-1} f` per level and the
/// solution on `Omega`.
pub fn elliptic_solutions(
    chain: &DomainChain,
    coeffs: &EllipticCoefficients,
    lambda: f64,
    f: &CVec,
) -> Result<(Vec<CVec>, CVec)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    let (ops, omega) = evaluators(chain, coeffs)?;
    let levels = par_map(&ops, |op| op.resolvent_apply(real(lambda), f))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((levels, omega.resolvent_apply(real(lambda), f)?))
}

/// Per-level `||u_n - u||` for the resolvent problem.
pub fn varying_domain_elliptic_experiment(
    chain: &DomainChain,
    coeffs: &EllipticCoefficients,
    lambda: f64,
    f: &CVec,
) -> Result<ConvergenceTrace> {
    let (levels, u) = elliptic_solutions(chain, coeffs, lambda, f)?;
    let mut trace = ConvergenceTrace::new("domains_elliptic", "n", chain.labels.clone());
    trace.param("dimension", chain.grid.dimension());
    trace.param("h", chain.grid.h());
    trace.param("lambda", lambda);
    trace.insert(ELLIPTIC_TAG, levels.iter().map(|v| chain.norm(&(v - &u))).collect())?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigh;

    #[test]
    fn textbook_stencil_on_shrunk_interval() {
        let chain = DomainChain::interval_shrink(128, &[2, 4]).unwrap();
        let op = assemble_dirichlet_operator(&chain, Some(0), &EllipticCoefficients::identity()).unwrap();
        // nodes with x < 1/2: i = 1..63
        assert_eq!(op.form_dim(), 63);
        let k = op.stiffness();
        let h2 = 128.0f64 * 128.0;
        assert!((k[(5, 5)].re - 2.0 * h2).abs() < 1e-8);
        assert!((k[(5, 6)].re + h2).abs() < 1e-8);
        assert!(k[(5, 7)].norm() < 1e-12);
    }

    #[test]
    fn level_eigenvalues_match_shrunk_interval() {
        let chain = DomainChain::interval_shrink(128, &[4]).unwrap();
        let op = assemble_dirichlet_operator(&chain, Some(0), &EllipticCoefficients::identity()).unwrap();
        let vals = hermitian_eigh(&op.reduced_generator()).0;
        let l = 0.75;
        for k in 1..=3 {
            let exact = (k as f64 * std::f64::consts::PI / l).powi(2);
            assert!((vals[k - 1] / exact - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_chain_gives_identical_operators() {
        let g = Grid1d::unit(32);
        let omega: Vec<bool> = g.interior_map().iter().map(Option::is_some).collect();
        let chain = DomainChain::from_masks(MasterGrid::Interval(g), vec![omega.clone(), omega], vec![1.0, 2.0]).unwrap();
        let c = EllipticCoefficients::identity();
        let a = assemble_dirichlet_operator(&chain, Some(0), &c).unwrap();
        let b = assemble_dirichlet_operator(&chain, None, &c).unwrap();
        assert_eq!(a.stiffness(), b.stiffness());
    }

    #[test]
    fn decreasing_masks_rejected() {
        assert!(DomainChain::interval_shrink(32, &[4, 2]).is_err());
    }

    #[test]
    fn elliptic_solutions_increase_with_the_domain() {
        let chain = DomainChain::interval_shrink(64, &[2, 4, 8]).unwrap();
        let f = chain.sample(|_, _| real(1.0));
        let (levels, u) = elliptic_solutions(&chain, &EllipticCoefficients::identity(), 1.0, &f).unwrap();
        let mut all = levels.clone();
        all.push(u);
        for pair in all.windows(2) {
            for (a, b) in pair[0].iter().zip(pair[1].iter()) {
                assert!(a.re >= -1e-10 && a.re <= b.re + 1e-10);
            }
        }
    }

    #[test]
    fn zero_extension_is_an_isometry() {
        let chain = DomainChain::interval_shrink(16, &[2]).unwrap();
        let op = assemble_dirichlet_operator(&chain, Some(0), &EllipticCoefficients::identity()).unwrap();
        let b = op.basis().columns();
        let x = CVec::from_fn(b.ncols(), |i, _| c64(i as f64, 1.0));
        assert!(((b * &x).norm() - x.norm()).abs() < 1e-14);
    }

    #[test]
    fn nonconverging_initial_data_rejected() {
        let chain = DomainChain::interval_shrink(16, &[2, 4]).unwrap();
        let u0 = chain.sample(|_, _| real(1.0));
        let seq = vec![u0.clone(), chain.restrict(0, &u0)];
        assert!(matches!(
            varying_domain_parabolic_experiment(&chain, &EllipticCoefficients::identity(), &seq, &u0, 1.0),
            Err(Error::InitialDataNotConverging(_))
        ));
    }

    #[test]
    fn complex_coefficients_in_2d() {
        let chain = DomainChain::rectangle_chain(8, &[(0.5, 0.5), (1.0, 1.0)], vec![1.0, 2.0]).unwrap();
        let c = EllipticCoefficients::new(&chain.grid, |_, _| {
            [[real(1.0), c64(0.0, 0.2)], [c64(0.0, -0.2), real(1.0)]]
        })
        .unwrap();
        let op = assemble_dirichlet_operator(&chain, Some(0), &c).unwrap();
        assert_eq!(op.form_dim(), 9);
        assert!(matches!(
            assemble_dirichlet_operator(
                &DomainChain::rectangle_chain(8, &[(0.1, 0.1)], vec![1.0]).unwrap(),
                Some(0),
                &c
            ),
            Err(Error::EmptyDomain(0))
        ));
    }
}
