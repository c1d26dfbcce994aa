//! Galerkin chains: nested subspaces of a fixed reference space, the form
//! restricted to each, and their convergence to the reference semigroup.
//!
//! The ambient space is the finest P1 (1D) or Q1 (2D) space on the reference
//! grid, written in mass-weighted coordinates `y = L* c` with `M = L L*` the
//! consistent mass matrix and `c` nodal values. The Euclidean norm of `y` is
//! then the `L2` norm of the finite element function, and a level spanned by
//! nodal coefficient columns `P` has basis `B = L* P` and Gram `P* M P`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{self, Grid1d, Grid2d};
use crate::form::{assemble_form_operator, AmbientSpace, FormOperator, SubspaceBasis};
use crate::linalg::{cholesky_guarded, real, solve_lower, solve_lower_adjoint, CMat, CVec, C64, ZERO};
use crate::metrics::{
    halfopen_times, projection_sot_metric, resolvent_metric, sup_halfopen_strong_metric, MetricKind,
    ResolventMode,
};
use crate::par_map;
use crate::semigroup::SemigroupEvaluator;
use crate::trace::ConvergenceTrace;

/// Gauss points per element for assembly, and the refined order used to
/// check it.
pub const ASSEMBLY_ORDER: usize = 3;
pub const CHECK_ORDER: usize = 5;
pub const QUADRATURE_CONSISTENCY_TOL: f64 = 1e-8;
pub const NESTING_TOL: f64 = 1e-10;

pub type Coefficient1d = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Coefficient2d = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    DirichletLaplace1d,
    AdvectionDiffusion1d,
    DirichletDivform2d,
}

#[derive(Clone)]
pub enum Diffusion {
    OneD(Coefficient1d),
    TwoD(Coefficient2d),
}

/// `a(u, v) = int d grad u . grad conj v + b int u' conj v + mu int u conj v`
/// on `(0, 1)` or `(0, 1)^2` with homogeneous Dirichlet conditions.
#[derive(Clone)]
pub struct ContinuousFormSpec {
    pub kind: FormKind,
    /// Reference cells per axis.
    pub reference_cells: usize,
    pub diffusion: Diffusion,
    pub drift: f64,
    pub shift: f64,
    /// Smallest sampled diffusion value.
    pub eta: f64,
}

impl fmt::Debug for ContinuousFormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousFormSpec")
            .field("kind", &self.kind)
            .field("reference_cells", &self.reference_cells)
            .field("drift", &self.drift)
            .field("shift", &self.shift)
            .field("eta", &self.eta)
            .finish()
    }
}

impl ContinuousFormSpec {
    pub fn laplace_1d(reference_cells: usize) -> Result<Self> {
        Self::new(FormKind::DirichletLaplace1d, reference_cells, Diffusion::OneD(Arc::new(|_| 1.0)), 0.0, 0.0)
    }

    pub fn advection_diffusion_1d(reference_cells: usize, drift: f64, shift: f64) -> Result<Self> {
        Self::new(
            FormKind::AdvectionDiffusion1d,
            reference_cells,
            Diffusion::OneD(Arc::new(|_| 1.0)),
            drift,
            shift,
        )
    }

    pub fn divform_2d(reference_cells: usize, diffusion: Coefficient2d) -> Result<Self> {
        Self::new(FormKind::DirichletDivform2d, reference_cells, Diffusion::TwoD(diffusion), 0.0, 0.0)
    }

    pub fn new(kind: FormKind, reference_cells: usize, diffusion: Diffusion, drift: f64, shift: f64) -> Result<Self> {
        if reference_cells < 2 {
            return Err(Error::InvalidArgument("reference grid needs at least 2 cells".into()));
        }
        let two_d = kind == FormKind::DirichletDivform2d;
        if two_d != matches!(diffusion, Diffusion::TwoD(_)) {
            return Err(Error::InvalidArgument(format!("{kind:?} with mismatched coefficient dimension")));
        }
        if kind == FormKind::DirichletLaplace1d && (drift != 0.0) {
            return Err(Error::InvalidArgument("the Laplace form has no drift".into()));
        }
        // sample at nodes and midpoints of the reference grid
        let n = 2 * reference_cells;
        let pts = (0..=n).map(|i| i as f64 / n as f64);
        let eta = match &diffusion {
            Diffusion::OneD(d) => pts.map(|x| d(x)).fold(f64::INFINITY, f64::min),
            Diffusion::TwoD(d) => {
                let pts: Vec<f64> = pts.collect();
                pts.iter()
                    .flat_map(|&x| pts.iter().map(move |&y| (x, y)))
                    .map(|(x, y)| d(x, y))
                    .fold(f64::INFINITY, f64::min)
            }
        };
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument(format!("diffusion not uniformly positive (min {eta})")));
        }
        Ok(Self {
            kind,
            reference_cells,
            diffusion,
            drift,
            shift,
            eta,
        })
    }

    pub fn with_diffusion_1d(mut self, d: Coefficient1d) -> Result<Self> {
        self.diffusion = Diffusion::OneD(d);
        Self::new(self.kind, self.reference_cells, self.diffusion, self.drift, self.shift)
    }

    pub fn is_2d(&self) -> bool {
        self.kind == FormKind::DirichletDivform2d
    }

    /// Stiffness of the form on the interior nodes of a grid with `cells`
    /// cells per axis, assembled with `order` Gauss points.
    fn stiffness(&self, cells: usize, order: usize) -> CMat {
        match &self.diffusion {
            Diffusion::OneD(d) => {
                let g = Grid1d::unit(cells);
                fem::assemble_p1(&g, &g.interior_map(), |x| real(d(x)), real(self.drift), real(self.shift), order)
                    .to_dense()
            }
            Diffusion::TwoD(d) => {
                let g = Grid2d::unit_square(cells);
                fem::assemble_q1(
                    &g,
                    &g.interior_map(),
                    |x, y| fem::isotropic(real(d(x, y))),
                    real(self.shift),
                    order,
                )
                .to_dense()
            }
        }
    }

    fn mass(&self, cells: usize) -> CMat {
        if self.is_2d() {
            let g = Grid2d::unit_square(cells);
            fem::assemble_q1_mass(&g, &g.interior_map()).to_dense()
        } else {
            let g = Grid1d::unit(cells);
            fem::assemble_p1_mass(&g, &g.interior_map()).to_dense()
        }
    }
}

/// The reference space: interior nodes of the reference grid with mass
/// factor `L` and stiffness `K`.
#[derive(Debug, Clone)]
pub struct ReferenceSpace {
    pub spec: ContinuousFormSpec,
    mass_factor: CMat,
    stiffness: CMat,
    nodes: Vec<(f64, f64)>,
}

impl ReferenceSpace {
    pub fn new(spec: &ContinuousFormSpec) -> Result<Self> {
        let n = spec.reference_cells;
        let stiffness = spec.stiffness(n, ASSEMBLY_ORDER);
        let check = spec.stiffness(n, CHECK_ORDER);
        let scale = stiffness.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let gap = fem::max_abs_diff(&stiffness, &check) / scale;
        if gap > QUADRATURE_CONSISTENCY_TOL {
            return Err(Error::QuadratureOrderTooLow(gap));
        }
        let mass_factor = cholesky_guarded(&spec.mass(n))?;
        let h = 1.0 / n as f64;
        let nodes = if spec.is_2d() {
            (1..n)
                .flat_map(|j| (1..n).map(move |i| (i as f64 * h, j as f64 * h)))
                .collect()
        } else {
            (1..n).map(|i| (i as f64 * h, 0.0)).collect()
        };
        Ok(Self {
            spec: spec.clone(),
            mass_factor,
            stiffness,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Coordinates of the interior nodes (`y = 0` in 1D).
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn stiffness(&self) -> &CMat {
        &self.stiffness
    }

    /// Nodal values to ambient coordinates, `y = L* c`.
    pub fn to_ambient(&self, nodal: &CVec) -> CVec {
        self.mass_factor.adjoint() * nodal
    }

    /// Ambient coordinates to nodal values, `c = L^{-*} y`.
    pub fn to_nodal(&self, y: &CVec) -> CVec {
        let rhs = CMat::from_column_slice(y.len(), 1, y.as_slice());
        solve_lower_adjoint(&self.mass_factor, &rhs).column(0).into_owned()
    }

    /// Ambient vector of the interpolant of `f`.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> CVec {
        let c = CVec::from_iterator(self.dim(), self.nodes.iter().map(|&(x, y)| real(f(x, y))));
        self.to_ambient(&c)
    }

    /// `Re a(u, u)` for an ambient vector.
    pub fn energy(&self, y: &CVec) -> f64 {
        let c = self.to_nodal(y);
        (c.adjoint() * &self.stiffness * &c)[(0, 0)].re
    }

    /// The full reference form: basis `L*`, Gram `M`.
    pub fn form(&self) -> Result<FormOperator> {
        assemble_form_operator(SubspaceBasis::new(self.mass_factor.adjoint())?, self.stiffness.clone())
    }

    fn level_basis(&self, nodal: &CMat) -> Result<SubspaceBasis> {
        SubspaceBasis::new(self.mass_factor.adjoint() * nodal)
    }
}

/// Nested levels of one reference space.
#[derive(Debug, Clone)]
pub struct SubspaceChain {
    pub ambient: AmbientSpace,
    pub levels: Vec<SubspaceBasis>,
    /// Mode count or mesh size per level.
    pub labels: Vec<f64>,
    /// Nodal coefficients of each level basis on the reference grid.
    pub nodal: Vec<CMat>,
    pub reference: Arc<ReferenceSpace>,
}

impl SubspaceChain {
    fn build(reference: ReferenceSpace, nodal: Vec<CMat>, labels: Vec<f64>) -> Result<Self> {
        let levels = nodal
            .iter()
            .map(|p| reference.level_basis(p))
            .collect::<Result<Vec<_>>>()?;
        let chain = Self {
            ambient: AmbientSpace::new(reference.dim())?,
            levels,
            labels,
            nodal,
            reference: Arc::new(reference),
        };
        chain.verify_nesting()?;
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Largest relative defect of projecting level `k` onto level `k + 1`.
    pub fn nesting_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for pair in self.levels.windows(2) {
            let b = pair[0].columns();
            let fine = pair[1].columns();
            let l = cholesky_guarded(&(fine.adjoint() * fine)).expect("level bases are validated");
            let e = solve_lower(&l, &fine.adjoint()).adjoint();
            let residual = b - &e * (e.adjoint() * b);
            worst = worst.max(residual.norm() / b.norm());
        }
        worst
    }

    fn verify_nesting(&self) -> Result<()> {
        let defect = self.nesting_defect();
        if defect > NESTING_TOL {
            return Err(Error::InvalidArgument(format!("chain levels not nested (defect {defect:.3e})")));
        }
        Ok(())
    }
}

/// Discrete sine modes `sqrt(2) sin(k pi x)` on the reference grid.
pub fn build_fourier_chain(spec: &ContinuousFormSpec, mode_counts: &[usize]) -> Result<SubspaceChain> {
    if spec.is_2d() {
        return Err(Error::InvalidArgument("Fourier chains are one-dimensional".into()));
    }
    if mode_counts.is_empty() || mode_counts.windows(2).any(|p| p[1] <= p[0]) || mode_counts[0] == 0 {
        return Err(Error::InvalidArgument("mode counts must be positive and increasing".into()));
    }
    let reference = ReferenceSpace::new(spec)?;
    let interior = reference.dim();
    let top = *mode_counts.last().unwrap();
    if top > interior {
        return Err(Error::ModesExceedGrid { modes: top, interior });
    }
    let nodes = reference.nodes().to_vec();
    let nodal = mode_counts
        .iter()
        .map(|&m| {
            CMat::from_fn(interior, m, |i, k| {
                real(std::f64::consts::SQRT_2 * ((k + 1) as f64 * std::f64::consts::PI * nodes[i].0).sin())
            })
        })
        .collect();
    SubspaceChain::build(reference, nodal, mode_counts.iter().map(|&m| m as f64).collect())
}

/// Hat functions of the coarse grid with `coarse` cells evaluated on the
/// interior nodes of the fine grid with `fine` cells.
pub fn prolongation_1d(coarse: usize, fine: usize) -> CMat {
    let hc = 1.0 / coarse as f64;
    CMat::from_fn(fine - 1, coarse - 1, |i, j| {
        let x = (i + 1) as f64 / fine as f64;
        let xj = (j + 1) as f64 * hc;
        real((1.0 - (x - xj).abs() / hc).max(0.0))
    })
}

/// Nodal hat bases on uniformly refined meshes `h_k = h_0 2^{-k}`,
/// `k < refinements`, with `h_0 = 1 / coarse_cells`.
pub fn build_fe_chain(spec: &ContinuousFormSpec, coarse_cells: usize, refinements: usize) -> Result<SubspaceChain> {
    if refinements < 1 || coarse_cells < 2 {
        return Err(Error::InvalidArgument("need refinements >= 1 and at least 2 coarse cells".into()));
    }
    let finest = coarse_cells << (refinements - 1);
    let n = spec.reference_cells;
    if finest > n || n % finest != 0 {
        return Err(Error::InvalidArgument(format!(
            "finest level with {finest} cells does not divide the reference grid of {n}"
        )));
    }
    let reference = ReferenceSpace::new(spec)?;
    let mut nodal = Vec::new();
    let mut labels = Vec::new();
    for k in 0..refinements {
        let cells = coarse_cells << k;
        let p = prolongation_1d(cells, n);
        nodal.push(if spec.is_2d() { p.kronecker(&p) } else { p });
        labels.push(1.0 / cells as f64);
    }
    SubspaceChain::build(reference, nodal, labels)
}

/// The form restricted to level `level`: `K_level = P* K P`.
pub fn restrict_form(chain: &SubspaceChain, level: usize) -> Result<FormOperator> {
    let p = chain
        .nodal
        .get(level)
        .ok_or_else(|| Error::InvalidArgument(format!("no level {level}")))?;
    let k = p.adjoint() * chain.reference.stiffness() * p;
    assemble_form_operator(chain.levels[level].clone(), k)
}

/// `K + shift G` with the smallest shift making the real-part pencil
/// bounded below by `mu`.
pub fn coercivity_shift(op: &FormOperator, mu: f64) -> Result<(FormOperator, f64)> {
    let lowest = op.real_part_spectrum().first().copied().unwrap_or(0.0);
    let shift = if lowest >= mu { 0.0 } else { mu - lowest };
    let k = op.stiffness() + op.gram() * real(shift);
    Ok((assemble_form_operator(op.basis().clone(), k)?, shift))
}

pub const DECOMPOSITION_TAG: &str = "DECOMPOSITION_BOUND";
pub const ENERGY_TAG: &str = "ENERGY_ERROR";
pub const EIGENVALUE_TAG: &str = "FIRST_EIGENVALUE";

/// Per-level metrics against the full reference space, evaluated on the
/// given vectors.
///
/// Besides the sup over `(0, T]`, the projection and resolvent metrics, the
/// trace carries `||(P_n - P) f|| + sup_t ||(S^n_t - S_t) P f||`, the
/// resolvent energy error `Re a(u_n - u)` for the first vector and, for
/// symmetric forms, the lowest eigenvalue of each level.
pub fn galerkin_experiment(
    chain: &SubspaceChain,
    vectors: &[CVec],
    horizon: f64,
    lambda: C64,
    grid: usize,
) -> Result<ConvergenceTrace> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("galerkin experiment needs at least one vector".into()));
    }
    let reference_form = chain.reference.form()?;
    let symmetric = reference_form.is_symmetric();
    let reference = SemigroupEvaluator::new(reference_form)?;
    let projected: Vec<CVec> = vectors.iter().map(|f| reference.projection(f)).collect();
    let u_ref = reference.resolvent_apply(lambda, &vectors[0])?;
    let times = halfopen_times(horizon, grid);

    let levels: Vec<usize> = (0..chain.len()).collect();
    let rows = par_map(&levels, |&k| -> Result<[f64; 6]> {
        let op = restrict_form(chain, k)?;
        let first = op.real_part_spectrum().first().copied().unwrap_or(0.0);
        let ev = SemigroupEvaluator::new(op)?;
        let sup = sup_halfopen_strong_metric(&ev, &reference, horizon, vectors, grid)?;
        let proj = projection_sot_metric(&ev, &reference, vectors)?;
        let res = resolvent_metric(&ev, &reference, lambda, vectors, ResolventMode::Sot)?;
        let mut bound: f64 = 0.0;
        for (f, pf) in vectors.iter().zip(&projected) {
            let jump = (ev.projection(f) - pf).norm();
            let a = ev.trajectory(&times, pf)?;
            let b = reference.trajectory(&times, pf)?;
            let inner = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            bound = bound.max(ev.bound().constant * jump + inner);
        }
        let u = ev.resolvent_apply(lambda, &vectors[0])?;
        let energy = chain.reference.energy(&(u - &u_ref)).max(0.0);
        Ok([sup, proj, res, bound, energy, first.max(0.0)])
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let column = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();

    let label = if chain.labels.iter().all(|l| *l >= 1.0) { "modes" } else { "h" };
    let mut trace = ConvergenceTrace::new("galerkin", label, chain.labels.clone());
    trace.param("kind", format!("{:?}", chain.reference.spec.kind));
    trace.param("reference_cells", chain.reference.spec.reference_cells);
    trace.param("T", horizon);
    trace.param("lambda", format!("{}{:+}i", lambda.re, lambda.im));
    trace.param("vectors", vectors.len());
    trace.insert(MetricKind::SupHalfopenStrong.tag(), column(0))?;
    trace.insert(MetricKind::ProjectionSot.tag(), column(1))?;
    trace.insert(MetricKind::ResolventSot.tag(), column(2))?;
    trace.insert(DECOMPOSITION_TAG, column(3))?;
    trace.insert(ENERGY_TAG, column(4))?;
    if symmetric {
        trace.insert(EIGENVALUE_TAG, column(5))?;
    }
    Ok(trace)
}

/// Vector of zeros in the reference ambient space.
pub fn zero_vector(chain: &SubspaceChain) -> CVec {
    CVec::from_element(chain.reference.dim(), ZERO)
}
