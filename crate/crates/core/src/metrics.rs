//! Empirical versions of the convergence modes for a sequence of degenerate
//! semigroups against a reference.
//!
//! Every "for all f, g" is replaced by a maximum over a probe family, so each
//! value is a lower bound for the operator-topology quantity it stands for.

use crate::error::{Error, Result};
use crate::form::{real_part_operator, FormOperator};
use crate::linalg::{c64, inner, real, CVec, C64, ZERO};
use crate::par_map;
use crate::quadrature::{Refinement, Rule, GEOMETRIC_START};
use crate::semigroup::SemigroupEvaluator;
use crate::trace::ConvergenceTrace;

/// The twelve convergence modes compared by the co-movement experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    WotSemigroupPointwise,
    WeakTimeIntegral,
    WeakTimeIntegralVectorValued,
    L1Strong,
    ResolventSot,
    ResolventSotSingle,
    ResolventWot,
    ResolventWotSet,
    ResolventWotNonreal,
    SupIntervalStrong,
    SupHalfopenStrong,
    ProjectionSot,
}

impl MetricKind {
    pub const ALL: [MetricKind; 12] = [
        MetricKind::WotSemigroupPointwise,
        MetricKind::WeakTimeIntegral,
        MetricKind::WeakTimeIntegralVectorValued,
        MetricKind::L1Strong,
        MetricKind::ResolventSot,
        MetricKind::ResolventSotSingle,
        MetricKind::ResolventWot,
        MetricKind::ResolventWotSet,
        MetricKind::ResolventWotNonreal,
        MetricKind::SupIntervalStrong,
        MetricKind::SupHalfopenStrong,
        MetricKind::ProjectionSot,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            MetricKind::WotSemigroupPointwise => "WOT_SEMIGROUP_POINTWISE",
            MetricKind::WeakTimeIntegral => "WEAK_TIME_INTEGRAL",
            MetricKind::WeakTimeIntegralVectorValued => "WEAK_TIME_INTEGRAL_VECTORVALUED",
            MetricKind::L1Strong => "L1_STRONG",
            MetricKind::ResolventSot => "RESOLVENT_SOT",
            MetricKind::ResolventSotSingle => "RESOLVENT_SOT_SINGLE",
            MetricKind::ResolventWot => "RESOLVENT_WOT",
            MetricKind::ResolventWotSet => "RESOLVENT_WOT_SET",
            MetricKind::ResolventWotNonreal => "RESOLVENT_WOT_NONREAL",
            MetricKind::SupIntervalStrong => "SUP_INTERVAL_STRONG",
            MetricKind::SupHalfopenStrong => "SUP_HALFOPEN_STRONG",
            MetricKind::ProjectionSot => "PROJECTION_SOT",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolventMode {
    Sot,
    Wot,
}

/// Sampled parameters of the convergence statements.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricParams {
    /// Time for the pointwise WOT metric.
    pub t: f64,
    pub horizon: f64,
    pub delta: f64,
    /// Real or complex points standing in for "all lambda".
    pub lambdas: Vec<C64>,
    /// Set with an accumulation point in the right half-plane.
    pub lambda_set: Vec<C64>,
    pub nonreal: C64,
    pub quadrature: Refinement,
    pub interval_grid: usize,
    pub halfopen_grid: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            t: 1.0,
            horizon: 1.0,
            delta: 0.1,
            lambdas: vec![real(1.0), c64(2.0, 1.0)],
            lambda_set: (1..=8).map(|k| real(1.0 + 1.0 / k as f64)).collect(),
            nonreal: c64(1.0, 1.0),
            quadrature: Refinement::default(),
            interval_grid: 64,
            halfopen_grid: 128,
        }
    }
}

fn check_pair(seq: &SemigroupEvaluator, reference: &SemigroupEvaluator) -> Result<()> {
    if seq.ambient_dim() != reference.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "sequence ambient {} vs reference {}",
            seq.ambient_dim(),
            reference.ambient_dim()
        )));
    }
    Ok(())
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn max_pairing(diffs: &[CVec], probes: &[CVec]) -> f64 {
    max_of(
        diffs
            .iter()
            .flat_map(|d| probes.iter().map(move |g| inner(d, g).norm())),
    )
}

fn collect<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

/// `max_{f,g} |((S^n_t - S_t) f, g)|`.
pub fn wot_semigroup_metric(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    t: f64,
    probes: &[CVec],
) -> Result<f64> {
    check_pair(seq, reference)?;
    let diffs = collect(par_map(probes, |f| Ok(seq.apply(t, f)? - reference.apply(t, f)?)))?;
    Ok(max_pairing(&diffs, probes))
}

/// `(S^n_t - S_t) f` on the nodes of `rule`.
fn difference_path(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    rule: &Rule,
    f: &CVec,
) -> Result<Vec<CVec>> {
    let a = seq.trajectory(&rule.nodes, f)?;
    let b = reference.trajectory(&rule.nodes, f)?;
    Ok(a.into_iter().zip(b).map(|(x, y)| x - y).collect())
}

fn weighted_sum(path: &[CVec], weights: &[f64], dim: usize) -> CVec {
    let mut acc = CVec::from_element(dim, ZERO);
    for (x, &w) in path.iter().zip(weights) {
        acc += x * real(w);
    }
    acc
}

/// `max_{f,g} |int_0^T ((S^n_t - S_t) f, g) dt|`. With `vector_valued`, `g`
/// ranges over step functions equal to one probe on `[0, T/2)` and another
/// on `[T/2, T]`.
pub fn weak_time_integral_metric(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    horizon: f64,
    probes: &[CVec],
    vector_valued: bool,
    quad: &Refinement,
) -> Result<f64> {
    check_pair(seq, reference)?;
    let dim = seq.ambient_dim();
    let quantity = if vector_valued {
        "vector-valued weak time integral"
    } else {
        "weak time integral"
    };
    quad.run(quantity, |nodes| {
        if !vector_valued {
            let rule = Rule::geometric(horizon, nodes, GEOMETRIC_START);
            let integrals = collect(par_map(probes, |f| {
                Ok(weighted_sum(&difference_path(seq, reference, &rule, f)?, &rule.weights, dim))
            }))?;
            return Ok(max_pairing(&integrals, probes));
        }
        let head = Rule::geometric(0.5 * horizon, nodes / 2, GEOMETRIC_START);
        let tail = Rule::uniform(0.5 * horizon, horizon, nodes / 2);
        let pieces = collect(par_map(probes, |f| {
            let a = weighted_sum(&difference_path(seq, reference, &head, f)?, &head.weights, dim);
            let b = weighted_sum(&difference_path(seq, reference, &tail, f)?, &tail.weights, dim);
            Ok((a, b))
        }))?;
        let mut best: f64 = 0.0;
        for (a, b) in &pieces {
            let first: Vec<C64> = probes.iter().map(|g| inner(a, g)).collect();
            let second: Vec<C64> = probes.iter().map(|g| inner(b, g)).collect();
            for x in &first {
                for y in &second {
                    best = best.max((x + y).norm());
                }
            }
        }
        Ok(best)
    })
}

/// `max_f int_0^T ||(S^n_t - S_t) f|| dt`.
pub fn l1_strong_metric(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    horizon: f64,
    probes: &[CVec],
    quad: &Refinement,
) -> Result<f64> {
    check_pair(seq, reference)?;
    quad.run("L1 strong integral", |nodes| {
        let rule = Rule::geometric(horizon, nodes, GEOMETRIC_START);
        let values = collect(par_map(probes, |f| {
            let path = difference_path(seq, reference, &rule, f)?;
            Ok(path.iter().zip(&rule.weights).map(|(d, w)| w * d.norm()).sum::<f64>())
        }))?;
        Ok(max_of(values))
    })
}

/// Both sides of the energy identity
/// `int_0^T ||D_t f||^2 = 1/2 int_0^{2T} (D_t f, f) - 2 Re int_0^T (D_t f, S_t f)`
/// with `D_t = S^n_t - S_t`, for self-adjoint pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Identity {
    pub lhs: f64,
    pub rhs: f64,
}

impl L2Identity {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

pub fn l2_identity_check(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    horizon: f64,
    f: &CVec,
    nodes: usize,
) -> Result<L2Identity> {
    check_pair(seq, reference)?;
    if !seq.is_symmetric() || !reference.is_symmetric() {
        return Err(Error::NotSymmetric("both operators must be self-adjoint".into()));
    }
    let rule = Rule::geometric(horizon, nodes, GEOMETRIC_START);
    let seq_path = seq.trajectory(&rule.nodes, f)?;
    let ref_path = reference.trajectory(&rule.nodes, f)?;
    let mut lhs = 0.0;
    let mut cross = ZERO;
    for ((a, b), &w) in seq_path.iter().zip(&ref_path).zip(&rule.weights) {
        let d = a - b;
        lhs += w * d.norm_squared();
        cross += inner(&d, b) * w;
    }
    let double = Rule::geometric(2.0 * horizon, nodes, GEOMETRIC_START);
    let d2 = difference_path(seq, reference, &double, f)?;
    let diag: C64 = d2
        .iter()
        .zip(&double.weights)
        .map(|(d, &w)| inner(d, f) * w)
        .sum();
    Ok(L2Identity {
        lhs,
        rhs: 0.5 * diag.re - 2.0 * cross.re,
    })
}

/// `max_f ||(R_n - R) f||` (SOT) or `max_{f,g} |((R_n - R) f, g)|` (WOT) at
/// `lambda`, with `R = (lambda I + A)^{-1}`.
pub fn resolvent_metric(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    lambda: C64,
    probes: &[CVec],
    mode: ResolventMode,
) -> Result<f64> {
    check_pair(seq, reference)?;
    if !(lambda.re > 0.0) {
        return Err(Error::InvalidArgument(format!("Re lambda must be > 0, got {lambda}")));
    }
    let diffs = collect(par_map(probes, |f| {
        Ok(seq.resolvent_apply(lambda, f)? - reference.resolvent_apply(lambda, f)?)
    }))?;
    Ok(match mode {
        ResolventMode::Sot => max_of(diffs.iter().map(|d| d.norm())),
        ResolventMode::Wot => max_pairing(&diffs, probes),
    })
}

/// `||R_n(lambda) f||^2` against
/// `(lambda - conj lambda)^{-1} [(R_n(conj lambda) f, f) - (R_n(lambda) f, f)]`.
pub fn wot_norm_limit_bridge(
    seq: &SemigroupEvaluator,
    _reference: &SemigroupEvaluator,
    lambda: C64,
    f: &CVec,
) -> Result<(f64, f64)> {
    if lambda.im == 0.0 {
        return Err(Error::RealLambda("lambda must be nonreal".into()));
    }
    if !seq.is_symmetric() {
        return Err(Error::NotSymmetric("both operators must be self-adjoint".into()));
    }
    let r = seq.resolvent_apply(lambda, f)?;
    let rc = seq.resolvent_apply(lambda.conj(), f)?;
    let rhs = (inner(&rc, f) - inner(&r, f)) / (lambda - lambda.conj());
    Ok((r.norm_squared(), rhs.re))
}

/// `max_f max_{t in [delta, T]} ||(S^n_t - S_t) f||` on a uniform grid.
pub fn sup_interval_strong_metric(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    delta: f64,
    horizon: f64,
    probes: &[CVec],
    grid: usize,
) -> Result<f64> {
    check_pair(seq, reference)?;
    if !(delta > 0.0 && delta < horizon) {
        return Err(Error::InvalidArgument(format!("need 0 < delta < T, got {delta}, {horizon}")));
    }
    let grid = grid.max(64);
    let times: Vec<f64> = (0..grid)
        .map(|k| delta + (horizon - delta) * k as f64 / (grid - 1) as f64)
        .collect();
    sup_over_times(seq, reference, &times, probes)
}

fn sup_over_times(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    times: &[f64],
    probes: &[CVec],
) -> Result<f64> {
    let values = collect(par_map(probes, |f| {
        let a = seq.trajectory(times, f)?;
        let b = reference.trajectory(times, f)?;
        Ok(max_of(a.iter().zip(&b).map(|(x, y)| (x - y).norm())))
    }))?;
    Ok(max_of(values))
}

/// Time grid for the half-open sup: geometric from `1e-8 T` to `T`.
pub fn halfopen_times(horizon: f64, grid: usize) -> Vec<f64> {
    let grid = grid.max(2);
    let t0 = horizon * 1e-8;
    let ratio = (horizon / t0).powf(1.0 / (grid - 1) as f64);
    let mut times: Vec<f64> = (0..grid).map(|k| t0 * ratio.powi(k as i32)).collect();
    times[grid - 1] = horizon;
    times
}

/// Sup over `(0, T]`: geometric grid plus the `t -> 0` value `||(P_n - P) f||`.
pub fn sup_halfopen_strong_metric(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    horizon: f64,
    probes: &[CVec],
    grid: usize,
) -> Result<f64> {
    check_pair(seq, reference)?;
    let times = halfopen_times(horizon, grid);
    let interior = sup_over_times(seq, reference, &times, probes)?;
    Ok(interior.max(projection_sot_metric(seq, reference, probes)?))
}

/// `max_f ||(P_n - P) f||`.
pub fn projection_sot_metric(
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    probes: &[CVec],
) -> Result<f64> {
    check_pair(seq, reference)?;
    Ok(max_of(
        probes
            .iter()
            .map(|f| (seq.projection(f) - reference.projection(f)).norm()),
    ))
}

/// Value of one metric kind under `params`.
pub fn evaluate_metric(
    kind: MetricKind,
    seq: &SemigroupEvaluator,
    reference: &SemigroupEvaluator,
    probes: &[CVec],
    params: &MetricParams,
) -> Result<f64> {
    let over = |lambdas: &[C64], mode| -> Result<f64> {
        let mut best: f64 = 0.0;
        for &l in lambdas {
            best = best.max(resolvent_metric(seq, reference, l, probes, mode)?);
        }
        Ok(best)
    };
    match kind {
        MetricKind::WotSemigroupPointwise => wot_semigroup_metric(seq, reference, params.t, probes),
        MetricKind::WeakTimeIntegral => {
            weak_time_integral_metric(seq, reference, params.horizon, probes, false, &params.quadrature)
        }
        MetricKind::WeakTimeIntegralVectorValued => {
            weak_time_integral_metric(seq, reference, params.horizon, probes, true, &params.quadrature)
        }
        MetricKind::L1Strong => l1_strong_metric(seq, reference, params.horizon, probes, &params.quadrature),
        MetricKind::ResolventSot => over(&params.lambdas, ResolventMode::Sot),
        MetricKind::ResolventSotSingle => over(&params.lambdas[..1], ResolventMode::Sot),
        MetricKind::ResolventWot => over(&params.lambdas, ResolventMode::Wot),
        MetricKind::ResolventWotSet => over(&params.lambda_set, ResolventMode::Wot),
        MetricKind::ResolventWotNonreal => {
            if params.nonreal.im == 0.0 {
                return Err(Error::RealLambda("lambda must be nonreal".into()));
            }
            over(&[params.nonreal], ResolventMode::Wot)
        }
        MetricKind::SupIntervalStrong => sup_interval_strong_metric(
            seq,
            reference,
            params.delta,
            params.horizon,
            probes,
            params.interval_grid,
        ),
        MetricKind::SupHalfopenStrong => {
            sup_halfopen_strong_metric(seq, reference, params.horizon, probes, params.halfopen_grid)
        }
        MetricKind::ProjectionSot => projection_sot_metric(seq, reference, probes),
    }
}

/// Record the sampled parameters on a trace.
pub fn record_params(trace: &mut ConvergenceTrace, params: &MetricParams, probe_seed: u64) {
    trace.param("t", params.t);
    trace.param("T", params.horizon);
    trace.param("delta", params.delta);
    trace.param("lambdas", fmt_lambdas(&params.lambdas));
    trace.param("lambda_set", fmt_lambdas(&params.lambda_set));
    trace.param("nonreal", fmt_lambdas(&[params.nonreal]));
    trace.param("probe_seed", probe_seed);
}

fn fmt_lambdas(ls: &[C64]) -> String {
    ls.iter()
        .map(|l| format!("{}{:+}i", l.re, l.im))
        .collect::<Vec<_>>()
        .join(";")
}

/// Outcome of the co-movement experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Comovement {
    pub trace: ConvergenceTrace,
    pub strict: f64,
    pub loose: f64,
    /// At every index: if one metric is below `strict`, all are below `loose`.
    pub comoving: bool,
    /// Every metric is below `loose` at the last index.
    pub all_converged: bool,
    /// Metrics below `loose` at the last index.
    pub converged: Vec<MetricKind>,
}

/// All twelve metrics along a chain `(index, evaluator)` against `reference`.
pub fn equivalence_comovement_experiment(
    family: &[(f64, SemigroupEvaluator)],
    reference: &SemigroupEvaluator,
    params: &MetricParams,
    probes: &crate::probes::ProbeSet,
    thresholds: (f64, f64),
) -> Result<Comovement> {
    let (strict, loose) = thresholds;
    let index: Vec<f64> = family.iter().map(|(n, _)| *n).collect();
    let mut trace = ConvergenceTrace::new("equivalence", "n", index);
    record_params(&mut trace, params, probes.seed());
    trace.param("probes", probes.describe());
    let mut table = Vec::with_capacity(MetricKind::ALL.len());
    for kind in MetricKind::ALL {
        let mut values = Vec::with_capacity(family.len());
        for (_, ev) in family {
            values.push(evaluate_metric(kind, ev, reference, probes, params)?);
        }
        trace.insert(kind.tag(), values.clone())?;
        table.push((kind, values));
    }
    // A metric below `strict` along the whole chain (e.g. the projection
    // metric when every subspace equals the reference one) carries no signal.
    let informative: Vec<&(MetricKind, Vec<f64>)> =
        table.iter().filter(|(_, v)| v.iter().any(|x| *x > strict)).collect();
    let comoving = (0..family.len()).all(|i| {
        let any_strict = informative.iter().any(|(_, v)| v[i] <= strict);
        !any_strict || table.iter().all(|(_, v)| v[i] <= loose)
    });
    let converged: Vec<MetricKind> = table
        .iter()
        .filter(|(_, v)| v.last().is_some_and(|x| *x <= loose))
        .map(|(k, _)| *k)
        .collect();
    Ok(Comovement {
        all_converged: !family.is_empty() && converged.len() == MetricKind::ALL.len(),
        trace,
        strict,
        loose,
        comoving,
        converged,
    })
}

pub const REAL_PART_WOT_TAG: &str = "REAL_PART_RESOLVENT_WOT_NONREAL";

/// WOT resolvent metrics for `A_n` at `lambda` and for the real parts at the
/// nonreal `lambda_prime`, next to the SOT metric for `A_n` at `lambda`.
pub fn real_part_condition_experiment(
    seq: &[(f64, FormOperator)],
    reference: &FormOperator,
    lambda: C64,
    lambda_prime: C64,
    probes: &crate::probes::ProbeSet,
) -> Result<ConvergenceTrace> {
    if lambda_prime.im == 0.0 {
        return Err(Error::RealLambda("lambda must be nonreal".into()));
    }
    if !(lambda.re > 0.0 && lambda_prime.re > 0.0) {
        return Err(Error::InvalidArgument("lambda and lambda' need Re > 0".into()));
    }
    let ref_ev = SemigroupEvaluator::new(reference.clone())?;
    let ref_re = SemigroupEvaluator::new(real_part_operator(reference))?;
    let mut wot = Vec::new();
    let mut wot_re = Vec::new();
    let mut sot = Vec::new();
    for (_, op) in seq {
        if op.sector()?.vertex < 0.0 {
            return Err(Error::InvalidArgument("forms need vertex >= 0".into()));
        }
        let ev = SemigroupEvaluator::new(op.clone())?;
        let ev_re = SemigroupEvaluator::new(real_part_operator(op))?;
        wot.push(resolvent_metric(&ev, &ref_ev, lambda, probes, ResolventMode::Wot)?);
        wot_re.push(resolvent_metric(&ev_re, &ref_re, lambda_prime, probes, ResolventMode::Wot)?);
        sot.push(resolvent_metric(&ev, &ref_ev, lambda, probes, ResolventMode::Sot)?);
    }
    let mut trace = ConvergenceTrace::new("real_part", "n", seq.iter().map(|(n, _)| *n).collect());
    trace.param("lambda", fmt_lambdas(&[lambda]));
    trace.param("lambda_prime", fmt_lambdas(&[lambda_prime]));
    trace.param("probes", probes.describe());
    trace.insert(MetricKind::ResolventWot.tag(), wot)?;
    trace.insert(REAL_PART_WOT_TAG, wot_re)?;
    trace.insert(MetricKind::ResolventSot.tag(), sot)?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{assemble_form_operator, SubspaceBasis};
    use crate::linalg::CMat;
    use crate::probes::ProbeSet;
    use crate::quadrature::gauss_legendre_on;

    fn exp_integral(a: f64, horizon: f64) -> f64 {
        gauss_legendre_on(64, 0.0, horizon).integrate(|t| (-a * t).exp())
    }

    fn diag(values: &[f64]) -> SemigroupEvaluator {
        let n = values.len();
        let k = CMat::from_diagonal(&CVec::from_iterator(n, values.iter().map(|&v| real(v))));
        SemigroupEvaluator::new(assemble_form_operator(SubspaceBasis::identity(n), k).unwrap()).unwrap()
    }

    fn ones(n: usize) -> Vec<CVec> {
        vec![CVec::from_element(n, real(1.0))]
    }

    #[test]
    fn identical_operators_give_zero_everywhere() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let b = diag(&[1.0, 2.0, 3.0]);
        let probes = ProbeSet::standard(3, 1).unwrap();
        let params = MetricParams::default();
        for kind in MetricKind::ALL {
            assert_eq!(evaluate_metric(kind, &a, &b, &probes, &params).unwrap(), 0.0, "{}", kind.tag());
        }
    }

    #[test]
    fn scalar_weak_time_integral_closed_form() {
        let n = 5.0;
        let a = diag(&[2.0 + 1.0 / n]);
        let b = diag(&[2.0]);
        let v = weak_time_integral_metric(&a, &b, 1.0, &ones(1), false, &Refinement::default()).unwrap();
        let exact = (1.0 - (-2.2f64).exp()) / 2.2 - (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((v - exact.abs()).abs() < 1e-12, "{v} vs {exact}");
        let l1 = l1_strong_metric(&a, &b, 1.0, &ones(1), &Refinement::default()).unwrap();
        assert!((l1 - exact.abs()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_mode_reduces_to_scalar_case() {
        let a = diag(&[1.0, 2.2, 5.0]);
        let b = diag(&[1.0, 2.0, 5.0]);
        let mut e = CVec::zeros(3);
        e[1] = real(1.0);
        let v = weak_time_integral_metric(&a, &b, 1.0, &[e], false, &Refinement::default()).unwrap();
        let exact = (exp_integral(2.2, 1.0) - exp_integral(2.0, 1.0)).abs();
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn scalar_sup_interval_is_attained_at_delta() {
        let a = diag(&[3.0]);
        let b = diag(&[2.0]);
        // e^{-2t} - e^{-3t} peaks at t = ln(3/2) ~ 0.405; with delta = 0.5 the
        // maximum sits at the left endpoint.
        let v = sup_interval_strong_metric(&a, &b, 0.5, 1.0, &ones(1), 64).unwrap();
        let exact = (-1.0f64).exp() - (-1.5f64).exp();
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn bridge_scalar_value() {
        let a = diag(&[2.0]);
        let (lhs, rhs) = wot_norm_limit_bridge(&a, &a, c64(1.0, 1.0), &ones(1)[0]).unwrap();
        assert!((lhs - 0.1).abs() < 1e-15);
        assert!((rhs - 0.1).abs() < 1e-15);
        assert!(matches!(
            wot_norm_limit_bridge(&a, &a, real(1.0), &ones(1)[0]),
            Err(Error::RealLambda(_))
        ));
        let (z1, z2) = wot_norm_limit_bridge(&a, &a, c64(1.0, 1.0), &CVec::zeros(1)).unwrap();
        assert_eq!((z1, z2), (0.0, 0.0));
    }

    #[test]
    fn l2_identity_scalar_pair() {
        let a = diag(&[2.5]);
        let b = diag(&[2.0]);
        let r = l2_identity_check(&a, &b, 1.0, &ones(1)[0], 512).unwrap();
        // int_0^1 (e^{-2.5t} - e^{-2t})^2 dt
        let exact = exp_integral(5.0, 1.0) - 2.0 * exp_integral(4.5, 1.0) + exp_integral(4.0, 1.0);
        assert!((r.lhs - exact).abs() < 1e-12);
        assert!(r.residual() < 1e-12);
    }

    #[test]
    fn l2_identity_needs_symmetry() {
        let k = CMat::from_row_slice(2, 2, &[real(1.0), real(1.0), real(-1.0), real(1.0)]);
        let ns = SemigroupEvaluator::new(assemble_form_operator(SubspaceBasis::identity(2), k).unwrap()).unwrap();
        let s = diag(&[1.0, 1.0]);
        assert!(matches!(
            l2_identity_check(&ns, &s, 1.0, &ones(2)[0], 64),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn projection_metric_for_growing_coordinate_spaces() {
        let n = 4;
        let full = diag(&[1.0; 4]);
        let mut e = CVec::zeros(n);
        e[n - 1] = real(1.0);
        for m in 1..=n {
            let idx: Vec<usize> = (0..m).collect();
            let op = assemble_form_operator(
                SubspaceBasis::canonical(n, &idx).unwrap(),
                CMat::identity(m, m),
            )
            .unwrap();
            let ev = SemigroupEvaluator::new(op).unwrap();
            let v = projection_sot_metric(&ev, &full, std::slice::from_ref(&e)).unwrap();
            assert_eq!(v, if m < n { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn comovement_on_constant_chain() {
        let r = diag(&[1.0, 4.0]);
        let family = vec![(1.0, diag(&[1.0, 4.0])), (2.0, diag(&[1.0, 4.0]))];
        let probes = ProbeSet::standard(2, 3).unwrap();
        let out = equivalence_comovement_experiment(&family, &r, &MetricParams::default(), &probes, (1e-6, 1e-4))
            .unwrap();
        assert!(out.comoving && out.all_converged);
        assert!(out.trace.series().iter().all(|(_, v)| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn trivial_projection_metric_does_not_break_comovement() {
        let r = diag(&[1.0, 4.0]);
        let family: Vec<_> = [1.0, 10.0].iter().map(|&n| (n, diag(&[1.0 + 1.0 / n, 4.0]))).collect();
        let probes = ProbeSet::standard(2, 3).unwrap();
        let out = equivalence_comovement_experiment(&family, &r, &MetricParams::default(), &probes, (1e-6, 1e-4))
            .unwrap();
        assert_eq!(out.trace.get(MetricKind::ProjectionSot.tag()).unwrap(), &[0.0, 0.0]);
        assert!(out.comoving && !out.all_converged);
    }

    #[test]
    fn metric_tags_round_trip() {
        for k in MetricKind::ALL {
            assert_eq!(MetricKind::from_tag(k.tag()), Some(k));
        }
    }
}
