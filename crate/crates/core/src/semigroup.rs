//! Degenerate semigroups `S_t = e^{-tA} P` generated by form operators.
//!
//! With `E = B L^{-*}` an orthonormal basis of the form domain and
//! `M = L^{-1} K L^{-*}` the reduced generator,
//!
//! ```text
//! S_t f = E exp(-t M) E* f,     (lambda I + A)^{-1} f = E (lambda + M)^{-1} E* f.
//! ```
//!
//! Normal generators, and non-normal ones with well-conditioned eigenvectors,
//! go through an eigendecomposition; everything else through the Padé
//! exponential. The contour-integral route is kept as an
//! independent evaluation path.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::form::FormOperator;
use crate::linalg::{
    c64, expm, hermitian_eigh, power_norm, real, schur, CMat, CVec, C64, I, ONE, ZERO,
};
use crate::quadrature::{gauss_legendre_on, Rule};

/// `||S_t|| <= constant * exp(omega t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialBound {
    pub constant: f64,
    pub omega: f64,
}

#[derive(Debug, Clone)]
struct Spectral {
    values: Vec<C64>,
    /// Eigenvectors `W` of `M` and their inverse.
    reduced_modes: CMat,
    reduced_dual: CMat,
    /// `E W` and `W^{-1} E*`.
    modes: CMat,
    dual: CMat,
}

impl Spectral {
    fn new(values: Vec<C64>, w: CMat, w_inv: CMat, embed: &CMat) -> Self {
        Self {
            values,
            modes: embed * &w,
            dual: &w_inv * embed.adjoint(),
            reduced_modes: w,
            reduced_dual: w_inv,
        }
    }
}

/// Largest eigenvector condition number accepted for the diagonal path of a
/// non-normal generator.
pub const EIGENVECTOR_CONDITION_MAX: f64 = 1e4;

/// Eigenvectors of upper-triangular `t`, or `None` when (nearly) defective.
fn triangular_eigenvectors(t: &CMat) -> Option<(CMat, CMat)> {
    let m = t.nrows();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let mut v = CMat::zeros(m, m);
    for k in 0..m {
        v[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in (i + 1)..=k {
                s += t[(i, j)] * v[(j, k)];
            }
            let d = t[(i, i)] - t[(k, k)];
            if d.norm() <= 1e-10 * scale {
                return None;
            }
            v[(i, k)] = -s / d;
        }
        let n = v.column(k).norm();
        v.column_mut(k).unscale_mut(n);
    }
    let inv = v.clone().try_inverse()?;
    let cond = v.norm() * inv.norm();
    (cond.is_finite() && cond <= EIGENVECTOR_CONDITION_MAX).then_some((v, inv))
}

/// Reduced generator data for evaluating `S_t f`, resolvents and `P f`.
#[derive(Debug)]
pub struct SemigroupEvaluator {
    source: FormOperator,
    embed: CMat,
    reduced: CMat,
    spectral: Option<Spectral>,
    schur: OnceLock<Option<(CMat, CMat)>>,
    exp_cache: Mutex<HashMap<u64, CMat>>,
    bound: ExponentialBound,
}

impl SemigroupEvaluator {
    pub fn new(source: FormOperator) -> Result<Self> {
        let embed = source.orthonormal_basis().clone();
        let reduced = source.reduced_generator();
        let m = reduced.nrows();
        let lambda_min = source.real_part_spectrum().first().copied().unwrap_or(0.0);
        let schur_cell = OnceLock::new();
        let spectral = if source.is_symmetric() {
            let (vals, vecs) = hermitian_eigh(&reduced);
            let inv = vecs.adjoint();
            Some(Spectral::new(vals.into_iter().map(real).collect(), vecs, inv, &embed))
        } else {
            let decomposition = schur(&reduced);
            let out = decomposition.as_ref().and_then(|(q, t)| {
                let values = (0..m).map(|i| t[(i, i)]).collect();
                if is_normal(&reduced) {
                    return Some(Spectral::new(values, q.clone(), q.adjoint(), &embed));
                }
                let (v, v_inv) = triangular_eigenvectors(t)?;
                Some(Spectral::new(values, q * v, v_inv * q.adjoint(), &embed))
            });
            let _ = schur_cell.set(decomposition);
            out
        };
        Ok(Self {
            source,
            embed,
            reduced,
            spectral,
            schur: schur_cell,
            exp_cache: Mutex::new(HashMap::new()),
            bound: ExponentialBound {
                constant: 1.0,
                omega: -lambda_min,
            },
        })
    }

    pub fn source(&self) -> &FormOperator {
        &self.source
    }

    pub fn reduced_generator(&self) -> &CMat {
        &self.reduced
    }

    pub fn orthonormal_basis(&self) -> &CMat {
        &self.embed
    }

    pub fn bound(&self) -> ExponentialBound {
        self.bound
    }

    pub fn ambient_dim(&self) -> usize {
        self.embed.nrows()
    }

    /// True when `M` is diagonalized (normal, or with well-conditioned
    /// eigenvectors) rather than exponentiated by Padé.
    pub fn is_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn is_symmetric(&self) -> bool {
        self.source.is_symmetric()
    }

    /// Eigenvalues of the reduced generator on the diagonal path.
    pub fn spectrum(&self) -> Option<&[C64]> {
        self.spectral.as_ref().map(|s| s.values.as_slice())
    }

    fn check_len(&self, f: &CVec) -> Result<()> {
        if f.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} in ambient dimension {}",
                f.len(),
                self.ambient_dim()
            )));
        }
        Ok(())
    }

    /// `S_t f` for `t > 0`.
    pub fn apply(&self, t: f64, f: &CVec) -> Result<CVec> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("semigroup time must be > 0, got {t}")));
        }
        self.check_len(f)?;
        if let Some(sp) = &self.spectral {
            let coeff = &sp.dual * f;
            let scaled = CVec::from_iterator(
                coeff.len(),
                coeff.iter().zip(&sp.values).map(|(c, mu)| c * (-*mu * t).exp()),
            );
            return Ok(&sp.modes * scaled);
        }
        let w = self.embed.adjoint() * f;
        Ok(&self.embed * (self.exp_reduced(t)? * w))
    }

    /// `exp(-t M)`, cached by `t`.
    pub fn exp_reduced(&self, t: f64) -> Result<CMat> {
        if let Some(sp) = &self.spectral {
            let d = CMat::from_diagonal(&CVec::from_iterator(
                sp.values.len(),
                sp.values.iter().map(|mu| (-*mu * t).exp()),
            ));
            return Ok(&sp.reduced_modes * d * &sp.reduced_dual);
        }
        let key = t.to_bits();
        if let Some(hit) = self.exp_cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let e = expm(&(&self.reduced * real(-t)))?;
        let mut cache = self.exp_cache.lock().unwrap();
        if cache.len() > 4096 {
            cache.clear();
        }
        cache.insert(key, e.clone());
        Ok(e)
    }

    /// `S_t f` at every listed time. Uniform grids reuse a single step
    /// exponential; `t = 0` yields the limit projection `P f`.
    pub fn trajectory(&self, times: &[f64], f: &CVec) -> Result<Vec<CVec>> {
        self.check_len(f)?;
        if times.iter().any(|&t| t < 0.0 || !t.is_finite()) {
            return Err(Error::InvalidArgument("negative or non-finite time".into()));
        }
        let w = self.embed.adjoint() * f;
        if let Some(sp) = &self.spectral {
            let coeff = &sp.dual * f;
            return Ok(times
                .iter()
                .map(|&t| {
                    let scaled = CVec::from_iterator(
                        coeff.len(),
                        coeff.iter().zip(&sp.values).map(|(c, mu)| c * (-*mu * t).exp()),
                    );
                    &sp.modes * scaled
                })
                .collect());
        }
        let uniform = times.len() > 2 && {
            let dt = times[1] - times[0];
            dt > 0.0
                && times
                    .windows(2)
                    .all(|p| ((p[1] - p[0]) - dt).abs() <= 1e-12 * dt.max(times[times.len() - 1]))
        };
        let mut out = Vec::with_capacity(times.len());
        if uniform {
            let dt = times[1] - times[0];
            let step = expm(&(&self.reduced * real(-dt)))?;
            let mut x = if times[0] == 0.0 {
                w.clone()
            } else {
                self.exp_reduced(times[0])? * &w
            };
            for k in 0..times.len() {
                if k > 0 {
                    x = &step * x;
                }
                out.push(&self.embed * &x);
            }
            return Ok(out);
        }
        for &t in times {
            if t == 0.0 {
                out.push(&self.embed * &w);
            } else {
                out.push(&self.embed * (self.exp_reduced(t)? * &w));
            }
        }
        Ok(out)
    }

    /// `(lambda I + A)^{-1} f` through the reduced generator.
    pub fn resolvent_apply(&self, lambda: C64, f: &CVec) -> Result<CVec> {
        self.check_len(f)?;
        let w = self.embed.adjoint() * f;
        let x = self.reduced_resolvent(lambda, &w)?;
        Ok(&self.embed * x)
    }

    /// `(lambda + M)^{-1} w` in orthonormal coordinates.
    pub fn reduced_resolvent(&self, lambda: C64, w: &CVec) -> Result<CVec> {
        if let Some(sp) = &self.spectral {
            let c = &sp.reduced_dual * w;
            let mut scaled = c.clone();
            for (z, mu) in scaled.iter_mut().zip(&sp.values) {
                let d = lambda + mu;
                if d.norm() == 0.0 {
                    return Err(Error::SingularSystem(format!("lambda = {lambda} is an eigenvalue")));
                }
                *z /= d;
            }
            return Ok(&sp.reduced_modes * scaled);
        }
        if let Some((q, t)) = self.schur_form() {
            let y = q.adjoint() * w;
            let x = shifted_upper_solve(t, lambda, &y)?;
            return Ok(q * x);
        }
        let m = self.reduced.nrows();
        (&self.reduced + CMat::identity(m, m) * lambda)
            .lu()
            .solve(w)
            .ok_or_else(|| Error::SingularSystem(format!("lambda I + M singular at {lambda}")))
    }

    fn schur_form(&self) -> Option<&(CMat, CMat)> {
        self.schur.get_or_init(|| schur(&self.reduced)).as_ref()
    }

    /// Orthogonal limit projection `P f = lim_{t -> 0} S_t f`.
    pub fn projection(&self, f: &CVec) -> CVec {
        &self.embed * (self.embed.adjoint() * f)
    }

    /// `S_t f` via `(1 / 2 pi i) int_Gamma e^{t z} (z I + A)^{-1} f dz`.
    pub fn via_contour(&self, t: f64, f: &CVec, params: &ContourParams) -> Result<ContourValue> {
        semigroup_via_contour(self, t, f, params)
    }
}

fn is_normal(m: &CMat) -> bool {
    let scale = m.norm().powi(2).max(f64::MIN_POSITIVE);
    (m * m.adjoint() - m.adjoint() * m).norm() <= 1e-12 * scale
}

/// Solve `(T + lambda I) x = y` for upper-triangular `T`.
fn shifted_upper_solve(t: &CMat, lambda: C64, y: &CVec) -> Result<CVec> {
    let n = t.nrows();
    let mut x = y.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= t[(i, j)] * x[j];
        }
        let d = t[(i, i)] + lambda;
        if d.norm() == 0.0 {
            return Err(Error::SingularSystem(format!("lambda = {lambda} hits the spectrum")));
        }
        x[i] = s / d;
    }
    Ok(x)
}

/// `S_t f`, i.e. `B L^{-*} exp(-t M) L^{-1} B* f`.
pub fn semigroup_apply(ev: &SemigroupEvaluator, t: f64, f: &CVec) -> Result<CVec> {
    ev.apply(t, f)
}

/// Contour of two rays `-vertex + r e^{+-i angle}` joined by an arc of
/// radius `radius` around `-vertex`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourParams {
    pub angle: f64,
    pub radius: f64,
    pub truncation: f64,
    pub nodes: usize,
}

/// Minimum Gauss–Legendre nodes per contour leg.
pub const MIN_CONTOUR_NODES: usize = 8;

impl ContourParams {
    /// Default contour for a form of the given semiangle at time `t`: angle
    /// halfway between `pi/2` and `pi - semiangle`, arc radius `1/t`, and rays
    /// truncated where `e^{t r cos(angle)} < e^{-40}`.
    pub fn for_sector(semiangle: f64, t: f64, nodes: usize) -> Self {
        let angle = FRAC_PI_2 + 0.5 * (FRAC_PI_2 - semiangle);
        let radius = 1.0 / t;
        let truncation = (40.0 / (t * angle.cos().abs())).max(4.0 * radius);
        Self {
            angle,
            radius,
            truncation,
            nodes,
        }
    }

    /// Admissible angle window `(pi/2, pi - semiangle)`.
    pub fn window(semiangle: f64) -> (f64, f64) {
        (FRAC_PI_2, PI - semiangle)
    }
}

/// Contour-quadrature value together with the change observed when halving
/// the node count, reported as the quadrature tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourValue {
    pub value: CVec,
    pub tolerance: f64,
}

pub fn semigroup_via_contour(
    ev: &SemigroupEvaluator,
    t: f64,
    f: &CVec,
    params: &ContourParams,
) -> Result<ContourValue> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("contour time must be > 0, got {t}")));
    }
    ev.check_len(f)?;
    let sector = ev.source.sector()?;
    let (lo, hi) = ContourParams::window(sector.semiangle);
    if !(params.angle > lo && params.angle < hi) {
        return Err(Error::ContourOutsideSector {
            angle: params.angle,
            lo,
            hi,
        });
    }
    if params.nodes < MIN_CONTOUR_NODES {
        return Err(Error::InvalidArgument(format!(
            "contour needs at least {MIN_CONTOUR_NODES} nodes per leg"
        )));
    }
    if !(params.radius > 0.0 && params.truncation > params.radius) {
        return Err(Error::InvalidArgument("contour radius/truncation inconsistent".into()));
    }
    let w = ev.embed.adjoint() * f;
    let fine = contour_reduced(ev, t, &w, params, sector.vertex, params.nodes)?;
    let coarse = contour_reduced(ev, t, &w, params, sector.vertex, params.nodes / 2)?;
    Ok(ContourValue {
        tolerance: (&fine - &coarse).norm(),
        value: &ev.embed * fine,
    })
}

fn contour_reduced(
    ev: &SemigroupEvaluator,
    t: f64,
    w: &CVec,
    params: &ContourParams,
    vertex: f64,
    nodes: usize,
) -> Result<CVec> {
    let center = real(-vertex);
    let rho = params.radius;
    let theta = params.angle;
    let mut acc = CVec::from_element(w.len(), ZERO);

    // Rays in the logarithmic variable r = rho e^u.
    let rays = gauss_legendre_on(nodes, 0.0, (params.truncation / rho).ln());
    for sign in [1.0, -1.0] {
        let dir = C64::from_polar(1.0, sign * theta);
        for (&u, &wt) in rays.nodes.iter().zip(&rays.weights) {
            let r = rho * u.exp();
            let z = center + dir * r;
            let x = ev.reduced_resolvent(z, w)?;
            // upper ray runs outward (+), lower ray inward (-)
            let weight = (z * t).exp() * dir * (wt * r * sign);
            acc += x * weight;
        }
    }
    // Arc z = center + rho e^{i phi}, phi in [-theta, theta].
    let arc = gauss_legendre_on(nodes, -theta, theta);
    for (&phi, &wt) in arc.nodes.iter().zip(&arc.weights) {
        let e = C64::from_polar(1.0, phi);
        let z = center + e * rho;
        let x = ev.reduced_resolvent(z, w)?;
        let weight = (z * t).exp() * I * e * (rho * wt);
        acc += x * weight;
    }
    Ok(acc / (I * (2.0 * PI)))
}

/// Result of comparing the Laplace transform of `S_t f` with the resolvent.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceCheck {
    pub residual: f64,
    pub resolvent_norm: f64,
}

/// `|| int_0^{t_max} e^{-lambda t} S_t f dt - (lambda I + A)^{-1} f ||`.
pub fn laplace_transform_check(
    ev: &SemigroupEvaluator,
    lambda: C64,
    f: &CVec,
    t_max: f64,
    quad_nodes: usize,
) -> Result<LaplaceCheck> {
    let omega = ev.bound.omega;
    if !(lambda.re > omega) {
        return Err(Error::InvalidArgument(format!(
            "Re lambda = {} must exceed omega = {omega}",
            lambda.re
        )));
    }
    if ((omega - lambda.re) * t_max).exp() >= 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "t_max = {t_max} leaves a Laplace tail above 1e-10"
        )));
    }
    let rule = Rule::geometric(t_max, quad_nodes, 1e-10);
    let path = ev.trajectory(&rule.nodes, f)?;
    let mut integral = CVec::from_element(f.len(), ZERO);
    for ((s, &t), &wt) in path.iter().zip(&rule.nodes).zip(&rule.weights) {
        integral += s * ((-lambda * t).exp() * wt);
    }
    let direct = ev.resolvent_apply(lambda, f)?;
    Ok(LaplaceCheck {
        residual: (integral - &direct).norm(),
        resolvent_norm: direct.norm(),
    })
}

/// Plain limit estimate of `P f` from `S_{t_k} f` at the smallest `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitEstimate {
    pub value: CVec,
    pub projection: CVec,
    pub t: f64,
    /// `||exp(-t M) - I|| * ||f||`.
    pub bound: f64,
}

impl LimitEstimate {
    pub fn deviation(&self) -> f64 {
        (&self.value - &self.projection).norm()
    }
}

pub fn strong_limit_projection(
    ev: &SemigroupEvaluator,
    f: &CVec,
    t_sequence: &[f64],
) -> Result<LimitEstimate> {
    if t_sequence.is_empty() || t_sequence.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("t_sequence must be nonempty and positive".into()));
    }
    if t_sequence.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::InvalidArgument("t_sequence must be decreasing".into()));
    }
    let t = *t_sequence.last().unwrap();
    let value = ev.apply(t, f)?;
    let step = ev.exp_reduced(t)?;
    let m = step.nrows();
    let diff = &step - CMat::identity(m, m);
    let norm = power_norm(m, |x| &diff * x, |x| diff.adjoint() * x, 1e-10, 500);
    Ok(LimitEstimate {
        value,
        projection: ev.projection(f),
        t,
        bound: norm * f.norm(),
    })
}

/// Geometric times `t_0 2^{-k}`, `k = 0..count`.
pub fn geometric_times(t0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| t0 * 0.5f64.powi(k as i32)).collect()
}

#[allow(dead_code)]
fn unit(n: usize, i: usize) -> CVec {
    let mut v = CVec::from_element(n, ZERO);
    v[i] = c64(1.0, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{assemble_form_operator, SubspaceBasis};

    fn scalar(k: f64) -> SemigroupEvaluator {
        let op = assemble_form_operator(SubspaceBasis::identity(1), CMat::from_element(1, 1, real(k)))
            .unwrap();
        SemigroupEvaluator::new(op).unwrap()
    }

    #[test]
    fn scalar_exponential() {
        let ev = scalar(2.0);
        let v = ev.apply(1.0, &unit(1, 0)).unwrap();
        assert!((v[0] - real((-2.0f64).exp())).norm() < 1e-15);
        assert!((v[0].re - 0.1353352832).abs() < 1e-10);
    }

    #[test]
    fn complement_of_form_domain_is_annihilated() {
        let b = CMat::from_column_slice(2, 1, &[real(1.0), real(0.0)]);
        let op = assemble_form_operator(SubspaceBasis::new(b).unwrap(), CMat::from_element(1, 1, real(3.0)))
            .unwrap();
        let ev = SemigroupEvaluator::new(op).unwrap();
        for t in [0.01, 1.0, 7.0] {
            assert_eq!(ev.apply(t, &unit(2, 1)).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn scalar_contour_matches_closed_form() {
        let ev = scalar(2.0);
        let s = ev.source().sector().unwrap();
        let params = ContourParams::for_sector(s.semiangle, 1.0, 64);
        let v = ev.via_contour(1.0, &unit(1, 0), &params).unwrap();
        assert!((v.value[0] - real((-2.0f64).exp())).norm() < 1e-6);
    }

    #[test]
    fn contour_angle_outside_window_is_rejected() {
        let ev = scalar(2.0);
        let params = ContourParams {
            angle: 1.0,
            radius: 1.0,
            truncation: 100.0,
            nodes: 64,
        };
        assert!(matches!(
            ev.via_contour(1.0, &unit(1, 0), &params),
            Err(Error::ContourOutsideSector { .. })
        ));
    }

    #[test]
    fn scalar_laplace_transform() {
        let ev = scalar(2.0);
        let check = laplace_transform_check(&ev, real(1.0), &unit(1, 0), 40.0, 2048).unwrap();
        assert!(check.residual < 1e-8, "{}", check.residual);
        assert!((check.resolvent_norm - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_projector_limit() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = CMat::from_column_slice(2, 1, &[real(s), real(s)]);
        let op = assemble_form_operator(SubspaceBasis::new(b).unwrap(), CMat::from_element(1, 1, real(1.0)))
            .unwrap();
        let ev = SemigroupEvaluator::new(op).unwrap();
        let est = strong_limit_projection(&ev, &unit(2, 0), &geometric_times(1e-3, 12)).unwrap();
        assert!((est.projection[0] - real(0.5)).norm() < 1e-15);
        assert!((est.projection[1] - real(0.5)).norm() < 1e-15);
        assert!(est.deviation() <= est.bound + 1e-15);
        assert!(est.deviation() < 1e-6);
    }

    #[test]
    fn uniform_trajectory_matches_direct_evaluation() {
        let k = CMat::from_row_slice(2, 2, &[real(1.0), real(2.0), real(0.0), real(1.0)]);
        let op = assemble_form_operator(SubspaceBasis::identity(2), k).unwrap();
        let ev = SemigroupEvaluator::new(op).unwrap();
        assert!(!ev.is_spectral());
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.04).collect();
        let f = CVec::from_vec(vec![real(1.0), c64(0.0, 1.0)]);
        let path = ev.trajectory(&times, &f).unwrap();
        for (x, &t) in path.iter().zip(&times).skip(1) {
            assert!((x - ev.apply(t, &f).unwrap()).norm() < 1e-12);
        }
        assert!((&path[0] - &f).norm() < 1e-15);
    }

    #[test]
    fn diagonal_path_agrees_with_pade() {
        let k = CMat::from_row_slice(2, 2, &[real(1.0), real(2.0), real(0.0), real(1.5)]);
        let op = assemble_form_operator(SubspaceBasis::identity(2), k.clone()).unwrap();
        let ev = SemigroupEvaluator::new(op).unwrap();
        assert!(ev.is_spectral());
        for t in [0.1, 1.0, 3.0] {
            let pade = expm(&(&k * real(-t))).unwrap();
            assert!((ev.exp_reduced(t).unwrap() - pade).norm() < 1e-13);
        }
    }
}
