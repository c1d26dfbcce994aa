//! Three experiments exposed to the browser demo in `www/`. Each binding
//! returns a flat `Float64Array`; the layouts are documented per function.
//! The plain functions are what the native tests exercise.

use degsemi::counterexamples::weak_not_strong_experiment;
use degsemi::domains::{assemble_dirichlet_operator, DomainChain};
use degsemi::homogenization::{homogenize, homogenized_operator, scaled_operator, Boundary, DomainSpec, PeriodicCoefficientField};
use degsemi::linalg::{real, CVec};
use degsemi::{ProbeSet, SemigroupEvaluator};
use wasm_bindgen::prelude::*;

/// Rows `[n, wot, sot, formula]` of the block-swap report for
/// `n = support+1 ..= n_max`, ambient dimension `2 n_max + 6`.
pub fn block_swap_rows(n_max: usize, support: usize) -> Result<Vec<f64>, String> {
    if n_max <= support {
        return Err(format!("n_max must exceed the probe support {support}"));
    }
    let dim = 2 * n_max + 6;
    let probes = ProbeSet::supported(dim, support, 8, 1).map_err(|e| e.to_string())?;
    let ns: Vec<usize> = (support + 1..=n_max).collect();
    let rep = weak_not_strong_experiment(&ns, support, dim, &probes).map_err(|e| e.to_string())?;
    Ok(rep
        .rows
        .iter()
        .flat_map(|r| [r.n as f64, r.wot_residual, r.sot_residual, r.formula_value])
        .collect())
}

/// `[c_hat, harmonic, arithmetic, x_0.., u_eps.., u_hat..]` for the 1D field
/// `lo` on `[0, 1/2)`, `hi` on `[1/2, 1)` with `f = 1`, `lambda = 1` and
/// Dirichlet ends; each profile has one entry per interior node.
pub fn homogenization_profile(lo: f64, hi: f64, periods: usize) -> Result<Vec<f64>, String> {
    let err = |e: degsemi::Error| e.to_string();
    let field = PeriodicCoefficientField::piecewise_1d(64, lo, hi).map_err(err)?;
    let (_, tensor) = homogenize(&field).map_err(err)?;
    let eps = 1.0 / periods.max(1) as f64;
    let domain = DomainSpec::resolving(1, 1.0, eps);
    let op = scaled_operator(&field, eps, &domain, Boundary::Dirichlet).map_err(err)?;
    let hom = homogenized_operator(&tensor, &domain, Boundary::Dirichlet);
    let f = op.sample(|_, _| 1.0);
    let u = op.resolvent_apply(real(1.0), &f).map_err(err)?;
    let u_hat = hom.resolvent_apply(real(1.0), &f).map_err(err)?;
    let mut out = vec![tensor.scalar(), field.harmonic_mean(), field.arithmetic_mean()[0][0]];
    out.extend(op.nodes.iter().map(|p| p.0));
    out.extend(u.iter().map(|z| z.re));
    out.extend(u_hat.iter().map(|z| z.re));
    Ok(out)
}

/// `[x_0.., u_n(t).., u(t)..]` for the heat flow from `sin(pi x)` on
/// `(0, 1 - 1/n)` and on `(0, 1)`, over the interior nodes of `(0, 1)`.
pub fn shrinking_domain_heat(n: usize, t: f64, cells: usize) -> Result<Vec<f64>, String> {
    let err = |e: degsemi::Error| e.to_string();
    if !(t > 0.0) {
        return Err("t must be positive".into());
    }
    let chain = DomainChain::interval_shrink(cells, &[n.max(2)]).map_err(err)?;
    let coeffs = degsemi::domains::EllipticCoefficients::identity();
    let level = SemigroupEvaluator::new(assemble_dirichlet_operator(&chain, Some(0), &coeffs).map_err(err)?).map_err(err)?;
    let omega = SemigroupEvaluator::new(assemble_dirichlet_operator(&chain, None, &coeffs).map_err(err)?).map_err(err)?;
    let u0 = chain.sample(|x, _| real((std::f64::consts::PI * x).sin()));
    let u0n: CVec = chain.restrict(0, &u0);
    let un = level.apply(t, &u0n).map_err(err)?;
    let u = omega.apply(t, &u0).map_err(err)?;
    let mut out: Vec<f64> = chain.ambient_coordinates().iter().map(|p| p.0).collect();
    out.extend(un.iter().map(|z| z.re));
    out.extend(u.iter().map(|z| z.re));
    Ok(out)
}

#[wasm_bindgen(js_name = blockSwap)]
pub fn block_swap_js(n_max: usize, support: usize) -> Result<Vec<f64>, JsError> {
    block_swap_rows(n_max, support).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = homogenizationProfile)]
pub fn homogenization_profile_js(lo: f64, hi: f64, periods: usize) -> Result<Vec<f64>, JsError> {
    homogenization_profile(lo, hi, periods).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = shrinkingDomainHeat)]
pub fn shrinking_domain_heat_js(n: usize, t: f64, cells: usize) -> Result<Vec<f64>, JsError> {
    shrinking_domain_heat(n, t, cells).map_err(|e| JsError::new(&e))
}
