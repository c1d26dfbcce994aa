//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are fixed here and never loosened.

use std::f64::consts::{FRAC_PI_3, PI};
use std::time::Instant;

use degsemi::counterexamples::{
    block_swap_operator, kato_sqrt_resolvent_check, sqrt_factorization_check, weak_not_strong_experiment,
};
use degsemi::domains::{
    elliptic_solutions, varying_domain_elliptic_experiment, varying_domain_parabolic_experiment, DomainChain,
    EllipticCoefficients, ELLIPTIC_TAG, SUP_CLOSED_TAG,
};
use degsemi::galerkin::{build_fe_chain, galerkin_experiment, ContinuousFormSpec, EIGENVALUE_TAG};
use degsemi::homogenization::{
    homogenization_experiment, homogenize, observed_rate, oscillatory_average_check, Boundary, DomainSpec,
    PeriodicCoefficientField, RELATIVE_TAG,
};
use degsemi::fem::Grid1d;
use degsemi::linalg::{c64, real, CMat, CVec};
use degsemi::metrics::{
    equivalence_comovement_experiment, l2_identity_check, wot_norm_limit_bridge, MetricKind, MetricParams,
};
use degsemi::probes::{random_complex_matrix, random_complex_vector, random_hermitian_psd};
use degsemi::semigroup::{laplace_transform_check, semigroup_via_contour, ContourParams};
use degsemi::trace::strictly_decreasing;
use degsemi::{assemble_form_operator, FormOperator, ProbeSet, SemigroupEvaluator, SubspaceBasis};
use degsemi_cli::{run_config_text, RunOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn unit(v: CVec) -> CVec {
    let n = v.norm();
    v / real(n)
}

fn ev(op: FormOperator) -> Result<SemigroupEvaluator, String> {
    SemigroupEvaluator::new(op).map_err(|e| e.to_string())
}

fn form(basis: SubspaceBasis, k: CMat) -> Result<FormOperator, String> {
    assemble_form_operator(basis, k).map_err(|e| e.to_string())
}

/// Random sectorial form: `H + s (S - S*)` on a random `m`-dimensional
/// subspace of `C^n`, `H` Hermitian PSD plus `shift`.
fn random_form(rng: &mut ChaCha8Rng, n: usize, m: usize, skew: f64, shift: f64) -> Result<FormOperator, String> {
    let b = random_complex_matrix(rng, n, m);
    let mut k = random_hermitian_psd(rng, m, 1.0 + 4.0 * (m as f64).sqrt());
    for i in 0..m {
        k[(i, i)] += real(shift);
    }
    if skew > 0.0 {
        let s = random_complex_matrix(rng, m, m);
        k += (&s - s.adjoint()) * real(skew);
    }
    form(SubspaceBasis::new(b).map_err(|e| e.to_string())?, k)
}

fn c1_block_swap() -> Outcome {
    let probes = ProbeSet::supported(70, 4, 8, 11).map_err(|e| e.to_string())?;
    let rep = weak_not_strong_experiment(&[8, 16, 32], 4, 70, &probes).map_err(|e| e.to_string())?;
    let wot = rep.rows.iter().map(|r| r.wot_residual).fold(0.0, f64::max);
    let sot_dev = rep
        .rows
        .iter()
        .map(|r| (r.sot_residual - 0.5 * (1.0 - 1.0 / r.n as f64)).abs())
        .fold(0.0, f64::max);
    Ok((
        wot <= 1e-14 && sot_dev <= 1e-12,
        format!("max WOT {wot:.1e} (<= 1e-14), max |SOT - (1-1/n)/2| {sot_dev:.1e} (<= 1e-12)"),
    ))
}

fn c2_equivalence() -> Outcome {
    let dim = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_hermitian_psd(&mut rng, dim, 1.0);
    let b = random_hermitian_psd(&mut rng, dim, 1.0);
    let ns: Vec<f64> = vec![1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0, 10000.0];
    let family = ns
        .iter()
        .map(|&n| Ok((n, ev(form(SubspaceBasis::identity(dim), &a + &b * real(1.0 / n))?)?)))
        .collect::<Result<Vec<_>, String>>()?;
    let reference = ev(form(SubspaceBasis::identity(dim), a.clone())?)?;
    let probes = ProbeSet::standard(dim, 5).map_err(|e| e.to_string())?;
    let params = MetricParams::default();
    let co = equivalence_comovement_experiment(&family, &reference, &params, &probes, (1e-6, 1e-4))
        .map_err(|e| e.to_string())?;
    let worst = MetricKind::ALL
        .iter()
        .map(|k| (k.tag(), *co.trace.get(k.tag()).unwrap().last().unwrap()))
        .fold(("", 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });

    // block swap at lambda = 1 against A = I
    let swap_ns = [8usize, 16, 32, 64];
    let n_dim = 2 * 64 + 6;
    let swap = swap_ns
        .iter()
        .map(|&n| {
            let fam = block_swap_operator(n, n_dim).map_err(|e| e.to_string())?;
            Ok((n as f64, ev(fam.form_operator().map_err(|e| e.to_string())?)?))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let identity = ev(form(SubspaceBasis::identity(n_dim), CMat::identity(n_dim, n_dim))?)?;
    let swap_probes = ProbeSet::supported(n_dim, 4, 8, 5).map_err(|e| e.to_string())?;
    let swap_params = MetricParams {
        lambdas: vec![real(1.0)],
        ..MetricParams::default()
    };
    let sw = equivalence_comovement_experiment(&swap, &identity, &swap_params, &swap_probes, (1e-6, 1e-4))
        .map_err(|e| e.to_string())?;
    let last = |tag: &str| *sw.trace.get(tag).unwrap().last().unwrap();
    let wot = last(MetricKind::ResolventWot.tag());
    let sot = last(MetricKind::ResolventSot.tag()).min(last(MetricKind::ResolventSotSingle.tag()));
    let pass = co.all_converged && co.comoving && wot <= 1e-4 && sot > 1e-4;
    Ok((
        pass,
        format!(
            "A+B/n at n=1e4: worst {} = {:.1e} (< 1e-4), co-moving {}; block swap: WOT(1) {wot:.1e}, SOT {sot:.3} (stays away from 0)",
            worst.0, worst.1, co.comoving
        ),
    ))
}

fn c3_bridge() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lambda = c64(1.0, 1.0);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = 1 + i % 16;
        let m = 1 + (i * 7) % n;
        let e = ev(random_form(&mut rng, n, m, 0.0, 0.0)?)?;
        let f = unit(random_complex_vector(&mut rng, n));
        let (lhs, rhs) = wot_norm_limit_bridge(&e, &e, lambda, &f).map_err(|e| e.to_string())?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok((worst <= 1e-10, format!("max |lhs - rhs| {worst:.1e} over 50 operators (<= 1e-10)")))
}

fn c4_l2_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = 2 + i % 15;
        let basis = SubspaceBasis::new(random_complex_matrix(&mut rng, n, n)).map_err(|e| e.to_string())?;
        let k1 = random_hermitian_psd(&mut rng, n, 3.0);
        let k2 = &k1 + random_hermitian_psd(&mut rng, n, 0.5);
        let a = ev(form(basis.clone(), k1)?)?;
        let b = ev(form(basis, k2)?)?;
        let f = unit(random_complex_vector(&mut rng, n));
        let id = l2_identity_check(&a, &b, 1.0, &f, 512).map_err(|e| e.to_string())?;
        worst = worst.max(id.residual());
    }
    Ok((worst <= 1e-6, format!("max residual {worst:.1e} over 20 pairs (<= 1e-6)")))
}

/// Sectorial test operators of dimension at most 16.
fn test_operators() -> Result<Vec<FormOperator>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    for i in 0..12 {
        let n = 2 + (i * 5) % 15;
        let m = 1 + (i * 3) % n;
        let skew = [0.0, 0.3, 1.0][i % 3];
        out.push(random_form(&mut rng, n, m, skew, 0.1)?);
    }
    Ok(out)
}

fn c5_laplace() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let ops = test_operators()?;
    for op in &ops {
        let e = ev(op.clone())?;
        let f = unit(random_complex_vector(&mut rng, e.ambient_dim()));
        for lambda in [real(1.0), c64(2.0, 3.0)] {
            let chk = laplace_transform_check(&e, lambda, &f, 40.0, 4096).map_err(|e| e.to_string())?;
            worst = worst.max(chk.residual);
        }
    }
    Ok((worst <= 1e-6, format!("max residual {worst:.1e} over {} operators (<= 1e-6)", ops.len())))
}

fn c6_contour() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for op in test_operators()? {
        let sector = op.sector().map_err(|e| e.to_string())?;
        if sector.semiangle > FRAC_PI_3 {
            continue;
        }
        count += 1;
        let e = ev(op)?;
        let f = unit(random_complex_vector(&mut rng, e.ambient_dim()));
        for t in [0.25, 1.0] {
            let params = ContourParams::for_sector(sector.semiangle, t, 64);
            let c = semigroup_via_contour(&e, t, &f, &params).map_err(|e| e.to_string())?;
            let direct = e.apply(t, &f).map_err(|e| e.to_string())?;
            worst = worst.max((c.value - direct).norm());
        }
    }
    Ok((
        worst <= 1e-6 && count >= 4,
        format!("max |contour - exp| {worst:.1e} over {count} operators with semiangle <= pi/3 (<= 1e-6)"),
    ))
}

fn c7_galerkin() -> Outcome {
    let spec = ContinuousFormSpec::laplace_1d(256).map_err(|e| e.to_string())?;
    let chain = build_fe_chain(&spec, 8, 4).map_err(|e| e.to_string())?;
    let f = chain.reference.sample(|x, _| (PI * x).sin());
    let tr = galerkin_experiment(&chain, &[f], 1.0, real(1.0), 128).map_err(|e| e.to_string())?;
    let sup = tr.get(MetricKind::SupHalfopenStrong.tag()).unwrap();
    let proj = tr.get(MetricKind::ProjectionSot.tag()).unwrap();
    let eig = *tr.get(EIGENVALUE_TAG).unwrap().last().unwrap();
    let eig_rel = (eig - PI * PI).abs() / (PI * PI);
    let pass = strictly_decreasing(sup)
        && *sup.last().unwrap() < 1e-3
        && strictly_decreasing(proj)
        && *proj.last().unwrap() < 1e-3
        && eig_rel < 0.01;
    Ok((
        pass,
        format!(
            "sup (0,T] {:.1e} -> {:.1e}, projection {:.1e} -> {:.1e}, first eigenvalue off pi^2 by {:.2e} at h=1/64",
            sup[0],
            sup.last().unwrap(),
            proj[0],
            proj.last().unwrap(),
            eig_rel
        ),
    ))
}

fn c8_domains() -> Outcome {
    let ns = [2usize, 4, 8, 16];
    let chain = DomainChain::interval_shrink(256, &ns).map_err(|e| e.to_string())?;
    let coeffs = EllipticCoefficients::identity();
    let u0 = chain.sample(|x, _| real((PI * x).sin()));
    let seq: Vec<CVec> = (0..ns.len()).map(|k| chain.restrict(k, &u0)).collect();
    let par = varying_domain_parabolic_experiment(&chain, &coeffs, &seq, &u0, 1.0).map_err(|e| e.to_string())?;
    let f = chain.sample(|_, _| real(1.0));
    let ell = varying_domain_elliptic_experiment(&chain, &coeffs, 1.0, &f).map_err(|e| e.to_string())?;
    let (levels, u) = elliptic_solutions(&chain, &coeffs, 1.0, &f).map_err(|e| e.to_string())?;
    let xs = chain.ambient_coordinates();
    let closed = |x: f64, l: f64| 1.0 - (x - 0.5 * l).cosh() / (0.5 * l).cosh();
    let omega_err = xs.iter().zip(u.iter()).map(|(p, v)| (v.re - closed(p.0, 1.0)).abs()).fold(0.0, f64::max);
    let l = 1.0 - 1.0 / 16.0;
    let fine = levels.last().unwrap();
    let level_err = xs
        .iter()
        .zip(fine.iter())
        .filter(|(p, _)| p.0 < l - 1e-12)
        .map(|(p, v)| (v.re - closed(p.0, l)).abs())
        .fold(0.0, f64::max);
    let sup = par.get(SUP_CLOSED_TAG).unwrap();
    let res = ell.get(ELLIPTIC_TAG).unwrap();
    let pass = strictly_decreasing(sup) && strictly_decreasing(res) && omega_err <= 1e-4 && level_err <= 1e-4;
    Ok((
        pass,
        format!(
            "parabolic sup {:.2e} -> {:.2e}, elliptic {:.2e} -> {:.2e}, closed form max error {omega_err:.1e} on (0,1), {level_err:.1e} on (0,15/16)",
            sup[0],
            sup.last().unwrap(),
            res[0],
            res.last().unwrap()
        ),
    ))
}

fn c9_homogenization() -> Outcome {
    let err = |e: degsemi::Error| e.to_string();
    let pw = PeriodicCoefficientField::piecewise_1d(4096, 1.0, 4.0).map_err(err)?;
    let (_, t_pw) = homogenize(&pw).map_err(err)?;
    let sn = PeriodicCoefficientField::sinusoidal_1d(4096).map_err(err)?;
    let (_, t_sn) = homogenize(&sn).map_err(err)?;
    let lam = PeriodicCoefficientField::laminate_2d(256, 1.0, 4.0).map_err(err)?;
    let (_, t_lam) = homogenize(&lam).map_err(err)?;
    let d_pw = (t_pw.scalar() - 1.6).abs();
    let d_sn = (t_sn.scalar() - 3f64.sqrt()).abs();
    let e = t_lam.entries;
    let d_lam = (e[0][0] - 1.6).abs().max((e[1][1] - 2.5).abs()).max(e[0][1].abs());
    let eps = [0.25, 0.125, 0.0625, 0.03125];
    let domain = DomainSpec::resolving(1, 1.0, eps[3]);
    let tr = homogenization_experiment(&pw, &t_pw, &domain, Boundary::Dirichlet, real(1.0), &|_, _| 1.0, &eps)
        .map_err(err)?;
    let abs = tr.get(MetricKind::ResolventSot.tag()).unwrap();
    let rel = *tr.get(RELATIVE_TAG).unwrap().last().unwrap();
    let pass = d_pw <= 1e-6 && d_sn <= 1e-6 && d_lam <= 1e-3 && strictly_decreasing(abs) && rel < 0.02;
    Ok((
        pass,
        format!(
            "c_hat errors {d_pw:.1e} / {d_sn:.1e} / laminate {d_lam:.1e}; resolvent errors {:.2e} -> {:.2e}, final relative {:.2}%",
            abs[0],
            abs[3],
            100.0 * rel
        ),
    ))
}

fn c10_oscillatory() -> Outcome {
    let m = 256;
    let tau: Vec<f64> = (0..m).map(|i| 2.0 + (2.0 * PI * (i as f64 + 0.5) / m as f64).sin()).collect();
    let grid = Grid1d::unit(4096);
    let bump = |x: f64| if (0.3..=0.7).contains(&x) { (x - 0.3).powi(2) * (0.7 - x) } else { 0.0 };
    let v: Vec<f64> = (0..grid.nodes()).map(|i| bump(grid.node(i))).collect();
    let eps: Vec<f64> = (3..9).map(|k| 0.5f64.powi(k)).collect();
    let seq: Vec<Vec<f64>> = eps.iter().map(|e| v.iter().map(|x| x * (1.0 + e)).collect()).collect();
    let r = oscillatory_average_check(&tau, &grid, (0.3, 0.7), &seq, &v, &eps).map_err(|e| e.to_string())?;
    let rate = observed_rate(&eps, &r);
    let pass = strictly_decreasing(&r) && rate >= 0.8;
    Ok((pass, format!("residuals {:.2e} -> {:.2e}, observed rate {rate:.3} (>= 0.8)", r[0], r.last().unwrap())))
}

fn c11_kato() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let random = random_hermitian_psd(&mut rng, 5, 2.0);
    let cases = [
        CMat::from_element(1, 1, real(1.0)),
        CMat::from_diagonal(&CVec::from_vec(vec![real(1.0), real(4.0), real(0.25)])),
        random,
    ];
    let mut worst: f64 = 0.0;
    let mut fact: f64 = 0.0;
    for c in &cases {
        let n = c.nrows();
        let probes: Vec<CVec> = (0..n)
            .map(|i| {
                let mut e = CVec::zeros(n);
                e[i] = real(1.0);
                e
            })
            .chain(std::iter::once(unit(random_complex_vector(&mut rng, n))))
            .collect();
        for lambda in [0.5, 1.0, 2.0] {
            let k = kato_sqrt_resolvent_check(c, lambda, 256, &probes).map_err(|e| e.to_string())?;
            worst = worst.max(k.residual);
        }
        fact = fact.max(sqrt_factorization_check(c, &probes).map_err(|e| e.to_string())?);
    }
    Ok((
        worst <= 1e-6 && fact <= 1e-10,
        format!("Kato residual {worst:.1e} (<= 1e-6), factorization {fact:.1e} (<= 1e-10)"),
    ))
}

const DETERMINISM_CONFIGS: [&str; 2] = [
    r#"
experiment = "counterexample"
[parameters]
n_list = [8, 16, 32]
"#,
    r#"
experiment = "equivalence"
seed = 9
[parameters]
dim = 6
n_list = [1, 4, 16]
lambda = { re = 1.0, im = 1.0 }
"#,
];

fn c12_determinism() -> Outcome {
    let mut identical = true;
    let mut files = 0;
    for cfg in DETERMINISM_CONFIGS {
        let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
        for d in &dirs {
            let opts = RunOptions {
                out: Some(d.path().to_path_buf()),
                plot: true,
                seed: None,
            };
            run_config_text(cfg, d.path(), &opts).map_err(|e| e.to_string())?;
        }
        let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .filter(|n| n.to_string_lossy() != "manifest.toml")
            .collect();
        names.sort();
        for n in names {
            files += 1;
            let a = std::fs::read(dirs[0].path().join(&n)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dirs[1].path().join(&n)).map_err(|e| e.to_string())?;
            identical &= a == b;
        }
    }
    Ok((identical && files > 0, format!("{files} CSV/SVG artifacts compared byte for byte")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("block-swap weak without strong", c1_block_swap),
        ("equivalence co-movement", c2_equivalence),
        ("polarization bridge", c3_bridge),
        ("L2 identity", c4_l2_identity),
        ("Laplace transform", c5_laplace),
        ("contour vs exponential", c6_contour),
        ("Galerkin chain", c7_galerkin),
        ("varying domains", c8_domains),
        ("homogenization", c9_homogenization),
        ("oscillatory averaging", c10_oscillatory),
        ("Kato square root", c11_kato),
        ("determinism", c12_determinism),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} [{:>2}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed in {:.1}s",
        criteria.len() - failures,
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
