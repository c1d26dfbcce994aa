//! Dispatch from a validated configuration to the library experiments.

use std::path::Path;
use std::sync::Arc;

use degsemi::counterexamples::{
    block_swap_operator, kato_sqrt_resolvent_check, sqrt_factorization_check, weak_not_strong_experiment,
};
use degsemi::domains::{
    varying_domain_elliptic_experiment, varying_domain_parabolic_experiment, DomainChain, EllipticCoefficients,
};
use degsemi::galerkin::{build_fe_chain, build_fourier_chain, galerkin_experiment, ContinuousFormSpec};
use degsemi::homogenization::{
    homogenization_experiment, homogenize, parabolic_homogenization_experiment, Boundary, DomainSpec,
    PeriodicCoefficientField,
};
use degsemi::linalg::{real, CMat, CVec};
use degsemi::metrics::{equivalence_comovement_experiment, MetricParams};
use degsemi::probes::{random_hermitian_psd, ProbeSet};
use degsemi::trace::ConvergenceTrace;
use degsemi::{assemble_form_operator, SemigroupEvaluator, SubspaceBasis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::*;
use crate::CliError;

/// Everything an experiment produced.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub traces: Vec<ConvergenceTrace>,
    /// Additional CSV tables `(file stem, content)`.
    pub tables: Vec<(String, String)>,
    /// Scalar facts for the manifest.
    pub notes: Vec<(String, String)>,
}

fn failed(e: degsemi::Error) -> CliError {
    CliError::ExperimentFailed(e.to_string())
}

/// Run `params` with `seed`; `base` resolves relative paths in the config.
pub fn run_experiment(params: &Parameters, seed: u64, base: &Path) -> Result<RunOutcome, CliError> {
    match params {
        Parameters::Equivalence(p) => equivalence(p, seed),
        Parameters::Galerkin(p) => galerkin(p),
        Parameters::Domains(p) => domains(p),
        Parameters::Homogenize(p) => homogenization(p, base),
        Parameters::Counterexample(p) => counterexample(p, seed),
    }
}

fn evaluator(basis: SubspaceBasis, k: CMat) -> Result<SemigroupEvaluator, CliError> {
    SemigroupEvaluator::new(assemble_form_operator(basis, k).map_err(failed)?).map_err(failed)
}

fn equivalence(p: &EquivalenceParams, seed: u64) -> Result<RunOutcome, CliError> {
    let mut params = MetricParams {
        t: p.t,
        horizon: p.horizon,
        delta: p.delta,
        nonreal: p.lambda.value(),
        ..MetricParams::default()
    };
    if let Some(ls) = &p.lambdas {
        params.lambdas = ls.iter().map(|l| l.value()).collect();
    }
    let (family, reference, probes) = match p.chain {
        ChainKind::RandomPsd | ChainKind::Constant => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hermitian_psd(&mut rng, p.dim, 1.0);
            let b = random_hermitian_psd(&mut rng, p.dim, 1.0);
            let family = p
                .n_list
                .iter()
                .map(|&n| {
                    let k = match p.chain {
                        ChainKind::Constant => a.clone(),
                        _ => &a + &b * real(1.0 / n as f64),
                    };
                    Ok((n as f64, evaluator(SubspaceBasis::identity(p.dim), k)?))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let reference = evaluator(SubspaceBasis::identity(p.dim), a)?;
            let probes = ProbeSet::new(p.dim, p.dim.min(4), p.probes, seed).map_err(failed)?;
            (family, reference, probes)
        }
        ChainKind::BlockSwap => {
            let max_n = *p.n_list.iter().max().expect("validated nonempty") as usize;
            let dim = p.ambient_dim.unwrap_or(2 * max_n + 6);
            if let Some(&n) = p.n_list.iter().find(|&&n| n as usize <= p.support) {
                return Err(CliError::ExperimentFailed(
                    degsemi::Error::ProbeSupportTooLarge {
                        support: p.support,
                        min_n: n as usize,
                    }
                    .to_string(),
                ));
            }
            let family = p
                .n_list
                .iter()
                .map(|&n| {
                    let fam = block_swap_operator(n as usize, dim).map_err(failed)?;
                    Ok((n as f64, SemigroupEvaluator::new(fam.form_operator().map_err(failed)?).map_err(failed)?))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let reference = evaluator(SubspaceBasis::identity(dim), CMat::identity(dim, dim))?;
            let probes = ProbeSet::supported(dim, p.support, p.probes, seed).map_err(failed)?;
            (family, reference, probes)
        }
    };
    let thresholds = (p.thresholds[0], p.thresholds[1]);
    let mut out = equivalence_comovement_experiment(&family, &reference, &params, &probes, thresholds).map_err(failed)?;
    out.trace.param("chain", format!("{:?}", p.chain));
    out.trace.param("seed", seed);
    let converged: Vec<&str> = out.converged.iter().map(|k| k.tag()).collect();
    Ok(RunOutcome {
        notes: vec![
            ("comoving".into(), out.comoving.to_string()),
            ("all_converged".into(), out.all_converged.to_string()),
            ("converged_metrics".into(), converged.join(";")),
        ],
        traces: vec![out.trace],
        tables: Vec::new(),
    })
}

fn galerkin(p: &GalerkinParams) -> Result<RunOutcome, CliError> {
    let spec = match p.form {
        FormChoice::Laplace1d => ContinuousFormSpec::laplace_1d(p.reference_cells),
        FormChoice::AdvectionDiffusion1d => ContinuousFormSpec::advection_diffusion_1d(p.reference_cells, p.drift, p.shift),
        FormChoice::Divform2d => ContinuousFormSpec::divform_2d(
            p.reference_cells,
            Arc::new(|x: f64, y: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin() * (y + 0.5)),
        ),
    }
    .map_err(failed)?;
    let chain = match p.chain {
        SpaceChoice::Fe => build_fe_chain(&spec, p.coarse_cells, p.refinements),
        SpaceChoice::Fourier => build_fourier_chain(&spec, &p.modes),
    }
    .map_err(failed)?;
    let pi = std::f64::consts::PI;
    let f = if spec.is_2d() {
        chain.reference.sample(|x, y| (pi * x).sin() * (pi * y).sin() * (1.0 + x))
    } else {
        chain.reference.sample(|x, _| (pi * x).sin() + 0.25 * (3.0 * pi * x).sin())
    };
    let mut trace = galerkin_experiment(&chain, &[f], p.horizon, p.lambda.value(), p.grid).map_err(failed)?;
    trace.param("form", format!("{:?}", p.form));
    trace.param("chain", format!("{:?}", p.chain));
    Ok(RunOutcome {
        notes: vec![("nesting_defect".into(), format!("{:e}", chain.nesting_defect()))],
        traces: vec![trace],
        tables: Vec::new(),
    })
}

fn domains(p: &DomainsParams) -> Result<RunOutcome, CliError> {
    let chain = if p.dimension == 1 {
        DomainChain::interval_shrink(p.cells, &p.n_list)
    } else {
        let corners: Vec<(f64, f64)> = p
            .n_list
            .iter()
            .map(|&n| (1.0 - 1.0 / n as f64, 1.0 - 1.0 / n as f64))
            .collect();
        DomainChain::rectangle_chain(p.cells, &corners, p.n_list.iter().map(|&n| n as f64).collect())
    }
    .map_err(failed)?;
    let coeffs = EllipticCoefficients::identity();
    let pi = std::f64::consts::PI;
    let u0 = chain.sample(|x, y| real(if p.dimension == 1 { (pi * x).sin() } else { (pi * x).sin() * (pi * y).sin() }));
    let u0_seq: Vec<CVec> = (0..chain.len()).map(|k| chain.restrict(k, &u0)).collect();
    let parabolic = varying_domain_parabolic_experiment(&chain, &coeffs, &u0_seq, &u0, p.horizon).map_err(failed)?;
    let f = chain.sample(|_, _| real(1.0));
    let elliptic = varying_domain_elliptic_experiment(&chain, &coeffs, p.lambda.re, &f).map_err(failed)?;
    Ok(RunOutcome {
        traces: vec![parabolic, elliptic],
        ..RunOutcome::default()
    })
}

fn homogenization(p: &HomogenizeParams, base: &Path) -> Result<RunOutcome, CliError> {
    let field = match p.field {
        FieldChoice::Piecewise if p.dimension == 1 => PeriodicCoefficientField::piecewise_1d(p.cell_resolution, p.lo, p.hi),
        FieldChoice::Piecewise => PeriodicCoefficientField::from_fn_2d(p.cell_resolution, |x, y| {
            let v = if (x < 0.5) == (y < 0.5) { p.lo } else { p.hi };
            [[v, 0.0], [0.0, v]]
        }),
        FieldChoice::Sinusoidal if p.dimension == 1 => PeriodicCoefficientField::sinusoidal_1d(p.cell_resolution),
        FieldChoice::Sinusoidal => PeriodicCoefficientField::from_fn_2d(p.cell_resolution, |x, y| {
            let v = 2.0 + (2.0 * std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).cos();
            [[v, 0.0], [0.0, v]]
        }),
        FieldChoice::Laminate => PeriodicCoefficientField::laminate_2d(p.cell_resolution, p.lo, p.hi),
        FieldChoice::Csv => {
            let path = base.join(p.field_csv.as_ref().expect("validated"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
            PeriodicCoefficientField::from_csv(p.dimension, &text)
        }
    }
    .map_err(failed)?;
    let (cells, tensor) = homogenize(&field).map_err(failed)?;
    let eps_min = p.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let domain = DomainSpec::resolving(p.dimension, p.length, eps_min);
    let boundary = match p.boundary {
        BoundaryChoice::Dirichlet => Boundary::Dirichlet,
        BoundaryChoice::Neumann => Boundary::Neumann,
    };
    let f = |x: f64, y: f64| if p.boundary == BoundaryChoice::Dirichlet { 1.0 } else { (3.0 * x).cos() + y };
    let mut trace =
        homogenization_experiment(&field, &tensor, &domain, boundary, p.lambda.value(), &f, &p.epsilons).map_err(failed)?;
    trace.param("field", format!("{:?}", p.field));
    trace.param("cell_resolution", p.cell_resolution);
    let mut traces = vec![trace];
    if p.parabolic {
        let hom = degsemi::homogenization::homogenized_operator(&tensor, &domain, boundary);
        let pi = std::f64::consts::PI;
        let u0 = hom.sample(|x, y| (pi * x / p.length).sin() * if p.dimension == 2 { (pi * y / p.length).sin() } else { 1.0 });
        let seq = vec![u0.clone(); p.epsilons.len()];
        traces.push(
            parabolic_homogenization_experiment(
                &field, &tensor, &domain, boundary, &seq, &u0, p.delta, p.horizon, &p.epsilons, 64,
            )
            .map_err(failed)?,
        );
    }
    let mut notes = vec![
        ("c_hat".into(), format!("{:?}", tensor.entries)),
        ("mu_prime".into(), format!("{:e}", tensor.mu_prime)),
        ("harmonic_mean".into(), format!("{:e}", field.harmonic_mean())),
        ("domain_cells".into(), domain.cells.to_string()),
    ];
    for c in &cells {
        notes.push((
            format!("corrector_{}", c.direction),
            format!("residual {:e}, max |chi| {:e}, iterations {}", c.residual, c.max_abs(), c.iterations),
        ));
    }
    Ok(RunOutcome {
        traces,
        tables: Vec::new(),
        notes,
    })
}

fn counterexample(p: &CounterexampleParams, seed: u64) -> Result<RunOutcome, CliError> {
    let max_n = *p.n_list.iter().max().expect("validated nonempty");
    let dim = p.ambient_dim.unwrap_or(2 * max_n + 6);
    let probes = ProbeSet::supported(dim, p.support, p.probes, seed).map_err(failed)?;
    let report = weak_not_strong_experiment(&p.n_list, p.support, dim, &probes).map_err(failed)?;
    let mut trace = report.to_trace().map_err(failed)?;
    trace.param("seed", seed);

    let lambdas = p.kato_lambdas.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = random_hermitian_psd(&mut rng, 4, 1.0);
    for i in 0..4 {
        random[(i, i)] += real(0.1);
    }
    let cases: Vec<(&str, CMat)> = vec![
        ("scalar", CMat::from_element(1, 1, real(1.0))),
        ("diagonal", CMat::from_diagonal(&CVec::from_vec(vec![real(1.0), real(4.0)]))),
        ("random_hermitian", random),
    ];
    let mut kato = String::from("matrix,lambda,residual,coarse_residual,factorization_residual\n");
    for (name, c) in &cases {
        let n = c.nrows();
        let unit: Vec<CVec> = (0..n)
            .map(|i| {
                let mut e = CVec::zeros(n);
                e[i] = real(1.0);
                e
            })
            .collect();
        let fact = sqrt_factorization_check(c, &unit).map_err(failed)?;
        for &l in &lambdas {
            let k = kato_sqrt_resolvent_check(c, l, p.kato_nodes, &unit).map_err(failed)?;
            kato.push_str(&format!(
                "{name},{},{},{},{}\n",
                degsemi::trace::fmt_value(l),
                degsemi::trace::fmt_value(k.residual),
                degsemi::trace::fmt_value(k.coarse_residual),
                degsemi::trace::fmt_value(fact)
            ));
        }
    }
    let max_dev = report.rows.iter().map(|r| r.assembled_deviation).fold(0.0, f64::max);
    Ok(RunOutcome {
        traces: vec![trace],
        tables: vec![("block_swap_report".into(), report.to_csv()), ("kato".into(), kato)],
        notes: vec![
            ("ambient_dim".into(), dim.to_string()),
            ("assembled_deviation".into(), format!("{max_dev:e}")),
            (
                "support_condition".into(),
                format!("WOT vanishes exactly for probes supported in the first {} coordinates", p.support),
            ),
        ],
    })
}
