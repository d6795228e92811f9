//! Exact CPTP reductions: projection onto the reachable algebra, projection
//! onto the observable algebra, their iteration, and end-to-end checks of
//! output equivalence.

use crate::algebra::{
    distorted_generated_algebra, generated_algebra, is_compatible, restrict_to_support, MatrixAlgebra,
};
use crate::channels::Superoperator;
use crate::config::{Config, Order};
use crate::error::{QhmError, Result};
use crate::generators::random_density;
use crate::linalg::{CMatrix, DistortionMap, Operator};
use crate::model::{block_offsets, QhmModel};
use crate::projections::{
    conditional_expectation, factor_states_from, maximally_mixed_factor_states, reduced_output_ops,
    Factorization,
};
use crate::scalar::Real;
use crate::subspace::{linear_minimal_reduction, observable_complement, reachable_subspace, OperatorSubspace};
use nalgebra::ComplexField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of random initial densities used to check observable steps.
pub const OBSERVABLE_TRIALS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Reachable,
    Observable,
    SupportRestriction,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepKind::Reachable => "reachable",
            StepKind::Observable => "observable",
            StepKind::SupportRestriction => "support-restriction",
        })
    }
}

/// Ranks, block structure and residuals recorded by a step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Rank of the reachable subspace or of `N^⊥`.
    pub subspace_rank: usize,
    /// Rank of the support of the generated algebra.
    pub support_rank: usize,
    /// Dimension of the undistorted generated algebra.
    pub generated_dim: usize,
    /// Dimension of the algebra projected onto.
    pub algebra_dim: usize,
    /// `(d_S, d_F)` per block.
    pub blocks: Vec<(usize, usize)>,
    pub wedderburn_residual: f64,
    pub compatibility_residual: Option<f64>,
    /// `max ‖R(J(x)) - x‖` over reduced matrix units.
    pub left_inverse_residual: f64,
    /// State-level (reachable) or output-level (observable, restriction)
    /// equivalence residual over the internal check horizon.
    pub equivalence_residual: f64,
    pub min_choi_eig: f64,
    pub tp_residual: f64,
    /// Pass of the iterative algorithm that emitted the step (1-based; 0 for
    /// a standalone run).
    #[serde(default)]
    pub iteration: usize,
}

#[derive(Clone, Debug)]
pub struct ReductionStep<T: Real> {
    pub kind: StepKind,
    /// Operator-space dimension before the step.
    pub input_dim: usize,
    /// Operator-space dimension after the step.
    pub output_dim: usize,
    pub r: Superoperator<T>,
    pub j: Superoperator<T>,
    /// State used for the distortion, if any.
    pub sigma: Option<Operator<T>>,
    pub diagnostics: StepDiagnostics,
}

/// Composed reduction maps, the reduced model and its verification record.
#[derive(Clone, Debug)]
pub struct ReductionCertificate<T: Real> {
    pub steps: Vec<ReductionStep<T>>,
    pub r_star: Superoperator<T>,
    pub j_star: Superoperator<T>,
    pub reduced: QhmModel<T>,
    pub verified_horizon: usize,
    pub max_output_deviation: f64,
    /// Dimension of the linear minimal realization (a lower bound).
    pub eff_dim: usize,
    pub converged: bool,
    pub iterations: usize,
    /// `‖J*R*J*R* - J*R*‖` (transfer matrices).
    pub projection_residual: f64,
}

impl<T: Real> ReductionCertificate<T> {
    pub fn input_dim(&self) -> usize {
        self.steps.first().map_or(self.reduced.operator_dim(), |s| s.input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.reduced.operator_dim()
    }
}

/// Comparison of a full model against a certificate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub horizon: usize,
    /// Largest output deviation over the initial states.
    pub max_output_deviation: f64,
    /// `‖A^t ρ0 - J*(Ǎ^t R* ρ0)‖`, when every step preserves states.
    pub state_deviation: Option<f64>,
    /// Output deviation on random initial densities, when every step is an
    /// observable projection.
    pub trial_deviation: Option<f64>,
    /// `‖R*(ρ0) - ρ̌0‖` against the stored reduced initial states.
    pub initial_state_mismatch: f64,
}

impl EquivalenceReport {
    pub fn worst(&self) -> f64 {
        [
            Some(self.max_output_deviation),
            self.state_deviation,
            self.trial_deviation,
            Some(self.initial_state_mismatch),
        ]
        .into_iter()
        .flatten()
        .fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

fn check_horizon(n: usize, cap: usize) -> usize {
    (2 * n * n).min(cap)
}

/// `ρ̄ = 1/(|S| n^2) Σ_{ρ0 ∈ S} Σ_{t=0}^{n^2} A^t(ρ0)`.
pub fn trajectory_average<T: Real>(m: &QhmModel<T>) -> Result<Operator<T>> {
    let n = m.dim();
    let mut acc = CMatrix::zeros(n, n);
    for rho0 in m.initial_states() {
        let mut x = rho0.clone();
        for t in 0..=n * n {
            acc += x.matrix();
            if t < n * n {
                x = m.map().apply(&x)?;
            }
        }
    }
    let norm = T::usize_lit(m.initial_states().len() * n * n);
    Ok(Operator::from(acc.unscale(norm)))
}

fn cptp_or_fail<T: Real>(map: &Superoperator<T>, tol: T, diag: &mut StepDiagnostics) -> Result<()> {
    let rep = map.validate_cptp(tol);
    diag.min_choi_eig = diag.min_choi_eig.min(rep.min_choi_eig);
    diag.tp_residual = diag.tp_residual.max(rep.tp_residual);
    rep.into_result()
}

fn guard<T: Real>(stage: &'static str, residual: T, cfg: &Config<T>) -> Result<()> {
    if residual > cfg.guard_tol() {
        return Err(QhmError::Residual {
            stage,
            residual: residual.as_f64(),
        });
    }
    Ok(())
}

/// `(R A J, R0(C), R(S))` on the reduced block algebra.
fn reduced_model<T: Real>(m: &QhmModel<T>, f: &Factorization<T>) -> Result<QhmModel<T>> {
    let map = Superoperator::compose(&f.r, &Superoperator::compose(m.map(), &f.j)?)?;
    let outs = reduced_output_ops(f, m.output_ops())?;
    let states = m
        .initial_states()
        .iter()
        .map(|s| f.r.apply(s).map(|x| x.hermitian_part()))
        .collect::<Result<Vec<_>>>()?;
    Ok(QhmModel::from_parts(map, outs, states, f.mask.clone(), m.label.clone())?
        .with_metadata(m.metadata.clone()))
}

/// Largest output deviation between `full` from `rho` and `red` from `r(rho)`.
fn output_deviation<T: Real>(
    full: &QhmModel<T>,
    red: &QhmModel<T>,
    rho: &Operator<T>,
    rho_red: &Operator<T>,
    horizon: usize,
) -> Result<T> {
    let a = full.output_trajectory(rho, horizon)?;
    let b = red.output_trajectory(rho_red, horizon)?;
    let mut worst = T::zero();
    for (ya, yb) in a.iter().zip(&b) {
        for (x, y) in ya.iter().zip(yb) {
            worst = worst.max((x - y).modulus());
        }
    }
    Ok(worst)
}

/// `‖A^t ρ0 - J(Ǎ^t R ρ0)‖` for `t <= horizon`.
fn state_deviation<T: Real>(
    full: &QhmModel<T>,
    red: &QhmModel<T>,
    r: &Superoperator<T>,
    j: &Superoperator<T>,
    rho: &Operator<T>,
    horizon: usize,
) -> Result<T> {
    let mut x = rho.clone();
    let mut xr = r.apply(rho)?;
    let mut worst = T::zero();
    for t in 0..=horizon {
        let lifted = j.apply(&xr)?;
        worst = worst.max((x.matrix() - lifted.matrix()).norm());
        if t < horizon {
            x = full.map().apply(&x)?;
            xr = red.map().apply(&xr)?;
        }
    }
    Ok(worst)
}

/// Zeroes the entries of `x` outside the block mask.
fn pinch<T: Real>(blocks: &[usize], x: &Operator<T>) -> Operator<T> {
    let n = x.dim();
    let mut out = CMatrix::zeros(n, n);
    for (&o, &b) in block_offsets(blocks).iter().zip(blocks) {
        out.view_mut((o, o), (b, b)).copy_from(&x.matrix().view((o, o), (b, b)));
    }
    Operator::from(out)
}

fn random_states<T: Real>(m: &QhmModel<T>, count: usize, seed: u64) -> Vec<Operator<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| pinch(m.blocks(), &random_density(m.dim(), &mut rng)))
        .collect()
}

fn restriction_step<T: Real>(
    m: &QhmModel<T>,
    p: &Operator<T>,
    alg: &MatrixAlgebra<T>,
    subspace_rank: usize,
    cfg: &Config<T>,
) -> Result<(QhmModel<T>, ReductionStep<T>)> {
    let res = restrict_to_support(m, p, cfg)?;
    let mut diag = StepDiagnostics {
        subspace_rank,
        support_rank: res.isometry.ncols(),
        generated_dim: alg.dim(),
        algebra_dim: alg.dim(),
        ..Default::default()
    };
    cptp_or_fail(&res.reduce, cfg.tol, &mut diag)?;
    cptp_or_fail(&res.inject, cfg.tol, &mut diag)?;
    cptp_or_fail(res.model.map(), cfg.tol, &mut diag)?;
    let mut worst = T::zero();
    let horizon = check_horizon(m.dim(), cfg.horizon);
    for (rho, rho_red) in m.initial_states().iter().zip(res.model.initial_states()) {
        worst = worst.max(state_deviation(m, &res.model, &res.reduce, &res.inject, rho, horizon)?);
        worst = worst.max(output_deviation(m, &res.model, rho, rho_red, horizon)?);
    }
    diag.equivalence_residual = worst.as_f64();
    guard("support restriction equivalence", worst, cfg)?;
    let step = ReductionStep {
        kind: StepKind::SupportRestriction,
        input_dim: m.operator_dim(),
        output_dim: res.model.operator_dim(),
        r: res.reduce,
        j: res.inject,
        sigma: None,
        diagnostics: diag,
    };
    Ok((res.model, step))
}

fn reachable_steps<T: Real>(m: &QhmModel<T>, cfg: &Config<T>) -> Result<Vec<(QhmModel<T>, ReductionStep<T>)>> {
    let tol = cfg.tol;
    let mut out = Vec::new();
    let mut cur = m.clone();
    let mut reach = reachable_subspace(&cur, tol)?;
    let mut alg = generated_algebra(&reach, tol)?;
    let supp = alg.support_projector(tol)?;
    let support_rank = supp.trace().re.round().as_f64() as usize;
    if support_rank < cur.dim() {
        let (next, step) = restriction_step(&cur, &supp, &alg, reach.rank(), cfg)?;
        out.push((next.clone(), step));
        cur = next;
        reach = reachable_subspace(&cur, tol)?;
        alg = generated_algebra(&reach, tol)?;
    }
    let n = cur.dim();
    let center = alg.center(tol)?;
    let rho_bar = trajectory_average(&cur)?;
    let sigma = center.basis().project(&rho_bar)?.hermitian_part();
    let sigma = sigma.scale(T::one() / sigma.trace().re);
    if !sigma.is_positive_definite(tol) {
        return Err(QhmError::Residual {
            stage: "reachable distortion state is not positive definite",
            residual: sigma.min_eigenvalue().as_f64(),
        });
    }
    let dmap = DistortionMap::new(sigma.clone(), tol)?;
    let distorted = distorted_generated_algebra(&dmap, &reach, tol)?;
    let base = distorted.base.decomposed(cfg)?;
    let dec = base.decomposition().expect("decomposed");
    let mut diag = StepDiagnostics {
        subspace_rank: reach.rank(),
        support_rank: n,
        generated_dim: alg.dim(),
        algebra_dim: base.dim(),
        blocks: dec.blocks.clone(),
        wedderburn_residual: dec.roundtrip_residual(&base, tol)?.as_f64(),
        compatibility_residual: Some(is_compatible(&sigma, &base, tol)?.residual),
        ..Default::default()
    };
    let taus = factor_states_from(dec, &sigma)?;
    let ce = conditional_expectation(&base, taus, tol)?;
    let f = ce.factorize()?;
    let red = reduced_model(&cur, &f)?;
    diag.left_inverse_residual = f.left_inverse_residual()?.as_f64();
    cptp_or_fail(&f.r, tol, &mut diag)?;
    cptp_or_fail(&f.j, tol, &mut diag)?;
    cptp_or_fail(red.map(), tol, &mut diag)?;
    let horizon = check_horizon(n, cfg.horizon);
    let mut worst = T::zero();
    for rho in cur.initial_states() {
        worst = worst.max(state_deviation(&cur, &red, &f.r, &f.j, rho, horizon)?);
    }
    diag.equivalence_residual = worst.as_f64();
    guard("reachable state equivalence", worst, cfg)?;
    let step = ReductionStep {
        kind: StepKind::Reachable,
        input_dim: cur.operator_dim(),
        output_dim: red.operator_dim(),
        r: f.r,
        j: f.j,
        sigma: Some(sigma),
        diagnostics: diag,
    };
    out.push((red, step));
    Ok(out)
}

fn observable_steps<T: Real>(m: &QhmModel<T>, cfg: &Config<T>) -> Result<Vec<(QhmModel<T>, ReductionStep<T>)>> {
    let tol = cfg.tol;
    let n = m.dim();
    let nperp = observable_complement(m, tol)?;
    let gens = if nperp.is_zero() {
        OperatorSubspace::span(n, &[Operator::identity(n)], tol)?
    } else {
        nperp.clone()
    };
    let generated = generated_algebra(&gens, tol)?;
    let supp = generated.support_basis(tol)?;
    let alg = if supp.ncols() < n {
        // Unobserved complement of the support: adjoined as one scalar block.
        let q = Operator::from(CMatrix::identity(n, n) - &supp * supp.adjoint());
        let basis = generated.basis().add(&OperatorSubspace::span(n, &[q], tol)?, tol)?;
        MatrixAlgebra::from_basis(basis, cfg.guard_tol())?
    } else {
        generated.clone()
    };
    let base = alg.decomposed(cfg)?;
    let dec = base.decomposition().expect("decomposed");
    let mut diag = StepDiagnostics {
        subspace_rank: nperp.rank(),
        support_rank: supp.ncols(),
        generated_dim: generated.dim(),
        algebra_dim: base.dim(),
        blocks: dec.blocks.clone(),
        wedderburn_residual: dec.roundtrip_residual(&base, tol)?.as_f64(),
        ..Default::default()
    };
    let ce = conditional_expectation(&base, maximally_mixed_factor_states(dec), tol)?;
    let sigma = ce.reference_state();
    diag.compatibility_residual = Some(is_compatible(&sigma, &base, tol)?.residual);
    let f = ce.factorize()?;
    let red = reduced_model(m, &f)?;
    diag.left_inverse_residual = f.left_inverse_residual()?.as_f64();
    cptp_or_fail(&f.r, tol, &mut diag)?;
    cptp_or_fail(&f.j, tol, &mut diag)?;
    cptp_or_fail(red.map(), tol, &mut diag)?;
    let horizon = check_horizon(n, cfg.horizon);
    let mut worst = T::zero();
    let mut probes: Vec<Operator<T>> = m.initial_states().to_vec();
    probes.extend(random_states(m, OBSERVABLE_TRIALS, cfg.seed));
    for rho in &probes {
        worst = worst.max(output_deviation(m, &red, rho, &f.r.apply(rho)?, horizon)?);
    }
    diag.equivalence_residual = worst.as_f64();
    guard("observable output equivalence", worst, cfg)?;
    let step = ReductionStep {
        kind: StepKind::Observable,
        input_dim: m.operator_dim(),
        output_dim: red.operator_dim(),
        r: f.r,
        j: f.j,
        sigma: Some(sigma),
        diagnostics: diag,
    };
    Ok(vec![(red, step)])
}

fn unzip_last<T: Real>(m: &QhmModel<T>, pairs: Vec<(QhmModel<T>, ReductionStep<T>)>) -> (QhmModel<T>, Vec<ReductionStep<T>>) {
    let model = pairs.last().map_or_else(|| m.clone(), |p| p.0.clone());
    (model, pairs.into_iter().map(|p| p.1).collect())
}

/// Projection onto the reachable algebra, preceded by a restriction to the
/// support of the reachable space when it is not full.
pub fn reduce_reachable<T: Real>(m: &QhmModel<T>, cfg: &Config<T>) -> Result<(QhmModel<T>, Vec<ReductionStep<T>>)> {
    Ok(unzip_last(m, reachable_steps(m, cfg)?))
}

/// Projection onto the observable algebra `alg(N^⊥)` with maximally mixed
/// factor states.
pub fn reduce_observable<T: Real>(m: &QhmModel<T>, cfg: &Config<T>) -> Result<(QhmModel<T>, Vec<ReductionStep<T>>)> {
    Ok(unzip_last(m, observable_steps(m, cfg)?))
}

/// Composes step maps into a certificate and verifies it on the initial
/// states over `cfg.horizon`.
pub fn certify<T: Real>(
    full: &QhmModel<T>,
    steps: Vec<ReductionStep<T>>,
    reduced: QhmModel<T>,
    converged: bool,
    iterations: usize,
    cfg: &Config<T>,
) -> Result<ReductionCertificate<T>> {
    let n = full.dim();
    let mut r_star = Superoperator::identity(n);
    let mut j_star = Superoperator::identity(n);
    for s in &steps {
        r_star = Superoperator::compose(&s.r, &r_star)?;
        j_star = Superoperator::compose(&j_star, &s.j)?;
    }
    let p = Superoperator::compose(&j_star, &r_star)?;
    let projection_residual = p.distance(&Superoperator::compose(&p, &p)?)?.as_f64();
    let eff_dim = linear_minimal_reduction(full, cfg.tol)?.eff_dim;
    let mut cert = ReductionCertificate {
        steps,
        r_star,
        j_star,
        reduced,
        verified_horizon: cfg.horizon,
        max_output_deviation: 0.0,
        eff_dim,
        converged,
        iterations,
        projection_residual,
    };
    let report = verify_equivalence(full, &cert, cfg.horizon, 0, cfg)?;
    cert.max_output_deviation = report.max_output_deviation;
    Ok(cert)
}

/// Alternates the two projections (in the configured order) until a full
/// iteration leaves the operator-space dimension unchanged.
pub fn reduce_iterative<T: Real>(m: &QhmModel<T>, cfg: &Config<T>) -> Result<ReductionCertificate<T>> {
    if cfg.max_iters == 0 {
        return Err(QhmError::InvalidParameter("max_iters must be at least 1".into()));
    }
    let mut cur = m.clone();
    let mut steps = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let order = match cfg.order {
        Order::ReachableFirst => [StepKind::Reachable, StepKind::Observable],
        Order::ObservableFirst => [StepKind::Observable, StepKind::Reachable],
    };
    while iterations < cfg.max_iters {
        iterations += 1;
        let before = cur.operator_dim();
        for kind in order {
            let pairs = match kind {
                StepKind::Reachable => reachable_steps(&cur, cfg)?,
                _ => observable_steps(&cur, cfg)?,
            };
            // Steps that do not shrink the model are dropped; only the last
            // step of a pass can be such a no-op.
            for (model, mut step) in pairs {
                if step.output_dim < step.input_dim {
                    step.diagnostics.iteration = iterations;
                    cur = model;
                    steps.push(step);
                }
            }
        }
        if cur.operator_dim() == before {
            converged = true;
            break;
        }
    }
    certify(m, steps, cur, converged, iterations, cfg)
}

/// Runs a single algorithm and wraps its steps in a certificate.
pub fn reduce_single<T: Real>(m: &QhmModel<T>, kind: StepKind, cfg: &Config<T>) -> Result<ReductionCertificate<T>> {
    let (red, steps) = match kind {
        StepKind::Reachable => reduce_reachable(m, cfg)?,
        StepKind::Observable => reduce_observable(m, cfg)?,
        StepKind::SupportRestriction => {
            return Err(QhmError::InvalidParameter("support restriction is not a standalone algorithm".into()))
        }
    };
    certify(m, steps, red, true, 1, cfg)
}

/// Compares `full` against the certificate over `t = 0..=horizon`; `trials`
/// random initial densities are added when every step is an observable
/// projection.
pub fn verify_equivalence<T: Real>(
    full: &QhmModel<T>,
    cert: &ReductionCertificate<T>,
    horizon: usize,
    trials: usize,
    cfg: &Config<T>,
) -> Result<EquivalenceReport> {
    let red = &cert.reduced;
    if cert.r_star.in_dim() != full.dim()
        || cert.r_star.out_dim() != red.dim()
        || cert.j_star.in_dim() != red.dim()
        || cert.j_star.out_dim() != full.dim()
        || red.output_ops().len() != full.output_ops().len()
        || red.initial_states().len() != full.initial_states().len()
    {
        return Err(QhmError::CertificateMismatch(format!(
            "model dimension {} with {} outputs and {} states, certificate maps {} -> {}",
            full.dim(),
            full.output_ops().len(),
            full.initial_states().len(),
            cert.r_star.in_dim(),
            cert.r_star.out_dim()
        )));
    }
    let mut max_out = T::zero();
    let mut mismatch = T::zero();
    let state_level = cert
        .steps
        .iter()
        .all(|s| s.kind != StepKind::Observable);
    let mut state_dev = T::zero();
    for (rho, stored) in full.initial_states().iter().zip(red.initial_states()) {
        let rho_red = cert.r_star.apply(rho)?;
        mismatch = mismatch.max((rho_red.matrix() - stored.matrix()).norm());
        max_out = max_out.max(output_deviation(full, red, rho, &rho_red, horizon)?);
        if state_level {
            state_dev = state_dev.max(state_deviation(full, red, &cert.r_star, &cert.j_star, rho, horizon)?);
        }
    }
    let observable_only = !cert.steps.is_empty() && cert.steps.iter().all(|s| s.kind == StepKind::Observable);
    let trial_deviation = if observable_only && trials > 0 {
        let mut worst = T::zero();
        for rho in random_states(full, trials, cfg.seed.wrapping_add(1)) {
            worst = worst.max(output_deviation(full, red, &rho, &cert.r_star.apply(&rho)?, horizon)?);
        }
        Some(worst.as_f64())
    } else {
        None
    };
    Ok(EquivalenceReport {
        horizon,
        max_output_deviation: max_out.as_f64(),
        state_deviation: state_level.then(|| state_dev.as_f64()),
        trial_deviation,
        initial_state_mismatch: mismatch.as_f64(),
    })
}
