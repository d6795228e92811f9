use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use qhmr_core::generators::{self, InterfaceParams, RandomSpec};
use qhmr_core::io::{self, CertificateFile, ModelFile};
use qhmr_core::reduction::{self, OBSERVABLE_TRIALS};
use qhmr_core::subspace::{linear_minimal_reduction, observable_complement, reachable_subspace};
use qhmr_core::{Config64, Operator64, QhmError, QhmModel64, ReductionCertificate64, StepKind, Superoperator64};

use crate::{Algorithm, Cli, Command, GenerateModel, GlobalOpts};

pub const EXIT_PARSE: u8 = 1;
pub const EXIT_CPTP: u8 = 2;
pub const EXIT_RESIDUAL: u8 = 3;
pub const EXIT_MISMATCH: u8 = 2;
pub const EXIT_DEVIATION: u8 = 4;

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
struct Coded {
    code: u8,
    err: QhmError,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.err.fmt(f)
    }
}

impl std::error::Error for Coded {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.err)
    }
}

/// Tags a core error with `code`, except CPTP failures which always map to
/// [`EXIT_CPTP`].
fn coded<T>(r: qhmr_core::Result<T>, code: u8) -> Result<T> {
    r.map_err(|err| {
        let code = if matches!(err, QhmError::NotCptp { .. }) { EXIT_CPTP } else { code };
        Coded { code, err }.into()
    })
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Coded>().map(|c| c.code))
        .unwrap_or(EXIT_PARSE)
}

fn config(o: &GlobalOpts) -> Config64 {
    Config64 {
        tol: o.tol,
        seed: o.seed,
        max_iters: o.max_iters,
        horizon: o.horizon,
        order: o.order.into(),
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    let cfg = config(&cli.opts);
    match cli.command {
        Command::Generate { model, output } => generate(&model, output.as_deref(), &cli.opts),
        Command::Info { model } => info(&model, &cfg),
        Command::Reduce { model, algorithm, output } => {
            let out = output.unwrap_or_else(|| model.with_extension("cert.json"));
            reduce(&model, algorithm, &out, &cfg)
        }
        Command::Verify { model, certificate } => verify(&model, &certificate, &cfg),
    }
}

fn load(path: &Path, cfg: &Config64) -> Result<QhmModel64> {
    coded(io::load_model(path, cfg.tol), EXIT_PARSE).with_context(|| format!("loading {}", path.display()))
}

fn build(model: &GenerateModel, seed: u64) -> qhmr_core::Result<QhmModel64> {
    match model {
        GenerateModel::Grover { n, m } => generators::grover(*n, *m),
        GenerateModel::Interface { d_s, d_e, p_i, p_s, p_e, dt, states } => generators::interface(&InterfaceParams {
            d_s: *d_s,
            d_e: *d_e,
            p_i: *p_i,
            p_s: *p_s,
            p_e: *p_e,
            dt: *dt,
            seed,
            states: *states,
        }),
        GenerateModel::Appendix => Ok(generators::appendix()),
        GenerateModel::Example3 { tau } => {
            if tau.len() != 3 {
                return Err(QhmError::InvalidParameter(format!("--tau needs 3 Bloch components, got {}", tau.len())));
            }
            let p = |k| Operator64::from(generators::pauli::<f64>(k));
            let mut m = p(0).matrix().clone();
            for (k, &c) in tau.iter().enumerate() {
                m += p(k + 1).matrix().scale(c);
            }
            generators::example3(&Operator64::from(m.scale(0.5)))
        }
        GenerateModel::Random { n, kraus, outputs, states, structure } => generators::random_model(&RandomSpec {
            n: *n,
            kraus: *kraus,
            outputs: *outputs,
            states: *states,
            seed,
            structure: (*structure).into(),
        }),
    }
}

fn generate(model: &GenerateModel, output: Option<&Path>, opts: &GlobalOpts) -> Result<u8> {
    let m = coded(build(model, opts.seed), EXIT_PARSE)?;
    let text = coded(ModelFile::from_model(&m).and_then(|f| io::to_json(&f)), EXIT_PARSE)?;
    match output {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} (n = {}) to {}", m.label, m.dim(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn info(path: &Path, cfg: &Config64) -> Result<u8> {
    let m = load(path, cfg)?;
    let report = m.map().validate_cptp(cfg.tol);
    let reach = coded(reachable_subspace(&m, cfg.tol), EXIT_RESIDUAL)?;
    let nperp = coded(observable_complement(&m, cfg.tol), EXIT_RESIDUAL)?;
    let lin = coded(linear_minimal_reduction(&m, cfg.tol), EXIT_RESIDUAL)?;
    println!("model: {}", m.label);
    println!("dimension: {} (operator space {}, blocks {:?})", m.dim(), m.operator_dim(), m.blocks());
    println!("outputs: {}, initial states: {}", m.output_ops().len(), m.initial_states().len());
    println!(
        "cptp: min Choi eigenvalue {:.3e}, TP residual {:.3e}",
        report.min_choi_eig, report.tp_residual
    );
    println!("rank(R): {}", reach.rank());
    println!("rank(N^perp): {}", nperp.rank());
    println!("eff_dim (linear lower bound): {}", lin.eff_dim);
    Ok(0)
}

/// Every map a certificate carries, with a name for error reports.
fn emitted_maps(c: &ReductionCertificate64) -> Vec<(String, &Superoperator64)> {
    let mut out = vec![
        ("R*".to_string(), &c.r_star),
        ("J*".to_string(), &c.j_star),
        ("reduced dynamics".to_string(), c.reduced.map()),
    ];
    for (i, s) in c.steps.iter().enumerate() {
        out.push((format!("step {} R", i + 1), &s.r));
        out.push((format!("step {} J", i + 1), &s.j));
    }
    out
}

fn check_emitted(c: &ReductionCertificate64, tol: f64) -> Result<()> {
    for (name, map) in emitted_maps(c) {
        coded(map.validate_cptp(tol).into_result(), EXIT_CPTP).with_context(|| format!("{name} failed CPTP validation"))?;
    }
    Ok(())
}

fn reduce(path: &Path, algorithm: Algorithm, out: &Path, cfg: &Config64) -> Result<u8> {
    let m = load(path, cfg)?;
    let cert = coded(
        match algorithm {
            Algorithm::Iterative => reduction::reduce_iterative(&m, cfg),
            Algorithm::Reachable => reduction::reduce_single(&m, StepKind::Reachable, cfg),
            Algorithm::Observable => reduction::reduce_single(&m, StepKind::Observable, cfg),
        },
        EXIT_RESIDUAL,
    )?;
    check_emitted(&cert, cfg.tol)?;
    if cert.max_output_deviation > cfg.guard_tol() {
        return Err(Coded {
            code: EXIT_RESIDUAL,
            err: QhmError::Residual {
                stage: "output equivalence",
                residual: cert.max_output_deviation,
            },
        }
        .into());
    }
    let file = coded(CertificateFile::from_certificate(&cert, cfg), EXIT_PARSE)?;
    coded(io::write_json(out, &file), EXIT_PARSE).with_context(|| format!("writing {}", out.display()))?;
    print_reduction(&m, &cert, algorithm, cfg);
    println!("certificate: {}", out.display());
    Ok(0)
}

fn print_reduction(m: &QhmModel64, c: &ReductionCertificate64, algorithm: Algorithm, cfg: &Config64) {
    println!("model: {} (n = {}, operator dim {})", m.label, m.dim(), m.operator_dim());
    println!(
        "algorithm: {} (tol {:e}, seed {}, iterations {}, converged {})",
        algorithm.to_possible_value().expect("no skipped variants").get_name(),
        cfg.tol, cfg.seed, c.iterations, c.converged
    );
    for (i, s) in c.steps.iter().enumerate() {
        let d = &s.diagnostics;
        print!("step {}: {} {} -> {}", i + 1, s.kind, s.input_dim, s.output_dim);
        if s.kind == StepKind::SupportRestriction {
            println!(" (rank-{} support restriction)", d.support_rank);
        } else {
            println!(
                " (subspace rank {}, algebra dim {}, blocks {:?})",
                d.subspace_rank, d.algebra_dim, d.blocks
            );
        }
        let compat = d.compatibility_residual.map_or("n/a".to_string(), |r| format!("{r:.2e}"));
        println!(
            "  residuals: wedderburn {:.2e}, compatibility {compat}, left inverse {:.2e}, equivalence {:.2e}, min Choi {:.2e}, TP {:.2e}",
            d.wedderburn_residual, d.left_inverse_residual, d.equivalence_residual, d.min_choi_eig, d.tp_residual
        );
    }
    let r = &c.reduced;
    if c.output_dim() >= m.operator_dim() {
        println!("no reduction possible (operator dim {})", m.operator_dim());
    } else {
        println!(
            "reduced: {} -> {} (side {}, blocks {:?})",
            m.operator_dim(),
            c.output_dim(),
            r.dim(),
            r.blocks()
        );
    }
    println!("eff_dim (linear lower bound): {}", c.eff_dim);
    println!(
        "max output deviation (t <= {}): {:.3e}, projection residual {:.3e}",
        c.verified_horizon, c.max_output_deviation, c.projection_residual
    );
}

fn verify(model: &Path, certificate: &Path, cfg: &Config64) -> Result<u8> {
    let m = load(model, cfg)?;
    let file: CertificateFile =
        coded(io::read_json(certificate), EXIT_PARSE).with_context(|| format!("reading {}", certificate.display()))?;
    let cert = coded(file.to_certificate::<f64>(), EXIT_PARSE)?;
    check_emitted(&cert, cfg.tol)?;
    let report = coded(
        reduction::verify_equivalence(&m, &cert, cfg.horizon, OBSERVABLE_TRIALS, cfg),
        EXIT_MISMATCH,
    )?;
    println!("horizon: {}", report.horizon);
    println!("max output deviation: {:.3e}", report.max_output_deviation);
    if let Some(d) = report.state_deviation {
        println!("state deviation: {d:.3e}");
    }
    if let Some(d) = report.trial_deviation {
        println!("random-state output deviation: {d:.3e}");
    }
    println!("initial state mismatch: {:.3e}", report.initial_state_mismatch);
    if report.passed(cfg.tol) {
        println!("verified: deviation within tol {:e}", cfg.tol);
        Ok(0)
    } else {
        println!("FAILED: deviation {:.3e} exceeds tol {:e}", report.worst(), cfg.tol);
        Ok(EXIT_DEVIATION)
    }
}
