mod artifacts;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::Rng;
use serde_json::json;

use homogroup::atoms::{
    build_aux_atom, build_base_atom, build_counterexample_state, singular_limit_diagnostics,
    validate_atom,
};
use homogroup::classify::{
    classify_pair, equiv_norm_decision, hardy_equal_decision, DEFAULT_TOL, DEFAULT_WINDOW,
};
use homogroup::dilations::{check_admissible, DilationMatrix};
use homogroup::error::Error;
use homogroup::grid::GridFunction;
use homogroup::lie::{bch_product, preset, GroupPoint, GroupSpec, LieAlgebra};
use homogroup::maximal::{blowup_experiment, lp_quasinorm, radial_maximal, RadialBump};
use homogroup::moments::{delta_semigroup, min_admissible_alpha};
use homogroup::quasinorm::QuasiNormHandle;
use homogroup::rng::stage_rng;

use config::{load_config, parse_matrix_arg, parse_vector_arg, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "homog",
    version,
    about = "Anisotropic dilation structures on homogeneous groups"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Group structure operations.
    Group {
        #[command(subcommand)]
        op: GroupOp,
    },
    /// Dilation matrix operations.
    Dilation {
        #[command(subcommand)]
        op: DilationOp,
    },
    /// Quasi-norm operations.
    Norm {
        #[command(subcommand)]
        op: NormOp,
    },
    /// Vanishing-moment order queries.
    Moments {
        #[command(subcommand)]
        op: MomentsOp,
    },
    /// Atom construction and validation.
    Atom {
        #[command(subcommand)]
        op: AtomOp,
    },
    /// Radial maximal function evaluation.
    Maximal {
        #[command(subcommand)]
        op: MaximalOp,
    },
    /// Pairwise classification of dilation structures.
    Classify {
        #[command(subcommand)]
        op: ClassifyOp,
    },
    /// Numerical experiments.
    Experiment {
        #[command(subcommand)]
        op: ExperimentOp,
    },
    /// Run the full pipeline from one config file.
    Pipeline {
        /// Bundled config name (r2-diverge, heisenberg-same) or a path.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Split an experiment CSV into per-column series files.
    Plotdata {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated column names; defaults to every value column.
        #[arg(long)]
        columns: Option<String>,
    },
}

#[derive(Subcommand)]
enum GroupOp {
    /// Validate structure constants and spot-check the group law.
    Check {
        #[arg(long)]
        preset: Option<String>,
        /// JSON file with { dim, structure_constants, name }.
        #[arg(long)]
        constants: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        triples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum DilationOp {
    /// Check a matrix against the admissibility conditions.
    Check {
        #[command(flatten)]
        pair: GroupMatrix,
    },
}

#[derive(Args)]
struct GroupMatrix {
    /// Group preset: abelian:n, heisenberg or engel.
    #[arg(long)]
    group: String,
    /// Row-major matrix entries, comma separated.
    #[arg(long)]
    matrix: String,
}

#[derive(Subcommand)]
enum NormOp {
    /// Evaluate the quasi-norm at a point.
    Eval {
        #[command(flatten)]
        pair: GroupMatrix,
        /// Point coordinates, comma separated.
        #[arg(long)]
        point: String,
    },
    /// Sample the comparison constants and the quasi-triangle constant.
    Constants {
        #[command(flatten)]
        pair: GroupMatrix,
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum MomentsOp {
    /// Smallest admissible moment order for the exponent p.
    Alpha {
        #[command(flatten)]
        pair: GroupMatrix,
        #[arg(long)]
        p: f64,
    },
}

#[derive(Subcommand)]
enum AtomOp {
    /// Build the base atom from a config file.
    BuildBase {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the auxiliary atom at step j.
    BuildAux {
        #[arg(long)]
        config: String,
        #[arg(long)]
        j: i64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-check a stored atom against its declared conditions.
    Validate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        dir: PathBuf,
        /// File stem, e.g. base or aux-3.
        #[arg(long)]
        stem: String,
    },
}

#[derive(Subcommand)]
enum MaximalOp {
    /// Radial maximal function of the base atom over the scale ladder.
    Eval {
        #[arg(long)]
        config: String,
        /// Output CSV path (index,value,argmax_t).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClassifyOp {
    /// Decide equivalence of the two quasi-norms.
    Norms {
        #[command(flatten)]
        pair: MatrixPair,
    },
    /// Decide equality of the two Hardy scales.
    Hardy {
        #[command(flatten)]
        pair: MatrixPair,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: i64,
    },
}

#[derive(Args)]
struct MatrixPair {
    #[arg(long)]
    group: String,
    /// Matrix A, row-major comma separated.
    #[arg(long)]
    a: String,
    /// Matrix B, row-major comma separated.
    #[arg(long)]
    b: String,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Subcommand)]
enum ExperimentOp {
    /// Blow-up table for the maximal function along the atom family.
    Blowup {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Pairing diagnostics for the singular limit of the atom family.
    SingularLimit {
        #[arg(long)]
        config: String,
        /// Comma-separated list of steps j.
        #[arg(long, default_value = "1,2,3")]
        j_list: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid(..)
        | Error::ConfigInfeasible(..)
        | Error::BadShape(..)
        | Error::FileNotFound(..)
        | Error::MissingColumn(..)
        | Error::DimensionMismatch { .. }
        | Error::NegativeSideLength(..)
        | Error::NonpositiveScale(..) => 2,
        Error::SolverBracketFailure(..)
        | Error::SingularMatrix(..)
        | Error::MomentSolveSingular { .. }
        | Error::LadderEmpty
        | Error::NotNormalized(..)
        | Error::GridCoverage
        | Error::GridMismatch
        | Error::PipelineStageFailure(..) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Group { op } => group_cmd(op),
        Cmd::Dilation { op } => dilation_cmd(op),
        Cmd::Norm { op } => norm_cmd(op),
        Cmd::Moments { op } => moments_cmd(op),
        Cmd::Atom { op } => atom_cmd(op),
        Cmd::Maximal { op } => maximal_cmd(op),
        Cmd::Classify { op } => classify_cmd(op),
        Cmd::Experiment { op } => experiment_cmd(op),
        Cmd::Pipeline { config, out_dir } => pipeline_cmd(&config, &out_dir),
        Cmd::Plotdata {
            csv,
            out_dir,
            columns,
        } => plotdata_cmd(&csv, &out_dir, columns.as_deref()),
    }
}

fn resolve_algebra(name: &str) -> Result<LieAlgebra, Error> {
    preset(name)
}

fn resolve_pair(gm: &GroupMatrix) -> Result<(LieAlgebra, DilationMatrix), Error> {
    let algebra = resolve_algebra(&gm.group)?;
    let m = parse_matrix_arg(&gm.matrix, algebra.dim)?;
    let d = check_admissible(&m, &algebra)?;
    Ok((algebra, d))
}

fn group_cmd(op: GroupOp) -> Result<(), Error> {
    let GroupOp::Check {
        preset: preset_name,
        constants,
        triples,
        seed,
    } = op;
    let algebra = match (preset_name, constants) {
        (Some(name), None) => resolve_algebra(&name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|_| Error::FileNotFound(path.display().to_string()))?;
            let spec: GroupSpec = serde_json::from_str(&text)
                .map_err(|e| Error::ConfigInvalid("constants".into(), e.to_string()))?;
            spec.build()?
        }
        _ => {
            return Err(Error::ConfigInvalid(
                "group".into(),
                "give exactly one of --preset or --constants".into(),
            ))
        }
    };

    let mut rng = stage_rng(seed, "group-check");
    let n = algebra.dim;
    let mut assoc = 0.0f64;
    let mut inv = 0.0f64;
    for _ in 0..triples {
        let rand_pt = |rng: &mut rand_chacha::ChaCha8Rng| {
            GroupPoint::new(DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)))
        };
        let (x, y, z) = (rand_pt(&mut rng), rand_pt(&mut rng), rand_pt(&mut rng));
        let left = bch_product(&bch_product(&x, &y, &algebra), &z, &algebra);
        let right = bch_product(&x, &bch_product(&y, &z, &algebra), &algebra);
        assoc = assoc.max((&left.coords - &right.coords).amax());
        let back = bch_product(&x, &x.inverse(), &algebra);
        inv = inv.max(back.coords.amax());
    }

    print_json(&json!({
        "name": algebra.name,
        "dim": algebra.dim,
        "nilpotency_step": algebra.nilpotency_step,
        "triples": triples,
        "max_associativity_residual": assoc,
        "max_inverse_residual": inv,
    }));
    Ok(())
}

fn dilation_cmd(op: DilationOp) -> Result<(), Error> {
    let DilationOp::Check { pair } = op;
    let (_, d) = resolve_pair(&pair)?;
    print_json(&json!({
        "admissible": true,
        "eigenvalues": d.eigenvalues(),
        "trace": d.trace,
        "normalized": (d.min_eigenvalue() - 1.0).abs() <= 1e-12,
    }));
    Ok(())
}

fn norm_cmd(op: NormOp) -> Result<(), Error> {
    match op {
        NormOp::Eval { pair, point } => {
            let (algebra, d) = resolve_pair(&pair)?;
            let coords = parse_vector_arg(&point)?;
            if coords.len() != algebra.dim {
                return Err(Error::DimensionMismatch {
                    expected: algebra.dim,
                    got: coords.len(),
                });
            }
            let h = QuasiNormHandle::new(algebra, d);
            let x = GroupPoint::from_slice(&coords);
            print_json(&json!({
                "rho": h.eval(&x)?,
                "explicit": h.explicit_eval(&x),
            }));
            Ok(())
        }
        NormOp::Constants {
            pair,
            radius,
            samples,
            seed,
        } => {
            let (algebra, d) = resolve_pair(&pair)?;
            let dn = d.normalized(&algebra);
            let mut h = QuasiNormHandle::new(algebra, dn);
            let eta = h.estimate_eta_constants(radius, samples, seed)?;
            let c = h.estimate_quasi_triangle_c(samples, seed)?;
            print_json(&json!({
                "normalized": true,
                "gamma": eta.gamma,
                "c1": eta.c1,
                "c2": eta.c2,
                "radius": eta.radius,
                "samples": samples,
                "quasi_triangle_c": c,
            }));
            Ok(())
        }
    }
}

fn moments_cmd(op: MomentsOp) -> Result<(), Error> {
    let MomentsOp::Alpha { pair, p } = op;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::ConfigInvalid("p".into(), "need 0 < p <= 1".into()));
    }
    let (algebra, d) = resolve_pair(&pair)?;
    let dn = d.normalized(&algebra);
    let alpha_min = min_admissible_alpha(&dn, p);
    print_json(&json!({
        "p": p,
        "alpha_min": alpha_min,
        "alpha": alpha_min.ceil() as usize,
        "homogeneous_degrees": delta_semigroup(&dn, alpha_min + 2.0),
    }));
    Ok(())
}

struct BuildContext {
    cfg: ExperimentConfig,
    algebra: LieAlgebra,
    /// Working matrices; rescaled when the config asks for it.
    a: DilationMatrix,
    b: DilationMatrix,
    /// Matrices exactly as configured, for classification.
    raw_a: DilationMatrix,
    raw_b: DilationMatrix,
    handle: QuasiNormHandle,
    alpha: usize,
}

fn build_context(config: &str) -> Result<BuildContext, Error> {
    let cfg = load_config(config)?;
    let algebra = cfg.algebra()?;
    let raw_a = cfg.matrix_a(&algebra)?;
    let raw_b = cfg.matrix_b(&algebra)?;
    let (a, b) = if cfg.normalize {
        (raw_a.normalized(&algebra), raw_b.normalized(&algebra))
    } else {
        (raw_a.clone(), raw_b.clone())
    };
    if !(cfg.p > 0.0 && cfg.p < 1.0) {
        return Err(Error::ConfigInvalid("p".into(), "need 0 < p < 1".into()));
    }
    let alpha = match cfg.alpha {
        Some(v) => v,
        None => min_admissible_alpha(&a, cfg.p).ceil() as usize,
    };
    let handle = QuasiNormHandle::new(algebra.clone(), a.clone());
    Ok(BuildContext {
        cfg,
        algebra,
        a,
        b,
        raw_a,
        raw_b,
        handle,
        alpha,
    })
}

fn base_atom(ctx: &BuildContext) -> Result<homogroup::atoms::Atom, Error> {
    let spec = ctx.cfg.grid_spec(ctx.algebra.dim);
    build_base_atom(
        &ctx.handle,
        ctx.cfg.p,
        ctx.alpha,
        ctx.cfg.theta,
        ctx.cfg.eps_ball,
        ctx.cfg.big_r,
        &GroupPoint::from_slice(&ctx.cfg.x1),
        &spec,
        ctx.cfg.seed,
    )
}

fn atom_cmd(op: AtomOp) -> Result<(), Error> {
    match op {
        AtomOp::BuildBase { config, out_dir } => {
            let ctx = build_context(&config)?;
            let atom = base_atom(&ctx)?;
            ensure_dir(&out_dir)?;
            artifacts::write_atom(&atom, &out_dir, "base")?;
            print_json(&json!({
                "written": "base",
                "alpha": atom.alpha,
                "omega": atom.omega,
                "moment_residual": atom.moment_residual,
                "support_nodes": atom.values.support_nodes().len(),
            }));
            Ok(())
        }
        AtomOp::BuildAux { config, j, out_dir } => {
            let ctx = build_context(&config)?;
            let a0 = base_atom(&ctx)?;
            let x_vec = DVector::from_row_slice(&ctx.cfg.x1);
            let state =
                build_counterexample_state(&ctx.a, &ctx.b, j, &x_vec, ctx.cfg.p, a0.omega)?;
            let aux = build_aux_atom(&state, &a0, ctx.cfg.p)?;
            ensure_dir(&out_dir)?;
            let stem = format!("aux-{j}");
            artifacts::write_atom(&aux, &out_dir, &stem)?;
            print_json(&json!({
                "written": stem,
                "j": j,
                "d_j": state.d_j,
                "k_j": state.k_j,
                "tau_j": state.tau_j,
                "det_Mj": state.trace_q_j.exp(),
                "omega": aux.omega,
            }));
            Ok(())
        }
        AtomOp::Validate { config, dir, stem } => {
            let ctx = build_context(&config)?;
            let atom = artifacts::read_atom(&dir, &stem)?;
            let report = validate_atom(&atom, &ctx.handle, Some(&ctx.b), ctx.cfg.seed)?;
            print_json(&artifacts::report_json(&report));
            if !report.pass {
                return Err(Error::ValidationFailure(format!(
                    "atom `{stem}` fails its declared conditions"
                )));
            }
            Ok(())
        }
    }
}

fn maximal_cmd(op: MaximalOp) -> Result<(), Error> {
    let MaximalOp::Eval { config, out } = op;
    let ctx = build_context(&config)?;
    let atom = base_atom(&ctx)?;
    let f = atom.values.clone();

    // An order-one bump resolvable on the same grid; normalized on the grid
    // so the maximal operator sees unit mass.
    let bump = RadialBump::new(&ctx.handle, ctx.cfg.eps1, ctx.cfg.eps2, ctx.cfg.seed)?;
    let mut phi = GridFunction::from_fn(f.spec.clone(), |x| bump.eval(x));
    let mass = phi.integral();
    if mass <= 0.0 {
        return Err(Error::NotNormalized(mass));
    }
    for v in &mut phi.values {
        *v /= mass;
    }

    let res = radial_maximal(&f, &phi, &ctx.a, &ctx.algebra, &ctx.cfg.ladder_spec())?;
    if let Some(path) = out {
        let mut csv = String::from("index,value,argmax_t\n");
        for i in 0..res.values.values.len() {
            csv.push_str(&format!(
                "{i},{:e},{:e}\n",
                res.values.values[i], res.argmax_t[i]
            ));
        }
        artifacts::write_text(&path, &csv)?;
    }
    print_json(&json!({
        "sup": res.values.max_abs(),
        "lp_quasinorm": lp_quasinorm(&res.values, ctx.cfg.p),
        "scales": res.t_ladder.len(),
    }));
    Ok(())
}

fn resolve_matrix_pair(
    pair: &MatrixPair,
) -> Result<(LieAlgebra, DilationMatrix, DilationMatrix), Error> {
    let algebra = resolve_algebra(&pair.group)?;
    let a = check_admissible(&parse_matrix_arg(&pair.a, algebra.dim)?, &algebra)?;
    let b = check_admissible(&parse_matrix_arg(&pair.b, algebra.dim)?, &algebra)?;
    Ok((algebra, a, b))
}

fn classify_cmd(op: ClassifyOp) -> Result<(), Error> {
    let report = match &op {
        ClassifyOp::Norms { pair } => {
            let (algebra, a, b) = resolve_matrix_pair(pair)?;
            equiv_norm_decision(&a, &b, &algebra, pair.tol)?
        }
        ClassifyOp::Hardy { pair, window } => {
            let (algebra, a, b) = resolve_matrix_pair(pair)?;
            hardy_equal_decision(&a, &b, &algebra, pair.tol, *window)?
        }
    };
    print_json(
        &serde_json::to_value(&report)
            .map_err(|e| Error::PipelineStageFailure("classify".into(), e.to_string()))?,
    );
    Ok(())
}

fn experiment_cmd(op: ExperimentOp) -> Result<(), Error> {
    match op {
        ExperimentOp::Blowup { config, out_dir } => {
            let ctx = build_context(&config)?;
            let table = blowup_experiment(&ctx.handle, &ctx.b, &ctx.cfg.blowup(ctx.algebra.dim))?;
            ensure_dir(&out_dir)?;
            artifacts::write_text(&out_dir.join("blowup.csv"), &artifacts::blowup_csv(&table))?;
            print_json(&json!({
                "rows": table.rows.len(),
                "bounded_regime": table.bounded_regime,
                "sigma": table.sigma,
                "support_scale": table.support_scale,
                "alpha": table.alpha,
            }));
            Ok(())
        }
        ExperimentOp::SingularLimit {
            config,
            j_list,
            out,
        } => {
            let ctx = build_context(&config)?;
            let a0 = base_atom(&ctx)?;
            let js: Result<Vec<i64>, Error> = j_list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<i64>()
                        .map_err(|_| Error::ConfigInvalid("j_list".into(), t.to_string()))
                })
                .collect();
            let js = js?;
            let phi = smooth_test_field(&a0.values.spec, ctx.cfg.seed);
            let x_vec = DVector::from_row_slice(&ctx.cfg.x1);
            let table = singular_limit_diagnostics(&ctx.a, &ctx.b, &a0, &phi, &js, &x_vec)?;
            let mut csv = String::from(
                "j,d_j,det_Mj,pairing_direct,pairing_change_of_variables,rel_diff\n",
            );
            for r in &table.rows {
                csv.push_str(&format!(
                    "{},{},{:e},{:e},{:e},{:e}\n",
                    r.j,
                    r.d_j,
                    r.det_m_j,
                    r.pairing_direct,
                    r.pairing_change_of_variables,
                    r.rel_diff
                ));
            }
            if let Some(path) = out {
                artifacts::write_text(&path, &csv)?;
            } else {
                print!("{csv}");
            }
            print_json(&json!({ "bounded_regime": table.bounded_regime }));
            Ok(())
        }
    }
}

/// Smooth deterministic test field: a few Gaussian bumps with seeded
/// centers and widths.
fn smooth_test_field(spec: &homogroup::grid::GridSpec, seed: u64) -> GridFunction {
    let mut rng = stage_rng(seed, "singular-limit-test-field");
    let n = spec.dim;
    let bumps: Vec<(DVector<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let c = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
            let w: f64 = rng.gen_range(0.3..0.8);
            let amp: f64 = rng.gen_range(0.5..1.5);
            (c, w, amp)
        })
        .collect();
    GridFunction::from_fn(spec.clone(), |x| {
        bumps
            .iter()
            .map(|(c, w, amp)| amp * (-(x - c).norm_squared() / (w * w)).exp())
            .sum()
    })
}

fn pipeline_cmd(config: &str, out_dir: &Path) -> Result<(), Error> {
    let ctx = build_context(config)?;
    ensure_dir(out_dir)?;

    let canonical = serde_json::to_vec(&ctx.cfg)
        .map_err(|e| Error::PipelineStageFailure("manifest".into(), e.to_string()))?;
    let config_hash = fnv1a(&canonical);

    let stage = |name: &str, e: Error| match e {
        Error::PipelineStageFailure(..) => e,
        other => Error::PipelineStageFailure(name.to_string(), other.to_string()),
    };

    let report = classify_pair(
        &ctx.raw_a,
        &ctx.raw_b,
        &ctx.algebra,
        DEFAULT_TOL,
        DEFAULT_WINDOW,
        ctx.cfg.seed,
    )
    .map_err(|e| stage("classify", e))?;
    let report_value = serde_json::to_value(&report)
        .map_err(|e| Error::PipelineStageFailure("classify".into(), e.to_string()))?;
    artifacts::write_text(
        &out_dir.join("classification.json"),
        &format!("{:#}\n", report_value),
    )?;

    let a0 = base_atom(&ctx).map_err(|e| stage("base-atom", e))?;
    artifacts::write_atom(&a0, out_dir, "base")?;
    let x_vec = DVector::from_row_slice(&ctx.cfg.x1);
    let state = build_counterexample_state(&ctx.a, &ctx.b, 1, &x_vec, ctx.cfg.p, a0.omega)
        .map_err(|e| stage("aux-atom", e))?;
    let aux = build_aux_atom(&state, &a0, ctx.cfg.p).map_err(|e| stage("aux-atom", e))?;
    artifacts::write_atom(&aux, out_dir, "aux-1")?;

    let table = blowup_experiment(&ctx.handle, &ctx.b, &ctx.cfg.blowup(ctx.algebra.dim))
        .map_err(|e| stage("blowup", e))?;
    artifacts::write_text(&out_dir.join("blowup.csv"), &artifacts::blowup_csv(&table))?;

    let files = [
        "classification.json",
        "base.json",
        "base.csv",
        "aux-1.json",
        "aux-1.csv",
        "blowup.csv",
    ];
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": format!("{config_hash:016x}"),
        "seed": ctx.cfg.seed,
        "group": ctx.cfg.group,
        "verdict": report_value["verdict"],
        "bounded_regime": table.bounded_regime,
        "files": files,
    });
    artifacts::write_text(&out_dir.join("manifest.json"), &format!("{:#}\n", manifest))?;

    print_json(&manifest);
    Ok(())
}

fn plotdata_cmd(csv: &Path, out_dir: &Path, columns: Option<&str>) -> Result<(), Error> {
    let text = std::fs::read_to_string(csv)
        .map_err(|_| Error::FileNotFound(csv.display().to_string()))?;
    let cols: Option<Vec<String>> =
        columns.map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
    let written = artifacts::emit_plotdata(&text, out_dir, cols.as_deref())?;
    print_json(&json!({ "series": written }));
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::PipelineStageFailure(dir.display().to_string(), e.to_string()))
}

fn print_json(v: &serde_json::Value) {
    println!("{v:#}");
}
