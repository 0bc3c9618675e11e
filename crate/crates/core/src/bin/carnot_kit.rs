//! carnot-kit: command-line front end for the Carnot group toolkit.
//!
//! Outputs are machine-readable (JSON by default, CSV where noted) and
//! byte-stable for a fixed configuration and seed. Exit codes: 0 success,
//! 1 verification failure, 2 usage error.

use anyhow::{anyhow, Context};
use carnot_kit_core::convexity::{
    cone_probe, default_cone_s_grid, filiform_witness, free32_axis_check, hconvex_scan,
    ConeProbeOptions, ImplicitSet,
};
use carnot_kit_core::distance::{distance_estimate, DistanceStatus};
use carnot_kit_core::groups::{metivier_check, parse_group_shorthand, GroupDescriptor, PointJson};
use carnot_kit_core::multiexp::{openness_probe, submersion_test, submersion_test_f64_tol};
use carnot_kit_core::pansu::{pansu_slope, ResidualOptions, DEFAULT_LAMBDA_GRID};
use carnot_kit_core::scalar::{parse_rat, rat_to_f64, rat_to_string, Rat};
use carnot_kit_core::steptwo_solver::{choose_p, solve_full};
use carnot_kit_core::CarnotError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::io::Write;

#[derive(Parser)]
#[command(name = "carnot-kit", version, about = "Carnot group machinery: group arithmetic, multiexponential diagnostics, step-two chain solver, distance estimation, convexity and differentiability probes.", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the primary output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Float,
    Exact,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Group arithmetic: mul, inv, exp, dilate.
    #[command(subcommand)]
    Group(GroupCmd),
    /// Rank of the multiexponential differential at a constant chain.
    Submersion(SubmersionArgs),
    /// Probe local openness of the multiexponential around a constant chain.
    Openness(OpennessArgs),
    /// Métivier dichotomy probe for a step-two descriptor.
    Metivier(MetivierArgs),
    /// Constructive step-two chain solver (emits chain, residual, bound).
    SolveStep2(SolveStep2Args),
    /// Sub-Riemannian distance estimate between two points.
    Distance(DistanceArgs),
    /// First-order residuals of the distance at a horizontal point, with
    /// fitted decay slopes (CSV columns: lambda, r_upper, r_est, chain_norm).
    Pansu(PansuArgs),
    /// Inner-cone probe for a horizontally convex candidate set.
    Cone(ConeArgs),
    /// Random-line horizontal-convexity scan.
    HconvexScan(HconvexArgs),
    /// Certified inner-cone failure witness for the filiform sets.
    Witness(WitnessArgs),
    /// Membership sign table along the free32 axis curve.
    Free32Axis(Free32AxisArgs),
}

#[derive(Subcommand)]
enum GroupCmd {
    /// a · b
    Mul(GroupBinary),
    /// a⁻¹
    Inv(GroupUnary),
    /// exp(w·X)
    Exp(GroupExp),
    /// δ_λ(a)
    Dilate(GroupDilate),
}

#[derive(Args)]
struct GroupOpts {
    /// Group: heisenberg | filiform:p | free32 | step2:@file.json
    #[arg(long)]
    group: String,
    /// Numeric mode; exact prints rationals as "num/den".
    #[arg(long, value_enum, default_value = "float")]
    mode: Mode,
}

#[derive(Args)]
struct GroupBinary {
    #[command(flatten)]
    opts: GroupOpts,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
}

#[derive(Args)]
struct GroupUnary {
    #[command(flatten)]
    opts: GroupOpts,
    #[arg(long)]
    a: String,
}

#[derive(Args)]
struct GroupExp {
    #[command(flatten)]
    opts: GroupOpts,
    #[arg(long)]
    w: String,
}

#[derive(Args)]
struct GroupDilate {
    #[command(flatten)]
    opts: GroupOpts,
    #[arg(long)]
    lambda: String,
    #[arg(long)]
    a: String,
}

#[derive(Args)]
struct SubmersionArgs {
    #[arg(long)]
    group: String,
    /// Horizontal vector ξ, comma-separated.
    #[arg(long)]
    xi: String,
    /// Chain length p.
    #[arg(long)]
    p: usize,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    /// Relative singular-value cutoff for the float-mode numeric rank.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct OpennessArgs {
    #[arg(long)]
    group: String,
    #[arg(long)]
    xi: String,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 8)]
    targets: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct MetivierArgs {
    #[arg(long)]
    group: String,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct SolveStep2Args {
    #[arg(long)]
    group: String,
    /// First-layer target z (length m).
    #[arg(long)]
    z: String,
    /// Vertical target t (length l).
    #[arg(long)]
    t: String,
    /// Base horizontal vector ξ of the full system; defaults to zero.
    #[arg(long)]
    xi: Option<String>,
}

#[derive(Args)]
struct DistanceArgs {
    #[arg(long)]
    group: String,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long, default_value_t = 64)]
    segments: usize,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct PansuArgs {
    #[arg(long)]
    group: String,
    /// Horizontal vector w ≠ 0 (base point exp(w·X)).
    #[arg(long)]
    w: String,
    /// Dilation seed point x₀.
    #[arg(long)]
    x0: String,
    /// λ grid, comma-separated; default 1e-1…1e-4.
    #[arg(long)]
    lambdas: Option<String>,
    /// Chain length override (default: smallest submersion length).
    #[arg(long)]
    p: Option<usize>,
    /// Also compute the distance-oracle residual column r_est.
    #[arg(long, default_value_t = false)]
    estimate: bool,
    #[arg(long, default_value_t = 48)]
    segments: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SetOpts {
    /// Named set (filiform-even:p, filiform-odd:p, engel-remark42,
    /// free32-psi4:a,b) or an expression over coordinates with --group.
    #[arg(long)]
    set: String,
    /// Group descriptor, required for expression sets.
    #[arg(long)]
    group: Option<String>,
    /// Expression sets: include the boundary ({F >= 0} instead of {F > 0}).
    #[arg(long, default_value_t = false)]
    closed: bool,
}

#[derive(Args)]
struct ConeArgs {
    #[command(flatten)]
    set: SetOpts,
    /// Cone vertex (exact rationals accepted).
    #[arg(long)]
    vertex: String,
    /// Horizontal direction V of the cone axis.
    #[arg(long)]
    dir: String,
    /// Cone aperture ε > 0.
    #[arg(long)]
    eps: String,
    /// s grid, comma-separated positives; default geometric 2⁻¹…2⁻²⁰.
    #[arg(long)]
    s_grid: Option<String>,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long, default_value_t = 32)]
    segments: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 2)]
    max_violations: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct HconvexArgs {
    #[command(flatten)]
    set: SetOpts,
    #[arg(long, default_value_t = 10_000)]
    lines: usize,
    #[arg(long, default_value_t = 17)]
    grid: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct WitnessArgs {
    /// Filiform parameter (even).
    #[arg(long)]
    p: usize,
    #[arg(long)]
    eps: String,
    #[arg(long)]
    s: String,
    #[arg(long, default_value_t = 32)]
    segments: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct Free32AxisArgs {
    /// Unit vector ξ as a,b (exact Pythagorean pairs stay exact).
    #[arg(long)]
    xi: String,
    #[arg(long)]
    eps: String,
    #[arg(long)]
    c: String,
    /// s grid, comma-separated positives.
    #[arg(long)]
    s_grid: String,
}

fn parse_rat_vec(s: &str) -> anyhow::Result<Vec<Rat>> {
    s.split(',')
        .map(|part| parse_rat(part).map_err(|e| anyhow!("bad number {part:?}: {e}")))
        .collect()
}

fn parse_f64_vec(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|part| part.trim().parse::<f64>().map_err(|e| anyhow!("bad number {part:?}: {e}")))
        .collect()
}

fn emit(out: &Option<std::path::PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {path:?}")),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable");
    s.push('\n');
    s
}

fn build_set(opts: &SetOpts) -> anyhow::Result<ImplicitSet> {
    if let Ok(set) = ImplicitSet::from_tag(&opts.set) {
        return Ok(set);
    }
    let group = opts
        .group
        .as_ref()
        .ok_or_else(|| anyhow!("expression sets need --group"))?;
    let g = parse_group_shorthand(group)?;
    Ok(ImplicitSet::from_expr(&g, &opts.set, opts.closed)?)
}

/// Exit code classification: usage errors are 2, verification failures 1.
fn classify(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<CarnotError>() {
        Some(CarnotError::SolverFailure(_)) => 1,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("CARNOT_KIT_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(classify(&err));
        }
    }
}

fn point_output(mode: Mode, coords_exact: &[Rat], coords_f64: &[f64]) -> PointJson {
    match mode {
        Mode::Exact => PointJson::from_exact(coords_exact),
        Mode::Float => PointJson::from_float(coords_f64),
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let out = &cli.out;
    match cli.command {
        Command::Group(cmd) => run_group(cmd, out),
        Command::Submersion(args) => {
            let g = parse_group_shorthand(&args.group)?;
            let report = match args.mode {
                Mode::Exact => {
                    let xi = parse_rat_vec(&args.xi)?;
                    submersion_test(&g, &xi, args.p)?
                }
                Mode::Float => {
                    let xi = parse_f64_vec(&args.xi)?;
                    submersion_test_f64_tol(&g, &xi, args.p, args.tol)?
                }
            };
            emit(out, &json_line(&report))?;
            Ok(0)
        }
        Command::Openness(args) => {
            let g = parse_group_shorthand(&args.group)?;
            let xi = parse_f64_vec(&args.xi)?;
            let report = openness_probe(&g, &xi, args.p, args.eps, args.targets, args.seed)?;
            emit(out, &json_line(&report))?;
            Ok(0)
        }
        Command::Metivier(args) => {
            let g = parse_group_shorthand(&args.group)?;
            let GroupDescriptor::StepTwo(s2) = &g else {
                return Err(anyhow!("metivier needs a step-two descriptor"));
            };
            let report = metivier_check(s2, args.trials, args.seed)?;
            emit(out, &json_line(&report))?;
            Ok(0)
        }
        Command::SolveStep2(args) => {
            let g = parse_group_shorthand(&args.group)?;
            let GroupDescriptor::StepTwo(s2) = &g else {
                return Err(anyhow!("solve-step2 needs a step-two descriptor"));
            };
            let z = parse_rat_vec(&args.z)?;
            let t = parse_rat_vec(&args.t)?;
            let xi = match &args.xi {
                Some(xi) => parse_rat_vec(xi)?,
                None => vec![Rat::from_integer(0.into()); s2.m()],
            };
            let full = solve_full(s2, &xi, &z, &t)?;
            #[derive(Serialize)]
            struct SolveOut {
                p: usize,
                chain: Vec<Vec<f64>>,
                residual: f64,
                bound: f64,
                bound_ratio: Option<f64>,
                exact_verified: bool,
                target: Vec<String>,
            }
            let xi_f: Vec<f64> = full.xi.iter().map(rat_to_f64).collect();
            let chain: Vec<Vec<f64>> = full
                .correction
                .u_f64()
                .into_iter()
                .map(|row| row.iter().zip(&xi_f).map(|(u, x)| u + x).collect())
                .collect();
            let report = SolveOut {
                p: choose_p(s2),
                chain,
                residual: full.residual_f64(s2),
                bound: full.chain_bound(),
                bound_ratio: full.correction.bound_ratio(),
                // solve_full errors out unless the reconstruction holds
                // exactly in the extension ring.
                exact_verified: true,
                target: full.target.iter().map(rat_to_string).collect(),
            };
            emit(out, &json_line(&report))?;
            Ok(0)
        }
        Command::Distance(args) => {
            let g = parse_group_shorthand(&args.group)?;
            let a = parse_f64_vec(&args.a)?;
            let b = parse_f64_vec(&args.b)?;
            let est = distance_estimate(&g, &a, &b, args.segments, args.restarts, args.seed)?;
            match args.format {
                Format::Json => emit(out, &json_line(&est))?,
                Format::Csv => {
                    let mut text = String::new();
                    text.push_str(&format!("# value={}\n", est.value));
                    text.push_str(&format!("# residual={}\n", est.residual));
                    text.push_str(&format!(
                        "# status={}\n",
                        match est.status {
                            DistanceStatus::UpperBound => "upper-bound",
                            DistanceStatus::Failed => "failed",
                        }
                    ));
                    text.push_str("segment");
                    for j in 0..g.m() {
                        text.push_str(&format!(",u_{}", j + 1));
                    }
                    text.push('\n');
                    for (i, row) in est.controls.iter().enumerate() {
                        text.push_str(&i.to_string());
                        for c in row {
                            text.push_str(&format!(",{c}"));
                        }
                        text.push('\n');
                    }
                    emit(out, &text)?;
                }
            }
            Ok(if est.status == DistanceStatus::UpperBound { 0 } else { 1 })
        }
        Command::Pansu(args) => {
            let g = parse_group_shorthand(&args.group)?;
            let w = parse_f64_vec(&args.w)?;
            let x0 = parse_f64_vec(&args.x0)?;
            let grid = match &args.lambdas {
                Some(s) => parse_f64_vec(s)?,
                None => DEFAULT_LAMBDA_GRID.to_vec(),
            };
            let opts = ResidualOptions {
                p: args.p,
                estimate: args.estimate.then_some((args.segments, args.restarts, args.seed)),
            };
            let report = pansu_slope(&g, &w, &x0, &grid, &opts)?;
            match args.format {
                Format::Json => emit(out, &json_line(&report))?,
                Format::Csv => {
                    let mut text = String::from("lambda,r_upper,r_est,chain_norm\n");
                    for row in &report.rows {
                        let est = row.r_est.map(|v| v.to_string()).unwrap_or_default();
                        text.push_str(&format!(
                            "{},{},{},{}\n",
                            row.lambda, row.r_upper, est, row.chain_norm
                        ));
                    }
                    emit(out, &text)?;
                }
            }
            Ok(0)
        }
        Command::Cone(args) => {
            let set = build_set(&args.set)?;
            let vertex = parse_rat_vec(&args.vertex)?;
            let dir = parse_rat_vec(&args.dir)?;
            let eps = parse_rat(&args.eps).map_err(|e| anyhow!("bad eps: {e}"))?;
            let s_grid = match &args.s_grid {
                Some(s) => parse_rat_vec(s)?,
                None => default_cone_s_grid(),
            };
            let opts = ConeProbeOptions {
                segments: args.segments,
                restarts: args.restarts,
                max_violations: args.max_violations,
                max_oracle_calls: 64,
            };
            let report =
                cone_probe(&set, &vertex, &dir, &eps, &s_grid, args.samples, args.seed, &opts)?;
            match args.format {
                Format::Json => emit(out, &json_line(&report))?,
                Format::Csv => {
                    let n = set.descriptor.n();
                    let mut text = String::from("s");
                    for i in 0..n {
                        text.push_str(&format!(",x{}", i + 1));
                    }
                    text.push_str(",f_value,distance_upper,radius\n");
                    for v in &report.violations {
                        text.push_str(&v.s);
                        for c in &v.point_f64 {
                            text.push_str(&format!(",{c}"));
                        }
                        text.push_str(&format!(
                            ",{},{},{}\n",
                            v.f_value, v.distance_upper, v.radius
                        ));
                    }
                    emit(out, &text)?;
                }
            }
            Ok(0)
        }
        Command::HconvexScan(args) => {
            let set = build_set(&args.set)?;
            let report = hconvex_scan(&set, args.lines, args.grid, args.seed)?;
            emit(out, &json_line(&report))?;
            Ok(0)
        }
        Command::Witness(args) => {
            let eps = parse_rat(&args.eps).map_err(|e| anyhow!("bad eps: {e}"))?;
            let s = parse_rat(&args.s).map_err(|e| anyhow!("bad s: {e}"))?;
            let report =
                filiform_witness(args.p, &eps, &s, args.segments, args.restarts, args.seed)?;
            let ok = report.certified;
            emit(out, &json_line(&report))?;
            Ok(if ok { 0 } else { 1 })
        }
        Command::Free32Axis(args) => {
            let xi = parse_rat_vec(&args.xi)?;
            if xi.len() != 2 {
                return Err(anyhow!("xi must have two components"));
            }
            let eps = parse_rat(&args.eps).map_err(|e| anyhow!("bad eps: {e}"))?;
            let c = parse_rat(&args.c).map_err(|e| anyhow!("bad c: {e}"))?;
            let s_grid = parse_rat_vec(&args.s_grid)?;
            let report = free32_axis_check(&[xi[0].clone(), xi[1].clone()], &eps, &c, &s_grid)?;
            let ok = report.all_agree;
            emit(out, &json_line(&report))?;
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn run_group(cmd: GroupCmd, out: &Option<std::path::PathBuf>) -> anyhow::Result<i32> {
    let (opts, result_exact) = match &cmd {
        GroupCmd::Mul(args) => {
            let g = parse_group_shorthand(&args.opts.group)?;
            let a = parse_rat_vec(&args.a)?;
            let b = parse_rat_vec(&args.b)?;
            (&args.opts, g.multiply(&a, &b)?)
        }
        GroupCmd::Inv(args) => {
            let g = parse_group_shorthand(&args.opts.group)?;
            let a = parse_rat_vec(&args.a)?;
            (&args.opts, g.inverse(&a)?)
        }
        GroupCmd::Exp(args) => {
            let g = parse_group_shorthand(&args.opts.group)?;
            let w = parse_rat_vec(&args.w)?;
            (&args.opts, g.exp_horizontal(&w)?)
        }
        GroupCmd::Dilate(args) => {
            let g = parse_group_shorthand(&args.opts.group)?;
            let lambda = parse_rat(&args.lambda).map_err(|e| anyhow!("bad lambda: {e}"))?;
            let a = parse_rat_vec(&args.a)?;
            (&args.opts, g.dilate(&lambda, &a)?)
        }
    };
    let result_f64: Vec<f64> = result_exact.iter().map(rat_to_f64).collect();
    let point = point_output(opts.mode, &result_exact, &result_f64);
    emit(out, &json_line(&point))?;
    Ok(0)
}
