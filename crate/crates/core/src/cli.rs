//! The `calib` command-line front end.
//!
//! Every subcommand reads a flat `key=value` file, validates it completely,
//! and then writes its outputs into `--out` under names derived from a hash
//! of the effective configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::comass::{build_torus_form, comass_optimize, ComassEstimate, ComassOptions, TorusFormSpec};
use crate::config::{parse_list, parse_rows, KeyValues};
use crate::desing::{
    build_ambient, extract_singular_set, verify_calibration, CheckSummary, MetricChoice, Mode,
    ModelParams, SamplePlan, Tolerances, DEFAULT_ORDER,
};
use crate::error::{invalid, Error, Result};
use crate::exterior::{evaluate, simple_from_frame, BlockMetric, Form, Frame};
use crate::fractal::{
    box_dim, cantor_generate, default_depth_range, product_with_interval, ratio_for_dimension,
    CantorSpec,
};
use crate::whitney::{build_vanishing_function, DyadicCellSet};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_REACH: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "calib", version, about = "Numerical checks of calibrated desingularizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a two-sheet model and verify its calibration pointwise.
    Verify(RunArgs),
    /// Estimate the comass of a torus form or an explicit form.
    Comass(RunArgs),
    /// Generate a Cantor-type set and its box-counting table.
    Fractal(RunArgs),
    /// Sample the Whitney function vanishing on a set.
    Function(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file (key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the main tolerance of the subcommand.
    #[arg(long)]
    tol: Option<f64>,
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Comass(a) => cmd_comass(a),
        Command::Fractal(a) => cmd_fractal(a),
        Command::Function(a) => cmd_function(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::ReachTooSmall { .. } => EXIT_REACH,
        Error::InvalidArgument(_) | Error::Parse { .. } | Error::DimensionMismatch { .. } => EXIT_INVALID,
        _ => EXIT_FAILED,
    }
}

fn load(args: &RunArgs, tol_key: &str) -> Result<KeyValues> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| invalid(format!("cannot read {}: {e}", args.config.display())))?;
    let mut kv = KeyValues::parse(&text)?;
    if let Some(seed) = args.seed {
        kv.set("seed", seed);
    }
    if let Some(tol) = args.tol {
        kv.set(tol_key, tol);
    }
    Ok(kv)
}

fn config_hash(command: &str, kv: &KeyValues) -> String {
    let digest = Sha256::digest(format!("{command}\n{}", kv.canonical()).as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Zero set selected by `set=cantor|empty|full|file` on the torus `R^j/ρZ^j`.
/// A Cantor factor sits on the first axis; the other axes are full intervals.
fn zero_set(kv: &KeyValues, j: usize, rho: f64) -> Result<DyadicCellSet> {
    let kind = kv.raw("set").unwrap_or("cantor").to_string();
    match kind.as_str() {
        "cantor" => {
            let ratio = match (kv.get::<f64>("ratio")?, kv.get::<f64>("dimension")?) {
                (Some(_), Some(_)) => return Err(invalid("give either ratio or dimension, not both")),
                (Some(r), None) => r,
                (None, Some(a)) => ratio_for_dimension(a)?,
                (None, None) => 1.0 / 3.0,
            };
            let mut spec = CantorSpec::new(ratio, kv.require("depth")?, rho);
            if let Some(g) = kv.get("grid_depth")? {
                spec = spec.with_grid_depth(g);
            }
            let c = cantor_generate(&spec)?;
            if j > 1 {
                product_with_interval(&c, j - 1)
            } else {
                Ok(c)
            }
        }
        "empty" => DyadicCellSet::empty(j, rho, kv.get_or("grid_depth", 6)?),
        "full" => DyadicCellSet::full(j, rho, kv.get_or("grid_depth", 6)?),
        "file" => {
            let path: String = kv.require("set_file")?;
            let text = fs::read_to_string(&path).map_err(|e| invalid(format!("cannot read {path}: {e}")))?;
            DyadicCellSet::from_text(&text, Some(rho))
        }
        other => Err(invalid(format!("unknown set kind {other:?}"))),
    }
}

/// Everything `verify` needs, validated before any computation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub zero_set: DyadicCellSet,
    pub plan: SamplePlan,
    pub singular_tol: f64,
}

impl RunConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mode = match kv.raw("mode").unwrap_or("minimizing") {
            "minimizing" => Mode::Minimizing,
            "stable_pair" => Mode::StablePair,
            other => return Err(invalid(format!("unknown mode {other:?}"))),
        };
        let n: usize = kv.require("n")?;
        let j: usize = match mode {
            Mode::Minimizing => kv.require("j")?,
            Mode::StablePair => kv.get_or("j", n.saturating_sub(1))?,
        };
        let rho: f64 = kv.require("rho")?;
        let mut params = ModelParams::new(n, j, rho, kv.require("epsilon")?);
        params.mode = mode;
        params.order = kv.get_or("order", DEFAULT_ORDER)?;
        params.reach_samples = kv.get_or("samples_reach", params.reach_samples)?;
        params.validate()?;

        let defaults = SamplePlan::default();
        let tolerances = Tolerances {
            sheet: kv.get_or("tol_sheet", defaults.tolerances.sheet)?,
            comass: kv.get_or("tol_comass", defaults.tolerances.comass)?,
            closed: kv.get_or("tol_closed", defaults.tolerances.closed)?,
            jacobian: kv.get_or("tol_jacobian", defaults.tolerances.jacobian)?,
            graph_norm: kv.get_or("tol_graph", defaults.tolerances.graph_norm)?,
        };
        for (name, t) in [
            ("tol_sheet", tolerances.sheet),
            ("tol_comass", tolerances.comass),
            ("tol_closed", tolerances.closed),
            ("tol_jacobian", tolerances.jacobian),
            ("tol_graph", tolerances.graph_norm),
        ] {
            if !(t >= 0.0) {
                return Err(invalid(format!("{name} must be non-negative")));
            }
        }
        let plan = SamplePlan {
            sheet: kv.get_or("samples_sheet", defaults.sheet)?,
            ambient: kv.get_or("samples_ambient", defaults.ambient)?,
            pairs: kv.get_or("samples_pairs", defaults.pairs)?,
            closed: kv.get_or("samples_closed", defaults.closed)?,
            projection: kv.get_or("samples_projection", defaults.projection)?,
            restarts: kv.get_or("restarts", defaults.restarts)?,
            seed: kv.get_or("seed", defaults.seed)?,
            tube_fraction: defaults.tube_fraction,
            tolerances,
            metric: if kv.get_or("corrupt_metric", false)? {
                MetricChoice::Corrupted
            } else {
                MetricChoice::Rescaled
            },
        };
        if plan.restarts == 0 {
            return Err(invalid("restarts must be positive"));
        }
        let singular_tol: f64 = kv.get_or("tol_singular", 0.0)?;
        if !(singular_tol >= 0.0) {
            return Err(invalid("tol_singular must be non-negative"));
        }
        let zero_set = zero_set(kv, j, rho)?;
        kv.finish()?;
        Ok(Self {
            params,
            zero_set,
            plan,
            singular_tol,
        })
    }
}

#[derive(Serialize)]
struct VerifyDocument<'a> {
    config_hash: &'a str,
    passed: bool,
    reach: Option<f64>,
    summaries: &'a [CheckSummary],
    records: &'a [crate::desing::CheckRecord],
}

/// CSV with one row per check class.
pub fn summary_csv(summaries: &[CheckSummary]) -> String {
    let mut out = String::from("check,samples,max_value,tolerance,failures,pass\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{},{}",
            s.check, s.samples, s.max_value, s.tolerance, s.failures, s.pass
        );
    }
    out
}

fn cmd_verify(args: &RunArgs) -> Result<u8> {
    let kv = load(args, "tol_comass")?;
    let config = RunConfig::from_key_values(&kv)?;
    let hash = config_hash("verify", &kv);
    let model = build_ambient(&config.params, config.zero_set.clone())?;
    let mut report = verify_calibration(&model, &config.plan)?;
    let singular = extract_singular_set(&model, config.singular_tol)?;
    report.add_singular_set(&singular, model.j());

    let doc = VerifyDocument {
        config_hash: &hash,
        passed: report.passed(),
        reach: model.reach(),
        summaries: &report.summaries,
        records: &report.records,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| invalid(e.to_string()))?;
    let json_path = write_output(&args.out, &format!("report-{hash}.json"), &json)?;
    let csv_path = write_output(&args.out, &format!("summary-{hash}.csv"), &summary_csv(&report.summaries))?;
    for s in &report.summaries {
        println!(
            "{:<24} {:>6} samples  max {:>12.4e}  tol {:.1e}  {}",
            s.check,
            s.samples,
            s.max_value,
            s.tolerance,
            if s.pass { "ok" } else { "FAIL" }
        );
    }
    println!("report  {}", json_path.display());
    println!("summary {}", csv_path.display());
    Ok(if report.passed() { EXIT_OK } else { EXIT_FAILED })
}

/// A form, its metric, and the planes it is expected to calibrate.
struct ComassJob {
    form: Form,
    metric: BlockMetric,
    planes: Vec<(&'static str, Frame)>,
    options: ComassOptions,
}

fn comass_job(kv: &KeyValues) -> Result<ComassJob> {
    let kind = kv.raw("kind").unwrap_or("torus").to_string();
    let (form, planes) = match kind.as_str() {
        "torus" => {
            let n_minus_j: usize = kv.require("n_minus_j")?;
            let alpha = parse_rows(&kv.require::<String>("alpha")?)?;
            let beta = parse_rows(&kv.require::<String>("beta")?)?;
            let m = alpha.first().map_or(0, Vec::len);
            if let Some(declared) = kv.get::<usize>("m")? {
                if declared != m {
                    return Err(Error::DimensionMismatch {
                        expected: declared,
                        found: m,
                    });
                }
            }
            let spec = TorusFormSpec::new(
                n_minus_j,
                Frame::new(m, alpha)?,
                Frame::new(m, beta)?,
                kv.get_or("lambda", 1.0)?,
                kv.get_or("mu", 1.0)?,
            )?;
            let planes = vec![("x_plane", spec.x_plane()?), ("y_plane", spec.y_plane()?)];
            (build_torus_form(&spec)?, planes)
        }
        "explicit" => {
            let dim: usize = kv.require("dim")?;
            let degree: usize = kv.require("degree")?;
            let mut form = Form::zeros(dim, degree);
            for (line, term) in kv.all("term") {
                let bad = |message: String| Error::Parse { line, message };
                let (coef, idx) = term
                    .split_once('@')
                    .ok_or_else(|| bad(format!("expected COEF@i1,i2,..., got {term:?}")))?;
                let coef: f64 = coef.trim().parse().map_err(|e| bad(format!("{e}")))?;
                let idx: Vec<usize> = parse_list(idx)?;
                if idx.len() != degree || idx.iter().any(|&i| i == 0 || i > dim) {
                    return Err(bad(format!("indices must be {degree} values in 1..={dim}")));
                }
                let zero_based: Vec<usize> = idx.iter().map(|i| i - 1).collect();
                form.add_term(&zero_based, coef).map_err(|e| bad(e.to_string()))?;
            }
            (form, Vec::new())
        }
        other => return Err(invalid(format!("unknown comass spec kind {other:?}"))),
    };
    let metric = match kv.get::<String>("weights")? {
        Some(w) => BlockMetric::new(parse_list(&w)?)?,
        None => BlockMetric::flat(form.dim()),
    };
    if metric.dim() != form.dim() {
        return Err(Error::DimensionMismatch {
            expected: form.dim(),
            found: metric.dim(),
        });
    }
    let mut options = ComassOptions::for_degree(form.degree()).with_seed(kv.get_or("seed", 0)?);
    if let Some(r) = kv.get::<usize>("restarts")? {
        if r == 0 {
            return Err(invalid("restarts must be positive"));
        }
        options = options.with_restarts(r);
    }
    options.tol = kv.get_or("tol", options.tol)?;
    kv.finish()?;
    Ok(ComassJob {
        form,
        metric,
        planes,
        options,
    })
}

fn cmd_comass(args: &RunArgs) -> Result<u8> {
    let kv = load(args, "tol")?;
    let job = comass_job(&kv)?;
    let hash = config_hash("comass", &kv);
    let est: ComassEstimate = comass_optimize(&job.form, &job.metric, &job.options)?;
    let mut csv = String::from("quantity,value\n");
    let _ = writeln!(csv, "lower_bound,{:e}", est.lower_bound);
    let _ = writeln!(csv, "restarts_used,{}", est.restarts_used);
    let _ = writeln!(csv, "converged,{}", est.converged);
    println!("comass lower bound {:.12}", est.lower_bound);
    println!("restarts {} (converged: {})", est.restarts_used, est.converged);
    for (name, plane) in &job.planes {
        let value = evaluate(&job.form, &simple_from_frame(plane, &job.metric)?)?;
        let _ = writeln!(csv, "{name},{value:e}");
        println!("{name} value {value:.12}");
    }
    println!("witness frame:");
    for v in est.maximizer.vectors() {
        let row: Vec<String> = v.iter().map(|x| format!("{x:+.6}")).collect();
        println!("  [{}]", row.join(", "));
    }
    let path = write_output(&args.out, &format!("comass-{hash}.csv"), &csv)?;
    println!("table {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_fractal(args: &RunArgs) -> Result<u8> {
    let kv = load(args, "tol")?;
    // deterministic: seed and tol are accepted but unused
    kv.raw("seed");
    kv.raw("tol");
    let side: f64 = kv.get_or("side", 1.0)?;
    let kind = kv.raw("kind").unwrap_or("cantor").to_string();
    let mut header = String::new();
    let (set, depths) = match kind.as_str() {
        "cantor" | "product" => {
            let ratio = match (kv.get::<f64>("ratio")?, kv.get::<f64>("dimension")?) {
                (Some(_), Some(_)) => return Err(invalid("give either ratio or dimension, not both")),
                (Some(r), None) => r,
                (None, Some(a)) => ratio_for_dimension(a)?,
                (None, None) => return Err(invalid("missing ratio or dimension")),
            };
            let mut spec = CantorSpec::new(ratio, kv.require("depth")?, side);
            if let Some(g) = kv.get("grid_depth")? {
                spec = spec.with_grid_depth(g);
            }
            let extra: usize = if kind == "product" { kv.get_or("extra_dims", 1)? } else { 0 };
            let _ = writeln!(
                header,
                "# ratio={ratio} analytic_dimension={}",
                spec.analytic_dimension() + extra as f64
            );
            let c = cantor_generate(&spec)?;
            let set = if extra > 0 { product_with_interval(&c, extra)? } else { c };
            (set, default_depth_range(&spec))
        }
        "interval" => {
            let length: f64 = kv.get_or("length", 1.0)?;
            if !(length > 0.0 && length <= side) {
                return Err(invalid("interval length must lie in (0, side]"));
            }
            let grid: u32 = kv.get_or("grid_depth", 10)?;
            let cells = ((length / side) * (1u64 << grid) as f64).ceil() as u64;
            let set = DyadicCellSet::new(1, side, grid, (0..cells).map(|i| [i]))?;
            let _ = writeln!(header, "# analytic_dimension=1");
            let start = (side / length).log2().ceil().max(0.0) as u32 + 2;
            (set, start..=grid.max(start))
        }
        other => return Err(invalid(format!("unknown fractal kind {other:?}"))),
    };
    let depths = match kv.get::<String>("depths")? {
        Some(r) => {
            let (a, b) = r.split_once("..").ok_or_else(|| invalid("depths must look like a..b"))?;
            let parse = |s: &str| s.trim().parse::<u32>().map_err(|e| invalid(format!("depths: {e}")));
            parse(a)?..=parse(b)?
        }
        None => depths,
    };
    let write_set: bool = kv.get_or("write_set", true)?;
    kv.finish()?;
    let hash = config_hash("fractal", &kv);
    let est = box_dim(&set, depths)?;
    if write_set {
        let path = write_output(&args.out, &format!("set-{hash}.txt"), &format!("{header}{}", set.to_text()))?;
        println!("set   {}", path.display());
    }
    let csv_path = write_output(&args.out, &format!("boxdim-{hash}.csv"), &est.to_csv())?;
    print!("{header}");
    println!("cells {} at depth {}", set.len(), set.depth());
    println!("box dimension {:.6} (residual {:.2e})", est.slope, est.residual);
    println!("table {}", csv_path.display());
    Ok(EXIT_OK)
}

fn cmd_function(args: &RunArgs) -> Result<u8> {
    let kv = load(args, "epsilon")?;
    kv.raw("seed");
    let j: usize = kv.require("j")?;
    let rho: f64 = kv.require("rho")?;
    let epsilon: f64 = kv.require("epsilon")?;
    let order: usize = kv.get_or("order", 3)?;
    let samples: usize = kv.get_or("samples", 256)?;
    let norm_depth: u32 = kv.get_or("norm_grid_depth", 10)?;
    if !(1..=3).contains(&j) {
        return Err(invalid("j must lie in 1..=3"));
    }
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    let k = zero_set(&kv, j, rho)?;
    kv.finish()?;
    let hash = config_hash("function", &kv);
    let f = build_vanishing_function(&k, epsilon, order)?;
    let norm = f.ck_norm(order, norm_depth)?;
    let mut csv = String::new();
    for a in 0..j {
        let _ = write!(csv, "p{},", a + 1);
    }
    csv.push_str("value\n");
    let total = samples.pow(j as u32);
    for flat in 0..total {
        let p: Vec<f64> = (0..j)
            .map(|a| ((flat / samples.pow(a as u32)) % samples) as f64 * rho / samples as f64)
            .collect();
        for x in &p {
            let _ = write!(csv, "{x},");
        }
        let _ = writeln!(csv, "{:e}", f.value(&p)?);
    }
    let path = write_output(&args.out, &format!("function-{hash}.csv"), &csv)?;
    println!("bumps {}", f.bumps().len());
    println!("sampled C^{order} norm {norm:.6e} (epsilon {epsilon:e})");
    println!("table {}", path.display());
    Ok(if norm <= epsilon { EXIT_OK } else { EXIT_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_defaults_and_errors() {
        let kv = KeyValues::parse("n=3\nj=1\nrho=4\nepsilon=1e-3\ndepth=3\n").unwrap();
        let c = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!(c.plan.pairs, 10_000);
        assert_eq!(c.singular_tol, 0.0);
        assert_eq!(c.zero_set.torus_dim(), 1);

        let kv = KeyValues::parse("n=3\nj=1\nrho=4\nepsilon=1e-3\ndepth=3\nbogus=1\n").unwrap();
        assert!(RunConfig::from_key_values(&kv).is_err());
        let kv = KeyValues::parse("n=3\nj=2\nrho=4\nepsilon=1e-3\ndepth=3\n").unwrap();
        assert!(RunConfig::from_key_values(&kv).is_err());
        let kv = KeyValues::parse("mode=stable_pair\nn=3\nrho=4\nepsilon=1e-3\ndepth=2\ngrid_depth=5\n").unwrap();
        assert_eq!(RunConfig::from_key_values(&kv).unwrap().params.j, 2);
    }

    #[test]
    fn hash_depends_on_content_only() {
        let a = KeyValues::parse("n=3\nj=1").unwrap();
        let b = KeyValues::parse("j = 1\n# x\nn=3").unwrap();
        assert_eq!(config_hash("verify", &a), config_hash("verify", &b));
        assert_ne!(config_hash("verify", &a), config_hash("comass", &a));
        assert_eq!(config_hash("verify", &a).len(), 16);
    }

    #[test]
    fn summary_csv_layout() {
        let s = CheckSummary {
            check: "closedness".into(),
            samples: 3,
            max_value: 1.5e-6,
            tolerance: 1e-4,
            failures: 0,
            pass: true,
        };
        assert_eq!(
            summary_csv(&[s]),
            "check,samples,max_value,tolerance,failures,pass\nclosedness,3,1.5e-6,1e-4,0,true\n"
        );
    }
}
