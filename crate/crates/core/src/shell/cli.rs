//! The `kernelbundle` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::contour::{try_locate_zeros, ZeroReport};
use crate::error::{Error, Result};
use crate::frames::FrameSet;
use crate::linalg::CMatrix;
use crate::pairing::{base_point_check, coefficients, reduced_pairing_matrix, CoefficientVector, PairingMatrix};
use crate::serde_util::cmatrix;

use super::bundle::Bundle;
use super::grid::ParameterGrid;
use super::spec::{FamilySpec, ProbeSpec, ProblemSpec};
use super::sweep::{branching_rows, sweep, write_branching_csv, ProbeSection, SweepOptions};
use super::trace::{trace_from_germ, TraceExpansion, TRACE_AGREEMENT_TOL};
use super::SCHEMA_VERSION;

#[derive(Debug, Parser)]
#[command(name = "kernelbundle", version, about = "Kernel bundles of holomorphic matrix families")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Singular points at the base point
    Locate(Common),
    /// Kernel/cokernel data, neighborhood validation and root systems
    Reduce(Common),
    /// Frames of the bundle and its dual at one parameter value
    Frame(Common),
    /// Pairing matrix, base-point check and probe coordinates
    Pair(Common),
    /// Full pipeline over a grid, with a branching diagram
    Sweep(SweepArgs),
    /// Boundary expansion of a probe section
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem specification (JSON)
    #[arg(long)]
    pub spec: PathBuf,
    /// Parameter grid `min:max:count[,min:max:count]` used for validation
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Output file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Quadrature nodes per circle
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Relative rank tolerance at the base point
    #[arg(long)]
    pub tol: Option<f64>,
    /// Probe section: inline JSON `{"cluster": s, "vector": [[re, im], ...]}` or a file
    #[arg(long)]
    pub probe: Option<String>,
    /// Parameter value, comma separated; defaults to the base point
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Branching diagram CSV; defaults to the `--out` path with extension `csv`
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Worker threads; 1 runs single-threaded
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: Common,
    /// Upper edge of the weight window
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Width of the weight window
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Serialize)]
struct LocateOutput<'a> {
    schema_version: u32,
    family: &'a str,
    y0: &'a [f64],
    report: ZeroReport,
}

#[derive(Serialize)]
struct FrameOutput<'a> {
    schema_version: u32,
    family: &'a str,
    y: &'a [f64],
    frame: &'a FrameSet,
    dual_frame: &'a FrameSet,
}

#[derive(Serialize)]
struct PairOutput<'a> {
    schema_version: u32,
    family: &'a str,
    pairing: PairingMatrix,
    #[serde(with = "cmatrix")]
    reduced: CMatrix,
    /// Deviation of the reduced matrix from the permutation pairing; only
    /// meaningful at the base point.
    base_point_deviation: Option<f64>,
    reduced_full_gap: f64,
    probe: Option<CoefficientVector>,
}

fn parse_y(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad parameter value '{t}'")))
        })
        .collect()
}

fn parse_probe(text: &str) -> Result<ProbeSpec> {
    let t = text.trim();
    if t.starts_with('{') {
        Ok(serde_json::from_str(t)?)
    } else {
        Ok(serde_json::from_str(&std::fs::read_to_string(t)?)?)
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

struct Loaded {
    spec: ProblemSpec,
    grid: Option<ParameterGrid>,
}

fn load(c: &Common) -> Result<Loaded> {
    let mut spec = ProblemSpec::load(&c.spec)?;
    if let Some(t) = c.tol {
        spec.tolerances.rank_tol = Some(t);
    }
    let grid = c.grid.as_deref().map(ParameterGrid::parse).transpose()?;
    Ok(Loaded { spec, grid })
}

fn bundle(c: &Common, l: &Loaded) -> Result<Bundle> {
    Bundle::from_spec(&l.spec, l.grid.as_ref(), c.nodes)
}

fn at_y(c: &Common, b: &Bundle) -> Result<Vec<f64>> {
    let y = match &c.y {
        Some(t) => parse_y(t)?,
        None => b.y0().to_vec(),
    };
    if y.len() != b.chart.param_dim {
        return Err(Error::Input(format!(
            "parameter has dimension {}, family expects {}",
            y.len(),
            b.chart.param_dim
        )));
    }
    Ok(y)
}

fn locate(c: &Common) -> Result<()> {
    let l = load(c)?;
    let chart = l.spec.chart()?;
    let y0 = l.spec.y0(&chart)?;
    let rect = chart.sigma.search_rect();
    let min_sep = l.spec.tolerances.min_separation.unwrap_or(1e-6 * rect.diameter());
    let report = try_locate_zeros(&|z| chart.det(&y0, z), &rect, min_sep)?;
    emit(
        &LocateOutput {
            schema_version: SCHEMA_VERSION,
            family: &chart.name,
            y0: &y0,
            report,
        },
        c.out.as_deref(),
    )
}

fn reduce(c: &Common) -> Result<()> {
    let l = load(c)?;
    let b = bundle(c, &l)?;
    let summary = b.summary()?;
    emit(&summary, c.out.as_deref())?;
    if let Some(bad) = summary.canonical.iter().find(|r| !r.passed()) {
        return Err(Error::RootSystem(format!("canonical system check failed for cluster {}", bad.cluster)));
    }
    Ok(())
}

fn frame(c: &Common) -> Result<()> {
    let l = load(c)?;
    let b = bundle(c, &l)?;
    let y = at_y(c, &b)?;
    let f = b.frames(&y)?;
    emit(
        &FrameOutput {
            schema_version: SCHEMA_VERSION,
            family: &b.chart.name,
            y: &y,
            frame: &f.primal,
            dual_frame: &f.dual,
        },
        c.out.as_deref(),
    )
}

fn pair(c: &Common) -> Result<()> {
    let l = load(c)?;
    let b = bundle(c, &l)?;
    let y = at_y(c, &b)?;
    let f = b.frames(&y)?;
    let q = b.quadrature(&y)?;
    let a = crate::pairing::pairing_matrix_with(&q, &y, &f.primal, &f.dual)?;
    let reduced = reduced_pairing_matrix(
        &b.chart,
        &b.base,
        &y,
        &f.primal_reduced,
        &f.dual_reduced,
        b.frame_options.nodes,
    )?;
    let gap = crate::linalg::max_abs(&(&reduced - &a.entries));
    let base_point_deviation = (y.as_slice() == b.y0()).then(|| {
        let lengths: Vec<usize> = b.roots.iter().flat_map(|r| r.lengths.iter().copied()).collect();
        base_point_check(&reduced, &lengths)
    });
    let probe = match &c.probe {
        Some(t) => {
            let germs = b.probe_germs(&parse_probe(t)?, &y)?;
            Some(coefficients(&q, &y, &germs, &f.primal, &f.dual, &a)?)
        }
        None => None,
    };
    emit(
        &PairOutput {
            schema_version: SCHEMA_VERSION,
            family: &b.chart.name,
            pairing: a,
            reduced,
            base_point_deviation,
            reduced_full_gap: gap,
            probe,
        },
        c.out.as_deref(),
    )
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let c = &args.common;
    let l = load(c)?;
    let grid = l
        .grid
        .clone()
        .ok_or_else(|| Error::Input("sweep needs --grid".into()))?;
    let b = bundle(c, &l)?;
    let mut probes: Vec<ProbeSection> = l
        .spec
        .probes
        .iter()
        .enumerate()
        .map(|(i, p)| ProbeSection::resolvent(format!("spec{i}"), p.clone()))
        .collect();
    if let Some(t) = &c.probe {
        probes.push(ProbeSection::resolvent("cli", parse_probe(t)?));
    }
    let opts = SweepOptions {
        parallel: args.threads != Some(1),
    };
    let report = match args.threads {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| sweep(&b, &grid, &probes, opts))?,
        _ => sweep(&b, &grid, &probes, opts)?,
    };
    emit(&report, c.out.as_deref())?;
    let csv_path = args
        .csv
        .clone()
        .or_else(|| c.out.as_ref().map(|p| p.with_extension("csv")));
    if let Some(p) = csv_path {
        let rows = branching_rows(&report, &b.cluster_centers());
        write_branching_csv(&rows, std::fs::File::create(p)?)?;
    }
    if let Some(j) = &report.dimension_jump {
        return Err(Error::DimensionJump {
            y: j.y.clone(),
            expected: j.expected,
            found: j.found,
        });
    }
    if let Some(f) = report.points.iter().flat_map(|p| &p.failures).next() {
        let msg = format!("{} of {} grid points failed; first: {}", report.points.iter().filter(|p| !p.failures.is_empty()).count(), report.points.len(), f.message);
        return Err(match f.class.as_str() {
            "validation" => Error::Validation(msg),
            _ => Error::RootSystem(msg),
        });
    }
    Ok(())
}

fn trace(args: &TraceArgs) -> Result<()> {
    let c = &args.common;
    let l = load(c)?;
    let (gamma, m) = match (&l.spec.family, args.gamma, args.order) {
        (_, Some(g), Some(m)) => (g, m),
        (FamilySpec::Indicial { m, gamma }, g, o) => (g.unwrap_or(*gamma), o.unwrap_or(*m)),
        _ => return Err(Error::Input("trace needs --gamma and --order for this family".into())),
    };
    let b = bundle(c, &l)?;
    let y = at_y(c, &b)?;
    let probe = match &c.probe {
        Some(t) => parse_probe(t)?,
        None => b.default_probe(),
    };
    let germs = b.probe_germs(&probe, &y)?;
    let poles = germs
        .iter()
        .map(|g| b.poles(&y, g.cluster))
        .collect::<Result<Vec<_>>>()?;
    let radius: Vec<f64> = germs.iter().map(|g| b.base.clusters[g.cluster].eps).collect();
    let t: TraceExpansion = trace_from_germ(&germs, &poles, &radius, gamma, m)?;
    emit(&t, c.out.as_deref())?;
    match t.agreement {
        Some(a) if a > TRACE_AGREEMENT_TOL => Err(Error::Tolerance(format!(
            "symbolic and numeric traces differ by {a:e} (limit {TRACE_AGREEMENT_TOL:e})"
        ))),
        _ => Ok(()),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Locate(c) => locate(c),
        Command::Reduce(c) => reduce(c),
        Command::Frame(c) => frame(c),
        Command::Pair(c) => pair(c),
        Command::Sweep(a) => run_sweep(a),
        Command::Trace(a) => trace(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.class().exit_code()
        }
    }
}
