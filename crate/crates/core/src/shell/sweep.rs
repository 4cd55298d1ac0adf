//! Sweeps of the per-`y` pipeline over a parameter grid.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{Circle, LocatedZero, Rect, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::frames::Germ;
use crate::pairing::{coefficients, pairing_matrix_with, CoefficientVector};
use crate::reduction::{local_multiplicity, ValidationReport};

use super::bundle::Bundle;
use super::grid::ParameterGrid;
use super::spec::ProbeSpec;

pub type SectionFn = Arc<dyn Fn(&Bundle, &[f64]) -> Result<Vec<Germ>> + Send + Sync>;

/// A section of the bundle depending on `y`, given by its germs.
#[derive(Clone)]
pub struct ProbeSection {
    pub name: String,
    pub build: SectionFn,
}

impl ProbeSection {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&Bundle, &[f64]) -> Result<Vec<Germ>> + Send + Sync + 'static,
    {
        ProbeSection {
            name: name.into(),
            build: Arc::new(f),
        }
    }

    pub fn resolvent(name: impl Into<String>, spec: ProbeSpec) -> Self {
        Self::new(name, move |b, y| b.probe_germs(&spec, y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub stage: String,
    pub class: String,
    pub message: String,
}

impl PointFailure {
    fn new(stage: &str, e: &Error) -> Self {
        PointFailure {
            stage: stage.into(),
            class: format!("{:?}", e.class()).to_lowercase(),
            message: e.to_string(),
        }
    }
}

/// Poles could not be separated; only the box and the total count are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleFallback {
    pub region: Rect,
    pub total_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    pub cluster: usize,
    pub d_s: usize,
    /// Zeros of `q_s(y, .)` inside `eps / 2`.
    pub inner_count: Option<usize>,
    pub poles: Vec<LocatedZero>,
    pub fallback: Option<PoleFallback>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointReport {
    pub y: Vec<f64>,
    pub clusters: Vec<ClusterPoint>,
    pub pairing_cond: Option<f64>,
    /// One entry per probe section, `None` where the solve failed.
    pub coefficients: Vec<Option<CoefficientVector>>,
    pub failures: Vec<PointFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionJump {
    pub y: Vec<f64>,
    pub cluster: usize,
    pub expected: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub probe: String,
    pub coefficient: usize,
    /// Largest `|f(y - h) - 2 f(y) + f(y + h)| / h^2` over all grid lines.
    pub max_second_difference: f64,
    /// Triples that entered the maximum.
    pub triples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub family: String,
    pub grid: ParameterGrid,
    pub eps: Vec<f64>,
    pub expected_dims: Vec<usize>,
    pub dimension_constant: bool,
    pub dimension_jump: Option<DimensionJump>,
    pub validation: ValidationReport,
    pub probes: Vec<String>,
    pub points: Vec<PointReport>,
    pub smoothness: Vec<Smoothness>,
}

impl SweepReport {
    pub fn failure_count(&self) -> usize {
        self.points.iter().map(|p| p.failures.len()).sum()
    }

    /// Coefficient `i` of probe `p` along the grid, where available.
    pub fn coefficient_series(&self, p: usize, i: usize) -> Vec<Option<crate::linalg::C64>> {
        self.points
            .iter()
            .map(|pt| pt.coefficients.get(p).and_then(|c| c.as_ref()).map(|c| c.values[i]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { parallel: true }
    }
}

fn map_indexed<T, F>(count: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallel {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}

fn cluster_poles(b: &Bundle, y: &[f64], s: usize) -> (Vec<LocatedZero>, Option<PoleFallback>, Option<Error>) {
    match b.poles(y, s) {
        Ok(p) => (p, None, None),
        Err(e @ Error::ClusteredZeros { .. }) => {
            let eps = b.base.clusters[s].eps;
            let count = local_multiplicity(&b.primal_ev(s), y, 0.5 * eps).unwrap_or(0);
            (
                Vec::new(),
                Some(PoleFallback {
                    region: Rect::centered(b.base.clusters[s].sigma, 0.5 * eps),
                    total_count: count,
                }),
                Some(e),
            )
        }
        Err(e) => (Vec::new(), None, Some(e)),
    }
}

fn run_point(b: &Bundle, y: &[f64], dims: &[usize], probes: &[ProbeSection]) -> PointReport {
    let mut rep = PointReport {
        y: y.to_vec(),
        clusters: Vec::new(),
        pairing_cond: None,
        coefficients: vec![None; probes.len()],
        failures: Vec::new(),
    };
    let mut escaped = false;
    for (s, cl) in b.base.clusters.iter().enumerate() {
        let ev = b.primal_ev(s);
        let inner = match local_multiplicity(&ev, y, 0.5 * cl.eps) {
            Ok(k) => {
                if k != dims[s] {
                    escaped = true;
                    rep.failures.push(PointFailure::new(
                        "neighborhood",
                        &Error::Validation(format!(
                            "cluster {s}: {k} of {} singular points inside eps/2",
                            dims[s]
                        )),
                    ));
                }
                Some(k)
            }
            Err(e) => {
                escaped = true;
                rep.failures.push(PointFailure::new("neighborhood", &e));
                None
            }
        };
        let (poles, fallback, err) = cluster_poles(b, y, s);
        if let Some(e) = err {
            rep.failures.push(PointFailure::new("poles", &e));
        }
        rep.clusters.push(ClusterPoint {
            cluster: s,
            d_s: dims[s],
            inner_count: inner,
            poles,
            fallback,
        });
    }
    if escaped {
        return rep;
    }
    let frames = match b.frames_uncached(y) {
        Ok(f) => f,
        Err(e) => {
            rep.failures.push(PointFailure::new("frames", &e));
            return rep;
        }
    };
    let q = match b.quadrature(y) {
        Ok(q) => q,
        Err(e) => {
            rep.failures.push(PointFailure::new("pairing", &e));
            return rep;
        }
    };
    let a = match pairing_matrix_with(&q, y, &frames.primal, &frames.dual) {
        Ok(a) => a,
        Err(e) => {
            rep.failures.push(PointFailure::new("pairing", &e));
            return rep;
        }
    };
    rep.pairing_cond = Some(a.cond);
    for (i, p) in probes.iter().enumerate() {
        let res = (p.build)(b, y).and_then(|g| coefficients(&q, y, &g, &frames.primal, &frames.dual, &a));
        match res {
            Ok(c) => rep.coefficients[i] = Some(c),
            Err(e) => rep.failures.push(PointFailure::new(&format!("probe {}", p.name), &e)),
        }
    }
    rep
}

fn smoothness(grid: &ParameterGrid, points: &[PointReport], probes: &[ProbeSection]) -> Vec<Smoothness> {
    let mut out = Vec::new();
    let lines = grid.lines();
    for (p, probe) in probes.iter().enumerate() {
        let width = points
            .iter()
            .find_map(|pt| pt.coefficients.get(p).and_then(|c| c.as_ref()).map(|c| c.values.len()))
            .unwrap_or(0);
        for i in 0..width {
            let value = |idx: usize| {
                points
                    .get(idx)
                    .and_then(|pt| pt.coefficients[p].as_ref())
                    .map(|c| c.values[i])
            };
            let mut worst: f64 = 0.0;
            let mut triples = 0;
            for (idx, h) in &lines {
                for w in idx.windows(3) {
                    if let (Some(a), Some(m), Some(c)) = (value(w[0]), value(w[1]), value(w[2])) {
                        worst = worst.max((a - m * 2.0 + c).norm() / (h * h));
                        triples += 1;
                    }
                }
            }
            out.push(Smoothness {
                probe: probe.name.clone(),
                coefficient: i,
                max_second_difference: worst,
                triples,
            });
        }
    }
    out
}

/// Runs multiplicities, poles, frames, pairing and coefficient solves at
/// every grid point. Per-point failures are recorded; a change of `d_s`
/// stops the sweep at the first point (in grid order) where it occurs.
pub fn sweep(b: &Bundle, grid: &ParameterGrid, probes: &[ProbeSection], opts: SweepOptions) -> Result<SweepReport> {
    if grid.dim() != b.chart.param_dim {
        return Err(Error::Input(format!(
            "grid has {} axes, family has {} parameters",
            grid.dim(),
            b.chart.param_dim
        )));
    }
    let dims: Vec<usize> = b.base.clusters.iter().map(|c| c.multiplicity).collect();
    let counts: Vec<Vec<Result<usize>>> = map_indexed(grid.len(), opts.parallel, |i| {
        let y = &grid.points[i];
        b.base
            .clusters
            .iter()
            .enumerate()
            .map(|(s, cl)| local_multiplicity(&b.primal_ev(s), y, cl.eps))
            .collect()
    });
    let mut jump = None;
    let mut stop = grid.len();
    'scan: for (i, row) in counts.iter().enumerate() {
        for (s, r) in row.iter().enumerate() {
            if let Ok(k) = r {
                if *k != dims[s] {
                    jump = Some(DimensionJump {
                        y: grid.points[i].clone(),
                        cluster: s,
                        expected: dims[s],
                        found: *k,
                    });
                    stop = i;
                    break 'scan;
                }
            }
        }
    }
    let points = map_indexed(stop, opts.parallel, |i| {
        let y = &grid.points[i];
        let errs: Vec<PointFailure> = counts[i]
            .iter()
            .filter_map(|r| r.as_ref().err())
            .map(|e| PointFailure::new("multiplicity", e))
            .collect();
        if errs.is_empty() {
            run_point(b, y, &dims, probes)
        } else {
            PointReport {
                y: y.to_vec(),
                clusters: Vec::new(),
                pairing_cond: None,
                coefficients: vec![None; probes.len()],
                failures: errs,
            }
        }
    });
    let smooth = smoothness(grid, &points, probes);
    Ok(SweepReport {
        schema_version: super::SCHEMA_VERSION,
        family: b.chart.name.clone(),
        grid: grid.clone(),
        eps: b.base.clusters.iter().map(|c| c.eps).collect(),
        expected_dims: dims,
        dimension_constant: jump.is_none(),
        dimension_jump: jump,
        validation: b.validation.clone(),
        probes: probes.iter().map(|p| p.name.clone()).collect(),
        points,
        smoothness: smooth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub y: String,
    pub cluster: usize,
    pub re_sigma: f64,
    pub im_sigma: f64,
    pub mult: usize,
}

fn y_label(y: &[f64]) -> String {
    y.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

/// Pole rows from a finished sweep. A cluster whose poles could not be
/// separated contributes one row at its centre with the total count.
pub fn branching_rows(report: &SweepReport, centers: &[crate::linalg::C64]) -> Vec<BranchRow> {
    let mut rows = Vec::new();
    for pt in &report.points {
        for cp in &pt.clusters {
            if let Some(fb) = &cp.fallback {
                let c = centers[cp.cluster];
                rows.push(BranchRow {
                    y: y_label(&pt.y),
                    cluster: cp.cluster,
                    re_sigma: c.re,
                    im_sigma: c.im,
                    mult: fb.total_count,
                });
            }
            for p in &cp.poles {
                rows.push(BranchRow {
                    y: y_label(&pt.y),
                    cluster: cp.cluster,
                    re_sigma: p.location.re,
                    im_sigma: p.location.im,
                    mult: p.multiplicity,
                });
            }
        }
    }
    rows
}

/// Pole locations of every cluster over the grid, without frames.
pub fn branching_diagram(b: &Bundle, grid: &ParameterGrid, opts: SweepOptions) -> Vec<BranchRow> {
    let per_point = map_indexed(grid.len(), opts.parallel, |i| {
        let y = &grid.points[i];
        let mut rows = Vec::new();
        for s in 0..b.base.clusters.len() {
            let (poles, fb, _) = cluster_poles(b, y, s);
            if let Some(fb) = fb {
                let c = b.base.clusters[s].sigma;
                rows.push(BranchRow {
                    y: y_label(y),
                    cluster: s,
                    re_sigma: c.re,
                    im_sigma: c.im,
                    mult: fb.total_count,
                });
            }
            rows.extend(poles.into_iter().map(|p| BranchRow {
                y: y_label(y),
                cluster: s,
                re_sigma: p.location.re,
                im_sigma: p.location.im,
                mult: p.multiplicity,
            }));
        }
        rows
    });
    per_point.into_iter().flatten().collect()
}

pub fn write_branching_csv<W: Write>(rows: &[BranchRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["y", "cluster", "re_sigma", "im_sigma", "mult"])
        .map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        wr.write_record([
            r.y.clone(),
            r.cluster.to_string(),
            format!("{:.15e}", r.re_sigma),
            format!("{:.15e}", r.im_sigma),
            r.mult.to_string(),
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Probe circles for the frame independence check, radius `0.9 eps`.
pub fn probe_circles(b: &Bundle) -> Result<Vec<Circle>> {
    b.base
        .clusters
        .iter()
        .map(|c| Circle::new(c.sigma, 0.9 * c.eps, DEFAULT_NODES))
        .collect()
}
