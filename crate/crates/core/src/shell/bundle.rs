//! A validated base point with its canonical systems and a frame cache.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::contour::{Circle, LocatedZero};
use crate::error::{Error, Result};
use crate::family::FamilyChart;
use crate::frames::{frames_at, make_germ, poles_in_cluster, FrameOptions, Frames, Germ};
use crate::keldysh::{canonical_systems, verify_canonical_system, CanonicalReport, DualRootSystem, RootSystem};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::pairing::{pairing_contours, pairing_matrix_with, PairingMatrix, Quadrature};
use crate::reduction::{build_base_point, BaseOptions, BasePointData, SchurEvaluator, ValidationReport};

use super::spec::{ProblemSpec, ProbeSpec};
use super::grid::ParameterGrid;

pub struct Bundle {
    pub chart: FamilyChart,
    pub base: BasePointData,
    pub validation: ValidationReport,
    pub roots: Vec<RootSystem>,
    pub duals: Vec<DualRootSystem>,
    pub frame_options: FrameOptions,
    cache: Mutex<HashMap<Vec<u64>, Arc<Frames>>>,
}

/// Summary of the base point as written by `reduce`.
#[derive(Debug, Clone, Serialize)]
pub struct BaseSummary<'a> {
    pub schema_version: u32,
    pub family: &'a str,
    pub base: &'a BasePointData,
    pub validation: &'a ValidationReport,
    pub roots: &'a [RootSystem],
    pub duals: &'a [DualRootSystem],
    pub canonical: Vec<CanonicalReport>,
}

fn key(y: &[f64]) -> Vec<u64> {
    y.iter().map(|v| v.to_bits()).collect()
}

impl Bundle {
    pub fn build(chart: FamilyChart, y0: &[f64], base_opts: &BaseOptions, frame_options: FrameOptions) -> Result<Self> {
        let (base, validation) = build_base_point(&chart, y0, base_opts)?;
        let mut roots = Vec::with_capacity(base.clusters.len());
        let mut duals = Vec::with_capacity(base.clusters.len());
        for (s, cl) in base.clusters.iter().enumerate() {
            let (r, d) = canonical_systems(&chart, y0, s, cl)?;
            roots.push(r);
            duals.push(d);
        }
        Ok(Bundle {
            chart,
            base,
            validation,
            roots,
            duals,
            frame_options,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Builds the bundle of a problem spec, validating on `grid` (or the
    /// spec's own validation grid).
    pub fn from_spec(spec: &ProblemSpec, grid: Option<&ParameterGrid>, nodes: Option<usize>) -> Result<Self> {
        let chart = spec.chart()?;
        if let (Some(sl), Some(g)) = (spec.sturm_liouville()?, grid) {
            sl.check_bound(&g.points)?;
        }
        let y0 = spec.y0(&chart)?;
        let opts = spec.base_options(grid)?;
        let frame_options = FrameOptions {
            nodes: nodes.unwrap_or_else(|| spec.nodes()),
            ..Default::default()
        };
        Self::build(chart, &y0, &opts, frame_options)
    }

    pub fn y0(&self) -> &[f64] {
        &self.base.y0
    }

    pub fn primal_ev(&self, s: usize) -> SchurEvaluator {
        SchurEvaluator::primal(&self.chart, &self.base.clusters[s])
    }

    pub fn dual_ev(&self, s: usize) -> SchurEvaluator {
        SchurEvaluator::dual(&self.chart, &self.base.clusters[s])
    }

    pub fn canonical_reports(&self) -> Result<Vec<CanonicalReport>> {
        (0..self.base.clusters.len())
            .map(|s| {
                let radius = 0.5 * self.base.clusters[s].eps;
                verify_canonical_system(
                    &self.primal_ev(s),
                    &self.dual_ev(s),
                    self.y0(),
                    radius,
                    &self.roots[s],
                    &self.duals[s],
                )
            })
            .collect()
    }

    pub fn summary(&self) -> Result<BaseSummary<'_>> {
        Ok(BaseSummary {
            schema_version: super::SCHEMA_VERSION,
            family: &self.chart.name,
            base: &self.base,
            validation: &self.validation,
            roots: &self.roots,
            duals: &self.duals,
            canonical: self.canonical_reports()?,
        })
    }

    /// Frames at `y`, built once per exact `y`.
    pub fn frames(&self, y: &[f64]) -> Result<Arc<Frames>> {
        let k = key(y);
        if let Some(f) = self.cache.lock().expect("frame cache poisoned").get(&k) {
            return Ok(f.clone());
        }
        let f = Arc::new(frames_at(&self.chart, &self.base, &self.roots, &self.duals, y, &self.frame_options)?);
        self.cache
            .lock()
            .expect("frame cache poisoned")
            .entry(k)
            .or_insert_with(|| f.clone());
        Ok(f)
    }

    /// Frames without touching the cache, for one-pass sweeps.
    pub fn frames_uncached(&self, y: &[f64]) -> Result<Frames> {
        frames_at(&self.chart, &self.base, &self.roots, &self.duals, y, &self.frame_options)
    }

    pub fn contours(&self) -> Result<Vec<Circle>> {
        pairing_contours(&self.base, self.frame_options.nodes)
    }

    pub fn quadrature(&self, y: &[f64]) -> Result<Quadrature> {
        Quadrature::new(&self.chart, y, &self.contours()?)
    }

    pub fn pairing(&self, y: &[f64]) -> Result<PairingMatrix> {
        let f = self.frames(y)?;
        pairing_matrix_with(&self.quadrature(y)?, y, &f.primal, &f.dual)
    }

    pub fn carrier_radius(&self, s: usize) -> f64 {
        self.frame_options.carrier_fraction * self.base.clusters[s].eps
    }

    /// `𝔰_s(P(y, .)^{-1} w)`, the part of the resolvent applied to `w`
    /// singular at cluster `s`.
    pub fn resolvent_germ(&self, y: &[f64], s: usize, w: &CVector) -> Result<Germ> {
        if w.len() != self.chart.n {
            return Err(Error::Input(format!(
                "probe vector has length {}, family has n = {}",
                w.len(),
                self.chart.n
            )));
        }
        let cl = self.base.clusters.get(s).ok_or_else(|| Error::Input(format!("no cluster {s}")))?;
        let wm = linalg::column(w);
        make_germ(
            |z| {
                let p = self.chart.eval(y, z)?;
                let u = linalg::solve(&p, &wm).ok_or(Error::PoleOnCarrier { node: 0 })?;
                Ok(u.column(0).into_owned())
            },
            s,
            cl.sigma,
            self.carrier_radius(s),
            self.frame_options.nodes,
        )
    }

    /// Germs of a probe spec at `y`, one per cluster it touches.
    pub fn probe_germs(&self, probe: &ProbeSpec, y: &[f64]) -> Result<Vec<Germ>> {
        let w = CVector::from_vec(probe.vector.clone());
        match probe.cluster {
            Some(s) => Ok(vec![self.resolvent_germ(y, s, &w)?]),
            None => (0..self.base.clusters.len()).map(|s| self.resolvent_germ(y, s, &w)).collect(),
        }
    }

    /// Poles at `y` inside cluster `s`, resolved to `1e-6 eps`.
    pub fn poles(&self, y: &[f64], s: usize) -> Result<Vec<LocatedZero>> {
        let eps = self.base.clusters[s].eps;
        poles_in_cluster(&self.primal_ev(s), y, eps, 1e-6 * eps)
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn cluster_centers(&self) -> Vec<C64> {
        self.base.clusters.iter().map(|c| c.sigma).collect()
    }

    /// First standard basis vector, the default probe.
    pub fn default_probe(&self) -> ProbeSpec {
        let mut v = vec![C64::new(0.0, 0.0); self.chart.n];
        v[0] = C64::new(1.0, 0.0);
        ProbeSpec { cluster: None, vector: v }
    }
}

/// Matrix of frame values at one point, columns indexed by entries.
pub fn frame_matrix(germs: &[&Germ], sigma: C64) -> Result<CMatrix> {
    let n = germs.first().map(|g| g.dim()).unwrap_or(0);
    let mut m = CMatrix::zeros(n, germs.len());
    for (j, g) in germs.iter().enumerate() {
        m.set_column(j, &g.eval(sigma)?);
    }
    Ok(m)
}
