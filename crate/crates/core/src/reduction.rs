//! Local finite reduction at the singular points of `P(y0, .)`: kernel and
//! cokernel bases, the block decomposition through them, the Schur
//! complement `𝔓_s` and its determinant `q_s`, and sampled checks of the
//! neighborhood conditions that make the reduction valid on `U x D(s, eps)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::contour::{try_count_zeros, try_count_zeros_rect, try_locate_zeros, Circle, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::family::FamilyChart;
use crate::linalg::{self, CMatrix, C64};
use crate::serde_util::{cmatrix, cplx};

/// Condition number of the complement block above which the reduction is
/// rejected.
pub const REDUCTION_COND_MAX: f64 = 1e12;
/// Relative rank tolerance used at located singular points, whose position
/// is only known to quadrature accuracy.
pub const BASE_RANK_TOL: f64 = 1e-9;
/// Required spectral gap around the rank threshold.
pub const RANK_GAP: f64 = 10.0;

/// `n * machine epsilon`, the rank tolerance for exactly known matrices.
pub fn default_rank_tol(n: usize) -> f64 {
    n.max(1) as f64 * f64::EPSILON
}

/// Orthonormal bases of `ker M` and of `(ran M)^perp`, with singular values
/// below `rank_tol * s_max` treated as zero.
pub fn kernel_cokernel(m: &CMatrix, rank_tol: f64) -> Result<(CMatrix, CMatrix)> {
    kernel_cokernel_scaled(m, rank_tol, 0.0)
}

/// As [`kernel_cokernel`], with the threshold taken relative to
/// `max(s_max, scale)`; `scale` supplies the size of nearby values when `M`
/// itself is (nearly) zero.
pub fn kernel_cokernel_scaled(m: &CMatrix, rank_tol: f64, scale: f64) -> Result<(CMatrix, CMatrix)> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::Input(format!("kernel_cokernel needs a square matrix, got {rows}x{cols}")));
    }
    let (u, s, v) = linalg::svd(m);
    let smax = s.first().copied().unwrap_or(0.0).max(scale);
    if smax == 0.0 {
        return Ok((CMatrix::identity(cols, cols), CMatrix::identity(rows, rows)));
    }
    let thresh = rank_tol * smax;
    let gap = RANK_GAP.sqrt();
    if s.iter().any(|&x| x > thresh / gap && x < thresh * gap) {
        return Err(Error::IllSeparatedRank { singular_values: s });
    }
    let rank = s.iter().filter(|&&x| x > thresh).count();
    let kernel = v.columns(rank, cols - rank).into_owned();
    let cokernel = u.columns(rank, rows - rank).into_owned();
    if kernel.ncols() != cokernel.ncols() {
        return Err(Error::NotIndexZero {
            kernel: kernel.ncols(),
            cokernel: cokernel.ncols(),
        });
    }
    Ok((kernel, cokernel))
}

/// One singular point `sigma_s` of `P(y0, .)` with its fixed bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    #[serde(with = "cplx")]
    pub sigma: C64,
    /// `k_s = dim K_s`.
    pub kernel_dim: usize,
    /// `d_s`, zeros of `q_s(y, .)` in `D(sigma_s, eps)`.
    pub multiplicity: usize,
    pub eps: f64,
    #[serde(with = "cmatrix")]
    pub k_basis: CMatrix,
    #[serde(with = "cmatrix")]
    pub rperp_basis: CMatrix,
    #[serde(with = "cmatrix")]
    pub k_perp: CMatrix,
    #[serde(with = "cmatrix")]
    pub r_basis: CMatrix,
}

impl Cluster {
    pub fn new(sigma: C64, k_basis: CMatrix, rperp_basis: CMatrix, eps: f64, multiplicity: usize) -> Self {
        let k_perp = linalg::orth_complement(&k_basis);
        let r_basis = linalg::orth_complement(&rperp_basis);
        Cluster {
            sigma,
            kernel_dim: k_basis.ncols(),
            multiplicity,
            eps,
            k_basis,
            rperp_basis,
            k_perp,
            r_basis,
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Cluster { eps, ..self.clone() }
    }

    pub fn circle(&self, radius: f64, nodes: usize) -> Result<Circle> {
        Circle::new(self.sigma, radius, nodes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePointData {
    pub y0: Vec<f64>,
    pub clusters: Vec<Cluster>,
}

impl BasePointData {
    pub fn total_multiplicity(&self) -> usize {
        self.clusters.iter().map(|c| c.multiplicity).sum()
    }

    pub fn kernel_rank(&self) -> usize {
        self.total_multiplicity()
    }
}

/// Blocks of `P(y, sigma)` relative to `C^n = K_s + K_s^perp` in the domain
/// and `C^n = R_s^perp + R_s` in the range.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub p11: CMatrix,
    pub p12: CMatrix,
    pub p21: CMatrix,
    pub p22: CMatrix,
}

/// Schur complement together with the correction `p22^{-1} p21` needed to
/// lift reduced kernel elements back to `C^n`.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub schur: CMatrix,
    pub correction: CMatrix,
    pub cond: f64,
}

/// Evaluates the reduction of one family near one point. Built either from
/// the family itself or, for the dual side, from its adjoint family with the
/// roles of the bases swapped.
#[derive(Debug, Clone)]
pub struct SchurEvaluator {
    pub chart: FamilyChart,
    pub center: C64,
    pub k_basis: CMatrix,
    pub rperp_basis: CMatrix,
    pub k_perp: CMatrix,
    pub r_basis: CMatrix,
}

impl SchurEvaluator {
    pub fn primal(chart: &FamilyChart, cluster: &Cluster) -> Self {
        SchurEvaluator {
            chart: chart.clone(),
            center: cluster.sigma,
            k_basis: cluster.k_basis.clone(),
            rperp_basis: cluster.rperp_basis.clone(),
            k_perp: cluster.k_perp.clone(),
            r_basis: cluster.r_basis.clone(),
        }
    }

    /// Reduction of `P*(y, tau) = P(y, conj tau)^H` at `conj sigma_s`; its
    /// kernel is `R_s^perp` and the orthocomplement of its range is `K_s`.
    pub fn dual(chart: &FamilyChart, cluster: &Cluster) -> Self {
        SchurEvaluator {
            chart: chart.adjoint(),
            center: cluster.sigma.conj(),
            k_basis: cluster.rperp_basis.clone(),
            rperp_basis: cluster.k_basis.clone(),
            k_perp: cluster.r_basis.clone(),
            r_basis: cluster.k_perp.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.k_basis.ncols()
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn blocks(&self, y: &[f64], sigma: C64) -> Result<Blocks> {
        let p = self.chart.eval(y, sigma)?;
        let rp_h = self.rperp_basis.adjoint();
        let r_h = self.r_basis.adjoint();
        let pk = &p * &self.k_basis;
        let pkp = &p * &self.k_perp;
        Ok(Blocks {
            p11: &rp_h * &pk,
            p12: &rp_h * &pkp,
            p21: &r_h * &pk,
            p22: &r_h * &pkp,
        })
    }

    pub fn reduce(&self, y: &[f64], sigma: C64) -> Result<Reduced> {
        let b = self.blocks(y, sigma)?;
        if b.p22.nrows() == 0 {
            return Ok(Reduced {
                schur: b.p11,
                correction: CMatrix::zeros(0, self.k()),
                cond: 1.0,
            });
        }
        let cond = linalg::cond(&b.p22);
        if !(cond <= REDUCTION_COND_MAX) {
            return Err(Error::ReductionInvalid { sigma, cond });
        }
        let correction = linalg::solve(&b.p22, &b.p21).ok_or(Error::ReductionInvalid { sigma, cond })?;
        let schur = &b.p11 - &b.p12 * &correction;
        Ok(Reduced { schur, correction, cond })
    }

    /// `𝔓_s(y, sigma) = p11 - p12 p22^{-1} p21`.
    pub fn schur(&self, y: &[f64], sigma: C64) -> Result<CMatrix> {
        Ok(self.reduce(y, sigma)?.schur)
    }

    /// `q_s(y, sigma) = det 𝔓_s(y, sigma)` in the stored bases.
    pub fn qdet(&self, y: &[f64], sigma: C64) -> Result<C64> {
        Ok(linalg::det(&self.schur(y, sigma)?))
    }

    /// `K u - K^perp p22^{-1} p21 u` for each column `u`: lifts a reduced
    /// vector to `C^n` so that `P` maps it into `R^perp` via `𝔓`.
    pub fn lift(&self, reduced: &Reduced, u: &CMatrix) -> CMatrix {
        let mut out = &self.k_basis * u;
        if self.k_perp.ncols() > 0 {
            out -= &self.k_perp * (&reduced.correction * u);
        }
        out
    }
}

/// `d_s(y)`: zeros of `q_s(y, .)` inside the circle of radius `eps`.
pub fn local_multiplicity(ev: &SchurEvaluator, y: &[f64], eps: f64) -> Result<usize> {
    let circle = Circle::new(ev.center, eps, DEFAULT_NODES)?;
    try_count_zeros(&|z| ev.qdet(y, z), &circle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: u8,
    pub passed: bool,
    /// Worst sampled value of the quantity the condition constrains.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub eps: Vec<f64>,
    pub grid_size: usize,
    pub conditions: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<u8> {
        self.conditions.iter().filter(|c| !c.passed).map(|c| c.condition).collect()
    }
}

fn disc_samples(center: C64, radius: f64, angles: usize) -> Vec<C64> {
    let mut pts = vec![center];
    for ring in 1..=4 {
        let r = radius * ring as f64 / 4.0;
        for a in 0..angles {
            let th = 2.0 * PI * (a as f64 + 0.5 * (ring % 2) as f64) / angles as f64;
            pts.push(center + C64::from_polar(r, th));
        }
    }
    pts
}

/// Checks the four neighborhood conditions on samples: discs `D(s, 2 eps)`
/// disjoint and inside the region; `p22(y0, .)` invertible on `D(s, 2 eps)`;
/// `p22(y, .)` invertible on `D(s, eps)` for every grid `y`; `q_s(y, .)`
/// zero-free on the annulus `eps/2 <= |sigma - sigma_s| < eps` and no other
/// singular points in the search region.
pub fn validate_neighborhood(
    chart: &FamilyChart,
    base: &BasePointData,
    u_grid: &[Vec<f64>],
    angular_samples: usize,
) -> Result<ValidationReport> {
    if u_grid.is_empty() {
        return Err(Error::Input("validation grid is empty".into()));
    }
    let angles = angular_samples.max(4);
    let mut conditions = Vec::with_capacity(4);

    // (1)
    let mut margin = f64::INFINITY;
    for (a, ca) in base.clusters.iter().enumerate() {
        margin = margin.min(chart.sigma.boundary_distance(ca.sigma) - 2.0 * ca.eps);
        for cb in &base.clusters[a + 1..] {
            margin = margin.min((ca.sigma - cb.sigma).norm() - 2.0 * (ca.eps + cb.eps));
        }
    }
    conditions.push(ConditionCheck {
        condition: 1,
        passed: margin > 0.0,
        worst: margin,
        detail: "minimum clearance of the discs D(s, 2 eps)".into(),
    });
    let separated = margin > 0.0;

    // (2) and (3)
    let p22_check = |ys: &[Vec<f64>], radius_factor: f64| -> f64 {
        let mut worst: f64 = 1.0;
        for cl in &base.clusters {
            let ev = SchurEvaluator::primal(chart, cl);
            for y in ys {
                for z in disc_samples(cl.sigma, radius_factor * cl.eps, angles) {
                    let c = match ev.blocks(y, z) {
                        Ok(b) => linalg::cond(&b.p22),
                        Err(_) => f64::INFINITY,
                    };
                    worst = worst.max(c);
                }
            }
        }
        worst
    };
    let worst2 = if separated { p22_check(std::slice::from_ref(&base.y0), 2.0) } else { f64::INFINITY };
    conditions.push(ConditionCheck {
        condition: 2,
        passed: worst2 <= REDUCTION_COND_MAX,
        worst: worst2,
        detail: "largest condition number of p22(y0, .) on D(s, 2 eps)".into(),
    });
    let worst3 = if separated { p22_check(u_grid, 1.0) } else { f64::INFINITY };
    conditions.push(ConditionCheck {
        condition: 3,
        passed: worst3 <= REDUCTION_COND_MAX,
        worst: worst3,
        detail: "largest condition number of p22(y, .) on U x D(s, eps)".into(),
    });

    // (4)
    let mut ok4 = separated && worst3 <= REDUCTION_COND_MAX;
    let mut min_ratio = f64::INFINITY;
    let mut detail = String::from("smallest |q_s| on the annulus relative to max on |sigma - sigma_s| = eps");
    if ok4 {
        let rect = chart.sigma.search_rect();
        let expected_total = base.total_multiplicity();
        'grid: for y in u_grid {
            for (s, cl) in base.clusters.iter().enumerate() {
                let ev = SchurEvaluator::primal(chart, cl);
                let outer = local_multiplicity(&ev, y, cl.eps);
                let inner = local_multiplicity(&ev, y, 0.5 * cl.eps);
                match (outer, inner) {
                    (Ok(o), Ok(i)) if o == cl.multiplicity && i == cl.multiplicity => {}
                    (o, i) => {
                        ok4 = false;
                        detail = format!(
                            "cluster {s} at y = {y:?}: zero counts {:?} (eps) and {:?} (eps/2), expected {}",
                            o.ok(),
                            i.ok(),
                            cl.multiplicity
                        );
                        break 'grid;
                    }
                }
                let mut qmax: f64 = 0.0;
                let mut qmin = f64::INFINITY;
                for ring in 0..=2 {
                    let r = cl.eps * (0.5 + 0.24 * ring as f64);
                    for a in 0..angles {
                        let z = cl.sigma + C64::from_polar(r, 2.0 * PI * a as f64 / angles as f64);
                        let q = ev.qdet(y, z)?.norm();
                        qmin = qmin.min(q);
                        qmax = qmax.max(q);
                    }
                }
                min_ratio = min_ratio.min(qmin / qmax.max(f64::MIN_POSITIVE));
            }
            let total = try_count_zeros_rect(&|z| chart.det(y, z), &rect);
            if total.as_ref().ok() != Some(&expected_total) {
                ok4 = false;
                detail = format!(
                    "at y = {y:?} the search region holds {:?} singular points, discs account for {expected_total}",
                    total.ok()
                );
                break;
            }
        }
    }
    conditions.push(ConditionCheck {
        condition: 4,
        passed: ok4,
        worst: if ok4 { min_ratio } else { 0.0 },
        detail,
    });

    Ok(ValidationReport {
        eps: base.clusters.iter().map(|c| c.eps).collect(),
        grid_size: u_grid.len(),
        conditions,
    })
}

#[derive(Debug, Clone)]
pub struct BaseOptions {
    pub rank_tol: f64,
    /// Resolution of the singular point search; defaults to `1e-6` times
    /// the search-region diameter.
    pub min_separation: Option<f64>,
    /// Fixed disc radius; when absent it is chosen by halving.
    pub eps: Option<f64>,
    /// Parameter samples of `U`; defaults to `[y0]`.
    pub u_grid: Vec<Vec<f64>>,
    pub angular_samples: usize,
}

impl Default for BaseOptions {
    fn default() -> Self {
        BaseOptions {
            rank_tol: BASE_RANK_TOL,
            min_separation: None,
            eps: None,
            u_grid: Vec::new(),
            angular_samples: 16,
        }
    }
}

const MAX_HALVINGS: usize = 20;

/// Locates the singular points of `P(y0, .)`, fixes kernel and cokernel
/// bases there and picks `eps` so that the neighborhood conditions hold on
/// the requested grid.
pub fn build_base_point(
    chart: &FamilyChart,
    y0: &[f64],
    opts: &BaseOptions,
) -> Result<(BasePointData, ValidationReport)> {
    let rect = chart.sigma.search_rect();
    let min_sep = opts.min_separation.unwrap_or(1e-6 * rect.diameter());
    let zeros = try_locate_zeros(&|z| chart.det(y0, z), &rect, min_sep)?;
    let mut clusters = Vec::with_capacity(zeros.zeros.len());
    for z in &zeros.zeros {
        let m = chart.eval(y0, z.location)?;
        let probe = 1e-2 * rect.diameter().min(chart.sigma.boundary_distance(z.location));
        let mut scale: f64 = 0.0;
        for t in 0..4 {
            let w = z.location + C64::from_polar(probe, PI * (0.25 + 0.5 * t as f64));
            scale = scale.max(linalg::norm2(&chart.eval(y0, w)?));
        }
        let (k, rp) = kernel_cokernel_scaled(&m, opts.rank_tol, scale)?;
        if k.ncols() == 0 {
            return Err(Error::Validation(format!(
                "det P vanishes near {} but P has full numerical rank there",
                z.location
            )));
        }
        clusters.push(Cluster::new(z.location, k, rp, 0.0, z.multiplicity));
    }

    let mut eps = match opts.eps {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::Input(format!("eps must be positive, got {e}"))),
        None => {
            let mut d = f64::INFINITY;
            for (a, ca) in clusters.iter().enumerate() {
                d = d.min(chart.sigma.boundary_distance(ca.sigma));
                for cb in &clusters[a + 1..] {
                    d = d.min((ca.sigma - cb.sigma).norm());
                }
            }
            if d.is_finite() { 0.4 * d } else { 1.0 }
        }
    };
    let grid = if opts.u_grid.is_empty() {
        vec![y0.to_vec()]
    } else {
        opts.u_grid.clone()
    };
    let attempts = if opts.eps.is_some() { 1 } else { MAX_HALVINGS };
    let mut last = None;
    for _ in 0..attempts {
        let base = BasePointData {
            y0: y0.to_vec(),
            clusters: clusters.iter().map(|c| c.with_eps(eps)).collect(),
        };
        let report = validate_neighborhood(chart, &base, &grid, opts.angular_samples)?;
        if report.passed() {
            return Ok((base, report));
        }
        last = Some(report);
        eps *= 0.5;
    }
    let report = last.expect("at least one attempt");
    let failed = report
        .conditions
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("({}) {}", c.condition, c.detail))
        .collect::<Vec<_>>()
        .join("; ");
    Err(Error::Validation(format!("neighborhood conditions fail: {failed}")))
}
