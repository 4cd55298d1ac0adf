//! Germs (singular parts carried by Cauchy samples) and the frames of the
//! kernel bundle and of its dual at parameters near the base point.

use serde::{Deserialize, Serialize};

use crate::contour::{cauchy_moment, singular_part_eval, try_locate_zeros, Circle, LocatedZero, Rect, SampledFunction};
use crate::error::{Error, Result};
use crate::family::FamilyChart;
use crate::keldysh::{Chain, DualRootSystem, RootSystem};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::reduction::{BasePointData, SchurEvaluator};
use crate::serde_util::{cplx, cvector_vec};

/// Carrier radius as a fraction of `eps`.
pub const CARRIER_FRACTION: f64 = 0.75;
/// Gram condition number above which a frame is reported as dependent.
pub const INDEPENDENCE_COND_MAX: f64 = 1e10;

/// The singular part `𝔰(f)` of a function whose poles lie inside the
/// carrier circle, represented by samples of `f` on that circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Germ {
    pub cluster: usize,
    pub samples: SampledFunction,
}

impl Germ {
    pub fn from_samples(cluster: usize, samples: SampledFunction) -> Result<Self> {
        for (t, v) in samples.values.iter().enumerate() {
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::PoleOnCarrier { node: t });
            }
        }
        Ok(Germ { cluster, samples })
    }

    pub fn carrier(&self) -> &Circle {
        &self.samples.circle
    }

    pub fn dim(&self) -> usize {
        self.samples.shape().0
    }

    /// `𝔰(f)(sigma)` for `sigma` outside the carrier.
    pub fn eval(&self, sigma: C64) -> Result<CVector> {
        let m = singular_part_eval(&self.samples, sigma)?;
        Ok(m.column(0).into_owned())
    }

    pub fn scale(&self, lambda: C64) -> Germ {
        let values = self.samples.values.iter().map(|v| v * lambda).collect();
        Germ {
            cluster: self.cluster,
            samples: SampledFunction {
                circle: self.samples.circle,
                values,
            },
        }
    }

    pub fn add(&self, other: &Germ) -> Result<Germ> {
        if self.samples.circle != other.samples.circle {
            return Err(Error::Input("germs live on different carriers".into()));
        }
        let values = self
            .samples
            .values
            .iter()
            .zip(&other.samples.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Germ {
            cluster: self.cluster,
            samples: SampledFunction::new(self.samples.circle, values)?,
        })
    }

    /// Moment `(1/2 pi i) \oint (z - c)^q f(z) dz`; for `q >= 0` these are
    /// the moments of the singular part itself.
    pub fn moment(&self, q: i32) -> CVector {
        cauchy_moment(&self.samples, q).column(0).into_owned()
    }

    /// `|sigma - c| * |germ(sigma)|` at `|sigma - c| = R`; bounded as `R`
    /// grows since singular parts vanish at infinity.
    pub fn decay_at(&self, radius: f64) -> Result<f64> {
        let c = self.carrier().center;
        let mut worst: f64 = 0.0;
        for t in 0..8 {
            let z = c + C64::from_polar(radius, 0.3 + t as f64 * std::f64::consts::FRAC_PI_4);
            worst = worst.max(self.eval(z)?.norm() * radius);
        }
        Ok(worst)
    }
}

/// Samples a vector-valued `f` on the carrier `|sigma - center| = rho`.
pub fn make_germ<F>(f: F, cluster: usize, center: C64, rho: f64, node_count: usize) -> Result<Germ>
where
    F: Fn(C64) -> Result<CVector>,
{
    let circle = Circle::new(center, rho, node_count)?;
    let samples = SampledFunction::try_from_fn(circle, |z| f(z).map(|v| linalg::column(&v)))?;
    Germ::from_samples(cluster, samples)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub cluster: usize,
    pub chain: usize,
    pub power: usize,
    pub germ: Germ,
}

/// Frame of `𝒦_y` (or of the dual bundle), ordered by cluster, then chain,
/// then power.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSet {
    pub y: Vec<f64>,
    pub dual: bool,
    pub entries: Vec<FrameEntry>,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn germs(&self) -> impl Iterator<Item = &Germ> {
        self.entries.iter().map(|e| &e.germ)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FrameOptions {
    pub carrier_fraction: f64,
    pub nodes: usize,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            carrier_fraction: CARRIER_FRACTION,
            nodes: crate::contour::DEFAULT_NODES,
        }
    }
}

/// Frames of one cluster at `y`, at the reduced (`k`-valued) and the full
/// (`n`-valued) level.
#[derive(Debug, Clone)]
pub struct ClusterFrames {
    pub reduced: Vec<FrameEntry>,
    pub full: Vec<FrameEntry>,
}

/// `(sigma - c)^{-L_j} 𝔓(y0, sigma) psi_j(sigma)` for all chains, as columns.
fn chain_rhs(ev: &SchurEvaluator, y0: &[f64], center: C64, chains: &[Chain], z: C64) -> Result<CMatrix> {
    let p0 = ev.schur(y0, z)?;
    let h = z - center;
    let mut out = CMatrix::zeros(ev.k(), chains.len());
    for (j, ch) in chains.iter().enumerate() {
        let v = &p0 * ch.psi(center, z) / h.powu(ch.length as u32);
        out.set_column(j, &v);
    }
    Ok(out)
}

/// Frames `𝔰((sigma - c)^l 𝔓(y, .)^{-1} beta_j)` and their lifts
/// `𝔰((sigma - c)^l P(y, .)^{-1} R^perp beta_j)`, for `l < L_j`.
#[allow(clippy::too_many_arguments)]
pub fn cluster_frames(
    ev: &SchurEvaluator,
    s: usize,
    center: C64,
    chains: &[Chain],
    y0: &[f64],
    y: &[f64],
    eps: f64,
    opts: &FrameOptions,
) -> Result<ClusterFrames> {
    let circle = Circle::new(center, opts.carrier_fraction * eps, opts.nodes)?;
    let index: Vec<(usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(j, ch)| (0..ch.length).map(move |l| (j, l)))
        .collect();
    let mut red_vals: Vec<Vec<CMatrix>> = vec![Vec::with_capacity(opts.nodes); index.len()];
    let mut full_vals: Vec<Vec<CMatrix>> = vec![Vec::with_capacity(opts.nodes); index.len()];
    for z in circle.nodes() {
        let rhs = chain_rhs(ev, y0, center, chains, z)?;
        let red = ev.reduce(y, z)?;
        let u = linalg::solve(&red.schur, &rhs).ok_or(Error::PoleOnCarrier { node: 0 })?;
        let lifted = ev.lift(&red, &u);
        let h = z - center;
        for (e, &(j, l)) in index.iter().enumerate() {
            let w = h.powu(l as u32);
            red_vals[e].push(u.columns(j, 1) * w);
            full_vals[e].push(lifted.columns(j, 1) * w);
        }
    }
    let build = |vals: Vec<Vec<CMatrix>>| -> Result<Vec<FrameEntry>> {
        vals.into_iter()
            .zip(&index)
            .map(|(v, &(j, l))| {
                Ok(FrameEntry {
                    cluster: s,
                    chain: j,
                    power: l,
                    germ: Germ::from_samples(s, SampledFunction::new(circle, v)?)?,
                })
            })
            .collect()
    };
    Ok(ClusterFrames {
        reduced: build(red_vals)?,
        full: build(full_vals)?,
    })
}

/// Reduced frame `phi^K_{j,l}(y)` of one cluster.
pub fn kframe_at(
    ev: &SchurEvaluator,
    root: &RootSystem,
    y0: &[f64],
    y: &[f64],
    eps: f64,
    opts: &FrameOptions,
) -> Result<Vec<FrameEntry>> {
    Ok(cluster_frames(ev, root.cluster, root.center, &root.chains, y0, y, eps, opts)?.reduced)
}

/// Frames of `𝒦_y` and of `𝒦*_y` with their reduced versions, for every
/// cluster of the base point.
#[derive(Debug, Clone)]
pub struct Frames {
    pub primal: FrameSet,
    pub dual: FrameSet,
    pub primal_reduced: FrameSet,
    pub dual_reduced: FrameSet,
}

fn frame_sets(
    chart: &FamilyChart,
    base: &BasePointData,
    y: &[f64],
    opts: &FrameOptions,
    dual: bool,
    center_chains: &[(C64, &[Chain])],
) -> Result<(FrameSet, FrameSet)> {
    let mut full = Vec::new();
    let mut reduced = Vec::new();
    for (s, cl) in base.clusters.iter().enumerate() {
        let ev = if dual {
            SchurEvaluator::dual(chart, cl)
        } else {
            SchurEvaluator::primal(chart, cl)
        };
        let (center, chains) = center_chains[s];
        let cf = cluster_frames(&ev, s, center, chains, &base.y0, y, cl.eps, opts)?;
        full.extend(cf.full);
        reduced.extend(cf.reduced);
    }
    Ok((
        FrameSet {
            y: y.to_vec(),
            dual,
            entries: full,
        },
        FrameSet {
            y: y.to_vec(),
            dual,
            entries: reduced,
        },
    ))
}

/// The frame `phi^s_{j,l}(y)` of `𝒦_y`.
pub fn fullframe_at(
    chart: &FamilyChart,
    base: &BasePointData,
    roots: &[RootSystem],
    y: &[f64],
    opts: &FrameOptions,
) -> Result<FrameSet> {
    let cc: Vec<(C64, &[Chain])> = roots.iter().map(|r| (r.center, r.chains.as_slice())).collect();
    Ok(frame_sets(chart, base, y, opts, false, &cc)?.0)
}

/// The frame `psi^{j,l}_s(y)` of `𝒦*_y`, around the conjugate points.
pub fn dual_frame_at(
    chart: &FamilyChart,
    base: &BasePointData,
    duals: &[DualRootSystem],
    y: &[f64],
    opts: &FrameOptions,
) -> Result<FrameSet> {
    let cc: Vec<(C64, &[Chain])> = duals.iter().map(|r| (r.center, r.chains.as_slice())).collect();
    Ok(frame_sets(chart, base, y, opts, true, &cc)?.0)
}

pub fn frames_at(
    chart: &FamilyChart,
    base: &BasePointData,
    roots: &[RootSystem],
    duals: &[DualRootSystem],
    y: &[f64],
    opts: &FrameOptions,
) -> Result<Frames> {
    let pc: Vec<(C64, &[Chain])> = roots.iter().map(|r| (r.center, r.chains.as_slice())).collect();
    let dc: Vec<(C64, &[Chain])> = duals.iter().map(|r| (r.center, r.chains.as_slice())).collect();
    let (primal, primal_reduced) = frame_sets(chart, base, y, opts, false, &pc)?;
    let (dual, dual_reduced) = frame_sets(chart, base, y, opts, true, &dc)?;
    Ok(Frames {
        primal,
        dual,
        primal_reduced,
        dual_reduced,
    })
}

/// Condition number of the Gram matrix of the frame sampled on the given
/// probe circles (which must lie outside every carrier).
pub fn independence_check(frame: &FrameSet, probes: &[Circle]) -> Result<f64> {
    let d = frame.len();
    if d == 0 {
        return Ok(1.0);
    }
    let mut gram = CMatrix::zeros(d, d);
    for circle in probes {
        for z in circle.nodes() {
            let vals: Vec<CVector> = frame.germs().map(|g| g.eval(z)).collect::<Result<_>>()?;
            for a in 0..d {
                for b in 0..d {
                    gram[(a, b)] += vals[a].dotc(&vals[b]);
                }
            }
        }
    }
    Ok(linalg::cond(&gram))
}

/// Largest relative singular-part coefficient of `P(y, .) phi` over the
/// frame; vanishes for elements of the kernel bundle.
pub fn kernel_membership(chart: &FamilyChart, frame: &FrameSet, y: &[f64], eps: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for e in &frame.entries {
        let c = e.germ.carrier().center;
        let r = eps[e.cluster];
        let circle = Circle::new(c, r, e.germ.samples.circle.node_count)?;
        let f = SampledFunction::try_from_fn(circle, |z| {
            let p = if frame.dual {
                chart.eval_adjoint(y, z)?
            } else {
                chart.eval(y, z)?
            };
            Ok(p * linalg::column(&e.germ.eval(z)?))
        })?;
        let scale = f.values.iter().map(linalg::max_abs).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for p in 0..4 {
            let m = cauchy_moment(&f, p);
            worst = worst.max(linalg::max_abs(&m) / (scale * r.powi(p + 1)));
        }
    }
    Ok(worst)
}

/// Zeros of `q_s(y, .)` inside the square of half-width `eps/2` about the
/// cluster centre, i.e. the poles of the frame at `y`.
pub fn poles_in_cluster(ev: &SchurEvaluator, y: &[f64], eps: f64, min_separation: f64) -> Result<Vec<LocatedZero>> {
    let rect = Rect::centered(ev.center, 0.5 * eps);
    Ok(try_locate_zeros(&|z| ev.qdet(y, z), &rect, min_separation)?.zeros)
}

/// Principal part at one pole: `sum_k c_k (sigma - sigma_p)^{-k}`, `k = 1..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleLaurent {
    #[serde(with = "cplx")]
    pub pole: C64,
    #[serde(with = "cvector_vec")]
    pub coefficients: Vec<CVector>,
}

impl PoleLaurent {
    pub fn eval(&self, sigma: C64) -> CVector {
        let h = sigma - self.pole;
        let mut acc = CVector::zeros(self.coefficients.first().map(|c| c.len()).unwrap_or(0));
        for (k, c) in self.coefficients.iter().enumerate() {
            acc += c / h.powu(k as u32 + 1);
        }
        acc
    }
}

/// Relative pole separation below which the Laurent solve is refused.
pub const POLE_SEPARATION_MIN: f64 = 1e-2;
/// Relative reconstruction error accepted from the Laurent solve.
pub const LAURENT_TOL: f64 = 1e-8;

/// Principal parts of the germ at the given poles, whose multiplicities
/// bound the pole orders. The coefficients solve the confluent Vandermonde
/// system matching the carrier moments `q = 0..`.
pub fn laurent_coefficients(germ: &Germ, poles: &[LocatedZero]) -> Result<Vec<PoleLaurent>> {
    let circle = germ.carrier();
    let rho = circle.radius;
    let c0 = circle.center;
    let n = germ.dim();
    let scale = germ.samples.values.iter().map(linalg::max_abs).fold(0.0, f64::max);
    if poles.is_empty() || scale == 0.0 {
        return Ok(poles
            .iter()
            .map(|p| PoleLaurent {
                pole: p.location,
                coefficients: vec![CVector::zeros(n); p.multiplicity],
            })
            .collect());
    }
    let mut sep = f64::INFINITY;
    for (a, pa) in poles.iter().enumerate() {
        for pb in &poles[a + 1..] {
            sep = sep.min((pa.location - pb.location).norm());
        }
    }
    let required = POLE_SEPARATION_MIN * rho;
    if sep < required {
        return Err(Error::ClusteredPoles { separation: sep, required });
    }
    let unknowns: Vec<(usize, usize)> = poles
        .iter()
        .enumerate()
        .flat_map(|(p, z)| (1..=z.multiplicity).map(move |k| (p, k)))
        .collect();
    let rows = (2 * unknowns.len()).max(unknowns.len() + 4).min(circle.node_count / 2);
    let mut a = CMatrix::zeros(rows, unknowns.len());
    let mut b = CMatrix::zeros(rows, n);
    for q in 0..rows {
        // moments scaled by rho^{q+1}, unknowns by rho^k
        let m = germ.moment(q as i32) / C64::new(rho.powi(q as i32 + 1), 0.0);
        b.set_row(q, &m.transpose());
        for (col, &(p, k)) in unknowns.iter().enumerate() {
            if q + 1 >= k {
                let w = (poles[p].location - c0) / rho;
                a[(q, col)] = w.powu((q + 1 - k) as u32) * binomial(q, k - 1);
            }
        }
    }
    let x = linalg::lstsq(&a, &b, 1e-14).ok_or(Error::ClusteredPoles { separation: sep, required })?;
    let out: Vec<PoleLaurent> = poles
        .iter()
        .enumerate()
        .map(|(p, z)| PoleLaurent {
            pole: z.location,
            coefficients: unknowns
                .iter()
                .enumerate()
                .filter(|(_, &(pp, _))| pp == p)
                .map(|(col, &(_, k))| x.row(col).transpose() * C64::new(rho.powi(k as i32), 0.0))
                .collect(),
        })
        .collect();
    // reconstruction outside the carrier
    let mut err: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for t in 0..16 {
        let z = c0 + C64::from_polar(1.25 * rho, 0.1 + t as f64 * std::f64::consts::PI / 8.0);
        let g = germ.eval(z)?;
        let r: CVector = out.iter().fold(CVector::zeros(n), |acc, pl| acc + pl.eval(z));
        err = err.max((g.clone() - r).norm());
        mag = mag.max(g.norm());
    }
    if err > LAURENT_TOL * mag.max(f64::MIN_POSITIVE) {
        return Err(Error::ClusteredPoles { separation: sep, required });
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
