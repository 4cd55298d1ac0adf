//! Contour quadrature on circles, Cauchy moments, singular-part extraction
//! and argument-principle zero counting / localisation.
//!
//! All integrals use the equispaced trapezoid rule on circles, which is
//! spectrally accurate for integrands analytic in an annulus around the
//! circle. Orientation is always counterclockwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, I};
use crate::serde_util::cplx;

pub const DEFAULT_NODES: usize = 128;
pub const MIN_NODES: usize = 16;
/// Upper bound on adaptive sampling of a closed contour.
pub const MAX_WINDING_NODES: usize = 1 << 14;
/// Relative modulus below which a contour sample counts as a zero.
pub const ZERO_ON_CONTOUR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    #[serde(with = "cplx")]
    pub center: C64,
    pub radius: f64,
    pub node_count: usize,
}

impl Circle {
    pub fn new(center: C64, radius: f64, node_count: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Input(format!("circle radius must be positive, got {radius}")));
        }
        if node_count < MIN_NODES {
            return Err(Error::Input(format!(
                "circle needs at least {MIN_NODES} nodes, got {node_count}"
            )));
        }
        Ok(Circle {
            center,
            radius,
            node_count,
        })
    }

    /// Unit direction `exp(2 pi i t / N)` of node `t`.
    pub fn direction(&self, t: usize) -> C64 {
        C64::from_polar(1.0, 2.0 * PI * t as f64 / self.node_count as f64)
    }

    pub fn node(&self, t: usize) -> C64 {
        self.center + self.direction(t) * self.radius
    }

    pub fn nodes(&self) -> Vec<C64> {
        (0..self.node_count).map(|t| self.node(t)).collect()
    }

    pub fn conj(&self) -> Circle {
        Circle {
            center: self.center.conj(),
            ..*self
        }
    }

    pub fn with_radius(&self, radius: f64) -> Circle {
        Circle { radius, ..*self }
    }

    pub fn contains(&self, z: C64) -> bool {
        (z - self.center).norm() < self.radius
    }
}

/// Values of a matrix- or vector-valued function at the nodes of a circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledFunction {
    pub circle: Circle,
    #[serde(with = "crate::serde_util::cmatrix_vec")]
    pub values: Vec<CMatrix>,
}

impl SampledFunction {
    pub fn new(circle: Circle, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != circle.node_count {
            return Err(Error::Input(format!(
                "{} samples for {} nodes",
                values.len(),
                circle.node_count
            )));
        }
        if let Some(first) = values.first() {
            let shape = first.shape();
            if values.iter().any(|v| v.shape() != shape) {
                return Err(Error::Input("samples do not share one shape".into()));
            }
        }
        Ok(SampledFunction { circle, values })
    }

    pub fn from_fn<F>(circle: Circle, f: F) -> Result<Self>
    where
        F: Fn(C64) -> CMatrix,
    {
        let values = circle.nodes().into_iter().map(f).collect();
        Self::new(circle, values)
    }

    pub fn try_from_fn<F>(circle: Circle, f: F) -> Result<Self>
    where
        F: Fn(C64) -> Result<CMatrix>,
    {
        let values = circle.nodes().into_iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(circle, values)
    }

    pub fn from_scalar_fn<F>(circle: Circle, f: F) -> Result<Self>
    where
        F: Fn(C64) -> C64,
    {
        Self::from_fn(circle, |z| CMatrix::from_element(1, 1, f(z)))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.first().map(|v| v.shape()).unwrap_or((0, 0))
    }
}

/// `(1/2 pi i) \oint (z - c)^p f(z) dz` over the sampled circle.
///
/// Negative `p` is allowed: `p = -m - 1` yields the m-th Taylor coefficient at
/// the center when `f` is holomorphic in the disc.
pub fn cauchy_moment(f: &SampledFunction, p: i32) -> CMatrix {
    let n = f.circle.node_count;
    let (r, cc) = f.shape();
    let mut acc = CMatrix::zeros(r, cc);
    for (t, v) in f.values.iter().enumerate() {
        let d = f.circle.direction(t) * f.circle.radius;
        acc += v * d.powi(p + 1);
    }
    acc / C64::from(n as f64)
}

/// Value at `sigma` of the sum of the singular parts of `f` inside its circle:
/// `(i / 2 pi) \oint f(z) / (z - sigma) dz`, valid for `sigma` outside.
pub fn singular_part_eval(f: &SampledFunction, sigma: C64) -> Result<CMatrix> {
    let circle = &f.circle;
    let dist = (sigma - circle.center).norm();
    if dist <= circle.radius * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "singular part requested at {sigma}, on or inside circle of radius {} about {}",
            circle.radius, circle.center
        )));
    }
    let (r, cc) = f.shape();
    let mut acc = CMatrix::zeros(r, cc);
    for (t, v) in f.values.iter().enumerate() {
        let d = circle.direction(t) * circle.radius;
        let z = circle.center + d;
        acc += v * (d / (z - sigma));
    }
    Ok(acc * C64::from(-1.0 / circle.node_count as f64))
}

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

impl Rect {
    pub fn new(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Result<Self> {
        if !(re_hi > re_lo && im_hi > im_lo) {
            return Err(Error::Input(format!(
                "degenerate rectangle [{re_lo}, {re_hi}] x [{im_lo}, {im_hi}]"
            )));
        }
        Ok(Rect {
            re_lo,
            re_hi,
            im_lo,
            im_hi,
        })
    }

    pub fn centered(center: C64, half_width: f64) -> Self {
        Rect {
            re_lo: center.re - half_width,
            re_hi: center.re + half_width,
            im_lo: center.im - half_width,
            im_hi: center.im + half_width,
        }
    }

    pub fn width(&self) -> f64 {
        self.re_hi - self.re_lo
    }

    pub fn height(&self) -> f64 {
        self.im_hi - self.im_lo
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> C64 {
        C64::new(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re_lo && z.re <= self.re_hi && z.im >= self.im_lo && z.im <= self.im_hi
    }

    fn touches(&self, other: &Rect, slack: f64) -> bool {
        self.re_lo <= other.re_hi + slack
            && other.re_lo <= self.re_hi + slack
            && self.im_lo <= other.im_hi + slack
            && other.im_lo <= self.im_hi + slack
    }

    fn union(&self, other: &Rect) -> Rect {
        Rect {
            re_lo: self.re_lo.min(other.re_lo),
            re_hi: self.re_hi.max(other.re_hi),
            im_lo: self.im_lo.min(other.im_lo),
            im_hi: self.im_hi.max(other.im_hi),
        }
    }
}

/// A closed, positively oriented contour parameterised on `[0, 1)`.
#[derive(Debug, Clone, Copy)]
pub enum Contour {
    Circle(Circle),
    Rect(Rect),
}

impl Contour {
    fn point(&self, t: f64) -> C64 {
        match self {
            Contour::Circle(c) => c.center + C64::from_polar(c.radius, 2.0 * PI * t),
            Contour::Rect(r) => {
                let s = 4.0 * t;
                let (edge, u) = ((s.floor() as usize).min(3), s - s.floor());
                match edge {
                    0 => C64::new(r.re_lo + u * r.width(), r.im_lo),
                    1 => C64::new(r.re_hi, r.im_lo + u * r.height()),
                    2 => C64::new(r.re_hi - u * r.width(), r.im_hi),
                    _ => C64::new(r.re_lo, r.im_hi - u * r.height()),
                }
            }
        }
    }
}

/// Resolved samples of `q` along a contour together with the winding number.
#[derive(Debug, Clone)]
pub struct WindingSamples {
    pub points: Vec<C64>,
    pub values: Vec<C64>,
    /// Unwrapped argument of `q` at each point (continuous along the contour).
    pub args: Vec<f64>,
    pub winding: i64,
}

/// Samples `q` along the contour, doubling the node count until consecutive
/// image points subtend less than a quarter turn about the origin.
pub fn winding_samples<F>(q: &F, contour: &Contour, min_nodes: usize) -> Result<WindingSamples>
where
    F: Fn(C64) -> Result<C64> + ?Sized,
{
    let mut n = min_nodes.max(64).next_power_of_two();
    let mut points: Vec<C64> = (0..n).map(|t| contour.point(t as f64 / n as f64)).collect();
    let mut values = points.iter().map(|&z| q(z)).collect::<Result<Vec<_>>>()?;
    loop {
        let mut max_mod: f64 = 0.0;
        let mut min_mod = f64::INFINITY;
        for (t, v) in values.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite function value at contour point {}",
                    points[t]
                )));
            }
            max_mod = max_mod.max(v.norm());
            min_mod = min_mod.min(v.norm());
        }
        if min_mod <= ZERO_ON_CONTOUR_REL * max_mod || max_mod == 0.0 {
            return Err(Error::ZeroOnContour {
                min_modulus: min_mod,
                max_modulus: max_mod,
            });
        }
        let mut resolved = true;
        let mut args = Vec::with_capacity(n);
        let mut acc = values[0].arg();
        args.push(acc);
        for t in 0..n {
            let d = (values[(t + 1) % n] / values[t]).arg();
            if d.abs() >= 0.5 * PI {
                resolved = false;
                break;
            }
            acc += d;
            if t + 1 < n {
                args.push(acc);
            }
        }
        if resolved {
            let total = acc - values[0].arg();
            let winding = (total / (2.0 * PI)).round() as i64;
            return Ok(WindingSamples {
                points,
                values,
                args,
                winding,
            });
        }
        if 2 * n > MAX_WINDING_NODES {
            return Err(Error::ZeroOnContour {
                min_modulus: min_mod,
                max_modulus: max_mod,
            });
        }
        let mut new_points = Vec::with_capacity(2 * n);
        let mut new_values = Vec::with_capacity(2 * n);
        for t in 0..n {
            new_points.push(points[t]);
            new_values.push(values[t]);
            let z = contour.point((2 * t + 1) as f64 / (2 * n) as f64);
            new_points.push(z);
            new_values.push(q(z)?);
        }
        points = new_points;
        values = new_values;
        n *= 2;
    }
}

/// Number of zeros (with multiplicity) of a fallible holomorphic `q` inside
/// `circle`.
pub fn try_count_zeros<F>(q: &F, circle: &Circle) -> Result<usize>
where
    F: Fn(C64) -> Result<C64> + ?Sized,
{
    let w = winding_samples(q, &Contour::Circle(*circle), circle.node_count)?;
    if w.winding < 0 {
        return Err(Error::Domain(format!(
            "negative winding {} (function has poles inside the contour)",
            w.winding
        )));
    }
    Ok(w.winding as usize)
}

/// Number of zeros (with multiplicity) of holomorphic `q` inside `circle`.
pub fn count_zeros<F>(q: F, circle: &Circle) -> Result<usize>
where
    F: Fn(C64) -> C64,
{
    try_count_zeros(&|z| Ok(q(z)), circle)
}

/// Zeros of `q` in the rectangle, with multiplicity.
pub fn try_count_zeros_rect<F>(q: &F, rect: &Rect) -> Result<usize>
where
    F: Fn(C64) -> Result<C64> + ?Sized,
{
    let w = winding_samples(q, &Contour::Rect(*rect), 64)?;
    if w.winding < 0 {
        return Err(Error::Domain("negative winding on rectangle".into()));
    }
    Ok(w.winding as usize)
}

/// Mean of the zeros of `q` inside `circle` (which must contain exactly
/// `count > 0` of them), from the moment `(1/2 pi i) \oint z q'/q dz`.
///
/// The derivative is eliminated by integrating by parts against the
/// single-valued part `g = log q - count * log(z - c)` of the logarithm.
pub fn zero_centroid<F>(q: &F, circle: &Circle, count: usize) -> Result<C64>
where
    F: Fn(C64) -> Result<C64> + ?Sized,
{
    let w = winding_samples(q, &Contour::Circle(*circle), circle.node_count.max(256))?;
    if w.winding != count as i64 {
        return Err(Error::Domain(format!(
            "centroid circle encloses {} zeros, expected {count}",
            w.winding
        )));
    }
    let n = w.points.len();
    let m = count as f64;
    let mut integral = C64::new(0.0, 0.0);
    for t in 0..n {
        let theta = 2.0 * PI * t as f64 / n as f64;
        let log_q = C64::new(w.values[t].norm().ln(), w.args[t]);
        let log_d = C64::new(circle.radius.ln(), theta);
        let g = log_q - log_d * m;
        let dz = I * C64::from_polar(circle.radius, theta);
        integral += g * dz;
    }
    integral *= 2.0 * PI / n as f64;
    Ok(circle.center - integral / (2.0 * PI * I * m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZoneRegion {
    Rectangle(Rect),
    Disc {
        #[serde(with = "cplx")]
        center: C64,
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatedZero {
    #[serde(with = "cplx")]
    pub location: C64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroReport {
    pub region: ZoneRegion,
    pub total_count: usize,
    pub zeros: Vec<LocatedZero>,
}

/// Split fractions tried, in order, when a zero sits on a split line.
/// The midpoint comes last: symmetric families put zeros on it.
const SPLIT_FRACTIONS: [f64; 7] = [0.4713, 0.5291, 0.4357, 0.5633, 0.4089, 0.5917, 0.5];
const LOCATE_BUDGET: usize = 20_000;

/// Finds all zeros of `q` in `region` by recursive quadrisection on winding
/// numbers, down to boxes of diameter below `min_separation`; touching boxes
/// form one cluster whose location is the moment centroid and whose
/// multiplicity is its zero count.
pub fn try_locate_zeros<F>(q: &F, region: &Rect, min_separation: f64) -> Result<ZeroReport>
where
    F: Fn(C64) -> Result<C64> + ?Sized,
{
    if !(min_separation > 0.0) {
        return Err(Error::Input("min_separation must be positive".into()));
    }
    let total = try_count_zeros_rect(q, region)?;
    let mut report = ZeroReport {
        region: ZoneRegion::Rectangle(*region),
        total_count: total,
        zeros: Vec::new(),
    };
    if total == 0 {
        return Ok(report);
    }
    let mut budget = LOCATE_BUDGET;
    let mut queue = vec![(*region, total)];
    let mut leaves: Vec<(Rect, usize)> = Vec::new();
    let mut simple: Vec<C64> = Vec::new();
    while let Some((b, count)) = queue.pop() {
        if b.diameter() < min_separation {
            leaves.push((b, count));
            continue;
        }
        // A lone zero is located directly once a circle three times the
        // centroid radius holds no other zero, which keeps the trapezoid
        // error of the centroid negligible.
        if count == 1 {
            let r = 0.75 * b.diameter();
            let isolated = Circle::new(b.center(), 3.0 * r, 64)
                .and_then(|c| try_count_zeros(q, &c))
                .is_ok_and(|k| k == 1);
            if isolated {
                if let Ok(z) = Circle::new(b.center(), r, 256).and_then(|c| zero_centroid(q, &c, 1)) {
                    if b.contains(z) {
                        simple.push(z);
                        continue;
                    }
                }
            }
        }
        let mut split = None;
        'fractions: for &fx in &SPLIT_FRACTIONS {
            for &fy in &SPLIT_FRACTIONS {
                if budget < 4 {
                    return Err(clustered(&b, count));
                }
                budget -= 4;
                let xm = b.re_lo + fx * b.width();
                let ym = b.im_lo + fy * b.height();
                let kids = [
                    Rect { re_hi: xm, im_hi: ym, ..b },
                    Rect { re_lo: xm, im_hi: ym, ..b },
                    Rect { re_hi: xm, im_lo: ym, ..b },
                    Rect { re_lo: xm, im_lo: ym, ..b },
                ];
                let counts: Result<Vec<usize>> =
                    kids.iter().map(|k| try_count_zeros_rect(q, k)).collect();
                if let Ok(counts) = counts {
                    if counts.iter().sum::<usize>() == count {
                        split = Some(kids.into_iter().zip(counts).collect::<Vec<_>>());
                        break 'fractions;
                    }
                }
            }
        }
        match split {
            Some(kids) => queue.extend(kids.into_iter().filter(|(_, c)| *c > 0)),
            None => return Err(clustered(&b, count)),
        }
    }

    // merge touching leaves into clusters
    let slack = 1e-12 * region.diameter();
    let mut clusters: Vec<(Rect, usize)> = Vec::new();
    for (rect, count) in leaves {
        let mut merged = (rect, count);
        let mut i = 0;
        while i < clusters.len() {
            if clusters[i].0.touches(&merged.0, slack) {
                let (r, c) = clusters.swap_remove(i);
                merged = (merged.0.union(&r), merged.1 + c);
                i = 0;
            } else {
                i += 1;
            }
        }
        clusters.push(merged);
    }

    for (rect, count) in clusters {
        let location = refine_cluster(q, &rect, count, min_separation)?;
        report.zeros.push(LocatedZero {
            location,
            multiplicity: count,
        });
    }
    for z in simple {
        report.zeros.push(LocatedZero {
            location: z,
            multiplicity: 1,
        });
    }
    // zeros closer than the resolution form one cluster
    let mut i = 0;
    while i < report.zeros.len() {
        let near = (i + 1..report.zeros.len())
            .find(|&j| (report.zeros[j].location - report.zeros[i].location).norm() < min_separation);
        match near {
            Some(j) => {
                let b = report.zeros.swap_remove(j);
                let a = &mut report.zeros[i];
                let (ma, mb) = (a.multiplicity as f64, b.multiplicity as f64);
                a.location = (a.location * ma + b.location * mb) / (ma + mb);
                a.multiplicity += b.multiplicity;
            }
            None => i += 1,
        }
    }
    report.zeros.sort_by(|a, b| {
        a.location
            .re
            .partial_cmp(&b.location.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                a.location
                    .im
                    .partial_cmp(&b.location.im)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    Ok(report)
}

pub fn locate_zeros<F>(q: F, region: &Rect, min_separation: f64) -> Result<ZeroReport>
where
    F: Fn(C64) -> C64,
{
    try_locate_zeros(&|z| Ok(q(z)), region, min_separation)
}

fn clustered(b: &Rect, count: usize) -> Error {
    Error::ClusteredZeros {
        re_lo: b.re_lo,
        re_hi: b.re_hi,
        im_lo: b.im_lo,
        im_hi: b.im_hi,
        count,
    }
}

fn refine_cluster<F>(q: &F, rect: &Rect, count: usize, min_separation: f64) -> Result<C64>
where
    F: Fn(C64) -> Result<C64> + ?Sized,
{
    let base = (0.5 * rect.diameter()).max(0.25 * min_separation);
    for factor in [1.5, 2.0, 1.2, 3.0, 1.05] {
        let circle = Circle::new(rect.center(), factor * base, 256)?;
        let first = match zero_centroid(q, &circle, count) {
            Ok(z) => z,
            Err(_) => continue,
        };
        // re-centre on the estimate for a tighter quadrature
        let recentred = Circle::new(first, circle.radius, 256)?;
        if let Ok(z) = zero_centroid(q, &recentred, count) {
            return Ok(z);
        }
        return Ok(first);
    }
    Err(clustered(rect, count))
}
