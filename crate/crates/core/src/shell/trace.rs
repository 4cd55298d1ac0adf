//! Boundary expansions `sum a_{sigma,l} x^{i sigma} log^l x` of germs.
//!
//! A germ `phi` with principal parts `c_{p,k} (sigma - sigma_p)^{-k}` maps to
//! `S(phi)(x) = (1/2 pi) \oint x^{i sigma} phi(sigma) dsigma`, whose terms are
//! `a_{sigma_p,l} = i^{l+1} c_{p,l+1} / l!`.

use serde::{Deserialize, Serialize};

use crate::contour::{Circle, LocatedZero};
use crate::error::{Error, Result};
use crate::frames::{laurent_coefficients, Germ, PoleLaurent};
use crate::linalg::{CVector, C64, I};
use crate::serde_util::{cplx, cplx_vec};

/// Relative agreement required between the terms and the quadrature of `S`.
pub const TRACE_AGREEMENT_TOL: f64 = 1e-8;
/// Terms below this fraction of the largest one are quadrature noise.
pub const TERM_DROP_REL: f64 = 1e-12;
pub const X_PROBE_COUNT: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTerm {
    #[serde(with = "cplx")]
    pub sigma: C64,
    pub log_power: usize,
    #[serde(with = "cplx_vec")]
    pub coefficient: Vec<C64>,
}

/// `S(phi)` sampled at one `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub x: f64,
    #[serde(with = "cplx_vec")]
    pub value: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceExpansion {
    pub gamma: f64,
    pub m: usize,
    pub terms: Vec<TraceTerm>,
    /// Set when the poles could not be resolved and only `samples` are
    /// meaningful.
    pub numeric_only: bool,
    pub samples: Vec<TraceSample>,
    /// Largest relative gap between the terms and `samples`.
    pub agreement: Option<f64>,
}

fn factorial(l: usize) -> f64 {
    (1..=l).map(|k| k as f64).product()
}

fn i_pow(k: usize) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => I,
        2 => C64::new(-1.0, 0.0),
        _ => -I,
    }
}

/// `x` values logarithmically spaced on `[1e-3, 1]`.
pub fn x_probes(count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![1.0];
    }
    (0..count)
        .map(|t| 10f64.powf(-3.0 + 3.0 * t as f64 / (count - 1) as f64))
        .collect()
}

/// Terms of a set of principal parts; each pole contributes one term per
/// power.
pub fn trace_from_laurent(parts: &[PoleLaurent]) -> Vec<TraceTerm> {
    let mut out = Vec::new();
    for p in parts {
        for (l, c) in p.coefficients.iter().enumerate() {
            let a = c * (i_pow(l + 1) / factorial(l));
            out.push(TraceTerm {
                sigma: p.pole,
                log_power: l,
                coefficient: a.iter().copied().collect(),
            });
        }
    }
    out
}

/// Principal parts of an expansion; the inverse of [`trace_from_laurent`].
pub fn germ_from_trace(expansion: &TraceExpansion) -> Vec<PoleLaurent> {
    let mut out: Vec<PoleLaurent> = Vec::new();
    for t in &expansion.terms {
        let c = CVector::from_vec(t.coefficient.clone()) * (factorial(t.log_power) / i_pow(t.log_power + 1));
        let idx = match out.iter().position(|p| p.pole == t.sigma) {
            Some(i) => i,
            None => {
                out.push(PoleLaurent {
                    pole: t.sigma,
                    coefficients: Vec::new(),
                });
                out.len() - 1
            }
        };
        let coeffs = &mut out[idx].coefficients;
        while coeffs.len() <= t.log_power {
            coeffs.push(CVector::zeros(c.len()));
        }
        coeffs[t.log_power] += c;
    }
    out
}

pub fn eval_terms(terms: &[TraceTerm], n: usize, x: f64) -> CVector {
    let lx = x.ln();
    let mut acc = CVector::zeros(n);
    for t in terms {
        let w = (I * t.sigma * lx).exp() * lx.powi(t.log_power as i32);
        acc += CVector::from_vec(t.coefficient.clone()) * w;
    }
    acc
}

/// `(1/2 pi) \oint x^{i sigma} phi(sigma) dsigma` over circles of radius
/// `radius` around each carrier centre, by the trapezoid rule.
pub fn numeric_trace(germs: &[Germ], radius: &[f64], x: f64) -> Result<CVector> {
    let n = germs.first().map(|g| g.dim()).unwrap_or(0);
    let lx = x.ln();
    let mut acc = CVector::zeros(n);
    for (g, &r) in germs.iter().zip(radius) {
        let carrier = g.carrier();
        let circle = Circle::new(carrier.center, r, carrier.node_count)?;
        let nn = circle.node_count as f64;
        for z in circle.nodes() {
            acc += g.eval(z)? * (I * (z - circle.center) / nn * (I * z * lx).exp());
        }
    }
    Ok(acc)
}

fn merge(parts: Vec<PoleLaurent>) -> Vec<PoleLaurent> {
    let mut out: Vec<PoleLaurent> = Vec::new();
    for p in parts {
        if let Some(q) = out.iter_mut().find(|q| q.pole == p.pole) {
            while q.coefficients.len() < p.coefficients.len() {
                q.coefficients.push(CVector::zeros(p.coefficients[0].len()));
            }
            for (a, b) in q.coefficients.iter_mut().zip(&p.coefficients) {
                *a += b;
            }
        } else {
            out.push(p);
        }
    }
    out
}

/// Expansion of the section `sum germs`, with `poles[i]` the poles inside
/// the carrier of `germs[i]`. `radius[i]` is the integration radius for the
/// numeric cross-check; it must exceed the carrier radius.
pub fn trace_from_germ(
    germs: &[Germ],
    poles: &[Vec<LocatedZero>],
    radius: &[f64],
    gamma: f64,
    m: usize,
) -> Result<TraceExpansion> {
    if germs.len() != poles.len() || germs.len() != radius.len() {
        return Err(Error::Input("germs, poles and radii differ in length".into()));
    }
    let lo = gamma - m as f64;
    for p in poles.iter().flatten() {
        if !(p.location.im > lo && p.location.im < gamma) {
            return Err(Error::Validation(format!(
                "pole {} lies outside the window {lo} < Im sigma < {gamma}",
                p.location
            )));
        }
    }
    let n = germs.first().map(|g| g.dim()).unwrap_or(0);
    let samples = x_probes(X_PROBE_COUNT)
        .into_iter()
        .map(|x| {
            Ok(TraceSample {
                x,
                value: numeric_trace(germs, radius, x)?.iter().copied().collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut parts = Vec::new();
    let mut clustered = false;
    for (g, p) in germs.iter().zip(poles) {
        match laurent_coefficients(g, p) {
            Ok(l) => parts.extend(l),
            Err(Error::ClusteredPoles { .. }) => {
                clustered = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if clustered {
        return Ok(TraceExpansion {
            gamma,
            m,
            terms: Vec::new(),
            numeric_only: true,
            samples,
            agreement: None,
        });
    }
    let all = trace_from_laurent(&merge(parts));
    let norm = |t: &TraceTerm| t.coefficient.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let top = all.iter().map(norm).fold(0.0, f64::max);
    let terms: Vec<TraceTerm> = all.into_iter().filter(|t| norm(t) > TERM_DROP_REL * top).collect();
    let mut gap: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for s in &samples {
        let v = CVector::from_vec(s.value.clone());
        gap = gap.max((eval_terms(&terms, n, s.x) - &v).norm());
        mag = mag.max(v.norm());
    }
    let agreement = if mag > 0.0 { gap / mag } else { gap };
    Ok(TraceExpansion {
        gamma,
        m,
        terms,
        numeric_only: false,
        samples,
        agreement: Some(agreement),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::make_germ;
    use crate::linalg::c;

    fn scalar_germ(f: impl Fn(C64) -> C64, center: C64, rho: f64) -> Germ {
        make_germ(|z| Ok(CVector::from_element(1, f(z))), 0, center, rho, 128).unwrap()
    }

    fn pole(z: C64, m: usize) -> LocatedZero {
        LocatedZero {
            location: z,
            multiplicity: m,
        }
    }

    #[test]
    fn simple_pole_gives_constant_i() {
        let g = scalar_germ(|z| 1.0 / z, c(0.0, 0.0), 0.3);
        let t = trace_from_germ(&[g], &[vec![pole(c(0.0, 0.0), 1)]], &[0.4], 0.5, 1).unwrap();
        assert_eq!(t.terms.len(), 1);
        assert!((t.terms[0].coefficient[0] - I).norm() < 1e-12);
        for s in &t.samples {
            assert!((s.value[0] - I).norm() < 1e-10);
        }
        assert!(t.agreement.unwrap() < 1e-10);
    }

    #[test]
    fn double_pole_gives_minus_log() {
        let g = scalar_germ(|z| 1.0 / (z * z), c(0.0, 0.0), 0.3);
        let t = trace_from_germ(&[g], &[vec![pole(c(0.0, 0.0), 2)]], &[0.4], 0.5, 1).unwrap();
        assert_eq!(t.terms.len(), 1);
        assert_eq!(t.terms[0].log_power, 1);
        for s in &t.samples {
            assert!((s.value[0] + s.x.ln()).norm() < 1e-9, "{} {}", s.x, s.value[0]);
        }
    }

    #[test]
    fn inverse_map() {
        let e = TraceExpansion {
            gamma: 0.5,
            m: 1,
            terms: vec![TraceTerm {
                sigma: c(0.0, 0.0),
                log_power: 0,
                coefficient: vec![I],
            }],
            numeric_only: false,
            samples: vec![],
            agreement: None,
        };
        let parts = germ_from_trace(&e);
        assert_eq!(parts.len(), 1);
        assert!((parts[0].coefficients[0][0] - c(1.0, 0.0)).norm() < 1e-15);
        let empty = TraceExpansion { terms: vec![], ..e };
        assert!(germ_from_trace(&empty).is_empty());
    }

    #[test]
    fn round_trip_on_laurent_data() {
        let parts = vec![PoleLaurent {
            pole: c(0.1, -0.2),
            coefficients: vec![
                CVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.0)]),
                CVector::from_vec(vec![c(0.0, 0.0), c(3.0, -1.0)]),
                CVector::from_vec(vec![c(0.25, 0.0), c(0.0, 0.5)]),
            ],
        }];
        let e = TraceExpansion {
            gamma: 0.5,
            m: 2,
            terms: trace_from_laurent(&parts),
            numeric_only: false,
            samples: vec![],
            agreement: None,
        };
        let back = germ_from_trace(&e);
        for (a, b) in back[0].coefficients.iter().zip(&parts[0].coefficients) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn window_is_enforced() {
        let g = scalar_germ(|z| 1.0 / z, c(0.0, 0.0), 0.3);
        let r = trace_from_germ(&[g], &[vec![pole(c(0.0, 0.0), 1)]], &[0.4], 0.0, 1);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn clustered_poles_fall_back_to_numeric() {
        let d = 1e-5;
        let g = scalar_germ(move |z| 1.0 / (z - d) - 1.0 / (z + d), c(0.0, 0.0), 0.3);
        let poles = vec![pole(c(-d, 0.0), 1), pole(c(d, 0.0), 1)];
        let t = trace_from_germ(&[g], &[poles], &[0.4], 0.5, 1).unwrap();
        assert!(t.numeric_only);
        assert!(t.terms.is_empty());
        assert_eq!(t.samples.len(), X_PROBE_COUNT);
    }
}
