//! The sesquilinear pairing between germs of the kernel bundle and germs of
//! the dual bundle, pairing matrices, and coefficient solves for sections.
//!
//! `[phi, psi] = (1/2 pi) sum_s \oint_{|sigma - sigma_s| = eps} psi(conj sigma)^H P(y, sigma) phi(sigma) dsigma`

use serde::{Deserialize, Serialize};

use crate::contour::Circle;
use crate::error::{Error, Result};
use crate::family::FamilyChart;
use crate::frames::{FrameSet, Germ};
use crate::linalg::{self, CMatrix, CVector, C64, I};
use crate::reduction::{BasePointData, SchurEvaluator};
use crate::serde_util::{cmatrix, cplx_vec};

/// Pairing matrices with larger condition number are rejected.
pub const PAIRING_COND_MAX: f64 = 1e12;
/// Relative reconstruction residual above which a section is rejected.
pub const RECONSTRUCTION_TOL: f64 = 1e-6;

/// Circles `|sigma - sigma_s| = eps_s`, one per cluster.
pub fn pairing_contours(base: &BasePointData, nodes: usize) -> Result<Vec<Circle>> {
    base.clusters.iter().map(|c| Circle::new(c.sigma, c.eps, nodes)).collect()
}

/// Quadrature nodes on the pairing contours with the family sampled there.
pub struct Quadrature {
    pub points: Vec<C64>,
    weights: Vec<C64>,
    p: Vec<CMatrix>,
}

impl Quadrature {
    pub fn new(chart: &FamilyChart, y: &[f64], contours: &[Circle]) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut p = Vec::new();
        for c in contours {
            let n = c.node_count as f64;
            for z in c.nodes() {
                points.push(z);
                // (1/2 pi) dsigma = i (z - c) / N on the trapezoid grid
                weights.push(I * (z - c.center) / n);
                p.push(chart.eval(y, z)?);
            }
        }
        Ok(Quadrature { points, weights, p })
    }

    pub fn sample(&self, g: &Germ) -> Result<Vec<CVector>> {
        self.points.iter().map(|&z| g.eval(z)).collect()
    }

    /// Dual germs are read at the conjugate nodes.
    pub fn sample_dual(&self, g: &Germ) -> Result<Vec<CVector>> {
        self.points.iter().map(|&z| g.eval(z.conj())).collect()
    }

    pub fn integrate(&self, phi: &[CVector], psi: &[CVector]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for t in 0..self.points.len() {
            acc += self.weights[t] * psi[t].dotc(&(&self.p[t] * &phi[t]));
        }
        acc
    }
}

pub fn pair(chart: &FamilyChart, y: &[f64], contours: &[Circle], phi: &Germ, psi: &Germ) -> Result<C64> {
    let q = Quadrature::new(chart, y, contours)?;
    Ok(q.integrate(&q.sample(phi)?, &q.sample_dual(psi)?))
}

/// `a_{r,c} = [phi_r, psi_c]`, rows indexed by the frame, columns by the
/// dual frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingMatrix {
    pub y: Vec<f64>,
    #[serde(with = "cmatrix")]
    pub entries: CMatrix,
    pub cond: f64,
}

pub fn pairing_matrix(
    chart: &FamilyChart,
    y: &[f64],
    contours: &[Circle],
    frame: &FrameSet,
    dual: &FrameSet,
) -> Result<PairingMatrix> {
    let q = Quadrature::new(chart, y, contours)?;
    pairing_matrix_with(&q, y, frame, dual)
}

pub fn pairing_matrix_with(q: &Quadrature, y: &[f64], frame: &FrameSet, dual: &FrameSet) -> Result<PairingMatrix> {
    let phis: Vec<Vec<CVector>> = frame.germs().map(|g| q.sample(g)).collect::<Result<_>>()?;
    let psis: Vec<Vec<CVector>> = dual.germs().map(|g| q.sample_dual(g)).collect::<Result<_>>()?;
    let mut a = CMatrix::zeros(phis.len(), psis.len());
    for (r, phi) in phis.iter().enumerate() {
        for (c, psi) in psis.iter().enumerate() {
            a[(r, c)] = q.integrate(phi, psi);
        }
    }
    let cond = linalg::cond(&a);
    if !(cond <= PAIRING_COND_MAX) {
        return Err(Error::SingularPairing { cond });
    }
    Ok(PairingMatrix {
        y: y.to_vec(),
        entries: a,
        cond,
    })
}

/// `(1/2 pi) \oint (phi_K(sigma), 𝔔(y, conj sigma) psi_R(conj sigma)) dsigma`
/// over one circle, for reduced germs of one cluster.
pub fn reduced_pair(dual_ev: &SchurEvaluator, y: &[f64], circle: &Circle, phi_k: &Germ, psi_r: &Germ) -> Result<C64> {
    let n = circle.node_count as f64;
    let mut acc = C64::new(0.0, 0.0);
    for z in circle.nodes() {
        let w = I * (z - circle.center) / n;
        let qpsi = dual_ev.schur(y, z.conj())? * psi_r.eval(z.conj())?;
        acc += w * qpsi.dotc(&phi_k.eval(z)?);
    }
    Ok(acc)
}

/// Pairing matrix of the reduced frames; entries across clusters are zero
/// by construction.
pub fn reduced_pairing_matrix(
    chart: &FamilyChart,
    base: &BasePointData,
    y: &[f64],
    frame: &FrameSet,
    dual: &FrameSet,
    nodes: usize,
) -> Result<CMatrix> {
    let evs: Vec<SchurEvaluator> = base.clusters.iter().map(|c| SchurEvaluator::dual(chart, c)).collect();
    let contours = pairing_contours(base, nodes)?;
    let mut a = CMatrix::zeros(frame.len(), dual.len());
    for (r, e) in frame.entries.iter().enumerate() {
        for (c, d) in dual.entries.iter().enumerate() {
            if e.cluster == d.cluster {
                let s = e.cluster;
                a[(r, c)] = reduced_pair(&evs[s], y, &contours[s], &e.germ, &d.germ)?;
            }
        }
    }
    Ok(a)
}

/// `i` times the permutation pairing `(j, l) <-> (j, L_j - 1 - l)`.
pub fn expected_base_point_matrix(lengths: &[usize]) -> CMatrix {
    let d: usize = lengths.iter().sum();
    let mut m = CMatrix::zeros(d, d);
    let mut off = 0;
    for &l in lengths {
        for a in 0..l {
            m[(off + a, off + l - 1 - a)] = I;
        }
        off += l;
    }
    m
}

/// Largest deviation of a one-cluster base-point pairing matrix from the
/// permutation pairing.
pub fn base_point_check(matrix: &CMatrix, lengths: &[usize]) -> f64 {
    let e = expected_base_point_matrix(lengths);
    if e.shape() != matrix.shape() {
        return f64::INFINITY;
    }
    linalg::max_abs(&(matrix - e))
}

/// Coordinates `f` of a section in the frame, from `a^T f = b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub y: Vec<f64>,
    #[serde(with = "cplx_vec")]
    pub values: Vec<C64>,
    /// Condition number of the pairing matrix used.
    pub cond: f64,
    /// Relative reconstruction residual on the pairing contours.
    pub residual: f64,
}

/// Solves for the coordinates of `section` (a sum of germs) in `frame`.
pub fn coefficients(
    q: &Quadrature,
    y: &[f64],
    section: &[Germ],
    frame: &FrameSet,
    dual: &FrameSet,
    a: &PairingMatrix,
) -> Result<CoefficientVector> {
    let d = frame.len();
    let mut phi = vec![CVector::zeros(frame.entries.first().map(|e| e.germ.dim()).unwrap_or(0)); q.points.len()];
    for g in section {
        for (acc, v) in phi.iter_mut().zip(q.sample(g)?) {
            *acc += v;
        }
    }
    let mut b = CMatrix::zeros(d, 1);
    for (c, g) in dual.germs().enumerate() {
        b[(c, 0)] = q.integrate(&phi, &q.sample_dual(g)?);
    }
    let at = a.entries.transpose();
    let f = linalg::solve_refined(&at, &b, 2).ok_or(Error::SingularPairing { cond: a.cond })?;
    let frame_vals: Vec<Vec<CVector>> = frame.germs().map(|g| q.sample(g)).collect::<Result<_>>()?;
    let mut err: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for t in 0..q.points.len() {
        let mut rec = phi[t].clone();
        for (r, vals) in frame_vals.iter().enumerate() {
            rec -= &vals[t] * f[(r, 0)];
        }
        err = err.max(rec.norm());
        mag = mag.max(phi[t].norm());
    }
    let residual = if mag > 0.0 { err / mag } else { err };
    if !(residual <= RECONSTRUCTION_TOL) {
        return Err(Error::NotInKernel { residual });
    }
    Ok(CoefficientVector {
        y: y.to_vec(),
        values: f.column(0).iter().copied().collect(),
        cond: a.cond,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{branching_family, jordan_family, scalar_family};
    use crate::frames::{frames_at, make_germ, FrameOptions, Frames};
    use crate::keldysh::{canonical_systems, DualRootSystem, RootSystem};
    use crate::linalg::c;
    use crate::reduction::{build_base_point, BaseOptions};

    struct Setup {
        chart: FamilyChart,
        base: BasePointData,
        roots: Vec<RootSystem>,
        duals: Vec<DualRootSystem>,
    }

    fn setup(chart: FamilyChart, u: &[Vec<f64>], eps: Option<f64>) -> Setup {
        let opts = BaseOptions {
            u_grid: u.to_vec(),
            eps,
            ..Default::default()
        };
        let (base, _) = build_base_point(&chart, &[0.0], &opts).unwrap();
        let mut roots = Vec::new();
        let mut duals = Vec::new();
        for (s, cl) in base.clusters.iter().enumerate() {
            let (r, d) = canonical_systems(&chart, &base.y0, s, cl).unwrap();
            roots.push(r);
            duals.push(d);
        }
        Setup { chart, base, roots, duals }
    }

    impl Setup {
        fn frames(&self, y: f64) -> Frames {
            frames_at(&self.chart, &self.base, &self.roots, &self.duals, &[y], &FrameOptions::default()).unwrap()
        }
    }

    fn scalar_germ(f: impl Fn(C64) -> C64, center: C64) -> Germ {
        make_germ(|z| Ok(CVector::from_element(1, f(z))), 0, center, 0.3, 128).unwrap()
    }

    #[test]
    fn scalar_pairing_is_i() {
        let chart = scalar_family();
        let phi = scalar_germ(|z| 1.0 / z, c(0.0, 0.0));
        let psi = scalar_germ(|z| 1.0 / z, c(0.0, 0.0));
        let contour = Circle::new(c(0.0, 0.0), 0.5, 128).unwrap();
        let v = pair(&chart, &[0.0], &[contour], &phi, &psi).unwrap();
        assert!((v - I).norm() < 1e-12);
        let zero = scalar_germ(|_| c(0.0, 0.0), c(0.0, 0.0));
        assert!(pair(&chart, &[0.0], &[contour], &zero, &psi).unwrap().norm() < 1e-15);
    }

    #[test]
    fn sesquilinear() {
        let chart = scalar_family();
        let phi = scalar_germ(|z| 1.0 / z + 0.3 / (z * z), c(0.0, 0.0));
        let psi = scalar_germ(|z| 2.0 / z, c(0.0, 0.0));
        let contour = [Circle::new(c(0.0, 0.0), 0.5, 128).unwrap()];
        let lam = c(0.7, -1.3);
        let base = pair(&chart, &[0.0], &contour, &phi, &psi).unwrap();
        let l1 = pair(&chart, &[0.0], &contour, &phi.scale(lam), &psi).unwrap();
        let l2 = pair(&chart, &[0.0], &contour, &phi, &psi.scale(lam)).unwrap();
        assert!((l1 - lam * base).norm() < 1e-10);
        assert!((l2 - lam.conj() * base).norm() < 1e-10);
    }

    #[test]
    fn jordan_base_point_matrix_is_antidiagonal() {
        let s = setup(jordan_family(), &[vec![0.0]], None);
        let fr = s.frames(0.0);
        let red = reduced_pairing_matrix(&s.chart, &s.base, &[0.0], &fr.primal_reduced, &fr.dual_reduced, 128).unwrap();
        assert!(base_point_check(&red, &[2]) < 1e-8, "{red}");
        let contours = pairing_contours(&s.base, 128).unwrap();
        let full = pairing_matrix(&s.chart, &[0.0], &contours, &fr.primal, &fr.dual).unwrap();
        assert!(linalg::max_abs(&(&full.entries - &red)) < 1e-9);
        assert!((full.entries[(0, 1)] - I).norm() < 1e-8);
    }

    #[test]
    fn branching_base_point_matrix_is_i_identity() {
        let s = setup(branching_family(), &[vec![0.0]], Some(0.5));
        let fr = s.frames(0.0);
        let red = reduced_pairing_matrix(&s.chart, &s.base, &[0.0], &fr.primal_reduced, &fr.dual_reduced, 128).unwrap();
        assert!(base_point_check(&red, &[1, 1]) < 1e-8);
    }

    #[test]
    fn three_by_three_expected_matrix() {
        let m = expected_base_point_matrix(&[2, 1]);
        assert_eq!(m[(0, 1)], I);
        assert_eq!(m[(1, 0)], I);
        assert_eq!(m[(2, 2)], I);
        assert_eq!(m[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn frame_entry_has_unit_coordinates() {
        let grid: Vec<Vec<f64>> = (-4..=4).map(|i| vec![0.05 * i as f64]).collect();
        let s = setup(branching_family(), &grid, Some(0.5));
        let y = 0.12;
        let fr = s.frames(y);
        let contours = pairing_contours(&s.base, 128).unwrap();
        let q = Quadrature::new(&s.chart, &[y], &contours).unwrap();
        let a = pairing_matrix_with(&q, &[y], &fr.primal, &fr.dual).unwrap();
        for r in 0..fr.primal.len() {
            let cv = coefficients(&q, &[y], &[fr.primal.entries[r].germ.clone()], &fr.primal, &fr.dual, &a).unwrap();
            for (k, v) in cv.values.iter().enumerate() {
                let t = if k == r { 1.0 } else { 0.0 };
                assert!((v - t).norm() < 1e-8);
            }
        }
        let zero = fr.primal.entries[0].germ.scale(c(0.0, 0.0));
        let cv = coefficients(&q, &[y], &[zero], &fr.primal, &fr.dual, &a).unwrap();
        assert!(cv.values.iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn non_kernel_section_is_rejected() {
        let s = setup(branching_family(), &[vec![0.0]], Some(0.5));
        let fr = s.frames(0.0);
        let contours = pairing_contours(&s.base, 128).unwrap();
        let q = Quadrature::new(&s.chart, &[0.0], &contours).unwrap();
        let a = pairing_matrix_with(&q, &[0.0], &fr.primal, &fr.dual).unwrap();
        let bad = make_germ(
            |z| Ok(CVector::from_vec(vec![1.0 / (z * z), c(0.0, 0.0)])),
            0,
            c(0.0, 0.0),
            0.375,
            128,
        )
        .unwrap();
        assert!(matches!(
            coefficients(&q, &[0.0], &[bad], &fr.primal, &fr.dual, &a),
            Err(Error::NotInKernel { .. })
        ));
    }

    #[test]
    fn contour_independence() {
        let s = setup(jordan_family(), &[vec![0.0]], None);
        let fr = s.frames(0.0);
        let eps = s.base.clusters[0].eps;
        let a1 = pairing_matrix(&s.chart, &[0.0], &[Circle::new(c(0.0, 0.0), eps, 128).unwrap()], &fr.primal, &fr.dual)
            .unwrap();
        let a2 = pairing_matrix(
            &s.chart,
            &[0.0],
            &[Circle::new(c(0.0, 0.0), 1.2 * eps, 128).unwrap()],
            &fr.primal,
            &fr.dual,
        )
        .unwrap();
        assert!(linalg::max_abs(&(a1.entries - a2.entries)) < 1e-9);
    }
}
