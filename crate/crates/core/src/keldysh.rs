//! Canonical root systems of the reduced family at a base point and the
//! normalized dual systems of the adjoint reduction.
//!
//! All polynomial data are Taylor coefficient arrays about the singular
//! point. Chains are read off from the nullspaces of the block lower
//! triangular Toeplitz matrices built from the Taylor coefficients of `𝔓`.

use serde::{Deserialize, Serialize};

use crate::contour::{cauchy_moment, try_count_zeros, Circle, SampledFunction, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::reduction::{Cluster, SchurEvaluator};
use crate::serde_util::{cmatrix_vec, cplx, cvector_vec};

/// Relative singular value threshold for Toeplitz nullspaces.
pub const CHAIN_NULL_TOL: f64 = 1e-8;
/// Largest admissible condition number of `[beta_1(s) ... beta_J(s)]`.
pub const BETA_COND_MAX: f64 = 1e8;
/// Tolerance on the normalization system of the dual chains.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// `T_p = (1/2 pi i) \oint 𝔓(y0, z) (z - c)^{-p-1} dz`, `p = 0..=order`, on
/// the circle of the given radius about `ev.center`.
pub fn taylor_coefficients(ev: &SchurEvaluator, y0: &[f64], radius: f64, order: usize) -> Result<Vec<CMatrix>> {
    let circle = Circle::new(ev.center, radius, DEFAULT_NODES)?;
    let f = SampledFunction::try_from_fn(circle, |z| ev.schur(y0, z))?;
    Ok((0..=order).map(|p| cauchy_moment(&f, -(p as i32) - 1)).collect())
}

/// One Keldysh chain `v_0, ..., v_{L-1}` with the Taylor coefficients of
/// `beta(sigma) = (sigma - c)^{-L} 𝔓(sigma) psi(sigma)` available from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub length: usize,
    #[serde(with = "cvector_vec")]
    pub vectors: Vec<CVector>,
    #[serde(with = "cvector_vec")]
    pub beta_taylor: Vec<CVector>,
}

impl Chain {
    /// `psi(sigma) = sum_i v_i (sigma - c)^i`.
    pub fn psi(&self, center: C64, sigma: C64) -> CVector {
        let h = sigma - center;
        let mut acc = CVector::zeros(self.vectors[0].len());
        for v in self.vectors.iter().rev() {
            acc = acc * h + v;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSystem {
    pub cluster: usize,
    #[serde(with = "cplx")]
    pub center: C64,
    pub lengths: Vec<usize>,
    pub chains: Vec<Chain>,
    /// Taylor coefficients `T_0..T_M` the chains were read from.
    #[serde(with = "cmatrix_vec")]
    pub taylor: Vec<CMatrix>,
}

impl RootSystem {
    pub fn j(&self) -> usize {
        self.chains.len()
    }

    pub fn total_length(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn leading_matrix(&self) -> CMatrix {
        let k = self.chains.first().map(|c| c.vectors[0].len()).unwrap_or(0);
        CMatrix::from_fn(k, self.j(), |r, j| self.chains[j].vectors[0][r])
    }

    pub fn beta_matrix(&self) -> CMatrix {
        let k = self.chains.first().map(|c| c.vectors[0].len()).unwrap_or(0);
        CMatrix::from_fn(k, self.j(), |r, j| self.chains[j].beta_taylor[0][r])
    }

    /// `beta_j(sigma)`, evaluated through the reduction away from the
    /// centre and from the Taylor data at it.
    pub fn beta_at(&self, ev: &SchurEvaluator, y0: &[f64], j: usize, sigma: C64) -> Result<CVector> {
        let ch = &self.chains[j];
        let h = sigma - self.center;
        if h.norm() < 1e-12 {
            return Ok(ch.beta_taylor[0].clone());
        }
        let p = ev.schur(y0, sigma)?;
        Ok(p * ch.psi(self.center, sigma) / h.powu(ch.length as u32))
    }
}

/// `sum_{i} T_{off + m - i} v_i`, the `m`-th coefficient of
/// `(sigma - c)^{-off} T(sigma) psi(sigma)`.
fn shifted_product(taylor: &[CMatrix], vectors: &[CVector], off: usize, m: usize) -> Option<CVector> {
    let k = taylor[0].nrows();
    let mut acc = CVector::zeros(k);
    for (i, v) in vectors.iter().enumerate() {
        if off + m < i {
            continue;
        }
        let t = taylor.get(off + m - i)?;
        acc += t * v;
    }
    Some(acc)
}

fn toeplitz(taylor: &[CMatrix], l: usize) -> CMatrix {
    let k = taylor[0].nrows();
    let mut m = CMatrix::zeros(k * l, k * l);
    for r in 0..l {
        for c in 0..=r {
            m.view_mut((r * k, c * k), (k, k)).copy_from(&taylor[r - c]);
        }
    }
    m
}

fn normalize_phase(v: &mut [CVector]) {
    let lead = &v[0];
    let (mut best, mut idx) = (0.0, 0);
    for (i, z) in lead.iter().enumerate() {
        if z.norm() > best * (1.0 + 1e-9) {
            best = z.norm();
            idx = i;
        }
    }
    if best == 0.0 {
        return;
    }
    let phase = lead[idx].conj() / (best * best);
    for x in v.iter_mut() {
        *x *= phase;
    }
}

/// Maximal Keldysh chains of `T(sigma) = sum T_p (sigma - c)^p`, longest
/// first, with `sum L_j == d_s` enforced.
pub fn root_functions(taylor: &[CMatrix], d_s: usize, center: C64, radius: f64, cluster: usize) -> Result<RootSystem> {
    if taylor.is_empty() {
        return Err(Error::RootSystem("no Taylor data".into()));
    }
    if taylor.len() < d_s + 1 {
        return Err(Error::RootSystem(format!(
            "Taylor order {} is below d_s = {d_s}",
            taylor.len() - 1
        )));
    }
    let k = taylor[0].nrows();
    // work in the scaled variable t = (sigma - c) / radius
    let scaled: Vec<CMatrix> = taylor
        .iter()
        .enumerate()
        .map(|(p, t)| t * C64::new(radius.powi(p as i32), 0.0))
        .collect();
    let scale = scaled.iter().map(linalg::max_abs).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let mut nullity = vec![0usize];
    let mut bases = vec![CMatrix::zeros(0, 0)];
    let max_l = (d_s + 1).min(scaled.len());
    for l in 1..=max_l {
        let t = toeplitz(&scaled, l);
        let (_, s, v) = linalg::svd(&t);
        let rank = s.iter().filter(|&&x| x > CHAIN_NULL_TOL * scale).count();
        let basis = v.columns(rank, k * l - rank).into_owned();
        nullity.push(basis.ncols());
        bases.push(basis);
    }
    let lead_dim: Vec<usize> = (0..nullity.len())
        .map(|l| if l == 0 { 0 } else { nullity[l].saturating_sub(nullity[l - 1]) })
        .collect();
    if lead_dim[1] == 0 {
        return Err(Error::RootSystem("reduced matrix is invertible at the centre".into()));
    }
    if lead_dim.len() > d_s + 1 && lead_dim[d_s + 1] > 0 {
        return Err(Error::RootSystem(format!("chains longer than d_s = {d_s}")));
    }

    let l_max = (1..lead_dim.len()).rev().find(|&l| lead_dim[l] > 0).unwrap_or(1);
    let mut chains_scaled: Vec<Vec<CVector>> = Vec::new();
    for l in (1..=l_max).rev() {
        let need = lead_dim[l].saturating_sub(chains_scaled.len());
        if need == 0 {
            continue;
        }
        let n = &bases[l];
        let lead = n.rows(0, k).into_owned();
        let chosen = CMatrix::from_fn(k, chains_scaled.len(), |r, j| chains_scaled[j][0][r]);
        let q = if chosen.ncols() > 0 {
            let (u, _, _) = linalg::svd(&chosen);
            u.columns(0, chosen.ncols()).into_owned()
        } else {
            CMatrix::zeros(k, 0)
        };
        let proj = &lead - &q * (q.adjoint() * &lead);
        let (_, sv, vv) = linalg::svd(&proj);
        if sv.len() < need || sv[need - 1] < CHAIN_NULL_TOL {
            return Err(Error::RootSystem(format!("could not extend chains of length {l}")));
        }
        for c in 0..need {
            let coeff = vv.column(c).into_owned();
            let full = n * coeff;
            let mut vecs: Vec<CVector> = (0..l).map(|i| full.rows(i * k, k).into_owned()).collect();
            // remove components along already chosen leading vectors using
            // their truncated chains, which remain chains of length l
            for prev in &chains_scaled {
                let a = prev[0].dotc(&vecs[0]) / prev[0].norm_squared();
                for i in 0..l {
                    vecs[i] -= &prev[i] * a;
                }
            }
            let nrm = vecs[0].norm();
            for v in vecs.iter_mut() {
                *v /= C64::new(nrm, 0.0);
            }
            normalize_phase(&mut vecs);
            chains_scaled.push(vecs);
        }
    }
    let lengths: Vec<usize> = chains_scaled.iter().map(|c| c.len()).collect();
    let total: usize = lengths.iter().sum();
    if total != d_s {
        return Err(Error::RootSystem(format!(
            "partial multiplicities {lengths:?} sum to {total}, expected d_s = {d_s}"
        )));
    }
    if chains_scaled.len() != k {
        return Err(Error::RootSystem(format!("{} chains for kernel dimension {k}", chains_scaled.len())));
    }

    let mut chains: Vec<Chain> = chains_scaled
        .into_iter()
        .map(|vs| {
            let vectors: Vec<CVector> = vs
                .into_iter()
                .enumerate()
                .map(|(i, v)| v / C64::new(radius.powi(i as i32), 0.0))
                .collect();
            make_chain(taylor, vectors)
        })
        .collect();

    let mut sys = RootSystem {
        cluster,
        center,
        lengths,
        chains: Vec::new(),
        taylor: taylor.to_vec(),
    };
    sys.chains = chains.clone();
    if linalg::cond(&sys.beta_matrix()) >= BETA_COND_MAX {
        recombine(&mut chains, taylor);
        sys.chains = chains;
        let c = linalg::cond(&sys.beta_matrix());
        if c >= BETA_COND_MAX {
            return Err(Error::RootSystem(format!("beta values ill-conditioned (cond {c:e})")));
        }
    }
    Ok(sys)
}

fn make_chain(taylor: &[CMatrix], vectors: Vec<CVector>) -> Chain {
    let l = vectors.len();
    let beta_taylor = (0..taylor.len().saturating_sub(l))
        .map_while(|m| shifted_product(taylor, &vectors, l, m))
        .collect();
    Chain {
        length: l,
        vectors,
        beta_taylor,
    }
}

/// Within each group of equal length, replaces the chains by combinations
/// whose `beta` values are orthonormal.
fn recombine(chains: &mut [Chain], taylor: &[CMatrix]) {
    let mut start = 0;
    while start < chains.len() {
        let l = chains[start].length;
        let end = (start..chains.len()).find(|&i| chains[i].length != l).unwrap_or(chains.len());
        let k = chains[start].beta_taylor[0].len();
        let b = CMatrix::from_fn(k, end - start, |r, j| chains[start + j].beta_taylor[0][r]);
        let qr = b.qr();
        let r = qr.r();
        if let Some(rinv) = r.try_inverse() {
            let old: Vec<Vec<CVector>> = chains[start..end].iter().map(|c| c.vectors.clone()).collect();
            for (jn, slot) in chains[start..end].iter_mut().enumerate() {
                let vectors: Vec<CVector> = (0..l)
                    .map(|i| {
                        let mut acc = CVector::zeros(old[0][0].len());
                        for (jo, o) in old.iter().enumerate() {
                            acc += &o[i] * rinv[(jo, jn)];
                        }
                        acc
                    })
                    .collect();
                *slot = make_chain(taylor, vectors);
            }
        }
        start = end;
    }
}

/// Root system of the adjoint reduction at `conj sigma_s`, normalized
/// against the primal system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRootSystem {
    pub cluster: usize,
    #[serde(with = "cplx")]
    pub center: C64,
    pub lengths: Vec<usize>,
    /// Normalized dual chains; `beta_taylor` holds the coefficients of `alpha`.
    pub chains: Vec<Chain>,
    /// Chains as extracted before normalization.
    pub raw_chains: Vec<Chain>,
    #[serde(with = "cmatrix_vec")]
    pub taylor: Vec<CMatrix>,
    pub normalization_residual: f64,
}

impl DualRootSystem {
    pub fn j(&self) -> usize {
        self.chains.len()
    }

    pub fn alpha_matrix(&self) -> CMatrix {
        let k = self.chains.first().map(|c| c.vectors[0].len()).unwrap_or(0);
        CMatrix::from_fn(k, self.j(), |r, j| self.chains[j].beta_taylor[0][r])
    }

    /// `alpha_j(tau) = (tau - conj sigma_s)^{-L_j} 𝔔(y0, tau) Psi_j(tau)`.
    pub fn alpha_at(&self, dual_ev: &SchurEvaluator, y0: &[f64], j: usize, tau: C64) -> Result<CVector> {
        let ch = &self.chains[j];
        let h = tau - self.center;
        if h.norm() < 1e-12 {
            return Ok(ch.beta_taylor[0].clone());
        }
        let q = dual_ev.schur(y0, tau)?;
        Ok(q * ch.psi(self.center, tau) / h.powu(ch.length as u32))
    }
}

/// Coefficients `g_0..g_{count-1}` of `G(sigma) = alpha(conj sigma)^H psi(sigma)`
/// about `sigma_s`.
fn pairing_series(alpha: &Chain, psi: &Chain, count: usize) -> Vec<C64> {
    (0..count)
        .map(|m| {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..=m {
                let b = m - a;
                if let (Some(al), Some(v)) = (alpha.beta_taylor.get(a), psi.vectors.get(b)) {
                    acc += al.dotc(v);
                }
            }
            acc
        })
        .collect()
}

/// Largest deviation of `G_{jj'}` from `delta_{jj'}` modulo `(sigma - sigma_s)^{L_j}`.
pub fn duality_residual(root: &RootSystem, dual: &[Chain]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, psi) in root.chains.iter().enumerate() {
        for (jp, alpha) in dual.iter().enumerate() {
            let g = pairing_series(alpha, psi, psi.length);
            for (m, x) in g.iter().enumerate() {
                let target = if j == jp && m == 0 { 1.0 } else { 0.0 };
                worst = worst.max((x - target).norm());
            }
        }
    }
    worst
}

/// Builds the adjoint reduction at `conj sigma_s` (kernel `R_s^perp`,
/// cokernel `K_s`), extracts its chains and recombines them so that
/// `alpha_{j'}(conj sigma)^H psi_j(sigma) == delta_{jj'}` modulo
/// `(sigma - sigma_s)^{L_j}`.
pub fn dual_root_functions(
    dual_ev: &SchurEvaluator,
    y0: &[f64],
    radius: f64,
    root: &RootSystem,
) -> Result<DualRootSystem> {
    let order = root.taylor.len() - 1;
    let taylor = taylor_coefficients(dual_ev, y0, radius, order)?;
    let d_s = root.total_length();
    let raw = root_functions(&taylor, d_s, dual_ev.center, radius, root.cluster)?;
    if raw.lengths != root.lengths {
        return Err(Error::RootSystem(format!(
            "dual partial multiplicities {:?} differ from {:?}",
            raw.lengths, root.lengths
        )));
    }
    let lens = &root.lengths;
    let jn = lens.len();
    let max_l = lens.iter().copied().max().unwrap_or(0);
    // g[j][j''] = coefficients of G_{j j''}
    let g: Vec<Vec<Vec<C64>>> = root
        .chains
        .iter()
        .map(|psi| raw.chains.iter().map(|al| pairing_series(al, psi, max_l)).collect())
        .collect();

    let mut chains = Vec::with_capacity(jn);
    for jp in 0..jn {
        let lp = lens[jp];
        let unknowns: Vec<(usize, usize)> = (0..jn)
            .flat_map(|jpp| (lp.saturating_sub(lens[jpp])..lp).map(move |m| (jpp, m)))
            .collect();
        let rows: Vec<(usize, usize)> = (0..jn).flat_map(|j| (0..lens[j]).map(move |k| (j, k))).collect();
        let mut a = CMatrix::zeros(rows.len(), unknowns.len());
        let mut b = CMatrix::zeros(rows.len(), 1);
        for (r, &(j, k)) in rows.iter().enumerate() {
            if j == jp && k == 0 {
                b[(r, 0)] = C64::new(1.0, 0.0);
            }
            for (c, &(jpp, m)) in unknowns.iter().enumerate() {
                let e = m + lens[jpp] - lp;
                if k >= e {
                    a[(r, c)] = g[j][jpp][k - e];
                }
            }
        }
        let x = linalg::lstsq(&a, &b, 1e-12).ok_or(Error::SingularNormalization { residual: f64::INFINITY })?;
        let residual = linalg::max_abs(&(&a * &x - &b));
        if !(residual < NORMALIZATION_TOL) {
            return Err(Error::SingularNormalization { residual });
        }
        // Psi~_{j'} = sum c (tau - conj s)^m Psi_{j''}, c = conj x, truncated
        let k = raw.chains[0].vectors[0].len();
        let vectors: Vec<CVector> = (0..lp)
            .map(|i| {
                let mut acc = CVector::zeros(k);
                for (c, &(jpp, m)) in unknowns.iter().enumerate() {
                    if i >= m {
                        if let Some(w) = raw.chains[jpp].vectors.get(i - m) {
                            acc += w * x[(c, 0)].conj();
                        }
                    }
                }
                acc
            })
            .collect();
        chains.push(make_chain(&taylor, vectors));
    }
    let normalization_residual = duality_residual(root, &chains);
    if !(normalization_residual < NORMALIZATION_TOL) {
        return Err(Error::SingularNormalization {
            residual: normalization_residual,
        });
    }
    Ok(DualRootSystem {
        cluster: root.cluster,
        center: dual_ev.center,
        lengths: root.lengths.clone(),
        chains,
        raw_chains: raw.chains,
        taylor,
        normalization_residual,
    })
}

/// Residuals of the properties a canonical system and its dual must have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalReport {
    pub cluster: usize,
    pub lengths: Vec<usize>,
    pub sum_lengths: usize,
    /// Zeros of `q_s(y0, .)` inside the Taylor circle.
    pub winding_count: usize,
    /// Zeros of `q_s(y0, sigma) / (sigma - sigma_s)^{d_s}` there; 0 when the
    /// determinant factors as expected.
    pub residual_factor_zeros: usize,
    /// Largest relative `𝔰(𝔓 phi_{j,0})` coefficient.
    pub chain_singular_part: f64,
    pub dual_chain_singular_part: f64,
    pub leading_cond: f64,
    pub beta_cond: f64,
    pub alpha_cond: f64,
    pub normalization_residual: f64,
    /// `max |𝔔(conj sigma)^H - 𝔓(sigma)|` on probe points.
    pub adjoint_residual: f64,
}

impl CanonicalReport {
    pub fn passed(&self) -> bool {
        self.sum_lengths == self.winding_count
            && self.residual_factor_zeros == 0
            && self.chain_singular_part < 1e-8
            && self.dual_chain_singular_part < 1e-8
            && self.leading_cond < BETA_COND_MAX
            && self.beta_cond < BETA_COND_MAX
            && self.alpha_cond < BETA_COND_MAX
            && self.normalization_residual < NORMALIZATION_TOL
            && self.adjoint_residual < 1e-10
    }
}

fn chain_singular_part(ev: &SchurEvaluator, y0: &[f64], center: C64, radius: f64, chains: &[Chain]) -> Result<f64> {
    let circle = Circle::new(center, radius, DEFAULT_NODES)?;
    let mut worst: f64 = 0.0;
    for ch in chains {
        let l = ch.length as u32;
        let f = SampledFunction::try_from_fn(circle, |z| {
            let v = ev.schur(y0, z)? * ch.psi(center, z) / (z - center).powu(l);
            Ok(linalg::column(&v))
        })?;
        let scale = f.values.iter().map(linalg::max_abs).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for p in 0..ch.length {
            let m = cauchy_moment(&f, p as i32);
            worst = worst.max(linalg::max_abs(&m) / (scale * radius.powi(p as i32 + 1)));
        }
    }
    Ok(worst)
}

pub fn verify_canonical_system(
    ev: &SchurEvaluator,
    dual_ev: &SchurEvaluator,
    y0: &[f64],
    radius: f64,
    root: &RootSystem,
    dual: &DualRootSystem,
) -> Result<CanonicalReport> {
    let circle = Circle::new(root.center, radius, DEFAULT_NODES)?;
    let winding_count = try_count_zeros(&|z| ev.qdet(y0, z), &circle)?;
    let d = root.total_length() as i32;
    let residual_factor_zeros =
        try_count_zeros(&|z| Ok(ev.qdet(y0, z)? / (z - root.center).powi(d)), &circle)?;
    let chain_sp = chain_singular_part(ev, y0, root.center, radius, &root.chains)?;
    let dual_sp = chain_singular_part(dual_ev, y0, dual.center, radius, &dual.chains)?;
    let mut adjoint_residual: f64 = 0.0;
    for t in 0..8 {
        let z = root.center + C64::from_polar(0.7 * radius, 0.4 + t as f64 * 0.785);
        let p = ev.schur(y0, z)?;
        let q = dual_ev.schur(y0, z.conj())?;
        adjoint_residual = adjoint_residual.max(linalg::max_abs(&(q.adjoint() - &p)) / linalg::max_abs(&p).max(1.0));
    }
    Ok(CanonicalReport {
        cluster: root.cluster,
        lengths: root.lengths.clone(),
        sum_lengths: root.total_length(),
        winding_count,
        residual_factor_zeros,
        chain_singular_part: chain_sp,
        dual_chain_singular_part: dual_sp,
        leading_cond: linalg::cond(&root.leading_matrix()),
        beta_cond: linalg::cond(&root.beta_matrix()),
        alpha_cond: linalg::cond(&dual.alpha_matrix()),
        normalization_residual: duality_residual(root, &dual.chains),
        adjoint_residual,
    })
}

/// Taylor order used for chain extraction; the dual normalization needs
/// coefficients up to `2 d_s - 1`.
pub fn default_order(d_s: usize) -> usize {
    2 * d_s + 2
}

/// Primal and dual systems for one cluster at the base point, with the
/// Taylor circle of radius `eps / 2`.
pub fn canonical_systems(
    chart: &crate::family::FamilyChart,
    y0: &[f64],
    s: usize,
    cluster: &Cluster,
) -> Result<(RootSystem, DualRootSystem)> {
    let ev = SchurEvaluator::primal(chart, cluster);
    let dual_ev = SchurEvaluator::dual(chart, cluster);
    let radius = 0.5 * cluster.eps;
    let taylor = taylor_coefficients(&ev, y0, radius, default_order(cluster.multiplicity))?;
    let root = root_functions(&taylor, cluster.multiplicity, cluster.sigma, radius, s)?;
    let dual = dual_root_functions(&dual_ev, y0, radius, &root)?;
    Ok((root, dual))
}
