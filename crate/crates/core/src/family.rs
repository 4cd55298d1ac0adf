//! Holomorphic matrix families `P(y, sigma)` on a single parameter chart,
//! their adjoint families and the built-in examples.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contour::{cauchy_moment, Circle, Rect, SampledFunction};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, I};

/// Open region of the sigma-plane on which the family is considered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaRegion {
    Rectangle {
        re: [f64; 2],
        im: [f64; 2],
    },
    /// Horizontal strip `im[0] < Im sigma < im[1]`; `re_search` bounds the
    /// real part when searching for singular points.
    Strip {
        im: [f64; 2],
        #[serde(default = "default_re_search")]
        re_search: [f64; 2],
    },
}

fn default_re_search() -> [f64; 2] {
    [-2.0, 2.0]
}

impl SigmaRegion {
    pub fn strip(im_lo: f64, im_hi: f64) -> Self {
        SigmaRegion::Strip {
            im: [im_lo, im_hi],
            re_search: default_re_search(),
        }
    }

    pub fn rectangle(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Self {
        SigmaRegion::Rectangle {
            re: [re_lo, re_hi],
            im: [im_lo, im_hi],
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        match self {
            SigmaRegion::Rectangle { re, im } => {
                z.re > re[0] && z.re < re[1] && z.im > im[0] && z.im < im[1]
            }
            SigmaRegion::Strip { im, .. } => z.im > im[0] && z.im < im[1],
        }
    }

    /// Distance from an interior point to the boundary (negative outside).
    pub fn boundary_distance(&self, z: C64) -> f64 {
        match self {
            SigmaRegion::Rectangle { re, im } => (z.re - re[0])
                .min(re[1] - z.re)
                .min(z.im - im[0])
                .min(im[1] - z.im),
            SigmaRegion::Strip { im, .. } => (z.im - im[0]).min(im[1] - z.im),
        }
    }

    pub fn conj(&self) -> Self {
        match *self {
            SigmaRegion::Rectangle { re, im } => SigmaRegion::Rectangle {
                re,
                im: [-im[1], -im[0]],
            },
            SigmaRegion::Strip { im, re_search } => SigmaRegion::Strip {
                im: [-im[1], -im[0]],
                re_search,
            },
        }
    }

    /// Bounded rectangle scanned for singular points, inset slightly so its
    /// edges stay inside the open region.
    pub fn search_rect(&self) -> Rect {
        let (re, im) = match *self {
            SigmaRegion::Rectangle { re, im } => (re, im),
            SigmaRegion::Strip { im, re_search } => (re_search, im),
        };
        let dr = SEARCH_INSET * (re[1] - re[0]);
        let di = SEARCH_INSET * (im[1] - im[0]);
        Rect {
            re_lo: re[0] + dr,
            re_hi: re[1] - dr,
            im_lo: im[0] + di,
            im_hi: im[1] - di,
        }
    }
}

const SEARCH_INSET: f64 = 1e-6;

pub type Evaluator = Arc<dyn Fn(&[f64], C64) -> CMatrix + Send + Sync>;

/// A holomorphic family on one chart `U` of parameter space.
#[derive(Clone)]
pub struct FamilyChart {
    pub name: String,
    pub n: usize,
    pub param_dim: usize,
    pub sigma: SigmaRegion,
    evaluator: Evaluator,
}

impl fmt::Debug for FamilyChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilyChart")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("param_dim", &self.param_dim)
            .field("sigma", &self.sigma)
            .finish()
    }
}

impl FamilyChart {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        param_dim: usize,
        sigma: SigmaRegion,
        evaluator: Evaluator,
    ) -> Self {
        FamilyChart {
            name: name.into(),
            n,
            param_dim,
            sigma,
            evaluator,
        }
    }

    fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.param_dim {
            return Err(Error::Input(format!(
                "parameter has dimension {}, chart expects {}",
                y.len(),
                self.param_dim
            )));
        }
        Ok(())
    }

    /// Matrix of `P_y(sigma)`.
    pub fn eval(&self, y: &[f64], sigma: C64) -> Result<CMatrix> {
        self.check_y(y)?;
        if !self.sigma.contains(sigma) {
            return Err(Error::Domain(format!("sigma = {sigma} outside the region")));
        }
        let m = (self.evaluator)(y, sigma);
        if m.shape() != (self.n, self.n) {
            return Err(Error::Input(format!(
                "evaluator returned {:?}, expected {}x{}",
                m.shape(),
                self.n,
                self.n
            )));
        }
        Ok(m)
    }

    /// Matrix of the adjoint family `P*_y(sigma) = P_y(conj sigma)^H`.
    pub fn eval_adjoint(&self, y: &[f64], sigma: C64) -> Result<CMatrix> {
        Ok(self.eval(y, sigma.conj())?.adjoint())
    }

    /// The adjoint family as a chart in its own right (region conjugated).
    pub fn adjoint(&self) -> FamilyChart {
        let inner = self.evaluator.clone();
        FamilyChart {
            name: format!("{}*", self.name),
            n: self.n,
            param_dim: self.param_dim,
            sigma: self.sigma.conj(),
            evaluator: Arc::new(move |y, s| inner(y, s.conj()).adjoint()),
        }
    }

    pub fn det(&self, y: &[f64], sigma: C64) -> Result<C64> {
        Ok(linalg::det(&self.eval(y, sigma)?))
    }

    /// Relative size of `(1/2 pi i) \oint P` on a probe circle; vanishes for
    /// holomorphic families by Cauchy's theorem.
    pub fn holomorphy_residual(&self, y: &[f64], circle: &Circle) -> Result<f64> {
        let mut values = Vec::with_capacity(circle.node_count);
        let mut scale: f64 = 0.0;
        for z in circle.nodes() {
            let m = self.eval(y, z)?;
            scale = scale.max(linalg::max_abs(&m));
            values.push(m);
        }
        let f = SampledFunction::new(*circle, values)?;
        let integral = cauchy_moment(&f, 0);
        Ok(linalg::max_abs(&integral) / scale.max(f64::MIN_POSITIVE))
    }
}

/// One term `sigma^p * y^e * M` of a matrix polynomial family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    #[serde(default)]
    pub sigma_power: u32,
    #[serde(default)]
    pub y_powers: Vec<u32>,
    #[serde(with = "crate::serde_util::cmatrix")]
    pub matrix: CMatrix,
}

fn monomial(y: &[f64], powers: &[u32]) -> f64 {
    powers
        .iter()
        .enumerate()
        .map(|(i, &p)| y.get(i).copied().unwrap_or(0.0).powi(p as i32))
        .product()
}

/// Matrix polynomial in `sigma` with coefficients polynomial in `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPolynomial {
    pub n: usize,
    pub param_dim: usize,
    pub terms: Vec<PolyTerm>,
}

impl MatrixPolynomial {
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if t.matrix.shape() != (self.n, self.n) {
                return Err(Error::Input(format!(
                    "term matrix is {:?}, expected {}x{}",
                    t.matrix.shape(),
                    self.n,
                    self.n
                )));
            }
            if t.y_powers.len() > self.param_dim {
                return Err(Error::Input("term has more y powers than param_dim".into()));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, y: &[f64], sigma: C64) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for t in &self.terms {
            let w = sigma.powu(t.sigma_power) * monomial(y, &t.y_powers);
            m += &t.matrix * w;
        }
        m
    }

    pub fn into_chart(self, name: impl Into<String>, sigma: SigmaRegion) -> Result<FamilyChart> {
        self.validate()?;
        let n = self.n;
        let pd = self.param_dim;
        Ok(FamilyChart::new(
            name,
            n,
            pd,
            sigma,
            Arc::new(move |y, s| self.evaluate(y, s)),
        ))
    }
}

fn real_matrix(rows: &[&[f64]]) -> CMatrix {
    CMatrix::from_fn(rows.len(), rows[0].len(), |i, j| C64::new(rows[i][j], 0.0))
}

/// `[[sigma, 1], [0, sigma]]`, independent of `y`.
pub fn jordan_family() -> FamilyChart {
    MatrixPolynomial {
        n: 2,
        param_dim: 1,
        terms: vec![
            PolyTerm {
                sigma_power: 1,
                y_powers: vec![],
                matrix: CMatrix::identity(2, 2),
            },
            PolyTerm {
                sigma_power: 0,
                y_powers: vec![],
                matrix: real_matrix(&[&[0.0, 1.0], &[0.0, 0.0]]),
            },
        ],
    }
    .into_chart("jordan", SigmaRegion::rectangle(-2.0, 2.0, -2.0, 2.0))
    .expect("static family")
}

/// `[[sigma, y], [y, sigma]]`: two simple singular points `+-y` that merge
/// at `y = 0`.
pub fn branching_family() -> FamilyChart {
    MatrixPolynomial {
        n: 2,
        param_dim: 1,
        terms: vec![
            PolyTerm {
                sigma_power: 1,
                y_powers: vec![],
                matrix: CMatrix::identity(2, 2),
            },
            PolyTerm {
                sigma_power: 0,
                y_powers: vec![1],
                matrix: real_matrix(&[&[0.0, 1.0], &[1.0, 0.0]]),
            },
        ],
    }
    .into_chart("branching", SigmaRegion::rectangle(-2.0, 2.0, -2.0, 2.0))
    .expect("static family")
}

/// Scalar `P(sigma) = sigma`.
pub fn scalar_family() -> FamilyChart {
    MatrixPolynomial {
        n: 1,
        param_dim: 1,
        terms: vec![PolyTerm {
            sigma_power: 1,
            y_powers: vec![],
            matrix: CMatrix::identity(1, 1),
        }],
    }
    .into_chart("scalar", SigmaRegion::rectangle(-2.0, 2.0, -2.0, 2.0))
    .expect("static family")
}

/// Coefficients (ascending powers) of `p_m(sigma) = prod_{k<m} (sigma + i k)`.
pub fn indicial_coefficients(m: usize) -> Vec<C64> {
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    for k in 0..m {
        let shift = I * k as f64;
        let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
        for (p, &a) in coeffs.iter().enumerate() {
            next[p + 1] += a;
            next[p] += a * shift;
        }
        coeffs = next;
    }
    coeffs
}

/// The 1x1 indicial family `p_m` on the strip `gamma - m < Im sigma < gamma`.
pub fn indicial_family(m: usize, gamma: f64) -> Result<FamilyChart> {
    if m == 0 {
        return Err(Error::Config("indicial order must be positive".into()));
    }
    let terms = indicial_coefficients(m)
        .into_iter()
        .enumerate()
        .map(|(p, a)| PolyTerm {
            sigma_power: p as u32,
            y_powers: vec![],
            matrix: CMatrix::from_element(1, 1, a),
        })
        .collect();
    MatrixPolynomial {
        n: 1,
        param_dim: 1,
        terms,
    }
    .into_chart(
        format!("indicial_{m}"),
        SigmaRegion::strip(gamma - m as f64, gamma),
    )
}

pub type CoefficientMap = Arc<dyn Fn(&[f64]) -> CMatrix + Send + Sync>;

/// `D_s^2 + a(y) + sigma^2` on `[0, pi]` with Dirichlet conditions, acting on
/// `C^r`-valued functions, restricted to the first `mode_cutoff` sine modes.
#[derive(Clone)]
pub struct SturmLiouvilleSpec {
    pub r: usize,
    pub param_dim: usize,
    pub a_eval: CoefficientMap,
    pub mode_cutoff: usize,
    pub k_gap: usize,
    pub r_bound: f64,
    pub re_search: [f64; 2],
}

impl fmt::Debug for SturmLiouvilleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SturmLiouvilleSpec")
            .field("r", &self.r)
            .field("mode_cutoff", &self.mode_cutoff)
            .field("k_gap", &self.k_gap)
            .field("r_bound", &self.r_bound)
            .finish()
    }
}

impl SturmLiouvilleSpec {
    pub fn new(
        r: usize,
        param_dim: usize,
        a_eval: CoefficientMap,
        mode_cutoff: usize,
        k_gap: usize,
        r_bound: f64,
    ) -> Result<Self> {
        if r == 0 {
            return Err(Error::Config("fiber rank must be positive".into()));
        }
        if mode_cutoff < k_gap + 1 {
            return Err(Error::Config(format!(
                "mode cutoff {mode_cutoff} must be at least k_gap + 1 = {}",
                k_gap + 1
            )));
        }
        Ok(SturmLiouvilleSpec {
            r,
            param_dim,
            a_eval,
            mode_cutoff,
            k_gap,
            r_bound,
            re_search: default_re_search(),
        })
    }

    /// Constant coefficient `a(y) = mu * I_r`.
    pub fn constant_scalar(r: usize, mu: f64, mode_cutoff: usize, k_gap: usize, r_bound: f64) -> Result<Self> {
        let a = CMatrix::identity(r, r) * C64::new(mu, 0.0);
        Self::new(r, 1, Arc::new(move |_| a.clone()), mode_cutoff, k_gap, r_bound)
    }

    /// `a(y) = sum_t y^{e_t} A_t` with Hermitian `A_t`.
    pub fn from_terms(
        r: usize,
        param_dim: usize,
        terms: Vec<(Vec<u32>, CMatrix)>,
        mode_cutoff: usize,
        k_gap: usize,
        r_bound: f64,
    ) -> Result<Self> {
        for (_, m) in &terms {
            if m.shape() != (r, r) {
                return Err(Error::Input(format!("coefficient is {:?}, expected {r}x{r}", m.shape())));
            }
            if linalg::max_abs(&(m - m.adjoint())) > 1e-12 {
                return Err(Error::Config("coefficient matrix a(y) must be self-adjoint".into()));
            }
        }
        let a = move |y: &[f64]| {
            let mut acc = CMatrix::zeros(r, r);
            for (p, m) in &terms {
                acc += m * C64::new(monomial(y, p), 0.0);
            }
            acc
        };
        Self::new(r, param_dim, Arc::new(a), mode_cutoff, k_gap, r_bound)
    }

    pub fn n(&self) -> usize {
        self.r * self.mode_cutoff
    }

    pub fn a(&self, y: &[f64]) -> Result<CMatrix> {
        let a = (self.a_eval)(y);
        if a.shape() != (self.r, self.r) {
            return Err(Error::Input("a(y) has the wrong shape".into()));
        }
        if linalg::max_abs(&(&a - a.adjoint())) > 1e-12 {
            return Err(Error::Config(format!("a(y) not self-adjoint at y = {y:?}")));
        }
        Ok(a)
    }

    /// Operator norm of `a(y)` must stay below `r_bound` on the given samples.
    pub fn check_bound(&self, ys: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for y in ys {
            let nrm = linalg::norm2(&self.a(y)?);
            worst = worst.max(nrm);
            if nrm >= self.r_bound {
                return Err(Error::Config(format!(
                    "|a(y)| = {nrm} >= r_bound = {} at y = {y:?}",
                    self.r_bound
                )));
            }
        }
        Ok(worst)
    }

    /// Strip `|Im sigma| < sqrt(k^2 + k + 1/2)`; requires `k > (2 r - 1)/2`.
    pub fn sigma_strip(&self) -> Result<SigmaRegion> {
        let k = self.k_gap as f64;
        if !(k > (2.0 * self.r_bound - 1.0) / 2.0) {
            return Err(Error::Config(format!(
                "k_gap = {} does not separate the mode bands for r_bound = {}",
                self.k_gap, self.r_bound
            )));
        }
        let h = (k * k + k + 0.5).sqrt();
        Ok(SigmaRegion::Strip {
            im: [-h, h],
            re_search: self.re_search,
        })
    }

    /// Block diagonal `k^2 I_r + a(y) + sigma^2 I_r`, `k = 1..=mode_cutoff`.
    pub fn assemble(&self, y: &[f64], sigma: C64) -> Result<CMatrix> {
        let a = self.a(y)?;
        Ok(assemble_blocks(&a, self.r, self.mode_cutoff, sigma))
    }

    pub fn chart(&self) -> Result<FamilyChart> {
        let sigma = self.sigma_strip()?;
        let spec = self.clone();
        let r = self.r;
        let kmax = self.mode_cutoff;
        Ok(FamilyChart::new(
            "sturm_liouville",
            self.n(),
            self.param_dim,
            sigma,
            Arc::new(move |y, s| assemble_blocks(&(spec.a_eval)(y), r, kmax, s)),
        ))
    }
}

fn assemble_blocks(a: &CMatrix, r: usize, kmax: usize, sigma: C64) -> CMatrix {
    let n = r * kmax;
    let mut m = CMatrix::zeros(n, n);
    let s2 = sigma * sigma;
    for k in 1..=kmax {
        let off = (k - 1) * r;
        m.view_mut((off, off), (r, r)).copy_from(a);
        for i in 0..r {
            m[(off + i, off + i)] += s2 + (k * k) as f64;
        }
    }
    m
}
