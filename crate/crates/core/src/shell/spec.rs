//! JSON problem specifications.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{self, FamilyChart, MatrixPolynomial, PolyTerm, SigmaRegion, SturmLiouvilleSpec};
use crate::linalg::{CMatrix, C64};
use crate::reduction::{BaseOptions, BASE_RANK_TOL};
use crate::serde_util::{cmatrix, cplx_vec};

use super::grid::ParameterGrid;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    MatrixPolynomial {
        n: usize,
        #[serde(default = "one")]
        param_dim: usize,
        terms: Vec<PolyTerm>,
    },
    SturmLiouville {
        r: usize,
        #[serde(default = "one")]
        param_dim: usize,
        mode_cutoff: usize,
        k_gap: usize,
        r_bound: f64,
        terms: Vec<CoefficientTerm>,
        #[serde(default)]
        re_search: Option<[f64; 2]>,
    },
    Indicial {
        m: usize,
        #[serde(default = "half")]
        gamma: f64,
    },
    Jordan,
    Branching,
    Scalar,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

/// `y^{y_powers} * matrix`, a term of the Sturm-Liouville potential.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTerm {
    #[serde(default)]
    pub y_powers: Vec<u32>,
    #[serde(with = "cmatrix")]
    pub matrix: CMatrix,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePointSpec {
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Validation grid `a:b:n[,c:d:m]`; defaults to the sweep grid.
    #[serde(default)]
    pub u_grid: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default)]
    pub rank_tol: Option<f64>,
    #[serde(default)]
    pub min_separation: Option<f64>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

/// A probe section: the singular part of `P(y, .)^{-1} w` at one cluster,
/// or summed over all clusters when `cluster` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default)]
    pub cluster: Option<usize>,
    #[serde(with = "cplx_vec")]
    pub vector: Vec<C64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: FamilySpec,
    #[serde(default)]
    pub sigma: Option<SigmaRegion>,
    #[serde(default)]
    pub base_point: BasePointSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub probes: Vec<ProbeSpec>,
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn chart(&self) -> Result<FamilyChart> {
        let mut chart = match &self.family {
            FamilySpec::MatrixPolynomial { n, param_dim, terms } => {
                let sigma = self
                    .sigma
                    .ok_or_else(|| Error::Input("matrix_polynomial needs a sigma region".into()))?;
                MatrixPolynomial {
                    n: *n,
                    param_dim: *param_dim,
                    terms: terms.clone(),
                }
                .into_chart("matrix_polynomial", sigma)?
            }
            FamilySpec::SturmLiouville {
                r,
                param_dim,
                mode_cutoff,
                k_gap,
                r_bound,
                terms,
                re_search,
            } => {
                let mut sl = SturmLiouvilleSpec::from_terms(
                    *r,
                    *param_dim,
                    terms.iter().map(|t| (t.y_powers.clone(), t.matrix.clone())).collect(),
                    *mode_cutoff,
                    *k_gap,
                    *r_bound,
                )?;
                if let Some(rs) = re_search {
                    sl.re_search = *rs;
                }
                sl.chart()?
            }
            FamilySpec::Indicial { m, gamma } => family::indicial_family(*m, *gamma)?,
            FamilySpec::Jordan => family::jordan_family(),
            FamilySpec::Branching => family::branching_family(),
            FamilySpec::Scalar => family::scalar_family(),
        };
        if let (Some(sigma), false) = (self.sigma, matches!(self.family, FamilySpec::MatrixPolynomial { .. })) {
            chart.sigma = sigma;
        }
        Ok(chart)
    }

    /// The Sturm-Liouville data, when the family is of that kind; used to
    /// check the potential bound on parameter grids.
    pub fn sturm_liouville(&self) -> Result<Option<SturmLiouvilleSpec>> {
        match &self.family {
            FamilySpec::SturmLiouville {
                r,
                param_dim,
                mode_cutoff,
                k_gap,
                r_bound,
                terms,
                ..
            } => Ok(Some(SturmLiouvilleSpec::from_terms(
                *r,
                *param_dim,
                terms.iter().map(|t| (t.y_powers.clone(), t.matrix.clone())).collect(),
                *mode_cutoff,
                *k_gap,
                *r_bound,
            )?)),
            _ => Ok(None),
        }
    }

    pub fn y0(&self, chart: &FamilyChart) -> Result<Vec<f64>> {
        let y0 = self
            .base_point
            .y0
            .clone()
            .unwrap_or_else(|| vec![0.0; chart.param_dim]);
        if y0.len() != chart.param_dim {
            return Err(Error::Input(format!(
                "y0 has dimension {}, family expects {}",
                y0.len(),
                chart.param_dim
            )));
        }
        Ok(y0)
    }

    pub fn nodes(&self) -> usize {
        self.tolerances.nodes.unwrap_or(crate::contour::DEFAULT_NODES)
    }

    /// Base-point options; `grid` (when given) becomes the validation grid
    /// unless the spec names its own.
    pub fn base_options(&self, grid: Option<&ParameterGrid>) -> Result<BaseOptions> {
        let u_grid = match (&self.base_point.u_grid, grid) {
            (Some(text), _) => ParameterGrid::parse(text)?.points,
            (None, Some(g)) => g.points.clone(),
            (None, None) => Vec::new(),
        };
        Ok(BaseOptions {
            rank_tol: self.tolerances.rank_tol.unwrap_or(BASE_RANK_TOL),
            min_separation: self.tolerances.min_separation,
            eps: self.base_point.epsilon,
            u_grid,
            ..Default::default()
        })
    }
}
