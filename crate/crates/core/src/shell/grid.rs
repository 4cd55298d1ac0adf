//! Parameter grids `a:b:n[,c:d:m]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || count == 0 || (count == 1 && min != max) || (count > 1 && min >= max)
        {
            return Err(Error::Input(format!("bad grid axis {min}:{max}:{count}")));
        }
        Ok(Axis { min, max, count })
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.count)
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::Input(format!("grid axis '{s}' is not min:max:count"));
        match parts.as_slice() {
            [a] => {
                let v: f64 = a.parse().map_err(|_| bad())?;
                Axis::new(v, v, 1)
            }
            [a, b, n] => Axis::new(
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
                n.parse().map_err(|_| bad())?,
            ),
            _ => Err(bad()),
        }
    }
}

/// Tensor grid in one or two parameters, points in row-major order (last
/// axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub axes: Vec<Axis>,
    pub points: Vec<Vec<f64>>,
}

impl ParameterGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Input(format!("grids have 1 or 2 axes, got {}", axes.len())));
        }
        let mut points = vec![Vec::new()];
        for ax in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    (0..ax.count).map(move |i| {
                        let mut q = p.clone();
                        q.push(ax.value(i));
                        q
                    })
                })
                .collect();
        }
        Ok(ParameterGrid { axes, points })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.split(',').map(str::parse).collect::<Result<_>>()?)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index lists of the grid lines along each axis, with that axis's step.
    pub fn lines(&self) -> Vec<(Vec<usize>, f64)> {
        match self.axes.as_slice() {
            [a] => vec![((0..a.count).collect(), a.step())],
            [a, b] => {
                let mut out = Vec::new();
                for i in 0..a.count {
                    out.push(((0..b.count).map(|j| i * b.count + j).collect(), b.step()));
                }
                for j in 0..b.count {
                    out.push(((0..a.count).map(|i| i * b.count + j).collect(), a.step()));
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

impl FromStr for ParameterGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_axis() {
        let g = ParameterGrid::parse("-0.5:0.5:101").unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g.points[0], vec![-0.5]);
        assert_eq!(g.points[100], vec![0.5]);
        assert!((g.points[50][0]).abs() < 1e-15);
        assert_eq!(g.lines().len(), 1);
    }

    #[test]
    fn two_axes() {
        let g = ParameterGrid::parse("0:1:3,-1:1:2").unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.points[1], vec![0.0, 1.0]);
        assert_eq!(g.points[2], vec![0.5, -1.0]);
        let lines = g.lines();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3].0, vec![0, 2, 4]);
    }

    #[test]
    fn single_point_and_errors() {
        assert_eq!(ParameterGrid::parse("0.25").unwrap().points, vec![vec![0.25]]);
        assert!(ParameterGrid::parse("1:0:5").is_err());
        assert!(ParameterGrid::parse("0:1").is_err());
        assert!(ParameterGrid::parse("0:1:3,0:1:3,0:1:3").is_err());
    }
}
