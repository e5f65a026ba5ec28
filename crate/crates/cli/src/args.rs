//! Parsers for the small textual argument formats.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use sut_core::Dof;

use crate::CliError;

/// `lo:hi:steps`, evenly spaced and inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + h * i as f64).collect()
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts.as_slice() else {
            return Err(format!("grid '{s}' is not lo:hi:steps"));
        };
        let lo = parse_f64(lo)?;
        let hi = parse_f64(hi)?;
        let steps: usize = steps.trim().parse().map_err(|_| format!("bad step count '{steps}'"))?;
        if steps == 0 || !(hi >= lo) {
            return Err(format!("grid '{s}' needs steps ≥ 1 and hi ≥ lo"));
        }
        Ok(Self { lo, hi, steps })
    }
}

/// `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Some((lo, hi)) = s.split_once(':') else {
            return Err(format!("range '{s}' is not lo:hi"));
        };
        let (lo, hi) = (parse_f64(lo)?, parse_f64(hi)?);
        if !(hi > lo) {
            return Err(format!("range '{s}' needs hi > lo"));
        }
        Ok(Self { lo, hi })
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

pub fn vector(s: &str) -> Result<DVector<f64>, CliError> {
    let v = s
        .split(',')
        .map(parse_f64)
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Input)?;
    Ok(DVector::from_vec(v))
}

/// Rows separated by `;`, entries by `,`.
pub fn matrix(s: &str) -> Result<DMatrix<f64>, CliError> {
    let rows: Vec<DVector<f64>> = s.split(';').map(vector).collect::<Result<_, _>>()?;
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(CliError::Input(format!("matrix '{s}' has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

pub fn dof(s: &str) -> Result<Dof, CliError> {
    match s.trim() {
        "inf" | "Inf" | "infinity" => Ok(Dof::Infinite),
        t => match t.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Dof::Finite(v)),
            _ => Err(CliError::Input(format!("degrees of freedom '{s}' must be positive or inf"))),
        },
    }
}

pub fn permutation(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::Input(format!("bad permutation entry '{t}'"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: GridSpec = "-1:1:5".parse().unwrap();
        assert_eq!(g.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!("2:2:1".parse::<GridSpec>().unwrap().values(), vec![2.0]);
        assert!("1:0:3".parse::<GridSpec>().is_err());
        assert!("1:2".parse::<GridSpec>().is_err());
        assert!("0:1:0".parse::<GridSpec>().is_err());
    }

    #[test]
    fn matrix_parsing() {
        let a = matrix("1,2;3,4").unwrap();
        assert_eq!(a[(1, 0)], 3.0);
        assert!(matrix("1,2;3").is_err());
        assert_eq!(dof("inf").unwrap(), Dof::Infinite);
        assert!(dof("-2").is_err());
    }
}
