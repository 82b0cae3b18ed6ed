use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{fmt_g17, json_g17};
use crate::points::Points;

/// An ordered list of codewords together with the setting it was produced in.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub points: Points,
    /// Label of the similarity the codebook was trained under.
    pub label: String,
    pub r: f64,
    pub distortion: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct CodebookJson {
    divergence: String,
    r: f64,
    n: usize,
    dim: usize,
    distortion: Option<f64>,
    iterations: Option<usize>,
    points: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(points: Points, label: impl Into<String>, r: f64) -> Self {
        Self {
            points,
            label: label.into(),
            r,
            distortion: None,
            iterations: None,
        }
    }

    /// Level `n`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// One codeword per line, comma separated, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in self.points.iter() {
            let row: Vec<String> = p.iter().map(|v| fmt_g17(*v)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str, label: impl Into<String>, r: f64) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidParameter(format!("codebook row {}: {e}", i + 1)))?;
            rows.push(row);
        }
        Ok(Self::new(Points::from_rows(&rows)?, label, r))
    }

    pub fn read_csv(path: &Path, label: impl Into<String>, r: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Self::from_csv_str(&text, label, r)
    }

    pub fn to_json(&self) -> String {
        let j = CodebookJson {
            divergence: self.label.clone(),
            r: self.r,
            n: self.len(),
            dim: self.dim(),
            distortion: self.distortion,
            iterations: self.iterations,
            points: self.points.to_rows(),
        };
        json_g17(&j)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: CodebookJson = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("codebook JSON: {e}")))?;
        let points = if j.points.is_empty() {
            Points::new(j.dim.max(1))
        } else {
            Points::from_rows(&j.points)?
        };
        Ok(Self {
            points,
            label: j.divergence,
            r: j.r,
            distortion: j.distortion,
            iterations: j.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_round_trip() {
        let mut cb = Codebook::new(
            Points::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-7, 4.0]]).unwrap(),
            "sq-euclid",
            2.0,
        );
        cb.distortion = Some(0.125);
        cb.iterations = Some(7);
        let back = Codebook::from_csv_str(&cb.to_csv(), "sq-euclid", 2.0).unwrap();
        assert_eq!(back.points, cb.points);
        assert_eq!(Codebook::from_json(&cb.to_json()).unwrap(), cb);
        assert!(Codebook::from_csv_str("1,x\n", "l", 2.0).is_err());
    }
}
