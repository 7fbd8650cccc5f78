use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The matting error functions available for similarity measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Mad,
    Mse,
    Grad,
    Conn,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 4] = [ErrorKind::Mad, ErrorKind::Mse, ErrorKind::Grad, ErrorKind::Conn];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Mad => "mad",
            ErrorKind::Mse => "mse",
            ErrorKind::Grad => "grad",
            ErrorKind::Conn => "conn",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mad" | "sad" => Ok(ErrorKind::Mad),
            "mse" => Ok(ErrorKind::Mse),
            "grad" | "gradient" => Ok(ErrorKind::Grad),
            "conn" | "connectivity" => Ok(ErrorKind::Conn),
            other => Err(Error::Usage(format!("unknown error kind '{other}'"))),
        }
    }
}

/// How per-image results are combined into a dataset score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Score each image, then take the arithmetic mean.
    #[default]
    Mean,
    /// Sum TP/FP/FN counts and similarities across images, then score once.
    Pooled,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "per-image-mean" => Ok(Aggregation::Mean),
            "pooled" => Ok(Aggregation::Pooled),
            other => Err(Error::Usage(format!("unknown aggregation '{other}'"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Pooled => "pooled",
        })
    }
}

/// Parameters of the instance matting quality metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImqConfig {
    /// Balance factor of the similarity score.
    pub w: f64,
    /// A matched pair is a true positive when its IoU is strictly above this.
    pub iou_threshold: f64,
    pub error_kinds: Vec<ErrorKind>,
    /// Scale of the Gaussian-derivative filters of the gradient error.
    pub grad_sigma: f64,
    /// Threshold step of the connectivity sweep.
    pub conn_step: f64,
    pub aggregation: Aggregation,
}

impl Default for ImqConfig {
    fn default() -> Self {
        Self {
            w: 10.0,
            iou_threshold: 0.5,
            error_kinds: ErrorKind::ALL.to_vec(),
            grad_sigma: 1.4,
            conn_step: 0.1,
            aggregation: Aggregation::Mean,
        }
    }
}

impl ImqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::Usage(format!("w must be positive, got {}", self.w)));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Usage(format!(
                "iou threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.error_kinds.is_empty() {
            return Err(Error::Usage("at least one error kind is required".into()));
        }
        if !(self.grad_sigma > 0.0 && self.grad_sigma.is_finite()) {
            return Err(Error::Usage(format!(
                "grad sigma must be positive, got {}",
                self.grad_sigma
            )));
        }
        if !(self.conn_step > 0.0 && self.conn_step < 1.0) {
            return Err(Error::Usage(format!(
                "conn step must lie in (0, 1), got {}",
                self.conn_step
            )));
        }
        Ok(())
    }
}

/// Parses a comma-separated list such as `mad,mse`.
pub fn parse_error_kinds(list: &str) -> Result<Vec<ErrorKind>> {
    let mut kinds = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let kind: ErrorKind = part.parse()?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(Error::Usage("empty error kind list".into()));
    }
    Ok(kinds)
}
