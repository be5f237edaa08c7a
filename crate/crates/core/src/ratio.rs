//! Volume multipliers between two pipeline periods.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::round_to;

/// Ratio of a deployment count to a baseline count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Multiplier {
    Ratio(f64),
    /// Baseline was zero and the deployment is not.
    New,
    /// Both sides zero.
    NotApplicable,
}

impl Multiplier {
    pub fn of(baseline: f64, deployment: f64) -> Self {
        if baseline > 0.0 {
            Multiplier::Ratio(deployment / baseline)
        } else if deployment > 0.0 {
            Multiplier::New
        } else {
            Multiplier::NotApplicable
        }
    }

    pub fn ratio(self) -> Option<f64> {
        match self {
            Multiplier::Ratio(r) => Some(r),
            _ => None,
        }
    }

    pub fn one_decimal(self) -> Option<f64> {
        self.ratio().map(|r| round_to(r, 1))
    }

    pub fn floor(self) -> Option<u64> {
        self.ratio().map(|r| r.floor() as u64)
    }

    pub fn nearest(self) -> Option<u64> {
        self.ratio().map(|r| r.round() as u64)
    }
}

impl fmt::Display for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Multiplier::Ratio(r) => write!(
                f,
                "{:.1}x (floor {}x, nearest {}x)",
                r,
                r.floor() as u64,
                r.round() as u64
            ),
            Multiplier::New => f.write_str("new"),
            Multiplier::NotApplicable => f.write_str("n/a"),
        }
    }
}
