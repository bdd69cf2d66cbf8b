//! The four non-uniform CRDTs.

mod histogram;
pub mod rank;
mod top_sum;
mod topk;
mod topk_rmv;

pub use histogram::{Histogram, HistogramOp, HistogramPrepare, HistogramState};
pub use top_sum::{TopSum, TopSumOp, TopSumPrepare, TopSumState};
pub use topk::{TopK, TopKOp, TopKState};
pub use topk_rmv::{ENTRY_SIZE, Entry, TopKRmv, TopKRmvOp, TopKRmvPrepare, TopKRmvState};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which data type a simulation or check runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataTypeKind {
    #[serde(rename = "topk-rmv")]
    TopKRmv,
    #[serde(rename = "top-sum")]
    TopSum,
    #[serde(rename = "topk")]
    TopK,
    #[serde(rename = "histogram")]
    Histogram,
}

impl DataTypeKind {
    pub const ALL: [DataTypeKind; 4] =
        [DataTypeKind::TopKRmv, DataTypeKind::TopSum, DataTypeKind::TopK, DataTypeKind::Histogram];

    pub fn as_str(self) -> &'static str {
        match self {
            DataTypeKind::TopKRmv => "topk-rmv",
            DataTypeKind::TopSum => "top-sum",
            DataTypeKind::TopK => "topk",
            DataTypeKind::Histogram => "histogram",
        }
    }
}

impl fmt::Display for DataTypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataTypeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataTypeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown data type `{s}` (expected topk-rmv, top-sum, topk or histogram)"))
    }
}
