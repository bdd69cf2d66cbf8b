use serde::{Deserialize, Serialize};

use super::config::EngineKind;
use crate::datatypes::DataTypeKind;

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsReport {
    pub engine: EngineKind,
    pub data_type: DataTypeKind,
    pub seed: u64,
    pub n_ops: u64,
    pub remove_ratio: f64,
    pub total_payload_bytes: u64,
    pub message_count: u64,
    /// Mean over sync-round samples of the mean live-replica size.
    pub avg_replica_bytes: f64,
    pub quiescent: bool,
    pub oracle_match: bool,
    /// Live replicas return equal query results.
    pub equivalent: bool,
    /// Point-to-point durability traffic, also included in `totalPayloadBytes`.
    pub durability_bytes: u64,
    pub broadcast_count: u64,
    /// Final metered size per replica; `None` for crashed replicas.
    pub final_replica_bytes: Vec<Option<u64>>,
    pub cascade_rounds: u64,
}

pub const CSV_HEADER: [&str; 10] = [
    "engine",
    "dataType",
    "seed",
    "nOps",
    "removeRatio",
    "totalPayloadBytes",
    "messageCount",
    "avgReplicaBytes",
    "quiescent",
    "oracleMatch",
];

impl MetricsReport {
    pub fn passed(&self) -> bool {
        self.quiescent && self.oracle_match && self.equivalent
    }

    pub fn csv_record(&self) -> [String; 10] {
        [
            self.engine.to_string(),
            self.data_type.to_string(),
            self.seed.to_string(),
            self.n_ops.to_string(),
            self.remove_ratio.to_string(),
            self.total_payload_bytes.to_string(),
            self.message_count.to_string(),
            format!("{:.2}", self.avg_replica_bytes),
            self.quiescent.to_string(),
            self.oracle_match.to_string(),
        ]
    }
}

/// One per-round sample for the plot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleRow {
    pub engine: EngineKind,
    pub data_type: DataTypeKind,
    pub seed: u64,
    pub n_ops: u64,
    pub remove_ratio: f64,
    pub ops_executed: u64,
    pub cumulative_payload_bytes: u64,
    pub avg_replica_bytes: f64,
}

pub const SAMPLE_HEADER: [&str; 8] = [
    "engine",
    "dataType",
    "seed",
    "nOps",
    "removeRatio",
    "opsExecuted",
    "cumulativePayloadBytes",
    "avgReplicaBytes",
];

impl SampleRow {
    pub fn csv_record(&self) -> [String; 8] {
        [
            self.engine.to_string(),
            self.data_type.to_string(),
            self.seed.to_string(),
            self.n_ops.to_string(),
            self.remove_ratio.to_string(),
            self.ops_executed.to_string(),
            self.cumulative_payload_bytes.to_string(),
            format!("{:.2}", self.avg_replica_bytes),
        ]
    }
}
