//! Many independent simulation runs. With the `parallel` feature the runs are
//! spread over a rayon pool; results always come back in input order.

use crate::error::ConfigError;
use crate::sim::{run_simulation_with, MetricsReport, RunOptions, SampleRow, SimConfig};

pub type RunResult = Result<(MetricsReport, Vec<SampleRow>), ConfigError>;

/// Applies `f` to every item, in parallel when the `parallel` feature is on.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn run_batch(configs: &[SimConfig], opts: RunOptions) -> Vec<RunResult> {
    map(configs, |c| run_simulation_with(c, opts))
}

/// Always sequential; the reference the parallel path is measured against.
pub fn run_batch_sequential(configs: &[SimConfig], opts: RunOptions) -> Vec<RunResult> {
    configs.iter().map(|c| run_simulation_with(c, opts)).collect()
}
