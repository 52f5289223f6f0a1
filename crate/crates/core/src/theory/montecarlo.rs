use rayon::prelude::*;

use crate::rng::{stream_rng, streams, Rng};
use crate::stats::RunningStats;

/// Trials per independent random stream. Fixed so results do not depend on
/// the number of worker threads.
pub const CHUNK: u64 = 10_000;

/// Runs `trials` independent evaluations of `trial`, chunk `c` drawing from
/// stream `MONTE_CARLO + c` of `seed`. Partial statistics are merged in
/// chunk order.
pub fn run<F>(seed: u64, trials: u64, trial: F) -> RunningStats
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<RunningStats> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, streams::MONTE_CARLO + c);
            let n = CHUNK.min(trials - c * CHUNK);
            let mut stats = RunningStats::default();
            for _ in 0..n {
                stats.push(trial(&mut rng));
            }
            stats
        })
        .collect();
    parts
        .into_iter()
        .fold(RunningStats::default(), RunningStats::merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn independent_of_thread_count() {
        let f = |r: &mut Rng| r.random::<f64>();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(9, 35_000, f));
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run(9, 35_000, f));
        assert_eq!(one, many);
        assert_eq!(one.count, 35_000);
        assert!((one.mean() - 0.5).abs() < 0.01);
    }
}
