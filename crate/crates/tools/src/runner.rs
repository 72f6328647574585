use lesion_core::rng::ReplicateRunner;
use rayon::prelude::*;

/// Runs replicates on the rayon pool; results come back in index order.
#[derive(Debug, Default, Clone, Copy)]
pub struct Parallel;

impl ReplicateRunner for Parallel {
    fn run<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).into_par_iter().map(f).collect()
    }
}
