//! Configuration, scenario dispatch and artifact output for `rowfault-lab`.

pub mod config;
pub mod run;

pub use config::{ExperimentConfig, Scenario};
pub use run::{run, Artifact, Run, RunReport};

/// Runs `f` on a dedicated pool of `jobs` threads, or on the global pool
/// when `jobs` is `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            anyhow::ensure!(n > 0, "--jobs must be at least 1");
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}
