use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable capping the worker count of parallel stages.
pub const THREADS_ENV: &str = "SALBENCH_THREADS";

/// Builds the worker pool for parallel stages, honouring `SALBENCH_THREADS`.
///
/// An unset, empty or unparsable value falls back to rayon's default.
pub fn thread_pool() -> ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut builder = ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder.build().expect("failed to start worker pool")
}
