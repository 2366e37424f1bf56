//! Experiment orchestration for the torus Euler semiflow laboratory:
//! scenario configs, ensemble construction with shift/continuation closure,
//! the acceptance suite, and plot-ready tabular outputs.

pub mod config;
pub mod ensemble;
pub mod rng;
pub mod scenario;
pub mod suite;
pub mod tables;

/// Honor the `SEMIFLOW_THREADS` cap once per process; later calls are no-ops.
pub fn init_thread_pool() {
    if let Ok(value) = std::env::var("SEMIFLOW_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}
