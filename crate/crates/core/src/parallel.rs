//! Process-wide switch for batch-level data parallelism inside kernels.
//!
//! Parallel kernels partition work per batch item and reduce partial
//! weight gradients in a fixed order, but the reduction tree differs from
//! the serial path. Disable parallelism for bit-exact reproducibility.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::SeqCst);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::SeqCst) && rayon::current_num_threads() > 1
}
