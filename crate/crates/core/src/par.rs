//! Data-parallel helpers. Work fans out only inside [`with_workers`] with
//! more than one worker (and only when the `parallel` feature is on);
//! everywhere else the same closures run in index order on the calling
//! thread. Results are always returned in index order.

#[cfg(feature = "parallel")]
mod imp {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    use rayon::prelude::*;

    fn pool(workers: usize) -> Arc<rayon::ThreadPool> {
        static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
        let mut pools = POOLS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
        pools
            .entry(workers)
            .or_insert_with(|| {
                Arc::new(rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool"))
            })
            .clone()
    }

    pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
        if workers > 1 {
            pool(workers).install(f)
        } else {
            f()
        }
    }

    pub fn map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        if rayon::current_thread_index().is_some() && rayon::current_num_threads() > 1 {
            (0..n).into_par_iter().map(f).collect()
        } else {
            (0..n).map(f).collect()
        }
    }

    pub fn available() -> usize {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn with_workers<R: Send>(_workers: usize, f: impl FnOnce() -> R + Send) -> R {
        f()
    }

    pub fn map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        (0..n).map(f).collect()
    }

    pub fn available() -> usize {
        1
    }
}

pub use imp::{available, map, with_workers};

/// Like [`map`], stopping at the first error in index order.
pub fn try_map<T: Send, E: Send>(n: usize, f: impl Fn(usize) -> Result<T, E> + Sync + Send) -> Result<Vec<T>, E> {
    map(n, f).into_iter().collect()
}
