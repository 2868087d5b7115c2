//! In-process emulation of distributed dense linear algebra.
//!
//! A [`Cluster`] is a fixed pool of worker threads arranged in a 2-d grid.
//! Matrices are held as [`BlockMatrix`] values whose blocks are owned by
//! individual workers; whenever a worker needs a block it does not own, the
//! transfer is recorded by the cluster's counter. Operations are collective:
//! every worker takes part and the call returns once all have finished.

mod decompose;
mod grid;
mod matrix;
mod qft;

use thiserror::Error;

use crate::matlin::{CMatrix, Factorization, LinalgBackend, LinalgError, RankPolicy, SplitMethod};

pub use decompose::psplit_decompose;
pub use grid::{qft_origin, TransferCounter, TransferStats, WorkerGrid};
pub use matrix::{pmatmul, BlockMatrix, SplitPair, BLOCK};
pub use qft::{distributed_qft_contract, DistributedQft};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("worker count {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("operands live on different worker grids")]
    GridMismatch,
    #[error("shapes {left:?} and {right:?} are not conformable")]
    Shape {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("split pair halves have different layouts")]
    Misaligned,
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A pool of `n_proc` workers on a [`WorkerGrid`] with a transfer counter.
pub struct Cluster {
    grid: WorkerGrid,
    pool: rayon::ThreadPool,
    counter: TransferCounter,
}

impl std::fmt::Debug for Cluster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cluster").field("grid", &self.grid).finish()
    }
}

impl Cluster {
    pub fn new(n_proc: usize) -> Result<Self, BlockError> {
        Self::with_grid(WorkerGrid::new(n_proc)?)
    }

    pub fn with_grid(grid: WorkerGrid) -> Result<Self, BlockError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(grid.n_proc())
            .thread_name(|i| format!("worker-{i}"))
            .build()
            .map_err(|e| BlockError::Pool(e.to_string()))?;
        Ok(Self {
            grid,
            pool,
            counter: TransferCounter::new(grid.n_proc()),
        })
    }

    pub fn grid(&self) -> WorkerGrid {
        self.grid
    }

    pub fn n_proc(&self) -> usize {
        self.grid.n_proc()
    }

    pub fn counter(&self) -> &TransferCounter {
        &self.counter
    }

    pub fn transfers(&self) -> TransferStats {
        self.counter.snapshot()
    }

    /// Runs `f` inside the worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl LinalgBackend for Cluster {
    fn matmul(&self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
        let da = BlockMatrix::distribute(a, self.grid, (0, 0));
        let db = BlockMatrix::distribute(b, self.grid, (0, 0));
        match pmatmul(self, &da, &db) {
            Ok(c) => Ok(c.gather()),
            Err(BlockError::Linalg(e)) => Err(e),
            Err(BlockError::Shape { left, right }) => Err(LinalgError::DimensionMismatch {
                op: "pmatmul",
                left,
                right,
            }),
            Err(e) => Err(LinalgError::Backend(e.to_string())),
        }
    }

    fn factorize(
        &self,
        a: &CMatrix,
        method: SplitMethod,
        policy: &RankPolicy,
    ) -> Result<Factorization, LinalgError> {
        decompose::cluster_factorize(self, a, method, policy).map_err(|e| match e {
            BlockError::Linalg(e) => e,
            other => LinalgError::Backend(other.to_string()),
        })
    }

    fn workers(&self) -> usize {
        self.n_proc()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlin::{matmul, C64};

    #[test]
    fn cluster_backend_matches_serial_bitwise() {
        let a = CMatrix::from_fn(37, 21, |r, c| C64::new((r * c) as f64 * 0.01, r as f64 - c as f64));
        let b = CMatrix::from_fn(21, 45, |r, c| C64::new((r + c) as f64 * 0.1, 1.0 / (1 + r + c) as f64));
        let serial = matmul(&a, &b).unwrap();
        for n in [1, 2, 4, 8] {
            let cluster = Cluster::new(n).unwrap();
            assert_eq!(LinalgBackend::matmul(&cluster, &a, &b).unwrap(), serial);
        }
        let cluster = Cluster::new(2).unwrap();
        assert!(LinalgBackend::matmul(&cluster, &a, &a).is_err());
    }
}
