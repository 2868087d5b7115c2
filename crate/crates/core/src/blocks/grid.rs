use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::BlockError;

/// A `rows x cols` arrangement of workers; worker `(r, c)` has rank `r * cols + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkerGrid {
    pub rows: usize,
    pub cols: usize,
}

impl WorkerGrid {
    /// The most square grid for `n_proc` workers, with `rows <= cols`.
    pub fn new(n_proc: usize) -> Result<Self, BlockError> {
        if n_proc == 0 || !n_proc.is_power_of_two() {
            return Err(BlockError::NotPowerOfTwo(n_proc));
        }
        let log = n_proc.trailing_zeros();
        let rows = 1usize << (log / 2);
        Ok(Self {
            rows,
            cols: n_proc / rows,
        })
    }

    pub fn with_shape(rows: usize, cols: usize) -> Result<Self, BlockError> {
        let n = rows * cols;
        if n == 0 || !n.is_power_of_two() {
            return Err(BlockError::NotPowerOfTwo(n));
        }
        Ok(Self { rows, cols })
    }

    pub fn n_proc(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rank(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, rank: usize) -> (usize, usize) {
        (rank / self.cols, rank % self.cols)
    }
}

/// Worker that owns a qudit segment whose index starts with `prefix_bits`
/// (most significant first): the worker whose rank is the number formed by
/// the first `log2(n_proc)` bits.
pub fn qft_origin(prefix_bits: &[u8], n_proc: usize) -> Result<usize, BlockError> {
    if n_proc == 0 || !n_proc.is_power_of_two() {
        return Err(BlockError::NotPowerOfTwo(n_proc));
    }
    let width = n_proc.trailing_zeros() as usize;
    let mut rank = 0usize;
    for i in 0..width {
        rank = (rank << 1) | (*prefix_bits.get(i).unwrap_or(&0) as usize & 1);
    }
    Ok(rank)
}

/// Counters of simulated inter-worker communication.
#[derive(Debug)]
pub struct TransferCounter {
    messages: AtomicU64,
    bytes: AtomicU64,
    received: Vec<AtomicU64>,
}

/// Snapshot of a [`TransferCounter`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferStats {
    pub messages: u64,
    pub bytes: u64,
    /// Bytes received by each worker.
    pub received_bytes: Vec<u64>,
}

impl TransferStats {
    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &TransferStats) -> TransferStats {
        TransferStats {
            messages: self.messages - earlier.messages,
            bytes: self.bytes - earlier.bytes,
            received_bytes: self
                .received_bytes
                .iter()
                .zip(&earlier.received_bytes)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl TransferCounter {
    pub fn new(workers: usize) -> Self {
        Self {
            messages: AtomicU64::new(0),
            bytes: AtomicU64::new(0),
            received: (0..workers).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    /// Records a message of `bytes` from worker `from` to worker `to`;
    /// messages a worker sends to itself are free.
    pub fn record(&self, from: usize, to: usize, bytes: u64) {
        if from == to {
            return;
        }
        self.messages.fetch_add(1, Ordering::Relaxed);
        self.bytes.fetch_add(bytes, Ordering::Relaxed);
        self.received[to].fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TransferStats {
        TransferStats {
            messages: self.messages.load(Ordering::Relaxed),
            bytes: self.bytes.load(Ordering::Relaxed),
            received_bytes: self.received.iter().map(|a| a.load(Ordering::Relaxed)).collect(),
        }
    }
}
