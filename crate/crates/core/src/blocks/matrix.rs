use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use crate::matlin::{gemm_acc, CMatrix, C64, ZERO};

use super::{BlockError, Cluster, WorkerGrid};

/// Edge length of the square blocks.
pub const BLOCK: usize = 16;

const SCALAR_BYTES: u64 = std::mem::size_of::<C64>() as u64;

/// A dense matrix cut into `BLOCK x BLOCK` blocks (smaller at the edges)
/// dealt cyclically over a worker grid: block `(I, J)` lives on worker
/// `((I + origin_row) mod rows, (J + origin_col) mod cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    rows: usize,
    cols: usize,
    grid: WorkerGrid,
    origin: (usize, usize),
    /// Blocks held by each worker, keyed by block coordinates.
    stores: Vec<BTreeMap<(usize, usize), CMatrix>>,
}

impl BlockMatrix {
    /// Distributes `a` with the block `(0, 0)` on the worker at grid position `origin`.
    pub fn distribute(a: &CMatrix, grid: WorkerGrid, origin: (usize, usize)) -> Self {
        let mut stores = vec![BTreeMap::new(); grid.n_proc()];
        let (br, bc) = (a.rows().div_ceil(BLOCK), a.cols().div_ceil(BLOCK));
        for bi in 0..br {
            for bj in 0..bc {
                let (r0, c0) = (bi * BLOCK, bj * BLOCK);
                let block = a.submatrix(r0, c0, BLOCK.min(a.rows() - r0), BLOCK.min(a.cols() - c0));
                let w = owner_of(grid, origin, bi, bj);
                stores[w].insert((bi, bj), block);
            }
        }
        Self {
            rows: a.rows(),
            cols: a.cols(),
            grid,
            origin: (origin.0 % grid.rows, origin.1 % grid.cols),
            stores,
        }
    }

    /// Distributes `a` with its origin on the worker of rank `origin_rank`.
    pub fn distribute_from_rank(a: &CMatrix, grid: WorkerGrid, origin_rank: usize) -> Self {
        Self::distribute(a, grid, grid.coords(origin_rank % grid.n_proc()))
    }

    pub fn gather(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows, self.cols);
        for store in &self.stores {
            for (&(bi, bj), block) in store {
                out.set_submatrix(bi * BLOCK, bj * BLOCK, block);
            }
        }
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn grid(&self) -> WorkerGrid {
        self.grid
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn block_rows(&self) -> usize {
        self.rows.div_ceil(BLOCK)
    }

    pub fn block_cols(&self) -> usize {
        self.cols.div_ceil(BLOCK)
    }

    pub fn owner(&self, bi: usize, bj: usize) -> usize {
        owner_of(self.grid, self.origin, bi, bj)
    }

    /// Number of matrix entries held by each worker.
    pub fn entries_per_worker(&self) -> Vec<usize> {
        self.stores
            .iter()
            .map(|s| s.values().map(CMatrix::len).sum())
            .collect()
    }

    /// Same shape, grid and origin.
    pub fn aligned_with(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.grid == other.grid
            && self.origin == other.origin
    }

    fn block(&self, bi: usize, bj: usize) -> &CMatrix {
        &self.stores[self.owner(bi, bj)][&(bi, bj)]
    }
}

pub(crate) fn owner_of(grid: WorkerGrid, origin: (usize, usize), bi: usize, bj: usize) -> usize {
    grid.rank((bi + origin.0) % grid.rows, (bj + origin.1) % grid.cols)
}

/// `a * b` on the cluster. Each worker computes the blocks of the product it
/// owns (the product takes `a`'s origin) from a full row strip of `a` and
/// column strip of `b`, fetching and counting any blocks held elsewhere.
/// Entries are accumulated in increasing inner index, exactly as in
/// [`crate::matlin::matmul`].
pub fn pmatmul(cluster: &Cluster, a: &BlockMatrix, b: &BlockMatrix) -> Result<BlockMatrix, BlockError> {
    if a.grid != cluster.grid() || b.grid != cluster.grid() {
        return Err(BlockError::GridMismatch);
    }
    if a.cols != b.rows {
        return Err(BlockError::Shape {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let grid = cluster.grid();
    let origin = a.origin;
    let (br, bc, bk) = (a.block_rows(), b.block_cols(), a.block_cols());
    let (m, n, k) = (a.rows, b.cols, a.cols);
    let counter = cluster.counter();
    let stores: Vec<BTreeMap<(usize, usize), CMatrix>> = cluster.install(|| {
        (0..grid.n_proc())
            .into_par_iter()
            .map(|w| {
                let mut fetched: HashSet<(bool, usize, usize)> = HashSet::new();
                let mut fetch = |is_a: bool, mat: &BlockMatrix, bi: usize, bj: usize| {
                    let src = mat.owner(bi, bj);
                    if src != w && fetched.insert((is_a, bi, bj)) {
                        counter.record(src, w, mat.block(bi, bj).len() as u64 * SCALAR_BYTES);
                    }
                };
                let mut out = BTreeMap::new();
                for bi in 0..br {
                    for bj in 0..bc {
                        if owner_of(grid, origin, bi, bj) != w {
                            continue;
                        }
                        let h = BLOCK.min(m - bi * BLOCK);
                        let wd = BLOCK.min(n - bj * BLOCK);
                        let mut a_strip = vec![ZERO; h * k];
                        let mut b_strip = vec![ZERO; k * wd];
                        for kb in 0..bk {
                            fetch(true, a, bi, kb);
                            fetch(false, b, kb, bj);
                            let ab = a.block(bi, kb);
                            let bb = b.block(kb, bj);
                            let k0 = kb * BLOCK;
                            for r in 0..h {
                                a_strip[r * k + k0..r * k + k0 + ab.cols()].copy_from_slice(ab.row(r));
                            }
                            for r in 0..bb.rows() {
                                b_strip[(k0 + r) * wd..(k0 + r + 1) * wd].copy_from_slice(bb.row(r));
                            }
                        }
                        let mut c = vec![ZERO; h * wd];
                        gemm_acc(&mut c, &a_strip, &b_strip, h, k, wd);
                        out.insert((bi, bj), CMatrix::from_vec(h, wd, c).expect("block shape"));
                    }
                }
                out
            })
            .collect()
    });
    let result = BlockMatrix {
        rows: m,
        cols: n,
        grid,
        origin,
        stores,
    };
    Ok(result)
}

/// The two halves of a qudit split on its most significant basis bit:
/// `x0` holds the rows for bit value 0, `x1` for bit value 1, with identical
/// layouts so that every worker holds matching rows of both.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub x0: BlockMatrix,
    pub x1: BlockMatrix,
}

impl SplitPair {
    pub fn new(x0: BlockMatrix, x1: BlockMatrix) -> Result<Self, BlockError> {
        if !x0.aligned_with(&x1) {
            return Err(BlockError::Misaligned);
        }
        Ok(Self { x0, x1 })
    }

    fn map_local(
        mut self,
        cluster: &Cluster,
        f: impl Fn(usize, usize, &mut CMatrix, &mut CMatrix) + Sync,
    ) -> Self {
        let x1_stores = std::mem::take(&mut self.x1.stores);
        let x0_stores = std::mem::take(&mut self.x0.stores);
        let (new0, new1): (Vec<_>, Vec<_>) = cluster.install(|| {
            x0_stores
                .into_par_iter()
                .zip(x1_stores)
                .map(|(mut s0, mut s1)| {
                    for (key, b0) in s0.iter_mut() {
                        let b1 = s1.get_mut(key).expect("aligned layouts");
                        f(key.0, key.1, b0, b1);
                    }
                    (s0, s1)
                })
                .unzip()
        });
        self.x0.stores = new0;
        self.x1.stores = new1;
        self
    }

    /// Hadamard on the splitting bit: `(x0 + x1) / sqrt 2`, `(x0 - x1) / sqrt 2`.
    /// Each worker combines the blocks it already holds.
    pub fn apply_h_local(self, cluster: &Cluster) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.map_local(cluster, |_, _, b0, b1| {
            for (p, q) in b0.as_mut_slice().iter_mut().zip(b1.as_mut_slice()) {
                let (a, b) = (*p, *q);
                *p = (a + b) * s;
                *q = (a - b) * s;
            }
        })
    }

    /// Multiplies row `h` of `x1` by `phase(h)`, where `h` is the global row index.
    pub fn apply_row_phase_local(self, cluster: &Cluster, phase: impl Fn(usize) -> C64 + Sync) -> Self {
        self.map_local(cluster, |bi, _, _, b1| {
            let cols = b1.cols();
            for r in 0..b1.rows() {
                let w = phase(bi * BLOCK + r);
                for v in &mut b1.as_mut_slice()[r * cols..(r + 1) * cols] {
                    *v *= w;
                }
            }
        })
    }
}
