//! Decompositions with their inner loops spread over the cluster.
//!
//! Columns are dealt to workers in blocks of [`BLOCK`] columns, cyclically.
//! For the SVD each rotation of a round is carried out by the owner of its
//! first column; for the pivoted QR every worker applies each reflector to
//! the trailing columns it owns. The arithmetic per column is the same as
//! in the serial routines, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::matlin::{
    factorize, reflect, rotate_pair, rrqr_with, svd_with, CMatrix, Factorization, JacobiTolerance,
    RankPolicy, Reflector, SplitMethod, C64,
};

use super::matrix::BLOCK;
use super::{BlockError, BlockMatrix, Cluster};

const SCALAR_BYTES: u64 = std::mem::size_of::<C64>() as u64;

fn column_owner(c: usize, workers: usize) -> usize {
    (c / BLOCK) % workers
}

/// Factorises a distributed matrix; the factors come back with the input's layout origin.
pub fn psplit_decompose(
    cluster: &Cluster,
    d: &BlockMatrix,
    method: SplitMethod,
    policy: &RankPolicy,
) -> Result<(BlockMatrix, BlockMatrix, usize), BlockError> {
    if d.grid() != cluster.grid() {
        return Err(BlockError::GridMismatch);
    }
    let f = cluster_factorize(cluster, &d.gather(), method, policy)?;
    let origin = d.origin();
    Ok((
        BlockMatrix::distribute(&f.left, cluster.grid(), origin),
        BlockMatrix::distribute(&f.right, cluster.grid(), origin),
        f.rank,
    ))
}

pub(crate) fn cluster_factorize(
    cluster: &Cluster,
    a: &CMatrix,
    method: SplitMethod,
    policy: &RankPolicy,
) -> Result<Factorization, BlockError> {
    let workers = cluster.n_proc();
    let counter = cluster.counter();
    match method {
        SplitMethod::Trivial => Ok(factorize(a, method, policy)?),
        SplitMethod::Svd => {
            let mut run_round = |pairs: &[(usize, usize)],
                                 w: &mut [Vec<C64>],
                                 v: &mut [Vec<C64>],
                                 norms: &mut [f64],
                                 tol: JacobiTolerance|
             -> bool {
                let mut w_refs: Vec<Option<&mut Vec<C64>>> = w.iter_mut().map(Some).collect();
                let mut v_refs: Vec<Option<&mut Vec<C64>>> = v.iter_mut().map(Some).collect();
                let mut n_refs: Vec<Option<&mut f64>> = norms.iter_mut().map(Some).collect();
                let mut tasks: Vec<Vec<_>> = (0..workers).map(|_| Vec::new()).collect();
                for &(p, q) in pairs {
                    let owner = column_owner(p, workers);
                    let partner = column_owner(q, workers);
                    tasks[owner].push((
                        partner,
                        w_refs[p].take().unwrap(),
                        w_refs[q].take().unwrap(),
                        v_refs[p].take().unwrap(),
                        v_refs[q].take().unwrap(),
                        n_refs[p].take().unwrap(),
                        n_refs[q].take().unwrap(),
                    ));
                }
                cluster.install(|| {
                    tasks
                        .into_par_iter()
                        .enumerate()
                        .map(|(owner, list)| {
                            let mut rotated = false;
                            for (partner, wp, wq, vp, vq, np, nq) in list {
                                let bytes = (wq.len() + vq.len()) as u64 * SCALAR_BYTES;
                                // Partner column travels to the owner and back.
                                counter.record(partner, owner, bytes);
                                counter.record(owner, partner, bytes);
                                rotated |= rotate_pair(wp, wq, vp, vq, np, nq, tol);
                            }
                            rotated
                        })
                        .reduce(|| false, |a, b| a | b)
                })
            };
            Ok(svd_with(a, policy, &mut run_round)?.into_factorization())
        }
        SplitMethod::Rrqr => {
            let mut update = |h: &Reflector, j: usize, cols: &mut [Vec<C64>]| {
                let pivot_owner = column_owner(j, workers);
                for w in 0..workers {
                    counter.record(pivot_owner, w, h.v.len() as u64 * SCALAR_BYTES);
                }
                let mut tasks: Vec<Vec<&mut Vec<C64>>> = (0..workers).map(|_| Vec::new()).collect();
                for (offset, col) in cols.iter_mut().enumerate() {
                    tasks[column_owner(j + 1 + offset, workers)].push(col);
                }
                cluster.install(|| {
                    tasks.into_par_iter().for_each(|list| {
                        for col in list {
                            reflect(h, &mut col[j..]);
                        }
                    })
                });
            };
            Ok(rrqr_with(a, policy, &mut update)?.into_factorization())
        }
    }
}
