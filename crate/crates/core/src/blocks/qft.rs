//! Contraction QFT with the growing qudit spread over the cluster.
//!
//! The qudit is held as segments of consecutive rows, one per leading bit
//! pattern of the row index (at most one segment per worker). A segment whose
//! index starts with bits `b` is rooted on the worker `qft_origin(b)`. Each
//! absorption multiplies every segment by the two branch matrices of the new
//! site, applies the phase and Hadamard of the new qubit in place, and then
//! regroups the rows under the new leading bits.

use std::collections::BTreeMap;

use crate::circuit::{absorb_bytes, msb_first_chain, qft_phase, CircuitError};
use crate::matlin::{CMatrix, LinalgError, C64};
use crate::mps::MpsState;

use super::grid::TransferStats;
use super::matrix::{owner_of, BLOCK};
use super::{pmatmul, qft_origin, BlockError, BlockMatrix, Cluster, SplitPair};

const SCALAR_BYTES: u64 = std::mem::size_of::<C64>() as u64;

/// Result of [`distributed_qft_contract`].
#[derive(Debug, Clone)]
pub struct DistributedQft {
    /// Amplitudes indexed by the output value.
    pub amplitudes: Vec<C64>,
    /// Entries of the final qudit held by each worker.
    pub final_entries_per_worker: Vec<usize>,
    /// Bytes moved while applying the phase and Hadamard gates.
    pub local_gate_bytes: u64,
    /// All communication during the transform.
    pub transfers: TransferStats,
}

fn to_circuit(e: BlockError) -> CircuitError {
    match e {
        BlockError::Linalg(e) => e.into(),
        other => LinalgError::Backend(other.to_string()).into(),
    }
}

fn prefix_bits(index: usize, width: usize) -> Vec<u8> {
    (0..width).rev().map(|b| ((index >> b) & 1) as u8).collect()
}

fn segment_origin(cluster: &Cluster, segment: usize, segments: usize) -> Result<usize, CircuitError> {
    let width = segments.trailing_zeros() as usize;
    qft_origin(&prefix_bits(segment, width), cluster.n_proc()).map_err(to_circuit)
}

/// QFT by contraction on the cluster; same arithmetic as
/// [`crate::circuit::qft_contract`], so the amplitudes agree bit for bit.
/// Site tensors start out on worker 0.
pub fn distributed_qft_contract(
    cluster: &Cluster,
    state: &MpsState,
    memory_cap_bytes: u64,
) -> Result<DistributedQft, CircuitError> {
    let chain = msb_first_chain(state)?;
    let grid = cluster.grid();
    let n_proc = cluster.n_proc();
    let counter = cluster.counter();
    let start = cluster.transfers();
    let mut local_gate_bytes = 0u64;

    let g0 = CMatrix::scalar_identity(1, C64::new(chain.global_norm, 0.0));
    let mut segments = vec![BlockMatrix::distribute_from_rank(&g0, grid, 0)];

    for site in &chain.sites {
        let half: usize = segments.iter().map(|s| s.shape().0).sum();
        let needed = absorb_bytes(half, site.bond_right());
        if needed > memory_cap_bytes as u128 {
            return Err(CircuitError::Capacity {
                stage: "qft",
                needed_bytes: needed,
                cap_bytes: memory_cap_bytes,
            });
        }
        let seg_rows = half / segments.len();
        let bond = site.bond_right();

        let mut plus = Vec::with_capacity(segments.len());
        let mut minus = Vec::with_capacity(segments.len());
        for (s, g) in segments.iter().enumerate() {
            let load = |m: &CMatrix| {
                let d = BlockMatrix::distribute(m, grid, g.origin());
                for bi in 0..d.block_rows() {
                    for bj in 0..d.block_cols() {
                        let h = BLOCK.min(m.rows() - bi * BLOCK);
                        let w = BLOCK.min(m.cols() - bj * BLOCK);
                        counter.record(0, d.owner(bi, bj), (h * w) as u64 * SCALAR_BYTES);
                    }
                }
                d
            };
            let a0 = load(&site.mats[0]);
            let a1 = load(&site.mats[1]);
            let x0 = pmatmul(cluster, g, &a0).map_err(to_circuit)?;
            let x1 = pmatmul(cluster, g, &a1).map_err(to_circuit)?;
            let pair = SplitPair::new(x0, x1).map_err(to_circuit)?;
            let before = cluster.transfers();
            let offset = s * seg_rows;
            let pair = pair
                .apply_row_phase_local(cluster, |h| qft_phase(offset + h, half))
                .apply_h_local(cluster);
            local_gate_bytes += cluster.transfers().since(&before).bytes;
            plus.push(pair.x0);
            minus.push(pair.x1);
        }

        // Regroup: new row index is `bit * half + old row`.
        let rows = 2 * half;
        let n_new = n_proc.min(rows);
        let new_rows = rows / n_new;
        let dense: Vec<CMatrix> = plus.iter().chain(minus.iter()).map(BlockMatrix::gather).collect();
        let source = |g: usize| {
            let (branch, local) = (g / half, g % half);
            let s = local / seg_rows;
            (branch * segments.len() + s, local % seg_rows)
        };
        let sources: Vec<&BlockMatrix> = plus.iter().chain(minus.iter()).collect();
        let block_cols = bond.div_ceil(BLOCK);
        let mut next = Vec::with_capacity(n_new);
        for s_new in 0..n_new {
            let rank = segment_origin(cluster, s_new, n_new)?;
            let origin = grid.coords(rank);
            let mut m = CMatrix::zeros(new_rows, bond);
            let mut moved: BTreeMap<(usize, usize), u64> = BTreeMap::new();
            for r in 0..new_rows {
                let (src, local) = source(s_new * new_rows + r);
                m.as_mut_slice()[r * bond..(r + 1) * bond].copy_from_slice(dense[src].row(local));
                for bj in 0..block_cols {
                    let from = sources[src].owner(local / BLOCK, bj);
                    let to = owner_of(grid, origin, r / BLOCK, bj);
                    if from != to {
                        let w = BLOCK.min(bond - bj * BLOCK) as u64;
                        *moved.entry((from, to)).or_default() += w * SCALAR_BYTES;
                    }
                }
            }
            for ((from, to), bytes) in moved {
                counter.record(from, to, bytes);
            }
            next.push(BlockMatrix::distribute(&m, grid, origin));
        }
        segments = next;
    }

    let mut final_entries_per_worker = vec![0usize; n_proc];
    let mut amplitudes = Vec::new();
    for seg in &segments {
        for (w, e) in seg.entries_per_worker().into_iter().enumerate() {
            final_entries_per_worker[w] += e;
        }
        amplitudes.extend(seg.gather().into_vec());
    }
    Ok(DistributedQft {
        amplitudes,
        final_entries_per_worker,
        local_gate_bytes,
        transfers: cluster.transfers().since(&start),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::qft_contract;
    use crate::matlin::{Serial, SplitMethod};
    use crate::mps::Decomposer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> MpsState {
        let qubits: Vec<[C64; 2]> = (0..n)
            .map(|_| {
                let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let b = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let s = (a.norm_sqr() + b.norm_sqr()).sqrt();
                [a / s, b / s]
            })
            .collect();
        let mut s = MpsState::product_state(&qubits);
        let dec = Decomposer::serial(SplitMethod::Svd);
        for i in 0..n - 1 {
            s.contract_pair(i).unwrap();
            s.sites[i].mats[3].scale(C64::from_polar(1.0, rng.gen_range(0.0..3.0)));
            s.split_site(i, 2, 2, &dec).unwrap();
        }
        s
    }

    #[test]
    fn matches_serial_contraction_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let s = random_chain(&mut rng, 11);
        let serial = qft_contract(&s, &Serial, 1 << 30).unwrap();
        for n_proc in [1, 2, 4, 8] {
            let cluster = Cluster::new(n_proc).unwrap();
            let out = distributed_qft_contract(&cluster, &s, 1 << 30).unwrap();
            assert_eq!(out.amplitudes, serial, "n_proc {n_proc}");
            assert_eq!(out.local_gate_bytes, 0);
            let total: usize = out.final_entries_per_worker.iter().sum();
            assert_eq!(total, 1 << 11);
            for e in &out.final_entries_per_worker {
                let share = *e as f64 / total as f64;
                assert!(share >= 0.5 / n_proc as f64 && share <= 2.0 / n_proc as f64);
            }
            if n_proc > 1 {
                assert!(out.transfers.bytes > 0);
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let s = random_chain(&mut rng, 8);
        let cluster = Cluster::new(2).unwrap();
        assert!(matches!(
            distributed_qft_contract(&cluster, &s, 100),
            Err(CircuitError::Capacity { .. })
        ));
    }
}
