use crate::matlin::{
    CMatrix, Factorization, LinalgBackend, RankPolicy, Serial, SplitMethod, C64, ONE, ZERO,
};

use super::{MpsError, MpsState, SiteLabel, SiteTensor, SparseBasis};

static SERIAL: Serial = Serial;

/// Backend, method and rank policy used whenever a site has to be split.
#[derive(Clone, Copy)]
pub struct Decomposer<'a> {
    pub backend: &'a dyn LinalgBackend,
    pub method: SplitMethod,
    pub policy: RankPolicy,
}

impl std::fmt::Debug for Decomposer<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Decomposer")
            .field("workers", &self.backend.workers())
            .field("method", &self.method)
            .field("policy", &self.policy)
            .finish()
    }
}

impl Decomposer<'static> {
    pub fn serial(method: SplitMethod) -> Self {
        Self {
            backend: &SERIAL,
            method,
            policy: RankPolicy::default(),
        }
    }
}

impl<'a> Decomposer<'a> {
    pub fn new(backend: &'a dyn LinalgBackend, method: SplitMethod, policy: RankPolicy) -> Self {
        Self {
            backend,
            method,
            policy,
        }
    }

    pub fn with_method(self, method: SplitMethod) -> Self {
        Self { method, ..self }
    }

    fn factorize(&self, a: &CMatrix) -> Result<Factorization, MpsError> {
        Ok(self.backend.factorize(a, self.method, &self.policy)?)
    }
}

/// Maximum deviation of `g† g` from the identity.
pub fn unitarity_defect(g: &CMatrix) -> f64 {
    let n = g.rows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += g[(k, i)].conj() * g[(k, j)];
            }
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((acc - target).norm());
        }
    }
    worst
}

const UNITARY_TOLERANCE: f64 = 1e-10;

impl MpsState {
    /// `|q_0 q_1 ...>|lower_value>` with every bond of dimension one.
    ///
    /// Site `i` is control qubit `q_i` in state `qubits[i]`; the lower register
    /// is the rightmost site.
    pub fn basis_state(qubits: &[u8], lower_value: u64, bits: u32) -> Result<Self, MpsError> {
        if bits < 64 && lower_value >> bits != 0 {
            return Err(MpsError::LowerValueOutOfRange {
                value: lower_value,
                bits,
            });
        }
        let mut sites: Vec<SiteTensor> = qubits
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                let mats = (0..2)
                    .map(|a| CMatrix::scalar_identity(1, if a == q as usize { ONE } else { ZERO }))
                    .collect();
                SiteTensor::new(SiteLabel::Qubit(i), mats)
            })
            .collect();
        let mut basis = SparseBasis::new(bits);
        basis.insert(lower_value);
        sites.push(SiteTensor::new(SiteLabel::Lower, vec![CMatrix::identity(1)]));
        Ok(Self {
            sites,
            lower: Some(basis),
            global_norm: 1.0,
        })
    }

    /// Product state of qubits `q_0 .. q_{n-1}` with the given single-qubit
    /// amplitudes and no lower register.
    pub fn product_state(qubits: &[[C64; 2]]) -> Self {
        let sites = qubits
            .iter()
            .enumerate()
            .map(|(i, amp)| {
                let mats = amp.iter().map(|&a| CMatrix::scalar_identity(1, a)).collect();
                SiteTensor::new(SiteLabel::Qubit(i), mats)
            })
            .collect();
        Self {
            sites,
            lower: None,
            global_norm: 1.0,
        }
    }

    fn check_position(&self, i: usize) -> Result<(), MpsError> {
        if i >= self.sites.len() {
            return Err(MpsError::PositionOutOfRange {
                position: i,
                len: self.sites.len(),
            });
        }
        Ok(())
    }

    /// Amplitude for one local basis index per site (the lower register is
    /// indexed by its column, not its value).
    pub fn amplitude(&self, indices: &[usize]) -> Result<C64, MpsError> {
        if indices.len() != self.sites.len() {
            return Err(MpsError::BasisLength {
                expected: self.sites.len(),
                got: indices.len(),
            });
        }
        let mut row: Vec<C64> = vec![ONE];
        for (pos, (site, &a)) in self.sites.iter().zip(indices).enumerate() {
            if a >= site.dim() {
                return Err(MpsError::BasisIndex {
                    position: pos,
                    index: a,
                    dim: site.dim(),
                });
            }
            row = row_times(&row, &site.mats[a]);
        }
        Ok(row[0] * self.global_norm)
    }

    /// Amplitude of `|q>|b>` where `upper[t]` is the value of qubit `q_t` and
    /// `lower_value` the value of the lower register. Values outside the sparse
    /// basis have amplitude exactly zero.
    pub fn amplitude_of(&self, upper: &[u8], lower_value: Option<u64>) -> Result<C64, MpsError> {
        let mut indices = Vec::with_capacity(self.sites.len());
        for site in &self.sites {
            let mut idx = 0usize;
            for (label, d) in &site.parts {
                let local = match label {
                    SiteLabel::Qubit(t) => *upper.get(*t).ok_or(MpsError::BasisLength {
                        expected: t + 1,
                        got: upper.len(),
                    })? as usize,
                    SiteLabel::Lower => {
                        let basis = self.lower.as_ref().ok_or(MpsError::NoLowerRegister)?;
                        match lower_value.and_then(|v| basis.position(v)) {
                            Some(j) => j,
                            None => return Ok(ZERO),
                        }
                    }
                    SiteLabel::Anonymous => {
                        return Err(MpsError::Malformed("anonymous site in amplitude lookup".into()))
                    }
                };
                idx = idx * d + local;
            }
            indices.push(idx);
        }
        self.amplitude(&indices)
    }

    /// Squared norm of the represented state.
    pub fn norm_squared(&self, backend: &dyn LinalgBackend) -> Result<f64, MpsError> {
        let mut env = CMatrix::identity(1);
        for site in &self.sites {
            let mut next = CMatrix::zeros(site.bond_right(), site.bond_right());
            for m in &site.mats {
                let t = backend.matmul(&env, m)?;
                let term = backend.matmul(&m.adjoint(), &t)?;
                for (x, y) in next.as_mut_slice().iter_mut().zip(term.as_slice()) {
                    *x += y;
                }
            }
            env = next;
        }
        Ok(env[(0, 0)].re * self.global_norm * self.global_norm)
    }

    /// Replaces sites `i` and `i + 1` by one site with matrices `A_a B_b`
    /// at combined index `a * d_{i+1} + b`.
    pub fn contract_pair(&mut self, i: usize) -> Result<(), MpsError> {
        self.contract_pair_with(i, &SERIAL)
    }

    pub fn contract_pair_with(&mut self, i: usize, backend: &dyn LinalgBackend) -> Result<(), MpsError> {
        self.check_position(i + 1)?;
        let right = self.sites.remove(i + 1);
        let left = &mut self.sites[i];
        let mut mats = Vec::with_capacity(left.dim() * right.dim());
        for a in &left.mats {
            for b in &right.mats {
                mats.push(backend.matmul(a, b)?);
            }
        }
        left.mats = mats;
        left.parts.extend(right.parts);
        Ok(())
    }

    /// Splits site `i` of dimension `d1 * d2` into two sites of dimensions
    /// `d1` and `d2`; returns the new bond dimension.
    ///
    /// The matrices `D_ab` are arranged as one `(d1 Dl) x (d2 Dr)` matrix with
    /// row block `a` and column block `b`, which is then factorised.
    pub fn split_site(
        &mut self,
        i: usize,
        d1: usize,
        d2: usize,
        dec: &Decomposer<'_>,
    ) -> Result<usize, MpsError> {
        self.check_position(i)?;
        let site = &self.sites[i];
        if d1 == 0 || d2 == 0 || d1 * d2 != site.dim() {
            return Err(MpsError::SplitMismatch {
                dim: site.dim(),
                left: d1,
                right: d2,
            });
        }
        let (dl, dr) = (site.bond_left(), site.bond_right());
        let mut arranged = CMatrix::zeros(d1 * dl, d2 * dr);
        for a in 0..d1 {
            for b in 0..d2 {
                arranged.set_submatrix(a * dl, b * dr, &site.mats[a * d2 + b]);
            }
        }
        let f = dec.factorize(&arranged)?;
        let k = f.bond();
        let left_mats = (0..d1).map(|a| f.left.submatrix(a * dl, 0, dl, k)).collect();
        let right_mats = (0..d2).map(|b| f.right.submatrix(0, b * dr, k, dr)).collect();
        let (left_parts, right_parts) = split_parts(&site.parts, d1, d2);
        self.sites[i] = SiteTensor {
            parts: left_parts,
            mats: left_mats,
        };
        self.sites.insert(
            i + 1,
            SiteTensor {
                parts: right_parts,
                mats: right_mats,
            },
        );
        Ok(k)
    }

    /// `mats[a] <- sum_b g[a, b] mats[b]` on site `i`.
    pub fn apply_single_site_gate(
        &mut self,
        i: usize,
        g: &CMatrix,
        check_unitary: bool,
    ) -> Result<(), MpsError> {
        self.check_position(i)?;
        let site = &mut self.sites[i];
        let d = site.dim();
        if g.rows() != d || g.cols() != d {
            return Err(MpsError::GateDimension {
                gate: g.rows().max(g.cols()),
                site: d,
            });
        }
        if check_unitary {
            let deviation = unitarity_defect(g);
            if deviation > UNITARY_TOLERANCE {
                return Err(MpsError::NonUnitary { deviation });
            }
        }
        let old = std::mem::take(&mut site.mats);
        let (rows, cols) = old[0].shape();
        let mut new = Vec::with_capacity(d);
        for a in 0..d {
            let mut m = CMatrix::zeros(rows, cols);
            for (b, src) in old.iter().enumerate() {
                let c = g[(a, b)];
                if c == ZERO {
                    continue;
                }
                if c == ONE {
                    for (x, y) in m.as_mut_slice().iter_mut().zip(src.as_slice()) {
                        *x += y;
                    }
                } else {
                    for (x, y) in m.as_mut_slice().iter_mut().zip(src.as_slice()) {
                        *x += c * y;
                    }
                }
            }
            new.push(m);
        }
        site.mats = new;
        Ok(())
    }

    /// Exchanges sites `i` and `i + 1`; returns the new bond dimension between them.
    pub fn swap_adjacent(&mut self, i: usize, dec: &Decomposer<'_>) -> Result<usize, MpsError> {
        self.check_position(i + 1)?;
        let (d1, d2) = (self.sites[i].dim(), self.sites[i + 1].dim());
        self.contract_pair_with(i, dec.backend)?;
        self.exchange_and_split(i, d1, d2, dec)
    }

    /// Takes a site holding two factors of dimensions `d1` (left) and `d2`
    /// (right) and splits it with the factors in the opposite order.
    pub fn exchange_and_split(
        &mut self,
        i: usize,
        d1: usize,
        d2: usize,
        dec: &Decomposer<'_>,
    ) -> Result<usize, MpsError> {
        self.check_position(i)?;
        let site = &mut self.sites[i];
        if d1 * d2 != site.dim() {
            return Err(MpsError::SplitMismatch {
                dim: site.dim(),
                left: d1,
                right: d2,
            });
        }
        let mut old: Vec<Option<CMatrix>> = std::mem::take(&mut site.mats).into_iter().map(Some).collect();
        site.mats = (0..d1 * d2)
            .map(|j| {
                let (b, a) = (j / d1, j % d1);
                old[a * d2 + b].take().expect("each entry used once")
            })
            .collect();
        let (left_parts, right_parts) = split_parts(&site.parts, d1, d2);
        site.parts = right_parts.into_iter().chain(left_parts).collect();
        self.split_site(i, d2, d1, dec)
    }

    /// Moves the site at `from` so that it ends up at position `to`.
    ///
    /// A site whose matrices are all scalar multiples of the identity is
    /// lifted out and re-inserted with identities of the destination bond
    /// dimension; no decomposition takes place and no bond changes. Other
    /// sites travel by adjacent swaps. Returns whether the scalar path was used.
    pub fn move_site(&mut self, from: usize, to: usize, dec: &Decomposer<'_>) -> Result<bool, MpsError> {
        self.check_position(from)?;
        self.check_position(to)?;
        if from == to {
            return Ok(true);
        }
        if let Some(coeffs) = self.sites[from].scalar_coefficients() {
            let site = self.sites.remove(from);
            let bond = if to == 0 { 1 } else { self.sites[to - 1].bond_right() };
            let mats = coeffs.into_iter().map(|c| CMatrix::scalar_identity(bond, c)).collect();
            self.sites.insert(
                to,
                SiteTensor {
                    parts: site.parts,
                    mats,
                },
            );
            return Ok(true);
        }
        if from < to {
            for i in from..to {
                self.swap_adjacent(i, dec)?;
            }
        } else {
            for i in (to..from).rev() {
                self.swap_adjacent(i, dec)?;
            }
        }
        Ok(false)
    }

    /// Right-to-left pass that factorises each site's `[A_0 | A_1 | ...]`
    /// and pushes the left factor into the neighbouring site, reducing every
    /// bond to the numeric rank found there.
    pub fn sweep_compress(&mut self, dec: &Decomposer<'_>) -> Result<(), MpsError> {
        for j in (1..self.sites.len()).rev() {
            let site = &self.sites[j];
            let (dl, dr, d) = (site.bond_left(), site.bond_right(), site.dim());
            let wide = CMatrix::hstack(&site.mats)?;
            let f = dec.factorize(&wide)?;
            let k = f.bond();
            if k == dl && f.rank == dl {
                continue;
            }
            self.sites[j].mats = (0..d).map(|a| f.right.submatrix(0, a * dr, k, dr)).collect();
            let prev = &mut self.sites[j - 1];
            let mut mats = Vec::with_capacity(prev.dim());
            for m in &prev.mats {
                mats.push(dec.backend.matmul(m, &f.left)?);
            }
            prev.mats = mats;
        }
        Ok(())
    }

    /// Reverses the chain (transposing every matrix).
    pub fn reverse(&mut self) {
        self.sites.reverse();
        for site in &mut self.sites {
            for m in &mut site.mats {
                *m = m.transpose();
            }
        }
    }

    /// Dense amplitude vector. Qubit `q_t` is bit `t` of the index; the lower
    /// register value (if present) occupies the bits above the upper register.
    pub fn to_dense(&self, max_amplitudes: usize) -> Result<Vec<C64>, MpsError> {
        let mut n_upper = 0usize;
        for site in &self.sites {
            for (label, _) in &site.parts {
                match label {
                    SiteLabel::Qubit(t) => n_upper = n_upper.max(t + 1),
                    SiteLabel::Lower => {}
                    SiteLabel::Anonymous => {
                        return Err(MpsError::Malformed("anonymous site in dense export".into()))
                    }
                }
            }
        }
        let lower_bits = self.lower.as_ref().map_or(0, |b| b.bits) as usize;
        let total_bits = n_upper + lower_bits;
        let total: u128 = 1u128 << total_bits;
        if total > max_amplitudes as u128 {
            return Err(MpsError::TooLarge {
                amplitudes: total,
                limit: max_amplitudes as u128,
            });
        }
        let mut out = vec![ZERO; total as usize];
        // Partial products for every prefix assignment, with the global index
        // accumulated so far.
        let mut partial: Vec<(usize, Vec<C64>)> = vec![(0, vec![C64::new(self.global_norm, 0.0)])];
        for site in &self.sites {
            let mut next = Vec::with_capacity(partial.len() * site.dim());
            for (index, row) in &partial {
                for (a, m) in site.mats.iter().enumerate() {
                    let mut offset = 0usize;
                    let mut rem = a;
                    for (label, d) in site.parts.iter().rev() {
                        let local = rem % d;
                        rem /= d;
                        offset += match label {
                            SiteLabel::Qubit(t) => local << t,
                            SiteLabel::Lower => {
                                let value = self.lower.as_ref().ok_or(MpsError::NoLowerRegister)?.values()[local];
                                (value as usize) << n_upper
                            }
                            SiteLabel::Anonymous => unreachable!(),
                        };
                    }
                    next.push((index + offset, row_times(row, m)));
                }
            }
            partial = next;
        }
        for (index, row) in partial {
            out[index] = row[0];
        }
        Ok(out)
    }
}

fn row_times(row: &[C64], m: &CMatrix) -> Vec<C64> {
    let mut out = vec![ZERO; m.cols()];
    for (r, &x) in row.iter().enumerate() {
        if x == ZERO {
            continue;
        }
        for (o, y) in out.iter_mut().zip(m.row(r)) {
            *o += x * y;
        }
    }
    out
}

fn split_parts(
    parts: &[(SiteLabel, usize)],
    d1: usize,
    d2: usize,
) -> (Vec<(SiteLabel, usize)>, Vec<(SiteLabel, usize)>) {
    let mut acc = 1;
    for cut in 0..=parts.len() {
        if acc == d1 && cut > 0 && cut < parts.len() {
            return (parts[..cut].to_vec(), parts[cut..].to_vec());
        }
        if cut < parts.len() {
            acc *= parts[cut].1;
        }
    }
    (
        vec![(SiteLabel::Anonymous, d1)],
        vec![(SiteLabel::Anonymous, d2)],
    )
}
