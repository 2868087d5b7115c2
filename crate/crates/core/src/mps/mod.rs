//! Matrix product states over a chain of qudits.
//!
//! A state on sites `s_0 .. s_{n-1}` stores, for every site, one matrix per
//! basis state of that site. The amplitude of a basis state is the product of
//! the selected matrices times [`MpsState::global_norm`]. The leftmost matrices
//! have one row and the rightmost ones have one column.
//!
//! The lower (work) register of the order-finding circuit is kept as a single
//! site whose basis is the sparse set of values it can actually hold, see
//! [`SparseBasis`].

mod ops;
mod trace;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matlin::{CMatrix, LinalgError};

pub use ops::{unitarity_defect, Decomposer};
pub use trace::{RankTrace, TraceRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpsError {
    #[error("site position {position} out of range for a chain of {len} sites")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("lower register value {value} does not fit in {bits} bits")]
    LowerValueOutOfRange { value: u64, bits: u32 },
    #[error("site of dimension {dim} cannot be split into {left} x {right}")]
    SplitMismatch { dim: usize, left: usize, right: usize },
    #[error("gate of dimension {gate} does not act on a site of dimension {site}")]
    GateDimension { gate: usize, site: usize },
    #[error("gate is not unitary (max deviation {deviation:e})")]
    NonUnitary { deviation: f64 },
    #[error("basis index {index} out of range for site {position} of dimension {dim}")]
    BasisIndex { position: usize, index: usize, dim: usize },
    #[error("expected {expected} basis indices, got {got}")]
    BasisLength { expected: usize, got: usize },
    #[error("state has {amplitudes} amplitudes, above the limit of {limit}")]
    TooLarge { amplitudes: u128, limit: u128 },
    #[error("chain has no lower register site")]
    NoLowerRegister,
    #[error("malformed chain: {0}")]
    Malformed(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Logical identity of one factor of a site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteLabel {
    /// Control qubit `q_i` of the upper register.
    Qubit(usize),
    /// The lower register, indexed by the columns of a [`SparseBasis`].
    Lower,
    /// A factor whose identity was lost by an uneven split.
    Anonymous,
}

/// One site of the chain: `mats[a]` is the matrix for local basis state `a`.
///
/// A site created by contraction carries several labelled factors; the local
/// index is then the mixed-radix number formed by the factors' indices with
/// the first factor most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    pub parts: Vec<(SiteLabel, usize)>,
    pub mats: Vec<CMatrix>,
}

impl SiteTensor {
    pub fn new(label: SiteLabel, mats: Vec<CMatrix>) -> Self {
        let d = mats.len();
        Self {
            parts: vec![(label, d)],
            mats,
        }
    }

    pub fn dim(&self) -> usize {
        self.mats.len()
    }

    pub fn bond_left(&self) -> usize {
        self.mats[0].rows()
    }

    pub fn bond_right(&self) -> usize {
        self.mats[0].cols()
    }

    /// The label when the site consists of exactly one factor.
    pub fn label(&self) -> Option<&SiteLabel> {
        match self.parts.as_slice() {
            [(label, _)] => Some(label),
            _ => None,
        }
    }

    pub fn stored_scalars(&self) -> usize {
        self.mats.iter().map(CMatrix::len).sum()
    }

    pub fn nonzero_scalars(&self) -> usize {
        self.mats.iter().map(CMatrix::count_nonzero).sum()
    }

    /// `Some(c)` with `mats[a] = c[a] * I` for every `a`.
    pub fn scalar_coefficients(&self) -> Option<Vec<crate::matlin::C64>> {
        self.mats
            .iter()
            .map(CMatrix::scalar_multiple_of_identity)
            .collect()
    }
}

/// The set of lower-register values with a non-zero amplitude, in the order
/// they were first produced. Column `j` of the lower site stands for `values[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseBasis {
    pub bits: u32,
    values: Vec<u64>,
    #[serde(skip)]
    index: HashMap<u64, usize>,
}

impl SparseBasis {
    pub fn new(bits: u32) -> Self {
        Self {
            bits,
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Index of `value`, appending it if it is new.
    pub fn insert(&mut self, value: u64) -> usize {
        if let Some(&i) = self.index.get(&value) {
            return i;
        }
        let i = self.values.len();
        self.values.push(value);
        self.index.insert(value, i);
        i
    }

    pub fn position(&self, value: u64) -> Option<usize> {
        self.index.get(&value).copied()
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsState {
    pub sites: Vec<SiteTensor>,
    /// Basis of the lower register site, if the chain still has one.
    pub lower: Option<SparseBasis>,
    pub global_norm: f64,
}

impl MpsState {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn position_of(&self, label: &SiteLabel) -> Option<usize> {
        self.sites.iter().position(|s| s.label() == Some(label))
    }

    /// Bond dimensions including the two outer unit bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.sites.len() + 1);
        if let Some(first) = self.sites.first() {
            dims.push(first.bond_left());
        }
        dims.extend(self.sites.iter().map(SiteTensor::bond_right));
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Number of complex scalars held in site matrices.
    pub fn stored_scalars(&self) -> usize {
        self.sites.iter().map(SiteTensor::stored_scalars).sum()
    }

    /// Number of non-zero complex scalars held in site matrices.
    pub fn nonzero_scalars(&self) -> usize {
        self.sites.iter().map(SiteTensor::nonzero_scalars).sum()
    }

    /// Checks bond consistency and matrix shapes.
    pub fn validate(&self) -> Result<(), MpsError> {
        let Some(first) = self.sites.first() else {
            return Err(MpsError::Malformed("empty chain".into()));
        };
        if first.bond_left() != 1 {
            return Err(MpsError::Malformed("leftmost bond is not 1".into()));
        }
        if self.sites.last().unwrap().bond_right() != 1 {
            return Err(MpsError::Malformed("rightmost bond is not 1".into()));
        }
        for (i, site) in self.sites.iter().enumerate() {
            if site.mats.is_empty() {
                return Err(MpsError::Malformed(format!("site {i} has no matrices")));
            }
            let shape = site.mats[0].shape();
            if site.mats.iter().any(|m| m.shape() != shape) {
                return Err(MpsError::Malformed(format!("site {i} has mixed shapes")));
            }
            let product: usize = site.parts.iter().map(|p| p.1).product();
            if product != site.dim() {
                return Err(MpsError::Malformed(format!("site {i} labels do not match its dimension")));
            }
            if i + 1 < self.sites.len() && site.bond_right() != self.sites[i + 1].bond_left() {
                return Err(MpsError::Malformed(format!("bond mismatch after site {i}")));
            }
        }
        Ok(())
    }
}
