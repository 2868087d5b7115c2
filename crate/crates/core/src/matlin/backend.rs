use super::{factorize, matmul, CMatrix, Factorization, LinalgError, RankPolicy, SplitMethod};

/// Where the dense linear algebra of a simulation runs.
pub trait LinalgBackend: Sync {
    fn matmul(&self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError>;

    fn factorize(
        &self,
        a: &CMatrix,
        method: SplitMethod,
        policy: &RankPolicy,
    ) -> Result<Factorization, LinalgError>;

    /// Number of workers taking part in each operation.
    fn workers(&self) -> usize {
        1
    }
}

/// Single-threaded backend built on the plain [`matmul`] and [`factorize`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl LinalgBackend for Serial {
    fn matmul(&self, a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
        matmul(a, b)
    }

    fn factorize(
        &self,
        a: &CMatrix,
        method: SplitMethod,
        policy: &RankPolicy,
    ) -> Result<Factorization, LinalgError> {
        factorize(a, method, policy)
    }
}
