"""Information-form Gaussians over state sequences.

A state sequence x_{b:e} of ``length`` steps, each of dimension ``block_dim``,
is parameterized by the information vector y = P^-1 m and information matrix
Y = P^-1. For a Markov chain the information matrix is exactly block
tridiagonal, so it is stored as one array of diagonal blocks and one array of
upper off-diagonal blocks (3*length - 2 nonzero blocks in total). Appending a
time step (``info_predict``) and conditioning on a measurement of the final
state (``info_update``) touch only the trailing blocks, which keeps both
operations O(1) in the sequence length.

Solves against Y never form the inverse: a block Cholesky (block Thomas)
factorization is run in natural time order and cached, so the factor of an
extended or re-updated sequence reuses the untouched prefix of its parent.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "FactorizationError",
    "InfoGaussian",
    "info_predict",
    "info_update",
    "recover_mean",
    "marginal_last_step",
    "predictive_likelihood",
    "batch_predictive_loglik",
    "truncate_window",
]

# Schur pivots below this are treated as numerically singular.
PIVOT_TOL = 1e-12

_LOG_2PI = float(np.log(2.0 * np.pi))


class FactorizationError(ValueError):
    """Raised when an information matrix is not numerically positive definite."""


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _chol_block(s: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(_symmetrize(s))
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("information matrix block is not positive definite") from exc
    if float(np.min(np.diag(chol)) ** 2) < PIVOT_TOL:
        raise FactorizationError(f"Cholesky pivot below {PIVOT_TOL:g}")
    return chol


class InfoGaussian:
    """Gaussian over a stacked state sequence, in information form.

    Attributes
    ----------
    y : (length * block_dim,) information vector.
    diag : (length, block_dim, block_dim) diagonal blocks of Y.
    offdiag : (length - 1, block_dim, block_dim) upper off-diagonal blocks
        Y[t, t+1]; the lower blocks are their transposes.

    Instances are immutable value objects; every operation returns a new one.
    """

    __slots__ = ("y", "diag", "offdiag", "_fwd")

    def __init__(self, y, diag, offdiag, _fwd_prefix=None):
        diag = np.asarray(diag, dtype=float)
        offdiag = np.asarray(offdiag, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if diag.ndim != 3 or diag.shape[1] != diag.shape[2]:
            raise ValueError("diag must be (length, n, n)")
        n = diag.shape[1]
        length = diag.shape[0]
        if offdiag.shape != (max(length - 1, 0), n, n):
            raise ValueError("offdiag must be (length - 1, n, n)")
        if y.shape != (length * n,):
            raise ValueError("information vector has wrong dimension")
        self.y = y
        self.diag = diag
        self.offdiag = offdiag
        # Forward factor cache: list of (L_tt, L_below, w_t) per settled step.
        self._fwd = list(_fwd_prefix) if _fwd_prefix else []

    @property
    def length(self) -> int:
        return self.diag.shape[0]

    @property
    def block_dim(self) -> int:
        return self.diag.shape[1]

    @property
    def dim(self) -> int:
        return self.y.shape[0]

    @classmethod
    def from_moments(cls, mean, cov) -> "InfoGaussian":
        """Single-step (length 1) information Gaussian from (mean, covariance)."""
        mean = np.asarray(mean, dtype=float).ravel()
        n = mean.shape[0]
        info = _symmetrize(np.linalg.inv(_symmetrize(np.asarray(cov, dtype=float))))
        return cls(info @ mean, info[None, :, :], np.empty((0, n, n)))

    def dense_matrix(self) -> np.ndarray:
        """Assemble the dense information matrix (tests and debugging)."""
        n, ell = self.block_dim, self.length
        full = np.zeros((ell * n, ell * n))
        for t in range(ell):
            full[t * n : (t + 1) * n, t * n : (t + 1) * n] = self.diag[t]
        for t in range(ell - 1):
            full[t * n : (t + 1) * n, (t + 1) * n : (t + 2) * n] = self.offdiag[t]
            full[(t + 1) * n : (t + 2) * n, t * n : (t + 1) * n] = self.offdiag[t].T
        return full

    def block_pattern(self) -> str:
        """Text grid of the nonzero block structure ('D' diag, 'U'/'L' off, '.')."""
        ell = self.length
        rows = []
        for i in range(ell):
            row = []
            for j in range(ell):
                if i == j:
                    row.append("D")
                elif j == i + 1:
                    row.append("U")
                elif j == i - 1:
                    row.append("L")
                else:
                    row.append(".")
            rows.append(" ".join(row))
        return "\n".join(rows)

    def check_valid(self, rtol: float = 1e-9) -> None:
        """Assert symmetry of the blocks and positive definiteness."""
        for t in range(self.length):
            block = self.diag[t]
            if not np.allclose(block, block.T, rtol=rtol, atol=rtol):
                raise ValueError(f"diagonal block {t} is not symmetric")
        self._forward(self.length)

    # -- internal factorization ------------------------------------------------

    def _forward(self, upto: int):
        """Forward block Cholesky/solve up to block index ``upto`` (exclusive).

        Entry t holds (L_tt, L_{t,t-1}, w_t) with Y = L L^T and L w = y.
        Computed lazily and memoized; children constructed by info_predict /
        info_update inherit the untouched prefix.
        """
        fwd = self._fwd
        n = self.block_dim
        while len(fwd) < upto:
            t = len(fwd)
            yt = self.y[t * n : (t + 1) * n]
            if t == 0:
                ltt = _chol_block(self.diag[0])
                w = solve_triangular(ltt, yt, lower=True, check_finite=False)
                fwd.append((ltt, None, w))
            else:
                l_prev = fwd[t - 1][0]
                x = solve_triangular(l_prev, self.offdiag[t - 1], lower=True, check_finite=False)
                l_below = x.T
                ltt = _chol_block(self.diag[t] - x.T @ x)
                w = solve_triangular(
                    ltt, yt - l_below @ fwd[t - 1][2], lower=True, check_finite=False
                )
                fwd.append((ltt, l_below, w))
        return fwd


def info_predict(g: InfoGaussian, F: np.ndarray, Qinv: np.ndarray) -> InfoGaussian:
    """Append one predicted step under x_{t+1} = F x_t + N(0, Q).

    The information vector gains a zero block; the last diagonal block gains
    F' Q^-1 F; the new off-diagonal block is -F' Q^-1 and the new diagonal
    block is Q^-1. All earlier blocks are untouched, so the matrix stays
    exactly block tridiagonal.
    """
    n = g.block_dim
    F = np.asarray(F, dtype=float)
    Qinv = np.asarray(Qinv, dtype=float)
    if F.shape != (n, n) or Qinv.shape != (n, n):
        raise ValueError("model matrices must match the block dimension")
    ell = g.length
    diag = np.empty((ell + 1, n, n))
    diag[:ell] = g.diag
    diag[ell - 1] = g.diag[ell - 1] + _symmetrize(F.T @ Qinv @ F)
    diag[ell] = Qinv
    offdiag = np.empty((ell, n, n))
    offdiag[: ell - 1] = g.offdiag
    offdiag[ell - 1] = -(F.T @ Qinv)
    y = np.concatenate([g.y, np.zeros(n)])
    return InfoGaussian(y, diag, offdiag, _fwd_prefix=g._forward(ell - 1)[: ell - 1])


def info_update(g: InfoGaussian, H: np.ndarray, Rinv: np.ndarray, z: np.ndarray) -> InfoGaussian:
    """Condition the final step on measurement z = H x_last + N(0, R).

    Only the last diagonal block (+= H' R^-1 H) and the last block of the
    information vector (+= H' R^-1 z) change.
    """
    n = g.block_dim
    H = np.asarray(H, dtype=float)
    Rinv = np.asarray(Rinv, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    if H.shape[1] != n or Rinv.shape != (H.shape[0], H.shape[0]) or z.shape[0] != H.shape[0]:
        raise ValueError("measurement model dimensions do not match")
    ell = g.length
    diag = g.diag.copy()
    diag[ell - 1] = diag[ell - 1] + _symmetrize(H.T @ Rinv @ H)
    y = g.y.copy()
    y[(ell - 1) * n :] += H.T @ (Rinv @ z)
    return InfoGaussian(y, diag, g.offdiag, _fwd_prefix=g._forward(ell - 1)[: ell - 1])


def recover_mean(g: InfoGaussian) -> np.ndarray:
    """Mean of the whole sequence: solve Y x = y by block forward/back substitution."""
    ell, n = g.length, g.block_dim
    fwd = g._forward(ell)
    x = np.empty(ell * n)
    x[(ell - 1) * n :] = solve_triangular(
        fwd[ell - 1][0].T, fwd[ell - 1][2], lower=False, check_finite=False
    )
    for t in range(ell - 2, -1, -1):
        rhs = fwd[t][2] - fwd[t + 1][1].T @ x[(t + 1) * n : (t + 2) * n]
        x[t * n : (t + 1) * n] = solve_triangular(fwd[t][0].T, rhs, lower=False, check_finite=False)
    return x


def marginal_last_step(g: InfoGaussian) -> tuple[np.ndarray, np.ndarray]:
    """Moments (mean, cov) of the final step, by partial state recovery.

    The forward elimination's final Schur complement is the marginal
    information matrix of the last step, so no full solve is needed.
    """
    ell = g.length
    fwd = g._forward(ell)
    ltt, _, w = fwd[ell - 1]
    mean = solve_triangular(ltt.T, w, lower=False, check_finite=False)
    inv_l = solve_triangular(ltt, np.eye(g.block_dim), lower=True, check_finite=False)
    cov = _symmetrize(inv_l.T @ inv_l)
    return mean, cov


def batch_predictive_loglik(g: InfoGaussian, H: np.ndarray, R: np.ndarray, Z) -> np.ndarray:
    """log N(z; H m_last, H P_last H' + R) for every row z of Z at once.

    The innovation covariance and its factor do not depend on z, so scoring a
    whole frame against one sequence costs a single factorization plus one
    batched triangular solve.
    """
    mean, cov = marginal_last_step(g)
    H = np.asarray(H, dtype=float)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    s = _symmetrize(H @ cov @ H.T + np.asarray(R, dtype=float))
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("innovation covariance is not positive definite") from exc
    innov = Z - H @ mean
    alpha = solve_triangular(chol, innov.T, lower=True, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (Z.shape[1] * _LOG_2PI + logdet + np.einsum("ij,ij->j", alpha, alpha))


def predictive_likelihood(g: InfoGaussian, H: np.ndarray, R: np.ndarray, z: np.ndarray) -> float:
    """log N(z; H m_last, H P_last H' + R), the single-measurement evidence."""
    z = np.asarray(z, dtype=float).ravel()
    return float(batch_predictive_loglik(g, H, R, z[None, :])[0])


def truncate_window(g: InfoGaussian, lag: int) -> InfoGaussian:
    """Marginalize out all but the last ``lag`` steps.

    Eliminating the leading blocks replaces the first kept diagonal block by
    its forward Schur complement and the first kept information block by the
    forward-substituted right-hand side; everything later is unchanged. This
    is the optional fixed-lag approximation and is never applied implicitly.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    ell, n = g.length, g.block_dim
    if lag >= ell:
        return g
    cut = ell - lag
    fwd = g._forward(cut + 1)
    ltt = fwd[cut][0]
    diag = g.diag[cut:].copy()
    diag[0] = ltt @ ltt.T
    y = g.y[cut * n :].copy()
    y[:n] = ltt @ fwd[cut][2]
    return InfoGaussian(y, diag, g.offdiag[cut:].copy())
