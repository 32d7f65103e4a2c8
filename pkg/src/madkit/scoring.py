"""Mahalanobis distance scoring against a training scatter estimate.

The scatter of the centered, reduced training block ``D`` with ``T``
columns is ``sigma = D D' / T`` (population normalization, 1/T rather than
1/(T-1)).  Scores are computed through the Cholesky factor with triangular
solves; the inverse of sigma is never formed.  An eigendecomposition view
is provided for diagnostics: with ``xi = V' x`` the squared score equals
``sum_i xi_i^2 / lambda_i``, and splitting that sum at a variance-fraction
cutoff separates the score into leading and tail subspace contributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


class SingularCovarianceError(ValueError):
    """The scatter estimate is not positive definite.

    Signals residual collinearity; re-run VIF pruning with a stricter
    threshold before fitting.
    """


@dataclass
class ScatterFit:
    """Mean, scatter matrix, and its Cholesky factor for scoring.

    ``mu`` is the training mean of the retained variables (kept for
    centering new data); ``sigma = chol @ chol.T`` within rounding.
    """

    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray
    m: int
    t_effective: int


def fit_scatter(centered: np.ndarray, mu: np.ndarray | None = None) -> ScatterFit:
    """Estimate the scoring scatter from a centered ``(m, T)`` block.

    Parameters
    ----------
    centered : ndarray, shape (m, T)
        Training data after smoothing, pruning, and mean subtraction.
        Requires ``T > m`` so that positive definiteness is attainable.
    mu : ndarray, optional
        Training means of the retained variables, carried into the fit for
        later centering of test data.  Defaults to zeros.

    Raises
    ------
    SingularCovarianceError
        If the Cholesky factorization fails.
    """
    centered = np.asarray(centered, dtype=np.float64)
    if centered.ndim != 2:
        raise ValueError("expected a 2-D (m, T) array")
    m, t = centered.shape
    if t <= m:
        raise ValueError(
            f"need more observations than variables (T = {t}, m = {m})"
        )
    sigma = centered @ centered.T / t
    sigma = (sigma + sigma.T) / 2.0  # exact symmetry
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "scatter matrix is singular; variables are still collinear, "
            "re-run VIF pruning with a stricter threshold"
        ) from exc
    if mu is None:
        mu = np.zeros(m)
    else:
        mu = np.asarray(mu, dtype=np.float64)
        if mu.shape != (m,):
            raise ValueError("mu length must equal the variable count")
    return ScatterFit(mu=mu, sigma=sigma, chol=chol, m=m, t_effective=t)


def score(fit: ScatterFit, x: np.ndarray) -> float:
    """Mahalanobis distance of one centered observation vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (fit.m,):
        raise ValueError(f"expected a length-{fit.m} vector, got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("observation contains non-finite values")
    z = solve_triangular(fit.chol, x, lower=True)
    return float(np.sqrt(z @ z))


def score_all(fit: ScatterFit, centered: np.ndarray) -> np.ndarray:
    """Mahalanobis distance of every column of a centered ``(m, T)`` block.

    Column ``t`` agrees with ``score(fit, centered[:, t])`` to floating
    rounding; the batched solve may differ from the per-vector solve in
    the last bits.
    """
    centered = np.asarray(centered, dtype=np.float64)
    if centered.ndim != 2 or centered.shape[0] != fit.m:
        raise ValueError(f"expected an ({fit.m}, T) array, got {centered.shape}")
    z = solve_triangular(fit.chol, centered, lower=True, check_finite=False)
    return np.sqrt(np.einsum("it,it->t", z, z))


@dataclass
class EigenBasis:
    """Descending eigenpairs of a scatter matrix with a variance split.

    ``p`` is the smallest index such that the leading eigenvalues explain
    more than ``alpha`` of total variance; components ``0 .. p-1`` span the
    leading subspace, the rest the tail.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    p: int
    alpha: float


def eigen_basis(fit: ScatterFit, alpha: float = 0.99) -> EigenBasis:
    """Eigendecompose ``fit.sigma`` for diagnostic score splitting."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    lam, vec = np.linalg.eigh(fit.sigma)
    lam, vec = lam[::-1].copy(), vec[:, ::-1].copy()
    if lam[-1] <= 0:
        raise SingularCovarianceError("scatter matrix has a non-positive eigenvalue")
    ortho = vec.T @ vec - np.eye(fit.m)
    if np.abs(ortho).max() > 1e-9:
        raise SingularCovarianceError("eigenvector basis failed orthonormality")
    fractions = np.cumsum(lam) / lam.sum()
    p = int(np.argmax(fractions > alpha)) + 1
    return EigenBasis(eigenvalues=lam, vectors=vec, p=p, alpha=alpha)


def decompose_score(
    fit: ScatterFit, basis: EigenBasis, x: np.ndarray
) -> tuple[float, float]:
    """Split the squared score of ``x`` into (leading, tail) subspace parts.

    The parts sum to ``score(fit, x) ** 2`` up to rounding.  Raises if the
    basis does not reproduce ``fit.sigma``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (fit.m,) or basis.vectors.shape != (fit.m, fit.m):
        raise ValueError("dimension mismatch between fit, basis, and x")
    recon = (basis.vectors * basis.eigenvalues) @ basis.vectors.T
    scale = np.abs(fit.sigma).max()
    if np.abs(recon - fit.sigma).max() > 1e-8 * max(scale, 1e-300):
        raise ValueError("eigenbasis does not match this scatter fit")
    xi = basis.vectors.T @ x
    contrib = xi * xi / basis.eigenvalues
    leading = float(contrib[: basis.p].sum())
    tail = float(contrib[basis.p :].sum())
    return leading, tail
