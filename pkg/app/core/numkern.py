"""Dense numerical kernels shared by the rate, optimizer and asymptotic modules.

All inputs are small (dimensions up to a few dozen), so everything is plain
dense LAPACK through numpy / scipy.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from app.core.exceptions import NumericFailure, SingularPencilError, ValidationException

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12
# Singular values below PINV_RCOND * sigma_max are treated as zero in projections
PINV_RCOND = 1e-10
# Streams whose gain is below this fraction of the strongest gain get no power
NULL_GAIN_RTOL = 1e-14
BISECTION_RTOL = 1e-9
BISECTION_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class EigenPairs:
    values: np.ndarray   # real, descending
    vectors: np.ndarray  # one unit-norm column per value


@dataclass(frozen=True, eq=False)
class WaterfillResult:
    powers: np.ndarray
    lam: float


class Stream(NamedTuple):
    """One stream of a water-filling problem: weight, useful gain, leakage gain."""
    u: float
    sigma1: float
    sigma2: float


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2).conj())


def as_hermitian(m, name: str = "matrix") -> np.ndarray:
    """Validates a square Hermitian matrix and returns it exactly symmetrized."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationException(f"{name} must be square", details={"shape": m.shape})
    if not np.all(np.isfinite(m)):
        raise ValidationException(f"{name} has non-finite entries")
    scale = max(np.linalg.norm(m), np.finfo(float).tiny)
    asym = np.linalg.norm(m - m.conj().T)
    if asym > HERMITIAN_RTOL * scale:
        raise ValidationException(
            f"{name} is not Hermitian", details={"asymmetry": float(asym / scale)}
        )
    return hermitize(m)


def hermitian_eig(m) -> EigenPairs:
    """Full spectrum of a Hermitian matrix, eigenvalues in descending order."""
    m = as_hermitian(m)
    values, vectors = scipy.linalg.eigh(m)
    return EigenPairs(values=values[::-1].copy(), vectors=vectors[:, ::-1].copy())


def generalized_eig_top(b, a, d: int) -> EigenPairs:
    """Top-d pairs of the pencil (b, a) with a positive definite.

    Reduced to a standard problem through a = L L^H: the eigenvectors of
    L^-1 b L^-H are mapped back by L^-H and rescaled to unit norm.
    """
    b = as_hermitian(b, "B")
    a = as_hermitian(a, "A")
    n = a.shape[0]
    if b.shape != a.shape:
        raise ValidationException("pencil matrices differ in size", details={"B": b.shape, "A": a.shape})
    if not 1 <= d <= n:
        raise ValidationException("requested eigenpair count out of range", details={"d": d, "dim": n})
    try:
        chol = scipy.linalg.cholesky(a, lower=True)
    except np.linalg.LinAlgError as e:
        raise SingularPencilError(f"pencil right matrix is not positive definite: {e}")

    x = scipy.linalg.solve_triangular(chol, b, lower=True)
    c = scipy.linalg.solve_triangular(chol, x.conj().T, lower=True).conj().T
    values, y = scipy.linalg.eigh(hermitize(c))
    values = values[::-1][:d]
    y = y[:, ::-1][:, :d]

    vectors = scipy.linalg.solve_triangular(chol, y, lower=True, trans="C")
    vectors = vectors / np.linalg.norm(vectors, axis=0, keepdims=True)
    return EigenPairs(values=values.copy(), vectors=vectors)


def waterfill_powers(u, sigma1, sigma2, lam: float) -> np.ndarray:
    """Per-stream powers (u / (sigma2 + lam) - 1 / sigma1)^+ at a fixed multiplier."""
    u = np.asarray(u, dtype=float)
    sigma1 = np.asarray(sigma1, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    powers = np.zeros_like(sigma1)
    if sigma1.size == 0:
        return powers
    active = sigma1 > NULL_GAIN_RTOL * max(sigma1.max(), 0.0)
    if not np.any(active):
        return powers
    level = sigma2[active] + lam
    with np.errstate(divide="ignore"):
        water = np.where(level > 0, u[active] / np.where(level > 0, level, 1.0), np.inf)
    powers[active] = np.maximum(water - 1.0 / sigma1[active], 0.0)
    return powers


def waterfill_bs(streams: Sequence[Stream], p_c: float) -> WaterfillResult:
    """Interference-leakage-aware water-filling over all streams of one BS.

    The multiplier is zero when the unconstrained allocation already fits in
    the budget; otherwise it is found by bisection so the powers sum to p_c.
    """
    if len(streams) == 0:
        raise ValidationException("water-filling needs at least one stream")
    if p_c <= 0:
        raise ValidationException("power budget must be positive", details={"P_c": p_c})
    u = np.array([s.u for s in streams], dtype=float)
    sigma1 = np.array([s.sigma1 for s in streams], dtype=float)
    sigma2 = np.array([s.sigma2 for s in streams], dtype=float)
    if np.any(sigma1 < 0) or np.any(sigma2 < 0):
        raise ValidationException("stream gains must be nonnegative")

    if not np.any(sigma1 > NULL_GAIN_RTOL * max(sigma1.max(), 0.0)):
        return WaterfillResult(powers=np.zeros_like(sigma1), lam=0.0)

    def total(lam: float) -> float:
        return float(waterfill_powers(u, sigma1, sigma2, lam).sum())

    if total(0.0) <= p_c:
        return WaterfillResult(powers=waterfill_powers(u, sigma1, sigma2, 0.0), lam=0.0)

    lo, hi = 0.0, 1.0
    while total(hi) > p_c:
        lo, hi = hi, 2.0 * hi
        if not np.isfinite(hi):
            raise NumericFailure("water-filling upper bracket diverged", details={"P_c": p_c})

    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        t = total(mid)
        if abs(t - p_c) <= BISECTION_RTOL * p_c:
            return WaterfillResult(powers=waterfill_powers(u, sigma1, sigma2, mid), lam=mid)
        if t > p_c:
            lo = mid
        else:
            hi = mid
    raise NumericFailure(
        "water-filling bisection did not converge",
        details={"P_c": p_c, "bracket": (lo, hi)},
    )


def proj_orth_complement(m) -> np.ndarray:
    """Projector onto the orthogonal complement of the column span of m.

    An n x 0 input gives the n x n identity. Rank deficiency is absorbed by
    the pseudoinverse (relative cutoff PINV_RCOND).
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValidationException("projection input must be a matrix", details={"shape": m.shape})
    n = m.shape[0]
    if m.shape[1] == 0:
        return np.eye(n, dtype=complex)
    proj = m @ np.linalg.pinv(m, rcond=PINV_RCOND)
    return hermitize(np.eye(n, dtype=complex) - proj)


def logdet_pd(m) -> np.ndarray:
    """ln det of a (stack of) Hermitian positive definite matrices via Cholesky."""
    try:
        chol = np.linalg.cholesky(hermitize(np.asarray(m, dtype=complex)))
    except np.linalg.LinAlgError as e:
        raise NumericFailure(f"matrix is not positive definite: {e}")
    return 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1).real), axis=-1)


def psd_sqrt(m) -> np.ndarray:
    values, vectors = scipy.linalg.eigh(hermitize(np.asarray(m, dtype=complex)))
    return hermitize((vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T)


def range_inv_sqrt(m, rtol: float = PINV_RCOND, reference: Optional[float] = None) -> np.ndarray:
    """Returns X (n x r) with X^H m X = I_r, r the numerical rank of the PSD matrix m.

    Eigenvalues below rtol * reference count as zero; reference defaults to
    the largest eigenvalue of m.
    """
    values, vectors = scipy.linalg.eigh(hermitize(np.asarray(m, dtype=complex)))
    top = values.max() if values.size else 0.0
    scale = top if reference is None else max(reference, top)
    if scale <= 0.0:
        return vectors[:, :0]
    keep = values > rtol * scale
    return vectors[:, keep] / np.sqrt(values[keep])


def dominant_right_vectors(m, d: int) -> np.ndarray:
    """The d dominant right singular vectors of m as columns."""
    _, _, vh = np.linalg.svd(np.asarray(m, dtype=complex), full_matrices=True)
    return vh[:d].conj().T
