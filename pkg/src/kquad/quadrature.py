"""Kernel quadrature rules, worst-case errors, and point sequences.

A kernel quadrature rule on points X solves (K + nugget*I) w = z where K is
the Gram matrix and z the mean-embedding vector; the estimate of the integral
is then w . f(X).  The squared worst-case error of arbitrary weights is the
quadratic form w'Kw - 2 w'z + e0^2 with e0^2 the double integral of the
kernel.  The nugget is only added when a plain Cholesky factorisation fails,
escalating through a short geometric ladder.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from .kernels import (
    KernelHandle,
    GaussianMeasure,
    double_integral,
    embedding_vector,
    gram_matrix,
)

__all__ = [
    "NuggetPolicy",
    "DEFAULT_NUGGET",
    "QuadratureRule",
    "DuplicatePointsError",
    "GramSingularError",
    "dedupe",
    "kq_fit",
    "kq_estimate",
    "worst_case_error",
    "mc_estimate",
    "sbq_greedy_select",
    "halton_points",
    "gaussian_inverse_cdf",
]

# escalation floor when the configured initial jitter is zero
_JITTER_FLOOR = 1e-11


class DuplicatePointsError(ValueError):
    """Raised when a point set contains bitwise-identical rows."""


class GramSingularError(np.linalg.LinAlgError):
    """Raised when the Gram matrix cannot be factorised at any ladder jitter.

    Attributes
    ----------
    jitters : list of float
        Effective jitter values attempted.
    diag_range : tuple of float
        (min, max) of the Gram diagonal, for conditioning diagnostics.
    """

    def __init__(self, jitters, diag_range):
        self.jitters = list(jitters)
        self.diag_range = diag_range
        super().__init__(
            f"Cholesky failed at all jitters {self.jitters}; "
            f"Gram diagonal in [{diag_range[0]:.3e}, {diag_range[1]:.3e}]"
        )


@dataclass(frozen=True)
class NuggetPolicy:
    """Escalating diagonal jitter for Gram factorisations.

    The first attempt uses ``initial_jitter`` (default 0, i.e. the exact
    system).  Each retry multiplies by ``growth``; a zero initial value
    escalates from a small fixed floor instead, since zero cannot grow.
    With ``scale_by_trace`` the jitter is multiplied by mean(diag(K)) so
    that it is relative to the kernel's scale.
    """

    initial_jitter: float = 0.0
    growth: float = 10.0
    max_attempts: int = 6
    scale_by_trace: bool = True

    def ladder(self) -> list[float]:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        values = [self.initial_jitter]
        nxt = self.initial_jitter if self.initial_jitter > 0 else _JITTER_FLOOR
        while len(values) < self.max_attempts:
            values.append(nxt)
            nxt *= self.growth
        return values


DEFAULT_NUGGET = NuggetPolicy()


@dataclass(frozen=True)
class QuadratureRule:
    """Fitted kernel quadrature rule.

    Attributes
    ----------
    points : ndarray, shape (n, d)
    weights : ndarray, shape (n,)
    embeddings : ndarray, shape (n,)
        Mean embedding at each point.
    worst_case_error : float
        Worst-case integration error of the weights over the unit ball
        of the kernel's space.
    nugget_used : float
        Effective diagonal jitter of the solved system.
    e0_sq : float
        Squared worst-case error of the empty rule (double integral).
    """

    points: np.ndarray
    weights: np.ndarray
    embeddings: np.ndarray
    worst_case_error: float
    nugget_used: float
    e0_sq: float


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"points must be a non-empty (n, d) array, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    return X


def dedupe(points) -> np.ndarray:
    """Unique rows in order of first occurrence (bitwise comparison)."""
    X = _as_points(points)
    seen = {}
    for i in range(X.shape[0]):
        key = X[i].tobytes()
        if key not in seen:
            seen[key] = i
    return X[np.fromiter(seen.values(), dtype=int)]


def _check_distinct(X):
    keys = {X[i].tobytes() for i in range(X.shape[0])}
    if len(keys) != X.shape[0]:
        raise DuplicatePointsError(
            f"{X.shape[0] - len(keys)} duplicate rows in point set"
        )


def chol_factor_with_nugget(K: np.ndarray, policy: NuggetPolicy = DEFAULT_NUGGET):
    """Lower Cholesky factor of K + jitter*I, escalating jitter on failure.

    Returns (L, effective_jitter).  Raises GramSingularError when every
    ladder attempt fails.
    """
    n = K.shape[0]
    scale = float(np.trace(K)) / n if policy.scale_by_trace else 1.0
    tried = []
    for jitter in policy.ladder():
        effective = jitter * scale
        tried.append(effective)
        A = K if effective == 0.0 else K + effective * np.eye(n)
        try:
            L = scipy.linalg.cholesky(A, lower=True, check_finite=False)
            return L, effective
        except scipy.linalg.LinAlgError:
            continue
    diag = np.diag(K)
    raise GramSingularError(tried, (float(diag.min()), float(diag.max())))


def _solve_weights(K, z, policy):
    L, nugget = chol_factor_with_nugget(K, policy)
    w = scipy.linalg.cho_solve((L, True), z, check_finite=False)
    return w, nugget, L


def worst_case_error(K, z, w, e0_sq: float) -> float:
    """Worst-case error of weights w: sqrt(w'Kw - 2 w'z + e0^2).

    The empty rule (n = 0) returns sqrt(e0_sq).  A quadratic form that
    comes out below -1e-8 through cancellation triggers a RuntimeWarning;
    small negatives are clamped to zero.
    """
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        return float(np.sqrt(e0_sq))
    K = np.asarray(K, dtype=float)
    z = np.asarray(z, dtype=float)
    sq = float(w @ K @ w - 2.0 * (w @ z) + e0_sq)
    if sq < -1e-8:
        warnings.warn(
            f"squared worst-case error {sq:.3e} below -1e-8; "
            "Gram system is badly conditioned",
            RuntimeWarning,
        )
    return float(np.sqrt(max(sq, 0.0)))


def kq_fit(kernel: KernelHandle, measure: GaussianMeasure | None, points,
           policy: NuggetPolicy = DEFAULT_NUGGET) -> QuadratureRule:
    """Fit kernel quadrature weights on the given points.

    Parameters
    ----------
    kernel : GaussianKernel or SteinKernel
    measure : GaussianMeasure or None
        Integration measure; ignored by Stein kernels (their embeddings
        are constant).
    points : array_like, shape (n, d)
        Distinct evaluation locations.
    policy : NuggetPolicy
        Jitter escalation used if the plain factorisation fails.
    """
    X = _as_points(points)
    _check_distinct(X)
    K = gram_matrix(kernel, X)
    z = embedding_vector(kernel, measure, X)
    e0_sq = double_integral(kernel, measure)
    w, nugget, _ = _solve_weights(K, z, policy)
    err = worst_case_error(K, z, w, e0_sq)
    return QuadratureRule(points=X, weights=w, embeddings=z,
                          worst_case_error=err, nugget_used=nugget,
                          e0_sq=e0_sq)


def kq_estimate(rule: QuadratureRule, f_values) -> float:
    """Weighted sum of function values under a fitted rule."""
    f = np.asarray(f_values, dtype=float)
    if f.shape != rule.weights.shape:
        raise ValueError(
            f"need {rule.weights.shape[0]} function values, got shape {f.shape}"
        )
    return float(rule.weights @ f)


def mc_estimate(f_values) -> float:
    """Plain Monte Carlo estimate: the sample mean."""
    f = np.asarray(f_values, dtype=float)
    if f.size == 0:
        raise ValueError("mc_estimate needs at least one value")
    return float(np.mean(f))


def sbq_greedy_select(kernel: KernelHandle, measure: GaussianMeasure | None,
                      candidates, n: int, seed_index: int = 0,
                      policy: NuggetPolicy = DEFAULT_NUGGET) -> np.ndarray:
    """Greedy point selection minimising the worst-case error.

    Starting from the seed candidate, repeatedly appends the candidate
    whose addition gives the smallest fitted worst-case error, ties broken
    by lowest candidate index.  Returns the indices of the selected
    candidates in selection order.
    """
    C = _as_points(candidates)
    m = C.shape[0]
    if not 1 <= n <= m:
        raise ValueError(f"cannot select {n} points from {m} candidates")
    if not 0 <= seed_index < m:
        raise ValueError("seed_index out of range")
    K_full = gram_matrix(kernel, C)
    z_full = embedding_vector(kernel, measure, C)
    e0_sq = double_integral(kernel, measure)

    selected = [seed_index]
    chosen = np.zeros(m, dtype=bool)
    chosen[seed_index] = True
    keys = {C[seed_index].tobytes()}
    while len(selected) < n:
        best_err, best_j = np.inf, -1
        for j in range(m):
            if chosen[j] or C[j].tobytes() in keys:
                continue
            idx = selected + [j]
            K = K_full[np.ix_(idx, idx)]
            z = z_full[idx]
            try:
                w, _, _ = _solve_weights(K, z, policy)
            except GramSingularError:
                continue
            err = worst_case_error(K, z, w, e0_sq)
            if err < best_err:
                best_err, best_j = err, j
        if best_j < 0:
            raise GramSingularError([], (float("nan"), float("nan")))
        selected.append(best_j)
        chosen[best_j] = True
        keys.add(C[best_j].tobytes())
    return np.asarray(selected, dtype=int)


_HALTON_BASES = (2, 3, 5, 7, 11, 13, 17, 19)


def _radical_inverse(index: int, base: int) -> float:
    f, r = 1.0, 0.0
    while index > 0:
        f /= base
        r += f * (index % base)
        index //= base
    return r


def halton_points(n: int, d: int) -> np.ndarray:
    """First n Halton points in (0, 1)^d, indices starting at 1.

    Coordinate j uses the j-th prime as its base; d <= 8.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= d <= len(_HALTON_BASES):
        raise ValueError(f"d must be in [1, {len(_HALTON_BASES)}]")
    out = np.empty((n, d))
    for j in range(d):
        b = _HALTON_BASES[j]
        out[:, j] = [_radical_inverse(i, b) for i in range(1, n + 1)]
    return out


def gaussian_inverse_cdf(u):
    """Standard normal quantile function, elementwise.

    Arguments must lie strictly inside (0, 1).
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("quantile arguments must lie strictly in (0, 1)")
    out = scipy.special.ndtri(arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out
