"""Gaussian and Stein kernels with closed-form integrals against Gaussian measures.

The Gaussian kernel here is ``k(x, y) = exp(-sum_j (x_j - y_j)^2 / ell_j^2)``
(no factor 2 in the denominator).  For a diagonal Gaussian measure both the
mean embedding ``z(x) = int k(u, x) dPi(u)`` and the double integral
``int int k dPi dPi`` factor across coordinates and are available in closed
form.  The Stein kernel is built from a Gaussian base kernel and the score of
an (unnormalised) target density; by construction its mean embedding is
identically 1, so quadrature against it needs no normalising constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GaussianKernel",
    "GaussianMeasure",
    "SteinKernel",
    "kernel_eval",
    "gram_matrix",
    "mean_embedding",
    "embedding_vector",
    "double_integral",
    "stein_base_derivatives",
]

_SQRT_PI = np.sqrt(np.pi)


def _as_vector(x, d, name):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1 or v.shape[0] != d:
        raise ValueError(f"{name} must be a length-{d} vector, got shape {v.shape}")
    return v


def _as_batch(X, d):
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {A.shape}")
    return A


@dataclass(frozen=True)
class GaussianKernel:
    """Anisotropic Gaussian kernel exp(-sum_j (x_j - y_j)^2 / ell_j^2).

    Parameters
    ----------
    lengthscales : array_like
        Positive per-coordinate lengthscales, shape (d,).
    """

    lengthscales: np.ndarray

    def __post_init__(self):
        ell = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ell.ndim != 1:
            raise ValueError("lengthscales must be a 1-D array")
        if not np.all(np.isfinite(ell)) or np.any(ell <= 0):
            raise ValueError("lengthscales must be finite and positive")
        object.__setattr__(self, "lengthscales", ell)

    @property
    def d(self) -> int:
        return self.lengthscales.shape[0]

    def __call__(self, x, y) -> float:
        x = _as_vector(x, self.d, "x")
        y = _as_vector(y, self.d, "y")
        return float(np.exp(-np.sum(((x - y) / self.lengthscales) ** 2)))

    def gram(self, X, Y=None) -> np.ndarray:
        """Pairwise kernel matrix, shape (n, m).

        Assembled from explicit coordinate differences so that gram(X, X)
        is exactly symmetric in floating point.
        """
        X = _as_batch(X, self.d)
        Y = X if Y is None else _as_batch(Y, self.d)
        diff = (X[:, None, :] - Y[None, :, :]) / self.lengthscales
        return np.exp(-np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class GaussianMeasure:
    """Diagonal Gaussian probability measure N(mean, diag(std^2)).

    Doubles as a sampler and log-density, so it can serve both as the
    integration measure of a quadrature problem and as a reference
    distribution for tempering.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        std = np.atleast_1d(np.asarray(self.std, dtype=float))
        if std.shape != mean.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-D arrays of equal length")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(std)):
            raise ValueError("mean and std must be finite")
        if np.any(std <= 0):
            raise ValueError("std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def log_density(self, X) -> np.ndarray:
        X = _as_batch(X, self.d)
        z = (X - self.mean) / self.std
        return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(self.std)) \
            - 0.5 * self.d * np.log(2.0 * np.pi)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((size, self.d))


@dataclass(frozen=True)
class SteinKernel:
    """Stein kernel built from a Gaussian base kernel and a score function.

    k(x, y) = 1 + sum_j [ d2k_b/dx_j dy_j + u_j(x) dk_b/dy_j
                          + u_j(y) dk_b/dx_j + u_j(x) u_j(y) k_b ]

    where u = score of the target density.  Functions in the induced space
    integrate to exactly their constant offset, so the mean embedding is
    identically 1 for the target measure, whatever its normalising constant.

    Parameters
    ----------
    base : GaussianKernel
        Base kernel k_b.
    score : callable
        Batched score, mapping (n, d) arrays to (n, d) arrays of
        grad log density values.  Must be finite on the support.
    """

    base: GaussianKernel
    score: Callable[[np.ndarray], np.ndarray]

    @property
    def d(self) -> int:
        return self.base.d

    def _score_batch(self, X) -> np.ndarray:
        U = np.asarray(self.score(X), dtype=float)
        if U.shape != X.shape:
            raise ValueError(f"score returned shape {U.shape} for input {X.shape}")
        if not np.all(np.isfinite(U)):
            raise ValueError("score must be finite at every evaluation point")
        return U

    def __call__(self, x, y) -> float:
        x = _as_vector(x, self.d, "x")
        y = _as_vector(y, self.d, "y")
        return float(self.gram(x[None, :], y[None, :])[0, 0])

    def gram(self, X, Y=None) -> np.ndarray:
        X = _as_batch(X, self.d)
        UX = self._score_batch(X)
        if Y is None:
            Y, UY = X, UX
        else:
            Y = _as_batch(Y, self.d)
            UY = self._score_batch(Y)
        ell2 = self.base.lengthscales ** 2
        diff = X[:, None, :] - Y[None, :, :]
        kb = np.exp(-np.sum(diff * diff / ell2, axis=-1))
        # sum_j of: mixed second derivative coefficient, first-derivative
        # cross terms, and the score outer product.
        mixed = np.sum((2.0 * ell2 - 4.0 * diff * diff) / ell2 ** 2, axis=-1)
        cross = np.sum((2.0 * diff / ell2) * (UX[:, None, :] - UY[None, :, :]),
                       axis=-1)
        outer = UX @ UY.T
        return 1.0 + kb * (mixed + cross + outer)


KernelHandle = GaussianKernel | SteinKernel


def kernel_eval(kernel: KernelHandle, x, y) -> float:
    """Evaluate the kernel at a single pair of points."""
    return kernel(x, y)


def gram_matrix(kernel: KernelHandle, X, Y=None) -> np.ndarray:
    """Pairwise kernel matrix for row-stacked points."""
    return kernel.gram(X, Y)


def mean_embedding(kernel: KernelHandle, measure: GaussianMeasure | None, x) -> float:
    """Integral of k(., x) against the measure.

    Gaussian kernel with Gaussian measure: closed form
    prod_j sqrt(pi) ell_j N(x_j | mu_j, sigma_j^2 + ell_j^2 / 2).
    Stein kernel: identically 1 for its own target (measure is ignored).
    """
    if isinstance(kernel, SteinKernel):
        return 1.0
    x = _as_vector(x, kernel.d, "x")
    return float(embedding_vector(kernel, measure, x[None, :])[0])


def embedding_vector(kernel: KernelHandle, measure: GaussianMeasure | None,
                     X) -> np.ndarray:
    """Mean embedding evaluated at each row of X, shape (n,)."""
    X = _as_batch(X, kernel.d)
    if isinstance(kernel, SteinKernel):
        return np.ones(X.shape[0])
    if not isinstance(measure, GaussianMeasure):
        raise TypeError("Gaussian-kernel embeddings need a GaussianMeasure")
    if measure.d != kernel.d:
        raise ValueError("kernel and measure dimensions differ")
    ell = kernel.lengthscales
    var = measure.std ** 2 + 0.5 * ell ** 2
    z = X - measure.mean
    factors = _SQRT_PI * ell * np.exp(-0.5 * z * z / var) / np.sqrt(2.0 * np.pi * var)
    return np.prod(factors, axis=1)


def double_integral(kernel: KernelHandle, measure: GaussianMeasure | None) -> float:
    """Integral of k against the measure in both arguments.

    Gaussian case: prod_j sqrt(pi) ell_j N(0 | 0, 2 sigma_j^2 + ell_j^2 / 2).
    Stein case: identically 1.
    """
    if isinstance(kernel, SteinKernel):
        return 1.0
    if not isinstance(measure, GaussianMeasure):
        raise TypeError("Gaussian-kernel integrals need a GaussianMeasure")
    if measure.d != kernel.d:
        raise ValueError("kernel and measure dimensions differ")
    ell = kernel.lengthscales
    var = 2.0 * measure.std ** 2 + 0.5 * ell ** 2
    return float(np.prod(_SQRT_PI * ell / np.sqrt(2.0 * np.pi * var)))


def stein_base_derivatives(base: GaussianKernel, theta, phi):
    """First and mixed second derivatives of the Gaussian base kernel.

    Returns
    -------
    kb : float
        Base kernel value.
    d_theta : ndarray, shape (d,)
        dk_b/dtheta_j = -(2/ell_j^2)(theta_j - phi_j) k_b.
    d_phi : ndarray, shape (d,)
        dk_b/dphi_j = +(2/ell_j^2)(theta_j - phi_j) k_b.
    mixed : ndarray, shape (d,)
        d2k_b/dtheta_j dphi_j = ((2 ell_j^2 - 4 (theta_j - phi_j)^2)
                                 / ell_j^4) k_b.
    """
    theta = _as_vector(theta, base.d, "theta")
    phi = _as_vector(phi, base.d, "phi")
    ell2 = base.lengthscales ** 2
    diff = theta - phi
    kb = float(np.exp(-np.sum(diff * diff / ell2)))
    d_theta = -(2.0 / ell2) * diff * kb
    d_phi = (2.0 / ell2) * diff * kb
    mixed = (2.0 * ell2 - 4.0 * diff * diff) / ell2 ** 2 * kb
    return kb, d_theta, d_phi, mixed
