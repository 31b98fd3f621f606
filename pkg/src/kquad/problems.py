"""Benchmark problems: a sinusoidal toy integrand, a damped-oscillator
inverse problem with Stein-kernel quadrature, and a truncated spectral
density used to diagnose how sampling spread interacts with kernel
quadrature error.

The oscillator is x'' + c x' + k x = 0 with unit mass, initial position
and velocity as the first two parameters, solved in closed form per
damping regime.  Its Bayesian inverse problem has independent lognormal
priors and Gaussian observation noise; the posterior score needed by the
Stein kernel combines the analytic prior score with a central
finite-difference derivative of the trajectory.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .kernels import GaussianMeasure

__all__ = [
    "ToyProblem",
    "toy_integrand",
    "default_toy_lengthscale",
    "ODEProblem",
    "ode_solution",
    "generate_ode_data",
    "with_observations",
    "ode_log_prior",
    "ode_log_likelihood",
    "ode_log_posterior",
    "ode_score",
    "ode_predictive",
    "BenchmarkResult",
    "posterior_benchmark",
    "BachDiagnostic",
    "bach_density_truncated",
    "gaussian_kernel_eigenvalues",
]

_TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# sinusoidal toy problem


@dataclass(frozen=True)
class ToyProblem:
    """Integrand 1 + prod_j sin(frequency * x_j) against N(0, I).

    The product of sines integrates to zero by symmetry, so the true
    integral is exactly 1 for every dimension and frequency.
    """

    d: int = 1
    frequency: float = _TWO_PI

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")

    @property
    def true_value(self) -> float:
        return 1.0

    def target(self) -> GaussianMeasure:
        return GaussianMeasure(np.zeros(self.d), np.ones(self.d))

    def integrand(self, X) -> np.ndarray:
        return toy_integrand(self, X)


def toy_integrand(problem: ToyProblem, X) -> np.ndarray:
    """Batched toy integrand values, (m, d) -> (m,)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != problem.d:
        raise ValueError(f"expected dimension {problem.d}, got {X.shape[1]}")
    return 1.0 + np.prod(np.sin(problem.frequency * X), axis=1)


def default_toy_lengthscale(problem: ToyProblem) -> float:
    """Kernel lengthscale matched to the integrand's oscillation.

    Faster oscillation and higher dimension need a shorter lengthscale
    for the interpolant to track the integrand.
    """
    if problem.d > 1:
        return 0.25
    if problem.frequency <= _TWO_PI * 1.5:
        return 1.0
    if problem.frequency <= _TWO_PI * 3.0:
        return 0.25
    return 0.15


# ---------------------------------------------------------------------------
# damped oscillator inverse problem


@dataclass(frozen=True)
class ODEProblem:
    """Bayesian inversion of x'' + c x' + k x = 0 (unit mass).

    Parameters theta = (initial position, initial velocity, stiffness k,
    damping c), all positive with independent lognormal priors
    (location 0, common scale).  Observations are the trajectory at
    `times` plus Gaussian noise; the quantity of interest is the
    position at the `horizon` time.
    """

    theta_true: np.ndarray = (1.0, 3.75, 2.5, 0.5)
    noise_std: float = 0.4
    times: np.ndarray | None = None
    horizon: float = 12.0
    prior_scale: float = 0.5
    observations: np.ndarray | None = None

    def __post_init__(self):
        theta = np.asarray(self.theta_true, dtype=float)
        if theta.shape != (4,) or np.any(theta <= 0):
            raise ValueError("theta_true must be 4 positive parameters")
        # None means the default design; an explicitly empty array is a
        # data-free problem (prior-only checks)
        if self.times is None:
            times = np.linspace(0.0, 10.0, 20)
        else:
            times = np.asarray(self.times, dtype=float)
        if self.noise_std <= 0 or self.prior_scale <= 0:
            raise ValueError("noise_std and prior_scale must be positive")
        obs = self.observations
        if obs is not None:
            obs = np.asarray(obs, dtype=float)
            if obs.shape != times.shape:
                raise ValueError("observations must match times")
        object.__setattr__(self, "theta_true", theta)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "observations", obs)


def ode_solution(theta, times) -> np.ndarray:
    """Closed-form oscillator position x(t).

    Parameters
    ----------
    theta : array_like, shape (4,) or (m, 4)
        (x(0), x'(0), stiffness, damping); the regime (under-, over-, or
        critically damped) is resolved per row.
    times : scalar or array_like, shape (k,)

    Returns
    -------
    ndarray
        Shape () for single theta and scalar time, (k,) or (m,) when one
        argument is batched, (m, k) when both are.
    """
    th = np.asarray(theta, dtype=float)
    single_theta = th.ndim == 1
    th = np.atleast_2d(th)
    if th.shape[1] != 4:
        raise ValueError("theta must have four components")
    t = np.asarray(times, dtype=float)
    scalar_t = t.ndim == 0
    t = np.atleast_1d(t)[None, :]  # (1, k)

    x0 = th[:, 0:1]
    v0 = th[:, 1:2]
    stiff = th[:, 2:3]
    damp = th[:, 3:4]
    disc = damp * damp - 4.0 * stiff

    with np.errstate(divide="ignore", invalid="ignore"):
        # underdamped: oscillation at omega = sqrt(4k - c^2) / 2
        omega = np.sqrt(np.maximum(-disc, 0.0)) / 2.0
        omega_safe = np.where(omega > 0, omega, 1.0)
        b_u = (v0 + 0.5 * damp * x0) / omega_safe
        x_under = np.exp(-0.5 * damp * t) * (
            x0 * np.cos(omega_safe * t) + b_u * np.sin(omega_safe * t))

        # overdamped: two real decay rates
        s = np.sqrt(np.maximum(disc, 0.0))
        s_safe = np.where(s > 0, s, 1.0)
        r1 = 0.5 * (-damp + s_safe)
        r2 = 0.5 * (-damp - s_safe)
        a_o = (v0 - r2 * x0) / s_safe
        x_over = a_o * np.exp(r1 * t) + (x0 - a_o) * np.exp(r2 * t)

        # critically damped: repeated root
        r = -0.5 * damp
        x_crit = (x0 + (v0 - r * x0) * t) * np.exp(r * t)

    out = np.where(disc < 0, x_under, np.where(disc > 0, x_over, x_crit))
    if single_theta:
        out = out[0]
        return out[0] if scalar_t else out
    return out[:, 0] if scalar_t else out


def generate_ode_data(problem: ODEProblem, rng: np.random.Generator) -> np.ndarray:
    """Noisy trajectory observations at the problem's times."""
    clean = ode_solution(problem.theta_true, problem.times)
    return clean + problem.noise_std * rng.standard_normal(problem.times.shape)


def with_observations(problem: ODEProblem, rng: np.random.Generator) -> ODEProblem:
    """Copy of the problem with freshly generated observations."""
    return replace(problem, observations=generate_ode_data(problem, rng))


def _theta_batch(theta) -> tuple[np.ndarray, bool]:
    th = np.asarray(theta, dtype=float)
    single = th.ndim == 1
    th = np.atleast_2d(th)
    if th.shape[1] != 4:
        raise ValueError("theta must have four components")
    return th, single


def ode_log_prior(problem: ODEProblem, theta) -> np.ndarray:
    """Independent lognormal log-prior; -inf off the positive orthant."""
    th, single = _theta_batch(theta)
    s = problem.prior_scale
    out = np.full(th.shape[0], -np.inf)
    ok = np.all(th > 0, axis=1)
    if np.any(ok):
        lt = np.log(th[ok])
        out[ok] = np.sum(-lt - 0.5 * (lt / s) ** 2, axis=1) \
            - 4.0 * np.log(s * np.sqrt(2.0 * np.pi))
    return out[0] if single else out


def ode_log_likelihood(problem: ODEProblem, theta) -> np.ndarray:
    """Gaussian log-likelihood of the observations; 0 with no data."""
    th, single = _theta_batch(theta)
    if problem.observations is None:
        raise ValueError("problem has no observations; generate data first")
    y = problem.observations
    if y.size == 0:
        out = np.zeros(th.shape[0])
        return out[0] if single else out
    traj = ode_solution(th, problem.times)
    resid = y - traj
    var = problem.noise_std ** 2
    out = -0.5 * np.sum(resid * resid, axis=1) / var \
        - 0.5 * y.size * np.log(2.0 * np.pi * var)
    return out[0] if single else out


def ode_log_posterior(problem: ODEProblem, theta) -> np.ndarray:
    """Unnormalised log-posterior: log-prior + log-likelihood."""
    th, single = _theta_batch(theta)
    out = ode_log_prior(problem, th)
    ok = np.isfinite(out)
    if np.any(ok):
        out[ok] = out[ok] + ode_log_likelihood(problem, th[ok])
    return out[0] if single else out


_FD_REL_STEP = 1e-6


def ode_score(problem: ODEProblem, theta) -> np.ndarray:
    """Gradient of the log-posterior, batched (m, 4) -> (m, 4).

    The prior part is analytic; the likelihood part chains the Gaussian
    residuals through a central finite-difference derivative of the
    trajectory (relative step 1e-6 per coordinate).  Raises on any
    parameter at or below zero, where the posterior is not defined.
    """
    th, single = _theta_batch(theta)
    if np.any(th <= 0):
        raise ValueError("score requires strictly positive parameters")
    s = problem.prior_scale
    grad = -1.0 / th - np.log(th) / (s * s * th)

    if problem.observations is None:
        raise ValueError("problem has no observations; generate data first")
    y = problem.observations
    if y.size > 0:
        var = problem.noise_std ** 2
        resid = y - ode_solution(th, problem.times)  # (m, k)
        for j in range(4):
            h = _FD_REL_STEP * th[:, j]
            hi = th.copy()
            lo = th.copy()
            hi[:, j] += h
            lo[:, j] -= h
            dx = (ode_solution(hi, problem.times)
                  - ode_solution(lo, problem.times)) / (2.0 * h[:, None])
            grad[:, j] += np.sum(resid * dx, axis=1) / var
    return grad[0] if single else grad


def ode_predictive(problem: ODEProblem, theta) -> np.ndarray:
    """Quantity of interest: position at the horizon time."""
    return ode_solution(theta, problem.horizon)


@dataclass(frozen=True)
class BenchmarkResult:
    """Long-run MCMC reference value for the predictive integral."""

    value: float
    std_error: float
    acceptance_rate: float
    chain_length: int
    burn_in: int


def posterior_benchmark(problem: ODEProblem, chain_length: int, burn_in: int,
                        rng: np.random.Generator,
                        step_scale: float = 0.25) -> BenchmarkResult:
    """Random-walk Metropolis benchmark of the predictive integral.

    The walk runs in log-parameter space (so positivity is automatic,
    with the Jacobian folded into the target), starting from the prior
    median.  Returns the post-burn-in mean of the horizon position with
    a batch-means standard error over 50 batches.
    """
    if not 0 < burn_in < chain_length:
        raise ValueError("need 0 < burn_in < chain_length")
    psi = np.zeros(4)  # log of prior median

    def log_post_psi(p):
        th = np.exp(p)
        return float(ode_log_posterior(problem, th)) + float(p.sum())

    lp = log_post_psi(psi)
    draws = np.empty((chain_length, 4))
    accepted = 0
    for i in range(chain_length):
        prop = psi + step_scale * rng.standard_normal(4)
        lp_prop = log_post_psi(prop)
        if np.log(rng.uniform()) < lp_prop - lp:
            psi, lp = prop, lp_prop
            accepted += 1
        draws[i] = psi
    rate = accepted / chain_length
    if not 0.05 <= rate <= 0.95:
        warnings.warn(f"benchmark chain acceptance rate {rate:.3f} outside "
                      "[0.05, 0.95]; consider adjusting step_scale",
                      RuntimeWarning)
    kept = np.exp(draws[burn_in:])
    g = ode_predictive(problem, kept)
    n_batches = 50 if g.shape[0] >= 100 else max(2, g.shape[0] // 2)
    size = g.shape[0] // n_batches
    means = g[:n_batches * size].reshape(n_batches, size).mean(axis=1)
    se = float(np.std(means, ddof=1) / np.sqrt(n_batches))
    return BenchmarkResult(value=float(g.mean()), std_error=se,
                           acceptance_rate=rate, chain_length=chain_length,
                           burn_in=burn_in)


# ---------------------------------------------------------------------------
# truncated spectral density diagnostic


@dataclass(frozen=True)
class BachDiagnostic:
    """Truncated optimal sampling density for the Gaussian kernel on N(0, 1).

    lam is the regularisation weight; truncation the number of spectral
    terms (at most 120).
    """

    lam: float
    truncation: int

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 1 <= self.truncation <= 120:
            raise ValueError("truncation must be in [1, 120]")


def bach_density_truncated(diag: BachDiagnostic, x) -> np.ndarray:
    """Unnormalised truncated density values at x.

    exp(-x^2) * sum_{j < truncation} [1 / (1 + lam * 2^(j+1))]
    * H_j(sqrt(3/2) x)^2 / (2^j j!), with physicists' Hermite
    polynomials evaluated through the orthonormal recurrence and a
    running log-magnitude renormalisation so large truncations cannot
    overflow.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    y = np.atleast_1d(arr) * np.sqrt(1.5)
    log_lam = np.log(diag.lam)
    log2 = np.log(2.0)

    g_prev = np.ones_like(y)          # degree 0, orthonormal scaling
    g = np.sqrt(2.0) * y              # degree 1
    logscale = np.zeros_like(y)
    total = np.zeros_like(y)
    for j in range(diag.truncation):
        if j == 0:
            gj = g_prev
        elif j == 1:
            gj = g
        else:
            g_next = y * g * np.sqrt(2.0 / j) - g_prev * np.sqrt((j - 1.0) / j)
            g_prev, g = g, g_next
            big = np.abs(g) > 1e100
            if np.any(big):
                shrink = np.where(big, np.abs(g), 1.0)
                g = g / shrink
                g_prev = g_prev / shrink
                logscale = logscale + np.log(shrink)
            gj = g
        log_weight = -np.logaddexp(0.0, log_lam + (j + 1) * log2)
        with np.errstate(divide="ignore"):
            log_mag = np.where(gj != 0.0, np.log(np.abs(gj)), -np.inf)
        term = np.where(gj != 0.0,
                        np.exp(log_weight + 2.0 * (log_mag + logscale)), 0.0)
        total = total + term
    out = np.exp(-np.atleast_1d(arr) ** 2) * total
    return float(out[0]) if scalar else out


def gaussian_kernel_eigenvalues(sigma: float, ell: float, count: int) -> np.ndarray:
    """Leading spectral weights of exp(-(x-y)^2/ell^2) against N(0, sigma^2).

    Geometric sequence sqrt(2a/A) (b/A)^j with a = 1/(4 sigma^2),
    b = 1/ell^2, A = a + b + sqrt(a^2 + 2ab); for sigma = ell = 1 this is
    (1/2)^(j+1).
    """
    if sigma <= 0 or ell <= 0:
        raise ValueError("sigma and ell must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    a = 1.0 / (4.0 * sigma * sigma)
    b = 1.0 / (ell * ell)
    big_a = a + b + np.sqrt(a * a + 2.0 * a * b)
    j = np.arange(count)
    return np.sqrt(2.0 * a / big_a) * (b / big_a) ** j
