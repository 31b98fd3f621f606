"""Tempered sequential Monte Carlo: reweight, resample, move.

The tempered family interpolates between a reference density pi_0 and a
target pi through pi_t = pi_0^(1-t) * pi^t on t in [0, 1].  Temperatures
are chosen adaptively so that the conditional effective sample size of
each increment stays at a fixed fraction of the particle count, with an
absolute cap on the step length.  After reweighting, particles are
multinomially resampled when the effective sample size degrades, then
rejuvenated with a Metropolis-Hastings sweep whose proposal can adapt to
the current particle population.

All operations are functional: they return new ParticleSystem instances
and treat state arrays as immutable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = [
    "BoxUniform",
    "TemperedTarget",
    "ParticleSystem",
    "ProposalPolicy",
    "ADAPTIVE_GAUSSIAN",
    "RANDOM_WALK",
    "ADAPTIVE_LOGNORMAL",
    "DegenerateWeightsError",
    "init_particles",
    "ess",
    "cess",
    "next_temperature",
    "reweight",
    "resample_multinomial",
    "markov_move",
    "smc_step",
]

ADAPTIVE_GAUSSIAN = "adaptive-gaussian-independence"
RANDOM_WALK = "random-walk-gaussian"
ADAPTIVE_LOGNORMAL = "adaptive-lognormal-independence"

_TEMP_TOL = 1e-8


class DegenerateWeightsError(RuntimeError):
    """All particle weights vanished during a reweighting step."""


@dataclass(frozen=True)
class BoxUniform:
    """Uniform reference distribution on an axis-aligned box.

    The log-density is 0 inside the box and -inf outside; the constant
    normalisation is irrelevant along the tempered path.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("upper must exceed lower in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    def log_density(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        inside = np.all((X >= self.lower) & (X <= self.upper), axis=-1)
        return np.where(inside, 0.0, -np.inf)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.d))


@dataclass(frozen=True)
class TemperedTarget:
    """Geometric bridge pi_t = pi_0^(1-t) pi^t between two log-densities.

    Parameters
    ----------
    log_ref : callable
        Batched log-density of the reference, (n, d) -> (n,).
    log_target : callable
        Batched (possibly unnormalised) log-density of the target.
    support : tuple of arrays, optional
        (lower, upper) box enforced at every temperature, including t = 1.
    """

    log_ref: Callable[[np.ndarray], np.ndarray]
    log_target: Callable[[np.ndarray], np.ndarray]
    support: tuple[np.ndarray, np.ndarray] | None = None

    def in_support(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.support is None:
            return np.ones(X.shape[0], dtype=bool)
        lo, hi = self.support
        return np.all((X >= lo) & (X <= hi), axis=1)

    def log_ratio(self, X) -> np.ndarray:
        """log pi - log pi_0, with -inf outside the support box."""
        X = np.asarray(X, dtype=float)
        mask = self.in_support(X)
        out = np.full(X.shape[0], -np.inf)
        if np.any(mask):
            Xin = X[mask]
            out[mask] = np.asarray(self.log_target(Xin)) - np.asarray(self.log_ref(Xin))
        return out

    def log_tempered(self, X, t: float) -> np.ndarray:
        """log pi_t up to a constant; -inf outside the support box."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"temperature {t} outside [0, 1]")
        X = np.asarray(X, dtype=float)
        mask = self.in_support(X)
        out = np.full(X.shape[0], -np.inf)
        if np.any(mask):
            Xin = X[mask]
            # endpoint temperatures skip a factor entirely so that a
            # vanishing density on the other side cannot produce 0 * inf
            vals = 0.0
            if t < 1.0:
                vals = vals + (1.0 - t) * np.asarray(self.log_ref(Xin), dtype=float)
            if t > 0.0:
                vals = vals + t * np.asarray(self.log_target(Xin), dtype=float)
            out[mask] = vals
        return out


@dataclass(frozen=True)
class ParticleSystem:
    """Weighted particles at a temperature: states (N, d), weights (N,)."""

    states: np.ndarray
    weights: np.ndarray
    t: float

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if states.ndim != 2 or weights.shape != (states.shape[0],):
            raise ValueError("states must be (N, d) with matching weights (N,)")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and non-negative")
        if abs(float(weights.sum()) - 1.0) > 1e-8:
            raise ValueError("weights must sum to 1")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"temperature {self.t} outside [0, 1]")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", weights)

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class ProposalPolicy:
    """Markov-move proposal configuration.

    kind is one of ADAPTIVE_GAUSSIAN, RANDOM_WALK, ADAPTIVE_LOGNORMAL;
    rw_scale is the isotropic step size of the random walk.
    """

    kind: str = ADAPTIVE_GAUSSIAN
    rw_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (ADAPTIVE_GAUSSIAN, RANDOM_WALK, ADAPTIVE_LOGNORMAL):
            raise ValueError(f"unknown proposal kind {self.kind!r}")
        if self.rw_scale <= 0:
            raise ValueError("rw_scale must be positive")


def init_particles(reference, n_particles: int,
                   rng: np.random.Generator) -> ParticleSystem:
    """Equal-weight draw of n_particles from the reference, at t = 0."""
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    states = reference.sample(rng, n_particles)
    weights = np.full(n_particles, 1.0 / n_particles)
    return ParticleSystem(states=states, weights=weights, t=0.0)


def ess(weights) -> float:
    """Effective sample size 1 / sum(w^2) of normalised weights."""
    w = np.asarray(weights, dtype=float)
    return 1.0 / float(np.sum(w * w))


def _cess_from_ratios(weights, log_ratio, dt: float, n: int) -> float:
    # dt == 0 leaves the weights untouched even where the ratio vanishes
    a = dt * log_ratio if dt > 0.0 else np.zeros_like(log_ratio)
    finite = np.isfinite(a)
    if not np.any(finite & (weights > 0)):
        raise DegenerateWeightsError("no particle carries weight after increment")
    m = np.max(a[finite]) if np.any(finite) else 0.0
    u = np.where(finite, np.exp(a - m), 0.0)
    num = float(np.sum(weights * u)) ** 2
    den = float(np.sum(weights * u * u))
    if den == 0.0:
        raise DegenerateWeightsError("incremental weights all vanished")
    return n * num / den


def cess(system: ParticleSystem, target: TemperedTarget,
         t_candidate: float) -> float:
    """Conditional effective sample size of moving the system to t_candidate.

    With incremental weights u_j = (pi/pi_0)^(t_candidate - t) this is
    N (sum w_j u_j)^2 / sum w_j u_j^2, computed with max-subtraction in
    log space; the common scale cancels exactly.
    """
    if t_candidate < system.t:
        raise ValueError("t_candidate must not decrease the temperature")
    lr = target.log_ratio(system.states)
    return _cess_from_ratios(system.weights, lr, t_candidate - system.t,
                             system.n_particles)


def next_temperature(system: ParticleSystem, target: TemperedTarget,
                     rho: float, delta: float) -> float:
    """Adaptive temperature: bisection solve of CESS(t) = rho*N, capped.

    Solves on [t, 1] to interval width 1e-8; if even t = 1 keeps the CESS
    above rho*N the solve returns 1.  The result is then capped at
    t + delta.  Always strictly greater than the current temperature.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    lr = target.log_ratio(system.states)
    w = system.weights
    n = system.n_particles
    level = rho * n

    def g(t):
        return _cess_from_ratios(w, lr, t - system.t, n)

    if g(1.0) >= level:
        solved = 1.0
    else:
        lo, hi = system.t, 1.0
        while hi - lo > _TEMP_TOL:
            mid = 0.5 * (lo + hi)
            if g(mid) >= level:
                lo = mid
            else:
                hi = mid
        solved = 0.5 * (lo + hi)
    return min(system.t + delta, solved)


def reweight(system: ParticleSystem, target: TemperedTarget,
             t_next: float) -> ParticleSystem:
    """Multiply weights by (pi/pi_0)^(t_next - t) and renormalise.

    Performed in log space with max-subtraction.  Raises
    DegenerateWeightsError if every weight underflows to zero.
    """
    if t_next < system.t:
        raise ValueError("t_next must not decrease the temperature")
    lr = target.log_ratio(system.states)
    with np.errstate(divide="ignore"):
        logw = np.where(system.weights > 0, np.log(system.weights), -np.inf)
    dt = t_next - system.t
    a = logw + (dt * lr if dt > 0.0 else 0.0)
    if not np.any(np.isfinite(a)):
        raise DegenerateWeightsError("all reweighted particles have zero mass")
    m = np.max(a[np.isfinite(a)])
    u = np.where(np.isfinite(a), np.exp(a - m), 0.0)
    total = float(u.sum())
    if total <= 0.0 or not np.isfinite(total):
        raise DegenerateWeightsError("reweighting produced a zero total mass")
    return ParticleSystem(states=system.states, weights=u / total, t=t_next)


def resample_multinomial(system: ParticleSystem,
                         rng: np.random.Generator) -> ParticleSystem:
    """Multinomial resampling; returns equal-weight copies of survivors."""
    n = system.n_particles
    idx = rng.choice(n, size=n, p=system.weights)
    return ParticleSystem(states=system.states[idx],
                          weights=np.full(n, 1.0 / n), t=system.t)


def _weighted_mean_cov(states, weights):
    mu = weights @ states
    centred = states - mu
    cov = (centred * weights[:, None]).T @ centred
    return mu, cov


def _proposal_factor(cov):
    """Cholesky factor of the proposal covariance, ridged if not PD."""
    try:
        return scipy.linalg.cholesky(cov, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        warnings.warn("proposal covariance not positive definite; "
                      "falling back to ridged diagonal", RuntimeWarning)
        ridged = np.diag(np.maximum(np.diag(cov), 0.0) + 1e-8)
        return scipy.linalg.cholesky(ridged, lower=True, check_finite=False)


def _mvn_logpdf(X, mu, L):
    half = scipy.linalg.solve_triangular(L, (X - mu).T, lower=True,
                                         check_finite=False)
    return -0.5 * np.sum(half * half, axis=0) \
        - np.sum(np.log(np.diag(L))) - 0.5 * mu.shape[0] * np.log(2.0 * np.pi)


def markov_move(system: ParticleSystem, target: TemperedTarget,
                policy: ProposalPolicy, rng: np.random.Generator,
                sweeps: int = 1) -> ParticleSystem:
    """Metropolis-Hastings sweeps leaving the current tempered density invariant.

    Adaptive policies fit their proposal moments to the current weighted
    particle set at the start of each sweep and hold them fixed across the
    sweep.  Draw order per sweep is fixed (one (N, d) block of standard
    normals, then one (N,) block of uniforms) so accept decisions can be
    replayed exactly.  Weights and temperature are unchanged.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    states = system.states
    n, d = states.shape
    t = system.t
    for _ in range(sweeps):
        if policy.kind == RANDOM_WALK:
            noise = rng.standard_normal((n, d))
            proposals = states + policy.rw_scale * noise
            log_q_diff = np.zeros(n)
        elif policy.kind == ADAPTIVE_GAUSSIAN:
            mu, cov = _weighted_mean_cov(states, system.weights)
            L = _proposal_factor(cov)
            noise = rng.standard_normal((n, d))
            proposals = mu + noise @ L.T
            # independence sampler: q(current) - q(proposal)
            log_q_diff = _mvn_logpdf(states, mu, L) - _mvn_logpdf(proposals, mu, L)
        elif policy.kind == ADAPTIVE_LOGNORMAL:
            if np.any(states <= 0):
                raise ValueError("lognormal proposal requires positive states")
            logs = np.log(states)
            mu, cov = _weighted_mean_cov(logs, system.weights)
            L = _proposal_factor(cov)
            noise = rng.standard_normal((n, d))
            log_props = mu + noise @ L.T
            proposals = np.exp(log_props)
            log_q_diff = (_mvn_logpdf(logs, mu, L) - logs.sum(axis=1)) \
                - (_mvn_logpdf(log_props, mu, L) - log_props.sum(axis=1))
        else:  # pragma: no cover - guarded by ProposalPolicy
            raise ValueError(policy.kind)

        log_pi_cur = target.log_tempered(states, t)
        log_pi_prop = target.log_tempered(proposals, t)
        with np.errstate(invalid="ignore"):
            log_r = log_pi_prop - log_pi_cur + log_q_diff
        log_r = np.where(np.isneginf(log_pi_prop), -np.inf, log_r)
        u = rng.uniform(size=n)
        accept = np.log(u) < log_r
        states = np.where(accept[:, None], proposals, states)
    return ParticleSystem(states=states, weights=system.weights, t=t)


def smc_step(system: ParticleSystem, target: TemperedTarget, t_next: float,
             rho: float, policy: ProposalPolicy, rng: np.random.Generator,
             sweeps: int = 1) -> ParticleSystem:
    """One tempering step: reweight, resample if ESS < rho*N, then move."""
    moved = reweight(system, target, t_next)
    if ess(moved.weights) < rho * moved.n_particles:
        moved = resample_multinomial(moved, rng)
    return markov_move(moved, target, policy, rng, sweeps=sweeps)
