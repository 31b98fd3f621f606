"""Adaptive control of tempered sampling for kernel quadrature.

The driver runs a tempered particle ladder and, at each temperature,
estimates the quadrature error a size-n rule built from the current
particles would achieve (a bootstrap over random subsets).  A trend test
on the recent history decides when the error has stopped improving; the
rule is then fitted on particles from the best recent temperature, and
only those n states are ever passed to the integrand.

The kernel-learning variant additionally evaluates the integrand on a
small random subset each temperature (all evaluations cached), refits
kernel parameters by a marginal-likelihood criterion, monitors the
error-times-norm product instead, and builds the final rule on every
cached evaluation point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .kernels import (
    KernelHandle,
    GaussianKernel,
    GaussianMeasure,
    double_integral,
    embedding_vector,
    gram_matrix,
)
from .quadrature import (
    DEFAULT_NUGGET,
    GramSingularError,
    NuggetPolicy,
    chol_factor_with_nugget,
    dedupe,
    kq_estimate,
    kq_fit,
    worst_case_error,
)
from .smc import (
    ParticleSystem,
    ProposalPolicy,
    TemperedTarget,
    init_particles,
    next_temperature,
    smc_step,
)

__all__ = [
    "TraceEntry",
    "ErrorTrace",
    "EvalCache",
    "RunReport",
    "KernelFamily",
    "InsufficientStatesError",
    "gaussian_lengthscale_family",
    "crit",
    "trend_test",
    "select_rule_entry",
    "kern_param_fit",
    "marginal_likelihood_objective",
    "crit_kl",
    "smc_kq",
    "smc_kq_kl",
    "temperature_error_profile",
]

TREND_WINDOW = 5


class InsufficientStatesError(ValueError):
    """Fewer unique particle states than quadrature nodes requested."""


@dataclass(frozen=True)
class TraceEntry:
    """One temperature of a run: (t, monitored error statistic, nugget)."""

    t: float
    error: float
    nugget: float


@dataclass
class ErrorTrace:
    """Error history along the ladder, ordered by strictly increasing t."""

    entries: list[TraceEntry] = field(default_factory=list)
    window: int = TREND_WINDOW

    def append(self, entry: TraceEntry) -> None:
        if self.entries and entry.t <= self.entries[-1].t:
            raise ValueError("trace temperatures must strictly increase")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ts(self) -> np.ndarray:
        return np.asarray([e.t for e in self.entries])

    @property
    def errors(self) -> np.ndarray:
        return np.asarray([e.error for e in self.entries])


class EvalCache:
    """Bitwise-keyed cache of integrand evaluations, insertion ordered.

    A point is evaluated at most once; the number of cache entries is the
    number of integrand calls made through the cache.
    """

    def __init__(self):
        self._values: dict[bytes, float] = {}
        self._points: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._values)

    def evaluate(self, f: Callable[[np.ndarray], np.ndarray],
                 X: np.ndarray) -> np.ndarray:
        """Values of f at the rows of X, evaluating only unseen rows."""
        X = np.asarray(X, dtype=float)
        keys = [X[i].tobytes() for i in range(X.shape[0])]
        seen: set[bytes] = set()
        missing = []
        for i, k in enumerate(keys):
            if k not in self._values and k not in seen:
                missing.append(i)
                seen.add(k)
        if missing:
            fresh = np.asarray(f(X[missing]), dtype=float).reshape(len(missing))
            for j, i in enumerate(missing):
                self._values[keys[i]] = float(fresh[j])
                self._points.append(X[i].copy())
        return np.asarray([self._values[k] for k in keys])

    def points(self) -> np.ndarray:
        """All cached points, insertion order, shape (m, d)."""
        if not self._points:
            raise ValueError("cache is empty")
        return np.vstack(self._points)

    def values(self) -> np.ndarray:
        """Cached values in the same order as points()."""
        return np.asarray([self._values[p.tobytes()] for p in self._points])


@dataclass(frozen=True)
class RunReport:
    """Outcome of an adaptive run.

    total_f_evals counts distinct integrand evaluations; for the fixed
    kernel driver it equals the rule size exactly.
    """

    estimate: float
    t_star: float
    n_quadrature_points: int
    total_f_evals: int
    trace: ErrorTrace
    seed: int
    kernel_params_final: np.ndarray | None = None
    final_nugget: float = 0.0


def _bootstrap_error(kernel: KernelHandle, measure: GaussianMeasure | None,
                     states: np.ndarray, n: int, m_boot: int,
                     rng: np.random.Generator,
                     policy: NuggetPolicy) -> tuple[float, float]:
    """Mean squared worst-case error over random size-n subsets.

    Returns (mean of e_n^2, max nugget used).  The Gram matrix and
    embeddings over the unique states are assembled once and sliced per
    subset.
    """
    if n < 1:
        raise ValueError("subset size must be >= 1")
    if m_boot < 1:
        raise ValueError("m_boot must be >= 1")
    unique = dedupe(states)
    m = unique.shape[0]
    if m < n:
        raise InsufficientStatesError(
            f"need {n} unique states, particle system has {m}"
        )
    K = gram_matrix(kernel, unique)
    z = embedding_vector(kernel, measure, unique)
    e0_sq = double_integral(kernel, measure)
    total, max_nugget = 0.0, 0.0
    for _ in range(m_boot):
        idx = rng.choice(m, size=n, replace=False)
        Ks = K[np.ix_(idx, idx)]
        zs = z[idx]
        L, nugget = chol_factor_with_nugget(Ks, policy)
        w = scipy.linalg.cho_solve((L, True), zs, check_finite=False)
        err = worst_case_error(Ks, zs, w, e0_sq)
        total += err * err
        max_nugget = max(max_nugget, nugget)
    return total / m_boot, max_nugget


def crit(kernel: KernelHandle, measure: GaussianMeasure | None, states,
         n: int, m_boot: int, rng: np.random.Generator,
         policy: NuggetPolicy = DEFAULT_NUGGET) -> float:
    """Bootstrap estimate of the error a size-n rule would achieve.

    Draws m_boot subsets of n unique states uniformly without
    replacement, fits quadrature weights on each, and returns the root
    mean of the squared worst-case errors.
    """
    mean_sq, _ = _bootstrap_error(kernel, measure, np.asarray(states, float),
                                  n, m_boot, rng, policy)
    return float(np.sqrt(mean_sq))


def trend_test(trace: ErrorTrace) -> bool:
    """True when the recent error trend says to stop.

    Needs at least `window` entries; then fits a least-squares line of
    the monitored error against temperature over the most recent window
    and reports termination on a strictly positive slope.
    """
    k = trace.window
    if len(trace) < k:
        return False
    ts = trace.ts[-k:]
    errs = trace.errors[-k:]
    tc = ts - ts.mean()
    slope = float(tc @ (errs - errs.mean())) / float(tc @ tc)
    return slope > 0.0


def select_rule_entry(trace: ErrorTrace) -> int:
    """Index of the trace entry the final rule should be built from.

    Replays the trend test along the trace: at the first terminating
    prefix, picks the smallest-error entry of the trailing window; if no
    prefix terminates, picks the last entry.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    for i in range(len(trace)):
        prefix = ErrorTrace(entries=trace.entries[:i + 1], window=trace.window)
        if trend_test(prefix):
            lo = max(0, i - trace.window + 1)
            window_errors = trace.errors[lo:i + 1]
            return lo + int(np.argmin(window_errors))
    return len(trace) - 1


@dataclass(frozen=True)
class KernelFamily:
    """Parametric kernel family searched over a box in log-parameter space.

    build maps a natural-scale parameter vector to a kernel; log_bounds
    is a sequence of (low, high) pairs for each log-parameter.
    """

    build: Callable[[np.ndarray], KernelHandle]
    log_bounds: Sequence[tuple[float, float]]


def gaussian_lengthscale_family(d: int = 1, low: float = 0.05,
                                high: float = 5.0,
                                isotropic: bool = True) -> KernelFamily:
    """Gaussian kernels parameterised by lengthscale(s) in [low, high]."""
    if isotropic:
        return KernelFamily(
            build=lambda p: GaussianKernel(np.full(d, float(p[0]))),
            log_bounds=[(np.log(low), np.log(high))],
        )
    return KernelFamily(
        build=lambda p: GaussianKernel(np.asarray(p, dtype=float)),
        log_bounds=[(np.log(low), np.log(high))] * d,
    )


def marginal_likelihood_objective(f_values, points, kernel: KernelHandle,
                                  policy: NuggetPolicy = DEFAULT_NUGGET) -> float:
    """f'(K + nugget I)^-1 f + log det(K + nugget I) via Cholesky."""
    f = np.asarray(f_values, dtype=float)
    X = np.asarray(points, dtype=float)
    K = gram_matrix(kernel, X)
    L, _ = chol_factor_with_nugget(K, policy)
    half = scipy.linalg.solve_triangular(L, f, lower=True, check_finite=False)
    return float(half @ half) + 2.0 * float(np.sum(np.log(np.diag(L))))


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_SCAN_POINTS = 33


def _safe_eval(fun, x):
    try:
        v = fun(x)
    except GramSingularError:
        return np.inf
    return v if np.isfinite(v) else np.inf


def _golden_section(fun, lo, hi, tol=1e-3):
    """Golden-section minimiser on [lo, hi]; non-finite values -> +inf."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = _safe_eval(fun, x1), _safe_eval(fun, x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = _safe_eval(fun, x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = _safe_eval(fun, x2)
    mid = 0.5 * (a + b)
    return mid, _safe_eval(fun, mid)


def _line_minimize(fun, lo, hi, tol=1e-3):
    """Coarse scan for the dominant basin, then golden-section refinement.

    The marginal-likelihood objective is often multimodal across a wide
    parameter range, so a unimodal search over [lo, hi] can settle in the
    wrong basin; the scan brackets the best coarse point first.
    """
    grid = np.linspace(lo, hi, _SCAN_POINTS)
    vals = [_safe_eval(fun, g) for g in grid]
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, _SCAN_POINTS - 1)]
    best, val = _golden_section(fun, a, b, tol)
    if vals[i] < val:
        return float(grid[i]), vals[i]
    return best, val


def kern_param_fit(f_values, points, family: KernelFamily,
                   policy: NuggetPolicy = DEFAULT_NUGGET,
                   cycles: int = 3) -> np.ndarray:
    """Marginal-likelihood kernel parameters on the given evaluations.

    Minimises f'(K+nugget I)^-1 f + log det(K+nugget I) over the family's
    log-parameter box: a scanned line search for one parameter, cyclic
    coordinate descent with scanned line searches otherwise.  Returns
    natural-scale parameters.
    """
    f = np.asarray(f_values, dtype=float)
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if f.shape[0] != X.shape[0] or X.shape[0] < 2:
        raise ValueError("need matching f_values and at least two points")
    bounds = list(family.log_bounds)
    if np.allclose(f, 0.0):
        warnings.warn("integrand values are identically zero; kernel fit is "
                      "driven by the determinant term only", RuntimeWarning)

    def objective(log_p):
        kernel = family.build(np.exp(log_p))
        return marginal_likelihood_objective(f, X, kernel, policy)

    log_p = np.asarray([0.5 * (lo + hi) for lo, hi in bounds])
    if len(bounds) == 1:
        best, val = _line_minimize(lambda v: objective(np.asarray([v])),
                                   bounds[0][0], bounds[0][1])
        log_p = np.asarray([best])
        if not np.isfinite(val):
            raise GramSingularError([], (np.nan, np.nan))
        return np.exp(log_p)
    current = np.inf
    for _ in range(cycles):
        for j, (lo, hi) in enumerate(bounds):
            def line(v, j=j):
                trial = log_p.copy()
                trial[j] = v
                return objective(trial)
            best, val = _line_minimize(line, lo, hi)
            if np.isfinite(val):
                log_p[j] = best
                current = val
    if not np.isfinite(current):
        raise GramSingularError([], (np.nan, np.nan))
    return np.exp(log_p)


def crit_kl(cache: EvalCache, f: Callable[[np.ndarray], np.ndarray],
            kernel: KernelHandle, measure: GaussianMeasure | None, states,
            n: int, m_boot: int, rng: np.random.Generator,
            policy: NuggetPolicy = DEFAULT_NUGGET) -> float:
    """Error statistic scaled by the interpolant norm of the integrand.

    The first n rows of states are the designated kernel-learning subset;
    their integrand values come from the cache (evaluating on miss).  The
    statistic is crit(...) times sqrt(f' K^-1 f) on that subset, so it
    scales linearly with the integrand.
    """
    states = np.asarray(states, dtype=float)
    if states.shape[0] < n:
        raise InsufficientStatesError(f"need at least {n} states")
    subset = states[:n]
    f_vals = cache.evaluate(f, subset)
    mean_sq, _ = _bootstrap_error(kernel, measure, states, n, m_boot, rng,
                                  policy)
    K = gram_matrix(kernel, subset)
    L, _ = chol_factor_with_nugget(K, policy)
    half = scipy.linalg.solve_triangular(L, f_vals, lower=True,
                                         check_finite=False)
    norm_sq = float(half @ half)
    return float(np.sqrt(mean_sq) * np.sqrt(max(norm_sq, 0.0)))


def _run_ladder(target: TemperedTarget, reference, rho: float, delta: float,
                n_particles: int, proposal: ProposalPolicy,
                rng: np.random.Generator, sweeps: int, max_steps: int,
                record, terminate_early: bool):
    """Shared ladder loop: record(system) -> TraceEntry at each temperature.

    Returns (trace, snapshots); snapshots[i] is the particle system the
    i-th trace entry was computed from.
    """
    system = init_particles(reference, n_particles, rng)
    trace = ErrorTrace()
    snapshots = [system]
    trace.append(record(system))
    while system.t < 1.0:
        if terminate_early and trend_test(trace):
            break
        if len(trace) > max_steps:
            raise RuntimeError(f"temperature ladder exceeded {max_steps} steps")
        t_next = next_temperature(system, target, rho, delta)
        system = smc_step(system, target, t_next, rho, proposal, rng,
                          sweeps=sweeps)
        snapshots.append(system)
        trace.append(record(system))
    return trace, snapshots


def _select_nodes(system: ParticleSystem, n: int,
                  rng: np.random.Generator) -> np.ndarray:
    unique = dedupe(system.states)
    if unique.shape[0] < n:
        raise InsufficientStatesError(
            f"need {n} unique states at the selected temperature, "
            f"have {unique.shape[0]}"
        )
    idx = rng.choice(unique.shape[0], size=n, replace=False)
    return unique[idx]


def smc_kq(f: Callable[[np.ndarray], np.ndarray],
           log_target: Callable[[np.ndarray], np.ndarray],
           kernel: KernelHandle, reference, *,
           measure: GaussianMeasure | None = None,
           support: tuple | None = None,
           n: int, n_particles: int, rho: float = 0.95, delta: float = 0.1,
           m_boot: int = 20,
           proposal: ProposalPolicy = ProposalPolicy(),
           nugget: NuggetPolicy = DEFAULT_NUGGET,
           sweeps: int = 1, max_steps: int = 1000,
           terminate_early: bool = True, seed: int = 0) -> RunReport:
    """Adaptively tempered kernel quadrature with a fixed kernel.

    Runs the tempered ladder from the reference towards the target,
    monitoring the bootstrap error statistic of a prospective size-n rule
    at each temperature.  When the trend test fires, the rule is built
    from n unique states of the best recent temperature; the integrand is
    evaluated only on those n points.  If the ladder reaches t = 1
    without terminating, the t = 1 particles are used, which recovers
    standard kernel quadrature under target sampling.

    Parameters
    ----------
    f : callable
        Batched integrand, (m, d) -> (m,).
    log_target : callable
        Batched log-density of the target (unnormalised is fine when the
        kernel is a Stein kernel).
    kernel : GaussianKernel or SteinKernel
    reference : object with sample(rng, size) and log_density(X)
    measure : GaussianMeasure, optional
        Integration measure for Gaussian kernels; ignored by Stein kernels.
    support : (lower, upper), optional
        Box constraint enforced along the whole path.
    n : int
        Quadrature rule size (also the exact number of integrand calls).
    n_particles : int
        Particle count; must be at least 2 n.
    """
    if n_particles < 2 * n:
        raise ValueError("n_particles must be at least 2 * n")
    rng = np.random.default_rng(seed)
    target = TemperedTarget(log_ref=reference.log_density,
                            log_target=log_target, support=support)

    def record(system: ParticleSystem) -> TraceEntry:
        mean_sq, max_nugget = _bootstrap_error(
            kernel, measure, system.states, n, m_boot, rng, nugget)
        return TraceEntry(t=system.t, error=float(np.sqrt(mean_sq)),
                          nugget=max_nugget)

    trace, snapshots = _run_ladder(target, reference, rho, delta, n_particles,
                                   proposal, rng, sweeps, max_steps, record,
                                   terminate_early)
    # a forced full ladder is the fixed-sampling baseline: use the t=1 rule
    chosen = select_rule_entry(trace) if terminate_early else len(trace) - 1
    system = snapshots[chosen]
    nodes = _select_nodes(system, n, rng)
    rule = kq_fit(kernel, measure, nodes, nugget)
    estimate = kq_estimate(rule, f(nodes))
    return RunReport(estimate=estimate, t_star=trace.entries[chosen].t,
                     n_quadrature_points=n, total_f_evals=n, trace=trace,
                     seed=seed, final_nugget=rule.nugget_used)


def smc_kq_kl(f: Callable[[np.ndarray], np.ndarray],
              log_target: Callable[[np.ndarray], np.ndarray],
              family: KernelFamily, reference, *,
              measure: GaussianMeasure | None = None,
              support: tuple | None = None,
              n: int, n_particles: int, rho: float = 0.95, delta: float = 0.1,
              m_boot: int = 20,
              proposal: ProposalPolicy = ProposalPolicy(),
              nugget: NuggetPolicy = DEFAULT_NUGGET,
              sweeps: int = 1, max_steps: int = 1000, refit_every: int = 1,
              terminate_early: bool = True, seed: int = 0) -> RunReport:
    """Adaptively tempered kernel quadrature with kernel learning.

    Like the fixed-kernel driver, but each temperature draws a fresh
    size-n subset of the unique particle states, evaluates the integrand
    there through a cache, refits kernel parameters by marginal
    likelihood (every refit_every temperatures), and monitors the
    bootstrap error statistic times the interpolant norm.  The final rule
    is fitted on every cached evaluation point with the parameters from
    the selected temperature, so no integrand evaluation is wasted.
    """
    if n_particles < 2 * n:
        raise ValueError("n_particles must be at least 2 * n")
    if refit_every < 1:
        raise ValueError("refit_every must be >= 1")
    rng = np.random.default_rng(seed)
    target = TemperedTarget(log_ref=reference.log_density,
                            log_target=log_target, support=support)
    cache = EvalCache()
    state = {"params": None, "since_fit": 0, "entry_params": []}

    def record(system: ParticleSystem) -> TraceEntry:
        unique = dedupe(system.states)
        if unique.shape[0] < n:
            raise InsufficientStatesError(
                f"need {n} unique states, have {unique.shape[0]}")
        idx = rng.choice(unique.shape[0], size=n, replace=False)
        subset = unique[idx]
        f_sub = cache.evaluate(f, subset)
        if state["params"] is None or state["since_fit"] >= refit_every:
            state["params"] = kern_param_fit(f_sub, subset, family, nugget)
            state["since_fit"] = 0
        state["since_fit"] += 1
        kernel = family.build(state["params"])
        state["entry_params"].append(state["params"])
        rest = unique[np.setdiff1d(np.arange(unique.shape[0]), idx,
                                   assume_unique=False)]
        ordered = np.vstack([subset, rest])
        mean_sq, max_nugget = _bootstrap_error(
            kernel, measure, ordered, n, m_boot, rng, nugget)
        K = gram_matrix(kernel, subset)
        L, _ = chol_factor_with_nugget(K, nugget)
        half = scipy.linalg.solve_triangular(L, f_sub, lower=True,
                                             check_finite=False)
        stat = float(np.sqrt(mean_sq) * np.sqrt(max(float(half @ half), 0.0)))
        return TraceEntry(t=system.t, error=stat, nugget=max_nugget)

    trace, _ = _run_ladder(target, reference, rho, delta, n_particles,
                           proposal, rng, sweeps, max_steps, record,
                           terminate_early)
    chosen = select_rule_entry(trace) if terminate_early else len(trace) - 1
    params = state["entry_params"][chosen]
    kernel = family.build(params)
    points = cache.points()
    rule = kq_fit(kernel, measure, points, nugget)
    estimate = kq_estimate(rule, cache.values())
    return RunReport(estimate=estimate, t_star=trace.entries[chosen].t,
                     n_quadrature_points=points.shape[0],
                     total_f_evals=len(cache), trace=trace, seed=seed,
                     kernel_params_final=np.asarray(params),
                     final_nugget=rule.nugget_used)


def temperature_error_profile(log_target: Callable[[np.ndarray], np.ndarray],
                              kernel: KernelHandle, reference, ladder, *,
                              measure: GaussianMeasure | None = None,
                              support: tuple | None = None,
                              n: int, n_particles: int, rho: float = 0.95,
                              m_boot: int = 20,
                              proposal: ProposalPolicy = ProposalPolicy(),
                              nugget: NuggetPolicy = DEFAULT_NUGGET,
                              sweeps: int = 1, seed: int = 0):
    """Error statistic along a fixed temperature ladder.

    Runs the particle system through the given strictly increasing
    temperatures (starting at 0) and records the bootstrap error
    statistic at each.  Returns (trace, snapshots) for diagnostics such
    as locating the error-minimising temperature.
    """
    ladder = np.asarray(ladder, dtype=float)
    if ladder.ndim != 1 or ladder[0] != 0.0 or np.any(np.diff(ladder) <= 0):
        raise ValueError("ladder must start at 0 and strictly increase")
    if ladder[-1] > 1.0:
        raise ValueError("ladder must stay within [0, 1]")
    rng = np.random.default_rng(seed)
    target = TemperedTarget(log_ref=reference.log_density,
                            log_target=log_target, support=support)
    system = init_particles(reference, n_particles, rng)
    trace = ErrorTrace()
    snapshots = [system]

    def record(sys_):
        mean_sq, max_nugget = _bootstrap_error(
            kernel, measure, sys_.states, n, m_boot, rng, nugget)
        return TraceEntry(t=sys_.t, error=float(np.sqrt(mean_sq)),
                          nugget=max_nugget)

    trace.append(record(system))
    for t_next in ladder[1:]:
        system = smc_step(system, target, float(t_next), rho, proposal, rng,
                          sweeps=sweeps)
        snapshots.append(system)
        trace.append(record(system))
    return trace, snapshots
