"""Log-domain Sinkhorn solver with Hilbert-metric convergence diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clouds import EotProblem, squared_distances

#: above this many kernel entries, gamma(K) is estimated by random sampling
GAMMA_EXACT_CAP = 4096
GAMMA_SAMPLE_COUNT = 1_000_000

#: sentinel for potentials known to be at the fixed point
CONVERGED = math.inf


@dataclass(frozen=True)
class KernelMatrix:
    """Gibbs kernel stored in log domain: entry (i,j) = -||X_i-Y_j||^2 / (2 eps)."""

    log_entries: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_entries.shape


@dataclass(frozen=True)
class DualPotentials:
    """Dual potentials (f, g) after `iteration` full Sinkhorn updates."""

    f: np.ndarray
    g: np.ndarray
    iteration: float = 0
    g_normalized: bool = False

    def __post_init__(self):
        f = np.asarray(self.f, dtype=np.float64)
        g = np.asarray(self.g, dtype=np.float64)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValueError("potentials must be finite")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @classmethod
    def initial(cls, m: int, n: int) -> "DualPotentials":
        return cls(np.zeros(m), np.zeros(n), iteration=0)


@dataclass(frozen=True)
class StoppingRule:
    """Exactly one of: fixed iteration count, marginal-error tolerance,
    Hilbert-error tolerance on successive v iterates."""

    max_iterations: int | None = None
    marginal_tol: float | None = None
    hilbert_tol: float | None = None
    iteration_cap: int = 100_000

    def __post_init__(self):
        given = [
            x
            for x in (self.max_iterations, self.marginal_tol, self.hilbert_tol)
            if x is not None
        ]
        if len(given) != 1:
            raise ValueError("exactly one stopping criterion must be given")

    @property
    def budget(self) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return self.iteration_cap


@dataclass
class HilbertDiagnostics:
    gamma_K: float
    lambda_K: float
    tanh_bound: float
    per_iteration_hilbert_error: list[float] = field(default_factory=list)
    dual_objectives: list[float] = field(default_factory=list)
    marginal_errors: list[float] = field(default_factory=list)
    gamma_approximate: bool = False
    reference_approximate: bool = False

    def to_csv(self, path: str | Path) -> None:
        """Columns: k, hilbert_error_v, dual_objective, marginal_error."""
        n = max(
            len(self.per_iteration_hilbert_error),
            len(self.dual_objectives),
            len(self.marginal_errors),
        )

        def cell(xs, k):
            return repr(float(xs[k])) if k < len(xs) else ""

        with open(path, "w") as fh:
            fh.write("k,hilbert_error_v,dual_objective,marginal_error\n")
            for k in range(n):
                fh.write(
                    f"{k + 1},{cell(self.per_iteration_hilbert_error, k)},"
                    f"{cell(self.dual_objectives, k)},{cell(self.marginal_errors, k)}\n"
                )


def build_kernel(problem: EotProblem) -> KernelMatrix:
    sq = squared_distances(problem.source.points, problem.target.points)
    return KernelMatrix(-sq / (2.0 * problem.epsilon))


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    hi = np.max(a, axis=axis, keepdims=True)
    out = hi.squeeze(axis) + np.log(np.sum(np.exp(a - hi), axis=axis))
    return out


def _f_update(logk: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    n = logk.shape[1]
    return -eps * (_logsumexp(g[None, :] / eps + logk, axis=1) - math.log(n))


def _g_update(logk: np.ndarray, f: np.ndarray, eps: float) -> np.ndarray:
    m = logk.shape[0]
    return -eps * (_logsumexp(f[:, None] / eps + logk, axis=0) - math.log(m))


def sinkhorn_iterate(
    problem: EotProblem,
    state: DualPotentials,
    kernel: KernelMatrix | None = None,
) -> DualPotentials:
    """One full iteration: f-update (argmax over f) then g-update, in log domain."""
    if kernel is None:
        kernel = build_kernel(problem)
    logk = kernel.log_entries
    eps = problem.epsilon
    f = _f_update(logk, state.g, eps)
    g = _g_update(logk, f, eps)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise FloatingPointError("non-finite potentials in Sinkhorn update")
    return DualPotentials(f, g, iteration=state.iteration + 1)


def sinkhorn_iterate_scaling(
    problem: EotProblem,
    u: np.ndarray,
    v: np.ndarray,
    kernel: KernelMatrix | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Matrix-scaling twin of `sinkhorn_iterate` (u = exp(f/eps), v = exp(g/eps)).

    Exists only for the log/scaling equivalence test; overflows for large
    |log entries| and must not be used on production paths.
    """
    if kernel is None:
        kernel = build_kernel(problem)
    k = np.exp(kernel.log_entries)
    m, n = k.shape
    u_new = n / (k @ v)
    v_new = m / (k.T @ u_new)
    return u_new, v_new


def log_coupling(
    problem: EotProblem,
    potentials: DualPotentials,
    kernel: KernelMatrix | None = None,
) -> np.ndarray:
    if kernel is None:
        kernel = build_kernel(problem)
    eps = problem.epsilon
    return (potentials.f[:, None] + potentials.g[None, :]) / eps + kernel.log_entries


def coupling_density(
    problem: EotProblem,
    potentials: DualPotentials,
    kernel: KernelMatrix | None = None,
) -> np.ndarray:
    """Density of the induced coupling w.r.t. the product of empirical measures.

    The coupling mass at (i,j) is entry (i,j) divided by m*n.
    """
    return np.exp(log_coupling(problem, potentials, kernel))


def marginal_error(
    problem: EotProblem,
    potentials: DualPotentials,
    kernel: KernelMatrix | None = None,
) -> float:
    """Max l1 deviation of the coupling marginals from the uniform marginals."""
    lp = log_coupling(problem, potentials, kernel)
    m, n = lp.shape
    rows = np.exp(_logsumexp(lp, axis=1) - math.log(m * n))
    cols = np.exp(_logsumexp(lp, axis=0) - math.log(m * n))
    return float(
        max(np.sum(np.abs(rows - 1.0 / m)), np.sum(np.abs(cols - 1.0 / n)))
    )


def dual_objective(
    problem: EotProblem,
    potentials: DualPotentials,
    kernel: KernelMatrix | None = None,
) -> float:
    """Empirical dual objective with uniform averages over both clouds."""
    if kernel is None:
        kernel = build_kernel(problem)
    m, n = kernel.shape
    lp = log_coupling(problem, potentials, kernel)
    mean_exp = math.exp(float(_logsumexp(lp.reshape(-1), axis=0)) - math.log(m * n))
    return (
        float(np.mean(potentials.f))
        + float(np.mean(potentials.g))
        - problem.epsilon * (mean_exp - 1.0)
    )


def hilbert_metric(u: np.ndarray, w: np.ndarray) -> float:
    """Hilbert projective (pseudo-)metric on strictly positive vectors."""
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if u.shape != w.shape:
        raise ValueError("vectors must have equal length")
    if np.any(u <= 0) or np.any(w <= 0):
        raise ValueError("Hilbert metric requires strictly positive entries")
    return hilbert_metric_log(np.log(u), np.log(w))


def hilbert_metric_log(log_u: np.ndarray, log_w: np.ndarray) -> float:
    """Hilbert metric from log-coordinates; safe for extreme magnitudes."""
    diff = np.asarray(log_u) - np.asarray(log_w)
    return float(np.max(diff) + np.max(-diff))


def normalize_g(potentials: DualPotentials) -> DualPotentials:
    """Shift (f, g) -> (f + mean(g), g - mean(g)) so that mean(g) = 0."""
    c = float(np.mean(potentials.g))
    return DualPotentials(
        potentials.f + c,
        potentials.g - c,
        iteration=potentials.iteration,
        g_normalized=True,
    )


def _max_quadruple_inner(
    x: np.ndarray, y: np.ndarray, rng: np.random.Generator | None
) -> tuple[float, bool]:
    """max over (i,j,k,l) of (X_i - X_j)^T (Y_k - Y_l); exact below the cap."""
    m, n = x.shape[0], y.shape[0]
    if m * n <= GAMMA_EXACT_CAP:
        d = x @ y.T
        # m1[k,l] = max_i (D_ik - D_il); the quadruple max is
        # max_{k,l} m1[k,l] + m1[l,k]
        m1 = np.full((n, n), -np.inf)
        for lo in range(0, m, 64):
            block = d[lo : lo + 64]
            np.maximum(m1, np.max(block[:, :, None] - block[:, None, :], axis=0), out=m1)
        return float(np.max(m1 + m1.T)), False
    if rng is None:
        rng = np.random.default_rng(0)
    best = 0.0
    chunk = 250_000
    for _ in range(GAMMA_SAMPLE_COUNT // chunk):
        i, j = rng.integers(0, m, size=(2, chunk))
        k, l = rng.integers(0, n, size=(2, chunk))
        vals = np.einsum("ab,ab->a", x[i] - x[j], y[k] - y[l])
        best = max(best, float(np.max(vals)))
    return best, True


def contraction_bound(
    problem: EotProblem, rng: np.random.Generator | None = None
) -> HilbertDiagnostics:
    """gamma(K), lambda(K) and the tanh(R^2/eps) bound for this instance."""
    eps = problem.epsilon
    s, approx = _max_quadruple_inner(
        problem.source.points, problem.target.points, rng
    )
    # lambda = (sqrt(gamma)-1)/(sqrt(gamma)+1) = tanh(log(gamma)/4);
    # gamma = exp(s/eps) may overflow, the tanh form never does
    # clamp: tanh may round to 1.0 in floats, but lambda is strictly below 1
    lam = min(math.tanh(s / (4.0 * eps)), math.nextafter(1.0, 0.0))
    gamma = math.exp(s / eps) if s / eps < 700 else math.inf
    bound = math.tanh(problem.radius**2 / eps)
    return HilbertDiagnostics(
        gamma_K=gamma, lambda_K=lam, tanh_bound=bound, gamma_approximate=approx
    )


def _reference_log_v(
    problem: EotProblem, kernel: KernelMatrix, cap: int
) -> tuple[np.ndarray, bool]:
    state, errs = _pipelined_loop(problem, kernel, cap, marginal_tol=1e-12)
    return state.g / problem.epsilon, errs[-1] > 1e-12 if errs else True


def _pipelined_loop(
    problem: EotProblem,
    kernel: KernelMatrix,
    budget: int,
    marginal_tol: float | None = None,
    hilbert_tol: float | None = None,
    per_iteration=None,
) -> tuple[DualPotentials, list[float]]:
    """Core iteration loop. Marginal errors come for free: after a full
    update the column marginals are exact, and the row marginal of state k
    is (1/m) exp((f_k - f_{k+1})/eps), so the next f half-update (which the
    following iteration reuses) is all that is needed."""
    logk = kernel.log_entries
    m, _ = logk.shape
    eps = problem.epsilon
    errors: list[float] = []
    prev_log_v = np.zeros(logk.shape[1])
    f = _f_update(logk, prev_log_v * eps, eps)
    for k in range(1, budget + 1):
        g = _g_update(logk, f, eps)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise FloatingPointError("non-finite potentials in Sinkhorn update")
        state = DualPotentials(f, g, iteration=k)
        f_next = _f_update(logk, g, eps)
        err = float(np.sum(np.abs(np.exp((f - f_next) / eps) - 1.0))) / m
        errors.append(err)
        log_v = g / eps
        if per_iteration is not None:
            per_iteration(state, err)
        if marginal_tol is not None and err <= marginal_tol:
            return state, errors
        if hilbert_tol is not None and hilbert_metric_log(log_v, prev_log_v) <= hilbert_tol:
            return state, errors
        prev_log_v = log_v
        f = f_next
    return state, errors


def run_sinkhorn(
    problem: EotProblem,
    stop: StoppingRule,
    track_reference: bool = False,
    track_objective: bool = False,
) -> tuple[DualPotentials, HilbertDiagnostics]:
    """Run Sinkhorn under `stop`; optionally record per-iteration Hilbert
    errors against a high-precision reference solution."""
    kernel = build_kernel(problem)
    diag = contraction_bound(problem)
    eps = problem.epsilon

    ref_log_v = None
    if track_reference:
        ref_log_v, approx = _reference_log_v(problem, kernel, 10 * stop.budget)
        diag.reference_approximate = approx

    if stop.max_iterations == 0:
        return DualPotentials.initial(*kernel.shape), diag

    def record(state: DualPotentials, err: float) -> None:
        diag.marginal_errors.append(err)
        if track_objective:
            diag.dual_objectives.append(dual_objective(problem, state, kernel))
        if ref_log_v is not None:
            diag.per_iteration_hilbert_error.append(
                hilbert_metric_log(state.g / eps, ref_log_v)
            )

    state, _ = _pipelined_loop(
        problem,
        kernel,
        stop.budget,
        marginal_tol=stop.marginal_tol,
        hilbert_tol=stop.hilbert_tol,
        per_iteration=record,
    )
    return state, diag
