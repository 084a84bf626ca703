"""Self-adaptive projection-contraction solver for box-constrained VIs.

One iteration predicts a trial point by projecting a scaled operator step,
measures the shrinkage ratio r = beta * |F(X) - F(Xt)| / |X - Xt|, retries
with a smaller beta while r exceeds its upper limit, then corrects along the
direction d = (X - Xt) - beta * (F(X) - F(Xt)) with relaxation rho.  When r
falls below its lower limit the step size is enlarged for the next
iteration.  Termination is on the sup-norm natural residual.

Also provides a Gauss-Seidel best-response driver (each retailer block is
solved by the same method with rivals frozen) and a grid-search equilibrium
verifier, both used as independent cross-checks of the main solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec
from .vi import U_CAP, BoxVi, DecisionVector, ViProblem

__all__ = [
    "SolverConfig",
    "SolverReport",
    "SolverNumericError",
    "DegenerateDirectionError",
    "predict",
    "correct",
    "solve",
    "best_response_solve",
    "verify_equilibrium",
    "VerificationReport",
]


class SolverNumericError(RuntimeError):
    """Operator evaluation produced a non-finite or out-of-domain value."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class DegenerateDirectionError(RuntimeError):
    """Correction direction vanished while the prediction step did not."""


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm parameters; the defaults follow standard practice.

    beta0   initial projection step size
    nu      ratio upper limit: predictions with r > nu are redone with a
            smaller beta
    mu      ratio lower limit: r <= mu allows beta to grow by 1.5x
    rho     relaxation factor of the correction step, in (0, 2)
    tol     sup-norm natural-residual stopping threshold
    """

    beta0: float = 1.0
    nu: float = 0.9
    mu: float = 0.3
    rho: float = 1.9
    tol: float = 1e-7
    max_iter: int = 200_000

    def __post_init__(self):
        if not 0.0 < self.mu < self.nu < 1.0:
            raise ValueError("need 0 < mu < nu < 1")
        if not 0.0 < self.rho < 2.0:
            raise ValueError("relaxation rho must lie in (0, 2)")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.beta0 <= 0.0:
            raise ValueError("beta0 must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass
class SolverReport:
    """Outcome of a solve.

    ``solution`` is the flat iterate (use ViProblem.split for the structured
    view).  ``final_residual`` is the stopping metric: the natural residual
    for ``solve``, the last sweep's maximum block change for
    ``best_response_solve``.  ``trace`` holds per-iteration
    (residual, beta, r) triples when recording was requested.
    """

    solution: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    beta_retries: int = 0
    trace: list = None


def predict(problem, x, beta, fx=None):
    """Projection step: Xt = P_K[X - beta * F(X)] plus the shrinkage ratio.

    Returns (x_tilde, f_tilde, r).  When the trial point coincides with X the
    ratio is 0 and f_tilde is fx (X already solves the VI).  Norms are
    Euclidean.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if fx is None:
        fx = problem.operator(x)
    x_tilde = problem.project(x - beta * fx)
    dx = x - x_tilde
    norm_dx = math.sqrt(float(dx @ dx))
    if norm_dx == 0.0:
        return x_tilde, fx, 0.0
    f_tilde = problem.operator(x_tilde)
    df = fx - f_tilde
    r = beta * math.sqrt(float(df @ df)) / norm_dx
    return x_tilde, f_tilde, r


def correct(x, x_tilde, beta, fx, f_tilde, rho):
    """Relaxed correction X+ = X - rho * delta * d along the favorable direction.

    d = (X - Xt) - beta * (F(X) - F(Xt)),  delta = (X - Xt).d / |d|^2.
    """
    dx = x - x_tilde
    d = dx - beta * (fx - f_tilde)
    dd = float(d @ d)
    if dd == 0.0:
        raise DegenerateDirectionError(
            "correction direction vanished; prediction and operator steps cancel")
    delta = float(dx @ d) / dd
    return x - rho * delta * d


def solve(problem, config=None, x0=None, record_trace=False, iterate_callback=None):
    """Run the projection-contraction iteration until the residual meets tol.

    Deterministic: identical inputs produce identical iterate sequences.
    Non-convergence within max_iter is reported (converged=False), not
    raised; non-finite operator values raise SolverNumericError.
    ``iterate_callback(k, x)`` is invoked after every accepted iteration.
    """
    if config is None:
        config = SolverConfig()
    x = problem.project(np.asarray(x0, dtype=float)) if x0 is not None else problem.default_start()
    beta = config.beta0
    retries = 0
    trace = [] if record_trace else None
    residual = math.inf
    iterations = 0

    for iterations in range(config.max_iter + 1):
        try:
            fx = problem.operator(x)
        except ValueError as exc:
            raise SolverNumericError(str(exc), iterations) from exc
        if not math.isfinite(float(fx.sum())):
            raise SolverNumericError("operator returned non-finite values", iterations)
        residual = problem.natural_residual(x, fx)
        if residual <= config.tol:
            return SolverReport(x, iterations, residual, True, retries, trace)
        if iterations == config.max_iter:
            break

        while True:
            x_tilde, f_tilde, r = predict(problem, x, beta, fx)
            if not math.isfinite(float(f_tilde.sum())):
                raise SolverNumericError("operator returned non-finite values", iterations)
            if r == 0.0 and np.array_equal(x_tilde, x):
                # Stalled: the projected step no longer moves the iterate.
                return SolverReport(x, iterations, residual, residual <= config.tol,
                                    retries, trace)
            if r <= config.nu:
                break
            beta *= (2.0 / 3.0) * min(1.0, 1.0 / r)
            retries += 1

        # Re-project the corrected point: the raw correction step can leave
        # the box, where the level cost -ln(1-u) is undefined.  Projection is
        # nonexpansive toward any feasible point, so contraction is kept.
        x = problem.project(correct(x, x_tilde, beta, fx, f_tilde, config.rho))
        if record_trace:
            trace.append((residual, beta, r))
        if r <= config.mu:
            beta *= 1.5
        if iterate_callback is not None:
            iterate_callback(iterations, x)

    return SolverReport(x, iterations, residual, False, retries, trace)


def _block_indices(problem: ViProblem, x_idx):
    n = problem.model.n
    m = problem.model.m
    mn = m * n
    q_idx = np.arange(x_idx * n, (x_idx + 1) * n)
    return np.concatenate([q_idx, [mn + x_idx], [mn + m + x_idx]])


class _BlockVi(BoxVi):
    """Retailer x's own-block VI with all rival variables frozen."""

    def __init__(self, parent: ViProblem, idx, frozen):
        self._parent = parent
        self._idx = idx
        self._frozen = frozen
        super().__init__(self._op, parent.lower[idx], parent.upper[idx])

    def _op(self, z):
        xf = self._frozen.copy()
        xf[self._idx] = z
        return self._parent.operator(xf)[self._idx]


def best_response_solve(problem: ViProblem, config=None, x0=None, max_sweeps=1000):
    """Gauss-Seidel best-response iteration over retailer blocks.

    Each sweep solves every retailer's (Q row, u, lambda) block to tolerance
    by the projection-contraction method with rivals frozen at their current
    values; sweeps repeat until the largest block change is at most
    config.tol.  The report counts sweeps in ``iterations`` and the last
    sweep's maximum block change in ``final_residual``.  If the change metric
    reaches no new minimum over 50 consecutive sweeps the run is flagged as
    cycling and reported unconverged.
    """
    if config is None:
        config = SolverConfig()
    x = problem.project(np.asarray(x0, dtype=float)) if x0 is not None else problem.default_start()
    m = problem.model.m
    blocks = [_block_indices(problem, xi) for xi in range(m)]
    retries = 0
    changes = []
    converged = False
    change = math.inf

    for _ in range(max_sweeps):
        change = 0.0
        for xi in range(m):
            idx = blocks[xi]
            sub = _BlockVi(problem, idx, x)
            rep = solve(sub, config, x0=x[idx])
            retries += rep.beta_retries
            change = max(change, float(np.max(np.abs(rep.solution - x[idx]))))
            x = x.copy()
            x[idx] = rep.solution
        changes.append(change)
        if change <= config.tol:
            converged = True
            break
        if len(changes) > 50 and min(changes[-50:]) >= min(changes[:-50]):
            break  # no progress in 50 sweeps: treat as cycling

    return SolverReport(x, len(changes), change, converged, retries)


@dataclass
class VerificationReport:
    """Best-response audit of a candidate equilibrium.

    ``improvements[x]`` is the largest gain in expected utility retailer x
    could find by grid search over its own feasible block with rivals fixed;
    the point is certified when every improvement is at most eps_br.
    """

    improvements: np.ndarray
    certified: bool
    eps_br: float
    grid_density: int
    best_points: list = field(default_factory=list)

    @property
    def max_improvement(self):
        return float(self.improvements.max())


def _utility_grid(model: ModelSpec, x_idx, rest_d, rest_u_sum, u_grid, q_grids):
    """Vectorized expected utility of retailer x over a lattice of own moves."""
    m = model.m
    r = model.retailers[x_idx]
    shape = (len(u_grid),) + tuple(len(g) for g in q_grids)
    u = u_grid.reshape((-1,) + (1,) * model.n)
    ubar = (rest_u_sum + u) / m
    revenue = np.zeros(shape)
    cost = np.zeros(shape)
    for y in range(model.n):
        qy = q_grids[y].reshape((1,) * (1 + y) + (-1,) + (1,) * (model.n - 1 - y))
        rho = model.alpha_vec[y] * (rest_d[y] + qy) + model.gamma_vec[y] * ubar \
            + model.kappa_vec[y]
        revenue = revenue + rho * qy
        tc = r.costs[y]
        cost = cost + (tc.a * qy * qy + tc.b * qy) * tc.s + r.c * qy
    total = revenue - cost
    p = (1.0 - u) * (1.0 - ubar) * r.mu
    total = total - r.D * p + np.log1p(-u)
    return total


def _grid_axes(lo, hi, density):
    return np.linspace(lo, hi, density)


def verify_equilibrium(model: ModelSpec, point: DecisionVector, grid_density=50,
                       eps_br=1e-3, refinements=2):
    """Certify the Nash property of a candidate point by brute-force search.

    For each retailer the own block (quantities over [0, q_upper]^n, level
    over the budget-feasible range) is scanned on a grid with rivals fixed,
    then the grid is refined around the best cell.  Purely diagnostic; a
    positive improvement means the retailer could deviate profitably.
    """
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    m, n = model.m, model.n
    improvements = np.zeros(m)
    best_points = []
    d_all = point.Q.sum(axis=0)
    u_sum = point.u.sum()

    for x_idx in range(m):
        rest_d = d_all - point.Q[x_idx]
        rest_u_sum = u_sum - point.u[x_idx]
        base = model.expected_utility(x_idx, point.Q, point.u)
        u_cap_x = min(U_CAP, 1.0 - math.exp(-model.retailers[x_idx].B))
        u_lo, u_hi = 0.0, u_cap_x
        q_lo = np.zeros(n)
        q_hi = np.full(n, model.q_upper)
        best_val, best_u, best_q = -math.inf, 0.0, np.zeros(n)

        for _ in range(refinements + 1):
            u_grid = _grid_axes(u_lo, u_hi, grid_density)
            q_grids = [_grid_axes(q_lo[y], q_hi[y], grid_density) for y in range(n)]
            vals = _utility_grid(model, x_idx, rest_d, rest_u_sum, u_grid, q_grids)
            flat = int(np.argmax(vals))
            idx = np.unravel_index(flat, vals.shape)
            cand = float(vals[idx])
            if cand > best_val:
                best_val = cand
                best_u = float(u_grid[idx[0]])
                best_q = np.array([q_grids[y][idx[1 + y]] for y in range(n)])
            # Zoom in one cell around the best coordinates.
            du = (u_hi - u_lo) / (grid_density - 1)
            u_lo = max(0.0, best_u - du)
            u_hi = min(u_cap_x, best_u + du)
            for y in range(n):
                dq = (q_hi[y] - q_lo[y]) / (grid_density - 1)
                q_lo[y] = max(0.0, best_q[y] - dq)
                q_hi[y] = min(model.q_upper, best_q[y] + dq)

        improvements[x_idx] = best_val - base
        best_points.append((best_q, best_u))

    certified = bool(np.all(improvements <= eps_br))
    return VerificationReport(improvements, certified, eps_br, grid_density, best_points)
