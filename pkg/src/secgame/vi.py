"""Box-constrained variational inequality assembled from a game model.

The simultaneous first-order conditions of all retailers are encoded as the
VI: find X* in the box K with F(X*)^T (X - X*) >= 0 for every feasible X,
where X stacks (Q row-major, then u, then lambda) and F stacks

* F1[x, y]  -- marginal cost minus marginal revenue of shipping Q[x, y],
* F2[x]     -- marginal investment cost minus marginal security benefit,
                plus the multiplier pressure lambda / (1 - u),
* F3[x]     -- B + ln(1 - u), the negated budget gap, so that the projected
                multiplier update raises lambda while the budget is violated.

The flattened ordering is fixed so iterate traces are comparable across
implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, budget_gap

__all__ = [
    "U_CAP",
    "DecisionVector",
    "BoxVi",
    "ViProblem",
    "assemble_operator",
    "project",
    "natural_residual",
    "fd_check",
    "fd_check_random",
    "FdCheckReport",
]

# Hard cap on u strictly below 1 so -ln(1-u) stays finite; the budget itself
# is enforced through the multiplier dynamics, not through this bound.
U_CAP = 0.999999


@dataclass
class DecisionVector:
    """Stacked decision variables (Q, u, lambda) of all retailers.

    Flat layout: all of Q row-major, then u, then lambda.
    """

    Q: np.ndarray
    u: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        m = self.Q.shape[0]
        if self.Q.ndim != 2 or self.u.shape != (m,) or self.lam.shape != (m,):
            raise ValueError("inconsistent shapes for (Q, u, lambda)")

    @property
    def m(self):
        return self.Q.shape[0]

    @property
    def n(self):
        return self.Q.shape[1]

    def flat(self):
        return np.concatenate([self.Q.ravel(), self.u, self.lam])

    @classmethod
    def from_flat(cls, x, m, n):
        x = np.asarray(x, dtype=float)
        if x.shape != (m * n + 2 * m,):
            raise ValueError(f"expected flat vector of length {m * n + 2 * m}")
        return cls(x[: m * n].reshape(m, n).copy(), x[m * n : m * n + m].copy(),
                   x[m * n + m :].copy())

    def copy(self):
        return DecisionVector(self.Q.copy(), self.u.copy(), self.lam.copy())


class BoxVi:
    """A variational inequality F over a box: lower <= X <= upper."""

    def __init__(self, operator, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("bounds must be 1-d vectors of equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self._operator = operator

    @property
    def dim(self):
        return self.lower.size

    def operator(self, x):
        return self._operator(x)

    def project(self, x):
        """Componentwise clamp onto the box; idempotent and nonexpansive."""
        x = np.asarray(x, dtype=float)
        if x.shape != self.lower.shape:
            raise ValueError(f"expected vector of length {self.dim}")
        return np.clip(x, self.lower, self.upper)

    def natural_residual(self, x, fx=None):
        """Sup-norm of X - P_K[X - F(X)]; zero exactly at VI solutions."""
        x = np.asarray(x, dtype=float)
        if fx is None:
            fx = self.operator(x)
        return float(np.max(np.abs(x - self.project(x - fx))))

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def default_start(self):
        return self.project(np.zeros(self.dim))


class ViProblem(BoxVi):
    """The game VI: operator F(Q, u, lambda) plus the feasible box.

    Box: Q in [0, q_upper], u in [0, U_CAP], lambda in [0, inf).
    Dimension m*n + 2m.
    """

    def __init__(self, model: ModelSpec):
        self.model = model
        m, n = model.m, model.n
        self._m, self._n = m, n
        self._mn = m * n
        lower = np.zeros(m * n + 2 * m)
        upper = np.concatenate([
            np.full(m * n, model.q_upper),
            np.full(m, U_CAP),
            np.full(m, np.inf),
        ])
        super().__init__(self._assemble, lower, upper)
        # Pre-fused parameter arrays for the hot path: F1 collapses to
        # quad_coef * Q + const - price.
        self._quad_coef = 2.0 * model.cost_a * model.cost_s - model.alpha_vec
        self._f1_const = model.c_vec[:, None] + model.cost_b * model.cost_s
        self._alpha = model.alpha_vec
        self._gamma = model.gamma_vec
        self._kappa = model.kappa_vec
        self._gamma_over_m = model.gamma_vec / m
        M = model.mu_vec if model.loss_gradient_includes_multiplier else np.ones(m)
        self._DM = model.D_vec * M
        self._DM_over_m = self._DM / m
        self._B = model.B_vec

    def _assemble(self, x):
        m, n, mn = self._m, self._n, self._mn
        Q = x[:mn].reshape(m, n)
        u = x[mn : mn + m]
        lam = x[mn + m :]
        v = 1.0 - u
        if v.min() <= 0.0:
            raise ValueError("operator undefined at security level >= 1")
        d = Q.sum(axis=0)
        ubar = u.sum() / m
        rho = self._alpha * d + self._gamma * ubar + self._kappa
        out = np.empty(mn + 2 * m)
        f1 = out[:mn].reshape(m, n)
        np.multiply(self._quad_coef, Q, out=f1)
        f1 += self._f1_const
        f1 -= rho
        out[mn : mn + m] = ((1.0 + lam) / v - self._DM * (1.0 - ubar)
                            - self._DM_over_m * v - Q @ self._gamma_over_m)
        out[mn + m :] = self._B + np.log(v)
        return out

    def split(self, x):
        """View a flat vector as a DecisionVector."""
        return DecisionVector.from_flat(x, self._m, self._n)

    def default_start(self):
        """Conventional initial point: all quantities 1, levels and multipliers 0."""
        x0 = np.zeros(self.dim)
        x0[: self._mn] = 1.0
        return self.project(x0)

    def own_block_lagrangian(self, x_idx, Q, u, lam_x):
        """Retailer x_idx objective for the oracle: -E(U) + lambda * budget gap."""
        return (-self.model.expected_utility(x_idx, Q, u)
                + lam_x * budget_gap(u[x_idx], self.model.retailers[x_idx].B))


def assemble_operator(problem, x):
    """Evaluate the stacked operator F at a flat point x."""
    return problem.operator(np.asarray(x, dtype=float))


def project(problem, x):
    """Clamp a flat point onto the problem's box."""
    return problem.project(x)


def natural_residual(problem, x):
    """Sup-norm natural residual of the VI at a flat feasible point."""
    return problem.natural_residual(x)


@dataclass
class FdCheckReport:
    """Agreement between the assembled operator and central finite differences."""

    max_rel_error: float
    worst_retailer: int
    worst_coordinate: str
    q_errors: np.ndarray
    u_errors: np.ndarray

    def __str__(self):
        return (f"max relative error {self.max_rel_error:.3e} "
                f"(retailer {self.worst_retailer + 1}, {self.worst_coordinate})")


def _central_diff(f, h):
    return (f(h) - f(-h)) / (2.0 * h)


def fd_check(problem: ViProblem, x, step=1e-5):
    """Check F1 and F2 against central differences of each retailer's objective.

    Each retailer is differentiated in its own (Q row, u) block with rivals
    frozen; the oracle evaluates -expected_utility + lambda * budget_gap from
    the model's value functions, so it shares no code with the operator
    assembly.  Relative errors use the denominator max(1, |F|, |fd|).
    """
    if not 1e-7 <= step <= 1e-4:
        raise ValueError("step must lie in [1e-7, 1e-4]")
    x = np.asarray(x, dtype=float)
    m, n, mn = problem._m, problem._n, problem._mn
    margin = 2.0 * step
    qu = x[: mn + m]
    lo, hi = problem.lower[: mn + m], problem.upper[: mn + m]
    if np.any(qu < lo + margin) or np.any(qu > hi - margin):
        raise ValueError("point too close to a bound for central differencing")

    F = problem.operator(x)
    F1 = F[:mn].reshape(m, n)
    F2 = F[mn : mn + m]
    Q = x[:mn].reshape(m, n)
    u = x[mn : mn + m]
    lam = x[mn + m :]

    q_err = np.zeros((m, n))
    u_err = np.zeros(m)
    for xi in range(m):
        for y in range(n):
            def lag_q(delta, xi=xi, y=y):
                Qp = Q.copy()
                Qp[xi, y] += delta
                return problem.own_block_lagrangian(xi, Qp, u, lam[xi])

            fd = _central_diff(lag_q, step)
            denom = max(1.0, abs(F1[xi, y]), abs(fd))
            q_err[xi, y] = abs(F1[xi, y] - fd) / denom

        def lag_u(delta, xi=xi):
            up = u.copy()
            up[xi] += delta
            return problem.own_block_lagrangian(xi, Q, up, lam[xi])

        fd = _central_diff(lag_u, step)
        denom = max(1.0, abs(F2[xi]), abs(fd))
        u_err[xi] = abs(F2[xi] - fd) / denom

    if q_err.max(initial=0.0) >= u_err.max(initial=0.0):
        xi, y = np.unravel_index(int(np.argmax(q_err)), q_err.shape)
        worst = (float(q_err[xi, y]), int(xi), f"Q_{xi + 1}_{y + 1}")
    else:
        xi = int(np.argmax(u_err))
        worst = (float(u_err[xi]), xi, f"u_{xi + 1}")
    return FdCheckReport(worst[0], worst[1], worst[2], q_err, u_err)


def fd_check_random(problem: ViProblem, points=100, step=1e-5, seed=0):
    """Run fd_check at ``points`` interior samples; return the worst report.

    Samples stay away from the u singularity (u <= 0.9) and the box faces so
    the finite-difference truncation error itself stays well below the
    tolerances being checked.
    """
    if points < 1:
        raise ValueError("points must be positive")
    rng = np.random.default_rng(seed)
    m, n = problem._m, problem._n
    q_hi = problem.model.q_upper
    worst = None
    for _ in range(points):
        Q = rng.uniform(0.01 * q_hi, 0.99 * q_hi, size=(m, n))
        u = rng.uniform(0.02, 0.9, size=m)
        lam = rng.uniform(0.05, 2.0, size=m)
        rep = fd_check(problem, DecisionVector(Q, u, lam).flat(), step=step)
        if worst is None or rep.max_rel_error > worst.max_rel_error:
            worst = rep
    return worst
