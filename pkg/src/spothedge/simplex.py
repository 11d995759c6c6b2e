"""Primal revised simplex for bounded-variable maximization LPs.

Two-phase method on the equality form obtained by giving every row a slack
(``<=`` rows get a slack in [0, inf), ``>=`` rows in (-inf, 0], ``==`` rows a
slack fixed at 0).  Phase 1 minimizes the sum of per-row artificial variables
sized to the initial residual; phase 2 maximizes the real objective with the
artificials fixed at zero.  Nonbasic variables sit at a finite bound (free
variables sit at zero and may move either way).

Pricing is Dantzig's largest reduced cost, switching to Bland's rule after
3*(rows+columns) consecutive non-improving iterations so that degenerate
programs terminate.  An explicit basis inverse is kept via eta updates and
refactorized from scratch every 50 pivots.
"""

from __future__ import annotations

import math

import numpy as np

from .linprog import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LpSolution,
    NumericalFailure,
)

FEASIBILITY_TOL = 1e-7
OPTIMALITY_TOL = 1e-9
PIVOT_TOL = 1e-11
REFACTOR_EVERY = 50

# nonbasic rest states; basic columns are tracked through the basis array
_AT_LOWER = 0
_AT_UPPER = 1
_FREE = 2
_BASIC = 3


class _State:
    """Equality-form tableau data shared by both phases."""

    def __init__(self, a, b, lower, upper, n_real):
        self.a = a  # (m, ncols) dense, slacks and artificials included
        self.b = b
        self.lower = lower
        self.upper = upper
        self.n_real = n_real  # structural + slack columns; the rest are artificial
        self.m, self.ncols = a.shape
        self.x = np.zeros(self.ncols)
        self.status = np.full(self.ncols, _AT_LOWER, dtype=np.int8)
        self.basis = np.zeros(self.m, dtype=int)
        self.binv = np.eye(self.m)
        self.pivots = 0

    def refactor(self):
        try:
            self.binv = np.linalg.inv(self.a[:, self.basis])
        except np.linalg.LinAlgError:
            raise NumericalFailure("singular basis at refactorization") from None
        nonbasic = np.setdiff1d(np.arange(self.ncols), self.basis, assume_unique=False)
        if self.m:
            rhs = self.b - self.a[:, nonbasic] @ self.x[nonbasic]
            self.x[self.basis] = self.binv @ rhs

    def eta_update(self, row, w):
        piv = w[row]
        self.binv[row] /= piv
        others = np.arange(self.m) != row
        self.binv[others] -= np.outer(w[others], self.binv[row])
        self.pivots += 1
        if self.pivots % REFACTOR_EVERY == 0:
            self.refactor()


def _rest_value(lo, hi):
    if math.isfinite(lo):
        return lo, _AT_LOWER
    if math.isfinite(hi):
        return hi, _AT_UPPER
    return 0.0, _FREE


def _price(state, c, bland):
    """Pick the entering column and direction, or None when optimal."""
    y = c[state.basis] @ state.binv
    d = c - y @ state.a
    movable = state.upper - state.lower > 0.0
    up = (state.status == _AT_LOWER) & movable & (d > OPTIMALITY_TOL)
    down = (state.status == _AT_UPPER) & movable & (d < -OPTIMALITY_TOL)
    free = (state.status == _FREE) & (np.abs(d) > OPTIMALITY_TOL)
    eligible = np.nonzero(up | down | free)[0]
    if eligible.size == 0:
        return None
    j = int(eligible[0]) if bland else int(eligible[np.argmax(np.abs(d[eligible]))])
    direction = 1.0 if d[j] > 0 else -1.0
    return j, direction


def _ratio_test(state, j, direction, w, bland):
    """Largest step t >= 0 for entering column j; returns (t, blocking_row, hit)."""
    k = state.basis
    step = direction * w
    t = np.full(state.m, np.inf)
    hit_lower = step > PIVOT_TOL
    hit_upper = step < -PIVOT_TOL
    with np.errstate(invalid="ignore"):
        lo = hit_lower & np.isfinite(state.lower[k])
        t[lo] = (state.x[k][lo] - state.lower[k][lo]) / step[lo]
        hi = hit_upper & np.isfinite(state.upper[k])
        t[hi] = (state.upper[k][hi] - state.x[k][hi]) / (-step[hi])
    np.maximum(t, 0.0, out=t)  # degenerate drift within tolerance never steps backwards

    span = state.upper[j] - state.lower[j]  # inf for free or half-bounded columns
    t_basic = t.min() if state.m else np.inf
    if span <= t_basic:
        return span, -1, 0
    if not np.isfinite(t_basic):
        return np.inf, -1, 0
    ties = np.nonzero(t <= t_basic + 1e-12 * (1.0 + t_basic))[0]
    if bland:
        row = int(ties[np.argmin(k[ties])])
    else:
        row = int(ties[np.argmax(np.abs(step[ties]))])
    return t_basic, row, _AT_LOWER if step[row] > 0 else _AT_UPPER


def _run_phase(state, c, iteration_limit):
    """Iterate to optimality for objective c.  Returns (status, iterations)."""
    bland = False
    stall = 0
    stall_switch = 3 * (state.m + state.ncols)
    z = float(c @ state.x)
    for it in range(iteration_limit):
        picked = _price(state, c, bland)
        if picked is None:
            return OPTIMAL, it
        j, direction = picked
        w = state.binv @ state.a[:, j]
        t, row, hit = _ratio_test(state, j, direction, w, bland)
        if not np.isfinite(t):
            return UNBOUNDED, it

        state.x[j] += direction * t
        if state.m:
            state.x[state.basis] -= direction * t * w
        if row < 0:
            # bound flip, no basis change
            if direction > 0:
                state.x[j] = state.upper[j]
                state.status[j] = _AT_UPPER
            else:
                state.x[j] = state.lower[j]
                state.status[j] = _AT_LOWER
        else:
            leaving = state.basis[row]
            state.x[leaving] = state.lower[leaving] if hit == _AT_LOWER else state.upper[leaving]
            state.status[leaving] = hit
            state.basis[row] = j
            state.status[j] = _BASIC
            if leaving >= state.n_real:
                # artificial out of the basis: freeze it so it never returns
                state.lower[leaving] = state.upper[leaving] = 0.0
                state.x[leaving] = 0.0
            state.eta_update(row, w)

        z_new = float(c @ state.x)
        if z_new <= z + 1e-12 * (1.0 + abs(z)):
            stall += 1
            if stall >= stall_switch:
                bland = True
        else:
            stall = 0
        z = z_new
    raise NumericalFailure(f"iteration limit {iteration_limit} exceeded")


def _drive_out_artificials(state):
    """Degenerate pivots replacing basic artificials by real columns where possible."""
    for row in range(state.m):
        j = state.basis[row]
        if j < state.n_real:
            continue
        tableau_row = state.binv[row] @ state.a[:, : state.n_real]
        candidates = np.nonzero(np.abs(tableau_row) > 1e-9)[0]
        candidates = [q for q in candidates if state.status[q] != _BASIC]
        if not candidates:
            continue  # redundant row, artificial stays basic at zero
        q = max(candidates, key=lambda col: abs(tableau_row[col]))
        w = state.binv @ state.a[:, q]
        state.basis[row] = q
        state.status[q] = _BASIC
        state.status[j] = _AT_LOWER
        state.lower[j] = state.upper[j] = 0.0
        state.x[j] = 0.0
        state.eta_update(row, w)


def solve(lp: LinearProgram, iteration_limit: int | None = None) -> LpSolution:
    """Solve a LinearProgram, maximizing its objective.

    Parameters
    ----------
    lp : LinearProgram
        Program with box bounds (either side may be infinite) and
        <=, ==, >= rows.
    iteration_limit : int, optional
        Cap per phase; defaults to 10000 + 50*(rows + columns).

    Returns
    -------
    LpSolution
        status OPTIMAL with values/objective/duals, or INFEASIBLE/UNBOUNDED.

    Raises
    ------
    NumericalFailure
        When the basis goes singular or the iteration cap is hit.
    """
    n = lp.num_variables
    a_struct, b, relations = lp.dense()
    m = lp.num_rows

    slack_lo = {"<=": 0.0, "==": 0.0, ">=": -np.inf}
    slack_hi = {"<=": np.inf, "==": 0.0, ">=": 0.0}
    lower = np.concatenate([np.asarray(lp.lower), [slack_lo[r] for r in relations],
                            np.zeros(m)])
    upper = np.concatenate([np.asarray(lp.upper), [slack_hi[r] for r in relations],
                            np.full(m, np.inf)])
    a = np.zeros((m, n + 2 * m))
    a[:, :n] = a_struct
    if m:
        a[:, n:n + m] = np.eye(m)

    state = _State(a, b.copy(), lower, upper, n + m)
    if iteration_limit is None:
        iteration_limit = 10_000 + 50 * (m + state.ncols)

    # rest every real column at a bound (or zero when free), then size artificials
    for jcol in range(n + m):
        state.x[jcol], state.status[jcol] = _rest_value(lower[jcol], upper[jcol])
    residual = b - a[:, : n + m] @ state.x[: n + m] if m else np.zeros(0)
    for i in range(m):
        sign = 1.0 if residual[i] >= 0 else -1.0
        a[i, n + m + i] = sign
        state.x[n + m + i] = abs(residual[i])
        state.basis[i] = n + m + i
        state.status[n + m + i] = _BASIC
    if m:
        state.refactor()  # artificial basis is diag(+-1), not the identity

    iterations = 0
    if m:
        c_phase1 = np.zeros(state.ncols)
        c_phase1[n + m:] = -1.0
        status, its = _run_phase(state, c_phase1, iteration_limit)
        iterations += its
        if status != OPTIMAL:
            raise NumericalFailure("phase 1 terminated abnormally")
        infeasibility = state.x[n + m:].sum()
        if infeasibility > FEASIBILITY_TOL * (1.0 + np.abs(b).sum()):
            return LpSolution(status=INFEASIBLE, iterations=iterations)
        _drive_out_artificials(state)
        state.upper[n + m:] = 0.0
        state.lower[n + m:] = 0.0
        state.x[n + m:] = 0.0

    c_phase2 = np.zeros(state.ncols)
    c_phase2[:n] = lp.objective_array()
    status, its = _run_phase(state, c_phase2, iteration_limit)
    iterations += its
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, iterations=iterations)

    values = state.x[:n].copy()
    duals = (c_phase2[state.basis] @ state.binv) if m else np.zeros(0)
    objective = float(lp.objective_array() @ values)
    return LpSolution(status=OPTIMAL, objective=objective, values=values,
                      duals=duals, iterations=iterations)
