"""Deterministic-equivalent LPs for the three supply-allocation models.

All three models share the same physical core over scenarios s with
probabilities pi_s.  Decision variables per market m, contract c, spot
tranche k, supply step i, period t and scenario s:

    xmin[m,c]        committed contract volume (first stage, scenario-free)
    xterm[m,c,t,s]   delivered contract volume
    y[m,k,t,s]       spot sales in tranche k at its scenario price
    uprod[i,t,s]     production on cost-curve step i
    utrans[m,t,s]    volume transported toward market m
    z[s]             scenario profit (free)

and the shared rows:

    profit[s]     z[s] equals contract + spot revenue minus production and
                  transport cost, summed over periods
    window?       xmin <= xterm <= xmin + flex (an equality when flex is 0)
    balance[t,s]  production equals contract plus spot sales
    transport[t,s] production equals transported volume
    prod rows     lower <= total production <= upper (folded into variable
                  bounds when the cost curve has a single step)

Objectives:

    risk_neutral   sum_s pi_s z_s
    cvar           lam * E[z] + (1-lam) * (v - (1/alpha) sum_s pi_s ell_s)
                   with ell_s >= v - z_s, ell_s >= 0: the bracket is the
                   Rockafellar-Uryasev epigraph of the expected profit over
                   the worst alpha-probability tail, so alpha -> 1 recovers
                   the risk-neutral objective and small alpha hardens the
                   tail
    dro            E[z] - epsilon * sum_s pi_s ||Q^T ytilde_s||_1, the
                   type-infinity Wasserstein penalty (dual norm of the
                   max-norm is the 1-norm); ytilde aggregates spot sales per
                   scenario (per market), or per period when configured

Every objective also carries a -1e-7 * total spot volume perturbation so
that among profit-equal allocations the one selling least spot is chosen
deterministically; reported objectives are recomputed from the clean model
formula, never read off the perturbed LP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import MarketInstance, ScenarioSet, validate_instance, validate_scenarios
from .linprog import OPTIMAL, LinearProgram, LpSolution
from .simplex import solve

RISK_NEUTRAL = "risk_neutral"
CVAR = "cvar"
DRO = "dro"
KINDS = (RISK_NEUTRAL, CVAR, DRO)

PER_SCENARIO = "per_scenario"
PER_PERIOD = "per_period"

TIE_BREAK_WEIGHT = 1e-7
PROFIT_TOL = 1e-6
BALANCE_TOL = 1e-7


class InfeasibleStructure(ValueError):
    """The instance cannot be feasible for any scenario set (capacity < floor)."""


class ParameterOutOfRange(ValueError):
    """A formulation parameter violates its documented range."""


class DimensionMismatch(ValueError):
    """Instance, scenarios and config do not fit together."""


class ConsistencyError(RuntimeError):
    """Solver output failed an independent recomputation check."""


class SolveFailed(RuntimeError):
    """The LP terminated without an optimal solution."""

    def __init__(self, status: str):
        super().__init__(f"allocation LP terminated with status {status!r}")
        self.status = status


@dataclass(frozen=True)
class FormulationConfig:
    """Which model to build and with what parameters.

    alpha is the CVaR tail mass: the objective averages the worst
    alpha-probability share of profit outcomes, so alpha near 1 is mild and
    alpha near 0 is hard.  lam in [0, 1] weights expected profit against
    that tail average.  epsilon >= 0 is the Wasserstein radius; q_matrix is
    the (markets x markets) deviation-covariance factor its penalty uses.
    """

    kind: str = RISK_NEUTRAL
    alpha: float = 0.95
    lam: float = 0.1
    epsilon: float = 0.0
    q_matrix: np.ndarray | None = None
    dro_penalty: str = PER_SCENARIO

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterOutOfRange(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterOutOfRange(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterOutOfRange(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.epsilon >= 0.0:
            raise ParameterOutOfRange(f"epsilon must be >= 0, got {self.epsilon}")
        if self.dro_penalty not in (PER_SCENARIO, PER_PERIOD):
            raise ParameterOutOfRange(f"dro_penalty must be {PER_SCENARIO!r} or "
                                      f"{PER_PERIOD!r}, got {self.dro_penalty!r}")
        if self.q_matrix is not None:
            q = np.asarray(self.q_matrix, dtype=float)
            q.setflags(write=False)
            object.__setattr__(self, "q_matrix", q)


@dataclass
class VariableMap:
    """Column coordinates of one built LP.

    Column count: with C total contracts, K_m spot tranches, I supply steps,
    T periods, S scenarios and M markets the shared core has
    C + C*T*S + (sum_m K_m)*T*S + I*T*S + M*T*S + S columns; cvar adds
    1 + S (threshold and tail shortfalls), dro adds S*M per-scenario
    penalty columns or S*T*M per-period ones.
    """

    x_min: dict = field(default_factory=dict)  # (m, c) -> col
    x_term: dict = field(default_factory=dict)  # (m, c, t, s) -> col
    y_spot: dict = field(default_factory=dict)  # (m, k, t, s) -> col
    u_prod: dict = field(default_factory=dict)  # (i, t, s) -> col
    u_trans: dict = field(default_factory=dict)  # (m, t, s) -> col
    z: dict = field(default_factory=dict)  # s -> col
    var_col: int | None = None  # CVaR threshold
    ell: dict = field(default_factory=dict)  # s -> col
    w: dict = field(default_factory=dict)  # (s, j) or (s, t, j) -> col


def expected_columns(instance: MarketInstance, scenarios: ScenarioSet,
                     config: FormulationConfig) -> int:
    """The documented column-count formula (see VariableMap)."""
    n_c = len(instance.contracts)
    n_t = instance.periods
    n_s = scenarios.num_scenarios
    n_m = len(instance.markets)
    n_k = sum(scenarios.steps(m) for m in instance.markets)
    n_i = len(instance.supply_steps)
    total = n_c + n_c * n_t * n_s + n_k * n_t * n_s + n_i * n_t * n_s \
        + n_m * n_t * n_s + n_s
    if config.kind == CVAR:
        total += 1 + n_s
    elif config.kind == DRO:
        total += n_s * n_m if config.dro_penalty == PER_SCENARIO else n_s * n_t * n_m
    return total


def _check_inputs(instance: MarketInstance, scenarios: ScenarioSet) -> None:
    capacity = sum(s.capacity for s in instance.supply_steps)
    for t, (lo, _hi) in enumerate(instance.production_limits):
        if capacity < lo:
            raise InfeasibleStructure(
                f"total supply capacity {capacity} is below the period-{t} "
                f"lower production limit {lo}")
    problems = validate_instance(instance) + validate_scenarios(instance, scenarios)
    if problems:
        raise DimensionMismatch("; ".join(problems))


def _build_core(instance: MarketInstance, scenarios: ScenarioSet,
                z_objective, tie_break_weight: float):
    """Shared variables and rows; z objective coefficients supplied per model."""
    _check_inputs(instance, scenarios)
    lp = LinearProgram()
    vm = VariableMap()
    markets = instance.markets
    n_t = instance.periods
    n_s = scenarios.num_scenarios
    steps = instance.supply_steps
    single_step = len(steps) == 1
    by_market = [[c for c in instance.contracts if c.market == market]
                 for market in markets]

    for m, market in enumerate(markets):
        for c, contract in enumerate(by_market[m]):
            vm.x_min[m, c] = lp.add_variable(f"xmin[{m},{c}]", 0.0, contract.max_volume)
    for m, market in enumerate(markets):
        for c, contract in enumerate(by_market[m]):
            for t in range(n_t):
                for s in range(n_s):
                    vm.x_term[m, c, t, s] = lp.add_variable(
                        f"xterm[{m},{c},{t},{s}]", 0.0, contract.max_volume)
    for m, market in enumerate(markets):
        width = scenarios.widths[market]
        for k in range(scenarios.steps(market)):
            for t in range(n_t):
                for s in range(n_s):
                    vm.y_spot[m, k, t, s] = lp.add_variable(
                        f"y[{m},{k},{t},{s}]", 0.0, float(width[k, t, s]),
                        objective=-tie_break_weight)
    for i, step in enumerate(steps):
        for t in range(n_t):
            lo_t, hi_t = instance.production_limits[t]
            for s in range(n_s):
                if single_step:
                    # the production-limit row has one coefficient: fold it away
                    lo, hi = lo_t, min(step.capacity, hi_t)
                else:
                    lo, hi = 0.0, step.capacity
                vm.u_prod[i, t, s] = lp.add_variable(f"uprod[{i},{t},{s}]", lo, hi)
    for m, market in enumerate(markets):
        for t in range(n_t):
            _lo_t, hi_t = instance.production_limits[t]
            for s in range(n_s):
                vm.u_trans[m, t, s] = lp.add_variable(f"utrans[{m},{t},{s}]", 0.0, hi_t)
    for s in range(n_s):
        vm.z[s] = lp.add_variable(f"z[{s}]", -math.inf, math.inf,
                                  objective=z_objective[s])

    for s in range(n_s):
        coeffs = {vm.z[s]: 1.0}
        for m, market in enumerate(markets):
            price = scenarios.prices[market]
            for c, contract in enumerate(by_market[m]):
                for t in range(n_t):
                    coeffs[vm.x_term[m, c, t, s]] = -contract.wholesale_price[t]
            for k in range(scenarios.steps(market)):
                for t in range(n_t):
                    coeffs[vm.y_spot[m, k, t, s]] = -float(price[k, t, s])
            cost = instance.transport(market)
            for t in range(n_t):
                coeffs[vm.u_trans[m, t, s]] = cost
        for i, step in enumerate(steps):
            for t in range(n_t):
                coeffs[vm.u_prod[i, t, s]] = step.unit_cost
        lp.add_row(f"profit[{s}]", coeffs, "==", 0.0)

    for m, market in enumerate(markets):
        for c, contract in enumerate(by_market[m]):
            for t in range(n_t):
                for s in range(n_s):
                    delta = {vm.x_term[m, c, t, s]: 1.0, vm.x_min[m, c]: -1.0}
                    if contract.flex_above_min == 0.0:
                        lp.add_row(f"window[{m},{c},{t},{s}]", delta, "==", 0.0)
                    else:
                        lp.add_row(f"winlo[{m},{c},{t},{s}]", delta, ">=", 0.0)
                        lp.add_row(f"winhi[{m},{c},{t},{s}]", delta, "<=",
                                   contract.flex_above_min)

    for t in range(n_t):
        for s in range(n_s):
            coeffs = {vm.u_prod[i, t, s]: 1.0 for i in range(len(steps))}
            for m, market in enumerate(markets):
                for c in range(len(by_market[m])):
                    coeffs[vm.x_term[m, c, t, s]] = -1.0
                for k in range(scenarios.steps(market)):
                    coeffs[vm.y_spot[m, k, t, s]] = -1.0
            lp.add_row(f"balance[{t},{s}]", coeffs, "==", 0.0)

    for t in range(n_t):
        for s in range(n_s):
            coeffs = {vm.u_prod[i, t, s]: 1.0 for i in range(len(steps))}
            for m in range(len(markets)):
                coeffs[vm.u_trans[m, t, s]] = -1.0
            lp.add_row(f"transport[{t},{s}]", coeffs, "==", 0.0)

    if not single_step:
        for t in range(n_t):
            lo_t, hi_t = instance.production_limits[t]
            for s in range(n_s):
                coeffs = {vm.u_prod[i, t, s]: 1.0 for i in range(len(steps))}
                if lo_t == hi_t:
                    lp.add_row(f"prod[{t},{s}]", coeffs, "==", lo_t)
                else:
                    lp.add_row(f"prodhi[{t},{s}]", coeffs, "<=", hi_t)
                    if lo_t > 0.0:
                        lp.add_row(f"prodlo[{t},{s}]", coeffs, ">=", lo_t)
    return lp, vm


def build_risk_neutral(instance: MarketInstance, scenarios: ScenarioSet,
                       tie_break_weight: float = TIE_BREAK_WEIGHT):
    """Expected-profit maximization; returns (LinearProgram, VariableMap)."""
    pi = scenarios.probabilities
    return _build_core(instance, scenarios, pi, tie_break_weight)


def build_cvar(instance: MarketInstance, scenarios: ScenarioSet, alpha: float,
               lam: float, tie_break_weight: float = TIE_BREAK_WEIGHT):
    """Tail-weighted model: lam * E[z] + (1-lam) * CVaR_alpha(z)."""
    if not 0.0 < alpha < 1.0:
        raise ParameterOutOfRange(f"alpha must lie strictly inside (0, 1), got {alpha}")
    if not 0.0 <= lam <= 1.0:
        raise ParameterOutOfRange(f"lambda must lie in [0, 1], got {lam}")
    pi = scenarios.probabilities
    lp, vm = _build_core(instance, scenarios, lam * pi, tie_break_weight)
    n_s = scenarios.num_scenarios
    vm.var_col = lp.add_variable("var", -math.inf, math.inf,
                                 objective=(1.0 - lam))
    for s in range(n_s):
        vm.ell[s] = lp.add_variable(f"ell[{s}]", 0.0, math.inf,
                                    objective=-(1.0 - lam) * float(pi[s]) / alpha)
    for s in range(n_s):
        lp.add_row(f"tail[{s}]", {vm.ell[s]: 1.0, vm.var_col: -1.0, vm.z[s]: 1.0},
                   ">=", 0.0)
    return lp, vm


def build_dro(instance: MarketInstance, scenarios: ScenarioSet, epsilon: float,
              q_matrix, dro_penalty: str = PER_SCENARIO,
              tie_break_weight: float = TIE_BREAK_WEIGHT):
    """Wasserstein-penalized model: E[z] - epsilon * E[||Q^T ytilde||_1]."""
    if not epsilon >= 0.0:
        raise ParameterOutOfRange(f"epsilon must be >= 0, got {epsilon}")
    if dro_penalty not in (PER_SCENARIO, PER_PERIOD):
        raise ParameterOutOfRange(f"unknown dro_penalty {dro_penalty!r}")
    n_m = len(instance.markets)
    q = np.asarray(q_matrix, dtype=float)
    if q.shape != (n_m, n_m):
        raise DimensionMismatch(f"q matrix must be {(n_m, n_m)}, got {q.shape}")
    if not np.isfinite(q).all():
        raise DimensionMismatch("q matrix contains non-finite entries")
    pi = scenarios.probabilities
    lp, vm = _build_core(instance, scenarios, pi, tie_break_weight)
    n_t = instance.periods
    n_s = scenarios.num_scenarios

    if dro_penalty == PER_SCENARIO:
        for s in range(n_s):
            for j in range(n_m):
                col = lp.add_variable(f"w[{s},{j}]", 0.0, math.inf,
                                      objective=-epsilon * float(pi[s]))
                vm.w[s, j] = col
        for s in range(n_s):
            for j in range(n_m):
                pos = {vm.w[s, j]: 1.0}
                neg = {vm.w[s, j]: 1.0}
                for m, market in enumerate(instance.markets):
                    if q[m, j] == 0.0:
                        continue
                    for k in range(scenarios.steps(market)):
                        for t in range(n_t):
                            pos[vm.y_spot[m, k, t, s]] = -q[m, j]
                            neg[vm.y_spot[m, k, t, s]] = q[m, j]
                lp.add_row(f"norm_pos[{s},{j}]", pos, ">=", 0.0)
                lp.add_row(f"norm_neg[{s},{j}]", neg, ">=", 0.0)
    else:
        for s in range(n_s):
            for t in range(n_t):
                for j in range(n_m):
                    col = lp.add_variable(f"w[{s},{t},{j}]", 0.0, math.inf,
                                          objective=-epsilon * float(pi[s]))
                    vm.w[s, t, j] = col
        for s in range(n_s):
            for t in range(n_t):
                for j in range(n_m):
                    pos = {vm.w[s, t, j]: 1.0}
                    neg = {vm.w[s, t, j]: 1.0}
                    for m, market in enumerate(instance.markets):
                        if q[m, j] == 0.0:
                            continue
                        for k in range(scenarios.steps(market)):
                            pos[vm.y_spot[m, k, t, s]] = -q[m, j]
                            neg[vm.y_spot[m, k, t, s]] = q[m, j]
                    lp.add_row(f"norm_pos[{s},{t},{j}]", pos, ">=", 0.0)
                    lp.add_row(f"norm_neg[{s},{t},{j}]", neg, ">=", 0.0)
    return lp, vm


def build(instance: MarketInstance, scenarios: ScenarioSet,
          config: FormulationConfig):
    if config.kind == RISK_NEUTRAL:
        return build_risk_neutral(instance, scenarios)
    if config.kind == CVAR:
        return build_cvar(instance, scenarios, config.alpha, config.lam)
    if config.q_matrix is None:
        raise DimensionMismatch("dro requires a q matrix")
    return build_dro(instance, scenarios, config.epsilon, config.q_matrix,
                     config.dro_penalty)


@dataclass(frozen=True)
class AllocationReport:
    """Optimal allocation with independently recomputed profit and objective."""

    config: FormulationConfig
    status: str
    objective_value: float  # recomputed per model formula, no tie-break term
    commitments: dict  # market -> (C_m,) committed contract volumes
    term_dispatch: dict  # market -> (C_m, T, S) delivered contract volumes
    spot_dispatch: dict  # market -> (K_m, T, S) spot sales
    production: np.ndarray  # (I, T, S)
    transport: dict  # market -> (T, S)
    profits: np.ndarray  # (S,) recomputed scenario profits
    probabilities: np.ndarray  # (S,) echoed from the scenario set
    expected_profit: float
    var_threshold: float | None  # CVaR threshold at the optimum, if any
    spot_volume: float  # E[total MW sold on spot]
    production_volume: float  # E[total MW produced]

    @property
    def spot_fraction(self) -> float:
        if self.production_volume <= 0.0:
            return 0.0
        return self.spot_volume / self.production_volume


def extract_report(instance: MarketInstance, scenarios: ScenarioSet,
                   config: FormulationConfig, vm: VariableMap,
                   solution: LpSolution) -> AllocationReport:
    """Read decisions off an optimal solution, recheck them, recompute objective.

    Raises ConsistencyError when recomputed scenario profits stray beyond
    1e-6 * max(1, |z_s|) of the solver's z, or when a balance row is violated
    beyond 1e-7 * scale.
    """
    if solution.status != OPTIMAL:
        raise SolveFailed(solution.status)
    x = solution.values
    markets = instance.markets
    n_t, n_s = instance.periods, scenarios.num_scenarios
    n_i = len(instance.supply_steps)
    by_market = [[c for c in instance.contracts if c.market == market]
                 for market in markets]

    commitments = {}
    term = {}
    spot = {}
    trans = {}
    for m, market in enumerate(markets):
        n_c = len(by_market[m])
        n_k = scenarios.steps(market)
        commitments[market] = np.array([x[vm.x_min[m, c]] for c in range(n_c)])
        term[market] = np.array(
            [[[x[vm.x_term[m, c, t, s]] for s in range(n_s)] for t in range(n_t)]
             for c in range(n_c)])
        spot[market] = np.array(
            [[[x[vm.y_spot[m, k, t, s]] for s in range(n_s)] for t in range(n_t)]
             for k in range(n_k)])
        trans[market] = np.array(
            [[x[vm.u_trans[m, t, s]] for s in range(n_s)] for t in range(n_t)])
    production = np.array(
        [[[x[vm.u_prod[i, t, s]] for s in range(n_s)] for t in range(n_t)]
         for i in range(n_i)])

    profits = np.zeros(n_s)
    for m, market in enumerate(markets):
        prices = scenarios.prices[market]
        wholesale = np.array([c.wholesale_price for c in by_market[m]])  # (C_m, T)
        if wholesale.size:
            profits += np.einsum("ct,cts->s", wholesale, term[market])
        profits += np.einsum("kts,kts->s", prices, spot[market])
        profits -= instance.transport(market) * trans[market].sum(axis=0)
    costs = np.array([s.unit_cost for s in instance.supply_steps])
    profits -= np.einsum("i,its->s", costs, production)

    solver_z = np.array([x[vm.z[s]] for s in range(n_s)])
    bad = np.abs(profits - solver_z) > PROFIT_TOL * np.maximum(1.0, np.abs(profits))
    if bad.any():
        s = int(np.nonzero(bad)[0][0])
        raise ConsistencyError(
            f"scenario {s}: solver profit {solver_z[s]!r} disagrees with "
            f"recomputed {profits[s]!r}")

    produced_ts = production.sum(axis=0)  # (T, S)
    sold_ts = sum(term[mk].sum(axis=0) + spot[mk].sum(axis=0) for mk in markets)
    moved_ts = sum(trans[mk] for mk in markets)
    scale = 1.0 + np.abs(produced_ts)
    if (np.abs(produced_ts - sold_ts) > BALANCE_TOL * scale).any():
        raise ConsistencyError("supply-demand balance violated beyond tolerance")
    if (np.abs(produced_ts - moved_ts) > BALANCE_TOL * scale).any():
        raise ConsistencyError("transport balance violated beyond tolerance")

    pi = scenarios.probabilities
    expected = float(pi @ profits)
    var_threshold = None
    if config.kind == RISK_NEUTRAL:
        objective = expected
    elif config.kind == CVAR:
        var_threshold = float(x[vm.var_col])
        shortfall = np.maximum(var_threshold - profits, 0.0)
        tail = var_threshold - float(pi @ shortfall) / config.alpha
        objective = config.lam * expected + (1.0 - config.lam) * tail
    else:
        q = config.q_matrix
        penalty = 0.0
        for s in range(n_s):
            if config.dro_penalty == PER_SCENARIO:
                ytilde = np.array([spot[market][:, :, s].sum() for market in markets])
                penalty += float(pi[s]) * float(np.abs(q.T @ ytilde).sum())
            else:
                for t in range(n_t):
                    ytilde = np.array([spot[market][:, t, s].sum() for market in markets])
                    penalty += float(pi[s]) * float(np.abs(q.T @ ytilde).sum())
        objective = expected - config.epsilon * penalty

    spot_volume = float(sum(pi @ spot[mk].sum(axis=(0, 1)) for mk in markets))
    production_volume = float(pi @ produced_ts.sum(axis=0))

    report = AllocationReport(
        config=config, status=solution.status, objective_value=float(objective),
        commitments=commitments, term_dispatch=term, spot_dispatch=spot,
        production=production, transport=trans, profits=profits,
        probabilities=np.array(pi), expected_profit=expected,
        var_threshold=var_threshold, spot_volume=spot_volume,
        production_volume=production_volume)
    for table in (commitments, term, spot, trans):
        for arr in table.values():
            arr.setflags(write=False)
    production.setflags(write=False)
    profits.setflags(write=False)
    return report


def solve_allocation(instance: MarketInstance, scenarios: ScenarioSet,
                     config: FormulationConfig) -> AllocationReport:
    """Build, solve and extract in one call."""
    lp, vm = build(instance, scenarios, config)
    solution = solve(lp)
    return extract_report(instance, scenarios, config, vm, solution)
