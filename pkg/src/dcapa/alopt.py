"""QoS-constrained transmit power minimization.

Outer loop: augmented Lagrangian with hinge residuals on the SINR and
harvested-power floors, multiplier ascent, and penalty doubling. Inner
loop: projected L-BFGS with a coarse Cauchy search along the projected
steepest descent, two-loop recursion over a bounded curvature memory, and
an Armijo backtracking line search.

Hinge residuals are expressed as fractions of their floors. The two
constraint groups live on different scales (SINR is dimensionless and
spans orders of magnitude; harvested power is watts around 1e-4), so a
shared feasibility tolerance is only meaningful on the normalized scale.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .beamform import CouplingGains
from .metrics import (PowerAllocation, QosTargets, epa_allocation,
                      harvest_coefficients, qos_targets)
from .scenario import Scenario

STATUS_CONVERGED = "converged"
STATUS_ITERATION_CAP = "iteration-cap"
STATUS_DEGENERATE = "degenerate"


@dataclass(frozen=True)
class SolveOptions:
    rho0: float = 20.0           # initial penalty weight
    beta: float = 10.0           # EU penalty group weight
    epsilon: float = 1e-3        # outer feasibility tolerance
    delta: float = 1e-9          # inner step/curvature tolerance
    memory_q: int = 10           # curvature pairs kept
    max_inner: int = 200
    max_outer: int = 40
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40     # line-search budget per direction
    max_cauchy_backtracks: int = 80
    pg_tol_factor: float = 1e3   # inner stop at projected-grad norm <= factor*delta

    def validate(self) -> None:
        if self.rho0 <= 0 or self.beta <= 0 or self.epsilon <= 0:
            raise ValueError("rho0, beta, epsilon must be > 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")
        if self.memory_q < 1 or self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("memory_q, max_inner, max_outer must be >= 1")


@dataclass
class ALState:
    """Multipliers and penalty weights for one outer iteration."""
    lam_se: np.ndarray  # (L,)
    lam_he: np.ndarray  # (M,)
    rho: float
    beta: float


@dataclass(frozen=True)
class ALProblem:
    """Precomputed arrays the objective needs; independent of the state."""
    magsq: np.ndarray       # (S, K, K) coupling |g|^2
    diag: np.ndarray        # (S, K) self couplings |g[s,k,k]|^2
    gamma_floor: np.ndarray  # (L,) SINR targets
    q_floor: np.ndarray      # (M,) harvest targets [W]
    sigma2: float
    harvest_coef: np.ndarray  # (M,) A_R cos(phi)/(2Z)
    n_iu: int

    @classmethod
    def from_parts(cls, gains: CouplingGains, targets: QosTargets,
                   sigma2: float, harvest_coef: np.ndarray, n_iu: int
                   ) -> "ALProblem":
        return cls(magsq=gains.magsq,
                   diag=np.ascontiguousarray(
                       np.diagonal(gains.magsq, axis1=1, axis2=2)),
                   gamma_floor=np.asarray(targets.gamma, float),
                   q_floor=np.asarray(targets.q, float),
                   sigma2=float(sigma2),
                   harvest_coef=np.asarray(harvest_coef, float),
                   n_iu=n_iu)

    def service_levels(self, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(SINR per IU, linear harvest per EU) at this allocation."""
        L = self.n_iu
        P = omega ** 2
        totals = np.einsum("sj,skj->k", P, self.magsq, optimize=True)
        num = np.einsum("sl,sl->l", P[:, :L], self.diag[:, :L])
        den = totals[:L] - num + self.sigma2
        return num / den, self.harvest_coef * totals[L:]


def qos_violations(omega: np.ndarray, problem: ALProblem
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Hinge residuals as fractions of the floors; zero where a floor is met.

    An entry of 1 means the user receives no service at all, so epsilon
    bounds the relative shortfall uniformly across both constraint groups.
    """
    gamma, q = problem.service_levels(omega)
    return (np.maximum(1.0 - gamma / problem.gamma_floor, 0.0),
            np.maximum(1.0 - q / problem.q_floor, 0.0))


def violation_measure(v_se: np.ndarray, v_he: np.ndarray) -> float:
    return max(float(np.linalg.norm(v_se)), float(np.linalg.norm(v_he)))


def al_objective(omega: np.ndarray, state: ALState, problem: ALProblem) -> float:
    v_se, v_he = qos_violations(omega, problem)
    f = float(np.sum(omega ** 2))
    f += float(state.lam_se @ v_se) + 0.5 * state.rho * float(v_se @ v_se)
    f += state.beta * (float(state.lam_he @ v_he)
                       + 0.5 * state.rho * float(v_he @ v_he))
    return f


def al_gradient(omega: np.ndarray, state: ALState, problem: ALProblem
                ) -> np.ndarray:
    """Analytic gradient, consistent with al_objective.

    Hinge terms contribute only where the corresponding floor is violated;
    the SINR quotient rule carries a negative sign on the interference
    (j != l) coordinates.
    """
    L = problem.n_iu
    P = omega ** 2
    totals = np.einsum("sj,skj->k", P, problem.magsq, optimize=True)
    num = np.einsum("sl,sl->l", P[:, :L], problem.diag[:, :L])
    den = totals[:L] - num + problem.sigma2
    gamma = num / den
    q = problem.harvest_coef * totals[L:]

    v_se = np.maximum(1.0 - gamma / problem.gamma_floor, 0.0)
    v_he = np.maximum(1.0 - q / problem.q_floor, 0.0)
    w = np.where(v_se > 0.0, state.lam_se + state.rho * v_se, 0.0)
    w = w / problem.gamma_floor
    u = np.where(v_he > 0.0, state.lam_he + state.rho * v_he, 0.0)
    u = u / problem.q_floor

    bracket = np.ones_like(omega)
    if L:
        a = w / den
        b = w * num / (den * den)
        cross = np.einsum("l,slj->sj", b, problem.magsq[:, :L, :], optimize=True)
        cross[:, :L] -= b[None, :] * problem.diag[:, :L]  # exclude l == j
        bracket += cross
        bracket[:, :L] -= a[None, :] * problem.diag[:, :L]
    if u.size:
        he = np.einsum("m,smj->sj", state.beta * u * problem.harvest_coef,
                       problem.magsq[:, L:, :], optimize=True)
        bracket -= he
    return 2.0 * omega * bracket


# ---------------------------------------------------------------------------
# Projected L-BFGS inner solver.

def project_box(omega: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.clip(omega, 0.0, upper)


class LbfgsMemory:
    """Bounded store of curvature pairs; rejects non-positive y^T s."""

    def __init__(self, maxlen: int):
        self.pairs: deque = deque(maxlen=maxlen)
        self.h0_scale = 1.0

    def store(self, s: np.ndarray, y: np.ndarray) -> bool:
        ys = float(y @ s)
        if ys <= 0.0:
            return False
        self.pairs.append((s, y, 1.0 / ys))
        self.h0_scale = ys / float(y @ y)
        return True


def two_loop_direction(memory: LbfgsMemory, grad: np.ndarray) -> np.ndarray:
    """Quasi-Newton direction -H grad from the stored pairs."""
    q = grad.ravel().astype(float, copy=True)
    alphas = []
    for s, y, inv_ys in reversed(memory.pairs):
        a = inv_ys * float(s @ q)
        alphas.append(a)
        q -= a * y
    q *= memory.h0_scale
    for (s, y, inv_ys), a in zip(memory.pairs, reversed(alphas)):
        b = inv_ys * float(y @ q)
        q += (a - b) * s
    return -q.reshape(grad.shape)


def cauchy_point(omega: np.ndarray, grad: np.ndarray, upper: np.ndarray,
                 f, f0: float, options: SolveOptions, start_index: int = 0
                 ) -> tuple[np.ndarray, float, bool, int]:
    """Coarse search along the projected steepest descent.

    Returns the point for the largest step in {1, shrink, shrink^2, ...}
    that decreases f (the decrease region is an interval at the origin, so
    scanning outward from a warm-started index finds the same step as a
    scan from 1). Stalls with omega unchanged when no step decreases f.
    """
    def candidate(k: int) -> np.ndarray:
        return project_box(omega - (options.shrink ** k) * grad, upper)

    k = min(max(start_index, 0), options.max_cauchy_backtracks - 1)
    cand = candidate(k)
    if np.array_equal(cand, omega):
        return omega, f0, True, k  # projected gradient vanishes
    fc = f(cand)
    if fc < f0:
        while k > 0:  # expand toward alpha = 1
            bigger = candidate(k - 1)
            fb = f(bigger)
            if fb < f0:
                k -= 1
                cand, fc = bigger, fb
            else:
                break
        return cand, fc, False, k
    while k + 1 < options.max_cauchy_backtracks:
        k += 1
        cand = candidate(k)
        if np.array_equal(cand, omega):
            break
        fc = f(cand)
        if fc < f0:
            return cand, fc, False, k
    return omega, f0, True, k


def line_search(omega: np.ndarray, f0: float, grad: np.ndarray, p: np.ndarray,
                f, upper: np.ndarray, options: SolveOptions
                ) -> tuple[np.ndarray, float, float, bool]:
    """Armijo backtracking on the projected step; tries -p once if +p fails."""
    for direction in (p, -p):
        slope = float(grad.ravel() @ direction.ravel())
        alpha = 1.0
        for _ in range(options.max_backtracks):
            cand = project_box(omega + alpha * direction, upper)
            if not np.array_equal(cand, omega):
                f_new = f(cand)
                if f_new <= f0 + options.armijo_c * alpha * min(slope, 0.0) \
                        and f_new < f0:
                    return cand, f_new, alpha, False
            alpha *= options.shrink
    return omega, f0, 0.0, True


@dataclass
class InnerTrace:
    iterations: int = 0
    n_fev: int = 0
    n_gev: int = 0
    termination: str = "max_inner"
    f_history: list = field(default_factory=list)
    curvature_products: list = field(default_factory=list)
    max_bound_breach: float = 0.0


def lbfgsb_minimize(omega0: np.ndarray, f, grad, upper: np.ndarray,
                    options: SolveOptions) -> tuple[np.ndarray, InnerTrace]:
    """Minimize f over the box [0, upper] starting from omega0.

    f and grad are callables on (S, K) arrays. Iterates only ever move on
    accepted decreases, so the trace's f history is nonincreasing.
    """
    trace = InnerTrace()

    def f_counted(x):
        trace.n_fev += 1
        return f(x)

    def grad_counted(x):
        trace.n_gev += 1
        return grad(x)

    omega = project_box(np.asarray(omega0, float), upper)
    f_cur = f_counted(omega)
    g = grad_counted(omega)
    memory = LbfgsMemory(options.memory_q)
    pg_tol = options.pg_tol_factor * options.delta
    cauchy_idx = 0
    trace.f_history.append(f_cur)

    for _ in range(options.max_inner):
        pg_norm = float(np.linalg.norm(project_box(omega - g, upper) - omega))
        if pg_norm <= pg_tol:
            trace.termination = "projected-gradient"
            break
        omega_c, f_c, c_stall, cauchy_idx = cauchy_point(
            omega, g, upper, f_counted, f_cur, options, cauchy_idx)
        g_c = g if c_stall else grad_counted(omega_c)
        p = two_loop_direction(memory, g_c)
        omega_new, f_new, _, ls_stall = line_search(
            omega_c, f_c, g_c, p, f_counted, upper, options)
        if ls_stall:
            if c_stall:
                trace.termination = "stall"
                break
            omega_new, f_new = omega_c, f_c  # keep the Cauchy decrease
        trace.iterations += 1
        s = omega_new - omega
        g_new = grad_counted(omega_new)
        y = g_new - g
        if memory.store(s.ravel(), y.ravel()):
            trace.curvature_products.append(float(y.ravel() @ s.ravel()))
        omega, f_cur, g = omega_new, f_new, g_new
        trace.f_history.append(f_cur)
        trace.max_bound_breach = max(
            trace.max_bound_breach,
            float(np.max(np.maximum(omega - upper, -omega), initial=0.0)))
        step_norm = float(np.linalg.norm(s))
        if step_norm <= options.delta:
            trace.termination = "step"
            break
        if float(np.linalg.norm(y)) <= options.delta:
            trace.termination = "curvature"
            break
    return omega, trace


# ---------------------------------------------------------------------------
# Outer augmented-Lagrangian loop.

@dataclass(frozen=True)
class OuterRecord:
    outer: int
    f: float
    pc: float
    max_v_se: float
    max_v_he: float
    v_se_norm: float
    v_he_norm: float
    rho: float
    inner_iters: int
    inner_termination: str


@dataclass
class SolveResult:
    alloc: PowerAllocation
    pc: float
    v_se: np.ndarray
    v_he: np.ndarray
    vmax: float
    status: str
    trace: list
    outer_iters: int
    inner_iters_total: int
    surface_power_exceedance: float
    fell_back: bool  # returned a tracked feasible iterate instead of the final one


def solve(scenario: Scenario, gains: CouplingGains, targets: QosTargets,
          options: SolveOptions | None = None) -> SolveResult:
    """Minimize total power subject to the EPA-derived QoS floors."""
    options = options or SolveOptions()
    options.validate()
    problem = ALProblem.from_parts(
        gains, targets, scenario.constants.sigma2,
        harvest_coefficients(scenario), scenario.L)

    budgets = np.array([s.power_budget for s in scenario.surfaces])
    upper = np.broadcast_to(np.sqrt(budgets)[:, None],
                            (scenario.S, scenario.K)).copy()
    epa = epa_allocation(scenario.total_power, scenario.S, scenario.K)
    omega = epa.omega.copy()

    degenerate = (not np.any(problem.magsq > 0.0)
                  or np.any(problem.gamma_floor <= 0.0)
                  or np.any(problem.q_floor <= 0.0))
    if degenerate:
        v_se = np.ones_like(problem.gamma_floor)
        v_he = np.ones_like(problem.q_floor)
        return SolveResult(
            alloc=epa, pc=float(np.sum(omega ** 2)), v_se=v_se, v_he=v_he,
            vmax=violation_measure(v_se, v_he), status=STATUS_DEGENERATE,
            trace=[], outer_iters=0, inner_iters_total=0,
            surface_power_exceedance=0.0, fell_back=False)

    state = ALState(lam_se=np.zeros(problem.gamma_floor.shape),
                    lam_he=np.zeros(problem.q_floor.shape),
                    rho=options.rho0, beta=options.beta)

    # EPA is feasible with zero violation, so a feasible fallback always exists.
    best_omega = omega.copy()
    best_pc = float(np.sum(omega ** 2))

    trace: list[OuterRecord] = []
    inner_total = 0
    status = STATUS_ITERATION_CAP
    vmax = np.inf

    def run_inner(om):
        f = lambda x: al_objective(x, state, problem)
        g = lambda x: al_gradient(x, state, problem)
        return lbfgsb_minimize(om, f, g, upper, options)

    for u in range(options.max_outer):
        omega, itrace = run_inner(omega)
        inner_total += itrace.iterations
        v_se, v_he = qos_violations(omega, problem)
        vmax = violation_measure(v_se, v_he)
        pc = float(np.sum(omega ** 2))
        trace.append(OuterRecord(
            outer=u, f=al_objective(omega, state, problem), pc=pc,
            max_v_se=float(v_se.max(initial=0.0)),
            max_v_he=float(v_he.max(initial=0.0)),
            v_se_norm=float(np.linalg.norm(v_se)),
            v_he_norm=float(np.linalg.norm(v_he)),
            rho=state.rho, inner_iters=itrace.iterations,
            inner_termination=itrace.termination))
        if vmax <= options.epsilon and pc < best_pc:
            best_omega, best_pc = omega.copy(), pc
        state.lam_se = state.lam_se + state.rho * v_se
        state.lam_he = state.lam_he + state.rho * v_he
        state.rho *= 2.0
        if vmax <= options.epsilon:
            status = STATUS_CONVERGED
            break

    # Per-surface sum constraint is checked at exit; the box alone does not
    # imply it. Rescale offending rows onto the budget ball and give the
    # solver one extra outer iteration to repair the violations.
    row_power = np.sum(omega ** 2, axis=1)
    if np.any(row_power > budgets * (1.0 + 1e-12)):
        scale = np.sqrt(np.minimum(budgets, row_power) / np.maximum(row_power, 1e-300))
        omega = omega * scale[:, None]
        omega, itrace = run_inner(omega)
        inner_total += itrace.iterations
        v_se, v_he = qos_violations(omega, problem)
        vmax = violation_measure(v_se, v_he)
        pc = float(np.sum(omega ** 2))
        trace.append(OuterRecord(
            outer=len(trace), f=al_objective(omega, state, problem), pc=pc,
            max_v_se=float(v_se.max(initial=0.0)),
            max_v_he=float(v_he.max(initial=0.0)),
            v_se_norm=float(np.linalg.norm(v_se)),
            v_he_norm=float(np.linalg.norm(v_he)),
            rho=state.rho, inner_iters=itrace.iterations,
            inner_termination="budget-rescale"))
        # Any exceedance left after the repair pass is reported, not forced.
        if vmax <= options.epsilon and pc < best_pc:
            best_omega, best_pc = omega.copy(), pc

    # Feasible-biased return: prefer the final iterate, but never hand back
    # something worse than a tracked epsilon-feasible candidate (EPA seeds
    # the candidate set, so pc <= P_t always holds for feasible returns).
    fell_back = False
    pc = float(np.sum(omega ** 2))
    if (status == STATUS_ITERATION_CAP or vmax > options.epsilon
            or pc > best_pc):
        if vmax > options.epsilon or best_pc < pc:
            omega = best_omega
            pc = best_pc
            v_se, v_he = qos_violations(omega, problem)
            vmax = violation_measure(v_se, v_he)
            fell_back = True

    row_power = np.sum(omega ** 2, axis=1)
    exceed = float(np.max(row_power - budgets, initial=0.0))
    return SolveResult(
        alloc=PowerAllocation(omega=omega), pc=pc, v_se=v_se, v_he=v_he,
        vmax=vmax, status=status, trace=trace, outer_iters=len(trace),
        inner_iters_total=inner_total,
        surface_power_exceedance=max(exceed, 0.0), fell_back=fell_back)


def solve_scenario(scenario: Scenario, gains: CouplingGains,
                   options: SolveOptions | None = None) -> SolveResult:
    """Convenience wrapper: derive EPA floors, then solve."""
    return solve(scenario, gains, qos_targets(gains, scenario), options)
