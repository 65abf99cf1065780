"""Self-contained smooth convex solver: log-barrier interior point with
equality-constrained damped Newton centering.

Solves   minimize f(x)  s.t.  g_i(x) <= 0,  A x = b
for twice-differentiable convex f and g_i. Constraints are supplied in
vector-valued blocks so evaluation stays in numpy; a block can hold one
scalar constraint or hundreds. The barrier schedule multiplies t by 10 from
t0 = 1 until m_ineq / t clears the duality-gap tolerance; each centering is
damped Newton with Armijo backtracking and a feasibility/domain guard.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainViolation, Infeasible, NumericalFailure

_ARMIJO_C = 1e-4
_SHRINK = 0.5


@dataclass
class Objective:
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


def quadratic_objective(q: np.ndarray, c: np.ndarray) -> Objective:
    """f(x) = 1/2 x'Qx + c'x for tests and phase-I style problems."""
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    return Objective(
        value=lambda x: 0.5 * float(x @ q @ x) + float(c @ x),
        grad=lambda x: q @ x + c,
        hess=lambda x: q,
    )


class ConstraintBlock:
    """Vector-valued convex constraint g(x) <= 0 (componentwise)."""

    size: int

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_weighted(self, x: np.ndarray, w: np.ndarray) -> np.ndarray | None:
        """sum_i w_i * hess(g_i)(x); None signals identically zero."""
        return None


class LinearInequalities(ConstraintBlock):
    """G x - h <= 0."""

    def __init__(self, g: np.ndarray, h: np.ndarray):
        self.g = np.atleast_2d(np.asarray(g, dtype=float))
        self.h = np.atleast_1d(np.asarray(h, dtype=float))
        self.size = len(self.h)

    def value(self, x):
        return self.g @ x - self.h

    def jacobian(self, x):
        return self.g


class BoxBounds(ConstraintBlock):
    """lower_i <= x_i <= upper_i on a subset of coordinates."""

    def __init__(self, n_vars: int, lower: dict[int, float] | None = None,
                 upper: dict[int, float] | None = None):
        rows, rhs = [], []
        self._idx, self._sign = [], []
        for i, lo in (lower or {}).items():
            self._idx.append(i)
            self._sign.append(-1.0)
            rhs.append(-lo)
        for i, up in (upper or {}).items():
            self._idx.append(i)
            self._sign.append(1.0)
            rhs.append(up)
        self._idx = np.array(self._idx, dtype=int)
        self._sign = np.array(self._sign)
        self._rhs = np.array(rhs)
        self.n_vars = n_vars
        self.size = len(self._rhs)

    def value(self, x):
        return self._sign * x[self._idx] - self._rhs

    def jacobian(self, x):
        jac = np.zeros((self.size, self.n_vars))
        jac[np.arange(self.size), self._idx] = self._sign
        return jac


class SmoothInequalities(ConstraintBlock):
    """Generic callbacks; hessian_weighted may be omitted for affine rows."""

    def __init__(self, size: int, value, jacobian, hessian_weighted=None):
        self.size = size
        self._value = value
        self._jacobian = jacobian
        self._hessian_weighted = hessian_weighted

    def value(self, x):
        return np.atleast_1d(self._value(x))

    def jacobian(self, x):
        return np.atleast_2d(self._jacobian(x))

    def hessian_weighted(self, x, w):
        if self._hessian_weighted is None:
            return None
        return self._hessian_weighted(x, w)


@dataclass
class ConvexProgram:
    n_vars: int
    objective: Objective
    inequalities: list[ConstraintBlock] = field(default_factory=list)
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    domain: Callable[[np.ndarray], bool] | None = None

    def __post_init__(self):
        if self.a_eq is not None:
            self.a_eq = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))

    @property
    def n_ineq(self) -> int:
        return sum(block.size for block in self.inequalities)

    def ineq_values(self, x: np.ndarray) -> np.ndarray:
        if not self.inequalities:
            return np.empty(0)
        return np.concatenate([block.value(x) for block in self.inequalities])

    def in_domain(self, x: np.ndarray) -> bool:
        return self.domain is None or bool(self.domain(x))


@dataclass
class Tolerances:
    duality_gap: float = 1e-8
    feasibility: float = 1e-9
    kkt: float = 1e-6
    max_outer: int = 60
    max_newton: int = 200
    newton_decrement: float = 1e-9
    t_start: float = 1.0      # raise to warm-start near a known solution


@dataclass
class SolverReport:
    x_opt: np.ndarray
    objective_value: float
    max_primal_residual: float
    eq_residual: float
    kkt_stationarity_residual: float
    barrier_outer_iters: int
    newton_total_iters: int
    objective_history: list[float]


@dataclass
class KktReport:
    stationarity: float
    complementary_slackness: float
    max_primal_residual: float
    eq_residual: float
    n_active: int


def _barrier_value(program: ConvexProgram, x: np.ndarray, t: float) -> float:
    """t f(x) - sum ln(-g_i(x)); +inf outside the strictly feasible domain."""
    if not program.in_domain(x):
        return np.inf
    try:
        vals = program.ineq_values(x)
        fx = program.objective.value(x)
    except (DomainViolation, FloatingPointError):
        return np.inf
    if not np.isfinite(fx) or not np.isfinite(vals).all() or (vals >= 0.0).any():
        return np.inf
    return t * fx + float(-np.log(-vals).sum())


def _barrier_grad_hess(program: ConvexProgram, x: np.ndarray, t: float):
    grad = t * program.objective.grad(x)
    hess = t * program.objective.hess(x)
    hess = np.array(hess, dtype=float, copy=True)
    vals_list, jac_list = [], []
    for block in program.inequalities:
        vals = block.value(x)
        jac = block.jacobian(x)
        inv = -1.0 / vals                    # positive since vals < 0
        grad += jac.T @ inv
        hess += (jac * (inv ** 2)[:, None]).T @ jac
        extra = block.hessian_weighted(x, inv)
        if extra is not None:
            hess += extra
        vals_list.append(vals)
        jac_list.append(jac)
    return grad, hess, vals_list, jac_list


def _max_feasible_step(vals_list, jac_list, dx: np.ndarray) -> float:
    """Fraction-to-boundary cap from first-order constraint crossings.

    Exact for affine rows; convex rows may cross earlier, which the
    subsequent backtracking absorbs.
    """
    cap = 1.0
    for vals, jac in zip(vals_list, jac_list):
        slope = jac @ dx
        rising = slope > 0.0
        if rising.any():
            crossings = -vals[rising] / slope[rising]
            cap = min(cap, 0.99 * float(crossings.min()))
    return max(cap, 1e-14)


def _solve_kkt(hess: np.ndarray, a_eq: np.ndarray | None, rhs_top: np.ndarray,
               rhs_bottom: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """Solve the symmetric indefinite Newton system with a regularization
    fallback (diagonal 1e-10 bumps) when the factorization fails or the
    computed direction does not actually satisfy the system."""
    n = len(rhs_top)
    if a_eq is None:
        kkt0 = hess
        rhs = rhs_top
    else:
        m = len(a_eq)
        kkt0 = np.block([[hess, a_eq.T], [a_eq, np.zeros((m, m))]])
        rhs = np.concatenate([rhs_top, rhs_bottom])
    norm_kkt = float(np.abs(kkt0).max()) + 1e-30
    for reg in (0.0, 1e-10, 1e-8, 1e-6, 1e-4):
        kkt = kkt0 if reg == 0.0 else kkt0 + reg * norm_kkt * np.diag(
            np.concatenate([np.ones(n), -np.ones(len(rhs) - n)]))
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        if not np.isfinite(sol).all():
            continue
        # backward-error test on the system actually solved
        scale = float(np.linalg.norm(rhs) + norm_kkt * np.linalg.norm(sol))
        if np.linalg.norm(kkt @ sol - rhs) <= 1e-8 * scale + 1e-300:
            return sol[:n], sol[n:]
    raise NumericalFailure("Newton system is numerically singular")


def _center(program: ConvexProgram, x: np.ndarray, t: float,
            tols: Tolerances, decrement_tol: float | None = None
            ) -> tuple[np.ndarray, int]:
    """Damped Newton on the barrier objective over the affine set."""
    a_eq, b_eq = program.a_eq, program.b_eq
    decrement_tol = tols.newton_decrement if decrement_tol is None \
        else decrement_tol
    psi = _barrier_value(program, x, t)
    if not np.isfinite(psi):
        raise NumericalFailure("centering started outside the barrier domain")
    for it in range(tols.max_newton):
        grad, hess, vals_list, jac_list = _barrier_grad_hess(program, x, t)
        rhs_bottom = None if a_eq is None else (b_eq - a_eq @ x)
        dx, _ = _solve_kkt(hess, a_eq, -grad, rhs_bottom)
        decrement = float(-grad @ dx)
        if decrement < 0.0:
            decrement = 0.0
        if 0.5 * decrement <= decrement_tol:
            return x, it
        step = _max_feasible_step(vals_list, jac_list, dx)
        descent = float(grad @ dx)
        while step > 1e-14:
            cand = x + step * dx
            psi_cand = _barrier_value(program, cand, t)
            if psi_cand <= psi + _ARMIJO_C * step * descent:
                break
            step *= _SHRINK
        else:
            # stalled: accept if centering is already reasonable
            if 0.5 * decrement <= max(1e-5, 1e3 * tols.newton_decrement):
                return x, it
            raise NumericalFailure(
                f"line search stalled with Newton decrement {decrement:.3e}")
        x = cand
        psi = psi_cand
    return x, tols.max_newton


def solve(program: ConvexProgram, x0: np.ndarray, tols: Tolerances | None = None,
          stop_objective_below: float | None = None) -> SolverReport:
    """Barrier interior-point solve from a strictly feasible start.

    A start violating the inequalities triggers a phase-I auxiliary solve;
    equality constraints must hold at x0 up to lstsq-projection accuracy.
    """
    tols = tols or Tolerances()
    x = np.array(x0, dtype=float, copy=True)

    if program.a_eq is not None:
        res = program.a_eq @ x - program.b_eq
        if np.abs(res).max(initial=0.0) > 1e-10:
            shift = np.linalg.lstsq(program.a_eq, res, rcond=None)[0]
            x = x - shift
            if np.abs(program.a_eq @ x - program.b_eq).max(initial=0.0) > 1e-8:
                raise Infeasible("equality constraints are inconsistent")

    vals = program.ineq_values(x) if program.in_domain(x) else np.array([1.0])
    if len(vals) and (not np.isfinite(vals).all() or vals.max(initial=-np.inf) >= 0.0):
        x = _phase_one(program, x, tols)

    n_ineq = program.n_ineq
    history: list[float] = []
    newton_total = 0
    outer = 0
    t = tols.t_start
    while True:
        final_stage = n_ineq == 0 or n_ineq / t <= tols.duality_gap
        # early stages only track the central path; the last one polishes
        loose = max(tols.newton_decrement, min(1e-6, 1e-2 * n_ineq / t))
        x, its = _center(program, x, t, tols,
                         decrement_tol=tols.newton_decrement if final_stage
                         else loose)
        newton_total += its
        outer += 1
        fx = program.objective.value(x)
        history.append(float(fx))
        if stop_objective_below is not None and fx < stop_objective_below:
            break
        if n_ineq == 0 or n_ineq / t <= tols.duality_gap:
            break
        if outer >= tols.max_outer:
            break
        t *= 10.0

    vals = program.ineq_values(x)
    primal = float(vals.max(initial=-np.inf)) if len(vals) else 0.0
    eq_res = 0.0
    if program.a_eq is not None:
        eq_res = float(np.abs(program.a_eq @ x - program.b_eq).max())
    kkt = check_kkt(program, x)
    return SolverReport(
        x_opt=x,
        objective_value=float(program.objective.value(x)),
        max_primal_residual=max(primal, 0.0),
        eq_residual=eq_res,
        kkt_stationarity_residual=kkt.stationarity,
        barrier_outer_iters=outer,
        newton_total_iters=newton_total,
        objective_history=history,
    )


def _phase_one(program: ConvexProgram, x0: np.ndarray, tols: Tolerances) -> np.ndarray:
    """Minimize the worst violation s over (x, s); success means s < 0."""
    if not program.in_domain(x0):
        raise DomainViolation("phase-I start violates the open domain")
    n = program.n_vars
    vals0 = program.ineq_values(x0)
    if not np.isfinite(vals0).all():
        raise DomainViolation("phase-I start gives non-finite constraints")
    s0 = float(vals0.max(initial=0.0))
    s0 = s0 + max(1.0, 0.1 * abs(s0))

    def lift(block: ConstraintBlock) -> ConstraintBlock:
        return SmoothInequalities(
            size=block.size,
            value=lambda y, b=block: b.value(y[:n]) - y[n],
            jacobian=lambda y, b=block: np.hstack(
                [b.jacobian(y[:n]), -np.ones((b.size, 1))]),
            hessian_weighted=lambda y, w, b=block: _pad_hessian(
                b.hessian_weighted(y[:n], w), n),
        )

    aux = ConvexProgram(
        n_vars=n + 1,
        objective=Objective(value=lambda y: y[n],
                            grad=lambda y: np.eye(n + 1)[n],
                            hess=lambda y: np.zeros((n + 1, n + 1))),
        inequalities=[lift(b) for b in program.inequalities],
        a_eq=None if program.a_eq is None else np.hstack(
            [program.a_eq, np.zeros((len(program.a_eq), 1))]),
        b_eq=program.b_eq,
        domain=None if program.domain is None else (lambda y: program.domain(y[:n])),
    )
    tols1 = Tolerances(duality_gap=1e-6, max_outer=tols.max_outer,
                       max_newton=tols.max_newton)
    report = solve(aux, np.concatenate([x0, [s0]]), tols1,
                   stop_objective_below=-1e-9 * (1.0 + abs(s0)))
    if report.objective_value >= 0.0:
        raise Infeasible(f"phase-I bottomed out at violation {report.objective_value:.3e}")
    return report.x_opt[:n]


def _pad_hessian(h: np.ndarray | None, n: int) -> np.ndarray | None:
    if h is None:
        return None
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = h
    return out


def check_kkt(program: ConvexProgram, x: np.ndarray,
              active_tol: float = 1e-5) -> KktReport:
    """Least-squares multipliers for active constraints and the resulting
    stationarity residual ||grad f + J_act' lam + A' mu||."""
    grad = program.objective.grad(x)
    jac_rows = []
    active_vals = []
    for block in program.inequalities:
        vals = block.value(x)
        mask = vals >= -active_tol
        if mask.any():
            jac_rows.append(np.atleast_2d(block.jacobian(x))[mask])
            active_vals.append(vals[mask])
    columns = []
    if jac_rows:
        columns.append(np.vstack(jac_rows).T)
    if program.a_eq is not None:
        columns.append(program.a_eq.T)

    if columns:
        basis = np.hstack(columns)
        multipliers, *_ = np.linalg.lstsq(basis, -grad, rcond=None)
        residual = float(np.linalg.norm(grad + basis @ multipliers))
    else:
        multipliers = np.empty(0)
        residual = float(np.linalg.norm(grad))

    comp = 0.0
    if active_vals:
        lam = multipliers[: sum(len(v) for v in active_vals)]
        comp = float(np.abs(np.concatenate(active_vals) * lam).max(initial=0.0))

    vals = program.ineq_values(x)
    primal = float(np.maximum(vals, 0.0).max(initial=0.0)) if len(vals) else 0.0
    eq_res = 0.0
    if program.a_eq is not None:
        eq_res = float(np.abs(program.a_eq @ x - program.b_eq).max())
    n_active = sum(len(v) for v in active_vals)
    return KktReport(stationarity=residual, complementary_slackness=comp,
                     max_primal_residual=primal, eq_residual=eq_res,
                     n_active=n_active)


def validate_derivatives(program: ConvexProgram, x: np.ndarray,
                         rng: np.random.Generator, rel_tol: float = 1e-5,
                         n_probes: int = 5) -> None:
    """Finite-difference consistency check of all callbacks at x (debug aid)."""
    n = program.n_vars
    for _ in range(n_probes):
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        eps = 1e-6 * (1.0 + float(np.linalg.norm(x)))
        fd = (program.objective.value(x + eps * u)
              - program.objective.value(x - eps * u)) / (2 * eps)
        an = float(program.objective.grad(x) @ u)
        if abs(fd - an) > rel_tol * max(1.0, abs(an)):
            raise AssertionError(f"objective gradient mismatch: {fd} vs {an}")
        for block in program.inequalities:
            fd_vec = (block.value(x + eps * u) - block.value(x - eps * u)) / (2 * eps)
            an_vec = block.jacobian(x) @ u
            err = np.abs(fd_vec - an_vec).max(initial=0.0)
            if err > rel_tol * max(1.0, np.abs(an_vec).max(initial=0.0)):
                raise AssertionError(f"constraint jacobian mismatch: {err:.3e}")
