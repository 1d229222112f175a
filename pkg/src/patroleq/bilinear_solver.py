"""Multi-start solver for the patrol-strategy optimization problems.

Once the taboo tensors are substituted forward, every quantity the game
needs — survival probabilities, expected utilities, the minmax bound — is
an affine function of per-action survivals, each of which is a polynomial
in the transition matrix. The resulting programs are smooth but
nonconvex, so this module attacks them with a projected augmented
Lagrangian from many random starts: gradients come from reverse-mode
accumulation through the survival recursion, iterates stay on the
adjacency-masked probability simplex via exact per-row projection, and
every start follows its own seed so runs are reproducible and adding
starts can only improve the reported value.

A NotFound answer is heuristic: nonconvexity precludes an infeasibility
certificate, so callers must treat it as "no feasible point located",
never as a proof.

Setting the PATROL_EQ_LOG environment variable to a file path appends
one JSON line of convergence data per start and outer round.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dominance import ReducedInstance
from .markov import IntruderAction, MarkovStrategy
from .model import InstanceError


@dataclass(frozen=True)
class SurvivalTerm:
    """coeff times the survival probability of enter-when(t, z)."""

    coeff: float
    t: str  # attacked target
    z: str  # observation vertex


@dataclass(frozen=True)
class AffineExpr:
    """const + sum of survival terms + u_coeff times the bound variable."""

    const: float = 0.0
    terms: tuple[SurvivalTerm, ...] = ()
    u_coeff: float = 0.0


@dataclass(frozen=True)
class Constraint:
    """One inequality expr <= 0, tagged with the intruder action it restrains."""

    action: IntruderAction
    expr: AffineExpr


@dataclass
class AlphaProblem:
    """A feasibility or optimization program over one transition matrix.

    The decision variables are the adjacency-allowed entries of the
    matrix, plus the scalar bound u when any expression references it.
    ``objective=None`` means pure feasibility; otherwise the expression
    is maximized or minimized per ``sense``. ``tie_rows`` restricts the
    search to matrices whose rows are all identical.
    """

    instance: ReducedInstance
    constraints: list[Constraint] = field(default_factory=list)
    objective: AffineExpr | None = None
    sense: str = "maximize"   # "maximize" or "minimize", with an objective only
    tie_rows: bool = False

    def __post_init__(self) -> None:
        if self.sense not in ("maximize", "minimize"):
            raise InstanceError(f"unknown objective sense {self.sense!r}")
        base = self.instance.base
        exprs = [c.expr for c in self.constraints]
        if self.objective is not None:
            exprs.append(self.objective)
        for e in exprs:
            for term in e.terms:
                if term.t not in base.target_ids:
                    raise InstanceError(f"{term.t!r} is not a target")
                if term.z not in base.index:
                    raise InstanceError(f"unknown observation vertex {term.z!r}")
        if self.instance.V_t:
            for c in self.constraints:
                a = c.action
                if a.kind == "enter_when" and a.z not in self.instance.V_t.get(a.t, []):
                    raise InstanceError(
                        f"constraint action {a} is outside the non-dominated set")

    @property
    def has_u(self) -> bool:
        if self.objective is not None and self.objective.u_coeff:
            return True
        return any(c.expr.u_coeff for c in self.constraints)


@dataclass(frozen=True)
class SolverConfig:
    starts: int = 32            # independent random initializations
    max_iters: int = 200        # projected-gradient steps per outer round
    outer_rounds: int = 12      # multiplier/penalty updates per start
    feas_tol: float = 1e-6      # accepted constraint violation
    opt_tol: float = 1e-6       # step stagnation threshold
    rng_seed: int = 0
    penalty_init: float = 10.0  # initial quadratic penalty weight
    penalty_growth: float = 4.0 # growth factor when violations stall

    def __post_init__(self) -> None:
        if self.starts < 1 or self.max_iters < 1 or self.outer_rounds < 1:
            raise InstanceError("starts, max_iters, and outer_rounds must be >= 1")
        if min(self.feas_tol, self.opt_tol) <= 0:
            raise InstanceError("tolerances must be positive")
        if self.penalty_init <= 0 or self.penalty_growth < 1:
            raise InstanceError("bad penalty schedule")


@dataclass(eq=False)
class Feasible:
    strategy: MarkovStrategy
    max_violation: float


@dataclass(eq=False)
class Solution:
    strategy: MarkovStrategy
    value: float
    max_violation: float


@dataclass(frozen=True)
class NotFound:
    """Heuristic verdict: no feasible point located across all starts."""

    best_violation: float


@dataclass(frozen=True)
class GradientCheckReport:
    """Worst analytic-vs-finite-difference mismatch over free entries.

    Entries pinned at zero by the simplex projection are one-sided, so
    they are skipped from the maximum and counted separately.
    """

    max_relative_error: float
    checked_entries: int
    skipped_active_entries: int


_LAM_CAP = 1e10  # multiplier and penalty ceilings keep the inner problem finite


def _project_rows(v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the mask-restricted simplex."""
    sentinel = v.min(axis=1, keepdims=True) - 1.0
    w = np.where(mask, v, sentinel)
    s = np.sort(w, axis=1)[:, ::-1]
    css = np.cumsum(s, axis=1) - 1.0
    ks = np.arange(1, v.shape[1] + 1)
    cond = s - css / ks > 0.0  # true on a prefix; sentinels never activate
    rho = cond.sum(axis=1) - 1
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    out = np.maximum(v - theta[:, None], 0.0) * mask
    return out / out.sum(axis=1, keepdims=True)


class _Evaluator:
    """Compiled expression tables and batched value/gradient passes.

    Expressions are grouped per attacked target into dense weight
    matrices, so evaluating all constraints plus the objective costs one
    survival recursion and one matmul per target, batched over starts.
    """

    def __init__(self, problem: AlphaProblem):
        base = problem.instance.base
        self.n = base.n
        self.mask = base.adjacency()
        self.K = len(problem.constraints)
        exprs = [c.expr for c in problem.constraints]
        self.has_objective = problem.objective is not None
        if self.has_objective:
            exprs.append(problem.objective)
        self.rows = len(exprs)
        self.consts = np.array([e.const for e in exprs])
        self.u_coeffs = np.array([e.u_coeff for e in exprs])
        self.has_u = problem.has_u
        weight: dict[str, np.ndarray] = {}
        for r, e in enumerate(exprs):
            for term in e.terms:
                w = weight.setdefault(term.t, np.zeros((self.rows, self.n)))
                w[r, base.index[term.z]] += term.coeff
        self.targets = sorted(weight)
        self.weight = weight
        self.t_index = {t: base.index[t] for t in self.targets}
        self.t_depth = {t: base.target(t).d for t in self.targets}
        # minimize the internal objective phi; flip sign for maximize
        self.obj_sign = -1.0 if problem.sense == "maximize" else 1.0

    def forward(self, alpha: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per-target taboo matrices and the whole ladder of row-sum vectors."""
        caches = {}
        for t in self.targets:
            m = alpha.copy()
            m[:, :, self.t_index[t]] = 0.0
            d = self.t_depth[t]
            vs = np.empty((d + 1, alpha.shape[0], self.n))
            vs[0] = 1.0
            for j in range(1, d + 1):
                vs[j] = (m @ vs[j - 1][..., None])[..., 0]
            caches[t] = (m, vs)
        return caches

    def values(self, caches: dict, u: np.ndarray) -> np.ndarray:
        """All expression values, shape (starts, rows); constraints first."""
        some = next(iter(caches.values()), None)
        starts = some[1].shape[1] if some else u.shape[0]
        vals = np.tile(self.consts, (starts, 1))
        for t in self.targets:
            vals += caches[t][1][-1] @ self.weight[t].T
        if self.has_u:
            vals = vals + u[:, None] * self.u_coeffs[None, :]
        return vals

    def gradient(self, caches: dict, row_weights: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
        """Adjoint of sum_r row_weights[:, r] * expr_r; returns (d/dalpha, d/du)."""
        starts = row_weights.shape[0]
        grad = np.zeros((starts, self.n, self.n))
        for t in self.targets:
            m, vs = caches[t]
            d = self.t_depth[t]
            c = row_weights @ self.weight[t]  # (starts, n) seed of the adjoint
            mt = np.transpose(m, (0, 2, 1))
            us = np.empty((d, starts, self.n))
            us[0] = c
            for k in range(1, d):
                us[k] = (mt @ us[k - 1][..., None])[..., 0]
            g = np.einsum("ksi,ksj->sij", us, vs[d - 1::-1][:d])
            g[:, :, self.t_index[t]] = 0.0  # taboo column is not a variable
            grad += g
        grad_u = row_weights @ self.u_coeffs if self.has_u else np.zeros(starts)
        return grad, grad_u

    def lagrangian(self, vals: np.ndarray, lam: np.ndarray, rho: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
        """Augmented Lagrangian value and per-row gradient weights."""
        starts = vals.shape[0]
        weights = np.zeros((starts, self.rows))
        phi = np.zeros(starts)
        if self.has_objective:
            phi += self.obj_sign * vals[:, -1]
            weights[:, -1] = self.obj_sign
        if self.K:
            shifted = np.maximum(0.0, lam + rho[:, None] * vals[:, :self.K])
            phi += ((shifted ** 2 - lam ** 2).sum(axis=1)) / (2.0 * rho)
            weights[:, :self.K] = shifted
        return phi, weights

    def violations(self, vals: np.ndarray) -> np.ndarray:
        if not self.K:
            return np.zeros(vals.shape[0])
        return np.maximum(0.0, vals[:, :self.K]).max(axis=1)


def _trace_sink():
    path = os.environ.get("PATROL_EQ_LOG")
    if not path:
        return None
    return path


def _emit_trace(path: str, payload: dict) -> None:
    try:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(payload) + "\n")
    except OSError:
        pass


def _initial_matrices(problem: AlphaProblem, config: SolverConfig,
                      mask: np.ndarray, common: np.ndarray) -> np.ndarray:
    n = mask.shape[0]
    starts = config.starts
    out = np.empty((starts, n, n))
    for k in range(starts):
        rng = np.random.default_rng(np.random.SeedSequence((config.rng_seed, k)))
        if problem.tie_rows:
            row = rng.exponential(size=n) * common
            out[k] = np.tile(row / row.sum(), (n, 1))
        else:
            e = rng.exponential(size=(n, n)) * mask
            out[k] = e / e.sum(axis=1, keepdims=True)
    return out


def _run(problem: AlphaProblem, config: SolverConfig, stop_at_feasible: bool):
    """Shared multi-start engine; returns per-start snapshots."""
    ev = _Evaluator(problem)
    n, starts = ev.n, config.starts
    common = ev.mask.all(axis=0)
    if problem.tie_rows and not common.any():
        raise InstanceError("tie_rows needs a move allowed from every vertex")
    alpha = _initial_matrices(problem, config, ev.mask, common)
    u = np.zeros(starts)
    if ev.has_u:
        # start from the tightest bound already satisfied by the initial point
        vals = ev.values(ev.forward(alpha), u)
        withu = np.flatnonzero(ev.u_coeffs[:ev.K] < 0)
        if withu.size:
            u = (vals[:, withu] / -ev.u_coeffs[withu][None, :]).max(axis=1) + 0.1
    lam = np.zeros((starts, ev.K))
    rho = np.full(starts, config.penalty_init)
    eta = np.full(starts, 0.05)
    flat_mask = np.tile(common[None, :], (starts, 1)) if problem.tie_rows \
        else np.tile(ev.mask, (starts, 1))
    best_alpha = alpha.copy()
    best_u = u.copy()
    best_viol = np.full(starts, np.inf)
    best_value = np.full(starts, -np.inf if ev.obj_sign < 0 else np.inf)
    prev_viol = np.full(starts, np.inf)
    trace = _trace_sink()

    for rnd in range(config.outer_rounds):
        for _ in range(config.max_iters):
            caches = ev.forward(alpha)
            vals = ev.values(caches, u)
            phi, weights = ev.lagrangian(vals, lam, rho)
            grad_a, grad_u = ev.gradient(caches, weights)
            if problem.tie_rows:
                gvar = grad_a.sum(axis=1) * common
                var = alpha[:, 0, :]
            else:
                gvar = grad_a
                var = alpha.reshape(starts * n, n)
                gvar = gvar.reshape(starts * n, n)
            accepted = np.zeros(starts, dtype=bool)
            kept_var = var.copy()
            kept_u = u.copy()
            trial = eta.copy()
            for _bt in range(60):
                if problem.tie_rows:
                    step = var - trial[:, None] * gvar
                    cand_rows = _project_rows(step, flat_mask)
                    cand = np.repeat(cand_rows[:, None, :], n, axis=1)
                    dvar = cand_rows - var
                    descent = (gvar * dvar).sum(axis=1)
                else:
                    step = var - np.repeat(trial, n)[:, None] * gvar
                    cand_rows = _project_rows(step, flat_mask)
                    cand = cand_rows.reshape(starts, n, n)
                    dvar = (cand_rows - var).reshape(starts, n * n)
                    descent = (gvar.reshape(starts, n * n) * dvar).sum(axis=1)
                cu = u - trial * grad_u if ev.has_u else u
                cphi, _ = ev.lagrangian(ev.values(ev.forward(cand), cu), lam, rho)
                if ev.has_u:
                    descent = descent + grad_u * (cu - u)
                ok = cphi <= phi + 1e-4 * descent + 1e-15
                new = ok & ~accepted
                if new.any():
                    if problem.tie_rows:
                        kept_var[new] = cand_rows[new]
                    else:
                        kept_var[np.repeat(new, n)] = cand_rows[np.repeat(new, n)]
                    kept_u[new] = cu[new]
                    eta[new] = np.minimum(trial[new] * 1.5, 100.0)
                accepted |= ok
                if accepted.all():
                    break
                trial = np.where(accepted, trial, trial * 0.5)
                if (trial[~accepted] < 1e-14).all():
                    break
            eta[~accepted] = np.maximum(eta[~accepted] * 0.5, 1e-14)
            moved = np.abs(kept_var - var).max(axis=1)
            if problem.tie_rows:
                alpha = np.repeat(kept_var[:, None, :], n, axis=1)
            else:
                moved = moved.reshape(starts, n).max(axis=1)
                alpha = kept_var.reshape(starts, n, n)
            moved = np.maximum(moved, np.abs(kept_u - u))
            u = kept_u
            if (~accepted | (moved <= 1e-13)).all():
                break

        vals = ev.values(ev.forward(alpha), u)
        viol = ev.violations(vals)
        value = vals[:, -1] if ev.has_objective else np.zeros(starts)
        if ev.has_objective:
            was_feasible = best_viol <= config.feas_tol
            gain = value > best_value if ev.obj_sign < 0 else value < best_value
            take = (viol <= config.feas_tol) & (~was_feasible | gain)
            take |= ~was_feasible & (viol < best_viol)
        else:
            take = viol < best_viol
        best_alpha[take] = alpha[take]
        best_u[take] = u[take]
        best_viol[take] = viol[take]
        best_value[take] = value[take]
        if trace:
            for k in range(starts):
                _emit_trace(trace, {
                    "solver_trace": {"start": k, "round": rnd,
                                     "value": float(value[k]),
                                     "max_violation": float(viol[k])}})
        if stop_at_feasible and (best_viol <= config.feas_tol).any():
            break
        if ev.K:
            lam = np.minimum(np.maximum(0.0, lam + rho[:, None] * vals[:, :ev.K]),
                             _LAM_CAP)
            grow = (viol > config.feas_tol) & (viol > 0.25 * prev_viol)
            rho = np.where(grow, np.minimum(rho * config.penalty_growth, _LAM_CAP),
                           rho)
            prev_viol = viol
    return ev, best_alpha, best_u, best_viol, best_value


def _finish_strategy(problem: AlphaProblem, alpha: np.ndarray) -> MarkovStrategy:
    clean = np.where(problem.instance.base.adjacency(), alpha, 0.0)
    clean /= clean.sum(axis=1, keepdims=True)
    return MarkovStrategy(problem.instance, clean)


def solve_feasibility(problem: AlphaProblem,
                      config: SolverConfig | None = None) -> Feasible | NotFound:
    """Search for any transition matrix satisfying every constraint.

    Parameters
    ----------
    problem : AlphaProblem
        Must carry no objective.
    config : SolverConfig, optional
        Multi-start and tolerance settings.

    Returns
    -------
    Feasible or NotFound
        Feasible wraps a validated strategy whose worst violation is at
        most feas_tol. NotFound is heuristic evidence, not a proof.
    """
    if problem.objective is not None:
        raise InstanceError("feasibility problems carry no objective")
    config = config or SolverConfig()
    _, alpha, _, viol, _ = _run(problem, config, stop_at_feasible=True)
    hits = np.flatnonzero(viol <= config.feas_tol)
    if hits.size == 0:
        return NotFound(best_violation=float(viol.min()))
    k = int(hits[0])
    return Feasible(strategy=_finish_strategy(problem, alpha[k]),
                    max_violation=float(viol[k]))


def maximize(problem: AlphaProblem,
             config: SolverConfig | None = None) -> Solution | NotFound:
    """Optimize the problem objective over the feasible set.

    Returns the best feasible local optimum across all starts; the
    reported value is re-evaluated from the returned strategy, so it
    matches any downstream recomputation.
    """
    if problem.objective is None:
        raise InstanceError("maximize needs an objective")
    config = config or SolverConfig()
    ev, alpha, u, viol, value = _run(problem, config, stop_at_feasible=False)
    feas = np.flatnonzero(viol <= config.feas_tol)
    if feas.size == 0:
        return NotFound(best_violation=float(viol.min()))
    score = value[feas] if ev.obj_sign < 0 else -value[feas]
    k = int(feas[np.argmax(score)])
    strategy = _finish_strategy(problem, alpha[k])
    final_vals = ev.values(ev.forward(strategy.alpha[None]), u[k:k + 1])
    return Solution(strategy=strategy,
                    value=float(final_vals[0, -1]),
                    max_violation=float(ev.violations(final_vals)[0]))


def gradient_check(problem: AlphaProblem, point: MarkovStrategy,
                   step: float = 1e-6) -> GradientCheckReport:
    """Compare adjoint gradients against central finite differences.

    Checks the objective and every constraint at ``point`` over all free
    matrix entries (and u when present). Entries sitting exactly at zero
    are skipped from the maximum: the projection is active there, so a
    two-sided difference tests directions the solver cannot take.
    """
    ev = _Evaluator(problem)
    base_alpha = point.alpha.copy()
    u0 = np.array([0.7])  # arbitrary interior value for the bound variable
    free = ev.mask & (base_alpha > 0.0)
    skipped = int(ev.mask.sum() - free.sum())
    worst = 0.0
    checked = 0
    for r in range(ev.rows):
        seed = np.zeros((1, ev.rows))
        seed[0, r] = 1.0
        analytic, analytic_u = ev.gradient(ev.forward(base_alpha[None]), seed)
        for i, j in np.argwhere(free):
            bumped = base_alpha.copy()
            bumped[i, j] += step
            hi = ev.values(ev.forward(bumped[None]), u0)[0, r]
            bumped[i, j] -= 2.0 * step
            lo = ev.values(ev.forward(bumped[None]), u0)[0, r]
            fd = (hi - lo) / (2.0 * step)
            a = analytic[0, i, j]
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-4))
            checked += 1
        if ev.has_u:
            hi = ev.values(ev.forward(base_alpha[None]), u0 + step)[0, r]
            lo = ev.values(ev.forward(base_alpha[None]), u0 - step)[0, r]
            fd = (hi - lo) / (2.0 * step)
            a = analytic_u[0] if np.ndim(analytic_u) else float(analytic_u)
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-4))
            checked += 1
    return GradientCheckReport(max_relative_error=float(worst),
                               checked_entries=checked,
                               skipped_active_entries=skipped)
