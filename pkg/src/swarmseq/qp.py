"""Minimally invasive control filter: project a nominal input onto barrier rows.

Solves, per robot,

    minimize    |u_hat - u|^2
    subject to  a_r . u >= b_r   for every constraint row r
                |u|_inf <= speed_limit

The objective is strictly convex, so the minimizer is unique. Two independent
routes are provided: ``solve`` runs a dual active-set iteration (add the most
violated row, drop rows whose multiplier would go negative; exact termination
for strictly convex objectives), while ``oracle_solve`` enumerates candidate
active sets and keeps the KKT-consistent one. Tests require the two to agree
to 1e-6 on random instances.

Infeasible instances are re-solved with quadratically penalized slacks on the
soft rows; hard rows (collision, obstacle) and the speed box are never
relaxed. If the hard rows alone admit no input, the robot freezes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

SLACK_PENALTY = 1e4

_FEAS_TOL = 1e-9
_DUAL_TOL = 1e-10
_ZERO_STEP_TOL = 1e-12


@dataclass(frozen=True)
class QpProblem:
    nominal: np.ndarray
    rows: tuple
    speed_limit: float

    def __post_init__(self):
        nom = self.nominal
        if not (isinstance(nom, np.ndarray) and nom.dtype == np.float64 and nom.shape == (2,)):
            nom = np.asarray(nom, dtype=float).reshape(2)
            object.__setattr__(self, "nominal", nom)
        if not (math.isfinite(nom[0]) and math.isfinite(nom[1])):
            raise ValueError("nominal input is not finite")
        if self.speed_limit <= 0:
            raise ValueError("speed limit must be positive")
        rows = tuple(self.rows)
        if len(rows) > 64:
            raise ValueError(f"too many rows ({len(rows)}); desk-scale cap is 64")
        robots = {r.robot for r in rows}
        if len(robots) > 1:
            raise ValueError(f"rows reference multiple robots: {sorted(robots)}")
        object.__setattr__(self, "rows", rows)


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    slacks: tuple
    status: str  # optimal | relaxed | infeasible_hard
    row_multipliers: tuple = ()
    box_multipliers: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float).reshape(2))


def _box_rows(limit):
    """The speed box |u|_inf <= limit as four inequality rows a.u >= b."""
    normals = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    offsets = np.full(4, -limit)
    return normals, offsets


def _stack(problem, include_soft=True):
    normals = []
    offsets = []
    for r in problem.rows:
        if include_soft or r.hard:
            normals.append(r.normal)
            offsets.append(r.offset)
    bn, bo = _box_rows(problem.speed_limit)
    normals.extend(bn)
    offsets.extend(bo)
    return np.array(normals), np.array(offsets)


def _dual_active_set(target, gdiag, normals, offsets, max_iter=None):
    """Least-distance projection in the diag(gdiag) metric onto {a.x >= b}.

    Starts from the unconstrained optimum and repeatedly activates the most
    violated row, taking full primal steps when possible and dropping active
    rows whose multiplier would turn negative otherwise. Returns (x, lam)
    with lam aligned to ``normals``, or None when the rows are inconsistent.
    """
    d = len(target)
    m = len(normals)
    if max_iter is None:
        max_iter = 50 + 10 * m
    ginv = 1.0 / gdiag
    x = target.astype(float).copy()
    active = []
    lam_active = []

    for _ in range(max_iter):
        slack = normals @ x - offsets if m else np.empty(0)
        p = int(np.argmin(slack)) if m else -1
        if m == 0 or slack[p] >= -_FEAS_TOL:
            lam = np.zeros(m)
            for idx, w in enumerate(active):
                lam[w] = lam_active[idx]
            return x, lam
        n_plus = normals[p]
        lam_plus = 0.0
        for _ in range(max_iter):
            if active:
                nmat = normals[active].T  # d x q
                gram = nmat.T @ (ginv[:, None] * nmat)
                try:
                    r = np.linalg.solve(gram, nmat.T @ (ginv * n_plus))
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(gram, nmat.T @ (ginv * n_plus), rcond=None)[0]
                z = ginv * (n_plus - nmat @ r)
            else:
                r = np.empty(0)
                z = ginv * n_plus
            znorm = float(n_plus @ z)

            viol = offsets[p] - float(n_plus @ x)
            t_full = viol / znorm if znorm > _ZERO_STEP_TOL else np.inf
            t_drop = np.inf
            blocker = -1
            for idx in range(len(active)):
                if r[idx] > _DUAL_TOL:
                    cand = lam_active[idx] / r[idx]
                    if cand < t_drop:
                        t_drop = cand
                        blocker = idx
            t = min(t_full, t_drop)
            if not np.isfinite(t):
                return None  # violated row lies in the span of the active set: infeasible
            if znorm > _ZERO_STEP_TOL:
                x = x + t * z
            for idx in range(len(active)):
                lam_active[idx] -= t * r[idx]
            lam_plus += t
            if t_full <= t_drop:
                active.append(p)
                lam_active.append(lam_plus)
                break
            del active[blocker], lam_active[blocker]
    raise RuntimeError("active-set iteration failed to terminate")


def _soft_indices(problem):
    return [k for k, r in enumerate(problem.rows) if not r.hard]


def _split_multipliers(problem, lam, kept_indices):
    row_mult = [0.0] * len(problem.rows)
    for pos, k in enumerate(kept_indices):
        row_mult[k] = float(lam[pos])
    box_mult = tuple(float(v) for v in lam[len(kept_indices):len(kept_indices) + 4])
    return tuple(row_mult), box_mult


def solve(problem):
    """Unique minimizer of |u_hat - u|^2 over the rows and the speed box.

    Falls back to slack relaxation of the soft rows when the full set is
    inconsistent, and to a zero input with status ``infeasible_hard`` when
    even the hard rows admit no input.
    """
    normals, offsets = _stack(problem)
    res = _dual_active_set(problem.nominal, np.ones(2), normals, offsets)
    if res is not None:
        x, lam = res
        row_mult, box_mult = _split_multipliers(problem, lam, list(range(len(problem.rows))))
        return QpSolution(
            u=x,
            slacks=tuple(0.0 for _ in _soft_indices(problem)),
            status="optimal",
            row_multipliers=row_mult,
            box_multipliers=box_mult,
        )

    h_normals, h_offsets = _stack(problem, include_soft=False)
    hard_res = _dual_active_set(problem.nominal, np.ones(2), h_normals, h_offsets)
    if hard_res is None:
        soft = _soft_indices(problem)
        zero = np.zeros(2)
        slacks = tuple(
            max(0.0, problem.rows[k].offset - float(problem.rows[k].normal @ zero)) for k in soft
        )
        return QpSolution(u=zero, slacks=slacks, status="infeasible_hard")

    soft = _soft_indices(problem)
    x, lam = _relaxed_solve(problem, soft)
    u = x[:2]
    slacks = tuple(max(0.0, float(x[2 + s])) for s in range(len(soft)))
    nrows = len(problem.rows)
    row_mult = tuple(float(lam[k]) for k in range(nrows))
    box_mult = tuple(float(lam[nrows + b]) for b in range(4))
    return QpSolution(
        u=u,
        slacks=slacks,
        status="relaxed",
        row_multipliers=row_mult,
        box_multipliers=box_mult,
    )


def _relaxed_solve(problem, soft):
    """Re-solve with slack variables xi on soft rows: a.u + xi >= b, xi >= 0,
    penalized by SLACK_PENALTY * xi^2. Hard rows and the box stay exact."""
    ns = len(soft)
    dim = 2 + ns
    target = np.zeros(dim)
    target[:2] = problem.nominal
    gdiag = np.ones(dim)
    gdiag[2:] = SLACK_PENALTY

    normals = []
    offsets = []
    for k, r in enumerate(problem.rows):
        row = np.zeros(dim)
        row[:2] = r.normal
        if not r.hard:
            row[2 + soft.index(k)] = 1.0
        normals.append(row)
        offsets.append(r.offset)
    bn, bo = _box_rows(problem.speed_limit)
    for v, b in zip(bn, bo):
        row = np.zeros(dim)
        row[:2] = v
        normals.append(row)
        offsets.append(b)
    for s in range(ns):
        row = np.zeros(dim)
        row[2 + s] = 1.0
        normals.append(row)
        offsets.append(0.0)

    res = _dual_active_set(target, gdiag, np.array(normals), np.array(offsets))
    if res is None:
        raise RuntimeError("relaxed problem infeasible despite feasible hard rows")
    return res


def kkt_residuals(problem, solution):
    """Stationarity, dual-feasibility, and complementarity residuals.

    For status ``relaxed`` the checked optimality system is that of the
    slack-extended problem: soft rows are credited their reported slack, so
    the same stationarity expression (u - u_hat) = sum(lam * a) applies.
    Complementarity is reported scale-invariantly, |lam * resid| / (1 + lam),
    so the large penalty multipliers of relaxed rows do not inflate a
    machine-precision residual.
    """
    u = solution.u
    grad = u - problem.nominal
    for r, lam in zip(problem.rows, solution.row_multipliers):
        grad = grad - lam * r.normal
    bn, bo = _box_rows(problem.speed_limit)
    comp = 0.0
    dual = 0.0
    for v, b, lam in zip(bn, bo, solution.box_multipliers):
        grad = grad - lam * v
        comp = max(comp, abs(lam * (float(v @ u) - b)) / (1.0 + abs(lam)))
        dual = max(dual, -lam)
    slack_iter = iter(solution.slacks)
    residuals = []
    for r in problem.rows:
        resid = float(r.normal @ u) - r.offset
        if not r.hard and solution.status == "relaxed":
            resid += next(slack_iter)
        residuals.append(resid)
    for r, lam, resid in zip(problem.rows, solution.row_multipliers, residuals):
        comp = max(comp, abs(lam * resid) / (1.0 + abs(lam)))
        dual = max(dual, -lam)
    primal = max((-resid for resid in residuals), default=0.0)
    for v, b in zip(bn, bo):
        primal = max(primal, b - float(v @ u))
    return {
        "stationarity": float(np.max(np.abs(grad))),
        "primal": primal,
        "dual": dual,
        "complementarity": comp,
    }


def oracle_solve(problem):
    """Active-set enumeration reference solver, exact up to floating point.

    Candidate active sets of size at most two suffice in the plane: at the
    optimum, u* - u_hat lies in the cone of the active normals, and any
    vector in a finitely generated cone in R^2 is a nonnegative combination
    of at most two generators.
    """
    if len(problem.rows) > 12:
        raise ValueError(f"oracle enumeration capped at 12 rows, got {len(problem.rows)}")

    normals, offsets = _stack(problem)
    cand = _enumerate_projection(problem.nominal, normals, offsets)
    if cand is not None:
        x, lam = cand
        row_mult, box_mult = _split_multipliers(problem, lam, list(range(len(problem.rows))))
        return QpSolution(
            u=x,
            slacks=tuple(0.0 for _ in _soft_indices(problem)),
            status="optimal",
            row_multipliers=row_mult,
            box_multipliers=box_mult,
        )

    h_normals, h_offsets = _stack(problem, include_soft=False)
    if _enumerate_projection(problem.nominal, h_normals, h_offsets) is None:
        soft = _soft_indices(problem)
        zero = np.zeros(2)
        slacks = tuple(
            max(0.0, problem.rows[k].offset - float(problem.rows[k].normal @ zero)) for k in soft
        )
        return QpSolution(u=zero, slacks=slacks, status="infeasible_hard")

    u, hardbox_mu = _enumerate_relaxed(problem)
    soft = _soft_indices(problem)
    slacks = tuple(
        max(0.0, problem.rows[k].offset - float(problem.rows[k].normal @ u)) for k in soft
    )
    row_mult = []
    hard_pos = 0
    soft_pos = 0
    for r in problem.rows:
        if r.hard:
            row_mult.append(float(hardbox_mu[hard_pos]))
            hard_pos += 1
        else:
            row_mult.append(SLACK_PENALTY * slacks[soft_pos])
            soft_pos += 1
    box_mult = tuple(float(v) for v in hardbox_mu[hard_pos:hard_pos + 4])
    return QpSolution(
        u=u,
        slacks=slacks,
        status="relaxed",
        row_multipliers=tuple(row_mult),
        box_multipliers=box_mult,
    )


def _enumerate_projection(target, normals, offsets):
    """Projection of target onto {a.x >= b} by enumerating active sets <= 2.

    Returns (x, lam) for the best KKT-consistent candidate, or None when no
    candidate is feasible (empty polyhedron).
    """
    m = len(normals)
    best = None
    subsets = [()]
    subsets += [(i,) for i in range(m)]
    subsets += list(combinations(range(m), 2))
    for sub in subsets:
        if not sub:
            x = target.copy()
            lam_sub = np.empty(0)
        else:
            nmat = normals[list(sub)]  # q x 2
            gram = nmat @ nmat.T
            rhs = offsets[list(sub)] - nmat @ target
            try:
                lam_sub = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(lam_sub < -_FEAS_TOL):
                continue
            x = target + nmat.T @ lam_sub
        if m and np.min(normals @ x - offsets) < -1e-8:
            continue
        obj = float((x - target) @ (x - target))
        if best is None or obj < best[0] - 1e-15:
            lam = np.zeros(m)
            for pos, k in enumerate(sub):
                lam[k] = max(0.0, float(lam_sub[pos]))
            best = (obj, x, lam)
    if best is None:
        return None
    return best[1], best[2]


def _enumerate_relaxed(problem):
    """Reference for the slack-relaxed problem via soft-row activity patterns.

    Eliminating the optimal slacks xi_s = max(0, b_s - a_s.u) leaves
        F(u) = |u - u_hat|^2 + w * sum_s max(0, b_s - a_s.u)^2
    to be minimized over the hard rows and the box. For each guess of which
    soft rows are violated, F restricted to that pattern is a plain quadratic;
    enumerate hard/box active sets of size <= 2 for each and keep the
    pattern-consistent candidate with the smallest true objective.
    """
    w = SLACK_PENALTY
    soft_rows = [r for r in problem.rows if not r.hard]
    hard_normals, hard_offsets = _stack(problem, include_soft=False)
    mh = len(hard_normals)

    def true_objective(u):
        val = float((u - problem.nominal) @ (u - problem.nominal))
        for r in soft_rows:
            val += w * max(0.0, r.offset - float(r.normal @ u)) ** 2
        return val

    best = None
    ns = len(soft_rows)
    for mask in range(1 << ns):
        pattern = [s for s in range(ns) if mask >> s & 1]
        hess = np.eye(2)
        lin = problem.nominal.copy()
        for s in pattern:
            a = soft_rows[s].normal
            hess = hess + w * np.outer(a, a)
            lin = lin + w * soft_rows[s].offset * a
        subsets = [()]
        subsets += [(i,) for i in range(mh)]
        subsets += list(combinations(range(mh), 2))
        for sub in subsets:
            if not sub:
                try:
                    u = np.linalg.solve(hess, lin)
                except np.linalg.LinAlgError:
                    continue
                mu_sub = np.empty(0)
            else:
                nmat = hard_normals[list(sub)]
                q = len(sub)
                kkt = np.zeros((2 + q, 2 + q))
                kkt[:2, :2] = hess
                kkt[:2, 2:] = -nmat.T
                kkt[2:, :2] = nmat
                rhs = np.concatenate([lin, hard_offsets[list(sub)]])
                try:
                    sol = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    continue
                u = sol[:2]
                mu_sub = sol[2:]
                if np.any(mu_sub < -_FEAS_TOL):
                    continue
            if mh and np.min(hard_normals @ u - hard_offsets) < -1e-8:
                continue
            ok = True
            for s in range(ns):
                resid = soft_rows[s].offset - float(soft_rows[s].normal @ u)
                if s in pattern:
                    if resid < -1e-8:
                        ok = False
                        break
                elif resid > 1e-8:
                    ok = False
                    break
            if not ok:
                continue
            obj = true_objective(u)
            if best is None or obj < best[0] - 1e-15:
                mu = np.zeros(mh)
                for pos, k in enumerate(sub):
                    mu[k] = max(0.0, float(mu_sub[pos]))
                best = (obj, u, mu)
    if best is None:
        raise RuntimeError("relaxed enumeration found no candidate")
    return best[1], best[2]
