"""Dense operator-splitting solver for small quadratic programs.

Problems have the form

    minimize    0.5 x' P x + q' x
    subject to  l <= A x <= u

with P symmetric positive semidefinite and two-sided (possibly infinite)
row bounds.  The solver is an ADMM iteration with Ruiz equilibration, a
single factorization reused across solves, over-relaxation and warm
starting.  It is deterministic: identical inputs and settings produce
bit-identical iterates.

The controller produces tall problems (few variables, many rows), so the
quasi-definite KKT system is solved through its n x n Schur complement
``P + sigma I + A' diag(rho) A``; this is algebraically the same linear
system as the full (n+m) factorization and far cheaper when m >> n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

INF = np.inf
_PSD_TOL = 1e-10


class SolveStatus(Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"


@dataclass
class QpProblem:
    """Dense QP data with a free-form variable layout tag."""

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray
    layout: dict = field(default_factory=dict)

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float).reshape(-1, self.P.shape[0])
        self.l = np.asarray(self.l, dtype=float).ravel()
        self.u = np.asarray(self.u, dtype=float).ravel()

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def validate(self):
        n, m = self.n, self.m
        if self.P.shape != (n, n):
            raise ValueError(f"P must be square, got {self.P.shape}")
        if self.q.shape != (n,):
            raise ValueError("q length does not match P")
        if self.A.shape != (m, n):
            raise ValueError("A width does not match P")
        if self.l.shape != (m,) or self.u.shape != (m,):
            raise ValueError("bound lengths do not match A")
        if not np.allclose(self.P, self.P.T, atol=1e-9, rtol=1e-9):
            raise ValueError("P must be symmetric")
        if np.any(self.l > self.u):
            raise ValueError("l > u on some row")
        for name, arr in (("P", self.P), ("q", self.q), ("A", self.A)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if self.n:
            w = np.linalg.eigvalsh(0.5 * (self.P + self.P.T))
            if w.min() < -max(_PSD_TOL, _PSD_TOL * abs(w.max())):
                raise ValueError(f"P is not PSD (min eigenvalue {w.min():.3e})")

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: SolveStatus
    iterations: int
    primal_res: float
    dual_res: float
    objective: float


@dataclass
class SolverSettings:
    rho: float = 0.1
    rho_eq_scale: float = 1e3
    rho_loose: float = 1e-6
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_infeas: float = 1e-8
    max_iter: int = 4000
    check_interval: int = 10
    scaling_iters: int = 10


def kkt_residuals(prob: QpProblem, x: np.ndarray, y: np.ndarray):
    """Unscaled optimality residuals for a candidate primal/dual pair.

    Returns ``(primal_res, dual_res, comp_slack)`` where the primal residual
    is the inf-norm distance of Ax from the box [l, u], the dual residual is
    ``||Px + q + A'y||_inf`` and comp_slack is the largest complementary
    slackness violation ``|y_i| * dist(Ax_i, active bound)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax = prob.A @ x if prob.m else np.zeros(0)
    if prob.m:
        clamped = np.clip(ax, prob.l, prob.u)
        primal = float(np.max(np.abs(ax - clamped)))
        dual_vec = prob.P @ x + prob.q + prob.A.T @ y
        up = np.where(np.isfinite(prob.u), prob.u - ax, np.inf)
        lo = np.where(np.isfinite(prob.l), ax - prob.l, np.inf)
        comp = np.maximum(np.where(y > 0, y * up, 0.0),
                          np.where(y < 0, -y * lo, 0.0))
        comp_slack = float(np.max(comp)) if prob.m else 0.0
    else:
        primal = 0.0
        dual_vec = prob.P @ x + prob.q
        comp_slack = 0.0
    dual = float(np.max(np.abs(dual_vec))) if prob.n else 0.0
    return primal, dual, comp_slack


class SolverHandle:
    """Scaled and factorized workspace bound to one problem structure.

    The handle may be reused across solves; ``update_vectors`` refreshes
    q, l, u without refactorizing.  Changing the sparsity/shape of A or P
    requires a fresh ``setup`` (the old handle stays valid for its own data).
    """

    def __init__(self, prob: QpProblem, settings: SolverSettings):
        prob.validate()
        self.settings = settings
        self.n, self.m = prob.n, prob.m
        self.layout = prob.layout
        self._orig = prob

        # Cost prescaling keeps argmin invariant under positive rescaling of
        # (P, q): the scaled problem seen by the iteration is identical.
        cmax = max(np.max(np.abs(prob.P), initial=0.0),
                   np.max(np.abs(prob.q), initial=0.0))
        self.gamma = 1.0 / cmax if cmax > 0 else 1.0

        self.P = self.gamma * prob.P.copy()
        self.q = self.gamma * prob.q.copy()
        self.A = prob.A.copy()
        self.l = prob.l.copy()
        self.u = prob.u.copy()

        self._equilibrate()
        self._build_rho()
        self._factorize()

        self.x = np.zeros(self.n)
        self.z = np.zeros(self.m)
        self.y = np.zeros(self.m)

    # -- setup internals ------------------------------------------------

    def _equilibrate(self):
        """Ruiz equilibration of the stacked [[P, A'], [A, 0]] matrix.

        Column norms are taken directly from P and A so the (n+m)^2 matrix
        is never formed.
        """
        n, m = self.n, self.m
        D = np.ones(n)
        E = np.ones(m)
        for _ in range(self.settings.scaling_iters):
            cp = np.max(np.abs(self.P), axis=0, initial=0.0) if n else np.zeros(0)
            ca = np.max(np.abs(self.A), axis=0, initial=0.0) if m else np.zeros(n)
            d = np.sqrt(np.maximum(np.maximum(cp, ca), 1e-12))
            e = (np.sqrt(np.maximum(np.max(np.abs(self.A), axis=1, initial=0.0), 1e-12))
                 if m else np.zeros(0))
            d = 1.0 / d
            e = 1.0 / e if m else e
            self.P *= d[:, None] * d[None, :]
            self.q *= d
            if m:
                self.A *= e[:, None] * d[None, :]
            D *= d
            E *= e
        self.D = D
        self.E = E
        self.l = np.where(np.isfinite(self.l), self.l * E, self.l)
        self.u = np.where(np.isfinite(self.u), self.u * E, self.u)

    def _build_rho(self):
        """Fixed per-row rho, classed by constraint type (never adapted
        inside a solve, which keeps iterates deterministic)."""
        s = self.settings
        rho = np.full(self.m, s.rho)
        if self.m:
            loose = ~np.isfinite(self.l) & ~np.isfinite(self.u)
            eq = np.isfinite(self.l) & np.isfinite(self.u) & (self.u - self.l < 1e-12)
            rho[loose] = s.rho_loose
            rho[eq] = s.rho * s.rho_eq_scale
        self.rho = rho

    def _factorize(self):
        M = self.P + self.settings.sigma * np.eye(self.n)
        if self.m:
            M = M + (self.A.T * self.rho) @ self.A
        self._chol = scipy.linalg.cho_factor(M, lower=True)

    # -- public API ------------------------------------------------------

    def update_vectors(self, q=None, l=None, u=None):
        """Refresh cost vector and/or bounds without refactorizing."""
        if q is not None:
            q = np.asarray(q, dtype=float).ravel()
            if q.shape != (self.n,):
                raise ValueError("q length mismatch")
            self._orig.q = q.copy()
            self.q = self.gamma * q * self.D
        if l is not None or u is not None:
            newl = self._orig.l if l is None else np.asarray(l, dtype=float).ravel()
            newu = self._orig.u if u is None else np.asarray(u, dtype=float).ravel()
            if newl.shape != (self.m,) or newu.shape != (self.m,):
                raise ValueError("bound length mismatch")
            if np.any(newl > newu):
                raise ValueError("l > u on some row")
            self._orig.l = newl.copy()
            self._orig.u = newu.copy()
            self.l = np.where(np.isfinite(newl), newl * self.E, newl)
            self.u = np.where(np.isfinite(newu), newu * self.E, newu)

    def problem(self) -> QpProblem:
        return self._orig

    def solve(self, warm_start=None) -> QpSolution:
        """Run the ADMM iteration, optionally warm-started from an unscaled
        (x, y) pair, until the unscaled residuals meet the tolerances."""
        s = self.settings
        n, m = self.n, self.m
        if warm_start is not None:
            x0, y0 = warm_start
            self.x = np.asarray(x0, dtype=float) / self.D
            self.y = np.asarray(y0, dtype=float) * self.gamma / self.E if m else np.zeros(0)
            self.z = self.A @ self.x if m else np.zeros(0)
        else:
            self.x = np.zeros(n)
            self.z = np.zeros(m)
            self.y = np.zeros(m)

        x, z, y = self.x, self.z, self.y
        rho = self.rho
        alpha = s.alpha
        status = SolveStatus.MAX_ITER
        iters = 0
        pres = dres = np.inf

        for it in range(1, s.max_iter + 1):
            rhs = s.sigma * x - self.q
            if m:
                rhs = rhs + self.A.T @ (rho * z - y)
            x_t = scipy.linalg.cho_solve(self._chol, rhs)
            if m:
                z_t = self.A @ x_t
            x_new = alpha * x_t + (1.0 - alpha) * x
            if m:
                z_relaxed = alpha * z_t + (1.0 - alpha) * z
                z_new = np.clip(z_relaxed + y / rho, self.l, self.u)
                y_new = y + rho * (z_relaxed - z_new)
            else:
                z_new = z
                y_new = y
            dx = x_new - x
            dy = y_new - y if m else np.zeros(0)
            x, z, y = x_new, z_new, y_new
            iters = it

            if it % s.check_interval == 0 or it == s.max_iter:
                pres, dres, pok, dok = self._residuals(x, z, y)
                if pok and dok:
                    status = SolveStatus.SOLVED
                    break
                if m and self._primal_infeasible(dy):
                    status = SolveStatus.PRIMAL_INFEASIBLE
                    break
                if self._dual_infeasible(dx):
                    status = SolveStatus.DUAL_INFEASIBLE
                    break

        self.x, self.z, self.y = x, z, y
        x_un = x * self.D
        y_un = (y * self.E / self.gamma) if m else np.zeros(0)
        return QpSolution(
            x=x_un, y=y_un, status=status, iterations=iters,
            primal_res=pres, dual_res=dres,
            objective=self._orig.objective(x_un),
        )

    # -- termination -----------------------------------------------------

    def _residuals(self, x, z, y):
        s = self.settings
        if self.m:
            ax = self.A @ x
            ax_un = ax / self.E
            z_un = z / self.E
            pres = float(np.max(np.abs(ax_un - z_un)))
            p_tol = s.eps_abs + s.eps_rel * max(
                np.max(np.abs(ax_un)), np.max(np.abs(z_un)), 1e-30)
        else:
            pres, p_tol = 0.0, 1.0
        px = self.P @ x
        aty = self.A.T @ y if self.m else np.zeros(self.n)
        dvec = (px + self.q + aty) / self.D / self.gamma
        dres = float(np.max(np.abs(dvec))) if self.n else 0.0
        d_tol = s.eps_abs + s.eps_rel * max(
            np.max(np.abs(px / self.D / self.gamma), initial=0.0),
            np.max(np.abs(aty / self.D / self.gamma), initial=0.0),
            np.max(np.abs(self.q / self.D / self.gamma), initial=0.0), 1e-30)
        return pres, dres, pres <= p_tol, dres <= d_tol

    def _primal_infeasible(self, dy):
        e = self.settings.eps_infeas
        nrm = np.max(np.abs(dy), initial=0.0)
        if nrm <= e:
            return False
        v = dy / nrm
        lhs = float(np.sum(np.where(v > 0, np.where(np.isfinite(self.u), self.u, np.inf) * v, 0.0))
                    + np.sum(np.where(v < 0, np.where(np.isfinite(self.l), self.l, -np.inf) * v, 0.0)))
        if not np.isfinite(lhs) or lhs >= -e:
            return False
        return np.max(np.abs(self.A.T @ v)) <= e

    def _dual_infeasible(self, dx):
        e = self.settings.eps_infeas
        nrm = np.max(np.abs(dx), initial=0.0)
        if nrm <= e:
            return False
        v = dx / nrm
        if self.q @ v >= -e:
            return False
        if np.max(np.abs(self.P @ v)) > e:
            return False
        if self.m:
            av = self.A @ v
            bad = ((np.isfinite(self.u) & (av > e)) | (np.isfinite(self.l) & (av < -e)))
            if np.any(bad):
                return False
        return True


def setup(prob: QpProblem, settings: SolverSettings | None = None) -> SolverHandle:
    """Validate, equilibrate and factorize; returns a reusable handle."""
    return SolverHandle(prob, settings or SolverSettings())


def solve(prob: QpProblem, settings: SolverSettings | None = None,
          warm_start=None) -> QpSolution:
    """One-shot convenience wrapper around setup + solve."""
    return setup(prob, settings).solve(warm_start=warm_start)


# -- plain-text dump/load for offline debugging --------------------------

def dump_problem(prob: QpProblem, path):
    """Write a problem in the documented text format: a dimensions header
    line ``n m`` followed by P, q, A, l, u in row-major order (one line per
    matrix row, 'inf'/'-inf' for unbounded rows)."""
    def line(vec):
        return " ".join(repr(float(v)) for v in vec)

    with open(path, "w") as f:
        f.write(f"{prob.n} {prob.m}\n")
        for row in prob.P:
            f.write(line(row) + "\n")
        f.write(line(prob.q) + "\n")
        for row in prob.A:
            f.write(line(row) + "\n")
        f.write(line(prob.l) + "\n")
        f.write(line(prob.u) + "\n")


def load_problem(path) -> QpProblem:
    with open(path) as f:
        lines = f.read().splitlines()
    n, m = (int(v) for v in lines[0].split())

    def vec(idx):
        return np.array([float(v) for v in lines[idx].split()])

    P = np.vstack([vec(1 + i) for i in range(n)]) if n else np.zeros((0, 0))
    q = vec(1 + n)
    A = (np.vstack([vec(2 + n + i) for i in range(m)]) if m
         else np.zeros((0, n)))
    l = vec(2 + n + m)
    u = vec(3 + n + m)
    return QpProblem(P=P, q=q, A=A, l=l, u=u)
