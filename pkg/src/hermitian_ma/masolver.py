"""Dirichlet problems (omega + dd^c u)^n = F(u, z) mu on grid domains.

Everything is driven by one colour-ordered nonlinear Gauss-Seidel engine.
At a node the matrix g + H(u) equals K - (u0/h^2) I, where K does not depend
on the centre value u0, so the determinant is a decreasing polynomial in
t = u0/h^2 on the cone side t <= lambda_min(K). Fixed right-hand sides are
solved in closed form; coupled ones by safeguarded Newton on the bracket.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (BracketError, ConfigurationError, IterationLimitError, MonotonicityError,
                     SubsolutionError, UniquenessError)
from .forms import (MeasureField, _hessian_real, center_free_matrix, default_tol_cone, is_omega_psh, ma_density,
                    node_eigenvalues, stencil_matrix)
from .geometry import GridDomain, HermitianMetricField, ma_constant
from .laplace import ball_cover as default_ball_cover
from .laplace import ball_mask, boundary_array, linear_solve, solve_laplace, solve_trace_equation


# --- tolerances -------------------------------------------------------------

@dataclass(frozen=True)
class Tolerances:
    tol_fix: float
    tol_cmp: float
    tol_ma: float
    tol_b: float
    tol_cone: float

    @classmethod
    def for_problem(cls, domain: GridDomain, phi_b: np.ndarray, density_sup: float = 0.0,
                    g=None, **overrides) -> "Tolerances":
        osc = float(np.ptp(phi_b)) if phi_b.size else 0.0
        scale = max(1.0, osc)
        tol_fix = 1e-6 * osc + 1e-10
        vals = dict(
            tol_fix=tol_fix,
            tol_cmp=max(10 * tol_fix, 5 * domain.h * scale),
            tol_ma=1e-4 * (density_sup + 1.0),
            tol_b=4 * domain.h * scale,
            tol_cone=default_tol_cone(g, domain),
        )
        vals.update({k: float(v) for k, v in overrides.items() if v is not None})
        return cls(**vals)


# --- right-hand sides -------------------------------------------------------

@dataclass(frozen=True)
class RhsFunction:
    """Bounded, nonnegative, non-decreasing F(t, node).

    ``constant``: F = value. ``exponential``: F = exp(lam t), bounded by
    exp(lam t_max) on the range of solutions. ``tabulated``: piecewise-linear
    in t on ``t_grid`` with values of shape (T,) or (size, T), constant
    beyond the ends.
    """

    kind: str = "constant"
    value: float = 1.0
    lam: float = 0.0
    t_grid: np.ndarray | None = field(default=None, repr=False)
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "tabulated"):
            raise ConfigurationError(f"unknown rhs kind {self.kind!r}")
        if self.kind == "constant" and self.value < 0:
            raise ConfigurationError("constant rhs must be nonnegative")
        if self.kind == "tabulated":
            tg = np.asarray(self.t_grid, dtype=float)
            tb = np.asarray(self.table, dtype=float)
            if tg.ndim != 1 or tg.size < 2 or np.any(np.diff(tg) <= 0):
                raise ConfigurationError("t_grid must be strictly increasing")
            if tb.shape[-1] != tg.size:
                raise ConfigurationError("table must match t_grid along its last axis")
            if np.any(tb < 0) or np.any(np.diff(tb, axis=-1) < 0):
                raise ConfigurationError("tabulated rhs must be nonnegative and non-decreasing in t")

    @classmethod
    def constant(cls, value: float = 1.0) -> "RhsFunction":
        return cls("constant", value=float(value))

    @classmethod
    def exponential(cls, lam: float) -> "RhsFunction":
        if lam < 0:
            raise ConfigurationError("exponential rate must be nonnegative")
        return cls("exponential", lam=float(lam))

    @classmethod
    def tabulated(cls, t_grid, table) -> "RhsFunction":
        return cls("tabulated", t_grid=np.asarray(t_grid, float), table=np.asarray(table, float))

    def _rows(self, nodes):
        tb = np.asarray(self.table, dtype=float)
        return tb if tb.ndim == 1 else tb[nodes]

    def evaluate(self, t, nodes=None) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.value)
        if self.kind == "exponential":
            return np.exp(self.lam * t)
        tg = np.asarray(self.t_grid, dtype=float)
        rows = self._rows(nodes)
        if rows.ndim == 1:
            return np.interp(t, tg, rows)
        j = np.clip(np.searchsorted(tg, t) - 1, 0, tg.size - 2)
        w = np.clip((t - tg[j]) / (tg[j + 1] - tg[j]), 0.0, 1.0)
        r = np.arange(t.size)
        return (1 - w) * rows[r, j] + w * rows[r, j + 1]

    def derivative(self, t, nodes=None) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros(t.shape)
        if self.kind == "exponential":
            return self.lam * np.exp(self.lam * t)
        tg = np.asarray(self.t_grid, dtype=float)
        j = np.clip(np.searchsorted(tg, t) - 1, 0, tg.size - 2)
        inside = (t >= tg[0]) & (t <= tg[-1])
        rows = self._rows(nodes)
        if rows.ndim == 1:
            slope = (rows[j + 1] - rows[j]) / (tg[j + 1] - tg[j])
        else:
            r = np.arange(t.size)
            slope = (rows[r, j + 1] - rows[r, j]) / (tg[j + 1] - tg[j])
        return np.where(inside, slope, 0.0)

    def bound(self, t_max: float) -> float:
        """M_F: sup of F over t <= t_max."""
        if self.kind == "constant":
            return self.value
        if self.kind == "exponential":
            return float(np.exp(self.lam * t_max))
        return float(np.max(self.table))

    def is_zero(self) -> bool:
        return (self.kind == "constant" and self.value == 0.0) or \
            (self.kind == "tabulated" and not np.any(np.asarray(self.table)))

    def validate(self, domain: GridDomain, t_range=(-10.0, 10.0), pairs: int = 100, seed: int = 0) -> None:
        """Sample t-pairs at interior and boundary nodes; raise on a negative or decreasing value."""
        rng = np.random.default_rng(seed)
        for nodes in (domain.interior, domain.boundary):
            if nodes.size == 0:
                continue
            pick = nodes[rng.integers(0, nodes.size, pairs)]
            a, b = np.sort(rng.uniform(*t_range, size=(2, pairs)), axis=0)
            fa, fb = self.evaluate(a, pick), self.evaluate(b, pick)
            if np.any(fa < 0) or np.any(fb < fa - 1e-12 * (1 + np.abs(fa))):
                raise ConfigurationError("rhs is not nonnegative and non-decreasing in t")


# --- problems and reports ---------------------------------------------------

@dataclass
class SolveReport:
    iterations: int
    update: float
    residual_mass: float
    residual_sup: float
    sandwich_violations: int = 0
    converged: bool = True
    notes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"iterations": self.iterations, "update": self.update, "residual_mass": self.residual_mass,
                "residual_sup": self.residual_sup, "sandwich_violations": self.sandwich_violations,
                "converged": self.converged}


@dataclass
class DirichletProblem:
    domain: GridDomain
    g: HermitianMetricField
    mu: MeasureField
    F: RhsFunction
    phi: np.ndarray
    subsolution: np.ndarray | None = None
    tolerances: Tolerances | None = None

    def __post_init__(self):
        self.phi = boundary_array(self.phi, self.domain)
        if self.phi.shape != (self.domain.boundary.size,) or not np.all(np.isfinite(self.phi)):
            raise ConfigurationError("boundary data must be finite at every boundary node")
        if self.tolerances is None:
            self.tolerances = Tolerances.for_problem(self.domain, self.phi, self.density_sup(), self.g)
        if self.subsolution is not None:
            ok, report = check_subsolution(self.subsolution, self)
            if not ok:
                raise SubsolutionError("supplied subsolution fails the subsolution test", report=report)

    def density_sup(self) -> float:
        t_max = self.upper_bound()
        return self.F.bound(t_max) * float(np.max(self.mu.effective_density(), initial=0.0))

    def upper_bound(self) -> float:
        """sup of the phi-trace solution of the trace equation, dominating every solution."""
        if not hasattr(self, "_u0"):
            self._u0 = solve_trace_equation(self.g, self.domain, self.phi)
        return float(np.nanmax(self._u0[self.domain.active]))

    @property
    def trace_solution(self) -> np.ndarray:
        self.upper_bound()
        return self._u0

    def is_homogeneous(self) -> bool:
        return self.F.is_zero() or not np.any(self.mu.effective_density())


# --- per-node solves --------------------------------------------------------

def _closed_form(l1, l2, c, n):
    """Largest t <= l1 with prod(lambda_i - t) = c (c >= 0)."""
    if n == 1:
        return l1 - c
    d = np.maximum(l2 - l1, 0.0)
    den = d + np.sqrt(d * d + 4.0 * c)
    s = np.divide(2.0 * c, den, out=np.zeros_like(c), where=den > 0)
    return l1 - s


def _detpoly(l1, l2, t, n):
    if n == 1:
        return l1 - t, -np.ones_like(t)
    a, b = l1 - t, l2 - t
    return a * b, -(a + b)


def node_root_bisection(l1, l2, c, n, iters: int = 200):
    """Bisection for prod(lambda_i - t) = c on t <= l1; cross-check of the closed form."""
    hi = np.array(l1, dtype=float)
    lo = hi - (np.sqrt(c) + c + 1.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val, _ = _detpoly(l1, l2, mid, n)
        big = val > c
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
    return 0.5 * (lo + hi)


def _coupled_root(l1, l2, n, mass, F: RhsFunction, nodes, h2, m_f, t_start, tol_rel=1e-14, iters=100):
    """Root of const*prod(lambda_i - t) = F(h^2 t) mass on t <= l1 (safeguarded Newton)."""
    const = ma_constant(n)
    hi = l1.copy()
    lo = _closed_form(l1, l2, m_f * mass / const, n)
    lo = np.minimum(lo, hi)

    def resid(t):
        D, dD = _detpoly(l1, l2, t, n)
        f = const * D - F.evaluate(h2 * t, nodes) * mass
        fp = const * dD - h2 * F.derivative(h2 * t, nodes) * mass
        return f, fp

    f_lo, _ = resid(lo)
    f_hi, _ = resid(hi)
    scale = 1.0 + np.abs(F.evaluate(h2 * hi, nodes) * mass)
    if np.any(f_lo < -1e-9 * scale) or np.any(f_hi > 1e-9 * scale):
        raise BracketError("per-node bracket does not enclose a root; the rhs bound or cone condition fails")
    t = np.clip(t_start, lo, hi)
    for _ in range(iters):
        f, fp = resid(t)
        lo = np.where(f >= 0, t, lo)
        hi = np.where(f <= 0, t, hi)
        step_ok = fp < 0
        tn = t - f / np.where(step_ok, fp, -1.0)
        bad = ~step_ok | ~(tn >= lo) | ~(tn <= hi)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        done = np.max(np.abs(tn - t) / (1.0 + np.abs(t)), initial=0.0) <= tol_rel
        t = tn
        if done:
            break
    return t


# --- Gauss-Seidel engine ----------------------------------------------------

@dataclass
class _Target:
    """Right-hand side of one solve: fixed density or F(u) times a mass density."""
    density: np.ndarray | None = None
    F: RhsFunction | None = None
    mass: np.ndarray | None = None
    m_f: float = 0.0


def _node_values(u, G, domain, idx, target: _Target):
    K = center_free_matrix(u, G, domain, idx)
    l1, l2 = node_eigenvalues(K)
    n, h2 = domain.n, domain.h**2
    if target.F is None:
        c = np.zeros(idx.size) if target.density is None else target.density[idx] / ma_constant(n)
        return h2 * _closed_form(l1, l2, c, n)
    mass = target.mass[idx]
    t = _coupled_root(l1, l2, n, mass, target.F, idx, h2, target.m_f, u[idx] / h2)
    return h2 * t


def _gauss_seidel(u, G, domain, target: _Target, tol: float, max_sweeps: int, nodes_mask=None,
                  direction: int = 0, tol_dir: float = np.inf, label: str = "solve"):
    """Colour sweeps until the sup update drops to ``tol``.

    ``direction`` = -1 (+1) asserts each sweep moves no node up (down) by more
    than ``tol_dir``.
    """
    colours = domain.colors
    if nodes_mask is not None:
        colours = [c[nodes_mask[c]] for c in colours]
    colours = [c for c in colours if c.size]
    delta = np.inf
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        worst_wrong = 0.0
        for idx in colours:
            new = _node_values(u, G, domain, idx, target)
            diff = new - u[idx]
            delta = max(delta, float(np.max(np.abs(diff))))
            if direction:
                worst_wrong = max(worst_wrong, float(np.max(direction * -diff)))
            u[idx] = new
        if worst_wrong > tol_dir:
            raise MonotonicityError(f"{label}: sweep {sweep} moved a node the wrong way by {worst_wrong:.3e}",
                                    violation=worst_wrong)
        if delta <= tol:
            return sweep, delta
    raise IterationLimitError(f"{label}: no convergence after {max_sweeps} sweeps (update {delta:.3e})",
                              residual=delta, iterations=max_sweeps)


def _node_matrices(u, G, domain, idx):
    M = G[idx] + _hessian_real(u, domain, idx)
    if domain.n == 1:
        return M, np.real(M[:, 0, 0]), np.ones_like(M)
    det = np.real(M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0])
    adj = np.empty_like(M)
    adj[:, 0, 0], adj[:, 1, 1] = M[:, 1, 1], M[:, 0, 0]
    adj[:, 0, 1], adj[:, 1, 0] = -M[:, 0, 1], -M[:, 1, 0]
    return M, det, adj


def _newton_residual(u, G, domain, idx, target: _Target):
    M, det, adj = _node_matrices(u, G, domain, idx)
    const = ma_constant(domain.n)
    if target.F is None:
        rhs = np.zeros(idx.size) if target.density is None else target.density[idx]
        drhs = np.zeros(idx.size)
    else:
        rhs = target.F.evaluate(u[idx], idx) * target.mass[idx]
        drhs = target.F.derivative(u[idx], idx) * target.mass[idx]
    lam = np.min(np.linalg.eigvalsh(M), axis=1)
    return const * det - rhs, drhs, adj, lam


def _newton_accelerate(u, G, domain, target: _Target, nodes_mask=None, tol: float = 1e-10, max_iter: int = 40):
    """Damped Newton on const det(g + H(u)) = rhs(u) over the selected interior nodes.

    Only used for strictly positive right-hand sides; the linearisation is
    u -> const tr(adj(g + H) H(u)) - rhs'(u). Steps are halved until the
    residual decreases, and once every node is in the cone it must stay there. Returns the number of
    accepted steps; u is left untouched if none is accepted.
    """
    I = domain.interior
    sel = np.ones(I.size, dtype=bool) if nodes_mask is None else nodes_mask[I]
    idx = I[sel]
    if idx.size == 0:
        return 0
    const = ma_constant(domain.n)
    r, drhs, adj, lam = _newton_residual(u, G, domain, idx, target)
    in_cone = bool(np.all(lam > 0))
    norm = float(np.max(np.abs(r)))
    W = np.zeros((domain.size, domain.n, domain.n), dtype=complex)
    steps = 0
    for _ in range(max_iter):
        W[idx] = adj
        A, _ = stencil_matrix(domain, W)
        J = (const * A[sel][:, sel] - sp.diags(drhs)).tocsr()
        try:
            delta = linear_solve(J, -r, domain.dim)
        except (IterationLimitError, RuntimeError):
            break
        if not np.all(np.isfinite(delta)):
            break
        base = u[idx].copy()
        alpha, accepted = 1.0, False
        while alpha > 1e-4:
            u[idx] = base + alpha * delta
            r2, d2, adj2, lam2 = _newton_residual(u, G, domain, idx, target)
            n2 = float(np.max(np.abs(r2)))
            if n2 < norm and (np.all(lam2 > 0) or not in_cone):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            u[idx] = base
            break
        steps += 1
        r, drhs, adj, norm = r2, d2, adj2, n2
        in_cone = bool(np.all(lam2 > 0))
        if alpha * float(np.max(np.abs(delta))) <= tol:
            break
    return steps


def _positive_target(target: _Target, domain, nodes_mask=None) -> bool:
    I = domain.interior if nodes_mask is None else domain.interior[nodes_mask[domain.interior]]
    if target.F is None:
        return target.density is not None and bool(np.all(target.density[I] > 0))
    return bool(np.all(target.mass[I] > 0))


def _poisson_start(u, g, domain, target: _Target):
    """Delta_g v = n (rhs / (const det g))^(1/n) - n with the trace of u.

    By AM-GM on g^{-1}(g + H) the determinant of the result sits near the
    target, which puts Newton in its basin for smooth data.
    """
    I = domain.interior
    rhs_node = target.density[I] if target.F is None else target.F.evaluate(u[I], I) * target.mass[I]
    detg = np.real(np.linalg.det(g.g[I]))
    rhs = np.zeros(domain.size)
    rhs[I] = domain.n * (rhs_node / (ma_constant(domain.n) * detg)) ** (1.0 / domain.n) - domain.n
    return solve_laplace(g, domain, u[domain.boundary], rhs=rhs)


def _solve_nodes(u, g, domain, target, tol, max_sweeps, nodes_mask=None, accelerate=True, label="solve",
                 direction=0, tol_dir=np.inf, cone_sweeps: int = 40):
    """Gauss-Seidel to the discrete fixed point, optionally after Newton steps.

    Acceleration on the whole domain restarts from the Poisson start and
    sweeps until every node is in the cone before Newton; the final sweeps
    certify the fixed point either way.
    """
    G = g.g
    newton = 0
    pre = 0
    if accelerate and _positive_target(target, domain, nodes_mask):
        work = u.copy()
        if nodes_mask is None:
            work[:] = _poisson_start(u, g, domain, target)
        I = domain.interior if nodes_mask is None else domain.interior[nodes_mask[domain.interior]]
        while pre < cone_sweeps and np.min(_newton_residual(work, G, domain, I, target)[3]) <= 0:
            _one_sweep(work, G, domain, target, nodes_mask)
            pre += 1
        newton = _newton_accelerate(work, G, domain, target, nodes_mask, tol)
        if newton:
            u[:] = work
            direction = 0
        else:
            pre = 0
    iters, delta = _gauss_seidel(u, G, domain, target, tol, max_sweeps, nodes_mask, direction, tol_dir, label)
    return iters + pre, delta, newton


def _one_sweep(u, G, domain, target, nodes_mask=None):
    for idx in domain.colors:
        if nodes_mask is not None:
            idx = idx[nodes_mask[idx]]
        if idx.size:
            u[idx] = _node_values(u, G, domain, idx, target)


def _default_sweeps(domain: GridDomain) -> int:
    return int(200 + 40 * (2.0 / domain.h) ** 2)


def _report(u, g, domain, target_density, iterations, delta, atoms=(), lower=None, upper=None, tol=0.0,
            tol_cone=None):
    """Residuals recomputed from ``u``; atom nodes only enter the mass residual."""
    dens = ma_density(u, g, domain, tol_cone).density
    I = domain.interior
    diff = dens[I] - target_density[I]
    free = np.ones(I.size, dtype=bool)
    atom_nodes = {int(a) for a, _ in atoms}
    if atom_nodes:
        free = ~np.isin(I, list(atom_nodes))
    vol = domain.h**domain.dim
    res_mass = abs(float(np.sum(diff)) * vol)
    res_sup = float(np.max(np.abs(diff[free]), initial=0.0))
    bad = 0
    if lower is not None:
        bad += int(np.sum(u[I] < lower[I] - tol))
    if upper is not None:
        bad += int(np.sum(u[I] > upper[I] + tol))
    return SolveReport(iterations, float(delta), res_mass, res_sup, bad)


def _tols(domain, phi_b, density_sup, g, tolerances):
    return tolerances if tolerances is not None else Tolerances.for_problem(domain, phi_b, density_sup, g)


# --- solvers ----------------------------------------------------------------

def solve_maximal(g: HermitianMetricField, domain: GridDomain, phi, tolerances: Tolerances | None = None,
                  max_sweeps: int | None = None, start: np.ndarray | None = None,
                  return_report: bool = False):
    """Maximal omega-psh h with (omega + dd^c h)^n = 0 and h = phi on the boundary.

    Starts from the trace-equation solution, which dominates h.
    """
    phi_b = boundary_array(phi, domain)
    if not np.all(np.isfinite(phi_b)):
        raise ConfigurationError("boundary data must be finite")
    tol = _tols(domain, phi_b, 0.0, g, tolerances)
    u = solve_trace_equation(g, domain, phi_b) if start is None else domain.with_trace(start, phi_b)
    iters, delta = _gauss_seidel(u, g.g, domain, _Target(), tol.tol_fix, max_sweeps or _default_sweeps(domain),
                                 label="solve_maximal")
    if return_report:
        return u, _report(u, g, domain, np.zeros(domain.size), iters, delta, tol_cone=tol.tol_cone)
    return u


def solve_fixed_rhs(g: HermitianMetricField, domain: GridDomain, nu: MeasureField, phi,
                    tolerances: Tolerances | None = None, max_sweeps: int | None = None,
                    start: np.ndarray | None = None, accelerate: bool = True) -> tuple:
    """(omega + dd^c w)^n = nu with w = phi; atoms are spread over their node cells.

    With ``accelerate`` and a strictly positive density, damped Newton steps
    precede the Gauss-Seidel sweeps, which still certify the fixed point.
    """
    phi_b = boundary_array(phi, domain)
    dens = nu.effective_density()
    tol = _tols(domain, phi_b, float(np.max(dens, initial=0.0)), g, tolerances)
    u = solve_trace_equation(g, domain, phi_b) if start is None else domain.with_trace(start, phi_b)
    iters, delta, newton = _solve_nodes(u, g, domain, _Target(density=dens), tol.tol_fix,
                                        max_sweeps or _default_sweeps(domain), accelerate=accelerate,
                                        label="solve_fixed_rhs")
    rep = _report(u, g, domain, dens, iters, delta, nu.atoms, tol_cone=tol.tol_cone)
    rep.notes["newton_steps"] = newton
    return u, rep


def fixed_rhs_map(problem: DirichletProblem, u: np.ndarray, **kw) -> np.ndarray:
    """The map T: w solves (omega + dd^c w)^n = F(u, z) mu with trace phi."""
    nu = _frozen_measure(problem, u)
    w, _ = solve_fixed_rhs(problem.g, problem.domain, nu, problem.phi, problem.tolerances, **kw)
    return w


def _frozen_measure(problem, u):
    dens = problem.mu.effective_density()
    I = problem.domain.interior
    out = np.zeros(problem.domain.size)
    out[I] = problem.F.evaluate(u[I], I) * dens[I]
    return MeasureField(out, (), problem.domain.h, problem.domain.dim)


def _coupled_target(problem: DirichletProblem) -> _Target:
    return _Target(F=problem.F, mass=problem.mu.effective_density(), m_f=problem.F.bound(problem.upper_bound()))


def _coupled_density(problem, u):
    dens = problem.mu.effective_density()
    out = np.zeros(problem.domain.size)
    I = problem.domain.interior
    out[I] = problem.F.evaluate(u[I], I) * dens[I]
    return out


def picard_solve(problem: DirichletProblem, witness: np.ndarray | None = None,
                 max_sweeps: int | None = None, accelerate: bool = False) -> tuple:
    """Monotone iteration from the maximal function h.

    Each sweep solves every node against F evaluated at its own new value,
    so from h the iterates are non-increasing (asserted within tol_cmp).
    ``accelerate`` inserts Newton steps first and drops that assertion.
    With a witness v the sandwich v + h <= u <= h is counted in the report.
    """
    d, g, tol = problem.domain, problem.g, problem.tolerances
    h_max = solve_maximal(g, d, problem.phi, tol, max_sweeps)
    if problem.is_homogeneous():
        rep = _report(h_max, g, d, np.zeros(d.size), 1, 0.0, tol_cone=tol.tol_cone)
        return h_max, rep
    u = h_max.copy()
    iters, delta, newton = _solve_nodes(u, g, d, _coupled_target(problem), tol.tol_fix,
                                        max_sweeps or _default_sweeps(d), accelerate=accelerate,
                                        direction=-1, tol_dir=tol.tol_cmp, label="picard_solve")
    lower = None if witness is None else witness + h_max
    rep = _report(u, g, d, _coupled_density(problem, u), iters + 1, delta, problem.mu.atoms,
                  lower=lower, upper=h_max, tol=tol.tol_cmp, tol_cone=tol.tol_cone)
    rep.notes["newton_steps"] = newton
    return u, rep


def check_subsolution(ubar: np.ndarray, problem: DirichletProblem, tolerances: Tolerances | None = None) -> tuple:
    """omega-psh, trace within tol_b of phi, and MA(ubar) >= F(ubar) mu - tol_ma node-wise."""
    d, g = problem.domain, problem.g
    tol = tolerances or problem.tolerances or Tolerances.for_problem(d, problem.phi, 0.0, g)
    report = {}
    try:
        psh, cone = is_omega_psh(ubar, g, d, tol.tol_cone)
    except Exception as exc:  # undefined values
        return False, {"error": str(exc)}
    report["omega_psh"] = bool(psh)
    report["least_eigenvalue"] = cone["least_eigenvalue"]
    trace_err = float(np.max(np.abs(ubar[d.boundary] - problem.phi), initial=0.0))
    report["trace_error"] = trace_err
    dens = ma_density(ubar, g, d, tol.tol_cone).density
    need = _coupled_density(problem, ubar)
    I = d.interior
    defect = need[I] - dens[I]
    report["ma_defect"] = float(np.max(defect, initial=0.0))
    report["defect_nodes"] = int(np.sum(defect > tol.tol_ma))
    ok = psh and trace_err <= tol.tol_b and report["defect_nodes"] == 0
    report["ok"] = bool(ok)
    return bool(ok), report


def perron_solve(problem: DirichletProblem, balls: Sequence | None = None, ball_radius: float | None = None,
                 max_rounds: int = 500, max_sweeps: int | None = None, accelerate: bool = True) -> tuple:
    """Envelope of subsolutions by lifts over a deterministic ball cover.

    Starts at the subsolution; each lift solves the coupled equation on one
    ball with the current values outside and must not lower u beyond tol_cmp.
    """
    d, g, tol = problem.domain, problem.g, problem.tolerances
    if problem.subsolution is None:
        raise SubsolutionError("perron_solve needs a subsolution", report={"ok": False, "missing": True})
    ok, rep = check_subsolution(problem.subsolution, problem)
    if not ok:
        raise SubsolutionError("subsolution test failed", report=rep)
    if balls is None:
        radius = ball_radius or max(4 * d.h, 0.5 * min(d.radii) if d.kind == "ball" else
                                    0.5 * (d.radii[1] - d.radii[0]) + 2 * d.h)
        balls = default_ball_cover(d, radius)
    masks = [ball_mask(d, c, r) for c, r in balls]
    covered = np.zeros(d.size, dtype=bool)
    for m in masks:
        covered |= m
    if not np.all(covered[d.interior]):
        raise ConfigurationError("ball cover misses interior nodes")
    target = _coupled_target(problem) if not problem.is_homogeneous() else _Target()
    u = d.with_trace(problem.subsolution, problem.phi)
    sweeps = max_sweeps or _default_sweeps(d)
    total = 0
    for rounds in range(1, max_rounds + 1):
        before = u.copy()
        for m in masks:
            prev = u[m].copy()
            n_it, _, _ = _solve_nodes(u, g, d, target, tol.tol_fix, sweeps, nodes_mask=m,
                                      accelerate=accelerate, direction=+1, tol_dir=tol.tol_cmp,
                                      label="perron lift")
            total += n_it
            drop = float(np.max(prev - u[m], initial=0.0))
            if drop > tol.tol_cmp:
                raise MonotonicityError(f"lift lowered u by {drop:.3e}", violation=drop)
        change = float(np.max(np.abs(u - before)[d.interior]))
        if change <= tol.tol_fix:
            dens = _coupled_density(problem, u) if target.F is not None else np.zeros(d.size)
            rep = _report(u, g, d, dens, total, change, problem.mu.atoms, tol_cone=tol.tol_cone)
            rep.notes["rounds"] = rounds
            return u, rep
    raise IterationLimitError("Perron lifts did not converge", residual=change, iterations=max_rounds)


def bounded_rhs_subsolution(problem: DirichletProblem, accelerate: bool = True) -> np.ndarray:
    """Solution of (omega + dd^c v)^n = M_F mu with trace phi, M_F = sup F on the
    solution range; since F <= M_F it is a subsolution of the problem."""
    m_f = problem.F.bound(problem.upper_bound())
    nu = problem.mu.scaled(m_f)
    v, _ = solve_fixed_rhs(problem.g, problem.domain, nu, problem.phi, problem.tolerances, accelerate=accelerate)
    return v


def solve_exponential(lam: float, mu: MeasureField, phi, g: HermitianMetricField, domain: GridDomain,
                      subsolution: np.ndarray | None = None, check_uniqueness: bool = True,
                      tolerances: Tolerances | None = None, accelerate: bool = True) -> tuple:
    """(omega + dd^c u)^n = exp(lam u) mu.

    Solves from above (maximal start) and, when asked, from below (Perron
    lifts from a subsolution); the two must agree within tol_cmp.
    """
    if lam <= 0:
        raise ConfigurationError("lambda must be positive")
    prob = DirichletProblem(domain, g, mu, RhsFunction.exponential(lam), phi, tolerances=tolerances)
    u, rep = picard_solve(prob, accelerate=accelerate)
    if check_uniqueness and not prob.is_homogeneous():
        sub = subsolution if subsolution is not None else bounded_rhs_subsolution(prob)
        prob.subsolution = sub
        v, _ = perron_solve(prob)
        gap = float(np.max(np.abs(u - v)[domain.interior]))
        rep.notes["uniqueness_gap"] = gap
        if gap > prob.tolerances.tol_cmp:
            raise UniquenessError(f"solutions from above and below differ by {gap:.3e}", gap=gap)
    return u, rep


@dataclass
class LambdaStudy:
    lambdas: list
    solutions: list
    limit: np.ndarray
    reference: np.ndarray
    shift: float
    monotone_violation: float
    limit_gap: float
    limit_residual: float


def lambda_limit_study(mu: MeasureField, phi, g: HermitianMetricField, domain: GridDomain,
                       lambdas: Sequence[float], subsolution: np.ndarray,
                       tolerances: Tolerances | None = None) -> LambdaStudy:
    """Solutions of (omega + dd^c u)^n = exp(lam u) mu with data phi - b, b = sup subsolution.

    The family is checked to be non-decreasing in lam; the limit lam -> 0 is a
    linear extrapolation from the two smallest lam and is compared with the
    solution of (omega + dd^c u)^n = mu.
    """
    lambdas = [float(x) for x in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])) or min(lambdas) <= 0:
        raise ConfigurationError("lambda sequence must be decreasing and positive")
    b = float(np.nanmax(subsolution[domain.active]))
    phi_b = boundary_array(phi, domain) - b
    tol = _tols(domain, phi_b, float(np.max(mu.effective_density(), initial=0.0)), g, tolerances)
    sols = [solve_exponential(lam, mu, phi_b, g, domain, check_uniqueness=False, tolerances=tol)[0]
            for lam in lambdas]
    I = domain.interior
    viol = 0.0
    for big, small in zip(sols, sols[1:]):
        viol = max(viol, float(np.max(small[I] - big[I], initial=0.0)))
    if viol > tol.tol_cmp:
        raise MonotonicityError(f"lambda family not monotone (violation {viol:.3e})", violation=viol)
    l1, l2 = lambdas[-2], lambdas[-1]
    limit = (l1 * sols[-1] - l2 * sols[-2]) / (l1 - l2)
    ref, _ = solve_fixed_rhs(g, domain, mu, phi_b, tol)
    gap = float(np.max(np.abs(limit - ref)[I]))
    lim_res = float(np.max(np.abs(ma_density(ref, g, domain).density[I] - mu.effective_density()[I])))
    return LambdaStudy(lambdas, sols, limit, ref, b, viol, gap, lim_res)
