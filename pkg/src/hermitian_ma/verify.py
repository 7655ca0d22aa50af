"""Executable checks: local comparison certificate, global comparison,
stability under weak convergence, the n = 2 energy inequality and
manufactured problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .capacity import capacity_convergence, hessian_energy
from .errors import ConfigurationError, GenerationError
from .forms import MeasureField, ddc_hessian, is_omega_psh, ma_density, mixed_density
from .geometry import GridDomain, HermitianMetricField, metric_bound_B, stencil_steps
from .laplace import ball_cover, ball_mask
from .masolver import (DirichletProblem, RhsFunction, Tolerances, bounded_rhs_subsolution, perron_solve,
                       picard_solve, solve_fixed_rhs)

ALARM_C = 1e6


# --- local comparison certificate -------------------------------------------

@dataclass
class ComparisonCertificate:
    theta: float
    s0: float
    B: float
    levels: np.ndarray
    mass_v: np.ndarray
    mass_u: np.ndarray
    C: float
    n: int = 1
    alarm: bool = False
    empty: bool = False
    preconditions: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.empty:
            return True
        if not self.preconditions.get("ok", True) or self.alarm:
            return False
        return bool(np.all(self.mass_v <= self.bound(self.C) * (1 + 1e-9) + 1e-12))

    def bound(self, C: float) -> np.ndarray:
        factor = 1.0 + self.levels * self.B * C / self.theta ** self.n
        return factor * self.mass_u


def _theta_margin(v, g, domain):
    """Largest theta with omega + dd^c v >= theta omega at every interior node."""
    I = domain.interior
    A = g.g[I] + ddc_hessian(v, domain)
    L = np.linalg.cholesky(g.g[I])
    Li = np.linalg.inv(L)
    S = Li @ A @ np.conj(np.swapaxes(Li, -1, -2))
    return float(np.min(np.linalg.eigvalsh(S)[:, 0]))


def local_cp_certificate(u: np.ndarray, v: np.ndarray, theta: float, g: HermitianMetricField,
                         domain: GridDomain, levels: int = 8, tol: float = 1e-9) -> ComparisonCertificate:
    """Masses of omega_v^n and omega_u^n on U(s) = {u < v + s0 + s} at probe levels.

    s0 = -sup(v - u); levels are spread over (0, theta0) with
    theta0 = min(theta^n / (16 B), |s0|). C is the least constant with
    mass_v <= (1 + s B C / theta^n) mass_u at every level; for B = 0 the
    inequality is the factor-one comparison.
    """
    n = domain.n
    I = domain.interior
    B = metric_bound_B(g, domain)
    pre = {"boundary_order": bool(np.all(u[domain.boundary] >= v[domain.boundary] - tol)),
           "theta_margin": _theta_margin(v, g, domain)}
    pre["cone"] = pre["theta_margin"] >= theta - tol
    gap = float(np.max(v[I] - u[I]))
    pre["ok"] = bool(pre["boundary_order"] and pre["cone"])
    if gap <= 0:
        return ComparisonCertificate(theta, -gap, B, np.zeros(0), np.zeros(0), np.zeros(0), 0.0, n, empty=True,
                                     preconditions=pre)
    s0 = -gap
    theta0 = abs(s0) if B == 0 else min(theta**n / (16 * B), abs(s0))
    s = theta0 * np.arange(1, levels + 1) / (levels + 1)
    dv = ma_density(v, g, domain).density
    du = ma_density(u, g, domain).density
    vol = domain.h ** domain.dim
    mv, mu = np.zeros(levels), np.zeros(levels)
    for i, si in enumerate(s):
        U = I[u[I] < v[I] + s0 + si]
        mv[i] = vol * np.sum(dv[U])
        mu[i] = vol * np.sum(du[U])
    alarm = False
    need = np.zeros(levels)
    over = mv > mu * (1 + 1e-9) + 1e-12
    if np.any(over):
        if B == 0 or np.any(mu[over] <= 0):
            alarm = True
        else:
            need[over] = (mv[over] / mu[over] - 1.0) * theta**n / (s[over] * B)
    C = float(np.max(need, initial=0.0))
    alarm = alarm or C > ALARM_C
    return ComparisonCertificate(theta, s0, B, s, mv, mu, C, n, alarm, preconditions=pre)


def fitted_constants_stable(c1: float, c2: float, rel: float = 0.5, floor: float = 1e-9) -> bool:
    """Two fitted constants agree within +-rel (both below ``floor`` counts as agreement)."""
    if max(c1, c2) <= floor:
        return True
    lo, hi = sorted((c1, c2))
    return lo >= (1 - rel) * hi


# --- global comparison ------------------------------------------------------

def _solve(problem: DirichletProblem, solver: str, accelerate: bool = True):
    if solver == "picard":
        return picard_solve(problem, accelerate=accelerate)[0]
    if solver == "perron":
        if problem.subsolution is None:
            problem.subsolution = bounded_rhs_subsolution(problem)
        return perron_solve(problem, accelerate=accelerate)[0]
    raise ConfigurationError(f"unknown solver {solver!r}")


def comparison_test(problem_mu: DirichletProblem, problem_nu: DirichletProblem, solver: str = "picard",
                    solver_nu: str | None = None, accelerate: bool = True) -> dict:
    """Solve both problems and check u_mu >= u_nu - tol_cmp at every node."""
    d = problem_mu.domain
    I = d.interior
    dm, dn = problem_mu.mu.effective_density(), problem_nu.mu.effective_density()
    if np.any(dm[I] > dn[I] * (1 + 1e-12) + 1e-12):
        raise ConfigurationError("comparison_test needs mu <= nu node-wise")
    if not np.allclose(problem_mu.phi, problem_nu.phi):
        raise ConfigurationError("both problems must share the boundary data")
    u = _solve(problem_mu, solver, accelerate)
    v = _solve(problem_nu, solver_nu or solver, accelerate)
    tol = max(problem_mu.tolerances.tol_cmp, problem_nu.tolerances.tol_cmp)
    diff = v[I] - u[I]
    violation = float(np.max(diff, initial=0.0))
    return {"passed": violation <= tol, "max_violation": violation, "violations": int(np.sum(diff > tol)),
            "min_gap": float(np.min(-diff)), "max_gap": float(np.max(-diff)), "tol_cmp": tol, "u": u, "v": v}


# --- stability --------------------------------------------------------------

def ball_averages(values: np.ndarray, domain: GridDomain, radius: float) -> np.ndarray:
    """Averages of a grid function over the interior parts of a fixed ball cover."""
    out = []
    for c, r in ball_cover(domain, radius):
        m = ball_mask(domain, c, r)
        out.append(float(np.mean(values[m])))
    return np.array(out)


def stability_test(f_seq: Sequence, f_limit, mu_base: MeasureField, phi, g: HermitianMetricField,
                   domain: GridDomain, eps: float | None = None, average_radius: float | None = None,
                   with_capacity: bool = False) -> dict:
    """Solve (omega + dd^c u_j)^n = f_j mu and the limit problem; record decay.

    Multipliers are callables of the real node coordinates or arrays over the
    grid, with values in [0, 1]. Weak convergence is measured by averages
    over balls of radius >= 4h (default: a quarter of the outer radius).
    """
    I = domain.interior
    if average_radius is None:
        average_radius = 0.25 * max(domain.radii)
    radius = max(4 * domain.h, average_radius)

    def as_array(f):
        arr = np.asarray(f(domain.points), dtype=float) if callable(f) else np.asarray(f, dtype=float)
        arr = np.broadcast_to(arr, (domain.size,)).copy()
        if np.any(arr[I] < -1e-12) or np.any(arr[I] > 1 + 1e-12):
            raise ConfigurationError("density multipliers must lie in [0, 1]")
        return arr

    base = mu_base.effective_density()
    f_lim = as_array(f_limit)
    target_lim = MeasureField.from_density(domain, f_lim * base)
    u_lim, _ = solve_fixed_rhs(g, domain, target_lim, phi)
    avg_lim = ball_averages(target_lim.density, domain, radius)
    sols, rows = [], []
    for f in f_seq:
        fj = as_array(f)
        nu = MeasureField.from_density(domain, fj * base)
        uj, _ = solve_fixed_rhs(g, domain, nu, phi)
        sols.append(uj)
        dens = ma_density(uj, g, domain).density
        rows.append({
            "weak_gap": float(np.max(np.abs(ball_averages(nu.density, domain, radius) - avg_lim))),
            "sup_distance": float(np.max(np.abs(uj[I] - u_lim[I]))),
            "density_gap": float(np.max(np.abs(ball_averages(dens, domain, radius) - avg_lim))),
            "energies": [hessian_energy(uj, u_lim, k, g, domain) for k in range(domain.n + 1)],
        })
    cauchy = [float(np.max(np.abs(a[I] - b[I]))) for a, b in zip(sols, sols[1:])]
    report = {"rows": rows, "cauchy": cauchy, "solutions": sols, "limit": u_lim}
    if with_capacity:
        eps = eps if eps is not None else 0.5 * max(r["sup_distance"] for r in rows)
        report["capacity"] = capacity_convergence(sols, u_lim, eps, domain)
        report["eps"] = eps
    return report


def decreasing(values: Sequence[float], slack: float = 0.0) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def decays(values: Sequence[float], slack: float = 0.0) -> bool:
    """Non-increasing from the peak on, ending below the first value (a coarse-j transient is allowed)."""
    values = list(values)
    if len(values) < 2:
        return True
    peak = int(np.argmax(values))
    return decreasing(values[peak:], slack) and values[-1] < values[0]


# --- energy inequality (n = 2) -----------------------------------------------

@dataclass
class EnergyTerms:
    lhs: float
    main: float
    quadratic: float
    cross: float

    def rhs(self, C: float) -> float:
        return self.main + C * (self.quadratic + self.cross)

    def needed_constant(self) -> float:
        extra = self.quadratic + self.cross
        if self.lhs <= self.main:
            return 0.0
        return np.inf if extra <= 0 else (self.lhs - self.main) / extra


def energy_terms(u: np.ndarray, v: np.ndarray, rho: np.ndarray, g: HermitianMetricField,
                 domain: GridDomain, collar: int = 2, tol: float = 1e-10) -> EnergyTerms:
    """The four integrals of the n = 2 energy inequality for w = v - u.

    lhs = int w^3 (dd^c rho)^2, main = 6 int w omega_u^2,
    quadratic = int w^2 omega^2, cross = (int w omega_u^omega)^(1/2) quadratic^(1/2).
    """
    if domain.n != 2:
        raise ConfigurationError("the energy inequality is stated for n = 2 only")
    I = domain.interior
    w = v - u
    if np.any(w[I] < -tol):
        raise ConfigurationError("energy inequality needs u <= v")
    near = _collar(domain, collar)
    if np.any(np.abs(w[near]) > tol):
        raise ConfigurationError(f"u and v must agree on the {collar}-node boundary collar")
    r = rho[domain.active]
    if np.any(r < -1 - tol) or np.any(r > tol):
        raise ConfigurationError("rho must satisfy -1 <= rho <= 0")
    if not is_omega_psh(rho, None, domain)[0]:
        raise ConfigurationError("rho must be psh")
    for name, f in (("u", u), ("v", v)):
        if not is_omega_psh(f, g, domain)[0]:
            raise ConfigurationError(f"{name} must be omega-psh")
    vol = domain.h ** domain.dim
    wI = np.maximum(w[I], 0.0)
    lhs = vol * np.sum(wI**3 * ma_density(rho, None, domain).density[I])
    main = 6 * vol * np.sum(wI * ma_density(u, g, domain).density[I])
    quad = vol * np.sum(wI**2 * mixed_density(u, 0, g, domain).density[I])
    mixed = vol * np.sum(wI * mixed_density(u, 1, g, domain).density[I])
    return EnergyTerms(float(lhs), float(main), float(quad), float(np.sqrt(mixed * quad)))


def _collar(domain: GridDomain, width: int) -> np.ndarray:
    """Boundary nodes plus interior nodes within ``width`` lattice steps of them."""
    mark = np.zeros(domain.size, dtype=bool)
    mark[domain.boundary] = True
    front = domain.boundary
    for _ in range(width):
        nxt = []
        for step in stencil_steps(domain.n):
            for sgn in (1, -1):
                nb = front + sgn * domain.offset(step)
                nb = nb[(nb >= 0) & (nb < domain.size)]
                nxt.append(nb[domain.interior_mask[nb] & ~mark[nb]])
        front = np.unique(np.concatenate(nxt)) if nxt else np.zeros(0, dtype=np.int64)
        mark[front] = True
    return np.flatnonzero(mark)


def calibrate_energy_constant(pairs, g, domain, safety: float = 2.0) -> float:
    """Freeze C as ``safety`` times the largest constant needed on a calibration family."""
    need = [energy_terms(u, v, rho, g, domain).needed_constant() for u, v, rho in pairs]
    worst = max(need, default=0.0)
    if not np.isfinite(worst):
        raise ConfigurationError("calibration family contains a pair no constant can satisfy")
    return float(safety * max(worst, 1e-3))


def energy_inequality_test(u, v, rho, g, domain, C: float) -> dict:
    t = energy_terms(u, v, rho, g, domain)
    rhs = t.rhs(C)
    return {"lhs": t.lhs, "rhs": rhs, "margin": rhs - t.lhs, "passed": bool(t.lhs < rhs or t.lhs == rhs == 0.0),
            "main": t.main, "quadratic": t.quadratic, "cross": t.cross, "C": C}


def bump(domain: GridDomain, center, radius: float, height: float = 1.0) -> np.ndarray:
    """Smooth bump height * (1 - |x - c|^2 / r^2)^4 with compact support."""
    x = domain.points
    q = np.clip(1 - np.sum((x - np.asarray(center)) ** 2, axis=1) / radius**2, 0.0, None)
    out = np.full(domain.size, np.nan)
    out[domain.active] = (height * q**4)[domain.active]
    return out


# --- manufactured problems --------------------------------------------------

def manufactured_problem(u_star, F: RhsFunction, g: HermitianMetricField, domain: GridDomain,
                         tol_F: float = 1e-12, tolerances: Tolerances | None = None) -> DirichletProblem:
    """Problem whose discrete solution is u_star up to the boundary treatment.

    ``u_star`` is a grid function (trace taken at boundary nodes) or a
    callable of z (trace taken at projected boundary points). The density is
    ma_density(u_star) / F(u_star) with 0/0 read as 0; u_star is the
    subsolution.
    """
    if callable(u_star):
        phi = domain.boundary_values(u_star)
        grid = domain.evaluate(u_star)
    else:
        grid = np.asarray(u_star, dtype=float)
        phi = grid[domain.boundary]
    I = domain.interior
    dens = ma_density(grid, g, domain).density
    Fv = F.evaluate(grid[I], I)
    bad = (Fv < tol_F) & (dens[I] > 0)
    if np.any(bad):
        raise GenerationError(f"rhs vanishes where the density is positive at {int(bad.sum())} nodes")
    mu = np.zeros(domain.size)
    ok = Fv >= tol_F
    mu[I[ok]] = dens[I[ok]] / Fv[ok]
    return DirichletProblem(domain, g, MeasureField.from_density(domain, mu), F, phi, subsolution=grid.copy(),
                            tolerances=tolerances)
