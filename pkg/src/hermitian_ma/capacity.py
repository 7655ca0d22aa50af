"""Bedford-Taylor capacity through relative extremal functions, Cegrell-class
checks, local domination certificates and Hessian energies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DominationError
from .forms import MeasureField, is_omega_psh, ma_density, mixed_density, psh_envelope
from .geometry import GridDomain, ma_constant


@dataclass
class CapacityEstimate:
    mask: np.ndarray
    value: float
    extremal: np.ndarray


def _node_set(E, domain: GridDomain) -> np.ndarray:
    """Boolean mask over the grid from a mask or an index array."""
    E = np.asarray(E)
    if E.dtype == bool and E.shape == (domain.size,):
        mask = E.copy()
    else:
        mask = np.zeros(domain.size, dtype=bool)
        mask[E.astype(np.int64)] = True
    if np.any(mask & ~domain.interior_mask):
        raise ConfigurationError("the set must consist of interior nodes")
    return mask


def relative_extremal(E, domain: GridDomain, tol_env: float = 1e-10, max_sweeps: int = 200_000) -> np.ndarray:
    """Largest psh v <= 0 with v <= -1 on E and v = 0 on the boundary (g = 0 cone)."""
    mask = _node_set(E, domain)
    if not mask.any():
        raise ConfigurationError("the set E is empty")
    psi = np.full(domain.size, np.nan)
    psi[domain.active] = 0.0
    psi[mask] = -1.0
    v = psh_envelope(psi, None, domain, tol_env=tol_env, max_sweeps=max_sweeps)
    return _clip_active(v, domain)


def _clip_active(v, domain):
    out = v.copy()
    a = domain.active
    out[a] = np.clip(out[a], -1.0, 0.0)
    return out


def bt_capacity(E, domain: GridDomain, **kw) -> CapacityEstimate:
    """Total Monge-Ampere mass of the relative extremal function of E."""
    mask = _node_set(E, domain)
    if not mask.any():
        return CapacityEstimate(mask, 0.0, _zero(domain))
    v = relative_extremal(mask, domain, **kw)
    mass = ma_density(v, None, domain, tol_cone=1e-9).total_mass
    return CapacityEstimate(mask, float(mass), v)


def _zero(domain):
    v = np.full(domain.size, np.nan)
    v[domain.active] = 0.0
    return v


def check_E0_membership(v: np.ndarray, domain: GridDomain, tol_b: float | None = None,
                        tol_cone: float = 1e-9) -> tuple:
    """psh (g = 0), v <= 0, |v| <= tol_b on the boundary; reports the total MA mass."""
    tol_b = 4 * domain.h if tol_b is None else tol_b
    psh, _ = is_omega_psh(v, None, domain, tol_cone)
    nonpos = bool(np.all(v[domain.active] <= tol_cone))
    defect = float(np.max(np.abs(v[domain.boundary]), initial=0.0))
    mass = ma_density(v, None, domain, tol_cone).total_mass
    ok = bool(psh and nonpos and defect <= tol_b)
    return ok, {"boundary_defect": defect, "total_mass": float(mass), "psh": bool(psh), "nonpositive": nonpos}


def check_local_domination(mu: MeasureField, domain: GridDomain, balls) -> tuple:
    """Certify mu|_B <= (dd^c v)^n with v = A(|z - c|^2 - r^2) on every ball.

    A = (sup_B density / 2^n n!)^(1/n), so v has constant density 2^n n! A^n
    and dominates the density node-wise. An atom of mass m in the ball is
    accepted iff m <= 2^n n! A^n h^2n times the number of cells in the ball.
    """
    c = ma_constant(domain.n)
    vol = domain.h ** domain.dim
    dens = np.nan_to_num(mu.density)
    witnesses = []
    for center, radius in balls:
        center = np.asarray(center, dtype=float)
        inside = domain.interior_mask & (np.linalg.norm(domain.points - center, axis=1) < radius)
        nodes = np.flatnonzero(inside)
        sup = float(np.max(dens[nodes], initial=0.0))
        A = (sup / c) ** (1.0 / domain.n)
        budget = c * A**domain.n * vol * nodes.size
        worst = max((m for i, m in mu.atoms if inside[i]), default=0.0)
        ok = worst <= budget
        if nodes.size and A > 0:
            v = np.full(domain.size, np.nan)
            v[domain.active] = A * (np.sum((domain.points[domain.active] - center) ** 2, axis=1) - radius**2)
            got = ma_density(v, None, domain).density[nodes]
            ok = ok and bool(np.all(got >= dens[nodes] - 1e-9 * (1 + sup)))
        witnesses.append({"center": tuple(center.tolist()), "radius": float(radius), "A": A,
                          "atom_budget": budget, "largest_atom": worst, "ok": bool(ok)})
    return all(w["ok"] for w in witnesses), witnesses


def require_local_domination(mu: MeasureField, domain: GridDomain, balls) -> list:
    ok, witnesses = check_local_domination(mu, domain, balls)
    if not ok:
        bad = next(w for w in witnesses if not w["ok"])
        raise DominationError(f"measure not dominated on ball at {bad['center']}", ball=bad)
    return witnesses


def hessian_energy(u: np.ndarray, v: np.ndarray, k: int, g, domain: GridDomain) -> float:
    """h^2n sum |u - v| times the density of omega_u^k ^ omega^(n-k)."""
    dens = mixed_density(u, k, g, domain).density
    I = domain.interior
    return float(domain.h**domain.dim * np.sum(np.abs(u[I] - v[I]) * dens[I]))


def capacity_convergence(u_seq, u: np.ndarray, eps: float, domain: GridDomain, guard: float = 1e-12,
                         **kw) -> list:
    """bt_capacity of {|u_j - u| > eps + guard} for each member of the sequence."""
    out = []
    I = domain.interior
    for uj in u_seq:
        mask = np.zeros(domain.size, dtype=bool)
        mask[I] = np.abs(uj[I] - u[I]) > eps + guard
        out.append(bt_capacity(mask, domain, **kw).value)
    return out
