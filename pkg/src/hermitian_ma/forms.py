"""Discrete (1,1)-form kernel: complex Hessians, Monge-Ampere densities,
omega-psh cone membership and envelopes.

Convention: dd^c = i d dbar, so (dd^c |z|^2)^n = 2^n n! dV and the density of
(omega + dd^c u)^n is ``2^n n! det(g + H(u))`` with H_jk = d^2u / dz_j dzbar_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, IterationLimitError
from .geometry import GridDomain, HermitianMetricField, ma_constant, stencil_steps


@dataclass
class MeasureField:
    """Positive measure: Lebesgue density on interior nodes plus node atoms."""

    density: np.ndarray
    atoms: tuple = ()
    h: float = 1.0
    dim: int = 2
    non_psh: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(self.density < 0):
            raise ValueError("measure density must be nonnegative")
        for _, m in self.atoms:
            if m < 0:
                raise ValueError("atom masses must be nonnegative")

    @property
    def total_mass(self) -> float:
        d = np.nan_to_num(self.density)
        return float(self.h**self.dim * np.sum(d) + sum(m for _, m in self.atoms))

    def effective_density(self) -> np.ndarray:
        """Density with each atom spread over its node's cell."""
        out = np.nan_to_num(self.density).copy()
        for node, m in self.atoms:
            out[node] += m / self.h**self.dim
        return out

    def scaled(self, factor) -> "MeasureField":
        atoms = tuple((i, m * float(np.asarray(factor)[i] if np.ndim(factor) else factor)) for i, m in self.atoms)
        return MeasureField(self.density * factor, atoms, self.h, self.dim)

    @classmethod
    def zero(cls, domain: GridDomain) -> "MeasureField":
        return cls(np.zeros(domain.size), (), domain.h, domain.dim)

    @classmethod
    def from_density(cls, domain: GridDomain, density, atoms=()) -> "MeasureField":
        full = np.broadcast_to(np.asarray(density, dtype=float), (domain.size,))
        d = np.zeros(domain.size)
        d[domain.interior] = full[domain.interior]
        return cls(d, tuple(atoms), domain.h, domain.dim)


def _hessian_real(u: np.ndarray, domain: GridDomain, idx: np.ndarray) -> np.ndarray:
    """Centred complex Hessian of a real field at nodes ``idx``, shape (m, n, n)."""
    n, h2 = domain.n, domain.h**2
    st = domain.strides
    u0 = u[idx]
    d2 = []
    for a in range(2 * n):
        d2.append(u[idx + st[a]] + u[idx - st[a]] - 2.0 * u0)
    H = np.zeros((idx.size, n, n), dtype=complex)
    for j in range(n):
        H[:, j, j] = (d2[2 * j] + d2[2 * j + 1]) / (4.0 * h2)

    def mixed(a, b):
        sa, sb = st[a], st[b]
        return (u[idx + sa + sb] - u[idx + sa - sb] - u[idx - sa + sb] + u[idx - sa - sb]) / (4.0 * h2)

    for j in range(n):
        for k in range(j + 1, n):
            xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
            re = mixed(xj, xk) + mixed(yj, yk)
            im = mixed(xj, yk) - mixed(yj, xk)
            H[:, j, k] = (re + 1j * im) / 4.0
            H[:, k, j] = (re - 1j * im) / 4.0
    return H


def _check_defined(u: np.ndarray, domain: GridDomain) -> None:
    if u.shape != (domain.size,):
        raise DomainError(f"grid function has shape {u.shape}, expected ({domain.size},)")
    if np.any(~np.isfinite(u[domain.active])):
        raise DomainError("grid function must be finite on interior and boundary nodes")


def ddc_hessian(u: np.ndarray, domain: GridDomain, idx: np.ndarray | None = None) -> np.ndarray:
    """Hermitian matrix of mixed second differences at interior nodes.

    Exact for real quadratic polynomials of (z, zbar).
    """
    _check_defined(u, domain)
    return _hessian_real(u, domain, domain.interior if idx is None else idx)


def _zero_metric(domain: GridDomain) -> np.ndarray:
    return np.zeros((domain.size, domain.n, domain.n), dtype=complex)


def _gmat(g, domain):
    if g is None:
        return _zero_metric(domain)
    return g.g if isinstance(g, HermitianMetricField) else np.asarray(g)


def default_tol_cone(g, domain: GridDomain) -> float:
    G = _gmat(g, domain)
    lam_max = float(np.max(np.linalg.eigvalsh(G[domain.active]))) if g is not None else 1.0
    return 1e-8 * max(lam_max, 1.0)


def _det(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    if n == 1:
        return np.real(A[:, 0, 0])
    return np.real(A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0])


def ma_density(u: np.ndarray, g, domain: GridDomain, tol_cone: float | None = None) -> MeasureField:
    """Density of (omega + dd^c u)^n, zero (and flagged) off the omega-psh cone."""
    idx = domain.interior
    A = _gmat(g, domain)[idx] + ddc_hessian(u, domain)
    tol = default_tol_cone(g, domain) if tol_cone is None else tol_cone
    lam = np.linalg.eigvalsh(A)[:, 0]
    dens = ma_constant(domain.n) * np.maximum(_det(A), 0.0)
    off = lam < -tol
    dens[off] = 0.0
    density = np.zeros(domain.size)
    density[idx] = dens
    flags = np.zeros(domain.size, dtype=bool)
    flags[idx] = off
    return MeasureField(density, (), domain.h, domain.dim, non_psh=flags)


def mixed_form_density(A: np.ndarray, B: np.ndarray, k: int) -> np.ndarray:
    """Density of (iA)^k ^ (iB)^(n-k) for stacks of n x n Hermitian matrices."""
    n = A.shape[-1]
    c = ma_constant(n)
    if k == n:
        return c * _det(A)
    if k == 0:
        return c * _det(B)
    # n == 2, k == 1: polarisation of the 2x2 determinant
    return 4.0 * np.real(
        A[:, 0, 0] * B[:, 1, 1] + A[:, 1, 1] * B[:, 0, 0] - A[:, 0, 1] * B[:, 1, 0] - A[:, 1, 0] * B[:, 0, 1]
    )


def mixed_density(u: np.ndarray, k: int, g, domain: GridDomain, tol_cone: float | None = None) -> MeasureField:
    """Density of omega_u^k ^ omega^(n-k)."""
    if not 0 <= k <= domain.n:
        raise ValueError(f"k must lie in [0, {domain.n}], got {k}")
    if k == domain.n:
        return ma_density(u, g, domain, tol_cone)
    idx = domain.interior
    G = _gmat(g, domain)[idx]
    A = G + ddc_hessian(u, domain)
    dens = mixed_form_density(A, G, k)
    tol = default_tol_cone(g, domain) if tol_cone is None else tol_cone
    off = np.linalg.eigvalsh(A)[:, 0] < -tol
    dens = np.where(off, 0.0, np.maximum(dens, 0.0))
    density = np.zeros(domain.size)
    density[idx] = dens
    flags = np.zeros(domain.size, dtype=bool)
    flags[idx] = off
    return MeasureField(density, (), domain.h, domain.dim, non_psh=flags)


def least_eigenvalue(u: np.ndarray, g, domain: GridDomain) -> np.ndarray:
    A = _gmat(g, domain)[domain.interior] + ddc_hessian(u, domain)
    return np.linalg.eigvalsh(A)[:, 0]


def is_omega_psh(u: np.ndarray, g, domain: GridDomain, tol: float | None = None) -> tuple:
    """True iff g + H(u) >= -tol at every interior node.

    Returns ``(ok, report)``; the report names the worst node and its least
    eigenvalue.
    """
    tol = default_tol_cone(g, domain) if tol is None else tol
    lam = least_eigenvalue(u, g, domain)
    worst = int(np.argmin(lam)) if lam.size else 0
    report = {
        "worst_node": int(domain.interior[worst]) if lam.size else None,
        "least_eigenvalue": float(lam[worst]) if lam.size else np.inf,
        "violations": int(np.sum(lam < -tol)),
    }
    return report["violations"] == 0, report


def center_free_matrix(u: np.ndarray, G: np.ndarray, domain: GridDomain, idx: np.ndarray) -> np.ndarray:
    """g + H(u) with the centre value removed: the node matrix is K - (u0/h^2) I."""
    K = G[idx] + _hessian_real(u, domain, idx)
    shift = u[idx] / domain.h**2
    for j in range(domain.n):
        K[:, j, j] += shift
    return K


def _least_eig_2x2(K: np.ndarray) -> tuple:
    a = np.real(K[:, 0, 0])
    d = np.real(K[:, 1, 1])
    b2 = np.abs(K[:, 0, 1]) ** 2
    mean = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + b2)
    return mean - rad, mean + rad


def node_eigenvalues(K: np.ndarray) -> tuple:
    if K.shape[-1] == 1:
        lam = np.real(K[:, 0, 0])
        return lam, lam
    return _least_eig_2x2(K)


def _envelope_sweeps(psi, G, domain, tol_env, max_sweeps, tol_cone):
    v = psi.copy()
    h2 = domain.h**2
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for idx in domain.colors:
            K = center_free_matrix(v, G, domain, idx)
            lam, _ = node_eigenvalues(K)
            new = np.minimum(psi[idx], h2 * (lam + tol_cone))
            change = max(change, float(np.max(np.abs(new - v[idx]), initial=0.0)))
            v[idx] = new
        if change <= tol_env:
            return v, sweep
    raise IterationLimitError(f"psh_envelope did not converge in {max_sweeps} sweeps", residual=change,
                              iterations=max_sweeps)


def stencil_matrix(domain: GridDomain, ginv: np.ndarray | None = None) -> tuple:
    """Sparse matrix of u -> tr(ginv H(u)) on interior unknowns.

    ``ginv`` has shape (size, n, n) (default identity, giving sum_j d_j dbar_j).
    Returns ``(A, Bm)`` with ``tr(ginv H(u))[interior] = A u_int + Bm u_bdry``.
    """
    n, h2 = domain.n, domain.h**2
    idx = domain.interior
    st = domain.strides
    pos = -np.ones(domain.size, dtype=np.int64)
    pos[idx] = np.arange(idx.size)
    bpos = -np.ones(domain.size, dtype=np.int64)
    bpos[domain.boundary] = np.arange(domain.boundary.size)
    if ginv is None:
        W = np.broadcast_to(np.eye(n), (idx.size, n, n))
    else:
        W = ginv[idx]
    terms = []  # (node offset, coefficient per interior node)
    diag = np.zeros(idx.size)
    for a in range(2 * n):
        c = np.real(W[:, a // 2, a // 2]) / (4.0 * h2)
        diag -= 2.0 * c
        terms += [(st[a], c), (-st[a], c)]
    for j in range(n):
        for k in range(j + 1, n):
            p = np.real(W[:, k, j])
            q = np.imag(W[:, k, j])
            xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
            # 2 Re(ginv_kj H_jk) with H_jk = (m(xj,xk) + m(yj,yk) + i(m(xj,yk) - m(yj,xk))) / 4
            for (a, b), coef in (((xj, xk), p / 2), ((yj, yk), p / 2), ((xj, yk), -q / 2), ((yj, xk), q / 2)):
                if not np.any(coef):
                    continue
                c = coef / (4.0 * h2)
                terms += [(st[a] + st[b], c), (-st[a] - st[b], c), (st[a] - st[b], -c), (-st[a] + st[b], -c)]
    rows, cols, vals = [np.arange(idx.size)], [np.arange(idx.size)], [diag]
    brows, bcols, bvals = [], [], []
    for off, c in terms:
        nb = idx + off
        inner = pos[nb] >= 0
        rows.append(np.flatnonzero(inner))
        cols.append(pos[nb[inner]])
        vals.append(c[inner])
        outer = ~inner
        brows.append(np.flatnonzero(outer))
        bcols.append(bpos[nb[outer]])
        bvals.append(c[outer])
    if np.any(np.concatenate(bcols) < 0) if bcols else False:
        raise DomainError("interior stencil reaches an exterior node")
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(idx.size, idx.size))
    Bm = sp.csr_matrix((np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))),
                       shape=(idx.size, domain.boundary.size))
    return A, Bm


def _envelope_active_set(psi, gdiag, domain, max_iter=200):
    """n = 1: largest v <= psi with L v + g >= 0 as a linear complementarity problem."""
    A, Bm = stencil_matrix(domain)
    idx = domain.interior
    M = (-A).tocsr()
    q = A @ psi[idx] + Bm @ psi[domain.boundary] + gdiag[idx]
    # w = psi - v >= 0, M w + q = L v + g >= 0, w (M w + q) = 0
    w = np.zeros(idx.size)
    c = 1.0 / domain.h**2
    # ties at round-off level (flat obstacle pieces) would otherwise flip forever
    tie = 1e-12 * (float(np.max(np.abs(q), initial=0.0)) + c)
    active = q - c * w > tie  # obstacle in contact where the obstacle itself is admissible
    for it in range(1, max_iter + 1):
        free = ~active
        w = np.zeros(idx.size)
        if np.any(free):
            Mff = M[free][:, free]
            w[free] = spla.spsolve(Mff.tocsc(), -q[free])
        lam = M @ w + q
        lam[free] = 0.0
        new_active = lam - c * w > tie
        if np.array_equal(new_active, active):
            break
        active = new_active
    else:
        raise IterationLimitError("active-set envelope did not settle", iterations=max_iter)
    v = psi.copy()
    v[idx] = psi[idx] - w
    return v


def psh_envelope(u: np.ndarray, g, domain: GridDomain, tol_env: float | None = None,
                 max_sweeps: int = 20000, method: str = "auto", tol_cone: float | None = None) -> np.ndarray:
    """Largest omega-psh v <= u with the same boundary values.

    ``g=None`` gives the plain psh cone. ``method`` is ``"active_set"`` (n = 1
    only), ``"sweep"`` (clip the centre value node by node) or ``"auto"``.
    """
    _check_defined(u, domain)
    G = _gmat(g, domain)
    osc = float(np.ptp(u[domain.active]))
    tol_env = 1e-8 * max(osc, 1e-12) if tol_env is None else tol_env
    if method == "auto":
        method = "active_set" if domain.n == 1 else "sweep"
    if method == "active_set":
        if domain.n != 1:
            raise ValueError("active-set envelope is only available for n = 1")
        return _envelope_active_set(u, np.real(G[:, 0, 0]), domain)
    tol_cone = 0.0 if tol_cone is None else tol_cone
    v, _ = _envelope_sweeps(u.copy(), G, domain, tol_env, max_sweeps, tol_cone)
    return v


def demailly_max_check(v1: np.ndarray, v2: np.ndarray, g, domain: GridDomain, partition_tol: float = 0.0,
                       tol_cone: float | None = None) -> dict:
    """Compare MA mass of max(v1, v2) against each side on {v1 > v2} and {v1 < v2}.

    Pointwise densities are not comparable at the interface; masses over the
    strict level sets are. ``defect`` is the largest amount by which a side's
    mass exceeds the mass of the maximum, relative to the total mass.
    """
    w = np.maximum(v1, v2)
    m = ma_density(w, g, domain, tol_cone).density
    m1 = ma_density(v1, g, domain, tol_cone).density
    m2 = ma_density(v2, g, domain, tol_cone).density
    up = v1 > v2 + partition_tol
    down = v1 < v2 - partition_tol
    cells = {
        "v1_gt_v2": (domain.integrate(m, up), domain.integrate(m1, up)),
        "v1_lt_v2": (domain.integrate(m, down), domain.integrate(m2, down)),
    }
    total = max(domain.integrate(m), domain.integrate(m1), domain.integrate(m2), 1e-300)
    defect = max(max(side - mx, 0.0) for mx, side in cells.values())
    # interface band: nodes whose stencil sees both sides
    band = np.zeros(domain.size, dtype=bool)
    diff = v1 - v2
    idx = domain.interior
    s0 = np.sign(diff[idx])
    for step in stencil_steps(domain.n):
        band[idx] |= np.sign(diff[idx + domain.offset(step)]) != s0
    return {
        "cells": {k: {"mass_max": a, "mass_side": b} for k, (a, b) in cells.items()},
        "defect": defect,
        "relative_defect": defect / total,
        "interface_nodes": int(np.sum(band)),
        "interface_fraction": float(np.sum(band)) / max(idx.size, 1),
    }
