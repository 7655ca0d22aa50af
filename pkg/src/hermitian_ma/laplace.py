"""Linear Dirichlet problems for Delta_g = g^{jbar i} d_i dbar_j, Perron lifts,
pointwise Hoelder barriers and Hoelder-modulus estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pyamg
import scipy.sparse.linalg as spla

from .errors import BarrierError, ConfigurationError, IterationLimitError
from .forms import _hessian_real, stencil_matrix
from .geometry import GridDomain, HermitianMetricField, axis_steps, mixed_pairs


def _system(g: HermitianMetricField, domain: GridDomain):
    key = ("laplace_system", id(domain))
    cache = g._bound
    if key not in cache:
        cache[key] = stencil_matrix(domain, g.inverse)
    return cache[key]


DIRECT_LIMIT = 15_000
SMALL_SYSTEM = 2_000


def linear_solve(A, f: np.ndarray, dim: int = 2) -> np.ndarray:
    """Sparse direct solve for small or planar systems, AMG-preconditioned GMRES otherwise.

    ``dim`` is the real dimension of the grid. Elimination fills in badly on
    4-D grids, where AMG is an order of magnitude faster already at a few
    thousand unknowns.
    """
    size = A.shape[0]
    if size <= SMALL_SYSTEM or (dim <= 2 and size <= DIRECT_LIMIT):
        return spla.spsolve(A.tocsc(), f)
    ml = pyamg.smoothed_aggregation_solver((-A).tocsr(), symmetry="nonsymmetric")
    x, info = spla.gmres(-A, -f, M=ml.aspreconditioner(), rtol=1e-12, atol=0.0, restart=50, maxiter=200)
    if info != 0:
        raise IterationLimitError("AMG-preconditioned GMRES did not converge", iterations=info)
    return x


def apply_laplacian(u: np.ndarray, g: HermitianMetricField, domain: GridDomain,
                    idx: np.ndarray | None = None) -> np.ndarray:
    """Delta_g u = tr(g^{-1} H(u)) at ``idx`` (default: interior nodes)."""
    idx = domain.interior if idx is None else idx
    H = _hessian_real(u, domain, idx)
    return np.real(np.einsum("mkj,mjk->m", g.inverse[idx], H))


def boundary_array(phi, domain: GridDomain) -> np.ndarray:
    if callable(phi):
        return domain.boundary_values(phi)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0:
        return np.full(domain.boundary.size, float(phi))
    if phi.shape == (domain.size,):
        return phi[domain.boundary]
    return phi


def solve_laplace(g: HermitianMetricField, domain: GridDomain, phi, rhs=0.0,
                  tol_lin: float = 1e-8) -> np.ndarray:
    """Delta_g u = rhs at interior nodes, u = phi on boundary nodes.

    ``phi`` is a callable (sampled at projected boundary points), a boundary
    array or a full grid function whose boundary entries are used.
    """
    phi_b = boundary_array(phi, domain)
    A, Bm = _system(g, domain)
    f = np.broadcast_to(np.asarray(rhs, dtype=float), (domain.size,))[domain.interior] - Bm @ phi_b
    x = linear_solve(A, f, domain.dim)
    u = np.full(domain.size, np.nan)
    u[domain.interior] = x
    u[domain.boundary] = phi_b
    scale = max(float(np.ptp(phi_b)) if phi_b.size else 0.0, float(np.max(np.abs(f), initial=0.0)) * domain.h**2, 1.0)
    res = float(np.max(np.abs(A @ x - f), initial=0.0)) * domain.h**2
    if res > tol_lin * scale:
        raise IterationLimitError(f"linear solve residual {res:.3e} above tolerance", residual=res)
    return u


def solve_trace_equation(g: HermitianMetricField, domain: GridDomain, phi, parts: bool = False):
    """(omega + dd^c u) ^ omega^(n-1) = 0, i.e. Delta_g u = -n, with u = phi.

    Split as u = u1 + u2 with Delta_g u1 = 0 (trace phi) and Delta_g u2 = -n
    (trace 0).
    """
    u1 = solve_laplace(g, domain, phi)
    u2 = solve_laplace(g, domain, np.zeros(domain.boundary.size), rhs=-float(domain.n))
    u = u1 + u2
    return (u, u1, u2) if parts else u


def harmonic_lift(u: np.ndarray, mask: np.ndarray, g: HermitianMetricField, domain: GridDomain) -> np.ndarray:
    """Replace u on the interior nodes selected by ``mask`` by the Delta_g-harmonic
    function with the current values of u as Dirichlet data."""
    A, Bm = _system(g, domain)
    sel = mask[domain.interior]
    rest = ~sel
    f = -(A[sel][:, rest] @ u[domain.interior][rest]) - Bm[sel] @ u[domain.boundary]
    out = u.copy()
    out[domain.interior[sel]] = linear_solve(A[sel][:, sel], f, domain.dim)
    return out


def perron_laplace(g: HermitianMetricField, domain: GridDomain, phi, balls, start: np.ndarray,
                   tol: float = 1e-9, max_rounds: int = 500) -> tuple:
    """Iterate harmonic lifts over a ball cover from a subharmonic start."""
    u = domain.with_trace(start, boundary_array(phi, domain))
    for rounds in range(1, max_rounds + 1):
        change = 0.0
        for center, radius in balls:
            mask = ball_mask(domain, center, radius)
            new = harmonic_lift(u, mask, g, domain)
            change = max(change, float(np.max(np.abs(new - u)[domain.interior])))
            u = new
        if change <= tol:
            return u, rounds
    raise IterationLimitError("Perron lifts did not converge", residual=change, iterations=max_rounds)


def ball_mask(domain: GridDomain, center, radius: float) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    mask = np.linalg.norm(domain.points - c, axis=1) < radius
    return mask & domain.interior_mask


def ball_cover(domain: GridDomain, radius: float, spacing: float | None = None) -> list:
    """Deterministic cover of the interior nodes by balls of the given radius.

    Centres sit on a cubic lattice whose cells have half-diagonal below the radius.
    """
    spacing = 1.9 * radius / np.sqrt(domain.dim) if spacing is None else spacing
    pts = domain.points[domain.interior]
    key = np.round(pts / spacing).astype(int)
    centers = np.unique(key, axis=0) * spacing
    balls = []
    covered = np.zeros(domain.interior.size, dtype=bool)
    for c in centers:
        inside = np.linalg.norm(pts - c, axis=1) < radius
        if np.any(inside & ~covered):
            balls.append((tuple(float(x) for x in c), float(radius)))
            covered |= inside
    if not covered.all():
        raise ConfigurationError("ball spacing too coarse to cover the interior")
    return balls


# --- Hoelder barriers -------------------------------------------------------

@dataclass
class BarrierSpec:
    base_node: int
    base_point: np.ndarray
    alpha: float
    tau: float
    k: float
    c1: float
    validity_radius: float
    neighborhood: np.ndarray
    phi_base: float


def _local_rho(domain: GridDomain, point: np.ndarray):
    """Local defining function near a boundary point and its Euclidean gradient."""
    r0 = float(np.linalg.norm(point))
    if domain.kind == "ball" or abs(r0 - domain.radii[-1]) < abs(r0 - domain.radii[0]):
        R = domain.radii[-1]
        return (lambda p: np.sum(p**2, axis=1) - R**2), (lambda p: 2.0 * p)
    r_in = domain.radii[0]
    return (lambda p: r_in**2 - np.sum(p**2, axis=1)), (lambda p: -2.0 * p)


def hoelder_seminorm(values: np.ndarray, points: np.ndarray, alpha: float, chunk: int = 2048) -> float:
    best = 0.0
    for s in range(0, len(points), chunk):
        d = np.linalg.norm(points[s:s + chunk, None, :] - points[None, :, :], axis=2)
        dv = np.abs(values[s:s + chunk, None] - values[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(d > 0, dv / d**alpha, 0.0)
        best = max(best, float(r.max(initial=0.0)))
    return best


def _gradient_norm_g(grad: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """|d rho|_g for a real gradient in (x1, y1, ...) coordinates."""
    # d rho / dz_j = (rho_x - i rho_y) / 2
    dz = 0.5 * (grad[:, 0::2] - 1j * grad[:, 1::2])
    return np.sqrt(np.maximum(np.real(np.einsum("mj,mjk,mk->m", dz, ginv, np.conj(dz))), 0.0))


def _barrier_values(domain, point, phi_base, k, c1, alpha, tau, rho_fn):
    v = np.full(domain.size, np.nan)
    pi = domain.points[domain.interior]
    rho = np.minimum(rho_fn(pi), 0.0)
    v[domain.interior] = k * np.abs(rho) ** tau + c1 * np.linalg.norm(pi - point, axis=1) ** alpha + phi_base
    pb = domain.projected_boundary
    v[domain.boundary] = c1 * np.linalg.norm(pb - point, axis=1) ** alpha + phi_base
    return v


def hoelder_barrier(xi: int, phi, alpha: float, tau: float, domain: GridDomain, g: HermitianMetricField,
                    R: float = 0.5, eps0: float | None = None, k_max: float | None = None,
                    c1: float | None = None) -> tuple:
    """Local barrier k|rho|^tau + c1|z - xi|^alpha + phi(xi) at boundary node ``xi``.

    Returns ``(barrier, values)``. ``k`` is the smallest value of a doubling search
    making the barrier discretely Delta_g-superharmonic on the checked nodes,
    the interior nodes of W = B(xi, R/2) whose stencil avoids boundary nodes.
    Next to the boundary the profile |rho|^tau has unbounded slope and the
    data sit at projected points, so no k can help there.
    The search is capped by ``k_max``.
    """
    if not (0 < tau <= alpha < 1):
        raise ValueError("need 0 < tau <= alpha < 1")
    phi_b = boundary_array(phi, domain)
    bpos = int(np.flatnonzero(domain.boundary == xi)[0])
    point = domain.projected_boundary[bpos]
    phi_base = float(phi_b[bpos])
    if c1 is None:
        c1 = hoelder_seminorm(phi_b, domain.projected_boundary, alpha)
    rho_fn, grad_fn = _local_rho(domain, point)
    W = ball_mask(domain, point, R / 2)
    deep = np.zeros(domain.size, dtype=bool)
    deep[domain.deep_interior] = True
    wi = np.flatnonzero(W & deep)
    lam_min, _ = g.eigen_bounds(domain)
    eps0 = 1e-3 * np.sqrt(lam_min) if eps0 is None else eps0
    if wi.size:
        gn = _gradient_norm_g(grad_fn(domain.points[wi]), g.inverse[wi])
        if np.any(gn < eps0):
            raise BarrierError(f"defining-function gradient degenerates near node {xi}",
                               node=int(wi[np.argmin(gn)]))
    if k_max is None:
        k_max = global_k_max(domain, g, c1, alpha, tau, R)
    k = max(c1, 1e-3)
    while True:
        v = _barrier_values(domain, point, phi_base, k, c1, alpha, tau, rho_fn)
        if wi.size == 0 or np.all(apply_laplacian(v, g, domain, wi) <= 0.0):
            break
        k *= 2.0
        if k > k_max:
            raise BarrierError(f"no superharmonic barrier with k <= {k_max:.3g} at node {xi}", node=int(xi))
    barrier = BarrierSpec(int(xi), point, alpha, tau, k, c1, R, wi, phi_base)
    return barrier, v


def global_k_max(domain: GridDomain, g: HermitianMetricField, c1: float, alpha: float, tau: float,
                 R: float) -> float:
    """Uniform cap for the per-point search, from the continuum estimate
    k >= c1 alpha R^(alpha - tau) / (c3 eps^2) with a grid safety factor."""
    lam_min, lam_max = g.eigen_bounds(domain)
    r_out = domain.radii[-1]
    c2 = 2.0 * (r_out + R)  # Lipschitz constant of rho on B(xi, R)
    c3 = tau * (1.0 - tau) * c2 ** (tau - 2.0)
    # |d rho|_g^2 >= |z|^2 / lam_max on W, |z| >= r_in - R/2 (or r_out - R/2)
    r_low = max(min(domain.radii) - R / 2, domain.h)
    eps2 = r_low**2 / lam_max
    base = max(c1, 1e-3) * max(alpha, 1e-3) * R ** (alpha - tau) / (c3 * eps2)
    return float(base * 2.0**30)


def global_barrier(phi, alpha: float, domain: GridDomain, g: HermitianMetricField, tau: float | None = None,
                   R: float = 0.5) -> tuple:
    """Upper and lower Delta_g barriers pinned to phi at every boundary node.

    The upper barrier is the infimum over boundary nodes of the truncated
    point barriers min(sup phi + 1, phi(xi) + k2 (v_xi - phi(xi))).
    """
    phi_b = boundary_array(phi, domain)
    upper, k_up = _upper_envelope(phi_b, alpha, domain, g, tau, R)
    lower, k_lo = _upper_envelope(-phi_b, alpha, domain, g, tau, R)
    return upper, -lower


def _upper_envelope(phi_b, alpha, domain, g, tau, R):
    tau = alpha if tau is None else tau
    c1 = hoelder_seminorm(phi_b, domain.projected_boundary, alpha)
    if c1 == 0.0:
        const = float(phi_b[0]) if phi_b.size else 0.0
        u = np.full(domain.size, np.nan)
        u[domain.active] = const
        return u, []
    k1 = float(np.max(phi_b)) + 1.0
    k_max = global_k_max(domain, g, c1, alpha, tau, R)
    best = np.full(domain.size, np.inf)
    ks = []
    outside = domain.interior_mask.copy()
    for xi in domain.boundary:
        barrier, v = hoelder_barrier(int(xi), phi_b, alpha, tau, domain, g, R=R, k_max=k_max, c1=c1)
        far = outside & ~ball_mask(domain, barrier.base_point, R / 2)
        lift = v - barrier.phi_base
        k2 = 1.0
        if np.any(far):
            k2 = max(1.0, float(np.max((k1 - barrier.phi_base) / lift[far])))
        vhat = np.minimum(k1, barrier.phi_base + k2 * lift)
        best = np.minimum(best, vhat)
        ks.append((barrier.k, k2))
    u = np.full(domain.size, np.nan)
    u[domain.active] = best[domain.active]
    return u, ks


# --- Hoelder modulus --------------------------------------------------------

def _pairs_all(nodes: np.ndarray):
    i, j = np.triu_indices(nodes.size, k=1)
    return nodes[i], nodes[j]


def _pairs_dyadic(domain: GridDomain, nodes: np.ndarray):
    """Pairs at dyadic lattice distances along axes and axis diagonals."""
    member = np.zeros(domain.size, dtype=bool)
    member[nodes] = True
    span = 2 * domain.half_width
    steps = list(axis_steps(domain.n))
    for a, b in mixed_pairs(domain.n) + [(2 * j, 2 * j + 1) for j in range(domain.n)]:
        for sb in (1, -1):
            e = np.zeros(domain.dim, dtype=int)
            e[a], e[b] = 1, sb
            steps.append(e)
    I, J = [], []
    scale = 1
    while scale <= span:
        for e in steps:
            step = scale * e
            src = nodes[np.all(np.abs(domain.index[nodes] + step) <= domain.half_width, axis=1)]
            dst = src + domain.offset(step)
            ok = member[dst]
            I.append(src[ok])
            J.append(dst[ok])
        scale *= 2
    return np.concatenate(I), np.concatenate(J)


def hoelder_modulus(u: np.ndarray, alpha: float, domain: GridDomain, max_pairs: int = 100_000) -> tuple:
    """max |u(x) - u(y)| / |x - y|^alpha over node pairs, plus the same maximum
    restricted to pairs whose second member is a boundary node.

    All pairs are used when there are at most ``max_pairs``; otherwise pairs
    are stratified by dyadic distance.
    """
    nodes = domain.active
    npairs = nodes.size * (nodes.size - 1) // 2
    I, J = _pairs_all(nodes) if npairs <= max_pairs else _pairs_dyadic(domain, nodes)
    d = np.linalg.norm(domain.points[I] - domain.points[J], axis=1)
    full = float(np.max(np.abs(u[I] - u[J]) / d**alpha, initial=0.0))
    bdry = np.zeros(domain.size, dtype=bool)
    bdry[domain.boundary] = True
    sel = bdry[I] | bdry[J]
    bmod = float(np.max(np.abs(u[I] - u[J])[sel] / d[sel] ** alpha, initial=0.0))
    if npairs > max_pairs:
        # boundary pairs against a deterministic stride sample of the whole grid
        stride = max(1, nodes.size * domain.boundary.size // max_pairs)
        others = nodes[::stride]
        for xi in domain.boundary:
            dd = np.linalg.norm(domain.points[others] - domain.points[xi], axis=1)
            ok = dd > 0
            bmod = max(bmod, float(np.max(np.abs(u[others[ok]] - u[xi]) / dd[ok] ** alpha, initial=0.0)))
    return full, bmod
