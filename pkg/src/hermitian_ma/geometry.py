"""Lattice domains in C^n, defining functions and Hermitian metric fields.

Real coordinates are ordered ``(x1, y1, x2, y2)`` with ``z_j = x_j + i y_j``.
Grid functions are flat float arrays of length ``domain.size`` indexed like
``domain.points``; only interior and boundary entries carry meaning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InvalidMetricError, UnsupportedDomainError

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2

MIN_INTERIOR_PER_AXIS = 3


def ma_constant(n: int) -> float:
    """2^n n!, the density of (dd^c|z|^2)^n against Lebesgue measure."""
    return float(2**n * np.prod(np.arange(1, n + 1)))


@dataclass(frozen=True, eq=False)
class GridDomain:
    n: int
    h: float
    kind: str
    radii: tuple
    half_width: int
    node_class: np.ndarray
    boundary_distance: np.ndarray
    components: int = 1

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple:
        return (2 * self.half_width + 1,) * self.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def bounding_box(self) -> list:
        a = self.half_width * self.h
        return [(-a, a)] * self.dim

    @cached_property
    def index(self) -> np.ndarray:
        """Integer lattice coordinates of every node, shape (size, 2n)."""
        k = np.indices(self.shape).reshape(self.dim, -1).T
        return k - self.half_width

    @cached_property
    def points(self) -> np.ndarray:
        return self.index * self.h

    @cached_property
    def z(self) -> np.ndarray:
        """Complex coordinates, shape (size, n)."""
        p = self.points
        return p[:, 0::2] + 1j * p[:, 1::2]

    @cached_property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.node_class == INTERIOR)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.node_class == BOUNDARY)

    @cached_property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.node_class != EXTERIOR)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return self.node_class == INTERIOR

    @cached_property
    def strides(self) -> np.ndarray:
        m = 2 * self.half_width + 1
        return np.array([m ** (self.dim - 1 - a) for a in range(self.dim)])

    def offset(self, step) -> int:
        return int(np.dot(self.strides, step))

    @cached_property
    def colors(self) -> list:
        """Interior nodes split by coordinate parity; no stencil couples two
        nodes of the same colour."""
        parity = np.mod(self.index[self.interior], 2)
        code = parity @ (2 ** np.arange(self.dim))
        return [self.interior[code == c] for c in range(2**self.dim)]

    @cached_property
    def projected_boundary(self) -> np.ndarray:
        """Nearest point of the analytic boundary for each boundary node."""
        p = self.points[self.boundary]
        r = np.linalg.norm(p, axis=1)
        target = self._nearest_radius(r)
        safe = np.where(r > 0, r, 1.0)
        q = p * (target / safe)[:, None]
        q[r == 0] = 0.0
        q[r == 0, 0] = target[r == 0]
        return q

    def _nearest_radius(self, r: np.ndarray) -> np.ndarray:
        if self.kind == "ball":
            return np.full_like(r, self.radii[0])
        r_in, r_out = self.radii
        return np.where(np.abs(r - r_in) <= np.abs(r - r_out), r_in, r_out)

    def evaluate(self, f: Callable) -> np.ndarray:
        """Sample ``f(z)`` (z complex, shape (m, n)) at active nodes; NaN elsewhere."""
        out = np.full(self.size, np.nan)
        out[self.active] = np.asarray(f(self.z[self.active]), dtype=float)
        return out

    def boundary_values(self, f: Callable) -> np.ndarray:
        """Sample ``f`` at the projected boundary point of each boundary node."""
        q = self.projected_boundary
        zq = q[:, 0::2] + 1j * q[:, 1::2]
        return np.asarray(f(zq), dtype=float)

    def with_trace(self, u: np.ndarray, phi_b: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float, copy=True)
        out[self.boundary] = phi_b
        return out

    @cached_property
    def deep_interior(self) -> np.ndarray:
        """Interior nodes whose whole stencil consists of interior nodes."""
        keep = np.ones(self.interior.size, dtype=bool)
        for step in stencil_steps(self.n):
            keep &= self.node_class[self.interior + self.offset(step)] == INTERIOR
        return self.interior[keep]

    def neighbors_classified(self) -> bool:
        for step in stencil_steps(self.n):
            nb = self.interior + self.offset(step)
            if np.any(self.node_class[nb] == EXTERIOR):
                return False
        return True

    def interior_connected(self) -> bool:
        grid = self.interior_mask.reshape(self.shape)
        _, count = ndimage.label(grid, structure=ndimage.generate_binary_structure(self.dim, 1))
        return count == 1

    def integrate(self, density: np.ndarray, where=None) -> float:
        """h^{2n} times the pairwise sum of ``density`` over interior nodes."""
        idx = self.interior if where is None else self.interior[where[self.interior]]
        return float(self.h**self.dim * np.sum(density[idx]))

    def sup(self, u: np.ndarray, nodes: str = "active") -> float:
        idx = getattr(self, nodes)
        return float(np.max(np.abs(u[idx]))) if idx.size else 0.0


def axis_steps(n: int) -> list:
    steps = []
    for a in range(2 * n):
        for s in (1, -1):
            e = np.zeros(2 * n, dtype=int)
            e[a] = s
            steps.append(e)
    return steps


def mixed_pairs(n: int) -> list:
    """Real-axis pairs (a, b) belonging to different complex coordinates."""
    return [(a, b) for a in range(2 * n) for b in range(a + 1, 2 * n) if a // 2 != b // 2]


def stencil_steps(n: int) -> list:
    steps = axis_steps(n)
    for a, b in mixed_pairs(n):
        for sa, sb in product((1, -1), repeat=2):
            e = np.zeros(2 * n, dtype=int)
            e[a], e[b] = sa, sb
            steps.append(e)
    return steps


def _check_dimension(n: int) -> None:
    if n not in (1, 2):
        raise ConfigurationError(f"complex dimension must be 1 or 2, got {n}")


def _classify(n: int, h: float, half_width: int, inside: Callable) -> np.ndarray:
    m = 2 * half_width + 1
    shape = (m,) * (2 * n)
    k = np.indices(shape).reshape(2 * n, -1).T - half_width
    pts = k * h
    inside_mask = inside(pts).reshape(shape)
    strides = np.array([m ** (2 * n - 1 - a) for a in range(2 * n)])

    interior = inside_mask.copy()
    # interior nodes need their whole stencil inside the box
    for step in stencil_steps(n):
        shifted = np.zeros_like(interior)
        src = tuple(slice(max(0, -s), m - max(0, s)) for s in step)
        dst = tuple(slice(max(0, s), m - max(0, -s)) for s in step)
        shifted[src] = True
        interior &= shifted
    interior = interior.reshape(-1)

    node_class = np.full(m ** (2 * n), EXTERIOR, dtype=np.int8)
    node_class[interior] = INTERIOR
    idx = np.flatnonzero(interior)
    for step in stencil_steps(n):
        nb = idx + int(np.dot(strides, step))
        hit = node_class[nb] == EXTERIOR
        node_class[nb[hit]] = BOUNDARY
    return node_class


def _finish(n, h, kind, radii, half_width, node_class, distance_fn) -> GridDomain:
    m = 2 * half_width + 1
    grid = (node_class == INTERIOR).reshape((m,) * (2 * n))
    per_axis = min(int(grid.sum(axis=a).max()) for a in range(2 * n))
    if per_axis < MIN_INTERIOR_PER_AXIS:
        raise ConfigurationError(
            f"spacing h={h} too coarse: only {per_axis} interior nodes along some axis"
        )
    k = np.indices((m,) * (2 * n)).reshape(2 * n, -1).T - half_width
    dist = distance_fn(np.linalg.norm(k * h, axis=1))
    bgrid = (node_class == BOUNDARY).reshape((m,) * (2 * n))
    _, comps = ndimage.label(bgrid, structure=ndimage.generate_binary_structure(2 * n, 2 * n))
    return GridDomain(
        n=n,
        h=float(h),
        kind=kind,
        radii=tuple(float(r) for r in radii),
        half_width=half_width,
        node_class=node_class,
        boundary_distance=dist,
        components=int(comps),
    )


def build_ball_domain(radius: float, h: float, n: int) -> GridDomain:
    """Lattice hZ^{2n} restricted to the ball {|z| < radius} plus its stencil rim."""
    _check_dimension(n)
    if not (radius > 0 and h > 0):
        raise ConfigurationError("radius and h must be positive")
    half_width = int(np.ceil(radius / h - 1e-9))
    node_class = _classify(n, h, half_width, lambda p: np.linalg.norm(p, axis=1) < radius)
    return _finish(n, h, "ball", (radius,), half_width, node_class, lambda r: np.abs(r - radius))


def build_shell_domain(r_in: float, r_out: float, h: float, n: int) -> GridDomain:
    """Spherical shell {r_in < |z| < r_out}; its boundary has two components."""
    _check_dimension(n)
    if not (0 < r_in < r_out and h > 0):
        raise ConfigurationError("need 0 < r_in < r_out and h > 0")
    if h >= (r_out - r_in) / 2:
        raise ConfigurationError(f"spacing h={h} too coarse for shell width {r_out - r_in}")
    half_width = int(np.ceil(r_out / h - 1e-9))

    def inside(p):
        r = np.linalg.norm(p, axis=1)
        return (r > r_in) & (r < r_out)

    node_class = _classify(n, h, half_width, inside)
    return _finish(
        n, h, "shell", (r_in, r_out), half_width, node_class,
        lambda r: np.minimum(np.abs(r - r_in), np.abs(r_out - r)),
    )


@dataclass(frozen=True)
class DefiningFunction:
    values: np.ndarray
    strict_psh_margin: float


def standard_defining_function(domain: GridDomain) -> DefiningFunction:
    """rho = |z|^2 - R^2 on a ball; dd^c rho is the Euclidean Kahler form."""
    if domain.kind != "ball":
        raise UnsupportedDomainError(
            "no global strictly psh defining function for shell domains; "
            "use per-component barriers"
        )
    R = domain.radii[0]
    values = domain.evaluate(lambda z: np.sum(np.abs(z) ** 2, axis=1) - R**2)
    return DefiningFunction(values=values, strict_psh_margin=1.0)


@dataclass(frozen=True, eq=False)
class HermitianMetricField:
    """Per-node positive Hermitian matrix g, the coefficients of omega = i g dz^dzbar."""

    g: np.ndarray
    name: str = "custom"
    conformal: bool = False
    _bound: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.g.shape[-1]

    def eigen_bounds(self, domain: GridDomain) -> tuple:
        ev = np.linalg.eigvalsh(self.g[domain.active])
        return float(ev.min()), float(ev.max())

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def det(self) -> np.ndarray:
        return np.real(np.linalg.det(self.g))

    def torsion_bound(self, domain: GridDomain) -> float:
        if "B" not in self._bound:
            self._bound["B"] = metric_bound_B(self, domain)
        return self._bound["B"]


def _validate(g: np.ndarray, domain: GridDomain) -> None:
    act = g[domain.active]
    if not np.allclose(act, np.conj(np.swapaxes(act, -1, -2)), atol=1e-12):
        raise InvalidMetricError("metric is not Hermitian")
    lam = np.linalg.eigvalsh(act)[:, 0]
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        bad = domain.active[np.argmin(lam)]
        raise InvalidMetricError(f"metric not positive definite at node {bad}")


def identity_metric(domain: GridDomain, scale: float = 1.0) -> HermitianMetricField:
    g = np.zeros((domain.size, domain.n, domain.n), dtype=complex)
    g[:] = scale * np.eye(domain.n)
    return HermitianMetricField(g=g, name="identity", conformal=True)


def conformal_metric(domain: GridDomain, factor: Callable, name: str = "conformal") -> HermitianMetricField:
    """g = factor(z) * identity, factor sampled on the whole box."""
    f = np.asarray(factor(domain.z), dtype=float)
    g = f[:, None, None] * np.eye(domain.n)[None].astype(complex)
    _validate(g, domain)
    return HermitianMetricField(g=g, name=name, conformal=True)


def metric_from_callable(domain: GridDomain, fn: Callable, name: str = "custom") -> HermitianMetricField:
    """``fn(z)`` returns an array of shape (m, n, n) of Hermitian matrices."""
    g = np.asarray(fn(domain.z), dtype=complex).reshape(domain.size, domain.n, domain.n)
    _validate(g, domain)
    return HermitianMetricField(g=g, name=name, conformal=False)


def _ddbar_component(f: np.ndarray, a: int, b: int, domain: GridDomain, idx: np.ndarray) -> np.ndarray:
    """Discrete d_a dbar_b of a complex field at nodes ``idx``."""
    from .forms import _hessian_real  # local: forms imports geometry

    Hr = _hessian_real(np.real(f), domain, idx)
    Hi = _hessian_real(np.imag(f), domain, idx)
    return Hr[:, a, b] + 1j * Hi[:, a, b]


def metric_bound_B(g: HermitianMetricField, domain: GridDomain) -> float:
    """Smallest B with -B w^2 <= 2n dd^c w <= B w^2 and -B w^3 <= 4n^2 dw^d^c w <= B w^3.

    Top-degree coefficients are compared node-wise against
    P = (i dz1^dz1bar)^(i dz2^dz2bar): w^2 = 2 det(g) P and
    dd^c w = (d11 g22 + d22 g11 - d12 g21 - d21 g12) P with d_ab = d_a dbar_b.
    The 6-form inequality is vacuous in complex dimension 2.
    """
    _validate(g.g, domain)
    if domain.n == 1:
        return 0.0
    idx = domain.interior
    G = g.g
    T = (
        _ddbar_component(G[:, 1, 1], 0, 0, domain, idx)
        + _ddbar_component(G[:, 0, 0], 1, 1, domain, idx)
        - _ddbar_component(G[:, 1, 0], 0, 1, domain, idx)
        - _ddbar_component(G[:, 0, 1], 1, 0, domain, idx)
    )
    ratio = 2.0 * domain.n * np.abs(np.real(T)) / (2.0 * g.det[idx])
    B = float(np.max(ratio)) if ratio.size else 0.0
    return 0.0 if B < 1e-12 else B
