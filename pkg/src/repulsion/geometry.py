"""Closed-form metric geometry for the three model spaces.

Points live in ambient coordinates: plain vectors for Euclidean space,
unit vectors for the sphere, and hyperboloid-model vectors for hyperbolic
space of curvature -1/K^2 (Minkowski self-product -K^2, positive first
coordinate).  All operations are pure functions; there is no shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EUCLIDEAN = "euclidean"
SPHERE = "sphere"
HYPERBOLIC = "hyperbolic"

SPHERE_UNIT_TOL = 1e-12
HYPERBOLOID_TOL = 1e-9
SPHERE_TANGENT_TOL = 1e-10
HYPERBOLIC_TANGENT_TOL = 1e-9
# Sphere log maps are rejected this close to the antipode: past it the
# unique-geodesic formula loses all significant digits.
ANTIPODAL_TOL = 1e-6
# Inside this band around the antipode a pair sits at the sharp maximum of
# the distance function; interaction forces treat it as exactly antipodal.
ANTIPODAL_FORCE_TOL = 1e-9
COINCIDENT_TOL = 1e-12


class GeometryError(ValueError):
    """Base class for geometry input problems."""


class InvalidPointError(GeometryError):
    """Coordinates violate the manifold constraint beyond tolerance."""


class DegenerateInputError(GeometryError):
    """Operation undefined for this input (antipodal or coincident pair)."""


@dataclass(frozen=True)
class Manifold:
    """Descriptor of the ambient space.

    kind is one of "euclidean", "sphere", "hyperbolic".  curvature_scale
    (K) only matters for hyperbolic space, whose sectional curvature is
    -1/K^2; the sphere is the unit sphere (curvature +1).
    """

    kind: str
    dim: int
    curvature_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, SPHERE, HYPERBOLIC):
            raise GeometryError(f"unknown manifold kind: {self.kind!r}")
        if self.dim < 1:
            raise GeometryError(f"dim must be >= 1, got {self.dim}")
        if self.kind == HYPERBOLIC and not self.curvature_scale > 0:
            raise GeometryError("curvature_scale K must be > 0")

    @property
    def ambient_dim(self) -> int:
        return self.dim if self.kind == EUCLIDEAN else self.dim + 1

    @property
    def curvature(self) -> float:
        if self.kind == SPHERE:
            return 1.0
        if self.kind == HYPERBOLIC:
            return -1.0 / self.curvature_scale**2
        return 0.0

    def spec_string(self) -> str:
        if self.kind == HYPERBOLIC:
            return f"hyperbolic:{self.dim}:{self.curvature_scale:.17g}"
        return f"{self.kind}:{self.dim}"

    @classmethod
    def parse(cls, spec: str) -> "Manifold":
        """Parse "euclidean:2", "sphere:2" or "hyperbolic:2:1.5"."""
        parts = spec.strip().split(":")
        try:
            if parts[0] in (EUCLIDEAN, SPHERE) and len(parts) == 2:
                return cls(parts[0], int(parts[1]))
            if parts[0] == HYPERBOLIC and len(parts) in (2, 3):
                k = float(parts[2]) if len(parts) == 3 else 1.0
                return cls(HYPERBOLIC, int(parts[1]), k)
        except (ValueError, GeometryError) as exc:
            raise GeometryError(f"bad manifold spec {spec!r}: {exc}") from exc
        raise GeometryError(f"bad manifold spec {spec!r}")


def euclidean(dim: int) -> Manifold:
    return Manifold(EUCLIDEAN, dim)


def sphere(dim: int) -> Manifold:
    return Manifold(SPHERE, dim)


def hyperbolic(dim: int, curvature_scale: float = 1.0) -> Manifold:
    return Manifold(HYPERBOLIC, dim, curvature_scale)


class TangentVector(NamedTuple):
    base: np.ndarray
    components: np.ndarray


def minkowski_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(-a[..., 0] * b[..., 0] + (a[..., 1:] * b[..., 1:]).sum(-1))


def validate_point(manifold: Manifold, x: np.ndarray) -> np.ndarray:
    """Return x as a float array, raising InvalidPointError off-manifold."""
    x = np.asarray(x, dtype=float)
    if x.shape != (manifold.ambient_dim,):
        raise InvalidPointError(
            f"expected shape ({manifold.ambient_dim},), got {x.shape}"
        )
    if manifold.kind == SPHERE:
        if abs(np.linalg.norm(x) - 1.0) > SPHERE_UNIT_TOL:
            raise InvalidPointError(f"not a unit vector: |x| = {np.linalg.norm(x)!r}")
    elif manifold.kind == HYPERBOLIC:
        k2 = manifold.curvature_scale**2
        if abs(minkowski_inner(x, x) + k2) > HYPERBOLOID_TOL * k2 or x[0] <= 0:
            raise InvalidPointError("not on the hyperboloid sheet")
    return x


def validate_tangent(manifold: Manifold, v: TangentVector) -> TangentVector:
    base = validate_point(manifold, v.base)
    comp = np.asarray(v.components, dtype=float)
    if comp.shape != base.shape:
        raise InvalidPointError("tangent components must match ambient shape")
    size = tangent_norm(manifold, comp)
    if manifold.kind == SPHERE:
        if abs(float(base @ comp)) > SPHERE_TANGENT_TOL * max(size, 1.0):
            raise InvalidPointError("components not tangent to the sphere")
    elif manifold.kind == HYPERBOLIC:
        if abs(minkowski_inner(base, comp)) > HYPERBOLIC_TANGENT_TOL * max(size, 1.0):
            raise InvalidPointError("components not Minkowski-orthogonal to base")
    return TangentVector(base, comp)


def tangent_norm(manifold: Manifold, components: np.ndarray) -> float:
    """Riemannian length of a tangent vector given by ambient components."""
    components = np.asarray(components, dtype=float)
    if manifold.kind == HYPERBOLIC:
        # The Minkowski form restricted to a tangent space is positive
        # definite; clip tiny negatives from rounding.
        return math.sqrt(max(minkowski_inner(components, components), 0.0))
    return float(np.linalg.norm(components))


def tangent_inner(manifold: Manifold, a: np.ndarray, b: np.ndarray) -> float:
    if manifold.kind == HYPERBOLIC:
        return minkowski_inner(a, b)
    return float(np.dot(a, b))


def project_point(manifold: Manifold, x: np.ndarray) -> np.ndarray:
    """Snap a nearly-on-manifold vector back onto the constraint set."""
    x = np.asarray(x, dtype=float)
    if manifold.kind == SPHERE:
        return x / np.linalg.norm(x)
    if manifold.kind == HYPERBOLIC:
        k = manifold.curvature_scale
        spatial = x[1:]
        x0 = math.sqrt(k * k + float(spatial @ spatial))
        return np.concatenate(([x0], spatial))
    return x


def project_tangent(manifold: Manifold, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of an ambient vector onto the tangent space at x."""
    if manifold.kind == SPHERE:
        return v - (x @ v) * x
    if manifold.kind == HYPERBOLIC:
        k2 = manifold.curvature_scale**2
        return v + (minkowski_inner(x, v) / k2) * x
    return v


def distance(manifold: Manifold, x: np.ndarray, y: np.ndarray) -> float:
    """Geodesic distance between two points."""
    x = validate_point(manifold, x)
    y = validate_point(manifold, y)
    if manifold.kind == EUCLIDEAN:
        return float(np.linalg.norm(x - y))
    if manifold.kind == SPHERE:
        return math.acos(min(1.0, max(-1.0, float(x @ y))))
    k = manifold.curvature_scale
    return k * math.acosh(max(1.0, -minkowski_inner(x, y) / (k * k)))


def log_map(manifold: Manifold, x: np.ndarray, y: np.ndarray) -> TangentVector:
    """Tangent vector at x whose geodesic reaches y at unit time.

    Its length equals distance(x, y).  Sphere pairs within ANTIPODAL_TOL of
    the antipode are rejected: the minimizing geodesic is not unique there.
    """
    x = validate_point(manifold, x)
    y = validate_point(manifold, y)
    if manifold.kind == EUCLIDEAN:
        return TangentVector(x, y - x)
    d = distance(manifold, x, y)
    if manifold.kind == SPHERE:
        if d > math.pi - ANTIPODAL_TOL:
            raise DegenerateInputError(
                f"log map not unique near the antipode (distance {d!r})"
            )
        u = y - math.cos(d) * x
        nu = np.linalg.norm(u)
        if nu < 1e-15 or d < 1e-15:
            return TangentVector(x, np.zeros_like(x))
        return TangentVector(x, (d / nu) * u)
    k = manifold.curvature_scale
    u = y - math.cosh(d / k) * x
    nu = tangent_norm(manifold, u)
    if nu < 1e-15 or d < 1e-15:
        return TangentVector(x, np.zeros_like(x))
    return TangentVector(x, (d / nu) * u)


def exp_map(manifold: Manifold, x: np.ndarray, v: TangentVector | np.ndarray) -> np.ndarray:
    """Endpoint of the geodesic from x with initial velocity v.

    The result is re-projected onto the constraint set so long iterated
    runs do not drift off the manifold.
    """
    x = validate_point(manifold, x)
    comp = np.asarray(v.components if isinstance(v, TangentVector) else v, dtype=float)
    if manifold.kind == EUCLIDEAN:
        return x + comp
    t = tangent_norm(manifold, comp)
    if t < 1e-15:
        return project_point(manifold, x.copy())
    if manifold.kind == SPHERE:
        out = math.cos(t) * x + math.sin(t) * comp / t
        return project_point(manifold, out)
    k = manifold.curvature_scale
    out = math.cosh(t / k) * x + k * math.sinh(t / k) * comp / t
    return project_point(manifold, out)


def geodesic_point(manifold: Manifold, x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    """Point at parameter t in [0, 1] on the geodesic from x to y."""
    if not 0.0 <= t <= 1.0:
        raise GeometryError(f"t must lie in [0, 1], got {t}")
    v = log_map(manifold, x, y)
    return exp_map(manifold, x, t * v.components)


def distance_gradient(manifold: Manifold, x: np.ndarray, y: np.ndarray) -> TangentVector:
    """Gradient at x of the distance to y: the unit vector pointing away from y."""
    d = distance(manifold, x, y)
    if d <= 1e-9:
        raise DegenerateInputError("distance gradient undefined at coincident points")
    v = log_map(manifold, x, y)
    return TangentVector(x, -v.components / d)


def hyperbolic_third_side(curvature_scale: float, s_a: float, s_b: float, angle: float) -> float:
    """Third side of a hyperbolic hinge with sides s_a, s_b and included angle.

    Uses the hyperbolic law of cosines at curvature -1/K^2:
    cosh(d/K) = cosh(s_a/K) cosh(s_b/K) - sinh(s_a/K) sinh(s_b/K) cos(angle).
    """
    if curvature_scale <= 0:
        raise GeometryError("curvature_scale K must be > 0")
    if s_a < 0 or s_b < 0:
        raise GeometryError("hinge sides must be nonnegative")
    if not 0.0 <= angle <= math.pi:
        raise GeometryError("hinge angle must lie in [0, pi]")
    k = curvature_scale
    a, b = s_a / k, s_b / k
    # cosh a cosh b - sinh a sinh b cos t = cosh(a-b) + sinh a sinh b (1 - cos t)
    # evaluated in the second form to keep full precision for small angles.
    c = math.cosh(a - b) + math.sinh(a) * math.sinh(b) * (1.0 - math.cos(angle))
    return k * math.acosh(max(1.0, c))


def spherical_third_side(s_a: float, s_b: float, angle: float) -> float:
    """Third side of a unit-sphere hinge via the spherical law of cosines."""
    if s_a < 0 or s_b < 0:
        raise GeometryError("hinge sides must be nonnegative")
    if not 0.0 <= angle <= math.pi:
        raise GeometryError("hinge angle must lie in [0, pi]")
    c = math.cos(s_a) * math.cos(s_b) + math.sin(s_a) * math.sin(s_b) * math.cos(angle)
    return math.acos(min(1.0, max(-1.0, c)))


def euclidean_third_side(s_a: float, s_b: float, angle: float) -> float:
    if s_a < 0 or s_b < 0:
        raise GeometryError("hinge sides must be nonnegative")
    if not 0.0 <= angle <= math.pi:
        raise GeometryError("hinge angle must lie in [0, pi]")
    c2 = s_a * s_a + s_b * s_b - 2.0 * s_a * s_b * math.cos(angle)
    return math.sqrt(max(c2, 0.0))


def third_side(manifold: Manifold, s_a: float, s_b: float, angle: float) -> float:
    """Third side of a hinge in the model space of this manifold's curvature."""
    if manifold.kind == SPHERE:
        return spherical_third_side(s_a, s_b, angle)
    if manifold.kind == HYPERBOLIC:
        return hyperbolic_third_side(manifold.curvature_scale, s_a, s_b, angle)
    return euclidean_third_side(s_a, s_b, angle)


def hinge_comparison(
    m_high: Manifold, m_low: Manifold, s_a: float, s_b: float, angle: float
) -> tuple[float, float]:
    """Third sides of the same hinge in two model spaces.

    m_low must not curve more than m_high; the returned pair
    (side_high, side_low) then satisfies side_low >= side_high: lower
    curvature spreads hinge endpoints farther apart.
    """
    if m_low.curvature > m_high.curvature:
        raise GeometryError(
            "curvature ordering violated: "
            f"{m_low.curvature} > {m_high.curvature}"
        )
    if m_high.kind == SPHERE or m_low.kind == SPHERE:
        if s_a > math.pi / 2 or s_b > math.pi / 2:
            raise GeometryError("sphere hinge sides must be <= pi/2")
    return third_side(m_high, s_a, s_b, angle), third_side(m_low, s_a, s_b, angle)


def tangent_basis(manifold: Manifold, x: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at x, rows of shape (dim, ambient)."""
    x = validate_point(manifold, x)
    n = manifold.ambient_dim
    if manifold.kind == EUCLIDEAN:
        return np.eye(n)
    basis = []
    for i in range(n):
        v = project_tangent(manifold, x, np.eye(n)[i])
        for b in basis:
            v = v - tangent_inner(manifold, b, v) * b
        size = tangent_norm(manifold, v)
        if size > 1e-8:
            basis.append(v / size)
        if len(basis) == manifold.dim:
            break
    return np.array(basis)


def random_point(manifold: Manifold, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random point: uniform on the sphere, Gaussian elsewhere (spread ~scale)."""
    if manifold.kind == SPHERE:
        v = rng.standard_normal(manifold.ambient_dim)
        return v / np.linalg.norm(v)
    if manifold.kind == EUCLIDEAN:
        return scale * rng.standard_normal(manifold.dim)
    origin = hyperbolic_origin(manifold)
    direction = rng.standard_normal(manifold.dim)
    comp = np.concatenate(([0.0], direction))
    size = tangent_norm(manifold, comp)
    if size < 1e-15:
        return origin
    radius = scale * abs(rng.standard_normal())
    return exp_map(manifold, origin, comp * (radius / size))


def hyperbolic_origin(manifold: Manifold) -> np.ndarray:
    origin = np.zeros(manifold.ambient_dim)
    origin[0] = manifold.curvature_scale
    return origin


def random_tangent(
    manifold: Manifold, x: np.ndarray, rng: np.random.Generator, scale: float = 1.0
) -> TangentVector:
    basis = tangent_basis(manifold, x)
    coeffs = scale * rng.standard_normal(manifold.dim)
    return TangentVector(np.asarray(x, dtype=float), coeffs @ basis)


# ---------------------------------------------------------------------------
# Vectorized forms used by the energy and transport code.  X, Y are arrays of
# points stacked row-wise; no per-point validation happens here.


def pairwise_distances(manifold: Manifold, points: np.ndarray) -> np.ndarray:
    return cross_distances(manifold, points, points)


def cross_distances(manifold: Manifold, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if manifold.kind == EUCLIDEAN:
        diff = xs[:, None, :] - ys[None, :, :]
        return np.sqrt((diff * diff).sum(-1))
    if manifold.kind == SPHERE:
        return np.arccos(np.clip(xs @ ys.T, -1.0, 1.0))
    k = manifold.curvature_scale
    gram = xs[:, 1:] @ ys[:, 1:].T - np.outer(xs[:, 0], ys[:, 0])
    return k * np.arccosh(np.maximum(1.0, -gram / (k * k)))


def weighted_unit_log_sum(
    manifold: Manifold,
    points: np.ndarray,
    coefficients: np.ndarray,
    distances: np.ndarray,
) -> np.ndarray:
    """Row i of the result is sum_j c[i,j] * (unit initial direction x_i -> x_j).

    Entries with coincident pairs contribute zero, as do sphere pairs within
    ANTIPODAL_FORCE_TOL of the antipode, where the distance function has a
    sharp maximum and no well-defined direction.
    """
    points = np.asarray(points, dtype=float)
    c = np.array(coefficients, dtype=float)
    d = distances
    degenerate = d < COINCIDENT_TOL
    if manifold.kind == SPHERE:
        degenerate = degenerate | (d > math.pi - ANTIPODAL_FORCE_TOL)
    c[degenerate] = 0.0
    if manifold.kind == EUCLIDEAN:
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(degenerate, 0.0, c / np.where(degenerate, 1.0, d))
        return a @ points - a.sum(axis=1)[:, None] * points
    if manifold.kind == SPHERE:
        sin_d = np.sin(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(degenerate, 0.0, c / np.where(degenerate, 1.0, sin_d))
        out = a @ points - ((a * np.cos(d)).sum(axis=1))[:, None] * points
    else:
        k = manifold.curvature_scale
        sinh_d = k * np.sinh(d / k)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(degenerate, 0.0, c / np.where(degenerate, 1.0, sinh_d))
        out = a @ points - ((a * np.cosh(d / k)).sum(axis=1))[:, None] * points
    # Rows should already be tangent; clean up rounding in the normal direction.
    for i in range(out.shape[0]):
        out[i] = project_tangent(manifold, points[i], out[i])
    return out


def project_points(manifold: Manifold, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    out = np.empty_like(points)
    for i in range(points.shape[0]):
        out[i] = project_point(manifold, points[i])
    return out
