"""Interaction energy, potentials, quadratic forms and analytic gradients.

The energy of a measure is the double sum over atom pairs of the kernel
evaluated at geodesic distance, weighted by the atom masses.  Diagonal
(self-interaction) terms enter with weight^2 * F(0) whenever F(0) is
finite; for singular kernels the diagonal is dropped, so energies of
measures with pairwise distinct atoms stay finite, while coincident
distinct atoms yield +inf (returned, not raised).

Sums use a fixed reduction order, so results are reproducible run to run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import DegenerateInputError, Manifold, TangentVector
from .kernels import Kernel
from .measures import (
    COINCIDENT_TOL,
    DiscreteMeasure,
    SignedPerturbation,
    _connected_components,
)


@dataclass(frozen=True)
class EnergyReport:
    """Energy value with per-atom potentials; value == weights . potentials."""

    value: float
    potential_at_atoms: np.ndarray
    pair_count: int


def _kernel_matrix(manifold: Manifold, kernel: Kernel, points: np.ndarray):
    """Pairwise kernel values with the diagonal convention applied.

    Returns (matrix, pair_count, collision).  collision is True when two
    distinct atoms coincide while the kernel is singular at 0.
    """
    d = geometry.pairwise_distances(manifold, points)
    n = d.shape[0]
    diag = np.eye(n, dtype=bool)
    off = ~diag
    f0 = kernel.value_at_zero()
    collision = False
    vals = np.zeros_like(d)
    if n > 1:
        touching = off & (d < COINCIDENT_TOL)
        collision = math.isinf(f0) and bool(touching.any())
        # Masked entries reuse a genuine distance so every evaluation stays
        # inside the kernel's domain (tabulated kernels reject 0).
        filler = float(d[off].max())
        safe = np.where(off & ~touching, d, filler)
        vals = np.asarray(kernel.evaluate(safe))
        if bool(touching.any()):
            vals[touching] = f0
        vals[diag] = 0.0
    pair_count = n * n
    if math.isinf(f0):
        pair_count = n * n - n
    else:
        vals[diag] = f0
    return vals, pair_count, collision


def energy_report(manifold: Manifold, kernel: Kernel, mu: DiscreteMeasure) -> EnergyReport:
    vals, pair_count, collision = _kernel_matrix(manifold, kernel, mu.points)
    if collision:
        return EnergyReport(math.inf, np.full(mu.n_atoms, math.inf), pair_count)
    potentials = vals @ mu.weights
    return EnergyReport(float(mu.weights @ potentials), potentials, pair_count)


def energy(manifold: Manifold, kernel: Kernel, mu: DiscreteMeasure) -> float:
    """Total self-interaction energy of a measure; +inf flags a collision of
    distinct atoms under a singular kernel."""
    return energy_report(manifold, kernel, mu).value


def potential(manifold: Manifold, kernel: Kernel, mu: DiscreteMeasure, x: np.ndarray) -> float:
    """Field of mu at a point: sum_j w_j F(distance(x, x_j))."""
    x = geometry.validate_point(manifold, x)
    d = geometry.cross_distances(manifold, x[None, :], mu.points)[0]
    at_atom = d < COINCIDENT_TOL
    vals = np.where(at_atom, 0.0, kernel.evaluate(np.maximum(d, COINCIDENT_TOL)))
    if bool(at_atom.any()):
        vals = np.where(at_atom, kernel.value_at_zero(), vals)
    return float(vals @ mu.weights)


def quadratic_form(manifold: Manifold, kernel: Kernel, nu: SignedPerturbation) -> float:
    """Double sum of the kernel against a zero-mass signed atom set.

    Nonnegativity of this form over perturbations supported on a measure's
    atoms is a second-order necessary condition for local minimality.
    Coincident signed atoms are merged by net weight first, which leaves the
    value unchanged and keeps singular kernels finite.
    """
    points, a = nu.points, nu.signed_weights
    if points.shape[0] > 1:
        d = geometry.pairwise_distances(manifold, points)
        groups = _connected_components(d <= COINCIDENT_TOL)
        if len(groups) < points.shape[0]:
            points = np.array([points[g[0]] for g in groups])
            a = np.array([a[g].sum() for g in groups])
    vals, _, _ = _kernel_matrix(manifold, kernel, points)
    return float(a @ vals @ a)


def cross_energy(
    manifold: Manifold, kernel: Kernel, mu1: DiscreteMeasure, mu2: DiscreteMeasure
) -> float:
    """Bilinear interaction sum_i sum_j w_i v_j F(distance(x_i, y_j))."""
    d = geometry.cross_distances(manifold, mu1.points, mu2.points)
    touching = d < COINCIDENT_TOL
    f0 = kernel.value_at_zero()
    if math.isinf(f0) and bool(touching.any()):
        return math.inf
    vals = np.where(touching, f0, kernel.evaluate(np.maximum(d, COINCIDENT_TOL)))
    return float(mu1.weights @ vals @ mu2.weights)


def grad_positions(
    manifold: Manifold, kernel: Kernel, mu: DiscreteMeasure
) -> list[TangentVector]:
    """Energy gradient per atom position, as tangent vectors at the atoms.

    Component i is 2 w_i sum_{j != i} w_j F'(d_ij) * grad_x distance(x_i, x_j).
    """
    g = _grad_position_components(manifold, kernel, mu.points, mu.weights)
    return [TangentVector(mu.points[i], g[i]) for i in range(mu.n_atoms)]


def _grad_position_components(
    manifold: Manifold, kernel: Kernel, points: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    n = points.shape[0]
    if n == 1:
        return np.zeros_like(points)
    d = geometry.pairwise_distances(manifold, points)
    off = ~np.eye(n, dtype=bool)
    touching = off & (d < COINCIDENT_TOL)
    if bool(touching.any()) and not kernel.slope_bounded_at_zero():
        raise DegenerateInputError(
            "coincident atoms with unbounded kernel slope at zero"
        )
    safe = np.where(off & ~touching, np.maximum(d, COINCIDENT_TOL), 1.0)
    slopes = np.where(off & ~touching, kernel.derivative(safe), 0.0)
    coeff = 2.0 * np.outer(weights, weights) * slopes
    # The distance gradient toward x_j is minus the unit log direction.
    return -geometry.weighted_unit_log_sum(manifold, points, coeff, d)


def grad_weights(manifold: Manifold, kernel: Kernel, mu: DiscreteMeasure) -> np.ndarray:
    """Energy gradient per atom weight: twice the potential at each atom.

    At an interior minimum over the weight simplex all components agree,
    which is exactly constancy of the potential on the support.
    """
    return 2.0 * energy_report(manifold, kernel, mu).potential_at_atoms
