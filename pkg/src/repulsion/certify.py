"""Pass/fail certificates for necessary conditions of local minimizers.

Each check returns a CertificateReport with the worst margin found and a
witness for it.  A report passes iff worst_margin >= -tolerance.  Empty
sample sets pass vacuously with samples_checked = 0, which the report makes
explicit rather than hiding.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .energy import energy, energy_report, quadratic_form
from .geometry import Manifold
from .kernels import WEAKLY_REPULSIVE, Kernel, classify
from .measures import DiscreteMeasure, SignedPerturbation, support_clusters


@dataclass(frozen=True)
class CertificateReport:
    condition: str
    passed: bool
    worst_margin: float
    witness: dict = field(default_factory=dict)
    tolerance: float = 0.0
    samples_checked: int = 0
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "condition": self.condition,
            "passed": bool(self.passed),
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "samples_checked": self.samples_checked,
            "witness": self.witness,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _report(condition, margin, tol, witness, samples, config) -> CertificateReport:
    return CertificateReport(
        condition=condition,
        passed=bool(margin >= -tol),
        worst_margin=float(margin),
        witness=witness,
        tolerance=float(tol),
        samples_checked=int(samples),
        config=config,
    )


def constant_potential_check(
    manifold: Manifold, kernel: Kernel, mu: DiscreteMeasure, rel_tol: float = 1e-6
) -> CertificateReport:
    """First-order condition: the potential is constant across the support.

    The margin is minus the potential spread, relative to max(1, |mean|).
    """
    potentials = energy_report(manifold, kernel, mu).potential_at_atoms
    hi, lo = int(np.argmax(potentials)), int(np.argmin(potentials))
    scale = max(1.0, abs(float(potentials.mean())))
    margin = -(float(potentials[hi]) - float(potentials[lo])) / scale
    witness = {
        "max_atom": hi,
        "min_atom": lo,
        "max_potential": float(potentials[hi]),
        "min_potential": float(potentials[lo]),
    }
    return _report(
        "constant_potential", margin, rel_tol, witness, mu.n_atoms, {"rel_tol": rel_tol}
    )


def second_variation_check(
    manifold: Manifold,
    kernel: Kernel,
    mu: DiscreteMeasure,
    ball_radius: float | None = None,
    n_samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-8,
) -> CertificateReport:
    """Second-order condition: the kernel quadratic form is nonnegative on
    zero-mass perturbations supported on nearby atoms.

    Two perturbation families are scanned: random mean-centered sign
    patterns on the atoms inside a ball around each sampled center atom,
    and every three-atom family t*d_a + (1-t)*d_b - d_c with the margin
    minimized over t in closed form.  Margins are normalized by the squared
    weight vector.  Vacuous when no ball holds two atoms.
    """
    d = geometry.pairwise_distances(manifold, mu.points)
    n = mu.n_atoms
    if ball_radius is None:
        ball_radius = 0.2 * float(d.max()) if n > 1 else 1.0
    config = {"ball_radius": ball_radius, "n_samples": n_samples, "seed": seed, "tol": tol}
    neighborhoods = [np.nonzero(d[i] <= ball_radius)[0] for i in range(n)]
    if n < 2 or max(len(nb) for nb in neighborhoods) < 2:
        return _report("second_variation", math.inf, tol, {"vacuous": True}, 0, config)

    rng = np.random.default_rng(seed)
    worst = math.inf
    witness: dict = {}
    checked = 0

    eligible = [i for i in range(n) if len(neighborhoods[i]) >= 2]
    for _ in range(n_samples):
        center = int(eligible[rng.integers(len(eligible))])
        members = neighborhoods[center]
        signed = rng.uniform(-1.0, 1.0, size=len(members))
        signed -= signed.mean()
        norm_sq = float(signed @ signed)
        if norm_sq < 1e-20:
            continue
        nu = SignedPerturbation(mu.manifold, mu.points[members], signed)
        margin = quadratic_form(manifold, kernel, nu) / norm_sq
        checked += 1
        if margin < worst:
            worst = margin
            witness = {
                "kind": "random",
                "atoms": [int(i) for i in members],
                "signed_weights": [float(v) for v in signed],
            }

    # Exhaustive three-atom families with the optimal mixing parameter.
    f0 = kernel.value_at_zero()
    if math.isinf(f0):
        f0 = 0.0  # diagonal convention: singular self-terms are dropped
    for a_idx in range(n):
        for b_idx in range(n):
            if b_idx == a_idx:
                continue
            for c_idx in range(n):
                if c_idx in (a_idx, b_idx):
                    continue
                triple = (a_idx, b_idx, c_idx)
                if max(d[a_idx, b_idx], d[a_idx, c_idx], d[b_idx, c_idx]) > ball_radius:
                    continue
                f_ab = float(kernel.evaluate(d[a_idx, b_idx]))
                f_ac = float(kernel.evaluate(d[a_idx, c_idx]))
                f_bc = float(kernel.evaluate(d[b_idx, c_idx]))
                margin, t = _best_triple_margin(f_ab, f_ac, f_bc, f0)
                if margin is None:
                    continue
                checked += 1
                if margin < worst:
                    worst = margin
                    witness = {"kind": "triple", "atoms": list(triple), "t": t}

    if checked == 0:
        return _report("second_variation", math.inf, tol, {"vacuous": True}, 0, config)
    return _report("second_variation", worst, tol, witness, checked, config)


def _best_triple_margin(f_ab: float, f_ac: float, f_bc: float, f0: float):
    """Minimum over t of Q(t)/|nu(t)|^2 for nu = t*d_a + (1-t)*d_b - d_c.

    Q is quadratic in t; when it opens upward its vertex gives the exact
    minimizer of Q, whose normalized value bounds the true normalized
    minimum within a constant factor (enough for a sound failure check).
    """
    # Q(t) = sum_ij a_i a_j F_ij with a = (t, 1-t, -1), diagonal f0:
    c2 = 2.0 * f0 - 2.0 * f_ab
    c1 = 2.0 * f_ab - 2.0 * f0 - 2.0 * f_ac + 2.0 * f_bc
    c0 = 2.0 * f0 - 2.0 * f_bc
    if c2 <= 0.0:
        return None, None
    t = -c1 / (2.0 * c2)
    q = (c2 * t + c1) * t + c0
    norm_sq = t * t + (1.0 - t) ** 2 + 1.0
    return q / norm_sq, float(t)


def sqrt_triangle_check(
    manifold: Manifold,
    kernel: Kernel,
    mu: DiscreteMeasure,
    r0: float | None = None,
    tol: float = 1e-8,
) -> CertificateReport:
    """Short-range triangle condition for weakly repulsive kernels.

    For every atom triple with all sides at most r0 (where F < 0), the
    square roots of -F over the two shorter sides must cover the longest:
    sqrt(-F(s_ab)) + sqrt(-F(s_b)) >= sqrt(-F(s_a)).  Violations rule out
    local minimality.  Vacuous when no triple fits.
    """
    cls = classify(kernel)
    if cls.kind != WEAKLY_REPULSIVE:
        raise ValueError("sqrt_triangle_check needs a weakly repulsive kernel")
    d = geometry.pairwise_distances(manifold, mu.points)
    if r0 is None:
        ball = 0.2 * float(d.max()) if mu.n_atoms > 1 else 1.0
        r0 = min(cls.decreasing_radius, ball)
    if not r0 > 0 or r0 > cls.decreasing_radius:
        raise ValueError("r0 must lie in (0, decreasing_radius]")
    if float(kernel.evaluate(r0)) >= 0.0:
        raise ValueError("kernel must be negative on (0, r0]")
    config = {"r0": r0, "tol": tol}

    n = mu.n_atoms
    worst = math.inf
    witness: dict = {}
    checked = 0
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] > r0:
                continue
            for k in range(j + 1, n):
                if d[i, k] > r0 or d[j, k] > r0:
                    continue
                sides = sorted(
                    [(d[j, k], (j, k)), (d[i, k], (i, k)), (d[i, j], (i, j))],
                    key=lambda item: item[0],
                )
                short_a, short_b, longest = sides[0][0], sides[1][0], sides[2][0]
                margin = (
                    math.sqrt(-float(kernel.evaluate(short_a)))
                    + math.sqrt(-float(kernel.evaluate(short_b)))
                    - math.sqrt(-float(kernel.evaluate(longest)))
                )
                checked += 1
                if margin < worst:
                    worst = margin
                    witness = {
                        "atoms": [i, j, k],
                        "sides": [float(short_a), float(short_b), float(longest)],
                    }
    if checked == 0:
        return _report("sqrt_triangle", math.inf, tol, {"vacuous": True}, 0, config)
    return _report("sqrt_triangle", worst, tol, witness, checked, config)


def triangle_halfpower_margin(longest: float, side_a: float, side_b: float, exponent: float) -> float:
    """Half-power triangle defect side_a^(e/2) + side_b^(e/2) - longest^(e/2).

    Homogeneous of degree e/2: scaling all sides by c scales the value by
    c**(e/2).  Negative values on degenerate (collinear) triples for e > 2
    are what rules out support concentration under weak repulsion.
    """
    if min(longest, side_a, side_b) < 0 or not exponent > 0:
        raise ValueError("sides must be >= 0 and exponent > 0")
    h = exponent / 2.0
    return side_a**h + side_b**h - longest**h


def discreteness_report(
    mu: DiscreteMeasure, scales: list[float]
) -> list[tuple[float, int, float]]:
    """Cluster structure of the support across a decreasing ladder of scales.

    Each row is (eps, cluster_count, max_cluster_diameter).  A support is
    discrete at resolution eps* when the count is stable with diameters
    bounded by eps for every scale at or below eps*.
    """
    if any(s <= 0 for s in scales) or any(
        b >= a for a, b in zip(scales, scales[1:])
    ):
        raise ValueError("scales must be positive and strictly decreasing")
    d = geometry.pairwise_distances(mu.manifold, mu.points)
    rows = []
    for eps in scales:
        clusters = support_clusters(mu, eps)
        max_diam = 0.0
        for members in clusters:
            if len(members) > 1:
                sub = d[np.ix_(members, members)]
                max_diam = max(max_diam, float(sub.max()))
        rows.append((float(eps), len(clusters), max_diam))
    return rows


def discrete_resolution(rows: list[tuple[float, int, float]]) -> float | None:
    """Largest eps* in the report at which the support reads as discrete."""
    best = None
    for idx, (eps, count, diam) in enumerate(rows):
        tail = rows[idx:]
        if all(c == count and dm <= e for e, c, dm in tail):
            best = eps
            break
    return best


def nested_support_check(
    manifold: Manifold,
    kernel: Kernel,
    mu1: DiscreteMeasure,
    mu2: DiscreteMeasure,
    support_tol: float = 1e-6,
    energy_tol: float = 1e-9,
) -> CertificateReport:
    """Two genuine local minimizers cannot have nested supports and different
    energies.  Fails iff supp(mu1) sits inside supp(mu2) (within support_tol)
    while the energies differ by more than energy_tol."""
    d = geometry.cross_distances(manifold, mu1.points, mu2.points)
    cover = d.min(axis=1)
    nested = bool((cover <= support_tol).all())
    e1 = energy(manifold, kernel, mu1)
    e2 = energy(manifold, kernel, mu2)
    gap = abs(e1 - e2)
    if nested:
        margin = energy_tol - gap
    else:
        margin = float(cover.max())
    witness = {
        "nested": nested,
        "energy_mu1": e1,
        "energy_mu2": e2,
        "energy_gap": gap,
        "worst_uncovered_atom": int(np.argmax(cover)),
    }
    config = {"support_tol": support_tol, "energy_tol": energy_tol}
    return _report("nested_support", margin, 0.0, witness, mu1.n_atoms, config)
