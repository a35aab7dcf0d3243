"""Gradient descent over atom positions and weights on a model manifold.

Each iteration alternates an Armijo-backtracked exponential-map step on the
atom positions with a multiplicative (mirror) step on the weight simplex,
optionally followed by annealing noise, and collapses atom clusters at a
fixed cadence.  Runs are deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .energy import _grad_position_components, _kernel_matrix
from .geometry import Manifold
from .kernels import Kernel
from .measures import (
    DiscreteMeasure,
    _connected_components,
    merge_atoms,
    support_clusters,
)

STEP_FLOOR = 1e-14
WEIGHT_CULL = 1e-14
# Accepted steps may leave the energy unchanged up to this slack, so progress
# continues below the float resolution of the energy itself.
ACCEPT_SLACK = 1e-13
STAGNANT_LIMIT = 25
MERGE_PERIOD = 100


class StallError(RuntimeError):
    """Descent cannot move without the energy becoming non-finite."""


class DescentConfigError(ValueError):
    """Configuration value out of range."""


@dataclass(frozen=True)
class DescentConfig:
    n_atoms: int = 40
    max_iters: int = 50000
    step_init: float = 0.1
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    weight_step: float = 0.05
    merge_eps: float = 1e-3
    anneal_temp0: float = 0.0
    anneal_decay: float = 0.95
    stop_grad_tol: float = 1e-9
    seed: int = 0
    restarts: int = 1
    # Optional hard confinement: Euclidean atoms are projected back into the
    # origin-centered ball of this radius after every move.
    confine_radius: float | None = None

    def __post_init__(self):
        checks = [
            (self.n_atoms >= 1, "n_atoms must be >= 1"),
            (self.max_iters >= 1, "max_iters must be >= 1"),
            (self.step_init > 0, "step_init must be > 0"),
            (0 < self.backtrack_factor < 1, "backtrack_factor must lie in (0, 1)"),
            (0 < self.armijo_c < 1, "armijo_c must lie in (0, 1)"),
            (self.weight_step > 0, "weight_step must be > 0"),
            (self.merge_eps > 0, "merge_eps must be > 0"),
            (self.anneal_temp0 >= 0, "anneal_temp0 must be >= 0"),
            (0 < self.anneal_decay < 1, "anneal_decay must lie in (0, 1)"),
            (self.stop_grad_tol > 0, "stop_grad_tol must be > 0"),
            (self.restarts >= 1, "restarts must be >= 1"),
            (self.confine_radius is None or self.confine_radius > 0,
             "confine_radius must be > 0 when set"),
        ]
        for ok, msg in checks:
            if not ok:
                raise DescentConfigError(msg)


@dataclass
class Trajectory:
    """Descent log: one row (iteration, energy, grad_norm, support_card) per
    iteration, where grad_norm is the largest first-order residual across
    positions and weights, plus the final canonical measure."""

    iterates: list[tuple[int, float, float, int]]
    final: DiscreteMeasure
    stop_reason: str
    converged: bool
    merge_iters: list[int] = field(default_factory=list)
    annealed_iters: list[int] = field(default_factory=list)
    restart_index: int | None = None

    @property
    def final_energy(self) -> float:
        return self.iterates[-1][1]


def random_measure(
    manifold: Manifold, n_atoms: int, rng: np.random.Generator, scale: float = 1.0
) -> DiscreteMeasure:
    """Equal-weight measure with independently drawn random atoms."""
    pts = np.array([geometry.random_point(manifold, rng, scale) for _ in range(n_atoms)])
    return DiscreteMeasure.from_atoms(manifold, pts, np.full(n_atoms, 1.0 / n_atoms))


def _confine(cfg: DescentConfig, manifold: Manifold, points: np.ndarray) -> np.ndarray:
    if cfg.confine_radius is None:
        return points
    norms = np.linalg.norm(points, axis=1)
    factor = np.minimum(1.0, cfg.confine_radius / np.maximum(norms, 1e-300))
    return points * factor[:, None]


def _exp_rows(manifold: Manifold, points: np.ndarray, steps: np.ndarray) -> np.ndarray:
    if manifold.kind == geometry.EUCLIDEAN:
        return points + steps
    if manifold.kind == geometry.SPHERE:
        t = np.linalg.norm(steps, axis=1)
        small = t < 1e-15
        tt = np.where(small, 1.0, t)
        out = np.cos(t)[:, None] * points + (np.sin(t) / tt)[:, None] * steps
        out[small] = points[small]
        return out / np.linalg.norm(out, axis=1)[:, None]
    k = manifold.curvature_scale
    sq = -steps[:, 0] ** 2 + (steps[:, 1:] ** 2).sum(axis=1)
    t = np.sqrt(np.maximum(sq, 0.0))
    small = t < 1e-15
    tt = np.where(small, 1.0, t)
    out = np.cosh(t / k)[:, None] * points + (k * np.sinh(t / k) / tt)[:, None] * steps
    out[small] = points[small]
    out[:, 0] = np.sqrt(k * k + (out[:, 1:] ** 2).sum(axis=1))
    return out


def _state(manifold: Manifold, kernel: Kernel, points: np.ndarray, weights: np.ndarray):
    """Energy, per-atom potentials and first-order residuals of a raw state."""
    vals, _, collision = _kernel_matrix(manifold, kernel, points)
    if collision:
        return math.inf, None, None, math.inf
    potentials = vals @ weights
    total = float(weights @ potentials)
    grads = _grad_position_components(manifold, kernel, points, weights)
    if manifold.kind == geometry.HYPERBOLIC:
        gsq_rows = -grads[:, 0] ** 2 + (grads[:, 1:] ** 2).sum(axis=1)
        gsq_rows = np.maximum(gsq_rows, 0.0)
    else:
        gsq_rows = (grads * grads).sum(axis=1)
    weight_resid = 2.0 * potentials - 2.0 * total
    grad_norm = max(
        float(np.sqrt(gsq_rows.max(initial=0.0))),
        float(np.abs(weight_resid).max(initial=0.0)),
    )
    return total, grads, weight_resid, grad_norm


def _energy_only(manifold: Manifold, kernel: Kernel, points: np.ndarray, weights: np.ndarray) -> float:
    vals, _, collision = _kernel_matrix(manifold, kernel, points)
    if collision:
        return math.inf
    return float(weights @ (vals @ weights))


def minimize(
    manifold: Manifold,
    kernel: Kernel,
    mu0: DiscreteMeasure,
    cfg: DescentConfig,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Descend the interaction energy from mu0 until first-order residuals
    drop below cfg.stop_grad_tol, the iterate stops moving, or max_iters.

    Raises StallError when every trial step down to the floor keeps the
    energy non-finite (a singular-kernel collision lock).
    """
    if not kernel.analytic:
        raise DescentConfigError("descent needs an analytic kernel; tabulated kernels are certificate-only")
    if cfg.confine_radius is not None and manifold.kind != geometry.EUCLIDEAN:
        raise DescentConfigError("confine_radius applies to Euclidean manifolds only")
    if mu0.manifold != manifold:
        raise DescentConfigError("mu0 lives on a different manifold")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    points = _confine(cfg, manifold, mu0.points.copy())
    weights = mu0.weights.copy()
    temp = cfg.anneal_temp0
    rows: list[tuple[int, float, float, int]] = []
    merge_iters: list[int] = []
    annealed_iters: list[int] = []
    stagnant = 0
    stop_reason = "max_iters"
    converged = False

    for it in range(cfg.max_iters):
        total, grads, weight_resid, grad_norm = _state(manifold, kernel, points, weights)
        if not math.isfinite(total):
            raise StallError(f"non-finite energy at iteration {it}")
        support_card = len(support_clusters_raw(manifold, points, cfg.merge_eps))
        rows.append((it, total, grad_norm, support_card))

        if grad_norm < cfg.stop_grad_tol:
            stop_reason = "gradient_tolerance"
            converged = True
            break

        moved = 0.0

        # Position step with Armijo backtracking on the total energy.
        gsq = float(
            sum(geometry.tangent_inner(manifold, g, g) for g in grads)
            if manifold.kind == geometry.HYPERBOLIC
            else (grads * grads).sum()
        )
        position_moved = False
        if gsq > 0.0:
            eta = cfg.step_init
            all_nonfinite = True
            while eta >= STEP_FLOOR:
                trial = _confine(cfg, manifold, _exp_rows(manifold, points, -eta * grads))
                e_trial = _energy_only(manifold, kernel, trial, weights)
                if math.isfinite(e_trial):
                    all_nonfinite = False
                    if e_trial <= total - cfg.armijo_c * eta * gsq or e_trial <= total + ACCEPT_SLACK:
                        moved = max(moved, float(
                            geometry.cross_distances(manifold, points, trial).diagonal().max()
                        ))
                        points = trial
                        total = e_trial
                        position_moved = True
                        break
                eta *= cfg.backtrack_factor
            if not position_moved and all_nonfinite:
                raise StallError(
                    f"step size underflowed {STEP_FLOOR:g} at iteration {it} "
                    "with non-finite energy at every trial step"
                )

        # Weight step: multiplicative update toward constant potential, with
        # exact renormalization; halve the step until energy does not rise.
        if weights.size > 1:
            vals, _, collision = _kernel_matrix(manifold, kernel, points)
            if collision:
                raise StallError(f"atom collision under singular kernel at iteration {it}")
            potentials = vals @ weights
            base = float(weights @ potentials)
            resid = 2.0 * potentials - 2.0 * base
            ws = cfg.weight_step
            for _ in range(30):
                shift = -ws * resid
                shift -= shift.max()
                w_trial = weights * np.exp(shift)
                w_trial /= w_trial.sum()
                e_trial = float(w_trial @ (vals @ w_trial))
                if e_trial <= base + ACCEPT_SLACK:
                    moved = max(moved, float(np.abs(w_trial - weights).max()))
                    weights = w_trial
                    total = e_trial
                    break
                ws *= 0.5

        # Annealing: tangent-space noise, exempt from monotonicity.
        if temp > 1e-15:
            noise = rng.standard_normal(points.shape)
            for i in range(points.shape[0]):
                noise[i] = geometry.project_tangent(manifold, points[i], noise[i])
            points = _confine(cfg, manifold, _exp_rows(manifold, points, temp * noise))
            annealed_iters.append(it)
            temp *= cfg.anneal_decay
            moved = max(moved, temp)

        # Cull weights that decayed to nothing, then merge clusters on cadence.
        if bool((weights < WEIGHT_CULL).any()) and weights.size > 1:
            keep = weights >= WEIGHT_CULL
            if not keep.any():
                keep[int(weights.argmax())] = True
            points, weights = points[keep], weights[keep] / weights[keep].sum()
            moved = max(moved, 1.0)

        if (it + 1) % MERGE_PERIOD == 0 and points.shape[0] > 1:
            clusters = support_clusters_raw(manifold, points, cfg.merge_eps)
            if len(clusters) < points.shape[0]:
                mu = merge_atoms(
                    DiscreteMeasure.from_atoms(manifold, points, weights), cfg.merge_eps
                )
                points, weights = mu.points.copy(), mu.weights.copy()
                merge_iters.append(it)
                moved = max(moved, 1.0)

        stagnant = stagnant + 1 if moved < 1e-15 else 0
        if stagnant >= STAGNANT_LIMIT:
            stop_reason = "stalled"
            break

    final = merge_atoms(
        DiscreteMeasure.from_atoms(manifold, points, weights / weights.sum()),
        cfg.merge_eps,
    )
    total, _, _, grad_norm = _state(manifold, kernel, final.points, final.weights)
    card = len(support_clusters(final, cfg.merge_eps))
    rows.append((rows[-1][0] + 1 if rows else 0, total, grad_norm, card))
    return Trajectory(rows, final, stop_reason, converged, merge_iters, annealed_iters)


def support_clusters_raw(manifold: Manifold, points: np.ndarray, eps: float) -> list[list[int]]:
    if points.shape[0] == 1:
        return [[0]]
    d = geometry.pairwise_distances(manifold, points)
    return _connected_components(d <= eps)


def multi_start(manifold: Manifold, kernel: Kernel, cfg: DescentConfig) -> Trajectory:
    """Best-of-restarts minimization from seeded random initial measures.

    Restart seeds split deterministically from cfg.seed; the trajectory with
    the lowest final energy wins, ties broken by restart index.  Stalls are
    propagated only when every restart stalls.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    best: Trajectory | None = None
    last_error: StallError | None = None
    for index, child in enumerate(children):
        rng = np.random.default_rng(child)
        mu0 = random_measure(manifold, cfg.n_atoms, rng)
        try:
            out = minimize(manifold, kernel, mu0, cfg, rng=rng)
        except StallError as exc:
            last_error = exc
            continue
        out.restart_index = index
        if best is None or out.final_energy < best.final_energy:
            best = out
    if best is None:
        raise last_error if last_error is not None else StallError("no restarts ran")
    return best
