"""Parametric interaction profiles and their short-range classification.

A kernel maps a pairwise distance t >= 0 to an interaction value F(t).
Families follow fixed sign conventions so that every experiment is a
minimization:

  power delta      F(t) = -sign(delta) * t**delta        (delta != 0)
  attrep           F(t) = t**alpha / alpha - t**beta / beta   (alpha > beta)
  cospow           F(t) = |cos t|**p
  table            piecewise-linear interpolation of (t, F) samples

Classification inspects the t -> 0+ behavior: profiles vanishing like
-C * t**a with a > 2 are weakly repulsive (mild short-range repulsion that
permits clustered minimizers); profiles blowing up like +C * t**a with
a < 0 are strongly repulsive (singular, spreading minimizers out).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

WEAKLY_REPULSIVE = "weakly_repulsive"
STRONGLY_REPULSIVE = "strongly_repulsive"
OTHER = "other"

DEFAULT_FIT_RANGE = (1e-3, 1e-1)


class KernelError(ValueError):
    """Bad kernel parameters or evaluation outside the supported domain."""


@dataclass(frozen=True)
class RepulsionClass:
    """Short-range behavior summary: F(t) ~ -+ coefficient * t**exponent.

    kind is "weakly_repulsive" (exponent > 2, F -> 0-), "strongly_repulsive"
    (exponent < 0, F -> +inf) or "other".  decreasing_radius is the largest
    verified r with F decreasing on (0, r).
    """

    kind: str
    coefficient: float
    exponent: float
    decreasing_radius: float


class Kernel:
    """Base interaction profile; subclasses define the actual shape."""

    analytic = True

    def evaluate(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def value_at_zero(self) -> float:
        return float(self.evaluate(0.0))

    def slope_bounded_at_zero(self) -> bool:
        """Whether F' stays bounded as t -> 0+ (forces finite at contact)."""
        raise NotImplementedError

    def classify(self, fit_range=DEFAULT_FIT_RANGE) -> RepulsionClass:
        raise NotImplementedError

    def spec_string(self) -> str:
        raise NotImplementedError


def _as_array(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise KernelError("kernel argument must be >= 0")
    return arr


def _scalar_like(t, arr):
    return float(arr) if np.isscalar(t) or np.ndim(t) == 0 else arr


def _classify_power(coefficient: float, exponent: float, decreasing_radius: float, negative_near_zero: bool) -> RepulsionClass:
    if negative_near_zero and exponent > 2 and coefficient > 0:
        kind = WEAKLY_REPULSIVE
    elif not negative_near_zero and exponent < 0 and coefficient > 0:
        kind = STRONGLY_REPULSIVE
    else:
        kind = OTHER
    return RepulsionClass(kind, coefficient, exponent, decreasing_radius)


@dataclass(frozen=True)
class PowerLaw(Kernel):
    """F(t) = -sign(delta) * t**delta; strictly decreasing for any delta != 0."""

    delta: float

    def __post_init__(self):
        if self.delta == 0:
            raise KernelError("power-law exponent delta must be nonzero")

    def evaluate(self, t):
        arr = _as_array(t)
        sign = -math.copysign(1.0, self.delta)
        if self.delta > 0:
            return _scalar_like(t, sign * arr**self.delta)
        with np.errstate(divide="ignore"):
            out = np.where(arr == 0.0, np.inf, sign * arr ** float(self.delta))
        return _scalar_like(t, out)

    def derivative(self, t):
        arr = _as_array(t)
        if np.any(arr == 0.0):
            raise KernelError("derivative requires t > 0")
        sign = -math.copysign(1.0, self.delta)
        return _scalar_like(t, sign * self.delta * arr ** (self.delta - 1.0))

    def slope_bounded_at_zero(self) -> bool:
        return self.delta >= 1.0

    def classify(self, fit_range=DEFAULT_FIT_RANGE) -> RepulsionClass:
        return _classify_power(1.0, self.delta, math.inf, self.delta > 0)

    def spec_string(self) -> str:
        return f"power:delta={self.delta:g}"


@dataclass(frozen=True)
class AttractiveRepulsive(Kernel):
    """F(t) = t**alpha/alpha - t**beta/beta with alpha > beta.

    Decreasing on (0, 1), increasing past the critical distance t = 1:
    short-range repulsion with long-range confinement.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > self.beta:
            raise KernelError("attractive-repulsive kernels need alpha > beta")
        if self.alpha == 0 or self.beta == 0:
            raise KernelError("exponents must be nonzero")

    def evaluate(self, t):
        arr = _as_array(t)
        with np.errstate(divide="ignore"):
            a = np.where(arr == 0.0, np.inf if self.alpha < 0 else 0.0, arr ** float(self.alpha)) / self.alpha
            b = np.where(arr == 0.0, np.inf if self.beta < 0 else 0.0, arr ** float(self.beta)) / self.beta
        out = a - b
        if self.beta < 0:
            out = np.where(arr == 0.0, np.inf, out)
        return _scalar_like(t, out)

    def derivative(self, t):
        arr = _as_array(t)
        if np.any(arr == 0.0):
            raise KernelError("derivative requires t > 0")
        return _scalar_like(t, arr ** (self.alpha - 1.0) - arr ** (self.beta - 1.0))

    def slope_bounded_at_zero(self) -> bool:
        return self.beta >= 1.0

    def classify(self, fit_range=DEFAULT_FIT_RANGE) -> RepulsionClass:
        # Small-t behavior is dominated by the lower exponent: F ~ -t**beta/beta.
        if self.beta > 0:
            return _classify_power(1.0 / self.beta, self.beta, 1.0, True)
        return _classify_power(-1.0 / self.beta, self.beta, 1.0, False)

    def spec_string(self) -> str:
        return f"attrep:alpha={self.alpha:g},beta={self.beta:g}"


@dataclass(frozen=True)
class CosinePower(Kernel):
    """F(t) = |cos t|**p; bounded, with F(0) = 1."""

    p: float

    def __post_init__(self):
        if not self.p > 0:
            raise KernelError("cosine-power exponent p must be > 0")

    def evaluate(self, t):
        arr = _as_array(t)
        return _scalar_like(t, np.abs(np.cos(arr)) ** self.p)

    def derivative(self, t):
        arr = _as_array(t)
        c = np.cos(arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -self.p * np.sign(c) * np.abs(c) ** (self.p - 1.0) * np.sin(arr)
        if self.p < 1.0:
            out = np.where(c == 0.0, np.nan, out)
        return _scalar_like(t, out)

    def slope_bounded_at_zero(self) -> bool:
        return True

    def classify(self, fit_range=DEFAULT_FIT_RANGE) -> RepulsionClass:
        # F(0) = 1, so no -C t**a vanishing form exists; decreasing until pi/2.
        return RepulsionClass(OTHER, 0.0, 0.0, math.pi / 2)

    def spec_string(self) -> str:
        return f"cospow:p={self.p:g}"


class Tabulated(Kernel):
    """Piecewise-linear profile through strictly increasing (t, F) samples.

    Evaluation outside the sampled range is rejected; derivatives are not
    provided, so tabulated kernels support certificates but not descent.
    """

    analytic = False

    def __init__(self, ts, values):
        ts = np.asarray(ts, dtype=float)
        values = np.asarray(values, dtype=float)
        if ts.ndim != 1 or ts.shape != values.shape or ts.size < 2:
            raise KernelError("need matching 1-d sample arrays with >= 2 rows")
        if np.any(ts < 0) or np.any(np.diff(ts) <= 0):
            raise KernelError("sample abscissae must be >= 0 and strictly increasing")
        self.ts = ts
        self.values = values

    def evaluate(self, t):
        arr = _as_array(t)
        if np.any(arr < self.ts[0]) or np.any(arr > self.ts[-1]):
            raise KernelError(
                f"query outside sample range [{self.ts[0]:g}, {self.ts[-1]:g}]"
            )
        return _scalar_like(t, np.interp(arr, self.ts, self.values))

    def derivative(self, t):
        raise NotImplementedError("tabulated kernels have no analytic derivative")

    def value_at_zero(self) -> float:
        if self.ts[0] > 0:
            raise KernelError("tabulated kernel has no sample at t = 0")
        return float(self.values[0])

    def slope_bounded_at_zero(self) -> bool:
        return True

    def classify(self, fit_range=DEFAULT_FIT_RANGE) -> RepulsionClass:
        lo, hi = fit_range
        mask = (self.ts >= lo) & (self.ts <= hi) & (self.ts > 0)
        if int(((self.ts > 0) & (self.ts < 0.1) & mask).sum()) < 8:
            raise KernelError("fit range must contain >= 8 samples with t < 0.1")
        ts = self.ts[mask]
        vals = self.values[mask]
        signs = np.sign(vals[np.abs(vals) > 0])
        radius = self._decreasing_radius()
        if signs.size == 0 or not (np.all(signs > 0) or np.all(signs < 0)):
            return RepulsionClass(OTHER, 0.0, 0.0, radius)
        slope, intercept = np.polyfit(np.log(ts), np.log(np.abs(vals)), 1)
        coefficient = math.exp(intercept)
        return _classify_power(coefficient, float(slope), radius, bool(signs[0] < 0))

    def _decreasing_radius(self) -> float:
        diffs = np.diff(self.values)
        for i, d in enumerate(diffs):
            if d >= 0:
                return float(self.ts[i]) if i > 0 else float(self.ts[0])
        return float(self.ts[-1])

    def spec_string(self) -> str:
        return "table:<inline>"


def eval_kernel(kernel: Kernel, t):
    """Kernel value(s) at distance(s) t >= 0."""
    return kernel.evaluate(t)


def deriv_kernel(kernel: Kernel, t):
    """Analytic derivative at t > 0; tabulated kernels are rejected."""
    return kernel.derivative(t)


def classify(kernel: Kernel, fit_range=DEFAULT_FIT_RANGE) -> RepulsionClass:
    """Short-range repulsion class of a kernel.

    Parametric families are classified from their exponents; tabulated ones
    by a least-squares line fit of log|F| against log t over fit_range.
    """
    return kernel.classify(fit_range)


def from_spec(spec: str) -> Kernel:
    """Build a kernel from a CLI spec string.

    Formats: "power:delta=3", "attrep:alpha=4,beta=2", "cospow:p=2",
    "table:path=<csv>" with CSV columns t,F.
    """
    head, _, rest = spec.strip().partition(":")
    kv = {}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise KernelError(f"bad kernel spec item {item!r} in {spec!r}")
            kv[key.strip()] = value.strip()
    expected = {"power": ("delta",), "attrep": ("alpha", "beta"), "cospow": ("p",), "table": ("path",)}
    if head not in expected:
        raise KernelError(f"unknown kernel family {head!r}")
    missing = [k for k in expected[head] if k not in kv]
    if missing:
        raise KernelError(f"kernel spec {spec!r} missing key {missing[0]}")
    extra = sorted(set(kv) - set(expected[head]))
    if extra:
        raise KernelError(f"unknown kernel spec keys {extra} in {spec!r}")
    try:
        if head == "power":
            return PowerLaw(delta=float(kv["delta"]))
        if head == "attrep":
            return AttractiveRepulsive(alpha=float(kv["alpha"]), beta=float(kv["beta"]))
        if head == "cospow":
            return CosinePower(p=float(kv["p"]))
        return load_table(kv["path"])
    except ValueError as exc:
        raise KernelError(f"bad kernel spec {spec!r}: {exc}") from exc


def load_table(path: str) -> Tabulated:
    ts, values = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() == "t":
                continue
            ts.append(float(row[0]))
            values.append(float(row[1]))
    return Tabulated(ts, values)
