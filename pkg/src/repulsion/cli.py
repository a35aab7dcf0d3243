"""Batch experiment runner: minimize, certify, sweep, dinf, plot.

Exit codes: 0 success, 1 certificate failure, 2 configuration or input
error, 3 descent stall.  Output files are written to a temporary name and
renamed into place, so failures never leave partial artifacts.  Setting
REPULSION_CERTIFIED=1 pins the deterministic reduction mode (the default
evaluation path is already sequential and deterministic; the flag is echoed
in summaries so runs are auditable).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import certify as certify_mod
from . import descent as descent_mod
from . import geometry, kernels, measures
from .geometry import GeometryError, Manifold
from .kernels import KernelError
from .measures import DiscreteMeasure, MeasureError

EXIT_OK = 0
EXIT_CERT_FAIL = 1
EXIT_CONFIG = 2
EXIT_STALL = 3


class ConfigError(ValueError):
    pass


def _write_atomic(path: str, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def certified_mode() -> bool:
    return os.environ.get("REPULSION_CERTIFIED", "") == "1"


# ---------------------------------------------------------------------------
# Option merging: command-line flags override an optional key=value file;
# unknown keys in the file are rejected before any computation runs.


def _load_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out


def _merge_config(args: argparse.Namespace, argv: list[str]) -> dict:
    merged = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func")}
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        known = set(merged)
        for key, value in file_values.items():
            attr = key.replace("-", "_")
            if attr not in known:
                raise ConfigError(f"unknown config key {key!r}")
            # Flags given on the command line win over the file.
            if _flag_given(argv, key):
                continue
            merged[attr] = _coerce_like(merged[attr], value, key)
    return merged


def _flag_given(argv: list[str], key: str) -> bool:
    flag = "--" + key.replace("_", "-")
    return any(tok == flag or tok.startswith(flag + "=") for tok in argv)


def _coerce_like(current, value: str, key: str):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {value!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def _descent_config(opts: dict) -> descent_mod.DescentConfig:
    return descent_mod.DescentConfig(
        n_atoms=opts["atoms"],
        max_iters=opts["max_iters"],
        step_init=opts["step_init"],
        backtrack_factor=opts["backtrack_factor"],
        armijo_c=opts["armijo_c"],
        weight_step=opts["weight_step"],
        merge_eps=opts["merge_eps"],
        anneal_temp0=opts["anneal_temp0"],
        anneal_decay=opts["anneal_decay"],
        stop_grad_tol=opts["stop_grad_tol"],
        seed=opts["seed"],
        restarts=opts["restarts"],
        confine_radius=opts["confine_radius"] if opts["confine_radius"] > 0 else None,
    )


def _require(opts: dict, key: str):
    if opts.get(key) in (None, ""):
        raise ConfigError(f"missing required option: {key}")
    return opts[key]


def _trajectory_csv(trajectory: descent_mod.Trajectory) -> str:
    lines = ["iter,energy,grad_norm,support_card"]
    for it, e, g, card in trajectory.iterates:
        lines.append(f"{it},{_fmt(e)},{_fmt(g)},{card}")
    return "\n".join(lines) + "\n"


def _measure_csv_text(mu: DiscreteMeasure) -> str:
    lines = [f"# manifold={mu.manifold.spec_string()}"]
    lines.append(",".join(["w"] + [f"x{i + 1}" for i in range(mu.points.shape[1])]))
    for w, row in zip(mu.weights, mu.points):
        lines.append(",".join([_fmt(w)] + [_fmt(c) for c in row]))
    return "\n".join(lines) + "\n"


def cmd_minimize(opts: dict) -> int:
    manifold = Manifold.parse(_require(opts, "manifold"))
    kernel = kernels.from_spec(_require(opts, "kernel"))
    cfg = _descent_config(opts)
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)
    try:
        trajectory = descent_mod.multi_start(manifold, kernel, cfg)
    except descent_mod.StallError as exc:
        print(f"stall: {exc}", file=sys.stderr)
        return EXIT_STALL
    final = trajectory.final
    _write_atomic(os.path.join(out_dir, "final_measure.csv"), _measure_csv_text(final))
    _write_atomic(os.path.join(out_dir, "trajectory.csv"), _trajectory_csv(trajectory))
    card = len(measures.support_clusters(final, cfg.merge_eps))
    summary = {
        "final_energy": trajectory.final_energy,
        "support_card": card,
        "n_atoms_final": final.n_atoms,
        "stop_reason": trajectory.stop_reason,
        "converged": trajectory.converged,
        "restart_index": trajectory.restart_index,
        "seed": cfg.seed,
        "certified": certified_mode(),
        "config": {k: v for k, v in opts.items() if k != "out"},
    }
    _write_atomic(
        os.path.join(out_dir, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    print(f"energy={_fmt(trajectory.final_energy)} support_card={card}")
    return EXIT_OK


def cmd_certify(opts: dict) -> int:
    path = _require(opts, "measure")
    try:
        mu = measures.read_measure_csv(path)
    except (OSError, ValueError) as exc:
        print(f"cannot read measure {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    kernel = kernels.from_spec(_require(opts, "kernel"))
    manifold = mu.manifold
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)

    reports = [
        certify_mod.constant_potential_check(manifold, kernel, mu, rel_tol=opts["rel_tol"]),
        certify_mod.second_variation_check(
            manifold,
            kernel,
            mu,
            ball_radius=opts["ball_radius"] if opts["ball_radius"] > 0 else None,
            n_samples=opts["n_samples"],
            seed=opts["seed"],
            tol=opts["tol"],
        ),
    ]
    if kernels.classify(kernel).kind == kernels.WEAKLY_REPULSIVE:
        reports.append(
            certify_mod.sqrt_triangle_check(
                manifold, kernel, mu,
                r0=opts["r0"] if opts["r0"] > 0 else None,
                tol=opts["tol"],
            )
        )
    for report in reports:
        _write_atomic(
            os.path.join(out_dir, f"certificate_{report.condition}.json"),
            report.to_json() + "\n",
        )
    scales = sorted({0.25 * float(geometry.pairwise_distances(manifold, mu.points).max() or 1.0),
                     1e-2, 1e-3, 1e-4}, reverse=True)
    rows = certify_mod.discreteness_report(mu, [s for s in scales if s > 0])
    _write_atomic(
        os.path.join(out_dir, "discreteness_report.json"),
        json.dumps(
            {
                "rows": [{"eps": e, "cluster_count": c, "max_cluster_diameter": dm} for e, c, dm in rows],
                "discrete_at": certify_mod.discrete_resolution(rows),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )

    failed = [r for r in reports if not r.passed]
    for report in reports:
        status = "PASS" if report.passed else "FAIL"
        print(f"{report.condition}: {status} (worst_margin={_fmt(report.worst_margin)})")
    if failed:
        print(f"failed: {', '.join(r.condition for r in failed)}", file=sys.stderr)
        return EXIT_CERT_FAIL
    return EXIT_OK


def cmd_sweep(opts: dict) -> int:
    manifold = Manifold.parse(_require(opts, "manifold"))
    deltas = [float(tok) for tok in str(_require(opts, "deltas")).split(",") if tok.strip()]
    if not deltas:
        raise ConfigError("missing required option: deltas")
    out_dir = opts["out"]
    os.makedirs(out_dir, exist_ok=True)
    lines = ["delta,final_energy,support_card,max_cluster_diameter,status"]
    for delta in deltas:
        kernel = kernels.PowerLaw(delta=delta)
        cfg = _descent_config(opts)
        try:
            trajectory = descent_mod.multi_start(manifold, kernel, cfg)
        except descent_mod.StallError as exc:
            print(f"delta={delta:g}: stall: {exc}", file=sys.stderr)
            lines.append(f"{_fmt(delta)},nan,0,nan,stalled")
            continue
        final = trajectory.final
        rows = certify_mod.discreteness_report(final, [cfg.merge_eps])
        _, card, diam = rows[0]
        lines.append(
            f"{_fmt(delta)},{_fmt(trajectory.final_energy)},{card},{_fmt(diam)},ok"
        )
        _write_atomic(
            os.path.join(out_dir, f"sweep_delta_{delta:g}.csv"), _measure_csv_text(final)
        )
        print(f"delta={delta:g}: energy={_fmt(trajectory.final_energy)} support_card={card}")
    _write_atomic(os.path.join(out_dir, "phase.csv"), "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_dinf(opts: dict) -> int:
    try:
        mu = measures.read_measure_csv(_require(opts, "measure_a"))
        nu = measures.read_measure_csv(_require(opts, "measure_b"))
    except (OSError, ValueError) as exc:
        print(f"cannot read measure: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if mu.manifold != nu.manifold:
        print("manifold mismatch between the two measures", file=sys.stderr)
        return EXIT_CONFIG
    print(_fmt(measures.d_infinity(mu, nu)))
    return EXIT_OK


def cmd_plot(opts: dict) -> int:
    path = _require(opts, "measure")
    try:
        mu = measures.read_measure_csv(path)
    except (OSError, ValueError) as exc:
        print(f"cannot read measure {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        svg = render_svg(mu)
    except ValueError as exc:
        print(f"cannot plot: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_atomic(_require(opts, "out_svg"), svg)
    return EXIT_OK


def render_svg(mu: DiscreteMeasure) -> str:
    """Deterministic 800x800 SVG scatter of a measure; marker area ~ weight.

    Supports the circle (ambient 2-d unit vectors), the 2-sphere via
    orthographic projection onto the first two coordinates, and the plane.
    """
    m = mu.manifold
    pts = mu.points
    if m.kind == geometry.SPHERE and m.dim in (1, 2):
        xy = pts[:, :2]
        lo, hi = -1.1, 1.1
        frame = '<circle cx="400.000" cy="400.000" r="363.636" fill="none" stroke="#888888" stroke-width="1"/>'
    elif m.kind == geometry.EUCLIDEAN and m.dim == 2:
        xy = pts
        span = max(float(np.abs(xy).max()), 1e-9) * 1.1
        lo, hi = -span, span
        frame = ""
    else:
        raise ValueError(f"unsupported manifold for plotting: {m.spec_string()}")

    def sx(v: float) -> str:
        return f"{(v - lo) / (hi - lo) * 800.0:.3f}"

    def sy(v: float) -> str:
        return f"{(hi - v) / (hi - lo) * 800.0:.3f}"

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">',
        '<rect width="800" height="800" fill="#ffffff"/>',
    ]
    if frame:
        parts.append(frame)
    for w, row in zip(mu.weights, xy):
        radius = max(2.0, 40.0 * math.sqrt(max(float(w), 0.0)))
        parts.append(
            f'<circle cx="{sx(float(row[0]))}" cy="{sy(float(row[1]))}" '
            f'r="{radius:.3f}" fill="#1f6fb2" fill-opacity="0.75" stroke="#0b3d66" stroke-width="1"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repulsion",
        description="Minimize pairwise interaction energies over discrete measures "
        "on model manifolds and certify necessary conditions for local minimizers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_descent_flags(p):
        p.add_argument("--atoms", type=int, default=40)
        p.add_argument("--max-iters", type=int, default=50000)
        p.add_argument("--step-init", type=float, default=0.1)
        p.add_argument("--backtrack-factor", type=float, default=0.5)
        p.add_argument("--armijo-c", type=float, default=1e-4)
        p.add_argument("--weight-step", type=float, default=0.05)
        p.add_argument("--merge-eps", type=float, default=1e-3)
        p.add_argument("--anneal-temp0", type=float, default=0.0)
        p.add_argument("--anneal-decay", type=float, default=0.95)
        p.add_argument("--stop-grad-tol", type=float, default=1e-9)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=1)
        p.add_argument("--confine-radius", type=float, default=0.0,
                       help="project Euclidean atoms into this ball (0 disables)")
        p.add_argument("--config", help="key=value file; command-line flags win")
        p.add_argument("--out", default=".")

    p = sub.add_parser("minimize", help="multi-start descent to a candidate minimizer")
    p.add_argument("--manifold", help="euclidean:D | sphere:D | hyperbolic:D:K")
    p.add_argument("--kernel", help="power:delta=3 | attrep:alpha=4,beta=2 | cospow:p=2 | table:path=F.csv")
    add_descent_flags(p)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("certify", help="run all applicable certificates on a measure")
    p.add_argument("--measure", help="measure CSV path")
    p.add_argument("--kernel")
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--ball-radius", type=float, default=0.0, help="0 = auto (0.2 * diameter)")
    p.add_argument("--r0", type=float, default=0.0, help="0 = auto")
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="phase sweep over power-law exponents")
    p.add_argument("--manifold", default="sphere:2")
    p.add_argument("--deltas", help="comma-separated exponents, e.g. -1,0.5,1,1.5,3")
    add_descent_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dinf", help="exact bottleneck distance between two measures")
    p.add_argument("measure_a")
    p.add_argument("measure_b")
    p.set_defaults(func=cmd_dinf)

    p = sub.add_parser("plot", help="deterministic SVG scatter of a measure")
    p.add_argument("measure")
    p.add_argument("out_svg")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merge_config(args, argv)
        return args.func(opts)
    except (ConfigError, GeometryError, KernelError, MeasureError,
            descent_mod.DescentConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
