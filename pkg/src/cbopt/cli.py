"""Command-line pipeline: synth -> ingest -> solve / frontier / diagnose.

Every command reads an optional flat ``key=value`` config file (``#``
comments allowed); explicit flags override file values, which override
built-in defaults.  The resolved config is echoed into the command's
``*_meta.txt`` artifact.  Execution-only knobs (``--out``, ``--workers``,
``--config``) are deliberately excluded from that echo so artifacts stay
byte-identical across worker counts and output locations.

All artifacts land inside the ``--out`` directory; nothing is written
anywhere else.  Exit status is 0 on success, 1 on any library error, and
2 on bad command lines (argparse).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baseline, diagnostics, market, objectives, projections
from .core import CboParams, NoiseMode, init_ensemble, run, write_trace_csv
from .errors import CbOptError, ConfigurationError
from .metaio import fmt_float, fmt_vector, parse_metadata, write_metadata

# (config key, argparse dest, caster, default)
_SOLVER_OPTS = [
    ("lambda", "lam", float, 1.0),
    ("sigma", "sigma", float, 0.5),
    ("beta", "beta", float, 1000.0),
    ("h", "h", float, 0.1),
    ("particles", "particles", int, 100),
    ("max_iters", "max_iters", int, 10_000),
    ("tol", "tol", float, 1e-8),
    ("noise", "noise", str, "common"),
    ("seed", "seed", int, 0),
    ("init_std", "init_std", float, 1.0),
]

_PROBLEM_OPTS = [
    ("objective", "objective", str, "sharpe"),
    ("stats", "stats", str, None),
    ("dim", "dim", int, None),
    ("projector", "projector", str, None),
    ("scale", "scale", float, 1.0),
    ("rf", "rf", float, None),
]


def _cast(key: str, raw: str, caster):
    try:
        return caster(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"config value {key}={raw!r}: {exc}") from exc


def _resolve(args, spec) -> dict:
    """flags > config file > defaults, keyed by config-key name."""
    from_file: dict[str, str] = {}
    if getattr(args, "config", None):
        from_file = parse_metadata(Path(args.config).read_text())
    resolved = {}
    for key, dest, caster, default in spec:
        flag_value = getattr(args, dest, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in from_file:
            resolved[key] = _cast(key, from_file[key], caster)
        else:
            resolved[key] = default
    return resolved


def _echo(cfg: dict, spec) -> dict:
    """Resolved config in spec order, for the metadata artifact."""
    out = {}
    for key, _dest, _caster, _default in spec:
        value = cfg[key]
        if value is None:
            continue
        out[key] = value
    return out


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _workers(args) -> int:
    w = getattr(args, "workers", None)
    return 1 if w is None else max(1, int(w))


def _derived_seeds(seed: int, n: int) -> list[int]:
    """Stable per-purpose integer seeds derived from the user seed."""
    state = np.random.SeedSequence(seed).generate_state(n, np.uint64)
    return [int(s) for s in state]


def _cbo_params(cfg: dict, seed: int) -> CboParams:
    return CboParams(
        lam=cfg["lambda"],
        sigma=cfg["sigma"],
        beta=cfg["beta"],
        h=cfg["h"],
        n_particles=cfg["particles"],
        noise_mode=NoiseMode(cfg["noise"]),
        seed=seed,
        max_iters=cfg["max_iters"],
        residual_tol=cfg["tol"],
    )


def _load_stats(cfg: dict) -> objectives.MarketStats:
    if not cfg.get("stats"):
        raise ConfigurationError("this objective needs --stats (see the ingest command)")
    stats = market.parse_stats(Path(cfg["stats"]).read_text())
    if cfg.get("rf") is not None:
        stats = stats.with_rf(cfg["rf"])
    return stats


def _build_problem(cfg: dict):
    """Return (objective, projector, stats-or-None) from a resolved config."""
    kind = cfg["objective"]
    stats = None
    if kind == "sharpe":
        stats = _load_stats(cfg)
        dim = stats.dim
    else:
        dim = cfg.get("dim")
        if dim is None:
            raise ConfigurationError(f"objective {kind!r} needs --dim")
    projector = (
        projections.parse_projector(cfg["projector"])
        if cfg.get("projector")
        else projections.simplex(dim)
    )
    if projector.dim != dim:
        raise ConfigurationError(
            f"projector dimension {projector.dim} does not match problem dimension {dim}"
        )
    anchor = projector.project(np.zeros(dim))
    if kind == "sharpe":
        objective = objectives.neg_sharpe(stats)
    elif kind == "sphere":
        objective = objectives.sphere(anchor)
    elif kind == "rastrigin":
        objective = objectives.rastrigin(anchor, cfg["scale"])
    else:
        raise ConfigurationError(f"unknown objective {kind!r}")
    return objective, projector, stats


def _maybe_reference(cfg, objective, projector, workers):
    if cfg["reference"] == "none":
        return None
    if isinstance(projector, projections.SimplexProjector) and projector.dim <= baseline.MAX_GRID_DIM:
        return baseline.grid_search_simplex(
            objective, projector.dim, cfg["grid_step"], workers=workers
        )
    return None


# ----------------------------------------------------------------- commands

_SYNTH_OPTS = [
    ("assets", "assets", int, 6),
    ("rows", "rows", int, 500),
    ("seed", "seed", int, 0),
]


def cmd_synth(args) -> int:
    cfg = _resolve(args, _SYNTH_OPTS)
    out = _out_dir(args)
    mu, sigma = market.demo_market(cfg["assets"])
    series = market.synthetic_market(cfg["seed"], cfg["assets"], cfg["rows"], mu, sigma)
    path = out / "prices.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write(market.format_prices(series))
    print(f"synth: wrote {series.n_periods} rows x {series.dim} assets to {path}")
    return 0


_INGEST_OPTS = [("rf", "rf", float, 0.0)]


def cmd_ingest(args) -> int:
    cfg = _resolve(args, _INGEST_OPTS)
    out = _out_dir(args)
    series = market.parse_prices(Path(args.prices).read_text())
    returns = market.log_returns(series)
    stats = market.estimate_stats(returns, rf=cfg["rf"])
    with open(out / "stats.txt", "w", newline="\n") as fh:
        fh.write(market.format_stats(stats))
    print(
        f"ingest: {stats.dim} assets, {series.n_periods} price rows, "
        f"{returns.returns.shape[0]} return rows -> {out / 'stats.txt'}"
    )
    return 0


_SOLVE_OPTS = _SOLVER_OPTS + _PROBLEM_OPTS + [
    ("reference", "reference", str, "auto"),
    ("grid_step", "grid_step", float, 0.01),
    ("thin", "thin", int, 1),
]


def cmd_solve(args) -> int:
    cfg = _resolve(args, _SOLVE_OPTS)
    out = _out_dir(args)
    workers = _workers(args)
    objective, projector, stats = _build_problem(cfg)
    (solve_seed,) = _derived_seeds(cfg["seed"], 1)
    params = _cbo_params(cfg, solve_seed)
    report = diagnostics.check_params(params)

    result = run(objective, projector, params, init_std=cfg["init_std"], thin=cfg["thin"])
    reference = _maybe_reference(cfg, objective, projector, workers)
    if reference is not None:
        errors = diagnostics.error_trace(result.trace, reference)
        diagnostics.write_error_csv(result.trace.iterations(), errors, out / "error_trace.csv")

    write_trace_csv(result.trace, out / "trace.csv")

    meta = {"command": "solve"}
    meta.update(_echo(cfg, _SOLVE_OPTS))
    meta["objective_id"] = objective.descriptor
    meta["projector_id"] = projector.describe()
    if reference is not None:
        meta.update(reference.to_metadata())
    write_metadata(out / "solve_meta.txt", meta)

    final = result.trace.records[-1]
    result_items = {
        "weights": fmt_vector(result.point),
        "value": fmt_float(objective(result.point)),
        "iterations": final.iteration,
        "residual": fmt_float(final.residual),
        "best_value": fmt_float(result.best_value),
        "best_weights": fmt_vector(result.best_point),
    }
    if stats is not None:
        ret, risk, sharpe = objectives.sharpe_components(stats, result.point)
        result_items.update(
            {"ret": fmt_float(ret), "risk": fmt_float(risk), "sharpe": fmt_float(sharpe)}
        )
    write_metadata(out / "result.txt", result_items)

    summary = diagnostics.summary_text(report)
    with open(out / "solve_summary.txt", "w", newline="\n") as fh:
        fh.write(summary)

    print(summary, end="")
    print(f"solve: weights=[{fmt_vector(result.point)}] value={fmt_float(objective(result.point))}")
    print(f"solve: stopped at iteration {final.iteration} residual={fmt_float(final.residual)}")
    return 0


_FRONTIER_OPTS = _SOLVER_OPTS + [
    ("stats", "stats", str, None),
    ("rf", "rf", float, None),
    ("samples", "samples", int, 10_000),
    ("svg", "svg", bool, False),
]


def cmd_frontier(args) -> int:
    cfg = _resolve(args, _FRONTIER_OPTS)
    out = _out_dir(args)
    workers = _workers(args)
    stats = _load_stats(cfg)
    projector = projections.simplex(stats.dim)
    objective = objectives.neg_sharpe(stats)
    cbo_seed, cloud_seed = _derived_seeds(cfg["seed"], 2)

    cloud = market.sample_frontier(stats, cfg["samples"], cloud_seed, workers=workers)
    market.write_frontier_csv(cloud, out / "frontier.csv")

    params = _cbo_params(cfg, cbo_seed)
    result = run(objective, projector, params, init_std=cfg["init_std"])
    ret, risk, sharpe = objectives.sharpe_components(stats, result.point)
    intercept, slope = market.cml(stats.rf, (risk, ret))

    write_metadata(
        out / "tangency.txt",
        {
            "weights": fmt_vector(result.point),
            "ret": fmt_float(ret),
            "risk": fmt_float(risk),
            "sharpe": fmt_float(sharpe),
        },
    )
    write_metadata(
        out / "cml.txt",
        {
            "intercept": fmt_float(intercept),
            "slope": fmt_float(slope),
            "tangency_risk": fmt_float(risk),
            "tangency_ret": fmt_float(ret),
        },
    )
    meta = {"command": "frontier"}
    meta.update(_echo(cfg, _FRONTIER_OPTS))
    meta["objective_id"] = objective.descriptor
    meta["projector_id"] = projector.describe()
    write_metadata(out / "frontier_meta.txt", meta)

    if cfg["svg"]:
        with open(out / "frontier.svg", "w", newline="\n") as fh:
            fh.write(_frontier_svg(cloud, intercept, slope, (risk, ret)))

    print(
        f"frontier: {len(cloud)} samples; tangency sharpe={fmt_float(sharpe)} "
        f"cml slope={fmt_float(slope)} intercept={fmt_float(intercept)}"
    )
    return 0


_DIAGNOSE_OPTS = _SOLVER_OPTS + _PROBLEM_OPTS + [
    ("runs", "runs", int, 100),
    ("horizon", "horizon", int, 50),
    ("betas", "betas", str, "0,1,10,100,1000"),
    ("reference", "reference", str, "auto"),
    ("grid_step", "grid_step", float, 0.01),
]


def cmd_diagnose(args) -> int:
    cfg = _resolve(args, _DIAGNOSE_OPTS)
    out = _out_dir(args)
    workers = _workers(args)
    objective, projector, _stats = _build_problem(cfg)
    decay_seed, laplace_seed, solve_seed = _derived_seeds(cfg["seed"], 3)
    params = _cbo_params(cfg, solve_seed)
    report = diagnostics.check_params(params)

    decay = diagnostics.decay_experiment(
        objective,
        projector,
        params,
        runs=cfg["runs"],
        horizon=cfg["horizon"],
        seed=decay_seed,
        init_std=cfg["init_std"],
        workers=workers,
    )
    decay.write_csv(out / "decay.csv")

    betas = [float(tok) for tok in str(cfg["betas"]).split(",") if tok.strip() != ""]
    ensemble = init_ensemble(
        projector.dim,
        params,
        None,
        cfg["init_std"],
        projector,
        objective,
        seed=laplace_seed,
    )
    points = diagnostics.laplace_sweep(ensemble, betas)
    diagnostics.write_laplace_csv(points, out / "laplace.csv")

    reference = _maybe_reference(cfg, objective, projector, workers)
    if reference is not None:
        result = run(objective, projector, params, init_std=cfg["init_std"])
        errors = diagnostics.error_trace(result.trace, reference)
        diagnostics.write_error_csv(
            result.trace.iterations(), errors, out / "diag_error_trace.csv"
        )

    summary_lines = [diagnostics.summary_text(report).rstrip("\n")]
    summary_lines.append(f"decay_applicable={'true' if decay.applicable else 'false'}")
    summary_lines.append(
        f"decay_pairwise_within_bound={'true' if bool(decay.pairwise_ok.all()) else 'false'}"
    )
    summary_lines.append(
        f"decay_consensus_within_bound={'true' if bool(decay.consensus_ok.all()) else 'false'}"
    )
    summary_lines.append("consensus_bound_indexing=ensemble_size")
    summary_lines.append(f"laplace_final_gap={fmt_float(points[-1].gap)}")
    summary = "\n".join(summary_lines) + "\n"
    with open(out / "diagnose_summary.txt", "w", newline="\n") as fh:
        fh.write(summary)

    meta = {"command": "diagnose"}
    meta.update(_echo(cfg, _DIAGNOSE_OPTS))
    meta["objective_id"] = objective.descriptor
    meta["projector_id"] = projector.describe()
    if reference is not None:
        meta.update(reference.to_metadata())
    write_metadata(out / "diagnose_meta.txt", meta)

    print(summary, end="")
    return 0


def _frontier_svg(cloud, intercept, slope, tangency) -> str:
    """Minimal self-contained scatter of the sampled cloud plus the CML.

    Pure text, no drawing dependency; coordinates are emitted with
    deterministic formatting.
    """
    width, height, pad = 640.0, 440.0, 50.0
    t_risk, t_ret = float(tangency[0]), float(tangency[1])
    risks = np.concatenate([cloud.risk, [t_risk, 0.0]])
    rets = np.concatenate([cloud.ret, [t_ret, intercept]])
    x_lo, x_hi = float(risks.min()), float(risks.max())
    y_lo, y_hi = float(rets.min()), float(rets.max())
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    x_lo -= 0.05 * x_span
    x_hi += 0.05 * x_span
    y_lo -= 0.05 * y_span
    y_hi += 0.05 * y_span

    def sx(x: float) -> str:
        return f"{pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad):.2f}"

    def sy(y: float) -> str:
        return f"{height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad):.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<line x1="{pad:.0f}" y1="{height - pad:.0f}" x2="{width - pad:.0f}" '
        f'y2="{height - pad:.0f}" stroke="black"/>',
        f'<line x1="{pad:.0f}" y1="{pad:.0f}" x2="{pad:.0f}" y2="{height - pad:.0f}" '
        'stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12:.0f}" font-size="13" '
        'text-anchor="middle">risk</text>',
        f'<text x="14" y="{height / 2:.0f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 14 {height / 2:.0f})">return</text>',
    ]
    for i in range(len(cloud)):
        parts.append(
            f'<circle cx="{sx(float(cloud.risk[i]))}" cy="{sy(float(cloud.ret[i]))}" '
            'r="1.5" fill="#4477aa" fill-opacity="0.45"/>'
        )
    y_at_hi = intercept + slope * x_hi
    parts.append(
        f'<line x1="{sx(0.0)}" y1="{sy(intercept)}" x2="{sx(x_hi)}" y2="{sy(y_at_hi)}" '
        'stroke="#228833" stroke-width="1.5"/>'
    )
    tx, ty = float(sx(t_risk)), float(sy(t_ret))
    star = []
    for k in range(10):
        radius = 9.0 if k % 2 == 0 else 3.8
        angle = -np.pi / 2 + k * np.pi / 5
        star.append(f"{tx + radius * np.cos(angle):.2f},{ty + radius * np.sin(angle):.2f}")
    parts.append(f'<polygon points="{" ".join(star)}" fill="#cc3311"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ------------------------------------------------------------------- parser

def _add_common(sp) -> None:
    sp.add_argument("--config", help="flat key=value config file")
    sp.add_argument("--out", help="output directory (default: current)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int, help="worker threads (results do not depend on this)")


def _add_solver(sp) -> None:
    sp.add_argument("--lambda", dest="lam", type=float, help="drift rate toward consensus")
    sp.add_argument("--sigma", type=float, help="noise intensity")
    sp.add_argument("--beta", type=float, help="consensus concentration parameter")
    sp.add_argument("--h", type=float, help="Euler step size")
    sp.add_argument("--particles", type=int, help="ensemble size")
    sp.add_argument("--max-iters", dest="max_iters", type=int)
    sp.add_argument("--tol", type=float, help="residual stopping tolerance")
    sp.add_argument("--noise", choices=["common", "independent"])
    sp.add_argument("--init-std", dest="init_std", type=float)


def _add_problem(sp) -> None:
    sp.add_argument("--objective", choices=["sharpe", "sphere", "rastrigin"])
    sp.add_argument("--stats", help="stats file from the ingest command")
    sp.add_argument("--dim", type=int, help="dimension for non-market objectives")
    sp.add_argument("--projector", help="simplex:d | box:lo,hi | ball:center,radius")
    sp.add_argument("--scale", type=float, help="rastrigin coordinate scale")
    sp.add_argument("--rf", type=float, help="risk-free rate override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbopt",
        description="Consensus ensemble optimization pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a synthetic prices CSV")
    _add_common(sp)
    sp.add_argument("--assets", type=int)
    sp.add_argument("--rows", type=int)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("ingest", help="prices CSV -> return stats artifact")
    _add_common(sp)
    sp.add_argument("prices", help="path to the prices CSV")
    sp.add_argument("--rf", type=float, help="risk-free rate to store")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("solve", help="run the consensus solver")
    _add_common(sp)
    _add_solver(sp)
    _add_problem(sp)
    sp.add_argument("--reference", choices=["auto", "none"])
    sp.add_argument("--grid-step", dest="grid_step", type=float)
    sp.add_argument("--thin", type=int, help="trace thinning stride")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("frontier", help="sample portfolios and fit the CML")
    _add_common(sp)
    _add_solver(sp)
    sp.add_argument("--stats", help="stats file from the ingest command")
    sp.add_argument("--rf", type=float, help="risk-free rate override")
    sp.add_argument("--samples", type=int, help="number of sampled portfolios")
    sp.add_argument("--svg", action="store_const", const=True, help="emit frontier.svg")
    sp.set_defaults(func=cmd_frontier)

    sp = sub.add_parser("diagnose", help="parameter checks and decay reports")
    _add_common(sp)
    _add_solver(sp)
    _add_problem(sp)
    sp.add_argument("--runs", type=int, help="independent decay trajectories")
    sp.add_argument("--horizon", type=int, help="iterations per trajectory")
    sp.add_argument("--betas", help="comma-separated ascending betas")
    sp.add_argument("--reference", choices=["auto", "none"])
    sp.add_argument("--grid-step", dest="grid_step", type=float)
    sp.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CbOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
