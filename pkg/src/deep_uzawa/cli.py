"""Experiment runner: ``deep-uzawa solve|sweep|oracle|plot``.

Run configurations are flat ``key = value`` files (a TOML subset)::

    problem = "boundary_layer"
    epsilon = 0.1
    method = "RitUz"
    rho = 1.0

Missing keys take per-problem defaults; unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import ast
import dataclasses
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger("deep_uzawa")

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG = 0, 1, 2

PROBLEMS = ("boundary_layer", "lshape", "highdim")
METHOD_NAMES = ("RitUz", "PINNUz", "RitzPenalty", "PinnPenalty", "HardRitz", "HardPinn")

# per-problem defaults; the 1D batch and all L-shape sampling sizes are not
# given by the reference experiments and were chosen here
DEFAULTS = {
    "boundary_layer": dict(epsilon=0.1, method="RitUz", rho=1.0, gamma=2.0, lr=1e-3, depth=5, width=40,
                           batch_interior=256, batch_boundary=2, resample_every=math.inf, lambda_points=2),
    "lshape": dict(epsilon=1e-3, method="PINNUz", rho=1.0, gamma=2.0, lr=1e-4, depth=10, width=40,
                   batch_interior=256, batch_boundary=256, resample_every=10.0, lambda_points=512),
    "highdim": dict(epsilon=1.0, method="RitUz", rho=0.1, gamma=10.0, lr=1e-3, depth=5, width=40,
                    batch_interior=1024, batch_boundary=2048, resample_every=10.0, lambda_points=2048),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "boundary_layer"
    dimension: int = 4
    epsilon: float = 0.1
    method: str = "RitUz"
    rho: float = 1.0
    gamma: float = 2.0
    n_uz: int = 500
    n_sgd: int = 40
    lr: float = 1e-3
    depth: int = 5
    width: int = 40
    seed: int = 0
    batch_interior: int = 256
    batch_boundary: int = 2
    resample_every: float = math.inf
    lambda_points: int = 2
    out_dir: str = "runs/out"
    reset_optimizer: bool = False
    include_reaction: bool = False
    record_every: int = 100
    divergence_factor: float = 1e3
    plots: bool = True
    fd_nodes: int = 999
    k_max: int = 2000
    extra: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "extra"}


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw  # bare word, e.g. method = RitUz


def parse_text(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            raise ConfigError(f"line {n}: sections are not supported (flat keys only)")
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {n}: duplicate key '{key}'")
        out[key] = _parse_value(raw)
    return out


def _coerce(name: str, value):
    typ = _FIELDS[name].type
    try:
        if typ == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if typ == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if typ == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {typ}, got {value!r}") from None


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Resolve a config file plus overrides into a validated :class:`RunConfig`."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_text(p.read_text(encoding="utf-8")))
    values.update(overrides or {})
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    problem = str(values.get("problem", "boundary_layer"))
    if problem not in PROBLEMS:
        raise ConfigError(f"problem: must be one of {', '.join(PROBLEMS)}")
    merged = {**DEFAULTS[problem], **values, "problem": problem}
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    def bad(field_name, msg):
        raise ConfigError(f"{field_name}: {msg}")
    if cfg.method not in METHOD_NAMES:
        bad("method", f"must be one of {', '.join(METHOD_NAMES)}")
    if cfg.problem == "highdim" and (cfg.dimension < 2 or cfg.dimension % 2):
        bad("dimension", "must be an even integer >= 2")
    if cfg.method in ("RitUz", "PINNUz") and not cfg.rho > 0:
        bad("rho", "must be > 0 for Uzawa methods")
    if cfg.gamma < 0:
        bad("gamma", "must be >= 0")
    if not cfg.epsilon > 0:
        bad("epsilon", "must be > 0")
    if cfg.method in ("HardRitz", "HardPinn") and cfg.problem != "highdim":
        bad("method", "hard boundary conditioning is only available on the unit ball (highdim)")
    for name in ("n_uz", "depth", "width", "batch_interior", "batch_boundary", "lambda_points",
                 "record_every", "fd_nodes", "k_max"):
        if getattr(cfg, name) < 1:
            bad(name, "must be >= 1")
    if cfg.depth < 2:
        bad("depth", "must be >= 2")
    if cfg.n_sgd < 0:
        bad("n_sgd", "must be >= 0")
    if not cfg.divergence_factor > 1:
        bad("divergence_factor", "must be > 1")
    if not cfg.lr > 0:
        bad("lr", "must be > 0")
    if not cfg.resample_every > 0:
        bad("resample_every", "must be > 0 (or inf)")


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


# running ----------------------------------------------------------------

def build_problem(cfg: RunConfig):
    from .problems import boundary_layer_problem, highdim_problem, lshape_problem
    if cfg.problem == "boundary_layer":
        return boundary_layer_problem(cfg.epsilon)
    if cfg.problem == "lshape":
        return lshape_problem(cfg.epsilon)
    return highdim_problem(cfg.dimension, include_reaction=cfg.include_reaction)


def uzawa_config(cfg: RunConfig):
    from .uzawa import UzawaConfig
    return UzawaConfig(
        method=cfg.method, rho=cfg.rho, gamma=cfg.gamma, n_uz=cfg.n_uz, n_sgd=cfg.n_sgd, lr=cfg.lr,
        seed=cfg.seed, depth=cfg.depth, width=cfg.width, batch_interior=cfg.batch_interior,
        batch_boundary=cfg.batch_boundary, resample_every=cfg.resample_every,
        lambda_points=cfg.lambda_points, reset_optimizer=cfg.reset_optimizer,
        record_every=cfg.record_every, divergence_factor=cfg.divergence_factor)


def advisory(cfg: RunConfig, problem) -> dict:
    """Trace-constant bound and whether the convergence conditions hold."""
    from .problems import NotStarShapedSupported, trace_constant_bound
    sigma = problem.data.epsilon
    try:
        x0 = np.full(problem.domain.dim, 0.5 if problem.domain.kind == "interval" else 0.0)
        tb = trace_constant_bound(problem.domain, x0, sigma, cfg.gamma)
        c_tr, rho_max = tb.c_tr, tb.rho_max
    except NotStarShapedSupported:
        c_tr = rho_max = None
    ritz_ok = pinn_ok = "NA"
    if cfg.method == "RitUz" and rho_max is not None:
        ritz_ok = bool(cfg.rho < rho_max)
    if cfg.method == "PINNUz":
        pinn_ok = bool(2.0 * cfg.gamma - cfg.rho > 2.0)
    return {"trace_constant_bound": c_tr, "admissible_rho_bound": rho_max,
            "ritz_condition_satisfied": ritz_ok, "pinn_condition_satisfied": pinn_ok}


def _jsonable(d: dict) -> dict:
    return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


def _write_state(path: Path, problem, params, model) -> None:
    import torch
    from . import autodiff as ad
    pts = problem.eval_grid.points
    if problem.domain.kind == "ball":
        pts = pts[:4096]
    with torch.no_grad():
        u = ad.value(model(params, torch.as_tensor(pts))).numpy()
    exact = np.asarray(problem.exact(pts))
    cols = [f"x{i}" for i in range(pts.shape[1])] + ["u", "u_exact"]
    np.savetxt(path, np.column_stack([pts, u, exact]), delimiter=",", header=",".join(cols),
               comments="", fmt="%.17g")


def run_experiment(cfg: RunConfig) -> int:
    """Run one configuration and write its outputs into ``cfg.out_dir``."""
    from .network import save_params
    from .uzawa import Trainer, run
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    ucfg = uzawa_config(cfg)
    t0 = time.perf_counter()
    hist = run(ucfg, problem)
    wall = time.perf_counter() - t0
    hist.to_csv(out / "history.csv")
    model = Trainer(ucfg, problem, hist.params).model
    _write_state(out / "final_state.csv", problem, hist.params, model)
    save_params(hist.params, out / "params.bin")
    last = hist.rows[-1] if hist.rows else None
    meta = {
        "config": _jsonable(cfg.to_dict()),
        "advisory": advisory(cfg, problem),
        "wall_seconds": wall,
        "diverged": hist.diverged,
        "final": dataclasses.asdict(last) if last else None,
    }
    meta["final"] and meta["final"].pop("seconds")
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cfg.plots:
        emit_plot([out], "error_vs_step", out / "plots" / "error_vs_step.svg")
        if problem.domain.kind == "interval":
            emit_plot([out], "state_vs_x", out / "plots" / "state_vs_x.svg")
    log.info("%s: %d rows, diverged=%s, %.1fs", out, len(hist.rows), hist.diverged, wall)
    return EXIT_DIVERGED if hist.diverged else EXIT_OK


def run_oracle(cfg: RunConfig) -> int:
    """Finite-difference Uzawa iteration for the 1D boundary-layer problem."""
    from .reference_fd import FdGrid, boundary_layer_data, fd_uzawa, iteration_spectral_radius
    if cfg.problem != "boundary_layer":
        raise ConfigError("problem: the finite-difference oracle only covers boundary_layer")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = FdGrid(cfg.fd_nodes)
    f, g = boundary_layer_data(cfg.epsilon)
    hist = fd_uzawa(cfg.gamma, cfg.rho, cfg.epsilon, f, g, grid, cfg.k_max)
    run_hist = hist.to_run_history()
    run_hist.to_csv(out / "history.csv")
    radius = iteration_spectral_radius(cfg.gamma, cfg.rho, cfg.epsilon, grid)
    lam_err = hist.lam_err
    diverged = bool(not np.isfinite(lam_err[-1]) or lam_err[-1] > lam_err[0])
    meta = {"config": _jsonable(cfg.to_dict()), "spectral_radius": radius, "diverged": diverged,
            "advisory": advisory(dataclasses.replace(cfg, method="RitUz"), build_problem(cfg)),
            "final_lambda_error": float(lam_err[-1])}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cfg.plots:
        emit_plot([out], "error_vs_step", out / "plots" / "error_vs_step.svg")
    return EXIT_DIVERGED if diverged else EXIT_OK


def _grid_items(grids) -> list[tuple[str, list]]:
    items = []
    for item in grids:
        if "=" not in item:
            raise ConfigError(f"grid '{item}' is not key=v1,v2,...")
        k, vals = item.split("=", 1)
        items.append((k.strip(), [_parse_value(v) for v in vals.split(",") if v.strip()]))
    return items


def _sweep_entry(args):
    cfg, oracle = args
    return run_oracle(cfg) if oracle else run_experiment(cfg)


def sweep(path, grids, overrides=None, workers: int = 1, oracle: bool = False) -> int:
    base_over = overrides or {}
    items = _grid_items(grids)
    base = parse_config(path, base_over)
    root = Path(base.out_dir)
    jobs = []
    for combo in itertools.product(*[vals for _, vals in items]):
        over = dict(base_over)
        parts = []
        for (k, _), v in zip(items, combo):
            over[k] = v
            parts.append(f"{k}={v}")
        over["out_dir"] = str(root / "_".join(parts))
        jobs.append((parse_config(path, over), oracle))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            codes = list(ex.map(_sweep_entry, jobs))
    else:
        codes = [_sweep_entry(j) for j in jobs]
    emit_plot([Path(c.out_dir) for c, _ in jobs], "error_vs_step", root / "plots" / "error_vs_step.svg")
    return max(codes) if codes else EXIT_OK


def bench_dims(path, dims: str, overrides=None, epochs: int = 20) -> int:
    """Average seconds per epoch for the highdim problem over a range of even dimensions."""
    from .uzawa import Trainer
    lo, hi = (int(s) for s in dims.split(".."))
    rows = []
    for dim in range(lo, hi + 1):
        if dim % 2:
            continue
        cfg = parse_config(path, {**(overrides or {}), "problem": "highdim", "dimension": dim})
        tr = Trainer(uzawa_config(cfg), build_problem(cfg))
        tr.inner_train(1)
        t0 = time.perf_counter()
        tr.inner_train(epochs)
        rows.append((dim, (time.perf_counter() - t0) / epochs))
    out = Path(parse_config(path, overrides).out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", encoding="utf-8") as fh:
        fh.write("dimension,seconds_per_epoch\n")
        for d, s in rows:
            fh.write(f"{d},{s:.17g}\n")
    return EXIT_OK


# plotting ---------------------------------------------------------------

def _label(run_dir: Path) -> str:
    if "=" in run_dir.name:
        return run_dir.name
    meta = run_dir / "meta.json"
    if meta.is_file():
        cfg = json.loads(meta.read_text(encoding="utf-8")).get("config", {})
        if "rho" in cfg:
            return f"rho={cfg['rho']:g}"
    return run_dir.name


def emit_plot(run_dirs, kind: str, out_path) -> Path:
    """Static SVG of error histories (log y) or final 1D states, one line per run."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from .uzawa import RunHistory

    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ValueError("no runs to plot")
    matplotlib.rcParams["svg.hashsalt"] = "deep-uzawa"
    fig, ax = plt.subplots(figsize=(6, 4))
    n_lines = 0
    for d in run_dirs:
        if kind == "error_vs_step":
            hist = RunHistory.from_csv(d / "history.csv")
            if not hist.rows:
                continue
            ax.plot(hist.column("uzawa_step"), hist.column("l2_error"), label=_label(d))
        elif kind == "state_vs_x":
            data = np.loadtxt(d / "final_state.csv", delimiter=",", skiprows=1, ndmin=2)
            if data.shape[1] != 3:
                raise ValueError("state_vs_x needs a 1D run")
            ax.plot(data[:, 0], data[:, 1], label=_label(d))
            if n_lines == 0:
                ax.plot(data[:, 0], data[:, 2], "k--", lw=1, label="exact")
        else:
            raise ValueError(f"unknown plot kind '{kind}'")
        n_lines += 1
    if n_lines == 0:
        plt.close(fig)
        raise ValueError("empty history")
    if kind == "error_vs_step":
        ax.set_yscale("log")
        ax.set_xlabel("Uzawa step")
        ax.set_ylabel("L2 error")
    else:
        ax.set_xlabel("x")
        ax.set_ylabel("u")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path


# entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deep-uzawa", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one configuration")
    s.add_argument("--config")
    s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--bench-dims", metavar="LO..HI", help="time epochs of the highdim problem instead")
    s.add_argument("--bench-epochs", type=int, default=20)

    w = sub.add_parser("sweep", help="run a grid of configurations")
    w.add_argument("--config")
    w.add_argument("--grid", action="append", required=True, metavar="KEY=V1,V2,...")
    w.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--oracle", action="store_true", help="sweep the finite-difference oracle")

    o = sub.add_parser("oracle", help="finite-difference Uzawa oracle (1D)")
    o.add_argument("--config")
    o.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("plot", help="plot histories found under a directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--kind", choices=("error_vs_step", "state_vs_x"), default="error_vs_step")
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            over = parse_overrides(args.override)
            if args.bench_dims:
                return bench_dims(args.config, args.bench_dims, over, args.bench_epochs)
            return run_experiment(parse_config(args.config, over))
        if args.command == "sweep":
            return sweep(args.config, args.grid, parse_overrides(args.override), args.workers, args.oracle)
        if args.command == "oracle":
            return run_oracle(parse_config(args.config, parse_overrides(args.override)))
        if args.command == "plot":
            root = Path(args.in_dir)
            dirs = sorted({p.parent for p in root.rglob("history.csv")})
            if args.kind == "state_vs_x":
                dirs = [d for d in dirs if (d / "final_state.csv").is_file()]
            out = Path(args.out) if args.out else root / "plots" / f"{args.kind}.svg"
            emit_plot(dirs, args.kind, out)
            print(out)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
