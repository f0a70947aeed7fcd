"""Command-line surface: config parsing, run orchestration, serialization.

A run is described by one JSON config (see README for the schema), executed
with `mems-fbp <mode> --config <path>`.  Every artifact written by a run
embeds the sha256 of the canonicalized config, so no output file is
interpretable without its provenance.  Identical configs produce
bit-identical CSV/JSON outputs, except for the wall-clock block in
summary.json.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import multiprocessing
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, beam, core, dynamics, elliptic, steady, validation
from .core import DeflectionState, Grid1D, Grid2D, ModelParams

EXIT_COMPLETED = 0
EXIT_ERROR = 1
EXIT_TOUCHDOWN = 2

EVOLVE_MODES = ("evolve-parabolic", "evolve-hyperbolic")
MODES = EVOLVE_MODES + ("steady", "sweep", "eigen", "bound", "validate")

#: discretization identifiers echoed into every summary
SCHEMES = {
    "beam": "central-differences-clamped-order-2",
    "potential": "nine-point-transformed-stencil-sparse-lu",
    "time_parabolic": "implicit-euler-explicit-reaction",
    "time_hyperbolic": "three-level-centered-explicit-reaction",
    "steady": "damped-newton-natural-continuation",
}

_TOP_KEYS = {"mode", "params", "grid", "time", "initial", "stops", "output", "sweep"}
_PARAM_KEYS = ("lambda", "eps", "beta", "tau", "gamma")
_SWEEP_KEYS = {"axis", "values", "start", "stop", "count", "spacing", "mode"}


class ConfigError(ValueError):
    """Config rejection; the message starts with the offending field path."""


@dataclass(frozen=True)
class SweepSpec:
    axis: str  # "lambda" | "eps" | "gamma"
    values: tuple[float, ...]
    mode: str  # mode each point runs in


@dataclass(frozen=True)
class RunConfig:
    mode: str
    params: ModelParams
    n: int
    m: int
    dt: float
    t_end: float | None
    sample_every: float | None
    initial: tuple
    kappa_stop: float
    h2_cap: float
    output: Path | None
    sweep: SweepSpec | None
    echo: dict
    sha256: str


# -------------------------------------------------------------- parsing


def _num(
    value: Any,
    where: str,
    minimum: float | None = None,
    exclusive_min: float | None = None,
    exclusive_max: float | None = None,
) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    v = float(value)
    if not np.isfinite(v):
        raise ConfigError(f"{where}: must be finite, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {v}")
    if exclusive_min is not None and v <= exclusive_min:
        raise ConfigError(f"{where}: must be > {exclusive_min}, got {v}")
    if exclusive_max is not None and v >= exclusive_max:
        raise ConfigError(f"{where}: must be < {exclusive_max}, got {v}")
    return v


def _section(cfg: dict, key: str, allowed: set[str] | tuple) -> dict:
    sec = cfg.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected an object")
    for k in sec:
        if k not in allowed:
            raise ConfigError(f"{key}.{k}: unknown key")
    return sec


def _params_from(cfg: dict, mode: str, sweep_axis: str | None) -> ModelParams:
    sec = _section(cfg, "params", _PARAM_KEYS)
    needs: set[str] = set()
    if mode in EVOLVE_MODES or mode == "steady":
        needs = {"lambda", "eps"}
    elif mode == "bound":
        needs = {"eps"}
    if sweep_axis:
        needs.discard(sweep_axis)  # the sweep supplies this one per point
    for k in sorted(needs):
        if k not in sec:
            raise ConfigError(f"params.{k}: required for mode {mode}")
    lam = _num(sec.get("lambda", 0.0), "params.lambda", minimum=0.0)
    eps = _num(sec.get("eps", 0.0), "params.eps", minimum=0.0)
    beta = _num(sec.get("beta", 1.0), "params.beta", exclusive_min=0.0)
    tau = _num(sec.get("tau", 0.0), "params.tau", minimum=0.0)
    gamma = _num(sec.get("gamma", 0.0), "params.gamma", minimum=0.0)
    try:
        params = ModelParams(lam=lam, eps=eps, beta=beta, tau=tau, gamma=gamma)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None
    if mode == "evolve-parabolic" and gamma > 0.0:
        raise ConfigError("params.gamma: must be 0 for mode evolve-parabolic")
    if mode == "evolve-hyperbolic" and gamma == 0.0 and sweep_axis != "gamma":
        raise ConfigError("params.gamma: must be > 0 for mode evolve-hyperbolic")
    if mode == "steady" and lam == 0.0 and sweep_axis != "lambda":
        raise ConfigError("params.lambda: must be > 0 for mode steady")
    return params


def _grid_int(sec: dict, key: str, default: int) -> int:
    raw = sec.get(key, default)
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(f"grid.{key}: expected an integer, got {raw!r}")
    if raw < 11 or raw % 2 == 0:
        raise ConfigError(f"grid.{key}: must be an odd integer >= 11, got {raw}")
    return raw


def _initial_from(cfg: dict) -> tuple:
    raw = cfg.get("initial", "zero")
    if isinstance(raw, str):
        if raw == "zero":
            return ("zero",)
        raise ConfigError(
            f"initial: unknown preset {raw!r} (string form accepts only \"zero\")"
        )
    if not isinstance(raw, dict):
        raise ConfigError("initial: expected a preset name or an object")
    if "csv" in raw:
        if set(raw) != {"csv"}:
            raise ConfigError("initial: the csv form takes no other keys")
        if not isinstance(raw["csv"], str):
            raise ConfigError("initial.csv: expected a path string")
        return ("csv", raw["csv"])
    preset = raw.get("preset")
    if preset == "zero":
        if set(raw) != {"preset"}:
            raise ConfigError("initial: preset zero takes no arguments")
        return ("zero",)
    if preset == "scaled-eigenfunction":
        if set(raw) != {"preset", "c"}:
            raise ConfigError("initial: scaled-eigenfunction takes exactly key c")
        return ("scaled-eigenfunction", _num(raw["c"], "initial.c"))
    if preset == "polynomial-well":
        if set(raw) != {"preset", "a"}:
            raise ConfigError("initial: polynomial-well takes exactly key a")
        return ("polynomial-well",
                _num(raw["a"], "initial.a", minimum=0.0, exclusive_max=1.0))
    raise ConfigError(f"initial.preset: unknown preset {preset!r}")


def _sweep_from(cfg: dict) -> SweepSpec:
    sec = cfg.get("sweep")
    if sec is None:
        raise ConfigError("sweep: section required for mode sweep")
    if not isinstance(sec, dict):
        raise ConfigError("sweep: expected an object")
    for k in sec:
        if k not in _SWEEP_KEYS:
            raise ConfigError(f"sweep.{k}: unknown key")
    axis = sec.get("axis")
    if axis not in ("lambda", "eps", "gamma"):
        raise ConfigError(f"sweep.axis: expected lambda, eps, or gamma, got {axis!r}")
    mode = sec.get("mode", "steady")
    if mode not in MODES or mode in ("sweep", "validate"):
        raise ConfigError(f"sweep.mode: cannot run points in mode {mode!r}")
    if "values" in sec:
        for k in ("start", "stop", "count", "spacing"):
            if k in sec:
                raise ConfigError(f"sweep.{k}: not allowed together with values")
        raw = sec["values"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("sweep.values: expected a nonempty list")
        values = [
            _num(v, f"sweep.values[{i}]", minimum=0.0) for i, v in enumerate(raw)
        ]
    else:
        for k in ("start", "stop", "count"):
            if k not in sec:
                raise ConfigError(f"sweep.{k}: required when values is absent")
        spacing = sec.get("spacing", "linear")
        if spacing not in ("linear", "geometric"):
            raise ConfigError(
                f"sweep.spacing: expected linear or geometric, got {spacing!r}"
            )
        count = sec["count"]
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise ConfigError(f"sweep.count: expected a positive integer, got {count!r}")
        lo = 0.0 if spacing == "linear" else None
        start = _num(sec["start"], "sweep.start",
                     minimum=lo, exclusive_min=0.0 if spacing == "geometric" else None)
        stop = _num(sec["stop"], "sweep.stop",
                    minimum=lo, exclusive_min=0.0 if spacing == "geometric" else None)
        if count > 1 and start == stop:
            raise ConfigError("sweep.stop: must differ from start when count > 1")
        gen = np.geomspace if spacing == "geometric" else np.linspace
        values = [float(v) for v in gen(start, stop, count)]
    diffs = np.diff(values)
    if len(values) > 1 and not (np.all(diffs > 0.0) or np.all(diffs < 0.0)):
        raise ConfigError("sweep.values: must be strictly monotone")
    return SweepSpec(axis=axis, values=tuple(values), mode=mode)


def _sha(echo: dict) -> str:
    canon = json.dumps(echo, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _point_dict(echo: dict, spec: SweepSpec, value: float) -> dict:
    d = {k: v for k, v in echo.items() if k not in ("sweep", "output", "mode")}
    d["mode"] = spec.mode
    params = dict(d.get("params", {}))
    params[spec.axis] = value
    d["params"] = params
    return d


def _config_from_dict(
    cfg: dict,
    default_mode: str | None = None,
    seed_profile: Path | None = None,
    in_sweep: bool = False,
) -> RunConfig:
    if not isinstance(cfg, dict):
        raise ConfigError("top level: expected a JSON object")
    for k in cfg:
        if k not in _TOP_KEYS:
            raise ConfigError(f"{k}: unknown key")
    mode = cfg.get("mode", default_mode)
    if mode is None:
        raise ConfigError("mode: required")
    if mode not in MODES:
        raise ConfigError(f"mode: unknown mode {mode!r}")
    if default_mode is not None and mode != default_mode:
        raise ConfigError(
            f"mode: config says {mode!r} but the command line asked for {default_mode!r}"
        )
    if seed_profile is not None:
        if mode not in EVOLVE_MODES:
            raise ConfigError("--seed-profile only applies to evolve modes")
        cfg = dict(cfg)
        cfg["initial"] = {"csv": str(seed_profile)}

    sweep = _sweep_from(cfg) if mode == "sweep" else None
    if sweep is not None and in_sweep:
        raise ConfigError("sweep.mode: nested sweeps are not supported")
    axis = sweep.axis if sweep is not None else None

    point_mode = sweep.mode if sweep is not None else mode
    params = _params_from(cfg, point_mode if sweep is not None else mode, axis)

    gsec = _section(cfg, "grid", {"n", "m"})
    n = _grid_int(gsec, "n", 201)
    m = _grid_int(gsec, "m", 101)

    tsec = _section(cfg, "time", {"dt", "t_end", "sample_every"})
    dt = _num(tsec.get("dt", 1e-4), "time.dt", exclusive_min=0.0)
    t_end = None
    if "t_end" in tsec:
        t_end = _num(tsec["t_end"], "time.t_end", exclusive_min=0.0)
    elif point_mode in EVOLVE_MODES:
        raise ConfigError(f"time.t_end: required for mode {point_mode}")
    sample_every = None
    if tsec.get("sample_every") is not None:
        sample_every = _num(tsec["sample_every"], "time.sample_every",
                            exclusive_min=0.0)

    initial = _initial_from(cfg)

    ssec = _section(cfg, "stops", {"kappa_stop", "h2_cap"})
    kappa_stop = _num(ssec.get("kappa_stop", 0.01), "stops.kappa_stop",
                      exclusive_min=0.0, exclusive_max=1.0)
    h2_cap = _num(ssec.get("h2_cap", 1e6), "stops.h2_cap", exclusive_min=0.0)

    output = None
    if "output" in cfg:
        if not isinstance(cfg["output"], str):
            raise ConfigError("output: expected a directory path string")
        output = Path(cfg["output"])

    echo = json.loads(json.dumps(cfg))  # detached, JSON-clean copy
    config = RunConfig(
        mode=mode, params=params, n=n, m=m, dt=dt, t_end=t_end,
        sample_every=sample_every, initial=initial, kappa_stop=kappa_stop,
        h2_cap=h2_cap, output=output, sweep=sweep, echo=echo, sha256=_sha(echo),
    )
    if sweep is not None:
        # fail fast: every point must itself be a valid config
        for i, v in enumerate(sweep.values):
            try:
                _config_from_dict(_point_dict(echo, sweep, v), in_sweep=True)
            except ConfigError as exc:
                raise ConfigError(
                    f"sweep point {i} ({sweep.axis}={v}): {exc}"
                ) from None
    return config


def parse_config(
    path: str | Path,
    default_mode: str | None = None,
    seed_profile: Path | None = None,
) -> RunConfig:
    """Load, validate, and default-fill a JSON run configuration."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return _config_from_dict(cfg, default_mode=default_mode, seed_profile=seed_profile)


# -------------------------------------------------------------- serialization


def _fmt(v: float) -> str:
    return f"{float(v):.16e}"


def _cell(v: Any) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return "nan"
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return _fmt(v)


def _write_csv(path: Path, sha: str, header: list[str], rows) -> None:
    lines = [f"# config_sha256={sha}", ",".join(header)]
    lines.extend(",".join(_cell(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _clean(v: float | None) -> float | None:
    if v is None or not np.isfinite(v):
        return None
    return float(v)


# -------------------------------------------------------------- mode handlers


def _initial_state(cfg: RunConfig, setup: dynamics.EvolutionSetup) -> DeflectionState:
    kind = cfg.initial[0]
    g = setup.grid
    if kind == "zero":
        u = core.profile_zero(g)
    elif kind == "scaled-eigenfunction":
        u = cfg.initial[1] * setup.eigpair.zeta1
    elif kind == "polynomial-well":
        u = core.profile_polynomial_well(g, cfg.initial[1])
    else:
        path = Path(cfg.initial[1])
        if not path.exists():
            raise ConfigError(f"initial.csv: file not found: {path}")
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != 1:
            raise ConfigError(
                f"initial.csv: expected a single column of u values, "
                f"got {data.shape[1]} columns"
            )
        if data.shape[0] != g.n:
            raise ConfigError(
                f"initial.csv: expected {g.n} rows for grid.n={g.n}, "
                f"got {data.shape[0]}"
            )
        u = data[:, 0]
    try:
        state = DeflectionState(t=0.0, u=np.asarray(u, dtype=float))
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from None
    if not state.admissible:
        raise ConfigError("initial: profile must satisfy min(u) > -1")
    return state


_TIMESERIES_HEADER = [
    "t", "min_u", "X", "E_b", "E_s", "E_e", "E_total", "dissipation", "residual",
]


def _run_evolve(cfg: RunConfig, out: Path, make_plots: bool) -> tuple[dict, int]:
    grid2d = Grid2D.of_size(Grid1D.of_size(cfg.n), cfg.m)
    setup = dynamics.EvolutionSetup.create(cfg.params, grid2d)
    u0 = _initial_state(cfg, setup)
    outcome = dynamics.run_evolution(
        setup, u0, dt=cfg.dt, t_end=cfg.t_end, sample_every=cfg.sample_every,
        kappa_stop=cfg.kappa_stop, h2_cap=cfg.h2_cap,
    )
    cols = {
        "t": np.array([mr.t for mr in outcome.monitors]),
        "min_u": np.array([mr.min_u for mr in outcome.monitors]),
        "X": np.array([mr.X for mr in outcome.monitors]),
        "E_b": np.array([mr.energy.eb for mr in outcome.monitors]),
        "E_s": np.array([mr.energy.es for mr in outcome.monitors]),
        "E_e": np.array([mr.energy.ee for mr in outcome.monitors]),
        "E_total": np.array([mr.energy.total for mr in outcome.monitors]),
        "dissipation": np.array([mr.energy.dissipation for mr in outcome.monitors]),
        "residual": np.array([mr.energy.residual for mr in outcome.monitors]),
    }
    rows = zip(*(cols[k] for k in _TIMESERIES_HEADER))
    _write_csv(out / "timeseries.csv", cfg.sha256, _TIMESERIES_HEADER, rows)

    x = setup.grid.x
    header = ["x"] + [f"t={_fmt(s.t)}" for s in outcome.states]
    prows = ([x[i]] + [s.u[i] for s in outcome.states] for i in range(cfg.n))
    _write_csv(out / "profiles.csv", cfg.sha256, header, prows)

    if make_plots and outcome.monitors:
        from . import plots

        plots.render_timeseries(cols, out / "timeseries.png")
        plots.render_profiles(
            x, np.array([s.t for s in outcome.states]),
            np.array([s.u for s in outcome.states]), out / "profiles.png",
        )

    final = outcome.monitors[-1].energy if outcome.monitors else None
    body = {
        "outcome": outcome.status,
        "t_event": _clean(outcome.t_event),
        "x_event": _clean(outcome.x_event),
        "samples": len(outcome.states),
        "final_energies": asdict(final) if final is not None else None,
        "min_u_final": float(np.min(outcome.final_state.u)),
        "t_final": float(outcome.final_state.t),
        "lambda_star": None,
        "lambda_c": None,
    }
    if outcome.status == dynamics.STATUS_TOUCHDOWN:
        return body, EXIT_TOUCHDOWN
    if outcome.status == dynamics.STATUS_BLOWUP:
        return body, EXIT_ERROR
    return body, EXIT_COMPLETED


def _steady_energies(st: steady.SteadyState, setup: dynamics.EvolutionSetup) -> dict:
    g = setup.grid
    p = setup.params
    eb = 0.5 * p.beta * core.quad1d(g, core.dx2(g, st.u) ** 2)
    es = 0.5 * p.tau * core.quad1d(g, core.dx1(g, st.u) ** 2)
    if st.potential is not None:
        ee = elliptic.electrostatic_energy(st.state, st.potential, p.eps)
    else:
        ee = core.quad1d(g, 1.0 / (1.0 + st.u))
    return {"eb": eb, "es": es, "ee": ee, "total": eb + es - st.lam * ee}


def _run_steady(cfg: RunConfig, out: Path, make_plots: bool) -> tuple[dict, int]:
    grid2d = Grid2D.of_size(Grid1D.of_size(cfg.n), cfg.m)
    setup = dynamics.EvolutionSetup.create(cfg.params, grid2d)
    branch = steady.continuation(
        setup, lambda_max=cfg.params.lam, dlambda0=cfg.params.lam / 50.0,
        kappa_stop=cfg.kappa_stop,
    )
    bound = steady.nonexistence_bound(cfg.params, setup.eigpair, setup.grid)

    eigs = list(branch.stability)
    rows = [
        (
            pt.lam,
            float(np.min(pt.u)),
            eigs[i] if i < len(eigs) else None,
            pt.newton_iters,
        )
        for i, pt in enumerate(branch.points)
    ]
    _write_csv(out / "branch.csv", cfg.sha256,
               ["lambda", "min_u", "smallest_eigenvalue", "newton_iters"], rows)

    x = setup.grid.x
    header = ["x"] + [f"lambda={_fmt(pt.lam)}" for pt in branch.points]
    prows = ([x[i]] + [pt.u[i] for pt in branch.points] for i in range(cfg.n))
    _write_csv(out / "profiles.csv", cfg.sha256, header, prows)

    if make_plots and branch.points:
        from . import plots

        lams = np.array([pt.lam for pt in branch.points])
        plots.render_branch(
            lams, np.array([r[1] for r in rows]),
            np.array(eigs) if eigs else None, out / "branch.png",
        )
        plots.render_profiles(
            x, lams, np.array([pt.u for pt in branch.points]),
            out / "profiles.png", label="lambda",
        )

    last = branch.points[-1] if branch.points else None
    body = {
        "outcome": "completed",
        "lambda_star": _clean(branch.lambda_star),
        "lambda_c": _clean(bound.lambda_c),
        "eps_star": bound.eps_star,
        "alpha_eps": bound.alpha_eps,
        "K1": bound.K1,
        "h4_norm_convention": core.H4_NORM_CONVENTION,
        "branch_points": len(branch.points),
        "lambda_reached": last.lam if last is not None else None,
        "min_u_final": float(np.min(last.u)) if last is not None else None,
        "newton_iters_total": int(sum(pt.newton_iters for pt in branch.points)),
        "final_energies": _steady_energies(last, setup) if last is not None else None,
        "smallest_eigenvalue_final": eigs[-1] if eigs else None,
    }
    return body, EXIT_COMPLETED


def _run_eigen(cfg: RunConfig, out: Path, make_plots: bool) -> tuple[dict, int]:
    g = Grid1D.of_size(cfg.n)
    pair = beam.principal_eigenpair(beam.assemble(g, cfg.params.beta, cfg.params.tau))
    _write_csv(out / "profiles.csv", cfg.sha256, ["x", "zeta1"],
               zip(g.x, pair.zeta1))
    if make_plots:
        from . import plots

        plots.render_eigenfunction(g.x, pair.zeta1, pair.mu1, out / "eigen.png")
    body = {
        "outcome": "completed",
        "mu1": pair.mu1,
        "l1_norm_zeta1": core.quad1d(g, np.abs(pair.zeta1)),
        "dx2_l1_norm_zeta1": pair.zeta1_dx2_l1,
        "h4_norm_zeta1": core.h4_norm(g, pair.zeta1),
        "h4_norm_convention": core.H4_NORM_CONVENTION,
        "lambda_star": None,
        "lambda_c": None,
    }
    return body, EXIT_COMPLETED


def _run_bound(cfg: RunConfig, out: Path, make_plots: bool) -> tuple[dict, int]:
    g = Grid1D.of_size(cfg.n)
    pair = beam.principal_eigenpair(beam.assemble(g, cfg.params.beta, cfg.params.tau))
    bound = steady.nonexistence_bound(cfg.params, pair, g)
    body = {
        "outcome": "completed",
        "eps": bound.eps,
        "eps_star": bound.eps_star,
        "alpha_eps": bound.alpha_eps,
        "K1": bound.K1,
        "lambda_c": _clean(bound.lambda_c),
        "mu1": pair.mu1,
        "h4_norm_convention": core.H4_NORM_CONVENTION,
        "lambda_star": None,
    }
    return body, EXIT_COMPLETED


def _sweep_child_init() -> None:
    # points already run in parallel; keep each point's Jacobian serial so
    # the pool's daemonic workers never try to fork their own children
    os.environ["MEMS_FBP_THREADS"] = "1"


def _sweep_point(job: tuple[RunConfig, Path, bool]) -> dict:
    cfg, out, make_plots = job
    try:
        code = run(cfg, out_dir=out, make_plots=make_plots)
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        return {
            "outcome": summary.get("outcome", "completed"),
            "exit_code": code,
            "lambda_star": summary.get("lambda_star"),
            "lambda_c": summary.get("lambda_c"),
            "min_u": summary.get("min_u_final"),
            "t_event": summary.get("t_event"),
        }
    except Exception as exc:  # noqa: BLE001 - a failed point is a row, not a crash
        return {
            "outcome": "error",
            "exit_code": EXIT_ERROR,
            "message": f"{type(exc).__name__}: {exc}",
        }


def _run_sweep(cfg: RunConfig, out: Path, make_plots: bool) -> tuple[dict, int]:
    spec = cfg.sweep
    points = [
        _config_from_dict(_point_dict(cfg.echo, spec, v), in_sweep=True)
        for v in spec.values
    ]
    jobs = []
    for i, pc in enumerate(points):
        pdir = out / f"point_{i:03d}"
        pdir.mkdir(parents=True, exist_ok=True)
        jobs.append((pc, pdir, make_plots))
    workers = min(steady.worker_count(), len(jobs))
    if workers <= 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_sweep_child_init) as pool:
            rows = pool.map(_sweep_point, jobs)  # map preserves sweep order

    csv_rows = [
        (
            i,
            spec.values[i],
            r["outcome"],
            r.get("lambda_star"),
            r.get("lambda_c"),
            r.get("min_u"),
            r.get("t_event"),
        )
        for i, r in enumerate(rows)
    ]
    _write_csv(
        out / "sweep.csv", cfg.sha256,
        ["index", spec.axis, "outcome", "lambda_star", "lambda_c", "min_u", "t_event"],
        csv_rows,
    )
    if make_plots:
        from . import plots

        prows = [
            {k: (np.nan if r.get(k) is None else float(r[k]))
             for k in ("lambda_star", "lambda_c", "min_u", "t_event")}
            for r in rows
        ]
        plots.render_sweep(np.array(spec.values), prows, spec.axis, out / "sweep.png")
    failed = sum(1 for r in rows if r["outcome"] == "error")
    body = {
        "outcome": "completed" if failed == 0 else "error",
        "axis": spec.axis,
        "values": list(spec.values),
        "point_mode": spec.mode,
        "points": rows,
        "failed_points": failed,
        "lambda_star": None,
        "lambda_c": None,
    }
    return body, EXIT_COMPLETED if failed == 0 else EXIT_ERROR


_HANDLERS = {
    "evolve-parabolic": _run_evolve,
    "evolve-hyperbolic": _run_evolve,
    "steady": _run_steady,
    "eigen": _run_eigen,
    "bound": _run_bound,
    "sweep": _run_sweep,
}


def run(cfg: RunConfig, out_dir: Path | None = None, make_plots: bool = True) -> int:
    """Execute one validated config; write artifacts; return the exit code."""
    if cfg.mode == "validate":
        return run_validate(quick=False)
    # bit-identical outputs for identical configs: solver caches carry
    # factorization history across runs, so every run starts cold
    elliptic.reset_solvers()
    out = Path(out_dir) if out_dir is not None else (cfg.output or Path("mems-fbp-out"))
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    body, code = _HANDLERS[cfg.mode](cfg, out, make_plots)
    g = Grid1D.of_size(cfg.n)
    summary = dict(body)
    summary["mode"] = cfg.mode
    summary["config"] = cfg.echo
    summary["config_sha256"] = cfg.sha256
    summary["grid"] = {"n": cfg.n, "m": cfg.m, "h": g.h, "k": 1.0 / (cfg.m - 1)}
    summary["resolved"] = {
        "dt": cfg.dt, "t_end": cfg.t_end, "sample_every": cfg.sample_every,
        "kappa_stop": cfg.kappa_stop, "h2_cap": cfg.h2_cap,
        "params": {
            "lambda": cfg.params.lam, "eps": cfg.params.eps,
            "beta": cfg.params.beta, "tau": cfg.params.tau,
            "gamma": cfg.params.gamma,
        },
    }
    summary["scheme"] = SCHEMES
    summary["package_version"] = __version__
    summary["timings"] = {"wall_s": time.perf_counter() - t0}
    _write_json(out / "summary.json", summary)
    return code


def run_validate(quick: bool = False) -> int:
    """Run the named property checks; print a table; 0 iff everything passed."""
    results = validation.run_checks(quick=quick)
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {mark}  {r.seconds:7.2f}s  {r.detail}")
    ok = all(r.passed for r in results)
    print(f"{'all checks passed' if ok else 'FAILURES PRESENT'} "
          f"({len(results)} checks)")
    return EXIT_COMPLETED if ok else EXIT_ERROR


# -------------------------------------------------------------- entry point


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mems-fbp",
        description=(
            "Clamped-plate pull-in model: time evolution, steady branches, "
            "spectral bounds, and the validation suite."
        ),
    )
    ap.add_argument("mode", choices=MODES, help="what to run")
    ap.add_argument("--config", type=Path, help="JSON run configuration")
    ap.add_argument("--out", type=Path, help="output directory (overrides config)")
    ap.add_argument("--seed-profile", type=Path, metavar="CSV",
                    help="initial u profile, one value per grid node")
    ap.add_argument("--no-plots", action="store_true",
                    help="skip PNG rendering, write data files only")
    ap.add_argument("--quick", action="store_true",
                    help="validate: run only the fast subset of checks")
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 on --help, 2 on usage errors
        code = exc.code if isinstance(exc.code, int) else EXIT_ERROR
        return EXIT_COMPLETED if code == 0 else EXIT_ERROR
    try:
        if args.mode == "validate" and args.config is None:
            return run_validate(quick=args.quick)
        if args.config is None:
            raise ConfigError(f"--config is required for mode {args.mode}")
        cfg = parse_config(args.config, default_mode=args.mode,
                           seed_profile=args.seed_profile)
        if cfg.mode == "validate":
            return run_validate(quick=args.quick)
        return run(cfg, out_dir=args.out, make_plots=not args.no_plots)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
