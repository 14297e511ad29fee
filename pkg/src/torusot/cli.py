"""Command-line driver for reproducible transport experiments.

    torusot cost      --config run.ini [--out DIR] [--seed N]
    torusot transport --config run.ini [--out DIR] [--seed N]
    torusot mather    --config run.ini [--out DIR] [--seed N]
    torusot plot      --config run.ini [--out DIR]

Configs are INI files with sections [spec], [problem], [solver], [output];
see README for the full key list and the certificate schema.  All outputs
are deterministic for a fixed config and seed (timestamps only ever go to
run.log).  Exit codes: 0 ok, 2 config error, 3 convergence failure,
4 missing artifact.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .action import BvpOptions, ConvergenceError, cost_matrix
from .dynamics import LagrangianSpec, make_spec
from .kantorovich import DiscreteMeasure, uniform_measure
from .manifold import GridSpec, wrap
from .mather import alpha_T_check, alpha_lp, graph_check, invariance_check, mather_measure
from .pipeline import run_transport
from . import serialize as ser


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


@dataclass
class RunConfig:
    spec: LagrangianSpec
    T: float = 1.0
    grid_n: int = 64
    dim: int = 1
    mu0: str = "uniform"
    muT: str = "uniform"
    opts: BvpOptions = field(default_factory=BvpOptions)
    flow_steps_per_unit: int = 1000
    cache_dir: str | None = None
    seed: int = 0
    mask_tol: float = 1e-3
    cost_accuracy: float = 1e-6
    slice_fractions: tuple = (0.25, 0.5, 0.75)
    epsilons: tuple = (0.125, 0.25)
    mather_T_values: tuple = (1, 2)
    graph_k_bound: float | None = None
    out_dir: str = "out"


def _floats(text):
    return tuple(float(x) for x in text.split())


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    try:
        sec = parser["spec"] if parser.has_section("spec") else {}
        dim = int(sec.get("dim", 1))
        kin_entries = _floats(sec.get("kinetic", "1.0"))
        if len(kin_entries) != dim * dim:
            raise ConfigError(f"kinetic needs {dim * dim} entries, got {len(kin_entries)}")
        kinetic = np.array(kin_entries).reshape(dim, dim)
        pot_name = sec.get("potential", "zero")
        pot_params = {}
        for key in ("amplitude", "amplitude2", "speed"):
            if key in sec:
                pot_params[key] = float(sec[key])
        for key in ("wavenumber", "axis"):
            if key in sec:
                pot_params[key] = int(sec[key])
        period = sec.get("time_period", "").strip() if hasattr(sec, "get") else ""
        time_period = float(period) if period else None
        spec = make_spec(kinetic, pot_name, time_period=time_period, **pot_params)

        prob = parser["problem"] if parser.has_section("problem") else {}
        solver = parser["solver"] if parser.has_section("solver") else {}
        out = parser["output"] if parser.has_section("output") else {}

        def get(section, key, default, cast):
            val = section.get(key, None) if hasattr(section, "get") else None
            return cast(val) if val not in (None, "") else default

        opts = BvpOptions(
            knots_per_unit=get(solver, "knots_per_unit", 64, int),
            winding_range=get(prob, "winding_range", 2, int),
            grad_tol=get(solver, "grad_tol", 1e-9, float),
            descent_max=get(solver, "descent_max", 500, int),
            newton_max=get(solver, "newton_max", 60, int),
        )
        if opts.grad_tol <= 0:
            raise ConfigError("grad_tol must be positive")
        mask_tol = get(solver, "mask_tol", 1e-3, float)
        cost_accuracy = get(solver, "cost_accuracy", 1e-6, float)
        if mask_tol <= 0 or cost_accuracy <= 0:
            raise ConfigError("tolerances must be positive")
        cfg = RunConfig(
            spec=spec,
            T=get(prob, "t", 1.0, float),
            grid_n=get(prob, "grid_n", 64, int),
            dim=dim,
            mu0=get(prob, "mu0", "uniform", str),
            muT=get(prob, "mut", "uniform", str),
            opts=opts,
            flow_steps_per_unit=get(solver, "flow_steps_per_unit", 1000, int),
            cache_dir=get(solver, "cache_dir", None, str),
            seed=get(solver, "seed", 0, int),
            mask_tol=mask_tol,
            cost_accuracy=cost_accuracy,
            slice_fractions=get(solver, "slice_times", (0.25, 0.5, 0.75), _floats),
            epsilons=get(solver, "epsilons", (0.125, 0.25), _floats),
            mather_T_values=get(solver, "mather_t_values", (1, 2),
                                lambda s: tuple(int(x) for x in s.split())),
            graph_k_bound=get(solver, "graph_k_bound", None, float),
            out_dir=get(out, "dir", "out", str),
        )
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config {path}: {exc}") from exc
    for name in (cfg.mu0, cfg.muT):
        if _is_path_measure(name) and not os.path.exists(name):
            raise ConfigError(f"measure file not found: {name}")
    return cfg


BUILTIN_MEASURES = ("uniform", "two_atom_source", "two_atom_target",
                    "sine_pushforward")


def _is_path_measure(name: str) -> bool:
    return name not in BUILTIN_MEASURES and not name.startswith("dirac:")


def build_measure(name: str, cfg: RunConfig) -> DiscreteMeasure:
    grid = GridSpec(cfg.grid_n, cfg.dim)
    if name == "uniform":
        return uniform_measure(grid.points())
    if name == "two_atom_source":
        atoms = np.zeros((2, cfg.dim))
        atoms[1, 0] = 0.5
        return DiscreteMeasure(atoms, np.array([0.5, 0.5]))
    if name == "two_atom_target":
        atoms = np.zeros((2, cfg.dim))
        atoms[0, 0] = 0.1
        atoms[1, 0] = 0.6
        return DiscreteMeasure(atoms, np.array([0.5, 0.5]))
    if name == "sine_pushforward":
        pts = grid.points().copy()
        pts[:, 0] = pts[:, 0] + 0.1 * np.sin(2.0 * np.pi * pts[:, 0])
        return uniform_measure(wrap(pts))
    if name.startswith("dirac:"):
        coords = np.array([float(x) for x in name[len("dirac:"):].split(",")])
        if coords.shape[0] != cfg.dim:
            raise ConfigError(f"dirac measure needs {cfg.dim} coordinates")
        return DiscreteMeasure(coords[None, :], np.array([1.0]))
    return ser.load_measure_csv(name)


def _log(out_dir, message):
    with open(os.path.join(out_dir, "run.log"), "a") as fh:
        fh.write(f"[{time.strftime('%Y-%m-%dT%H:%M:%S')}] {message}\n")


def cmd_cost(cfg: RunConfig, out_dir: str) -> int:
    ser.ensure_dir(out_dir)
    mu0 = build_measure(cfg.mu0, cfg)
    muT = build_measure(cfg.muT, cfg)
    stats = {}
    C = cost_matrix(cfg.spec, mu0.atoms, muT.atoms, 0.0, cfg.T, cfg.opts,
                    cfg.cache_dir, stats=stats)
    ser.write_matrix_csv(os.path.join(out_dir, "cost_matrix.csv"), C)
    hits = stats.get("cache_hits", 0)
    _log(out_dir, f"cost matrix {C.shape} written, cache hits: {hits}")
    print(f"cost matrix {C.shape[0]}x{C.shape[1]} written "
          f"(cache hits: {hits})")
    return 0


def cmd_transport(cfg: RunConfig, out_dir: str) -> int:
    ser.ensure_dir(out_dir)
    mu0 = build_measure(cfg.mu0, cfg)
    muT = build_measure(cfg.muT, cfg)
    grid = GridSpec(cfg.grid_n, cfg.dim)
    run = run_transport(cfg.spec, mu0, muT, cfg.T, grid, cfg.opts,
                        cfg.slice_fractions, cfg.epsilons, cfg.mask_tol,
                        cfg.cost_accuracy, cfg.cache_dir)
    ser.write_plan_csv(os.path.join(out_dir, "plan.csv"), run.plan)
    ser.write_potentials_json(os.path.join(out_dir, "potentials.json"),
                              run.pair)
    pts = grid.points()
    for uf, bf in zip(run.u_fields, run.ub_fields):
        tag = repr(float(uf.time))
        ser.write_field_csv(os.path.join(out_dir, f"u_t{tag}.csv"),
                            pts, uf.values)
        ser.write_field_csv(os.path.join(out_dir, f"ub_t{tag}.csv"),
                            pts, bf.values)
    # mask and u - ub gap in gnuplot matrix form (rows: slice times)
    ser.write_gnuplot_matrix(os.path.join(out_dir, "gap.dat"),
                             run.mask.times, np.arange(grid.n_nodes),
                             run.mask.gaps)
    ser.write_series_csv(
        os.path.join(out_dir, "mask.csv"), ["time", "node", "masked"],
        [(float(t), int(nidx), int(m))
         for k, t in enumerate(run.mask.times)
         for nidx, m in enumerate(run.mask.mask[k])])
    ser.write_series_csv(
        os.path.join(out_dir, "field.csv"),
        ["time", "node"] + [f"x{a+1}" for a in range(grid.d)]
        + [f"v{a+1}" for a in range(grid.d)],
        [(float(run.field.times[k]), int(run.field.node_index[k]),
          *[float(c) for c in run.field.positions[k]],
          *[float(c) for c in run.field.velocities[k]])
         for k in range(run.field.n)])
    rows = []
    for k, t in enumerate(run.path.times):
        m = run.path.measures[k]
        for atom, w in zip(m.atoms, m.weights):
            rows.append((float(t), *[float(c) for c in atom], float(w)))
    ser.write_series_csv(
        os.path.join(out_dir, "interpolation.csv"),
        ["time"] + [f"x{a+1}" for a in range(grid.d)] + ["weight"], rows)
    pdir = ser.ensure_dir(os.path.join(out_dir, "particles"))
    for k, particle in enumerate(run.path.particles):
        ser.write_series_csv(
            os.path.join(pdir, f"p{k:04d}.csv"),
            ["time"] + [f"x{a+1}" for a in range(grid.d)],
            [(float(t), *[float(c) for c in wrap(particle.curve.points[ki])])
             for ki, t in enumerate(particle.curve.times)])
    ser.write_json(os.path.join(out_dir, "certificate.json"),
                   run.certificate)
    _log(out_dir, f"transport run complete, duality gap "
                  f"{run.certificate['duality_gap']:.3e}")
    print(f"transport certificate written (duality gap "
          f"{run.certificate['duality_gap']:.3e}, "
          f"mask size {run.mask.n_masked})")
    return 0


def cmd_mather(cfg: RunConfig, out_dir: str) -> int:
    ser.ensure_dir(out_dir)
    if cfg.spec.time_period is None:
        raise ConfigError("mather mode needs spec.time_period (usually 1)")
    grid = GridSpec(cfg.grid_n, cfg.dim)
    sol = alpha_lp(cfg.spec, grid, cfg.opts, T=1.0, cache_dir=cfg.cache_dir)
    m0 = mather_measure(sol, cfg.spec, cfg.opts)
    defect = invariance_check(m0, cfg.spec,
                              steps=cfg.flow_steps_per_unit)
    k_bound = cfg.graph_k_bound
    k_source = "config"
    if k_bound is None:
        run = run_transport(cfg.spec, sol.mu, sol.mu, 1.0, grid, cfg.opts,
                            cfg.slice_fractions, cfg.epsilons, cfg.mask_tol,
                            cfg.cost_accuracy, cfg.cache_dir)
        khat = dict(zip(run.khat.epsilons.tolist(),
                        run.khat.k_hat.tolist()))
        k_bound = khat.get(0.25)
        k_source = "K_hat(0.25)"
        if k_bound is None or not np.isfinite(k_bound):
            k_bound = 10.0
            k_source = "fallback"
    graph = graph_check(m0, k_bound)
    report = alpha_T_check(cfg.spec, grid, cfg.mather_T_values, cfg.opts,
                           cfg.cache_dir)
    ser.write_json(os.path.join(out_dir, "mather.json"), {
        "alpha": sol.alpha,
        "grid_n": cfg.grid_n,
        "invariance_defect": defect,
        "graph_max_ratio": graph.max_ratio,
        "graph_k_bound": graph.k_bound,
        "graph_k_bound_source": k_source,
        "graph_ok": graph.ok,
        "n_cycles": len(sol.cycles),
        "marginal_gap": sol.diagnostics["marginal_gap"],
    })
    ser.write_series_csv(
        os.path.join(out_dir, "mather_atoms.csv"),
        [f"x{a+1}" for a in range(grid.d)]
        + [f"v{a+1}" for a in range(grid.d)] + ["mass"],
        [(*[float(c) for c in m0.x[k]], *[float(c) for c in m0.v[k]],
          float(m0.mass[k])) for k in range(m0.n)])
    ser.write_json(os.path.join(out_dir, "alpha_T.json"), {
        "alpha_T": {str(k): v for k, v in report["alpha_T"].items()},
        "max_deviation_from_first": report["max_deviation_from_first"],
    })
    _log(out_dir, f"mather run complete, alpha {sol.alpha!r}")
    print(f"mather solution written (alpha {sol.alpha!r}, "
          f"invariance defect {defect:.3e})")
    return 0


def cmd_plot(cfg: RunConfig, out_dir: str) -> int:
    plots = ser.ensure_dir(os.path.join(out_dir, "plots"))
    emitted = []
    gap = os.path.join(out_dir, "gap.dat")
    cert = os.path.join(out_dir, "certificate.json")
    if os.path.exists(gap) and os.path.exists(cert):
        import json
        with open(cert) as fh:
            empty = json.load(fh).get("empty_transport_set", False)
        lines = ["set title 'u - ubreve gap'",
                 "set xlabel 'grid node'", "set ylabel 'time slice'"]
        if empty:
            lines.append("# empty transport set")
            lines.append("set label 1 'empty transport set' at graph 0.5,0.5 center")
        lines.append(f"plot '../gap.dat' nonuniform matrix with image notitle")
        _write_script(os.path.join(plots, "gap_heatmap.gp"), lines)
        emitted.append("gap_heatmap.gp")
    pdir = os.path.join(out_dir, "particles")
    if os.path.isdir(pdir):
        files = sorted(os.listdir(pdir))
        plot_terms = ", ".join(
            f"'../particles/{f}' using 1:2 with lines notitle" for f in files)
        _write_script(os.path.join(plots, "trajectories.gp"), [
            "set title 'particle trajectories'",
            "set xlabel 't'", "set ylabel 'x'",
            "set datafile separator ','",
            f"plot {plot_terms}",
        ])
        emitted.append("trajectories.gp")
    interp = os.path.join(out_dir, "interpolation.csv")
    if os.path.exists(interp):
        _write_script(os.path.join(plots, "snapshots.gp"), [
            "set title 'interpolation snapshots'",
            "set xlabel 'x'", "set ylabel 't'",
            "set datafile separator ','",
            "plot '../interpolation.csv' every ::1 using 2:1:3 "
            "with points pointtype 7 pointsize variable notitle",
        ])
        emitted.append("snapshots.gp")
    atoms = os.path.join(out_dir, "mather_atoms.csv")
    if os.path.exists(atoms):
        _write_script(os.path.join(plots, "phase_scatter.gp"), [
            "set title 'Mather measure in phase space'",
            "set xlabel 'x'", "set ylabel 'v'",
            "set datafile separator ','",
            "plot '../mather_atoms.csv' every ::1 using 1:2:3 "
            "with points pointtype 7 pointsize variable notitle",
        ])
        emitted.append("phase_scatter.gp")
    if not emitted:
        raise MissingArtifactError(
            f"no plottable artifacts found in {out_dir}")
    print("plot scripts written: " + ", ".join(emitted))
    return 0


def _write_script(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="torusot",
        description="Optimal transport with Lagrangian action costs on flat tori")
    parser.add_argument("command",
                        choices=["cost", "transport", "mather", "plot"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None,
                        help="output directory (default: config [output] dir)")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out if args.out is not None else cfg.out_dir
    try:
        handler = {"cost": cmd_cost, "transport": cmd_transport,
                   "mather": cmd_mather, "plot": cmd_plot}[args.command]
        return handler(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        where = f" at entry {exc.entry}" if exc.entry else ""
        print(f"convergence failure{where}: {exc}", file=sys.stderr)
        return 3
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
