"""Batch runner: ``lognls CONFIG [--seed N]``.

The config is an INI file with sections ``[graph]``, ``[potential]``,
``[solver]``, ``[action]`` and ``[output]`` (plus ``[potential_b]`` for the
``compare`` action). See README.md for every key. Exit status: 0 success,
2 invalid config, 3 solver did not converge, 4 a verification failed.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (CheckError, appendix_series, check_lambda_shift, check_log_sobolev,
                       check_max_at_one, check_norm_equivalence, check_scaling_identity,
                       check_sign_inequality, grad_check)
from .functional import nehari_project, residual
from .graph import GraphError, GraphTopology, LatticeSpec, build_general_graph, build_lattice
from .potentials import (AsymptoticallyPeriodicSpec, CoerciveSpec, ExplicitSpec, PeriodicSpec,
                         Potential, WellSpec, check_admissible, make_potential)
from .solvers import (INIT_KINDS, SolverConfig, SolverError, compare_ground_levels,
                      find_multiple, minimize_on_nehari, newton_refine)

log = logging.getLogger("lognls")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
ACTIONS = ("solve", "multi", "verify", "appendix", "compare")
CHECKS = ("log_sobolev", "norm_equivalence", "scaling_identity", "max_at_one",
          "sign_inequality", "lambda_shift", "grad_check", "admissible")
APPENDIX_THRESHOLD = 0.05


class ConfigError(ValueError):
    pass


class FieldFileError(ValueError):
    pass


# -- field files ----------------------------------------------------------

def store_field(path, g: GraphTopology, u, extra: Optional[dict] = None):
    """CSV with index, lattice coordinates (if any), u and optional extra columns."""
    u = np.asarray(u, dtype=float)
    extra = extra or {}
    coords = g.coordinates() if g.lattice is not None else None
    header = ["index"]
    if coords is not None:
        header += [f"x{i}" for i in range(coords.shape[1])]
    header += ["value"] + list(extra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(g.vertex_count):
            row = [i]
            if coords is not None:
                row += [int(c) for c in coords[i]]
            row += [f"{u[i]:.17g}"] + [f"{float(extra[k][i]):.17g}" for k in extra]
            w.writerow(row)


def load_field(path, g: GraphTopology) -> np.ndarray:
    """Read a field written by :func:`store_field` or a hand-made CSV.

    Rows are located by an ``index`` column or, on lattices, by coordinate
    columns ``x0 .. x{N-1}`` (row-major). Values come from ``value``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != g.vertex_count:
        raise FieldFileError(f"{path}: {len(rows)} rows for {g.vertex_count} vertices")
    if not rows or "value" not in rows[0]:
        raise FieldFileError(f"{path}: missing 'value' column")
    u = np.full(g.vertex_count, np.nan)
    seen = set()
    for line, row in enumerate(rows, start=2):
        if "index" in row and row["index"] not in (None, ""):
            idx = int(row["index"])
        elif g.lattice is not None:
            try:
                idx = g.index_of([int(row[f"x{i}"]) for i in range(g.lattice.dimension)])
            except (KeyError, ValueError) as exc:
                raise FieldFileError(f"{path}:{line}: bad coordinates ({exc})") from exc
        else:
            raise FieldFileError(f"{path}:{line}: no index column")
        if not 0 <= idx < g.vertex_count or idx in seen:
            raise FieldFileError(f"{path}:{line}: index {idx} out of range or repeated")
        seen.add(idx)
        u[idx] = float(row["value"])
    return u


# -- config ---------------------------------------------------------------

@dataclass
class RunConfig:
    graph: dict
    potential: dict
    solver: SolverConfig
    action: str
    p: float
    action_args: dict
    output_dir: Path
    formats: tuple
    potential_b: Optional[dict] = None
    source: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def _floats(text):
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _get(section, key, conv, default=None, required=False):
    name = section.name
    if key not in section:
        if required:
            raise ConfigError(f"[{name}] missing required key '{key}'")
        return default
    raw = section[key]
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {key} = {raw!r}: {exc}") from exc


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for name in ("graph", "action"):
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")
    base = path.parent

    gs = cp["graph"]
    kind = _get(gs, "kind", str, "lattice")
    graph = {"kind": kind}
    if kind == "lattice":
        graph["sides"] = _get(gs, "sides", _ints, required=True)
        graph["dimension"] = _get(gs, "dimension", int, len(graph["sides"]))
        graph["boundary"] = _get(gs, "boundary", str, "torus")
    elif kind == "general":
        graph["edge_file"] = str(base / _get(gs, "edge_file", str, required=True))
        graph["vertex_count"] = _get(gs, "vertex_count", int, required=True)
        if not Path(graph["edge_file"]).is_file():
            raise ConfigError(f"[graph] edge_file {graph['edge_file']} not found")
    else:
        raise ConfigError(f"[graph] kind = {kind!r}: expected lattice or general")

    potential = _potential_section(cp["potential"] if "potential" in cp else None, base)
    potential_b = None
    if "potential_b" in cp:
        potential_b = _potential_section(cp["potential_b"], base)

    solver = _solver_section(cp["solver"] if "solver" in cp else None, base, seed)

    acs = cp["action"]
    action = _get(acs, "name", str, required=True)
    if action not in ACTIONS:
        raise ConfigError(f"[action] name = {action!r}: expected one of {ACTIONS}")
    p = _get(acs, "p", float, 2.0)
    if not p > 1:
        raise ConfigError(f"[action] p = {p}: must exceed 1")
    args: dict = {}
    if action == "multi":
        args["k"] = _get(acs, "k", int, 5)
    elif action == "verify":
        checks = [c.strip() for c in _get(acs, "checks", str, required=True).split(",") if c.strip()]
        unknown = [c for c in checks if c not in CHECKS]
        if unknown:
            raise ConfigError(f"[action] checks: unknown {unknown}; known {CHECKS}")
        args["checks"] = checks
        args["samples"] = _get(acs, "samples", int, 20)
        args["lam"] = _get(acs, "lambda", float, math.e)
    elif action == "appendix":
        args["n_max"] = _get(acs, "n_max", int, 10 ** 6)
        if args["n_max"] < 10:
            raise ConfigError("[action] n_max must be at least 10")
    elif action == "compare":
        if potential_b is None:
            raise ConfigError("compare needs a [potential_b] section")
        args["starts"] = _get(acs, "starts", int, 4)
    elif action == "solve":
        args["refine"] = _get(acs, "refine", lambda s: s.strip().lower() in ("1", "true", "yes"), False)
    if action in ("solve", "multi", "compare") and potential is None:
        raise ConfigError(f"action {action} needs a [potential] section")

    out_dir, formats = Path("."), ("json", "csv")
    if "output" in cp:
        os_ = cp["output"]
        out_dir = Path(_get(os_, "directory", str, "."))
        if not out_dir.is_absolute():
            out_dir = base / out_dir
        formats = tuple(f.strip() for f in _get(os_, "formats", str, "json, csv").split(",") if f.strip())
        bad = [f for f in formats if f not in ("json", "csv")]
        if bad:
            raise ConfigError(f"[output] formats: unknown {bad}")
    source = {s: dict(cp[s]) for s in cp.sections()}
    if seed is not None:
        source.setdefault("solver", {})["seed"] = str(seed)
    return RunConfig(graph=graph, potential=potential, solver=solver, action=action, p=p,
                     action_args=args, output_dir=out_dir, formats=formats,
                     potential_b=potential_b, source=source, base_dir=base)


def _potential_section(ps, base) -> Optional[dict]:
    if ps is None:
        return None
    cls = _get(ps, "class", str, required=True)
    spec = {"class": cls}
    if cls in ("periodic", "asymptotically_periodic"):
        spec["tile"] = _get(ps, "tile", _floats, required=True)
        spec["period"] = _get(ps, "period", int, 1)
    if cls in ("coercive", "well") or cls == "asymptotically_periodic":
        spec["center"] = _get(ps, "center", _ints, [0])
    if cls == "coercive":
        spec["exponent"] = _get(ps, "exponent", float, 2.0)
        spec["scale"] = _get(ps, "scale", float, 1.0)
        spec["offset"] = _get(ps, "offset", float, 0.0)
    elif cls == "well":
        spec["v_inf"] = _get(ps, "v_inf", float, required=True)
        spec["depth"] = _get(ps, "depth", float, required=True)
        spec["width"] = _get(ps, "width", float, 2.0)
    elif cls == "asymptotically_periodic":
        # decay D = height * exp(-d(x, center)^2 / width^2), or a field file
        spec["decay_file"] = _get(ps, "decay_file", lambda s: str(base / s), None)
        spec["decay_height"] = _get(ps, "decay_height", float, 0.5)
        spec["decay_width"] = _get(ps, "decay_width", float, 2.0)
    elif cls == "explicit":
        spec["values_file"] = _get(ps, "values_file", lambda s: str(base / s), None)
        spec["constant"] = _get(ps, "constant", float, None)
        if spec["values_file"] is None and spec["constant"] is None:
            raise ConfigError("[potential] explicit needs values_file or constant")
    elif cls != "periodic":
        raise ConfigError(f"[{ps.name}] class = {cls!r}: unknown potential class")
    return spec


def _solver_section(ss, base, seed) -> SolverConfig:
    kw: dict = {}
    if ss is not None:
        for key, conv in (("max_iterations", int), ("grad_tol", float), ("c1", float),
                          ("backtrack", float), ("initial_step", float), ("damping", float),
                          ("eps_floor", float), ("seed", int), ("init_vertex", int),
                          ("init_mode", int)):
            val = _get(ss, key, conv)
            if val is not None:
                kw[key] = val
        init = _get(ss, "init", str)
        if init is not None:
            if init not in INIT_KINDS:
                raise ConfigError(f"[solver] init = {init!r}: expected one of {INIT_KINDS}")
            kw["init"] = init
        init_file = _get(ss, "init_file", str)
        if init_file is not None:
            kw["init_field"] = str(base / init_file)
    if seed is not None:
        kw["seed"] = seed
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from exc


# -- problem assembly -----------------------------------------------------

def build_graph(spec: dict) -> GraphTopology:
    if spec["kind"] == "lattice":
        return build_lattice(LatticeSpec(spec["dimension"], tuple(spec["sides"]), spec["boundary"]))
    edges = []
    with open(spec["edge_file"]) as fh:
        for line in fh:
            line = line.split("#")[0].strip()
            if line:
                a, b = line.replace(",", " ").split()[:2]
                edges.append((int(a), int(b)))
    return build_general_graph(edges, spec["vertex_count"])


def _center(spec):
    c = spec["center"]
    return c[0] if len(c) == 1 else tuple(c)


def build_potential(g: GraphTopology, spec: dict) -> Potential:
    cls = spec["class"]
    if cls == "periodic":
        return make_potential(g, PeriodicSpec(spec["tile"], spec["period"]))
    if cls == "coercive":
        return make_potential(g, CoerciveSpec(_center(spec), spec["exponent"],
                                              spec["scale"], spec["offset"]))
    if cls == "well":
        return make_potential(g, WellSpec(_center(spec), spec["v_inf"], spec["depth"],
                                          spec["width"]))
    if cls == "asymptotically_periodic":
        if spec.get("decay_file"):
            decay = load_field(spec["decay_file"], g)
        else:
            c = spec["center"]
            x0 = c[0] if len(c) == 1 else g.index_of(c)
            d = g.distances_from(x0).astype(float)
            decay = spec["decay_height"] * np.exp(-d ** 2 / spec["decay_width"] ** 2)
        return make_potential(g, AsymptoticallyPeriodicSpec(
            PeriodicSpec(spec["tile"], spec["period"]), decay))
    if spec.get("values_file"):
        return make_potential(g, ExplicitSpec(load_field(spec["values_file"], g)))
    return make_potential(g, ExplicitSpec(np.full(g.vertex_count, spec["constant"])))


# -- actions --------------------------------------------------------------

def _solver_config(cfg: RunConfig, g) -> SolverConfig:
    s = cfg.solver
    if isinstance(s.init_field, str):
        s = s.replace(init_field=load_field(s.init_field, g))
    return s


def _dump_solution(cfg, g, pot, u, name, record):
    """Write the field CSV, read it back and recompute the residual from the copy."""
    r = residual(g, pot, u, cfg.p)
    entry = {"file": None}
    if "csv" in cfg.formats:
        path = cfg.output_dir / f"{name}.csv"
        store_field(path, g, u, {"V": pot.values, "residual": r})
        reloaded = load_field(path, g)
        entry["file"] = path.name
    else:
        reloaded = np.array([float(f"{x:.17g}") for x in u])
    r2 = residual(g, pot, reloaded, cfg.p)
    entry["residual_sup"] = float(np.max(np.abs(r2)))
    entry["bitwise_equal"] = bool(np.array_equal(reloaded, u))
    record.setdefault("reverification", {})[name] = entry


def _act_solve(cfg, g, pot, record):
    sc = _solver_config(cfg, g)
    res = minimize_on_nehari(g, pot, cfg.p, sc)
    if cfg.action_args.get("refine") and cfg.p == 2 and res.converged:
        refined = newton_refine(g, pot, 2.0, res.u, sc)
        if refined.converged:
            res = refined
    record["results"] = {"solve": res.to_dict()}
    _dump_solution(cfg, g, pot, res.u, "field", record)
    return EXIT_OK if res.converged else EXIT_SOLVER


def _act_multi(cfg, g, pot, record):
    k = cfg.action_args["k"]
    sols = find_multiple(g, pot, cfg.p, _solver_config(cfg, g), k)
    record["results"] = {"multi": [s.to_dict() for s in sols], "requested": k}
    for i, s in enumerate(sols):
        _dump_solution(cfg, g, pot, s.u, f"solution_{i}", record)
    return EXIT_OK if len(sols) >= k else EXIT_SOLVER


def _act_verify(cfg, g, pot, record):
    rng = np.random.default_rng(cfg.solver.seed)
    n = g.vertex_count
    if pot is None:
        pot = make_potential(g, ExplicitSpec(np.zeros(n)))
    reports = []
    for name in cfg.action_args["checks"]:
        for _ in range(cfg.action_args["samples"] if name != "admissible" else 1):
            u = rng.uniform(0.1, 1.5, n) * rng.choice([-1.0, 1.0], n)
            if name == "log_sobolev":
                reports.append(check_log_sobolev(u, cfg.p))
            elif name == "norm_equivalence":
                reports.append(check_norm_equivalence(g, u))
            elif name == "scaling_identity":
                reports.append(check_scaling_identity(g, pot, u, cfg.p))
            elif name == "max_at_one":
                v, _ = nehari_project(g, pot, u, cfg.p)
                reports.append(check_max_at_one(g, pot, v, cfg.p))
            elif name == "sign_inequality":
                reports.append(check_sign_inequality(g, pot, u))
            elif name == "lambda_shift":
                reports.append(check_lambda_shift(g, pot, u, cfg.action_args["lam"]))
            elif name == "grad_check":
                reports.append(grad_check(g, pot, np.abs(u), cfg.p))
            elif name == "admissible":
                reports.append(check_admissible(pot, g))
    record["results"] = {"verify": [r.to_dict() for r in reports],
                         "all_satisfied": all(r.satisfied for r in reports)}
    return EXIT_OK if all(r.satisfied for r in reports) else EXIT_VERIFY


def _act_appendix(cfg, record):
    rep = appendix_series(cfg.p, cfg.action_args["n_max"])
    inc = [c for c in rep.decade_increments() if c[0] >= 1000 and c[1] <= rep.n_max]
    mass_inc = [c[2] for c in inc]
    log_inc = [c[3] for c in inc]
    mass_ok = all(b < a for a, b in zip(mass_inc, mass_inc[1:])) and all(m > 0 for m in mass_inc)
    log_ok = all(x > APPENDIX_THRESHOLD for x in log_inc)
    record["results"] = {"appendix": rep.to_dict(),
                         "decade_increments": [list(c) for c in inc],
                         "mass_increments_decreasing": mass_ok,
                         "log_increments_above_threshold": log_ok,
                         "threshold": APPENDIX_THRESHOLD}
    return EXIT_OK if mass_ok and log_ok else EXIT_VERIFY


def _act_compare(cfg, g, pot, record):
    pot_b = build_potential(g, cfg.potential_b)
    cmp = compare_ground_levels(g, pot, pot_b, cfg.p, _solver_config(cfg, g),
                                cfg.action_args["starts"])
    record["results"] = {"compare": cmp.to_dict()}
    return EXIT_OK


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute the configured action and write the record; returns (exit code, record)."""
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    record: dict = {"version": __version__, "config": cfg.source, "action": cfg.action,
                    "started_at": started}
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    try:
        g = None if cfg.action == "appendix" else build_graph(cfg.graph)
        pot = None
        if cfg.potential is not None and g is not None:
            pot = build_potential(g, cfg.potential)
    except (GraphError, FieldFileError, ValueError) as exc:
        record["error"] = str(exc)
        code = EXIT_CONFIG
    else:
        try:
            if cfg.action == "solve":
                code = _act_solve(cfg, g, pot, record)
            elif cfg.action == "multi":
                code = _act_multi(cfg, g, pot, record)
            elif cfg.action == "verify":
                code = _act_verify(cfg, g, pot, record)
            elif cfg.action == "appendix":
                code = _act_appendix(cfg, record)
            else:
                code = _act_compare(cfg, g, pot, record)
        except SolverError as exc:
            record["error"] = str(exc)
            if hasattr(exc, "traces"):
                record["traces"] = exc.traces
            code = EXIT_SOLVER
        except CheckError as exc:
            record["error"] = str(exc)
            code = EXIT_VERIFY
    record["finished_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    record["exit_code"] = code
    if "json" in cfg.formats:
        with open(cfg.output_dir / "record.json", "w") as fh:
            json.dump(record, fh, indent=2, default=_json_default)
    return code, record


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lognls", description=__doc__.splitlines()[0])
    parser.add_argument("config", help="path to the INI run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override [solver] seed")
    args = parser.parse_args(argv)
    logging.basicConfig(level=os.environ.get("LOGNLS_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, record = run(cfg)
    if "error" in record:
        print(f"error: {record['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
