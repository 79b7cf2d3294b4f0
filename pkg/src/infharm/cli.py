"""Command-line front end.

Every subcommand prints a JSON summary on stdout.  With ``--out DIR`` it also writes
its reports there, plus ``manifest.json`` listing each file with its SHA-256.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, acceptance, flow, geometry, infinity_ops, psolver, variations
from .expr import DomainError, ParseError
from .map_model import Grid, MapSpec, UnknownMapError, load_map, parse_resolution, random_interior_points

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

COMMANDS = ("residual", "phase", "geometry", "classify", "vary", "flow", "scan", "psolve", "verify-all")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    map: str | None = None
    grid: str | None = None
    seed: int = 0
    out: str | None = None
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        for k, v in self.tolerances.items():
            if v is None:
                continue
            if not v > 0:
                raise ConfigError(f"tolerance {k} must be positive, got {v}")
        for k, v in self.options.items():
            if k.endswith("_file") and v is not None and not Path(v).is_file():
                raise ConfigError(f"{k}: file {v!r} does not exist")


# parsing helpers

def parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad point {text!r}; expected comma-separated numbers") from exc


def parse_box(text: str):
    """``a:b,c:d`` -> ``((a, b), (c, d))``."""
    try:
        box = tuple(tuple(float(v) for v in part.split(":")) for part in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad box {text!r}; expected e.g. 0.1:0.5,-0.5:-0.1") from exc
    if any(len(b) != 2 or b[0] >= b[1] for b in box):
        raise ConfigError(f"bad box {text!r}; every interval needs lo < hi")
    return box


def _inner_box(m: MapSpec, frac: float = 0.8):
    mid, half = 0.5 * (m.lower + m.upper), 0.5 * frac * (m.upper - m.lower)
    return tuple((float(a), float(b)) for a, b in zip(mid - half, mid + half))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


class Output:
    """Collects artifacts and writes them with a manifest when a directory is given."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def commit(self, summary: dict) -> None:
        if not self.cfg.out:
            return
        out = Path(self.cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        self.files.setdefault("summary.json", dumps(summary))
        entries = []
        for name, text in sorted(self.files.items()):
            data = text.encode("utf-8")
            (out / name).write_bytes(data)
            entries.append({"file": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        manifest = {"command": self.cfg.command, "config": asdict(self.cfg) | {"out": None},
                    "seed": self.cfg.seed, "version": __version__, "files": entries}
        (out / "manifest.json").write_text(dumps(manifest), encoding="utf-8")


def _map(cfg: ExperimentConfig) -> MapSpec:
    if not cfg.map:
        raise ConfigError("this command needs --map")
    try:
        return load_map(cfg.map)
    except UnknownMapError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    except FileNotFoundError as exc:
        raise ConfigError(f"map {cfg.map!r} is neither a catalog name nor a file") from exc
    except (ParseError, ValueError) as exc:
        raise ConfigError(f"cannot read map document {cfg.map!r}: {exc}") from exc


def _grid(cfg: ExperimentConfig, m: MapSpec, box=None, default: str = "41x41") -> Grid:
    try:
        res = parse_resolution(cfg.grid or default)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if len(res) == 1 and m.n > 1:
        res = res * m.n
    if len(res) != m.n:
        raise ConfigError(f"grid {cfg.grid!r} has {len(res)} axes, map has {m.n}")
    return Grid.over(box or m.box, res)


def _tol(cfg, key, default):
    v = cfg.tolerances.get(key)
    return default if v is None else v


# subcommands; each returns (exit code, summary)

def cmd_residual(cfg: ExperimentConfig, out: Output):
    m = _map(cfg)
    if cfg.options.get("point"):
        X = parse_point(cfg.options["point"])[None, :]
        if X.shape[1] != m.n:
            raise ConfigError(f"point has {X.shape[1]} coordinates, map needs {m.n}")
    else:
        X = _grid(cfg, m).nodes
    r = infinity_ops.residual(m, X, _tol(cfg, "rank", 1e-8))
    rows = [{"point": x, "tangential": float(t), "normal": float(n), "total": float(s), "rank": int(k)}
            for x, t, n, s, k in zip(X, r.norm("tangential"), r.norm("normal"), r.norm("total"),
                                     np.atleast_1d(r.rank))]
    tol = _tol(cfg, "residual", None)
    worst = float(r.norm("total").max())
    summary = {"map": m.name, "points": len(rows), "max_total": worst, "seed": cfg.seed}
    if len(rows) == 1:
        summary.update({k: v for k, v in rows[0].items() if k != "point"})
    out.add("residual.json", dumps({"map": m.name, "rows": rows}))
    code = EXIT_FAIL if tol is not None and worst > tol else EXIT_OK
    return code, summary


def cmd_phase(cfg, out):
    m = _map(cfg)
    grid = _grid(cfg, m)
    ph = infinity_ops.phase_map(m, grid, _tol(cfg, "rank", 1e-8))
    counts = {str(int(k)): int(np.sum(ph.rank == k)) for k in np.unique(ph.rank)}
    out.add("phase.csv", ph.to_csv())
    return EXIT_OK, {"map": m.name, "grid": cfg.grid or "41x41", "rank_counts": counts,
                     "interface_nodes": int(ph.interface.sum()), "seed": cfg.seed}


def cmd_geometry(cfg, out):
    m = _map(cfg)
    if (m.n, m.N) != (2, 3):
        raise ConfigError("geometry needs a surface map R^2 -> R^3")
    rng = np.random.default_rng(cfg.seed)
    if cfg.options.get("point"):
        X = parse_point(cfg.options["point"])[None, :]
    else:
        X = random_interior_points(m, int(cfg.options.get("points") or 100), rng)
    cd = geometry.mean_curvature(m, X)
    md = geometry.metric(m, X)
    summary = {"map": m.name, "points": len(X), "seed": cfg.seed,
               "H_min": float(cd.h_scal.min()), "H_max": float(cd.h_scal.max()),
               "conformal_defect": float(md.conformal_defect.max())}
    ok = True
    if md.is_conformal.all():
        d_jac = float(geometry.jacobian_identity(m, X)[2].max())
        d_curv = float(geometry.curvature_identity(m, X)[2].max())
        tol = _tol(cfg, "identity", 1e-8)
        summary.update({"jacobian_identity_defect": d_jac, "curvature_identity_defect": d_curv})
        ok = d_jac <= tol and d_curv <= tol
    rows = [{"point": x, "H": float(h), "normal": n} for x, h, n in zip(X, cd.h_scal, cd.normal)]
    out.add("geometry.json", dumps({"map": m.name, "rows": rows}))
    return (EXIT_OK if ok else EXIT_FAIL), summary


def cmd_classify(cfg, out):
    m = _map(cfg)
    grid = _grid(cfg, m)
    try:
        rep = geometry.classify_surface(m, grid, _tol(cfg, "classify", geometry.CLASSIFY_TOL))
    except geometry.PreconditionError as exc:
        summary = {"map": m.name, "error": str(exc), "seed": cfg.seed}
        out.add("classification.json", dumps(summary))
        return EXIT_FAIL, summary
    out.add("classification.json", rep.to_json() + "\n")
    return EXIT_OK, json.loads(rep.to_json()) | {"seed": cfg.seed}


def cmd_vary(cfg, out):
    m = _map(cfg)
    o = cfg.options
    box = parse_box(o["domain"]) if o.get("domain") else _inner_box(m)
    try:
        vc = variations.VariationConfig(box, int(o.get("n_variations") or 100), cfg.seed,
                                        resolution=int(o.get("resolution") or 41))
        if o.get("test", "rank_one") == "rank_one":
            rep = variations.rank_one_test(m, vc)
        else:
            p = float(o.get("p") or "inf")
            rep = variations.normal_area_test(m, vc, p, _tol(cfg, "margin", 1e-9))
    except (variations.ConfigError, variations.DegenerateImmersionError) as exc:
        raise ConfigError(str(exc)) from exc
    out.add("variations.json", rep.to_json() + "\n")
    out.add("variations.csv", rep.to_csv())
    return (EXIT_OK if rep.passed else EXIT_FAIL), rep.summary() | {"seed": cfg.seed}


def cmd_flow(cfg, out):
    m = _map(cfg)
    o = cfg.options
    D = parse_box(o["domain"]) if o.get("domain") else m.box
    x = parse_point(o["point"]) if o.get("point") else 0.5 * (np.array(D)[:, 0] + np.array(D)[:, 1])
    if o.get("xi"):
        xi = parse_point(o["xi"])
    else:
        xi = np.random.default_rng(cfg.seed).normal(size=m.N)
    if xi.shape != (m.N,) or x.shape != (m.n,):
        raise ConfigError("point needs n and xi needs N coordinates")
    xi = xi / np.linalg.norm(xi)
    step = float(o["step"]) if o.get("step") else None
    try:
        tr = flow.integrate(m, x, xi, D, step=step, backward=bool(o.get("backward")))
    except flow.DegenerateDirectionError as exc:
        raise ConfigError(str(exc)) from exc
    except DomainError as exc:
        raise ConfigError(f"start point: {exc}") from exc
    g2 = float(np.sum(m.gradient(x) ** 2))
    summary = {"map": m.name, "xi": xi, "start": x, "samples": len(tr.times), "exit_time": tr.exit_time,
               "exit_point": tr.exit_point, "stop_reason": tr.stop_reason, "drift": tr.drift,
               "grad_norm_sq": g2, "seed": cfg.seed}
    ok = tr.drift <= _tol(cfg, "drift", 1e-6) * (1.0 + np.sqrt(g2))
    if len(tr.times) >= 10:
        slope, res = flow.check_affinity(tr)
        summary.update({"slope": slope, "affinity_residual": res})
        ok = ok and res <= _tol(cfg, "affinity", 1e-6) and abs(slope - g2) <= _tol(cfg, "slope", 1e-5)
    out.add("trajectory.csv", tr.to_csv())
    return (EXIT_OK if ok else EXIT_FAIL), summary


def cmd_scan(cfg, out):
    m = _map(cfg)
    D = parse_box(cfg.options["domain"]) if cfg.options.get("domain") else m.box
    rep = flow.extremum_scan(m, D, _grid(cfg, m, D))
    out.add("scan.json", rep.to_json() + "\n")
    return (EXIT_OK if rep.max_ok and rep.min_ok else EXIT_FAIL), json.loads(rep.to_json()) | {"seed": cfg.seed}


def cmd_psolve(cfg, out):
    o = cfg.options
    if o.get("boundary_file"):
        D = parse_box(o["domain"]) if o.get("domain") else None
        if D is None:
            raise ConfigError("--boundary-file needs --domain")
        res = parse_resolution(cfg.grid or "33x33")
        grid = Grid.over(D, res if len(res) == 2 else res * 2)
        try:
            B = psolver.boundary_from_csv(Path(o["boundary_file"]).read_text(encoding="utf-8"), grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        label = o["boundary_file"]
    else:
        m = _map(cfg)
        D = parse_box(o["domain"]) if o.get("domain") else m.box
        grid = _grid(cfg, m, D, "33x33")
        B = psolver.boundary_from_map(m, grid)
        label = m.name
    if o.get("schedule"):
        sched = [float(v) for v in o["schedule"].split(",")]
    elif o.get("p"):
        sched = [float(o["p"])]
    else:
        sched = psolver.default_schedule(128.0)
    try:
        trace = psolver.continuation(B, grid, sched)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out.add("trace.json", trace.to_json() + "\n")
    buf = ["x,y," + ",".join(f"u{a + 1}" for a in range(trace.solution.N))]
    buf += [",".join(repr(float(v)) for v in (*x, *u)) for x, u in zip(grid.nodes, trace.solution.values)]
    out.add("solution.csv", "\n".join(buf) + "\n")
    ok = all(s.converged for s in trace.stages)
    return (EXIT_OK if ok else EXIT_FAIL), {"boundary": label, "seed": cfg.seed} | trace.to_dict()


def cmd_verify_all(cfg, out):
    only = None
    if cfg.options.get("only"):
        try:
            only = {int(v) for v in cfg.options["only"].split(",")}
        except ValueError as exc:
            raise ConfigError("--only takes comma-separated criterion numbers") from exc
    results = acceptance.run_all(cfg.seed, only)
    for r in results:
        print(r.line(), file=sys.stderr)
    table = [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results]
    out.add("acceptance.json", dumps({"seed": cfg.seed, "criteria": table}))
    passed = sum(r.passed for r in results)
    summary = {"passed": passed, "total": len(results), "seed": cfg.seed,
               "failed": [r.number for r in results if not r.passed]}
    return (EXIT_OK if passed == len(results) else EXIT_FAIL), summary


HANDLERS = {"residual": cmd_residual, "phase": cmd_phase, "geometry": cmd_geometry, "classify": cmd_classify,
            "vary": cmd_vary, "flow": cmd_flow, "scan": cmd_scan, "psolve": cmd_psolve,
            "verify-all": cmd_verify_all}

TOLERANCE_FLAGS = ("rank", "residual", "identity", "classify", "margin", "drift", "affinity", "slope")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--map", help="catalog name or path to a JSON map document")
    common.add_argument("--grid", help="grid resolution, e.g. 41x41")
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--out", help="directory for reports and manifest.json")
    common.add_argument("--config", help="JSON file with defaults for any of these options")
    for t in TOLERANCE_FLAGS:
        common.add_argument(f"--tol-{t}", type=float, dest=f"tol_{t}", default=None)

    parser = _Parser(prog="infharm", description="Verification tools for infinity-harmonic maps.",
                     epilog="A JSON file given with --config may name the subcommand itself: "
                            "infharm --config run.json [--out DIR].")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_, *flags):
        sp = sub.add_parser(name, parents=[common], help=help_)
        for f in flags:
            kw = {"action": "store_true"} if f == "backward" else {}
            sp.add_argument("--" + f.replace("_", "-"), dest=f, **kw)
        return sp

    add("residual", "tangential/normal/total infinity-Laplacian", "point")
    add("phase", "rank phases and interface nodes on a grid")
    add("geometry", "mean curvature and conformal identities", "point", "points")
    add("classify", "minimal / flat / planar verdict for an isothermal surface")
    add("vary", "rank-one or normal-area variational tester", "test", "p", "domain", "n_variations", "resolution")
    add("flow", "integrate the parametrized gradient flow", "point", "xi", "domain", "step", "backward")
    add("scan", "gradient max/min principle scan", "domain")
    add("psolve", "discrete p-Laplacian with continuation in p", "p", "schedule", "domain", "boundary_file")
    add("verify-all", "run the acceptance suite", "only")
    return parser


OPTION_KEYS = ("point", "points", "test", "p", "domain", "n_variations", "resolution", "xi", "step",
               "backward", "schedule", "boundary_file", "only")


def _load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path!r} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    file_cfg = _load_config_file(args.config) if args.config else {}
    command = args.command or file_cfg.get("command")
    if command is None:
        raise ConfigError("no subcommand given")
    if args.command and file_cfg.get("command") not in (None, args.command):
        raise ConfigError(f"config file is for {file_cfg['command']!r}, not {args.command!r}")
    opts_file = file_cfg.get("options", {})
    tol_file = file_cfg.get("tolerances", {})

    def pick(key, cli, fallback=None):
        return cli if cli is not None else file_cfg.get(key, fallback)

    options = {}
    for k in OPTION_KEYS:
        cli = getattr(args, k, None)
        if cli is False:
            cli = None
        v = cli if cli is not None else opts_file.get(k)
        if v is not None:
            options[k] = v if isinstance(v, (bool, str)) else str(v)
    tolerances = {t: (getattr(args, f"tol_{t}") if getattr(args, f"tol_{t}") is not None else tol_file.get(t))
                  for t in TOLERANCE_FLAGS}
    tolerances = {k: v for k, v in tolerances.items() if v is not None}
    return ExperimentConfig(command, pick("map", args.map), pick("grid", args.grid),
                            int(pick("seed", args.seed, 0)), pick("out", args.out), tolerances, options)


def _with_command(argv: list[str]) -> list[str]:
    """Prepend the command named by ``--config FILE`` when the command line has none."""
    if any(a in COMMANDS for a in argv) or any(a in ("-h", "--help", "--version") for a in argv):
        return argv
    for k, a in enumerate(argv):
        path = a.split("=", 1)[1] if a.startswith("--config=") else (
            argv[k + 1] if a == "--config" and k + 1 < len(argv) else None)
        if path is not None:
            command = _load_config_file(path).get("command")
            if command not in COMMANDS:
                raise ConfigError(f"config file {path!r} names no valid command")
            return [command] + argv
    return argv


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_with_command(argv))
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        cfg = make_config(args)
        out = Output(cfg)
        code, summary = HANDLERS[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, geometry.DegenerateImmersionError, variations.FrameError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.commit(summary)
    sys.stdout.write(dumps(summary))
    return code


def main() -> int:
    return run(sys.argv[1:])
