"""Command-line experiment runner.

``cvp <task> --config cfg.json [flags]``.  Every run writes
``resolved_config.json`` and ``report.json`` plus task tables into
``--out-dir``.  Outputs depend only on the resolved configuration; the
timestamp and worker count go to ``metadata.json``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, scenarios
from .errors import ConfigError, DomainError, NumericalError, ResourceLimitError
from .jets import FiberMetric, Jet, jet_to_csv, read_jet_csv
from .kernels import KERNEL_NAMES, builtin_kernel
from .operator import build_problem, compute_weight, el_residual, interior_nodes
from .presets import default_grid_spec, gaussian_field, measure_from_spec, normalize_grid_spec
from .spectral import DEFAULT_REL_CUTOFF, decompose, solve_linearized, sobolev_norm
from .verify import compare_sorted, fourier_spectrum_oracle, minimizer_identity_check, positivity_report

TASKS = ("el-check", "weight", "spectrum", "solve", "sobolev", "oracle", "example")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_RESOURCE = 4

_TOP_LEVEL = {"task", "kernel", "grid", "metric", "jets", "cutoff", "seed", "inhomogeneity",
              "sobolev", "example", "workers"}


# -- configuration -------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _resolve_source(src, base, what):
    """A jet source: a CSV path or ``{"preset": "gaussian", ...}``."""
    if src is None:
        return None
    if isinstance(src, str):
        p = Path(src)
        if not p.is_absolute():
            p = (base / p).resolve()
        if not p.is_file():
            raise ConfigError(f"{what} file not found: {src}")
        return {"file": str(p)}
    if isinstance(src, dict):
        if "file" in src:
            return _resolve_source(src["file"], base, what)
        if src.get("preset") == "gaussian":
            out = {"preset": "gaussian", "center": src.get("center"), "width": float(src.get("width", 1.0)),
                   "components": list(src.get("components", ["scalar", "vector"]))}
            if not out["width"] > 0:
                raise ConfigError(f"{what} width must be positive")
            bad = set(out["components"]) - {"scalar", "vector"}
            if bad or not out["components"]:
                raise ConfigError(f"{what} components must be a subset of scalar, vector")
            return out
        if src.get("preset") == "random":
            return {"preset": "random", "seed": int(src.get("seed", 0))}
    raise ConfigError(f"{what} must be a CSV path or a preset object, got {src!r}")


def resolve_config(task: str, raw: dict, args, base: Path) -> dict:
    """Merge config, flags and defaults into a complete, canonical config."""
    cfg = copy.deepcopy(raw)
    unknown = set(cfg) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    if "task" in cfg and cfg["task"] != task:
        raise ConfigError(f"config is for task {cfg['task']!r}, not {task!r}")

    kspec = cfg.get("kernel", {"kernel": "gauss1d"})
    if isinstance(kspec, str):
        kspec = {"kernel": kspec}
    if not isinstance(kspec, dict) or "kernel" not in kspec:
        raise ConfigError("kernel must be {'kernel': name, 'params': {...}}")
    name = args.kernel or kspec["kernel"]
    params = dict(kspec.get("params") or {})
    for item in args.param or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        params[key] = _parse_value(val)
    if name not in KERNEL_NAMES:
        raise ConfigError(f"unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}")
    try:
        k = builtin_kernel(name, params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    kparams = {key: val for key, val in k.params.items() if key not in ("beta", "c")}
    kparams["s"] = k.s

    grid = cfg.get("grid")
    if grid is None:
        grid = default_grid_spec(k)
    grid = dict(grid)
    if args.n is not None:
        grid["n"] = args.n
    if args.domain is not None:
        grid["domain"] = list(args.domain)
    if args.periodic is not None:
        grid["domain"] = {"periodic": args.periodic}
        grid.pop("rule", None)
    if args.rule is not None:
        grid["rule"] = args.rule
    grid = normalize_grid_spec(grid)

    metric = cfg.get("metric") or {}
    if not isinstance(metric, dict) or set(metric) - {"scale"}:
        raise ConfigError("metric must be {'scale': positive number}")
    scale = float(metric.get("scale", 1.0))
    if not scale > 0:
        raise ConfigError("metric scale must be positive")

    jets = cfg.get("jets", "interior")
    if jets not in ("interior", "all"):
        raise ConfigError("jets must be 'interior' or 'all'")

    cutoff = cfg.get("cutoff", {"relative": DEFAULT_REL_CUTOFF})
    if isinstance(cutoff, (int, float)) and not isinstance(cutoff, bool):
        cutoff = {"relative": cutoff}
    if args.cutoff is not None:
        cutoff = {"relative": args.cutoff}
    if args.cutoff_abs is not None:
        cutoff = {"absolute": args.cutoff_abs}
    if not isinstance(cutoff, dict) or len(cutoff) != 1 or not set(cutoff) <= {"relative", "absolute"}:
        raise ConfigError("cutoff must be {'relative': r} or {'absolute': eps}")
    ((ckey, cval),) = cutoff.items()
    if isinstance(cval, bool) or not isinstance(cval, (int, float)) or not cval >= 0:
        raise ConfigError("cutoff must be a non-negative number")
    cutoff = {ckey: float(cval)}

    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    out = {"task": task, "kernel": {"kernel": name, "params": kparams}, "grid": grid,
           "metric": {"scale": scale}, "jets": jets, "cutoff": cutoff, "seed": seed}

    if task == "solve":
        src = args.inhomogeneity if args.inhomogeneity is not None else cfg.get("inhomogeneity")
        if src is None:
            raise ConfigError("task solve needs an inhomogeneity (CSV path or preset)")
        out["inhomogeneity"] = _resolve_source(src, base, "inhomogeneity")
    if task == "sobolev":
        sob = dict(cfg.get("sobolev") or {})
        src = args.input if args.input is not None else sob.get("input")
        if src is None:
            raise ConfigError("task sobolev needs an input jet (CSV path or preset)")
        orders = args.orders if args.orders is not None else sob.get("orders", [0, 1, 2])
        if not isinstance(orders, list) or not all(isinstance(o, int) and o >= 0 for o in orders):
            raise ConfigError("sobolev orders must be non-negative integers")
        out["sobolev"] = {"input": _resolve_source(src, base, "sobolev input"), "orders": orders}
    if task == "example":
        ex = dict(cfg.get("example") or {})
        ename = args.example or ex.get("name", "all")
        if ename != "all" and ename not in scenarios.SCENARIOS:
            raise ConfigError(f"unknown example {ename!r}; choose from all, {', '.join(scenarios.SCENARIOS)}")
        alpha = args.alpha if args.alpha is not None else ex.get("alpha", 0.5)
        if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not alpha < 1:
            raise ConfigError("alpha must be a number below 1")
        out["example"] = {"name": ename, "alpha": float(alpha)}
    return out


# -- output helpers ------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -- tasks ---------------------------------------------------------------------


class Run:
    """State shared by the task implementations of one invocation."""

    def __init__(self, cfg: dict, workers: int):
        self.cfg = cfg
        self.workers = workers
        kc = cfg["kernel"]
        self.kernel = builtin_kernel(kc["kernel"], kc["params"])
        try:
            self.measure = measure_from_spec(self.kernel, cfg["grid"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.metric = FiberMetric.identity(self.measure.n, self.kernel.fiber_dim,
                                           cfg["metric"]["scale"])
        self.files: dict[str, str] = {}
        self._problem = None
        self._dec = None

    @property
    def nodes(self):
        if self.cfg["jets"] == "all":
            return np.arange(self.measure.n)
        return interior_nodes(self.kernel, self.measure)

    @property
    def problem(self):
        if self._problem is None:
            self._problem = build_problem(self.kernel, self.measure, self.metric, self.nodes,
                                          self.workers)
        return self._problem

    @property
    def decomposition(self):
        if self._dec is None:
            p = self.problem
            c = self.cfg["cutoff"]
            if "absolute" in c:
                self._dec = decompose(p.operator, p.space, eps=c["absolute"])
            else:
                self._dec = decompose(p.operator, p.space, rel_cutoff=c["relative"])
        return self._dec

    def coords_header(self):
        return ["x"] + [f"x{i}" for i in range(1, self.measure.ambient_dim)]

    def jet_source(self, src) -> Jet:
        m, d = self.measure, self.kernel.fiber_dim
        if "file" in src:
            try:
                return read_jet_csv(src["file"], m, d)
            except OSError as exc:
                raise ConfigError(f"cannot read {src['file']}: {exc}") from None
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if src["preset"] == "gaussian":
            f = gaussian_field(m, src["center"], src["width"])
            scalar = f if "scalar" in src["components"] else np.zeros(m.n)
            vec = f if "vector" in src["components"] else np.zeros(m.n)
            return Jet(scalar, vec[:, None] if d == 2 else np.zeros((m.n, 0)))
        # random combination of retained modes, seeded
        dec = self.decomposition
        rng = np.random.default_rng(src["seed"])
        c = np.where(dec.retained, rng.standard_normal(dec.eigenvalues.size), 0.0)
        return self.problem.jet_from_dofs(dec.synthesize(c) * self.problem.space.dof_h)


def task_el_check(run: Run) -> dict:
    k, m = run.kernel, run.measure
    el = el_residual(k, m, run.workers)
    rows = [list(m.points[i]) + [el.ell[i], el.per_node[i], el.interior[i]] for i in range(m.n)]
    run.files["el_residual.csv"] = _csv_text(run.coords_header() + ["ell", "abs_ell", "interior"], rows)
    return {"max_abs": el.max_abs, "n_nodes": m.n, "n_interior": int(el.interior.sum())}


def task_weight(run: Run) -> dict:
    k, m = run.kernel, run.measure
    h = compute_weight(k, m, run.metric, run.workers)
    inner = np.zeros(m.n, dtype=bool)
    inner[interior_nodes(k, m)] = True
    rows = [list(m.points[i]) + [h[i], inner[i]] for i in range(m.n)]
    run.files["weight.csv"] = _csv_text(run.coords_header() + ["h", "interior"], rows)
    out = {"h_min": float(h.min()), "h_max": float(h.max()),
           "h_interior_min": float(h[inner].min()), "h_interior_max": float(h[inner].max())}
    x = m.line
    if k.name == "nontrivial_weight2d" and x.min() <= 0 <= x.max() and x.max() >= 6:
        out["loglog_slope_2_6"] = scenarios.weight_growth_slope(x, h)
    return out


def _oracle_applicable(run: Run) -> bool:
    k = run.kernel
    return (run.measure.periodic and k.translation_invariant and k.ambient_dim == 1
            and k.fiber_dim == 1 and run.cfg["metric"]["scale"] == 1.0)


def task_spectrum(run: Run) -> dict:
    dec = run.decomposition
    lam = dec.eigenvalues
    out = {"n_dof": int(lam.size), "lambda_min": float(lam[0]), "lambda_max": float(lam[-1]),
           "cutoff": dec.cutoff, "retained_modes": dec.n_retained}
    header = ["index", "lambda", "is_kernel"]
    cols = [np.arange(lam.size), lam, ~dec.retained]
    if _oracle_applicable(run):
        fs = fourier_spectrum_oracle(run.kernel, run.measure)
        orc = fs.sorted_eigenvalues
        header.append("oracle")
        cols.append(orc)
        out["oracle_max_rel_err"] = compare_sorted(lam, orc)
        out["oracle_el_defect"] = fs.el_defect
    run.files["spectrum.csv"] = _csv_text(header, zip(*cols))
    return out


def task_solve(run: Run) -> dict:
    prob = run.problem
    w = run.jet_source(run.cfg["inhomogeneity"])
    res = solve_linearized(run.decomposition, prob.space, prob.jet_dofs(w))
    run.files["solution.csv"] = jet_to_csv(run.measure, prob.jet_from_dofs(res.solution))
    return res.report()


def task_sobolev(run: Run) -> dict:
    prob = run.problem
    u = prob.jet_dofs(run.jet_source(run.cfg["sobolev"]["input"]))
    norms = {}
    for k in run.cfg["sobolev"]["orders"]:
        try:
            norms[str(k)] = sobolev_norm(run.decomposition, u, k)
        except DomainError as exc:
            raise ConfigError(f"order {k}: {exc}") from None
    run.files["sobolev.csv"] = _csv_text(["k", "norm"], [(int(k), v) for k, v in norms.items()])
    return {"norms": norms}


def task_oracle(run: Run) -> dict:
    prob = run.problem
    out = {"positivity": positivity_report(prob.operator, prob.space).to_dict()}
    if _oracle_applicable(run):
        fs = fourier_spectrum_oracle(run.kernel, run.measure)
        out["fourier"] = {
            "max_rel_err_vs_pencil": compare_sorted(run.decomposition.eigenvalues, fs.discrete),
            "max_abs_err_vs_continuum": float(np.max(np.abs(fs.discrete - fs.continuum))),
            "el_defect": fs.el_defect,
        }
    if run.kernel.name == "inhomogeneous1d":
        alpha = run.kernel.params["alpha"]
        rep = minimizer_identity_check(alpha, scenarios.identity_grid(alpha),
                                       seed=run.cfg["seed"], workers=run.workers)
        out["minimizer_identity"] = rep.to_dict()
    return out


def task_example(run: Run) -> dict:
    ex = run.cfg["example"]
    names = scenarios.SCENARIOS if ex["name"] == "all" else (ex["name"],)
    results = {n: scenarios.run(n, run.workers, ex["alpha"]) for n in names}
    return {"scenarios": results, "all_passed": scenarios.all_passed(results)}


_TASK_FN = {
    "el-check": task_el_check,
    "weight": task_weight,
    "spectrum": task_spectrum,
    "solve": task_solve,
    "sobolev": task_sobolev,
    "oracle": task_oracle,
    "example": task_example,
}


def _dump_operator(run: Run, target: Path, fmt: str):
    prob = run.problem
    target.mkdir(parents=True, exist_ok=True)
    A, H = prob.operator.matrix, prob.space.matrix
    if fmt == "npy":
        np.save(target / "A.npy", A)
        np.save(target / "H.npy", H)
    else:
        for name, M in (("A.csv", A), ("H.csv", H)):
            _write(target / name, _csv_text([f"c{j}" for j in range(M.shape[1])], M))
    _write(target / "nodes.csv", _csv_text(["index", "x"], zip(prob.nodes, run.measure.line[prob.nodes])))


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvp", description="Discretised causal variational principles.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out-dir", default="cvp-out", help="output directory (default: cvp-out)")
    p.add_argument("--report", help="also write the report JSON here")
    p.add_argument("--dump-operator", metavar="DIR", help="write A and H matrices into DIR")
    p.add_argument("--dump-format", choices=("npy", "csv"), default="npy")
    p.add_argument("--workers", type=int, help="assembly threads (does not change results)")
    p.add_argument("--seed", type=int)
    p.add_argument("--kernel", choices=KERNEL_NAMES)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="kernel parameter override")
    p.add_argument("--n", type=int, help="number of grid nodes")
    p.add_argument("--domain", type=float, nargs=2, metavar=("A", "B"))
    p.add_argument("--periodic", type=float, metavar="T")
    p.add_argument("--rule", choices=("trapezoid", "midpoint"))
    p.add_argument("--cutoff", type=float, help="kernel cutoff relative to the largest eigenvalue")
    p.add_argument("--cutoff-abs", type=float, help="absolute kernel cutoff")
    p.add_argument("--inhomogeneity", help="jet CSV for task solve")
    p.add_argument("--input", help="jet CSV for task sobolev")
    p.add_argument("--orders", type=int, nargs="+", help="Sobolev orders")
    p.add_argument("--example", help="example name (default: all)")
    p.add_argument("--alpha", type=float, help="alpha for the inhomogeneous example")
    return p


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _load_config(args.config)
        workers = args.workers if args.workers is not None else raw.get("workers", 1)
        if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be a positive integer")
        base = Path(args.config).resolve().parent if args.config else Path.cwd()
        cfg = resolve_config(args.task, raw, args, base)
        run = Run(cfg, workers)
        report = {"task": args.task, "kernel": cfg["kernel"]["kernel"]}
        report.update(_TASK_FN[args.task](run))
        out = Path(args.out_dir)
        if args.dump_operator:
            _dump_operator(run, Path(args.dump_operator), args.dump_format)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except ResourceLimitError as exc:
        return _fail(EXIT_RESOURCE, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, exc)

    report_text = _json_text(report)
    _write(out / "resolved_config.json", _json_text(cfg))
    _write(out / "report.json", report_text)
    for name, text in run.files.items():
        _write(out / name, text)
    if args.report:
        _write(Path(args.report), report_text)
    meta = {"version": __version__, "created": datetime.now(timezone.utc).isoformat(),
            "workers": workers, "python": platform.python_version(),
            "numpy": np.__version__, "pid": os.getpid()}
    _write(out / "metadata.json", _json_text(meta))
    sys.stdout.write(report_text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
