"""Command-line front end.

Subcommands ``psi``, ``strategy``, ``frontier``, ``simulate`` and
``validate`` read a TOML run configuration (optionally layered on a named
preset) and write plot-ready tables as CSV or JSON.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, NumericError, RoughMVError
from .kernels import (
    KernelKind,
    KernelSpec,
    UniformGrid,
    first_kind_identity_residual,
    mittag_leffler,
    resolvent_identity_residual,
)
from . import oracle
from .params import ModelParams, RateCurve
from .portfolio import (
    DUAL_FORM_RTOL,
    M0,
    dual_form_gap,
    efficient_frontier,
    exp_moment,
    identity_Uequivalent_check,
    optimal_u,
    solve_mv,
)
from .presets import PRESETS, USER_FILE_REQUIRED
from .simulate import SimConfig, simulate_portfolio, simulate_variance, summarize
from .volterra import PsiCase, lemma_bounds, solve_g, solve_psi

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3
ENV_OUT = "ROUGHMV_OUT"
ENV_THREADS = "ROUGHMV_THREADS"

_NUM = (int, float)
SCHEMA = {
    "model": {
        "V0": _NUM, "kappa": _NUM, "phi": _NUM, "sigma": _NUM, "rho": _NUM, "theta": _NUM,
        "r": _NUM, "rate_levels": list, "rate_knots": list, "T": _NUM, "x0": _NUM, "c": _NUM, "c_excess": _NUM,
    },
    "kernel": {"kind": str, "c": _NUM, "alpha": _NUM, "beta": _NUM},
    "solver": {"N": int, "corrector_sweeps": int, "tol": _NUM, "p": _NUM},
    "simulation": {
        "n_paths": int, "n_steps": int, "scheme": str, "lifted_factors": int, "lifted_spacing": _NUM,
        "lifted_x1": _NUM, "lifted_tolerance": _NUM, "seed": int, "n_resamples": int, "level": _NUM,
        "u_zero": bool, "sample_paths": int, "S0": _NUM,
    },
    "experiment": {
        "recipe": str, "alphas": list, "c_grid": list, "c_excess_min": _NUM, "c_excess_max": _NUM,
        "c_num": int, "fixed_V": _NUM, "fixed_X": _NUM, "moment_a": _NUM,
    },
    "output": {"dir": str, "format": str},
}
INVESTOR_KEYS = {"model", "kernel"}
REQUIRED_MODEL = ("V0", "kappa", "phi", "sigma", "rho", "theta", "T")

DEFAULTS = {
    "solver": {"N": 500, "corrector_sweeps": 1, "tol": 1e-6, "p": 2.5},
    "simulation": {
        "n_paths": 1000, "n_steps": 250, "scheme": "volterra-euler", "lifted_factors": 20,
        "lifted_tolerance": 0.1, "n_resamples": 1000, "level": 0.95, "u_zero": False, "sample_paths": 5, "S0": 1.0,
    },
    "experiment": {"alphas": [], "c_excess_min": 0.01, "c_excess_max": 0.5, "c_num": 50, "moment_a": 1.0},
    "output": {"dir": "results", "format": "csv"},
}
VALIDATE_DEFAULT_N = 2000


# ------------------------------------------------------------------------ tables


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.metadata):
            buf.write(f"# {key}: {self.metadata[key]}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {"name": self.name, "metadata": self.metadata, "columns": self.columns, "data": self.rows}
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, text: str, name: str = "") -> "ResultTable":
        meta = {}
        lines = text.splitlines()
        i = 0
        while i < len(lines) and lines[i].startswith("#"):
            key, _, val = lines[i][2:].partition(": ")
            meta[key] = val
            i += 1
        columns = lines[i].split(",")
        rows = [[_parse(v) for v in line.split(",")] for line in lines[i + 1 :] if line]
        return cls(name, columns, rows, meta)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        out = "%.17g" % v
        # keep integral floats (and -0.0) distinguishable from ints on re-parse
        return out if any(ch in out for ch in ".eni") else out + ".0"
    return str(v)


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


# ------------------------------------------------------------------------ config


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_section(name: str, table, schema: dict):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    for key, val in table.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        want = schema[key]
        ok = isinstance(val, want) and not (want is _NUM and isinstance(val, bool))
        if want is int and isinstance(val, bool):
            ok = False
        if not ok:
            raise ConfigError(f"[{name}].{key} has the wrong type ({type(val).__name__})")


def validate_config(raw: dict) -> dict:
    """Strict structural validation; returns the config with defaults filled in."""
    for section in raw:
        if section not in SCHEMA and section != "investors":
            raise ConfigError(f"unknown section [{section}]")
    for section, schema in SCHEMA.items():
        if section in raw:
            _check_section(section, raw[section], schema)
    investors = raw.get("investors", {})
    if not isinstance(investors, dict):
        raise ConfigError("[investors] must be a table of named tables")
    for name, inv in investors.items():
        if not isinstance(inv, dict):
            raise ConfigError(f"[investors.{name}] must be a table")
        for key in inv:
            if key not in INVESTOR_KEYS:
                raise ConfigError(f"unknown key {key!r} in [investors.{name}]")
        _check_section(f"investors.{name}.model", inv.get("model", {}), SCHEMA["model"])
        _check_section(f"investors.{name}.kernel", inv.get("kernel", {}), SCHEMA["kernel"])
    cfg = _deep_merge(DEFAULTS, raw)
    cfg.setdefault("model", {})
    cfg.setdefault("kernel", {"kind": "constant"})
    missing = [k for k in REQUIRED_MODEL if k not in cfg["model"]]
    if missing:
        raise ConfigError(f"[model] is missing {', '.join(missing)}")
    if "r" not in cfg["model"] and "rate_levels" not in cfg["model"]:
        raise ConfigError("[model] needs either r or rate_levels")
    if cfg["output"]["format"] not in ("csv", "json"):
        raise ConfigError("output format must be csv or json")
    return cfg


def load_config(path: str | None, preset: str | None) -> dict:
    raw = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
        raw = copy.deepcopy(PRESETS[preset])
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed TOML in {path}: {exc}") from None
        raw = _deep_merge(raw, user)
    if preset in USER_FILE_REQUIRED:
        need = [k for k in USER_FILE_REQUIRED[preset] if k not in raw.get("model", {})]
        if need:
            raise ConfigError(f"preset {preset} needs calibrated parameters from --config: {', '.join(need)}")
    return validate_config(raw)


def _rate(model: dict) -> RateCurve:
    if "rate_levels" in model:
        return RateCurve(tuple(model["rate_levels"]), tuple(model.get("rate_knots", [0.0])))
    return RateCurve.constant(model["r"])


def build_kernel(table: dict) -> KernelSpec:
    table = dict(table)
    kind = table.pop("kind", "constant")
    try:
        return KernelSpec(kind, **{k: float(v) for k, v in table.items()})
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def build_params(model: dict, kernel: KernelSpec, *, allow_degenerate: bool = False) -> ModelParams:
    try:
        rate = _rate(model)
        T = float(model["T"])
        x0 = float(model.get("x0", 1.0))
        if "c" in model and "c_excess" in model:
            raise ConfigError("give at most one of c and c_excess")
        if "c_excess" in model:
            c = x0 * math.exp(float(rate.integral(0.0, T)) + model["c_excess"] * T)
        else:
            c = model.get("c")
        return ModelParams(
            V0=model["V0"], kappa=model["kappa"], phi=model["phi"], sigma=model["sigma"], rho=model["rho"],
            theta=model["theta"], rate=rate, T=T, x0=x0, c=c, kernel=kernel, allow_degenerate=allow_degenerate,
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def params_hash(cfg: dict) -> str:
    relevant = {k: v for k, v in cfg.items() if k != "output"}
    blob = json.dumps(relevant, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _metadata(cfg: dict, command: str, seed=None) -> dict:
    return {
        "command": command,
        "params_hash": params_hash(cfg),
        "seed": "none" if seed is None else seed,
        "version": __version__,
    }


def _alpha_kernels(cfg: dict):
    """``(label, kernel)`` pairs: one per requested alpha, or the configured kernel alone."""
    base = build_kernel(cfg["kernel"])
    alphas = cfg["experiment"].get("alphas", [])
    if not alphas:
        return [("", base)]
    if base.kind is not KernelKind.FRACTIONAL:
        raise ConfigError("an alpha sweep needs kernel kind 'fractional'")
    out = []
    for a in alphas:
        try:
            out.append((f"_alpha_{float(a)}", KernelSpec.fractional(float(a), base.c)))
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
    return out


def _solver_kw(cfg: dict) -> dict:
    s = cfg["solver"]
    return {"corrector_sweeps": s["corrector_sweeps"], "tol": s["tol"]}


def _pmap(func, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


# ---------------------------------------------------------------------- commands


def cmd_psi(cfg: dict, threads: int = 1) -> list:
    kernels = _alpha_kernels(cfg)
    grid = UniformGrid(float(cfg["model"]["T"]), cfg["solver"]["N"])

    def run(item):
        label, kern = item
        p = build_params(cfg["model"], kern, allow_degenerate=True)
        return solve_psi(p, grid, **_solver_kw(cfg)).values

    cols = _pmap(run, kernels, threads)
    rows = np.column_stack([grid.t, *cols]).tolist()
    columns = ["t"] + [f"psi{label}" for label, _ in kernels]
    return [ResultTable("psi", columns, rows, _metadata(cfg, "psi"))]


def cmd_strategy(cfg: dict, threads: int = 1) -> list:
    kernels = _alpha_kernels(cfg)
    exp_cfg = cfg["experiment"]
    grid = UniformGrid(float(cfg["model"]["T"]), cfg["solver"]["N"])

    def run(item):
        _, kern = item
        p = build_params(cfg["model"], kern)
        mv = solve_mv(p, grid, p=cfg["solver"]["p"], **_solver_kw(cfg))
        V = np.full(grid.N + 1, float(exp_cfg.get("fixed_V", p.V0)))
        if "fixed_X" in exp_cfg:
            X = np.full(grid.N + 1, float(exp_cfg["fixed_X"]))
        else:
            X = p.x0 * np.exp(p.rate.integral(0.0, grid.t))
        return optimal_u(mv, grid.t, V, X), mv.A

    res = _pmap(run, kernels, threads)
    rows = np.column_stack([grid.t] + [u for u, _ in res] + [A for _, A in res]).tolist()
    columns = ["t"] + [f"u{label}" for label, _ in kernels] + [f"A{label}" for label, _ in kernels]
    return [ResultTable("strategy", columns, rows, _metadata(cfg, "strategy"))]


def _c_grid(cfg: dict, p: ModelParams) -> np.ndarray:
    e = cfg["experiment"]
    if "c_grid" in e:
        return np.asarray(e["c_grid"], dtype=float)
    excess = np.linspace(e["c_excess_min"], e["c_excess_max"], e["c_num"])
    return p.x0 * np.exp(p.rate_integral + excess * p.T)


def cmd_frontier(cfg: dict, threads: int = 1) -> list:
    kernels = _alpha_kernels(cfg)
    grid = UniformGrid(float(cfg["model"]["T"]), cfg["solver"]["N"])
    base = build_params(cfg["model"], kernels[0][1])
    cs = _c_grid(cfg, base)
    if np.any(cs < base.x0 * math.exp(base.rate_integral) * (1 - 1e-12)):
        raise ConfigError("every frontier target must be at least the risk-free wealth")

    def run(item):
        _, kern = item
        return efficient_frontier(base.replace(kernel=kern), cs, grid)

    fronts = _pmap(run, kernels, threads)
    gap = (cs * math.exp(-base.rate_integral) - base.x0) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = [np.where(gap > 0, f.variance / gap, np.nan) for f in fronts]
    rows = np.column_stack([cs] + [f.variance for f in fronts] + [f.std for f in fronts] + quad).tolist()
    labels = [label for label, _ in kernels]
    columns = ["c"] + [f"var{x}" for x in labels] + [f"std{x}" for x in labels] + [f"quad{x}" for x in labels]
    meta = _metadata(cfg, "frontier")
    m0_rows = [[kern.alpha if kern.kind is KernelKind.FRACTIONAL else float("nan"), f.M0] for (_, kern), f in zip(kernels, fronts)]
    return [
        ResultTable("frontier", columns, rows, meta),
        ResultTable("frontier_m0", ["alpha", "M0"], m0_rows, dict(meta)),
    ]


def cmd_simulate(cfg: dict, threads: int = 1) -> list:
    sim = cfg["simulation"]
    seed = sim.get("seed")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
        print(f"roughmv: no seed given, using seed={seed}", file=sys.stderr)
        cfg = _deep_merge(cfg, {"simulation": {"seed": seed}})
    market_kernel = build_kernel(cfg["kernel"])
    market = build_params(cfg["model"], market_kernel)
    try:
        sc = SimConfig(
            n_paths=sim["n_paths"], n_steps=sim["n_steps"], seed=seed, scheme=sim["scheme"],
            lifted_factors=sim["lifted_factors"], lifted_spacing=sim.get("lifted_spacing"),
            lifted_x1=sim.get("lifted_x1"), lifted_tolerance=sim["lifted_tolerance"], S0=sim["S0"],
        )
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    investors = {"market": (market, True)}
    for name, inv in sorted(cfg.get("investors", {}).items()):
        model = _deep_merge(cfg["model"], inv.get("model", {}))
        kern = build_kernel(inv["kernel"]) if "kernel" in inv else market_kernel
        p = build_params(model, kern)
        investors[name] = (p, p == market)

    variance = simulate_variance(market, sc)
    stride = max(1, math.ceil(cfg["solver"]["N"] / sc.n_steps))
    grid = UniformGrid(market.T, stride * sc.n_steps)
    meta = _metadata(cfg, "simulate", seed)
    u_zero = sim["u_zero"]

    def run(item):
        name, (p, _) = item
        mv = solve_mv(p, grid, p=cfg["solver"]["p"], **_solver_kw(cfg))
        override = (lambda n, V, X: np.zeros_like(X)) if u_zero else None
        bundle = simulate_portfolio(p, mv, sc, variance=variance, u_override=override, compute_M=False)
        return name, mv, bundle, summarize(bundle, mv, sim["n_resamples"], sim["level"], seed)

    results = _pmap(run, investors.items(), threads)
    tables = []
    val_rows = []
    for name, mv, bundle, summ in results:
        cols = ["t"]
        data = [bundle.t]
        for key in ("X", "u", "pi"):
            b = getattr(summ, key)
            cols += [f"{key}_mean", f"{key}_lower", f"{key}_upper"]
            data += [b.mean, b.lower, b.upper]
        tables.append(ResultTable(f"simulate_bands_{name}", cols, np.column_stack(data).tolist(), dict(meta)))
        k = min(sim["sample_paths"], bundle.n_paths)
        pcols = ["t"] + [f"V_{i}" for i in range(k)] + [f"X_{i}" for i in range(k)] + [f"pi_{i}" for i in range(k)]
        pdata = np.column_stack([bundle.t, bundle.V[:k].T, bundle.X[:k].T, bundle.pi[:k].T])
        tables.append(ResultTable(f"simulate_paths_{name}", pcols, pdata.tolist(), dict(meta)))
        ts = summ.terminal
        p = mv.params
        R = p.rate_integral
        matches = investors[name][1]
        closed = [
            ("mean_X_T", ts.mean, p.c, ts.mean_se),
            ("var_X_T", ts.var, mv.variance_opt, ts.var_se),
            ("sq_dev_zeta", ts.sq_dev, 0.5 * mv.M0 * (p.x0 - mv.zeta_star * math.exp(-R)) ** 2, ts.sq_dev_se),
        ]
        for label, mc, cf, se in closed:
            z = (mc - cf) / se if se > 0 else (0.0 if mc == cf else math.inf)
            val_rows.append([name, label, mc, cf, se, z, int(abs(z) <= 3.0), int(matches)])
        val_rows.append([name, "zeta_star", mv.zeta_star, mv.zeta_star, 0.0, 0.0, 1, int(matches)])
        val_rows.append([name, "clipped_V_fraction", bundle.clipped_V_fraction, 0.0, 0.0, 0.0, 1, int(matches)])
    tables.append(
        ResultTable(
            "simulate_validation",
            ["investor", "quantity", "monte_carlo", "closed_form", "std_error", "z", "within_3se", "model_matches_market"],
            val_rows,
            dict(meta),
        )
    )
    return tables


def _validate_one(p: ModelParams, cfg: dict, suffix: str, add) -> None:
    N = cfg["solver"]["N"]
    kern = p.kernel
    grid = UniformGrid(p.T, N)
    for lam in sorted({0.1, 1.0, p.lam} - {0.0}):
        add(f"resolvent_identity_lam_{lam:g}{suffix}", resolvent_identity_residual(kern, lam, grid), 1e-6)
    add(f"first_kind_identity{suffix}", first_kind_identity_residual(kern, UniformGrid(p.T, min(N, 200))), 1e-8)
    try:
        psi = solve_psi(p, grid, **_solver_kw(cfg))
    except NumericError as exc:
        add(f"psi_solve{suffix} ({exc})", math.inf, 0.0)
        return
    add(f"psi_residual{suffix}", psi.max_residual, cfg["solver"]["tol"])
    inner = psi.values[1:]
    if psi.case is PsiCase.NEGATIVE_DEFINITE:
        add(f"psi_negative{suffix}", float(np.max(inner)), 0.0, passed=np.all(inner < 0))
    a = cfg["experiment"]["moment_a"]
    bounds = lemma_bounds(p, grid, a)
    if bounds.rbar2 is not None:
        q = 1.0 - 2.0 * p.rho**2
        slack = 1e-9 * abs(bounds.wbar_star / q)
        ok = np.all(inner < 0) and np.all(inner > bounds.wbar_star / q) and np.all(inner >= bounds.rbar2[1:] / q - slack)
        add(f"psi_case3_bounds{suffix}", float(np.max(bounds.rbar2[1:] / q - inner)), slack, passed=ok)
    g = None
    if bounds.r2 is not None:
        g = solve_g(a, p, grid, **_solver_kw(cfg))
        slack = 1e-9 * max(1.0, bounds.w_star)
        ok = np.all(g.values[1:] > 0) and np.all(g.values <= bounds.r2 + slack) and np.all(bounds.r2 < bounds.w_star)
        add(f"g_bounds{suffix}", float(np.max(g.values - bounds.r2)), slack, passed=ok)
        add(f"exp_moment_dual_forms{suffix}", dual_form_gap(p, g), DUAL_FORM_RTOL)
    add(f"M0_dual_forms{suffix}", dual_form_gap(p, psi), DUAL_FORM_RTOL)
    m0 = M0(p, psi, check=False)
    upper = 2.0 * math.exp(2.0 * p.rate_integral)
    add(f"M0_below_bound{suffix}", m0 / upper, 1.0, passed=0 < m0 < upper)
    add(f"U_identity{suffix}", identity_Uequivalent_check(p, psi), 1e-4)
    if kern.kind is KernelKind.CONSTANT:
        ode = oracle.heston_ode_solve(p, grid)
        add(f"heston_oracle_psi{suffix}", float(np.max(np.abs(ode.w - psi.values))), 1e-6)
        add(f"heston_oracle_M0_rel{suffix}", abs(m0 / oracle.heston_M0(p, N=N) - 1.0), 1e-6)
        if g is not None:
            ref = oracle.heston_exp_moment(a, p, N=N)
            add(f"heston_oracle_exp_moment_rel{suffix}", abs(exp_moment(a, p, grid, check=False) / ref - 1.0), 1e-6)


def cmd_validate(cfg: dict, threads: int = 1) -> list:
    """Run the invariant battery for each kernel of the sweep; rows carry pass flags."""
    rows = []

    def add(check, value, tol, passed=None):
        ok = bool(value <= tol) if passed is None else bool(passed)
        rows.append([check, float(value), float(tol), int(ok)])

    zs = np.linspace(-10.0, 0.0, 201)
    add("mittag_leffler_vs_exp", float(np.max(np.abs(mittag_leffler(1.0, 1.0, zs) - np.exp(zs)))), 1e-12)
    kernels = _alpha_kernels(cfg)
    params = [build_params(cfg["model"], kern) for _, kern in kernels]

    def run(i):
        local = []
        _validate_one(params[i], cfg, kernels[i][0], lambda *args, **kw: local.append((args, kw)))
        return local

    for local in _pmap(run, range(len(kernels)), threads):
        for args, kw in local:
            add(*args, **kw)
    return [ResultTable("validate", ["check", "value", "tolerance", "pass"], rows, _metadata(cfg, "validate"))]


COMMANDS = {
    "psi": cmd_psi,
    "strategy": cmd_strategy,
    "frontier": cmd_frontier,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


# -------------------------------------------------------------------------- main


def write_tables(tables: list, out_dir: str, fmt: str) -> list:
    paths = []
    if out_dir == "-":
        for t in tables:
            sys.stdout.write(t.to_csv() if fmt == "csv" else t.to_json())
        return paths
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t in tables:
        path = out / f"{t.name}.{fmt}"
        path.write_text(t.to_csv() if fmt == "csv" else t.to_json())
        paths.append(path)
    return paths


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors under the exit-code contract
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roughmv", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"roughmv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.__class__ = _Parser
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--preset", help=f"named recipe ({', '.join(sorted(PRESETS))})")
        sp.add_argument("--out", help="output directory, '-' for stdout")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None and args.preset is None:
            raise ConfigError("give --config, --preset, or both")
        cfg = load_config(args.config, args.preset)
        if args.command == "validate" and "N" not in _user_solver_keys(args):
            cfg["solver"]["N"] = VALIDATE_DEFAULT_N
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg["simulation"]["seed"] = args.seed
        out = args.out or os.environ.get(ENV_OUT) or cfg["output"]["dir"]
        fmt = args.format or cfg["output"]["format"]
        threads = args.threads
        if threads is None:
            env = os.environ.get(ENV_THREADS)
            try:
                threads = int(env) if env else 1
            except ValueError:
                raise ConfigError(f"{ENV_THREADS} must be an integer") from None
        if threads < 1:
            raise ConfigError("threads must be at least 1")
        tables = COMMANDS[args.command](cfg, threads)
        for path in write_tables(tables, out, fmt):
            print(path)
    except (ConfigError, DomainError) as exc:
        print(f"roughmv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        extra = f" (blow-up near t={exc.time:.6g})" if hasattr(exc, "time") else ""
        print(f"roughmv: numerical error: {exc}{extra}", file=sys.stderr)
        return EXIT_NUMERIC
    except RoughMVError as exc:
        print(f"roughmv: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command == "validate":
        failed = [row[0] for t in tables for row in t.rows if not row[3]]
        if failed:
            print(f"roughmv: validation failed: {', '.join(failed)}", file=sys.stderr)
            return EXIT_VALIDATION
    return EXIT_OK


def _user_solver_keys(args) -> set:
    """Solver keys set explicitly by the preset or config file (defaults excluded)."""
    keys = set()
    if args.preset in PRESETS:
        keys |= set(PRESETS[args.preset].get("solver", {}))
    if args.config:
        with open(args.config, "rb") as fh:
            keys |= set(tomllib.load(fh).get("solver", {}))
    return keys


if __name__ == "__main__":
    sys.exit(main())
