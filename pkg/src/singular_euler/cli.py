"""Command line front end: construct | verify | rigidity2d | kernels-selftest | bench.

Structured parameters come from a YAML config (``--config``); scalar flags
override config values.  Exit codes: 0 all verdicts pass, 1 a verdict
failed, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .divfree import complete_f3
from .grid import Field2D, FieldError, GridSpec, ScalarField, VectorField3, load_fields, save_fields
from .kernels import (
    CutoffConfig,
    HeatKernel,
    HeatParams,
    PoissonGradKernel,
    direct_convolve_oracle,
    heat_convolve,
    poisson_grad_convolve,
)
from .leray import ModeSet
from .solver import SEEDS, SolverConfig, SolverError, auto_c, make_seed, solve_data
from .verifier import rigidity_2d, verify_solution

log = logging.getLogger("singular_euler")


class ConfigError(ValueError):
    pass


# -- config plumbing ----------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from e


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        data = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {p} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


def _grid_from(cfg: dict, flag: str | None) -> GridSpec:
    block = dict(cfg.get("grid", {}))
    if flag:
        vals = _floats(flag)
        block["n"] = int(vals[0])
        if len(vals) > 1:
            block["period"] = vals[1]
    try:
        return GridSpec(int(block.get("n", 16)), float(block.get("period", 1.0)))
    except (FieldError, ValueError, TypeError) as e:
        raise ConfigError(f"grid: {e}") from e


def _solver_from(cfg: dict, args) -> SolverConfig:
    block = dict(cfg.get("solver", {}))
    if getattr(args, "eps", None):
        block["eps_schedule"] = _floats(args.eps)
    for name in ("dt", "t_max", "n_steps"):
        val = getattr(args, name, None)
        if val is not None:
            block[name] = val
    c = getattr(args, "c", None)
    if c is not None:
        block["c_scale"] = c if c == "auto" else float(c)
    if "eps_schedule" in block:
        block["eps_schedule"] = tuple(block["eps_schedule"])
    try:
        return SolverConfig(**block)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"solver: {e}") from e


def _times_from(cfg: dict, flag: str | None) -> list[float]:
    if flag:
        return _floats(flag)
    return [float(t) for t in cfg.get("verify", {}).get("times", [0.0, 0.5, 0.9])]


# -- subcommands --------------------------------------------------------------


def _write_report(out: Path, rep, stem: str = "report") -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.txt").write_text(rep.to_text())
    (out / f"{stem}.csv").write_text(rep.to_csv())


def _mode_k(grid: GridSpec) -> int:
    return min(4, grid.n // 2 - 1)


def cmd_construct(args, cfg: dict) -> int:
    grid = _grid_from(cfg, args.grid)
    scfg = _solver_from(cfg, args)
    seed_block = dict(cfg.get("seed", {}))
    kind = args.seed or seed_block.get("kind", "random")
    amp = args.amplitude if args.amplitude is not None else float(seed_block.get("amplitude", 1e-2))
    sid = args.seed_id if args.seed_id is not None else int(seed_block.get("seed", 0))
    seed_file = args.seed_file or seed_block.get("file")
    out = Path(args.out or cfg.get("output", {}).get("dir", "run"))

    if seed_file:
        p = Path(seed_file)
        if not p.is_file():
            raise ConfigError(f"seed file {p} does not exist")
        fields = load_fields(p)
        if "f1" not in fields:
            raise ConfigError(f"seed file {p} has no component 'f1'")
        f1 = fields["f1"]
        grid = f1.grid
    else:
        if kind not in SEEDS:
            raise ConfigError(f"unknown seed {kind!r}; choose from {SEEDS}")
        try:
            f1 = make_seed(kind, grid, amp, sid)
        except ValueError as e:
            raise ConfigError(f"seed: {e}") from e

    key = hashlib.sha256(
        repr((scfg, f1.values.tobytes().hex()[:4096], grid)).encode()).hexdigest()[:16]
    ckpt, diag_path = out / "fields.sef", out / "diagnostics.json"
    sol_fields = None
    if args.resume and ckpt.is_file() and diag_path.is_file():
        diag = json.loads(diag_path.read_text())
        if diag.get("config_key") == key:
            sol_fields = load_fields(ckpt)
            c = float(diag["c_scale"])
            log.info("resumed checkpoint %s", ckpt)
    if sol_fields is None:
        sol = solve_data(f1, scfg)
        c = sol.c_scale
        sol_fields = {"f1": sol.f1, "f2": sol.f2, "f3": sol.f3,
                      "v_final": sol.v_final, "w_final": sol.w_final}
        out.mkdir(parents=True, exist_ok=True)
        save_fields(ckpt, sol_fields)
        diag = {"config_key": key, "c_scale": c, "seed": {"kind": kind, "amplitude": amp, "seed": sid},
                "solver": {k: (list(v) if isinstance(v, tuple) else v) for k, v in scfg.__dict__.items()},
                "diagnostics": sol.diagnostics}
        diag_path.write_text(json.dumps(diag, indent=1, sort_keys=True, default=float) + "\n")
    f = VectorField3.of(sol_fields["f1"], sol_fields["f2"], sol_fields["f3"])
    for i in (1, 2, 3):
        ModeSet.from_field(f[i], _mode_k(grid)).save(out / f"modes_f{i}.txt")
    times = [t / c for t in _times_from(cfg, args.times)]
    rep = verify_solution(f, c, times, scfg.convention)
    _write_report(out, rep)
    print(rep.to_text(), end="")
    return 0 if rep.passed else 1


def cmd_verify(args, cfg: dict) -> int:
    c_flag = args.c or str(cfg.get("verify", {}).get("c", "auto"))
    c_saved = None
    if args.data:
        d = Path(args.data)
        path = d / "fields.sef"
        if not path.is_file():
            raise ConfigError(f"{d} holds no fields.sef")
        if (d / "diagnostics.json").is_file():
            c_saved = float(json.loads((d / "diagnostics.json").read_text())["c_scale"])
    elif args.fields:
        path = Path(args.fields)
        if not path.is_file():
            raise ConfigError(f"field file {path} does not exist")
    else:
        raise ConfigError("verify needs --data DIR or --fields FILE")
    fields = load_fields(path)
    missing = [k for k in ("f1", "f2") if k not in fields]
    if missing:
        raise ConfigError(f"field file lacks components {missing}")
    f1, f2 = fields["f1"], fields["f2"]
    f3 = fields["f3"] if "f3" in fields else complete_f3(f1, f2).f3
    if c_flag == "auto":
        c = c_saved if c_saved is not None else auto_c(f1, f2)
    else:
        c = float(c_flag)
        if not c > 0:
            raise ConfigError("--c must be positive")
    conv = cfg.get("solver", {}).get("convention", "laplace")
    times = [t / c for t in _times_from(cfg, args.times)]
    if any(t >= 1.0 / c for t in times):
        raise ConfigError("--times are fractions of 1/c and must be < 1")
    rep = verify_solution(VectorField3.of(f1, f2, f3), c, times, conv)
    if args.out:
        _write_report(Path(args.out), rep)
    print(rep.to_text(), end="")
    return 0 if rep.passed else 1


PRESETS_2D = {
    "streamfunction": (lambda x, y: 2 * np.pi * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y),
                       lambda x, y: -2 * np.pi * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)),
    "zero": (lambda x, y: 0 * x, lambda x, y: 0 * x),
    "shear": (lambda x, y: np.sin(2 * np.pi * (x + y)), lambda x, y: -np.sin(2 * np.pi * (x + y))),
}


def cmd_rigidity2d(args, cfg: dict) -> int:
    n = args.n or int(cfg.get("grid", {}).get("n", 32))
    if args.fields:
        p = Path(args.fields)
        if not p.is_file():
            raise ConfigError(f"2-D field file {p} does not exist")
        data = np.load(p)
        f1, f2 = Field2D(data["f1"], float(data.get("period", 1.0))), Field2D(data["f2"], float(data.get("period", 1.0)))
    else:
        if args.preset not in PRESETS_2D:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS_2D)}")
        s1, s2 = PRESETS_2D[args.preset]
        f1, f2 = Field2D.sample(n, 1.0, s1), Field2D.sample(n, 1.0, s2)
    rep = rigidity_2d(f1, f2)
    text = rep.to_text()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "rigidity.txt").write_text(text)
    print(text, end="")
    return 0 if rep.is_zero else 1


def _selftest_rows(sizes, seed: int = 0):
    rows = []
    for n in sizes:
        grid = GridSpec(n, 1.0)
        cut = CutoffConfig(0.2, 0.45)
        g = make_seed("random", grid, 1.0, seed)
        hp = HeatParams(1.0, 0.02)
        spec = heat_convolve(g, hp)
        t0 = time.perf_counter()
        orc = direct_convolve_oracle(g, HeatKernel(hp), cut)
        rows.append((n, "heat", float(np.max(np.abs(orc.values - spec.values)) / np.max(np.abs(spec.values))),
                     time.perf_counter() - t0))
        for i in (1, 2, 3):
            spec = poisson_grad_convolve(g, i)
            t0 = time.perf_counter()
            orc = direct_convolve_oracle(g, PoissonGradKernel(i), cut)
            rows.append((n, f"poisson_grad_{i}",
                         float(np.max(np.abs(orc.values - spec.values)) / np.max(np.abs(spec.values))),
                         time.perf_counter() - t0))
    return rows


def cmd_selftest(args, cfg: dict) -> int:
    sizes = [int(s) for s in _floats(args.sizes)]
    if any(s > 24 for s in sizes):
        raise ConfigError("kernels-selftest sizes are limited to n <= 24 by the oracle guard")
    rows = _selftest_rows(sizes)
    lines = [f"{'n':>4} {'kernel':<16} {'rel_error':>12} verdict"]
    ok = True
    for n, name, err, _ in rows:
        good = err <= 1e-4
        ok &= good
        lines.append(f"{n:>4} {name:<16} {err:>12.3e} {'PASS' if good else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "kernels_selftest.txt").write_text(text)
    print(text, end="")
    return 0 if ok else 1


def cmd_bench(args, cfg: dict) -> int:
    sizes = [int(s) for s in _floats(args.sizes)]
    lines = ["n,path,kernel,seconds,rel_error"]
    for n in sizes:
        grid = GridSpec(n, 1.0)
        g = make_seed("random", grid, 1.0, 0)
        t0 = time.perf_counter()
        spec = poisson_grad_convolve(g, 1)
        ts = time.perf_counter() - t0
        lines.append(f"{n},spectral,poisson_grad_1,{ts:.6f},0")
        if n <= 24:
            t0 = time.perf_counter()
            orc = direct_convolve_oracle(g, PoissonGradKernel(1), CutoffConfig(0.2, 0.45))
            to = time.perf_counter() - t0
            err = float(np.max(np.abs(orc.values - spec.values)) / np.max(np.abs(spec.values)))
            lines.append(f"{n},oracle,poisson_grad_1,{to:.6f},{err:.3e}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "bench.csv").write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singular-euler", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build (f1, f2, f3) from a seed and verify it")
    c.add_argument("--config")
    c.add_argument("--seed", choices=SEEDS)
    c.add_argument("--seed-file")
    c.add_argument("--seed-id", type=int)
    c.add_argument("--amplitude", type=float)
    c.add_argument("--grid", help="n[,period]")
    c.add_argument("--eps", help="comma-separated decreasing schedule")
    c.add_argument("--dt", type=float)
    c.add_argument("--t-max", dest="t_max", type=float)
    c.add_argument("--n-steps", dest="n_steps", type=int)
    c.add_argument("--c", help="'auto' or a positive number")
    c.add_argument("--times", help="fractions of 1/c")
    c.add_argument("--out")
    c.add_argument("--resume", action="store_true")
    c.set_defaults(func=cmd_construct)

    v = sub.add_parser("verify", help="check stored fields")
    v.add_argument("--config")
    v.add_argument("--data")
    v.add_argument("--fields")
    v.add_argument("--times")
    v.add_argument("--c")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("rigidity2d", help="run the 2-D rigidity chain")
    r.add_argument("--config")
    r.add_argument("--preset", default="streamfunction")
    r.add_argument("--fields", help=".npz with arrays f1, f2")
    r.add_argument("--n", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_rigidity2d)

    k = sub.add_parser("kernels-selftest", help="oracle versus spectral convolutions")
    k.add_argument("--config")
    k.add_argument("--sizes", default="8,16")
    k.add_argument("--out")
    k.set_defaults(func=cmd_selftest)

    b = sub.add_parser("bench", help="size versus time versus accuracy")
    b.add_argument("--config")
    b.add_argument("--sizes", default="8,12,16,32,64")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, FieldError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SolverError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
