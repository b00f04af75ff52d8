"""Command-line entry point.

Exit codes: 0 success, 2 validation error (bad arguments, missing files, failed
preconditions), 1 runtime failure or a failed check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .convergence import delta_sweep
from .denoise import DenoiseConfig, denoise
from .energy import epsilon_functional, indicator_functional, lambda_direct, lambda_polar
from .errors import ValidationError
from .exponent_field import field_from_expression
from .grid import BoxDomain, GridFunction, read_grid_csv, sample, write_grid_csv
from .kernels import check_hypotheses, check_normalization, kernel_from_descriptor
from .maximal import counterexample_report, modular_csv
from .sphere_constants import gamma, gamma_mc

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _load_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ValidationError(f"{where}: missing required key {key!r}")
    return cfg[key]


def _positive(value, name: str) -> float:
    v = float(value)
    if not v > 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return v


def _sub_json(value, base: Path):
    """Inline descriptor, or a path (relative to the config) to a JSON file holding one."""
    if isinstance(value, str):
        path = Path(value)
        return _load_json(path if path.is_absolute() else base / path)
    return value


def _resolve_paths(desc: dict, base: Path) -> dict:
    d = dict(desc)
    if "path" in d and not Path(d["path"]).is_absolute():
        d["path"] = str(base / d["path"])
    if "path" in d and not Path(d["path"]).is_file():
        raise ValidationError(f"data file not found: {d['path']}")
    return d


def _problem(cfg: dict, base: Path):
    """Domain, u, p and kernel descriptor from a run/sweep config."""
    u_desc = _resolve_paths(_sub_json(_require(cfg, "u", "config"), base), base)
    if u_desc.get("kind") == "file":
        dom, vals = read_grid_csv(u_desc["path"])
        u = GridFunction(dom, vals, descriptor=u_desc)
    else:
        dom = BoxDomain.from_dict(_require(cfg, "domain", "config"))
        u = sample(u_desc, dom)
    p_desc = _resolve_paths(_sub_json(_require(cfg, "p", "config"), base), base)
    p = field_from_expression(p_desc, dom.n, dom)
    k_desc = _sub_json(cfg.get("kernel"), base)
    kernel = None if k_desc is None else kernel_from_descriptor(k_desc, p, dom)
    return u, p, kernel


def _schedule(sched) -> list:
    if isinstance(sched, dict):
        start = _positive(_require(sched, "start", "schedule"), "schedule start")
        ratio = float(_require(sched, "ratio", "schedule"))
        count = int(_require(sched, "count", "schedule"))
        if not 0 < ratio < 1:
            raise ValidationError(f"schedule ratio must lie in (0, 1), got {ratio}")
        if count < 1:
            raise ValidationError("schedule count must be >= 1")
        return [start * ratio**k for k in range(count)]
    return [float(d) for d in sched]


def _config_header(cfg: dict) -> str:
    return f"config={json.dumps(cfg, sort_keys=True)}"


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


# -- subcommands --------------------------------------------------------------------

def cmd_gamma(args) -> int:
    value = gamma(args.n, args.p)
    cols, row = ["n", "p", "gamma"], [str(args.n), repr(float(args.p)), repr(value)]
    if args.mc is not None:
        est, se = gamma_mc(args.n, args.p, args.mc, args.seed)
        cols += ["mc_estimate", "mc_std_error", "samples", "seed"]
        row += [repr(est), repr(se), str(args.mc), str(args.seed)]
    text = ",".join(cols) + "\n" + ",".join(row) + "\n"
    if args.out:
        cfg = {"n": args.n, "p": args.p, "mc": args.mc, "seed": args.seed}
        Path(args.out).write_text(f"# {_config_header(cfg)}\n" + text)
    sys.stdout.write(text)
    return 0


def cmd_kernel_check(args) -> int:
    base = Path(args.kernel).parent
    k_desc = _load_json(args.kernel)
    p_desc = _resolve_paths(_load_json(args.pfield), Path(args.pfield).parent)
    n = int(p_desc.get("n", args.n))
    lower = p_desc.get("lower", 0.0)
    upper = p_desc.get("upper", 1.0)
    dom = BoxDomain(np.broadcast_to(lower, (n,)).tolist(), np.broadcast_to(upper, (n,)).tolist(),
                    [1] * n)
    p = field_from_expression(p_desc, n, dom)
    kernel = kernel_from_descriptor(_sub_json(k_desc, base), p, dom)
    rng = np.random.default_rng(args.seed)
    pts = np.array(dom.lower) + rng.random((args.samples, n)) * (np.array(dom.upper) - np.array(dom.lower))
    residuals = [check_normalization(kernel, x) for x in pts]
    worst = float(np.max(np.abs(residuals)))
    hyps = check_hypotheses(kernel, dom)
    out = {"kernel": kernel.kind, "max_residual": worst, "normalized": worst < args.tol,
           "hypotheses": hyps, "samples": args.samples, "seed": args.seed}
    print(json.dumps(out, sort_keys=True))
    if not kernel.normalized:
        return 0
    return 0 if worst < args.tol else 1


def cmd_energy(args) -> int:
    cfg = _load_json(args.config)
    base = Path(args.config).parent
    method = cfg.get("method", "direct")
    if method not in ("direct", "polar", "indicator", "epsilon"):
        raise ValidationError(f"unknown method {method!r}")
    u, p, kernel = _problem(cfg, base)
    threads = _threads(args)
    near = bool(cfg.get("near_field", True))
    t0 = time.perf_counter()
    if method == "epsilon":
        eps = float(_require(cfg, "epsilon", "config"))
        res = {"value": epsilon_functional(u, p, eps, near_field=near, threads=threads),
               "method": "epsilon", "tail_bound": 0.0, "pairs_evaluated": u.domain.size * (u.domain.size - 1)}
    elif method == "indicator":
        delta = _positive(_require(cfg, "delta", "config"), "delta")
        res = {"value": indicator_functional(u, p, delta, near_field=near, threads=threads),
               "method": "indicator", "tail_bound": 0.0,
               "pairs_evaluated": u.domain.size * (u.domain.size - 1)}
    else:
        if kernel is None:
            raise ValidationError(f"method {method!r} needs a kernel descriptor")
        delta = _positive(_require(cfg, "delta", "config"), "delta")
        if method == "direct":
            r = lambda_direct(u, p, kernel, delta, near_field=near, threads=threads)
        else:
            r = lambda_polar(u, p, kernel, delta, h_max=float(cfg.get("h_max", 1e3)),
                             angular_nodes=int(cfg.get("angular_nodes", 64)))
        res = r.to_dict()
    wall_ms = (time.perf_counter() - t0) * 1e3
    if args.out:
        Path(args.out).write_text(json.dumps(res, sort_keys=True) + "\n")
    print(json.dumps({**res, "wall_ms": round(wall_ms, 3)}))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_json(args.config)
    base = Path(args.config).parent
    u, p, kernel = _problem(cfg, base)
    schedule = _schedule(_require(cfg, "schedule", "config"))
    method = cfg.get("method", "direct")
    log = (lambda m: print(m, file=sys.stderr)) if not args.quiet else None
    rep = delta_sweep(u, p, kernel, schedule, method, order=float(cfg.get("order", 1.0)),
                      threads=_threads(args), near_field=bool(cfg.get("near_field", True)), log=log)
    rep.config["source"] = cfg
    text = rep.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.figure:
        from .plotting import plot_sweep
        plot_sweep(rep, args.figure)
    return 0


def cmd_maximal_demo(args) -> int:
    try:
        radii = [float(r) for r in args.radii.split(",") if r.strip()]
    except ValueError:
        raise ValidationError(f"--radii must be a comma-separated list of numbers, got {args.radii!r}") from None
    rep = counterexample_report(radii, args.res, high=args.high)
    text = modular_csv(rep)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    if args.figure:
        from .plotting import plot_modular_growth
        plot_modular_growth(rep, args.figure)
    return 0


def cmd_denoise(args) -> int:
    if not Path(args.input).is_file():
        raise ValidationError(f"input file not found: {args.input}")
    dom, vals = read_grid_csv(args.input)
    f = GridFunction(dom, vals)
    p_desc = _resolve_paths(_load_json(args.pfield), Path(args.pfield).parent)
    p = field_from_expression(p_desc, dom.n, dom)
    kernel = kernel_from_descriptor(_load_json(args.kernel), p, dom)
    cfg = DenoiseConfig(lam=args.lam, delta=args.delta, max_iters=args.max_iters, step=args.step,
                        backtrack=args.backtrack, tol=args.tol, threads=_threads(args))
    u, trace = denoise(f, p, kernel, cfg)
    echo = {"input": args.input, "pfield": p_desc, "kernel": kernel.descriptor, "lambda": args.lam,
            "delta": args.delta, "max_iters": args.max_iters, "step": args.step,
            "backtrack": args.backtrack, "tol": args.tol}
    header = _config_header(echo)
    write_grid_csv(args.out, dom, u.flat, comments=[header, f"status={trace.status}"])
    if args.trace:
        Path(args.trace).write_text(trace.to_csv(f"# {header}"))
    if args.figure:
        from .plotting import plot_denoise
        plot_denoise(f, u, trace, args.figure)
    print(json.dumps({"iterations": trace.iterations, "status": trace.status,
                      "final_energy": trace.energies[-1]}))
    return 0


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="varnonlocal", description="Variable-exponent nonlocal energy laboratory")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def threads(s):
        s.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: available cores); results do not depend on it")

    g = sub.add_parser("gamma", help="sphere constant gamma_{n,p}")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=float, required=True)
    g.add_argument("--mc", type=int, default=None, help="Monte Carlo sample count")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gamma)

    k = sub.add_parser("kernel-check", help="normalization residual and hypothesis flags")
    k.add_argument("--kernel", required=True)
    k.add_argument("--pfield", required=True)
    k.add_argument("--n", type=int, default=1)
    k.add_argument("--samples", type=int, default=32)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--tol", type=float, default=1e-8)
    k.set_defaults(func=cmd_kernel_check)

    e = sub.add_parser("energy", help="evaluate one functional")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    threads(e)
    e.set_defaults(func=cmd_energy)

    s = sub.add_parser("sweep", help="delta-sweep with rate fit and extrapolated limit")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--figure")
    s.add_argument("--quiet", action="store_true")
    threads(s)
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("maximal-demo", help="modular growth of the maximal counterexample")
    m.add_argument("--radii", default="8,16,32,64,128")
    m.add_argument("--res", type=int, default=64)
    m.add_argument("--high", type=float, default=8.0, help="exponent on [2, inf)")
    m.add_argument("--out")
    m.add_argument("--figure")
    m.set_defaults(func=cmd_maximal_demo)

    d = sub.add_parser("denoise", help="gradient-descent denoiser")
    d.add_argument("--input", required=True)
    d.add_argument("--pfield", required=True)
    d.add_argument("--kernel", required=True)
    d.add_argument("--lambda", dest="lam", type=float, required=True)
    d.add_argument("--delta", type=float, required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--trace")
    d.add_argument("--max-iters", type=int, default=200)
    d.add_argument("--step", type=float, default=1.0)
    d.add_argument("--backtrack", type=float, default=0.5)
    d.add_argument("--tol", type=float, default=1e-6)
    d.add_argument("--figure")
    threads(d)
    d.set_defaults(func=cmd_denoise)
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
        if not getattr(args, "command", None):
            ap.print_usage(sys.stderr)
            print("varnonlocal: error: a subcommand is required", file=sys.stderr)
            return 2
        return int(args.func(args))
    except (ValidationError, ValueError, KeyError, TypeError) as exc:
        # ValidationError is a ValueError; plain ones come from malformed config values
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
