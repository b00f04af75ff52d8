"""delta-sweeps, limit extrapolation, rate fits and pass/fail property checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .energy import indicator_functional, lambda_direct, lambda_polar, upper_bound_rhs
from .errors import CapabilityError, ValidationError
from .exponent_field import ExponentField
from .grid import GridFunction, gradient_magnitude, local_energy
from .kernels import KernelProfile
from .sphere_constants import gamma_field

__all__ = [
    "BoundCheck",
    "ConvergenceReport",
    "LiminfCheck",
    "bound_check",
    "delta_sweep",
    "fs_local_energy",
    "liminf_check",
    "richardson",
    "fit_rate",
]

RESOLVED_CELLS = 4.0
METHODS = ("direct", "polar", "indicator")


def _fmt(v) -> str:
    return repr(float(v))


@dataclass
class ConvergenceReport:
    deltas: np.ndarray
    values: np.ndarray
    local_energy: float
    rel_errors: np.ndarray
    resolved: np.ndarray
    rate: float | None
    limit: float | None
    order: float = 1.0
    method: str = "direct"
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def limit_rel_error(self) -> float | None:
        if self.limit is None:
            return None
        if self.local_energy > 0:
            return self.limit / self.local_energy - 1.0
        return abs(self.limit)

    def to_csv(self) -> str:
        lines = [f"# config={json.dumps(self.config, sort_keys=True)}"]
        lines += [f"# warning={w}" for w in self.warnings]
        lines.append("delta,lambda,local_energy,rel_error,resolved")
        for d, v, e, r in zip(self.deltas, self.values, self.rel_errors, self.resolved):
            lines.append(f"{_fmt(d)},{_fmt(v)},{_fmt(self.local_energy)},{_fmt(e)},"
                         f"{'true' if r else 'false'}")
        lines.append(f"rate={'unavailable' if self.rate is None else _fmt(self.rate)}")
        lines.append(f"limit={'unavailable' if self.limit is None else _fmt(self.limit)}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _check_schedule(schedule) -> np.ndarray:
    s = np.asarray(schedule, dtype=float)
    if s.size == 0:
        raise ValidationError("delta schedule is empty")
    if np.any(s <= 0):
        raise ValidationError("delta schedule must be positive")
    if s.size > 1:
        ratio = s[1:] / s[:-1]
        if np.any(ratio >= 1):
            raise ValidationError("delta schedule must be strictly decreasing")
        if np.ptp(ratio) > 1e-9 * ratio.max():
            raise ValidationError("delta schedule must be geometric")
    return s


def richardson(d1: float, v1: float, d2: float, v2: float, order: float = 1.0) -> float:
    """Limit of v(delta) = L + c delta^order from two samples."""
    rq = (d2 / d1) ** order
    return (v2 - rq * v1) / (1.0 - rq)


def fit_rate(deltas, errors) -> float | None:
    """Slope of log|error| against log delta; needs 3 nonzero errors."""
    d = np.asarray(deltas, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    keep = e > 0
    if keep.sum() < 3:
        return None
    return float(np.polyfit(np.log(d[keep]), np.log(e[keep]), 1)[0])


def fs_local_energy(u: GridFunction, p: ExponentField) -> float:
    """Midpoint rule for int K_{n,p(x)} |grad u|^p(x), the indicator-functional limit."""
    g = gradient_magnitude(u).flat
    pv = p.sample(u.domain).ravel()
    K = gamma_field(u.domain.n, pv) / pv
    return float(np.sum(K * g**pv) * u.domain.cell_volume)


def _scope_warnings(u: GridFunction, p: ExponentField) -> list:
    if p.p_minus == 1.0 and u.smooth is not True:
        return ["p- = 1 with u not known to be C1: the limit is only claimed for C1 functions"]
    return []


def _evaluate(u, p, kernel, delta, method, threads, near_field):
    if method == "direct":
        return lambda_direct(u, p, kernel, delta, near_field=near_field, threads=threads).value
    if method == "polar":
        return lambda_polar(u, p, kernel, delta).value
    if method == "indicator":
        return indicator_functional(u, p, delta, near_field=near_field, threads=threads)
    raise ValidationError(f"unknown sweep method {method!r}; choose from {', '.join(METHODS)}")


def delta_sweep(u: GridFunction, p: ExponentField, kernel: KernelProfile | None,
                schedule: Sequence[float], method: str = "direct", order: float = 1.0,
                threads: int | None = None, near_field: bool = True,
                log=None) -> ConvergenceReport:
    """Evaluate the functional along a geometric delta schedule.

    The reference is the local energy (with the K_{n,p(x)} weight for the
    indicator method). Entries with delta below 4 cells are flagged
    under-resolved and excluded from the rate fit and the extrapolation.
    """
    deltas = _check_schedule(schedule)
    if method not in METHODS:
        raise ValidationError(f"unknown sweep method {method!r}; choose from {', '.join(METHODS)}")
    if kernel is None and method != "indicator":
        raise ValidationError(f"method {method!r} needs a kernel")
    ref = fs_local_energy(u, p) if method == "indicator" else local_energy(u, p)
    values = np.empty(deltas.size)
    for k, d in enumerate(deltas):
        values[k] = _evaluate(u, p, kernel, d, method, threads, near_field)
        if log is not None:
            log(f"delta={float(d)!r} lambda={float(values[k])!r}")
    resolved = deltas >= RESOLVED_CELLS * float(np.min(u.domain.h)) * (1 - 1e-12)
    errs = values / ref - 1.0 if ref > 0 else np.abs(values - ref)
    rd, rv = deltas[resolved], values[resolved]
    rate = fit_rate(rd, errs[resolved]) if rd.size >= 3 else None
    if rd.size >= 2:
        limit = richardson(rd[-2], rv[-2], rd[-1], rv[-1], order)
    elif rd.size == 1:
        limit = float(rv[-1])
    else:
        limit = None
    warnings = _scope_warnings(u, p)
    if not resolved.any():
        warnings.append("every delta is under-resolved; rate and limit unavailable")
    config = {
        "method": method,
        "schedule": [float(d) for d in deltas],
        "richardson_order": order,
        "resolved_cells": RESOLVED_CELLS,
        "near_field": near_field,
        "domain": u.domain.to_dict(),
        "u": u.descriptor,
        "p": p.descriptor,
        "kernel": None if kernel is None else kernel.descriptor,
    }
    return ConvergenceReport(deltas, values, float(ref), errs, resolved, rate,
                             None if limit is None else float(limit), order, method,
                             warnings, config)


@dataclass
class LiminfCheck:
    passed: bool
    margin: float
    worst_delta: float | None
    ratio: float
    variant: str


_REQUIRES = {"monotone": ("Hp3",), "lower_bounds": ("Hp3", "phi1", "phi2")}


def liminf_check(u: GridFunction, p: ExponentField, kernel: KernelProfile,
                 schedule: Sequence[float], tol: float = 0.05, variant: str = "monotone",
                 threads: int | None = None, report: ConvergenceReport | None = None) -> LiminfCheck:
    """min over resolved delta of Lambda_delta >= (1 - tol) * local energy.

    ``variant`` selects the hypotheses demanded of the kernel: ``monotone`` needs
    monotonicity, ``lower_bounds`` also needs both lower bounds.
    """
    if variant not in _REQUIRES:
        raise ValidationError(f"unknown liminf variant {variant!r}")
    kernel.require(*_REQUIRES[variant])
    rep = report or delta_sweep(u, p, kernel, schedule, "direct", threads=threads)
    L = rep.local_energy
    vals = rep.values[rep.resolved]
    if vals.size == 0:
        raise ValidationError("no resolved delta in the schedule")
    k = int(np.argmin(vals))
    if L == 0:
        return LiminfCheck(True, float(vals[k]), float(rep.deltas[rep.resolved][k]), 1.0, variant)
    ratio = float(vals[k] / L)
    margin = ratio - (1.0 - tol)
    return LiminfCheck(margin >= 0, margin, float(rep.deltas[rep.resolved][k]), ratio, variant)


@dataclass
class BoundCheck:
    ratios: np.ndarray
    c_star: float
    passed: bool
    vacuous: bool = False
    deltas: np.ndarray | None = None


def bound_check(u: GridFunction, p: ExponentField, kernel: KernelProfile,
                schedule: Sequence[float], c_star: float | None = None, slack: float = 1.05,
                threads: int | None = None, report: ConvergenceReport | None = None) -> BoundCheck:
    """Ratio series Lambda_delta / (||grad u||_{p+}^{p+} + ||grad u||_{p-}^{p-}).

    The bound's constant is existential, so the check is non-explosion: every
    ratio must stay within ``slack`` times C*, which defaults to the ratio at the
    coarsest delta.
    """
    if p.p_minus <= 1.0:
        raise CapabilityError("the upper bound is stated for p- > 1; this field has p- = 1")
    deltas = _check_schedule(schedule)
    hi, lo = upper_bound_rhs(u, p)
    denom = hi + lo
    if denom == 0:
        return BoundCheck(np.zeros(deltas.size), 0.0 if c_star is None else c_star, True, True, deltas)
    rep = report or delta_sweep(u, p, kernel, deltas, "direct", threads=threads)
    ratios = rep.values / denom
    cs = float(ratios[0]) if c_star is None else float(c_star)
    return BoundCheck(ratios, cs, bool(np.all(ratios <= slack * cs)), False, deltas)
