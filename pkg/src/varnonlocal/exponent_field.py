"""Variable exponent fields p(x) with their essential bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ValidationError
from .grid import BoxDomain, read_grid_csv

__all__ = ["ExponentField", "field_from_expression", "field_from_grid"]

BOUND_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ExponentField:
    """A measurable exponent p: R^n -> [1, inf) with bounds ``p_minus <= p <= p_plus``."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    p_minus: float
    p_plus: float
    n: int
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (1.0 <= self.p_minus <= self.p_plus < np.inf):
            raise ValidationError(
                f"exponent bounds must satisfy 1 <= p- <= p+ < inf, got "
                f"p-={self.p_minus}, p+={self.p_plus}")

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0 or pts.shape[-1] != self.n:
            pts = pts[..., None]
        return np.asarray(self.evaluator(pts), dtype=float)

    def sample(self, domain: BoxDomain) -> np.ndarray:
        """p at the cell centres, reshaped to the grid, with the bounds re-checked."""
        if domain.n != self.n:
            raise ValidationError(f"field is {self.n}-dimensional, domain is {domain.n}-dimensional")
        vals = self(domain.centers()).reshape(domain.shape)
        lo, hi = float(vals.min()), float(vals.max())
        if lo < self.p_minus - BOUND_TOL or hi > self.p_plus + BOUND_TOL:
            raise ValidationError(
                f"sampled exponent range [{lo}, {hi}] escapes declared bounds "
                f"[{self.p_minus}, {self.p_plus}]")
        return vals


def _axis_bounds(desc, domain, axis):
    if "lower" in desc or "upper" in desc:
        return float(desc.get("lower", 0.0)), float(desc.get("upper", 1.0))
    if domain is not None:
        return domain.lower[axis], domain.upper[axis]
    return 0.0, 1.0


def field_from_expression(expr: Mapping, n: int, domain: BoxDomain | None = None) -> ExponentField:
    """Build one of the named exponent profiles.

    ``constant``  ``{"value": c}``
    ``ramp``      ``{"from": p0, "to": p1, "axis": k}``, linear across the box along
                  axis k (the box comes from ``domain`` or ``lower``/``upper`` keys),
                  clamped outside it
    ``step``      ``{"low": p0, "high": p1, "edges": [x0, x1]}``: p0 below x0, p1 from
                  x1 on, linear in between
    ``bump``      ``{"base": p0, "peak": p1, "center": c, "width": w}``, Gaussian profile
    ``grid``      ``{"path": file}`` in the grid CSV format
    """
    kind = expr.get("kind")
    desc = dict(expr)
    if kind == "constant":
        c = float(expr["value"])
        if c < 1:
            raise ValidationError(f"constant exponent {c} < 1")
        return ExponentField(lambda x: np.full(np.shape(x)[:-1], c), c, c, n, desc)
    if kind == "ramp":
        p0, p1 = float(expr["from"]), float(expr["to"])
        axis = int(expr.get("axis", 0))
        if axis >= n:
            raise ValidationError(f"ramp axis {axis} out of range for n={n}")
        a, b = _axis_bounds(expr, domain, axis)
        if min(p0, p1) < 1:
            raise ValidationError(f"ramp values {p0}->{p1} fall below 1")
        desc.update(lower=a, upper=b)

        def ramp(x):
            s = np.clip((x[..., axis] - a) / (b - a), 0.0, 1.0)
            return p0 + (p1 - p0) * s

        return ExponentField(ramp, min(p0, p1), max(p0, p1), n, desc)
    if kind == "step":
        lo, hi = float(expr["low"]), float(expr["high"])
        x0, x1 = (float(e) for e in expr["edges"])
        axis = int(expr.get("axis", 0))
        if not x0 < x1:
            raise ValidationError("step edges must be increasing")
        if min(lo, hi) < 1:
            raise ValidationError(f"step values {lo}, {hi} fall below 1")

        def step(x):
            s = np.clip((x[..., axis] - x0) / (x1 - x0), 0.0, 1.0)
            return lo + (hi - lo) * s

        return ExponentField(step, min(lo, hi), max(lo, hi), n, desc)
    if kind == "bump":
        base, peak = float(expr["base"]), float(expr["peak"])
        center = np.broadcast_to(np.asarray(expr.get("center", 0.5), dtype=float), (n,)).copy()
        width = float(expr.get("width", 0.1))
        if min(base, peak) < 1:
            raise ValidationError(f"bump values {base}, {peak} fall below 1")

        def bump(x):
            r2 = np.sum((x - center) ** 2, axis=-1)
            return base + (peak - base) * np.exp(-r2 / (2 * width**2))

        return ExponentField(bump, min(base, peak), max(base, peak), n, desc)
    if kind == "grid":
        dom, values = read_grid_csv(expr["path"])
        if dom.n != n:
            raise ValidationError(f"grid file is {dom.n}-dimensional, expected {n}")
        f = field_from_grid(values, dom)
        f.descriptor.update(desc)
        return f
    raise ValidationError(f"unknown exponent descriptor kind {kind!r}")


def field_from_grid(values, domain: BoxDomain) -> ExponentField:
    """Piecewise-constant field on the cells of ``domain``; clamped outside the box."""
    vals = np.asarray(values, dtype=float)
    if vals.size != domain.size:
        raise ValidationError(f"{vals.size} exponent values for {domain.size} cells")
    vals = vals.reshape(domain.shape).copy()
    bad = np.argwhere(~(vals >= 1.0))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise ValidationError(f"exponent value {vals[idx]} < 1 at index {idx if len(idx) > 1 else idx[0]}")
    vals.setflags(write=False)
    lower = np.array(domain.lower)
    h = domain.h
    res = np.array(domain.resolution)

    def nearest(x):
        idx = np.floor((x - lower) / h).astype(int)
        idx = np.clip(idx, 0, res - 1)
        return vals[tuple(idx[..., k] for k in range(domain.n))]

    return ExponentField(nearest, float(vals.min()), float(vals.max()), domain.n,
                         {"kind": "grid", "domain": domain.to_dict()})
