"""One-sided directional maximal function and the modular counterexample.

M_omega(u)(x) = sup_{h>0} (1/h) int_0^h |u(x + s omega)| ds, with the sup taken
over a finite log-spaced set of h. Only n = 1 grids are supported, omega = +1 or -1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import UnsupportedInputError, ValidationError
from .exponent_field import ExponentField, field_from_expression
from .grid import BoxDomain, GridFunction

__all__ = [
    "ModularGrowthReport",
    "counterexample_function",
    "counterexample_report",
    "default_h_grid",
    "directional_maximal",
    "growth_exponent",
    "modular",
    "modular_csv",
    "write_modular_csv",
]

H_NODES = 256
REACH = 8.0  # h_grid extends to REACH * domain diameter
REFINE_TOL = 5e-3


def _direction(omega) -> float:
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if w.size != 1:
        raise UnsupportedInputError("directional maximal functions are implemented for n = 1")
    if abs(abs(w[0]) - 1.0) > 1e-9:
        raise ValidationError(f"omega must be a unit vector, |omega| = {abs(w[0])}")
    return 1.0 if w[0] > 0 else -1.0


def default_h_grid(domain: BoxDomain, nodes: int = H_NODES) -> np.ndarray:
    """Log-spaced h from one cell to REACH domain diameters."""
    return np.geomspace(float(domain.h[0]), REACH * domain.diameter, nodes)


def _averages_max(u: GridFunction, sign: float, h_grid: np.ndarray) -> np.ndarray:
    d = u.domain
    cell = float(d.h[0])
    hmax = float(np.max(h_grid))
    # fine line at half-cell spacing so that every cell centre is a node
    ds = cell / 2
    if sign > 0:
        start, stop = d.lower[0], d.upper[0] + hmax
    else:
        start, stop = d.lower[0] - hmax, d.upper[0]
    m = int(math.ceil((stop - start) / ds))
    s = start + ds * np.arange(m + 1)
    vals = np.abs(u.evaluate(s[:, None]))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * ds)])
    x = d.axis_centers(0)
    cx = np.interp(x, s, cum)
    best = np.abs(u.flat).copy()  # h -> 0 limit
    for h in h_grid:
        avg = sign * (np.interp(x + sign * h, s, cum) - cx) / h
        np.maximum(best, avg, out=best)
    return best


def directional_maximal(u: GridFunction, omega=1.0, h_grid: Sequence[float] | None = None,
                        refine_check: bool = False) -> GridFunction:
    """Per-cell max over ``h_grid`` of the trapezoid average of |u| along omega.

    Off-grid values come from the closed form when present, otherwise from
    interpolation with constant extension. With ``refine_check`` the default
    grid is doubled and the relative change is recorded in the descriptor
    (``refinement_ok`` when below 0.5%).
    """
    if u.domain.n != 1:
        raise UnsupportedInputError("directional maximal functions are implemented for n = 1")
    sign = _direction(omega)
    hg = default_h_grid(u.domain) if h_grid is None else np.asarray(h_grid, dtype=float)
    if hg.size == 0 or np.any(hg <= 0):
        raise ValidationError("h_grid must be a nonempty set of positive steps")
    best = _averages_max(u, sign, hg)
    desc = {"kind": "maximal", "omega": sign, "h_nodes": int(hg.size)}
    if refine_check:
        fine = np.geomspace(hg.min(), hg.max(), 2 * hg.size)
        best2 = _averages_max(u, sign, fine)
        scale = np.maximum(np.abs(best2), 1e-300)
        change = float(np.max(np.abs(best2 - best) / scale)) if np.any(best2 > 0) else 0.0
        desc.update(refinement_change=change, refinement_ok=change < REFINE_TOL)
    return GridFunction(u.domain, best, descriptor=desc)


def modular(u: GridFunction, p: ExponentField) -> float:
    """Midpoint rule for int |u|^p(x) dx."""
    pv = p.sample(u.domain)
    return float(np.sum(np.abs(u.values) ** pv) * u.domain.cell_volume)


# -- counterexample ------------------------------------------------------------------

def counterexample_function(x) -> np.ndarray:
    """u(x) = |x|^(-1/3) on [2, inf), 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    x = x[..., 0] if x.ndim and x.shape[-1] == 1 else x
    out = np.zeros_like(x)
    on = x >= 2.0
    out[on] = np.abs(x[on]) ** (-1.0 / 3.0)
    return out


@dataclass
class ModularGrowthReport:
    radii: np.ndarray
    modular_u: np.ndarray
    modular_Mu: np.ndarray
    ratios: np.ndarray
    fitted_exponent: float
    exponent_high: float
    config: dict = field(default_factory=dict)

    @property
    def increments_u(self) -> np.ndarray:
        return np.diff(self.modular_u)

    def rows(self):
        for k, R in enumerate(self.radii):
            ratio = "" if k == 0 else repr(float(self.ratios[k]))
            yield (repr(float(R)), repr(float(self.modular_u[k])),
                   repr(float(self.modular_Mu[k])), ratio)


def growth_exponent(radii, values) -> float:
    """Exponent alpha in values ~ A R^alpha + C, from a log-log fit of the increments.

    Differencing removes the constant contributed by the bounded part of the
    line, which otherwise dominates a direct fit at moderate R.
    """
    R = np.asarray(radii, dtype=float)
    inc = np.diff(np.asarray(values, dtype=float))
    if inc.size < 2 or np.any(inc <= 0):
        return float("nan")
    # increment k covers [R_k, R_k+1]; place it at the geometric midpoint
    mid = np.sqrt(R[1:] * R[:-1])
    return float(np.polyfit(np.log(mid), np.log(inc), 1)[0])


def counterexample_report(R_values: Sequence[float], resolution_per_unit: int = 64,
                          high: float = 8.0, low: float = 2.0) -> ModularGrowthReport:
    """Modulars of u and M_{+1}(u) on [-R, R] for each R.

    p is ``low`` below -2, ``high`` from 2 on, linear on the gap. M(u) is taken
    from the full (untruncated) u, evaluated once on the largest window with a
    single h_grid, so every smaller window sees identical values.
    """
    R = np.asarray(R_values, dtype=float)
    if R.size == 0 or np.any(np.diff(R) <= 0):
        raise ValidationError("radii must be a nonempty increasing sequence")
    if R[0] < 4:
        raise ValidationError(f"radii must be >= 4, got {R[0]}")
    if resolution_per_unit < 1:
        raise ValidationError("resolution_per_unit must be positive")
    Rmax = float(R[-1])
    cells = int(round(2 * Rmax * resolution_per_unit))
    dom = BoxDomain.interval(-Rmax, Rmax, cells)
    u = GridFunction(dom, counterexample_function(dom.axis_centers(0)), counterexample_function,
                     smooth=False, descriptor={"kind": "counterexample"})
    p = field_from_expression({"kind": "step", "low": low, "high": high, "edges": [-2.0, 2.0]}, 1)
    Mu = directional_maximal(u, 1.0)
    x = dom.axis_centers(0)
    pv = p.sample(dom)
    vol = dom.cell_volume
    fu = np.abs(u.flat) ** pv * vol
    fM = np.abs(Mu.flat) ** pv * vol
    mod_u, mod_M = [], []
    for r in R:
        inside = np.abs(x) < r
        mod_u.append(math.fsum(fu[inside].tolist()))
        mod_M.append(math.fsum(fM[inside].tolist()))
    mod_u = np.array(mod_u)
    mod_M = np.array(mod_M)
    ratios = np.concatenate([[np.nan], mod_M[1:] / mod_M[:-1]])
    slope = growth_exponent(R, mod_M)
    config = {"radii": [float(r) for r in R], "resolution_per_unit": int(resolution_per_unit),
              "p_low": low, "p_high": high, "gap": "linear on [-2,2]", "omega": 1,
              "h_nodes": H_NODES, "h_reach": REACH}
    return ModularGrowthReport(R, mod_u, mod_M, ratios, slope, high, config)


def modular_csv(report: ModularGrowthReport) -> str:
    lines = [f"# config={json.dumps(report.config, sort_keys=True)}",
             "R,modular_u,modular_Mu,ratio"]
    lines += [",".join(r) for r in report.rows()]
    lines.append(f"# fitted_exponent={report.fitted_exponent!r}")
    return "\n".join(lines) + "\n"


def write_modular_csv(path, report: ModularGrowthReport) -> None:
    Path(path).write_text(modular_csv(report))
