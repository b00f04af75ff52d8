"""Uniform cell-centred box grids, grid functions and the local p(x)-energy."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ValidationError

__all__ = [
    "BoxDomain",
    "GridFunction",
    "sample",
    "gradient_magnitude",
    "local_energy",
    "read_grid_csv",
    "write_grid_csv",
]

Evaluator = Callable[[np.ndarray], np.ndarray]


def _as_tuple(v, n=None, cast=float):
    if np.isscalar(v):
        v = [v] * (n or 1)
    return tuple(cast(x) for x in v)


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lower, upper]`` split into ``resolution`` cells per axis."""

    lower: tuple
    upper: tuple
    resolution: tuple

    def __post_init__(self):
        lower = _as_tuple(self.lower)
        n = len(lower)
        upper = _as_tuple(self.upper, n)
        res = _as_tuple(self.resolution, n, int)
        if not (len(upper) == len(res) == n):
            raise ValidationError("lower, upper and resolution must have the same length")
        if any(u <= lo for lo, u in zip(lower, upper)):
            raise ValidationError(f"upper {upper} must exceed lower {lower} on every axis")
        if any(r < 1 for r in res):
            raise ValidationError(f"resolution {res} must be positive")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def interval(cls, a: float, b: float, n_cells: int) -> "BoxDomain":
        return cls((a,), (b,), (n_cells,))

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def h(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.array(self.upper) - np.array(self.lower)))

    def axis_centers(self, k: int) -> np.ndarray:
        return self.lower[k] + (np.arange(self.resolution[k]) + 0.5) * self.h[k]

    def centers(self) -> np.ndarray:
        """Cell centres as an ``(size, n)`` array in row-major order."""
        axes = [self.axis_centers(k) for k in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper),
                "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BoxDomain":
        try:
            return cls(d["lower"], d["upper"], d["resolution"])
        except KeyError as exc:
            raise ValidationError(f"domain descriptor is missing {exc}") from None


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Cell-centre samples of a scalar function, optionally with its closed form.

    ``smooth`` records whether the underlying function is known to be C^1
    (``None`` when unknown, e.g. for data read from disk).
    """

    domain: BoxDomain
    values: np.ndarray
    evaluator: Evaluator | None = None
    smooth: bool | None = None
    descriptor: dict | None = field(default=None)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.domain.size:
            raise ValidationError(
                f"{vals.size} values given for a grid of {self.domain.size} cells")
        vals = vals.reshape(self.domain.shape)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def with_values(self, values) -> "GridFunction":
        """Same grid, new samples; the closed form is dropped."""
        return GridFunction(self.domain, values)

    def shifted(self, c: float) -> "GridFunction":
        ev = None if self.evaluator is None else (lambda x, _f=self.evaluator: _f(x) + c)
        return GridFunction(self.domain, self.values + c, ev, self.smooth, self.descriptor)

    def scaled(self, c: float) -> "GridFunction":
        ev = None if self.evaluator is None else (lambda x, _f=self.evaluator: c * _f(x))
        return GridFunction(self.domain, c * self.values, ev, self.smooth, self.descriptor)

    def evaluate(self, points, allow_interpolation: bool = True) -> np.ndarray:
        """Evaluate off-grid.

        Uses the closed form when present, else multilinear interpolation of the
        cell-centre samples with constant extension outside the box.
        """
        pts = np.asarray(points, dtype=float)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(pts), dtype=float)
        if not allow_interpolation:
            from .errors import UnsupportedInputError
            raise UnsupportedInputError("grid function has no closed-form evaluator")
        d = self.domain
        axes = [d.axis_centers(k) for k in range(d.n)]
        if pts.ndim == 1 and d.n == 1:
            pts = pts[..., None]
        clipped = np.empty_like(pts)
        for k, ax in enumerate(axes):
            clipped[..., k] = np.clip(pts[..., k], ax[0], ax[-1])
        if any(len(ax) == 1 for ax in axes):
            # degenerate axis: nearest value along it
            return np.full(pts.shape[:-1], float(self.values.mean()))
        interp = RegularGridInterpolator(axes, self.values, method="linear")
        return interp(clipped.reshape(-1, d.n)).reshape(pts.shape[:-1])


# -- closed-form test functions ---------------------------------------------

def _coord(x: np.ndarray, axis: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x if x.ndim == 0 else x[..., axis]


def _tent_profile(s, rho):
    """Unit tent max(0, 1-|s|), box-averaged over half-width ``rho`` when rho > 0."""
    s = np.asarray(s, dtype=float)
    if rho == 0:
        return np.maximum(0.0, 1.0 - np.abs(s))

    def antideriv(z):
        z = np.clip(z, -1.0, 1.0)
        return np.where(z <= 0, 0.5 * (z + 1) ** 2, 1.0 - 0.5 * (1 - z) ** 2)

    return (antideriv(s + rho) - antideriv(s - rho)) / (2 * rho)


def _make_evaluator(desc: Mapping, n: int) -> tuple[Evaluator, bool]:
    kind = desc.get("kind")
    if kind == "constant":
        c = float(desc.get("value", 0.0))
        return (lambda x: np.full(np.shape(x)[:-1], c)), True
    if kind == "affine":
        slope = np.array(_as_tuple(desc.get("slope", 1.0), n))
        if slope.size != n:
            raise ValidationError(f"affine slope must have {n} components")
        off = float(desc.get("offset", 0.0))
        return (lambda x: np.asarray(x, dtype=float) @ slope + off), True
    if kind == "sine":
        amp = float(desc.get("amplitude", 1.0))
        freq = float(desc.get("frequency", 1.0))
        phase = float(desc.get("phase", 0.0))
        axis = int(desc.get("axis", 0))
        return (lambda x: amp * np.sin(2 * np.pi * freq * _coord(x, axis) + phase)), True
    if kind == "bump":
        center = np.array(_as_tuple(desc.get("center", 0.5), n))
        radius = float(desc.get("radius", 0.25))
        height = float(desc.get("height", 1.0))
        if radius <= 0:
            raise ValidationError("bump radius must be positive")

        def bump(x):
            r2 = np.sum((np.asarray(x, dtype=float) - center) ** 2, axis=-1) / radius**2
            out = np.zeros_like(r2)
            inside = r2 < 1.0
            out[inside] = height * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
            return out

        return bump, True
    if kind == "tent":
        center = float(desc.get("center", 0.5))
        half = float(desc.get("halfwidth", 0.25))
        height = float(desc.get("height", 1.0))
        rho = float(desc.get("smoothing", 0.0))
        axis = int(desc.get("axis", 0))
        if half <= 0 or not (0 <= rho < half):
            raise ValidationError("tent needs halfwidth > 0 and 0 <= smoothing < halfwidth")
        r = rho / half
        return (lambda x: height * _tent_profile((_coord(x, axis) - center) / half, r)), rho > 0
    raise ValidationError(f"unknown test-function descriptor kind {kind!r}")


def sample(expr: Mapping, domain: BoxDomain) -> GridFunction:
    """Sample a named test function at the cell centres of ``domain``.

    Known kinds: ``constant``, ``affine``, ``sine``, ``bump`` (smooth compact
    support), ``tent`` (piecewise linear, C^1 when ``smoothing > 0``).
    """
    ev, smooth = _make_evaluator(expr, domain.n)
    vals = ev(domain.centers()).reshape(domain.shape)
    return GridFunction(domain, vals, ev, smooth, dict(expr))


def _gradient(u: GridFunction) -> list[np.ndarray]:
    d = u.domain
    if any(r < 3 for r in d.resolution):
        raise ValidationError("gradient needs at least 3 cells per axis")
    if d.n == 1:
        return [np.gradient(u.values, d.h[0], edge_order=2)]
    return list(np.gradient(u.values, *d.h, edge_order=2))


def gradient_magnitude(u: GridFunction) -> GridFunction:
    """|grad u| per cell: central differences inside, second-order one-sided at the edges."""
    parts = _gradient(u)
    mag = np.sqrt(sum(g * g for g in parts))
    return GridFunction(u.domain, mag)


def gradient_vectors(u: GridFunction) -> np.ndarray:
    """Finite-difference gradient as an ``(size, n)`` array."""
    return np.stack([g.ravel() for g in _gradient(u)], axis=-1)


def local_energy(u: GridFunction, p) -> float:
    """Midpoint rule for the integral of |grad u(x)|^p(x) over the box."""
    g = gradient_magnitude(u).flat
    pv = p.sample(u.domain).ravel()
    return float(np.sum(g**pv) * u.domain.cell_volume)


# -- grid file format ---------------------------------------------------------

def _fmt_list(v) -> str:
    return ",".join(repr(float(x)) if not isinstance(x, int) else str(x) for x in v)


def write_grid_csv(path, domain: BoxDomain, values, comments: Sequence[str] = ()) -> None:
    """Write values in row-major order under a ``# box`` header line."""
    vals = np.asarray(values, dtype=float).ravel()
    lines = [f"# {c}" for c in comments]
    lines.append(f"# box lower={_fmt_list(domain.lower)} upper={_fmt_list(domain.upper)} "
                 f"resolution={_fmt_list(domain.resolution)}")
    lines.extend(repr(float(v)) for v in vals)
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_csv(path) -> tuple[BoxDomain, np.ndarray]:
    text = Path(path).read_text().splitlines()
    box = None
    values = []
    for i, line in enumerate(text, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("box "):
                fields = dict(tok.split("=", 1) for tok in body[4:].split())
                try:
                    box = BoxDomain(
                        [float(v) for v in fields["lower"].split(",")],
                        [float(v) for v in fields["upper"].split(",")],
                        [int(v) for v in fields["resolution"].split(",")],
                    )
                except (KeyError, ValueError) as exc:
                    raise ValidationError(f"{path}: malformed box header ({exc})") from None
            continue
        try:
            values.append(float(line.split(",")[0]))
        except ValueError:
            raise ValidationError(f"{path}:{i}: not a number: {line!r}") from None
    if box is None:
        raise ValidationError(f"{path}: missing '# box' header")
    if len(values) != box.size:
        raise ValidationError(f"{path}: expected {box.size} values, found {len(values)}")
    return box, np.array(values).reshape(box.shape)
