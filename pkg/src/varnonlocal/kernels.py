"""Kernel profiles phi(x, t) and their hypothesis checks.

Every kernel built here has the two-branch form

    phi(x, t) = A(x) t^(p(x)+1)   for 0 <= t <= 1
              = B(x)              for t > 1

which covers the model kernel, the indicator kernel and the majorant. The
branch containing t = 1 is the lower one (left-continuity at the jump).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

from .errors import CapabilityError, NormalizationError, ValidationError
from .exponent_field import ExponentField
from .grid import BoxDomain
from .sphere_constants import gamma, gamma_field

__all__ = [
    "BoundKernel",
    "KernelProfile",
    "ScaledKernel",
    "check_hypotheses",
    "check_normalization",
    "kernel_from_descriptor",
    "make_indicator_kernel",
    "make_majorant_kernel",
    "make_model_kernel",
]

Coef = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoundKernel:
    """Kernel parameters sampled at a set of points (one row per point)."""

    p: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def phi(self, t, rows=slice(None)):
        """phi at levels ``t``; ``t`` broadcasts against ``p[rows][:, None]``."""
        t = np.asarray(t, dtype=float)
        p, A, B = self.p[rows], self.A[rows], self.B[rows]
        if t.ndim > p.ndim:
            p, A, B = p[:, None], A[:, None], B[:, None]
        low = A * np.minimum(t, 1.0) ** (p + 1)
        return np.where(t <= 1.0, low, B)

    def dphi(self, t, rows=slice(None)):
        """Left derivative d/dt phi (so the t = 1 kink takes the power-branch slope)."""
        t = np.asarray(t, dtype=float)
        p, A = self.p[rows], self.A[rows]
        if t.ndim > p.ndim:
            p, A = p[:, None], A[:, None]
        return np.where(t <= 1.0, A * (p + 1) * np.minimum(t, 1.0) ** p, 0.0)


@dataclass(frozen=True, eq=False)
class KernelProfile:
    """A kernel family with its growth constants and capability flags.

    ``a``/``b`` are the upper constants (phi <= a t^(p+1) on [0, 1], phi <= b);
    ``alpha``/``beta`` are lower constants when the kernel has them. ``breaks``
    lists the t-values where phi or its slope jumps.
    """

    kind: str
    p_field: ExponentField
    n: int
    lower_coef: Coef
    upper_level: Coef
    a: float
    b: float
    alpha: float | None = None
    beta: float | None = None
    monotone: bool = True
    differentiable: bool = True
    normalized: bool = True
    breaks: tuple = (1.0,)
    descriptor: dict = field(default_factory=dict)

    def bind(self, points) -> BoundKernel:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        p = self.p_field(pts)
        A = np.broadcast_to(np.asarray(self.lower_coef(pts), dtype=float), p.shape).copy()
        B = np.broadcast_to(np.asarray(self.upper_level(pts), dtype=float), p.shape).copy()
        return BoundKernel(p, A, B)

    def bind_grid(self, domain: BoxDomain) -> BoundKernel:
        bk = self.bind(domain.centers())
        if self.kind == "model":
            _check_band(bk, self.n, domain.centers())
        return bk

    def phi(self, x, t):
        """Evaluate phi(x, t) for points ``x`` (shape (m, n)) and levels ``t`` (shape (m,) or (m, k))."""
        return self.bind(x).phi(t)

    def scaled(self, delta: float) -> "ScaledKernel":
        return ScaledKernel(self, delta)

    @property
    def satisfies_phi1(self) -> bool:
        return self.alpha is not None and self.alpha > 0

    @property
    def satisfies_phi2(self) -> bool:
        return self.beta is not None and self.beta > 0

    def require(self, *hypotheses: str) -> None:
        """Raise CapabilityError unless every named hypothesis holds."""
        flags = {"Hp3": self.monotone, "phi1": self.satisfies_phi1,
                 "phi2": self.satisfies_phi2, "differentiable": self.differentiable,
                 "Hp4": self.normalized}
        missing = [h for h in hypotheses if not flags[h]]
        if missing:
            names = {"Hp3": "(Hp3) monotonicity in t",
                     "phi1": "(phi1) lower bound alpha t^(p+ + 1) on [0, 1]",
                     "phi2": "(phi2) lower bound beta for t > 1",
                     "differentiable": "piecewise differentiability in t",
                     "Hp4": "(Hp4) normalization"}
            raise CapabilityError(
                f"{self.kind} kernel lacks " + ", ".join(names[m] for m in missing))


@dataclass(frozen=True)
class ScaledKernel:
    """phi_delta(x, u) = delta^p(x) * phi(x, u / delta)."""

    base: KernelProfile
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError(f"delta must be positive, got {self.delta}")

    def __call__(self, x, u):
        pts = np.asarray(x, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        p = self.base.p_field(pts)
        u = np.asarray(u, dtype=float)
        scale = self.delta ** (p if u.ndim == p.ndim else p[:, None])
        return scale * self.base.phi(pts, u / self.delta)


# -- constructors --------------------------------------------------------------

def _admissible_max(p, n):
    return p / (gamma_field(n, p) * (p + 1))


def _check_band(bk: BoundKernel, n: int, points) -> None:
    amax = _admissible_max(bk.p, n)
    bad = np.nonzero((bk.A < 0) | (bk.A > amax * (1 + 1e-12)))[0]
    if bad.size:
        i = int(bad[0])
        x = np.asarray(points)[i]
        raise ValidationError(
            f"model kernel coefficient a(x)={bk.A[i]:.6g} outside admissible band "
            f"[0, {amax[i]:.6g}] at x={np.round(x, 12).tolist()}")


def _validation_points(domain: BoxDomain | None, n: int, count: int = 64) -> np.ndarray:
    """Lattice on the closed box (endpoints included so sup/inf of monotone profiles are hit)."""
    lower = (0.0,) * n if domain is None else domain.lower
    upper = (1.0,) * n if domain is None else domain.upper
    side = count if n == 1 else int(np.ceil(count ** (1.0 / n)))
    axes = [np.linspace(lo, hi, side) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _coef_from(a_field, p_field: ExponentField, n: int) -> Coef:
    """a(x) from a number, ``"max"``, ``{"kind": "fraction", "value": theta}`` or a callable."""
    if callable(a_field):
        return a_field
    if a_field == "max":
        return lambda x: _admissible_max(p_field(x), n)
    if isinstance(a_field, Mapping):
        if a_field.get("kind") == "fraction":
            theta = float(a_field["value"])
            return lambda x: theta * _admissible_max(p_field(x), n)
        if a_field.get("kind") == "constant":
            a_field = float(a_field["value"])
        else:
            raise ValidationError(f"unsupported coefficient descriptor {dict(a_field)!r}")
    c = float(a_field)
    return lambda x: np.full(np.shape(x)[:-1], c)


def make_model_kernel(a_field, p_field: ExponentField, n: int,
                      domain: BoxDomain | None = None) -> KernelProfile:
    """Model kernel a(x) t^(p+1) on [0, 1], b(x) = p(x)(1/gamma_{n,p(x)} - a(x)) beyond.

    a(x) must lie in [0, p/(gamma (p+1))] wherever it is sampled: on a 64-point
    lattice of ``domain`` (unit box by default) here, and on every grid the
    kernel is later bound to.
    """
    if p_field.n != n:
        raise ValidationError("exponent field dimension does not match n")
    coef = _coef_from(a_field, p_field, n)

    def level(x):
        p = p_field(x)
        return p * (1.0 / gamma_field(n, p) - coef(x))

    pts = _validation_points(domain, n)
    proto = KernelProfile("model", p_field, n, coef, level, 0.0, 0.0)
    bk = proto.bind(pts)
    _check_band(bk, n, pts)
    a_sup, b_sup = float(bk.A.max()), float(bk.B.max())
    a_inf, b_inf = float(bk.A.min()), float(bk.B.min())
    desc = {"kind": "model", "a": a_field if not callable(a_field) else "callable"}
    return KernelProfile(
        "model", p_field, n, coef, level, a_sup, b_sup,
        alpha=a_inf if a_inf > 0 else None,
        beta=min(a_inf, b_inf) if min(a_inf, b_inf) > 0 else None,
        monotone=True, differentiable=True, normalized=True, descriptor=desc)


def make_indicator_kernel(p_field: ExponentField, n: int,
                          domain: BoxDomain | None = None) -> KernelProfile:
    """c(x) chi_(1,inf)(t) with c(x) = p(x)/gamma_{n,p(x)}, normalized exactly."""
    if p_field.n != n:
        raise ValidationError("exponent field dimension does not match n")

    def level(x):
        p = p_field(x)
        return p / gamma_field(n, p)

    bk = KernelProfile("indicator", p_field, n, lambda x: 0.0, level, 0, 0).bind(
        _validation_points(domain, n))
    return KernelProfile(
        "indicator", p_field, n, lambda x: np.zeros(np.shape(x)[:-1]), level,
        0.0, float(bk.B.max()), alpha=None, beta=float(bk.B.min()),
        monotone=True, differentiable=False, normalized=True,
        descriptor={"kind": "indicator"})


def make_majorant_kernel(a: float, b: float, p_field: ExponentField) -> KernelProfile:
    """a t^(p(x)+1) on [0, 1], b beyond; dominates any kernel with constants (a, b)."""
    if a < 0 or b < 0:
        raise ValidationError("majorant constants must be >= 0")
    n = p_field.n
    return KernelProfile(
        "majorant", p_field, n,
        lambda x: np.full(np.shape(x)[:-1], float(a)),
        lambda x: np.full(np.shape(x)[:-1], float(b)),
        float(a), float(b), alpha=a if a > 0 else None,
        beta=min(a, b) if min(a, b) > 0 else None,
        monotone=a <= b, differentiable=True, normalized=False,
        descriptor={"kind": "majorant", "a": a, "b": b})


def level_indicator_kernel(p_field: ExponentField, n: int, level: float = 1.0) -> KernelProfile:
    """Unnormalized ``level * chi_(1,inf)(t)``; the summand of the indicator functional."""
    return KernelProfile(
        "fs_indicator", p_field, n, lambda x: np.zeros(np.shape(x)[:-1]),
        lambda x: np.full(np.shape(x)[:-1], float(level)), 0.0, float(level),
        beta=float(level), monotone=True, differentiable=False, normalized=False)


def kernel_from_descriptor(desc: Mapping, p_field: ExponentField,
                           domain: BoxDomain | None = None) -> KernelProfile:
    kind = desc.get("kind")
    n = p_field.n
    if kind == "model":
        return make_model_kernel(desc.get("a", "max"), p_field, n, domain)
    if kind == "indicator":
        return make_indicator_kernel(p_field, n, domain)
    if kind == "majorant":
        try:
            return make_majorant_kernel(float(desc["a"]), float(desc["b"]), p_field)
        except KeyError as exc:
            raise ValidationError(f"majorant descriptor is missing {exc}") from None
    raise ValidationError(f"unknown kernel descriptor kind {kind!r}")


# -- checks ----------------------------------------------------------------------

def check_normalization(kernel: KernelProfile, x, tol: float = 1e-12) -> float:
    """gamma_{n,p(x)} * int_0^inf phi(x, t) t^-(p+1) dt - 1 at a single point x.

    [0, 1] by adaptive Gauss-Kronrod quadrature, (1, inf) analytically since
    the kernel is constant there (tail = B(x)/p(x)).
    """
    pt = np.atleast_2d(np.asarray(x, dtype=float))
    if pt.shape[-1] != kernel.n:
        pt = pt.reshape(1, kernel.n)
    bk = kernel.bind(pt)
    p = float(bk.p[0])

    def integrand(t):
        return float(bk.phi(np.array([t]))[0]) * t ** (-(p + 1)) if t > 0 else float(bk.A[0])

    head, err = integrate.quad(integrand, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)
    if not np.isfinite(head) or err > 1e3 * max(tol, abs(head) * tol):
        raise NormalizationError(f"normalization integral did not converge at x={pt[0].tolist()}")
    tail = float(bk.B[0]) / p
    return gamma(kernel.n, p) * (head + tail) - 1.0


def check_hypotheses(kernel: KernelProfile, domain: BoxDomain | None = None,
                     x_samples: int = 64, t_samples: int = 256,
                     t_range=(1e-4, 1e3)) -> dict:
    """Lattice check of phi(x,0)=0, (Hp1), (Hp2), (Hp3), (phi1) and (phi2).

    Returns a mapping from hypothesis name to bool; t is log-spaced over ``t_range``.
    """
    pts = _validation_points(domain, kernel.n, x_samples)
    bk = kernel.bind(pts)
    t = np.geomspace(*t_range, t_samples)
    T = np.broadcast_to(t, (len(pts), t_samples))
    vals = bk.phi(T)
    p = bk.p[:, None]
    low = t <= 1.0
    slack = 1e-12
    res = {
        "zero_at_origin": bool(np.all(bk.phi(np.zeros(len(pts))) == 0.0)),
        "Hp1": bool(np.all(vals[:, low] <= kernel.a * T[:, low] ** (p + 1) * (1 + slack) + 1e-300)),
        "Hp2": bool(np.all(vals <= kernel.b * (1 + slack))),
        "Hp3": bool(np.all(np.diff(vals, axis=1) >= -slack * np.abs(vals[:, 1:]))),
    }
    # undeclared constants: the lower bounds hold iff the best constant on the lattice is positive
    pp = kernel.p_field.p_plus
    if kernel.alpha is not None:
        res["phi1"] = bool(np.all(kernel.alpha * T[:, low] ** (pp + 1) <= vals[:, low] * (1 + slack)))
    else:
        res["phi1"] = bool(np.min(vals[:, low] / T[:, low] ** (pp + 1)) > 0)
    if kernel.beta is not None:
        res["phi2"] = bool(np.all(kernel.beta <= vals[:, ~low] * (1 + slack)))
    else:
        res["phi2"] = bool(np.min(vals[:, ~low]) > 0)
    return res
