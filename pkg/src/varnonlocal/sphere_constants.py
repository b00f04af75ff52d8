"""Moments of |omega . e| over the unit sphere S^{n-1}.

``gamma(n, p)`` is the integral of |omega . e|^p against surface measure; it does
not depend on the unit vector e. ``k_const(n, p) = gamma(n, p) / p``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import ValidationError

__all__ = [
    "gamma",
    "gamma_field",
    "gamma_quadrature",
    "gamma_axis_quadrature",
    "gamma_mc",
    "k_const",
    "sphere_area",
]


def _check(n, p):
    if int(n) != n or n < 1:
        raise ValidationError(f"dimension must be a positive integer, got {n}")
    if not (p >= 0) or not math.isfinite(p):
        raise ValidationError(f"exponent must be finite and >= 0, got {p}")


def sphere_area(n: int) -> float:
    """Surface measure of S^{n-1} (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@lru_cache(maxsize=4096)
def _gamma_cached(n: int, p: float) -> float:
    if n == 1:
        return 2.0
    # 2 pi^{(n-1)/2} Gamma((p+1)/2) / Gamma((n+p)/2), in log form for large p
    log_val = (math.log(2.0) + 0.5 * (n - 1) * math.log(math.pi)
               + special.gammaln((p + 1) / 2) - special.gammaln((n + p) / 2))
    return float(math.exp(log_val))


def gamma(n: int, p: float) -> float:
    _check(n, p)
    return _gamma_cached(int(n), round(float(p), 12))


def gamma_field(n: int, p_values) -> np.ndarray:
    """Vectorised ``gamma`` over an array of exponents (few distinct values expected)."""
    pv = np.asarray(p_values, dtype=float)
    uniq, inv = np.unique(np.round(pv, 12), return_inverse=True)
    vals = np.array([gamma(n, float(q)) for q in uniq])
    return vals[inv].reshape(pv.shape)


def k_const(n: int, p: float) -> float:
    if p < 1:
        raise ValidationError(f"K_n,p needs p >= 1, got {p}")
    return gamma(n, p) / p


def gamma_quadrature(n: int, p: float, tol: float = 1e-13) -> float:
    """Adaptive Gauss-Kronrod evaluation of the latitude integral.

    |S^{n-2}| * int_0^pi |cos t|^p sin^{n-2} t dt, split at the kink t = pi/2.
    Independent of the closed form used by ``gamma``.
    """
    _check(n, p)
    if n == 1:
        return 2.0

    def f(t):
        return abs(math.cos(t)) ** p * math.sin(t) ** (n - 2)

    total = 0.0
    for a, b in ((0.0, math.pi / 2), (math.pi / 2, math.pi)):
        val, _ = integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=200)
        total += val
    return sphere_area(n - 1) * total


def gamma_axis_quadrature(n: int, p: float, axis: int, tol: float = 1e-12) -> float:
    """gamma(n, p) with e set to coordinate axis ``axis``, by nested quadrature in
    standard spherical coordinates (n <= 3). Used to check axis invariance."""
    _check(n, p)
    if not 0 <= axis < n:
        raise ValidationError(f"axis {axis} out of range for n={n}")
    if n == 1:
        return 2.0
    kinks = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2, 2 * math.pi]
    if n == 2:
        trig = math.cos if axis == 0 else math.sin
        return sum(integrate.quad(lambda t: abs(trig(t)) ** p, a, b, epsabs=tol, epsrel=tol)[0]
                   for a, b in zip(kinks[:-1], kinks[1:]))
    if n == 3:
        def component(th, ph):
            if axis == 0:
                return math.sin(th) * math.cos(ph)
            if axis == 1:
                return math.sin(th) * math.sin(ph)
            return math.cos(th)

        def inner(th):
            return sum(integrate.quad(lambda ph: abs(component(th, ph)) ** p, a, b,
                                      epsabs=tol, epsrel=tol)[0]
                       for a, b in zip(kinks[:-1], kinks[1:])) * math.sin(th)

        return sum(integrate.quad(inner, a, b, epsabs=tol, epsrel=tol)[0]
                   for a, b in ((0.0, math.pi / 2), (math.pi / 2, math.pi)))
    raise ValidationError("axis quadrature is implemented for n <= 3")


def gamma_mc(n: int, p: float, samples: int, seed: int, axis: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of gamma(n, p) and its standard error.

    Uniform sphere points come from normalised Gaussian vectors drawn with
    ``numpy.random.default_rng(seed)``.
    """
    _check(n, p)
    if samples < 1000:
        raise ValidationError(f"need at least 1000 samples, got {samples}")
    if not 0 <= axis < n:
        raise ValidationError(f"axis {axis} out of range for n={n}")
    if n == 1:
        return 2.0, 0.0
    rng = np.random.default_rng(seed)
    area = sphere_area(n)
    total = 0.0
    total_sq = 0.0
    chunk = 1 << 18
    left = samples
    while left > 0:
        m = min(chunk, left)
        z = rng.standard_normal((m, n))
        w = np.abs(z[:, axis]) / np.linalg.norm(z, axis=1)
        f = w**p
        total += float(np.sum(f))
        total_sq += float(np.sum(f * f))
        left -= m
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return area * mean, area * math.sqrt(var / samples)
