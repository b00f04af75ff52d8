import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varnonlocal.errors import CapabilityError, ValidationError
from varnonlocal.exponent_field import field_from_expression
from varnonlocal.grid import BoxDomain
from varnonlocal.kernels import (check_hypotheses, check_normalization, kernel_from_descriptor,
                                 make_indicator_kernel, make_majorant_kernel, make_model_kernel)
from varnonlocal.sphere_constants import gamma

UNIT = BoxDomain.interval(0, 1, 8)


def const(p, n=1):
    return field_from_expression({"kind": "constant", "value": p}, n)


def ramp(p0, p1):
    return field_from_expression({"kind": "ramp", "from": p0, "to": p1}, 1, UNIT)


def test_model_kernel_at_admissible_max():
    k = make_model_kernel(1 / 3, const(2), 1)
    assert k.a == pytest.approx(1 / 3) and k.b == pytest.approx(1 / 3)
    x = np.array([[0.3]])
    assert k.phi(x, np.array([0.5]))[0] == pytest.approx(0.5**3 / 3)
    assert k.phi(x, np.array([7.0]))[0] == pytest.approx(1 / 3)
    assert k.monotone


def test_model_kernel_with_zero_coefficient():
    p = 3.0
    k = make_model_kernel(0.0, const(p), 1)
    x = np.array([[0.5]] * 3)
    np.testing.assert_allclose(k.phi(x, np.array([0.5, 1.0, 1.5])), [0.0, 0.0, p / 2])
    assert k.alpha is None and not k.satisfies_phi1


def test_model_kernel_outside_band_names_point():
    amax = 2 / (2 * 3)
    with pytest.raises(ValidationError, match="x="):
        make_model_kernel(1.1 * amax, const(2), 1)
    with pytest.raises(ValidationError):
        make_model_kernel(-0.01, const(2), 1)


def test_model_kernel_variable_coefficient_descriptors():
    p = ramp(1.5, 2.5)
    k = make_model_kernel("max", p, 1, UNIT)
    bk = k.bind(np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(bk.A, bk.B)  # a = b at the band edge
    k2 = make_model_kernel({"kind": "fraction", "value": 0.5}, p, 1, UNIT)
    assert k2.b > k2.a
    k3 = make_model_kernel(lambda x: 0.1 + 0 * x[..., 0], p, 1, UNIT)
    assert k3.a == pytest.approx(0.1)


def test_indicator_levels():
    k1 = make_indicator_kernel(const(2), 1)
    x = np.array([[0.2], [0.2]])
    np.testing.assert_allclose(k1.phi(x, np.array([0.999, 1.001])), [0.0, 1.0])
    k2 = make_indicator_kernel(const(2, 2), 2)
    assert k2.phi(np.array([[0.1, 0.1]]), np.array([3.0]))[0] == pytest.approx(2 / math.pi)
    kr = make_indicator_kernel(ramp(1, 2), 1, UNIT)
    xs = np.array([[0.0], [0.5], [1.0]])
    np.testing.assert_array_equal(kr.phi(xs, np.full(3, 0.999)), 0.0)
    np.testing.assert_allclose(kr.phi(xs, np.full(3, 1.001)), [0.5, 1.5 / 2, 1.0])


def test_indicator_capabilities():
    k = make_indicator_kernel(ramp(1, 2), 1, UNIT)
    assert k.a == 0 and k.beta == pytest.approx(0.5)
    assert k.satisfies_phi2 and not k.satisfies_phi1
    with pytest.raises(CapabilityError, match="phi1"):
        k.require("Hp3", "phi1", "phi2")
    with pytest.raises(CapabilityError, match="differentiab"):
        k.require("differentiable")
    k.require("Hp3", "Hp4")


def test_majorant_values():
    k = make_majorant_kernel(1, 1, const(2))
    x = np.array([[0.0], [0.0]])
    np.testing.assert_allclose(k.phi(x, np.array([0.5, 2.0])), [0.125, 1.0])
    assert not make_majorant_kernel(2, 1, const(2)).monotone
    with pytest.raises(ValidationError):
        make_majorant_kernel(-1, 1, const(2))


def test_left_continuity_at_one():
    k = make_majorant_kernel(0.25, 2.0, const(2))
    assert k.phi(np.array([[0.0]]), np.array([1.0]))[0] == 0.25


@pytest.mark.parametrize("field", [const(2), const(1), ramp(1, 2), ramp(1.5, 2.5)])
@pytest.mark.parametrize("a", ["max", 0.0, {"kind": "fraction", "value": 0.3}])
def test_model_normalization(field, a):
    k = make_model_kernel(a, field, 1, UNIT)
    rng = np.random.default_rng(1)
    res = [check_normalization(k, x) for x in rng.random(32)]
    assert max(abs(r) for r in res) < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_indicator_normalization(n):
    f = const(2.7, n)
    k = make_indicator_kernel(f, n)
    assert abs(check_normalization(k, np.full(n, 0.3))) < 1e-12


def test_zero_majorant_residual():
    assert check_normalization(make_majorant_kernel(0, 0, const(2)), [0.5]) == pytest.approx(-1.0)


def test_scaled_kernel_identity():
    p = ramp(1.2, 3.0)
    k = make_model_kernel("max", p, 1, UNIT)
    rng = np.random.default_rng(5)
    x = rng.random((50, 1))
    u = rng.random(50) * 3
    for delta in (1.0, 0.37, 1e-3):
        expect = delta ** p(x) * k.phi(x, u / delta)
        np.testing.assert_array_equal(k.scaled(delta)(x, u), expect)
    with pytest.raises(ValidationError):
        k.scaled(0.0)


@pytest.mark.parametrize("make", [
    lambda: make_model_kernel("max", ramp(1, 2), 1, UNIT),
    lambda: make_model_kernel(0.1, const(2), 1),
    lambda: make_indicator_kernel(ramp(1.5, 3), 1, UNIT),
])
def test_majorant_dominates_on_lattice(make):
    k = make()
    m = make_majorant_kernel(k.a, k.b, k.p_field)
    x = np.linspace(0, 1, 64)[:, None]
    t = np.broadcast_to(np.geomspace(1e-4, 1e3, 64), (64, 64))
    assert np.all(k.bind(x).phi(t) <= m.bind(x).phi(t) * (1 + 1e-14))


def test_hypotheses_model():
    k = make_model_kernel("max", ramp(1, 2), 1, UNIT)
    h = check_hypotheses(k, UNIT)
    assert all(h.values()) and set(h) >= {"Hp1", "Hp2", "Hp3", "phi1", "phi2", "zero_at_origin"}


def test_hypotheses_indicator_and_broken_majorant():
    h = check_hypotheses(make_indicator_kernel(ramp(1, 2), 1, UNIT), UNIT)
    assert h["Hp3"] and h["phi2"] and h["phi1"] is False
    m = check_hypotheses(make_majorant_kernel(0.5, 1.0, const(2)))
    assert m["phi1"] and m["phi2"]
    assert check_hypotheses(make_majorant_kernel(0.5, 0.0, const(2)))["phi2"] is False
    h2 = check_hypotheses(make_majorant_kernel(2.0, 0.5, const(2)))
    assert not h2["Hp3"]


def test_descriptor_dispatch():
    p = const(2)
    assert kernel_from_descriptor({"kind": "model", "a": 0.2}, p).kind == "model"
    assert kernel_from_descriptor({"kind": "indicator"}, p).kind == "indicator"
    assert kernel_from_descriptor({"kind": "majorant", "a": 1, "b": 2}, p).b == 2
    with pytest.raises(ValidationError):
        kernel_from_descriptor({"kind": "majorant", "a": 1}, p)
    with pytest.raises(ValidationError):
        kernel_from_descriptor({"kind": "gaussian"}, p)


def test_binding_to_grid_rechecks_band():
    # admissible on (0,1) where p in [2, 3], not on a wider box where p drops to 1.5
    p = field_from_expression({"kind": "ramp", "from": 2, "to": 3}, 1, UNIT)
    k = make_model_kernel(0.3, p, 1, UNIT)  # max at p=2 is 1/3
    k.bind_grid(UNIT)
    p_low = field_from_expression({"kind": "constant", "value": 1}, 1)
    assert 1 / (gamma(1, 1) * 2) < 0.3
    with pytest.raises(ValidationError):
        make_model_kernel(0.3, p_low, 1)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(1, 6), theta=st.floats(0, 1), n=st.integers(1, 3))
def test_normalization_property(p, theta, n):
    f = const(p, n)
    k = make_model_kernel({"kind": "fraction", "value": theta}, f, n)
    assert abs(check_normalization(k, np.full(n, 0.5))) < 1e-9
