import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varnonlocal.errors import ValidationError
from varnonlocal.exponent_field import ExponentField, field_from_expression, field_from_grid
from varnonlocal.grid import BoxDomain, write_grid_csv


def test_constant_field():
    f = field_from_expression({"kind": "constant", "value": 2}, 1)
    assert (f.p_minus, f.p_plus) == (2.0, 2.0)
    assert f.is_constant
    np.testing.assert_array_equal(f(np.array([[0.1], [0.7]])), [2.0, 2.0])


def test_ramp_bounds():
    f = field_from_expression({"kind": "ramp", "from": 1, "to": 2}, 1, BoxDomain.interval(0, 1, 8))
    assert (f.p_minus, f.p_plus) == (1.0, 2.0)
    assert f(np.array([[0.0], [0.5], [1.0], [3.0], [-1.0]])).tolist() == [1.0, 1.5, 2.0, 2.0, 1.0]


def test_two_plateau_step():
    f = field_from_expression({"kind": "step", "low": 2, "high": 4, "edges": [-2, 2]}, 1)
    assert (f.p_minus, f.p_plus) == (2.0, 4.0)
    assert f(np.array([[-5.0], [0.0], [2.0], [9.0]])).tolist() == [2.0, 3.0, 4.0, 4.0]


def test_bump_bounds():
    f = field_from_expression({"kind": "bump", "base": 2, "peak": 1, "center": 0.5, "width": 0.1}, 1)
    assert (f.p_minus, f.p_plus) == (1.0, 2.0)
    assert f(np.array([[0.5]]))[0] == pytest.approx(1.0)


@pytest.mark.parametrize("desc", [
    {"kind": "constant", "value": 0.5},
    {"kind": "ramp", "from": 0.9, "to": 2},
    {"kind": "step", "low": 2, "high": 0.5, "edges": [0, 1]},
    {"kind": "bump", "base": 2, "peak": 0.1},
    {"kind": "mystery"},
])
def test_descriptors_below_one_rejected(desc):
    with pytest.raises(ValidationError):
        field_from_expression(desc, 1)


def test_bad_bounds_rejected():
    with pytest.raises(ValidationError):
        ExponentField(lambda x: x[..., 0], 0.5, 2, 1)
    with pytest.raises(ValidationError):
        ExponentField(lambda x: x[..., 0], 2, np.inf, 1)


def test_grid_field_all_ones():
    d = BoxDomain.interval(0, 1, 5)
    f = field_from_grid(np.ones(5), d)
    assert (f.p_minus, f.p_plus) == (1.0, 1.0)


def test_grid_field_min_max():
    d = BoxDomain.interval(0, 1, 3)
    f = field_from_grid([1.5, 2.0, 3.0], d)
    assert (f.p_minus, f.p_plus) == (1.5, 3.0)


def test_grid_field_error_names_index():
    d = BoxDomain.interval(0, 1, 4)
    with pytest.raises(ValidationError, match="index 2"):
        field_from_grid([1.0, 2.0, 0.9, 3.0], d)


def test_grid_field_nearest_and_clamped():
    d = BoxDomain.interval(0, 1, 4)
    f = field_from_grid([1.0, 2.0, 3.0, 4.0], d)
    pts = np.array([[0.1], [0.26], [0.74], [0.99], [-5.0], [7.0]])
    assert f(pts).tolist() == [1.0, 2.0, 3.0, 4.0, 1.0, 4.0]


def test_grid_field_2d_index_message():
    d = BoxDomain((0, 0), (1, 1), (2, 3))
    vals = np.full((2, 3), 2.0)
    vals[1, 2] = 0.5
    with pytest.raises(ValidationError, match=r"\(1, 2\)"):
        field_from_grid(vals, d)


def test_grid_descriptor_reads_file(tmp_path):
    d = BoxDomain.interval(0, 1, 4)
    path = tmp_path / "p.csv"
    write_grid_csv(path, d, [1.0, 1.25, 1.5, 2.0])
    f = field_from_expression({"kind": "grid", "path": str(path)}, 1)
    assert (f.p_minus, f.p_plus) == (1.0, 2.0)
    np.testing.assert_array_equal(f.sample(d).ravel(), [1.0, 1.25, 1.5, 2.0])


def test_constant_field_grid_round_trip_exact():
    d = BoxDomain((0, 0), (2, 1), (7, 5))
    f = field_from_expression({"kind": "constant", "value": 1.7}, 2)
    s = f.sample(d)
    g = field_from_grid(s, d)
    np.testing.assert_array_equal(g.sample(d), s)


def test_sample_dimension_mismatch():
    f = field_from_expression({"kind": "constant", "value": 2}, 2)
    with pytest.raises(ValidationError):
        f.sample(BoxDomain.interval(0, 1, 4))


def test_sample_escaping_declared_bounds():
    f = ExponentField(lambda x: 3.0 + 0 * x[..., 0], 1.0, 2.0, 1)
    with pytest.raises(ValidationError, match="escapes"):
        f.sample(BoxDomain.interval(0, 1, 4))


@settings(max_examples=50, deadline=None)
@given(p0=st.floats(1, 6), p1=st.floats(1, 6), n=st.integers(3, 64),
       lo=st.floats(-5, 5), width=st.floats(0.1, 10))
def test_sampled_values_within_bounds(p0, p1, n, lo, width):
    d = BoxDomain.interval(lo, lo + width, n)
    for desc in ({"kind": "ramp", "from": p0, "to": p1},
                 {"kind": "step", "low": p0, "high": p1, "edges": [lo + width / 3, lo + width / 2]},
                 {"kind": "bump", "base": p0, "peak": p1, "center": lo + width / 2, "width": width / 5}):
        f = field_from_expression(desc, 1, d)
        s = f.sample(d)
        assert s.min() >= f.p_minus - 1e-12
        assert s.max() <= f.p_plus + 1e-12


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(1, 10), min_size=1, max_size=30))
def test_grid_bounds_attained(vals):
    d = BoxDomain.interval(0, 1, len(vals))
    f = field_from_grid(vals, d)
    s = f.sample(d)
    assert abs(s.min() - f.p_minus) <= 1e-12 and abs(s.max() - f.p_plus) <= 1e-12
