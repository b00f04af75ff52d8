import math

import numpy as np
import pytest

from varnonlocal.convergence import (bound_check, delta_sweep, fit_rate, fs_local_energy,
                                     liminf_check, richardson)
from varnonlocal.errors import CapabilityError, ValidationError
from varnonlocal.exponent_field import field_from_expression
from varnonlocal.grid import BoxDomain, GridFunction, local_energy, sample
from varnonlocal.kernels import make_indicator_kernel, make_majorant_kernel, make_model_kernel
from varnonlocal.sphere_constants import k_const

SCHEDULE = [0.1 * 0.5**k for k in range(7)]
TENT = {"kind": "tent", "center": 0.5, "halfwidth": 0.4, "smoothing": 0.1, "height": 2.0}


def ramp(a, b, d):
    return field_from_expression({"kind": "ramp", "from": a, "to": b}, 1, d)


@pytest.fixture(scope="module")
def sine_sweep():
    d = BoxDomain.interval(0, 1, 1024)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    u = sample({"kind": "sine"}, d)
    return u, p, delta_sweep(u, p, make_model_kernel("max", p, 1, d), SCHEDULE)


def test_richardson_exact_for_linear_model():
    f = lambda d: 3.0 + 0.7 * d
    assert richardson(0.2, f(0.2), 0.1, f(0.1)) == pytest.approx(3.0, rel=1e-14)
    g = lambda d: 3.0 + 0.7 * d**2
    assert richardson(0.2, g(0.2), 0.1, g(0.1), order=2) == pytest.approx(3.0, rel=1e-14)


def test_fit_rate():
    d = np.array([0.1, 0.05, 0.025, 0.0125])
    assert fit_rate(d, 0.3 * d**1.5) == pytest.approx(1.5, rel=1e-12)
    assert fit_rate(d[:2], d[:2]) is None
    assert fit_rate(d, [0, 0, 1e-3, 1e-4]) is None


def test_constant_sweep():
    d = BoxDomain.interval(0, 1, 64)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    rep = delta_sweep(sample({"kind": "constant", "value": 3}, d), p,
                      make_model_kernel(0.2, p, 1), [0.5, 0.25, 0.125])
    assert np.all(rep.values == 0) and np.all(rep.rel_errors == 0)
    assert rep.limit == 0.0 and rep.rate is None and rep.local_energy == 0.0


def test_sine_sweep(sine_sweep):
    u, p, rep = sine_sweep
    assert rep.local_energy == pytest.approx(2 * math.pi**2, rel=1e-4)
    assert rep.limit == pytest.approx(rep.local_energy, rel=0.02)
    assert list(rep.resolved) == [True] * 5 + [False] * 2
    e = np.abs(rep.rel_errors[rep.resolved])
    assert np.all(e[1:] <= e[:-1] + 1e-3)
    last = rep.values[rep.resolved][-3:]
    assert last.min() <= rep.limit <= last.max() or \
        all(abs(rep.limit / v - 1) < 0.01 for v in last)
    assert rep.rate is not None and rep.rate > 0


def test_sweep_csv_is_reproducible(sine_sweep):
    u, p, rep = sine_sweep
    d = u.domain
    again = delta_sweep(u, p, make_model_kernel("max", p, 1, d), SCHEDULE, threads=3)
    assert again.to_csv() == rep.to_csv()


def test_csv_layout(sine_sweep, tmp_path):
    rep = sine_sweep[2]
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("# config=")
    head = lines.index("delta,lambda,local_energy,rel_error,resolved")
    assert len(lines) == head + 1 + 7 + 2
    assert lines[-2].startswith("rate=") and lines[-1].startswith("limit=")
    assert lines[head + 1].endswith(",true") and lines[head + 7].endswith(",false")
    assert float(lines[-1].split("=")[1]) == rep.limit


def test_ramp_sweep_within_three_percent():
    d = BoxDomain.interval(0, 1, 512)
    p = ramp(1.5, 2.5, d)
    u = sample({"kind": "sine"}, d)
    rep = delta_sweep(u, p, make_model_kernel("max", p, 1, d), SCHEDULE[:5])
    assert rep.limit == pytest.approx(rep.local_energy, rel=0.03)


def test_tent_indicator_kernel_p_minus_one():
    d = BoxDomain.interval(0, 1, 512)
    p = ramp(1, 2, d)
    u = sample(TENT, d)
    k = make_indicator_kernel(p, 1, d)
    rep = delta_sweep(u, p, k, SCHEDULE[:5])
    assert rep.warnings == []
    assert rep.limit == pytest.approx(rep.local_energy, rel=0.05)
    chk = liminf_check(u, p, k, SCHEDULE[:5], tol=0.05, report=rep)
    assert chk.passed and chk.variant == "monotone"


def test_bump_model_kernel_p_minus_one_liminf():
    d = BoxDomain.interval(0, 1, 512)
    p = ramp(1, 2, d)
    u = sample({"kind": "bump", "center": 0.5, "radius": 0.4}, d)
    chk = liminf_check(u, p, make_model_kernel("max", p, 1, d), SCHEDULE[:5])
    assert chk.passed and chk.margin >= 0


def test_liminf_constant_trivial():
    d = BoxDomain.interval(0, 1, 64)
    p = ramp(1, 2, d)
    chk = liminf_check(sample({"kind": "constant", "value": 1}, d), p,
                       make_model_kernel(0.0, p, 1, d), [0.5, 0.25])
    assert chk.passed


def test_liminf_refusals():
    d = BoxDomain.interval(0, 1, 64)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    u = sample({"kind": "sine"}, d)
    with pytest.raises(CapabilityError, match="phi1"):
        liminf_check(u, p, make_indicator_kernel(p, 1, d), [0.5, 0.25], variant="lower_bounds")
    with pytest.raises(CapabilityError, match="Hp3"):
        liminf_check(u, p, make_majorant_kernel(1.0, 0.1, p), [0.5, 0.25])
    with pytest.raises(ValidationError):
        liminf_check(u, p, make_model_kernel(0.1, p, 1), [0.5, 0.25], variant="other")
    ok = liminf_check(u, p, make_model_kernel(0.2, p, 1), [0.5, 0.25], variant="lower_bounds")
    assert ok.variant == "lower_bounds"


def test_liminf_needs_resolved_entry():
    d = BoxDomain.interval(0, 1, 16)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    with pytest.raises(ValidationError):
        liminf_check(sample({"kind": "sine"}, d), p, make_model_kernel(0.2, p, 1), [0.1, 0.05])


@pytest.mark.parametrize("field", ["const", "ramp"])
def test_bound_check_bounded(field):
    d = BoxDomain.interval(0, 1, 256)
    p = field_from_expression({"kind": "constant", "value": 2}, 1) if field == "const" else ramp(1.5, 2.5, d)
    u = sample({"kind": "sine"}, d)
    res = bound_check(u, p, make_model_kernel("max", p, 1, d), SCHEDULE[:5])
    assert res.passed and not res.vacuous
    assert res.c_star == res.ratios[0] and np.all(np.isfinite(res.ratios))


def test_bound_check_vacuous_and_refusal():
    d = BoxDomain.interval(0, 1, 32)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    res = bound_check(sample({"kind": "constant", "value": 1}, d), p,
                      make_model_kernel(0.2, p, 1), [0.5, 0.25])
    assert res.passed and res.vacuous
    p1 = ramp(1, 2, d)
    with pytest.raises(CapabilityError):
        bound_check(sample({"kind": "sine"}, d), p1, make_model_kernel(0.2, p1, 1, d), [0.5])


def test_bound_check_detects_explosion():
    # a fixed C* far below the actual ratios must fail
    d = BoxDomain.interval(0, 1, 64)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    res = bound_check(sample({"kind": "sine"}, d), p, make_model_kernel(0.2, p, 1),
                      [0.5, 0.25], c_star=1e-6)
    assert not res.passed


@pytest.mark.parametrize("bad", [[], [0.1, -0.05], [0.1, 0.2], [0.1, 0.05, 0.01], [0.0]])
def test_schedule_errors(bad):
    d = BoxDomain.interval(0, 1, 32)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    with pytest.raises(ValidationError):
        delta_sweep(sample({"kind": "sine"}, d), p, make_model_kernel(0.2, p, 1), bad)


def test_method_errors():
    d = BoxDomain.interval(0, 1, 32)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    u = sample({"kind": "sine"}, d)
    with pytest.raises(ValidationError):
        delta_sweep(u, p, make_model_kernel(0.2, p, 1), [0.5], method="magic")
    with pytest.raises(ValidationError):
        delta_sweep(u, p, None, [0.5], method="direct")


def test_all_under_resolved():
    d = BoxDomain.interval(0, 1, 16)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    rep = delta_sweep(sample({"kind": "sine"}, d), p, make_model_kernel(0.2, p, 1), [0.1, 0.05])
    assert rep.rate is None and rep.limit is None
    assert any("under-resolved" in w for w in rep.warnings)
    assert "rate=unavailable" in rep.to_csv() and "limit=unavailable" in rep.to_csv()


def test_scope_warning_for_nonsmooth_at_p_minus_one():
    d = BoxDomain.interval(0, 1, 64)
    p = ramp(1, 2, d)
    k = make_indicator_kernel(p, 1, d)
    sharp = sample({"kind": "tent", "center": 0.5, "halfwidth": 0.3}, d)
    rep = delta_sweep(sharp, p, k, [0.5, 0.25])
    assert any("C1" in w for w in rep.warnings)
    assert "# warning=" in rep.to_csv()
    raw = GridFunction(d, sharp.flat)
    assert delta_sweep(raw, p, k, [0.5]).warnings
    smooth = sample(TENT, d)
    assert delta_sweep(smooth, p, k, [0.5]).warnings == []


def test_indicator_method_reference():
    d = BoxDomain.interval(0, 1, 1024)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    u = sample({"kind": "sine"}, d)
    assert fs_local_energy(u, p) == pytest.approx(k_const(1, 2) * local_energy(u, p), rel=1e-14)
    rep = delta_sweep(u, p, None, SCHEDULE, method="indicator")
    assert rep.local_energy == fs_local_energy(u, p)
    assert rep.limit == pytest.approx(rep.local_energy, rel=0.03)


def test_polar_method_sweep():
    d = BoxDomain.interval(0, 1, 256)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    u = sample({"kind": "sine"}, d)
    rep = delta_sweep(u, p, make_model_kernel("max", p, 1), [0.1, 0.05, 0.025], method="polar")
    assert rep.method == "polar" and rep.limit == pytest.approx(2 * math.pi**2, rel=0.01)


def test_log_callback():
    d = BoxDomain.interval(0, 1, 32)
    p = field_from_expression({"kind": "constant", "value": 2}, 1)
    seen = []
    delta_sweep(sample({"kind": "sine"}, d), p, make_model_kernel(0.2, p, 1), [0.5, 0.25], log=seen.append)
    assert len(seen) == 2 and seen[0].startswith("delta=0.5 lambda=")
