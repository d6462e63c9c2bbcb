import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hawkesbias.errors import DomainError, ParameterDomainError
from hawkesbias.kernels import (
    ApproxPowerLaw,
    CutoffPowerLaw,
    Exponential,
    Omori,
    characteristic_time,
    derive_constants,
    evaluate,
    integral,
    kernel_from_dict,
    omori_soe,
)

KERNELS = [
    Exponential(0.5),
    Omori(1.0, 0.5),
    CutoffPowerLaw(0.3, 0.8),
    ApproxPowerLaw(1.0, 0.5),
    ApproxPowerLaw(0.01, 0.15),
]


def brute_approx_pl(tau0, eps, t, M=15, m=5.0):
    """Direct sum over the M+1 exponential terms."""
    xi = [tau0 * m**i for i in range(-1, M)]
    S = sum(x ** -(1 + eps) for x in xi[1:])
    Z = sum(x**-eps for x in xi[1:]) - S * xi[0]
    val = sum(x ** -(1 + eps) * math.exp(-t / x) for x in xi[1:]) - S * math.exp(-t / xi[0])
    return val / Z


@pytest.mark.parametrize(
    "kernel,t,expected",
    [
        (Exponential(0.5), 0.0, 2.0),
        (Omori(1.0, 0.5), 0.0, 0.5),
        (ApproxPowerLaw(1.0, 0.15), 0.0, 0.0),
        (CutoffPowerLaw(1.0, 0.5), 0.999, 0.0),
        (CutoffPowerLaw(1.0, 0.5), 1.0, 0.5),
    ],
)
def test_evaluate_known_values(kernel, t, expected):
    assert evaluate(kernel, t) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
def test_causal(kernel):
    assert np.all(kernel.evaluate(np.array([-1.0, -1e-9])) == 0)


def test_approx_pl_against_direct_sum():
    for t in (0.0, 0.2, 1.0, 100.0, 1e4):
        assert ApproxPowerLaw(1.0, 0.5).evaluate(t) == pytest.approx(brute_approx_pl(1.0, 0.5, t), rel=1e-12, abs=1e-18)


def test_derive_constants_two_terms():
    c = derive_constants(1.0, 0.5, M=2, m=5.0)
    S = 1 + 5**-1.5
    assert c.S == pytest.approx(S, rel=1e-14)
    assert c.Z == pytest.approx((1 + 5**-0.5) - S / 5, rel=1e-14)
    assert np.allclose(c.xi, [0.2, 1.0, 5.0])


def test_derive_constants_homogeneity():
    a = derive_constants(1.0, 1.0)
    b = derive_constants(0.1, 1.0)
    assert b.S / a.S == pytest.approx(0.1**-2, rel=1e-12)


@pytest.mark.parametrize("args", [(0.0, 0.5), (1.0, -0.1), (-1.0, 1.0)])
def test_bad_parameters(args):
    with pytest.raises(ParameterDomainError):
        ApproxPowerLaw(*args)
    with pytest.raises(ParameterDomainError):
        Omori(*args)


def test_derive_constants_rejects_bad_hyperparameters():
    with pytest.raises(ParameterDomainError):
        derive_constants(1.0, 0.5, M=1)
    with pytest.raises(ParameterDomainError):
        derive_constants(1.0, 0.5, m=1.0)


@pytest.mark.parametrize(
    "kernel,t,expected",
    [
        (Omori(1.0, 0.5), 3.0, 0.5),
        (Exponential(2.0), 2.0, 1 - math.exp(-1)),
        (CutoffPowerLaw(1.0, 1.0), 0.5, 0.0),
        (CutoffPowerLaw(1.0, 1.0), 4.0, 0.75),
    ],
)
def test_integral_closed_forms(kernel, t, expected):
    assert integral(kernel, t) == pytest.approx(expected, abs=1e-6)


def brute_approx_pl_mass(tau0, eps, t, M=15, m=5.0):
    xi = [tau0 * m**i for i in range(-1, M)]
    S = sum(x ** -(1 + eps) for x in xi[1:])
    Z = sum(x**-eps for x in xi[1:]) - S * xi[0]
    return (sum(x**-eps * (1 - math.exp(-t / x)) for x in xi[1:]) - S * xi[0] * (1 - math.exp(-t / xi[0]))) / Z


@pytest.mark.parametrize("t", [1.0, 1e3, 1e6, 1e12])
def test_approx_pl_integral_direct_sum(t):
    # the longest scale is 5**14 s, so the mass is still short of one at 1e6 s
    assert ApproxPowerLaw(1.0, 0.5).integral(t) == pytest.approx(brute_approx_pl_mass(1.0, 0.5, t), rel=1e-12)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
def test_integral_zero_and_domain(kernel):
    assert integral(kernel, 0.0) == 0.0
    with pytest.raises(DomainError):
        integral(kernel, -1.0)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
def test_integral_matches_quadrature(kernel):
    for t in (0.05, 0.7, 3.0, 50.0):
        pts = [kernel.tau0] if isinstance(kernel, CutoffPowerLaw) and kernel.tau0 < t else None
        num, _ = integrate.quad(kernel.evaluate, 0, t, points=pts, epsabs=1e-13, epsrel=1e-11, limit=200)
        assert integral(kernel, t) == pytest.approx(num, rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
def test_tail_complements_integral(kernel):
    t = np.geomspace(1e-3, 1e5, 30)
    assert np.allclose(kernel.tail(t) + kernel.integral(t), 1.0, atol=1e-14)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
def test_derivative_of_integral(kernel):
    rng = np.random.default_rng(3)
    for t in np.exp(rng.uniform(np.log(1e-2), np.log(1e3), 100)):
        if isinstance(kernel, CutoffPowerLaw) and abs(t - kernel.tau0) < 1e-3:
            continue
        h = 1e-5 * t
        fd = (kernel.integral(t + h) - kernel.integral(t - h)) / (2 * h)
        # the survival form avoids cancellation once the mass is near one
        fd_tail = (kernel.tail(t - h) - kernel.tail(t + h)) / (2 * h)
        assert fd_tail == pytest.approx(kernel.evaluate(t), rel=1e-5)
        assert fd == pytest.approx(kernel.evaluate(t), rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
@pytest.mark.parametrize("q", [0.01, 0.5, 0.95, 0.99, 0.999])
def test_characteristic_time_inverts_integral(kernel, q):
    assert integral(kernel, characteristic_time(kernel, q)) == pytest.approx(q, abs=1e-8)


@pytest.mark.parametrize(
    "kernel,q,expected,rel",
    [
        (Omori(1.0, 0.5), 0.99, 9999.0, 1e-9),
        (Omori(1.0, 1.0), 0.95, 19.0, 1e-9),
        (ApproxPowerLaw(1.0, 0.5), 0.95, 2e2, 0.1),
        (Exponential(1.0), 0.95, math.log(20), 1e-12),
    ],
)
def test_characteristic_time_values(kernel, q, expected, rel):
    assert characteristic_time(kernel, q) == pytest.approx(expected, rel=rel)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.5])
def test_characteristic_time_domain(q):
    with pytest.raises(DomainError):
        Exponential(1.0).characteristic_time(q)


def test_monotone_decay():
    t = np.geomspace(1e-6, 1e6, 400)
    for k in (Exponential(0.3), Omori(0.1, 1.5)):
        assert np.all(np.diff(k.evaluate(t)) <= 0)


@pytest.mark.parametrize("tau0,eps", [(1.0, 0.15), (0.01, 1.0), (10.0, 0.5)])
def test_approx_pl_unimodal(tau0, eps):
    v = ApproxPowerLaw(tau0, eps).evaluate(np.geomspace(1e-6 * tau0, 1e6 * tau0, 2000))
    sign = np.sign(np.diff(v))
    sign = sign[sign != 0]
    assert sign[0] > 0 and sign[-1] < 0
    assert np.count_nonzero(np.diff(sign)) == 1


@settings(max_examples=60, deadline=None)
@given(
    tau0=st.floats(1e-4, 1e3),
    eps=st.floats(0.05, 3.0),
    t=st.floats(0.0, 1e8),
)
def test_approx_pl_mass_in_unit_interval(tau0, eps, t):
    k = ApproxPowerLaw(tau0, eps)
    assert 0.0 <= k.integral(t) <= 1.0
    assert k.evaluate(t) >= 0.0


def test_serialization_roundtrip():
    for k in KERNELS:
        assert kernel_from_dict(k.to_dict()) == k
    d = {"family": "approx_power_law", "tau0": 1.0, "epsilon": 0.15, "M": 15, "m": 5}
    assert kernel_from_dict(d) == ApproxPowerLaw(1.0, 0.15)


def test_unknown_family():
    with pytest.raises(ParameterDomainError):
        kernel_from_dict({"family": "gaussian", "sigma": 1.0})


@pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 2.5])
def test_omori_soe_accuracy(theta):
    c, lag = 0.05, 1e6
    w, sc = omori_soe(c, theta, lag)
    assert np.all(np.diff(sc) > 0)
    t = np.concatenate([[0.0], np.geomspace(1e-6, lag, 300)])
    approx = (w[None, :] * np.exp(-t[:, None] / sc[None, :])).sum(axis=1)
    exact = Omori(c, theta).evaluate(t)
    assert np.max(np.abs(approx / exact - 1)) < 1e-9


@pytest.mark.parametrize("kernel", [Exponential(0.7), ApproxPowerLaw(0.5, 0.3)], ids=lambda k: k.family)
def test_soe_form_matches_evaluate(kernel):
    w, sc = kernel.soe()
    t = np.geomspace(1e-4, 1e4, 50)
    assert np.allclose((w * np.exp(-t[:, None] / sc)).sum(axis=1), kernel.evaluate(t), rtol=1e-10, atol=1e-300)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
def test_sampled_delays_follow_kernel(kernel):
    from scipy.stats import kstest

    rng = np.random.default_rng(11)
    x = kernel.sample_delays(rng, 20000)
    assert np.all(x >= 0)
    assert kstest(x, lambda t: kernel.integral(np.maximum(t, 0))).pvalue > 1e-3


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family)
def test_array_shapes_preserved(kernel):
    t = np.linspace(0.0, 5.0, 12).reshape(3, 4)
    for f in (kernel.evaluate, kernel.integral, kernel.tail):
        out = f(t)
        assert out.shape == (3, 4)
        assert np.allclose(out.ravel(), [f(float(x)) for x in t.ravel()])
