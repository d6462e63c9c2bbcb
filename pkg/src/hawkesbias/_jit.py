"""Compiled inner loops.

Kernels are passed as ``(code, p, scales, logw)`` (see ``Kernel.jit_args``);
sum-of-exponential kernels are passed as ``(weights, scales)`` pairs with
``h(t) = sum_k weights[k] * exp(-t / scales[k])``.
"""

import math

import numpy as np
from numba import njit

EXPONENTIAL, OMORI, CUTOFF_POWER_LAW, APPROX_POWER_LAW = 0, 1, 2, 3

# below this argument exp(-x) and 1 - exp(-x) use a Taylor polynomial (error < 1e-17)
_SMALL = 0.05
# scales this many times longer than the data span use power sums for H1
_LONG = 10.0
_POWER_TERMS = 14


@njit(cache=True, inline="always")
def _mass_poly(x):
    """1 - exp(-x) for 0 <= x < _SMALL."""
    return x * (1.0 - x / 2.0 * (1.0 - x / 3.0 * (1.0 - x / 4.0 * (1.0 - x / 5.0 * (1.0 - x / 6.0 * (1.0 - x / 7.0 * (1.0 - x / 8.0)))))))


@njit(cache=True, inline="always")
def _decay(x):
    if x < _SMALL:
        return 1.0 - _mass_poly(x)
    return math.exp(-x)


@njit(cache=True, inline="always")
def _mass(x):
    """1 - exp(-x) without cancellation."""
    if x < _SMALL:
        return _mass_poly(x)
    return -math.expm1(-x)


@njit(cache=True, inline="always")
def _split(d, rates):
    """First index from which ``d * rates[k]`` is below ``_SMALL`` (rates descending)."""
    kc = rates.shape[0]
    while kc > 0 and d * rates[kc - 1] < _SMALL:
        kc -= 1
    return kc


@njit(cache=True)
def h_scalar(code, p, scales, logw, t):
    if t < 0.0:
        return 0.0
    if code == EXPONENTIAL:
        return math.exp(-t / p[0]) / p[0]
    if code == OMORI:
        c, th = p[0], p[1]
        return th / c * math.exp(-(1.0 + th) * math.log1p(t / c))
    if code == CUTOFF_POWER_LAW:
        tau0, eps = p[0], p[1]
        if t < tau0:
            return 0.0
        return eps / tau0 * math.exp(-(1.0 + eps) * math.log(t / tau0))
    # approximate power law; scales[0] is the cutoff scale
    r0 = 1.0 / scales[0]
    acc = 0.0
    for k in range(1, scales.shape[0]):
        acc += math.exp(logw[k] - t / scales[k]) * -math.expm1(-t * (r0 - 1.0 / scales[k]))
    return acc


@njit(cache=True)
def hsup_scalar(code, p, scales, logw, age):
    """sup of h over [age, inf) for kernels that are not exponential mixtures."""
    if code == CUTOFF_POWER_LAW and age < p[0]:
        return p[1] / p[0]
    return h_scalar(code, p, scales, logw, age)


@njit(cache=True)
def soe_h2(times, weights, scales):
    return soe_h1h2(times, times[-1] if times.shape[0] else 0.0, weights, scales)[1]


@njit(cache=True)
def soe_h1h2(times, t_end, weights, scales):
    """``(H1, H2)`` for ``h(t) = sum_k weights[k] * exp(-t / scales[k])``, scales ascending.

    ``H2[i]`` sums the kernel over events strictly before ``times[i]``;
    ``H1`` sums the kernel mass each event puts on ``(t_i, t_end]``.  One
    O(N * K) pass: the decayed state ``A_k`` also yields ``H1`` for scales
    comparable to the data span; much longer scales use a power series in
    ``(t_end - t_i) / scale`` to avoid cancellation.
    """
    n = times.shape[0]
    K = weights.shape[0]
    out = np.zeros(n)
    if n == 0:
        return 0.0, out
    rates = 1.0 / scales
    A = np.zeros(K)
    pending = 0.0
    last = times[0]
    for i in range(n):
        t = times[i]
        if t > last:
            d = t - last
            kc = _split(d, rates)
            for k in range(kc):
                A[k] = math.exp(-d * rates[k]) * (A[k] + pending)
            for k in range(kc, K):
                A[k] = (1.0 - _mass_poly(d * rates[k])) * (A[k] + pending)
            pending = 0.0
            last = t
        s = 0.0
        for k in range(K):
            s += weights[k] * A[k]
        out[i] = s
        pending += 1.0
    span = t_end - times[0]
    power = np.zeros(0)
    H1 = 0.0
    for k in range(K):
        if span < scales[k] / _LONG:
            if power.shape[0] == 0:
                power = _power_sums(times, t_end)
            # sum_i 1 - exp(-x_i) = sum_j (-1)^(j+1) / j! * sum_i x_i^j
            acc = 0.0
            fact = 1.0
            rj = 1.0
            for j in range(1, _POWER_TERMS + 1):
                fact *= j
                rj *= rates[k]
                term = power[j] * rj / fact
                acc += term if j % 2 == 1 else -term
            H1 += weights[k] * scales[k] * acc
        else:
            tail = (A[k] + pending) * _decay((t_end - last) * rates[k])
            H1 += weights[k] * scales[k] * (n - tail)
    return H1, out


@njit(cache=True)
def _power_sums(times, t_end):
    out = np.zeros(_POWER_TERMS + 1)
    for i in range(times.shape[0]):
        x = t_end - times[i]
        p = 1.0
        for j in range(_POWER_TERMS + 1):
            out[j] += p
            p *= x
    return out


@njit(cache=True)
def soe_compensator(times, weights, scales):
    """Per event, sum over strictly earlier events of the kernel mass on (t_j, t_i]."""
    n = times.shape[0]
    K = weights.shape[0]
    out = np.zeros(n)
    if n == 0:
        return out
    A = np.zeros(K)  # sum_j exp(-(t - t_j)/scale)
    B = np.zeros(K)  # sum_j (1 - exp(-(t - t_j)/scale))
    pending = 0.0
    last = times[0]
    for i in range(n):
        t = times[i]
        if t > last:
            d = t - last
            for k in range(K):
                x = d / scales[k]
                A[k] += pending
                B[k] += A[k] * _mass(x)
                A[k] *= _decay(x)
            pending = 0.0
            last = t
        s = 0.0
        for k in range(K):
            s += weights[k] * scales[k] * B[k]
        out[i] = s
        pending += 1.0
    return out


@njit(cache=True)
def direct_h2(times, code, p, scales, logw):
    n = times.shape[0]
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        ti = times[i]
        for j in range(i):
            if times[j] < ti:
                s += h_scalar(code, p, scales, logw, ti - times[j])
        out[i] = s
    return out


@njit(cache=True)
def _omori_mass(c, th, x):
    return -math.expm1(-th * math.log1p(x / c))


@njit(cache=True)
def direct_compensator_omori(times, c, th):
    n = times.shape[0]
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        ti = times[i]
        for j in range(i):
            if times[j] < ti:
                s += _omori_mass(c, th, ti - times[j])
        out[i] = s
    return out


@njit(cache=True)
def direct_compensator_cutoff(times, tau0, eps):
    n = times.shape[0]
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        ti = times[i]
        for j in range(i):
            d = ti - times[j]
            if d > tau0:
                s += -math.expm1(-eps * math.log(d / tau0))
        out[i] = s
    return out


@njit(cache=True)
def _dg(coef, a, x):
    d1 = 0.0
    d2 = 0.0
    for i in range(coef.shape[0]):
        r = coef[i] / (a + x * coef[i])
        d1 -= r
        d2 += r * r
    return d1, d2


@njit(cache=True)
def inner_minimize(coef, a, n_hi, x0=-1.0):
    """Minimize ``g(n) = -sum(log(a + n * coef))`` over ``[0, n_hi]``.

    ``g`` is convex in ``n`` so a safeguarded Newton iteration on ``g'``
    finds the minimizer; ``x0`` is an optional starting guess.
    Returns ``(n_star, g(n_star))``.
    """
    N = coef.shape[0]
    d0 = 0.0
    for i in range(N):
        d0 -= coef[i]
    if d0 >= 0.0:
        n_star = 0.0
    else:
        lo, hi = 0.0, n_hi
        hi_checked = False
        x = x0 if 0.0 < x0 < n_hi else 0.5 * n_hi
        n_star = -1.0
        for _ in range(200):
            d1, d2 = _dg(coef, a, x)
            if d1 > 0.0:
                hi = x
            else:
                lo = x
            step = d1 / d2 if d2 > 0.0 else 0.0
            if abs(step) <= 1e-13 * max(1.0, x):
                if lo <= x - step <= hi:
                    x -= step
                break
            xn = x - step
            if xn >= hi and not hi_checked:
                # the minimizer may sit on the upper bound
                hi_checked = True
                dh, _ = _dg(coef, a, n_hi)
                if dh <= 0.0:
                    n_star = n_hi
                    break
            if not (lo < xn < hi):
                xn = 0.5 * (lo + hi)
            if hi - lo <= 1e-13 * max(1.0, x):
                x = xn
                break
            x = xn
        if n_star < 0.0:
            n_star = x
    g = 0.0
    for i in range(N):
        g -= math.log(a + n_star * coef[i])
    return n_star, g


@njit(cache=True)
def _segment(breaks, t):
    s = np.searchsorted(breaks, t, side="right") - 1
    if s < 0:
        s = 0
    if s > breaks.shape[0] - 2:
        s = breaks.shape[0] - 2
    return s


@njit(cache=True)
def thinning_soe(breaks, rates, n, weights, scales, t_start, t_end, cap, seed):
    """Ogata thinning for sum-of-exponential kernels, O(N * K).

    The proposal rate uses only the positive mixture components, which decay
    monotonically and therefore bound the intensity until the next event.
    Returns ``(times, truncated)``.
    """
    np.random.seed(seed)
    K = weights.shape[0]
    A = np.zeros(K)
    out = np.empty(min(cap, 1 << 16))
    count = 0
    t = t_start
    s = _segment(breaks, t)
    while t < t_end:
        seg_end = min(breaks[s + 1], t_end)
        bound = rates[s]
        for k in range(K):
            if weights[k] > 0.0:
                bound += n * weights[k] * A[k]
        tp = seg_end
        if bound > 0.0:
            tp = t + np.random.exponential(1.0 / bound)
        if tp >= seg_end:
            d = seg_end - t
            for k in range(K):
                A[k] *= _decay(d / scales[k])
            t = seg_end
            s += 1
            if s > breaks.shape[0] - 2:
                break
            continue
        d = tp - t
        lam = rates[s]
        for k in range(K):
            A[k] *= _decay(d / scales[k])
            lam += n * weights[k] * A[k]
        t = tp
        if np.random.random() * bound <= lam:
            if count == cap:
                return out[:count], True
            if count == out.shape[0]:
                grown = np.empty(min(cap, 2 * out.shape[0]))
                grown[:count] = out[:count]
                out = grown
            out[count] = t
            count += 1
            for k in range(K):
                A[k] += 1.0
    return out[:count], False


@njit(cache=True)
def thinning_generic(breaks, rates, n, code, p, scales, logw, t_start, t_end, cap, seed):
    """Ogata thinning with an O(N) bound recomputation per proposal."""
    np.random.seed(seed)
    out = np.empty(min(cap, 1 << 14))
    count = 0
    t = t_start
    s = _segment(breaks, t)
    while t < t_end:
        seg_end = min(breaks[s + 1], t_end)
        bound = rates[s]
        for j in range(count):
            bound += n * hsup_scalar(code, p, scales, logw, t - out[j])
        tp = seg_end
        if bound > 0.0:
            tp = t + np.random.exponential(1.0 / bound)
        if tp >= seg_end:
            t = seg_end
            s += 1
            if s > breaks.shape[0] - 2:
                break
            continue
        lam = rates[s]
        for j in range(count):
            lam += n * h_scalar(code, p, scales, logw, tp - out[j])
        t = tp
        if np.random.random() * bound <= lam:
            if count == cap:
                return out[:count], True
            if count == out.shape[0]:
                grown = np.empty(min(cap, 2 * out.shape[0]))
                grown[:count] = out[:count]
                out = grown
            out[count] = t
            count += 1
    return out[:count], False
