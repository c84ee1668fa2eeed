#!/usr/bin/env python3
"""Regenerates truncmath_golden.csv with 50-digit mpmath references.

Every value here is computed independently of the C++ implementation:
quadrature for integrals, bisection for inverses, a continued fraction for
erfcx and high-precision finite differences for derivatives.

Record format: name,arg1,...,argN,value1[,value2]  (17 significant digits)
"""
import sys
from mpmath import mp, mpf, quad, npdf, exp, log, sqrt, pi, erfc, diff, erfinv, ncdf

mp.dps = 50

A, B = mpf(-20), mpf(0)


def z_quad(mu, sigma, a=A, b=B):
    f = lambda t: npdf((t - mu) / sigma) / sigma
    return quad(f, breakpoints(mu, sigma, a, b))


def breakpoints(mu, sigma, a, b):
    pts = {a, b}
    for k in range(-12, 13):
        t = mu + k * sigma
        if a < t < b:
            pts.add(t)
    # When the mode lies outside the box the mass piles up against one end
    # with an exponential scale sigma^2 / distance.
    for end in (a, b):
        dist = abs(mu - end)
        if dist > 0:
            scale = sigma ** 2 / dist
            for k in (1, 3, 10, 30, 100):
                t = end + (k * scale if end == a else -k * scale)
                if a < t < b:
                    pts.add(t)
    return sorted(pts)


def density(mu, sigma, a=A, b=B):
    z = z_quad(mu, sigma, a, b)
    return lambda t: npdf((t - mu) / sigma) / (sigma * z)


def entropy_quad(mu, sigma, a=A, b=B):
    q = density(mu, sigma, a, b)
    return -quad(lambda t: q(t) * log(q(t)), breakpoints(mu, sigma, a, b))


def kl_quad(mu, sigma, a=A, b=B):
    q = density(mu, sigma, a, b)
    return quad(lambda t: q(t) * log(q(t) * (b - a)), breakpoints(mu, sigma, a, b))


def mean_quad(mu, sigma, a=A, b=B):
    q = density(mu, sigma, a, b)
    return quad(lambda t: exp(t) * q(t), breakpoints(mu, sigma, a, b))


def var_quad(mu, sigma, a=A, b=B):
    q = density(mu, sigma, a, b)
    m = mean_quad(mu, sigma, a, b)
    return quad(lambda t: (exp(t) - m) ** 2 * q(t), breakpoints(mu, sigma, a, b))


def bisect_inv_cdf(p):
    lo, hi = mpf(-40), mpf(40)
    for _ in range(400):
        mid = (lo + hi) / 2
        if ncdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def erfcx_cf(x, terms=4000):
    # erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    acc = x
    for k in range(terms, 0, -1):
        acc = x + (mpf(k) / 2) / acc
    return 1 / (sqrt(pi) * acc)


def kl_closed(mu, sigma, a=A, b=B):
    al, be = (a - mu) / sigma, (b - mu) / sigma
    z = ncdf(be) - ncdf(al)
    return (log(b - a) - log(sqrt(2 * pi * mp.e) * sigma) - log(z)
            - (al * npdf(al) - be * npdf(be)) / (2 * z))


def tail_frame_quad(mu, sigma, a=A, b=B):
    # Mean and variance by quadrature in the distance from the nearer end,
    # W = |t - end| / sigma, which resolves mass piled against that end.
    al, be = (a - mu) / sigma, (b - mu) / sigma
    if mu > b:
        c, width, end, sgn = -be, be - al, b, -1
    elif mu < a:
        c, width, end, sgn = al, be - al, a, 1
    else:
        return mean_quad(mu, sigma, a, b), var_quad(mu, sigma, a, b)
    pts = sorted({mpf(0), width} | {k / c for k in (1, 3, 10, 30, 100) if k / c < width})
    w = lambda x: exp(-c * x - x * x / 2)
    j = quad(w, pts)
    m = quad(lambda x: exp(end + sgn * sigma * x) * w(x), pts) / j
    v = quad(lambda x: (exp(end + sgn * sigma * x) - m) ** 2 * w(x), pts) / j
    return m, v


def moments_closed(mu, sigma, a=A, b=B):
    al, be = (a - mu) / sigma, (b - mu) / sigma
    z = ncdf(be) - ncdf(al)
    d1 = ncdf(be - sigma) - ncdf(al - sigma)
    d2 = ncdf(be - 2 * sigma) - ncdf(al - 2 * sigma)
    m = exp(mu + sigma ** 2 / 2) * d1 / z
    e2 = exp(2 * mu + 2 * sigma ** 2) * d2 / z
    return m, e2 - m * m


def sample_closed(mu, sigma, u, a=A, b=B):
    al, be = (a - mu) / sigma, (b - mu) / sigma
    p = ncdf(al) + (ncdf(be) - ncdf(al)) * u
    x = sqrt(2) * erfinv(2 * p - 1)
    return exp(mu + sigma * x)


def main(out):
    rows = []
    rows.append(("std_normal_pdf", [1], [npdf(1)]))
    rows.append(("std_normal_cdf", [1], [ncdf(1)]))
    rows.append(("inv_std_normal_cdf", [0.975], [bisect_inv_cdf(mpf("0.975"))]))
    cf = erfcx_cf(mpf(1))
    direct = exp(1) * erfc(1)
    assert abs(cf - direct) < mpf(10) ** -40, (cf, direct)
    rows.append(("erfcx", [1], [cf]))
    rows.append(("trunc_normal_entropy", [0, 2, -20, 0], [entropy_quad(mpf(0), mpf(2))]))
    rows.append(("kl", [-3, 0.5, -20, 0], [kl_quad(mpf(-3), mpf("0.5"))]))
    rows.append(("mean", [0, 1, -20, 0], [mean_quad(mpf(0), mpf(1))]))
    rows.append(("mean", [-10, 15, -20, 0], [mean_quad(mpf(-10), mpf(15))]))
    rows.append(("mean", [-2, 1, -20, 0], [mean_quad(mpf(-2), mpf(1))]))
    rows.append(("variance", [0, 1, -20, 0], [var_quad(mpf(0), mpf(1))]))
    rows.append(("variance", [-2, 1, -20, 0], [var_quad(mpf(-2), mpf(1))]))
    for mu, s in [(-2, 1), (-10, 5)]:
        m, v = mean_quad(mpf(mu), mpf(s)), var_quad(mpf(mu), mpf(s))
        rows.append(("snr", [mu, s, -20, 0], [m / sqrt(v)]))
    for mu, s in [(-3, 0.5), (-10, 2)]:
        mu_, s_ = mpf(mu), mpf(s)
        dmu = diff(lambda m: kl_closed(m, s_), mu_)
        dsig = diff(lambda q: kl_closed(mu_, q), s_)
        rows.append(("kl_grad", [mu, s, -20, 0], [dmu, dsig]))
    for mu, s, u in [(-2, 1, 0.3), (-0.5, 3, 0.9)]:
        mu_, s_, u_ = mpf(mu), mpf(s), mpf(u)
        dmu = diff(lambda m: sample_closed(m, s_, u_), mu_)
        dsig = diff(lambda q: sample_closed(mu_, q, u_), s_)
        rows.append(("sample_grad", [mu, s, -20, 0, u], [dmu, dsig]))
        rows.append(("sample", [mu, s, -20, 0, u], [sample_closed(mu_, s_, u_)]))

    for x in (0.3, 3, 10, 30, -2):
        xm = mpf(x)
        direct = exp(xm * xm) * erfc(xm)
        if x >= 1:
            assert abs(erfcx_cf(xm) / direct - 1) < mpf(10) ** -30
        rows.append(("erfcx", [x], [direct]))

    # Posteriors pressed against one end of the box. Closed forms at 50
    # digits are exact here; quadrature cross-checks them where it resolves
    # the mass.
    tail_cases = [(3, 0.01), (5, exp(-6)), (0.05, 0.0025), (0.01, 0.0025),
                  (-20.5, 0.05), (5, 20), (-20, 20), (0.4, 0.1)]
    for mu, s in tail_cases:
        mu_, s_ = mpf(mu), mpf(s)
        m, v = moments_closed(mu_, s_)
        mq, vq = tail_frame_quad(mu_, s_)
        assert abs(mq / m - 1) < mpf(10) ** -20, (mu, s, m, mq)
        assert abs(vq / v - 1) < mpf(10) ** -15, (mu, s, v, vq)
        rows.append(("mean", [mu_, s_, -20, 0], [m]))
        rows.append(("variance", [mu_, s_, -20, 0], [v]))
        rows.append(("snr", [mu_, s_, -20, 0], [m / sqrt(v)]))
        rows.append(("kl", [mu_, s_, -20, 0], [kl_closed(mu_, s_)]))
        dmu = diff(lambda q: kl_closed(q, s_), mu_)
        dsig = diff(lambda q: kl_closed(mu_, q), s_)
        rows.append(("kl_grad", [mu_, s_, -20, 0], [dmu, dsig]))

    with open(out, "w") as fh:
        fh.write("# truncmath golden values v1: name,args...,values...\n")
        for name, args, vals in rows:
            fields = [name] + ["%.17g" % float(a) for a in args] + ["%.17g" % float(v) for v in vals]
            fh.write(",".join(fields) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "truncmath_golden.csv")
