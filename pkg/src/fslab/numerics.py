"""Grid construction, nonuniform finite differences, quadrature helpers."""

import numpy as np


def uniform_grid(y_max, n):
    return np.linspace(0.0, float(y_max), int(n))


def geometric_grid(y_max, first_step, ratio):
    """Wall-clustered grid: spacing grows by `ratio` per cell, last node at y_max."""
    if first_step <= 0 or ratio < 1.0:
        raise ValueError("need first_step > 0 and ratio >= 1")
    ys = [0.0]
    h = float(first_step)
    while ys[-1] < y_max:
        ys.append(ys[-1] + h)
        h *= ratio
    ys[-1] = float(y_max)
    if len(ys) > 2 and ys[-1] - ys[-2] < 0.25 * (ys[-2] - ys[-3]):
        # avoid a squashed final cell
        del ys[-2]
    return np.asarray(ys)


def fd_weights(nodes, x0, order):
    """Fornberg weights for d^order/dx^order at x0 on arbitrary nodes."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if order >= n:
        raise ValueError("need at least order+1 nodes")
    w = np.zeros((n, order + 1))
    w[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[i, k] = c1 * (k * w[i - 1, k - 1] - c5 * w[i - 1, k]) / c2
                w[i, 0] = -c1 * c5 * w[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                w[j, k] = (c4 * w[j, k] - k * w[j, k - 1]) / c3
            w[j, 0] = c4 * w[j, 0] / c3
        c1 = c2
    return w[:, order]


def deriv1(y, g):
    """First derivative on a nonuniform grid, 3-point centered, one-sided ends."""
    y = np.asarray(y)
    g = np.asarray(g)
    out = np.empty_like(g, dtype=float)
    hm = y[1:-1] - y[:-2]
    hp = y[2:] - y[1:-1]
    out[1:-1] = (-hp / (hm * (hm + hp)) * g[:-2]
                 + (hp - hm) / (hm * hp) * g[1:-1]
                 + hm / (hp * (hm + hp)) * g[2:])
    out[0] = fd_weights(y[:3], y[0], 1) @ g[:3]
    out[-1] = fd_weights(y[-3:], y[-1], 1) @ g[-3:]
    return out


def deriv2(y, g):
    """Second derivative on a nonuniform grid, 3-point centered, 4-point ends."""
    y = np.asarray(y)
    g = np.asarray(g)
    out = np.empty_like(g, dtype=float)
    hm = y[1:-1] - y[:-2]
    hp = y[2:] - y[1:-1]
    out[1:-1] = 2.0 * (hp * g[:-2] - (hm + hp) * g[1:-1] + hm * g[2:]) / (hm * hp * (hm + hp))
    k = min(4, len(y))
    out[0] = fd_weights(y[:k], y[0], 2) @ g[:k]
    out[-1] = fd_weights(y[-k:], y[-1], 2) @ g[-k:]
    return out


def wall_derivative(y, g, order, npts=None):
    """One-sided derivative of given order at y[0]."""
    if npts is None:
        npts = order + 3
    npts = min(npts, len(y))
    return float(fd_weights(y[:npts], y[0], order) @ g[:npts])


def cumtrapz0(y, g):
    """Cumulative trapezoid with value 0 at the first node."""
    inc = 0.5 * (g[1:] + g[:-1]) * np.diff(y)
    out = np.empty_like(np.asarray(g, dtype=float))
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def trapz(y, g):
    return float(np.trapezoid(g, y))


def tail_fraction(y, g):
    """Estimate the truncated-tail mass of a decaying integrand relative to its total.

    Fits an exponential to the last two nodes; returns 0 for non-decaying or
    zero integrands (no estimate possible).
    """
    total = abs(trapz(y, g))
    if total == 0.0:
        return 0.0
    a, b = abs(g[-2]), abs(g[-1])
    if b == 0.0:
        return 0.0
    if b >= a:
        # no decay visible (typically a roundoff-floor tail): charge the
        # boundary value over the whole domain span as a crude overestimate
        return float(b * (y[-1] - y[0]) / total)
    rate = np.log(a / b) / (y[-1] - y[-2])
    return float(b / rate / total)
