"""Log-barrier solver for the battery-transmitter / battery-less receiver case.

Works in cumulative variables ``P_i = sum(p[:i+1])`` and ``X_i = sum(x[:i+1])``
where ``x`` is the helper energy delivered to the receiver (receiver units).
Every constraint then couples only neighbouring slots, so each Newton system
is banded (half-bandwidth 3 with ``P`` and ``X`` interleaved).

Only the builtin cost family is supported: there the receiver energy needed
to decode the rate of transmit power ``p`` is exactly ``beta * p``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

_W = 1.0 / (2.0 * math.log(2.0))
_BAND = 3


class _Barrier:
    def __init__(self, e_cum, h_cum, rx, beta):
        self.e_cum, self.h_cum, self.rx, self.beta = e_cum, h_cum, rx, beta
        # coefficient of each slack over (P_{i-1}, X_{i-1}, P_i, X_i)
        self.vecs = np.array((
            [-1.0, 0.0, 1.0, 0.0],      # p_i >= 0
            [0.0, 0.0, -1.0, 0.0],      # P_i <= cumulative E
            [0.0, -1.0, 0.0, 1.0],      # x_i >= 0
            [0.0, 0.0, 0.0, -1.0],      # X_i <= cumulative alpha * H
            [beta, -1.0, -beta, 1.0],   # beta * p_i <= rx_i + x_i
        ))
        self.outer = np.einsum("tr,tc->trc", self.vecs, self.vecs)

    def slacks(self, z, affine=True):
        P, X = z[0::2], z[1::2]
        p = np.diff(P, prepend=0.0)
        x = np.diff(X, prepend=0.0)
        if not affine:
            return p, np.stack((p, -P, x, -X, x - self.beta * p))
        return p, np.stack((p, self.e_cum - P, x, self.h_cum - X, self.rx + x - self.beta * p))

    @staticmethod
    def value(t, p, s):
        if np.min(s) <= 0:
            return -np.inf
        return t * _W * float(np.sum(np.log1p(p))) + float(np.sum(np.log(s)))

    def newton(self, t, p, s):
        n = p.size
        inv = 1.0 / s
        d1 = inv.copy()
        d2 = -inv * inv
        # the objective acts on p_i like the first slack
        d1[0] += t * _W / (1.0 + p)
        d2[0] -= t * _W / (1.0 + p) ** 2
        grad_local = d1.T @ self.vecs
        hess_local = np.einsum("ti,trc->irc", d2, self.outer)
        # slot i's local index r sits at global 2i - 2 + r; shift by 2 so slot 0 fits
        size = 2 * n + 2
        grad = np.zeros(size)
        ab = np.zeros((_BAND + 1, size))
        for r in range(4):
            grad[r:r + 2 * n:2] += grad_local[:, r]
            for c in range(r, 4):
                ab[_BAND - (c - r), c:c + 2 * n:2] -= hess_local[:, r, c]
        # the phantom P_{-1}, X_{-1} columns are dropped; their couplings fall
        # off the left edge of the band
        return grad[2:], ab[:, 2:]


def optimal_helper_delivery(tx_energy, rx_energy, helper_rx_units, beta: float,
                            gap: float = 1e-9, max_newton: int = 600) -> np.ndarray:
    """Helper delivery schedule (receiver units) maximising the sum rate.

    ``helper_rx_units`` is ``alpha * H``; the returned delivery is causal with
    respect to it.  Budgets get a relative perturbation of 1e-12 so that a
    strictly feasible start always exists.
    """
    e = np.asarray(tx_energy, dtype=float)
    rx = np.asarray(rx_energy, dtype=float)
    h = np.asarray(helper_rx_units, dtype=float)
    n = e.size
    scale = 1.0 + float(max(np.max(e), np.max(rx), np.max(h)))
    eps = 1e-12 * scale
    bar = _Barrier(np.cumsum(e + eps), np.cumsum(h + eps), rx + eps, beta)

    x0 = 0.5 * (h + eps)
    p0 = 0.5 * np.minimum(e + eps, (rx + eps + x0) / beta)
    z = np.empty(2 * n)
    z[0::2] = np.cumsum(p0)
    z[1::2] = np.cumsum(x0)

    m = 5 * n
    t = 1.0
    steps = 0
    p, s = bar.slacks(z)
    while steps <= max_newton:
        for _ in range(50):
            grad, ab = bar.newton(t, p, s)
            try:
                dz = solveh_banded(ab, grad, lower=False)
            except (LinAlgError, ValueError):
                return _delivery(z, h)
            decrement = float(grad @ dz)
            if decrement / 2.0 < 1e-12:
                break
            dp, ds = bar.slacks(dz, affine=False)
            falling = ds < 0
            step = 1.0
            if np.any(falling):
                step = min(1.0, 0.99 * float(np.min(s[falling] / -ds[falling])))
            f0 = bar.value(t, p, s)
            while step > 1e-14:
                if bar.value(t, p + step * dp, s + step * ds) >= f0 + 0.25 * step * decrement:
                    break
                step *= 0.5
            else:
                break
            z_new = z + step * dz
            p_new, s_new = bar.slacks(z_new)
            if np.min(s_new) <= 0:
                break
            z, p, s = z_new, p_new, s_new
            steps += 1
        if m / t < gap:
            break
        t *= 50.0
    return _delivery(z, h)


def _delivery(z, h) -> np.ndarray:
    X = np.maximum.accumulate(np.maximum(z[1::2], 0.0))
    X = np.minimum(X, np.cumsum(h))
    return np.diff(X, prepend=0.0)
