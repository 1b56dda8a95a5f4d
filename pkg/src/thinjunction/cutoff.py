"""Smooth step profile and the cut-off functions built from it."""

import numpy as np
from scipy.special import expit


def smooth_step(t, nu=0):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, derivatives up to order 2.

    Uses S(t) = f(t) / (f(t) + f(1 - t)) with f(t) = exp(-1/t), written as a
    logistic function of g(t) = 1/t - 1/(1 - t) for stability near the ends.
    """
    if nu not in (0, 1, 2):
        raise ValueError("smooth_step supports derivative orders 0, 1, 2")
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    if nu == 0:
        out[t >= 1.0] = 1.0
    inner = (t > 0.0) & (t < 1.0)
    if not np.any(inner):
        return out
    s = t[inner]
    g = 1.0 / s - 1.0 / (1.0 - s)
    S = expit(-g)
    if nu == 0:
        out[inner] = S
        return out
    P = S * expit(g)  # S (1 - S)
    G = 1.0 / s**2 + 1.0 / (1.0 - s) ** 2
    d1 = P * G
    if nu == 1:
        out[inner] = d1
        return out
    dG = -2.0 / s**3 + 2.0 / (1.0 - s) ** 3
    out[inner] = d1 * (1.0 - 2.0 * S) * G + P * dG
    return out


def node_cutoff(t, ell0, nu=0):
    """chi_{ell0}: 0 for t <= 1 + ell0, 1 for t >= 2 + ell0."""
    return smooth_step(np.asarray(t, dtype=float) - 1.0 - ell0, nu)


class CutoffFamily:
    """Edge cut-offs near the node and the base cut-off on edge 3, at scale eps."""

    def __init__(self, eps, delta, ell0, ell):
        self.eps = float(eps)
        self.delta = float(delta)
        self.ell0 = float(ell0)
        self.ell = tuple(float(v) for v in ell)
        lo = self.eps * self.ell0 + 2.0 * self.delta
        for i, li in enumerate(self.ell):
            if not lo < li - 2.0 * self.delta:
                raise ValueError(
                    f"cut-off bands overlap on edge {i + 1}: eps*ell0 + 2 delta = {lo:.4g} "
                    f">= ell_{i + 1} - 2 delta = {li - 2.0 * self.delta:.4g}"
                )

    @property
    def node_band(self):
        a = self.eps * self.ell0 + self.delta
        return a, a + self.delta

    @property
    def base_band(self):
        l3 = self.ell[2]
        return l3 - 2.0 * self.delta, l3 - self.delta

    def edge(self, x, nu=0):
        a = self.node_band[0]
        return smooth_step((np.asarray(x, dtype=float) - a) / self.delta, nu) / self.delta**nu

    def base(self, x, nu=0):
        a = self.base_band[0]
        return smooth_step((np.asarray(x, dtype=float) - a) / self.delta, nu) / self.delta**nu
