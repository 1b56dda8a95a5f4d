"""Functions of the axial variable on one edge, with derivative jets."""

from math import comb

import numpy as np
from scipy.interpolate import make_interp_spline

DEFAULT_DENSITY = 512
SPLINE_DEGREE = 5


def jet_mul(f, g):
    """Leibniz rule on derivative lists [f, f', ...] of equal length."""
    n = len(f)
    return [sum(comb(k, i) * f[i] * g[k - i] for i in range(k + 1)) for k in range(n)]


def jet_reciprocal(v):
    """Derivative list of 1/v from that of v."""
    r = [1.0 / v[0]]
    for k in range(1, len(v)):
        acc = sum(comb(k, i) * v[i] * r[k - i] for i in range(1, k + 1))
        r.append(-acc * r[0])
    return r


class AxialFunction:
    """Base class: subclasses implement derivs(x, n) -> [f, f', ..., f^(n)]."""

    length = 1.0

    def derivs(self, x, n):
        raise NotImplementedError

    def __call__(self, x, nu=0):
        return self.derivs(x, nu)[nu]

    def grid(self, density=DEFAULT_DENSITY):
        n = max(int(round(density * self.length)), 8) + 1
        return np.linspace(0.0, self.length, n)

    @property
    def samples(self):
        return self(self.grid())


class EdgeFunction(AxialFunction):
    """Constant `left` on [0, a], quintic spline on [a, b], constant `right` on [b, length].

    A compact function has left = right = 0 and vanishes identically off [a, b].
    """

    def __init__(self, length, left=0.0, right=0.0, interval=None, spline=None, compact=False):
        self.length = float(length)
        self.left = float(left)
        self.right = float(right)
        self.interval = None if interval is None else (float(interval[0]), float(interval[1]))
        self.spline = spline
        self.compact = bool(compact)
        if self.compact and (self.left != 0.0 or self.right != 0.0):
            raise ValueError("compact edge function must vanish outside its support")

    @classmethod
    def constant(cls, length, value):
        return cls(length, left=value, right=value)

    @classmethod
    def zero(cls, length):
        return cls(length, compact=True)

    @classmethod
    def from_callable(cls, func, length, interval=None, density=DEFAULT_DENSITY, compact=False):
        a, b = (0.0, float(length)) if interval is None else interval
        n = max(int(round(density * (b - a))), 2 * SPLINE_DEGREE) + 1
        x = np.linspace(a, b, n)
        return cls.from_samples(np.asarray(func(x), dtype=float), length, (a, b), compact)

    @classmethod
    def from_samples(cls, values, length, interval=None, compact=False):
        values = np.asarray(values, dtype=float)
        a, b = (0.0, float(length)) if interval is None else (float(interval[0]), float(interval[1]))
        if not 0.0 <= a < b <= length:
            raise ValueError(f"interval [{a}, {b}] not inside [0, {length}]")
        if values.size < SPLINE_DEGREE + 1:
            raise ValueError(f"need at least {SPLINE_DEGREE + 1} samples")
        x = np.linspace(a, b, values.size)
        spline = make_interp_spline(x, values, k=SPLINE_DEGREE)
        if compact:
            return cls(length, 0.0, 0.0, (a, b), spline, compact=True)
        return cls(length, values[0], values[-1], (a, b), spline)

    @property
    def support(self):
        if self.compact:
            return self.interval
        return (0.0, self.length)

    @property
    def is_zero(self):
        return self.compact and self.spline is None

    def derivs(self, x, n):
        x = np.asarray(x, dtype=float)
        out = [np.zeros_like(x) for _ in range(n + 1)]
        if self.spline is None:
            out[0] = out[0] + self.left
            return out
        a, b = self.interval
        out[0] = np.where(x < a, self.left, self.right).astype(float)
        inside = (x >= a) & (x <= b)
        if np.any(inside):
            xi = x[inside]
            for k in range(min(n, SPLINE_DEGREE) + 1):
                out[k][inside] = self.spline(xi, k)
        return out

    def integral(self, x):
        """Cumulative integral from 0 to x."""
        x = np.asarray(x, dtype=float)
        if self.spline is None:
            return self.left * x
        a, b = self.interval
        anti = self.spline.antiderivative()
        xc = np.clip(x, a, b)
        return (
            self.left * np.minimum(x, a)
            + (anti(xc) - anti(a))
            + self.right * np.maximum(x - b, 0.0)
        )

    def scaled(self, factor):
        spline = None
        if self.spline is not None:
            spline = self.spline.__class__(self.spline.t, self.spline.c * factor, self.spline.k)
        return EdgeFunction(
            self.length, self.left * factor, self.right * factor, self.interval, spline, self.compact
        )


class FormulaFunction(AxialFunction):
    """Axial function defined by a jet callback (used for w_k)."""

    def __init__(self, length, jet):
        self.length = float(length)
        self._jet = jet

    def derivs(self, x, n):
        x = np.asarray(x, dtype=float)
        return [np.broadcast_to(d, x.shape).astype(float) for d in self._jet(x, n)]
