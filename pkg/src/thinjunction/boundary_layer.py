"""Exponential boundary layers at the base of cylinder 3."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoundaryLayerTerm:
    """Pi_k(s) = amplitude * exp(-decay_rate * s), s = (ell_3 - x_3) / eps."""

    order: int
    amplitude: float
    decay_rate: float

    def __post_init__(self):
        if not self.decay_rate > 0.0:
            raise ValueError(f"layer decay rate must be positive, got {self.decay_rate}")


def build_layer_terms(limit, regs, spec, velocity, diffusion):
    """Terms k = 0..m: Phi_0 = q_3 - w_0(ell_3), Phi_k = -w_k(ell_3)."""
    l3 = spec.ell[2]
    rate = float(velocity.axial[2](l3)) / diffusion.axial_constants[2]
    out = []
    for term in regs:
        wl = float(term.w[2](l3))
        amp = spec.q[2] - wl if term.order == 0 else -wl
        out.append(BoundaryLayerTerm(term.order, amp, rate))
    return out


def eval_layer(term, s, nu=0):
    """Pi_k or its nu-th derivative in the stretched variable s >= 0."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("stretched distance must be nonnegative")
    return term.amplitude * (-term.decay_rate) ** nu * np.exp(-term.decay_rate * s)
