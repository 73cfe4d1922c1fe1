"""Smooth cutoff functions built from exp(-1/t) transitions.

All cutoffs in the package come from one fixed transition profile

    step(t) = S(t) / (S(t) + S(1-t)),   S(t) = exp(-1/t) for t > 0 else 0,

which is identically 0 for t <= 0 and identically 1 for t >= 1 (exactly, in
floating point: outside (0,1) the branch is selected, not computed).  The
profile is recorded in run manifests; estimates never depend on its shape.

Derivatives of the transition are generated symbolically once per order and
cached; orders above MAX_DERIV_ORDER raise OrderUnavailable.
"""

from functools import lru_cache

import numpy as np

from .errors import OrderUnavailable

MAX_DERIV_ORDER = 6

# below this margin the transition is < 1e-22 and is snapped to the flat value
_MARGIN = 1e-6


@lru_cache(maxsize=None)
def _step_deriv_fn(order):
    if order > MAX_DERIV_ORDER:
        raise OrderUnavailable(
            f"cutoff derivative order {order} > {MAX_DERIV_ORDER}")
    import sympy as sp
    t = sp.Symbol("t")
    expr = sp.exp(-1 / t) / (sp.exp(-1 / t) + sp.exp(-1 / (1 - t)))
    for _ in range(order):
        expr = sp.diff(expr, t)
    return sp.lambdify(t, expr, "numpy")


def step(t, order=0):
    """Smooth 0->1 transition on [0, 1], or its `order`-th derivative."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=float)
    if order == 0:
        out[t >= 1.0] = 1.0
    inside = (t > _MARGIN) & (t < 1.0 - _MARGIN)
    if np.any(inside):
        out[inside] = _step_deriv_fn(order)(t[inside])
    return out


def _scaled_step(t, lo, hi, order):
    """step((t - lo)/(hi - lo)) with the chain-rule factor for derivatives."""
    w = hi - lo
    return step((t - lo) / w, order) / w**order


def chi(t, delta, order=0):
    """Phase-space window: 1 on |t| <= delta/2, 0 on |t| >= delta. Even."""
    t = np.asarray(t, dtype=float)
    s = _scaled_step(np.abs(t), delta / 2.0, delta, order)
    body = -s if order > 0 else 1.0 - s
    if order == 0:
        return body
    return body * np.sign(t) ** order


def chi_tilde(t, M, order=0):
    """Frequency floor: 0 on |t| <= M, 1 on |t| >= 2M. Even."""
    t = np.asarray(t, dtype=float)
    s = _scaled_step(np.abs(t), float(M), 2.0 * M, order)
    if order == 0:
        return s
    return s * np.sign(t) ** order


def psi(tau, order=0):
    """Frequency-splitting bump: 1 on |tau| <= 1, 0 on |tau| >= 2."""
    tau = np.asarray(tau, dtype=float)
    s = _scaled_step(np.abs(tau), 1.0, 2.0, order)
    body = -s if order > 0 else 1.0 - s
    if order == 0:
        return body
    return body * np.sign(tau) ** order


def psi_tilde(tau, order=0):
    """Companion bump: 1 on supp psi (|tau| <= 2), 0 on |tau| >= 4."""
    tau = np.asarray(tau, dtype=float)
    s = _scaled_step(np.abs(tau), 2.0, 4.0, order)
    body = -s if order > 0 else 1.0 - s
    if order == 0:
        return body
    return body * np.sign(tau) ** order


def chi_unit(t, order=0):
    """Order-one spatial cutoff: 1 on |t| <= 1, 0 on |t| >= 2.

    Used by the microlocal evolution-norm probe, where the paper needs only
    "equal to 1 near 0 with compact support".
    """
    return psi(t, order)
