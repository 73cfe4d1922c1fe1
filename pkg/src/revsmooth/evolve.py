"""Unitary time evolution u(t) = e^{-itQ} u0 and the commutator identity.

The propagator is a short-iterate Lanczos approximation of e^{-i dt Q} with
full reorthogonalization and adaptive truncation of the Krylov dimension at
a per-step residual estimate; the induced step is exactly unitary up to the
orthonormality of the basis, so norm drift is a genuine diagnostic of
operator Hermiticity, not of time-stepping error.

Convention: (D_t + Q)u = 0 with D_t = -i d/dt, so u(t) = e^{-itQ} u0.

The time integral of <[Q,B]u, u> can be accumulated at every integrator
step (composite Simpson); the boundary identity

    int_0^T <[Q,B]u,u> dt = (1/i) <Bu,u>|_0^T

then holds to quadrature accuracy.  (The sign follows from the convention
above; d/dt <Bu,u> = i <[Q,B]u,u> for Hermitian Q.)
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import KrylovBreakdown, UnitarityLost
from .grid import Field, boundary_mass_fraction, inner, l2_norm
from .modes import (ModeField, mode_boundary_mass_fraction, mode_inner,
                    mode_l2_norm)


def _is_mode(u):
    return isinstance(u, ModeField)


def _like(u, flat):
    if _is_mode(u):
        return ModeField(u.grid, u.eta, flat)
    return Field(u.grid, flat.reshape(u.grid.N_x, u.grid.N_theta))


def _inner(u, v):
    return mode_inner(u, v) if _is_mode(u) else inner(u, v)


def _norm(u):
    return mode_l2_norm(u) if _is_mode(u) else l2_norm(u)


def _boundary(u):
    return (mode_boundary_mass_fraction(u) if _is_mode(u)
            else boundary_mass_fraction(u))


def negate_handle(Q):
    from .weyl import OperatorHandle

    def apply_fn(u):
        v = Q.apply(u)
        return _like(v, -v.values)

    return OperatorHandle(apply=apply_fn, grid=Q.grid,
                          hermitian_hint=Q.hermitian_hint,
                          label=f"-({Q.label})")


def lanczos_expm_step(apply_flat, v, tau, k_max=30, tol=1e-12):
    """Approximate e^{-i tau A} v for Hermitian A given as apply_flat.

    Full reorthogonalization; returns (new_v, residual_estimate, k_used).
    Raises KrylovBreakdown on non-finite recursion values.
    """
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        return v.copy(), 0.0, 0
    V = np.empty((k_max, n), dtype=np.complex128)
    V[0] = v / beta0
    alphas = np.empty(k_max)
    betas = np.empty(k_max)  # betas[j] couples V[j] and V[j+1]
    resid = np.inf
    y = None
    k = 0
    for j in range(k_max):
        w = apply_flat(V[j])
        if not np.all(np.isfinite(w)):
            raise KrylovBreakdown("non-finite value in Krylov recursion")
        alphas[j] = float(np.real(np.vdot(V[j], w)))
        w = w - alphas[j] * V[j]
        if j > 0:
            w = w - betas[j - 1] * V[j - 1]
        # full reorthogonalization (one pass)
        h = V[: j + 1].conj() @ w
        w = w - V[: j + 1].T @ h
        b = np.linalg.norm(w)
        k = j + 1
        lam, U = scipy.linalg.eigh_tridiagonal(alphas[:k], betas[: k - 1])
        phase = np.exp(-1j * tau * lam)
        y = U @ (phase * U[0].conj())
        resid = abs(b * tau * y[k - 1])  # first-neglected-term estimate
        if b <= 1e-13 * max(1.0, abs(alphas[j])):
            resid = 0.0  # happy breakdown: subspace is invariant
            break
        if resid < tol or j == k_max - 1:
            break
        betas[j] = b
        V[j + 1] = w / b
    out = (beta0 * y) @ V[:k]
    return out, float(resid), k


@dataclass
class Trajectory:
    """Sampled unitary evolution with its diagnostic logs."""

    grid: object
    times: np.ndarray
    fields: list | None
    u0: object
    u_final: object
    norm_drift: np.ndarray
    boundary_mass: np.ndarray
    boundary_flagged: bool
    krylov_resid_max: float
    dt: float
    dt_out: float
    identity: dict | None = None
    samples: list = field(default_factory=list)

    def sample_fields(self):
        if self.fields is None:
            raise ValueError("trajectory was run with keep_fields=False")
        return self.fields


def propagate(Q, u0, T, dt, dt_out, k_max=30, krylov_tol=1e-12, B=None,
              keep_fields=True, sample_callback=None, drift_tol=1e-8,
              boundary_tol=1e-8, raise_on_drift=True):
    """Evolve u0 under e^{-itQ}, sampling every dt_out.

    Q must be Hermitian-certified (hermitian_hint).  When B is given, the
    integrand <[Q,B]u,u> and the boundary terms <Bu,u> are accumulated at
    every step for the commutator identity.  sample_callback(t, u) output
    is collected in Trajectory.samples (used by the sweep drivers to avoid
    retaining fields).
    """
    if not Q.hermitian_hint:
        raise ValueError("propagate requires a Hermitian-certified operator")
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    if dt > dt_out + 1e-15:
        raise ValueError("dt must not exceed dt_out")

    n_steps = max(1, int(round(T / dt))) if T > 0 else 0
    dt_eff = T / n_steps if n_steps else 0.0
    stride = max(1, int(round(dt_out / dt_eff))) if n_steps else 1

    def apply_flat(flat):
        return Q.apply(_like(u0, flat)).values.ravel()

    u = _like(u0, u0.values.ravel().copy())
    norm0 = _norm(u)

    times = [0.0]
    fields = [u] if keep_fields else None
    drifts = [0.0]
    bmass = [_boundary(u)]
    samples = []
    if sample_callback is not None:
        samples.append(sample_callback(0.0, u))

    identity = None
    if B is not None:
        identity = {"t": [], "integrand": [],
                    "bu_start": _inner(B.apply(u), u), "bu_end": None}

    def record_identity(t, state):
        qv = Q.apply(state)
        val = _inner(B.apply(state), qv) - _inner(B.apply(qv), state)
        identity["t"].append(t)
        identity["integrand"].append(val)

    resid_max = 0.0
    flagged = bmass[0] > boundary_tol
    flat = u.values.ravel().copy()
    for step_i in range(n_steps):
        t = step_i * dt_eff
        if identity is not None:
            record_identity(t, _like(u0, flat))
        flat, resid, _ = lanczos_expm_step(apply_flat, flat, dt_eff,
                                           k_max=k_max, tol=krylov_tol)
        resid_max = max(resid_max, resid)
        t_next = (step_i + 1) * dt_eff
        if (step_i + 1) % stride == 0 or step_i + 1 == n_steps:
            state = _like(u0, flat)
            drift = abs(_norm(state) - norm0)
            if raise_on_drift and drift > drift_tol * (1.0 + t_next):
                raise UnitarityLost(
                    f"norm drift {drift:.3e} at t={t_next:.4f}")
            bm = _boundary(state)
            flagged = flagged or (bm > boundary_tol)
            times.append(t_next)
            drifts.append(drift)
            bmass.append(bm)
            if keep_fields:
                fields.append(state)
            if sample_callback is not None:
                samples.append(sample_callback(t_next, state))

    u_final = _like(u0, flat)
    if identity is not None:
        record_identity(T, u_final)
        identity["bu_end"] = _inner(B.apply(u_final), u_final)
        identity["t"] = np.asarray(identity["t"])
        identity["integrand"] = np.asarray(identity["integrand"])

    return Trajectory(grid=u0.grid, times=np.asarray(times), fields=fields,
                      u0=u0, u_final=u_final,
                      norm_drift=np.asarray(drifts),
                      boundary_mass=np.asarray(bmass),
                      boundary_flagged=flagged,
                      krylov_resid_max=resid_max, dt=dt_eff,
                      dt_out=stride * dt_eff, identity=identity,
                      samples=samples)


def _identity_residual(lhs, rhs, u0):
    scale = abs(lhs) + abs(rhs) + _norm(u0) ** 2
    return abs(lhs - rhs) / scale


def commutator_identity_residual(Q, B, traj):
    """|int <[Q,B]u,u> dt - (1/i)<Bu,u>|_0^T| by trapezoid over samples.

    Sample-rate quadrature only; the per-step accumulated version
    (commutator_identity_residual_fine) is the acceptance-grade evaluator.
    """
    vals = []
    for u in traj.sample_fields():
        qv = Q.apply(u)
        vals.append(_inner(B.apply(u), qv) - _inner(B.apply(qv), u))
    lhs = np.trapezoid(np.asarray(vals), traj.times)
    u0, uT = traj.fields[0], traj.fields[-1]
    rhs = (_inner(B.apply(uT), uT) - _inner(B.apply(u0), u0)) / 1j
    return _identity_residual(lhs, rhs, traj.u0)


def commutator_identity_residual_fine(traj):
    """Same identity from the per-step accumulator (composite Simpson)."""
    if traj.identity is None:
        raise ValueError("trajectory was propagated without B")
    rec = traj.identity
    lhs = scipy.integrate.simpson(rec["integrand"], x=rec["t"])
    rhs = (rec["bu_end"] - rec["bu_start"]) / 1j
    return _identity_residual(lhs, rhs, traj.u0)
