"""Concrete operators of the estimates: Delta-tilde, Q, R, the commutant B,
the frequency splitter, and the microlocalizer.

Everything applies matrix-free as compositions of spectral derivatives and
pointwise multiplications; the dense Weyl path of the weyl module is a
cross-check at coarse resolution, never the production path.

The commutant coefficient arctan(x) is tapered to constants in the outer
margin |x| > L - 2 (where the boundary-mass monitor requires negligible
mass) so that its closed-form derivatives vanish at the periodic wrap and
spectral differentiation stays exact on interior states.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from . import bumps
from .errors import AuditRequired, ResolutionTooCoarse
from .geometry import (perturbation_f, profile_A, profile_A_inv2,
                       potential_V1)
from .grid import Field, apply_multiplier
from .modes import ModeField
from .weyl import OperatorHandle, quantize, symbol_a


@dataclass(frozen=True)
class CutoffSpec:
    """Phase-space cutoff parameters of the microlocal estimates.

    chi(t)  = 1 for |t| <= delta/2, 0 for |t| >= delta;
    chi~(t) = 0 for |t| <= M,       1 for |t| >= 2M.
    """

    delta: float = 0.25
    M: float = 8.0
    eps: float = 0.1
    eps0: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.delta <= 0.5):
            raise ValueError("delta must lie in (0, 1/2]")
        if self.M < 1.0:
            raise ValueError("M must be >= 1")
        if self.eps <= 0 or self.eps0 <= 0:
            raise ValueError("eps and eps0 must be positive")

    def to_json(self):
        return {"delta": self.delta, "M": self.M, "eps": self.eps,
                "eps0": self.eps0}

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


def ensure_audited(spec):
    if not spec.audited:
        raise AuditRequired(
            "surface spec must pass audit_derivative_condition first")


# ---------------------------------------------------------------------------
# coefficient caches

@lru_cache(maxsize=32)
def _coeffs_2d(spec_key, grid_key):
    spec, grid = _coeffs_2d.refs[(spec_key, grid_key)]
    x = grid.x[:, None]
    th = grid.theta[None, :]
    f = perturbation_f(spec.f, x, th, spec.m)
    return {
        "esf_half": np.exp(-0.5 * spec.s * f),
        "esf": np.exp(-spec.s * f),
        "Ainv2": np.broadcast_to(profile_A_inv2(x, spec.m), f.shape).copy(),
        "V1": np.broadcast_to(potential_V1(x, spec.m), f.shape).copy(),
    }


_coeffs_2d.refs = {}


def _coeffs(spec, grid):
    key = (spec.to_json().__repr__(), grid.to_json().__repr__())
    _coeffs_2d.refs[key] = (spec, grid)
    return _coeffs_2d(*key)


def _lap_multipliers(grid):
    xi2, eta2 = grid.dual_mesh()
    return -(xi2**2), -(eta2**2)


# ---------------------------------------------------------------------------
# Delta-tilde, Q, R

def assemble_tilde_laplacian(spec, grid):
    """u -> e^{-sf/2}(d_x^2 + A^{-2} d_theta^2 - V1) e^{-sf/2} u.

    Spectral derivatives, pointwise multiplications; the symmetric
    factorized form makes Hermiticity exact on the grid.
    """
    ensure_audited(spec)
    c = _coeffs(spec, grid)
    mxx, mtt = _lap_multipliers(grid)

    def apply_fn(u):
        v = c["esf_half"] * u.values
        vh = sfft.fft2(v)
        out = sfft.ifft2(mxx * vh) + c["Ainv2"] * sfft.ifft2(mtt * vh) \
            - c["V1"] * v
        return Field(grid, c["esf_half"] * out)

    return OperatorHandle(apply=apply_fn, grid=grid, hermitian_hint=True,
                          label="tilde_laplacian")


def assemble_Q_R(spec, grid):
    """Q = -e^{-sf}(d_x^2 + A^{-2}d_theta^2) + R with R the lower-order part.

    R = -e^{-sf}(-s f_x d_x - A^{-2} s f_theta d_theta - (s/2) f_xx
        + ((s/2) f_x)^2 - A^{-2}(s/2) f_theta_theta + A^{-2}((s/2) f_theta)^2)

    The identity -Delta~ = Q + e^{-sf} V1 holds on the grid up to the
    spectral aliasing of the smooth compactly supported factors.
    """
    ensure_audited(spec)
    c = _coeffs(spec, grid)
    mxx, mtt = _lap_multipliers(grid)
    xi2, eta2 = grid.dual_mesh()
    x = grid.x[:, None]
    th = grid.theta[None, :]
    s = spec.s
    fx = perturbation_f(spec.f, x, th, spec.m, dx=1)
    ft = perturbation_f(spec.f, x, th, spec.m, dtheta=1)
    fxx = perturbation_f(spec.f, x, th, spec.m, dx=2)
    ftt = perturbation_f(spec.f, x, th, spec.m, dtheta=2)
    zer = (-(s / 2.0) * fxx + (s / 2.0) ** 2 * fx**2
           + c["Ainv2"] * (-(s / 2.0) * ftt + (s / 2.0) ** 2 * ft**2))

    def apply_R(u):
        if s == 0.0:
            return Field(grid, np.zeros_like(u.values))
        uh = sfft.fft2(u.values)
        ux = sfft.ifft2(1j * xi2 * uh)
        ut = sfft.ifft2(1j * eta2 * uh)
        w = -s * fx * ux - c["Ainv2"] * s * ft * ut + zer * u.values
        return Field(grid, -c["esf"] * w)

    def apply_Q(u):
        uh = sfft.fft2(u.values)
        lap = sfft.ifft2(mxx * uh) + c["Ainv2"] * sfft.ifft2(mtt * uh)
        return Field(grid, -c["esf"] * lap + apply_R(u).values)

    Q = OperatorHandle(apply=apply_Q, grid=grid, hermitian_hint=True,
                       label="Q")
    R = OperatorHandle(apply=apply_R, grid=grid, hermitian_hint=False,
                       label="R")
    return {"Q": Q, "R": R}


def multiply_esf_V1(spec, grid):
    """Multiplication by e^{-sf} V1 (the term dropped from Q)."""
    c = _coeffs(spec, grid)
    w = c["esf"] * c["V1"]
    return OperatorHandle(apply=lambda u: Field(grid, w * u.values),
                          grid=grid, hermitian_hint=True, label="esf_V1")


def hermitian_Q(spec, grid):
    """Q assembled as -Delta~ - e^{-sf} V1: exactly symmetric on the grid.

    Algebraically identical to assemble_Q_R's composition (the agreement,
    limited only by spectral aliasing of the smooth factors, is what the
    operator-identity check measures); this form is the propagation path
    because its Hermiticity is exact by construction.
    """
    ensure_audited(spec)
    c = _coeffs(spec, grid)
    mxx, mtt = _lap_multipliers(grid)
    wv1 = c["esf"] * c["V1"]

    def apply_fn(u):
        v = c["esf_half"] * u.values
        vh = sfft.fft2(v)
        lap = sfft.ifft2(mxx * vh) + c["Ainv2"] * sfft.ifft2(mtt * vh) \
            - c["V1"] * v
        return Field(grid, -c["esf_half"] * lap - wv1 * u.values)

    return OperatorHandle(apply=apply_fn, grid=grid, hermitian_hint=True,
                          label="Q (symmetric form)")


# per-mode (theta-independent f): eta enters as a parameter ------------------

def _coeffs_mode(spec, mgrid):
    x = mgrid.x
    f = perturbation_f(spec.f, x, 0.0, spec.m)
    return {
        "esf_half": np.exp(-0.5 * spec.s * f),
        "esf": np.exp(-spec.s * f),
        "Ainv2": profile_A_inv2(x, spec.m),
        "V1": potential_V1(x, spec.m),
        "fx": perturbation_f(spec.f, x, 0.0, spec.m, dx=1),
        "fxx": perturbation_f(spec.f, x, 0.0, spec.m, dx=2),
    }


def assemble_Q_mode(spec, mgrid, eta):
    """Per-mode Q at fixed integer eta, assembled in the exactly symmetric
    conjugated form Q_eta = -e^{-sf/2}(d_x^2 - A^{-2}eta^2 - V1)e^{-sf/2}
    - e^{-sf}V1.  Requires f independent of theta."""
    ensure_audited(spec)
    if spec.f.family == "angular":
        raise ValueError("per-mode reduction needs theta-independent f")
    c = _coeffs_mode(spec, mgrid)
    mxx = -mgrid.xi**2
    eta2 = float(eta) ** 2

    def apply_fn(u):
        v = c["esf_half"] * u.values
        lap = sfft.ifft(mxx * sfft.fft(v)) - c["Ainv2"] * eta2 * v \
            - c["V1"] * v
        out = -c["esf_half"] * lap - c["esf"] * c["V1"] * u.values
        return ModeField(mgrid, int(eta), out)

    return OperatorHandle(apply=apply_fn, grid=mgrid, hermitian_hint=True,
                          label=f"Q_mode[eta={eta}]")


# ---------------------------------------------------------------------------
# commutant B = arctan(x) d_x (tapered)

def _taper_T(x, L, order=0):
    """Odd coefficient T with T = x on |x| <= L-2, constant beyond |x| >= L-1.

    T' is the smooth plateau 1 -> 0 across [L-2, L-1]; T is its integral.
    """
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    tprime = 1.0 - bumps.step(a - (L - 2.0))
    if order == 1:
        return tprime
    if order == 2:
        return -bumps.step(a - (L - 2.0), order=1) * np.sign(x)
    if order != 0:
        return -bumps.step(a - (L - 2.0), order=order - 1) * np.sign(x) ** (order - 1)
    # integral of the plateau, odd in x
    core = np.minimum(a, L - 2.0)
    mask = a > L - 2.0
    if np.any(mask):
        # int_{L-2}^{min(a, L-1)} (1 - step) ds, Gauss-Legendre is overkill:
        # use the closed antiderivative via fine fixed quadrature (cached
        # accuracy ~1e-14 and only the margin needs it)
        nodes, weights = np.polynomial.legendre.leggauss(48)
        s_hi = np.minimum(a[mask], L - 1.0)
        half = (s_hi - (L - 2.0)) / 2.0
        mid = (s_hi + (L - 2.0)) / 2.0
        vals = np.zeros_like(s_hi)
        for nd, wt in zip(nodes, weights):
            pt = mid + half * nd
            vals += wt * (1.0 - bumps.step(pt - (L - 2.0)))
        core = core.astype(float)
        core[mask] += half * vals
    return np.sign(x) * core


def arctan_taper(x, L, order=0):
    """arctan(T(x)) and its first two derivatives, closed form."""
    T0 = _taper_T(x, L, 0)
    if order == 0:
        return np.arctan(T0)
    T1 = _taper_T(x, L, 1)
    if order == 1:
        return T1 / (1.0 + T0**2)
    T2 = _taper_T(x, L, 2)
    if order == 2:
        return T2 / (1.0 + T0**2) - 2.0 * T0 * T1**2 / (1.0 + T0**2) ** 2
    raise ValueError("arctan_taper exposes orders 0..2")


def commutant_B(grid):
    """B = arctan_taper(x) d_x, the positive-commutator commutant."""
    b = arctan_taper(grid.x, grid.L)[:, None]
    xi2, _ = grid.dual_mesh()

    def apply_fn(u):
        return Field(grid, b * sfft.ifft2(1j * xi2 * sfft.fft2(u.values)))

    return OperatorHandle(apply=apply_fn, grid=grid, hermitian_hint=False,
                          label="B")


def commutant_B_mode(mgrid):
    b = arctan_taper(mgrid.x, mgrid.L)

    def apply_fn(u):
        return ModeField(mgrid, u.eta,
                         b * sfft.ifft(1j * mgrid.xi * sfft.fft(u.values)))

    return OperatorHandle(apply=apply_fn, grid=mgrid, hermitian_hint=False,
                          label="B_mode")


def commutator_QB(spec, grid):
    """[Q, B] two ways: by composition, and by the expanded closed form

    [Q,B] = -e^{-sf}[ 2 b' d_x^2 + b'' d_x + 2 b A'A^{-3} d_theta^2
                      + s f_x b (d_x^2 + A^{-2} d_theta^2) ] + [R, B],

    with b = arctan_taper, [R,B] expanded by the product rule.  On interior
    band-limited states the two agree to spectral accuracy.
    """
    ensure_audited(spec)
    QR = assemble_Q_R(spec, grid)
    Q, R = QR["Q"], QR["R"]
    B = commutant_B(grid)

    def apply_direct(u):
        return Field(grid, Q.apply(B.apply(u)).values
                     - B.apply(Q.apply(u)).values)

    c = _coeffs(spec, grid)
    x = grid.x[:, None]
    th = grid.theta[None, :]
    s = spec.s
    m = spec.m
    b0 = arctan_taper(grid.x, grid.L, 0)[:, None]
    b1 = arctan_taper(grid.x, grid.L, 1)[:, None]
    b2 = arctan_taper(grid.x, grid.L, 2)[:, None]
    Ap = profile_A(x, m, 1)
    A0 = profile_A(x, m, 0)
    ApA3 = Ap / A0**3
    Ainv2 = c["Ainv2"]
    Ainv2p = profile_A_inv2(x, m, 1)
    xi2, eta2 = grid.dual_mesh()

    fx = perturbation_f(spec.f, x, th, m, dx=1)
    ft = perturbation_f(spec.f, x, th, m, dtheta=1)
    fxx = perturbation_f(spec.f, x, th, m, dx=2)
    fxt = perturbation_f(spec.f, x, th, m, dx=1, dtheta=1)
    ftt = perturbation_f(spec.f, x, th, m, dtheta=2)
    fxxx = perturbation_f(spec.f, x, th, m, dx=3)
    fxtt = perturbation_f(spec.f, x, th, m, dx=1, dtheta=2)

    # d_x of the zeroth-order coefficient of W (R = -e^{-sf} W)
    zer_x = (-(s / 2.0) * fxxx + (s**2 / 2.0) * fx * fxx
             + Ainv2p * (-(s / 2.0) * ftt + (s**2 / 4.0) * ft**2)
             + Ainv2 * (-(s / 2.0) * fxtt + (s**2 / 2.0) * ft * fxt))
    zer = (-(s / 2.0) * fxx + (s / 2.0) ** 2 * fx**2
           + Ainv2 * (-(s / 2.0) * ftt + (s / 2.0) ** 2 * ft**2))

    def apply_expansion(u):
        uh = sfft.fft2(u.values)
        ux = sfft.ifft2(1j * xi2 * uh)
        ut = sfft.ifft2(1j * eta2 * uh)
        uxx = sfft.ifft2(-(xi2**2) * uh)
        utt = sfft.ifft2(-(eta2**2) * uh)
        uxt = sfft.ifft2(-(xi2 * eta2) * uh)
        main = 2.0 * b1 * uxx + b2 * ux + 2.0 * b0 * ApA3 * utt \
            + s * fx * b0 * (uxx + Ainv2 * utt)
        out = -c["esf"] * main
        if s != 0.0:
            # [R,B] = e^{-sf}[ b(-s f_xx d_x - ((A^{-2})' s f_t + A^{-2} s f_xt) d_t
            #                  + zer_x) + s f_x b' d_x - s f_x b W ]
            Wu = -s * fx * ux - Ainv2 * s * ft * ut + zer * u.values
            rb = (b0 * (-s * fxx * ux
                        - (Ainv2p * s * ft + Ainv2 * s * fxt) * ut
                        + zer_x * u.values)
                  + s * fx * b1 * ux - s * fx * b0 * Wu)
            out = out + c["esf"] * rb
        return Field(grid, out)

    direct = OperatorHandle(apply=apply_direct, grid=grid,
                            hermitian_hint=False, label="[Q,B] direct")
    expansion = OperatorHandle(apply=apply_expansion, grid=grid,
                               hermitian_hint=False, label="[Q,B] expansion")
    return {"direct": direct, "expansion": expansion}


# ---------------------------------------------------------------------------
# frequency splitter and microlocalizer

def freq_splitter(grid):
    """P1 = psi(D_x / <D_theta>), P2 = 1 - P1, P~ = psi~(D_x / <D_theta>)."""
    xi2, eta2 = grid.dual_mesh()
    tau = xi2 / np.sqrt(1.0 + eta2**2)
    m1 = bumps.psi(tau)
    mt = bumps.psi_tilde(tau)

    def mk(mult, label):
        def apply_fn(u):
            return Field(grid, sfft.ifft2(mult * sfft.fft2(u.values)))
        return OperatorHandle(apply=apply_fn, grid=grid,
                              hermitian_hint=True, label=label)

    return {"P1": mk(m1, "P1"), "P2": mk(1.0 - m1, "P2"),
            "Ptilde": mk(mt, "Ptilde")}


def microlocal_multiplier(cut, grid):
    """The (xi, eta) part chi(xi/eta; delta) chi~(eta; M) of the localizer."""
    xi2, eta2 = grid.dual_mesh()
    safe = np.where(np.abs(eta2) < 0.5, 0.5, eta2)
    mult = bumps.chi(xi2 / safe, cut.delta) * bumps.chi_tilde(eta2, cut.M)
    mult = np.where(np.abs(eta2) < cut.M, 0.0, mult)
    return mult


def microlocalizer(cut, grid, dense=False, dense_cap=None):
    """b^w for b = chi(x) chi(xi/eta) chi~(eta).

    dense=True quantizes through the weyl module (coarse grids only);
    otherwise the scalable multiplier-multiplication-multiplier sandwich
    chi(x) [chi(xi/eta) chi~(eta)] chi(x) is used.  Both are exposed since
    the dense path is the oracle for the sandwich.
    """
    if cut.delta * max(cut.M, 1.0) < 2.0 * np.pi / grid.L * 2.0:
        raise ResolutionTooCoarse(
            "xi window delta*M below two grid xi-spacings")
    if dense:
        from .weyl import SymbolFn
        from . import _symalg as sa
        expr = sa.Expr.of(
            sa.UniFactor(0, sa.UChi(cut.delta), "x"),
            sa.UniFactor(0, sa.UChi(cut.delta), "xi_over_eta"),
            sa.UniFactor(0, sa.UChiTilde(cut.M), "eta"))
        sym = SymbolFn(expr, 0.0, cut.eps, "b")
        kwargs = {} if dense_cap is None else {"dense_cap": dense_cap}
        return quantize(sym, grid, hermitian=True, **kwargs)

    cx = bumps.chi(grid.x, cut.delta)[:, None]
    mult = microlocal_multiplier(cut, grid)

    def apply_fn(u):
        v = cx * u.values
        v = sfft.ifft2(mult * sfft.fft2(v))
        return Field(grid, cx * v)

    return OperatorHandle(apply=apply_fn, grid=grid, hermitian_hint=True,
                          label="b^w sandwich")


def microlocalizer_mode(cut, mgrid, eta):
    """Per-mode sandwich localizer at fixed eta (theta-free symbol)."""
    cx = bumps.chi(mgrid.x, cut.delta)
    safe = max(abs(float(eta)), 0.5)
    mult = bumps.chi(mgrid.xi / safe, cut.delta) * \
        float(bumps.chi_tilde(np.array([float(eta)]), cut.M)[0])

    def apply_fn(u):
        v = cx * u.values
        v = sfft.ifft(mult * sfft.fft(v))
        return ModeField(mgrid, u.eta, cx * v)

    return OperatorHandle(apply=apply_fn, grid=mgrid, hermitian_hint=True,
                          label=f"b^w mode[eta={eta}]")


def microsupport_report(cut, u):
    """Fractions of mass outside the spatial window and the frequency window."""
    from .grid import l2_norm_sq
    total = l2_norm_sq(u)
    if total == 0.0:
        return {"x_outside": 0.0, "freq_outside": 0.0}
    outside_x = np.abs(u.grid.x) > cut.delta
    mx = u.grid.quad_weight * float(
        np.sum(np.abs(u.values[outside_x, :]) ** 2))
    xi2, eta2 = u.grid.dual_mesh()
    safe = np.where(np.abs(eta2) < 0.5, 0.5, eta2)
    inside = (np.abs(xi2 / safe) <= cut.delta) & (np.abs(eta2) >= cut.M)
    coeffs = sfft.fft2(u.values)
    mf = u.grid.spec_weight * float(np.sum(np.abs(coeffs[~inside]) ** 2))
    return {"x_outside": mx / total, "freq_outside": mf / total}
