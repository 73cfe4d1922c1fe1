"""Discrete Weyl quantization on the periodic grid and the symbol calculus.

The dense quantization follows the midpoint rule: with x-midpoints on the
half-shifted lattice and theta-midpoints likewise, the matrix element reduces
to an inverse DFT of the symbol over the dual lattice,

    M[(i,j),(i',j')] = IDFT_{k,l -> (i-i') mod N_x, (j-j') mod N_theta}
                           a(x_half[i+i'], theta_half[j+j'], xi_k, eta_l),

so a real symbol yields an exactly Hermitian matrix.  Dense matrices are the
verification path only; production evolution composes multipliers and
multiplications (operators module).

Symbols carry exact closed-form derivatives through the factor algebra in
_symalg; eta-"derivatives" are the paper-style exact differences.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np
import scipy.fft as sfft

from . import _symalg as sa
from .errors import AuditFailed, GridTooLarge

DENSE_CAP = 16384


@dataclass(frozen=True)
class SymbolFn:
    """Phase-space symbol a(x, theta, xi, eta) with declared class data."""

    expr: object = None            # _symalg.Expr, or None when fn is given
    order: float = 0.0             # growth order m in <xi>^m
    rho: float = 1.0               # per-derivative gain, in (0, 1]
    label: str = ""
    fn: object = field(default=None, repr=False)  # raw callable fallback

    def __call__(self, x, theta, xi, eta):
        if self.expr is not None:
            return self.expr.ev(x, theta, xi, eta)
        return self.fn(x, theta, xi, eta)

    def _need_expr(self):
        if self.expr is None:
            raise ValueError(f"symbol {self.label!r} has no factor expression")
        return self.expr

    def d(self, var):
        return SymbolFn(self._need_expr().d(var), self.order, self.rho,
                        f"d_{var} {self.label}")

    def delta_eta(self):
        return SymbolFn(self._need_expr().delta_eta(), self.order, self.rho,
                        f"D_eta {self.label}")

    @property
    def theta_free(self):
        """True when the symbol provably does not depend on theta."""
        if self.expr is None:
            return False
        for _, fs in self.expr.terms:
            for f in fs:
                if isinstance(f, sa.UniFactor) and f.slot == "theta":
                    return False
                if isinstance(f, (sa.FPartial, sa.ExpSF)):
                    if f.pspec.family == "angular":
                        return False
                    if isinstance(f, sa.FPartial) and f.k > 0:
                        return False
        return True

    def is_real(self, probe=None):
        if probe is None:
            rng = np.random.default_rng(7)
            probe = [rng.uniform(-3, 3, 64), rng.uniform(0, 6.28, 64),
                     rng.uniform(-9, 9, 64), np.arange(-32, 32)]
        vals = self(probe[0], probe[1], probe[2], probe[3][:64])
        return float(np.max(np.abs(np.imag(vals)))) < 1e-12


@dataclass(frozen=True)
class OperatorHandle:
    """Linear operator: matrix-free apply plus optional dense realization."""

    apply: object = field(repr=False)
    grid: object = None
    dense: np.ndarray | None = field(default=None, repr=False)
    hermitian_hint: bool = False
    label: str = ""

    def __call__(self, u):
        return self.apply(u)


# ---------------------------------------------------------------------------
# symbol builders

def sym_const(c=1.0):
    return SymbolFn(sa.Expr.const(c), 0.0, 1.0, f"{c}")


def sym_x(power=1):
    return SymbolFn(sa.Expr.of(sa.UniFactor(0, sa.monomial(power), "x")),
                    0.0, 1.0, f"x^{power}")


def sym_xi(power=1):
    return SymbolFn(sa.Expr.of(sa.UniFactor(0, sa.monomial(power), "xi")),
                    float(power), 1.0, f"xi^{power}")


def sym_eta(power=1):
    return SymbolFn(sa.Expr.of(sa.UniFactor(0, sa.UPow(power), "eta")),
                    0.0, 1.0, f"eta^{power}")


def sym_mul(a, b, order=None, rho=None, label=""):
    return SymbolFn(a._need_expr() * b._need_expr(),
                    order if order is not None else a.order + b.order,
                    rho if rho is not None else min(a.rho, b.rho),
                    label or f"({a.label})*({b.label})")


def sym_add(a, b, order=None, rho=None, label=""):
    return SymbolFn(a._need_expr() + b._need_expr(),
                    order if order is not None else max(a.order, b.order),
                    rho if rho is not None else min(a.rho, b.rho),
                    label or f"({a.label})+({b.label})")


def symbol_p(m):
    """p = xi^2 + A^{-2}(x) eta^2, the principal symbol of -Delta_{g_0}."""
    e = sa.Expr.of(sa.UniFactor(0, sa.monomial(2), "xi")) + \
        sa.Expr.of(sa.UniFactor(0, sa.UProfilePow(-1.0 / m, m), "x"),
                   sa.UniFactor(0, sa.UPow(2), "eta"))
    return SymbolFn(e, 2.0, 1.0, "p")


def symbol_q(spec):
    """e^{-s f} p, the full conjugated principal symbol."""
    esf = sa.Expr.of(sa.ExpSF(0, spec.f, spec.m, spec.s))
    return SymbolFn(esf * symbol_p(spec.m).expr, 2.0, 1.0, "e^{-sf} p")


def symbol_a(cut):
    """The commutant symbol chi(x) chi(xi/eta) Lambda(x) Lambda(xi|eta|^-eps)
    chi~(eta); lies in S^0_eps on |xi| <= |eta|."""
    e = sa.Expr.of(
        sa.UniFactor(0, sa.UChi(cut.delta), "x"),
        sa.UniFactor(0, sa.UChi(cut.delta), "xi_over_eta"),
        sa.UniFactor(0, sa.ULambda(cut.eps0), "x"),
        sa.UniFactor(0, sa.ULambda(cut.eps0), "xi_abs_eta", cut.eps),
        sa.UniFactor(0, sa.UChiTilde(cut.M), "eta"),
    )
    return SymbolFn(e, 0.0, cut.eps, "a")


# ---------------------------------------------------------------------------
# dense quantization

def _check_cap(n, dense_cap):
    if n > dense_cap:
        raise GridTooLarge(
            f"dense quantization needs N_x*N_theta <= {dense_cap}, got {n}")


def _half_lattices(grid):
    xh = -grid.L + (grid.dx / 2.0) * np.arange(2 * grid.N_x)
    th = (grid.dtheta / 2.0) * np.arange(2 * grid.N_theta)
    return xh, th


def quantize(a, grid, dense_cap=DENSE_CAP, hermitian=None):
    """Dense Weyl quantization of a symbol on a (small) 2D grid."""
    n = grid.N_x * grid.N_theta
    _check_cap(n, dense_cap)
    xh, th = _half_lattices(grid)
    xi, eta = grid.xi, grid.eta

    # symbol on midpoints x frequencies, inverse DFT over frequencies
    w = np.empty((2 * grid.N_x, 2 * grid.N_theta, grid.N_x, grid.N_theta),
                 dtype=np.complex128)
    for r in range(2 * grid.N_x):  # batched to bound peak memory
        s_block = np.asarray(
            a(xh[r], th[:, None, None], xi[None, :, None],
              eta[None, None, :]), dtype=np.complex128)
        w[r] = sfft.ifft2(np.broadcast_to(
            s_block, (2 * grid.N_theta, grid.N_x, grid.N_theta)), axes=(-2, -1))

    idx = np.arange(grid.N_x)
    jdx = np.arange(grid.N_theta)
    r_sum = idx[:, None, None, None] + idx[None, None, :, None]
    s_sum = jdx[None, :, None, None] + jdx[None, None, None, :]
    m_lag = (idx[:, None, None, None] - idx[None, None, :, None]) % grid.N_x
    n_lag = (jdx[None, :, None, None] - jdx[None, None, None, :]) % grid.N_theta
    dense = w[r_sum, s_sum, m_lag, n_lag].reshape(n, n)

    if hermitian is None:
        hermitian = isinstance(a, SymbolFn) and a.is_real()

    from .grid import Field

    def apply_fn(u):
        return Field(grid, (dense @ u.values.ravel()).reshape(
            grid.N_x, grid.N_theta))

    return OperatorHandle(apply=apply_fn, grid=grid, dense=dense,
                          hermitian_hint=bool(hermitian),
                          label=getattr(a, "label", "a^w"))


def quantize_mode(a, mode_grid, eta, dense_cap=DENSE_CAP):
    """1D Weyl quantization at fixed integer eta (theta-free symbols).

    For symbols independent of theta the 2D quantization block-diagonalizes
    over modes; this returns the N_x x N_x block at the given eta.
    """
    _check_cap(mode_grid.N_x, dense_cap)
    xh = -mode_grid.L + (mode_grid.dx / 2.0) * np.arange(2 * mode_grid.N_x)
    xi = mode_grid.xi
    s_arr = np.asarray(a(xh[:, None], 0.0, xi[None, :], float(eta)),
                       dtype=np.complex128)
    w = sfft.ifft(s_arr, axis=-1)
    idx = np.arange(mode_grid.N_x)
    dense = w[idx[:, None] + idx[None, :],
              (idx[:, None] - idx[None, :]) % mode_grid.N_x]
    return dense


# ---------------------------------------------------------------------------
# composition / commutator calculus

def compose_expand(a, b, N):
    """N-term expansion of a#b (Moyal-type, eta realized as differences)."""
    expr = sa.moyal_expansion(a._need_expr(), b._need_expr(), N)
    return SymbolFn(expr, a.order + b.order, min(a.rho, b.rho),
                    f"({a.label})#({b.label})[N={N}]")


def poisson_symbol(a, b):
    """(1/i){a, b} as a SymbolFn (leading commutator symbol)."""
    expr = sa.poisson_bracket(a._need_expr(), b._need_expr()) * (-1j)
    return SymbolFn(expr, a.order + b.order, min(a.rho, rho_min(a, b)),
                    f"(1/i){{{a.label},{b.label}}}")


def rho_min(a, b):
    return min(a.rho, b.rho)


def operator_norm(mat, iters=200, tol=1e-8):
    """Power iteration on M^dagger M; deterministic start vector.

    Recorded as an estimate, not a certified norm.
    """
    n = mat.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n), dtype=np.complex128)
    v += np.cos(np.arange(n)) / (3.0 * np.sqrt(n))  # break symmetry, fixed
    v /= np.linalg.norm(v)
    last = 0.0
    for _ in range(iters):
        w = mat.conj().T @ (mat @ v)
        s = np.linalg.norm(w)
        if s == 0.0:
            return 0.0
        v = w / s
        if abs(s - last) <= tol * max(s, 1.0):
            last = s
            break
        last = s
    return float(np.sqrt(last))


def _band_projector_2d(grid, H):
    xi2, eta2 = grid.dual_mesh()
    keep = np.abs(xi2) <= 0.75 * np.abs(grid.xi).max()
    keep &= np.abs(eta2) <= 0.75 * np.abs(grid.eta).max()
    if H is not None:
        keep &= (np.abs(eta2) >= H) & (np.abs(eta2) <= 2 * H)
    return keep.ravel()


def commutator_residual(a, b, grid, H=None, mode_grid=None):
    """Residual of [a^w, b^w] against the quantized Poisson bracket.

    resid_1 is the restricted operator norm of [a^w,b^w] - ((1/i){a,b})^w
    (absolute); resid_poisson is the same norm relative to the larger of
    the commutator and bracket norms.  Restriction is to states band-limited
    to |eta| in [H, 2H] (full lattice when H is None), always excluding the
    outer quarter of the dual lattice where periodic Nyquist artifacts of
    the discrete quantization live.  The relative form is what decays
    across dyadic blocks: the remainder symbol gains 3 rho while the
    bracket gains only 1.
    """
    if a.theta_free and b.theta_free and mode_grid is not None:
        return _commutator_residual_mode(a, b, mode_grid, H)

    A = quantize(a, grid).dense
    B = quantize(b, grid).dense
    comm = A @ B - B @ A
    pois = quantize(poisson_symbol(a, b), grid).dense
    keep = _band_projector_2d(grid, H)
    sub = np.ix_(keep, keep)
    n1 = operator_norm(comm[sub])
    npois = operator_norm(pois[sub])
    nd = operator_norm((comm - pois)[sub])
    return {"resid_1": nd, "resid_poisson": nd / max(n1, npois, 1e-300)}


def _commutator_residual_mode(a, b, mode_grid, H):
    pois = poisson_symbol(a, b)
    etas = (range(int(H), 2 * int(H) + 1) if H is not None
            else range(1, mode_grid.N_x // 4))
    keep = np.abs(mode_grid.xi) <= 0.75 * np.abs(mode_grid.xi).max()
    sub = np.ix_(keep, keep)
    n1 = 0.0
    npois = 0.0
    nd = 0.0
    for eta in etas:
        A = quantize_mode(a, mode_grid, eta)
        B = quantize_mode(b, mode_grid, eta)
        comm = A @ B - B @ A
        P = quantize_mode(pois, mode_grid, eta)
        n1 = max(n1, operator_norm(comm[sub]))
        npois = max(npois, operator_norm(P[sub]))
        nd = max(nd, operator_norm((comm - P)[sub]))
    return {"resid_1": nd, "resid_poisson": nd / max(n1, npois, 1e-300)}


# ---------------------------------------------------------------------------
# symbol class audit

def _deriv_expr(a, alpha, beta, gamma, delta):
    e = a._need_expr()
    for _ in range(alpha):
        e = e.d("xi")
    for _ in range(beta):
        e = e.d("x")
    for _ in range(gamma):
        e = e.d("theta")
    for _ in range(delta):
        e = e.delta_eta()
    return e


def audit_symbol_class(a, m_sym, rho, orders=2, eta_max=2048,
                       raise_on_fail=True):
    """Sample the S^m_rho inequalities on a log lattice with |xi| <= |eta|.

    Reports the smallest admissible constant per multi-index
    (alpha, beta, gamma, delta); detects growth across dyadic shells in
    <eta> and raises AuditFailed with a witness when a ratio diverges.
    """
    shells = []
    h = 2.0
    while h <= eta_max:
        shells.append(h)
        h *= 2.0
    xs = np.linspace(-6.0, 6.0, 17)
    ths = np.array([0.0]) if a.theta_free else np.linspace(0, 2 * np.pi, 4,
                                                           endpoint=False)
    constants = {}
    for alpha, beta, gamma, delta in itertools.product(range(orders + 1),
                                                       repeat=4):
        if alpha + beta + gamma + delta == 0 or \
                alpha + beta + gamma + delta > orders:
            continue
        expr = _deriv_expr(a, alpha, beta, gamma, delta)
        shell_sups = []
        worst = (0.0, None)
        for H in shells:
            etas = np.unique(np.rint(np.linspace(H, 2 * H, 5)))
            xis = np.concatenate([np.linspace(-H, H, 9)])  # |xi| <= |eta|
            vals = np.abs(expr.ev(
                xs[:, None, None, None], ths[None, :, None, None],
                xis[None, None, :, None], etas[None, None, None, :]))
            wgt = (1.0 + xis[None, None, :, None] ** 2) ** (
                (m_sym - alpha * rho) / 2.0) * \
                (1.0 + etas[None, None, None, :] ** 2) ** (-delta * rho / 2.0)
            ratio = vals / wgt
            k = np.unravel_index(np.argmax(ratio), ratio.shape)
            sup = float(ratio[k])
            shell_sups.append(sup)
            if sup > worst[0]:
                worst = (sup, (float(xs[k[0]]), float(ths[k[1]]),
                               float(xis[k[2]]), float(etas[k[3]])))
        growing = [shell_sups[i + 1] > 1.3 * shell_sups[i] + 1e-300
                   for i in range(len(shell_sups) - 3, len(shell_sups) - 1)]
        constants[(alpha, beta, gamma, delta)] = shell_sups[-1] if all(
            growing) else max(shell_sups)
        if all(growing) and shell_sups[-1] > 0:
            if raise_on_fail:
                raise AuditFailed(
                    f"symbol {a.label!r} fails S^{m_sym}_{rho} at index "
                    f"(alpha,beta,gamma,delta)=({alpha},{beta},{gamma},"
                    f"{delta})", witness=worst[1])
            constants[(alpha, beta, gamma, delta)] = float("inf")
    return constants
