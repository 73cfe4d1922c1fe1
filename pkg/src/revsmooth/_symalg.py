"""Closed-form derivative algebra for phase-space symbols.

Symbols on (x, theta, xi, eta) are sums of products of univariate factors
applied to one of the slots

    x | theta | xi | eta | xi/eta | xi*|eta|^{-eps}

plus two special factors tied to the conformal perturbation: FPartial(j,k)
(= d_x^j d_theta^k f) and ExpSF (= e^{-s f}).  Every factor knows its exact
derivative as a finite sum of products of factors, so xi/x/theta derivatives
of arbitrary order are closed form, and the eta-"derivative" is realized as
the exact difference a(.., eta+1) - a(.., eta) by carrying an integer eta
offset on each factor.

Slots that divide by eta are evaluated with |eta| clamped away from 0; all
shipped symbols carry a chi-tilde(eta) factor vanishing there, so the
clamped values never contribute.
"""

from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import bumps
from .errors import OrderUnavailable
from .geometry import perturbation_f

_ETA_GUARD = 0.5
_MAX_F_ORDER = 8


def _guard_eta(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < _ETA_GUARD, _ETA_GUARD, t)


# ---------------------------------------------------------------------------
# univariate function pieces

class UFn:
    def ev(self, t):
        raise NotImplementedError

    def d(self):
        """Derivative as a list of (coeff, [UFn, ...]) on the same slot."""
        raise NotImplementedError


@dataclass(frozen=True)
class UPoly(UFn):
    coeffs: tuple

    def ev(self, t):
        return npoly.polyval(np.asarray(t, dtype=float), self.coeffs)

    def d(self):
        if len(self.coeffs) <= 1:
            return []
        dc = tuple(k * c for k, c in enumerate(self.coeffs))[1:]
        return [(1.0, [UPoly(dc)])]


def monomial(k, coeff=1.0):
    return UPoly((0.0,) * k + (coeff,))


@dataclass(frozen=True)
class UPow(UFn):
    """t^p for integer p (negative powers guarded away from t = 0)."""
    p: int

    def ev(self, t):
        t = np.asarray(t, dtype=float)
        if self.p < 0:
            t = _guard_eta(t)
        return t ** self.p

    def d(self):
        if self.p == 0:
            return []
        return [(float(self.p), [UPow(self.p - 1)])]


@dataclass(frozen=True)
class UAbsPow(UFn):
    """|t|^p; appears only on the eta slot, never differentiated."""
    p: float

    def ev(self, t):
        t = np.asarray(t, dtype=float)
        if self.p < 0:
            t = _guard_eta(t)
        return np.abs(t) ** self.p

    def d(self):
        raise OrderUnavailable("|t|^p factors expose no derivative")


@dataclass(frozen=True)
class UBracketPow(UFn):
    """<t>^p = (1 + t^2)^{p/2}."""
    p: float

    def ev(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 + t * t) ** (self.p / 2.0)

    def d(self):
        return [(self.p, [UPoly((0.0, 1.0)), UBracketPow(self.p - 2.0)])]


@dataclass(frozen=True)
class UProfilePow(UFn):
    """(1 + t^{2m})^q, the building block of A and its powers."""
    q: float
    m: int

    def ev(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 + t ** (2 * self.m)) ** self.q

    def d(self):
        return [(2.0 * self.m * self.q,
                 [monomial(2 * self.m - 1), UProfilePow(self.q - 1.0, self.m)])]


@dataclass(frozen=True)
class ULambda(UFn):
    """Lambda(t) = int_0^t <s>^{-1-eps0} ds (arctan when eps0 = 1)."""
    eps0: float

    def ev(self, t):
        from .resolvent import lambda_fn
        return lambda_fn(t, self.eps0)

    def d(self):
        return [(1.0, [UBracketPow(-1.0 - self.eps0)])]


@dataclass(frozen=True)
class UGauss(UFn):
    """exp(-t^2 / w^2)."""
    w: float

    def ev(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-(t * t) / self.w**2)

    def d(self):
        return [(-2.0 / self.w**2, [UPoly((0.0, 1.0)), UGauss(self.w)])]


@dataclass(frozen=True)
class UChi(UFn):
    delta: float
    order: int = 0

    def ev(self, t):
        return bumps.chi(t, self.delta, self.order)

    def d(self):
        return [(1.0, [UChi(self.delta, self.order + 1)])]


@dataclass(frozen=True)
class UChiTilde(UFn):
    M: float
    order: int = 0

    def ev(self, t):
        return bumps.chi_tilde(t, self.M, self.order)

    def d(self):
        return [(1.0, [UChiTilde(self.M, self.order + 1)])]


@dataclass(frozen=True)
class UPsi(UFn):
    order: int = 0

    def ev(self, t):
        return bumps.psi(t, self.order)

    def d(self):
        return [(1.0, [UPsi(self.order + 1)])]


# ---------------------------------------------------------------------------
# factors = univariate function on a slot, or the f-derived specials

SLOTS = ("x", "theta", "xi", "eta", "xi_over_eta", "xi_abs_eta")


@dataclass(frozen=True)
class Factor:
    eta_offset: int = 0

    def shifted(self, d=1):
        return self

    def ev(self, x, th, xi, eta):
        raise NotImplementedError

    def d(self, var):
        """d/d var as a list of (coeff, [Factor, ...]); var in x/theta/xi."""
        raise NotImplementedError


@dataclass(frozen=True)
class UniFactor(Factor):
    fn: UFn = None
    slot: str = "x"
    eps: float = 0.0  # only for slot xi_abs_eta

    def shifted(self, d=1):
        if self.slot in ("eta", "xi_over_eta", "xi_abs_eta"):
            return replace(self, eta_offset=self.eta_offset + d)
        return self

    def _arg(self, x, th, xi, eta):
        if self.slot == "x":
            return x
        if self.slot == "theta":
            return th
        if self.slot == "xi":
            return xi
        e = np.asarray(eta, dtype=float) + self.eta_offset
        if self.slot == "eta":
            return e
        if self.slot == "xi_over_eta":
            return np.asarray(xi, dtype=float) / _guard_eta(e)
        if self.slot == "xi_abs_eta":
            return np.asarray(xi, dtype=float) * \
                np.abs(_guard_eta(e)) ** (-self.eps)
        raise ValueError(self.slot)

    def ev(self, x, th, xi, eta):
        return self.fn.ev(self._arg(x, th, xi, eta))

    def d(self, var):
        if var not in ("x", "theta", "xi"):
            raise ValueError(var)
        direct = {"x": "x", "theta": "theta", "xi": "xi"}
        if self.slot == direct[var]:
            inner = [(1.0, [])]
        elif var == "xi" and self.slot == "xi_over_eta":
            inner = [(1.0, [UniFactor(self.eta_offset, UPow(-1), "eta")])]
        elif var == "xi" and self.slot == "xi_abs_eta":
            inner = [(1.0, [UniFactor(self.eta_offset, UAbsPow(-self.eps), "eta")])]
        else:
            return []
        out = []
        for ci, extra in inner:
            for co, fns in self.fn.d():
                fs = [replace(self, fn=f) for f in fns] + extra
                out.append((ci * co, fs))
        return out


@dataclass(frozen=True)
class FPartial(Factor):
    """d_x^j d_theta^k f, closed form from the geometry module."""
    j: int = 0
    k: int = 0
    pspec: object = None
    m: int = 2

    def ev(self, x, th, xi, eta):
        return perturbation_f(self.pspec, x, th, self.m,
                              dx=self.j, dtheta=self.k)

    def d(self, var):
        if self.j + self.k + 1 > _MAX_F_ORDER:
            raise OrderUnavailable("perturbation derivative order exhausted")
        if var == "x":
            return [(1.0, [replace(self, j=self.j + 1)])]
        if var == "theta":
            return [(1.0, [replace(self, k=self.k + 1)])]
        return []


@dataclass(frozen=True)
class ExpSF(Factor):
    """e^{-s f(x, theta)}."""
    pspec: object = None
    m: int = 2
    s: float = 0.0

    def ev(self, x, th, xi, eta):
        f = perturbation_f(self.pspec, x, th, self.m)
        return np.exp(-self.s * f)

    def d(self, var):
        if var in ("x", "theta"):
            jk = (1, 0) if var == "x" else (0, 1)
            return [(-self.s,
                     [FPartial(0, jk[0], jk[1], self.pspec, self.m), self])]
        return []


# ---------------------------------------------------------------------------
# expressions: sums of products of factors

class Expr:
    """Sum of (coeff, factors) products; immutable by convention."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        self.terms = [(complex(c), tuple(fs)) for c, fs in terms if c != 0]

    @classmethod
    def const(cls, c):
        return cls([(c, ())])

    @classmethod
    def of(cls, *factors, coeff=1.0):
        return cls([(coeff, tuple(factors))])

    def ev(self, x, th, xi, eta):
        shape = np.broadcast(np.asarray(x), np.asarray(th),
                             np.asarray(xi), np.asarray(eta)).shape
        out = np.zeros(shape, dtype=complex)
        for c, fs in self.terms:
            acc = np.full(shape, c, dtype=complex) if not fs else c
            for f in fs:
                acc = acc * f.ev(x, th, xi, eta)
            out += np.broadcast_to(acc, shape)
        return out

    def d(self, var):
        new = []
        for c, fs in self.terms:
            for i, f in enumerate(fs):
                for cd, parts in f.d(var):
                    new.append((c * cd, fs[:i] + tuple(parts) + fs[i + 1:]))
        return Expr(new)

    def shift_eta(self, d=1):
        return Expr([(c, tuple(f.shifted(d) for f in fs))
                     for c, fs in self.terms])

    def delta_eta(self):
        """Exact difference a(.., eta + 1) - a(.., eta)."""
        return self.shift_eta(1) + self * (-1.0)

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = Expr.const(other)
        return Expr(self.terms + other.terms)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return Expr([(c * other, fs) for c, fs in self.terms])
        return Expr([(ca * cb, fa + fb)
                     for ca, fa in self.terms for cb, fb in other.terms])

    __rmul__ = __mul__

    def n_terms(self):
        return len(self.terms)


def poisson_bracket(a, b):
    """{a, b} = a_xi b_x - a_x b_xi + (Delta_eta a) b_theta - a_theta (Delta_eta b).

    The eta slot uses exact differences, matching the hybrid calculus; the
    quantized commutator satisfies [a^w, b^w] ~ ((1/i){a,b})^w to top order.
    """
    return (a.d("xi") * b.d("x") + (-1.0) * (a.d("x") * b.d("xi"))
            + a.delta_eta() * b.d("theta")
            + (-1.0) * (a.d("theta") * b.delta_eta()))


# ---------------------------------------------------------------------------
# Moyal-type expansion on tensor pairs

def _pair_aD(pairs):
    """Apply A(D) = -(1/2)(d_xi d_x~ + D_eta d_theta~ - d_x d_xi~ - d_theta D_eta~)
    to a list of (coeff, a_factors, b_factors) tensor terms."""
    out = []

    def da(fs, var):
        return Expr([(1.0, fs)]).d(var).terms

    def dd(fs):
        return Expr([(1.0, fs)]).delta_eta().terms

    for c, fa, fb in pairs:
        for ca, fa2 in da(fa, "xi"):
            for cb, fb2 in da(fb, "x"):
                out.append((-0.5 * c * ca * cb, fa2, fb2))
        for ca, fa2 in dd(fa):
            for cb, fb2 in da(fb, "theta"):
                out.append((-0.5 * c * ca * cb, fa2, fb2))
        for ca, fa2 in da(fa, "x"):
            for cb, fb2 in da(fb, "xi"):
                out.append((0.5 * c * ca * cb, fa2, fb2))
        for ca, fa2 in da(fa, "theta"):
            for cb, fb2 in dd(fb):
                out.append((0.5 * c * ca * cb, fa2, fb2))
    return out


def moyal_expansion(a, b, N):
    """Truncated composition symbol sum_{k<=N} (i^k / k!) A(D)^k (a x b)|_diag."""
    pairs = [(ca * cb, fa, fb)
             for ca, fa in a.terms for cb, fb in b.terms]
    total = Expr([])
    fact = 1.0
    for k in range(N + 1):
        if k > 0:
            pairs = _pair_aD(pairs)
            fact *= k
        coeff = (1j ** k) / fact
        total = total + Expr([(coeff * c, fa + fb) for c, fa, fb in pairs])
    return total
