"""Surface geometry: profile A, curvature potential, conformal perturbations.

The surface is R_x x S^1_theta with metric e^{s f}(dx^2 + A^2(x) dtheta^2),
A(x) = (1 + x^{2m})^{1/2m}, m >= 2.  Everything here is closed form; the
auditor checks the derivative smallness condition on f near the trapped
orbit x = 0 by sampling on dyadic shells.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
import json
import math

import numpy as np
from numpy.polynomial import Polynomial

from .errors import AuditFailed

FAMILIES = ("zero", "radial", "angular")


def profile_A(x, m, order=0):
    """Warped-product profile A(x) = (1+x^{2m})^{1/2m} or A', A''.

    Total on real inputs; closed form for orders 0..2.
    """
    x = np.asarray(x, dtype=float)
    p = 1.0 + x ** (2 * m)
    e = 1.0 / (2 * m)
    if order == 0:
        return p**e
    if order == 1:
        return x ** (2 * m - 1) * p ** (e - 1.0)
    if order == 2:
        return (2 * m - 1) * x ** (2 * m - 2) * p ** (e - 2.0)
    raise ValueError(f"profile_A order {order} not exposed")


def profile_A_inv2(x, m, order=0):
    """A^{-2}(x) = (1+x^{2m})^{-1/m} and its first derivative."""
    x = np.asarray(x, dtype=float)
    p = 1.0 + x ** (2 * m)
    if order == 0:
        return p ** (-1.0 / m)
    if order == 1:
        return -2.0 * x ** (2 * m - 1) * p ** (-1.0 / m - 1.0)
    raise ValueError(f"profile_A_inv2 order {order} not exposed")


def potential_V1(x, m):
    """Curvature potential V1 = A''A^{-1}/2 - (A')^2 A^{-2}/4 (closed form).

    Even, bounded, V1(0) = 0 for m >= 2, decays like -x^{-2}/4 at infinity.
    """
    x = np.asarray(x, dtype=float)
    p = 1.0 + x ** (2 * m)
    return x ** (2 * m - 2) * p ** (-2.0) * ((2 * m - 1) / 2.0 - x ** (2 * m) / 4.0)


@dataclass(frozen=True)
class PerturbationSpec:
    """Conformal perturbation f of the metric.

    Families:
      zero     f = 0
      radial   f = c_f x^{2m} exp(-x^2/w_f^2)
      angular  f = c_f x^{2m} exp(-x^2/w_f^2) (1 + beta cos theta)

    f is numerically supported in |x| <= 6 w_f (|f| < 1e-12 outside); the
    Gaussian envelope keeps every audited derivative closed form.
    """

    family: str = "zero"
    c_f: float = 1.0
    beta: float = 0.5
    w_f: float = 1.0
    N_audit: int = 6

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown perturbation family {self.family!r}")
        if self.w_f <= 0:
            raise ValueError("envelope width w_f must be positive")

    def to_json(self):
        return {"family": self.family, "c_f": self.c_f, "beta": self.beta,
                "w_f": self.w_f, "N_audit": self.N_audit}

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@lru_cache(maxsize=None)
def _radial_poly(c_f, w_f, m, j):
    """Polynomial p_j with d^j/dx^j [c_f x^{2m} e^{-x^2/w^2}] = p_j(x) e^{-x^2/w^2}."""
    p = Polynomial([0.0] * (2 * m) + [c_f])
    for _ in range(j):
        p = p.deriv() - Polynomial([0.0, 2.0 / w_f**2]) * p
    return p


def _angular_factor(pspec, k, theta):
    """k-th theta-derivative of the angular factor."""
    theta = np.asarray(theta, dtype=float)
    if pspec.family == "angular":
        if k == 0:
            return 1.0 + pspec.beta * np.cos(theta)
        return pspec.beta * np.cos(theta + k * np.pi / 2.0)
    # zero/radial: theta-independent
    if k == 0:
        return np.ones_like(theta)
    return np.zeros_like(theta)


def perturbation_f(pspec, x, theta, m, dx=0, dtheta=0):
    """Evaluate d_x^dx d_theta^dtheta f at (x, theta); closed form, any order."""
    x = np.asarray(x, dtype=float)
    if pspec.family == "zero":
        return np.zeros(np.broadcast(x, np.asarray(theta)).shape)
    poly = _radial_poly(pspec.c_f, pspec.w_f, m, dx)
    radial = poly(x) * np.exp(-(x**2) / pspec.w_f**2)
    return radial * _angular_factor(pspec, dtheta, theta)


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    C_est: float
    worst: tuple  # (j, k, x, theta)
    table: dict = field(repr=False, default_factory=dict)

    def to_json(self):
        return {
            "passed": self.passed,
            "C_est": self.C_est,
            "worst": {"j": self.worst[0], "k": self.worst[1],
                      "x": self.worst[2], "theta": self.worst[3]},
            "table": {f"{j},{k}": v for (j, k), v in self.table.items()},
        }


def _comparator_exponent(m, j, k):
    # graded comparator: |x|^{2m-1} for the first derivative, one power lost
    # per further derivative (the shipped polynomial-vanishing families
    # cannot satisfy the uniform |x|^{2m-1} bound at every order)
    return max(2 * m - (j + k), 0)


def audit_derivative_condition(pspec, m, x_window=1.0, sample_count=256,
                               n_shells=12, raise_on_fail=False):
    """Audit |d_x^j d_theta^k f| <= C |x|^{2m-j-k} near 0 for 1 <= j+k.

    Samples ratios over |x| <= x_window on dyadic shells toward x = 0;
    a (j,k) pair fails when the per-shell suprema keep growing under
    refinement.  Returns an AuditReport with the smallest admissible C_est
    and the worst witness point.
    """
    if x_window <= 0:
        raise ValueError("x_window must be positive")
    if sample_count < 64:
        raise ValueError("sample_count must be >= 64")

    thetas = (np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
              if pspec.family == "angular" else np.array([0.0]))
    per_shell_x = max(sample_count // n_shells, 8)

    table = {}
    witnesses = {}
    diverging = []
    for j in range(0, pspec.N_audit + 1):
        for k in range(0, pspec.N_audit + 1):
            if j + k < 1:
                continue
            expo = _comparator_exponent(m, j, k)
            shell_sups = []
            worst = (0.0, 0.0, 0.0)  # ratio, x, theta
            for ell in range(n_shells):
                hi = x_window * 2.0 ** (-ell)
                xs = np.linspace(hi / 2.0, hi, per_shell_x)
                xs = np.concatenate([xs, -xs])
                vals = np.abs(perturbation_f(
                    pspec, xs[:, None], thetas[None, :], m, dx=j, dtheta=k))
                ratio = vals / np.abs(xs[:, None]) ** expo
                idx = np.unravel_index(np.argmax(ratio), ratio.shape)
                sup = float(ratio[idx])
                shell_sups.append(sup)
                if sup > worst[0]:
                    worst = (sup, float(xs[idx[0]]), float(thetas[idx[1]]))
            table[(j, k)] = worst[0]
            witnesses[(j, k)] = worst
            growing = [shell_sups[i + 1] > 1.3 * shell_sups[i] + 1e-300
                       for i in range(len(shell_sups) - 3, len(shell_sups) - 1)]
            if all(growing) and worst[0] > 0:
                diverging.append((j, k))

    if diverging:
        j, k = diverging[0]
        sup, x_w, th_w = witnesses[(j, k)]
        report = AuditReport(passed=False, C_est=math.inf,
                             worst=(j, k, x_w, th_w), table=table)
        if raise_on_fail:
            raise AuditFailed(
                f"derivative ratio diverges at (j,k)=({j},{k}), "
                f"x={x_w:.3e}", witness=(j, k, x_w, th_w))
        return report

    (j, k), (sup, x_w, th_w) = max(
        witnesses.items(), key=lambda item: item[1][0])
    return AuditReport(passed=True, C_est=sup, worst=(j, k, x_w, th_w),
                       table=table)


@dataclass(frozen=True)
class SurfaceSpec:
    """The geometry: exponent m, perturbation strength s, perturbation f."""

    m: int
    s: float
    f: PerturbationSpec = PerturbationSpec()
    s_max: float = 0.25  # admissibility threshold, recorded in manifests
    audit_report: AuditReport | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 2):
            raise ValueError("m must be an integer >= 2")
        if not math.isfinite(self.s):
            raise ValueError("s must be finite")
        if abs(self.s) > self.s_max:
            raise ValueError(
                f"|s| = {abs(self.s)} exceeds admissibility threshold "
                f"{self.s_max}")

    @property
    def audited(self):
        return self.audit_report is not None and self.audit_report.passed

    def to_json(self):
        return {"m": int(self.m), "s": self.s, "f": self.f.to_json(),
                "s_max": self.s_max}

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        obj["f"] = PerturbationSpec.from_json(obj["f"])
        return cls(**obj)


def audit_surface(spec, x_window=1.0, sample_count=256):
    """Run the derivative audit and attach the report to the spec."""
    report = audit_derivative_condition(spec.f, spec.m, x_window, sample_count)
    return replace(spec, audit_report=report)


def dump_audit_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
