"""Discretization of R_x x S^1_theta and the norms used by the estimates.

The x-line is truncated to a periodic box [-L, L); theta lives on [0, 2pi).
Dual lattice: xi_k = pi k / L (k in [-N_x/2, N_x/2)), eta integer in
[-N_theta/2, N_theta/2), both stored in FFT order.  All fields are carried in
the conjugated frame L^2(dx dtheta) where the operator Delta-tilde acts; the
equivalence with L^2(dVol_g) is through the bounded factors A^{1/2} e^{sf/2}
and is documented, not re-verified.

A runtime boundary-mass monitor (mass fraction in |x| > L - 2) justifies the
periodic truncation; runs exceeding 1e-8 are flagged by the evolve module.
"""

from dataclasses import dataclass, field
import json

import numpy as np
import scipy.fft as sfft

from .errors import NonFiniteSymbol

FRAME = "conjugated-L2(dx dtheta)"


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Periodic tensor grid on [-L, L) x [0, 2pi)."""

    L: float
    N_x: int
    N_theta: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.N_x < 8 or not _is_pow2(self.N_x):
            raise ValueError("N_x must be a power of two >= 8")
        if self.N_theta < 8 or not _is_pow2(self.N_theta):
            raise ValueError("N_theta must be a power of two >= 8")

    @property
    def dx(self):
        return 2.0 * self.L / self.N_x

    @property
    def dtheta(self):
        return 2.0 * np.pi / self.N_theta

    @property
    def x(self):
        return -self.L + self.dx * np.arange(self.N_x)

    @property
    def theta(self):
        return self.dtheta * np.arange(self.N_theta)

    @property
    def xi(self):
        """x-dual lattice pi k / L in FFT order."""
        return 2.0 * np.pi * sfft.fftfreq(self.N_x, d=self.dx)

    @property
    def eta(self):
        """theta-dual integer lattice in FFT order."""
        return np.rint(2.0 * np.pi * sfft.fftfreq(self.N_theta, d=self.dtheta))

    @property
    def quad_weight(self):
        """L^2(dx dtheta) quadrature weight per node."""
        return self.dx * self.dtheta

    @property
    def spec_weight(self):
        """Plancherel weight per Fourier coefficient."""
        return self.quad_weight / (self.N_x * self.N_theta)

    def mesh(self):
        return np.meshgrid(self.x, self.theta, indexing="ij")

    def dual_mesh(self):
        return np.meshgrid(self.xi, self.eta, indexing="ij")

    def to_json(self):
        return {"L": self.L, "N_x": self.N_x, "N_theta": self.N_theta}


@dataclass(frozen=True)
class Field:
    """Complex state on a Grid, in the conjugated frame."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    frame: str = FRAME

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        if v.shape != (self.grid.N_x, self.grid.N_theta):
            raise ValueError("field shape does not match grid")
        object.__setattr__(self, "values", v)

    def copy(self):
        return Field(self.grid, self.values.copy(), self.frame)


@dataclass(frozen=True)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray = field(repr=False)


def transform(u):
    """Discrete Fourier coefficients on the dual lattice (FFT order)."""
    return SpectralField(u.grid, sfft.fft2(u.values))


def inverse_transform(uhat):
    return Field(uhat.grid, sfft.ifft2(uhat.coeffs))


def _sigma_on_lattice(grid, sigma):
    if callable(sigma):
        xi2, eta2 = grid.dual_mesh()
        arr = np.asarray(sigma(xi2, eta2), dtype=np.complex128)
        arr = np.broadcast_to(arr, (grid.N_x, grid.N_theta))
    else:
        arr = np.asarray(sigma, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteSymbol("multiplier is not finite on the dual lattice")
    return arr


def apply_multiplier(sigma, u):
    """F^{-1}(sigma(xi, eta) F u) for a Fourier multiplier sigma."""
    arr = _sigma_on_lattice(u.grid, sigma)
    return Field(u.grid, sfft.ifft2(arr * sfft.fft2(u.values)))


def dx_field(u):
    return apply_multiplier(lambda xi, eta: 1j * xi, u)


def dtheta_field(u):
    return apply_multiplier(lambda xi, eta: 1j * eta, u)


def inner(u, v):
    """L^2(dx dtheta) inner product, conjugate-linear in the second slot."""
    return u.grid.quad_weight * np.vdot(v.values, u.values)


def l2_norm_sq(u):
    return u.grid.quad_weight * float(np.sum(np.abs(u.values) ** 2))


def l2_norm(u):
    return float(np.sqrt(l2_norm_sq(u)))


def sobolev_norm_sq(u, r):
    """||u||^2_{H^r} with isotropic weight (1 + xi^2 + eta^2)^r."""
    xi2, eta2 = u.grid.dual_mesh()
    w = (1.0 + xi2**2 + eta2**2) ** r
    coeffs = sfft.fft2(u.values)
    return u.grid.spec_weight * float(np.sum(w * np.abs(coeffs) ** 2))


def sobolev_norm(u, r):
    return float(np.sqrt(sobolev_norm_sq(u, r)))


def anisotropic_norm_sq(u, r_theta, r_x):
    """||<D_theta>^{r_theta} u||^2 + ||<D_x>^{r_x} u||^2 (mixed statement)."""
    xi2, eta2 = u.grid.dual_mesh()
    w = (1.0 + eta2**2) ** r_theta + (1.0 + xi2**2) ** r_x
    coeffs = sfft.fft2(u.values)
    return u.grid.spec_weight * float(np.sum(w * np.abs(coeffs) ** 2))


def weighted_seminorms(u, m):
    """The three weighted squared seminorms of the smoothing functionals.

    a: ||<x>^{-1} d_x u||^2
    b: ||<x>^{-3/2} d_theta u||^2
    c: ||  |x|^m <x>^{-m-3/2} d_theta u||^2
    """
    x = u.grid.x[:, None]
    bracket = np.sqrt(1.0 + x**2)
    ux = dx_field(u).values
    ut = dtheta_field(u).values
    w = u.grid.quad_weight
    a = w * float(np.sum(np.abs(ux / bracket) ** 2))
    b = w * float(np.sum(np.abs(ut / bracket**1.5) ** 2))
    wc = np.abs(x) ** m * bracket ** (-m - 1.5)
    c = w * float(np.sum(np.abs(wc * ut) ** 2))
    return {"a": a, "b": b, "c": c}


def boundary_mass_fraction(u):
    """Mass fraction in the outer margin |x| > L - 2 (periodic-box monitor)."""
    mask = np.abs(u.grid.x) > (u.grid.L - 2.0)
    total = float(np.sum(np.abs(u.values) ** 2))
    if total == 0.0:
        return 0.0
    return float(np.sum(np.abs(u.values[mask, :]) ** 2)) / total


def save_field(u, path):
    """Persist as a one-line JSON header + row-major little-endian complex pairs."""
    header = {"L": u.grid.L, "N_x": u.grid.N_x, "N_theta": u.grid.N_theta,
              "frame": u.frame}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(u.values, dtype="<c16").tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    grid = Grid(header["L"], header["N_x"], header["N_theta"])
    values = np.frombuffer(raw, dtype="<c16").reshape(grid.N_x, grid.N_theta)
    return Field(grid, values.copy(), header["frame"])


def random_field(grid, seed=0, band_limit=None, interior=False):
    """Seeded random state, optionally band-limited / interior-supported.

    band_limit is the kept fraction of the Nyquist range; the retained
    coefficients get a Gaussian rolloff so products with smooth
    coefficients do not alias back across the spectral gap.  interior
    applies a smooth envelope vanishing in the outer margin of the x-box
    (with the band cutoff reapplied afterwards).
    """
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((grid.N_x, grid.N_theta)) \
        + 1j * rng.standard_normal((grid.N_x, grid.N_theta))

    def bandcut(v):
        # Gaussian-only rolloff: a hard cutoff would put 1/x tails back
        # into physical space and defeat the interior envelope
        xi2, eta2 = grid.dual_mesh()
        bx = band_limit * np.abs(grid.xi).max()
        bt = band_limit * np.abs(grid.eta).max()
        shape = np.exp(-2.0 * ((xi2 / bx) ** 2 + (eta2 / bt) ** 2))
        return sfft.ifft2(sfft.fft2(v) * shape)

    if band_limit is not None:
        vals = bandcut(vals)
    if interior:
        from .bumps import step
        x = grid.x[:, None]
        envelope = 1.0 - step((np.abs(x) - (grid.L - 8.0)) / 4.0)
        vals = vals * envelope
        if band_limit is not None:
            vals = bandcut(vals)
    return Field(grid, vals)
