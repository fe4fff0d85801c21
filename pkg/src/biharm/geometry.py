"""Flat unit-volume torus geometry and exact Fourier calculus.

Fields live on a uniform periodic grid over [0, 1)^d with d in {1, 2}
effective coordinates; Sobolev exponents come from the ambient dimension
n >= 5 (the remaining n - d coordinates are dummy directions of the
unit-volume torus and integrate away).  A field is stored both as real
grid samples and as the Fourier coefficients of its trigonometric
interpolant

    u(x) = sum_m  c_m exp(2 pi i m.x),      |m_i| <= M/2 - 1,

so differential operators are exact diagonal multipliers.  The Nyquist
plane of the even-size FFT is projected out at construction; this makes
the retained mode set conjugation-symmetric, turns spectral truncation
into an exact L2-orthogonal projection, and lets the 2x-refined grid
integrate triple products of band-limited fields without aliasing.

Multiplier table (angular frequency w = 2 pi m, sign convention
Delta = -div grad):

    component derivative d_i   ->   i w_i
    laplacian                  ->  +|w|^2
    bilaplacian                ->  +|w|^4
    div(a grad u),  a const    ->  -a |w|^2

All integrals use uniform quadrature weight 1/M^d (total volume one).
Products of two band-limited fields are exact after refinement and
truncation; non-polynomial powers |u|^q are evaluated pointwise on the
refined grid and carry a quadrature error that vanishes spectrally under
grid refinement.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GeometryMismatch

TWO_PI = 2.0 * math.pi

_FINE_FACTOR = 2  # refinement used for products, powers and quadrature


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


class TorusGeometry:
    """Grid, frequency lattice and quadrature of a unit-volume flat torus.

    Parameters
    ----------
    n_ambient : int
        Manifold dimension n >= 5; sets the critical exponent
        N = 2n/(n-4).
    d_eff : int
        Number of coordinates the fields actually vary along (1 or 2).
    grid_size : int, optional
        Samples per effective axis; a power of two.  Defaults to 128 on
        one effective axis and 64 on two.
    """

    def __init__(self, n_ambient: int, d_eff: int = 1, grid_size: int | None = None):
        if n_ambient < 5:
            raise ValueError(f"n_ambient must be >= 5, got {n_ambient}")
        if d_eff not in (1, 2):
            raise ValueError(f"d_eff must be 1 or 2, got {d_eff}")
        if grid_size is None:
            grid_size = 128 if d_eff == 1 else 64
        if not _is_power_of_two(grid_size):
            raise ValueError(f"grid_size must be a power of two, got {grid_size}")
        self.n_ambient = int(n_ambient)
        self.d_eff = int(d_eff)
        self.grid_size = int(grid_size)

        M = self.grid_size
        d = self.d_eff
        self.shape = (M,) * d
        self.size = M**d
        self.weight = 1.0 / self.size

        self.fine_size = _FINE_FACTOR * M
        self.fine_shape = (self.fine_size,) * d
        self.fine_weight = 1.0 / (self.fine_size**d)

        # integer mode numbers per axis, numpy FFT ordering
        m_axis = np.fft.fftfreq(M, d=1.0 / M).astype(np.int64)
        self._m_axis = m_axis
        # retained band: |m| <= M/2 - 1 on every axis (Nyquist projected out)
        keep_axis = np.abs(m_axis) <= M // 2 - 1
        grids = np.meshgrid(*([m_axis] * d), indexing="ij")
        self.mode_numbers = grids
        keeps = np.meshgrid(*([keep_axis] * d), indexing="ij")
        self.band_mask = np.logical_and.reduce(keeps)

        m_sq = sum(g.astype(np.float64) ** 2 for g in grids)
        self.lam = (TWO_PI**2) * m_sq          # multiplier of the laplacian
        self.lam_sq = self.lam**2              # multiplier of the bilaplacian
        self.deriv_mult = [1j * TWO_PI * g.astype(np.float64) for g in grids]

        # position of coarse mode m inside the refined spectrum
        self._fine_pos = [m_axis % self.fine_size]
        if d == 2:
            self._fine_pos.append(m_axis % self.fine_size)

    # ------------------------------------------------------------------
    # basic descriptors

    @property
    def critical_exponent(self) -> float:
        """N = 2n/(n-4), the largest q with H2 embedded in L^q."""
        n = self.n_ambient
        return 2.0 * n / (n - 4.0)

    def coordinates(self):
        """Node coordinates, one array per effective axis (meshgrid)."""
        M = self.grid_size
        x = np.arange(M, dtype=np.float64) / M
        return np.meshgrid(*([x] * self.d_eff), indexing="ij")

    def fine_coordinates(self):
        """Node coordinates of the refined quadrature grid."""
        Mf = self.fine_size
        x = np.arange(Mf, dtype=np.float64) / Mf
        return np.meshgrid(*([x] * self.d_eff), indexing="ij")

    def compatible(self, other: "TorusGeometry") -> bool:
        return (
            self.n_ambient == other.n_ambient
            and self.d_eff == other.d_eff
            and self.grid_size == other.grid_size
        )

    def check_same(self, other: "TorusGeometry"):
        if self is not other and not self.compatible(other):
            raise GeometryMismatch(
                f"incompatible geometries: {self.shape} vs {other.shape}"
            )

    # ------------------------------------------------------------------
    # field constructors

    def field(self, samples) -> "SpectralField":
        """Build a field from grid samples (projected onto the mode band)."""
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape != self.shape:
            raise GeometryMismatch(
                f"sample shape {samples.shape} does not match grid {self.shape}"
            )
        coeffs = np.fft.fftn(samples) * self.weight
        coeffs[~self.band_mask] = 0.0
        return SpectralField(self, coeffs=coeffs)

    def field_from_coeffs(self, coeffs) -> "SpectralField":
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != self.shape:
            raise GeometryMismatch(
                f"coefficient shape {coeffs.shape} does not match grid {self.shape}"
            )
        out = np.where(self.band_mask, coeffs, 0.0 + 0.0j)
        return SpectralField(self, coeffs=out)

    def constant(self, value: float) -> "SpectralField":
        coeffs = np.zeros(self.shape, dtype=np.complex128)
        coeffs[(0,) * self.d_eff] = value
        return SpectralField(self, coeffs=coeffs)

    def zero(self) -> "SpectralField":
        return self.constant(0.0)

    def mode(self, m, amplitude: float = 1.0, phase: float = 0.0) -> "SpectralField":
        """Real single-mode field  amplitude * cos(2 pi m.x + phase)."""
        m = tuple(int(v) for v in np.atleast_1d(m))
        if len(m) != self.d_eff:
            raise ValueError("mode index must have one entry per effective axis")
        x = self.coordinates()
        arg = sum(TWO_PI * mi * xi for mi, xi in zip(m, x)) + phase
        return self.field(amplitude * np.cos(arg))

    def random_smooth(
        self, rng: np.random.Generator, decay: float = 2.0, amplitude: float = 1.0
    ) -> "SpectralField":
        """Random band-limited field with power-law spectral decay.

        The L2 norm is scaled to ``amplitude``; deterministic given the
        generator state.
        """
        white = rng.standard_normal(self.shape)
        coeffs = np.fft.fftn(white) * self.weight
        m_sq = self.lam / (TWO_PI**2)
        coeffs = coeffs / (1.0 + m_sq) ** (decay / 2.0)
        coeffs[~self.band_mask] = 0.0
        u = SpectralField(self, coeffs=coeffs)
        nrm = l2_norm(u)
        if nrm == 0.0:
            return u
        return scale(u, amplitude / nrm)

    def bump(self, center, width: float) -> "SpectralField":
        """Smooth periodic bump of the given width, band-projected."""
        center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        if center.size != self.d_eff:
            raise ValueError("center must have one entry per effective axis")
        x = self.coordinates()
        dist_sq = sum(
            np.sin(math.pi * (xi - ci)) ** 2 / math.pi**2
            for xi, ci in zip(x, center)
        )
        return self.field(np.exp(-dist_sq / (2.0 * width**2)))

    # ------------------------------------------------------------------
    # refinement / truncation between the native and quadrature grids

    def pad_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """Embed native-band coefficients into the refined spectrum."""
        fine = np.zeros(self.fine_shape, dtype=np.complex128)
        fine[np.ix_(*self._fine_pos)] = coeffs
        return fine

    def truncate_coeffs(self, fine_coeffs: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a refined spectrum onto the native band."""
        coeffs = fine_coeffs[np.ix_(*self._fine_pos)].copy()
        coeffs[~self.band_mask] = 0.0
        return coeffs

    def fine_samples(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate the interpolant of native-band coefficients on the fine grid."""
        fine = self.pad_coeffs(coeffs)
        return np.fft.ifftn(fine).real * (self.fine_size**self.d_eff)

    def fine_to_field(self, values: np.ndarray) -> "SpectralField":
        """Project fine-grid point values back onto the native band."""
        fine_coeffs = np.fft.fftn(values) * self.fine_weight
        return SpectralField(self, coeffs=self.truncate_coeffs(fine_coeffs))

    def integrate_fine(self, values: np.ndarray) -> float:
        """Uniform-weight quadrature on the refined grid."""
        return float(np.sum(values) * self.fine_weight)

    def __repr__(self):
        return (
            f"TorusGeometry(n_ambient={self.n_ambient}, d_eff={self.d_eff}, "
            f"grid_size={self.grid_size})"
        )


class SpectralField:
    """Real scalar field stored as grid samples plus Fourier coefficients.

    Instances are immutable: samples and coefficients are synchronized
    eagerly at construction and the underlying arrays are read-only, so
    fields are safe to share across threads.
    """

    __slots__ = ("geometry", "samples", "coeffs", "_fine")

    def __init__(self, geometry: TorusGeometry, coeffs: np.ndarray):
        self.geometry = geometry
        coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
        samples = np.fft.ifftn(coeffs).real * geometry.size
        coeffs.flags.writeable = False
        samples.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "_fine", None)

    def __setattr__(self, name, value):
        if name in ("geometry", "_fine") or not hasattr(self, name):
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("SpectralField is immutable")

    @property
    def fine_values(self) -> np.ndarray:
        """Interpolant values on the refined grid (cached; idempotent)."""
        if self._fine is None:
            vals = self.geometry.fine_samples(self.coeffs)
            vals.flags.writeable = False
            object.__setattr__(self, "_fine", vals)
        return self._fine

    def __repr__(self):
        g = self.geometry
        return f"SpectralField(grid={g.shape}, n={g.n_ambient})"


# ----------------------------------------------------------------------
# linear spectral operators


def laplacian(u: SpectralField) -> SpectralField:
    """Geometer's laplacian Delta = -div grad: multiplier +|2 pi m|^2."""
    return u.geometry.field_from_coeffs(u.geometry.lam * u.coeffs)


def bilaplacian(u: SpectralField) -> SpectralField:
    """Squared laplacian: multiplier +|2 pi m|^4."""
    return u.geometry.field_from_coeffs(u.geometry.lam_sq * u.coeffs)


def partial_deriv(u: SpectralField, axis: int) -> SpectralField:
    """Partial derivative along one effective axis."""
    g = u.geometry
    return g.field_from_coeffs(g.deriv_mult[axis] * u.coeffs)


def grad_fine(u: SpectralField):
    """Fine-grid point values of every gradient component."""
    g = u.geometry
    return [g.fine_samples(g.deriv_mult[i] * u.coeffs) for i in range(g.d_eff)]


def div_a_grad(a: SpectralField, u: SpectralField) -> SpectralField:
    """Covariant divergence sum_i d_i(a d_i u) with alias-free products.

    Each product a * d_i(u) is formed pointwise on the refined grid and
    projected back onto the native band, which reproduces the exact L2
    projection of the true product.  For constant a this reduces to
    -a * laplacian(u).
    """
    g = a.geometry
    g.check_same(u.geometry)
    a_fine = a.fine_values
    out = np.zeros(g.shape, dtype=np.complex128)
    for i in range(g.d_eff):
        du = g.fine_samples(g.deriv_mult[i] * u.coeffs)
        prod = g.truncate_coeffs(np.fft.fftn(a_fine * du) * g.fine_weight)
        out += g.deriv_mult[i] * prod
    return g.field_from_coeffs(out)


def multiply(a: SpectralField, u: SpectralField) -> SpectralField:
    """Band projection of the pointwise product of two fields."""
    g = a.geometry
    g.check_same(u.geometry)
    return g.fine_to_field(a.fine_values * u.fine_values)


# ----------------------------------------------------------------------
# inner products, norms, integrals


def inner(u: SpectralField, v: SpectralField) -> float:
    """L2 inner product by uniform quadrature (= Parseval sum)."""
    u.geometry.check_same(v.geometry)
    return float(np.vdot(u.samples, v.samples).real * u.geometry.weight)


def l2_norm(u: SpectralField) -> float:
    return math.sqrt(max(float(np.sum(np.abs(u.coeffs) ** 2)), 0.0))


def lp_norm(u: SpectralField, p: float) -> float:
    """L^p norm by uniform quadrature on the refined grid (p >= 1 finite)."""
    if not (p >= 1.0 and math.isfinite(p)):
        raise ValueError(f"p must be finite and >= 1, got {p}")
    vals = np.abs(u.fine_values) ** p
    return float(u.geometry.integrate_fine(vals)) ** (1.0 / p)


def lp_mass(u: SpectralField, p: float) -> float:
    """Integral of |u|^p on the refined grid (the L^p norm to the p)."""
    if not (p >= 1.0 and math.isfinite(p)):
        raise ValueError(f"p must be finite and >= 1, got {p}")
    return u.geometry.integrate_fine(np.abs(u.fine_values) ** p)


def grad_sq_integral(u: SpectralField) -> float:
    """Integral of |grad u|^2 via the spectral multiplier |2 pi m|^2."""
    g = u.geometry
    return float(np.sum(g.lam * np.abs(u.coeffs) ** 2))


def bilap_energy(u: SpectralField) -> float:
    """Integral of (Delta u)^2 via the multiplier |2 pi m|^4."""
    g = u.geometry
    return float(np.sum(g.lam_sq * np.abs(u.coeffs) ** 2))


def hessian_sq_integral(u: SpectralField) -> float:
    """Integral of |grad^2 u|^2 from explicit spectral second derivatives.

    On the flat torus this equals the bilaplacian energy; computed here
    the long way (sum over all second partials) so the identity can be
    asserted independently.
    """
    g = u.geometry
    total = 0.0
    for i in range(g.d_eff):
        for j in range(g.d_eff):
            cij = g.deriv_mult[i] * g.deriv_mult[j] * u.coeffs
            total += float(np.sum(np.abs(cij) ** 2))
    return total


def h2_norm(u: SpectralField) -> float:
    """Sobolev norm (|Delta u|_2^2 + |grad u|_2^2 + |u|_2^2)^(1/2)."""
    return math.sqrt(bilap_energy(u) + grad_sq_integral(u) + l2_norm(u) ** 2)


# ----------------------------------------------------------------------
# arithmetic helpers (fields form a vector space)


def scale(u: SpectralField, alpha: float) -> SpectralField:
    return u.geometry.field_from_coeffs(alpha * u.coeffs)


def add(u: SpectralField, v: SpectralField, alpha: float = 1.0) -> SpectralField:
    """u + alpha * v."""
    u.geometry.check_same(v.geometry)
    return u.geometry.field_from_coeffs(u.coeffs + alpha * v.coeffs)


def combination(fields, weights) -> SpectralField:
    """Linear combination sum_i w_i * fields[i]."""
    g = fields[0].geometry
    out = np.zeros(g.shape, dtype=np.complex128)
    for f, w in zip(fields, weights):
        g.check_same(f.geometry)
        out += w * f.coeffs
    return g.field_from_coeffs(out)
