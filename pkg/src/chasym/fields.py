"""Periodic grids, real fields, and band-limited (trigonometric) interpolation.

The box [-L/2, L/2)^d stands in for R^d; everything downstream assumes the
represented functions have decayed below round-off well inside the box, so
trapezoid sums are spectrally accurate integrals and the discrete Fourier
coefficients are samples of the continuous transform.

Conventions: the continuous transform is vhat(k) = int v(x) e^{-ik.x} dx,
inverted by v(x) = (2 pi)^{-d} int vhat(k) e^{ik.x} dk.  On the grid, vhat is
sampled at the fftfreq wavenumbers (unshifted numpy ordering).
"""

import numpy as np
from scipy import fft as sfft

from .errors import InterpolationError, ValidationError


class Grid:
    """Uniform periodic grid on [-L/2, L/2)^d with N points per axis."""

    def __init__(self, d, N, L):
        if d not in (1, 2, 3):
            raise ValidationError(f"dimension d must be 1, 2, or 3, got {d}")
        if N < 64 or (N & (N - 1)) != 0:
            raise ValidationError(f"N must be a power of two >= 64, got {N}")
        if not L > 0:
            raise ValidationError(f"box length must be positive, got {L}")
        self.d = int(d)
        self.N = int(N)
        self.L = float(L)

    @property
    def dx(self):
        return self.L / self.N

    @property
    def shape(self):
        return (self.N,) * self.d

    def axis(self):
        """Coordinates along one axis (all axes are identical)."""
        return (np.arange(self.N) - self.N // 2) * self.dx

    def meshes(self):
        axes = [self.axis()] * self.d
        return np.meshgrid(*axes, indexing="ij")

    def radius(self):
        """|x| on the grid."""
        ms = self.meshes()
        return np.sqrt(sum(m * m for m in ms))

    def wavenumbers(self):
        """fftfreq-ordered wavenumbers along one axis."""
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.dx)

    def k_meshes(self):
        ks = [self.wavenumbers()] * self.d
        return np.meshgrid(*ks, indexing="ij")

    def k_squared(self):
        ks = self.k_meshes()
        return sum(k * k for k in ks)

    @property
    def k_max(self):
        return np.pi / self.dx

    def describe(self):
        return {"d": self.d, "N": self.N, "L": self.L}

    def __eq__(self, other):
        return (isinstance(other, Grid)
                and (self.d, self.N, self.L) == (other.d, other.N, other.L))

    def __hash__(self):
        return hash((self.d, self.N, self.L))


class Field:
    """Real scalar field sampled on a Grid."""

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValidationError(
                f"values shape {values.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.values = values
        self.initial_mean = float(values.mean())

    def copy(self):
        return Field(self.grid, self.values.copy())

    @property
    def cell_volume(self):
        return self.grid.dx ** self.grid.d

    def sup_norm(self):
        return float(np.abs(self.values).max())

    def l2_norm(self):
        return float(np.sqrt(np.sum(self.values ** 2) * self.cell_volume))

    def l1_norm(self):
        return float(np.sum(np.abs(self.values)) * self.cell_volume)

    def mass(self):
        """Trapezoid integral of the field (exact for decayed tails)."""
        return float(np.sum(self.values) * self.cell_volume)

    def first_moments(self):
        """Vector of int x_j v dx, one entry per axis."""
        ms = self.grid.meshes()
        return np.array([float(np.sum(m * self.values) * self.cell_volume) for m in ms])

    def edge_ratio(self):
        """max |v| on the outermost grid faces over sup |v| (0 if v = 0)."""
        sup = self.sup_norm()
        if sup == 0.0:
            return 0.0
        edge = 0.0
        for axis in range(self.grid.d):
            for idx in (0, -1):
                face = np.take(self.values, idx, axis=axis)
                edge = max(edge, float(np.abs(face).max()))
        return edge / sup

    def spectral_tail_fraction(self, fraction=2.0 / 3.0):
        """Energy fraction carried by modes with any |k_i| above fraction*k_max."""
        vh = sfft.fftn(self.values)
        power = np.abs(vh) ** 2
        total = power.sum()
        if total == 0.0:
            return 0.0
        k = self.grid.wavenumbers()
        cut = fraction * self.grid.k_max
        inside = np.ones(self.grid.shape, dtype=bool)
        for axis in range(self.grid.d):
            shape = [1] * self.grid.d
            shape[axis] = self.grid.N
            inside &= np.abs(k).reshape(shape) <= cut
        return float(power[~inside].sum() / total)

    def spectral(self):
        return SpectralField.from_field(self)


def _axis_phase(grid):
    """Phase e^{-ik x0} turning fftn output into continuous-transform samples."""
    k = grid.wavenumbers()
    x0 = -grid.L / 2.0
    return np.exp(-1j * k * x0)


class SpectralField:
    """Samples of the continuous Fourier transform on a grid's wavenumbers.

    values_hat[j1,...,jd] = vhat(k_{j1},...,k_{jd}) in fftfreq ordering.
    """

    def __init__(self, grid, values_hat):
        values_hat = np.asarray(values_hat, dtype=complex)
        if values_hat.shape != grid.shape:
            raise ValidationError(
                f"coefficient shape {values_hat.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.values_hat = values_hat

    @classmethod
    def from_field(cls, field):
        grid = field.grid
        coeffs = sfft.fftn(field.values) * field.cell_volume
        phase = _axis_phase(grid)
        for axis in range(grid.d):
            shape = [1] * grid.d
            shape[axis] = grid.N
            coeffs = coeffs * phase.reshape(shape)
        return cls(grid, coeffs)

    @classmethod
    def from_function(cls, grid, fhat):
        """Sample a closed-form transform fhat(k1,...,kd) on the grid."""
        ks = grid.k_meshes()
        return cls(grid, np.asarray(fhat(*ks), dtype=complex))

    def spatial_complex(self):
        """Complex grid samples of the represented function."""
        grid = self.grid
        coeffs = self.values_hat.copy()
        phase = np.conj(_axis_phase(grid))
        for axis in range(grid.d):
            shape = [1] * grid.d
            shape[axis] = grid.N
            coeffs = coeffs * phase.reshape(shape)
        return sfft.ifftn(coeffs) / self.grid.dx ** grid.d

    def to_field(self, imag_tol=1e-9):
        vals = self.spatial_complex()
        scale = max(np.abs(vals).max(), 1.0)
        if np.abs(vals.imag).max() > imag_tol * scale:
            raise ValidationError("coefficients are not Hermitian: field is not real")
        return Field(self.grid, vals.real)

    def copy(self):
        return SpectralField(self.grid, self.values_hat.copy())

    def l2_norm(self):
        """L2 norm of the represented spatial field, via Parseval."""
        dk = 2 * np.pi / self.grid.L
        return float(
            np.sqrt(np.sum(np.abs(self.values_hat) ** 2) * dk ** self.grid.d)
            / (2 * np.pi) ** (self.grid.d / 2.0))

    def derivative(self, alpha):
        """Spatial derivative of multi-index alpha: multiply by (ik)^alpha."""
        out = self.values_hat.copy()
        k = self.grid.wavenumbers()
        for axis, order in enumerate(alpha):
            if order == 0:
                continue
            shape = [1] * self.grid.d
            shape[axis] = self.grid.N
            out = out * (1j * k.reshape(shape)) ** order
        return SpectralField(self.grid, out)

    def nudft(self, q):
        """Continuous transform at the tensor grid q x q x ... (one 1d array).

        Evaluates dx^d sum_m v(x_m) e^{-iq.x_m}, i.e. the transform of the
        band-limited interpolant, exactly.  Cost O(N^d * len(q)) per axis.
        """
        q = np.asarray(q, dtype=float)
        x = self.grid.axis()
        M = np.exp(-1j * np.outer(q, x)) * self.grid.dx
        out = self.spatial_complex()
        for _ in range(self.grid.d):
            # contract leading axis, append transformed axis at the end;
            # after d passes the axis order is restored
            out = np.tensordot(out, M.T, axes=([0], [0]))
        return out


def interpolate_spatial(field, points):
    """Band-limited interpolation of a Field at a tensor grid of points.

    points: 1d array of target coordinates, used along every axis.  Returns
    the interpolant values on the tensor product points x ... x points.
    Raises InterpolationError if targets leave the box.
    """
    points = np.asarray(points, dtype=float)
    half = field.grid.L / 2.0
    if points.min() < -half or points.max() > half:
        raise InterpolationError(
            f"interpolation targets [{points.min():.3g}, {points.max():.3g}] "
            f"outside the box [{-half:.3g}, {half:.3g}]")
    spec = SpectralField.from_field(field)
    k = field.grid.wavenumbers()
    # inverse transform: (1/L)^d sum_k vhat(k) e^{ik xi} per axis
    M = np.exp(1j * np.outer(points, k)) / field.grid.L
    out = spec.values_hat
    for _ in range(field.grid.d):
        out = np.tensordot(out, M.T, axes=([0], [0]))
    return out.real
