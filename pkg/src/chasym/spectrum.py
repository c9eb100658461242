"""Rescaled linear generator: spectrum, self-similar profiles, semigroup, kernel.

In Fourier variables the rescaled generator of the default frame is

    (L vhat)(p) = -(p.p)^n vhat(p) - (1/2n) p . grad vhat(p),

with eigenvalues -j/(2n), j = 0, 1, ..., and eigenfunctions
phi_alpha(p) = p^alpha e^{-(p.p)^n}, |alpha| = j.  A frame with amplitude
exponent beta shifts the whole spectrum by beta - d/(2n).

The semigroup has the closed Fourier form

    vhat(p, tau) = e^{(beta - d/2n) tau} e^{-(p.p)^n a(tau)} vhat0(p e^{-tau/2n}),

with a(tau) = 1 - e^{-tau}; this module also carries the equivalent
convolution representation against the kernel

    g(z, tau) = int d^d k e^{ik.z} e^{-(k.k)^n a(tau)}

as a cross-validation oracle, and least-squares machinery for the kernel's
stretched-exponential decay exp(-gamma |z|^{2n/(2n-1)} ...).
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import fft as sfft
from scipy.integrate import quad
from scipy.optimize import curve_fit
from scipy.special import j0

from .errors import (InterpolationError, QuadratureError, ValidationError)
from .fields import SpectralField
from .frames import ScalingFrame

__all__ = [
    "ScalingFrame", "eigenvalue", "eigenfunction_fourier", "EigenFunction",
    "Profile", "profile", "radial_profile_evaluator", "odd_profile_evaluator",
    "exp_decay_a", "kernel_g", "kernel_decay_radius", "kernel_decay_fit",
    "DecayFit", "semigroup_apply", "semigroup_apply_convolution",
    "commutation_check", "profile_decay_radius",
]


# ---------------------------------------------------------------------------
# spectrum

def eigenvalue(j, frame):
    """Exact eigenvalue beta - (d + j)/(2n) of the frame's generator."""
    if j < 0:
        raise ValidationError(f"eigenvalue index must be >= 0, got {j}")
    return frame.beta - Fraction(frame.d + j, 2 * frame.n)


class EigenFunction:
    """phi_alpha(p) = p^alpha e^{-(p.p)^n} with its closed-form gradient."""

    def __init__(self, alpha, n):
        self.alpha = tuple(int(a) for a in alpha)
        if any(a < 0 for a in self.alpha):
            raise ValidationError(f"multi-index must be non-negative: {alpha}")
        self.n = int(n)

    @property
    def degree(self):
        return sum(self.alpha)

    def _monomial(self, ps):
        out = np.ones_like(ps[0], dtype=float)
        for p_i, a_i in zip(ps, self.alpha):
            if a_i:
                out = out * p_i ** a_i
        return out

    def __call__(self, *ps):
        ps = [np.asarray(p, dtype=float) for p in ps]
        if len(ps) != len(self.alpha):
            raise ValidationError(
                f"expected {len(self.alpha)} coordinate arrays, got {len(ps)}")
        p2 = sum(p * p for p in ps)
        return self._monomial(ps) * np.exp(-p2 ** self.n)

    def gradient(self, *ps):
        """Tuple of partial derivatives d phi / d p_i on the given mesh."""
        ps = [np.asarray(p, dtype=float) for p in ps]
        p2 = sum(p * p for p in ps)
        envelope = np.exp(-p2 ** self.n)
        mono = self._monomial(ps)
        grads = []
        for i, (p_i, a_i) in enumerate(zip(ps, self.alpha)):
            term = -2.0 * self.n * p_i * p2 ** (self.n - 1) * mono
            if a_i:
                reduced = np.ones_like(p_i, dtype=float)
                for jx, (p_j, a_j) in enumerate(zip(ps, self.alpha)):
                    order = a_j - 1 if jx == i else a_j
                    if order:
                        reduced = reduced * p_j ** order
                term = term + a_i * reduced
            grads.append(term * envelope)
        return tuple(grads)

    def generator_value(self, *ps):
        """-(p.p)^n phi - (1/2n) p . grad phi, evaluated in closed form."""
        ps = [np.asarray(p, dtype=float) for p in ps]
        p2 = sum(p * p for p in ps)
        phi = self(*ps)
        grads = self.gradient(*ps)
        drift = sum(p_i * g_i for p_i, g_i in zip(ps, grads))
        return -p2 ** self.n * phi - drift / (2.0 * self.n)


def eigenfunction_fourier(alpha, n):
    """Eigenfunction p^alpha e^{-(p.p)^n} as a callable with gradient."""
    return EigenFunction(alpha, n)


# ---------------------------------------------------------------------------
# kernel g(z, tau) and its decay

def exp_decay_a(tau):
    """a(tau) = 1 - e^{-tau}; accepts tau = inf."""
    if tau < 0:
        raise ValidationError(f"tau must be >= 0, got {tau}")
    if math.isinf(tau):
        return 1.0
    return -math.expm1(-tau)


def _tail_cutoff(a, n):
    """|k| beyond which e^{-a k^{2n}} < 1e-16."""
    return (36.85 / a) ** (1.0 / (2 * n))


def _decay_rate(n, a):
    """Leading stretched-exponential rate of |g|: gamma in
    exp(-gamma |z|^{2n/(2n-1)}), from the dominant critical point."""
    return ((2 * n - 1) / (2.0 * n) * (1.0 / (2 * n * a)) ** (1.0 / (2 * n - 1))
            * math.sin(math.pi / (2 * (2 * n - 1))))


def kernel_decay_radius(tau, n, rel_threshold=1e-12):
    """Estimated |z| where |g(z,tau)/g(0,tau)| drops below rel_threshold."""
    a = exp_decay_a(tau)
    gamma = _decay_rate(n, a)
    return ((-math.log(rel_threshold) + 3.0) / gamma) ** ((2 * n - 1) / (2.0 * n))


def _quad_checked(fun, lo, hi, epsabs, **kw):
    out = quad(fun, lo, hi, epsabs=epsabs, epsrel=1e-12, limit=500,
               full_output=1, **kw)
    val, err = out[0], out[1]
    if len(out) > 3 or err > max(100 * epsabs, 1e-8 * abs(val)):
        raise QuadratureError(
            f"quadrature did not converge (error {err:.2e})", achieved_error=err)
    return val, err


def kernel_g(z, tau, n, d, epsabs=1e-12):
    """Semigroup kernel value g(z, tau) with an absolute error estimate.

    z may be a scalar (1d / radial coordinate) or a length-d point.  d = 1
    uses oscillatory-weight quadrature; d = 2, 3 reduce to radial integrals
    against J0 and sin respectively.  tau = inf gives the a = 1 kernel.

    Returns (value, error_estimate).
    """
    if tau <= 0:
        raise ValidationError(f"kernel needs tau > 0, got {tau}")
    a = exp_decay_a(tau)
    r = float(np.sqrt(np.sum(np.asarray(z, dtype=float) ** 2)))
    P = _tail_cutoff(a, n)

    if d == 1:
        if r == 0.0:
            val, err = _quad_checked(lambda k: np.exp(-a * k ** (2 * n)), 0, P, epsabs)
        else:
            val, err = _quad_checked(lambda k: np.exp(-a * k ** (2 * n)), 0, P, epsabs,
                                     weight="cos", wvar=r)
        return 2 * val, 2 * err
    if d == 2:
        val, err = _quad_checked(
            lambda k: k * j0(k * r) * np.exp(-a * k ** (2 * n)), 0, P, epsabs)
        return 2 * np.pi * val, 2 * np.pi * err
    if d == 3:
        if r == 0.0:
            val, err = _quad_checked(
                lambda k: k * k * np.exp(-a * k ** (2 * n)), 0, P, epsabs)
            return 4 * np.pi * val, 4 * np.pi * err
        val, err = _quad_checked(
            lambda k: k * np.exp(-a * k ** (2 * n)), 0, P, epsabs,
            weight="sin", wvar=r)
        return 4 * np.pi * val / r, 4 * np.pi * err / r
    raise ValidationError(f"kernel implemented for d in {{1,2,3}}, got {d}")


@dataclass(frozen=True)
class DecayFit:
    """Stretched-exponential fit log|g| = c - gamma * z^s."""

    gamma_hat: float
    exponent_hat: float
    r2: float
    n_points: int
    z_window: tuple
    offset: float

    def describe(self):
        return {
            "gamma_hat": self.gamma_hat,
            "exponent_hat": self.exponent_hat,
            "r2": self.r2,
            "n_points": self.n_points,
            "z_window": list(self.z_window),
        }


def kernel_decay_fit(n, d=1, tau=1.0, z_max=None, n_samples=3001,
                     amplitude_window=(1e-11, 0.02), min_samples=8,
                     epsabs=1e-13):
    """Fit the stretched-exponential tail of |g(z, tau)| in 1d radius.

    Samples |g| on a uniform z grid, keeps the oscillation envelope (local
    maxima of |g|; for non-oscillatory kernels a direct subsample), restricts
    to the amplitude window relative to g(0), and least-squares fits
    log|g| = c - gamma z^s.  Returns the fitted s (expected 2n/(2n-1)),
    gamma, and the goodness of fit.
    """
    if z_max is None:
        z_max = 1.05 * kernel_decay_radius(tau, n, rel_threshold=1e-12)
    zs = np.linspace(0.0, z_max, int(n_samples))
    gs = np.array([kernel_g(zz, tau, n, d, epsabs=epsabs)[0] for zz in zs])
    absg = np.abs(gs)
    g0 = absg[0]
    lo, hi = amplitude_window[0] * g0, amplitude_window[1] * g0

    peaks = np.where((absg[1:-1] > absg[:-2]) & (absg[1:-1] > absg[2:]))[0] + 1
    z_fit, g_fit = zs[peaks], absg[peaks]
    keep = (g_fit > lo) & (g_fit < hi)
    z_fit, g_fit = z_fit[keep], g_fit[keep]
    if len(z_fit) < min_samples:
        # monotone kernel: subsample the amplitude window directly
        keep = (absg > lo) & (absg < hi)
        stride = max(1, keep.sum() // 40)
        z_fit, g_fit = zs[keep][::stride], absg[keep][::stride]
    if len(z_fit) < min_samples:
        raise ValidationError(
            f"decay fit needs >= {min_samples} usable samples, got {len(z_fit)}")

    def model(zv, c, gamma, s):
        return c - gamma * zv ** s

    p0 = (math.log(g_fit[0]), 0.5, 1.5)
    popt, _ = curve_fit(model, z_fit, np.log(g_fit), p0=p0, maxfev=40000)
    resid = np.log(g_fit) - model(z_fit, *popt)
    ss_tot = np.sum((np.log(g_fit) - np.mean(np.log(g_fit))) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot
    return DecayFit(gamma_hat=float(popt[1]), exponent_hat=float(popt[2]),
                    r2=float(r2), n_points=len(z_fit),
                    z_window=(float(z_fit[0]), float(z_fit[-1])),
                    offset=float(popt[0]))


# ---------------------------------------------------------------------------
# self-similar profiles

def profile_decay_radius(n, rel_threshold=1e-6):
    """Estimated radius where |f*| / f*(0) drops below rel_threshold."""
    return kernel_decay_radius(math.inf, n, rel_threshold=rel_threshold)


@dataclass
class Profile:
    """Tabulated self-similar profile on a uniform grid.

    For d = 1 `axis` carries signed coordinates and `values` the profile on
    them; for d >= 2 the tabulation is radial: `axis` >= 0 and `values` the
    radial section (the profile is rotation invariant).
    """

    frame: ScalingFrame
    axis: np.ndarray
    values: np.ndarray
    spacing: float
    extent: float
    error_estimate: float
    kind: str = "similarity"

    def __call__(self, x):
        """Interpolated profile values; radial argument for d >= 2."""
        x = np.asarray(x, dtype=float)
        if self.kind == "moment":
            # odd profile tabulated on |x|: restore the sign
            mag = np.interp(np.abs(x), self.axis, self.values)
            return np.sign(x) * mag
        if self.frame.d == 1 and self.axis[0] < 0:
            return np.interp(x, self.axis, self.values)
        return np.interp(np.abs(x) if self.frame.d == 1 else x,
                         self.axis, self.values)

    def peak(self):
        return float(np.abs(self.values).max())

    def decay_radius(self, rel_threshold=1e-6):
        """Largest tabulated |x| where |f| still exceeds rel_threshold * peak."""
        mask = np.abs(self.values) > rel_threshold * self.peak()
        if not mask.any():
            return 0.0
        return float(np.abs(self.axis[mask]).max())


def _fft_tabulate_1d(n, extent, spacing, oversize=1):
    """Tabulate f*(xi) = (2 pi)^{-1/2} int e^{ip xi} e^{-p^{2n}} dp via FFT.

    The p-grid spacing is 2 pi / X, so enlarging X (oversize) refines the
    p grid and shrinks the periodization error of the rectangle rule.
    """
    P = _tail_cutoff(1.0, n) * 1.1
    h = min(spacing, math.pi / (2.0 * P))
    X = max(2.0 * extent, 2.5 * profile_decay_radius(n, 1e-16)) * oversize
    M = 1 << int(math.ceil(math.log2(X / h)))
    dp = 2 * math.pi / (M * h)
    p = 2 * math.pi * np.fft.fftfreq(M, d=h)
    fhat = np.exp(-np.abs(p) ** (2 * n))
    # rectangle rule for (2pi)^{-1/2} sum_j fhat(p_j) e^{i p_j xi_m} dp on
    # xi_m = (m - M/2) h; the half-box offset is a circular output shift
    vals = np.fft.fftshift(np.fft.ifft(fhat)) * M * dp / math.sqrt(2 * math.pi)
    xi = (np.arange(M) - M // 2) * h
    return xi, vals.real, h


def profile(frame, extent=40.0, spacing=0.05, max_points=1 << 22):
    """Tabulated similarity profile f* of the frame, with a recorded error.

    f*(xi) = (2 pi)^{-d/2} int d^dp e^{ip.xi} e^{-(p.p)^n}.  d = 1 tabulates
    on a signed axis by FFT of the Fourier-side envelope with the error
    estimated by refining the p grid by a factor 2; d = 2, 3 tabulate the
    radial section by quadrature with the error taken from the quadrature
    estimates.
    """
    n, d = frame.n, frame.d
    if d == 1:
        xi, vals, h = _fft_tabulate_1d(n, extent, spacing)
        if xi.size > max_points:
            raise ValidationError(
                f"profile tabulation needs {xi.size} points > max {max_points}")
        xi2, vals2, _ = _fft_tabulate_1d(n, extent, spacing, oversize=2)
        # the doubled box contains every coarse point: compare there
        M, M2 = xi.size, xi2.size
        err = float(np.abs(vals2[M2 // 2 - M // 2:M2 // 2 + M // 2] - vals).max())
        keep = np.abs(xi) <= extent
        return Profile(frame=frame, axis=xi[keep], values=vals[keep],
                       spacing=h, extent=extent, error_estimate=err)
    # radial tabulation by quadrature
    r = np.arange(0.0, extent + spacing, spacing)
    vals = np.empty_like(r)
    errs = np.empty_like(r)
    norm = (2 * math.pi) ** (-d / 2.0)
    P = _tail_cutoff(1.0, n)
    for i, rr in enumerate(r):
        if d == 2:
            v, e = _quad_checked(
                lambda k: k * j0(k * rr) * np.exp(-k ** (2 * n)), 0, P, 1e-13)
            vals[i], errs[i] = 2 * math.pi * norm * v, 2 * math.pi * norm * e
        else:
            if rr == 0.0:
                v, e = _quad_checked(
                    lambda k: k * k * np.exp(-k ** (2 * n)), 0, P, 1e-13)
                vals[i], errs[i] = 4 * math.pi * norm * v, 4 * math.pi * norm * e
            else:
                v, e = _quad_checked(
                    lambda k: k * np.exp(-k ** (2 * n)), 0, P, 1e-13,
                    weight="sin", wvar=rr)
                vals[i], errs[i] = 4 * math.pi * norm * v / rr, 4 * math.pi * norm * e / rr
    return Profile(frame=frame, axis=r, values=vals, spacing=spacing,
                   extent=extent, error_estimate=float(errs.max()))


def profile_quadrature_1d(n):
    """High-accuracy evaluator of f*(xi) for d = 1 at arbitrary points."""
    P = _tail_cutoff(1.0, n)
    norm = 2.0 / math.sqrt(2 * math.pi)

    def evaluate(xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.empty_like(xi)
        for i, zz in enumerate(xi):
            rr = abs(zz)
            if rr == 0.0:
                v, _ = _quad_checked(lambda k: np.exp(-k ** (2 * n)), 0, P, 1e-13)
            else:
                v, _ = _quad_checked(lambda k: np.exp(-k ** (2 * n)), 0, P, 1e-13,
                                     weight="cos", wvar=rr)
            out[i] = norm * v
        return out

    return evaluate


def radial_profile_evaluator(frame, extent=None, spacing=0.01):
    """Dense tabulation of the frame's even profile, as a fast callable."""
    if extent is None:
        extent = profile_decay_radius(frame.n, 1e-14) * 1.1
    return profile(frame, extent=extent, spacing=spacing)


def odd_profile_evaluator(extent=None, spacing=0.01):
    """The d = 1 odd similarity profile normalized to unit first moment.

    This is the neutral mode of the shifted d = 1 frame: the inverse
    transform of -ip e^{-p^4}/sqrt(2 pi), i.e. (1/pi) int_0^inf p sin(p xi)
    e^{-p^4} dp, normalized so that int xi f(xi) dxi = 1.  Zero-first-moment
    initial data relax onto a multiple of this shape.
    """
    n = 2
    if extent is None:
        extent = profile_decay_radius(n, 1e-14) * 1.1
    P = _tail_cutoff(1.0, n)
    r = np.arange(0.0, extent + spacing, spacing)
    vals = np.empty_like(r)
    for i, rr in enumerate(r):
        if rr == 0.0:
            vals[i] = 0.0
            continue
        v, _ = _quad_checked(lambda k: k * np.exp(-k ** (2 * n)), 0, P, 1e-13,
                             weight="sin", wvar=rr)
        vals[i] = v / math.pi
    frame = ScalingFrame.ch_relevant_d1()
    return Profile(frame=frame, axis=r, values=vals, spacing=spacing,
                   extent=extent, error_estimate=1e-12, kind="moment")


# ---------------------------------------------------------------------------
# semigroup

def semigroup_apply(v0, tau, frame, min_band_cells=8):
    """Closed Fourier form of the rescaled semigroup acting on v0.

    vhat(p, tau) = e^{(beta-d/2n) tau} e^{-(p.p)^n a(tau)} vhat0(p e^{-tau/2n}).
    The off-grid argument is evaluated by band-limited interpolation (exact
    non-uniform transform of the grid samples).  Raises InterpolationError
    once the contracted band e^{-tau/2n} k_max occupies fewer than
    `min_band_cells` grid cells.
    """
    if tau < 0:
        raise ValidationError(f"semigroup needs tau >= 0, got {tau}")
    grid = v0.grid
    n, d = frame.n, frame.d
    if d != grid.d:
        raise ValidationError(f"frame dimension {d} != grid dimension {grid.d}")
    if tau == 0.0:
        return v0.copy()
    s = math.exp(-tau / (2 * n))
    dk = 2 * math.pi / grid.L
    if s * grid.k_max < min_band_cells * dk:
        raise InterpolationError(
            f"contracted band e^(-tau/2n) k_max = {s * grid.k_max:.3g} below "
            f"{min_band_cells} grid cells ({min_band_cells * dk:.3g}); "
            "enlarge the grid or reduce tau")
    shrunk = v0.nudft(s * grid.wavenumbers())
    a = exp_decay_a(tau)
    decay = np.exp(-grid.k_squared() ** n * a)
    scalar = math.exp(float(frame.beta - Fraction(d, 2 * n)) * tau)
    return SpectralField(grid, scalar * decay * shrunk)


def semigroup_apply_convolution(v0, tau, frame, x_points, panels_per_unit=2.0,
                                gl_order=12, epsabs=1e-10):
    """Convolution representation of the semigroup, d = 1 only (oracle).

    (e^{tau L} v)(x) = e^{tau d/2n}/(2 pi)^d int dz g(z, tau)
                       v0(e^{tau/2n} (x + z)),
    evaluated by panelled Gauss-Legendre in z against quadrature kernel
    values, with the band-limited interpolant supplying v0 off the grid.
    Slow; used to cross-validate the closed Fourier form.
    """
    grid = v0.grid
    n, d = frame.n, frame.d
    if d != 1 or grid.d != 1:
        raise ValidationError("convolution oracle implemented for d = 1 only")
    Z = kernel_decay_radius(tau, n, rel_threshold=1e-14)
    n_panels = max(24, int(2 * Z * panels_per_unit))
    edges = np.linspace(-Z, Z, n_panels + 1)
    nodes_ref, weights_ref = np.polynomial.legendre.leggauss(gl_order)
    z_nodes, z_weights = [], []
    for a_e, b_e in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a_e + b_e), 0.5 * (b_e - a_e)
        z_nodes.append(mid + half * nodes_ref)
        z_weights.append(half * weights_ref)
    z_nodes = np.concatenate(z_nodes)
    z_weights = np.concatenate(z_weights)
    g_vals = np.array([kernel_g(z, tau, n, 1, epsabs=epsabs)[0] for z in z_nodes])

    x_points = np.atleast_1d(np.asarray(x_points, dtype=float))
    stretch = math.exp(tau / (2 * n))
    # trig interpolant of v0 at the shifted arguments
    u = v0.spatial_complex()
    xg = grid.axis()
    k = grid.wavenumbers()
    coeffs = sfft.fft(u)
    out = np.empty(x_points.shape, dtype=complex)
    for i, xx in enumerate(x_points):
        args = stretch * (xx + z_nodes)
        # fold periodically into the box before interpolating
        args = (args + grid.L / 2.0) % grid.L - grid.L / 2.0
        M = np.exp(1j * np.outer(args - xg[0], k))
        vals = (M @ coeffs) / grid.N
        out[i] = np.sum(z_weights * g_vals * vals)
    prefactor = math.exp(tau * d / (2.0 * n)) / (2 * math.pi) ** d
    scalar = math.exp(float(frame.beta - Fraction(d, 2 * n)) * tau)
    return scalar * prefactor * out


def commutation_check(v, ell, tau, frame):
    """Relative residual of D^l e^{tau L} = e^{tau l/2n} e^{tau L} D^l.

    ell may be an integer (all derivatives on the first axis) or a
    multi-index.  The residual is measured in L2 relative to ||v||.
    """
    if isinstance(ell, int):
        alpha = (ell,) + (0,) * (v.grid.d - 1)
    else:
        alpha = tuple(ell)
    total = sum(alpha)
    lhs = semigroup_apply(v, tau, frame).derivative(alpha)
    rhs = semigroup_apply(v.derivative(alpha), tau, frame)
    scale = math.exp(tau * total / (2.0 * frame.n))
    diff = lhs.values_hat - scale * rhs.values_hat
    denom = v.l2_norm()
    if denom == 0.0:
        raise ValidationError("commutation check needs a nonzero field")
    return SpectralField(v.grid, diff).l2_norm() / denom
