"""Pseudo-spectral integration of dw/dt = -Lap^n w + F(w) on a periodic box.

The box stands in for R^d, so runs enforce a wrap-around budget: the box must
be several times larger than the self-similar support at the final time, and
integration aborts if the field's tails at the box edge grow past a threshold.

The linear part is diagonal in Fourier space and integrated exactly by an
integrating factor; the fourth-order Runge-Kutta stages handle only the
nonlinearity, so there is no stiffness limit on the step.  Keeping the state
in Fourier space makes the k = 0 mode exactly invariant for nonlinearities of
divergence form Lap(...): mass is conserved to the last bit.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .errors import (BlowUpError, BoundaryContaminationError, NumericalError,
                     ValidationError)
from .fields import Field, Grid
from .frames import ScalingFrame
from .records import RunRecord
from . import spectrum


# ---------------------------------------------------------------------------
# nonlinearity descriptions

@dataclass(frozen=True)
class LaplacianPolynomial:
    """Nonlinearity of divergence form sum_m c_m Lap(w^m).

    coefficients maps integer power m >= 2 to its coefficient c_m.
    """

    coefficients: tuple  # of (power, coefficient)

    def __post_init__(self):
        items = (self.coefficients.items() if isinstance(self.coefficients, dict)
                 else self.coefficients)
        coeffs = tuple(sorted((int(m), float(c)) for m, c in items))
        if any(m < 2 for m, _ in coeffs):
            raise ValidationError("polynomial powers must be >= 2")
        object.__setattr__(self, "coefficients", coeffs)

    def describe(self):
        return {"form": "laplacian-polynomial",
                "coefficients": {str(m): c for m, c in self.coefficients}}


@dataclass(frozen=True)
class MonomialNonlinearity:
    """Sum of bare derivative monomials c * prod (d^alpha w)^k."""

    terms: tuple  # of relevance.NonlinearTerm

    def describe(self):
        return {"form": "monomials", "terms": [t.describe() for t in self.terms]}


def cahn_hilliard_nonlinearity():
    """sqrt(3) Lap(w^2) + Lap(w^3): the expansion around the spinodal state."""
    return LaplacianPolynomial({2: math.sqrt(3.0), 3: 1.0})


# ---------------------------------------------------------------------------
# initial data

def init_perturbation(kind, grid, amplitude=0.01, width=1.0, center=None,
                      samples=None, tail_budget=1e-12):
    """Small localized initial data on the grid.

    kind 'gaussian':  A exp(-|x - c|^2 / 2 sigma^2)          (carries mass)
    kind 'dipole':    A ((x1 - c1)/sigma) * gaussian         (zero mass,
                       nonzero first moment A sigma^2 sqrt(2 pi) per axis 1)
    kind 'custom-samples': user-supplied array.

    Rejects data whose boundary tail exceeds tail_budget relative to the peak.
    """
    if kind == "custom-samples":
        if samples is None:
            raise ValidationError("custom-samples needs a samples array")
        out = Field(grid, np.asarray(samples, dtype=float))
    else:
        if not width > 0:
            raise ValidationError(f"width must be positive, got {width}")
        if center is None:
            center = (0.0,) * grid.d
        center = tuple(float(c) for c in center)
        if len(center) != grid.d:
            raise ValidationError(f"center needs {grid.d} components")
        meshes = grid.meshes()
        r2 = sum((m - c) ** 2 for m, c in zip(meshes, center))
        envelope = np.exp(-r2 / (2.0 * width ** 2))
        if kind == "gaussian":
            out = Field(grid, amplitude * envelope)
        elif kind == "dipole":
            out = Field(grid, amplitude * (meshes[0] - center[0]) / width * envelope)
        else:
            raise ValidationError(f"unknown initial-data kind {kind!r}")
    ratio = out.edge_ratio()
    if ratio > tail_budget:
        raise ValidationError(
            f"initial data tail at box edge is {ratio:.2e} of peak "
            f"(budget {tail_budget:.0e}); widen the box or narrow the data")
    return out


# ---------------------------------------------------------------------------
# spectral right-hand side

class SpectralOperator:
    """Precomputed wavenumbers, dealias masks, and nonlinear evaluation."""

    def __init__(self, grid, n, nonlinearity, dealias="two-thirds"):
        if dealias not in ("two-thirds", "half-cubic", "off"):
            raise ValidationError(f"unknown dealias scheme {dealias!r}")
        self.grid = grid
        self.n = int(n)
        self.nonlinearity = nonlinearity
        self.dealias = dealias
        d, N, dx = grid.d, grid.N, grid.dx
        k_full = 2 * np.pi * np.fft.fftfreq(N, d=dx)
        k_half = 2 * np.pi * np.fft.rfftfreq(N, d=dx)
        self.k_axes = [k_full] * (d - 1) + [k_half]
        shape_of = lambda ax, arr: arr.reshape(
            [len(arr) if i == ax else 1 for i in range(d)])
        self.k_mesh = [shape_of(i, k) for i, k in enumerate(self.k_axes)]
        self.k2 = sum(k ** 2 for k in self.k_mesh)
        self.lin_symbol = -self.k2 ** self.n
        kmax = math.pi / dx
        self.mask23 = self._axis_mask(2.0 / 3.0 * kmax)
        self.mask12 = self._axis_mask(0.5 * kmax)
        self.rshape = (N,) * d

    def _axis_mask(self, cut):
        m = np.ones((1,) * self.grid.d, dtype=bool)
        for km in self.k_mesh:
            m = m & (np.abs(km) <= cut)
        return m

    def _mask_for_power(self, m):
        if self.dealias == "off":
            return None
        if self.dealias == "half-cubic" and m >= 3:
            return self.mask12
        return self.mask23

    def _apply_mask(self, what, mask):
        return what if mask is None else what * mask

    def to_spatial(self, what):
        return sfft.irfftn(what, s=self.rshape)

    def to_spectral(self, w):
        return sfft.rfftn(w)

    def nonlinear_hat(self, what):
        """Fourier coefficients of F(w), dealiased."""
        nl = self.nonlinearity
        if nl is None:
            return np.zeros_like(what)
        if isinstance(nl, LaplacianPolynomial):
            out = np.zeros_like(what)
            by_mask = {}
            for m, c in nl.coefficients:
                mask = self._mask_for_power(m)
                by_mask.setdefault(id(mask), (mask, []))[1].append((m, c))
            for mask, group in by_mask.values():
                w = self.to_spatial(self._apply_mask(what, mask))
                poly = np.zeros_like(w)
                for m, c in group:
                    poly += c * w ** m
                out += self._apply_mask(self.to_spectral(poly), mask)
            return -self.k2 * out
        if isinstance(nl, MonomialNonlinearity):
            total = np.zeros(self.rshape)
            mask = self.mask23 if self.dealias != "off" else None
            for term in nl.terms:
                prod = np.full(self.rshape, term.coefficient)
                for alpha, power in term.factors:
                    da = self._apply_mask(what, mask)
                    for axis, order in enumerate(alpha):
                        if order:
                            da = da * (1j * self.k_mesh[axis]) ** order
                    prod = prod * self.to_spatial(da) ** power
                total += prod
            return self._apply_mask(self.to_spectral(total), mask)
        raise ValidationError(f"unsupported nonlinearity {type(nl).__name__}")

    def rhs_hat(self, what):
        return self.lin_symbol * what + self.nonlinear_hat(what)


def rhs_spectral(w, n, nonlinearity, dealias="two-thirds"):
    """Time derivative of the field: -Lap^n w + F(w), pseudo-spectrally."""
    op = SpectralOperator(w.grid, n, nonlinearity, dealias)
    what = op.to_spectral(w.values)
    out = op.to_spatial(op.rhs_hat(what))
    if not np.isfinite(out).all():
        raise BlowUpError("right-hand side overflowed", diagnostics={
            "sup": float(np.abs(w.values).max())})
    return Field(w.grid, out)


# ---------------------------------------------------------------------------
# time integration

@dataclass(frozen=True)
class IntegratorConfig:
    """Step control and run-shape parameters for integrate().

    Times are physical: the run covers [t_start, t_end] with t_start = t0 > 0.
    tol_abs is the local-error budget per unit time measured in the sup norm.
    """

    t_end: float
    snapshot_times: tuple
    t_start: float = 1.0
    dt0: float = 1e-3
    adaptive: bool = True
    tol_abs: float = 1e-9
    tol_rel: float = 0.0
    dealias: str = "two-thirds"
    cfl_safety: float = 0.8
    dt_growth_frac: float = 0.05
    dt_max: float = None
    max_steps: int = 2_000_000
    edge_threshold: float = 1e-8
    blowup_sup: float = 0.5
    box_margin_factor: float = 4.0

    def __post_init__(self):
        if not self.dt0 > 0:
            raise ValidationError(f"dt0 must be positive, got {self.dt0}")
        if not (self.t_end > self.t_start > 0):
            raise ValidationError(
                f"need t_end > t_start > 0, got [{self.t_start}, {self.t_end}]")
        snaps = tuple(sorted(float(t) for t in self.snapshot_times))
        if snaps and (snaps[0] < self.t_start - 1e-12 or snaps[-1] > self.t_end + 1e-12):
            raise ValidationError("snapshot times must lie within [t_start, t_end]")
        if len(set(snaps)) != len(snaps):
            raise ValidationError("snapshot times must be distinct")
        object.__setattr__(self, "snapshot_times", snaps)

    def describe(self):
        return {
            "t_start": self.t_start, "t_end": self.t_end, "dt0": self.dt0,
            "adaptive": self.adaptive, "tol_abs": self.tol_abs,
            "tol_rel": self.tol_rel, "dealias": self.dealias,
            "dt_growth_frac": self.dt_growth_frac,
            "edge_threshold": self.edge_threshold,
            "blowup_sup": self.blowup_sup,
            "box_margin_factor": self.box_margin_factor,
            "snapshot_times": list(self.snapshot_times),
        }


@lru_cache(maxsize=8)
def similarity_support_radius(n, d, rel_threshold=1e-6):
    """Decay radius of the similarity profile, from its tabulation."""
    frame = ScalingFrame.default(n, d)
    extent = spectrum.profile_decay_radius(n, rel_threshold) * 1.4
    prof = spectrum.profile(frame, extent=extent, spacing=0.05)
    return prof.decay_radius(rel_threshold)


def required_box_length(n, d, t_end, margin=4.0):
    """Smallest box satisfying L/2 >= margin * support(t_end)."""
    xi = similarity_support_radius(n, d)
    return 2.0 * margin * xi * t_end ** (1.0 / (2 * n))


class _IFRK4:
    """Integrating-factor RK4 on the spectral coefficients."""

    def __init__(self, op):
        self.op = op
        self._exp_cache = {}

    def _factors(self, dt):
        key = dt
        if key not in self._exp_cache:
            if len(self._exp_cache) > 8:
                self._exp_cache.clear()
            E = np.exp(self.op.lin_symbol * (dt / 2.0))
            self._exp_cache[key] = (E, E * E)
        return self._exp_cache[key]

    def step(self, what, dt):
        op = self.op
        E, E2 = self._factors(dt)
        n1 = op.nonlinear_hat(what)
        n2 = op.nonlinear_hat(E * (what + (dt / 2.0) * n1))
        n3 = op.nonlinear_hat(E * what + (dt / 2.0) * n2)
        n4 = op.nonlinear_hat(E2 * what + dt * E * n3)
        return E2 * what + (dt / 6.0) * (E2 * n1 + 2.0 * E * (n2 + n3) + n4)


_DIAGNOSTIC_COLUMNS = ("t", "dt", "sup_norm", "l2_norm", "mass",
                       "tail_fraction", "edge_ratio")


def _diagnostics_row(t, dt, field):
    row = {
        "t": t, "dt": dt,
        "sup_norm": field.sup_norm(),
        "l2_norm": field.l2_norm(),
        "mass": field.mass(),
        "tail_fraction": field.spectral_tail_fraction(),
        "edge_ratio": field.edge_ratio(),
    }
    for j, m in enumerate(field.first_moments()):
        row[f"moment_x{j + 1}"] = m
    return row


def integrate(w0, config, n=2, nonlinearity="cahn-hilliard", metadata=None):
    """Advance the field from t_start to t_end, recording diagnostics.

    Returns a RunRecord whose rows are taken at the snapshot times and whose
    snapshots hold field copies there.  nonlinearity may be a
    LaplacianPolynomial, a MonomialNonlinearity, 'cahn-hilliard', or None for
    the pure linear flow.

    Raises ValidationError when the box is too small for the requested final
    time (override with config.box_margin_factor, recorded in the metadata),
    BlowUpError / BoundaryContaminationError on numerical failure.
    """
    grid = w0.grid
    if nonlinearity == "cahn-hilliard":
        nonlinearity = cahn_hilliard_nonlinearity()
    required = required_box_length(n, grid.d, config.t_end,
                                   margin=config.box_margin_factor)
    if grid.L < required:
        raise ValidationError(
            f"box L = {grid.L:g} below the wrap-around requirement "
            f"{required:.1f} for t_end = {config.t_end:g} "
            f"(margin {config.box_margin_factor}); enlarge the box, shorten "
            "the run, or lower box_margin_factor explicitly")

    op = SpectralOperator(grid, n, nonlinearity, config.dealias)
    stepper = _IFRK4(op)
    columns = list(_DIAGNOSTIC_COLUMNS) + [f"moment_x{j + 1}" for j in range(grid.d)]
    meta = {
        "module": "simulator",
        "n": n,
        "grid": grid.describe(),
        "config": config.describe(),
        "nonlinearity": nonlinearity.describe() if nonlinearity is not None else None,
        "initial": {"mass": w0.mass(), "first_moments": list(w0.first_moments()),
                    "sup_norm": w0.sup_norm()},
    }
    if metadata:
        meta.update(metadata)
    record = RunRecord(meta, columns)

    t = config.t_start
    what = op.to_spectral(w0.values.copy())
    snap_times = [s for s in config.snapshot_times]
    if snap_times and abs(snap_times[0] - t) < 1e-12:
        record.add_row(_diagnostics_row(t, 0.0, w0))
        record.add_snapshot(t, w0.copy())
        snap_times.pop(0)

    dt = config.dt0
    err_prev_ratio = 1.0
    steps = 0
    rejects = 0
    while t < config.t_end - 1e-12 * config.t_end:
        if steps >= config.max_steps:
            raise NumericalError(f"exceeded max_steps = {config.max_steps}")
        cap = config.t_end - t
        if snap_times:
            cap = min(cap, snap_times[0] - t)
        dt_lim = config.dt_growth_frac * t if config.dt_growth_frac else np.inf
        if config.dt_max:
            dt_lim = min(dt_lim, config.dt_max)
        h_uncapped = min(dt, dt_lim)
        h = min(h_uncapped, cap)
        if config.adaptive:
            coarse = stepper.step(what, h)
            fine = stepper.step(stepper.step(what, h / 2.0), h / 2.0)
            diff = op.to_spatial(coarse - fine)
            if not np.isfinite(diff).all():
                raise BlowUpError("non-finite step (blow-up)", t=t,
                                  diagnostics={"dt": h})
            w_spatial = op.to_spatial(fine)
            err = float(np.abs(diff).max()) / 15.0
            sup = float(np.abs(w_spatial).max())
            tol = (config.tol_abs + config.tol_rel * sup) * h
            if err > tol and h > 1e-14 * max(t, 1.0):
                rejects += 1
                if rejects > 50:
                    raise NumericalError("step controller stalled (50 rejects)")
                dt = h * max(0.1, 0.9 * (tol / err) ** 0.2)
                continue
            rejects = 0
            ratio = tol / err if err > 0 else 1e4
            factor = 0.9 * ratio ** 0.06 * err_prev_ratio ** 0.08
            err_prev_ratio = ratio
            dt = h * min(5.0, max(0.2, factor))
            if h < h_uncapped:
                # step was shortened to hit an output time, not for accuracy
                dt = max(dt, h_uncapped)
            what = fine
        else:
            what = stepper.step(what, h)
            w_spatial = op.to_spatial(what)
            if not np.isfinite(w_spatial).all():
                raise BlowUpError("non-finite step (blow-up)", t=t,
                                  diagnostics={"dt": h})
            sup = float(np.abs(w_spatial).max())
        t += h
        steps += 1

        if sup > config.blowup_sup:
            raise BlowUpError(
                f"sup-norm {sup:.3g} left the small-amplitude regime "
                f"(limit {config.blowup_sup})", t=t, diagnostics={"sup": sup})
        if snap_times and t >= snap_times[0] - 1e-12 * max(1.0, snap_times[0]):
            fld = Field(grid, w_spatial)
            # wrap-around contamination develops on the slow similarity
            # scale; checking at output times avoids flagging the transient
            # dealias-truncation ring of the first few steps
            edge = fld.edge_ratio()
            if edge > config.edge_threshold:
                raise BoundaryContaminationError(
                    f"edge amplitude {edge:.2e} of sup exceeds "
                    f"{config.edge_threshold:.0e}: box too small", t=t,
                    edge_ratio=edge)
            record.add_row(_diagnostics_row(t, h, fld))
            record.add_snapshot(t, fld.copy())
            snap_times.pop(0)
    record.metadata["steps"] = steps
    return record
