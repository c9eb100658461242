"""Direct integration in self-similar variables, with spectral projections.

In the frame u = t^{-beta} v(xi, tau), xi = x/t^{1/2n}, tau = log t, the
equation becomes autonomous-plus-decaying:

    dv/dtau = -Lap^n v + (1/2n) xi . grad v + beta v
              + sum_terms e^{-q_T tau} (term in v),

where each nonlinear term T with K factors and D total derivatives carries
the exact exponent q_T = beta (K - 1) + D/(2n) - 1.  The diagonal part
-(k.k)^n + (beta - d/2n) is integrated exactly; the dilation term and the
nonlinearity go through the explicit Runge-Kutta stages (the dilation
transports near-zero tail values inward, so the periodic box is safe as long
as the edge stays quiet, which is monitored).

The observables are the neutral-mode projections

    y0 = (2pi)^{-d/2} int v dxi,        y1_j = (2pi)^{-d/2} int xi_j v dxi,

normalized so that v = B f* gives y0 = B, plus the L2 norm of what remains
after removing the y0/y1 eigencomponents.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (BlowUpError, BoundaryContaminationError, NumericalError,
                     UnsupportedFrameError, ValidationError)
from .fields import Field, Grid
from .frames import ScalingFrame
from .records import RunRecord
from .simulator import (LaplacianPolynomial, MonomialNonlinearity,
                        SpectralOperator, cahn_hilliard_nonlinearity)
from . import spectrum


@dataclass
class ScaledState:
    """Field in similarity variables at a given slow time tau."""

    frame: ScalingFrame
    tau: float
    field: Field

    def __post_init__(self):
        if self.field.grid.d != self.frame.d:
            raise ValidationError(
                f"grid dimension {self.field.grid.d} != frame dimension {self.frame.d}")

    @property
    def eta(self):
        return self.frame.eta(self.tau)

    @property
    def eta_tilde(self):
        return self.frame.eta_tilde(self.tau)


@dataclass(frozen=True)
class Projections:
    """Neutral-mode amplitudes and the residual norm."""

    y0: float
    y1: tuple
    yperp_norm: float

    def describe(self):
        return {"y0": self.y0, "y1": list(self.y1), "yperp_norm": self.yperp_norm}


def term_decay_exponent(frame, total_power, total_derivatives):
    """Exact e^{-q tau} exponent of a term with K factors, D derivatives."""
    return (frame.beta * (total_power - 1)
            + Fraction(total_derivatives, 2 * frame.n) - 1)


def _term_weights(frame, nonlinearity):
    """(exponent q as float) per nonlinear piece, in evaluation order."""
    if nonlinearity is None:
        return []
    if isinstance(nonlinearity, LaplacianPolynomial):
        return [float(term_decay_exponent(frame, m, 2)) for m, _ in
                nonlinearity.coefficients]
    if isinstance(nonlinearity, MonomialNonlinearity):
        return [float(term_decay_exponent(frame, t.total_power, t.total_derivatives))
                for t in nonlinearity.terms]
    raise ValidationError(f"unsupported nonlinearity {type(nonlinearity).__name__}")


class ScaledOperator:
    """Pseudo-spectral evaluation of the similarity-frame right-hand side."""

    def __init__(self, grid, frame, nonlinearity, dealias="two-thirds"):
        self.grid = grid
        self.frame = frame
        self.nonlinearity = nonlinearity
        self.op = SpectralOperator(grid, frame.n, None, dealias)
        self.dealias = dealias
        self.xi = grid.meshes()
        self.if_symbol = (self.op.lin_symbol
                          + float(frame.beta - Fraction(frame.d, 2 * frame.n)))
        weights = _term_weights(frame, nonlinearity)
        self._pieces = []  # (exponent q, sub-operator for the single term)
        if isinstance(nonlinearity, LaplacianPolynomial):
            for (m, c), q in zip(nonlinearity.coefficients, weights):
                sub = SpectralOperator(grid, frame.n,
                                       LaplacianPolynomial({m: c}), dealias)
                self._pieces.append((q, sub))
        elif isinstance(nonlinearity, MonomialNonlinearity):
            for term, q in zip(nonlinearity.terms, weights):
                sub = SpectralOperator(grid, frame.n,
                                       MonomialNonlinearity((term,)), dealias)
                self._pieces.append((q, sub))

    def drift_hat(self, vhat):
        """(1/2n)(xi . grad v + d v) in spectral form, dilation part.

        grad is spectral, the xi product pointwise; valid while tails are
        quiet at the box edge (monitored by the integrator).
        """
        acc = None
        for axis in range(self.grid.d):
            dv = self.op.to_spatial(vhat * (1j * self.op.k_mesh[axis]))
            contrib = self.xi[axis] * dv
            acc = contrib if acc is None else acc + contrib
        v = self.op.to_spatial(vhat)
        return self.op.to_spectral(
            (acc + self.frame.d * v) / (2.0 * self.frame.n))

    def nonlinear_hat(self, vhat, tau):
        """eta-weighted nonlinearity in spectral form."""
        out = np.zeros_like(vhat)
        for q, sub in self._pieces:
            out += math.exp(-q * tau) * sub.nonlinear_hat(vhat)
        return out

    def explicit_hat(self, vhat, tau):
        return self.drift_hat(vhat) + self.nonlinear_hat(vhat, tau)

    def full_rhs_hat(self, vhat, tau):
        return self.if_symbol * vhat + self.explicit_hat(vhat, tau)


def scaled_rhs(state, nonlinearity="cahn-hilliard", dealias="two-thirds"):
    """Full similarity-frame time derivative of the state, as a Field."""
    if nonlinearity == "cahn-hilliard":
        nonlinearity = cahn_hilliard_nonlinearity()
    op = ScaledOperator(state.field.grid, state.frame, nonlinearity, dealias)
    vhat = op.op.to_spectral(state.field.values)
    out = op.op.to_spatial(op.full_rhs_hat(vhat, state.tau))
    if not np.isfinite(out).all():
        raise BlowUpError("scaled right-hand side overflowed")
    return Field(state.field.grid, out)


# ---------------------------------------------------------------------------
# neutral-mode projections

_MODE_CACHE = {}


def neutral_modes(grid, frame):
    """(psi0, [psi1_1..psi1_d]) sampled on the grid.

    psi0 is the similarity profile (unit mass functional) and psi1_j the
    first-moment eigenmode -d_j psi0 (unit coordinate functional); both are
    constructed spectrally on the grid so that derivatives applied to them
    downstream stay clean.  Continuous transforms: (2 pi)^{d/2} e^{-(k.k)^n}
    and (2 pi)^{d/2} (-i k_j) e^{-(k.k)^n}.
    """
    key = (grid.d, grid.N, grid.L, frame.n)
    if key in _MODE_CACHE:
        return _MODE_CACHE[key]
    n, d = frame.n, frame.d
    norm = (2 * math.pi) ** (d / 2.0)

    def envelope(*ks):
        k2 = sum(k * k for k in ks)
        return norm * np.exp(-k2 ** n)

    from .fields import SpectralField

    psi0 = SpectralField.from_function(grid, envelope).to_field().values
    psi1 = []
    for j in range(d):
        def mode_j(*ks, _j=j):
            return -1j * ks[_j] * envelope(*ks)

        psi1.append(SpectralField.from_function(grid, mode_j)
                    .to_field(imag_tol=1e-7).values)
    result = (psi0, psi1)
    _MODE_CACHE[key] = result
    return result


def project(state):
    """Neutral-mode amplitudes (y0, y1) and the residual L2 norm."""
    field = state.field
    grid = field.grid
    d = grid.d
    cell = field.cell_volume
    norm = (2 * math.pi) ** (-d / 2.0)
    y0 = norm * field.values.sum() * cell
    meshes = grid.meshes()
    y1 = tuple(norm * float((m * field.values).sum()) * cell for m in meshes)
    psi0, psi1 = neutral_modes(grid, state.frame)
    resid = field.values - y0 * psi0
    for y1j, psij in zip(y1, psi1):
        resid = resid - y1j * psij
    yperp = float(np.sqrt((resid ** 2).sum() * cell))
    return Projections(y0=float(y0), y1=y1, yperp_norm=yperp)


# ---------------------------------------------------------------------------
# integration

@dataclass(frozen=True)
class ScaledIntegratorConfig:
    """Step control for the similarity-frame integrator (slow time tau)."""

    tau_end: float
    save_times: tuple
    tau_start: float = 0.0
    dt0: float = 1e-3
    adaptive: bool = True
    tol_abs: float = 1e-9
    tol_rel: float = 0.0
    dealias: str = "two-thirds"
    cfl_safety: float = 0.8
    max_steps: int = 2_000_000
    edge_threshold: float = 1e-8
    blowup_sup: float = 0.5

    def __post_init__(self):
        if not self.dt0 > 0:
            raise ValidationError(f"dt0 must be positive, got {self.dt0}")
        if not self.tau_end > self.tau_start:
            raise ValidationError("need tau_end > tau_start")
        saves = tuple(sorted(float(t) for t in self.save_times))
        if saves and (saves[0] < self.tau_start - 1e-12 or saves[-1] > self.tau_end + 1e-12):
            raise ValidationError("save times must lie within [tau_start, tau_end]")
        object.__setattr__(self, "save_times", saves)

    def describe(self):
        return {"tau_start": self.tau_start, "tau_end": self.tau_end,
                "dt0": self.dt0, "adaptive": self.adaptive,
                "tol_abs": self.tol_abs, "tol_rel": self.tol_rel,
                "dealias": self.dealias, "cfl_safety": self.cfl_safety,
                "edge_threshold": self.edge_threshold,
                "save_times": list(self.save_times)}


class _ScaledIFRK4:
    """Integrating-factor RK4 with a tau-dependent explicit part."""

    def __init__(self, op):
        self.op = op
        self._cache = {}

    def _factors(self, dt):
        if dt not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            E = np.exp(self.op.if_symbol * (dt / 2.0))
            self._cache[dt] = (E, E * E)
        return self._cache[dt]

    def step(self, vhat, tau, dt):
        op = self.op
        E, E2 = self._factors(dt)
        s1 = op.explicit_hat(vhat, tau)
        s2 = op.explicit_hat(E * (vhat + (dt / 2.0) * s1), tau + dt / 2.0)
        s3 = op.explicit_hat(E * vhat + (dt / 2.0) * s2, tau + dt / 2.0)
        s4 = op.explicit_hat(E2 * vhat + dt * E * s3, tau + dt)
        return E2 * vhat + (dt / 6.0) * (E2 * s1 + 2.0 * E * (s2 + s3) + s4)


def integrate_scaled(state0, config, nonlinearity="cahn-hilliard",
                     metadata=None):
    """Advance the similarity-frame state, recording projections over tau.

    Returns a RunRecord with rows (tau, eta, y0, y1_*, yperp_norm, norms) at
    the save times, and field snapshots there.
    """
    if nonlinearity == "cahn-hilliard":
        nonlinearity = cahn_hilliard_nonlinearity()
    grid = state0.field.grid
    frame = state0.frame
    op = ScaledOperator(grid, frame, nonlinearity, config.dealias)
    stepper = _ScaledIFRK4(op)

    # explicit dilation: advective stability bound from the box-edge speed
    v_max = grid.L / (4.0 * frame.n)
    dt_cfl = config.cfl_safety * 2.0 * math.sqrt(2.0) / (v_max * grid.k_max)

    columns = (["tau", "dt", "eta", "eta_tilde", "y0"]
               + [f"y1_x{j + 1}" for j in range(grid.d)]
               + ["yperp_norm", "sup_norm", "l2_norm", "mass", "edge_ratio"])
    meta = {
        "module": "scaledflow",
        "frame": frame.describe(),
        "grid": grid.describe(),
        "config": config.describe(),
        "nonlinearity": nonlinearity.describe() if nonlinearity is not None else None,
        "dt_cfl": dt_cfl,
    }
    if metadata:
        meta.update(metadata)
    record = RunRecord(meta, columns)

    def emit(tau, dt, field):
        state = ScaledState(frame, tau, field)
        pr = project(state)
        row = {"tau": tau, "dt": dt, "eta": state.eta,
               "eta_tilde": state.eta_tilde, "y0": pr.y0,
               "yperp_norm": pr.yperp_norm, "sup_norm": field.sup_norm(),
               "l2_norm": field.l2_norm(), "mass": field.mass(),
               "edge_ratio": field.edge_ratio()}
        for j, y in enumerate(pr.y1):
            row[f"y1_x{j + 1}"] = y
        record.add_row(row)
        record.add_snapshot(tau, field.copy())

    tau = config.tau_start
    vhat = op.op.to_spectral(state0.field.values.copy())
    saves = list(config.save_times)
    if saves and abs(saves[0] - tau) < 1e-12:
        emit(tau, 0.0, state0.field)
        saves.pop(0)

    dt = min(config.dt0, dt_cfl)
    err_prev_ratio = 1.0
    steps = 0
    rejects = 0
    while tau < config.tau_end - 1e-12:
        if steps >= config.max_steps:
            raise NumericalError(f"exceeded max_steps = {config.max_steps}")
        cap = config.tau_end - tau
        if saves:
            cap = min(cap, saves[0] - tau)
        h_uncapped = min(dt, dt_cfl)
        h = min(h_uncapped, cap)
        if config.adaptive:
            coarse = stepper.step(vhat, tau, h)
            fine = stepper.step(stepper.step(vhat, tau, h / 2.0),
                                tau + h / 2.0, h / 2.0)
            diff = op.op.to_spatial(coarse - fine)
            if not np.isfinite(diff).all():
                raise BlowUpError("non-finite step in scaled flow", t=tau)
            w_spatial = op.op.to_spatial(fine)
            err = float(np.abs(diff).max()) / 15.0
            sup = float(np.abs(w_spatial).max())
            tol = (config.tol_abs + config.tol_rel * sup) * h
            if err > tol and h > 1e-12:
                rejects += 1
                if rejects > 50:
                    raise NumericalError("scaled step controller stalled")
                dt = h * max(0.1, 0.9 * (tol / err) ** 0.2)
                continue
            rejects = 0
            ratio = tol / err if err > 0 else 1e4
            factor = 0.9 * ratio ** 0.06 * err_prev_ratio ** 0.08
            err_prev_ratio = ratio
            dt = h * min(5.0, max(0.2, factor))
            if h < h_uncapped:
                dt = max(dt, h_uncapped)
            vhat = fine
        else:
            vhat = stepper.step(vhat, tau, h)
            w_spatial = op.op.to_spatial(vhat)
            if not np.isfinite(w_spatial).all():
                raise BlowUpError("non-finite step in scaled flow", t=tau)
            sup = float(np.abs(w_spatial).max())
        tau += h
        steps += 1
        if sup > config.blowup_sup:
            raise BlowUpError(
                f"scaled sup-norm {sup:.3g} left the neighborhood of the "
                f"origin (limit {config.blowup_sup})", t=tau)
        if saves and tau >= saves[0] - 1e-12:
            fld = Field(grid, w_spatial)
            edge = fld.edge_ratio()
            if edge > config.edge_threshold:
                raise BoundaryContaminationError(
                    f"scaled-frame edge amplitude {edge:.2e} of sup exceeds "
                    f"{config.edge_threshold:.0e}", t=tau, edge_ratio=edge)
            emit(tau, h, fld)
            saves.pop(0)
    record.metadata["steps"] = steps
    return record


# ---------------------------------------------------------------------------
# reduced dynamics on the neutral modes

def reduced_ode_solution(y0_init, y1_init, eta_init, frame, taus):
    """Closed-form neutral-mode trajectories for the two supported frames.

    For conservative (divergence-form) nonlinearities the projections of the
    nonlinear terms on the neutral duals vanish identically, so the reduced
    equations are linear and explicit:

    default frame (beta = d/2n):   y0 const, y1 ~ e^{-tau/2n}, eta ~ e^{-tau/2n}
    shifted d = 1 frame (beta=1/2): y0 ~ e^{tau/4}, y1 const, eta ~ e^{-tau/8}
    """
    taus = np.asarray(taus, dtype=float)
    y1_init = np.atleast_1d(np.asarray(y1_init, dtype=float))
    if frame.is_default:
        rate = 1.0 / (2 * frame.n)
        return {
            "tau": taus,
            "y0": np.full_like(taus, float(y0_init)),
            "y1": np.outer(np.exp(-rate * taus), y1_init),
            "eta": eta_init * np.exp(-rate * taus),
        }
    if frame == ScalingFrame.ch_relevant_d1():
        return {
            "tau": taus,
            "y0": float(y0_init) * np.exp(taus / 4.0),
            "y1": np.outer(np.ones_like(taus), y1_init),
            "eta": eta_init * np.exp(-taus / 8.0),
        }
    raise UnsupportedFrameError(
        f"no reduced dynamics for frame n={frame.n}, d={frame.d}, "
        f"beta={frame.beta}; supported: default and the d=1 shifted frame")
