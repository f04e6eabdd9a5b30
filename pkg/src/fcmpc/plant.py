"""Continuous-time circuit model of the dual conversion line.

Two converters feed a Wye-Delta-Wye transformer equivalent circuit joined
at a common point of coupling (PCC); behind the PCC sits a Thevenin grid
(R_g, L_g, ideal source).  Each converter is backed by a purely capacitive
dc link receiving a power injection from its (unmodeled) generator-side
converter.  All quantities are per unit on the single-converter base with
time in seconds; inductances are stored as reactances at the rated angular
frequency.

The dc-link dynamics integrated here are the exact bilinear energy balance
d(v_dc^2)/dt = (4/C_dc) (P_dc - v.i); only the controller works with a
linearization, and the mismatch between the two is deliberately preserved.

States: line currents i1, i2 in the common alpha/beta frame (line 2 already
carries the Delta rotation), squared dc-link voltages, grid source phase.
Integration is classical fixed-step RK4 with sub-steps split at switching
events so the circuit always sees exact piecewise-constant converter
voltages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .frames import clarke, inverse_clarke, rotate

TWO_THIRDS = 2.0 / 3.0
SQRT3_2 = math.sqrt(3.0) / 2.0


class FaultLocation(Enum):
    CONTAINER_PCC = "container_pcc"
    GRID_SOURCE = "grid_source"


@dataclass
class TransformerParams:
    """Equivalent-circuit parameters; x_* are reactances at rated omega."""

    r_s: float
    x_s: float
    r_p: float
    x_p: float

    @property
    def r_av(self) -> float:
        return 2.0 * self.r_p + self.r_s

    @property
    def x_av(self) -> float:
        return 2.0 * self.x_p + self.x_s

    @classmethod
    def from_aggregates(cls, r_av: float, x_av: float,
                        secondary_share: float = 0.5) -> "TransformerParams":
        """Split aggregate values: ``secondary_share`` of the impedance goes
        to each secondary branch, the remainder to the shared primary."""
        r_s = secondary_share * r_av
        x_s = secondary_share * x_av
        return cls(r_s=r_s, x_s=x_s,
                   r_p=0.5 * (r_av - r_s), x_p=0.5 * (x_av - x_s))

    def validate(self):
        for name in ("r_s", "x_s", "r_p", "x_p"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"transformer {name} must be positive")


@dataclass
class GridModel:
    """Thevenin grid: impedance, nominal frequency and source phasors."""

    r_g: float
    x_g: float
    omega: float
    vg_ps: np.ndarray
    vg_ns: np.ndarray = field(default_factory=lambda: np.zeros(2))
    harmonics: list = field(default_factory=list)  # (h, ps, ns) triples

    def __post_init__(self):
        self.vg_ps = np.asarray(self.vg_ps, dtype=float)
        self.vg_ns = np.asarray(self.vg_ns, dtype=float)

    def validate(self):
        if self.omega <= 0.0:
            raise ValueError("grid omega must be positive")
        for h, _, _ in self.harmonics:
            if h < 2:
                raise ValueError("harmonic orders must be >= 2")


@dataclass
class DcLinkParams:
    """c_dc is the per-half capacitance appearing as (1/2)(C/2) d(v^2)/dt,
    in per-unit seconds; v_dc_nom in pu of the converter voltage base."""

    c_dc: float
    v_dc_nom: float

    def validate(self):
        if self.c_dc <= 0.0 or self.v_dc_nom <= 0.0:
            raise ValueError("dc-link parameters must be positive")


@dataclass
class FaultEvent:
    t_start: float
    t_end: float
    location: FaultLocation
    retained_fractions: np.ndarray  # per phase, in [0, 1]

    def __post_init__(self):
        self.retained_fractions = np.asarray(self.retained_fractions, dtype=float)
        if isinstance(self.location, str):
            self.location = FaultLocation(self.location)

    def validate(self):
        if not self.t_start < self.t_end:
            raise ValueError("fault must have t_start < t_end")
        f = self.retained_fractions
        if f.shape != (3,) or np.any(f < 0.0) or np.any(f > 1.0):
            raise ValueError("retained fractions must be three values in [0, 1]")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass
class PlantState:
    i1: np.ndarray
    i2: np.ndarray
    vdc1_sq: float
    vdc2_sq: float
    grid_phase: float
    t: float

    def __post_init__(self):
        self.i1 = np.asarray(self.i1, dtype=float)
        self.i2 = np.asarray(self.i2, dtype=float)

    @classmethod
    def at_rest(cls, vdc_nom: float, t: float = 0.0,
                grid_phase: float = 0.0) -> "PlantState":
        v2 = vdc_nom * vdc_nom
        return cls(i1=np.zeros(2), i2=np.zeros(2), vdc1_sq=v2, vdc2_sq=v2,
                   grid_phase=grid_phase, t=t)


def active_fault(faults, t: float) -> FaultEvent | None:
    for f in faults or ():
        if f.active(t):
            return f
    return None


def _scale_phases(va: float, vb: float, fr) -> tuple[float, float]:
    """Apply per-phase retained fractions in abc and return to alpha/beta."""
    a = va
    b = -0.5 * va + SQRT3_2 * vb
    c = -0.5 * va - SQRT3_2 * vb
    a *= fr[0]
    b *= fr[1]
    c *= fr[2]
    return (TWO_THIRDS * (a - 0.5 * (b + c)), TWO_THIRDS * SQRT3_2 * (b - c))


def _source_ab(grid: GridModel, phase: float) -> tuple[float, float]:
    c, s = math.cos(phase), math.sin(phase)
    psa, psb = grid.vg_ps
    nsa, nsb = grid.vg_ns
    va = c * psa - s * psb + c * nsa + s * nsb
    vb = s * psa + c * psb - s * nsa + c * nsb
    for h, ps, ns in grid.harmonics:
        ch, sh = math.cos(h * phase), math.sin(h * phase)
        va += ch * ps[0] - sh * ps[1] + ch * ns[0] + sh * ns[1]
        vb += sh * ps[0] + ch * ps[1] - sh * ns[0] + ch * ns[1]
    return va, vb


def grid_source_voltage(grid: GridModel, phase: float,
                        fault: FaultEvent | None, t: float) -> np.ndarray:
    """Thevenin source voltage, per-phase scaled if a source fault is active.

    Per-phase scaling of a balanced set naturally produces the negative
    sequence component of the faulted source.
    """
    va, vb = _source_ab(grid, phase)
    if fault is not None and fault.location is FaultLocation.GRID_SOURCE \
            and fault.active(t):
        va, vb = _scale_phases(va, vb, fault.retained_fractions)
    return np.array([va, vb])


def stiff_pcc_voltage(grid: GridModel, phase: float,
                      fault: FaultEvent) -> np.ndarray:
    """PCC node voltage imposed during a container-side fault: the nominal
    source waveform under a stiff per-phase voltage division."""
    va, vb = _source_ab(grid, phase)
    va, vb = _scale_phases(va, vb, fault.retained_fractions)
    return np.array([va, vb])


class Plant:
    """Bundles parameters and provides the integration entry points."""

    def __init__(self, xfmr: TransformerParams, grid: GridModel,
                 dclink: DcLinkParams, faults=(), omega_ref: float | None = None):
        xfmr.validate()
        grid.validate()
        dclink.validate()
        for f in faults:
            f.validate()
        self.xfmr = xfmr
        self.grid = grid
        self.dclink = dclink
        self.faults = list(faults)
        self.omega_ref = grid.omega if omega_ref is None else omega_ref
        # Henry-equivalents (pu.s) from reactances.
        w = self.omega_ref
        self._l_s = xfmr.x_s / w
        self._l_p = xfmr.x_p / w
        self._l_g = grid.x_g / w
        self._kdc = 4.0 / dclink.c_dc

    # -- single derivative evaluation (the circuit equations) -----------

    def derivatives(self, state: PlantState, v1, v2, p_dc1: float,
                    p_dc2: float, fault: FaultEvent | None = None):
        """Time derivative of (i1, i2, vdc1_sq, vdc2_sq) for given converter
        voltages (common frame, Delta rotation already applied to v2).

        With no container fault the PCC node is eliminated through the grid
        branch; during a container fault the node voltage itself is imposed.
        Returns (di1, di2, dvdc1_sq, dvdc2_sq).
        """
        if fault is None:
            fault = active_fault(self.faults, state.t)
        elif not fault.active(state.t):
            fault = None
        d = self._deriv_tuple(
            state.i1[0], state.i1[1], state.i2[0], state.i2[1],
            state.vdc1_sq, state.vdc2_sq,
            float(v1[0]), float(v1[1]), float(v2[0]), float(v2[1]),
            p_dc1, p_dc2, state.grid_phase, fault)
        return (np.array(d[0:2]), np.array(d[2:4]), d[4], d[5])

    def _mode(self, fault: FaultEvent | None):
        """Resistance/inductance seen beyond the secondary branches and the
        forcing mode; ``fault`` must already be resolved to the active fault
        or None so one RK4 step sees a single consistent mode."""
        if fault is not None:
            if fault.location is FaultLocation.CONTAINER_PCC:
                return (self.xfmr.r_p, self._l_p, "stiff", fault)
            return (self.xfmr.r_p + self.grid.r_g, self._l_p + self._l_g,
                    "source", fault)
        return (self.xfmr.r_p + self.grid.r_g, self._l_p + self._l_g,
                "source", None)

    def _forcing(self, mode, fault, phase):
        if mode == "stiff":
            va, vb = _source_ab(self.grid, phase)
            return _scale_phases(va, vb, fault.retained_fractions)
        va, vb = _source_ab(self.grid, phase)
        if fault is not None and fault.location is FaultLocation.GRID_SOURCE:
            va, vb = _scale_phases(va, vb, fault.retained_fractions)
        return va, vb

    def _deriv_tuple(self, i1a, i1b, i2a, i2b, w1, w2,
                     v1a, v1b, v2a, v2b, p1, p2, phase, t, fault):
        r_pg, l_pg, mode, flt = self._mode(fault, t)
        ea, eb = self._forcing(mode, flt, phase)
        r_s, l_s = self.xfmr.r_s, self._l_s
        det = l_s * (l_s + 2.0 * l_pg)
        m11 = (l_s + l_pg) / det
        m12 = -l_pg / det
        ra = r_pg * (i1a + i2a)
        rb = r_pg * (i1b + i2b)
        f1a = v1a - ea - r_s * i1a - ra
        f1b = v1b - eb - r_s * i1b - rb
        f2a = v2a - ea - r_s * i2a - ra
        f2b = v2b - eb - r_s * i2b - rb
        di1a = m11 * f1a + m12 * f2a
        di1b = m11 * f1b + m12 * f2b
        di2a = m12 * f1a + m11 * f2a
        di2b = m12 * f1b + m11 * f2b
        kdc = self._kdc
        dw1 = kdc * (p1 - v1a * i1a - v1b * i1b)
        dw2 = kdc * (p2 - v2a * i2a - v2b * i2b)
        return di1a, di1b, di2a, di2b, dw1, dw2

    # -- PCC node voltage -------------------------------------------------

    def pcc_voltage(self, state: PlantState, v1, v2,
                    fault: FaultEvent | None = None) -> np.ndarray:
        """PCC node voltage consistent with the circuit solve:
        v_pcc = v_g + R_g i_pcc + L_g di_pcc/dt, or the imposed stiff value
        during a container fault."""
        if fault is None:
            fault = active_fault(self.faults, state.t)
        if fault is not None and fault.active(state.t) \
                and fault.location is FaultLocation.CONTAINER_PCC:
            return stiff_pcc_voltage(self.grid, state.grid_phase, fault)
        di1, di2, _, _ = self.derivatives(state, v1, v2, 0.0, 0.0, fault)
        ipcc = state.i1 + state.i2
        dipcc = di1 + di2
        vg = grid_source_voltage(self.grid, state.grid_phase, fault, state.t)
        return vg + self.grid.r_g * ipcc + self._l_g * dipcc

    # -- RK4 stepping -----------------------------------------------------

    def step(self, state: PlantState, v1, v2, p_dc1: float, p_dc2: float,
             dt: float, max_dt: float = 5e-6) -> PlantState:
        """One classical RK4 step with converter inputs held constant.

        The grid source is evaluated at the RK4 stage times so the driven
        dynamics keep their fourth-order accuracy; the grid phase itself
        advances exactly by omega*dt.
        """
        if not 0.0 < dt <= max_dt + 1e-15:
            raise ValueError(f"dt must be in (0, {max_dt}], got {dt}")
        y = (state.i1[0], state.i1[1], state.i2[0], state.i2[1],
             state.vdc1_sq, state.vdc2_sq)
        fault = active_fault(self.faults, state.t)
        out = self._rk4(y, float(v1[0]), float(v1[1]), float(v2[0]),
                        float(v2[1]), p_dc1, p_dc2, state.grid_phase,
                        state.t, dt, fault)
        if not all(math.isfinite(v) for v in out):
            raise FloatingPointError("plant state diverged (non-finite)")
        return PlantState(
            i1=np.array(out[0:2]), i2=np.array(out[2:4]),
            vdc1_sq=out[4], vdc2_sq=out[5],
            grid_phase=state.grid_phase + self.grid.omega * dt,
            t=state.t + dt)

    def _rk4(self, y, v1a, v1b, v2a, v2b, p1, p2, phase, t, h, fault):
        w = self.grid.omega
        f = self._deriv_tuple
        k1 = f(*y, v1a, v1b, v2a, v2b, p1, p2, phase, t, fault)
        ph2 = phase + 0.5 * w * h
        t2 = t + 0.5 * h
        y2 = tuple(y[i] + 0.5 * h * k1[i] for i in range(6))
        k2 = f(*y2, v1a, v1b, v2a, v2b, p1, p2, ph2, t2, fault)
        y3 = tuple(y[i] + 0.5 * h * k2[i] for i in range(6))
        k3 = f(*y3, v1a, v1b, v2a, v2b, p1, p2, ph2, t2, fault)
        ph4 = phase + w * h
        t4 = t + h
        y4 = tuple(y[i] + h * k3[i] for i in range(6))
        k4 = f(*y4, v1a, v1b, v2a, v2b, p1, p2, ph4, t4, fault)
        six = h / 6.0
        return tuple(y[i] + six * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])
                     for i in range(6))

    # -- windowed integration with events and uniform recording ---------

    def integrate_window(self, state: PlantState, segments, p1_fn, p2_fn,
                         n_steps: int, dt: float):
        """Advance ``n_steps`` uniform RK4 steps of size ``dt``.

        ``segments`` is a sorted list of (t_start, u1_ab, u2_ab) unit-level
        vectors (switch states projected to the common alpha/beta frame);
        the first entry must start at or before state.t.  Steps are split
        internally at segment boundaries and fault edges so converter
        voltages are exactly piecewise constant; converter voltages are
        u_ab * v_dc/2 with v_dc taken at each sub-step start.

        Returns (state, records, energies) where records[k] holds
        (v_pcc_a, v_pcc_b, i1a, i1b, i2a, i2b, vdc1_sq, vdc2_sq) at step k
        (k = 0..n_steps) and energies accumulates trapezoidal integrals of
        (p_dc1, p_dc2, v1.i1, v2.i2) over the window.
        """
        t0 = state.t
        events = [seg[0] for seg in segments if seg[0] > t0 + 1e-15]
        for flt in self.faults:
            for edge in (flt.t_start, flt.t_end):
                if t0 + 1e-15 < edge < t0 + n_steps * dt - 1e-15:
                    events.append(edge)
        events = sorted(set(events))

        rec = np.empty((n_steps + 1, 8))
        y = [state.i1[0], state.i1[1], state.i2[0], state.i2[1],
             state.vdc1_sq, state.vdc2_sq]
        phase = state.grid_phase
        t = t0
        seg_idx = 0
        while seg_idx + 1 < len(segments) and segments[seg_idx + 1][0] <= t + 1e-15:
            seg_idx += 1
        e_p1 = e_p2 = e_ac1 = e_ac2 = 0.0
        ev_idx = 0
        w = self.grid.omega

        def seg_voltages(k_t):
            u1, u2 = segments[seg_idx][1], segments[seg_idx][2]
            h1 = 0.5 * math.sqrt(max(y[4], 0.0))
            h2 = 0.5 * math.sqrt(max(y[5], 0.0))
            return (u1[0] * h1, u1[1] * h1, u2[0] * h2, u2[1] * h2)

        fault = active_fault(self.faults, t)
        v1a, v1b, v2a, v2b = seg_voltages(t)
        self._record(rec, 0, y, v1a, v1b, v2a, v2b, phase, t, fault)

        for k in range(n_steps):
            t_next = t0 + (k + 1) * dt
            while t < t_next - 1e-15:
                t_sub = t_next
                while ev_idx < len(events) and events[ev_idx] <= t + 1e-15:
                    ev_idx += 1
                if ev_idx < len(events) and events[ev_idx] < t_next - 1e-15:
                    t_sub = events[ev_idx]
                h = t_sub - t
                fault = active_fault(self.faults, t)
                while seg_idx + 1 < len(segments) \
                        and segments[seg_idx + 1][0] <= t + 1e-15:
                    seg_idx += 1
                v1a, v1b, v2a, v2b = seg_voltages(t)
                p1 = p1_fn(t)
                p2 = p2_fn(t)
                ac1_0 = v1a * y[0] + v1b * y[1]
                ac2_0 = v2a * y[2] + v2b * y[3]
                y = list(self._rk4(tuple(y), v1a, v1b, v2a, v2b,
                                   p1, p2, phase, t, h, fault))
                ac1_1 = v1a * y[0] + v1b * y[1]
                ac2_1 = v2a * y[2] + v2b * y[3]
                e_p1 += p1 * h
                e_p2 += p2 * h
                e_ac1 += 0.5 * (ac1_0 + ac1_1) * h
                e_ac2 += 0.5 * (ac2_0 + ac2_1) * h
                phase += w * h
                t = t_sub
            t = t_next
            if not (math.isfinite(y[0]) and math.isfinite(y[4])):
                raise FloatingPointError("plant state diverged (non-finite)")
            fault = active_fault(self.faults, t)
            while seg_idx + 1 < len(segments) \
                    and segments[seg_idx + 1][0] <= t + 1e-15:
                seg_idx += 1
            v1a, v1b, v2a, v2b = seg_voltages(t)
            self._record(rec, k + 1, y, v1a, v1b, v2a, v2b, phase, t, fault)

        new_state = PlantState(
            i1=np.array(y[0:2]), i2=np.array(y[2:4]), vdc1_sq=y[4],
            vdc2_sq=y[5], grid_phase=phase, t=t)
        energies = {"p_dc1": e_p1, "p_dc2": e_p2, "ac1": e_ac1, "ac2": e_ac2}
        return new_state, rec, energies

    def _record(self, rec, k, y, v1a, v1b, v2a, v2b, phase, t, fault):
        if fault is not None and fault.active(t) \
                and fault.location is FaultLocation.CONTAINER_PCC:
            vpa, vpb = _scale_phases(*_source_ab(self.grid, phase),
                                     fault.retained_fractions)
        else:
            d = self._deriv_tuple(y[0], y[1], y[2], y[3], y[4], y[5],
                                  v1a, v1b, v2a, v2b, 0.0, 0.0, phase, t, fault)
            ea, eb = self._forcing("source", fault if fault is not None
                                   and fault.active(t) else None, phase)
            vpa = ea + self.grid.r_g * (y[0] + y[2]) + self._l_g * (d[0] + d[2])
            vpb = eb + self.grid.r_g * (y[1] + y[3]) + self._l_g * (d[1] + d[3])
        rec[k, 0] = vpa
        rec[k, 1] = vpb
        rec[k, 2:8] = y


def level_to_alpha_beta(levels_abc, delta_rotation: float = 0.0) -> np.ndarray:
    """Project a per-phase switch level triple to the common frame; line 2
    passes its Delta alignment angle."""
    ab = clarke(np.asarray(levels_abc, dtype=float))
    if delta_rotation:
        ab = rotate(delta_rotation, ab)
    return ab
