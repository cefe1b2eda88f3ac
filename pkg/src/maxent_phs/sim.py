"""Quasi-static trajectories of port-Hamiltonian models.

Every effort evaluation re-equilibrates the microscopic model at the current
extensive state, warm-started from the previous evaluation.  States advance
with the explicit midpoint rule.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import (
    EntropyOutOfRange,
    NoConvergence,
    ScenarioError,
    SolverError,
    StateOutOfDomain,
    TargetOutOfRange,
)
from .phs import PhsModel

DOMAIN_ERRORS = (TargetOutOfRange, EntropyOutOfRange, NoConvergence, SolverError, ValueError)
MAX_HALVINGS = 20
TEMPERATURE_RESOLUTION = 1e-9


class InputSignal:
    """External port inputs as functions of time.

    Each entry is a constant, a callable of ``t`` or a ``(times, values)``
    pair interpolated linearly (held constant outside the samples).
    Ports not listed are zero.
    """

    def __init__(self, spec: Mapping | None = None):
        self._fns = {}
        for label, value in dict(spec or {}).items():
            self._fns[label] = self._compile(label, value)

    @staticmethod
    def _compile(label, value):
        if callable(value):
            return value
        if isinstance(value, (tuple, list)) and len(value) == 2 and np.ndim(value[0]) == 1:
            times = np.asarray(value[0], dtype=float)
            values = np.asarray(value[1], dtype=float)
            if times.shape != values.shape or times.size == 0 or np.any(np.diff(times) <= 0):
                raise ScenarioError(f"signal {label!r}: sample times must increase and match values")
            return lambda t: float(np.interp(t, times, values))
        v = float(value)
        if not math.isfinite(v):
            raise ScenarioError(f"signal {label!r} is not finite")
        return lambda t: v

    def labels(self):
        return tuple(self._fns)

    def at(self, t: float, labels) -> np.ndarray:
        unknown = set(self._fns) - set(labels)
        if unknown:
            raise ScenarioError(f"signal drives unknown ports {sorted(unknown)}")
        out = np.array([float(self._fns[lab](t)) if lab in self._fns else 0.0 for lab in labels])
        if not np.all(np.isfinite(out)):
            raise ScenarioError(f"non-finite input at t={t!r}")
        return out


@dataclass
class Evaluation:
    """Energy, efforts and warm-start cache at one state."""

    x: np.ndarray
    energy: float
    efforts: np.ndarray
    cache: object = None


def evaluate(model: PhsModel, x, cache=None) -> Evaluation:
    x = np.asarray(x, dtype=float)
    energy, efforts, new_cache = model.hamiltonian.evaluate(x, cache)
    return Evaluation(x, energy, np.asarray(efforts, dtype=float), new_cache)


@dataclass
class StepResult:
    end: Evaluation
    dt: float
    P_s: float
    P_d: float
    P_ext: float
    sigma_i: float
    sigma_ext: float
    balance_defect: float
    inputs: np.ndarray


def _midpoint(model, start: Evaluation, t, dt, u_of_t):
    u0 = u_of_t(t)
    fl0 = model.flows(start.x, start.efforts, u0)
    half = evaluate(model, start.x + 0.5 * dt * fl0.xdot, start.cache)
    u_h = u_of_t(t + 0.5 * dt)
    fl_h = model.flows(half.x, half.efforts, u_h)
    end = evaluate(model, start.x + dt * fl_h.xdot, half.cache)
    return end, fl_h, u_h


def step(model: PhsModel, start: Evaluation, u_of_t: Callable[[float], np.ndarray], t: float,
         dt: float, _depth: int = 0) -> list[StepResult]:
    """Advance one step of ``dt``; on a domain exit the step is split in halves.

    Returns the accepted sub-steps (one unless the step was split).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    try:
        end, fl, u = _midpoint(model, start, t, dt, u_of_t)
    except DOMAIN_ERRORS as exc:
        if _depth >= MAX_HALVINGS:
            raise StateOutOfDomain(f"state left the attainable set at t={t!r}: {exc}") from exc
        first = step(model, start, u_of_t, t, 0.5 * dt, _depth + 1)
        second = step(model, first[-1].end, u_of_t, t + 0.5 * dt, 0.5 * dt, _depth + 1)
        return first + second
    sigma_ext = float(u[0]) if _entropy_first(model) else math.nan
    return [StepResult(end, dt, fl.P_s, fl.P_d, fl.P_ext, fl.sigma_i, sigma_ext,
                       fl.balance_defect, u)]


def _entropy_first(model) -> bool:
    labels = getattr(model.hamiltonian, "labels", ())
    return bool(labels) and labels[0] == "entropy"


# --------------------------------------------------------------------------
# ledger


@dataclass
class TrajectoryLedger:
    """Per-step record of a trajectory plus cumulative balances.

    Row 0 is the initial state; powers on row ``i > 0`` are the midpoint
    values used to advance from row ``i - 1``.
    """

    state_labels: tuple
    input_labels: tuple
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    efforts: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    P_s: list = field(default_factory=list)
    P_d: list = field(default_factory=list)
    P_ext: list = field(default_factory=list)
    sigma_i: list = field(default_factory=list)
    sigma_ext: list = field(default_factory=list)
    balance_defect: list = field(default_factory=list)
    extra_columns: dict = field(default_factory=dict)
    energy_integral: float = 0.0
    entropy_production_integral: float = 0.0
    entropy_exchange_integral: float = 0.0

    def record_start(self, t, ev: Evaluation):
        self._append(t, ev, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def record(self, t, r: StepResult):
        self.energy_integral += r.dt * r.P_s
        self.entropy_production_integral += r.dt * r.sigma_i
        if not math.isnan(r.sigma_ext):
            self.entropy_exchange_integral += r.dt * r.sigma_ext
        self._append(t, r.end, r.P_s, r.P_d, r.P_ext, r.sigma_i, r.sigma_ext, r.balance_defect)

    def _append(self, t, ev, P_s, P_d, P_ext, sigma_i, sigma_ext, defect):
        self.times.append(float(t))
        self.states.append(ev.x.copy())
        self.efforts.append(ev.efforts.copy())
        self.energies.append(ev.energy)
        self.P_s.append(P_s)
        self.P_d.append(P_d)
        self.P_ext.append(P_ext)
        self.sigma_i.append(sigma_i)
        self.sigma_ext.append(sigma_ext)
        self.balance_defect.append(defect)

    def add_column(self, name, values):
        values = list(values)
        if len(values) != len(self.times):
            raise ValueError("extra column length differs from the ledger")
        self.extra_columns[name] = values

    @property
    def state_array(self) -> np.ndarray:
        return np.array(self.states)

    @property
    def effort_array(self) -> np.ndarray:
        return np.array(self.efforts)

    def column(self, label) -> np.ndarray:
        return self.state_array[:, self.state_labels.index(label)]

    @property
    def energy_defect(self) -> float:
        """``E(end) - E(start) - ∫ P_s dt``."""
        return self.energies[-1] - self.energies[0] - self.energy_integral

    @property
    def max_balance_defect(self) -> float:
        return float(np.max(np.abs(self.balance_defect)))

    def max_balance_ratio(self) -> float:
        """Largest per-step defect relative to that step's power scale."""
        worst = 0.0
        for d, a, b, c in zip(self.balance_defect, self.P_s, self.P_d, self.P_ext):
            scale = max(abs(a), abs(b), abs(c))
            if scale > 0:
                worst = max(worst, abs(d) / scale)
        return worst

    def headers(self) -> list[str]:
        return (["time", *self.state_labels, *(f"effort_{lab}" for lab in self.state_labels),
                 "P_s", "P_d", "P_ext", "sigma_i", "sigma_ext", "balance_defect", *self.extra_columns])

    def rows(self):
        for i, t in enumerate(self.times):
            yield [t, *self.states[i], *self.efforts[i], self.P_s[i], self.P_d[i], self.P_ext[i],
                   self.sigma_i[i], self.sigma_ext[i], self.balance_defect[i],
                   *(col[i] for col in self.extra_columns.values())]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.headers())
            for row in self.rows():
                writer.writerow([f"{v:.16e}" for v in row])

    def summary(self) -> dict:
        return {
            "steps": len(self.times) - 1,
            "t_end": self.times[-1],
            "terminal_state": dict(zip(self.state_labels, map(float, self.states[-1]))),
            "terminal_efforts": dict(zip(self.state_labels, map(float, self.efforts[-1]))),
            "energy_start": self.energies[0],
            "energy_end": self.energies[-1],
            "energy_integral": self.energy_integral,
            "energy_defect": self.energy_defect,
            "max_balance_defect": self.max_balance_defect,
            "max_balance_ratio": self.max_balance_ratio(),
            "min_sigma_i": float(np.min(self.sigma_i)),
            "entropy_production_integral": self.entropy_production_integral,
            "entropy_exchange_integral": self.entropy_exchange_integral,
        }

    def to_json(self, path=None, **kwargs):
        text = json.dumps(self.summary(), **kwargs)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def run(model: PhsModel, signal: InputSignal, t_end: float, dt: float, x0) -> TrajectoryLedger:
    """Integrate from ``x0`` over ``[0, t_end]`` with fixed steps (the last one shortened)."""
    if not (t_end > 0 and math.isfinite(t_end)):
        raise ValueError("t_end must be positive and finite")
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError("dt must be positive and finite")
    labels = tuple(model.input_labels)

    def u_of_t(t):
        return signal.at(t, labels)

    ledger = TrajectoryLedger(tuple(model.hamiltonian.labels), labels)
    current = evaluate(model, x0)
    ledger.record_start(0.0, current)
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    t = 0.0
    for i in range(n_steps):
        h = min(dt, t_end - t) if i == n_steps - 1 else dt
        for sub in step(model, current, u_of_t, t, h):
            t += sub.dt
            ledger.record(t, sub)
            current = sub.end
    return ledger


def adiabat_column(ledger: TrajectoryLedger, volume_label="volume") -> np.ndarray:
    """``T V^(2/3)`` along the trajectory (monatomic ideal-gas adiabat invariant)."""
    T = ledger.effort_array[:, 0]
    V = ledger.column(volume_label)
    return T * V ** (2.0 / 3.0)


# --------------------------------------------------------------------------
# thermal coupling of two subsystems


@dataclass
class CouplingReport:
    ledger_a: TrajectoryLedger
    ledger_b: TrajectoryLedger
    heat_flows: np.ndarray
    temperature_gap: np.ndarray
    total_energy: np.ndarray
    total_entropy: np.ndarray

    @property
    def terminal_gap(self) -> float:
        return float(self.temperature_gap[-1])

    @property
    def terminal_relative_gap(self) -> float:
        Ta, Tb = self.ledger_a.efforts[-1][0], self.ledger_b.efforts[-1][0]
        return abs(Ta - Tb) / max(Ta, Tb)

    @property
    def energy_drift(self) -> float:
        E = self.total_energy
        return float(np.max(np.abs(E - E[0])) / abs(E[0])) if E[0] != 0 else float(np.max(np.abs(E - E[0])))

    @property
    def entropy_nondecreasing(self) -> bool:
        S = self.total_entropy
        return bool(np.all(np.diff(S) >= -1e-12 * np.maximum(1.0, np.abs(S[1:]))))

    @property
    def hot_to_cold(self) -> bool:
        """Heat always flows from the hotter subsystem: ``Q (T_A - T_B) >= 0``.

        Steps whose gap is below the temperature resolution (``1e-9`` relative)
        count as equilibrated; their sign is solver noise.
        """
        gap = self.temperature_gap[:-1]
        T = np.maximum(np.abs(self.ledger_a.effort_array[:-1, 0]), np.abs(self.ledger_b.effort_array[:-1, 0]))
        resolved = np.abs(gap) > TEMPERATURE_RESOLUTION * T
        return bool(np.all(self.heat_flows[resolved] * gap[resolved] >= 0))

    def summary(self) -> dict:
        return {
            "steps": len(self.heat_flows),
            "terminal_temperature_gap": self.terminal_gap,
            "terminal_relative_gap": self.terminal_relative_gap,
            "energy_drift": self.energy_drift,
            "entropy_nondecreasing": self.entropy_nondecreasing,
            "hot_to_cold": self.hot_to_cold,
        }


def couple_and_equilibrate(model_a: PhsModel, model_b: PhsModel, conductance: float, t_end: float,
                           dt: float, x_a0, x_b0) -> CouplingReport:
    """Exchange heat ``Q = G (T_A - T_B)`` through each model's entropy port.

    Entropy leaves A at rate ``Q / T_A`` and enters B at ``Q / T_B``; both
    models must have the entropy as first storage and first external port.
    """
    if conductance < 0:
        raise ValueError("conductance must be nonnegative")
    if not (t_end > 0 and dt > 0):
        raise ValueError("t_end and dt must be positive")
    for m in (model_a, model_b):
        if not _entropy_first(m):
            raise ScenarioError("coupled models need the entropy as first storage port")
    n_a, n_b = len(model_a.input_labels), len(model_b.input_labels)

    def inputs(ev_a, ev_b):
        Ta, Tb = ev_a.efforts[0], ev_b.efforts[0]
        Q = conductance * (Ta - Tb)
        u_a = np.zeros(n_a)
        u_b = np.zeros(n_b)
        u_a[0] = Q / Ta
        u_b[0] = -Q / Tb
        return u_a, u_b, Q

    led_a = TrajectoryLedger(tuple(model_a.hamiltonian.labels), tuple(model_a.input_labels))
    led_b = TrajectoryLedger(tuple(model_b.hamiltonian.labels), tuple(model_b.input_labels))
    a = evaluate(model_a, x_a0)
    b = evaluate(model_b, x_b0)
    led_a.record_start(0.0, a)
    led_b.record_start(0.0, b)
    heat = []
    n_steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    t = 0.0
    for _ in range(n_steps):
        u_a, u_b, Q0 = inputs(a, b)
        fa = model_a.flows(a.x, a.efforts, u_a)
        fb = model_b.flows(b.x, b.efforts, u_b)
        try:
            ha = evaluate(model_a, a.x + 0.5 * dt * fa.xdot, a.cache)
            hb = evaluate(model_b, b.x + 0.5 * dt * fb.xdot, b.cache)
            u_a, u_b, Q = inputs(ha, hb)
            fa = model_a.flows(ha.x, ha.efforts, u_a)
            fb = model_b.flows(hb.x, hb.efforts, u_b)
            a_new = evaluate(model_a, a.x + dt * fa.xdot, ha.cache)
            b_new = evaluate(model_b, b.x + dt * fb.xdot, hb.cache)
        except DOMAIN_ERRORS as exc:
            raise StateOutOfDomain(f"coupled state left the attainable set at t={t!r}: {exc}") from exc
        t += dt
        heat.append(Q)
        led_a.record(t, StepResult(a_new, dt, fa.P_s, fa.P_d, fa.P_ext, fa.sigma_i, float(u_a[0]),
                                   fa.balance_defect, u_a))
        led_b.record(t, StepResult(b_new, dt, fb.P_s, fb.P_d, fb.P_ext, fb.sigma_i, float(u_b[0]),
                                   fb.balance_defect, u_b))
        a, b = a_new, b_new
    Ta = led_a.effort_array[:, 0]
    Tb = led_b.effort_array[:, 0]
    return CouplingReport(
        led_a, led_b, np.array(heat), Ta - Tb,
        np.array(led_a.energies) + np.array(led_b.energies),
        led_a.column("entropy") + led_b.column("entropy"),
    )
