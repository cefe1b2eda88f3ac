"""Energy representation ``E(S, θx)`` obtained by inverting the entropy ``S(E, θx)``.

Two entropy-representation models are provided: an enumerated accessible
set (entropy via a multiplier solve) and the analytic ideal gas.  Both expose

* ``entropy_and_multipliers(E, extras, initial=None) -> (S, lambdas)``
* ``energy_range(extras) -> (E_min, E_max)``
* ``max_entropy_point(extras) -> (E_star, S_max)`` (``inf`` when unbounded)
* ``homogeneous``, ``k``, ``energy_label`` and ``extra_labels`` attributes.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from ._numerics import logsumexp
from .ensembles import COUNT, ENERGY, VOLUME, IdealGasModel
from .errors import (
    BranchAmbiguity,
    EntropyOutOfRange,
    NoConvergence,
    SolverError,
    TargetOutOfRange,
)
from .maxent import _k, solve_multipliers
from .microstate import AccessibleSet


@dataclass(frozen=True)
class MacroState:
    """Extensive state: entropy plus the non-energy free means, in a fixed order."""

    entropy: float
    extras: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "extras", MappingProxyType({k: float(v) for k, v in dict(self.extras).items()}))
        object.__setattr__(self, "entropy", float(self.entropy))

    def as_vector(self) -> np.ndarray:
        return np.array([self.entropy, *self.extras.values()])

    @classmethod
    def from_vector(cls, vector, labels) -> "MacroState":
        return cls(float(vector[0]), dict(zip(labels, (float(v) for v in vector[1:]))))

    def scaled(self, gamma: float) -> "MacroState":
        return MacroState(gamma * self.entropy, {k: gamma * v for k, v in self.extras.items()})


# --------------------------------------------------------------------------
# entropy-representation models


class EnumeratedModel:
    """Entropy of an enumerated accessible set as a function of its free means."""

    homogeneous = False

    def __init__(self, aset: AccessibleSet, energy: str = ENERGY, extras=(), k=1.0, tol=1e-10):
        self.aset = aset
        self.energy_label = energy
        self.extra_labels = tuple(extras)
        self.k = _k(k)
        self.tol = tol
        self._lock = threading.Lock()
        self._range_cache = {}
        self._max_cache = {}

    def _key(self, extras):
        return tuple(float(extras[lab]) for lab in self.extra_labels)

    def _targets(self, E, extras):
        targets = {self.energy_label: float(E)}
        targets.update({lab: float(extras[lab]) for lab in self.extra_labels})
        return targets

    def entropy_and_multipliers(self, E, extras, initial=None):
        sol = solve_multipliers(self.aset, self._targets(E, extras), self.k, self.tol, initial=initial)
        return sol.entropy, dict(sol.lambdas)

    def energy_range(self, extras):
        key = self._key(extras)
        with self._lock:
            if key in self._range_cache:
                return self._range_cache[key]
        energy = self.aset.column(self.energy_label)
        if not self.extra_labels:
            result = (float(np.min(energy)), float(np.max(energy)))
        else:
            from scipy.optimize import linprog

            F = self.aset.matrix(self.extra_labels)
            A_eq = np.vstack([F.T, np.ones(self.aset.omega)])
            b_eq = np.array([*key, 1.0])
            bounds = []
            for sign in (1.0, -1.0):
                res = linprog(sign * energy, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
                if res.status != 0:
                    raise TargetOutOfRange(f"extras {dict(zip(self.extra_labels, key))} are unattainable")
                bounds.append(sign * res.fun)
            result = (float(bounds[0]), float(bounds[1]))
        with self._lock:
            self._range_cache[key] = result
        return result

    def max_entropy_point(self, extras):
        key = self._key(extras)
        with self._lock:
            if key in self._max_cache:
                return self._max_cache[key]
        energy = self.aset.column(self.energy_label)
        if self.extra_labels:
            sol = solve_multipliers(self.aset, dict(zip(self.extra_labels, key)), self.k, self.tol)
            result = (sol.distribution.expectation(energy), sol.entropy)
        else:
            result = (float(np.mean(energy)), self.k * math.log(self.aset.omega))
        with self._lock:
            self._max_cache[key] = result
        return result

    def invert_entropy(self, S_target, extras, initial, tol=1e-13, max_iter=30):
        """Joint Newton in multiplier space on ``S(λ) = S_target`` and ``E_p[F_x] = θx``.

        Needs a starting point ``initial`` on the requested branch; returns
        ``(E, lambdas)`` or raises ``NoConvergence``.
        """
        if not self.extra_labels:
            return self._invert_entropy_scalar(S_target, float(initial[self.energy_label]), tol, max_iter)
        labels = (self.energy_label, *self.extra_labels)
        F = self.aset.matrix(labels)
        theta = np.array([float(extras[lab]) for lab in self.extra_labels])
        k = self.k
        lam = np.array([float(initial[lab]) for lab in labels])
        scale_S = max(abs(S_target), k)
        for _ in range(max_iter):
            a = F @ lam / k
            lse, w = logsumexp(a)
            mean = w @ F
            S = k * lse - lam @ mean
            Fc = F - mean
            cov = (Fc * w[:, None]).T @ Fc
            r = np.concatenate([[S - S_target], mean[1:] - theta])
            ok = abs(r[0]) <= tol * scale_S and np.all(
                np.abs(r[1:]) <= self.tol * np.maximum(1.0, np.abs(theta)))
            if ok:
                return float(mean[0]), dict(zip(labels, lam.tolist()))
            jac = np.vstack([-(cov @ lam) / k, cov[1:] / k])
            try:
                step = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError as exc:
                raise NoConvergence("singular Jacobian in entropy inversion") from exc
            if not np.all(np.isfinite(step)):
                raise NoConvergence("non-finite step in entropy inversion")
            # keep the energy multiplier on its starting side of zero
            if lam[0] != 0 and lam[0] + step[0] != 0 and np.sign(lam[0] + step[0]) != np.sign(lam[0]):
                raise NoConvergence("entropy inversion crossed the maximum-entropy point")
            lam = lam + step
        raise NoConvergence("entropy inversion did not converge")

    def _invert_entropy_scalar(self, S_target, lam, tol, max_iter):
        """Energy-only case of :meth:`invert_entropy`: ``dS/dλ = -λ Var(F) / k``.

        Runs on Python floats; the set is small whenever this path is hot.
        """
        F = self._shifted_energies()
        F_min, F_max = min(F), max(F)
        F0 = float(self.aset.column(self.energy_label)[0])
        k = self.k
        scale_S = max(abs(S_target), k)
        exp = math.exp
        for _ in range(max_iter):
            c = lam / k
            top = c * (F_max if c > 0 else F_min)
            w = [exp(c * f - top) for f in F]
            Z = m1 = 0.0
            for wi, f in zip(w, F):
                Z += wi
                m1 += wi * f
            mean = m1 / Z
            S = k * (top + math.log(Z)) - lam * mean
            r = S - S_target
            if abs(r) <= tol * scale_S:
                return mean + F0, {self.energy_label: lam}
            var = sum(wi * (f - mean) ** 2 for wi, f in zip(w, F)) / Z
            slope = -lam * var / k
            if slope == 0 or not math.isfinite(slope):
                raise NoConvergence("flat entropy in energy-only inversion")
            new = lam - r / slope
            if lam != 0 and (new == 0 or (new > 0) != (lam > 0)):
                raise NoConvergence("entropy inversion crossed the maximum-entropy point")
            lam = new
        raise NoConvergence("entropy inversion did not converge")

    def _shifted_energies(self):
        cached = self.__dict__.get("_shifted")
        if cached is None:
            col = self.aset.column(self.energy_label)
            cached = tuple(float(v - col[0]) for v in col)
            self.__dict__["_shifted"] = cached
        return cached


class IdealGasThermo:
    """Analytic ideal-gas entropy ``S(E, N, V)``; ``extras`` picks which of N, V are state."""

    def __init__(self, gas: IdealGasModel, extras=(COUNT, VOLUME)):
        unknown = set(extras) - {COUNT, VOLUME}
        if unknown:
            raise ValueError(f"unsupported ideal-gas extras {sorted(unknown)}")
        self.gas = gas
        self.energy_label = ENERGY
        self.extra_labels = tuple(extras)
        self.k = gas.k
        self.homogeneous = gas.gibbs_correction in (True, "stirling")

    def _nv(self, extras):
        N = float(extras[COUNT]) if COUNT in self.extra_labels else self.gas.N
        V = float(extras[VOLUME]) if VOLUME in self.extra_labels else self.gas.V
        if not (N > 0 and V > 0):
            raise TargetOutOfRange("particle count and volume must be positive")
        return N, V

    def entropy_and_multipliers(self, E, extras, initial=None):
        N, V = self._nv(extras)
        if not E > 0:
            raise TargetOutOfRange("ideal-gas energy must be positive")
        lambdas = self.gas.multipliers(E, N, V)
        return self.gas.entropy(E, N, V), {lab: lambdas[lab] for lab in (ENERGY, *self.extra_labels)}

    def energy_range(self, extras):
        return 0.0, math.inf

    def max_entropy_point(self, extras):
        return math.inf, math.inf

    def energy_scale(self, extras):
        N, _ = self._nv(extras)
        return 1.5 * N * self.k * 300.0


# --------------------------------------------------------------------------
# energy function


@dataclass(frozen=True)
class EnergyPoint:
    energy: float
    temperature: float
    lambdas: Mapping[str, float]
    efforts: np.ndarray


@dataclass(frozen=True)
class HomogeneityReport:
    gamma: float
    energy: float
    scaled_energy: float
    deviation: float
    declared_homogeneous: bool
    threshold: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.deviation <= self.threshold


class EnergyFunction:
    """Energy ``E(S, θx)`` of a model restricted to one temperature branch.

    ``branch="positive"`` selects the increasing part of ``S(E)``; bounded
    models also admit ``"negative"``.  ``branch=None`` is only valid for
    models whose entropy is monotone in the energy.
    """

    def __init__(self, model, branch: str | None = "positive", rtol: float = 1e-10):
        if branch not in ("positive", "negative", None):
            raise ValueError(f"unknown branch {branch!r}")
        self.model = model
        self.branch = branch
        self.rtol = rtol

    @property
    def labels(self) -> tuple:
        return self.model.extra_labels

    @property
    def k(self) -> float:
        return self.model.k

    def entropy_of_energy(self, E, extras=None) -> float:
        return self.model.entropy_and_multipliers(E, extras or {})[0]

    def _entropy_tol(self, S):
        return self.rtol * max(abs(S), self.model.k)

    def _branch_interval(self, S, extras):
        E_min, E_max = self.model.energy_range(extras)
        E_star, S_max = self.model.max_entropy_point(extras)
        if math.isinf(E_max):
            if self.branch == "negative":
                raise EntropyOutOfRange("an unbounded spectrum has no negative-temperature branch")
            return E_min, math.inf, S_max, E_star
        if self.branch is None:
            raise BranchAmbiguity("entropy is not monotone in energy on a bounded spectrum; choose a branch")
        if S > S_max + self._entropy_tol(S_max):
            raise EntropyOutOfRange(f"entropy {S!r} exceeds the maximum {S_max!r}")
        if self.branch == "positive":
            return E_min, E_star, S_max, E_star
        return E_star, E_max, S_max, E_star

    def _residual(self, E, S, extras, state):
        """``±(S(E) - S)`` oriented to increase with E on the branch, plus dS/dE."""
        s, lambdas = self.model.entropy_and_multipliers(E, extras, state.get("lambdas"))
        state["lambdas"] = lambdas
        sign = -1.0 if self.branch == "negative" else 1.0
        return sign * (s - S), -lambdas[self.model.energy_label], s, lambdas

    def energy_of_entropy(self, S, extras=None, guess: EnergyPoint | None = None) -> float:
        return self.solve(MacroState(S, extras or {}), guess).energy

    def solve(self, x: MacroState, guess: EnergyPoint | None = None) -> EnergyPoint:
        """Energy, temperature, multipliers and efforts at macrostate ``x``."""
        return self.solve_state(x.entropy, dict(x.extras), guess)

    def solve_state(self, S: float, extras: dict, guess: EnergyPoint | None = None) -> EnergyPoint:
        if guess is not None and hasattr(self.model, "invert_entropy"):
            try:
                E, lambdas = self.model.invert_entropy(S, extras, guess.lambdas)
                return self._point(E, lambdas)
            except (NoConvergence, SolverError):
                pass
        lo, hi, S_max, E_star = self._branch_interval(S, extras)
        if not math.isinf(S_max) and abs(S - S_max) <= self._entropy_tol(S_max):
            E = E_star
            return self._point(E, self.model.entropy_and_multipliers(E, extras)[1])
        state = {}
        if guess is not None:
            try:
                return self._newton(S, extras, guess.energy, lo, hi, state)
            except (NoConvergence, SolverError):
                state = {}
        lo, hi = self._bracket(S, extras, lo, hi, state)
        # bisection to 1e-6 relative width, then Newton polish
        for _ in range(200):
            if hi - lo <= 1e-6 * max(abs(lo), abs(hi)):
                break
            mid = 0.5 * (lo + hi)
            if self._residual(mid, S, extras, state)[0] < 0:
                lo = mid
            else:
                hi = mid
        return self._newton(S, extras, 0.5 * (lo + hi), lo, hi, state)

    def _bracket(self, S, extras, lo, hi, state):
        if math.isinf(hi):
            ref = self.model.energy_scale(extras)
            lo_b, hi_b = ref, ref
            for _ in range(2000):
                if self._residual(lo_b, S, extras, state)[0] < 0:
                    break
                lo_b *= 0.5
                if lo_b <= 0 or lo_b < 1e-300:
                    raise EntropyOutOfRange(f"entropy {S!r} is below the attainable range")
            for _ in range(2000):
                if self._residual(hi_b, S, extras, state)[0] > 0:
                    break
                hi_b *= 2.0
                if math.isinf(hi_b):
                    raise EntropyOutOfRange(f"entropy {S!r} is above the attainable range")
            return lo_b, hi_b
        # bounded branch: step inward from the spectral edge until the entropy drops below S
        edge, inner = (lo, hi) if self.branch == "positive" else (hi, lo)
        for exponent in range(3, 16):
            probe = edge + (inner - edge) * 10.0**-exponent
            try:
                s = self._residual(probe, S, extras, state)[2]
            except TargetOutOfRange:
                continue
            if s < S:
                return (probe, inner) if self.branch == "positive" else (inner, probe)
        raise EntropyOutOfRange(f"entropy {S!r} is below the attainable range")

    def _newton(self, S, extras, E, lo, hi, state, max_iter=60):
        for _ in range(max_iter):
            r, slope, s, lambdas = self._residual(E, S, extras, state)
            if abs(s - S) <= self._entropy_tol(S) * 1e-2 or slope == 0:
                return self._point(E, lambdas)
            E_new = E - (s - S) / slope
            if E_new <= lo:
                E_new = 0.5 * (E + lo)
            elif E_new >= hi:
                E_new = 0.5 * (E + hi)
            if abs(E_new - E) <= 4 * np.finfo(float).eps * abs(E):
                return self._point(E_new, self._residual(E_new, S, extras, state)[3])
            E = E_new
        if abs(s - S) <= self._entropy_tol(S):
            return self._point(E, lambdas)
        raise NoConvergence(f"energy inversion did not converge for entropy {S!r}")

    def _point(self, E, lambdas):
        lam_e = lambdas[self.model.energy_label]
        if lam_e == 0:
            T = math.inf
        else:
            T = -1.0 / lam_e
        efforts = np.array([T, *(T * lambdas[lab] for lab in self.model.extra_labels)])
        return EnergyPoint(float(E), T, MappingProxyType(dict(lambdas)), efforts)

    def effort_vector(self, x: MacroState, guess: EnergyPoint | None = None) -> np.ndarray:
        """``[T, T λ_i]``: gradient of the energy with respect to ``[S, θx]``."""
        return self.solve(x, guess).efforts

    def homogeneity_check(self, x: MacroState, gamma: float, threshold: float = 1e-8) -> HomogeneityReport:
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        E = self.solve(x).energy
        E_scaled = self.solve(x.scaled(gamma)).energy
        deviation = abs(E_scaled - gamma * E) / abs(gamma * E) if E != 0 else abs(E_scaled)
        return HomogeneityReport(gamma, E, E_scaled, deviation, self.model.homogeneous, threshold)


__all__ = [
    "MacroState", "EnumeratedModel", "IdealGasThermo", "EnergyFunction", "EnergyPoint",
    "HomogeneityReport",
]
