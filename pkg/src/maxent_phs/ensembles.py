"""Closed-form statistical ensembles, the analytic ideal gas and Ising spin models."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import digamma

from .errors import DimensionMismatch, MissingIntensive, SolverError
from .maxent import BOLTZMANN, Distribution, _k, boltzmann_distribution
from .microstate import (
    AccessibleSet,
    Alphabet,
    CharFunction,
    Microstate,
    cylinder_volume,
    quadratic_energy,
)

PLANCK = 6.62607015e-34

ENERGY, COUNT, VOLUME = "energy", "count", "volume"


class EnsembleKind(enum.Enum):
    """Rows of the standard ensemble table.

    Each value is ``(tag, fixed labels, free labels, thermal contact)``.
    Adiabatic rows also hold the entropy fixed.
    """

    CANONICAL = ("canonical", (COUNT, VOLUME), (ENERGY,), True)
    ISOTHERMAL_ISOBARIC = ("isothermal_isobaric", (COUNT,), (ENERGY, VOLUME), True)
    GRAND_CANONICAL = ("grand_canonical", (VOLUME,), (ENERGY, COUNT), True)
    UNNAMED_TPMU = ("unnamed_TPmu", (), (ENERGY, COUNT, VOLUME), True)
    MICROCANONICAL = ("microcanonical", (ENERGY, COUNT, VOLUME), (), False)
    ISOENTHALPIC_ISOBARIC = ("isoenthalpic_isobaric", (COUNT,), (ENERGY, VOLUME), False)
    UNNAMED_VS = ("unnamed_VS", (VOLUME,), (ENERGY, COUNT), False)
    UNNAMED_S = ("unnamed_S", (), (ENERGY, COUNT, VOLUME), False)

    @property
    def tag(self) -> str:
        return self.value[0]

    @property
    def fixed(self) -> tuple:
        return self.value[1]

    @property
    def free(self) -> tuple:
        return self.value[2]

    @property
    def thermal_contact(self) -> bool:
        return self.value[3]

    @classmethod
    def from_tag(cls, tag: str) -> "EnsembleKind":
        for kind in cls:
            if kind.tag == tag:
                return kind
        raise ValueError(f"unknown ensemble {tag!r}; expected one of {[k.tag for k in cls]}")


def _require(intensives, name, kind):
    if name not in intensives or intensives[name] is None:
        raise MissingIntensive(f"ensemble {kind.tag!r} needs intensive {name!r}")
    return float(intensives[name])


def lambdas_from_intensives(kind: EnsembleKind, intensives: Mapping[str, float]) -> dict:
    """Multipliers ``λ_energy = -1/T``, ``λ_count = mu/T``, ``λ_volume = -P/T`` for the free labels."""
    if not kind.thermal_contact:
        return {}
    T = _require(intensives, "T", kind)
    if not T > 0:
        raise ValueError("temperature must be positive")
    out = {ENERGY: -1.0 / T}
    if COUNT in kind.free:
        out[COUNT] = _require(intensives, "mu", kind) / T
    if VOLUME in kind.free:
        out[VOLUME] = -_require(intensives, "P", kind) / T
    return out


def ensemble_exponent(kind: EnsembleKind, intensives: Mapping[str, float],
                      values: Mapping[str, float], k=1.0) -> float:
    """Unnormalized log-weight of one microstate; zero for adiabatic rows."""
    if not kind.thermal_contact:
        return 0.0
    k = _k(k)
    T = _require(intensives, "T", kind)
    if not T > 0:
        raise ValueError("temperature must be positive")
    numerator = float(values[ENERGY])
    if VOLUME in kind.free:
        numerator += _require(intensives, "P", kind) * float(values[VOLUME])
    if COUNT in kind.free:
        numerator -= _require(intensives, "mu", kind) * float(values[COUNT])
    return -numerator / (k * T)


def ensemble_distribution(kind: EnsembleKind, aset: AccessibleSet, intensives: Mapping[str, float],
                          k=1.0) -> Distribution:
    """Equilibrium distribution of ``kind`` over ``aset``; uniform without thermal contact."""
    if not kind.thermal_contact:
        return Distribution.uniform(aset.omega, aset)
    return boltzmann_distribution(aset, lambdas_from_intensives(kind, intensives), k)


def microcanonical_entropy(omega: int, k=1.0) -> float:
    if omega < 1:
        raise ValueError("omega must be >= 1")
    return _k(k) * math.log(omega)


# --------------------------------------------------------------------------
# ideal gas


@dataclass(frozen=True)
class IdealGasState:
    T: float
    E_bar: float
    S: float
    P: float
    log_partition: float


@dataclass(frozen=True)
class IdealGasModel:
    """Monatomic ideal gas with ``Z = V^N (2 pi m k T / h^2)^(3N/2)``.

    ``gibbs_correction`` divides ``Z`` by ``N!``: ``True`` or ``"stirling"``
    uses ``ln N! ~ N ln N - N`` (exactly homogeneous, Sackur-Tetrode form),
    ``"exact"`` uses ``lgamma(N + 1)``.  ``N`` may be non-integer so the
    model can be scaled continuously.
    """

    N: float
    V: float
    m_atom: float
    h: float = PLANCK
    k: float = BOLTZMANN
    gibbs_correction: bool | str = False

    def __post_init__(self):
        if self.gibbs_correction not in (False, True, "stirling", "exact"):
            raise ValueError(f"gibbs_correction must be False, True, 'stirling' or 'exact', "
                             f"got {self.gibbs_correction!r}")
        for name in ("N", "V", "m_atom", "h", "k"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def thermal_argument(self, T) -> float:
        """``2 pi m k T / h^2`` (units m^-2)."""
        return 2.0 * math.pi * self.m_atom * self.k * T / self.h**2

    def log_partition_at(self, T, N=None, V=None) -> float:
        """``k ln Z`` at temperature ``T`` and optional override of ``N`` and ``V``."""
        if not T > 0:
            raise ValueError("temperature must be positive")
        N = self.N if N is None else N
        V = self.V if V is None else V
        value = N * math.log(V) + 1.5 * N * math.log(self.thermal_argument(T))
        value -= self._log_factorial(N)
        return self.k * value

    def _log_factorial(self, N) -> float:
        if self.gibbs_correction == "exact":
            return math.lgamma(N + 1.0)
        if self.gibbs_correction:
            return N * math.log(N) - N
        return 0.0

    def temperature(self, E, N=None) -> float:
        N = self.N if N is None else N
        return E / (1.5 * N * self.k)

    def entropy(self, E, N=None, V=None) -> float:
        """Entropy as a function of mean energy, particle count and volume."""
        if not E > 0:
            raise SolverError("ideal-gas energy must be positive")
        N = self.N if N is None else N
        T = self.temperature(E, N)
        return self.log_partition_at(T, N, V) + E / T

    def multipliers(self, E, N=None, V=None) -> dict:
        """``λ_i = -∂S/∂F̄_i`` for energy, count and volume."""
        N = self.N if N is None else N
        V = self.V if V is None else V
        T = self.temperature(E, N)
        dS_dN = self.k * (math.log(V) + 1.5 * math.log(self.thermal_argument(T)))
        if self.gibbs_correction == "exact":
            dS_dN -= self.k * float(digamma(N + 1.0))
        elif self.gibbs_correction:
            dS_dN -= self.k * math.log(N)
        return {ENERGY: -1.0 / T, COUNT: -dS_dN, VOLUME: -N * self.k / V}

    def energy_at(self, T, N=None) -> float:
        N = self.N if N is None else N
        return 1.5 * N * self.k * T


def ideal_gas_log_partition(model: IdealGasModel, T: float) -> float:
    return model.log_partition_at(T)


def ideal_gas_state(model: IdealGasModel, T: float) -> IdealGasState:
    lnz = model.log_partition_at(T)
    E = model.energy_at(T)
    return IdealGasState(T=T, E_bar=E, S=lnz + E / T, P=model.N * model.k * T / model.V,
                         log_partition=lnz)


# --------------------------------------------------------------------------
# spin and lattice models

SPINS = Alphabet((-1, 1), name="spin")


@dataclass(frozen=True, eq=False)
class IsingModel:
    """Spins ``±1`` with symmetric zero-diagonal coupling ``J``."""

    J: np.ndarray

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DimensionMismatch("coupling matrix must be square")
        if not np.allclose(J, J.T, rtol=0, atol=1e-14):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(J) != 0):
            raise ValueError("coupling matrix must have a zero diagonal")
        J.setflags(write=False)
        object.__setattr__(self, "J", J)

    @classmethod
    def ring(cls, n: int, coupling: float = 1.0) -> "IsingModel":
        """Nearest-neighbour ring; for ``n == 2`` the single bond is counted once."""
        if n < 2:
            raise ValueError("a ring needs at least two spins")
        J = np.zeros((n, n))
        for i in range(n):
            j = (i + 1) % n
            J[i, j] = J[j, i] = coupling
        return cls(J)

    @property
    def size(self) -> int:
        return self.J.shape[0]

    @property
    def alphabet(self) -> Alphabet:
        return SPINS

    def energy_function(self, label=ENERGY) -> CharFunction:
        return quadratic_energy(self.J, label)


def ising_energy(m: Microstate, model: IsingModel) -> float:
    """``-1/2 m^T J m``; the word length must equal the number of spins."""
    if len(m) != model.size:
        raise DimensionMismatch(f"word of length {len(m)} for a {model.size}-spin model")
    v = m.payloads()
    return -0.5 * float(v @ model.J @ v)


OCCUPANCY = Alphabet((0, 1), name="occupancy")


def lattice_gas_functions(n_sites: int, bond: float = 1.0, field: float = 0.5,
                          area: float = 1.0) -> list[CharFunction]:
    """Energy, particle count and piston volume of a vertical column of sites.

    Energy is ``-bond * Σ n_i n_{i+1} + field * Σ (i + 1) n_i``; the volume is
    the cylinder closed at the highest occupied site.
    """
    heights = np.arange(1, n_sites + 1, dtype=float)

    def batch(idx, alphabet):
        occ = alphabet.payload_array[idx]
        L = occ.shape[1]
        pair = np.sum(occ[:, :-1] * occ[:, 1:], axis=1) if L > 1 else np.zeros(occ.shape[0])
        return -bond * pair + field * occ @ heights[:L]

    def evaluator(m):
        idx = np.array([m.alphabet.index(s) for s in m.word], dtype=np.int64).reshape(1, -1)
        return float(batch(idx, m.alphabet)[0])

    energy = CharFunction(ENERGY, evaluator, extensive=False, batch=batch, max_length=n_sites)
    count = CharFunction(COUNT, lambda m: float(sum(m.payloads())), extensive=True,
                         batch=lambda idx, a: a.payload_array[idx].sum(axis=1))
    volume = cylinder_volume(area, VOLUME, encoding="sites")
    return [energy, count, volume]


__all__ = [
    "EnsembleKind", "lambdas_from_intensives", "ensemble_exponent", "ensemble_distribution",
    "microcanonical_entropy", "IdealGasModel", "IdealGasState", "ideal_gas_log_partition",
    "ideal_gas_state", "IsingModel", "ising_energy", "lattice_gas_functions", "SPINS",
    "OCCUPANCY", "PLANCK", "ENERGY", "COUNT", "VOLUME",
]
