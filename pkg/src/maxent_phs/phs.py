"""Port-Hamiltonian structure for quasi-static thermodynamic systems.

Ports are ordered ``storage | dissipative | external``.  The interconnection
maps the effort vector ``e = [∇H(x), z, u]`` to the flow vector
``f = [ẋ, w, y]`` with a skew-symmetric matrix, so ``eᵀ f = 0``.

For irreversible models the dissipative segment starts with the thermal
port of the converter (flow ``T_d``, effort ``-σ_i``) followed by the
mechanical/electrical dissipative ports (flow ``f_d``, effort ``e_d``).
The storage segment starts with the entropy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .energy import EnergyFunction, EnergyPoint
from .errors import (
    DimensionMismatch,
    NonpositiveTemperature,
    NotSkewSymmetric,
    PassivityViolation,
    SolverError,
)

SEGMENTS = ("storage", "dissipative", "external")
_EMPTY = np.zeros(0)


def _check_skew(S, rtol):
    defect = float(np.max(np.abs(S + S.T))) if S.size else 0.0
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if defect > rtol * scale:
        raise NotSkewSymmetric(f"matrix is not skew-symmetric: max |S + S^T| = {defect:.3e}",
                               max_defect=defect)


@dataclass(frozen=True, eq=False)
class InterconnectionMatrix:
    """Validated skew-symmetric matrix with labelled port segments."""

    entries: np.ndarray
    storage: tuple = ()
    dissipative: tuple = ()
    external: tuple = ()

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def sizes(self) -> tuple:
        return len(self.storage), len(self.dissipative), len(self.external)

    @cached_property
    def _slices(self) -> dict:
        n_s, n_d, n_e = self.sizes
        return {"storage": slice(0, n_s), "dissipative": slice(n_s, n_s + n_d),
                "external": slice(n_s + n_d, n_s + n_d + n_e)}

    def segment(self, name) -> slice:
        return self._slices[name]

    def block(self, row: str, col: str) -> np.ndarray:
        return self.entries[self.segment(row), self.segment(col)]

    @property
    def labels(self) -> tuple:
        return self.storage + self.dissipative + self.external

    def to_csv(self, path):
        header = ",".join(self.labels)
        np.savetxt(path, self.entries, delimiter=",", header=header, comments="", fmt="%.16e")


@dataclass(frozen=True, eq=False)
class InterconnectionBlocks:
    """Sub-blocks of the dissipative interconnection.

    ``J_x`` (storage), ``J_w`` (dissipative) and ``J_y`` (external) must be
    skew-symmetric; ``K``, ``G_x`` and ``G_w`` are arbitrary couplings.
    """

    J_x: np.ndarray
    K: np.ndarray
    G_x: np.ndarray
    J_w: np.ndarray
    G_w: np.ndarray
    J_y: np.ndarray

    def __post_init__(self):
        for name in ("J_x", "K", "G_x", "J_w", "G_w", "J_y"):
            arr = np.atleast_2d(np.array(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        n_x, n_w, n_y = self.J_x.shape[0], self.J_w.shape[0], self.J_y.shape[0]
        expected = {"J_x": (n_x, n_x), "K": (n_x, n_w), "G_x": (n_x, n_y),
                    "J_w": (n_w, n_w), "G_w": (n_w, n_y), "J_y": (n_y, n_y)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"block {name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("J_x", "J_w", "J_y"):
            _check_skew(getattr(self, name), 1e-14)

    @classmethod
    def zeros(cls, n_x, n_w, n_y):
        return cls(np.zeros((n_x, n_x)), np.zeros((n_x, n_w)), np.zeros((n_x, n_y)),
                   np.zeros((n_w, n_w)), np.zeros((n_w, n_y)), np.zeros((n_y, n_y)))

    @property
    def sizes(self):
        return self.J_x.shape[0], self.J_w.shape[0], self.J_y.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([
            [self.J_x, -self.K, -self.G_x],
            [self.K.T, self.J_w, -self.G_w],
            [self.G_x.T, self.G_w.T, self.J_y],
        ])


def _labels(labels, n, prefix):
    if labels is None:
        return tuple(f"{prefix}{i}" for i in range(n))
    labels = tuple(labels)
    if len(labels) != n:
        raise DimensionMismatch(f"{len(labels)} {prefix} labels for {n} ports")
    return labels


def assemble(source, storage=None, dissipative=None, external=None, rtol=1e-14) -> InterconnectionMatrix:
    """Validate an explicit matrix or assemble :class:`InterconnectionBlocks`.

    Unlabelled explicit matrices are treated as all-storage.
    """
    if isinstance(source, InterconnectionBlocks):
        S = source.matrix()
        n_s, n_d, n_e = source.sizes
    else:
        S = np.array(source, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DimensionMismatch(f"interconnection matrix must be square, got shape {S.shape}")
        n_d = 0 if dissipative is None else len(dissipative)
        n_e = 0 if external is None else len(external)
        n_s = S.shape[0] - n_d - n_e if storage is None else len(storage)
    if n_s + n_d + n_e != S.shape[0] or n_s < 0:
        raise DimensionMismatch("port segments do not cover the matrix exactly")
    _check_skew(S, rtol)
    S = S.copy()
    S.setflags(write=False)
    return InterconnectionMatrix(S, _labels(storage, n_s, "x"), _labels(dissipative, n_d, "w"),
                                 _labels(external, n_e, "u"))


# --------------------------------------------------------------------------
# dissipative laws and the thermodynamic converter


@dataclass(frozen=True, eq=False)
class DissipativeLaw:
    """Flow-to-effort map ``e_d = z_d(f_d)``, checked for passivity on every call."""

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    passive: bool = True
    name: str = "custom"
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float).reshape(self.dim)
        e = np.asarray(self.fn(f), dtype=float).reshape(self.dim)
        if self.passive:
            power = float(e @ f)
            if power < -1e-14 * max(1.0, float(np.abs(e) @ np.abs(f))):
                raise PassivityViolation(f"law {self.name!r} returned negative power {power!r}")
        return e


def linear_resistor(R) -> DissipativeLaw:
    """``e_d = R f_d`` with ``R`` a nonnegative scalar or a matrix with PSD symmetric part."""
    R = np.atleast_2d(np.array(R, dtype=float))
    if R.shape[0] != R.shape[1]:
        raise DimensionMismatch("resistance matrix must be square")
    if np.linalg.eigvalsh(0.5 * (R + R.T))[0] < -1e-14 * max(1.0, float(np.max(np.abs(R)))):
        raise PassivityViolation("resistance matrix has a negative-definite direction")
    return DissipativeLaw(lambda f: R @ f, R.shape[0], True, "linear_resistor", jacobian=lambda f: R)


def polynomial_law(coefficients: Sequence[float], dim: int = 1) -> DissipativeLaw:
    """Componentwise ``e = Σ_j c_j f^(2j+1)`` with ``c_j >= 0``."""
    c = np.array(coefficients, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("at least one coefficient is required")
    if np.any(c < 0):
        raise PassivityViolation("odd-power law needs nonnegative coefficients")
    powers = 2 * np.arange(c.size) + 1

    def fn(f):
        return (c[:, None] * f[None, :] ** powers[:, None]).sum(axis=0)

    def jac(f):
        return np.diag((c[:, None] * powers[:, None] * f[None, :] ** (powers[:, None] - 1)).sum(axis=0))

    return DissipativeLaw(fn, dim, True, "polynomial", jacobian=jac)


def zero_law(dim: int) -> DissipativeLaw:
    return DissipativeLaw(lambda f: np.zeros(dim), dim, True, "zero", jacobian=lambda f: np.zeros((dim, dim)))


@dataclass(frozen=True, eq=False)
class Converter:
    """Irreversible converter ``z([f_d, T_d]) = [z_d(f_d), -z_d(f_d)ᵀ f_d / T_d]``.

    It is conservative, ``z(w)ᵀ w = 0``: the dissipated power leaves as the
    entropy rate ``σ_i = z_d(f_d)ᵀ f_d / T_d``.
    """

    law: DissipativeLaw

    @property
    def dim(self) -> int:
        return self.law.dim + 1

    def evaluate(self, f_d, T_d) -> tuple[np.ndarray, float]:
        """Return ``(e_d, σ_i)``."""
        if not T_d > 0:
            raise NonpositiveTemperature(f"dissipation temperature must be positive, got {T_d!r}")
        e_d = self.law(f_d)
        power = float(e_d @ np.asarray(f_d, dtype=float))
        if power < 0:
            # tiny negative rounding inside the passivity tolerance
            power = 0.0 if power > -1e-14 * max(1.0, float(np.abs(e_d) @ np.abs(f_d))) else power
            if power < 0:
                raise PassivityViolation(f"negative dissipated power {power!r}")
        return e_d, power / T_d

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        e_d, sigma = self.evaluate(w[:-1], float(w[-1]))
        return np.concatenate([e_d, [-sigma]])


def make_converter(law: DissipativeLaw) -> Converter:
    return Converter(law)


# --------------------------------------------------------------------------
# Hamiltonians


class ThermoHamiltonian:
    """Internal energy ``E(S, θx)`` of an equilibrium model; state ``[S, θx...]``."""

    def __init__(self, energy_fn: EnergyFunction):
        self.energy_fn = energy_fn
        self.labels = ("entropy", *energy_fn.labels)
        self.dim = len(self.labels)

    def evaluate(self, x, cache=None):
        """Return ``(energy, efforts, cache)``; ``cache`` carries the warm start."""
        extras = {lab: float(v) for lab, v in zip(self.labels[1:], x[1:])}
        point = self.energy_fn.solve_state(float(x[0]), extras, cache)
        return point.energy, point.efforts, point

    def temperature(self, cache: EnergyPoint) -> float:
        return cache.temperature


class QuadraticStorage:
    """``H(q) = 1/2 qᵀ Q q`` (springs, inductors, masses)."""

    def __init__(self, Q, labels=None):
        self.Q = np.atleast_2d(np.array(Q, dtype=float))
        if not np.allclose(self.Q, self.Q.T):
            raise ValueError("storage matrix must be symmetric")
        self.dim = self.Q.shape[0]
        self.labels = _labels(labels, self.dim, "q")

    def evaluate(self, x, cache=None):
        x = np.asarray(x, dtype=float)
        grad = self.Q @ x
        return 0.5 * float(x @ grad), grad, None


class CompositeHamiltonian:
    """Sum of Hamiltonians on concatenated states; the first part sets the temperature."""

    def __init__(self, parts):
        self.parts = tuple(parts)
        self.labels = tuple(lab for p in self.parts for lab in p.labels)
        self.dim = sum(p.dim for p in self.parts)

    def evaluate(self, x, cache=None):
        x = np.asarray(x, dtype=float)
        caches = cache if cache is not None else (None,) * len(self.parts)
        energy, efforts, new_caches, start = 0.0, [], [], 0
        for part, c in zip(self.parts, caches):
            e, g, nc = part.evaluate(x[start:start + part.dim], c)
            energy += e
            efforts.append(g)
            new_caches.append(nc)
            start += part.dim
        return energy, np.concatenate(efforts), tuple(new_caches)


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class PortFlows:
    xdot: np.ndarray
    outputs: np.ndarray
    dissipative_flows: np.ndarray
    dissipative_efforts: np.ndarray
    sigma_i: float
    P_s: float
    P_d: float
    P_ext: float

    @property
    def balance_defect(self) -> float:
        return self.P_s + self.P_d + self.P_ext


@dataclass(eq=False)
class PhsModel:
    """Hamiltonian, interconnection and optional converter.

    ``interconnection`` may be a callable of the state returning a matrix;
    it is then revalidated (skew to 1e-12) on every evaluation.
    ``dissipation_temperature`` overrides ``T_d`` (default: the matrix row,
    i.e. the storage temperature); an override breaks exact conservation
    whenever it differs from that row.
    """

    interconnection: InterconnectionMatrix | Callable
    hamiltonian: object = None
    converter: Converter | None = None
    dissipation_temperature: Callable | None = None
    input_labels: tuple = ()
    output_labels: tuple = ()
    _cache_matrix: InterconnectionMatrix | None = field(default=None, repr=False)

    def matrix_at(self, x) -> InterconnectionMatrix:
        if isinstance(self.interconnection, InterconnectionMatrix):
            return self.interconnection
        template = self._cache_matrix
        M = np.asarray(self.interconnection(x), dtype=float)
        if template is None:
            raise ValueError("state-dependent interconnection needs a template matrix for its segments")
        if M.shape != template.entries.shape:
            raise DimensionMismatch("state-dependent matrix changed shape")
        return assemble(M, template.storage, template.dissipative, template.external, rtol=1e-12)

    @classmethod
    def state_dependent(cls, fn, template: InterconnectionMatrix, **kwargs):
        return cls(fn, _cache_matrix=template, **kwargs)

    def with_hamiltonian(self, hamiltonian) -> "PhsModel":
        return PhsModel(self.interconnection, hamiltonian, self.converter, self.dissipation_temperature,
                        self.input_labels, self.output_labels, self._cache_matrix)

    def energy(self, x, cache=None):
        return self.hamiltonian.evaluate(x, cache)

    def flows(self, x, efforts, u) -> PortFlows:
        """Flows for storage efforts ``efforts`` and external inputs ``u``."""
        M = self.matrix_at(x)
        n_s, n_d, n_e = M.sizes
        efforts = np.asarray(efforts, dtype=float)
        u = np.asarray(u, dtype=float)
        if efforts.shape != (n_s,) or u.shape != (n_e,):
            raise DimensionMismatch(
                f"{efforts.size} efforts and {u.size} inputs for {n_s} storage and {n_e} external ports")
        S = M.entries
        sigma_i = 0.0
        if n_d:
            if self.converter is None or self.converter.dim != n_d:
                raise DimensionMismatch("dissipative ports need a converter of matching dimension")
            ss, sd, se = M.segment("storage"), M.segment("dissipative"), M.segment("external")
            a = S[sd, ss] @ efforts + S[sd, se] @ u
            _, z, sigma_i = self._solve_dissipative(x, a, S[sd, sd])
            f = S @ np.concatenate([efforts, z, u])
            w = f[n_s:n_s + n_d]
            P_d = float(z @ w)
        else:
            z = w = _EMPTY
            f = S @ np.concatenate([efforts, u])
            P_d = 0.0
        xdot, y = f[:n_s], f[n_s + n_d:]
        return PortFlows(xdot, y, w, z, sigma_i, P_s=float(efforts @ xdot), P_d=P_d, P_ext=float(u @ y))

    def _dissipative_efforts(self, x, w):
        T_d = float(w[0]) if self.dissipation_temperature is None else float(self.dissipation_temperature(x))
        e_d, sigma = self.converter.evaluate(w[1:], T_d)
        return np.concatenate([[-sigma], e_d]), sigma

    def _solve_dissipative(self, x, a, B):
        """Solve ``w = a + B z(w)`` for the dissipative flows."""
        if not np.any(B):
            z, sigma = self._dissipative_efforts(x, a)
            return a, z, sigma
        from scipy.optimize import root

        def residual(w):
            return w - a - B @ self._dissipative_efforts(x, w)[0]

        sol = root(residual, a, method="hybr", options={"xtol": 1e-14})
        if not sol.success:
            raise SolverError(f"dissipative port equations did not converge: {sol.message}")
        w = sol.x
        z, sigma = self._dissipative_efforts(x, w)
        return w, z, sigma


def power_balance(model: PhsModel | InterconnectionMatrix, e, x=None) -> dict:
    """Split ``eᵀ S e`` into storage, dissipative and external powers."""
    M = model if isinstance(model, InterconnectionMatrix) else model.matrix_at(x)
    e = np.asarray(e, dtype=float)
    if e.shape != (M.dim,):
        raise DimensionMismatch(f"effort vector of length {e.size} for a {M.dim}-port matrix")
    f = M.entries @ e
    out = {name: float(e[M.segment(name)] @ f[M.segment(name)]) for name in SEGMENTS}
    result = {"P_s": out["storage"], "P_d": out["dissipative"], "P_ext": out["external"]}
    result["total"] = result["P_s"] + result["P_d"] + result["P_ext"]
    return result


# --------------------------------------------------------------------------
# builders


def build_reversible(labels: Sequence[str], external=None) -> PhsModel:
    """Open reversible system: ``ẋ = -u`` and ``y = ∇E(x)`` over the storage labels."""
    labels = tuple(labels)
    if not labels:
        raise ValueError("at least one storage label is required")
    n = len(labels)
    I = np.eye(n)
    S = np.block([[np.zeros((n, n)), -I], [I, np.zeros((n, n))]])
    external = tuple(external) if external is not None else tuple(f"{lab}_ext" for lab in labels)
    M = assemble(S, storage=labels, dissipative=(), external=external)
    return PhsModel(M, input_labels=external, output_labels=external)


def build_irreversible(blocks: InterconnectionBlocks, law: DissipativeLaw, storage=None,
                       dissipative=None, external=None) -> PhsModel:
    """Irreversible conservative model with an entropy port coupled to a converter.

    ``blocks`` describe the non-thermal ports: ``n_x`` storage ports besides
    the entropy, ``n_w = law.dim`` dissipative ports and ``n_y`` external ports
    besides the entropy exchange port.  The entropy balance is
    ``Ṡ = σ_i - σ_ext``.
    """
    n_x, n_w, n_y = blocks.sizes
    if law.dim != n_w:
        raise DimensionMismatch(f"law dimension {law.dim} differs from {n_w} dissipative ports")
    n = 1 + n_x + 1 + n_w + 1 + n_y
    S = np.zeros((n, n))
    iS, i_sig, i_ext = 0, 1 + n_x, 1 + n_x + 1 + n_w
    xs = slice(1, 1 + n_x)
    ws = slice(i_sig + 1, i_sig + 1 + n_w)
    ys = slice(i_ext + 1, n)
    S[iS, i_sig] = -1.0
    S[i_sig, iS] = 1.0
    S[iS, i_ext] = -1.0
    S[i_ext, iS] = 1.0
    S[xs, xs] = blocks.J_x
    S[xs, ws] = -blocks.K
    S[xs, ys] = -blocks.G_x
    S[ws, xs] = blocks.K.T
    S[ws, ws] = blocks.J_w
    S[ws, ys] = -blocks.G_w
    S[ys, xs] = blocks.G_x.T
    S[ys, ws] = blocks.G_w.T
    S[ys, ys] = blocks.J_y
    storage = ("entropy", *_labels(storage, n_x, "x"))
    dissipative = ("T_d", *_labels(dissipative, n_w, "f_d"))
    external = ("sigma_ext", *_labels(external, n_y, "u"))
    M = assemble(S, storage, dissipative, external)
    return PhsModel(M, converter=make_converter(law), input_labels=external, output_labels=external)


__all__ = [
    "InterconnectionMatrix", "InterconnectionBlocks", "assemble", "DissipativeLaw", "linear_resistor",
    "polynomial_law", "zero_law", "Converter", "make_converter", "ThermoHamiltonian", "QuadraticStorage",
    "CompositeHamiltonian", "PortFlows", "PhsModel", "power_balance", "build_reversible",
    "build_irreversible",
]
