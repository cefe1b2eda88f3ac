"""JSON scenario documents (schema ``version: 1``) and the objects they describe.

Top-level blocks: ``constants``, ``system``, ``constraints``, ``ensemble``,
``phs``, ``simulate``, ``verify`` and ``output``.  See the README for the
field reference.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .energy import EnergyFunction, EnumeratedModel, IdealGasThermo
from .ensembles import PLANCK, EnsembleKind, IdealGasModel, IsingModel, lattice_gas_functions
from .errors import ScenarioError
from .maxent import BOLTZMANN, InfoConstant
from .microstate import (
    DEFAULT_BUDGET,
    AccessibleSet,
    Alphabet,
    ConstraintSpec,
    accessible_set,
    count_function,
    cylinder_volume,
    quadratic_energy,
    weighted_sum,
)
from .phs import (
    CompositeHamiltonian,
    InterconnectionBlocks,
    PhsModel,
    QuadraticStorage,
    ThermoHamiltonian,
    assemble,
    build_irreversible,
    build_reversible,
    linear_resistor,
    polynomial_law,
    zero_law,
)

TOP_LEVEL = {"version", "description", "constants", "system", "constraints", "ensemble", "phs",
             "simulate", "verify", "output"}


def _get(block, key, path, kind=None, default=...):
    if not isinstance(block, dict):
        raise ScenarioError(f"{path}: expected an object")
    if key not in block:
        if default is ...:
            raise ScenarioError(f"{path}.{key}: required field is missing")
        return default
    value = block[key]
    if kind is not None and not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ScenarioError(f"{path}.{key}: expected {names}, got {type(value).__name__}")
    return value


def _number(block, key, path, default=..., positive=False):
    if not isinstance(block, dict):
        raise ScenarioError(f"{path}: expected an object")
    if key not in block:
        if default is ...:
            raise ScenarioError(f"{path}.{key}: required field is missing")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{path}.{key}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ScenarioError(f"{path}.{key}: must be positive, got {value!r}")
    return float(value)


def load(path) -> dict:
    """Read and validate the top level of a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return validate(doc)


def validate(doc) -> dict:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: top level must be an object")
    if doc.get("version") != 1:
        raise ScenarioError(f"scenario.version: expected 1, got {doc.get('version')!r}")
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ScenarioError(f"scenario: unknown blocks {sorted(unknown)}")
    free = doc.get("constraints", {}).get("free") if isinstance(doc.get("constraints"), dict) else None
    ensemble = doc.get("ensemble")
    if free and ensemble and "intensives" in ensemble:
        raise ScenarioError("scenario: give either constraints.free targets or ensemble.intensives, not both")
    return doc


# --------------------------------------------------------------------------
# constants


def info_constant(doc, k_override=None) -> float:
    if k_override is not None:
        return InfoConstant(float(k_override)).k
    block = doc.get("constants", {})
    if "k" in block and "base" in block:
        raise ScenarioError("constants: give either k or base")
    if "base" in block:
        return InfoConstant.from_base(_number(block, "base", "constants", positive=True)).k
    k = block.get("k", 1.0)
    if k == "boltzmann":
        return BOLTZMANN
    if isinstance(k, bool) or not isinstance(k, (int, float)) or not k > 0:
        raise ScenarioError("constants.k: expected a positive number or \"boltzmann\"")
    return float(k)


def planck(doc) -> float:
    h = doc.get("constants", {}).get("h", PLANCK)
    if h == "planck":
        return PLANCK
    if isinstance(h, bool) or not isinstance(h, (int, float)) or not h > 0:
        raise ScenarioError("constants.h: expected a positive number")
    return float(h)


# --------------------------------------------------------------------------
# systems


@dataclass
class EnumeratedSystem:
    aset: AccessibleSet
    spec: ConstraintSpec


@dataclass
class IdealGasSystem:
    gas: IdealGasModel


def _alphabet(block, path) -> Alphabet:
    symbols = _get(block, "symbols", path, list)
    payloads = block.get("payloads")
    if payloads is not None and not isinstance(payloads, list):
        raise ScenarioError(f"{path}.payloads: expected a list")
    try:
        return Alphabet(tuple(s if not isinstance(s, list) else tuple(s) for s in symbols),
                        name=str(block.get("name", "P")), payloads=None if payloads is None else tuple(payloads))
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _matrix(value, path):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: expected a numeric matrix") from exc
    if arr.ndim != 2:
        raise ScenarioError(f"{path}: expected a 2-D matrix")
    return arr


def _function(block, path, length, alphabet):
    kind = _get(block, "kind", path, str)
    label = str(block.get("label", {"count": "count", "cylinder_volume": "volume"}.get(kind, "energy")))
    if kind == "count":
        return [count_function(label)]
    if kind == "weighted_sum":
        weights = block.get("weights")
        if weights is not None:
            if not isinstance(weights, dict):
                raise ScenarioError(f"{path}.weights: expected an object mapping symbols to numbers")
            # JSON object keys are strings; match them to symbols by their text
            try:
                weights = {sym: float(weights[str(sym)]) for sym in alphabet.symbols}
            except KeyError as exc:
                raise ScenarioError(f"{path}.weights: no weight for symbol {exc.args[0]}") from exc
        return [weighted_sum(weights, label)]
    if kind == "quadratic":
        return [quadratic_energy(_matrix(_get(block, "J", path), f"{path}.J"), label)]
    if kind == "ising":
        try:
            return [IsingModel(_matrix(_get(block, "J", path), f"{path}.J")).energy_function(label)]
        except ValueError as exc:
            raise ScenarioError(f"{path}.J: {exc}") from exc
    if kind == "ising_ring":
        n = int(block.get("n", length))
        return [IsingModel.ring(n, _number(block, "coupling", path, 1.0)).energy_function(label)]
    if kind == "cylinder_volume":
        return [cylinder_volume(_number(block, "area", path, 1.0), label,
                                str(block.get("encoding", "heights")), _number(block, "unit", path, 1.0))]
    if kind == "lattice_gas":
        return lattice_gas_functions(int(block.get("sites", length)), _number(block, "bond", path, 1.0),
                                     _number(block, "field", path, 0.5), _number(block, "area", path, 1.0))
    raise ScenarioError(f"{path}.kind: unknown function kind {kind!r}")


def _constraint_spec(doc) -> ConstraintSpec:
    block = doc.get("constraints", {})
    if not isinstance(block, dict):
        raise ScenarioError("constraints: expected an object")
    fixed = block.get("fixed", {})
    free = block.get("free", {})
    if not isinstance(fixed, dict) or not isinstance(free, dict):
        raise ScenarioError("constraints.fixed and constraints.free must be objects")
    try:
        return ConstraintSpec(fixed, free)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"constraints: {exc}") from exc


def build_system(doc, budget=None, k=1.0, h=PLANCK):
    block = _get(doc, "system", "scenario", dict)
    if "ideal_gas" in block:
        g = _get(block, "ideal_gas", "system", dict)
        try:
            gas = IdealGasModel(_number(g, "N", "system.ideal_gas", positive=True),
                                _number(g, "V", "system.ideal_gas", positive=True),
                                _number(g, "m_atom", "system.ideal_gas", positive=True),
                                h=h, k=k, gibbs_correction=g.get("gibbs_correction", False))
        except ValueError as exc:
            raise ScenarioError(f"system.ideal_gas: {exc}") from exc
        return IdealGasSystem(gas)
    spec = _constraint_spec(doc)
    if "table" in block:
        table = _get(block, "table", "system", dict)
        aset = AccessibleSet.from_table(table)
        spec.check_labels(aset.labels)
        return EnumeratedSystem(aset, spec)
    alphabet = _alphabet(_get(block, "alphabet", "system", dict), "system.alphabet")
    length = _get(block, "length", "system", (int, list))
    if isinstance(length, list):
        if len(length) != 2:
            raise ScenarioError("system.length: expected an integer or [min, max]")
        length_range = (int(length[0]), int(length[1]))
    else:
        length_range = (length, length)
    functions = []
    for i, fb in enumerate(_get(block, "functions", "system", list)):
        functions.extend(_function(fb, f"system.functions[{i}]", length_range[1], alphabet))
    budget = budget if budget is not None else int(block.get("budget", DEFAULT_BUDGET))
    try:
        aset = accessible_set(alphabet, functions, spec, length_range, budget)
    except ValueError as exc:
        raise ScenarioError(f"system: {exc}") from exc
    return EnumeratedSystem(aset, spec)


def ensemble(doc):
    block = doc.get("ensemble")
    if block is None:
        return None, None
    kind = EnsembleKind.from_tag(_get(block, "kind", "ensemble", str)) if "kind" in block else None
    intensives = block.get("intensives", {})
    if not isinstance(intensives, dict):
        raise ScenarioError("ensemble.intensives: expected an object")
    return kind, intensives


# --------------------------------------------------------------------------
# port-Hamiltonian models


def _law(block, dim):
    kind = _get(block, "kind", "phs.law", str)
    if kind == "linear_resistor":
        R = block.get("R", 1.0)
        return linear_resistor(R if not isinstance(R, list) else _matrix(R, "phs.law.R"))
    if kind == "polynomial":
        return polynomial_law(_get(block, "coefficients", "phs.law", list), dim)
    if kind == "zero":
        return zero_law(dim)
    raise ScenarioError(f"phs.law.kind: unknown law {kind!r}; use linear_resistor, polynomial or zero")


def _blocks(block, n_x, n_w, n_y):
    zero = InterconnectionBlocks.zeros(n_x, n_w, n_y)
    parts = {}
    for name in ("J_x", "K", "G_x", "J_w", "G_w", "J_y"):
        default = getattr(zero, name)
        parts[name] = _matrix(block[name], f"phs.blocks.{name}") if name in block else default
        if parts[name].size == 0:
            parts[name] = default
    try:
        return InterconnectionBlocks(**parts)
    except ValueError as exc:
        raise ScenarioError(f"phs.blocks: {exc}") from exc


def build_energy_function(system, extras, k=1.0, branch="positive") -> EnergyFunction:
    if isinstance(system, IdealGasSystem):
        return EnergyFunction(IdealGasThermo(system.gas, tuple(extras)), branch)
    missing = set(extras) - set(system.aset.labels)
    if missing:
        raise ScenarioError(f"phs.extras: undeclared functions {sorted(missing)}")
    return EnergyFunction(EnumeratedModel(system.aset, "energy", tuple(extras), k=k), branch)


def build_phs(doc, system, k=1.0) -> PhsModel:
    block = _get(doc, "phs", "scenario", dict)
    kind = _get(block, "kind", "phs", str)
    extras = tuple(block.get("extras", ()))
    thermo = ThermoHamiltonian(build_energy_function(system, extras, k, block.get("branch", "positive")))
    if kind == "reversible":
        model = build_reversible(("entropy", *extras))
        return model.with_hamiltonian(thermo)
    if kind == "irreversible":
        storage = tuple(block.get("storage", ()))
        q = block.get("storage_matrix")
        n_x = len(extras) + len(storage)
        dissipative = tuple(block.get("dissipative", ("f_d",)))
        external = tuple(block.get("external", ()))
        law = _law(_get(block, "law", "phs", dict), len(dissipative))
        blocks = _blocks(block.get("blocks", {}), n_x, len(dissipative), len(external))
        model = build_irreversible(blocks, law, (*extras, *storage), dissipative, external)
        parts = [thermo]
        if storage:
            if q is None:
                raise ScenarioError("phs.storage_matrix: required when extra storage ports are declared")
            parts.append(QuadraticStorage(_matrix(q, "phs.storage_matrix"), storage))
        return model.with_hamiltonian(CompositeHamiltonian(parts) if len(parts) > 1 else thermo)
    if kind == "matrix":
        entries = _matrix(_get(block, "entries", "phs"), "phs.entries")
        M = assemble(entries, ("entropy", *extras), (), tuple(_get(block, "external", "phs", list)))
        return PhsModel(M, thermo, input_labels=M.external, output_labels=M.external)
    raise ScenarioError(f"phs.kind: unknown kind {kind!r}; use reversible, irreversible or matrix")


def output_settings(doc, out_override=None, format_override=None) -> dict:
    block = doc.get("output", {})
    if not isinstance(block, dict):
        raise ScenarioError("output: expected an object")
    fmt = format_override or block.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ScenarioError(f"output.format: expected csv or json, got {fmt!r}")
    return {
        "dir": out_override or block.get("dir"),
        "format": fmt,
        "include_probs": bool(block.get("include_probs", False)),
        "max_probs": int(block.get("max_probs", 1 << 16)),
    }
