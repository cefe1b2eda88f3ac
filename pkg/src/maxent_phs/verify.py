"""Built-in invariant suites run by ``maxent-phs verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensembles import IdealGasModel, IsingModel, ideal_gas_state
from .errors import NotSkewSymmetric
from .maxent import (
    BOLTZMANN,
    boltzmann_distribution,
    multiplier_gradient_check,
    solve_multipliers,
    statistical_entropy,
    thermodynamic_entropy,
)
from .microstate import ConstraintSpec, accessible_set, weighted_sum
from .phs import InterconnectionBlocks, assemble, build_irreversible, build_reversible, linear_resistor, power_balance


@dataclass
class Check:
    name: str
    passed: bool
    max_deviation: float
    tolerance: float
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, deviation, tolerance, detail=""):
        deviation = float(deviation)
        self.checks.append(Check(name, bool(deviation <= tolerance), deviation, tolerance, detail))

    def lines(self):
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            extra = f" ({c.detail})" if c.detail else ""
            yield f"[{status}] {self.suite}/{c.name}: max deviation {c.max_deviation:.3e} <= {c.tolerance:.1e}{extra}"


def random_spin_instance(rng, max_spins=8):
    """Random coupled spin chain with energy and magnetization free; interior targets."""
    n = int(rng.integers(2, max_spins + 1))
    J = rng.normal(size=(n, n))
    J = np.triu(J, 1)
    J = J + J.T
    model = IsingModel(J)
    functions = [model.energy_function(), weighted_sum(label="magnetization")]
    aset = accessible_set(model.alphabet, functions, ConstraintSpec(), (n, n))
    labels = ["energy", "magnetization"][: int(rng.integers(1, 3))]
    lam = {lab: float(rng.normal(scale=0.7)) for lab in labels}
    p = boltzmann_distribution(aset, lam)
    targets = {lab: p.expectation(aset.column(lab)) for lab in labels}
    return aset, targets


def suite_ideal_gas_law(rng, samples=100) -> SuiteReport:
    report = SuiteReport("ideal-gas-law")
    worst_law = worst_energy = worst_fd = 0.0
    for _ in range(samples):
        N = float(rng.integers(1, 10**4 + 1))
        V = 10.0 ** rng.uniform(-6, 0)
        T = 10.0 ** rng.uniform(0, 4)
        gas = IdealGasModel(N, V, 6.6335e-26)
        st = ideal_gas_state(gas, T)
        worst_law = max(worst_law, abs(st.P * V / (N * BOLTZMANN * T) - 1.0))
        worst_energy = max(worst_energy, abs(st.E_bar / (1.5 * N * BOLTZMANN * T) - 1.0))
        # E = d(k ln Z)/dλ with λ = -1/T, by central difference in λ
        lam = -1.0 / T
        h = 1e-5 * abs(lam)
        fd = (gas.log_partition_at(-1.0 / (lam + h)) - gas.log_partition_at(-1.0 / (lam - h))) / (2 * h)
        worst_fd = max(worst_fd, abs(fd / st.E_bar - 1.0))
    report.add("PV/(NkT)=1", worst_law, 1e-12)
    report.add("E=3NkT/2", worst_energy, 1e-12)
    report.add("E=d(klnZ)/dlambda", worst_fd, 1e-6, "finite difference")
    return report


def suite_legendre(rng, samples=50) -> SuiteReport:
    report = SuiteReport("legendre")
    worst = 0.0
    for _ in range(samples):
        aset, targets = random_spin_instance(rng)
        sol = solve_multipliers(aset, targets)
        S = statistical_entropy(sol.distribution)
        worst = max(worst, abs(S - thermodynamic_entropy(sol)) / max(1.0, abs(S)))
    report.add("S=klnZ-sum(lambda*F)", worst, 1e-10, f"{samples} random spin systems")
    return report


def suite_gradient(rng, samples=20) -> SuiteReport:
    report = SuiteReport("gradient")
    worst = 0.0
    for _ in range(samples):
        aset, targets = random_spin_instance(rng, max_spins=6)
        sol = solve_multipliers(aset, targets)
        worst = max(worst, max(multiplier_gradient_check(sol).errors.values()))
    report.add("-dS/dF=lambda", worst, 1e-4, f"{samples} random spin systems")
    return report


def _null_space_perturbations(sol, rng, count):
    aset = sol.support
    labels = list(sol.targets)
    A = np.vstack([np.ones(aset.omega), *(aset.column(lab) for lab in labels)])
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * s[0]))
    null = vt[rank:]
    p = sol.distribution.probs
    for _ in range(count):
        direction = rng.normal(size=null.shape[0]) @ null
        # largest step keeping every probability nonnegative
        neg = direction < 0
        limit = np.min(p[neg] / -direction[neg]) if np.any(neg) else 1.0
        q = p + rng.uniform(0, 1) * limit * direction
        q = np.clip(q, 0.0, None)
        yield q / q.sum()


def suite_maximality(rng, instances=10, perturbations=1000) -> SuiteReport:
    report = SuiteReport("maximality")
    worst = -math.inf
    for _ in range(instances):
        aset, targets = random_spin_instance(rng, max_spins=6)
        sol = solve_multipliers(aset, targets)
        S_star = sol.entropy
        for q in _null_space_perturbations(sol, rng, perturbations):
            nz = q > 0
            S_q = -float(np.sum(q[nz] * np.log(q[nz])))
            worst = max(worst, S_q - S_star)
    report.add("S(q)<=S(p*)", max(worst, 0.0), 1e-9, f"{instances}x{perturbations} perturbations")
    return report


def suite_skew(rng, samples=10**4, matrices=()) -> SuiteReport:
    """Power balance on random efforts; ``matrices`` adds user-supplied matrices to check."""
    report = SuiteReport("skew")
    models = [build_reversible(("entropy", "count", "volume")).interconnection]
    n_x, n_w, n_y = 2, 2, 1
    Jx = rng.normal(size=(n_x, n_x))
    Jw = rng.normal(size=(n_w, n_w))
    Jy = rng.normal(size=(n_y, n_y))
    blocks = InterconnectionBlocks(Jx - Jx.T, rng.normal(size=(n_x, n_w)), rng.normal(size=(n_x, n_y)),
                                   Jw - Jw.T, rng.normal(size=(n_w, n_y)), Jy - Jy.T)
    models.append(build_irreversible(blocks, linear_resistor(np.eye(n_w))).interconnection)
    models.append(assemble(blocks))
    worst = 0.0
    for M in models:
        for _ in range(samples // len(models)):
            e = rng.normal(size=M.dim) * 10.0 ** rng.uniform(-3, 3)
            worst = max(worst, abs(power_balance(M, e)["total"]) / float(e @ e))
    report.add("e^T S e = 0", worst, 1e-12, f"{samples} random efforts")
    for name, entries in matrices:
        try:
            assemble(entries)
            report.add(f"{name} skew", 0.0, 1e-14)
        except NotSkewSymmetric as exc:
            report.add(f"{name} skew", exc.max_defect, 1e-14, "max |S + S^T| entry")
    return report


SUITES = {
    "ideal-gas-law": suite_ideal_gas_law,
    "legendre": suite_legendre,
    "gradient": suite_gradient,
    "maximality": suite_maximality,
    "skew": suite_skew,
}


def run_suite(name: str, seed: int = 0, **kwargs) -> SuiteReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; available: {sorted(SUITES)}")
    return SUITES[name](np.random.default_rng(seed), **kwargs)


__all__ = ["Check", "SuiteReport", "SUITES", "run_suite", "random_spin_instance"]
