import math

import numpy as np
import pytest

from maxent_phs.energy import EnergyFunction, EnumeratedModel, IdealGasThermo
from maxent_phs.ensembles import IdealGasModel
from maxent_phs.errors import ScenarioError, StateOutOfDomain
from maxent_phs.microstate import AccessibleSet
from maxent_phs.phs import (
    CompositeHamiltonian,
    InterconnectionBlocks,
    QuadraticStorage,
    ThermoHamiltonian,
    build_irreversible,
    build_reversible,
    linear_resistor,
)
from maxent_phs.sim import InputSignal, adiabat_column, couple_and_equilibrate, evaluate, run, step

TWO_STATE = AccessibleSet.from_table({"energy": [0.0, 1.0]})


def gas(N=100.0, V=1.0):
    return IdealGasModel(N, V, 1.0, h=1.0, k=1.0)


def reversible_gas(extras=(), N=100.0, V=1.0):
    thermo = ThermoHamiltonian(EnergyFunction(IdealGasThermo(gas(N, V), extras)))
    return build_reversible(("entropy", *extras)).with_hamiltonian(thermo)


def two_state_model():
    thermo = ThermoHamiltonian(EnergyFunction(EnumeratedModel(TWO_STATE)))
    return build_reversible(("entropy",)).with_hamiltonian(thermo)


def braked_mass(R=2.0):
    b = InterconnectionBlocks.zeros(1, 1, 0)
    blocks = InterconnectionBlocks(b.J_x, [[1.0]], b.G_x, b.J_w, b.G_w, b.J_y)
    model = build_irreversible(blocks, linear_resistor(R), storage=("momentum",))
    thermo = ThermoHamiltonian(EnergyFunction(IdealGasThermo(gas(), ())))
    return model.with_hamiltonian(CompositeHamiltonian([thermo, QuadraticStorage([[1.0]], ("momentum",))]))


def gas_entropy_at(T, N=100.0, V=1.0):
    g = gas(N, V)
    return EnergyFunction(IdealGasThermo(g, ())).entropy_of_energy(g.energy_at(T))


def two_state_entropy_at(T):
    q = math.exp(-1 / T) / (1 + math.exp(-1 / T))
    return -(q * math.log(q) + (1 - q) * math.log(1 - q))


def test_input_signal_forms():
    sig = InputSignal({"a": 2.0, "b": lambda t: 3 * t, "c": ([0.0, 1.0], [0.0, 10.0])})
    assert sig.at(0.5, ("a", "b", "c", "d")).tolist() == [2.0, 1.5, 5.0, 0.0]
    assert sig.at(5.0, ("a", "b", "c"))[2] == 10.0
    with pytest.raises(ScenarioError):
        sig.at(0.0, ("a", "b"))
    with pytest.raises(ScenarioError):
        InputSignal({"a": ([1.0, 0.0], [0.0, 1.0])})
    with pytest.raises(ScenarioError):
        InputSignal({"a": float("nan")})


def test_zero_input_keeps_state():
    S0 = gas_entropy_at(2.0)
    ledger = run(reversible_gas(), InputSignal(), 1.0, 0.1, [S0])
    assert np.all(ledger.column("entropy") == S0)
    assert ledger.energy_defect == 0.0


def test_constant_entropy_exchange_is_linear():
    S0 = gas_entropy_at(2.0)
    ledger = run(reversible_gas(), InputSignal({"entropy_ext": 5.0}), 2.0, 0.25, [S0])
    t = np.array(ledger.times)
    assert ledger.column("entropy") == pytest.approx(S0 - 5.0 * t, rel=1e-14)
    assert ledger.entropy_exchange_integral == pytest.approx(10.0, rel=1e-14)
    assert ledger.times[-1] == pytest.approx(2.0)


def test_last_step_shortened():
    ledger = run(reversible_gas(), InputSignal(), 1.0, 0.3, [gas_entropy_at(1.0)])
    assert len(ledger.times) == 5 and ledger.times[-1] == pytest.approx(1.0, abs=1e-15)


def test_run_rejects_bad_steps():
    for t_end, dt in ((1.0, 0.0), (0.0, 0.1), (1.0, math.inf)):
        with pytest.raises(ValueError):
            run(reversible_gas(), InputSignal(), t_end, dt, [gas_entropy_at(1.0)])


def test_resistor_momentum_decay_and_entropy_growth():
    model = braked_mass()
    x0 = [gas_entropy_at(1.0), 3.0]
    ledger = run(model, InputSignal(), 2.0, 1e-3, x0)
    t = np.array(ledger.times)
    # dp/dt = -R p independently of the gas state
    assert ledger.column("momentum") == pytest.approx(3.0 * np.exp(-2.0 * t), abs=1e-5)
    S = ledger.column("entropy")
    assert np.all(np.diff(S) > 0)
    assert min(ledger.sigma_i[1:]) > 0
    assert abs(ledger.energies[-1] - ledger.energies[0]) <= 1e-5
    assert ledger.max_balance_ratio() <= 1e-9
    assert ledger.entropy_production_integral == pytest.approx(S[-1] - S[0], rel=1e-9)


def test_midpoint_is_second_order():
    x0 = [gas_entropy_at(1.0), 3.0]
    errors = []
    for dt in (0.02, 0.01, 0.005):
        ledger = run(braked_mass(), InputSignal(), 1.0, dt, x0)
        errors.append(abs(ledger.column("momentum")[-1] - 3.0 * math.exp(-2.0)))
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    assert all(3.6 <= r <= 4.4 for r in ratios)


def test_adiabatic_expansion_invariant():
    model = reversible_gas(("count", "volume"), N=1000.0)
    x0 = [gas_entropy_at(1.0, N=1000.0), 1000.0, 1.0]
    ledger = run(model, InputSignal({"volume_ext": -1.0}), 1.0, 0.01, x0)
    inv = adiabat_column(ledger)
    assert ledger.column("volume")[-1] == pytest.approx(2.0, rel=1e-14)
    assert np.max(np.abs(inv / inv[0] - 1)) <= 1e-9
    assert np.all(ledger.column("entropy") == ledger.column("entropy")[0])
    # work done by the gas equals the energy it loses, up to midpoint quadrature error
    assert abs(ledger.energy_defect) <= 1e-5 * abs(ledger.energies[0])


def test_step_splits_on_domain_exit():
    model = two_state_model()
    start = evaluate(model, [0.3])

    def u_of_t(t):
        # entropy injection that would overshoot ln 2 over a full unit step
        return np.array([-10.0 if t < 0.01 else 0.0])

    results = step(model, start, u_of_t, 0.0, 1.0)
    assert len(results) > 1
    assert sum(r.dt for r in results) == pytest.approx(1.0, rel=1e-15)
    assert 0.3 <= results[-1].end.x[0] < math.log(2)


def test_step_gives_up_after_halvings():
    model = two_state_model()
    start = evaluate(model, [0.6])
    with pytest.raises(StateOutOfDomain):
        step(model, start, lambda t: np.array([-1.0]), 0.0, 1.0)


def test_step_rejects_nonpositive_dt():
    model = two_state_model()
    with pytest.raises(ValueError):
        step(model, evaluate(model, [0.3]), lambda t: np.zeros(1), 0.0, 0.0)


def test_coupling_equal_temperatures_stay_put():
    S = two_state_entropy_at(2.0)
    report = couple_and_equilibrate(two_state_model(), two_state_model(), 0.5, 1.0, 0.1, [S], [S])
    assert np.all(report.heat_flows == 0.0)
    assert np.all(report.temperature_gap == 0.0)


def test_coupling_zero_conductance_isolates():
    Sa, Sb = two_state_entropy_at(1.0), two_state_entropy_at(3.0)
    report = couple_and_equilibrate(two_state_model(), two_state_model(), 0.0, 1.0, 0.1, [Sa], [Sb])
    assert np.all(report.ledger_a.column("entropy") == Sa)
    assert np.all(report.ledger_b.column("entropy") == Sb)
    assert report.terminal_gap == pytest.approx(-2.0, rel=1e-9)


def test_coupling_relaxes_and_is_symmetric():
    Sa, Sb = two_state_entropy_at(1.0), two_state_entropy_at(3.0)
    ab = couple_and_equilibrate(two_state_model(), two_state_model(), 0.5, 10.0, 0.01, [Sa], [Sb])
    ba = couple_and_equilibrate(two_state_model(), two_state_model(), 0.5, 10.0, 0.01, [Sb], [Sa])
    assert ab.hot_to_cold and ab.entropy_nondecreasing
    assert ab.energy_drift <= 5e-4
    assert abs(ab.terminal_gap) < 1e-3
    assert ab.ledger_a.effort_array[-1, 0] == pytest.approx(ba.ledger_b.effort_array[-1, 0], rel=1e-12)
    assert ab.heat_flows == pytest.approx(-ba.heat_flows, rel=1e-12)


def test_coupling_energy_drift_second_order():
    Sa, Sb = two_state_entropy_at(1.0), two_state_entropy_at(3.0)
    drifts = [couple_and_equilibrate(two_state_model(), two_state_model(), 0.5, 4.0, dt, [Sa], [Sb]).energy_drift
              for dt in (0.02, 0.01)]
    assert 3.5 <= drifts[0] / drifts[1] <= 4.5


def test_coupling_rejects_bad_arguments():
    S = [two_state_entropy_at(1.0)]
    with pytest.raises(ValueError):
        couple_and_equilibrate(two_state_model(), two_state_model(), -1.0, 1.0, 0.1, S, S)
    with pytest.raises(ValueError):
        couple_and_equilibrate(two_state_model(), two_state_model(), 1.0, 1.0, 0.0, S, S)


def test_coupling_domain_exit():
    # a huge conductance drives the cold system past its entropy maximum
    Sa, Sb = two_state_entropy_at(0.2), two_state_entropy_at(50.0)
    with pytest.raises(StateOutOfDomain):
        couple_and_equilibrate(two_state_model(), two_state_model(), 1e3, 1.0, 0.5, [Sb], [Sa])


def test_ledger_outputs(tmp_path):
    ledger = run(braked_mass(), InputSignal(), 0.1, 0.01, [gas_entropy_at(1.0), 1.0])
    ledger.add_column("marker", range(len(ledger.times)))
    path = tmp_path / "traj.csv"
    ledger.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == ledger.headers()
    assert len(lines) == len(ledger.times) + 1
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data[:, 0] == pytest.approx(ledger.times, rel=1e-15)
    summary = ledger.summary()
    assert summary["steps"] == 10 and summary["min_sigma_i"] == 0.0
    with pytest.raises(ValueError):
        ledger.add_column("short", [1.0])
