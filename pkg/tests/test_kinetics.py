import numpy as np
import pytest

from polykin import fragmentation, kinetics
from polykin.characteristics import evolve_to, from_initial
from polykin.diagnostics import wasserstein_between
from polykin.errors import DomainError, LeakOverflowError, StepSizeError, ValidationError
from polykin.kinetics import SolverOptions, TimeSeries, consistency_check_dVdt, run, stable_dt, step
from polykin.rates import (
    ConstantBreakage,
    Fragmentation,
    LinearDepoly,
    NucleationSpec,
    RateModel,
    Regime,
)
from polykin.scenario import InitialGaussian, InitialZero
from polykin.state import SizeGrid, SystemState, polymer_mass
from polykin.verification import _scenario, critical_size_scenario

LIN = LinearDepoly(d0=0.5, slope=1.0)


def _model(eps=0, i0=1, B=0.0, d=LIN):
    return RateModel(d, Fragmentation(ConstantBreakage(B)), NucleationSpec(eps, i0))


def test_vacuum_state_is_invariant():
    grid = SizeGrid(2.0, 64)
    state = SystemState(grid=grid, t=0.0, V=2.0, u=np.zeros(64), M=2.0)
    out = step(state, _model(), None, dt=0.01)
    assert np.array_equal(out.u, state.u)
    assert out.V == 2.0
    assert out.t == pytest.approx(0.01)


def test_inflow_is_zero_at_exact_threshold():
    # Strict switch: at V = d(0) the nucleation flux vanishes.
    grid = SizeGrid(2.0, 64)
    state = SystemState(grid=grid, t=0.0, V=0.5, u=np.zeros(64), M=0.5)
    out = step(state, _model(eps=1, i0=2), None, dt=0.01)
    assert np.array_equal(out.u, np.zeros(64))
    state_above = SystemState(grid=grid, t=0.0, V=0.6, u=np.zeros(64), M=0.6)
    out = step(state_above, _model(eps=1, i0=2), None, dt=0.001)
    assert out.u[0] > 0
    assert np.all(out.u[1:] == 0)


def test_step_size_preconditions():
    grid = SizeGrid(2.0, 64)
    state = SystemState(grid=grid, t=0.0, V=2.0, u=np.ones(64), M=2.0 + polymer_mass(
        SystemState(grid=grid, t=0.0, V=0.0, u=np.ones(64), M=1.0)))
    with pytest.raises(StepSizeError):
        step(state, _model(), None, dt=10.0)
    op = fragmentation.assemble(grid, Fragmentation(ConstantBreakage(5.0)))
    with pytest.raises(StepSizeError):
        step(state, _model(B=5.0), op, dt=0.5, frag_stability=0.5)


def test_mass_audit_exact_along_fragmenting_run():
    model = _model(eps=1, i0=1, B=0.5)
    sc = _scenario(
        "audit", Regime.INCREASING, model,
        InitialGaussian(center=0.8, width=0.15, number=0.3),
        SizeGrid(2.0, 256),
        SolverOptions(t_end=2.0, output_stride=0.1),
        M=2.0,
    )
    series = run(sc)
    audit = np.abs(series.V + series.M1 + series.leak - series.M)
    assert np.max(audit) <= 1e-12 * series.M
    final = series.final_state
    assert np.all(final.u >= 0)
    assert final.clipped <= 1e-8 * series.M * sc.options.t_end


def test_count_never_decreases_with_nucleation_or_breakage():
    model = _model(eps=1, i0=1, B=0.5)
    sc = _scenario(
        "count", Regime.INCREASING, model,
        InitialGaussian(center=0.8, width=0.15, number=0.3),
        SizeGrid(2.0, 256),
        SolverOptions(t_end=2.0, output_stride=0.1),
        M=2.0,
    )
    series = run(sc)
    assert np.all(np.diff(series.rho) >= -1e-12)


def test_monomer_floor_in_increasing_regime():
    from polykin.kinetics import monomer_floor_slack

    sc = critical_size_scenario(512)
    series = run(sc)
    d0 = sc.model.depoly.at_zero
    tol_V = monomer_floor_slack(sc.grid, sc.model.depoly)
    assert np.min(series.V) >= d0 - tol_V
    assert np.max(series.V) <= series.M + tol_V


def test_leak_overflow_carries_grid_hint():
    # Growth past the truncation: V stays far above d(x_max), so mass is
    # pushed through the right boundary and the budget trips.
    model = _model()
    sc = _scenario(
        "leaky", Regime.INCREASING, model,
        InitialGaussian(center=0.8, width=0.1, number=0.2),
        SizeGrid(1.0, 128),
        SolverOptions(t_end=5.0, output_stride=0.1, leak_tolerance=1e-6),
        M=4.0,
    )
    with pytest.raises(LeakOverflowError) as err:
        run(sc)
    assert err.value.x_max_suggested == pytest.approx(2.0)


def test_single_cell_data_tracks_characteristics():
    # One occupied cell against the exact particle push-forward. With a
    # point profile the relative smearing is worst early on (measured about
    # 5.5 dx at t=1 at this resolution) and contracts below 2 dx once the
    # compressive flow has collapsed the peak again.
    n = 1024
    grid = SizeGrid(2.0, n)
    model = _model()
    j = int(round(1.0 / grid.dx))
    u0 = np.zeros(n)
    u0[j] = 1.0 / grid.dx
    x_j = grid.centers[j]
    M = 1.0 + x_j
    state = SystemState(grid=grid, t=0.0, V=1.0, u=u0, M=M)
    ens = from_initial(np.array([x_j]), np.array([1.0]), M)
    for t_target, limit in ((1.0, 8 * grid.dx), (3.0, 2 * grid.dx)):
        while state.t < t_target - 1e-12:
            dt = min(stable_dt(state, model, None, 0.9, 0.5), t_target - state.t)
            state = step(state, model, None, dt, cfl=0.9)
        ens = evolve_to(ens, model.depoly, t_target, dt=1e-3)
        assert wasserstein_between(state, ens) <= limit


def test_consistency_check_examples():
    model = _model()
    residuals = {}
    for n in (512, 1024):
        sc = _scenario(
            "cons", Regime.INCREASING, model,
            InitialGaussian(center=1.0, width=0.25, number=1.0),
            SizeGrid(2.0, n),
            SolverOptions(t_end=3.0, output_stride=0.05, snapshot_stride=0.05),
            M=2.0,
        )
        series = run(sc)
        residuals[n] = consistency_check_dVdt(series, model)
    assert residuals[1024] <= 1e-2
    ratio = residuals[512] / residuals[1024]
    assert 1.4 <= ratio <= 2.6


def test_consistency_check_vacuum_is_zero():
    model = _model()
    sc = _scenario(
        "vac", Regime.INCREASING, model, InitialZero(),
        SizeGrid(2.0, 64),
        SolverOptions(t_end=1.0, output_stride=0.1, snapshot_stride=0.1),
        M=2.0,
    )
    series = run(sc)
    assert consistency_check_dVdt(series, model) == 0.0


def test_consistency_check_needs_snapshots():
    model = _model()
    sc = _scenario(
        "nosnaps", Regime.INCREASING, model, InitialZero(),
        SizeGrid(2.0, 64),
        SolverOptions(t_end=1.0, output_stride=0.1),
        M=2.0,
    )
    series = run(sc)
    with pytest.raises(ValidationError):
        consistency_check_dVdt(series, model)


def test_series_csv_layout(tmp_path):
    sc = critical_size_scenario(256)
    series = run(sc)
    path = tmp_path / "series.csv"
    series.to_csv(path, meta={"version": "x"})
    lines = path.read_text().splitlines()
    header = [line for line in lines if not line.startswith("#")][0]
    assert header == "t,V,rho,M1,M2,H,leak,clipped,W2"
    assert any(line.startswith("# M=") for line in lines)


def test_solver_options_validation():
    with pytest.raises(DomainError):
        SolverOptions(t_end=1.0, output_stride=0.1, cfl=1.5)
    with pytest.raises(DomainError):
        SolverOptions(t_end=-1.0, output_stride=0.1)
    with pytest.raises(DomainError):
        SolverOptions(t_end=1.0, output_stride=0.1, frag_stability=0.0)


def test_blowup_detected():
    # Polymer mass exceeding the conserved total drives the closure
    # negative; the step must refuse rather than continue.
    from polykin.errors import BlowUpError

    grid = SizeGrid(2.0, 64)
    u = np.full(64, 2.0)
    state = SystemState(grid=grid, t=0.0, V=0.1, u=u, M=0.5)
    with pytest.raises(BlowUpError):
        step(state, _model(), None, dt=1e-4)


def test_absorbed_number_logged_in_low_monomer_regime():
    model = _model(d=LinearDepoly(d0=2.0, slope=1.0))
    sc = _scenario(
        "absorb", Regime.INCREASING, model,
        InitialGaussian(center=2.0, width=0.3, number=0.25),
        SizeGrid(4.0, 512),
        SolverOptions(t_end=6.0, output_stride=0.1),
        V0=1.0,
    )
    series = run(sc)
    final = series.final_state
    # All polymers fully depolymerize: their count leaves through size zero.
    assert final.absorbed == pytest.approx(0.25, rel=1e-3)
    assert series.V[-1] == pytest.approx(series.M, abs=1e-6)
