import math

import numpy as np
import pytest

from kinelim.errors import ConfigError, NonContraction, StepRejected
from kinelim.io import read_csv, read_snapshots
from kinelim.kinetic import (
    KineticSolver,
    RunConfig,
    initial_fluctuation,
    picard_solve,
    run_simulation,
)
from kinelim.macro import project_P
from kinelim.nsf import ic_from_config

TG = {"kind": "taylor_green", "amplitude": 0.1, "theta_amplitude": 0.05}


def small(**kw):
    base = dict(eps=0.2, dt=0.004, t_end=0.1, output_dt=0.05, nx=8, nv=8, cutoff=4.5, tol_mass=1e-5,
                kernel={"model": "bgk", "tau": 0.5}, initial=dict(TG), snapshots="full", energy_every=1)
    base.update(kw)
    return RunConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        small(eps=0.0)
    with pytest.raises(ConfigError):
        small(t_end=0.1, output_dt=0.03)
    with pytest.raises(ConfigError):
        small(relaxation="leapfrog")
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"run": {"eps": 0.1, "dt": 0.01, "speed": 2}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"solver": {}})
    cfg = RunConfig.from_dict({"run": {"eps": 0.1, "dt": 0.01, "t_end": 0.5, "output_dt": 0.25},
                               "space": {"n": 8}, "velocity": {"n": 8}, "energy": {"N": 1}})
    assert (cfg.nx, cfg.nv, cfg.energy_N) == (8, 8, 1)
    assert RunConfig(**cfg.as_dict()) == cfg


@pytest.mark.parametrize("kernel", [{"model": "bgk", "tau": 0.5}, {"model": "hard_sphere"}])
def test_conservation(kernel):
    cfg = small(kernel=kernel, nx=4, t_end=0.02, output_dt=0.02,
                initial={**TG, "remainder": "random", "remainder_amplitude": 0.01})
    tr = run_simulation(cfg)
    first, last = tr.moment_rows[0], tr.moment_rows[-1]
    for k in ("mass", "momentum1", "momentum2", "momentum3", "energy"):
        assert abs(last[k] - first[k]) < 1e-12 * max(1.0, abs(first[k])), k


def test_zero_state_stays_zero():
    tr = run_simulation(small(initial={"kind": "zero"}))
    assert all(np.abs(s).max() == 0.0 for s in tr.snapshots)


def test_uniform_null_state_is_stationary():
    cfg = small(initial={"kind": "zero"})
    s = KineticSolver(cfg)
    g = np.broadcast_to(0.1 * s.grid.sqrt_maxwellian + 0.05 * s.grid.speed_squared * s.grid.sqrt_maxwellian,
                        s.space.shape + (s.grid.size,)).copy()
    tr = run_simulation(cfg, solver=s, g0=g)
    # the quadratic term of a constant null state is not zero, but it is constant in x and N-perp
    for snap in tr.snapshots:
        _, Pg, _ = project_P(snap, s.grid)
        np.testing.assert_allclose(Pg, g, atol=1e-13)


def test_t_end_zero_records_initial_state_only():
    tr = run_simulation(small(t_end=0.0, output_dt=None))
    assert tr.times == [0.0] and len(tr.energy_rows) == 1


def test_deterministic(tmp_path):
    cfg = small()
    run_simulation(cfg, out_dir=tmp_path / "a")
    run_simulation(cfg, out_dir=tmp_path / "b")
    for name in ("energy.csv", "moments.csv", "manifest.json", "snapshots.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_outputs_round_trip(tmp_path):
    tr = run_simulation(small(), out_dir=tmp_path)
    times, arrs, header = read_snapshots(tmp_path / "snapshots.bin")
    np.testing.assert_array_equal(times, tr.times)
    np.testing.assert_array_equal(arrs[-1], tr.snapshots[-1])
    assert header["meta"]["eps"] == 0.2
    _, rows = read_csv(tmp_path / "energy.csv")
    assert rows[-1]["E_N"] == tr.energy_rows[-1]["E_N"]


def test_cfl_halving_and_rejection():
    cfg = small(dt=0.05, t_end=0.1, output_dt=0.1, cfl_max=0.9)
    s = KineticSolver(cfg)
    with pytest.raises(StepRejected) as info:
        s.check_cfl(0.05)
    assert info.value.advisory_dt < 0.05
    tr = run_simulation(cfg, solver=s)
    assert tr.dt_used <= info.value.advisory_dt
    with pytest.raises(StepRejected):
        run_simulation(small(dt=0.05, t_end=0.1, output_dt=0.1, max_halvings=0))


def test_gamma_ceiling_rejects_large_data(tmp_path):
    cfg = small(initial={**TG, "amplitude": 30.0}, gamma_ceiling=1e-3)
    with pytest.raises(StepRejected):
        run_simulation(cfg, out_dir=tmp_path)
    import json

    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "error"


@pytest.mark.parametrize("kind", ["crank_nicolson", "implicit_euler", "exponential"])
def test_equilibrium_factor(kind):
    cfg = small(relaxation=kind)
    s = KineticSolver(cfg)
    x = 0.7
    dt = x * cfg.eps**2 * 0.5
    expected = {"crank_nicolson": 1 - x / 2, "implicit_euler": 1.0, "exponential": x / math.expm1(x)}[kind]
    assert s.equilibrium_factor(np.ones(3), dt)[0] == pytest.approx(expected, rel=1e-12)


def test_time_self_convergence():
    """Fixed eps: halving dt shrinks the error against a fine run by about 2 (first-order splitting)."""
    ic = {**TG, "remainder": "chapman_enskog"}
    finals = []
    for dt in (0.01, 0.005, 0.0025, 0.000625):
        tr = run_simulation(small(dt=dt, t_end=0.2, output_dt=0.2, nv=8, initial=ic, energy_every=1000))
        finals.append(tr.snapshots[-1])
    errs = [np.linalg.norm(f - finals[-1]) for f in finals[:-1]]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9), orders


def test_picard_converges_to_direct_solve():
    cfg = small(t_end=0.1, output_dt=0.05, initial={**TG, "amplitude": 0.04, "theta_amplitude": 0.02})
    s = KineticSolver(cfg)
    g0 = initial_fluctuation(ic_from_config(cfg.initial, s.space), s.grid, s.space, cfg.eps, s.kernel, solver=s).values
    direct = run_simulation(cfg, solver=s, g0=g0).snapshots[-1]
    res = picard_solve(g0, cfg, iterations=5, solver=s)
    assert all(b < a for a, b in zip(res.increments[1:], res.increments[2:]))
    err = s.space.l2(res.finals[-1] - direct) * math.sqrt(s.grid.h**3)
    assert err <= 10 * res.increments[-1]


def test_picard_guards():
    cfg = small(initial={**TG, "amplitude": 5.0})
    s = KineticSolver(cfg)
    g0 = initial_fluctuation(ic_from_config(cfg.initial, s.space), s.grid, s.space, cfg.eps, s.kernel, solver=s).values
    with pytest.raises(ConfigError):
        picard_solve(g0, cfg, solver=s)
    # a frozen source that is far too strong for the horizon cannot contract
    cfg2 = small(eps=0.1, dt=0.001, t_end=0.1, output_dt=0.1, picard_max_energy=1e9, gamma_ceiling=1e9,
                 initial={**TG, "amplitude": 30.0})
    s2 = KineticSolver(cfg2)
    g2 = initial_fluctuation(ic_from_config(cfg2.initial, s2.space), s2.grid, s2.space, cfg2.eps, s2.kernel, solver=s2).values
    with pytest.raises(NonContraction):
        picard_solve(g2, cfg2, iterations=6, solver=s2)


def test_initial_remainder_projection_warning():
    cfg = small()
    s = KineticSolver(cfg)
    ic = ic_from_config(cfg.initial, s.space)
    bad = np.broadcast_to(s.grid.sqrt_maxwellian, s.space.shape + (s.grid.size,)).copy()
    with pytest.warns(UserWarning):
        g = initial_fluctuation(ic, s.grid, s.space, cfg.eps, s.kernel, remainder_field=bad).values
    clean = initial_fluctuation(ic, s.grid, s.space, cfg.eps, s.kernel).values
    np.testing.assert_allclose(g, clean, atol=1e-12)
