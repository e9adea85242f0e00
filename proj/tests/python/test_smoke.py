import math

import numpy as np
import pytest

import ptpmm

US = 1e-6


def exchange(p=8, seed=3, phi=1.0 + 50e-6, delta=7 * US, d=2 * US, model=None):
    model = model or ptpmm.DelayModel.exponential(1e6)
    trace = ptpmm.DelayTrace(model.sample(p, seed), model.sample(p, seed + 1))
    truth = ptpmm.ClockParams(phi, delta, d, d)
    return ptpmm.generate_exchange(truth, trace, ptpmm.Schedule.periodic(p)), model


def test_delay_model_round_trip():
    m = ptpmm.DelayModel.gamma(2.0, 1.5 * US)
    assert m.kind == ptpmm.DelayKind.GAMMA
    assert m.mean == pytest.approx(3 * US)
    w = np.linspace(0.1, 20, 7) * US
    assert np.allclose(m.cdf(m.quantile(m.cdf(w))), m.cdf(w))
    back = ptpmm.DelayModel.from_text(m.to_text())
    assert np.array_equal(back.log_density(w), m.log_density(w))
    assert m.log_density(-1.0) == -math.inf
    assert m.support.lo == 0.0


def test_fit_empirical_histogram():
    s = ptpmm.DelayModel.exponential(1e6).sample(5000, 11)
    h = ptpmm.fit_empirical(s, ptpmm.FitMethod.HISTOGRAM, 50)
    assert h.kind == ptpmm.DelayKind.HISTOGRAM
    assert h.mean == pytest.approx(np.mean(s), rel=0.05)


def test_exchange_arrays_and_text():
    ts, _ = exchange()
    assert len(ts) == 8
    assert np.all(np.diff(ts.t1) > 0)
    again = ptpmm.TimestampSet.from_text(ts.to_text())
    assert np.array_equal(again.t2, ts.t2)


def test_estimators_agree_roughly():
    ts, model = exchange(p=16)
    d = 2 * US
    g = ptpmm.gmle(ts, d, d, model.mean)
    k = ptpmm.minimax_k(ts, d, d, model, model)
    s = ptpmm.minimax_s(ts, model, model)
    assert k.diagnostics.converged
    for e in (g, k, s):
        assert abs(e.phi_hat - (1 + 50e-6)) < 0.05
        assert abs(e.delta_hat - 7 * US) < 5 * US


def test_minimax_k_equivariance():
    ts, model = exchange(p=6, seed=21)
    d = 2 * US
    a, b = 1.3, -4 * US
    base = ptpmm.minimax_k(ts, d, d, model, model)
    moved = ptpmm.minimax_k(ptpmm.transform_k(ts, a, b), d, d, model, model)
    assert moved.phi_hat == pytest.approx(a * base.phi_hat, rel=1e-7)
    assert moved.delta_hat == pytest.approx(a * base.delta_hat + b, abs=1e-11)


def test_errors_map_to_python_exceptions():
    assert issubclass(ptpmm.InvalidArgument, ptpmm.Error)
    assert issubclass(ptpmm.Error, RuntimeError)
    with pytest.raises(ptpmm.InvalidArgument):
        ptpmm.DelayModel.exponential(-1.0)
    with pytest.raises(ptpmm.Error):
        ptpmm.TimestampSet([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [2.0, 2.0])


def test_netsim_delays_are_reproducible():
    cfg = ptpmm.NetworkConfig()
    cfg.switches = 2
    cfg.load = 0.2
    a = ptpmm.simulate_path_delays(cfg, 200, seed=5)
    b = ptpmm.simulate_path_delays(cfg, 200, seed=5)
    assert np.array_equal(a, b)
    assert np.all(a >= 0)


def test_run_experiment_kwargs():
    table = ptpmm.run_experiment(
        parametric=ptpmm.DelayModel.exponential(1e6),
        p_sweep=[4],
        trials=20,
        schemes=["gmle", "lmle"],
        threads=1,
    )
    assert [r.scheme for r in table] == ["gmle", "lmle"]
    assert all(r.trials == 20 and r.rmse_delta > 0 for r in table)
    csv = ptpmm.to_csv(table)
    assert ptpmm.to_csv(ptpmm.parse_csv(csv)) == csv
    with pytest.raises(TypeError):
        ptpmm.run_experiment(bogus=1)
