import csv
import json
import math

import numpy as np
import pytest

from slowfast.coefficients import CoefficientPair
from slowfast.errors import ConfigError, ReplicaAbortError
from slowfast import experiments
from slowfast.experiments import (
    ExperimentSpec,
    emit_results,
    load_spec,
    run_clt_rate,
    run_experiment,
    run_moment_diagnostics,
    run_strong_rate,
    run_weak_rate,
)

GRID = tuple(2.0**-k for k in range(4, 8))
QUICK = dict(eps_grid=GRID, replicas=100, T=0.1, checkpoints=4, chunk=40)


def quick(kind, **kw):
    return ExperimentSpec(kind=kind, **{**QUICK, **kw})


@pytest.mark.parametrize("kw", [
    dict(kind="strong-rate", eps_grid=(0.1, 0.05, 0.02)),
    dict(kind="weak-rate", replicas=50),
    dict(kind="strong-rate", eps_grid=(0.1, 0.2, 0.05, 0.01)),
    dict(kind="strong-rate", eps_grid=(2.0, 0.5, 0.25, 0.1)),
    dict(kind="oracle-suite", replicas=0),
    dict(kind="bogus"),
    dict(kind="strong-rate", family="cubic"),
    dict(kind="strong-rate", family_params={"a": 20.0}),
    dict(kind="strong-rate", u0=[1.0, 2.0]),
    dict(kind="clt-rate", providers="magic"),
    dict(kind="strong-rate", seed=-3),
])
def test_spec_rejections(kw):
    with pytest.raises(ConfigError):
        ExperimentSpec(**kw)


def test_spec_defaults_per_kind():
    assert ExperimentSpec(kind="clt-rate").replicas == 5000
    assert ExperimentSpec(kind="weak-rate").replicas == 2000
    assert ExperimentSpec(kind="moment-diagnostics").kind == "moment-diag"
    spec = ExperimentSpec()
    assert spec.eps_grid[0] == 2.0**-4 and spec.eps_grid[-1] == 2.0**-9
    np.testing.assert_array_equal(spec.direction()[:3], [1.0, 0.5, 0.0])


def test_spec_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict({"kind": "strong-rate", "replica": 10})


def test_spec_round_trips_through_json_and_toml(tmp_path):
    spec = quick("weak-rate", family_params={"a": 2.0}, theta=0.25, h=[0.0] * 15 + [1.0])
    (tmp_path / "s.json").write_text(json.dumps(spec.to_dict()))
    assert load_spec(tmp_path / "s.json") == spec
    (tmp_path / "s.toml").write_text(
        'kind = "weak-rate"\neps-grid = [0.0625, 0.03125, 0.015625, 0.0078125]\nreplicas = 100\n'
        "T = 0.1\ncheckpoints = 4\nchunk = 40\ntheta = 0.25\nh = [" + ", ".join(["0.0"] * 15) + ", 1.0]\n"
        "[family_params]\na = 2.0\n"
    )
    assert load_spec(tmp_path / "s.toml") == spec


@pytest.mark.parametrize("name, text", [("c.yaml", "kind: x"), ("c.json", "{not json"), ("c.toml", "= 1"),
                                        ("c.json", "[1, 2]")])
def test_load_spec_config_errors(tmp_path, name, text):
    (tmp_path / name).write_text(text)
    with pytest.raises(ConfigError):
        load_spec(tmp_path / name)


def test_load_spec_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_spec(tmp_path / "absent.toml")


def test_strong_rate_accounts_for_every_replica():
    rep = run_strong_rate(quick("strong-rate"))
    assert np.all(rep.replicas + rep.aborts == 100)
    assert np.all(rep.errors > 0) and np.all(rep.errors[:-1] > rep.errors[1:])
    assert rep.slope is not None


def test_decoupled_slow_drift_is_rejected_as_noise_dominated():
    rep = run_strong_rate(quick("strong-rate", family_params={"d": 0.0}))
    assert np.all(rep.errors == 0)
    assert rep.slope is None and "standard errors" in rep.diagnostics["fit_rejected"]


def test_constant_functional_gives_zero_weak_error():
    rep = run_weak_rate(quick("weak-rate", h=[0.0] * 16, theta=math.pi / 2))
    assert np.all(rep.errors == 0) and rep.slope is None


def test_doubling_replicas_halves_squared_stderr():
    a = run_strong_rate(quick("strong-rate", replicas=400, eps_grid=GRID))
    b = run_strong_rate(quick("strong-rate", replicas=800, eps_grid=GRID, seed=99))
    ratio = (a.stderrs / b.stderrs) ** 2
    assert np.all((ratio > 1.4) & (ratio < 2.8))


def test_results_do_not_depend_on_thread_count():
    a = run_weak_rate(quick("weak-rate"))
    b = run_weak_rate(quick("weak-rate", threads=3))
    np.testing.assert_array_equal(a.errors, b.errors)
    np.testing.assert_array_equal(a.stderrs, b.stderrs)


def test_degenerate_clt_has_zero_error():
    # no fast coupling and no slow linear drift: both deviations vanish identically
    rep = run_clt_rate(quick("clt-rate", family_params={"c": 0.0, "d": 0.0}, theta=0.3))
    assert np.all(rep.errors == 0)
    assert rep.diagnostics["lyapunov"]["oracle"] == 0


def test_clt_requires_linear_family():
    with pytest.raises(ConfigError):
        run_clt_rate(quick("clt-rate", family="bounded"))


def test_analytic_fbar_requires_linear_family():
    with pytest.raises(ConfigError):
        run_strong_rate(quick("strong-rate", family="bounded", fbar="analytic"))


def test_table_fbar_requires_decoupled_fast_equation():
    with pytest.raises(ConfigError):
        run_strong_rate(quick("strong-rate", family="bounded"))


def test_unstable_drift_is_detected_as_blow_up():
    spec = quick("moment-diag", eps_grid=(0.0625,), replicas=20, T=0.5, u0=[3.0] + [0.0] * 15)
    stub = CoefficientPair(f=lambda u, y: np.exp(u), g=lambda u, y: -y, name="exp-stub")
    rep = run_moment_diagnostics(spec, stub)
    assert rep.blow_up and rep.flagged and rep.aborts[0] > 0
    assert rep.replicas[0] + rep.aborts[0] == 20


def test_abort_threshold_fails_the_experiment(monkeypatch):
    real = experiments.simulate_coupled

    def leaky(*args, **kw):
        te, tb = real(*args, **kw)
        te.aborted[:2] = True
        return te, tb

    monkeypatch.setattr(experiments, "simulate_coupled", leaky)
    with pytest.raises(ReplicaAbortError):
        run_strong_rate(quick("strong-rate"))
    rep = run_strong_rate(quick("strong-rate", abort_tolerance=0.1))
    assert np.all(rep.aborts == 2 * 3) and np.all(rep.replicas + rep.aborts == 100)


def test_moment_diagnostics_single_eps_gives_one_row():
    rep = run_moment_diagnostics(quick("moment-diag", eps_grid=(0.1,), replicas=10, family="bounded"))
    assert len(list(rep.rows())) == 1 and rep.ratio == 1.0 and not rep.flagged


def test_emitted_files(tmp_path):
    rec = run_experiment(quick("strong-rate"))
    paths = emit_results(rec, tmp_path)
    lines = paths["csv"].read_text().splitlines()
    assert lines[0].startswith("# slowfast") and rec.fingerprint in lines[0]
    rows = list(csv.reader(lines[2:]))
    assert rows[0] == ["epsilon", "error", "stderr", "replicas", "aborts"]
    assert [float(r[0]) for r in rows[1:]] == list(GRID)
    data = json.loads(paths["json"].read_text())
    assert data["slope"] == rec.slope and "wall_clock" not in data
    assert load_spec(paths["json"]) == quick("strong-rate")
    assert json.loads(paths["timing"].read_text())["wall_clock_seconds"] > 0


def test_emit_reports_path_on_failure(tmp_path):
    rec = run_experiment(quick("moment-diag", eps_grid=(0.1,), replicas=5))
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit_results(rec, blocker / "sub")
