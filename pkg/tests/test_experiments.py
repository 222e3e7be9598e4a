import json
import os

import numpy as np
import pytest

from kem.errors import KemError, ValidationError
from kem.experiments import (
    PRESETS,
    ExperimentConfig,
    cross_validate,
    make_dataset,
    read_series_csv,
    run_experiment,
    write_series_csv,
)
from kem.processes import Series


def test_invalid_decay_names_field():
    with pytest.raises(ValidationError, match="^decay"):
        ExperimentConfig.from_dict({"decay": 0.0}, "even-process")


@pytest.mark.parametrize("values,field", [
    ({"bandwidth": -1}, "bandwidth"), ({"eps": 0}, "eps"), ({"Lx": 0}, "Lx"),
    ({"process": "weather"}, "process"), ({"colour": 1}, "colour"), ({"scale": 0}, "scale"),
    ({"process": "csv", "data": "/nonexistent.csv"}, "data"),
])
def test_validation_names_field(values, field):
    with pytest.raises(ValidationError, match=f"^{field}"):
        ExperimentConfig.from_dict(values)


def test_unknown_preset():
    with pytest.raises(ValidationError, match="preset"):
        ExperimentConfig.from_dict({}, "rossler")


def test_presets_validate():
    for name in PRESETS:
        cfg = ExperimentConfig.from_dict({}, name)
        assert cfg.n == PRESETS[name]["n_pairs"]
    assert ExperimentConfig.from_dict({"scale": 0.1}, "even-process").n == 3000


def test_series_csv_round_trip(tmp_path):
    s = Series(np.random.default_rng(0).normal(size=(20, 3)), dt=0.1, t0=2.0)
    write_series_csv(s, tmp_path / "s.csv")
    back = read_series_csv(tmp_path / "s.csv")
    assert np.array_equal(back.values, s.values) and back.dt == pytest.approx(0.1)


def test_flow_dataset_has_clean_holdout():
    cfg = ExperimentConfig.from_dict({"scale": 0.02, "nu": 1.0}, "lorenz63")
    data = make_dataset(cfg)
    assert len(data.pairs) == cfg.n
    assert data.test.values.shape == data.test_clean.values.shape
    resid = data.test.values - data.test_clean.values
    assert resid.std() == pytest.approx(1.0, rel=0.1)


def test_run_even_process_small(tmp_path):
    cfg = ExperimentConfig.from_dict({"scale": 0.1}, "even-process")
    summary = run_experiment(cfg, tmp_path / "a")
    for name in ("spectrum.csv", "coords.csv", "summary.json", "graph.json", "graph.dot", "labels.csv"):
        assert (tmp_path / "a" / name).is_file()
    assert (tmp_path / "a" / "model" / "model.json").is_file()
    assert len(summary["eigenvalues"]) >= 2
    assert sum(c["probability"] for c in summary["graph"]["clusters"]) == pytest.approx(1.0)


def test_summary_is_deterministic(tmp_path):
    cfg = ExperimentConfig.from_dict({"scale": 0.02, "horizons": [0, 5]}, "lorenz63")
    run_experiment(cfg, tmp_path / "a", save=False)
    run_experiment(cfg, tmp_path / "b", save=False)
    a = (tmp_path / "a" / "summary.json").read_bytes()
    assert a == (tmp_path / "b" / "summary.json").read_bytes()
    summary = json.loads(a)
    assert set(summary["forecast"]) == {"0", "5"}
    assert (tmp_path / "a" / "prediction.csv").is_file()


def test_stage_name_in_errors(tmp_path):
    write_series_csv(Series(np.zeros((3, 1)), dt=1.0), tmp_path / "tiny.csv")
    cfg = ExperimentConfig.from_dict({"process": "csv", "data": str(tmp_path / "tiny.csv"), "M_max": 1})
    with pytest.raises(KemError, match=r"^\[generate\]"):
        run_experiment(cfg, tmp_path / "out")


def test_cv_singleton_and_empty():
    cfg = ExperimentConfig.from_dict({"scale": 0.05, "probes": 20}, "lorenz63")
    best, table = cross_validate(cfg, [200.0], [1e-3], horizon=5)
    assert len(table) == 1 and best["bandwidth"] == 200.0 and best["eps"] == 1e-3
    with pytest.raises(ValidationError):
        cross_validate(cfg, [], [1e-3])


def test_cv_degenerate_bandwidth_is_worse():
    cfg = ExperimentConfig.from_dict({"scale": 0.1, "probes": 30}, "lorenz63")
    best, table = cross_validate(cfg, [1e-6, cfg.bandwidth], [1e-3], horizon=5)
    assert len(table) == 2
    for row in table:
        assert (row["rmse"] is not None and np.isfinite(row["rmse"])) or row["error"]
    tiny = next(r for r in table if r["bandwidth"] == 1e-6)
    preset = next(r for r in table if r["bandwidth"] == cfg.bandwidth)
    assert tiny["rmse"] is None or tiny["rmse"] > preset["rmse"]
    assert best["bandwidth"] == cfg.bandwidth


def test_cv_tie_break_prefers_smaller_eps_then_bandwidth(monkeypatch):
    import kem.experiments as ke

    monkeypatch.setattr(ke, "evaluate_forecasts", lambda *a, **k: ({"5": {"rmse": 1.0}}, []))
    cfg = ExperimentConfig.from_dict({"scale": 0.02, "probes": 5}, "lorenz63")
    best, table = cross_validate(cfg, [300.0, 100.0], [1e-2, 1e-4], horizon=5)
    assert (best["bandwidth"], best["eps"]) == (100.0, 1e-4)


def test_cv_rejects_discrete():
    with pytest.raises(ValidationError):
        cross_validate(ExperimentConfig.from_dict({}, "even-process"), [1.0], [1e-3])
