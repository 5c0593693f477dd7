"""End-to-end smoke tests for the python extension."""

import math

import pytest

import dps


@pytest.fixture(scope="module")
def graph():
    return dps.TemporalGraph.synth(nodes=50, edges=900, communities=4, decay=0.05, seed=9)


@pytest.fixture(scope="module")
def split(graph):
    return dps.chrono_split(graph)


def test_synth_and_queries(graph):
    assert graph.num_nodes() == 50
    assert graph.num_edges() == 900
    assert graph.density() > 0
    t_end = graph.timespan() + 1.0
    ns = graph.neighbors_before(0, t_end)
    assert all(e.time < t_end for e in ns)
    assert graph.neighbors_before(0, 0.0) == []


def test_split_shapes(graph, split):
    assert len(split.train) == 630
    total = len(split.train) + len(split.val) + len(split.test) + len(split.removed)
    assert total == graph.num_edges()


def test_roundtrip(tmp_path, graph):
    path = str(tmp_path / "synth.txt")
    graph.save(path)
    again = dps.TemporalGraph.load(path, divisor=1.0)
    assert again.num_nodes() == graph.num_nodes()
    assert again.num_edges() == graph.num_edges()


def test_auc_worked_example():
    assert dps.auc_score([0.9, 0.4], [0.6, 0.1]) == 0.75
    assert dps.accuracy_score([0.9, 0.8], [0.2, 0.1]) == 1.0


def test_fit_tds(graph, split):
    rates = dps.fit_tds(graph, split, seed=1)
    assert len(rates.lambdas) == graph.num_nodes()
    assert all(1e-6 <= l <= 100.0 for l in rates.lambdas)
    assert sum(rates.fitted()) > 0


def test_train_evaluate_checkpoint(tmp_path, graph, split):
    cfg = dict(
        d_model=16,
        d_time=8,
        neighbors=5,
        batch_size=64,
        layers=1,
        heads=1,
        dropout=0.0,
        lr=0.01,
        max_epochs=2,
        seed=7,
    )
    rates = dps.fit_tds(graph, split, seed=1)
    gas, gas_report = dps.pretrain_gas(graph, split, **cfg)
    assert gas.trained
    assert len(gas_report["loss_history"]) == gas_report["epochs"]

    model, report = dps.train_dps(graph, split, rates, gas, **cfg)
    assert model.mode == "DPS"
    assert report["epochs"] >= 1

    result = model.evaluate(graph, split.test, seed=3)
    assert 0.0 <= result["auc"] <= 1.0
    assert result["n_pos"] == len(split.test)

    path = str(tmp_path / "model.ckpt.json")
    model.save(graph, path)
    loaded = dps.load_model(path)
    again = loaded.evaluate(graph, split.test, seed=3)
    assert again["auc"] == result["auc"]
    assert again["accuracy"] == result["accuracy"]

    rows = model.embed(graph, [0, 1, 2], [100.0, 200.0, 300.0], seed=5)
    assert len(rows) == 3
    assert len(rows[0]) == 16
    assert all(math.isfinite(v) for row in rows for v in row)


def test_gradient_suite_smoke():
    cases = dps.gradient_suite(seed=11)
    assert len(cases) >= 20
    assert all(err < 1e-4 for _, err in cases)
