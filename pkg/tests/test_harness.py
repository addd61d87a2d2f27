import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from camel.corpus import GESTURES, Gesture, generate_corpus
from camel.device import ConfigArrays, fps_vector, get_device, group_users
from camel.errors import ConfigurationError, DomainError
from camel.harness import (
    EvalConfig, Predictors, aggregate, emit_report, evaluate, fold_indices, load_report, parse_report,
    representative_users, run_session, save_report, shifted_geomean,
)
from camel.neural import TrainingConfig
from camel.predictors import ModelShape


class _Keyed:
    """Feature stub: a slice's features are its (page number, start offset)."""

    def __init__(self, pages):
        self.pages = {p.id: i for i, p in enumerate(pages)}
        self.by_index = list(pages)

    def features(self, page, vp):
        return np.array([float(self.pages[page.id]), vp.start_px])


class _PerfectQoe:
    def __init__(self, keyed, user, gesture):
        self.keyed, self.user, self.gesture = keyed, user, gesture

    def forward(self, q):
        page = self.keyed.by_index[int(q[2])]
        return self.user.threshold(page.slice_at(q[3]), self.gesture, q[4] * 1000.0)


class _Model:
    def __init__(self, network, pipeline):
        self.network, self.pipeline = network, pipeline


class _QoePredictor:
    def __init__(self, keyed, user):
        self.models = {g: _Model(_PerfectQoe(keyed, user, g), keyed) for g in GESTURES}

    def model(self, g):
        return self.models[g]


class _FpsPredictor:
    def __init__(self, keyed, device):
        self.keyed, self.device = keyed, device
        self.models = {g: _Model(None, keyed) for g in GESTURES}

    def model(self, g):
        return self.models[g]

    def predict_configs(self, g, feats, speed, configs, cluster):
        page = self.keyed.by_index[int(feats[0])]
        return fps_vector(self.device, page, page.slice_at(feats[1]), g, speed, ConfigArrays.of(configs), cluster)


def _sessions(corpus, frontier, xiaomi):
    keyed = _Keyed(corpus.pages)
    for user in representative_users():
        pred = Predictors(_QoePredictor(keyed, user), _FpsPredictor(keyed, xiaomi))
        for page in corpus.pages[:10]:
            for g, speed in (("scroll", 900.0), ("fling", 2500.0), ("pinch", 300.0)):
                gesture = Gesture(g, speed)
                yield tuple(run_session(page, gesture, user, xiaomi, pred, frontier, m)
                            for m in ("baseline", "oracle", "camel"))


@pytest.fixture(scope="module")
def perfect_sessions(corpus, frontier, xiaomi):
    return list(_sessions(corpus, frontier, xiaomi))


def test_baseline_saves_nothing(perfect_sessions):
    for base, _, _ in perfect_sessions:
        assert base.saving == 0.0 and base.energy_j == base.baseline_energy_j
        assert len(base.fps_trace) == 20


def test_oracle_is_lexicographically_best(perfect_sessions):
    for base, oracle, camel in perfect_sessions:
        assert (oracle.delta, oracle.energy_j) <= (camel.delta, camel.energy_j + 1e-12)
        assert oracle.delta <= base.delta
        if oracle.delta == base.delta:
            assert oracle.energy_j <= base.energy_j + 1e-12


def test_perfect_predictors_match_the_oracle(perfect_sessions):
    same = [o.delta == c.delta and math.isclose(o.energy_j, c.energy_j, rel_tol=1e-9)
            for _, o, c in perfect_sessions]
    assert all(c.delta == o.delta for _, o, c in perfect_sessions)
    assert np.mean(same) >= 0.9
    for _, o, c in perfect_sessions:
        assert c.energy_j <= c.baseline_energy_j


def test_mode_validation(corpus, frontier, xiaomi):
    user = group_users("mod")[0]
    with pytest.raises(DomainError):
        run_session(corpus.pages[0], Gesture("scroll", 900.0), user, xiaomi, None, frontier, "turbo")
    with pytest.raises(ConfigurationError):
        run_session(corpus.pages[0], Gesture("scroll", 900.0), user, xiaomi, None, frontier, "camel")


def test_folds_partition_the_pages():
    parts = fold_indices(1000, 5, seed=3)
    assert sorted(np.concatenate(parts).tolist()) == list(range(1000))
    assert [len(p) for p in parts] == [200] * 5
    with pytest.raises(DomainError):
        fold_indices(4, 5)
    with pytest.raises(DomainError):
        fold_indices(4, 0)


@given(st.lists(st.floats(-0.99, 10), min_size=1, max_size=30))
def test_shifted_geomean(values):
    g = shifted_geomean(values)
    assert min(values) - 1e-9 <= g <= max(values) + 1e-9
    assert g == pytest.approx(np.exp(np.mean(np.log(1 + np.array(values)))) - 1, rel=1e-9, abs=1e-12)


TINY = EvalConfig(speeds={"scroll": (900.0,), "fling": (2000.0,), "pinch": (300.0,)}, target_scales=(1.0, 1.1),
                  out_dim=6, feature_pages=30, frontier_pages=3, fps_pages=8,
                  fps_training=TrainingConfig(epochs=2), qoe_training=TrainingConfig(epochs=3, batch_size=8),
                  shape=ModelShape(2, 16))


@pytest.fixture(scope="module")
def tiny_report():
    corpus = generate_corpus(4, 6)
    return evaluate(corpus, [get_device("pixel2")], [group_users("low")[0]], folds=3, config=TINY)


def test_report_shape(tiny_report):
    r = tiny_report
    assert len(r.rows) == 6 * 3 * 4 and not r.smoke
    assert len({row.page_id for row in r.rows}) == 6
    for row in r.rows:
        assert row.saving < 1 and row.violation >= 0 and row.delta >= 0
        assert row.violation == row.delta / row.fps_min


def test_aggregates_recompute(tiny_report):
    agg = aggregate(tiny_report.rows)
    assert agg == tiny_report.aggregates
    camel = tiny_report.select("camel", 1.0)
    assert agg["camel@1"]["saving"] == shifted_geomean(r.saving for r in camel)
    assert agg["camel@1/pixel2"]["sessions"] == len(camel)
    assert agg["baseline@1"]["saving"] == 0.0


def test_report_round_trip(tiny_report, tmp_path):
    text = emit_report(tiny_report)
    back = parse_report(text)
    assert back.rows == tiny_report.rows and back.aggregates == tiny_report.aggregates
    assert emit_report(back) == text
    assert load_report(save_report(tiny_report, tmp_path / "r.csv")).rows == tiny_report.rows
    with pytest.raises(DomainError):
        parse_report("page_id\n")


def test_evaluate_is_deterministic(tiny_report):
    again = evaluate(generate_corpus(4, 6), [get_device("pixel2")], [group_users("low")[0]], folds=3, config=TINY)
    assert emit_report(again) == emit_report(tiny_report)


def test_single_fold_is_a_smoke_run():
    r = evaluate(generate_corpus(4, 2), [get_device("pixel2")], [group_users("low")[0]], folds=1,
                 config=replace(TINY, target_scales=(1.0,)))
    assert r.smoke and r.folds == 1
