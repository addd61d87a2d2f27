import numpy as np
import pytest
from hypothesis import given, strategies as st

from camel.corpus import GESTURES, generate_corpus
from camel.device import ConfigArrays, ProcessingConfiguration, fps_vector, get_device
from camel.errors import ConfigurationError
from camel.predictors import DEFAULT_SPEEDS
from camel.search import (
    ConfigFrontier, build_frontier, load_frontier, pareto_frontier, save_frontier, search, search_batch,
)

A = ProcessingConfiguration(1, 0.71, 0.3, 250.0, "little")
B = ProcessingConfiguration(1, 1.28, 0.672, 345.0, "little")
C = ProcessingConfiguration(1, 2.84, 1.78, 585.0, "big")
ABC = ConfigFrontier((A, B, C), {A: 3.0, B: 5.0, C: 8.0}, {A: 25.0, B: 40.0, C: 55.0})


def perfect(configs):
    return np.array([ABC.mean_fps[c] for c in configs])


def test_worked_examples():
    r = search(32.0, ABC, perfect)
    assert (r.config, r.met) == (B, True)
    r = search(60.0, ABC, perfect)
    assert (r.config, r.met) == (C, False)
    r = search(0.1, ABC, perfect)
    assert (r.config, r.met) == (A, True)


def test_bad_inputs():
    with pytest.raises(ConfigurationError):
        search(30.0, ConfigFrontier((), {}, {}), perfect)
    with pytest.raises(ConfigurationError):
        search(0.0, ABC, perfect)
    with pytest.raises(ConfigurationError):
        ConfigFrontier((A, B), {A: 5.0, B: 5.0}, {A: 1.0, B: 2.0})


def test_dominated_config_is_dropped():
    front = pareto_frontier([A, B], np.array([2.0, 3.0]), np.array([40.0, 30.0]))
    assert front == [0]


@given(st.lists(st.tuples(st.floats(0.1, 10), st.floats(1, 60)), min_size=1, max_size=40))
def test_pareto_frontier_properties(points):
    energy = np.array([p[0] for p in points])
    fps = np.array([p[1] for p in points])
    cfgs = [ProcessingConfiguration(1 + i % 15, 1.0, 1.0, 300.0) for i in range(len(points))]
    front = pareto_frontier(cfgs, energy, fps)
    assert np.all(np.diff(energy[front]) > 0) and np.all(np.diff(fps[front]) > 0)
    for i in range(len(points)):
        # every config is matched or beaten by a frontier member
        assert any(energy[j] <= energy[i] and fps[j] >= fps[i] for j in front)
    for j in front:
        assert not any(energy[i] <= energy[j] and fps[i] >= fps[j] and (energy[i], fps[i]) != (energy[j], fps[j])
                       for i in range(len(points)))


def test_desk_frontier(frontier, xiaomi):
    e = frontier.energies()
    assert 8 <= len(frontier) <= 24
    assert np.all(np.diff(e) > 0)
    assert frontier.configs[-1] == xiaomi.baseline_config()
    fps = np.array([frontier.mean_fps[c] for c in frontier.configs])
    assert np.all(np.diff(fps[:-1]) > 0)


def test_frontier_needs_pages(xiaomi):
    with pytest.raises(ConfigurationError):
        build_frontier(xiaomi, [], DEFAULT_SPEEDS)
    with pytest.raises(ConfigurationError):
        build_frontier(xiaomi, generate_corpus(0, 1).pages, [])


@given(st.floats(1, 70), st.floats(1, 70), st.lists(st.floats(1, 60), min_size=3, max_size=3))
def test_higher_target_never_cheaper(t1, t2, fps):
    lo, hi = sorted((t1, t2))
    a = search(lo, ABC, lambda cs: np.array(fps))
    b = search(hi, ABC, lambda cs: np.array(fps))
    assert a.met >= b.met
    if b.met:
        assert a.index <= b.index
    assert a.met == any(f >= lo for f in fps)


def test_batch_matches_scalar(rng):
    fps = rng.uniform(10, 60, (200, 3))
    targets = rng.uniform(5, 65, 200)
    idx, met = search_batch(targets, fps)
    for i in range(200):
        r = search(targets[i], ABC, lambda cs, row=fps[i]: row)
        assert (r.index, r.met) == (idx[i], met[i])


def test_oracle_equivalence_against_enumeration(frontier, xiaomi, corpus):
    ca = ConfigArrays.of(frontier.configs)
    cost = frontier.energy_cost
    rng = np.random.default_rng(7)
    for _ in range(150):
        page = corpus.pages[rng.integers(len(corpus))]
        vp = page.viewport_profiles[rng.integers(len(page.viewport_profiles))]
        g = GESTURES[rng.integers(3)]
        speed = float(rng.choice(DEFAULT_SPEEDS[g]))
        truth = fps_vector(xiaomi, page, vp, g, speed, ca)
        t = float(rng.uniform(5, 61))
        r = search(t, frontier, lambda cs: truth)
        ok = [c for c, f in zip(frontier.configs, truth) if f >= t]
        if ok:
            assert r.met and r.config == min(ok, key=cost.__getitem__)
        else:
            assert not r.met and truth[r.index] == truth.max()


def test_save_load(frontier, tmp_path):
    back = load_frontier(save_frontier(frontier, tmp_path / "f.jsonl"))
    assert back.configs == frontier.configs
    assert back.energy_cost == frontier.energy_cost and back.mean_fps == frontier.mean_fps
    assert back.provenance["device"] == "xiaomi9"


def test_every_device_has_a_frontier():
    pages = generate_corpus(1, 4, prefix="feat").pages
    for name in ("pixel2", "huaweip9", "odroidxu3"):
        dev = get_device(name)
        f = build_frontier(dev, pages, DEFAULT_SPEEDS)
        assert len(f) >= 4 and f.configs[-1] == dev.baseline_config()
        truth = fps_vector(dev, pages[0], pages[0].viewport_profiles[0], "scroll", 900.0, ConfigArrays.of(f.configs))
        assert truth[-1] == truth.max()
