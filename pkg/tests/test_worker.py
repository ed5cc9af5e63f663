import ast
import inspect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from checknet import worker as wk
from checknet.crosscheck import majority, set_votes
from checknet.public import PublicModel
from checknet.worker import (OutputStats, RemoteWorker, ReplayCache, Worker, WorkerBehavior, WorkerError,
                             WorkerServer, fit_output_stats, honest, raise_nodes, random_attack, replay_attack,
                             targeted_attack)


@pytest.fixture(scope="module")
def tiny_model():
    gen = np.random.default_rng(0)
    return PublicModel([(gen.normal(size=(5, 3)), gen.normal(size=5)), (gen.normal(size=(8, 5)), gen.normal(size=8))])


def test_worker_imports_only_public_half():
    tree = ast.parse(inspect.getsource(wk))
    local = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and node.level > 0:
            local.add(node.module)
        elif isinstance(node, ast.ImportFrom) and (node.module or "").startswith("checknet"):
            local.add(node.module.split(".", 1)[-1])
        elif isinstance(node, ast.Import):
            assert not any(a.name.startswith("checknet") for a in node.names)
    assert local == {"public"}


def test_honest_is_owner_forward(tiny_model):
    x = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(honest(tiny_model, x), tiny_model.forward(x))
    assert np.array_equal(honest(tiny_model, x), honest(tiny_model, x.copy()))


def test_honest_matches_owner_bitwise(small_bundle, small_data):
    x = small_data[1].inputs[:100]
    owner = small_bundle.public.forward(x)
    for i in range(100):
        assert np.array_equal(honest(small_bundle.public, x[i]), owner[i])


def test_random_attack_marginals():
    stats = OutputStats(np.array([0.0, 5.0, -2.0]), np.array([1.0, 0.5, 3.0]))
    gen = np.random.default_rng(0)
    draws = np.stack([random_attack(stats, gen) for _ in range(10_000)])
    assert np.all(np.abs(draws.mean(axis=0) - stats.mean) <= 3 * stats.std / 100)
    with pytest.raises(WorkerError):
        random_attack(None, gen)


def test_random_worker_ignores_input(tiny_model):
    stats = OutputStats(np.zeros(8), np.ones(8))
    a = Worker(tiny_model, WorkerBehavior("random"), np.random.default_rng(3), stats)
    b = Worker(tiny_model, WorkerBehavior("random"), np.random.default_rng(3), stats)
    assert np.array_equal(a.respond(0, np.zeros(3)), b.respond(0, np.full(3, 100.0)))


def test_fit_output_stats():
    s = fit_output_stats([[1.0, 2.0], [3.0, 2.0]])
    assert s.mean.tolist() == [2.0, 2.0] and s.std.tolist() == [1.0, 0.0]
    with pytest.raises(WorkerError):
        fit_output_stats([[1.0, 2.0]])


def test_margin_rule_example():
    assert np.allclose(raise_nodes([1.0, 2.0, 3.0], [0]), [3.1, 2.0, 3.0])


def test_targeted_all_nodes_falls_to_class_zero(small_bundle, small_data):
    x = small_data[1].inputs[0]
    n_o = small_bundle.cross.n_outputs
    y = targeted_attack(small_bundle.public, x, n_o, np.random.default_rng(0))
    assert np.all(y == y[0])
    assert set_votes(y, small_bundle.cross).tolist() == [0] * small_bundle.n_sets


@settings(max_examples=40)
@given(st.integers(0, 8), st.integers(0, 2**32 - 1))
def test_targeted_keeps_other_nodes(n, seed):
    gen = np.random.default_rng(seed)
    model = PublicModel([(gen.normal(size=(8, 3)), gen.normal(size=8))])
    x = gen.normal(size=3)
    y = model.forward(x)
    z = targeted_attack(model, x, n, gen)
    changed = np.flatnonzero(z != y)
    assert len(changed) <= n
    top = y.max() + 0.05 * (y.max() - y.min())
    assert np.all(z[changed] == top)
    if n == 0:
        assert np.array_equal(z, y)


def test_targeted_range_checks(tiny_model):
    with pytest.raises(WorkerError):
        targeted_attack(tiny_model, np.zeros(3), 9, np.random.default_rng(0))
    with pytest.raises(ValueError):
        WorkerBehavior("targeted", 0)
    with pytest.raises(ValueError):
        WorkerBehavior("targeted", 9).validate(8)
    with pytest.raises(ValueError):
        WorkerBehavior("lazy")


def test_replay_returns_some_other_cached_output(small_bundle, small_data):
    x = small_data[1].inputs[:20]
    y = small_bundle.public.forward(x)
    cache = ReplayCache(np.arange(20), y)
    gen = np.random.default_rng(0)
    for i in range(20):
        z = replay_attack(cache, i, gen)
        src = np.flatnonzero(np.all(y == z, axis=1))
        assert len(src) and i not in src
        # the same vector yields the same CrossCheck verdict as its source
        assert majority(set_votes(z, small_bundle.cross)) == majority(set_votes(y[src[0]], small_bundle.cross))


def test_replay_errors():
    with pytest.raises(WorkerError):
        replay_attack(None, 0, np.random.default_rng(0))
    with pytest.raises(WorkerError):
        replay_attack(ReplayCache([4], [[1.0, 2.0]]), 4, np.random.default_rng(0))


def test_worker_requires_stats_and_cache(tiny_model):
    with pytest.raises(WorkerError):
        Worker(tiny_model, WorkerBehavior("random"), np.random.default_rng(0))
    with pytest.raises(WorkerError):
        Worker(tiny_model, WorkerBehavior("replay"), np.random.default_rng(0))


def test_wire_mode_round_trip(small_bundle, small_data):
    x = small_data[1].inputs[:30]
    w = Worker(small_bundle.public, WorkerBehavior("honest"), np.random.default_rng(0))
    with WorkerServer(w).start() as server, RemoteWorker(*server.address) as client:
        assert server.address[0] == "127.0.0.1"
        got = np.stack([client.respond(i, x[i]) for i in range(30)])
    assert np.array_equal(got, small_bundle.public.forward(x))


def test_wire_messages_carry_only_id_and_vectors():
    import json
    req = json.loads(wk.encode_request(3, [1.0, 2.5]))
    resp = json.loads(wk.encode_response(3, [0.25]))
    assert req == {"id": 3, "x": [1.0, 2.5]} and resp == {"id": 3, "y": [0.25]}


def test_wire_errors_are_reported(tiny_model):
    w = Worker(tiny_model, WorkerBehavior("honest"), np.random.default_rng(0))
    with WorkerServer(w).start() as server, RemoteWorker(*server.address) as client:
        with pytest.raises(WorkerError):
            client.respond(0, np.zeros(5))  # wrong width
        assert client.respond(1, np.zeros(3)).shape == (8,)  # server keeps serving
