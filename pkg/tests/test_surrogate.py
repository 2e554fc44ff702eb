import json

import numpy as np
import pytest

from cotune.knobspace import LayerWorkload, default_space, index_to_config
from cotune.oracle import measure
from cotune.surrogate import encode_batch, encode_features, fit


@pytest.fixture
def space():
    return default_space()


@pytest.fixture
def workload():
    return LayerWorkload("resnet18_c3", 1, 64, 64, 56, 56, 3, 3, 1, 1)


def random_configs(space, n, seed):
    rng = np.random.default_rng(seed)
    return [index_to_config(space, int(i)) for i in rng.integers(space.total_size, size=n)]


def test_feature_vector_shape(space, workload):
    x = encode_features(space, workload, index_to_config(space, 0))
    assert x.shape == (2 * 7 + 6,)
    assert np.isfinite(x).all()


def test_constant_target(space, workload):
    cfgs = random_configs(space, 50, 0)
    x = encode_batch(space, workload, cfgs)
    model = fit(x, np.full(50, 3.25))
    assert model.base_prediction == 3.25
    assert len(model.trees) == 0
    preds = model.predict(x)
    assert np.all(preds == 3.25)


def test_single_record(space, workload):
    x = encode_batch(space, workload, random_configs(space, 1, 1))
    model = fit(x, np.array([7.5]))
    assert model.predict(x[0]) == pytest.approx(7.5)


def test_one_deep_tree_interpolates(space, workload):
    cfgs = random_configs(space, 40, 2)
    x = encode_batch(space, workload, cfgs)
    rng = np.random.default_rng(3)
    y = rng.normal(size=len(x))
    # distinct inputs + unbounded depth + lr 1 => the first tree nails the residuals
    _, unique_rows = np.unique(x, axis=0, return_index=True)
    x, y = x[unique_rows], y[unique_rows]
    model = fit(x, y, n_trees=1, max_depth=None, learning_rate=1.0)
    assert np.allclose(model.predict(x), y, atol=1e-12)


def test_knob_index_sum_r2(space, workload):
    rng = np.random.default_rng(4)
    idx = rng.integers(space.total_size, size=500)
    cfgs = [index_to_config(space, int(i)) for i in idx]
    y = np.array([sum(c.indices) for c in cfgs], dtype=float)
    x = encode_batch(space, workload, cfgs)
    model = fit(x[:400], y[:400])
    pred = model.predict(x[400:])
    resid = y[400:] - pred
    r2 = 1.0 - (resid @ resid) / ((y[400:] - y[400:].mean()) ** 2).sum()
    assert r2 >= 0.9


def test_training_sse_non_increasing(space, workload):
    cfgs = random_configs(space, 120, 5)
    x = encode_batch(space, workload, cfgs)
    y = np.array([measure(space, workload, c).fitness for c in cfgs])
    keep = np.isfinite(y)
    x, y = x[keep], y[keep]
    sses = []
    for n in (1, 5, 20, 60):
        model = fit(x, y, n_trees=n)
        resid = y - model.predict(x)
        sses.append(float(resid @ resid))
    assert all(b <= a + 1e-9 for a, b in zip(sses, sses[1:]))


def test_deterministic(space, workload):
    cfgs = random_configs(space, 80, 6)
    x = encode_batch(space, workload, cfgs)
    y = np.arange(len(x), dtype=float)
    a = fit(x, y)
    b = fit(x, y)
    probe = encode_batch(space, workload, random_configs(space, 30, 7))
    assert np.array_equal(a.predict(probe), b.predict(probe))


def test_predict_never_nan(space, workload):
    cfgs = random_configs(space, 60, 8)
    x = encode_batch(space, workload, cfgs)
    y = np.linspace(-5, 5, len(x))
    model = fit(x, y)
    probe = encode_batch(space, workload, random_configs(space, 200, 9))
    assert np.isfinite(model.predict(probe)).all()


def test_identical_leaves_identical_predictions(space, workload):
    cfgs = random_configs(space, 30, 10)
    x = encode_batch(space, workload, cfgs)
    y = np.asarray([float(i % 3) for i in range(len(x))])
    model = fit(x, y, max_depth=2, n_trees=5)
    # a point equal to a training point lands in the same leaves
    assert model.predict(x[4]) == pytest.approx(float(model.predict(x[4:5])[0]), rel=0)


def test_argument_errors(space, workload):
    x = encode_batch(space, workload, random_configs(space, 10, 11))
    with pytest.raises(ValueError):
        fit(np.empty((0, x.shape[1])), np.empty(0))
    with pytest.raises(ValueError):
        fit(x, np.full(10, np.inf))
    model = fit(x, np.arange(10, dtype=float))
    with pytest.raises(ValueError):
        model.predict(np.zeros(x.shape[1] + 1))


def test_json_dump(space, workload):
    x = encode_batch(space, workload, random_configs(space, 25, 12))
    model = fit(x, np.arange(25, dtype=float), n_trees=3, max_depth=3)
    dump = json.dumps(model.to_dict())
    parsed = json.loads(dump)
    assert parsed["n_features"] == x.shape[1]
    assert len(parsed["trees"]) == len(model.trees)
