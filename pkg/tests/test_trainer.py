from __future__ import annotations

import numpy as np
import pytest

from lsconf import core
from lsconf.data import gen_blobs
from lsconf.errors import CenterDriftError, DivergenceError, InvalidArchitectureError, MissingClassError, ShapeError
from lsconf.rootsys import build_configuration, choose_centers, gen_rotation_2d
from lsconf.trainer import (
    Loss,
    TrainConfig,
    TrainState,
    adamw_update,
    backward,
    continual_extend,
    distill,
    eval_accuracy,
    extract_mean_embeddings,
    forward,
    init_encoder,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
    train,
    _forward_cache,
)


def test_init_encoder_frozen_shapes_and_determinism():
    p = init_encoder((3, 5, 2), seed=0)
    assert [w.shape for w in p.weights] == [(5, 3), (2, 5)]
    assert all(w.dtype == np.float32 for w in p.arrays())
    assert p.param_count == 3 * 5 + 5 + 5 * 2 + 2
    assert p.equals(init_encoder((3, 5, 2), seed=0))
    assert not p.equals(init_encoder((3, 5, 2), seed=1))
    with pytest.raises(InvalidArchitectureError):
        init_encoder((3,))


def test_adamw_first_step_frozen():
    # first Adam step moves each weight by lr * sign(g); decay multiplies by (1 - lr*wd) first
    p = np.array([1.0, -2.0])
    g = np.array([0.5, -3.0])
    adamw_update(p, g, np.zeros(2), np.zeros(2), 1, lr=0.1, weight_decay=0.5, eps=0.0)
    np.testing.assert_allclose(p, [1.0 * 0.95 - 0.1, -2.0 * 0.95 + 0.1])


@pytest.mark.parametrize("loss", list(Loss))
def test_network_backprop_finite_difference(loss):
    rng = np.random.default_rng(3)
    params = init_encoder((4, 6, 5, 3), seed=2, dtype=np.float64)
    C = choose_centers(build_configuration("An", 2), 6).with_radii(np.full(6, 0.3))
    X = rng.standard_normal((5, 4))
    y = rng.integers(0, 6, 5)
    cfg = TrainConfig(loss=loss)
    Z, cache = _forward_cache(params, X)
    _, dZ = loss_and_grad(Z, y, C, cfg)
    grads = backward(params, cache, dZ)
    h = 1e-6
    for arr, g in zip(params.arrays(), grads):
        for idx in list(np.ndindex(arr.shape))[:6]:
            old = arr[idx]
            arr[idx] = old + h
            up = loss_and_grad(forward(params, X), y, C, cfg)[0].value
            arr[idx] = old - h
            down = loss_and_grad(forward(params, X), y, C, cfg)[0].value
            arr[idx] = old
            num = (up - down) / (2 * h)
            assert abs(num - g[idx]) <= 1e-5 * max(1.0, abs(num))


def test_zero_epochs_keeps_initialization():
    ds = gen_blobs(4, 2, 5, seed=0)
    C = gen_rotation_2d(4)
    state = TrainState.fresh(init_encoder((2, 8, 2), 0), 0)
    out = train(state, ds, C, TrainConfig(epochs=0))
    assert out.params.equals(state.params) and out.history == []


def test_shape_mismatch_before_training():
    ds = gen_blobs(4, 2, 5)
    state = TrainState.fresh(init_encoder((2, 8, 3), 0))
    with pytest.raises(ShapeError):
        train(state, ds, gen_rotation_2d(4), TrainConfig(epochs=1))


def test_train_is_deterministic_and_resumable():
    ds = gen_blobs(4, 2, 20, seed=1)
    C = gen_rotation_2d(4)
    cfg = TrainConfig(epochs=4, batch_size=16, learning_rate=1e-3, loss=Loss.DIST)
    s0 = TrainState.fresh(init_encoder((2, 16, 2), 0), 0)
    a = train(s0, ds, C, cfg)
    b = train(s0, ds, C, cfg)
    assert a.history == b.history and a.params.equals(b.params)
    half = TrainConfig(epochs=2, batch_size=16, learning_rate=1e-3, loss=Loss.DIST)
    c = train(train(s0, ds, C, half), ds, C, half)
    assert c.params.equals(a.params) and c.history == a.history


def test_divergence_reports_last_finite_state():
    ds = gen_blobs(4, 2, 20, seed=1)
    C = gen_rotation_2d(4)
    s0 = TrainState.fresh(init_encoder((2, 16, 2), 0), 0)
    with pytest.raises(DivergenceError) as e:
        train(s0, ds, C, TrainConfig(epochs=3, learning_rate=1e12, loss=Loss.DIST))
    assert e.value.state.params.equals(s0.params)


def test_checkpoint_round_trip(tmp_path):
    ds = gen_blobs(4, 2, 20, seed=1)
    C = gen_rotation_2d(4)
    cfg = TrainConfig(epochs=2, batch_size=8, learning_rate=1e-3, loss=Loss.DIST, lr_drop=(1, 1e-4),
                      label_permutation=np.array([1, 0, 3, 2]))
    st = train(TrainState.fresh(init_encoder((2, 8, 2), 0), 0), ds, C, cfg)
    p = tmp_path / "c.ckpt"
    save_checkpoint(p, st, {"k": 1})
    back, extra = load_checkpoint(p)
    assert extra == {"k": 1}
    assert back.params.equals(st.params) and back.step == st.step
    assert back.config.to_dict() == cfg.to_dict()
    assert back.history == st.history
    more = TrainConfig(epochs=1, batch_size=8, learning_rate=1e-3, loss=Loss.DIST)
    assert train(back, ds, C, more).params.equals(train(st, ds, C, more).params)


def test_lr_drop_schedule():
    cfg = TrainConfig(learning_rate=1e-3, lr_drop=(2, 1e-5))
    assert [cfg.rate_for_epoch(e) for e in (1, 2, 3)] == [1e-3, 1e-3, 1e-5]


def test_mean_embeddings_and_distill_guards():
    ds = gen_blobs(3, 2, 4, seed=0)
    p = init_encoder((2, 4, 5), 0)
    C = extract_mean_embeddings(p, ds)
    Z = forward(p, ds.features).astype(np.float64)
    np.testing.assert_allclose(C.centers[1], Z[ds.labels == 1].mean(axis=0))
    with pytest.raises(MissingClassError):
        extract_mean_embeddings(p, ds.with_classes([0, 2]))
    with pytest.raises(InvalidArchitectureError):
        distill(p, (2, 4, 3), ds, TrainConfig(epochs=1))


def test_continual_rejects_drift():
    ds = gen_blobs(4, 2, 5, seed=0)
    st = TrainState.fresh(init_encoder((2, 4, 2), 0))
    old = gen_rotation_2d(4)
    moved = gen_rotation_2d(6, circle_radius=4.0)
    with pytest.raises(CenterDriftError):
        continual_extend(st, None, moved, TrainConfig(epochs=1), old_dataset=ds, previous_centers=old)


def test_training_gathers_only_batch_rows():
    ds = gen_blobs(4, 3, 8, seed=0)
    C = choose_centers(build_configuration("An", 200, projection="DropLast"), 40_000)
    st = TrainState.fresh(init_encoder((3, 8, 200), 0))
    with core.track_gather() as log:
        from lsconf.trainer import train_step

        train_step(st, ds.features[:16], ds.labels[:16], C, TrainConfig())
    assert log == [(16, 200)]
    assert C.is_lazy and "centers" not in C.__dict__


def test_eval_accuracy_with_permutation():
    ds = gen_blobs(2, 2, 3, seed=0)
    p = init_encoder((2, 4, 2), 0)
    C = gen_rotation_2d(2)
    pred = (forward(p, ds.features) @ C.centers.T).argmax(axis=1)
    assert eval_accuracy(p, ds, C) == pytest.approx(np.mean(pred == ds.labels))
    assert eval_accuracy(p, ds, C, label_permutation=[1, 0]) == pytest.approx(np.mean(pred == 1 - ds.labels))
