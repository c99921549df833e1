import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repufed.errors import TrainingError, ValidationError
from repufed.predictor import (ModelParams, SceneBatch, backward, batch_loss, encode_history, forward, init_params,
                               load_params, local_train, loss, make_batch, row_normalize, save_params, sgd_step)
from repufed.scene import ObservationWindow, Scene, SynthConfig, Track, synthesize_traffic, window


def random_window(r, tau, t_f, n):
    pos = np.cumsum(r.normal(0, 1, (tau + t_f, n, 2)), axis=0)
    pos -= pos[tau - 1]
    return ObservationWindow(pos[:tau].copy(), pos[tau:].copy(), tuple(range(n)))


def random_batch(seed, tau=3, t_f=2, n_windows=3, encoding="cv_residual"):
    r = np.random.default_rng(seed)
    wins = [random_window(r, tau, t_f, int(r.integers(1, 5))) for _ in range(n_windows)]
    adj = [row_normalize(r.uniform(0, 1, (w.n, w.n))) for w in wins]
    return SceneBatch(wins, adj, encoding)


def naive_forward(params, batch, cv_prior=True):
    """Element-by-element evaluation without vectorization."""
    tau, t_f = params.dims
    out = []
    for w, a in zip(batch.windows, batch.adjacency):
        feats = []
        for i in range(w.n):
            v = [w.history[tau - 1, i, c] - w.history[tau - 2, i, c] for c in range(2)]
            f = []
            for s in range(tau):
                for c in range(2):
                    x = w.history[s, i, c]
                    if batch.encoding == "cv_residual":
                        x = x - (s - (tau - 1)) * v[c]
                    f.append(x)
            feats.append(f)
        pred = np.zeros((t_f, w.n, 2))
        for i in range(w.n):
            g = [sum(a[i, j] * feats[j][k] for j in range(w.n)) for k in range(2 * tau)]
            v = [w.history[tau - 1, i, c] - w.history[tau - 2, i, c] for c in range(2)]
            acc = [0.0, 0.0]
            for t in range(t_f):
                for c in range(2):
                    col = 2 * t + c
                    d = params.bias[col]
                    for k in range(2 * tau):
                        d += feats[i][k] * params.w_self[k, col] + g[k] * params.w_nbr[k, col]
                    if cv_prior:
                        d += v[c]
                    acc[c] += d
                    pred[t, i, c] = acc[c]
        out.append(pred)
    return out


def test_init_params():
    assert not init_params((3, 2), 0.0, 1).flat().any()
    assert init_params((3, 2), 0.1, 4) == init_params((3, 2), 0.1, 4)
    big = np.concatenate([init_params((4, 3), 0.2, s).flat() for s in range(100)])
    assert big.size > 10_000 and np.all(np.abs(big) <= 0.2)


@pytest.mark.parametrize("encoding", ["cv_residual", "relative"])
def test_forward_matches_loop_oracle(encoding):
    for seed in range(10):
        b = random_batch(seed, encoding=encoding)
        p = init_params((3, 2), 0.5, seed)
        for fast, slow in zip(forward(p, b), naive_forward(p, b)):
            assert np.max(np.abs(fast - slow)) <= 1e-12


def test_zero_params_no_prior():
    b = random_batch(0)
    for pred in forward(ModelParams.zeros((3, 2)), b, cv_prior=False):
        assert not pred.any()


def test_stationary_vehicle_zero_error():
    w = ObservationWindow(np.zeros((3, 1, 2)), np.zeros((2, 1, 2)), (0,))
    b = make_batch([w], "none")
    assert batch_loss(ModelParams.zeros((3, 2)), b) == 0.0


def test_constant_velocity_exact():
    tracks = tuple(Track(v, np.arange(12), np.outer(np.arange(12), [v + 1.0, 0.5 * v]) + [0, 4.0 * v])
                   for v in range(4))
    wins = window(Scene(tracks), 4, 3, 2)
    b = make_batch(wins, "similarity")
    preds = forward(ModelParams.zeros((4, 3)), b)
    assert loss(preds, [w.future for w in wins]) == 0.0


def test_dims_mismatch():
    with pytest.raises(ValidationError):
        forward(ModelParams.zeros((4, 2)), random_batch(0))


def test_loss_cases():
    a = np.random.default_rng(0).normal(size=(3, 2, 2))
    assert loss(a, a) == 0.0
    assert loss(a + [3.0, 4.0], a) == pytest.approx(5.0)
    with pytest.raises(ValidationError):
        loss(np.zeros((2, 2, 2)), np.zeros((3, 2, 2)))
    tot = 0.0
    for t in range(3):
        for i in range(2):
            tot += np.hypot(*(a[t, i] - a[::-1][t, i]))
    assert loss(a, a[::-1]) == pytest.approx(tot / 6, abs=1e-14)


def finite_difference(params, batch, idx, h=1e-5):
    flat = params.flat()
    up, dn = flat.copy(), flat.copy()
    up[idx] += h
    dn[idx] -= h
    dims = params.dims
    return (batch_loss(ModelParams.from_flat(up, dims), batch) - batch_loss(ModelParams.from_flat(dn, dims), batch)) / (2 * h)


def gradient_check(seed, n_coords=20):
    b = random_batch(seed, n_windows=4)
    p = init_params((3, 2), 0.3, seed + 100)
    g = backward(p, b).flat()
    r = np.random.default_rng(seed)
    worst = 0.0
    for idx in r.choice(p.size, n_coords, replace=False):
        fd = finite_difference(p, b, idx)
        worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    return worst


def test_gradients_vs_finite_differences():
    assert max(gradient_check(s) for s in range(20)) < 1e-5


def test_zero_residual_zero_gradient():
    w = ObservationWindow(np.zeros((3, 2, 2)), np.zeros((2, 2, 2)), (0, 1))
    assert not backward(ModelParams.zeros((3, 2)), make_batch([w], "none")).flat().any()


def test_bias_gradient_by_hand():
    # one vehicle, one future step: loss = |prediction - truth|, so d/dbias = unit residual
    hist = np.array([[[0.0, 0.0]], [[1.0, 0.0]], [[2.0, 0.0]]]) - [2.0, 0.0]
    w = ObservationWindow(hist, np.array([[[1.0 + 3.0, 4.0]]]), (0,))
    b = make_batch([w], "none")
    g = backward(ModelParams.zeros((3, 1)), b)
    np.testing.assert_allclose(g.bias, [-0.6, -0.8], atol=1e-15)


def test_sgd_step():
    p = init_params((3, 2), 0.2, 0)
    assert sgd_step(p, p, 0.0) == p
    b = random_batch(1)
    q = sgd_step(p, backward(p, b), 1e-3)
    assert batch_loss(q, b) < batch_loss(p, b)
    assert sgd_step(p, backward(p, b), 1e-3) == q


def test_realizable_linear_target():
    r = np.random.default_rng(0)
    tau, t_f = 3, 2
    w_star = r.normal(0, 0.3, (2 * tau, 2 * t_f))
    wins = []
    for _ in range(40):
        h = r.normal(0, 1, (tau, 3, 2))
        h -= h[-1]
        disp = (encode_history(h) @ w_star).reshape(3, t_f, 2) + (h[-1] - h[-2])[:, None, :]
        wins.append(ObservationWindow(h, np.cumsum(disp, axis=1).transpose(1, 0, 2), (0, 1, 2)))
    b = make_batch(wins, "none")
    _, final = local_train(ModelParams.zeros((tau, t_f)), b, 500, 0.1, lr_decay=0.98)
    assert final < 1e-3


def test_local_train_rejects_zero_epochs():
    with pytest.raises(ValidationError):
        local_train(ModelParams.zeros((3, 2)), random_batch(0), 0, 0.1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_local_train_divergence_reported():
    with pytest.raises(TrainingError, match="epoch"):
        local_train(init_params((3, 2), 1.0, 0), random_batch(2), 50, 1e305)


def test_loss_non_increasing_small_lr():
    sc = synthesize_traffic(SynthConfig(n_vehicles=5, duration_frames=40, seed=2, lane_change_prob=0.05, speed_wobble=2))
    b = make_batch(window(sc, 6, 6, 2))
    hist = []
    local_train(ModelParams.zeros((6, 6)), b, 50, 1e-3, history=hist)
    assert all(b_ <= a + 1e-12 for a, b_ in zip(hist, hist[1:]))


def test_checkpoint_round_trip(tmp_path):
    p = init_params((4, 3), 0.7, 9)
    save_params(p, tmp_path / "m.json")
    assert load_params(tmp_path / "m.json") == p


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    r = np.random.default_rng(seed)
    w = random_window(r, 3, 2, 4)
    a = row_normalize(r.uniform(0, 1, (4, 4)))
    perm = r.permutation(4)
    w2 = ObservationWindow(w.history[:, perm], w.future[:, perm], tuple(w.vehicle_ids[i] for i in perm))
    p = init_params((3, 2), 0.5, seed)
    out = forward(p, SceneBatch([w], [a]))[0]
    out2 = forward(p, SceneBatch([w2], [a[np.ix_(perm, perm)]]))[0]
    np.testing.assert_allclose(out2, out[:, perm], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_isolated_vehicles_ignore_neighbour_weights(seed):
    r = np.random.default_rng(seed)
    w = random_window(r, 3, 2, 3)
    p = init_params((3, 2), 0.5, seed)
    no_nbr = ModelParams(p.w_self, np.zeros_like(p.w_nbr), p.bias)
    a = forward(p, SceneBatch([w], [np.zeros((3, 3))]))[0]
    b = forward(no_nbr, SceneBatch([w], [np.zeros((3, 3))]))[0]
    assert np.array_equal(a, b)
