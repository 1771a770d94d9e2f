import numpy as np
import pytest

from astra import toy
from astra.errors import UsageError
from astra.gradcheck import central_difference, check_toy_instance, rel_err
from astra.rnnt import reduce_logits, rnnt_forward
from astra.tensor import Rng


@pytest.fixture
def cfg():
    return toy.TrainConfig(seed=4)


def test_dataset_deterministic():
    a = toy.gen_dataset(Rng(8), 1)[0]
    b = toy.gen_dataset(Rng(8), 1)[0]
    np.testing.assert_array_equal(a.frames, b.frames)
    assert a.labels == b.labels and a.alignment_truth == b.alignment_truth


def test_dataset_shape_rules():
    for ex in toy.gen_dataset(Rng(1), 50):
        U = len(ex.labels)
        assert 2 <= U <= 6
        assert len(ex.alignment_truth) == U
        assert ex.frames.shape[0] >= U and ex.frames.shape[1] == 8
        for (s, e) in ex.alignment_truth:
            assert 1 <= e - s <= 3


def test_noiseless_frames_equal_prototypes():
    protos = toy.make_prototypes(Rng(2), 8, 8)
    np.testing.assert_allclose(np.linalg.norm(protos, axis=1), 1.0)
    for ex in toy.gen_dataset(Rng(3), 10, noise=0.0, prototypes=protos):
        for lab, (s, e) in zip(ex.labels, ex.alignment_truth):
            np.testing.assert_array_equal(ex.frames[s:e], np.tile(protos[lab], (e - s, 1)))


def test_label_frequencies_are_uniform():
    labels = [l for ex in toy.gen_dataset(Rng(17), 500) for l in ex.labels]
    N, V = len(labels), 8
    counts = np.bincount(labels, minlength=V)
    sd = np.sqrt(N * (1 / V) * (1 - 1 / V))
    assert (np.abs(counts - N / V) <= 3 * sd).all()


def test_dataset_validation():
    with pytest.raises(UsageError):
        toy.gen_dataset(Rng(0), 1, V=1)


def test_zero_params_give_bias_logits():
    p = toy.ToyModelParams.zeros()
    p.joiner_bias = np.arange(9.0)
    ex = toy.gen_dataset(Rng(0), 1)[0]
    logits, e_s, e_t = toy.forward_logits(p, ex)
    assert logits.shape == (ex.frames.shape[0], len(ex.labels) + 1, 9)
    np.testing.assert_array_equal(logits, np.broadcast_to(np.arange(9.0), logits.shape))
    assert not e_s.any() and not e_t.any()


def test_single_frame_single_label_shape():
    p = toy.ToyModelParams.init(Rng(0))
    ex = toy.ToyExample(np.ones((1, 8)), [3])
    logits, e_s, e_t = toy.forward_logits(p, ex)
    assert logits.shape == (1, 2, 9) and e_s.shape == (1, 8) and e_t.shape == (1, 8)


def test_label_out_of_range():
    p = toy.ToyModelParams.init(Rng(0))
    with pytest.raises(UsageError):
        toy.forward_logits(p, toy.ToyExample(np.ones((2, 8)), [8]))


def test_full_chain_gradient():
    rng = Rng(31)
    assert max(check_toy_instance(rng) for _ in range(4)) < 1e-4


@pytest.mark.parametrize("kind", ["mae", "mse"])
def test_total_loss_gradient_every_coordinate(kind):
    rng = Rng(5)
    params = toy.ToyModelParams.init(rng, scale=0.5)
    ex = toy.gen_dataset(rng, 1)[0]
    c = toy.TrainConfig(pointwise=kind, lambda_consistency=0.8, lambda_text=0.5)
    keep = np.ones(len(ex.labels))
    keep[0] = 0.0
    _, _, grads = toy.loss_and_grads(params, ex, c, keep)
    for name, block in params.blocks().items():
        def f(x, name=name):
            trial = params.copy()
            setattr(trial, name, x)
            return toy.loss_and_grads(trial, ex, c, keep)[0]

        assert rel_err(grads.blocks()[name], central_difference(f, block)) < 1e-4, name


def test_unpaired_text_gradient():
    rng = Rng(6)
    params = toy.ToyModelParams.init(rng, scale=0.5)
    ex = toy.gen_dataset(rng, 1)[0]
    c = toy.TrainConfig(lambda_text=0.9, pointwise="mse")
    text = [1, 1, 5]
    _, m, grads = toy.loss_and_grads(params, ex, c, np.array([1.0, 0.0, 1.0]), text)
    assert m["text_loss"] is not None

    def f(x):
        trial = params.copy()
        trial.text_table = x
        return toy.loss_and_grads(trial, ex, c, np.array([1.0, 0.0, 1.0]), text)[0]

    assert rel_err(grads.text_table, central_difference(f, params.text_table)) < 1e-4


def test_plain_rnnt_step_when_extras_off():
    rng = Rng(9)
    params = toy.ToyModelParams.init(rng, scale=0.5)
    ex = toy.gen_dataset(rng, 1)[0]
    c = toy.TrainConfig(lambda_consistency=0.0, enable_text_branch=False, learning_rate=0.05)
    new, metrics = toy.train_step(params, ex, c, Rng(0))
    assert metrics["text_loss"] is None

    def neg_log_p(p):
        logits, _, _ = toy.forward_logits(p, ex)
        return -rnnt_forward(reduce_logits(logits, ex.labels, blank_id=p.V))

    for name, block in params.blocks().items():
        def f(x, name=name):
            trial = params.copy()
            setattr(trial, name, x)
            return neg_log_p(trial)

        numeric = central_difference(f, block)
        np.testing.assert_allclose(new.blocks()[name], block - 0.05 * numeric, atol=1e-9)


def test_train_step_reproducible():
    c = toy.TrainConfig(seed=1)
    train_set, _ = toy.make_splits(c)
    p = toy.ToyModelParams.init(Rng(1))
    _, m1 = toy.train_step(p, train_set[0], c, Rng(2))
    _, m2 = toy.train_step(p, train_set[0], c, Rng(2))
    assert m1 == m2


def test_training_deterministic_and_step0_shared():
    def trace(**kw):
        out = []
        toy.train(toy.TrainConfig(seed=13, steps=15, **kw), on_step=lambda s, m: out.append(m))
        return out

    a, b = trace(), trace()
    assert a == b
    off = trace(lambda_consistency=0.0, enable_consistency=False, enable_text_branch=False)
    assert off[0]["rnnt_loss"] == a[0]["rnnt_loss"]


def test_greedy_decode_all_blank():
    p = toy.ToyModelParams.zeros()
    p.joiner_bias[-1] = 5.0
    assert toy.greedy_decode(p, np.ones((4, 8))) == []


def test_greedy_decode_respects_cap():
    p = toy.ToyModelParams.zeros()
    p.joiner_bias[2] = 5.0
    frames = np.ones((3, 8))
    out = toy.greedy_decode(p, frames)
    assert out == [2] * 30 and len(out) <= 10 * frames.shape[0]


def test_edit_distance():
    assert toy.edit_distance([1, 2, 3], [1, 2, 3]) == 0
    assert toy.edit_distance([], [1, 2]) == 2
    assert toy.edit_distance([1, 3], [1, 2, 3]) == 1
    assert toy.edit_distance([4, 5], [5, 4]) == 2


def test_evaluate_perfect_and_empty(monkeypatch):
    data = toy.gen_dataset(Rng(0), 5)
    p = toy.ToyModelParams.init(Rng(0))
    lookup = {id(ex.frames): ex.labels for ex in data}
    monkeypatch.setattr(toy, "greedy_decode", lambda params, frames: lookup[id(frames)])
    ter, mean_l_c = toy.evaluate(p, data)
    assert ter == 0.0 and mean_l_c > 0
    monkeypatch.setattr(toy, "greedy_decode", lambda params, frames: [])
    assert toy.evaluate(p, data)[0] == 1.0
    with pytest.raises(UsageError):
        toy.evaluate(p, [])


def test_untrained_model_is_bad():
    for seed in range(5):
        c = toy.TrainConfig(seed=seed)
        _, test_set = toy.make_splits(c)
        p = toy.ToyModelParams.init(Rng(seed).spawn(1))
        assert toy.evaluate(p, test_set[:50])[0] > 0.7


def test_config_validation():
    with pytest.raises(UsageError):
        toy.TrainConfig(lambda_consistency=-1)
    with pytest.raises(UsageError):
        toy.TrainConfig(text_mask_prob=1.0)
    with pytest.raises(UsageError):
        toy.TrainConfig(learning_rate=0)
    with pytest.raises(UsageError):
        toy.TrainConfig(text_source="books")


def test_params_json_round_trip(tmp_path):
    from astra.tensor import load_json, write_tensor_json

    p = toy.ToyModelParams.init(Rng(3))
    write_tensor_json(tmp_path / "p.json", toy.params_to_json(p))
    q = toy.params_from_json(load_json(tmp_path / "p.json"))
    for k, v in p.blocks().items():
        np.testing.assert_array_equal(q.blocks()[k], v)
