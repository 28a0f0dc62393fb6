import numpy as np
import pytest

from mpcn import autodiff as ad
from mpcn.autodiff import Tape, Tensor
from mpcn.baselines import MF
from mpcn.config import BaselineConfig, MpcnConfig, TrainConfig
from mpcn.data import Batch
from mpcn.errors import ConfigError, NumericError
from mpcn.model import MPCN, RatingModel
from mpcn.trainer import AdamState, adam_step, evaluate_mse, objective, read_history, train


def batch(ratings):
    n = len(ratings)
    return Batch(np.zeros(n, int), np.zeros(n, int), np.asarray(ratings, float), np.arange(n))


class Constant(RatingModel):
    kind = "constant"

    def __init__(self, value):
        super().__init__()
        self.add_param("c", np.array(value, dtype=np.float64))

    def predict(self, b, training=False, rng=None):
        return ad.add(Tensor(np.zeros(len(b))), self.params["c"])


class Scripted(RatingModel):
    """Trainable scalar whose evaluation-mode predictions follow a fixed script."""

    kind = "scripted"

    def __init__(self, script):
        super().__init__()
        self.add_param("w", np.array(0.5))
        self.script = list(script)
        self.evals = 0
        self.seen = []

    def predict(self, b, training=False, rng=None):
        if training:
            return ad.add(Tensor(np.zeros(len(b))), self.params["w"])
        self.seen.append(float(self.params["w"].data))
        value = self.script[self.evals]
        self.evals += 1
        return Tensor(np.full(len(b), value))


# -- Adam --------------------------------------------------------------------


def scalar_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
    return theta


def test_adam_matches_scalar_reference():
    grads = [0.3, -1.2, 0.05, 2.0, -0.7]
    p = {"x": Tensor(np.array([1.5, -0.25]))}
    state = AdamState()
    for g in grads:
        adam_step(p, {"x": np.array([g, 2 * g])}, state, 0.01)
    assert p["x"].data[0] == pytest.approx(scalar_adam(1.5, grads, 0.01), abs=1e-15)
    assert p["x"].data[1] == pytest.approx(scalar_adam(-0.25, [2 * g for g in grads], 0.01), abs=1e-15)
    assert state.step == len(grads)


def test_adam_first_step_is_sign_like():
    p = {"x": Tensor(np.array([0.0, 0.0, 0.0]))}
    g = np.array([3.0, -0.001, 0.0])
    adam_step(p, {"x": g}, AdamState(), 0.1)
    np.testing.assert_allclose(p["x"].data, -0.1 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_zero_gradient_leaves_params_and_counts_step():
    p = {"x": Tensor(np.array([1.0, 2.0]))}
    state = AdamState()
    adam_step(p, {"x": np.zeros(2)}, state, 0.1)
    np.testing.assert_array_equal(p["x"].data, [1.0, 2.0])
    assert state.step == 1


def test_adam_identical_gradients_identical_updates():
    p = {"a": Tensor(np.array([1.0])), "b": Tensor(np.array([1.0]))}
    state = AdamState()
    for g in (0.5, -0.2, 0.9):
        adam_step(p, {"a": np.array([g]), "b": np.array([g])}, state, 0.05)
    assert p["a"].data[0] == p["b"].data[0]


def test_adam_nan_gradient_names_parameter():
    p = {"emb": Tensor(np.zeros(2))}
    with pytest.raises(NumericError, match="emb"):
        adam_step(p, {"emb": np.array([np.nan, 0.0])}, AdamState(), 0.1)


# -- evaluation --------------------------------------------------------------


def test_evaluate_perfect_and_constant_predictors():
    assert evaluate_mse(Constant(3.0), batch([3.0, 3.0])) == 0.0
    c = 2.2
    assert evaluate_mse(Constant(c), batch([1.0, 5.0])) == pytest.approx(((c - 1) ** 2 + (c - 5) ** 2) / 2)


def test_evaluate_matches_hand_recomputation():
    ratings = [1, 2, 3, 4, 5, 5, 4, 3, 2, 1]
    # (3.5 - r)^2 summed: 6.25+2.25+0.25+0.25+2.25 twice = 22.5
    assert evaluate_mse(Constant(3.5), batch(ratings), batch_size=3) == pytest.approx(2.25)


def test_evaluate_empty_set_raises():
    with pytest.raises(ValueError):
        evaluate_mse(Constant(1.0), batch([]))


# -- training loop -----------------------------------------------------------


def test_patience_stops_at_epoch_seven_with_epoch_two_params():
    model = Scripted([3.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0])
    cfg = TrainConfig(lr=0.1, max_epochs=10, patience=5, l2=0.0, batch_size=4, record_wall_time=False)
    result = train(model, batch([1.0] * 4), batch([0.0] * 3), cfg)
    assert len(result.history) == 7
    assert result.stopped_early
    assert (result.best_epoch, result.best_dev_mse) == (2, 1.0)
    assert float(model.params["w"].data) == model.seen[1]
    assert model.seen[1] != model.seen[-1]


def test_no_improvement_tolerance_is_strict():
    model = Scripted([1.0] * 10)
    cfg = TrainConfig(lr=0.1, max_epochs=10, patience=3, l2=0.0, record_wall_time=False)
    result = train(model, batch([1.0]), batch([0.0]), cfg)
    assert result.best_epoch == 1 and len(result.history) == 4


def test_history_file_records_every_epoch(tmp_path):
    path = tmp_path / "h.jsonl"
    cfg = TrainConfig(max_epochs=3, patience=3, record_wall_time=False)
    result = train(Constant(0.0), batch([1.0, 2.0]), batch([1.5]), cfg, history_path=path)
    rows = read_history(path)
    assert rows == result.history
    assert [r["epoch"] for r in rows] == [1, 2, 3]
    assert set(rows[0]) == {"epoch", "train_mse", "dev_mse", "wall_ms", "lr"}
    assert rows[0]["wall_ms"] is None


def test_wall_time_is_recorded_by_default():
    result = train(Constant(0.0), batch([1.0]), batch([1.0]), TrainConfig(max_epochs=1, patience=1))
    assert isinstance(result.history[0]["wall_ms"], int)


def test_empty_training_set_raises():
    with pytest.raises(ValueError):
        train(Constant(0.0), batch([]), None, TrainConfig(max_epochs=1, patience=1))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(patience=30, max_epochs=20).validate()
    with pytest.raises(ConfigError):
        TrainConfig(lr=0).validate()


def test_l2_alone_shrinks_parameter_norm_every_step():
    model = MF(BaselineConfig(d=3, dropout=0.0, precision=64), 4, 4, seed=1)
    # predicted rating == target makes the data gradient vanish
    users, items = np.array([0, 1, 2]), np.array([1, 2, 3])
    target = model.score(users, items).data.copy()
    b = Batch(users, items, target, np.arange(3))
    state = AdamState()
    norm = sum(float((p.data ** 2).sum()) for p in model.params.values())
    for step in range(5):
        model.zero_grad()
        with Tape() as tape:
            loss, data_loss = objective(model, b, 1e-2, None, exclude=("bu", "bi"))
        tape.backward(loss)
        adam_step(model.params, {k: p.grad for k, p in model.params.items()}, state, 1e-3)
        new = sum(float((p.data ** 2).sum()) for k, p in model.params.items())
        assert new < norm
        norm = new
        target = model.score(users, items).data.copy()
        b = Batch(users, items, target, np.arange(3))


def test_objective_adds_weighted_sum_of_squares():
    model = Constant(2.0)
    loss, data_loss = objective(model, batch([1.0, 3.0]), 0.5, None)
    assert float(data_loss.data) == 1.0
    assert float(loss.data) == pytest.approx(1.0 + 0.5 * 4.0)


def test_best_parameters_are_restored(planted_dataset):
    ds = planted_dataset
    model = MF.for_dataset(BaselineConfig(d=8, precision=64), ds, seed=0)
    cfg = TrainConfig(lr=0.05, max_epochs=12, patience=3, record_wall_time=False)
    result = train(model, ds.examples("train"), ds.examples("dev"), cfg)
    assert evaluate_mse(model, ds.examples("dev")) == result.best_dev_mse
    assert result.best_dev_mse == min(r["dev_mse"] for r in result.history)
    assert result.best_epoch != len(result.history) or not result.stopped_early


def test_same_seed_same_history_bitwise(planted_dataset):
    ds = planted_dataset

    def run():
        m = MPCN.for_dataset(MpcnConfig(d=6, n_pointers=2, fm_factors=3, precision=64), ds, seed=4)
        cfg = TrainConfig(max_epochs=2, patience=2, seed=9, record_wall_time=False)
        return train(m, ds.examples("train"), ds.examples("dev"), cfg).history

    assert run() == run()


def test_loss_falls_over_first_three_epochs(planted_dataset):
    ds = planted_dataset
    curves = []
    for seed in range(3):
        m = MPCN.for_dataset(MpcnConfig(d=8, n_pointers=2, fm_factors=4), ds, seed=seed)
        cfg = TrainConfig(max_epochs=3, patience=3, seed=seed, record_wall_time=False)
        curves.append([r["train_mse"] for r in train(m, ds.examples("train"), None, cfg).history])
    mean = np.mean(curves, axis=0)
    assert mean[0] > mean[1] > mean[2]
