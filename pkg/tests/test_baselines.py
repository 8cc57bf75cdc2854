import numpy as np
import pytest

from seqkan.baselines import (
    LstmModel,
    RnnModel,
    match_parameter_count,
    parameter_match_report,
    smallest_hidden,
)
from seqkan.engine import Tape
from seqkan.errors import ConfigError, UsageError
from seqkan.models import make_rng

from conftest import assert_outputs_grad_match


def logits(model, X):
    zE, zQ = model.predict_logits(X)
    return float(zE), float(zQ)


def both(model, X):
    def outputs(tape, params):
        out = model.forward(tape, params, X)
        return [out.energy, out.eq]

    return outputs


def rnn_count_oracle(H):
    # input weights, recurrent weights, hidden bias, readout weights, readout bias
    return 2 * H + H * H + H + 2 * H + 2


def lstm_count_oracle(H):
    return 4 * (2 * H + H * H + H) + 2 * H + 2


def test_parameter_counts_match_oracle():
    for H in range(1, 12):
        assert RnnModel.count(H) == rnn_count_oracle(H)
        assert LstmModel.count(H) == lstm_count_oracle(H)
        assert RnnModel.create(H).n_params == RnnModel.count(H)


def test_match_target_90():
    h_r = min(H for H in range(1, 50) if rnn_count_oracle(H) >= 90)
    h_l = min(H for H in range(1, 50) if lstm_count_oracle(H) >= 90)
    assert match_parameter_count(90) == (h_r, h_l) == (8, 4)


def test_exact_count_target():
    assert smallest_hidden(RnnModel, RnnModel.count(6)) == 6
    assert smallest_hidden(LstmModel, LstmModel.count(3)) == 3


def test_tiny_target_floors_at_one_and_flags():
    assert match_parameter_count(1) == (1, 1)
    report = parameter_match_report(1)
    assert report["rnn"]["within_slack"] is False
    assert report["lstm"]["hidden"] == 1


def test_report_for_seqkan_target():
    report = parameter_match_report(90)
    assert report["rnn"]["params"] == 106
    assert report["lstm"]["params"] == 122
    assert report["rnn"]["overshoot"] == pytest.approx(16 / 90)


def test_rnn_zero_weights_give_readout_bias(rng):
    m = RnnModel.create(4)
    m.weights["by"] = np.array([0.3, -0.7])
    assert logits(m, rng.normal(size=(10, 2))) == (0.3, -0.7)


def test_rnn_locality_without_recurrence(rng):
    m = RnnModel.create(4, rng=rng)
    m.weights["Whh"][:] = 0.0
    X = rng.normal(size=(10, 2))
    Y = rng.normal(size=(10, 2))
    Y[-1] = X[-1]
    assert logits(m, X) == logits(m, Y)


def test_rnn_single_step_by_hand(rng):
    m = RnnModel.create(3, rng=rng)
    X = rng.normal(size=(2, 2))
    W = m.weights
    h = np.zeros(3)
    for x in X:
        h = np.tanh(x @ W["Wxh"] + h @ W["Whh"] + W["bh"])
    assert np.allclose(logits(m, X), h @ W["Why"] + W["by"], rtol=1e-13)


def test_lstm_zero_parameters():
    m = LstmModel.create(3)
    m.weights["by"] = np.array([1.5, 2.5])
    assert logits(m, np.ones((10, 2))) == (1.5, 2.5)


def test_lstm_closed_gates_keep_cell_at_zero(rng):
    m = LstmModel.create(3, rng=rng)
    m.weights["b_f"][:] = -1e3
    m.weights["b_i"][:] = -1e3
    for k in ("Wx_f", "Wh_f", "Wx_i", "Wh_i"):
        m.weights[k][:] = 0.0
    X = rng.normal(size=(10, 2))
    tape = Tape()
    _, states = m.run(tape, tape.parameters(m.get_params()), X)
    assert all(abs(c.data) < 1e-300 for c in states[-1][1])
    assert np.allclose(logits(m, X), m.weights["by"], atol=1e-300)


def test_lstm_open_gates_accumulate_candidate():
    m = LstmModel.create(2)
    m.weights["b_f"][:] = 30.0
    m.weights["b_i"][:] = 30.0
    m.weights["b_o"][:] = 30.0
    m.weights["b_g"][:] = [0.4, -0.2]
    tape = Tape()
    T = 10
    _, states = m.run(tape, tape.parameters(m.get_params()), np.zeros((T, 2)))
    cell = [c.data for c in states[-1][1]]
    assert np.allclose(cell, T * np.tanh([0.4, -0.2]), atol=1e-3)


@pytest.mark.parametrize("cls,hidden", [(RnnModel, 8), (LstmModel, 4)])
@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(cls, hidden, seed):
    rng = make_rng(seed)
    m = cls.create(hidden, rng=rng)
    X = rng.uniform(-1.5, 1.5, (10, 2))
    assert_outputs_grad_match(m, both(m, X))


def test_batched_matches_single(rng):
    for m in (RnnModel.create(5, rng=rng), LstmModel.create(3, rng=rng)):
        X = rng.normal(size=(4, 10, 2))
        zE, zQ = m.predict_logits(X)
        for i in range(4):
            e, q = logits(m, X[i])
            assert zE[i] == pytest.approx(e, rel=1e-13, abs=1e-15)
            assert zQ[i] == pytest.approx(q, rel=1e-13, abs=1e-15)


def test_dimension_mismatch(rng):
    m = RnnModel.create(2, rng=rng)
    with pytest.raises(UsageError):
        m.predict_logits(np.zeros((10, 3)))
    with pytest.raises(UsageError):
        m.set_params(np.zeros(3))
    with pytest.raises(ConfigError):
        RnnModel(0)
    with pytest.raises(ConfigError):
        RnnModel(2, {**m.weights, "Whh": np.zeros((3, 3))})


def test_uniform_init_bound():
    m = LstmModel.create(4, rng=make_rng(0))
    assert np.all(np.abs(m.get_params()) <= 0.5)


def test_round_trip(rng):
    for m in (RnnModel.create(8, rng=rng), LstmModel.create(4, rng=rng)):
        copy = type(m).from_dict(m.to_dict())
        X = rng.normal(size=(10, 10, 2))
        for u, v in zip(m.predict_logits(X), copy.predict_logits(X)):
            assert np.array_equal(u, v)
