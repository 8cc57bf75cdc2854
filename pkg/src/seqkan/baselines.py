"""RNN and LSTM classifiers built on the scalar engine, one node per hidden unit."""

import math

import numpy as np

from .engine import Tape
from .errors import ConfigError, UsageError
from .kan import FORMAT_VERSION, ModelOutput, _steps

N_INPUTS = 2
N_OUTPUTS = 2
PARITY_SLACK = 0.15


class _DenseModel:
    architecture = None

    def __init__(self, hidden, weights=None, meta=None):
        if hidden < 1:
            raise ConfigError("hidden size must be positive")
        self.hidden = int(hidden)
        self.meta = dict(meta or {})
        shapes = self.shapes(self.hidden)
        if weights is None:
            weights = {k: np.zeros(s) for k, s in shapes.items()}
        self.weights = {}
        for k, s in shapes.items():
            w = np.asarray(weights[k], dtype=np.float64)
            if w.shape != s:
                raise ConfigError(f"{k}: expected shape {s}, got {w.shape}")
            self.weights[k] = w

    @staticmethod
    def shapes(hidden):
        raise NotImplementedError

    @classmethod
    def count(cls, hidden):
        return sum(math.prod(s) for s in cls.shapes(hidden).values())

    @classmethod
    def create(cls, hidden, rng=None):
        """Uniform(-1/sqrt(H), 1/sqrt(H)) init when ``rng`` is given, zeros otherwise."""
        if rng is None:
            return cls(hidden)
        bound = 1.0 / math.sqrt(hidden)
        return cls(hidden, {k: rng.uniform(-bound, bound, s) for k, s in cls.shapes(hidden).items()})

    @property
    def n_params(self):
        return self.count(self.hidden)

    def get_params(self):
        return np.concatenate([w.ravel() for w in self.weights.values()])

    def set_params(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_params,):
            raise UsageError(f"expected {self.n_params} parameters, got {v.shape}")
        off = 0
        for k, w in self.weights.items():
            self.weights[k] = v[off : off + w.size].reshape(w.shape).copy()
            off += w.size

    def _bind(self, params):
        """Slice flat parameter nodes into nested lists shaped like the weights."""
        out, off = {}, 0
        for k, w in self.weights.items():
            flat = params[off : off + w.size]
            off += w.size
            if w.ndim == 1:
                out[k] = list(flat)
            else:
                cols = w.shape[1]
                out[k] = [list(flat[r * cols : (r + 1) * cols]) for r in range(w.shape[0])]
        return out

    def _readout(self, tape, P, h):
        return [tape.dot([P["Why"][k][j] for k in range(self.hidden)], h, P["by"][j]) for j in range(N_OUTPUTS)]

    def predict_logits(self, X):
        tape = Tape()
        out = self.forward(tape, tape.parameters(self.get_params()), X)
        return np.asarray(out.energy.data), np.asarray(out.eq.data)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "architecture": self.architecture,
            "hidden": self.hidden,
            "weights": {k: w.tolist() for k, w in self.weights.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["hidden"], d["weights"], d.get("meta"))


class RnnModel(_DenseModel):
    architecture = "rnn"

    @staticmethod
    def shapes(hidden):
        return {
            "Wxh": (N_INPUTS, hidden),
            "Whh": (hidden, hidden),
            "bh": (hidden,),
            "Why": (hidden, N_OUTPUTS),
            "by": (N_OUTPUTS,),
        }

    def forward(self, tape, params, X) -> ModelOutput:
        P = self._bind(params)
        H = self.hidden
        h = [tape.const(0.0) for _ in range(H)]
        for theta, omega in _steps(tape, X):
            x = [theta, omega]
            h = [
                tape.dot(
                    [P["Wxh"][i][j] for i in range(N_INPUTS)] + [P["Whh"][k][j] for k in range(H)],
                    x + h,
                    P["bh"][j],
                ).tanh()
                for j in range(H)
            ]
        energy, eq = self._readout(tape, P, h)
        return ModelOutput(energy, eq, {})


GATES = ("i", "f", "o", "g")


class LstmModel(_DenseModel):
    architecture = "lstm"

    @staticmethod
    def shapes(hidden):
        s = {}
        for g in GATES:
            s[f"Wx_{g}"] = (N_INPUTS, hidden)
            s[f"Wh_{g}"] = (hidden, hidden)
            s[f"b_{g}"] = (hidden,)
        s["Why"] = (hidden, N_OUTPUTS)
        s["by"] = (N_OUTPUTS,)
        return s

    def run(self, tape, params, X):
        """Unroll the cell; returns bound params and the per-step (h, c) lists."""
        P = self._bind(params)
        H = self.hidden
        h = [tape.const(0.0) for _ in range(H)]
        c = [tape.const(0.0) for _ in range(H)]
        states = []
        for theta, omega in _steps(tape, X):
            x = [theta, omega]

            def pre(g, j):
                w = [P[f"Wx_{g}"][i][j] for i in range(N_INPUTS)] + [P[f"Wh_{g}"][k][j] for k in range(H)]
                return tape.dot(w, x + h, P[f"b_{g}"][j])

            i_g = [pre("i", j).sigmoid() for j in range(H)]
            f_g = [pre("f", j).sigmoid() for j in range(H)]
            o_g = [pre("o", j).sigmoid() for j in range(H)]
            cand = [pre("g", j).tanh() for j in range(H)]
            c = [f_g[j] * c[j] + i_g[j] * cand[j] for j in range(H)]
            h = [o_g[j] * c[j].tanh() for j in range(H)]
            states.append((h, c))
        return P, states

    def forward(self, tape, params, X) -> ModelOutput:
        P, states = self.run(tape, params, X)
        energy, eq = self._readout(tape, P, states[-1][0])
        return ModelOutput(energy, eq, {})


def smallest_hidden(cls, target):
    """Smallest H whose parameter count reaches ``target``."""
    H = 1
    while cls.count(H) < target:
        H += 1
    return H


def match_parameter_count(target):
    """(H_rnn, H_lstm) giving each baseline at least ``target`` parameters."""
    return smallest_hidden(RnnModel, target), smallest_hidden(LstmModel, target)


def parameter_match_report(target):
    h_r, h_l = match_parameter_count(target)
    report = {"target": target}
    for name, cls, h in (("rnn", RnnModel, h_r), ("lstm", LstmModel, h_l)):
        n = cls.count(h)
        report[name] = {
            "hidden": h,
            "params": n,
            "overshoot": n / target - 1.0,
            "within_slack": n <= (1.0 + PARITY_SLACK) * target,
        }
    return report
