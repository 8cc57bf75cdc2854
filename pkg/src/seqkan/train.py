"""Joint binary cross-entropy training with Adam, and split evaluation."""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .engine import Tape, _sigmoid
from .errors import NumericAbort, UndefinedMetricError, UsageError
from .kan import DEFAULT_LAMBDA, sparsity_penalty
from .metrics import compute_metrics

log = logging.getLogger(__name__)

LABELS = ("energy", "eq")


@dataclass
class TrainConfig:
    epochs: int = 3000
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lam: float = DEFAULT_LAMBDA
    seed: int = 0
    batch: str = "full"

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError("epochs must be positive")
        if self.lr < 0:
            raise UsageError("learning rate must be non-negative")
        if self.batch != "full":
            raise UsageError("only full-batch training is supported")

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, n, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads * grads
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def bce_loss(tape, logits, labels):
    """Mean over both labels (and the batch) of the per-label BCE on logits."""
    terms = [tape.bce_with_logits(z, np.asarray(y, dtype=np.float64) if np.ndim(y) else float(y)).mean()
             for z, y in zip(logits, labels)]
    return tape.add(terms) * (1.0 / len(terms))


def _abort(model, epoch, value):
    norms = {"param_norm": float(np.linalg.norm(model.get_params()))}
    if hasattr(model, "edges"):
        for name, p, q, e in model.edges():
            norms[f"{name}:{p}:{q}"] = float(np.linalg.norm(e.get_params()))
    raise NumericAbort(f"non-finite loss {value} at epoch {epoch}", norms)


def optimize(model, build_objective, config, callback=None):
    """Generic full-batch Adam loop.

    ``build_objective(tape, params)`` returns ``(objective, extras)``; the
    callback receives ``(epoch, objective_value, extras)``. Returns the list
    of per-epoch objective values.
    """
    opt = Adam(model.n_params, config.lr, config.beta1, config.beta2, config.eps)
    history = []
    for epoch in range(config.epochs):
        tape = Tape()
        params = tape.parameters(model.get_params())
        objective, extras = build_objective(tape, params)
        value = float(objective.data)
        if not np.isfinite(value):
            _abort(model, epoch, value)
        tape.zero_grad()
        tape.backward(objective)
        grads = np.array([p.grad for p in params])
        if not np.all(np.isfinite(grads)):
            _abort(model, epoch, "gradient")
        model.set_params(opt.step(model.get_params(), grads))
        history.append(value)
        if callback is not None:
            callback(epoch, value, extras)
    return history


@dataclass
class TrainResult:
    model: object
    objective: list
    bce: list


def train(model, X, y_energy, y_eq, config, log_every=500):
    """Fit a sequence classifier; KAN models also pay the sparsity penalty."""
    if len(X) == 0:
        raise UsageError("empty training set")
    has_edges = hasattr(model, "update_importance")
    bce_curve = []

    def objective(tape, params):
        out = model.forward(tape, params, X)
        loss = bce_loss(tape, (out.energy, out.eq), (y_energy, y_eq))
        bce_curve.append(float(loss.data))
        if has_edges and config.lam:
            return loss + sparsity_penalty(tape, out.activations, config.lam), out
        return loss, out

    def callback(epoch, value, out):
        if has_edges:
            model.update_importance(out.activations)
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            log.info("%s seed=%d epoch=%d objective=%.6f bce=%.6f",
                     model.architecture, config.seed, epoch, value, bce_curve[-1])

    history = optimize(model, objective, config, callback)
    return TrainResult(model, history, bce_curve)


def fit_regression(regressor, x, y, config):
    """Squared-error fit of a one-output KanRegressor. Returns the MSE curve."""

    def objective(tape, params):
        (pred,) = regressor.forward(tape, params, x)
        err = pred - tape.const(y)
        return (err * err).mean(), None

    return optimize(regressor, objective, config)


def predict_scores(model, X):
    zE, zQ = model.predict_logits(X)
    return _sigmoid(np.atleast_1d(zE)), _sigmoid(np.atleast_1d(zQ))


def evaluate(model, X, y_energy, y_eq):
    """Per-label metrics; an undefined metric is reported in place instead of raising."""
    scores = predict_scores(model, X)
    out = {}
    for label, s, y in zip(LABELS, scores, (y_energy, y_eq)):
        try:
            out[label] = compute_metrics(s, y).to_dict()
        except UndefinedMetricError as exc:
            out[label] = {"error": str(exc)}
    return out
