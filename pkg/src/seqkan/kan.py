"""KAN layers and the two recurrent architectures built from them.

A layer maps ``in_dim`` inputs to ``out_dim`` outputs through one activation
edge per (input, output) pair; output q is the plain sum over p of
phi_pq(x_p). There are no node weights and no biases.

``SeqKanModel`` runs the hidden-state layer ``phi_h`` ([3, 1]) over the window
and then the output layer ``phi_o`` ([3, 2]) once, on the final hidden state
and the inputs of the step before the last. ``SeqKanWideModel`` has a 3-wide
hidden state and no previous-input feed.
"""

from typing import NamedTuple

import numpy as np

from .engine import Tape, Value
from .errors import ConfigError, UsageError
from .spline import ActivationEdge, SplineBasis

FORMAT_VERSION = 1
DEFAULT_LAMBDA = 1e-3


class ModelOutput(NamedTuple):
    energy: Value
    eq: Value
    # (layer, p, q) -> list of that edge's output nodes, one per evaluation
    activations: dict


class KanLayer:
    def __init__(self, in_dim, out_dim, basis, edges=None, rng=None):
        if in_dim < 1 or out_dim < 1:
            raise ConfigError("layer dims must be positive")
        self.in_dim, self.out_dim = in_dim, out_dim
        self.basis = basis
        if edges is None:
            if rng is None:
                edges = [[ActivationEdge(basis, 0.0, 0.0) for _ in range(out_dim)] for _ in range(in_dim)]
            else:
                edges = [[ActivationEdge.initialized(basis, rng) for _ in range(out_dim)] for _ in range(in_dim)]
        self.edges = edges

    @property
    def mask(self):
        return np.array([[not e.masked for e in row] for row in self.edges])

    @property
    def n_params(self):
        return sum(e.n_params for row in self.edges for e in row)

    def __iter__(self):
        for p in range(self.in_dim):
            for q in range(self.out_dim):
                yield p, q, self.edges[p][q]

    def forward(self, xs, params, name="layer", activations=None):
        """``params`` is this layer's slice of bound parameter nodes."""
        if len(xs) != self.in_dim:
            raise UsageError(f"{name}: expected {self.in_dim} inputs, got {len(xs)}")
        tape = xs[0].tape
        terms = [[] for _ in range(self.out_dim)]
        shared = {}
        off = 0
        for p, q, edge in self:
            n = edge.n_params
            if not edge.masked:
                if p not in shared:
                    shared[p] = (xs[p].silu(), self.basis.basis_and_derivative(xs[p].data))
                silu_x, cached = shared[p]
                y = edge.forward(xs[p], params[off : off + n], silu_x, cached)
                terms[q].append(y)
                if activations is not None:
                    activations.setdefault((name, p, q), []).append(y)
            off += n
        return [tape.add(t) if t else tape.const(0.0) for t in terms]

    def to_dict(self):
        return {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "edges": [
                {
                    "in": p,
                    "out": q,
                    "w1": e.w1,
                    "w2": e.w2,
                    "coefficients": e.coef.tolist(),
                    "masked": e.masked,
                    "importance": e.importance,
                }
                for p, q, e in self
            ],
        }

    @classmethod
    def from_dict(cls, d, basis):
        layer = cls(d["in_dim"], d["out_dim"], basis)
        for rec in d["edges"]:
            e = ActivationEdge(basis, rec["w1"], rec["w2"], rec["coefficients"], rec["importance"], rec["masked"])
            layer.edges[rec["in"]][rec["out"]] = e
        return layer


def layer_forward(layer, x):
    """Evaluate a layer on plain inputs; builds a throwaway tape."""
    tape = Tape()
    params = tape.parameters(np.concatenate([e.get_params() for _, _, e in layer]))
    xs = [tape.const(v) for v in x]
    return [v.data for v in layer.forward(xs, params)]


class _KanSequenceModel:
    architecture = None
    layer_names = ("phi_h", "phi_o")

    def __init__(self, phi_h, phi_o, h_init, meta=None):
        self.phi_h, self.phi_o = phi_h, phi_o
        self.h_init = np.asarray(h_init, dtype=np.float64)
        self.meta = dict(meta or {})

    @property
    def basis(self):
        return self.phi_h.basis

    def layers(self):
        return {"phi_h": self.phi_h, "phi_o": self.phi_o}

    def edges(self):
        for name, layer in self.layers().items():
            for p, q, e in layer:
                yield name, p, q, e

    @property
    def n_params(self):
        return self.phi_h.n_params + self.phi_o.n_params

    def get_params(self):
        return np.concatenate([e.get_params() for *_, e in self.edges()])

    def set_params(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_params,):
            raise UsageError(f"expected {self.n_params} parameters, got {v.shape}")
        off = 0
        for *_, e in self.edges():
            e.set_params(v[off : off + e.n_params])
            off += e.n_params

    def _split(self, params):
        n = self.phi_h.n_params
        return params[:n], params[n:]

    def update_importance(self, activations):
        """Refresh every edge's importance from one forward pass's activations."""
        for name, p, q, e in self.edges():
            nodes = activations.get((name, p, q))
            if nodes:
                e.importance = float(np.mean([np.mean(np.abs(v.data)) for v in nodes]))
            else:
                e.importance = 0.0

    def predict_logits(self, X):
        tape = Tape()
        out = self.forward(tape, tape.parameters(self.get_params()), X)
        return np.asarray(out.energy.data), np.asarray(out.eq.data)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "architecture": self.architecture,
            "grid": self.basis.spec(),
            "h_init": self.h_init.tolist(),
            "layers": {name: layer.to_dict() for name, layer in self.layers().items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        basis = SplineBasis.from_spec(d["grid"])
        phi_h = KanLayer.from_dict(d["layers"]["phi_h"], basis)
        phi_o = KanLayer.from_dict(d["layers"]["phi_o"], basis)
        return cls(phi_h, phi_o, d["h_init"], d.get("meta"))


def _steps(tape, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim not in (2, 3) or X.shape[-1] != 2:
        raise UsageError(f"window must have shape (T, 2) or (B, T, 2), got {X.shape}")
    T = X.shape[-2]
    if T < 2:
        raise UsageError("window needs at least two steps")
    if X.ndim == 2:
        return [(tape.const(float(X[t, 0])), tape.const(float(X[t, 1]))) for t in range(T)]
    return [(tape.const(X[:, t, 0].copy()), tape.const(X[:, t, 1].copy())) for t in range(T)]


class SeqKanModel(_KanSequenceModel):
    architecture = "seqkan"

    @classmethod
    def create(cls, rng=None, basis=None):
        """Random init when ``rng`` is given, all-zero edges otherwise."""
        basis = basis or SplineBasis()
        return cls(KanLayer(3, 1, basis, rng=rng), KanLayer(3, 2, basis, rng=rng), 0.0)

    def forward(self, tape, params, X) -> ModelOutput:
        ph, po = self._split(params)
        steps = _steps(tape, X)
        acts = {}
        h = tape.const(float(self.h_init))
        for theta, omega in steps:
            (h,) = self.phi_h.forward([theta, omega, h], ph, "phi_h", acts)
        theta_prev, omega_prev = steps[-2]
        energy, eq = self.phi_o.forward([h, theta_prev, omega_prev], po, "phi_o", acts)
        return ModelOutput(energy, eq, acts)


class SeqKanWideModel(_KanSequenceModel):
    architecture = "seqkan-wide"

    @classmethod
    def create(cls, rng=None, basis=None, width=3):
        basis = basis or SplineBasis()
        return cls(KanLayer(2 + width, width, basis, rng=rng), KanLayer(width, 2, basis, rng=rng), np.zeros(width))

    @property
    def width(self):
        return self.phi_h.out_dim

    def forward(self, tape, params, X) -> ModelOutput:
        ph, po = self._split(params)
        acts = {}
        h = [tape.const(float(v)) for v in self.h_init]
        for theta, omega in _steps(tape, X):
            h = self.phi_h.forward([theta, omega, *h], ph, "phi_h", acts)
        energy, eq = self.phi_o.forward(h, po, "phi_o", acts)
        return ModelOutput(energy, eq, acts)


def sparsity_penalty(tape, activations, lam=DEFAULT_LAMBDA):
    """lam * sum over live edges of the mean |phi(x)| across evaluations and batch."""
    per_edge = []
    for nodes in activations.values():
        means = [v.abs().mean() for v in nodes]
        per_edge.append(tape.add(means) * (1.0 / len(means)))
    return tape.add(per_edge) * lam


def valid_edges(model):
    return [f"{name}:{p}:{q}" for name, p, q, _ in model.edges()]


def parse_edge(spec):
    try:
        name, p, q = spec.split(":")
        return name, int(p), int(q)
    except ValueError:
        raise UsageError(f"edge spec {spec!r} is not of the form layer:in:out") from None


def prune_edge(model, layer_id, in_idx, out_idx):
    layers = model.layers()
    if layer_id not in layers:
        raise UsageError(f"unknown layer {layer_id!r}; valid edges: {', '.join(valid_edges(model))}")
    layer = layers[layer_id]
    if not (0 <= in_idx < layer.in_dim and 0 <= out_idx < layer.out_dim):
        raise UsageError(
            f"no edge {layer_id}:{in_idx}:{out_idx}; valid edges: {', '.join(valid_edges(model))}"
        )
    edge = layer.edges[in_idx][out_idx]
    if edge.masked:
        raise UsageError(f"edge {layer_id}:{in_idx}:{out_idx} is already pruned")
    edge.masked = True
    model.meta.setdefault("pruned", []).append(f"{layer_id}:{in_idx}:{out_idx}")
    return model


def prune_below(model, rel_threshold=0.01):
    """Mask every live edge whose importance is under ``rel_threshold`` of its layer's max."""
    pruned = []
    for name, layer in model.layers().items():
        live = [(p, q, e) for p, q, e in layer if not e.masked]
        if not live:
            continue
        top = max(e.importance for _, _, e in live)
        for p, q, e in live:
            if e.importance < rel_threshold * top:
                prune_edge(model, name, p, q)
                pruned.append(f"{name}:{p}:{q}")
    return pruned


class KanRegressor:
    """A single KAN layer exposed with the model parameter interface (used for curve fits)."""

    architecture = "kan-layer"

    def __init__(self, layer):
        self.layer = layer

    @classmethod
    def create(cls, in_dim=1, out_dim=1, rng=None, basis=None):
        return cls(KanLayer(in_dim, out_dim, basis or SplineBasis(), rng=rng))

    @property
    def n_params(self):
        return self.layer.n_params

    def get_params(self):
        return np.concatenate([e.get_params() for _, _, e in self.layer])

    def set_params(self, v):
        off = 0
        for _, _, e in self.layer:
            e.set_params(v[off : off + e.n_params])
            off += e.n_params

    def forward(self, tape, params, x):
        """``x`` has shape (B, in_dim) or (in_dim,)."""
        x = np.asarray(x, dtype=np.float64)
        cols = [tape.const(x[..., p].copy() if x.ndim > 1 else float(x[p])) for p in range(self.layer.in_dim)]
        return self.layer.forward(cols, params)

    def predict(self, x):
        tape = Tape()
        return [np.asarray(v.data) for v in self.forward(tape, tape.parameters(self.get_params()), x)]
