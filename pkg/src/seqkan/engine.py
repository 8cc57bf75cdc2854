"""Scalar reverse-mode automatic differentiation.

Every node holds one real number per sample. To keep training tractable the
``data`` of a node may be a 1-D float64 array (one lane per sample in the batch)
instead of a Python float; lanes never interact except through ``mean``/``sum``
reductions. Parameters are always true scalars and receive the lane-summed
adjoint.

The tape is rebuilt for every forward pass::

    tape = Tape()
    w, = tape.parameters([0.5])
    x = tape.const(2.0)
    y = (w * x).sin()
    tape.zero_grad()
    grads = tape.backward(y)
"""

import math

import numpy as np

from .errors import GradArithmeticError, UsageError


def _sigmoid(z):
    # split by sign so exp never overflows
    if np.ndim(z) == 0:
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


class Value:
    """A node in the differentiation graph.

    ``parents`` and ``partials`` are aligned; ``partials[i]`` is the local
    derivative of this node with respect to ``parents[i]``. Fused ops may
    instead store a callable mapping the node's adjoint to one contribution
    per parent.
    """

    __slots__ = ("tape", "id", "data", "grad", "op", "parents", "partials")
    __array_ufunc__ = None  # numpy scalars on the left must defer to Value

    def __init__(self, tape, data, op, parents=(), partials=()):
        self.tape = tape
        self.data = data
        self.grad = 0.0
        self.op = op
        self.parents = parents
        self.partials = partials
        self.id = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def parent_ids(self):
        return [p.id for p in self.parents]

    def __repr__(self):
        return f"Value(id={self.id}, op={self.op!r}, data={self.data!r})"

    def _lift(self, other):
        if isinstance(other, Value):
            if other.tape is not self.tape:
                raise UsageError("operands live on different tapes")
            return other
        return self.tape.const(other)

    # arithmetic

    def __add__(self, other):
        other = self._lift(other)
        return Value(self.tape, self.data + other.data, "add", (self, other), (1.0, 1.0))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Value(self.tape, self.data - other.data, "sub", (self, other), (1.0, -1.0))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        return Value(self.tape, self.data * other.data, "mul", (self, other), (other.data, self.data))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        b = other.data
        if np.any(b == 0):
            raise GradArithmeticError("division by zero", (self.id, other.id))
        q = self.data / b
        return Value(self.tape, q, "div", (self, other), (1.0 / b, -q / b))

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return Value(self.tape, -self.data, "neg", (self,), (-1.0,))

    def __pow__(self, exponent):
        if isinstance(exponent, Value):
            raise UsageError("only constant exponents are supported")
        x = self.data
        if not float(exponent).is_integer() and np.any(x < 0):
            raise GradArithmeticError("fractional power of a negative number", (self.id,))
        return Value(self.tape, x**exponent, "pow", (self,), (exponent * x ** (exponent - 1),))

    # elementary functions

    def sin(self):
        return Value(self.tape, np.sin(self.data), "sin", (self,), (np.cos(self.data),))

    def cos(self):
        return Value(self.tape, np.cos(self.data), "cos", (self,), (-np.sin(self.data),))

    def exp(self):
        e = np.exp(self.data)
        return Value(self.tape, e, "exp", (self,), (e,))

    def log(self):
        if np.any(self.data <= 0):
            raise GradArithmeticError("log of a non-positive number", (self.id,))
        return Value(self.tape, np.log(self.data), "log", (self,), (1.0 / self.data,))

    def tanh(self):
        t = np.tanh(self.data)
        return Value(self.tape, t, "tanh", (self,), (1.0 - t * t,))

    def sigmoid(self):
        s = _sigmoid(self.data)
        return Value(self.tape, s, "sigmoid", (self,), (s * (1.0 - s),))

    def silu(self):
        s = _sigmoid(self.data)
        x = self.data
        return Value(self.tape, x * s, "silu", (self,), (s * (1.0 + x * (1.0 - s)),))

    def abs(self):
        return Value(self.tape, np.abs(self.data), "abs", (self,), (np.sign(self.data),))

    def mean(self):
        """Average over the batch lanes (identity on a scalar node)."""
        n = np.size(self.data)
        return Value(self.tape, float(np.mean(self.data)), "mean", (self,), (1.0 / n,))

    def sum(self):
        return Value(self.tape, float(np.sum(self.data)), "sum", (self,), (1.0,))


class Tape:
    """Append-only record of every node created during one forward pass."""

    def __init__(self):
        self.nodes = []
        self.parameter_ids = set()

    def const(self, data):
        return Value(self, _as_data(data), "const")

    def parameter(self, data):
        v = Value(self, float(data), "param")
        self.parameter_ids.add(v.id)
        return v

    def parameters(self, values):
        return [self.parameter(v) for v in values]

    def record(self, op, data, parents, partials):
        """Append a node with caller-supplied local partials or a vjp callable."""
        for p in parents:
            if p.tape is not self:
                raise UsageError("operands live on different tapes")
        if not callable(partials):
            partials = tuple(partials)
        return Value(self, data, op, tuple(parents), partials)

    def add(self, values):
        """n-ary sum, one node regardless of fan-in."""
        values = list(values)
        if not values:
            return self.const(0.0)
        data = values[0].data
        for v in values[1:]:
            data = data + v.data
        return self.record("add", data, values, (1.0,) * len(values))

    def dot(self, weights, inputs, bias=None):
        """sum_i weights[i] * inputs[i] + bias as a single node."""
        if len(weights) != len(inputs):
            raise UsageError(f"dot: {len(weights)} weights for {len(inputs)} inputs")
        data = 0.0 if bias is None else bias.data
        for w, x in zip(weights, inputs):
            data = data + w.data * x.data
        parents = list(weights) + list(inputs)
        partials = [x.data for x in inputs] + [w.data for w in weights]
        if bias is not None:
            parents.append(bias)
            partials.append(1.0)
        return self.record("dot", data, parents, partials)

    def bce_with_logits(self, z, y):
        """-[y log s(z) + (1-y) log(1-s(z))] in the stable softplus(z) - y*z form."""
        y = _as_data(y)
        data = _softplus(z.data) - y * z.data
        return self.record("bce", data, (z,), (_sigmoid(z.data) - y,))

    def zero_grad(self):
        for node in self.nodes:
            node.grad = 0.0

    def backward(self, root):
        """Accumulate d(root)/d(node) into every node's ``grad``.

        Returns ``{parameter id: grad}``. Gradients add to whatever is already
        stored, so call :meth:`zero_grad` first when reusing a tape.
        """
        if root.tape is not self:
            raise UsageError("root does not belong to this tape")
        if np.size(root.data) != 1:
            raise UsageError("backward needs a scalar root; reduce with mean() first")
        root.grad = root.grad + 1.0
        nodes = self.nodes
        ndarray = np.ndarray
        for i in range(root.id, -1, -1):
            node = nodes[i]
            g = node.grad
            if not node.parents or (type(g) is float and g == 0.0):
                continue
            local = node.partials
            if callable(local):
                pairs = zip(node.parents, local(g))
                for parent, contrib in pairs:
                    if type(contrib) is ndarray and type(parent.data) is not ndarray:
                        contrib = float(contrib.sum())
                    parent.grad = parent.grad + contrib
                continue
            lanes = type(g) is ndarray
            gsum = None
            for parent, d in zip(node.parents, local):
                if type(parent.data) is ndarray:
                    parent.grad = parent.grad + g * d
                elif not lanes:
                    c = g * d
                    parent.grad = parent.grad + (float(c.sum()) if type(c) is ndarray else c)
                elif type(d) is ndarray:
                    parent.grad = parent.grad + float(np.dot(g, d))
                else:
                    if gsum is None:
                        gsum = float(g.sum())
                    parent.grad = parent.grad + gsum * d
        return {i: nodes[i].grad for i in self.parameter_ids}


def _as_data(x):
    if isinstance(x, np.ndarray):
        return x.astype(np.float64, copy=False)
    return float(x)
