"""Uniform B-splines and the KAN activation edge phi(x) = w1*silu(x) + w2*spline(x)."""

from dataclasses import dataclass

import numpy as np

from .engine import Value, _sigmoid
from .errors import ConfigError, UsageError

SAMPLE_POINTS = 201


class SplineBasis:
    """B-spline basis on a uniform grid over ``[lo, hi]``.

    ``degree`` is the polynomial degree (3 = cubic). The knot vector is the
    uniform grid extended by ``degree`` knots on each side, which gives
    ``intervals + degree`` basis functions that form a partition of unity on
    ``[lo, hi]``. Inputs outside the domain are clamped.
    """

    def __init__(self, lo=-3.0, hi=3.0, intervals=5, degree=3):
        if not hi > lo:
            raise ConfigError(f"spline domain [{lo}, {hi}] is empty")
        if intervals < 1 or degree < 1:
            raise ConfigError("spline needs at least one interval and degree >= 1")
        self.lo, self.hi = float(lo), float(hi)
        self.intervals = int(intervals)
        self.degree = int(degree)
        self.h = (self.hi - self.lo) / self.intervals
        self.knots = self.lo + self.h * np.arange(-self.degree, self.intervals + self.degree + 1)
        if np.any(np.diff(self.knots) <= 0):
            raise ConfigError("spline knots must be strictly increasing")

    @property
    def order(self):
        return self.degree + 1

    @property
    def n_coef(self):
        return self.intervals + self.degree

    def spec(self):
        return {"lo": self.lo, "hi": self.hi, "intervals": self.intervals, "degree": self.degree}

    @classmethod
    def from_spec(cls, spec):
        return cls(spec["lo"], spec["hi"], spec["intervals"], spec["degree"])

    def __eq__(self, other):
        return isinstance(other, SplineBasis) and self.spec() == other.spec()

    def clamp(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), self.lo, self.hi)

    def _cox_de_boor(self, x, degree):
        """Dense recursion over every knot; x already clamped. Shape (n, len(knots) - 1 - degree)."""
        t = self.knots
        xc = x[:, None]
        b = ((xc >= t[:-1]) & (xc < t[1:])).astype(np.float64)
        for d in range(1, degree + 1):
            left = (xc - t[: -d - 1]) / (t[d:-1] - t[: -d - 1])
            right = (t[d + 1 :] - xc) / (t[d + 1 :] - t[1:-d])
            b = left * b[:, :-1] + right * b[:, 1:]
        return b

    def _local(self, x):
        """Nonzero basis values on each point's knot span (de Boor's triangle).

        Returns the span index, the degree-p values and the degree-(p-1)
        values, column r holding the function that starts r knots after
        ``span - p`` (resp. ``span - p + 1``). On a uniform grid the
        triangle's knot distances are ``u + j - 1`` and ``j - u`` in units of
        h, and every denominator at depth d is just d.
        """
        p = self.degree
        xc = self.clamp(x)
        nan = np.isnan(xc)
        if nan.any():
            xc = np.where(nan, self.lo, xc)
        pos = (xc - self.lo) / self.h
        cell = np.minimum(pos.astype(np.int64), self.intervals - 1)
        u = pos - cell
        vals = [np.ones_like(u)]
        lower = vals
        for d in range(1, p + 1):
            if d == p:
                lower = vals
            saved = 0.0
            nxt = []
            for r in range(d):
                tmp = vals[r] / d
                nxt.append(saved + (r + 1 - u) * tmp)
                saved = (u + d - r - 1) * tmp
            nxt.append(saved)
            vals = nxt
        b, low = np.stack(vals, axis=1), np.stack(lower, axis=1)
        if nan.any():
            # NaN in, NaN out, so callers see the bad value instead of a silent clamp
            b[nan] = np.nan
            low[nan] = np.nan
        return cell + p, b, low

    def _scatter(self, span, local, n_cols, first):
        out = np.zeros((span.shape[0], n_cols))
        rows = np.arange(span.shape[0])[:, None]
        out[rows, span[:, None] - first + np.arange(local.shape[1])] = local
        return out

    def basis(self, x):
        """Basis values, shape ``x.shape + (n_coef,)``."""
        x = np.asarray(x, dtype=np.float64)
        span, b, _ = self._local(x.reshape(-1))
        out = self._scatter(span, b, self.n_coef, self.degree)
        return out.reshape(x.shape + (self.n_coef,))

    def basis_and_derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        flat = x.reshape(-1)
        span, b, lower = self._local(flat)
        basis = self._scatter(span, b, self.n_coef, self.degree)
        # uniform knots: B'_j = (B_{j,p-1} - B_{j+1,p-1}) / h; lower-degree functions
        # are indexed from span - p + 1, one more column than n_coef
        low = self._scatter(span, lower, self.n_coef + 1, self.degree - 1)
        d = (low[:, :-1] - low[:, 1:]) / self.h
        d[(flat < self.lo) | (flat > self.hi)] = 0.0
        shape = x.shape + (self.n_coef,)
        return basis.reshape(shape), d.reshape(shape)

    def basis_derivative(self, x):
        """d/dx of each basis function; zero outside ``[lo, hi]``."""
        return self.basis_and_derivative(x)[1]

    def evaluate(self, x, coef):
        return self.basis(x) @ np.asarray(coef, dtype=np.float64)

    def greville(self):
        """Coefficients that make the spline reproduce f(x) = x."""
        p = self.degree
        t = self.knots
        return np.array([t[j + 1 : j + p + 1].mean() for j in range(self.n_coef)])

    def apply(self, x, coef, cached=None):
        """Differentiable spline(x) for a node ``x`` and coefficient nodes ``coef``.

        ``cached`` may carry ``basis_and_derivative(x.data)`` when several
        edges read the same input.
        """
        if len(coef) != self.n_coef:
            raise UsageError(f"expected {self.n_coef} coefficients, got {len(coef)}")
        c = np.array([v.data for v in coef])
        xd = x.data
        basis, dbasis = cached if cached is not None else self.basis_and_derivative(xd)
        value = basis @ c
        dx = dbasis @ c
        if np.ndim(xd) == 0:
            value, dx = float(value), float(dx)

        def vjp(g):
            if basis.ndim == 1:
                gc = g * basis
            elif np.ndim(g) == 0:
                gc = g * basis.sum(axis=0)
            else:
                gc = g @ basis
            return [g * dx, *gc.tolist()]

        return x.tape.record("spline", value, [x, *coef], vjp)


@dataclass
class ActivationEdge:
    basis: SplineBasis
    w1: float = 1.0
    w2: float = 1.0
    coef: np.ndarray = None
    importance: float = 0.0
    masked: bool = False

    def __post_init__(self):
        if self.coef is None:
            self.coef = np.zeros(self.basis.n_coef)
        self.coef = np.asarray(self.coef, dtype=np.float64)
        if self.coef.shape != (self.basis.n_coef,):
            raise ConfigError(f"edge needs {self.basis.n_coef} coefficients, got {self.coef.shape}")

    @classmethod
    def initialized(cls, basis, rng, scale=0.1):
        return cls(basis, 1.0, 1.0, rng.normal(0.0, scale, basis.n_coef))

    @property
    def n_params(self):
        return 2 + self.basis.n_coef

    def get_params(self):
        return np.concatenate([[self.w1, self.w2], self.coef])

    def set_params(self, v):
        self.w1 = float(v[0])
        self.w2 = float(v[1])
        self.coef = np.array(v[2:], dtype=np.float64)

    def zero(self):
        self.w1 = self.w2 = 0.0
        self.coef = np.zeros(self.basis.n_coef)

    def forward(self, x: Value, params, silu_x=None, cached=None) -> Value:
        """phi(x) with ``params`` the bound nodes ``[w1, w2, c_0, ...]``.

        ``silu_x`` and ``cached`` let a layer share per-input work across edges.
        """
        w1, w2, *coef = params
        if silu_x is None:
            silu_x = x.silu()
        return w1 * silu_x + w2 * self.basis.apply(x, coef, cached)

    def __call__(self, x):
        """Plain numpy evaluation, no graph."""
        x = np.asarray(x, dtype=np.float64)
        return self.w1 * x * _sigmoid_np(x) + self.w2 * self.basis.evaluate(x, self.coef)

    def sample(self, n=SAMPLE_POINTS):
        xs = np.linspace(self.basis.lo, self.basis.hi, n)
        return xs, self(xs)


def _sigmoid_np(x):
    return _sigmoid(np.atleast_1d(x)).reshape(np.shape(x))


def edge_importance_update(edge, inputs):
    """Set ``edge.importance`` to mean |phi(x)| over a batch and return it."""
    inputs = np.asarray(inputs, dtype=np.float64).reshape(-1)
    if inputs.size == 0:
        raise UsageError("importance needs at least one input")
    edge.importance = float(np.mean(np.abs(edge(inputs))))
    return edge.importance
