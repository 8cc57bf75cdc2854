import numpy as np
import pytest

from seqkan.engine import Tape


def central_diff(f, x, h=1e-6):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up.flat[i] += h
        dn.flat[i] -= h
        g.flat[i] = (f(up) - f(dn)) / (2 * h)
    return g


def model_grad(model, loss_fn):
    """Analytic gradient of loss_fn(tape, output) w.r.t. every model parameter."""
    tape = Tape()
    params = tape.parameters(model.get_params())
    out = loss_fn(tape, params)
    tape.zero_grad()
    tape.backward(out)
    return np.array([p.grad for p in params])


def model_value(model, loss_fn, v):
    saved = model.get_params()
    model.set_params(v)
    tape = Tape()
    value = float(loss_fn(tape, tape.parameters(model.get_params())).data)
    model.set_params(saved)
    return value


def assert_grad_matches(model, loss_fn, rel=1e-4, h=1e-6):
    analytic = model_grad(model, loss_fn)
    numeric = central_diff(lambda v: model_value(model, loss_fn, v), model.get_params(), h)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    assert err.max() < rel, f"max relative error {err.max():.3g} at param {int(err.argmax())}"
    return err.max()


def assert_outputs_grad_match(model, outputs_fn, rel=1e-4, h=1e-6):
    """Like assert_grad_matches for several outputs, sharing one finite-difference sweep."""
    probe = Tape()
    n_out = len(outputs_fn(probe, probe.parameters(model.get_params())))
    analytic = np.array([model_grad(model, lambda t, p, k=k: outputs_fn(t, p)[k]) for k in range(n_out)])
    saved = model.get_params()

    def values(v):
        model.set_params(v)
        tape = Tape()
        return np.array([float(o.data) for o in outputs_fn(tape, tape.parameters(v))])

    numeric = np.empty_like(analytic)
    for i in range(saved.size):
        up, dn = saved.copy(), saved.copy()
        up[i] += h
        dn[i] -= h
        numeric[:, i] = (values(up) - values(dn)) / (2 * h)
    model.set_params(saved)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    assert err.max() < rel, f"max relative error {err.max():.3g}"
    return err.max()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    def record(name, ok, detail):
        ACCEPTANCE_LINES.append(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
