import numpy as np
import pytest

from simiep.config import DescentParams
from simiep.manifold import (NumericalAbort, complex_to_oblique, descend, lse, oblique_to_complex,
                             project_tangent, project_tangent_sphere, retract, retract_sphere,
                             softmax_weights)


def test_lse_examples():
    assert lse([0.0], 0.3) == 0.0
    assert lse([1.0, 1.0], 0.1) == pytest.approx(1 + 0.1 * np.log(2))
    assert lse([1.0, 1.0], 0.1) == pytest.approx(1.06931, abs=1e-5)


def test_lse_overflow_safe():
    assert lse([1e4, 1e4 - 1], 1e-3) == pytest.approx(1e4)


def test_lse_rejects_bad_input():
    with pytest.raises(ValueError):
        lse([], 0.1)
    with pytest.raises(ValueError):
        lse([1.0], 0.0)


def test_softmax_sums_to_one(rng):
    w = softmax_weights(rng.standard_normal(20) * 100, 0.01)
    assert w.sum() == pytest.approx(1.0)


def test_projection_example():
    Z = project_tangent(np.array([[1.0], [0.0]]), np.array([[3.0], [4.0]]))
    assert np.allclose(Z, [[0.0], [4.0]])


def test_projection_tangent_and_idempotent(rng):
    theta = retract(rng.standard_normal((2, 30)))
    Z = project_tangent(theta, rng.standard_normal((2, 30)))
    assert np.max(np.abs(np.sum(theta * Z, axis=0))) <= 1e-10
    assert np.allclose(project_tangent(theta, Z), Z, atol=1e-12)


def test_retraction():
    assert np.allclose(retract(np.array([[3.0], [4.0]])), [[0.6], [0.8]])
    theta = complex_to_oblique(np.exp(1j * np.linspace(0, 6, 7)))
    assert np.allclose(retract(theta), theta, atol=1e-15)
    with pytest.raises(ValueError):
        retract(np.zeros((2, 2)))


def test_retraction_stays_feasible(rng):
    theta = retract(rng.standard_normal((2, 12)))
    Z = project_tangent(theta, rng.standard_normal((2, 12)))
    for zeta in (1e-6, 1e-2, 1.0, 10.0, 1e3):
        assert np.allclose(np.linalg.norm(retract(theta - zeta * Z), axis=0), 1, atol=1e-12)


def test_sphere_ops(rng):
    p = retract_sphere(rng.standard_normal(5))
    g = rng.standard_normal(5)
    assert abs(p @ project_tangent_sphere(p, g)) <= 1e-12
    with pytest.raises(ValueError):
        retract_sphere(np.zeros(3))


def test_complex_round_trip(rng):
    t = np.exp(1j * rng.uniform(0, 6, 9))
    assert np.array_equal(oblique_to_complex(complex_to_oblique(t)), t)


def test_descent_linear_objective_on_circle():
    c = np.array([[1.0], [0.0]])
    x, value, trace = descend(lambda th: (-float(th[0, 0]), -c), np.array([[0.0], [1.0]]),
                              DescentParams(max_inner=500))
    assert np.allclose(x, [[1.0], [0.0]], atol=1e-6)
    assert value == pytest.approx(-1.0, abs=1e-10)
    assert np.all(np.diff(trace.objective) <= 0)
    assert trace.step[0] == 0.0 and len(trace.objective) == len(trace.grad_norm)


def test_descent_on_sphere():
    a = np.array([3.0, -4.0])
    p, value, trace = descend(lambda q: (float(a @ q), a), np.array([1.0, 0.0]), DescentParams(max_inner=500))
    assert np.allclose(p, -a / 5, atol=1e-6)
    assert np.all(np.diff(trace.objective) <= 0)


def test_descent_aborts_on_nan():
    with pytest.raises(NumericalAbort):
        descend(lambda th: (float("nan"), np.zeros_like(th)), np.array([[1.0], [0.0]]))


def test_descent_feasible_output(rng):
    A = rng.standard_normal((2, 7))
    x, _, _ = descend(lambda th: (float(np.sum(A * th) ** 2), 2 * np.sum(A * th) * A),
                      retract(rng.standard_normal((2, 7))))
    assert np.max(np.abs(np.linalg.norm(x, axis=0) - 1)) <= 1e-10
