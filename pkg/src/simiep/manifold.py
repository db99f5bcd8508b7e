"""First-order Riemannian descent on the oblique manifold and the unit sphere.

Points on the oblique manifold are real ``2 x N`` arrays whose columns have
unit norm (the real/imaginary split of a unit-modulus vector). Points on the
sphere are real vectors of unit 2-norm. Both share the same descent loop; the
geometry only changes how the tangent projection and the retraction act.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from .config import DescentParams

Objective = Callable[[np.ndarray], Tuple[float, object]]


class NumericalAbort(RuntimeError):
    """A non-finite objective value was produced during optimization."""


def lse(values, epsilon: float) -> float:
    """Smooth maximum ``eps * log(sum(exp(v / eps)))`` in max-shifted form."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("lse of an empty sequence")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    vmax = v.max()
    return float(vmax + epsilon * np.log(np.sum(np.exp((v - vmax) / epsilon))))


def softmax_weights(values: np.ndarray, epsilon: float) -> np.ndarray:
    e = np.exp((values - values.max()) / epsilon)
    return e / e.sum()


# -- oblique manifold ------------------------------------------------------

def complex_to_oblique(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=complex)
    return np.vstack([theta.real, theta.imag])


def oblique_to_complex(mat: np.ndarray) -> np.ndarray:
    return mat[0] + 1j * mat[1]


def project_tangent(point: np.ndarray, euclid_grad: np.ndarray) -> np.ndarray:
    """Remove the per-column radial component: G - Theta Diag(diag(Theta^T G))."""
    return euclid_grad - point * np.sum(point * euclid_grad, axis=0)


def retract(tilde: np.ndarray) -> np.ndarray:
    norms = np.hypot(tilde[0], tilde[1]) if len(tilde) == 2 else np.sqrt((tilde * tilde).sum(axis=0))
    if not norms.all():
        raise ValueError("zero column in retraction; shrink the step")
    return tilde / norms


# -- sphere ----------------------------------------------------------------

def project_tangent_sphere(p: np.ndarray, euclid_grad: np.ndarray) -> np.ndarray:
    return euclid_grad - p * (p @ euclid_grad)


def retract_sphere(tilde: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(tilde)
    if n == 0:
        raise ValueError("zero vector in retraction; shrink the step")
    return tilde / n


@dataclass
class DescentTrace:
    objective: List[float] = field(default_factory=list)
    step: List[float] = field(default_factory=list)
    grad_norm: List[float] = field(default_factory=list)

    def rows(self):
        return zip(range(len(self.objective)), self.objective, self.step, self.grad_norm)


def _geometry(point: np.ndarray):
    if point.ndim == 1:
        return project_tangent_sphere, retract_sphere
    return project_tangent, retract


def descend(objective: Objective, start: np.ndarray, params: DescentParams | None = None):
    """Riemannian gradient descent with non-increase backtracking.

    ``objective`` returns ``(value, euclidean_gradient)``; the gradient may be
    a zero-argument callable, evaluated only at accepted points.
    Returns ``(point, value, trace)``. Row ``i`` of the trace holds the
    objective, the accepted step and the Riemannian gradient norm at iterate
    ``i`` (row 0 is the start point, step 0).
    """
    params = params or DescentParams()
    proj, retr = _geometry(start)
    x = retr(np.array(start, dtype=float))
    value, grad = objective(x)
    grad = grad() if callable(grad) else grad
    if not np.isfinite(value):
        raise NumericalAbort(f"non-finite objective at start: {value}")
    rgrad = proj(x, grad)
    gnorm = float(np.linalg.norm(rgrad))
    trace = DescentTrace([float(value)], [0.0], [gnorm])
    for _ in range(params.max_inner):
        if gnorm <= params.grad_tol:
            break
        step = params.step0
        accepted = False
        for _ in range(params.max_backtracks):
            cand = retr(x - step * rgrad)
            cand_value, cand_grad = objective(cand)
            if not math.isfinite(cand_value):
                raise NumericalAbort(f"non-finite objective at step {step:g}: {cand_value}")
            if cand_value <= value:
                accepted = True
                break
            step *= params.shrink
        if not accepted:
            break
        x, value = cand, cand_value
        grad = cand_grad() if callable(cand_grad) else cand_grad
        rgrad = proj(x, grad)
        gnorm = float(np.linalg.norm(rgrad))
        trace.objective.append(float(value))
        trace.step.append(step)
        trace.grad_norm.append(gnorm)
    return x, float(value), trace
