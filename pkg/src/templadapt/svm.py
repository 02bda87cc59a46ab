"""Class-rebalanced L2-regularized squared-hinge linear SVM.

Minimizes, over augmented vectors x~ = (x, 1):

    J(w) = 1/2 w.w + C_p * sum_i max(0, 1 - y_i w.x~_i)^2
                   + C_n * sum_j max(0, 1 - y_j w.x~_j)^2

with C_p, C_n set proportional to inverse class frequency. The solver is
a damped Newton method on the primal with the generalized Hessian
(the objective is convex and differentiable; piecewise quadratic), which
is deterministic and converges to machine precision in a handful of steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, InvalidArgument

DEFAULT_C = 10.0
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1000

# Above this dimension the Newton system is solved by conjugate gradients
# on Hessian-vector products instead of a dense factorization.
_DENSE_HESSIAN_MAX_DIM = 1500


def rebalance_weights(n_pos: int, n_neg: int, c: float) -> tuple[float, float]:
    """Per-class regularization constants proportional to inverse class frequency.

    C_p = C (N_p + N_n) / (2 N_p),  C_n = C (N_p + N_n) / (2 N_n),
    so C_p N_p = C_n N_n = C (N_p + N_n) / 2.
    """
    if n_pos < 1 or n_neg < 1:
        raise InvalidArgument("need at least one positive and one negative")
    if not c > 0:
        raise InvalidArgument("C must be positive")
    total = n_pos + n_neg
    return c * total / (2.0 * n_pos), c * total / (2.0 * n_neg)


@dataclass(frozen=True)
class SvmProblem:
    positives: np.ndarray = field(repr=False)  # (N_p, d)
    negatives: np.ndarray = field(repr=False)  # (N_n, d)
    c: float = DEFAULT_C

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        neg = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        if pos.shape[0] < 1 or neg.shape[0] < 1:
            raise InvalidArgument("need at least one positive and one negative")
        if pos.shape[1] != neg.shape[1]:
            raise DimensionMismatch(
                f"positive dim {pos.shape[1]} != negative dim {neg.shape[1]}")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
            raise InvalidArgument("features must be finite")
        if not self.c > 0:
            raise InvalidArgument("C must be positive")
        pos.flags.writeable = False
        neg.flags.writeable = False
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "negatives", neg)

    @property
    def dim(self) -> int:
        return self.positives.shape[1]

    @property
    def n_pos(self) -> int:
        return self.positives.shape[0]

    @property
    def n_neg(self) -> int:
        return self.negatives.shape[0]

    def class_weights(self) -> tuple[float, float]:
        return rebalance_weights(self.n_pos, self.n_neg, self.c)

    def augmented(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (x, 1) features, labels, and per-sample cost weights."""
        x = np.vstack([self.positives, self.negatives])
        x = np.hstack([x, np.ones((x.shape[0], 1))])
        y = np.concatenate([np.ones(self.n_pos), -np.ones(self.n_neg)])
        cp, cn = self.class_weights()
        cost = np.concatenate([np.full(self.n_pos, cp), np.full(self.n_neg, cn)])
        return x, y, cost


@dataclass(frozen=True)
class LinearClassifier:
    """Trained weights, bias folded in as the last entry."""

    weights: np.ndarray = field(repr=False)  # (d+1,)
    objective_value: float
    solver_iterations: int
    gradient_norm: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(w)):
            raise InvalidArgument("classifier weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        """Feature dimension (excluding the bias entry)."""
        return self.weights.shape[0] - 1


def objective(problem: SvmProblem, w: np.ndarray) -> float:
    """Primal objective value at w (length d+1, bias last)."""
    x, y, cost = problem.augmented()
    return _objective(w, x, y, cost)


def _objective(w, x, y, cost) -> float:
    h = np.maximum(0.0, 1.0 - y * (x @ w))
    return 0.5 * float(w @ w) + float(cost @ (h * h))


def _gradient(w, x, y, cost) -> np.ndarray:
    h = np.maximum(0.0, 1.0 - y * (x @ w))
    return w - 2.0 * (x.T @ (cost * y * h))


def _solve_newton_system(grad, xa, ca):
    """Solve (I + 2 Xa' diag(ca) Xa) step = grad for the active rows Xa."""
    dim = grad.shape[0]
    if dim <= _DENSE_HESSIAN_MAX_DIM:
        h = np.eye(dim) + 2.0 * (xa.T @ (ca[:, None] * xa))
        return np.linalg.solve(h, grad)

    def hv(v):
        return v + 2.0 * (xa.T @ (ca * (xa @ v)))

    # plain CG; the system is SPD and well conditioned by the identity term
    step = np.zeros(dim)
    r = grad - hv(step)
    p = r.copy()
    rs = float(r @ r)
    tol2 = max(1e-24, (1e-10 * np.sqrt(rs)) ** 2)
    for _ in range(2 * dim):
        hp = hv(p)
        alpha = rs / float(p @ hp)
        step += alpha * p
        r -= alpha * hp
        rs_new = float(r @ r)
        if rs_new <= tol2:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return step


def train(problem: SvmProblem, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> LinearClassifier:
    """Damped Newton on the primal; stops when ||grad|| <= tol * (1 + ||w||)."""
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    if max_iter < 1:
        raise InvalidArgument("max_iter must be >= 1")

    x, y, cost = problem.augmented()
    w = np.zeros(x.shape[1])
    obj = _objective(w, x, y, cost)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = _gradient(w, x, y, cost)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol * (1.0 + float(np.linalg.norm(w))):
            return LinearClassifier(w, obj, iterations - 1, gnorm)

        active = (1.0 - y * (x @ w)) > 0.0
        step = _solve_newton_system(grad, x[active], cost[active])

        # backtracking line search (Armijo); the full step is almost always taken
        descent = float(grad @ step)
        t = 1.0
        for _ in range(60):
            w_new = w - t * step
            obj_new = _objective(w_new, x, y, cost)
            if obj_new <= obj - 1e-4 * t * descent:
                break
            t *= 0.5
        w, obj = w_new, obj_new

    grad = _gradient(w, x, y, cost)
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol * (1.0 + float(np.linalg.norm(w))):
        return LinearClassifier(w, obj, iterations, gnorm)
    raise ConvergenceFailure(
        f"gradient norm {gnorm:.3e} above tolerance after {max_iter} iterations",
        classifier=LinearClassifier(w, obj, iterations, gnorm))


def functional_margin(c: LinearClassifier, x: np.ndarray) -> float:
    """w . (x, 1): the raw decision value for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != c.dim:
        raise DimensionMismatch(
            f"input dim {x.shape} does not match classifier dim {c.dim}")
    return float(c.weights[:-1] @ x) + float(c.weights[-1])


def geometric_margin(c: LinearClassifier, x: np.ndarray) -> float:
    """Functional margin scaled by 1 / ||w|| (norm over all d+1 entries)."""
    from .errors import ZeroNormError

    n = float(np.linalg.norm(c.weights))
    if n <= 1e-12:
        raise ZeroNormError("classifier weight norm is (near) zero")
    return functional_margin(c, x) / n
