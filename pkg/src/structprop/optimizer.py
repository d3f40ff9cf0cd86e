"""Alternating minimization of the synthesis objective.

The objective couples a one-versus-other hinge loss on the seen classes
(classifiers synthesized from phantom rows V through the blended graphs),
a ridge penalty on the synthesized seen classifiers, and an alignment
penalty that keeps the image-space graph close to the blended semantic
graphs:

    sum_c sum_n max(0, 1 - I[n,c] * a_c.x_n)^2
      + lam/2 * sum_c ||a_c||^2
      + gamma/2 * ||beta[0]*W_img - sum_j beta[j]*W_sem_j||_F^2

Restricted to V the objective is smooth and convex; restricted to beta it
is convex piecewise-quadratic on the probability simplex.  Both
subproblems use descent with backtracking line search (projected onto the
simplex for beta); the tiny beta dimension makes a dedicated QP pointless.

While the image graph is still the all-zeros initialization, beta[0] is
pinned to 0 and the remaining coordinates live on their own simplex: the
zero matrix contributes nothing to synthesis, and letting mass drift onto
it would only game the alignment penalty.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import SimilarityGraph
from .model import blended_weights, check_simplex

ARMIJO_C = 1e-4
MIN_STEP = 1e-20


@dataclass
class SolverSettings:
    max_outer_iters: int = 50
    outer_tolerance: float = 1e-5   # relative objective decrease across one outer pass
    v_tolerance: float = 1e-6       # relative objective decrease per descent step
    beta_tolerance: float = 1e-6
    v_max_steps: int = 500
    beta_max_steps: int = 500
    init_step: float = 1.0
    step_growth: float = 2.0
    backtrack: float = 0.5

    def __post_init__(self):
        for name in ("outer_tolerance", "v_tolerance", "beta_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Objective:
    """Frozen problem data for one optimization round.

    ``labels`` are dense seen-class row indices (0..S-1) aligned with
    ``features`` rows.  ``graphs`` is ordered [image, sources...] when
    ``include_image`` else [sources...].
    """

    features: np.ndarray
    labels: np.ndarray
    lam: float
    gamma: float
    graphs: list[SimilarityGraph]
    include_image: bool = True
    hinge: str = "squared"  # "squared" | "plain"
    signs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.hinge not in ("squared", "plain"):
            raise ValueError(f"unknown hinge kind: {self.hinge!r}")
        if not self.graphs:
            raise ValueError("objective needs at least one graph")
        if self.include_image and len(self.graphs) < 2:
            raise ValueError("image slot requires at least one semantic graph besides it")
        n_seen = self.graphs[0].shape[0]
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= n_seen):
            raise ValueError("labels must be dense seen-class indices")
        # +1 at the true class, -1 everywhere else
        signs = -np.ones((self.features.shape[0], n_seen))
        if self.labels.size:
            signs[np.arange(self.labels.size), self.labels] = 1.0
        self.signs = signs

    @property
    def n_seen(self) -> int:
        return self.graphs[0].shape[0]

    @property
    def n_unseen(self) -> int:
        return self.graphs[0].shape[1]

    @property
    def n_weights(self) -> int:
        return len(self.graphs)

    def free_mask(self) -> np.ndarray:
        """Beta coordinates allowed to move (image slot pinned while zero-init)."""
        free = np.ones(self.n_weights, dtype=bool)
        if self.include_image and self.graphs[0].zero_init:
            free[0] = False
        return free

    def alignment_residual(self, beta: np.ndarray) -> np.ndarray:
        """beta[0]*W_img - sum_j beta[j]*W_sem_j (zero matrix without image slot)."""
        if not self.include_image:
            return np.zeros(self.graphs[0].shape)
        res = beta[0] * self.graphs[0].weights.copy()
        for coef, g in zip(beta[1:], self.graphs[1:]):
            res -= coef * g.weights
        return res


def loss_value(V: np.ndarray, beta: np.ndarray, objective: Objective) -> float:
    """Full objective value at (V, beta)."""
    hinge, a_seen, _ = _hinge_terms(V, beta, objective)
    if objective.hinge == "squared":
        data_term = float(np.sum(hinge * hinge))
    else:
        data_term = float(np.sum(hinge))
    ridge = 0.5 * objective.lam * float(np.sum(a_seen * a_seen))
    res = objective.alignment_residual(np.asarray(beta, dtype=np.float64))
    align = 0.5 * objective.gamma * float(np.sum(res * res))
    return data_term + ridge + align


def loss_gradients(V: np.ndarray, beta: np.ndarray, objective: Objective) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the objective w.r.t. V and (unconstrained) beta.

    For the plain hinge this is a subgradient at the kinks.
    """
    beta = np.asarray(beta, dtype=np.float64)
    hinge, a_seen, wbar = _hinge_terms(V, beta, objective)
    grad_a = _grad_wrt_seen_classifiers(hinge, a_seen, objective)
    grad_v = wbar.T @ grad_a

    grad_beta = np.empty(objective.n_weights)
    for g, graph in enumerate(objective.graphs):
        grad_beta[g] = np.sum(grad_a * (graph.weights @ V))
    if objective.include_image and objective.gamma > 0:
        res = objective.alignment_residual(beta)
        grad_beta[0] += objective.gamma * np.sum(res * objective.graphs[0].weights)
        for j, graph in enumerate(objective.graphs[1:], start=1):
            grad_beta[j] -= objective.gamma * np.sum(res * graph.weights)
    return grad_v, grad_beta


def _hinge_terms(V, beta, objective):
    V = np.asarray(V, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    wbar = blended_weights(beta, objective.graphs)
    a_seen = wbar @ V
    margins = objective.signs * (objective.features @ a_seen.T)
    hinge = np.maximum(0.0, 1.0 - margins)
    return hinge, a_seen, wbar


def _grad_wrt_seen_classifiers(hinge, a_seen, objective):
    if objective.hinge == "squared":
        coef = -2.0 * hinge * objective.signs
    else:
        coef = -(hinge > 0).astype(np.float64) * objective.signs
    return coef.T @ objective.features + objective.lam * a_seen


def _grad_v(V, beta, objective):
    hinge, a_seen, wbar = _hinge_terms(V, beta, objective)
    return wbar.T @ _grad_wrt_seen_classifiers(hinge, a_seen, objective)


# -- simplex geometry -----------------------------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum(x) = 1}."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, v.size + 1) > cumsum - 1.0)[0][-1]
    theta = (cumsum[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_simplex_masked(v: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Project onto the simplex restricted to the free coordinates."""
    out = np.zeros_like(np.asarray(v, dtype=np.float64))
    out[free] = project_simplex(np.asarray(v, dtype=np.float64)[free])
    return out


def uniform_simplex(k: int, free: np.ndarray | None = None) -> np.ndarray:
    beta = np.zeros(k)
    if free is None:
        free = np.ones(k, dtype=bool)
    beta[free] = 1.0 / free.sum()
    return beta


# -- subproblem solvers ----------------------------------------------------


def solve_V(
    beta: np.ndarray,
    objective: Objective,
    settings: SolverSettings,
    V_init: np.ndarray,
) -> np.ndarray:
    """Minimize over V at fixed beta by descent with backtracking.

    Directions come from a limited-memory curvature model of past steps
    (falling back to steepest descent whenever the model stops being a
    descent direction), which copes with the near-flat valleys a tiny
    ridge weight creates.  Monotone: the returned V never has a worse
    objective than ``V_init``.  Terminates when one accepted step improves
    the objective by less than ``v_tolerance`` relative, or after
    ``v_max_steps`` steps.
    """
    beta = check_simplex(beta)
    shape = np.shape(V_init)
    x = np.array(V_init, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("V_init must be finite")
    f = loss_value(x.reshape(shape), beta, objective)
    grad = _grad_v(x.reshape(shape), beta, objective).ravel()
    memory: list[tuple[np.ndarray, np.ndarray, float]] = []
    for _ in range(settings.v_max_steps):
        if float(grad @ grad) == 0.0:
            break
        direction = -_curvature_scaled(grad, memory)
        slope = float(grad @ direction)
        if slope >= 0:
            memory.clear()
            direction = -grad
            slope = -float(grad @ grad)
        trial = settings.init_step if not memory else 1.0
        x_new, f_new, _ = _backtrack(
            lambda t: x + t * direction,
            lambda cand: loss_value(cand.reshape(shape), beta, objective),
            f,
            lambda t: -ARMIJO_C * t * slope,
            trial,
            settings,
        )
        if x_new is None:
            break
        grad_new = _grad_v(x_new.reshape(shape), beta, objective).ravel()
        s = x_new - x
        y = grad_new - grad
        sy = float(s @ y)
        # only curvature pairs with positive s.y keep the model positive definite
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            memory.append((s, y, 1.0 / sy))
            if len(memory) > 10:
                memory.pop(0)
        rel = (f - f_new) / max(1.0, abs(f))
        x, f, grad = x_new, f_new, grad_new
        if rel < settings.v_tolerance:
            break
    return x.reshape(shape)


def _curvature_scaled(grad: np.ndarray, memory) -> np.ndarray:
    """Two-loop recursion applying the limited-memory inverse-curvature model."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def solve_beta(
    V: np.ndarray,
    objective: Objective,
    settings: SolverSettings,
    beta_init: np.ndarray,
) -> np.ndarray:
    """Minimize over beta on the simplex by projected gradient descent.

    The image coordinate stays pinned at 0 while the image graph is the
    zero initialization.  Ends with a projection cleanup so the returned
    vector satisfies the simplex constraints to float precision.
    """
    beta_init = check_simplex(beta_init)
    free = objective.free_mask()
    beta = project_simplex_masked(beta_init, free)
    f = loss_value(V, beta, objective)
    step = settings.init_step
    for _ in range(settings.beta_max_steps):
        _, grad = loss_gradients(V, beta, objective)
        grad = np.where(free, grad, 0.0)

        def candidate(t, beta=beta, grad=grad):
            return project_simplex_masked(beta - t * grad, free)

        # prox-style sufficient decrease: the projected point always
        # satisfies g.d + ||d||^2/(2t) <= 0, so accepted steps are monotone
        def required(t, beta=beta, grad=grad):
            d = candidate(t) - beta
            return -(float(grad @ d) + float(d @ d) / (2.0 * t))

        beta_new, f_new, step = _backtrack(
            candidate,
            lambda cand: loss_value(V, cand, objective),
            f,
            required,
            step,
            settings,
        )
        if beta_new is None:
            break
        rel = (f - f_new) / max(1.0, abs(f))
        beta, f = beta_new, f_new
        if rel < settings.beta_tolerance:
            break
    return project_simplex_masked(beta, free)


def _backtrack(make_candidate, evaluate, f_current, required_decrease, step, settings):
    """Shrink ``step`` until the candidate achieves the required decrease.

    Returns (candidate, value, next_step) or (None, f_current, step) when no
    acceptable step exists above MIN_STEP.  Non-finite candidate values are
    treated as failed steps; if they persist down to MIN_STEP the solver
    signals divergence.
    """
    while True:
        cand = make_candidate(step)
        f_new = evaluate(cand)
        if np.isfinite(f_new) and f_new <= f_current - required_decrease(step):
            return cand, f_new, step * settings.step_growth
        step *= settings.backtrack
        if step < MIN_STEP:
            if not np.isfinite(f_new):
                raise FloatingPointError(
                    "objective became non-finite and backtracking failed"
                )
            return None, f_current, settings.init_step


def alternate(
    objective: Objective,
    settings: SolverSettings | None = None,
    V_init: np.ndarray | None = None,
    beta_init: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Alternate solve_V / solve_beta until the objective stalls.

    Starts from V = 0 and beta uniform over the free coordinates unless
    warm starts are given.  Returns (V, beta, trace); the trace holds the
    objective before the first pass and after every half step, and is
    non-increasing.
    """
    settings = settings or SolverSettings()
    free = objective.free_mask()
    if V_init is None:
        V = np.zeros((objective.n_unseen, objective.features.shape[1]))
    else:
        V = np.array(V_init, dtype=np.float64)
    if beta_init is None:
        beta = uniform_simplex(objective.n_weights, free)
    else:
        beta = project_simplex_masked(check_simplex(beta_init), free)

    trace = [loss_value(V, beta, objective)]
    for _ in range(settings.max_outer_iters):
        f_before = trace[-1]
        V = solve_V(beta, objective, settings, V)
        trace.append(loss_value(V, beta, objective))
        beta = solve_beta(V, objective, settings, beta)
        trace.append(loss_value(V, beta, objective))
        rel = (f_before - trace[-1]) / max(1.0, abs(f_before))
        if rel < settings.outer_tolerance:
            break
    return V, beta, trace
