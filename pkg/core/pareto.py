"""
NumHTML - Pareto Multi-task Learning

Splits the two-objective (return, volatility) loss space into K sub-regions
around evenly spread preference vectors and trains one trade-off solution
per sub-region:

1. ``find_initial_solution`` moves the parameters into the sub-region by
   descending on the violated region constraints;
2. ``train_pareto`` then runs Adam on the weighted loss
   ``alpha_1 * L_1 + alpha_2 * L_2``, where the weights come from a min-norm
   problem over the task gradients and the active constraint gradients.

Everything here works on flat parameter vectors, so the same code trains the
hierarchical model (through an adapter in ``core.pipeline``) and small
analytic problems.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from config.settings import ParetoConfig, TrainingConfig
from utils.exceptions import ConfigurationError, ContractError, DimensionError, NumericError
from .optim import AdamState, ExponentialDecay, adam_step

logger = logging.getLogger(__name__)

FW_TOLERANCE = 1e-9
FW_MAX_ITERS = 1000

# (losses (2,), gradients (2, P)) at a parameter vector
Objective = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


# ---------------------------------------------------------------------------
# Preferences and sub-regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreferenceSet:
    """K unit vectors in the non-negative quadrant, ordered by angle."""
    vectors: np.ndarray

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.vectors[:, 1], self.vectors[:, 0])

    def __getitem__(self, k: int) -> np.ndarray:
        return self.vectors[k]


def make_preferences(count: int) -> PreferenceSet:
    """
    Evenly spaced preference vectors from (1, 0) to (0, 1).

    Args:
        count: Number of vectors K (at least 2)

    Raises:
        ConfigurationError: If ``count < 2``
    """
    if count < 2:
        raise ConfigurationError(f"at least 2 preference vectors are needed, got {count}")
    angles = np.arange(count) / (count - 1) * (math.pi / 2)
    vectors = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    vectors[0] = (1.0, 0.0)
    vectors[-1] = (0.0, 1.0)
    return PreferenceSet(vectors)


def constraint_values(losses, k: int, prefs: PreferenceSet) -> np.ndarray:
    """``G_j = (u_j - u_k)^T v`` for every j (``G_k`` is 0); feasible iff all are <= 0."""
    v = np.asarray(losses, dtype=np.float64)
    return (prefs.vectors - prefs.vectors[k]) @ v


def in_subregion(losses, k: int, prefs: PreferenceSet) -> bool:
    """Whether ``u_k^T v`` is maximal over all preference vectors (ties count as members)."""
    products = prefs.vectors @ np.asarray(losses, dtype=np.float64)
    return bool(products[k] >= products.max())


@dataclass(frozen=True)
class SubRegion:
    index: int
    prefs: PreferenceSet

    def contains(self, losses) -> bool:
        return in_subregion(losses, self.index, self.prefs)


# ---------------------------------------------------------------------------
# Min-norm solver
# ---------------------------------------------------------------------------


def _kkt_polish(gram: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Solve the equality-constrained problem on the current support; keep it only if feasible and better."""
    best = weights
    best_value = float(weights @ gram @ weights)
    support = list(np.flatnonzero(weights > 1e-12))
    while support:
        s = len(support)
        system = np.zeros((s + 1, s + 1))
        system[:s, :s] = gram[np.ix_(support, support)]
        system[:s, s] = 1.0
        system[s, :s] = 1.0
        rhs = np.zeros(s + 1)
        rhs[s] = 1.0
        solution = np.linalg.lstsq(system, rhs, rcond=None)[0][:s]
        if np.all(solution >= -1e-12):
            candidate = np.zeros_like(weights)
            candidate[support] = np.clip(solution, 0.0, None)
            total = candidate.sum()
            if total > 0:
                candidate /= total
                value = float(candidate @ gram @ candidate)
                if value <= best_value:
                    best = candidate
            break
        support.pop(int(np.argmin(solution)))
    return best


def min_norm_weights(gram, tolerance: float = FW_TOLERANCE, max_iters: int = FW_MAX_ITERS) -> np.ndarray:
    """
    Simplex weights minimising ``||sum_i w_i g_i||^2`` given the Gram matrix of the g_i.

    Two vectors use the closed form; more use Frank-Wolfe followed by an
    exact solve on the support it finds.
    """
    G = np.asarray(gram, dtype=np.float64)
    m = G.shape[0]
    if m == 0:
        raise ContractError("min-norm needs at least one gradient")
    if m == 1:
        return np.ones(1)

    if m == 2:
        denominator = G[0, 0] - 2.0 * G[0, 1] + G[1, 1]
        if denominator <= 0:
            return np.array([0.5, 0.5])
        gamma = float(np.clip((G[1, 1] - G[0, 1]) / denominator, 0.0, 1.0))
        return np.array([gamma, 1.0 - gamma])

    weights = np.full(m, 1.0 / m)
    for _ in range(max_iters):
        t = int(np.argmin(G @ weights))
        a = weights @ G[:, t]
        b = weights @ G @ weights
        c = G[t, t]
        if c <= a:
            gamma = 1.0
        elif b <= a:
            gamma = 0.0
        else:
            gamma = (b - a) / (b + c - 2.0 * a)
        weights = (1.0 - gamma) * weights
        weights[t] += gamma
        if gamma < tolerance:
            break

    weights = _kkt_polish(G, weights)
    weights = np.clip(weights, 0.0, None)
    return weights / weights.sum()


@dataclass
class MinNormResult:
    direction: np.ndarray
    weights: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.direction))


def min_norm_direction(gradients: Sequence[np.ndarray]) -> MinNormResult:
    """
    Common descent direction: minus the smallest-norm point of the gradients' convex hull.

    Args:
        gradients: Parameter-space gradients, all of the same size

    Raises:
        ContractError: If no gradient is given
        DimensionError: If sizes differ
    """
    if len(gradients) == 0:
        raise ContractError("min_norm_direction needs at least one gradient")
    matrix = [np.asarray(g, dtype=np.float64).reshape(-1) for g in gradients]
    if len({g.size for g in matrix}) != 1:
        raise DimensionError(f"gradients differ in size: {[g.size for g in matrix]}")
    matrix = np.stack(matrix)
    weights = min_norm_weights(matrix @ matrix.T)
    return MinNormResult(direction=-(weights @ matrix), weights=weights)


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------


@dataclass
class ParetoStepResult:
    direction: np.ndarray
    alphas: Tuple[float, float]
    weights: np.ndarray
    active: List[int] = field(default_factory=list)
    critical: bool = False


def active_constraints(losses, k: int, prefs: PreferenceSet, tolerance: float, cap: int) -> List[int]:
    """Indices j != k with ``G_j >= -tolerance``, the ``cap`` largest values first."""
    values = constraint_values(losses, k, prefs)
    candidates = [j for j in range(len(prefs)) if j != k and values[j] >= -tolerance]
    candidates.sort(key=lambda j: (-values[j], j))
    return candidates[:cap]


def pareto_direction(
    task_gradients: Sequence[np.ndarray],
    constraint_coefficients: Sequence[Sequence[float]] = (),
    critical_tolerance: float = 1e-10,
) -> ParetoStepResult:
    """
    Min-norm step over the two task gradients and constraint gradients
    ``c_1 * grad L_1 + c_2 * grad L_2``, solved in the reduced space of
    dimension ``2 + len(constraint_coefficients)``.

    Task weights fold the constraint weights back:
    ``alpha_m = lambda_m + sum_j lambda_j * c_{j,m}``, clamped at 0 and
    renormalised to sum to 1.
    """
    if len(task_gradients) != 2:
        raise ContractError(f"exactly two task gradients are expected, got {len(task_gradients)}")
    g = np.stack([np.asarray(t, dtype=np.float64).reshape(-1) for t in task_gradients])
    coefficients = np.vstack([np.eye(2)] + [np.asarray(c, dtype=np.float64).reshape(1, 2) for c in constraint_coefficients])
    gram = coefficients @ (g @ g.T) @ coefficients.T
    weights = min_norm_weights(gram)

    combined = weights @ coefficients
    direction = -(combined @ g)

    alphas = np.clip(combined, 0.0, None)
    if alphas.sum() <= 0:
        alphas = np.array([0.5, 0.5])
    alphas = alphas / alphas.sum()

    critical = float(np.linalg.norm(direction)) <= critical_tolerance
    return ParetoStepResult(direction, (float(alphas[0]), float(alphas[1])), weights, critical=critical)


def pareto_step(
    task_gradients: Sequence[np.ndarray],
    losses,
    k: int,
    prefs: PreferenceSet,
    tolerance: float = 1e-3,
    max_active: int = 5,
    critical_tolerance: float = 1e-10,
) -> ParetoStepResult:
    """
    One constrained descent step for sub-region ``k``.

    Args:
        task_gradients: Gradients of the (normalised) return and volatility losses
        losses: Normalised loss vector at the current parameters
        k: Sub-region index (0-based)
        prefs: Preference vectors
        tolerance: Activation tolerance on the constraint values
        max_active: Cap on the number of active constraints kept

    Returns:
        Direction, task weights (alpha_1, alpha_2), simplex weights, active
        indices and whether the point is restricted Pareto-critical
    """
    active = active_constraints(losses, k, prefs, tolerance, max_active)
    coefficients = [prefs[j] - prefs[k] for j in active]
    result = pareto_direction(task_gradients, coefficients, critical_tolerance)
    result.active = active
    return result


@dataclass
class InitialSolution:
    theta: np.ndarray
    feasible: bool
    iterations: int


def _check_finite(losses: np.ndarray, grads: np.ndarray, step: int, lr: Optional[float] = None) -> None:
    if not (np.all(np.isfinite(losses)) and np.all(np.isfinite(grads))):
        raise NumericError("non-finite loss or gradient", step=step, lr=lr, losses=list(np.ravel(losses)))


def find_initial_solution(
    theta0: np.ndarray,
    k: int,
    prefs: PreferenceSet,
    objective: Objective,
    step_size: float,
    max_iters: int,
) -> InitialSolution:
    """
    Move ``theta`` into sub-region ``k`` with ``theta <- theta + step_size * d``.

    ``d`` is minus the min-norm element of the gradients of the violated
    constraints. Stops as soon as the loss vector is in the region, or after
    ``max_iters`` updates.

    Raises:
        NumericError: If a loss or gradient is not finite (with the step index)
    """
    theta = np.array(theta0, dtype=np.float64)
    for t in range(max_iters + 1):
        losses, grads = objective(theta)
        _check_finite(losses, grads, t)
        if in_subregion(losses, k, prefs):
            return InitialSolution(theta, True, t)
        if t == max_iters:
            break
        values = constraint_values(losses, k, prefs)
        violated = [j for j in range(len(prefs)) if j != k and values[j] > 0]
        gradients = [(prefs[j] - prefs[k]) @ grads for j in violated]
        theta = theta + step_size * min_norm_direction(gradients).direction
        logger.debug(f"initial solution k={k} step {t + 1}: {len(violated)} violated constraints")
    return InitialSolution(theta, False, max_iters)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class ParetoProblem(Protocol):
    """Two-objective problem over a flat parameter vector."""

    def initial_parameters(self) -> np.ndarray: ...

    def evaluate(self, theta: np.ndarray, batch=None) -> Tuple[np.ndarray, np.ndarray]:
        """(losses (2,), gradients (2, P)); ``batch=None`` means the full training data."""
        ...

    def batches(self, epoch: int, rng: np.random.Generator) -> Sequence: ...


@dataclass
class TrajectoryRecord:
    step: int
    loss_return: float
    loss_volatility: float
    alpha_1: float
    alpha_2: float
    k: int

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "L1": self.loss_return,
            "L2": self.loss_volatility,
            "alpha1": self.alpha_1,
            "alpha2": self.alpha_2,
            "k": self.k,
        }


@dataclass
class ParetoState:
    """Where a subproblem stands: parameters, latest losses, active constraints and weights."""
    k: int
    theta: np.ndarray
    losses: np.ndarray
    active: List[int] = field(default_factory=list)
    step: int = 0
    alphas: Tuple[float, float] = (0.5, 0.5)


@dataclass
class ParetoResult:
    k: int
    theta: np.ndarray
    losses: np.ndarray
    feasible: bool
    initial: Optional[InitialSolution]
    trajectory: List[TrajectoryRecord]
    terminated_critical: bool = False

    def summary(self) -> dict:
        return {
            "k": self.k,
            "feasible": self.feasible,
            "initial_feasible": None if self.initial is None else self.initial.feasible,
            "initial_iterations": None if self.initial is None else self.initial.iterations,
            "steps": len(self.trajectory),
            "L1": float(self.losses[0]),
            "L2": float(self.losses[1]),
        }


def train_pareto(
    problem: ParetoProblem,
    prefs: Optional[PreferenceSet],
    k: int,
    training: TrainingConfig,
    pareto: ParetoConfig,
    seed: int = 0,
    fixed_alphas: Optional[Tuple[float, float]] = None,
) -> ParetoResult:
    """
    Train the solution of sub-region ``k``.

    Losses are normalised by their values at the starting parameters. Each
    mini-batch step takes (alpha_1, alpha_2) from ``pareto_step`` (or uses
    ``fixed_alphas``) and applies Adam to the gradient of the weighted
    normalised loss; the learning rate decays once per epoch.

    Returns:
        The final iterate if it lies in the sub-region, otherwise the most
        recent iterate that did (or the final one, flagged infeasible)

    Raises:
        NumericError: On a non-finite loss (with step, learning rate and losses)
    """
    rng = np.random.default_rng(seed)
    theta = np.array(problem.initial_parameters(), dtype=np.float64)
    start_losses, _ = problem.evaluate(theta)
    _check_finite(start_losses, np.zeros(1), 0)
    scale = np.where(start_losses > 0, start_losses, 1.0)

    def normalised(th: np.ndarray, batch=None) -> Tuple[np.ndarray, np.ndarray]:
        losses, grads = problem.evaluate(th, batch)
        return losses / scale, grads / scale[:, None]

    initial = None
    if fixed_alphas is None:
        initial = find_initial_solution(theta, k, prefs, normalised, pareto.init_step, pareto.init_max_iters)
        if initial.feasible:
            logger.info(f"k={k}: initial solution found after {initial.iterations} iterations")
        else:
            logger.warning(f"k={k}: no feasible initial solution in {initial.iterations} iterations, warm start")
        theta = initial.theta

    schedule = ExponentialDecay(training.lr, training.lr_decay)
    adam = AdamState()
    state = ParetoState(k=k, theta=theta, losses=np.zeros(2))
    trajectory: List[TrajectoryRecord] = []
    last_feasible: Optional[np.ndarray] = None
    critical = False

    for epoch in range(training.epochs):
        lr = schedule(epoch)
        for batch in problem.batches(epoch, rng):
            losses, grads = problem.evaluate(state.theta, batch)
            _check_finite(losses, grads, state.step, lr)
            v, g = losses / scale, grads / scale[:, None]

            if fixed_alphas is None:
                step = pareto_step(
                    g, v, k, prefs, pareto.activation_tolerance, pareto.max_active_constraints, pareto.critical_tolerance
                )
                state.alphas, state.active = step.alphas, step.active
                critical = step.critical
                if in_subregion(v, k, prefs):
                    last_feasible = state.theta.copy()
            else:
                state.alphas = fixed_alphas

            state.losses = losses
            trajectory.append(TrajectoryRecord(state.step, float(losses[0]), float(losses[1]), *state.alphas, k))
            if critical:
                logger.info(f"k={k}: restricted Pareto-critical point at step {state.step}")
                break

            weighted = state.alphas[0] * g[0] + state.alphas[1] * g[1]
            updated = adam_step(
                {"theta": state.theta}, {"theta": weighted}, adam, lr,
                (training.beta1, training.beta2), training.adam_eps,
            )
            state.theta = updated["theta"]
            state.step += 1
        if critical:
            break
        logger.debug(f"k={k} epoch {epoch + 1}: L=({state.losses[0]:.5g}, {state.losses[1]:.5g}) alpha={state.alphas}")

    final_losses, _ = problem.evaluate(state.theta)
    theta_out, feasible = state.theta, True
    if fixed_alphas is None:
        feasible = in_subregion(final_losses / scale, k, prefs)
        if not feasible and last_feasible is not None:
            theta_out, feasible = last_feasible, True
            final_losses, _ = problem.evaluate(theta_out)
            logger.info(f"k={k}: final iterate left the sub-region, keeping the last feasible one")
        elif not feasible:
            logger.warning(f"k={k}: no feasible iterate found")

    return ParetoResult(
        k=k,
        theta=theta_out,
        losses=np.asarray(final_losses, dtype=np.float64),
        feasible=feasible,
        initial=initial,
        trajectory=trajectory,
        terminated_critical=critical,
    )


class QuadraticProblem:
    """Two squared-distance objectives ``||theta - a||^2`` and ``||theta - b||^2`` (full batch)."""

    def __init__(self, target_1, target_2, theta0=None):
        self.target_1 = np.asarray(target_1, dtype=np.float64)
        self.target_2 = np.asarray(target_2, dtype=np.float64)
        self.theta0 = np.zeros_like(self.target_1) if theta0 is None else np.asarray(theta0, dtype=np.float64)

    def initial_parameters(self) -> np.ndarray:
        return self.theta0.copy()

    def evaluate(self, theta: np.ndarray, batch=None) -> Tuple[np.ndarray, np.ndarray]:
        d1, d2 = theta - self.target_1, theta - self.target_2
        return np.array([d1 @ d1, d2 @ d2]), np.stack([2.0 * d1, 2.0 * d2])

    def batches(self, epoch: int, rng: np.random.Generator) -> Sequence:
        return [None]
