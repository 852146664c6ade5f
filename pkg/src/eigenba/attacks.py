"""SimBA-style query attacks with pluggable search directions.

:func:`run_attack` probes ``x + delta - alpha*q`` then ``x + delta + alpha*q``
for each direction ``q`` and keeps whichever strictly lowers the objective.
The direction provider decides the attack:

* :class:`EigenDirections` - leading right singular vectors of the surrogate
  representation Jacobian, recomputed once per round (EigenBA);
* :class:`CartesianDirections` - random one-hot pixels (SimBA);
* :class:`DctDirections` - low-frequency 2-D DCT basis images (SimBA-DCT);
* :class:`TransFGM` / :class:`TransFGSM` - normalised / sign gradient of a
  random representation coordinate of the surrogate.
"""

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, BudgetExhausted
from .linalg import dct_matrix, eigen_directions
from .oracle import QueryOracle, clip, is_success, objective_value


@dataclass
class AttackConfig:
    step_size: float = 0.2
    k: int = 10
    budget: int = 2000
    l2_cap: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ArgumentError("step_size must be positive")
        if self.k < 1:
            raise ArgumentError("k must be at least 1")
        if self.budget < 1:
            raise ArgumentError("budget must be at least 1")
        if self.l2_cap is not None and self.l2_cap <= 0:
            raise ArgumentError("l2_cap must be positive")


@dataclass
class AttackOutcome:
    success: bool
    queries_used: int
    final_l2: float
    perturbation: np.ndarray
    # (query index, objective value) for the baseline and every accepted step
    trace: list = field(default_factory=list)
    # (round, position in round, sign) for every accepted step
    steps: list = field(default_factory=list)
    rounds: int = 0

    @property
    def accepted_steps(self):
        return len(self.steps)


# ----------------------------------------------------------------- providers


class DirectionProvider:
    """Base class.  Providers keep per-run state, so ``run_attack`` works on a copy."""

    name = "base"

    def reset(self, n):
        pass

    def next_directions(self, x, rng):
        raise NotImplementedError

    def notify(self, accepted):
        """Called after each round with the number of accepted steps."""


class EigenDirections(DirectionProvider):
    """Top-``k`` right singular vectors of the surrogate's ``J_h`` at the round start.

    After a round with no accepted step the next round moves down the
    spectrum (directions k+1..2k, and so on, wrapping to the top), since the
    input and hence the Jacobian have not changed.
    """

    name = "eigenba"

    def __init__(self, model, k=10):
        if not 1 <= k <= model.representation_size:
            raise ArgumentError(f"k must lie in [1, {model.representation_size}]")
        self.model = model
        self.k = k
        self.reset(model.input_size)

    def reset(self, n):
        self._offset = 0
        self._stalled = False

    def next_directions(self, x, rng):
        J = self.model.jacobian_h(x)
        rank_cap = min(J.shape)
        if self._stalled:
            self._offset += self.k
            if self._offset >= rank_cap:
                self._offset = 0
        else:
            self._offset = 0
        count = min(self._offset + self.k, rank_cap)
        return eigen_directions(J, count)[self._offset :]

    def notify(self, accepted):
        self._stalled = accepted == 0


class _PassProvider(DirectionProvider):
    """Walks a randomly ordered basis, one pass at a time, ``chunk`` per round."""

    chunk = 32

    def reset(self, n):
        self._order = []

    def _new_pass(self, rng):
        raise NotImplementedError

    def _vector(self, index):
        raise NotImplementedError

    def next_directions(self, x, rng):
        if not self._order:
            self._order = list(self._new_pass(rng))
        batch, self._order = self._order[: self.chunk], self._order[self.chunk :]
        return [self._vector(i) for i in batch]


class CartesianDirections(_PassProvider):
    name = "simba"

    def __init__(self, n):
        self.n = int(n)
        self.reset(n)

    def _new_pass(self, rng):
        return rng.permutation(self.n)

    def _vector(self, index):
        e = np.zeros(self.n)
        e[index] = 1.0
        return e


class DctDirections(_PassProvider):
    """2-D DCT basis images for inputs of shape (H, W) or (C, H, W).

    Each pass visits the low-frequency band (the first ``ceil(fraction * H)``
    by ``ceil(fraction * W)`` frequencies of every channel) in random order,
    then the remaining frequencies in random order.
    """

    name = "simba-dct"

    def __init__(self, image_shape, fraction=0.125):
        shape = tuple(image_shape)
        if len(shape) == 2:
            shape = (1,) + shape
        if len(shape) != 3:
            raise ArgumentError("image_shape must be (H, W) or (C, H, W)")
        if not 0 < fraction <= 1:
            raise ArgumentError("fraction must lie in (0, 1]")
        self.shape = shape
        self.fraction = fraction
        self._rows = dct_matrix(shape[1])
        self._cols = dct_matrix(shape[2])
        c, h, w = shape
        bh, bw = math.ceil(fraction * h), math.ceil(fraction * w)
        grid = np.indices(shape).reshape(3, -1).T
        low = (grid[:, 1] < bh) & (grid[:, 2] < bw)
        self._low = grid[low]
        self._high = grid[~low]
        self.reset(c * h * w)

    def _new_pass(self, rng):
        low = self._low[rng.permutation(len(self._low))]
        high = self._high[rng.permutation(len(self._high))]
        return [tuple(t) for t in np.concatenate([low, high])]

    def _vector(self, index):
        c, u, v = index
        img = np.zeros(self.shape)
        img[c] = np.outer(self._rows[u], self._cols[v])
        return img.ravel()

    def basis(self):
        """All basis images as rows of a matrix, in (channel, u, v) order."""
        return np.array([self._vector(tuple(t)) for t in np.indices(self.shape).reshape(3, -1).T])


class _TransProvider(DirectionProvider):
    """Gradient of a random representation coordinate at the current input."""

    def __init__(self, model):
        self.model = model
        self.reset(model.input_size)

    def reset(self, n):
        self._order = []

    def _transform(self, grad):
        raise NotImplementedError

    def next_directions(self, x, rng):
        m = self.model.representation_size
        # skip coordinates with a vanishing gradient (e.g. inactive relu units)
        for _ in range(m):
            if not self._order:
                self._order = list(rng.permutation(m))
            grad = self.model.representation_gradient(x, int(self._order.pop(0)))
            if np.any(grad != 0):
                return [self._transform(grad)]
        return [np.zeros(self.model.input_size)]


class TransFGM(_TransProvider):
    name = "trans-fgm"

    def _transform(self, grad):
        return grad / np.linalg.norm(grad)


class TransFGSM(_TransProvider):
    name = "trans-fgsm"

    def _transform(self, grad):
        return np.sign(grad)


# ----------------------------------------------------------------- the loop


def _candidate(x, delta, step, l2_cap):
    d = delta + step
    if l2_cap is not None:
        norm = np.linalg.norm(d)
        if norm > l2_cap:
            d *= l2_cap / norm
    return clip(x + d)


def run_attack(oracle, objective, provider, config, x, initial_check=False):
    """Run one query attack on ``x`` and return an :class:`AttackOutcome`.

    The oracle must carry a finite budget; running out of it ends the attack
    as a failure.  ``provider`` is copied, so one provider may seed many runs.
    """
    if oracle.budget is None:
        raise ArgumentError("run_attack needs an oracle with a finite budget")
    x = np.asarray(x, dtype=np.float64).ravel()
    if np.any(x < 0) or np.any(x > 1):
        raise ArgumentError("input must lie in [0, 1]")
    provider = copy.copy(provider)
    provider.reset(x.size)
    rng = np.random.default_rng(config.seed)
    alpha = config.step_size

    delta = np.zeros_like(x)
    outcome = AttackOutcome(False, 0, 0.0, delta)

    def finish(success):
        outcome.success = success
        outcome.queries_used = oracle.queries_used
        outcome.perturbation = delta
        outcome.final_l2 = float(np.linalg.norm(delta))
        return outcome

    try:
        probs = oracle.query(x)
        value = objective_value(objective, probs)
        outcome.trace.append((oracle.queries_used, value))
        if initial_check and is_success(objective, probs):
            return finish(True)
        while True:
            directions = provider.next_directions(x + delta, rng)
            accepted = 0
            for pos, q in enumerate(directions):
                for sign in (-1.0, 1.0):
                    cand = _candidate(x, delta, sign * alpha * q, config.l2_cap)
                    cand_probs = oracle.query(cand)
                    cand_value = objective_value(objective, cand_probs)
                    if cand_value < value:
                        delta = cand - x
                        probs, value = cand_probs, cand_value
                        outcome.trace.append((oracle.queries_used, value))
                        outcome.steps.append((outcome.rounds, pos, int(sign)))
                        accepted += 1
                        break
                if is_success(objective, probs):
                    outcome.rounds += 1
                    return finish(True)
            outcome.rounds += 1
            provider.notify(accepted)
    except BudgetExhausted:
        return finish(False)


def attack(model, x, objective, provider, config, initial_check=False):
    """Convenience wrapper: attack ``model`` through a fresh budgeted oracle."""
    oracle = QueryOracle(model, config.budget)
    return run_attack(oracle, objective, provider, config, x, initial_check)


@dataclass
class DescentResult:
    success: bool
    l2: float
    steps: int
    adversarial: np.ndarray


def white_box_descent_oracle(model, x, objective, step_size, max_steps):
    """Normalised gradient descent on the objective with full model access.

    Used to certify that an adversarial example is reachable for ``x``.
    """
    x0 = np.asarray(x, dtype=np.float64).ravel()
    cur = x0.copy()
    sign = -1.0 if objective.targeted else 1.0
    for step in range(max_steps + 1):
        if is_success(objective, model.forward(cur)):
            return DescentResult(True, float(np.linalg.norm(cur - x0)), step, cur)
        if step == max_steps or step_size == 0:
            break
        grad = sign * model.input_gradient(cur, objective.label)
        norm = np.linalg.norm(grad)
        if norm == 0:
            break
        cur = clip(cur - step_size * grad / norm)
    return DescentResult(False, float(np.linalg.norm(cur - x0)), step, cur)
