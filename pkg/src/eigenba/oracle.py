"""Black-box query boundary: counted probability queries and attack objectives."""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, BudgetExhausted


def clip(x):
    """Clamp every entry of ``x`` into the valid input range [0, 1]."""
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


class QueryOracle:
    """Wraps a probability evaluator with a query counter and an optional budget.

    ``target`` is any callable mapping one input to a probability vector, for
    example a :class:`~eigenba.net.LayeredModel`.  ``budget=None`` means
    unlimited queries.
    """

    def __init__(self, target, budget=None):
        if budget is not None and budget < 1:
            raise ArgumentError("budget must be a positive integer or None")
        self.target = target
        self.budget = budget
        self._used = 0

    @property
    def queries_used(self):
        return self._used

    @property
    def remaining(self):
        return None if self.budget is None else self.budget - self._used

    def query(self, x):
        if self.budget is not None and self._used >= self.budget:
            raise BudgetExhausted(self.budget)
        self._used += 1
        return np.array(self.target(x), dtype=np.float64)


@dataclass(frozen=True)
class AttackObjective:
    """Untargeted (push ``label`` down) or targeted (pull ``label`` up)."""

    label: int
    targeted: bool = False

    @classmethod
    def untargeted(cls, true_label):
        return cls(int(true_label), False)

    @classmethod
    def toward(cls, target_class):
        return cls(int(target_class), True)

    def validate(self, class_count):
        if not 0 <= self.label < class_count:
            raise ArgumentError(f"class {self.label} outside [0, {class_count})")
        return self


def objective_value(objective, probs):
    """Scalar the attack minimises: ``p[y]`` untargeted, ``-p[c]`` targeted."""
    p = float(probs[objective.label])
    return -p if objective.targeted else p


def is_success(objective, probs):
    # np.argmax breaks ties toward the lowest index
    top = int(np.argmax(probs))
    if objective.targeted:
        return top == objective.label
    return top != objective.label
