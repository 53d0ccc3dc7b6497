"""Evaluation accounting.

Every density, gradient, and proposal evaluation in the pipeline
increments exactly one counter here, so the cost of a scheme can be read
off the ledger and checked against the advertised budget.

Initial-state evaluations of MCMC chains are tracked in their own
counter: the per-iteration budgets (upper layer = one candidate
evaluation per step) exclude chain initialisation, and keeping the two
apart lets budget checks be exact while still counting every call.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class EvalLedger:
    """Counters for target, gradient, and proposal-density evaluations.

    ``partial_posterior_evals`` is keyed by the partial-posterior index so
    per-subset costs stay visible; ``partial_total()`` gives the sum.
    """

    full_posterior_evals: int = 0
    partial_posterior_evals: dict[int, int] = field(default_factory=dict)
    gradient_evals: int = 0
    proposal_evals: int = 0
    init_state_evals: int = 0

    def count_full(self, n: int = 1) -> None:
        self.full_posterior_evals += n

    def count_partial(self, index: int, n: int = 1) -> None:
        self.partial_posterior_evals[index] = self.partial_posterior_evals.get(index, 0) + n

    def count_gradient(self, n: int = 1) -> None:
        self.gradient_evals += n

    def count_proposal(self, n: int = 1) -> None:
        self.proposal_evals += n

    def count_init(self, n: int = 1) -> None:
        self.init_state_evals += n

    def partial_total(self) -> int:
        return sum(self.partial_posterior_evals.values())

    def posterior_total(self) -> int:
        """Full plus partial evaluations (initialisation excluded)."""
        return self.full_posterior_evals + self.partial_total()

    def merge(self, other: "EvalLedger") -> "EvalLedger":
        """Fold ``other`` into this ledger (component-wise sums)."""
        self.full_posterior_evals += other.full_posterior_evals
        for k, v in other.partial_posterior_evals.items():
            self.partial_posterior_evals[k] = self.partial_posterior_evals.get(k, 0) + v
        self.gradient_evals += other.gradient_evals
        self.proposal_evals += other.proposal_evals
        self.init_state_evals += other.init_state_evals
        return self

    def snapshot(self) -> dict:
        return {
            "full_posterior_evals": self.full_posterior_evals,
            "partial_posterior_evals": dict(self.partial_posterior_evals),
            "gradient_evals": self.gradient_evals,
            "proposal_evals": self.proposal_evals,
            "init_state_evals": self.init_state_evals,
        }

    @staticmethod
    def merged(ledgers) -> "EvalLedger":
        total = EvalLedger()
        for led in ledgers:
            total.merge(led)
        return total
