"""
Generation context assembled by the engine for each evolution step.
"""

from dataclasses import dataclass, field, replace
from typing import List

from .memory_models import EMPTY_MEMORY


@dataclass(frozen=True)
class Context:
    """
    Everything the generator sees besides the operator-specific inputs.

    Attributes:
        statement (str): Task statement
        best_summary (str): Summary of the current best candidate
        local_memory_render (str): Rendered local memory or "(empty)"
        retrieved_global (List[str]): Rendered retrieved global experiences
        iteration (int): Loop iteration t (0 during initialization)
    """

    statement: str
    best_summary: str = EMPTY_MEMORY
    local_memory_render: str = EMPTY_MEMORY
    retrieved_global: List[str] = field(default_factory=list)
    iteration: int = 0

    def global_memory_render(self) -> str:
        if not self.retrieved_global:
            return EMPTY_MEMORY
        return "\n\n".join(self.retrieved_global)

    def rendered_size(self) -> int:
        return (
            len(self.statement)
            + len(self.best_summary)
            + len(self.local_memory_render)
            + len(self.global_memory_render())
        )

    def fit(self, budget_chars: int) -> "Context":
        """
        Shrink the context to the character budget.

        Retrieved experiences are dropped from the least similar end first,
        then the local memory is cut from its head so the newest items stay.
        """
        ctx = self
        while ctx.rendered_size() > budget_chars and ctx.retrieved_global:
            ctx = replace(ctx, retrieved_global=ctx.retrieved_global[:-1])
        overflow = ctx.rendered_size() - budget_chars
        if overflow > 0 and ctx.local_memory_render != EMPTY_MEMORY:
            kept = ctx.local_memory_render[overflow:]
            ctx = replace(ctx, local_memory_render=kept if kept.strip() else EMPTY_MEMORY)
        return ctx
