"""Template conversion of task names into yes/no success questions."""

from __future__ import annotations

from ..core import TaskSpec

__all__ = ["prompt_from_task"]

# multi-word prepositions first so they win the scan
_PREPOSITIONS = ("out of", "into", "onto", "in", "on")
_NORMALIZE = {"into": "in", "onto": "on"}


def _find_preposition(tokens: list[str]) -> tuple[int, str] | None:
    for i in range(1, len(tokens) - 1):
        two = " ".join(tokens[i : i + 2])
        if two in _PREPOSITIONS and i + 2 <= len(tokens) - 1:
            return i, two
        if tokens[i] in _PREPOSITIONS:
            return i, tokens[i]
    return None


def prompt_from_task(task: TaskSpec) -> str:
    """Render ``task.name`` into a completion question.

    Names of the form "verb object preposition target" become
    "is <object> placed <preposition> the <target>?"; anything else falls back
    to "has the task <name> been completed?". The output is deterministic in
    the name alone.
    """
    tokens = task.name.strip().lower().split()
    if len(tokens) >= 4:
        found = _find_preposition(tokens)
        if found is not None:
            idx, prep = found
            obj = " ".join(tokens[1:idx])
            target = " ".join(tokens[idx + len(prep.split()):])
            if obj and target:
                prep_out = _NORMALIZE.get(prep, prep)
                if target.startswith("the "):
                    target = target[4:]
                return f"is {obj} placed {prep_out} the {target}?"
    return f"has the task {task.name} been completed?"
