"""Progressive residual reasoning from the account pivot.

Each step extracts an inferred latent user from the current state and
subtracts it, so later steps see only the unexplained remainder. The loop
stops adaptively once two consecutive inferred users are more similar than
the threshold (checked from the second step onward), or at the hard cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numeric import cosine_similarity

__all__ = [
    "ReasoningTrace",
    "init_state",
    "reason_step",
    "should_terminate",
    "run_reasoning",
    "aggregate",
]

STOP_SIMILARITY = "similarity"
STOP_CAP = "cap"


@dataclass
class ReasoningTrace:
    """Realized reasoning states and inferred users for one account.

    ``states[t]`` is the state after t extractions (states[0] is the
    initial state), ``users[t-1]`` the t-th inferred user, and
    ``similarities[t-2]`` the consecutive-user similarity checked at step
    t. The trace always telescopes: states[T] = states[0] - sum(users).
    """

    states: list[np.ndarray]
    users: list[np.ndarray]
    similarities: list[float]
    steps: int
    stop_reason: str


def init_state(pivot: np.ndarray, reason_position: np.ndarray) -> np.ndarray:
    """Initial reasoning state: pivot plus the learned position embedding
    that distinguishes this stage from the sequence-level one."""
    pivot = np.asarray(pivot, dtype=np.float64)
    reason_position = np.asarray(reason_position, dtype=np.float64)
    if pivot.shape != reason_position.shape:
        raise ValueError(
            f"dimension mismatch: pivot {pivot.shape} vs position {reason_position.shape}"
        )
    return pivot + reason_position


def reason_step(
    state: np.ndarray, extract: Callable[[np.ndarray], np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """One extraction: infer a user from the state and remove it."""
    user = extract(state)
    return user, state - user


def should_terminate(
    user: np.ndarray,
    prev_user: np.ndarray | None,
    alpha: float,
    step: int,
    max_steps: int,
) -> bool:
    """Stop when consecutive users exceed the similarity threshold (only
    checked from step 2) or the step cap is reached."""
    if step >= 2 and prev_user is not None:
        if cosine_similarity(user, prev_user) > alpha:
            return True
    return step >= max_steps


def run_reasoning(
    pivot: np.ndarray,
    reason_position: np.ndarray,
    extract: Callable[[np.ndarray], np.ndarray],
    alpha: float,
    max_steps: int,
) -> ReasoningTrace:
    """Iterate extraction until the termination rule fires.

    Termination is control flow only: it selects how many steps exist but
    contributes nothing differentiable itself.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    state = init_state(pivot, reason_position)
    states = [state]
    users: list[np.ndarray] = []
    similarities: list[float] = []
    step = 0
    reason = STOP_CAP
    while True:
        step += 1
        user, state = reason_step(states[-1], extract)
        users.append(user)
        states.append(state)
        if step >= 2:
            sim = cosine_similarity(users[-1], users[-2])
            similarities.append(sim)
            if sim > alpha:
                reason = STOP_SIMILARITY
                break
        if step >= max_steps:
            reason = STOP_CAP
            break
    return ReasoningTrace(
        states=states,
        users=users,
        similarities=similarities,
        steps=step,
        stop_reason=reason,
    )


def aggregate(users: list[np.ndarray]) -> np.ndarray:
    """Mean of the inferred users: the final account representation."""
    if not users:
        raise ValueError("cannot aggregate an empty user list")
    return np.mean(np.stack(users), axis=0)
