"""Step-size control for the outer iteration.

A doubling/backtracking line search, the relaxed and Armijo step criteria,
a watchdog that alternates between them, and a safeguarded Newton step on
``grad phi = 0``.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .merit import PenaltyBarrier, in_box
from .problem import NlpProblem, PenaltyParams

RELAXED = "relaxed"
STANDARD = "standard"


class LineSearchError(RuntimeError):
    """No acceptable step was found along the search direction."""


@dataclasses.dataclass(frozen=True)
class LineSearchParams:
    gamma: float = 0.1
    beta: float = 0.8
    max_doublings: int = 30
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.max_doublings < 0 or self.max_backtracks < 0:
            raise ValueError("iteration caps must be non-negative")


@dataclasses.dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    x: np.ndarray
    phi: float
    stages: int
    backtracks: int
    slope: Optional[float]  # grad phi(x)^T v at entry, when the criterion needed it


def armijo_criterion(phi: Callable[[np.ndarray], float], x: np.ndarray, alpha: float, v: np.ndarray,
                     phi_at_x: float, grad_phi_at_x: np.ndarray, gamma: float = 0.1) -> bool:
    """Sufficient decrease test; ``phi`` must return ``inf`` outside the box."""
    x_alpha = x + alpha * v
    if not in_box(x_alpha):
        return False
    return bool(phi(x_alpha) - phi_at_x <= gamma * alpha * float(grad_phi_at_x @ v))


def _merit_decrease(merit: PenaltyBarrier, x: np.ndarray):
    """``phi(.) - phi(x)`` as a callable, with ``phi(x)`` reported as 0."""
    return lambda y: merit.phi_diff(y, x)


def _constraint_norm(c: np.ndarray) -> float:
    return float(np.abs(c).max(initial=0.0))


def relaxed_criterion(p: NlpProblem, params: PenaltyParams, x: np.ndarray, alpha: float,
                      v: np.ndarray) -> bool:
    """Accept if ``phi`` decreases, or if ``f`` decreases and ``|c|_inf`` stays moderate."""
    merit = PenaltyBarrier(p, params)
    return RelaxedCriterion.predicate(merit, np.asarray(x, dtype=float), np.asarray(v, dtype=float))(alpha)


class ArmijoCriterion:
    name = STANDARD

    def __init__(self, gamma: float = 0.1):
        self.gamma = gamma
        self.slope: Optional[float] = None

    def bind(self, merit: PenaltyBarrier, x: np.ndarray, v: np.ndarray):
        """Return the acceptance test for base point ``x``, or None if ``v`` is not a descent direction."""
        grad = merit.grad(x)
        slope = float(grad @ v)
        self.slope = slope
        if not slope < 0.0:
            return None

        def test(alpha: float) -> bool:
            return armijo_criterion(_merit_decrease(merit, x), x, alpha, v, 0.0, grad, self.gamma)

        return test


class RelaxedCriterion:
    name = RELAXED

    def __init__(self):
        self.slope: Optional[float] = None

    def bind(self, merit: PenaltyBarrier, x: np.ndarray, v: np.ndarray):
        """Like :meth:`ArmijoCriterion.bind`; a non-descent ``v`` is refused here too."""
        self.slope = float(merit.grad(x) @ v)
        if not self.slope < 0.0:
            return None
        return self.predicate(merit, x, v)

    @staticmethod
    def predicate(merit: PenaltyBarrier, x: np.ndarray, v: np.ndarray):
        f_x = merit.f(x)
        c_cap = 10.0 * max(_constraint_norm(merit.c(x)), 0.01)

        def test(alpha: float) -> bool:
            x_alpha = x + alpha * v
            if not in_box(x_alpha):
                return False
            if merit.phi_diff(x_alpha, x) < 0.0:
                return True
            return merit.f(x_alpha) < f_x and _constraint_norm(merit.c(x_alpha)) <= c_cap

        return test


def line_search(merit: PenaltyBarrier, x: np.ndarray, v: np.ndarray, criterion,
                params: LineSearchParams = LineSearchParams(), extend_with=None) -> LineSearchResult:
    """Backtracking with a doubling maximum step.

    Each stage backtracks from ``alpha_max`` by ``beta`` until the criterion
    holds at the current base point and the trial point is interior; the
    accepted step moves the base point. The search stops after a stage whose
    accepted step leaves the total below ``alpha_max``; otherwise
    ``alpha_max`` doubles. A stage after the first that finds no acceptable
    step, or whose base point admits no descent, ends the search with the
    steps accepted so far. Stages after the first use ``extend_with`` when
    given, and ``criterion`` otherwise.

    Raises:
      LineSearchError: if the first stage accepts no step.
    """
    x_base = np.array(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not in_box(x_base):
        raise LineSearchError("base point is not interior")
    if not np.any(v):
        raise LineSearchError("zero search direction")
    alpha = 0.0
    alpha_max = 1.0
    stages = 0
    backtracks = 0
    entry_slope = None
    for stage in range(params.max_doublings + 1):
        active = criterion if (stage == 0 or extend_with is None) else extend_with
        test = active.bind(merit, x_base, v)
        if stage == 0:
            entry_slope = active.slope
        if test is None:
            if stage == 0:
                raise LineSearchError(f"not a descent direction (slope {active.slope:.3e})")
            break
        trial = alpha_max
        accepted = False
        for _ in range(params.max_backtracks + 1):
            if test(trial):
                accepted = True
                break
            trial *= params.beta
            backtracks += 1
        if not accepted:
            if stage == 0:
                raise LineSearchError("backtracking exhausted in the first stage")
            break
        x_base = x_base + trial * v
        alpha += trial
        stages += 1
        if alpha < alpha_max:
            break
        alpha_max *= 2.0
    return LineSearchResult(alpha, x_base, merit.phi(x_base), stages, backtracks, entry_slope)


@dataclasses.dataclass
class WatchdogState:
    """Checkpoint bookkeeping for the non-monotone step control."""

    checkpoint_x: np.ndarray
    checkpoint_phi: float
    ell: int = 5
    checkpoint_v: Optional[np.ndarray] = None
    relaxed_steps_since_progress: int = 0
    mode: str = RELAXED
    restores: int = 0

    @classmethod
    def start(cls, merit: PenaltyBarrier, x: np.ndarray, ell: int = 5) -> "WatchdogState":
        x = np.array(x, dtype=float)
        return cls(checkpoint_x=x, checkpoint_phi=merit.phi(x), ell=ell)

    def improves(self, merit: PenaltyBarrier, x: np.ndarray) -> bool:
        return merit.phi_diff(x, self.checkpoint_x) < 0.0

    def observe(self, merit: PenaltyBarrier, x: np.ndarray) -> None:
        """Account for an iterate produced outside the watchdog (e.g. a Newton step)."""
        if self.improves(merit, x):
            self._reset(x, merit.phi(x))

    def _reset(self, x, phi):
        self.checkpoint_x = np.array(x, dtype=float)
        self.checkpoint_phi = float(phi)
        self.checkpoint_v = None
        self.relaxed_steps_since_progress = 0


@dataclasses.dataclass(frozen=True)
class GlobalStep:
    x: np.ndarray
    phi: float
    alpha: float
    mode: str
    restored: bool
    search: LineSearchResult


def armijo_step(merit: PenaltyBarrier, x: np.ndarray, v: np.ndarray,
                params: LineSearchParams = LineSearchParams()) -> GlobalStep:
    res = line_search(merit, x, v, ArmijoCriterion(params.gamma), params)
    return GlobalStep(res.x, res.phi, res.alpha, STANDARD, False, res)


def watchdog_step(state: WatchdogState, merit: PenaltyBarrier, x: np.ndarray, v: np.ndarray,
                  params: LineSearchParams = LineSearchParams()):
    """One globalized step under watchdog control.

    Tries the relaxed criterion along ``v``. After ``ell`` consecutive steps
    without improving on the checkpoint (or a relaxed failure away from the
    checkpoint), returns to the checkpoint and takes an Armijo step along the
    direction that was computed there.

    Returns ``(step, state)``; ``state`` is updated in place.

    Raises:
      LineSearchError: if the Armijo step from the checkpoint fails, or the
        relaxed search fails at the checkpoint itself.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if state.relaxed_steps_since_progress == 0:
        state.checkpoint_v = v.copy()
    try:
        # beyond the full step only sufficient decrease may extend the step
        res = line_search(merit, x, v, RelaxedCriterion(), params, extend_with=ArmijoCriterion(params.gamma))
    except LineSearchError:
        if state.relaxed_steps_since_progress == 0:
            raise
        return _restore(state, merit, params), state

    if state.improves(merit, res.x):
        state._reset(res.x, res.phi)
        state.mode = RELAXED
        return GlobalStep(res.x, res.phi, res.alpha, RELAXED, False, res), state

    state.relaxed_steps_since_progress += 1
    if state.relaxed_steps_since_progress >= state.ell:
        return _restore(state, merit, params), state
    state.mode = RELAXED
    return GlobalStep(res.x, res.phi, res.alpha, RELAXED, False, res), state


def _restore(state: WatchdogState, merit: PenaltyBarrier, params: LineSearchParams) -> GlobalStep:
    res = line_search(merit, state.checkpoint_x, state.checkpoint_v, ArmijoCriterion(params.gamma), params)
    state.restores += 1
    state._reset(res.x, res.phi)
    state.mode = STANDARD
    return GlobalStep(res.x, res.phi, res.alpha, STANDARD, True, res)


def newton_polish(p: NlpProblem, params: PenaltyParams, x_k: np.ndarray):
    """Try a full Newton step on ``grad phi = 0``.

    Returns ``(x, accepted)``; ``x`` is ``x_k`` unchanged unless the step is
    interior, finite and strictly decreases ``phi``.
    """
    x_k = np.asarray(x_k, dtype=float)
    merit = PenaltyBarrier(p, params)
    try:
        grad = merit.grad(x_k)
        hess = merit.hess(x_k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            step = scipy.linalg.solve(hess, grad, assume_a="sym")
    except (np.linalg.LinAlgError, ValueError):
        return x_k, False
    x_new = x_k - step
    if not (np.all(np.isfinite(x_new)) and in_box(x_new)):
        return x_k, False
    if merit.phi_diff(x_new, x_k) < 0.0:
        return x_new, True
    return x_k, False
