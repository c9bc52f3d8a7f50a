"""Stage games, monitoring structures and demographic parameters."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPositiveParameter

PROB_TOL = 1e-12


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StageGame:
    """Finite n-player normal-form game.

    ``payoff[i]`` is role ``i``'s payoff tensor indexed by the full action
    profile ``(a_1, ..., a_n)``.
    """

    action_labels: tuple
    payoff: np.ndarray

    def __post_init__(self):
        labels = tuple(tuple(str(a) for a in acts) for acts in self.action_labels)
        if len(labels) < 2:
            raise DimensionMismatch("a stage game needs at least two roles")
        if any(len(acts) == 0 for acts in labels):
            raise DimensionMismatch("every role needs a nonempty action set")
        payoff = _frozen(self.payoff)
        shape = (len(labels),) + tuple(len(a) for a in labels)
        if payoff.shape != shape:
            raise DimensionMismatch(f"payoff tensor has shape {payoff.shape}, expected {shape}")
        if not np.all(np.isfinite(payoff)):
            raise ValueError("payoff entries must be finite")
        object.__setattr__(self, "action_labels", labels)
        object.__setattr__(self, "payoff", payoff)

    @property
    def role_count(self) -> int:
        return len(self.action_labels)

    def action_count(self, role: int) -> int:
        return len(self.action_labels[role])

    def action_index(self, role: int, label: str) -> int:
        return self.action_labels[role].index(label)

    def payoff_range(self, role: int) -> tuple[float, float]:
        u = self.payoff[role]
        return float(u.min()), float(u.max())

    def own_view(self, role: int) -> np.ndarray:
        """Role's payoff as an ``(own_action, opponent_action)`` matrix (two roles only)."""
        self._require_two_roles()
        u = self.payoff[role]
        return u if role == 0 else u.T

    def _require_two_roles(self):
        if self.role_count != 2:
            raise DimensionMismatch("record dynamics are implemented for two-role games")


class Modularity(enum.Enum):
    SUBMODULAR = "submodular"
    SUPERMODULAR = "supermodular"


@dataclass(frozen=True)
class PrisonersDilemmaParams:
    g: float
    l: float

    def __post_init__(self):
        if not (self.g > 0 and self.l > 0):
            raise NonPositiveParameter(f"prisoner's dilemma needs g>0 and l>0, got g={self.g}, l={self.l}")

    @property
    def modularity(self) -> Modularity:
        # g == l counts as supermodular
        return Modularity.SUBMODULAR if self.g > self.l else Modularity.SUPERMODULAR

    def row_payoffs(self) -> np.ndarray:
        """Row player's matrix with action order (C, D)."""
        return np.array([[1.0, -self.l], [1.0 + self.g, 0.0]])


PD_ACTIONS = ("C", "D")
C, D = 0, 1


def make_prisoners_dilemma(g: float, l: float) -> tuple[StageGame, PrisonersDilemmaParams]:
    params = PrisonersDilemmaParams(g, l)
    row = params.row_payoffs()
    game = StageGame((PD_ACTIONS, PD_ACTIONS), np.stack([row, row.T]))
    return game, params


def strictly_dominant_action(game: StageGame, role: int):
    """Index of role's strictly dominant action, or ``None``."""
    if not 0 <= role < game.role_count:
        raise IndexError(f"role {role} out of range")
    u = np.moveaxis(game.payoff[role], role, 0)
    u = u.reshape(u.shape[0], -1)
    for a in range(u.shape[0]):
        others = np.delete(u, a, axis=0)
        if others.size == 0 or np.all(u[a] > others):
            return a
    return None


@dataclass(frozen=True)
class MonitoringStructure:
    """Per-role signal distributions ``tables[i][a_1, ..., a_n, s]``."""

    signal_labels: tuple
    tables: tuple

    def __post_init__(self):
        labels = tuple(tuple(str(s) for s in sig) for sig in self.signal_labels)
        if len(labels) != len(self.tables):
            raise DimensionMismatch("one signal table per role is required")
        tables = []
        for i, (sig, tab) in enumerate(zip(labels, self.tables)):
            t = _frozen(tab)
            if t.shape[-1] != len(sig):
                raise DimensionMismatch(f"role {i}: table has {t.shape[-1]} signals, labels give {len(sig)}")
            if t.ndim != len(labels) + 1:
                raise DimensionMismatch(f"role {i}: table must be indexed by a full action profile and a signal")
            if np.any(t < 0) or np.any(t > 1):
                raise ValueError(f"role {i}: probabilities must lie in [0,1]")
            if np.any(np.abs(t.sum(axis=-1) - 1.0) > PROB_TOL):
                raise ValueError(f"role {i}: signal distributions must sum to 1")
            reach = t.reshape(-1, t.shape[-1]).max(axis=0)
            if np.any(reach <= 0):
                bad = [sig[k] for k in np.flatnonzero(reach <= 0)]
                raise ValueError(f"role {i}: signals {bad} are never generated")
            tables.append(t)
        object.__setattr__(self, "signal_labels", labels)
        object.__setattr__(self, "tables", tuple(tables))

    def role_count(self) -> int:
        return len(self.tables)

    def signal_count(self, role: int) -> int:
        return len(self.signal_labels[role])

    def own_view(self, role: int) -> np.ndarray:
        """Role's table as ``[own_action, opponent_action, signal]`` (two roles only)."""
        if len(self.tables) != 2:
            raise DimensionMismatch("record dynamics are implemented for two-role games")
        t = self.tables[role]
        return t if role == 0 else t.transpose(1, 0, 2)

    def check_against(self, game: StageGame):
        if self.role_count() != game.role_count:
            raise DimensionMismatch("monitoring and game disagree on the number of roles")
        shape = tuple(game.action_count(i) for i in range(game.role_count))
        for i, t in enumerate(self.tables):
            if t.shape[:-1] != shape:
                raise DimensionMismatch(f"role {i}: table profile shape {t.shape[:-1]} != {shape}")


def perfect_monitoring(game: StageGame) -> MonitoringStructure:
    """Each role's signal is its own action."""
    shape = tuple(game.action_count(i) for i in range(game.role_count))
    tables = []
    for i in range(game.role_count):
        t = np.zeros(shape + (shape[i],))
        for profile in np.ndindex(*shape):
            t[profile + (profile[i],)] = 1.0
        tables.append(t)
    return MonitoringStructure(game.action_labels, tuple(tables))


def non_shifting_support(monitoring: MonitoringStructure, role: int) -> dict:
    """Check that the support of role's signal does not move with opponents' actions.

    Returns ``{"holds": bool, "eta": float}``. ``eta`` is the likelihood floor
    min_s max_{a_i} min_{a_-i} f_i(s | a_i, a_-i); it is 0 when the condition fails.
    """
    t = np.moveaxis(monitoring.tables[role], role, 0)
    t = t.reshape(t.shape[0], -1, t.shape[-1])  # own, others, signal
    positive = t > 0
    holds = bool(np.all(positive.all(axis=1) == positive.any(axis=1)))
    if not holds:
        return {"holds": False, "eta": 0.0}
    eta = float(t.min(axis=1).max(axis=0).min())
    return {"holds": True, "eta": eta}


@dataclass(frozen=True)
class PopulationParams:
    hat_delta: float
    bar_delta: float
    delta: float = field(init=False)

    def __post_init__(self):
        for name in ("hat_delta", "bar_delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0,1), got {v}")
        object.__setattr__(self, "delta", self.hat_delta * self.bar_delta)

    @property
    def expected_lifespan(self) -> float:
        return 1.0 / (1.0 - self.bar_delta)
