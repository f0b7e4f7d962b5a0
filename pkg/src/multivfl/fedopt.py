"""Server-side aggregation: FedAvg, FedAdam, FedYogi and FedDemonAdam.

Every round the server receives one delta per label owner (post-training
weights minus pre-training weights), averages them into a pseudo-gradient
``t`` and applies a single update to the shared label-owner model.

The adaptive rules operate on flattened parameters::

    m <- beta1 * m + (1 - beta1) * t          (fedadam, fedyogi)
    m <- beta1_r * m + t                      (feddemonadam, decayed beta1_r)
    v <- beta2 * v + (1 - beta2) * q**2       (fedadam, feddemonadam)
    v <- v - (1 - beta2) * q**2 * sign(v - q**2)   (fedyogi)
    w <- w + sqrt(1 - beta2**r) / (1 - beta1**r) * eta_s * m / (sqrt(v) + s)

where ``q`` is ``m`` (``second_moment_source="momentum"``, the default) or
``t`` (``"delta"``, the textbook FedAdam form).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, NumericError
from .nn import ParamSet

ALGORITHMS = ("fedavg", "fedadam", "fedyogi", "feddemonadam")
MOMENT_SOURCES = ("momentum", "delta")


def demon_beta1(beta1_init: float, r: int, R: int) -> float:
    """Decaying-momentum coefficient at round ``r`` of ``R``.

    Falls from ``beta1_init`` at r=0 to 0 at r=R.
    """
    if R < 1:
        raise InputError(f"total rounds must be >= 1, got {R}")
    if not 0 <= r <= R:
        raise InputError(f"round {r} outside [0, {R}]")
    if not 0.0 <= beta1_init < 1.0:
        raise InputError(f"beta1 must lie in [0, 1), got {beta1_init}")
    frac = 1.0 - r / R
    return beta1_init * frac / ((1.0 - beta1_init) + beta1_init * frac)


def average_params(sets: Sequence[ParamSet]) -> ParamSet:
    """Elementwise mean of aligned ParamSets.

    Values are sorted along the party axis and averaged as offsets from the
    smallest one, so the result is bitwise independent of the order of
    ``sets`` and K identical sets average to exactly themselves.
    """
    sets = list(sets)
    if not sets:
        raise InputError("cannot average an empty list of parameter sets")
    first = sets[0]
    for i, p in enumerate(sets[1:], start=1):
        if not first.aligned_with(p):
            raise InputError(f"parameter set {i} is not aligned with set 0")
    if len(sets) == 1:
        return first.copy()
    k = len(sets)
    out = []
    for name in first:
        stacked = np.sort(np.stack([p[name] for p in sets]), axis=0)
        low = stacked[0]
        out.append((name, low + (stacked[1:] - low).sum(axis=0) / k))
    return ParamSet(out)


@dataclass(frozen=True)
class ServerOptState:
    algorithm: str
    m: ParamSet
    v: ParamSet
    beta1_init: float = 0.9
    beta2: float = 0.99
    eta_s: float = 1e-3
    s: float = 1e-3
    round: int = 1
    total_rounds: int = 1
    second_moment_source: str = "momentum"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InputError(f"unknown algorithm {self.algorithm!r}; valid: {', '.join(ALGORITHMS)}")
        if self.second_moment_source not in MOMENT_SOURCES:
            raise InputError(f"second_moment_source must be one of {MOMENT_SOURCES}")
        if not (0.0 <= self.beta1_init < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InputError("beta1 and beta2 must lie in [0, 1)")
        if not (self.eta_s > 0 and self.s > 0):
            raise InputError("server learning rate and stability constant must be positive")
        if self.total_rounds < 1 or not 1 <= self.round:
            raise InputError("round counters must be >= 1")

    def beta1_at(self, r: int | None = None) -> float:
        """Momentum coefficient used at round ``r`` (default: the next step)."""
        r = self.round if r is None else r
        if self.algorithm == "feddemonadam":
            return demon_beta1(self.beta1_init, r, self.total_rounds)
        return self.beta1_init


def init_server_state(algorithm: str, template: ParamSet, total_rounds: int, *, beta1=0.9, beta2=0.99,
                      eta_s=1e-3, s=1e-3, second_moment_source="momentum") -> ServerOptState:
    return ServerOptState(algorithm, template.zeros_like(), template.zeros_like(), beta1, beta2, eta_s, s,
                          1, total_rounds, second_moment_source)


def server_step(state: ServerOptState, current: ParamSet, deltas: Sequence[ParamSet]) -> tuple[ServerOptState, ParamSet]:
    deltas = list(deltas)
    if not deltas:
        raise InputError("server_step needs at least one label-owner delta")
    if state.round > state.total_rounds:
        raise InputError(f"round {state.round} exceeds the configured {state.total_rounds} rounds")
    for k, d in enumerate(deltas):
        if not d.all_finite():
            raise NumericError(f"non-finite values in delta from label owner {k}")
    t = average_params(deltas)
    r = state.round
    if state.algorithm == "fedavg":
        return dataclasses.replace(state, round=r + 1), current + t

    b1, b2 = state.beta1_init, state.beta2
    if state.algorithm == "feddemonadam":
        b1_r = demon_beta1(b1, r, state.total_rounds)
        m = state.m.zip_map(t, lambda m_, t_: b1_r * m_ + t_)
    else:
        m = state.m.zip_map(t, lambda m_, t_: b1 * m_ + (1.0 - b1) * t_)
    q = m if state.second_moment_source == "momentum" else t
    if state.algorithm == "fedyogi":
        v = state.v.zip_map(q, lambda v_, q_: v_ - (1.0 - b2) * q_ * q_ * np.sign(v_ - q_ * q_))
    else:
        v = state.v.zip_map(q, lambda v_, q_: b2 * v_ + (1.0 - b2) * q_ * q_)
    scale = np.sqrt(1.0 - b2 ** r) / (1.0 - b1 ** r) * state.eta_s
    step = m.zip_map(v, lambda m_, v_: scale * m_ / (np.sqrt(v_) + state.s))
    new_params = current + step
    if not new_params.all_finite():
        raise NumericError(f"server update produced non-finite parameters at round {r}")
    return dataclasses.replace(state, m=m, v=v, round=r + 1), new_params
