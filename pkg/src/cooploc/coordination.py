"""Per-step coordination: stationary-robot selection and the correction chain.

Each epoch one robot holds still and acts as the temporary landmark. Within a
step, moving robots are ordered outward from it by measured range: a robot
may only correct against the stationary robot or robots that appear earlier
in the order, so every belief a correction consumes is already settled for
this step. Robots with no measurement path to the chain fall back to pure
prediction rather than stalling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RobotId
from .models import RelativeMeasurement

# Spawn-key tag for the stationary-selection RNG stream; distinct from the
# simulation streams so scheduling never perturbs noise draws.
_SELECT_STREAM = 901


@dataclass(frozen=True, slots=True)
class EpochPolicy:
    """How the stationary robot is chosen and for how many steps it holds."""

    mode: str = "seeded-random"
    epoch_length: int = 20

    def __post_init__(self):
        if self.mode not in ("seeded-random", "round-robin"):
            raise ValueError(f"unknown epoch policy mode: {self.mode!r}")
        if self.epoch_length < 1:
            raise ValueError(f"epoch_length must be >= 1, got {self.epoch_length}")


@dataclass(frozen=True, slots=True)
class StepSchedule:
    """Who is stationary this step and who corrects against whom, in order.

    Invariants: the stationary robot never appears as a corrected robot;
    every source of an entry is the stationary robot or a robot scheduled
    earlier; each moving robot appears exactly once. An empty ``sources``
    tuple means that robot runs prediction only this step.
    """

    stationary: RobotId
    correction_order: tuple[tuple[RobotId, tuple[RobotId, ...]], ...]

    def belief_transfers(self) -> int:
        """Number of neighbor beliefs communicated to execute this schedule."""
        return sum(len(sources) for _, sources in self.correction_order)

    def validate(self, fleet: list[RobotId]) -> None:
        """Raise ValueError if the chain invariants do not hold for ``fleet``."""
        moving = [r for r in fleet if r != self.stationary]
        scheduled = [robot for robot, _ in self.correction_order]
        if sorted(scheduled) != sorted(moving):
            raise ValueError(
                f"schedule covers {sorted(scheduled)}, expected moving set {sorted(moving)}"
            )
        localized: set[RobotId] = {self.stationary}
        for robot, sources in self.correction_order:
            if robot == self.stationary:
                raise ValueError(f"stationary robot {robot} scheduled for correction")
            for src in sources:
                if src not in localized:
                    raise ValueError(
                        f"robot {robot} corrects against {src} before it is localized"
                    )
            localized.add(robot)


def select_stationary(
    fleet: list[RobotId], epoch_index: int, policy: EpochPolicy, seed: int
) -> RobotId:
    """Pick the stationary robot for an epoch.

    Deterministic in (epoch_index, policy, seed). Round-robin cycles through
    the fleet; seeded-random draws uniformly from an epoch-indexed stream of
    the given seed, independent of every simulation noise stream.
    """
    if not fleet:
        raise ValueError("fleet must be non-empty")
    if policy.mode == "round-robin":
        return fleet[epoch_index % len(fleet)]
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_SELECT_STREAM, epoch_index))
    )
    return fleet[int(rng.integers(len(fleet)))]


def build_schedule(
    fleet: list[RobotId],
    stationary: RobotId,
    measurements: list[RelativeMeasurement],
) -> StepSchedule:
    """Order the moving robots outward from the stationary one.

    Greedy chain construction: repeatedly pick, among unscheduled robots with
    at least one measurement to an already-localized robot, the one whose
    minimum measured range to the localized set is smallest (ties to the
    lower id). Its sources are all localized robots it measured, nearest
    first. Robots with no path to the chain are appended last, in id order,
    with no sources.
    """
    # Minimum measured range per ordered (observer, target) pair.
    ranges: dict[RobotId, dict[RobotId, float]] = {}
    for m in measurements:
        per_observer = ranges.setdefault(m.observer, {})
        prev = per_observer.get(m.target)
        if prev is None or m.range < prev:
            per_observer[m.target] = m.range

    localized: set[RobotId] = {stationary}
    pending = [r for r in fleet if r != stationary]
    order: list[tuple[RobotId, tuple[RobotId, ...]]] = []

    while True:
        best: tuple[float, RobotId] | None = None
        for robot in pending:
            reachable = [
                rng for tgt, rng in ranges.get(robot, {}).items() if tgt in localized
            ]
            if not reachable:
                continue
            key = (min(reachable), robot)
            if best is None or key < best:
                best = key
        if best is None:
            break
        _, robot = best
        sources = sorted(
            ((rng, tgt) for tgt, rng in ranges[robot].items() if tgt in localized),
        )
        order.append((robot, tuple(tgt for _, tgt in sources)))
        localized.add(robot)
        pending.remove(robot)

    for robot in sorted(pending):
        order.append((robot, ()))

    return StepSchedule(stationary=stationary, correction_order=tuple(order))


def plan_step(
    fleet: list[RobotId],
    policy: EpochPolicy,
    step_index: int,
    measurements: list[RelativeMeasurement],
    seed: int,
) -> StepSchedule:
    """Select the epoch's stationary robot and build this step's chain."""
    epoch_index = step_index // policy.epoch_length
    stationary = select_stationary(fleet, epoch_index, policy, seed)
    return build_schedule(fleet, stationary, measurements)
