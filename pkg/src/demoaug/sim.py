"""Kinematic surrogate simulator and trajectory replay.

No contact dynamics: the end effector is a velocity-clamped proportional
servo, grasping is an attach/detach rule keyed to the gripper width
crossing the block width, and released blocks drop straight down onto the
nearest support (table or another block).  This keeps the parts of the task
that augmentation quality and ensembling actually influence — grasp timing
and placement accuracy — while staying cheap enough to replay thousands of
trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tasks
from .tasks import Scene, SuccessSpec, TaskKind, as_task, sample_scene, anchors_for_scene
from .trajectory import DemoTrajectory, augment_segmentwise, segment_transforms

SETTLE_EPS = 1e-9


class AttemptCapExceeded(RuntimeError):
    """Campaign hit its attempt cap before collecting enough successes.

    Carries the partial dataset in ``.dataset``.
    """

    def __init__(self, message: str, dataset: "Dataset"):
        super().__init__(message)
        self.dataset = dataset


@dataclass(frozen=True)
class ControllerConfig:
    gain: float = 5.0                  # 1/s
    max_speed: float = 0.5             # m/s
    max_gripper_speed: float = 0.2     # m/s
    dt: float = 0.05                   # s
    waypoint_advance_radius: float = 0.01  # m
    waypoint_timeout: float = 2.0      # s on one waypoint before forcing advance
    settle_time: float = 0.5           # s after the final waypoint

    def __post_init__(self):
        for name in ("gain", "max_speed", "max_gripper_speed", "dt",
                     "waypoint_advance_radius", "waypoint_timeout", "settle_time"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gain * self.dt >= 2.0:
            raise ValueError(f"gain*dt = {self.gain * self.dt} >= 2 is unstable")


@dataclass(frozen=True)
class GraspModel:
    """Attach/detach rule standing in for contact physics.

    Closing past the block width binds the nearest block within the capture
    radii to the end effector; opening back past it releases.
    """

    capture_radius_xy: float = 0.02
    capture_radius_z: float = 0.02
    block_size: float = tasks.BLOCK_SIZE

    @property
    def close_threshold(self) -> float:
        return self.block_size

    @property
    def release_threshold(self) -> float:
        return self.block_size


@dataclass(frozen=True)
class BlockState:
    pos: np.ndarray
    held: bool = False
    grasp_offset: np.ndarray | None = None


@dataclass(frozen=True)
class SimState:
    ee_pos: np.ndarray
    gripper: float
    blocks: tuple[BlockState, ...]
    time: float = 0.0


@dataclass(frozen=True)
class StepRecord:
    """One recorded control step: observation before acting, then the action."""

    time: float
    ee_pos: tuple
    gripper: float
    block_positions: tuple
    block_held: tuple
    action_pos: tuple
    action_gripper: float


@dataclass(frozen=True)
class EpisodeRecord:
    steps: tuple[StepRecord, ...]
    success: bool
    goals: tuple
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    """Successful episodes only, plus campaign accounting."""

    task: TaskKind
    episodes: tuple[EpisodeRecord, ...]
    attempts: int
    root_seed: int
    complete: bool = True

    @property
    def successes(self) -> int:
        return len(self.episodes)

    @property
    def discard_rate(self) -> float:
        return 0.0 if self.attempts == 0 else 1.0 - self.successes / self.attempts


def _settle(blocks: list[BlockState], size: float) -> list[BlockState]:
    """Rest every unheld block on its support (table or a block below it).

    A support only counts if its top is at or below the block's center, so
    a block two layers up never hoists the one beneath it; small downward
    interpenetration left by a low release is resolved upward by at most
    half a block.  Ascending-height processing keeps stacks deterministic.
    """
    rest_z = size / 2.0
    order = sorted(range(len(blocks)), key=lambda i: (blocks[i].pos[2], i))
    out = list(blocks)
    for i in order:
        b = out[i]
        if b.held:
            continue
        rest = rest_z
        for j, other in enumerate(out):
            if j == i:
                continue
            top = other.pos[2] + size / 2.0
            overlap = float(np.max(np.abs(other.pos[:2] - b.pos[:2]))) <= size
            if overlap and top <= b.pos[2] + SETTLE_EPS:
                rest = max(rest, top + size / 2.0)
        out[i] = replace(b, pos=np.array([b.pos[0], b.pos[1], rest]))
    return out


def step(state: SimState, action, cfg: ControllerConfig, grasp: GraspModel = GraspModel()) -> SimState:
    """Advance one control period toward (target position, target gripper).

    End-effector velocity is gain * error clamped to max_speed; the gripper
    slews at most max_gripper_speed.  Grasp binding happens on the step
    where the closing width crosses the block width, release on the step
    where opening crosses back.
    """
    target_pos, target_gripper = action
    target_pos = np.asarray(target_pos, dtype=float)

    delta = target_pos - state.ee_pos
    vel = cfg.gain * delta
    speed = float(np.linalg.norm(vel))
    if speed > cfg.max_speed:
        vel *= cfg.max_speed / speed
    ee = state.ee_pos + vel * cfg.dt

    g_step = float(np.clip(target_gripper - state.gripper,
                           -cfg.max_gripper_speed * cfg.dt, cfg.max_gripper_speed * cfg.dt))
    gripper = state.gripper + g_step

    blocks = list(state.blocks)
    held_idx = next((i for i, b in enumerate(blocks) if b.held), None)

    closing = state.gripper >= grasp.close_threshold > gripper
    opening = state.gripper < grasp.release_threshold <= gripper

    if closing and held_idx is None:
        best, best_dist = None, math.inf
        for i, b in enumerate(blocks):
            dxy = float(np.linalg.norm(b.pos[:2] - ee[:2]))
            dz = abs(float(b.pos[2] - ee[2]))
            if dxy <= grasp.capture_radius_xy and dz <= grasp.capture_radius_z:
                dist = float(np.linalg.norm(b.pos - ee))
                if dist < best_dist:
                    best, best_dist = i, dist
        if best is not None:
            blocks[best] = replace(blocks[best], held=True, grasp_offset=blocks[best].pos - ee)
            held_idx = best

    if opening and held_idx is not None:
        blocks[held_idx] = replace(blocks[held_idx], held=False, grasp_offset=None)
        held_idx = None

    if held_idx is not None:
        b = blocks[held_idx]
        blocks[held_idx] = replace(b, pos=ee + b.grasp_offset)

    blocks = _settle(blocks, grasp.block_size)
    return SimState(ee_pos=ee, gripper=gripper, blocks=tuple(blocks), time=state.time + cfg.dt)


def initial_state(traj: DemoTrajectory, scene: Scene) -> SimState:
    """Start the servo on the trajectory's first waypoint, blocks at rest."""
    w0 = traj.waypoints[0]
    blocks = tuple(BlockState(pos=np.asarray(p, dtype=float)) for p in scene.block_starts)
    return SimState(ee_pos=np.array(w0.position, dtype=float), gripper=float(w0.gripper),
                    blocks=blocks, time=0.0)


def _record(state: SimState, action_pos: np.ndarray, action_gripper: float) -> StepRecord:
    return StepRecord(
        time=state.time,
        ee_pos=tuple(float(x) for x in state.ee_pos),
        gripper=float(state.gripper),
        block_positions=tuple(tuple(float(x) for x in b.pos) for b in state.blocks),
        block_held=tuple(bool(b.held) for b in state.blocks),
        action_pos=tuple(float(x) for x in action_pos),
        action_gripper=float(action_gripper),
    )


def replay(aug: DemoTrajectory, scene: Scene, cfg: ControllerConfig = ControllerConfig(),
           grasp: GraspModel | None = None, spec: SuccessSpec = SuccessSpec(),
           provenance: dict | None = None) -> EpisodeRecord:
    """Drive the servo through the trajectory's waypoints and grade the result.

    The active waypoint is the recorded action at every step.  It advances
    when the end effector comes within the advance radius or after the
    per-waypoint timeout, whichever is first; after the final waypoint the
    controller holds it for the settle time.  Failures are recorded in the
    success flag, never raised.
    """
    grasp = grasp or GraspModel(block_size=scene.block_size)
    positions = aug.positions()
    grippers = aug.grippers()
    n = len(positions)
    timeout_steps = max(1, round(cfg.waypoint_timeout / cfg.dt))
    settle_steps = max(1, round(cfg.settle_time / cfg.dt))

    state = initial_state(aug, scene)
    records = []
    k = 0
    steps_on_wp = 0
    while k < n:
        records.append(_record(state, positions[k], grippers[k]))
        state = step(state, (positions[k], grippers[k]), cfg, grasp)
        steps_on_wp += 1
        reached = float(np.linalg.norm(state.ee_pos - positions[k])) <= cfg.waypoint_advance_radius
        if reached or steps_on_wp >= timeout_steps:
            k += 1
            steps_on_wp = 0
    for _ in range(settle_steps):
        records.append(_record(state, positions[-1], grippers[-1]))
        state = step(state, (positions[-1], grippers[-1]), cfg, grasp)

    ok = tasks.success(aug.task, state, scene, spec)
    return EpisodeRecord(steps=tuple(records), success=ok,
                         goals=tuple(tuple(float(x) for x in g) for g in scene.block_goals),
                         provenance=provenance or {})


def scene_seed_for(root_seed: int, attempt: int) -> int:
    """Well-mixed per-attempt scene seed, stable across platforms."""
    return int(np.random.SeedSequence([int(root_seed), int(attempt)]).generate_state(1)[0])


def _attempt_episode(demo, task, ws, cfg, grasp, spec, root_seed, attempt):
    seed = scene_seed_for(root_seed, attempt)
    scene = sample_scene(task, ws, seed)
    anchors = anchors_for_scene(task, demo, scene)
    transforms = segment_transforms(demo, anchors)
    aug = augment_segmentwise(demo, anchors)
    provenance = {
        "attempt": attempt,
        "scene_seed": seed,
        "anchors": [{"r_s": a.r_s.tolist(), "r_g": a.r_g.tolist(),
                     "g_s": a.g_s.tolist(), "g_g": a.g_g.tolist()} for a in anchors],
        "transforms": [{"scale": t.scale, "rotation": t.rotation.tolist(),
                        "translation": t.translation.tolist(),
                        "vertical_fallback": t.vertical_fallback} for t in transforms],
    }
    return replay(aug, scene, cfg, grasp, spec, provenance=provenance)


def run_campaign(demo: DemoTrajectory, task, count: int,
                 ws: tasks.Workspace = tasks.Workspace(),
                 cfg: ControllerConfig = ControllerConfig(),
                 rng_seed: int = 0, *,
                 grasp: GraspModel | None = None,
                 spec: SuccessSpec = SuccessSpec(),
                 attempt_cap: int | None = None,
                 jobs: int = 1) -> Dataset:
    """Generate augmented demonstrations until ``count`` replays succeed.

    Scenes are sampled from per-attempt seeds derived from ``rng_seed``;
    failed replays are discarded.  Episodes are kept in attempt order, so
    the result is identical for any ``jobs`` value.  Raises
    AttemptCapExceeded (carrying the partial dataset) if the cap — default
    20x ``count`` — is reached first.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    task = as_task(task)
    cap = attempt_cap if attempt_cap is not None else 20 * count
    grasp = grasp or GraspModel()

    episodes: list[EpisodeRecord] = []
    attempts = 0

    def consume(results):
        nonlocal attempts
        for attempt_index, ep in results:
            if len(episodes) >= count:
                return True
            attempts = attempt_index + 1
            if ep.success:
                episodes.append(ep)
            if len(episodes) >= count:
                return True
        return False

    if jobs <= 1:
        for attempt in range(cap):
            ep = _attempt_episode(demo, task, ws, cfg, grasp, spec, rng_seed, attempt)
            if consume([(attempt, ep)]):
                break
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for wave_start in range(0, cap, jobs):
                wave = range(wave_start, min(wave_start + jobs, cap))
                eps = pool.map(lambda a: _attempt_episode(demo, task, ws, cfg, grasp,
                                                          spec, rng_seed, a), wave)
                if consume(list(zip(wave, eps))):
                    break

    if len(episodes) < count:
        partial = Dataset(task=task, episodes=tuple(episodes), attempts=attempts,
                          root_seed=rng_seed, complete=False)
        raise AttemptCapExceeded(
            f"{len(episodes)}/{count} successes after {attempts} attempts "
            f"(cap {cap}); discard rate {partial.discard_rate:.2f}", partial)
    return Dataset(task=task, episodes=tuple(episodes), attempts=attempts,
                   root_seed=rng_seed, complete=True)
