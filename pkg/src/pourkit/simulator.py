"""Synthetic pouring plant: a tilting source cup, falling liquid, a target
container, and a detector emulated by flipping expected pixel labels."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AngleOutOfRange, ConfigError, InputError, NonPositiveDt, VolumeOutOfRange
from .geometry import TriMesh, volume_below_plane
from .observation import ML, ConfusionTable, PixelLabelMap, Scene

RIM_TOL = 1e-9


def tilt_rotation(angle: float) -> np.ndarray:
    """Rotation about +x that lowers the cup's +y side as ``angle`` grows."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


@dataclass(frozen=True, eq=False)
class SourceModel:
    mesh: TriMesh  # interior, upright, opening at max z
    pivot: tuple = (0.0, 0.0, 0.0)  # wrist axis passes through here, along +x
    flow_coefficient: float = 4.0  # 1/s
    transport_delay: float = 0.3  # s
    spill_fraction: float = 0.0
    capacity_samples: int = 3601
    _table: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if self.flow_coefficient <= 0:
            raise InputError("flow coefficient must be positive")
        if self.transport_delay < 0:
            raise InputError("transport delay must be non-negative")
        if not 0 <= self.spill_fraction <= 1:
            raise InputError("spill fraction must lie in [0, 1]")

    @property
    def rim(self) -> np.ndarray:
        z = self.mesh.vertices[:, 2]
        return z >= z.max() - RIM_TOL

    def capacity_ml(self, angle: float) -> float:
        """Retained capacity from a dense precomputed curve (linear interpolation)."""
        if not self._table:
            grid = np.linspace(0.0, math.pi, self.capacity_samples)
            caps = np.array([retained_capacity(self, a) for a in grid])
            # clipping noise can break monotonicity by an ulp
            self._table.extend([grid, np.minimum.accumulate(caps)])
        grid, caps = self._table
        return float(np.interp(angle, grid, caps))


def retained_capacity(source: SourceModel, wrist_angle: float) -> float:
    """Most liquid (ml) the tilted cup holds without spilling over its rim."""
    if not 0.0 <= wrist_angle <= math.pi:
        raise AngleOutOfRange(f"wrist angle {wrist_angle} outside [0, pi]")
    pivot = np.asarray(source.pivot, dtype=np.float64)
    rot = tilt_rotation(wrist_angle)
    tilted = source.mesh.transformed(rot, pivot - rot @ pivot)
    lowest_rim = tilted.vertices[source.rim, 2].min()
    return volume_below_plane(tilted, lowest_rim) / ML


@dataclass(frozen=True)
class PourSimState:
    source_ml: float
    target_ml: float = 0.0
    in_flight: tuple = ()  # ((ml, arrival_time_s), ...) in arrival order
    spilled_ml: float = 0.0
    wrist_angle: float = 0.0
    time: float = 0.0
    tick: int = 0
    seed: int = 0
    stream: int = 0  # per-pour RNG stream index
    initial_ml: float | None = None

    def __post_init__(self):
        if self.initial_ml is None:
            object.__setattr__(self, "initial_ml", self.source_ml + self.flight_ml + self.target_ml + self.spilled_ml)
        if min(self.source_ml, self.target_ml, self.spilled_ml) < 0:
            raise InputError("volumes must be non-negative")

    @property
    def flight_ml(self) -> float:
        return math.fsum(v for v, _ in self.in_flight)

    @property
    def settled_target_ml(self) -> float:
        """Target volume once everything in the air has landed."""
        return self.target_ml + self.flight_ml


def sim_step(state: PourSimState, source: SourceModel, wrist_rate: float, dt: float) -> PourSimState:
    if not dt > 0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    angle = min(math.pi, max(0.0, state.wrist_angle + wrist_rate * dt))
    now = state.time + dt
    excess = max(0.0, state.source_ml - source.capacity_ml(angle))
    out = min(excess, source.flow_coefficient * excess * dt)
    flight = state.in_flight + ((out, now + source.transport_delay),) if out > 0 else state.in_flight
    landed = 0.0
    keep = []
    for vol, arrival in flight:
        if arrival <= now + 1e-12:
            landed += vol
        else:
            keep.append((vol, arrival))
    spill = landed * source.spill_fraction
    return replace(
        state,
        source_ml=state.source_ml - out,
        target_ml=state.target_ml + (landed - spill),
        spilled_ml=state.spilled_ml + spill,
        in_flight=tuple(keep),
        wrist_angle=angle,
        time=now,
        tick=state.tick + 1,
    )


@dataclass(frozen=True)
class NoiseSpec:
    table: ConfusionTable = ConfusionTable()
    seed: int = 0


def tick_rng(seed: int, stream: int, tick: int) -> np.random.Generator:
    """Independent generator per (seed, pour stream, tick); batch order never
    changes what a pour sees."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, tick])))


def render_observation(state: PourSimState, scene: Scene, noise: NoiseSpec) -> PixelLabelMap:
    """Expected labels at the true target volume with detector-style flips."""
    if state.target_ml > scene.capacity_ml + 1e-6:
        raise VolumeOutOfRange(f"{state.target_ml:.2f} ml exceeds {scene.mesh.name} capacity")
    exp = scene.inner_expected(min(state.target_ml * ML, scene.heights.capacity))
    rng = tick_rng(noise.seed, state.stream, state.tick)
    u = rng.random(len(exp))
    p_liquid = np.where(exp, noise.table.liquid_given_liquid, noise.table.liquid_given_not_liquid)
    return scene.to_map(u < p_liquid)


# protocol generation ------------------------------------------------------


@dataclass(frozen=True)
class PourSpec:
    container: str
    source_ml: float
    target_ml: float
    stream: int


def collection_protocol(count, containers, source_choices=(300, 350, 400), target_ml=250.0, seed=0):
    """Scripted data-collection runs: containers used in turn, sources drawn
    at random, one fixed target."""
    if count < 1:
        raise ConfigError("need at least one sequence")
    rng = np.random.default_rng([seed, 1])
    sources = rng.choice(np.asarray(source_choices, dtype=float), size=count)
    return [PourSpec(containers[i % len(containers)], float(sources[i]), float(target_ml), i) for i in range(count)]


def evaluation_protocol(
    per_container,
    containers,
    targets=(100, 150, 200, 250, 300),
    sources=(300, 350, 400),
    min_headroom_ml=100.0,
    seed=0,
):
    """Controller test pours: a random target, then a random source among
    those leaving at least ``min_headroom_ml`` above the target."""
    rng = np.random.default_rng([seed, 2])
    feasible = {float(t): [float(s) for s in sources if s - t >= min_headroom_ml] for t in targets}
    stranded = [t for t, s in feasible.items() if not s]
    if stranded:
        raise ConfigError(f"no source leaves {min_headroom_ml:g} ml headroom for targets {stranded}")
    tlist = sorted(feasible)
    specs = []
    for c_idx, name in enumerate(containers):
        for k in range(per_container):
            t = tlist[int(rng.integers(len(tlist)))]
            s = feasible[t][int(rng.integers(len(feasible[t])))]
            specs.append(PourSpec(name, s, t, c_idx * per_container + k))
    return specs
