"""World synthesis: anchors, obstacle boxes, trajectories, visibility, noise.

A Scenario bundles everything fixed about a simulated site: surveyed anchor
positions, antenna lever arms, noise levels, a ground-truth trajectory, and
the obstacle geometry that decides which anchors are in view.  Visibility is
either computed geometrically (segment versus boxes, including a cargo box
riding on the vehicle) or taken from explicit per-epoch override sets when a
scene specifies them directly.

All randomness flows through per-(seed, trial, epoch) substreams so Monte
Carlo trials are reproducible and order-independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .frames import Attitude, Pose, antenna_position, rotation_matrix
from .measurement import EpochMeasurements, predict_inter_epoch

__all__ = [
    "Box",
    "Scenario",
    "VisibilityMap",
    "los_visible",
    "compute_visibility",
    "epoch_rng",
    "synthesize_epoch",
    "synthesize_trial",
    "build_four_anchor_scene",
    "build_port_scene",
    "scenario_to_dict",
    "scenario_from_dict",
    "load_scenario",
    "save_scenario",
    "load_bundled",
]

_SEGMENT_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box given by its min and max corners."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if np.any(hi < lo):
            raise ValueError("box must satisfy lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def intersects_segment(self, p0: np.ndarray, p1: np.ndarray) -> bool:
        """True if the open segment p0 -> p1 passes through the box.

        Slab method: clip the segment parameter interval against each axis
        slab; endpoint grazes do not count as blockage.
        """
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        d = p1 - p0
        t0, t1 = 0.0, 1.0
        for axis in range(3):
            if d[axis] == 0.0:
                if p0[axis] < self.lo[axis] or p0[axis] > self.hi[axis]:
                    return False
                continue
            ta = (self.lo[axis] - p0[axis]) / d[axis]
            tb = (self.hi[axis] - p0[axis]) / d[axis]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 > t1:
                return False
        return t1 > _SEGMENT_EPS and t0 < 1.0 - _SEGMENT_EPS


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable description of one simulated site and trajectory."""

    name: str
    anchors: np.ndarray
    levers: np.ndarray
    trajectory: tuple[Pose, ...]
    h: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    clock_bias: float = 0.0
    sigma: float = 0.1
    sigma_p: float = 0.1
    sigma_psi: float = 0.1
    obstacles: tuple[Box, ...] = ()
    goods: Box | None = None
    visibility_override: tuple[tuple[tuple[int, ...], ...], ...] | None = None

    def __post_init__(self) -> None:
        anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        levers = np.atleast_2d(np.asarray(self.levers, dtype=float))
        if anchors.shape[0] < 1 or anchors.shape[1] != 3:
            raise ValueError("need at least one anchor, each a 3-vector")
        if levers.shape[0] < 1 or levers.shape[1] != 3:
            raise ValueError("need at least one antenna lever, each a 3-vector")
        if len(self.trajectory) == 0:
            raise ValueError("trajectory must contain at least one pose")
        if self.sigma < 0 or self.sigma_p < 0 or self.sigma_psi < 0:
            raise ValueError("noise levels sigma, sigma_p, sigma_psi cannot be negative")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "levers", levers)
        # Canonicalize the trajectory: entries may be Pose objects or raw
        # (x, y, yaw) rows, and either way the stored poses carry this
        # scenario's height, roll, and pitch.
        poses = []
        for entry in self.trajectory:
            if isinstance(entry, Pose):
                x, y, yaw = entry.x, entry.y, entry.yaw
            else:
                x, y, yaw = (float(v) for v in entry)
            poses.append(Pose(x, y, Attitude(yaw, self.roll, self.pitch), h=self.h))
        object.__setattr__(self, "trajectory", tuple(poses))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.visibility_override is not None:
            ov = tuple(tuple(tuple(int(j) for j in ant) for ant in ep) for ep in self.visibility_override)
            if len(ov) != len(self.trajectory):
                raise ValueError("visibility override must cover every epoch")
            for ep in ov:
                if len(ep) != levers.shape[0]:
                    raise ValueError("visibility override must cover every antenna")
                for ant in ep:
                    if any(j < 0 or j >= anchors.shape[0] for j in ant):
                        raise ValueError("visibility override references an unknown anchor")
            object.__setattr__(self, "visibility_override", ov)

    @property
    def num_anchors(self) -> int:
        return self.anchors.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.levers.shape[0]

    @property
    def num_epochs(self) -> int:
        return len(self.trajectory)

    def antenna_positions(self, pose: Pose) -> np.ndarray:
        """All antenna positions in frame n for the given pose, N x 3."""
        return np.stack([antenna_position(pose, lever) for lever in self.levers])

    def attitude(self, yaw: float) -> Attitude:
        """Attitude with this scenario's fixed roll and pitch."""
        return Attitude(yaw, self.roll, self.pitch)


@dataclass(frozen=True)
class VisibilityMap:
    """Per-epoch, per-antenna ordered sets of visible anchor indices."""

    sets: tuple[tuple[tuple[int, ...], ...], ...]

    def visible(self, epoch: int, antenna: int) -> tuple[int, ...]:
        return self.sets[epoch][antenna]

    def counts(self, epoch: int) -> list[int]:
        return [len(s) for s in self.sets[epoch]]

    def union(self, epoch: int) -> set[int]:
        out: set[int] = set()
        for s in self.sets[epoch]:
            out.update(s)
        return out


def los_visible(
    antenna_pos: np.ndarray,
    anchor_pos: np.ndarray,
    scenario: Scenario,
    pose: Pose | None = None,
) -> bool:
    """True if no obstacle blocks the straight path antenna -> anchor.

    The vehicle-mounted cargo box is tested in the body frame of ``pose``
    when given; fixed obstacles are tested in frame n directly.
    """
    antenna_pos = np.asarray(antenna_pos, dtype=float)
    anchor_pos = np.asarray(anchor_pos, dtype=float)
    for box in scenario.obstacles:
        if box.intersects_segment(antenna_pos, anchor_pos):
            return False
    if scenario.goods is not None and pose is not None:
        Rt = rotation_matrix(pose.attitude).T
        center = pose.center
        body_a = Rt @ (antenna_pos - center)
        body_b = Rt @ (anchor_pos - center)
        if scenario.goods.intersects_segment(body_a, body_b):
            return False
    return True


def _epoch_visibility(scenario: Scenario, k: int) -> tuple[tuple[int, ...], ...]:
    if scenario.visibility_override is not None:
        return scenario.visibility_override[k]
    pose = scenario.trajectory[k]
    sets = []
    for lever in scenario.levers:
        pos = antenna_position(pose, lever)
        sets.append(
            tuple(
                j
                for j in range(scenario.num_anchors)
                if los_visible(pos, scenario.anchors[j], scenario, pose)
            )
        )
    return tuple(sets)


def compute_visibility(scenario: Scenario) -> VisibilityMap:
    """Visibility sets for every epoch of the scenario's true trajectory."""
    return VisibilityMap(tuple(_epoch_visibility(scenario, k) for k in range(scenario.num_epochs)))


def epoch_rng(seed: int, trial: int, epoch: int) -> np.random.Generator:
    """Independent substream for one (trial, epoch) under a master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), int(epoch)]))


def synthesize_epoch(
    scenario: Scenario, k: int, rng: np.random.Generator
) -> tuple[EpochMeasurements, Pose]:
    """Generate one epoch of noisy measurements plus its true pose.

    TOAs follow range + clock bias + N(0, sigma^2); the inter-epoch channel
    (absent at the first epoch) measures body-frame position change and yaw
    change with independent N(0, sigma_p^2), N(0, sigma_p^2), N(0, sigma_psi^2)
    noise.  Visibility comes from the override table when present, otherwise
    from segment-versus-box geometry at the true pose.
    """
    if not 0 <= k < scenario.num_epochs:
        raise IndexError(f"epoch {k} outside trajectory of length {scenario.num_epochs}")
    pose = scenario.trajectory[k]
    visibility = _epoch_visibility(scenario, k)
    toas: dict[tuple[int, int], float] = {}
    for i, anchors in enumerate(visibility):
        antenna = antenna_position(pose, scenario.levers[i])
        for j in anchors:
            rng_noise = rng.normal(0.0, scenario.sigma)
            toas[(i, j)] = float(
                np.linalg.norm(scenario.anchors[j] - antenna) + scenario.clock_bias + rng_noise
            )
    inter = None
    if k > 0:
        truth = predict_inter_epoch(pose, scenario.trajectory[k - 1])
        noise = rng.normal(0.0, [scenario.sigma_p, scenario.sigma_p, scenario.sigma_psi])
        inter = truth + noise
    return EpochMeasurements(epoch=k, toas=toas, visibility=visibility, inter_epoch=inter), pose


def synthesize_trial(
    scenario: Scenario,
    seed: int,
    trial: int,
    epochs: range | list[int] | None = None,
) -> tuple[list[EpochMeasurements], list[Pose]]:
    """Synthesize a run of epochs with per-epoch substreams."""
    if epochs is None:
        epochs = range(scenario.num_epochs)
    measurements, poses = [], []
    for k in epochs:
        m, p = synthesize_epoch(scenario, k, epoch_rng(seed, trial, k))
        measurements.append(m)
        poses.append(p)
    return measurements, poses


# ---------------------------------------------------------------------------
# Scene builders


def build_four_anchor_scene() -> Scenario:
    """Small square scene: four corner anchors, four epochs, fixed visibility.

    Anchor and pose coordinates are 2D with all heights zero; the visibility
    table is explicit per epoch and antenna rather than geometric.
    """
    anchors = np.array(
        [
            [40.0, -40.0, 0.0],
            [40.0, 40.0, 0.0],
            [-40.0, 40.0, 0.0],
            [-40.0, -40.0, 0.0],
        ]
    )
    levers = np.array(
        [
            [4.0, -2.0, 0.0],
            [4.0, 2.0, 0.0],
            [-4.0, 0.0, 0.0],
        ]
    )
    states = [
        (11.24, -9.29, 0.74),
        (12.46, -9.05, 0.65),
        (13.78, -9.07, 0.54),
        (15.12, -9.26, 0.41),
    ]
    trajectory = tuple(Pose(x, y, Attitude(yaw), h=0.0) for x, y, yaw in states)
    override = (
        ((1, 3), (0, 2, 3), (0,)),
        ((1, 3), (2,), (0, 1, 2, 3)),
        ((0, 1, 2, 3), (0, 1, 2), (1, 2, 3)),
        ((0, 3), (2,), (1, 2, 3)),
    )
    return Scenario(
        name="four_anchor",
        anchors=anchors,
        levers=levers,
        trajectory=trajectory,
        h=0.0,
        clock_bias=149.90,
        sigma=0.1,
        sigma_p=0.1,
        sigma_psi=0.1,
        visibility_override=override,
    )


def _fillet_route(waypoints: list[tuple[float, float]], radius: float) -> list[tuple]:
    """Polyline with circular fillets at interior corners.

    Returns path pieces ('line', p0, p1) and ('arc', center, radius, a0,
    sweep) in travel order.
    """
    pts = [np.array(w, dtype=float) for w in waypoints]
    dirs = []
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        dirs.append(d / np.linalg.norm(d))
    pieces: list[tuple] = []
    cursor = pts[0]
    for v in range(1, len(pts) - 1):
        u_in, u_out = dirs[v - 1], dirs[v]
        cross = u_in[0] * u_out[1] - u_in[1] * u_out[0]
        dot = float(np.clip(u_in @ u_out, -1.0, 1.0))
        turn = math.atan2(cross, dot)
        if abs(turn) < 1e-12:
            continue
        trim = radius * math.tan(abs(turn) / 2.0)
        entry = pts[v] - trim * u_in
        exit_ = pts[v] + trim * u_out
        normal = np.array([-u_in[1], u_in[0]]) * math.copysign(1.0, turn)
        center = entry + radius * normal
        a0 = math.atan2(entry[1] - center[1], entry[0] - center[0])
        pieces.append(("line", cursor, entry))
        pieces.append(("arc", center, radius, a0, turn))
        cursor = exit_
    pieces.append(("line", cursor, pts[-1]))
    return pieces


def _piece_length(piece: tuple) -> float:
    if piece[0] == "line":
        return float(np.linalg.norm(piece[2] - piece[1]))
    return piece[2] * abs(piece[4])


def _point_on_piece(piece: tuple, s: float) -> tuple[np.ndarray, float]:
    """Position and heading at arc length s along one piece."""
    if piece[0] == "line":
        _, p0, p1 = piece
        d = p1 - p0
        length = np.linalg.norm(d)
        t = d / length
        return p0 + s * t, math.atan2(t[1], t[0])
    _, center, radius, a0, sweep = piece
    ang = a0 + math.copysign(s / radius, sweep)
    pos = center + radius * np.array([math.cos(ang), math.sin(ang)])
    heading = ang + math.copysign(math.pi / 2.0, sweep)
    return pos, heading


def sample_route(
    waypoints: list[tuple[float, float]], radius: float, num_samples: int
) -> list[tuple[float, float, float]]:
    """Equally spaced (x, y, heading) samples along a fillet-rounded route."""
    pieces = _fillet_route(waypoints, radius)
    lengths = [_piece_length(p) for p in pieces]
    total = sum(lengths)
    step = total / num_samples
    samples = []
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    for n in range(num_samples):
        s = n * step
        idx = int(np.searchsorted(cum, s, side="right") - 1)
        idx = min(idx, len(pieces) - 1)
        pos, heading = _point_on_piece(pieces[idx], s - cum[idx])
        samples.append((float(pos[0]), float(pos[1]), heading))
    return samples


_PORT_ANCHORS_EN = [
    (150.0, 72.0),
    (-4.0, 26.0),
    (-19.5, -36.0),
    (60.0, 70.5),
    (154.5, 10.0),
    (137.5, 36.5),
    (138.0, -28.0),
    (100.0, -44.0),
    (84.0, 90.0),
    (100.0, 53.0),
    (84.0, 26.0),
    (84.0, -28.0),
    (100.0, 10.0),
    (20.0, 29.5),
    (-20.0, 53.0),
    (20.0, -24.5),
    (60.0, 6.5),
]

# Container stacks: footprint corners in frame n, stack heights in multiples
# of one 2.6 m container.  Rows are grouped by the roadway they border.
_PORT_STACKS = [
    # south of the east-west roadway at north -8
    ((2.0, -22.0), (50.0, -17.0), 5.2),
    ((56.0, -22.0), (108.0, -17.0), 7.8),
    # yard between the east-west roadways, split by an alley at east 52..66
    ((6.0, 2.0), (52.0, 7.0), 2.6),
    ((66.0, 2.0), (96.0, 7.0), 2.6),
    ((6.0, 12.0), (52.0, 17.0), 5.2),
    ((66.0, 12.0), (96.0, 17.0), 5.2),
    ((6.0, 20.0), (52.0, 25.0), 7.8),
    ((66.0, 20.0), (96.0, 25.0), 7.8),
    ((6.0, 28.0), (16.0, 33.0), 5.2),
    ((24.0, 28.0), (52.0, 33.0), 5.2),
    ((66.0, 28.0), (96.0, 33.0), 7.8),
    # north of the east-west roadway at north 48
    ((8.0, 60.0), (56.0, 65.0), 5.2),
    ((68.0, 60.0), (112.0, 65.0), 7.8),
    ((8.0, 70.0), (56.0, 75.0), 2.6),
    ((68.0, 70.0), (112.0, 75.0), 7.8),
    # east of the north-south roadway at east 120
    ((134.0, -4.0), (146.0, 28.0), 7.8),
    # west of the north-south roadway at east -10
    ((-30.0, -20.0), (-22.0, 40.0), 5.2),
]

_PORT_ROUTE = [(-10.0, -8.0), (120.0, -8.0), (120.0, 48.0), (-10.0, 48.0), (-10.0, -8.0)]


def build_port_scene() -> Scenario:
    """Container-port scene: 17 elevated anchors, obstacle stacks, 290 epochs.

    The vehicle loops the yard on 16 m roadways at roughly 1.3 m/s; antennas
    sit 0.15 m above the 2 m load plate and a 7 x 3 x 2.8 m cargo box rides
    on the plate, shadowing part of the sky from each antenna.  Container
    stack heights vary so the per-antenna anchor count keeps changing along
    the route.
    """
    anchors = np.array([[e, n, 8.0] for e, n in _PORT_ANCHORS_EN])
    levers = np.array(
        [
            [4.0, 2.0, -0.15],
            [4.0, -2.0, -0.15],
            [-4.0, 0.0, -0.15],
        ]
    )
    h = 2.0
    samples = sample_route(_PORT_ROUTE, radius=6.0, num_samples=290)
    trajectory = tuple(Pose(x, y, Attitude(yaw), h=h) for x, y, yaw in samples)
    obstacles = tuple(
        Box(lo=np.array([lo_en[0], lo_en[1], 0.0]), hi=np.array([hi_en[0], hi_en[1], height]))
        for lo_en, hi_en, height in _PORT_STACKS
    )
    goods = Box(lo=np.array([-3.5, -1.5, -2.8]), hi=np.array([3.5, 1.5, 0.0]))
    return Scenario(
        name="port",
        anchors=anchors,
        levers=levers,
        trajectory=trajectory,
        h=h,
        clock_bias=149.90,
        sigma=0.1,
        sigma_p=0.1,
        sigma_psi=0.1,
        obstacles=obstacles,
        goods=goods,
    )


# ---------------------------------------------------------------------------
# Serialization


def scenario_to_dict(scenario: Scenario) -> dict:
    """JSON-compatible dict mirroring the Scenario fields.

    Anchor indices in the visibility override are zero-based.
    """
    return {
        "name": scenario.name,
        "anchors": scenario.anchors.tolist(),
        "levers": scenario.levers.tolist(),
        "h": scenario.h,
        "roll": scenario.roll,
        "pitch": scenario.pitch,
        "clock_bias_m": scenario.clock_bias,
        "sigma_toa_m": scenario.sigma,
        "sigma_pos_m": scenario.sigma_p,
        "sigma_yaw_rad": scenario.sigma_psi,
        "trajectory": [[p.x, p.y, p.yaw] for p in scenario.trajectory],
        "obstacles": [{"lo": b.lo.tolist(), "hi": b.hi.tolist()} for b in scenario.obstacles],
        "goods_box": (
            None
            if scenario.goods is None
            else {"lo": scenario.goods.lo.tolist(), "hi": scenario.goods.hi.tolist()}
        ),
        "visibility_override": (
            None
            if scenario.visibility_override is None
            else [[list(ant) for ant in ep] for ep in scenario.visibility_override]
        ),
    }


_REQUIRED_KEYS = {
    "name",
    "anchors",
    "levers",
    "h",
    "clock_bias_m",
    "sigma_toa_m",
    "sigma_pos_m",
    "sigma_yaw_rad",
    "trajectory",
}
_OPTIONAL_KEYS = {"roll", "pitch", "obstacles", "goods_box", "visibility_override"}


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from the dict schema of ``scenario_to_dict``."""
    if not isinstance(data, dict):
        raise ValueError("scenario config must be a JSON object")
    missing = _REQUIRED_KEYS - set(data)
    if missing:
        raise ValueError(f"scenario config missing keys: {sorted(missing)}")
    unknown = set(data) - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ValueError(f"scenario config has unknown keys: {sorted(unknown)}")
    roll = float(data.get("roll", 0.0))
    pitch = float(data.get("pitch", 0.0))
    h = float(data["h"])
    trajectory = tuple(
        Pose(float(x), float(y), Attitude(float(yaw), roll, pitch), h=h)
        for x, y, yaw in data["trajectory"]
    )
    obstacles = tuple(
        Box(lo=np.array(b["lo"], dtype=float), hi=np.array(b["hi"], dtype=float))
        for b in data.get("obstacles", [])
    )
    goods_raw = data.get("goods_box")
    goods = (
        None
        if goods_raw is None
        else Box(lo=np.array(goods_raw["lo"], dtype=float), hi=np.array(goods_raw["hi"], dtype=float))
    )
    override_raw = data.get("visibility_override")
    override = (
        None
        if override_raw is None
        else tuple(tuple(tuple(int(j) for j in ant) for ant in ep) for ep in override_raw)
    )
    return Scenario(
        name=str(data["name"]),
        anchors=np.array(data["anchors"], dtype=float),
        levers=np.array(data["levers"], dtype=float),
        trajectory=trajectory,
        h=h,
        roll=roll,
        pitch=pitch,
        clock_bias=float(data["clock_bias_m"]),
        sigma=float(data["sigma_toa_m"]),
        sigma_p=float(data["sigma_pos_m"]),
        sigma_psi=float(data["sigma_yaw_rad"]),
        obstacles=obstacles,
        goods=goods,
        visibility_override=override,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario config file (JSON)."""
    with open(path, "r", encoding="utf-8") as f:
        return scenario_from_dict(json.load(f))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    """Write a scenario config file (JSON)."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(scenario), f, indent=1)
        f.write("\n")


def load_bundled(name: str) -> Scenario:
    """Load a scenario shipped with the package ('four_anchor' or 'port')."""
    ref = resources.files("toapose.data").joinpath(f"{name}.json")
    with ref.open("r", encoding="utf-8") as f:
        return scenario_from_dict(json.load(f))
