"""Impulse-response banks: trajectories of measured (or synthesized) spatial
IRs per room, plus a statistical reverberator for desk-scale banks.

A bank holds, for one room and one output format, a set of trajectories
whose nodes are spaced roughly one degree apart. Circular trajectories are
closed loops (traversal may wrap); linear ones are open arcs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .arrays import (SAMPLE_RATE, ArrayModel, anechoic_ir,
                     default_tetrahedral_array, foa_ideal_array)
from .geometry import (Doa, angular_distance, doa_to_unit_vector,
                       doas_to_unit_vectors, unit_vector_to_doa)

FORMATS = ("foa", "mic")
MAX_NODE_SPACING_DEG = 2.0
# Quiet gap between the direct-path arrival and the start of the diffuse tail.
TAIL_ONSET_GAP_S = 0.0025


@dataclass(frozen=True)
class TrajectoryNode:
    doa: Doa
    distance_m: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    trajectory_id: str
    room_id: str
    shape: str  # 'circular' | 'linear'
    nodes: tuple[TrajectoryNode, ...]

    def __post_init__(self):
        if self.shape not in ("circular", "linear"):
            raise ValueError(f"unknown trajectory shape {self.shape!r}")
        if any(n.distance_m <= 0 for n in self.nodes):
            raise ValueError("node distances must be positive")
        for a, b in zip(self.nodes, self.nodes[1:]):
            if angular_distance(a.doa, b.doa) > MAX_NODE_SPACING_DEG + 1e-6:
                raise ValueError(
                    f"trajectory {self.trajectory_id}: consecutive nodes more "
                    f"than {MAX_NODE_SPACING_DEG} deg apart")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def closed(self) -> bool:
        return self.shape == "circular"

    @cached_property
    def _arc_lengths(self) -> np.ndarray:
        xyz = doas_to_unit_vectors([n.doa for n in self.nodes])
        if self.closed:
            xyz = np.vstack([xyz, xyz[:1]])
        dots = np.clip(np.sum(xyz[:-1] * xyz[1:], axis=1), -1.0, 1.0)
        steps = np.maximum(np.degrees(np.arccos(dots)), 1e-9)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def arc_lengths(self) -> np.ndarray:
        """Cumulative arc position of each node; index n_nodes is the wrap
        arc back to node 0 for closed trajectories."""
        return self._arc_lengths

    @property
    def total_arc_deg(self) -> float:
        return float(self.arc_lengths()[-1])

    def traversal(self, start_index: int, direction: int,
                  arc_deg: float) -> tuple[np.ndarray, np.ndarray]:
        """Node indices visited when moving `arc_deg` degrees from
        `start_index` in `direction`, with their cumulative arc positions."""
        arcs = self.arc_lengths()
        edges = np.diff(arcs)  # edge k joins node k and its successor
        n = self.n_nodes
        if self.closed:
            laps = max(1, math.ceil(arc_deg / arcs[-1]) + 1)
            if direction > 0:
                order = (start_index + np.arange(laps * n)) % n
            else:
                order = (start_index - 1 - np.arange(laps * n)) % n
            steps = edges[order]
        elif direction > 0:
            steps = edges[start_index:]
        else:
            steps = edges[:start_index][::-1]
        positions = np.concatenate([[0.0], np.cumsum(steps)])
        # Keep one node past the requested arc when available.
        stop = int(np.searchsorted(positions, arc_deg, side="left"))
        stop = min(stop + 1, positions.size - 1)
        positions = positions[: stop + 1]
        indices = (start_index +
                   direction * np.arange(positions.size)) % n \
            if self.closed else \
            start_index + direction * np.arange(positions.size)
        return indices, positions

    def node_index_at(self, start_index: int, direction: int,
                      arc_deg: float) -> int:
        """Nearest node after traversing `arc_deg` from the start node."""
        return int(self.node_indices_at(start_index, direction,
                                        np.asarray([arc_deg]))[0])

    def node_indices_at(self, start_index: int, direction: int,
                        arcs_deg: np.ndarray) -> np.ndarray:
        """Vectorized nearest-node lookup for many traversed arcs."""
        arcs_deg = np.asarray(arcs_deg, dtype=float)
        top = float(arcs_deg.max(initial=0.0))
        indices, positions = self.traversal(start_index, direction, top)
        j = np.searchsorted(positions, arcs_deg)
        j = np.clip(j, 1, positions.size - 1)
        use_prev = (arcs_deg - positions[j - 1]) <= (positions[j] - arcs_deg)
        nearest = np.where(use_prev, j - 1, j)
        return indices[nearest]

    def fits(self, start_index: int, direction: int, arc_deg: float) -> bool:
        if self.closed:
            return True
        _, positions = self.traversal(start_index, direction, arc_deg)
        return positions[-1] >= arc_deg - 1e-9


@dataclass(eq=False)
class IrBank:
    """All IRs of one room in one format, indexed by trajectory and node."""

    room_id: str
    format: str  # 'foa' | 'mic'
    trajectories: tuple[Trajectory, ...]
    irs: dict[str, np.ndarray] = field(default_factory=dict)  # id -> (n, taps, 4)
    sample_rate: int = SAMPLE_RATE
    rt60_s: float | None = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}")
        for traj in self.trajectories:
            stack = self.irs.get(traj.trajectory_id)
            if stack is None:
                raise ValueError(f"missing IRs for trajectory "
                                 f"{traj.trajectory_id}")
            if stack.shape[0] != traj.n_nodes or stack.shape[2] != 4:
                raise ValueError(
                    f"trajectory {traj.trajectory_id}: {traj.n_nodes} nodes "
                    f"but IR stack shape {stack.shape}")

    def trajectory(self, trajectory_id: str) -> Trajectory:
        for traj in self.trajectories:
            if traj.trajectory_id == trajectory_id:
                return traj
        raise KeyError(f"no trajectory {trajectory_id!r} in room {self.room_id}")

    def node_ir(self, trajectory_id: str, node_index: int) -> np.ndarray:
        return self.irs[trajectory_id][node_index]

    def all_nodes(self) -> list[tuple[str, int]]:
        return [(t.trajectory_id, i)
                for t in self.trajectories for i in range(t.n_nodes)]


def synth_reverb_ir(rt60_s: float, drr_db: float | None, direct_doa: Doa,
                    distance_m: float, array: ArrayModel,
                    rng: np.random.Generator) -> np.ndarray:
    """Statistical room IR: exact anechoic direct path plus an exponentially
    decaying spatially-diffuse tail.

    The tail envelope reaches -60 dB at `rt60_s` and its energy is scaled so
    the direct-to-tail ratio equals `drr_db` exactly. `drr_db=None` disables
    the tail (the result equals the anechoic IR).
    """
    if rt60_s <= 0:
        raise ValueError("rt60 must be positive")
    direct = anechoic_ir(direct_doa, distance_m, array)
    if drr_db is None:
        return direct

    direct_peak = int(np.argmax(np.max(np.abs(direct), axis=1)))
    tail_start = direct_peak + int(round(TAIL_ONSET_GAP_S * SAMPLE_RATE))
    tail_len = int(round(1.2 * rt60_s * SAMPLE_RATE))
    t = np.arange(tail_len) / SAMPLE_RATE
    envelope = 10.0 ** (-3.0 * t / rt60_s)  # amplitude: -60 dB at rt60

    noise = rng.standard_normal((tail_len, 4))
    if array.kind == "foa_ideal":
        # Ideal diffuse field in SN3D: first-order channels carry one third
        # of the omni energy each.
        noise[:, 1:] /= math.sqrt(3.0)
    tail = noise * envelope[:, None]

    e_direct = float(np.sum(direct ** 2))
    e_tail = float(np.sum(tail ** 2))
    tail *= math.sqrt(e_direct / (e_tail * 10.0 ** (drr_db / 10.0)))

    out = np.zeros((max(direct.shape[0], tail_start + tail_len), 4))
    out[: direct.shape[0]] = direct
    out[tail_start: tail_start + tail_len] += tail
    return out


def _great_circle_nodes(axis: np.ndarray, phase_deg: float, n_nodes: int,
                        step_deg: float) -> list[Doa]:
    """Nodes spaced `step_deg` apart along the great circle normal to `axis`."""
    axis = axis / np.linalg.norm(axis)
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    doas = []
    for k in range(n_nodes):
        ang = math.radians(phase_deg + k * step_deg)
        doas.append(unit_vector_to_doa(math.cos(ang) * e1 + math.sin(ang) * e2))
    return doas


def make_circular_trajectory(trajectory_id: str, room_id: str,
                             rng: np.random.Generator,
                             n_nodes: int = 360,
                             distance_m: float | None = None) -> Trajectory:
    """Closed great-circle trajectory with 1-degree node spacing."""
    axis = rng.standard_normal(3)
    phase = rng.uniform(0.0, 360.0)
    dist = distance_m if distance_m is not None else rng.uniform(1.5, 2.5)
    step = 360.0 / n_nodes
    nodes = tuple(TrajectoryNode(d, dist)
                  for d in _great_circle_nodes(axis, phase, n_nodes, step))
    return Trajectory(trajectory_id, room_id, "circular", nodes)


def make_linear_trajectory(trajectory_id: str, room_id: str,
                           rng: np.random.Generator,
                           arc_deg: float = 90.0,
                           distance_range_m: tuple[float, float] = (1.0, 3.0)
                           ) -> Trajectory:
    """Open geodesic arc with 1-degree spacing and linearly varying distance."""
    axis = rng.standard_normal(3)
    phase = rng.uniform(0.0, 360.0)
    n_nodes = int(round(arc_deg)) + 1
    doas = _great_circle_nodes(axis, phase, n_nodes, 1.0)
    d0 = rng.uniform(*distance_range_m)
    d1 = rng.uniform(*distance_range_m)
    dists = np.linspace(d0, d1, n_nodes)
    nodes = tuple(TrajectoryNode(d, float(r)) for d, r in zip(doas, dists))
    return Trajectory(trajectory_id, room_id, "linear", nodes)


def array_for_format(fmt: str) -> ArrayModel:
    if fmt == "foa":
        return foa_ideal_array()
    if fmt == "mic":
        return default_tetrahedral_array()
    raise ValueError(f"unknown format {fmt!r}")


def build_room_banks(room_id: str, seed: int, rt60_s: float,
                     drr_at_1m_db: float = 10.0,
                     n_circular_nodes: int = 360,
                     linear_arc_deg: float = 60.0,
                     formats=FORMATS) -> dict[str, IrBank]:
    """Synthesize one room's banks (shared trajectory geometry, one IR set
    per format). DRR falls off with node distance, floored at 0 dB."""
    geo_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x6E0)))
    trajs = (
        make_circular_trajectory(f"{room_id}_t0", room_id, geo_rng,
                                 n_nodes=n_circular_nodes),
        make_linear_trajectory(f"{room_id}_t1", room_id, geo_rng,
                               arc_deg=linear_arc_deg),
    )
    banks = {}
    for f_idx, fmt in enumerate(formats):
        array = array_for_format(fmt)
        irs = {}
        for t_idx, traj in enumerate(trajs):
            rng = np.random.default_rng(
                np.random.SeedSequence((seed, f_idx, t_idx)))
            stacks = []
            for node in traj.nodes:
                drr = max(0.0, drr_at_1m_db - 20.0 * math.log10(node.distance_m))
                stacks.append(synth_reverb_ir(rt60_s, drr, node.doa,
                                              node.distance_m, array, rng))
            taps = max(s.shape[0] for s in stacks)
            stack = np.zeros((len(stacks), taps, 4))
            for i, s in enumerate(stacks):
                stack[i, : s.shape[0]] = s
            irs[traj.trajectory_id] = stack
        banks[fmt] = IrBank(room_id=room_id, format=fmt, trajectories=trajs,
                            irs=irs, rt60_s=rt60_s)
    return banks


def anechoic_twin(bank: IrBank) -> IrBank:
    """Bank with the same trajectories whose IRs are free-field array
    responses, delayed and scaled per the node distances."""
    array = array_for_format(bank.format)
    irs = {}
    for traj in bank.trajectories:
        stacks = [anechoic_ir(n.doa, n.distance_m, array) for n in traj.nodes]
        taps = max(s.shape[0] for s in stacks)
        stack = np.zeros((len(stacks), taps, 4))
        for i, s in enumerate(stacks):
            stack[i, : s.shape[0]] = s
        irs[traj.trajectory_id] = stack
    return IrBank(room_id=bank.room_id, format=bank.format,
                  trajectories=bank.trajectories, irs=irs, rt60_s=None)
