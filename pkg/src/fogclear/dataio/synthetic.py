"""Synthetic Terran (A) vs Protoss (B) replays.

Stand-in for a corpus of real replays. Each side has a hidden strength drawn
from ``units_per_side``; buildings follow a fixed build order, workers and
army grow with strength. Buildings and workers sit in fixed cells relative to
their base and armies spread over an area around a rally point, so hidden
enemy positions are predictable from game time.

Army dynamics are built around a Terran timing push: B fields an early army,
A's infantry alone is weak, and at ``upgrade_frame`` A's vehicle batch
arrives. From then on the combat-value ratio between the sides settles near
the ratio of their strengths, so the final winner is decided by strength.

A sometimes has a scouting SCV circling B's main base, which gives the
observer a partial view of the enemy. B sometimes has a probe near A's main.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..gamestate import CELL_PX, FRAME_PERIOD_S, GRID, Frame, UnitInstance, load_registry

NOMINAL_UNITS = 100.0

# (row, col) base centres; B's layout mirrors A's through the map centre
A_BASES = ((26, 5), (21, 9), (26, 15))

WORKER_PEAK = 24.0
B_ARMY_RATE = 1.2
B_HEAD_START = 8.0
A_INFANTRY_RATE = 1.2

A_INFANTRY = (("Marine", 0.7), ("Firebat", 0.15), ("Medic", 0.15))
A_VEHICLES = (("Vulture", 0.4), ("Siege Tank (Tank Mode)", 0.4), ("Goliath", 0.2))
B_ARMY = (("Zealot", 0.45), ("Dragoon", 0.45), ("Dark Templar", 0.1))

# name, progress fraction when first built, count increments per unit progress
A_BUILD = (
    ("Supply Depot", 0.05, 8.0), ("Barracks", 0.10, 3.0), ("Refinery", 0.15, 0.0),
    ("Academy", 0.25, 0.0), ("Factory", 0.28, 2.0), ("Armory", 0.30, 0.0),
    ("Machine Shop", 0.32, 0.0), ("Engineering Bay", 0.35, 0.0), ("Comsat Station", 0.40, 0.0),
    ("Starport", 0.60, 0.0), ("Control Tower", 0.65, 0.0), ("Science Facility", 0.75, 0.0),
)
B_BUILD = (
    ("Pylon", 0.05, 8.0), ("Gateway", 0.10, 4.0), ("Assimilator", 0.15, 0.0),
    ("Cybernetics Core", 0.20, 0.0), ("Forge", 0.35, 0.0), ("Citadel of Adun", 0.40, 0.0),
    ("Robotics Facility", 0.45, 0.0), ("Templar Archives", 0.55, 0.0), ("Observatory", 0.60, 0.0),
    ("Stargate", 0.70, 0.0), ("Fleet Beacon", 0.80, 0.0),
)
BUILDING_SLOTS = ((-2, -2), (-2, 0), (-2, 2), (0, 2), (2, 2), (0, -2), (-1, 1), (1, 1),
                  (-1, -1), (-2, 1), (1, 2), (-1, 2), (2, 1))
MINERAL_OFFSET = (2, -2)
RALLY_OFFSET = (-1, 1)
ARMY_SPREAD = 2  # army units occupy the (2*spread+1)^2 cells around the rally point
SCOUT_ORBIT = (1.5, 3.0)  # radius range of A's scout around B's main, in cells


@dataclass(frozen=True)
class SyntheticConfig:
    num_replays: int = 50
    frames_per_replay: int = 44
    units_per_side: tuple = (60, 140)
    bases_per_side: int = 2
    scout_probability: float = 0.9
    enemy_scout_probability: float = 0.3
    upgrade_frame: int = 14
    skip_first_frames: int = 2
    skip_last_frames: int = 2
    frame_stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_replays < 1 or self.frames_per_replay < 1:
            raise InvalidArgument("num_replays and frames_per_replay must be positive")
        lo, hi = self.units_per_side
        if not 0 < lo <= hi:
            raise InvalidArgument(f"units_per_side must satisfy 0 < lo <= hi, got {self.units_per_side}")
        if not 1 <= self.bases_per_side <= len(A_BASES):
            raise InvalidArgument(f"bases_per_side must be in 1..{len(A_BASES)}")
        for name in ("scout_probability", "enemy_scout_probability"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidArgument(f"{name} must be in [0, 1]")
        if self.skip_first_frames < 0 or self.skip_last_frames < 0:
            raise InvalidArgument("skip counts must be non-negative")
        if self.frame_stride < 1:
            raise InvalidArgument("frame_stride must be >= 1")


def replay_id(config, index):
    return f"s{config.seed}-r{index:05d}"


def army_rates(table):
    """Vehicle production rate and offset (in frames) for A's vehicles.

    After the upgrade A owns ``rate * (k + offset)`` vehicles at frame ``k``;
    the two values make A's combat value equal B's per unit strength from
    then on.
    """
    inf = sum(w * table.by_name(n).combat_value for n, w in A_INFANTRY)
    veh = sum(w * table.by_name(n).combat_value for n, w in A_VEHICLES)
    rate_b = B_ARMY_RATE * sum(w * table.by_name(n).combat_value for n, w in B_ARMY)
    veh_rate = (rate_b - A_INFANTRY_RATE * inf) / veh
    if veh_rate <= 0:
        raise InvalidArgument("registry combat values leave no room for A's vehicles")
    return veh_rate, rate_b * B_HEAD_START / (veh_rate * veh)


class _Layout:
    """Cells for every unit type of one side (B is A mirrored)."""

    def __init__(self, side, names_to_ids, bases):
        self.side = side
        self.ids = names_to_ids
        self.bases = [self.place(b) for b in bases]

    def place(self, cell):
        i, j = cell
        return (GRID - 1 - i, GRID - 1 - j) if self.side == "B" else (i, j)

    def offset(self, base, off):
        di, dj = off
        if self.side == "B":
            di, dj = -di, -dj
        i = min(max(base[0] + di, 0), GRID - 1)
        j = min(max(base[1] + dj, 0), GRID - 1)
        return i, j


def _scatter(rng, type_id, owner, cell, count, out):
    if count <= 0:
        return
    i, j = cell
    xs = j * CELL_PX + rng.integers(0, CELL_PX, count)
    ys = i * CELL_PX + rng.integers(0, CELL_PX, count)
    out.extend(UnitInstance(type_id, owner, int(x), int(y)) for x, y in zip(xs, ys))


def _scatter_area(rng, type_id, owner, centre, spread, count, out):
    """Uniform positions over the cells within ``spread`` of ``centre`` (clipped to the map)."""
    if count <= 0:
        return
    lo_i, hi_i = max(centre[0] - spread, 0), min(centre[0] + spread, GRID - 1)
    lo_j, hi_j = max(centre[1] - spread, 0), min(centre[1] + spread, GRID - 1)
    xs = rng.integers(lo_j * CELL_PX, (hi_j + 1) * CELL_PX, count)
    ys = rng.integers(lo_i * CELL_PX, (hi_i + 1) * CELL_PX, count)
    out.extend(UnitInstance(type_id, owner, int(x), int(y)) for x, y in zip(xs, ys))


def _point_unit(type_id, owner, px, py):
    x = int(min(max(px, 0), 4095))
    y = int(min(max(py, 0), 4095))
    return UnitInstance(type_id, owner, x, y)


def _building_count(progress, start, growth):
    if progress < start:
        return 0
    return 1 + int(math.floor((progress - start) * growth))


def generate_synthetic_replay(config, replay_index, table=None):
    """All frames of one replay, ``t = 0, 3, 6, ...``; no cleaning applied.

    Pure function of ``(config, replay_index)``.
    """
    table = table or load_registry()
    vehicle_rate, vehicle_offset = army_rates(table)
    ids = {t.name: t.type_id for t in table.types}
    rng = np.random.default_rng([config.seed, replay_index])
    n_frames = config.frames_per_replay
    lo, hi = config.units_per_side
    strength = {s: rng.uniform(lo, hi) / NOMINAL_UNITS for s in ("A", "B")}
    expansion = {s: int(rng.integers(int(0.3 * n_frames), int(0.5 * n_frames) + 1)) for s in ("A", "B")}
    layouts = {s: _Layout(s, ids, A_BASES[:config.bases_per_side]) for s in ("A", "B")}
    rid = replay_id(config, replay_index)

    def expected(side, k):
        """Cumulative expected production per unit strength, by type name."""
        progress = k / max(n_frames - 1, 1)
        worker = "SCV" if side == "A" else "Probe"
        out = {worker: WORKER_PEAK * (0.25 + 0.75 * progress)}
        if side == "A":
            groups = [(A_INFANTRY, A_INFANTRY_RATE * k)]
            vehicles = vehicle_rate * (k + vehicle_offset) if k >= config.upgrade_frame else 0.0
            groups.append((A_VEHICLES, vehicles))
        else:
            groups = [(B_ARMY, B_ARMY_RATE * (k + B_HEAD_START))]
        for mix, total in groups:
            for name, share in mix:
                out[name] = total * share
        return out

    # units persist: each frame adds Poisson-distributed new production
    produced = {side: dict.fromkeys(expected(side, 0), 0) for side in ("A", "B")}
    frames = []
    for k in range(n_frames):
        progress = k / max(n_frames - 1, 1)
        units = []
        for side in ("A", "B"):
            lay = layouts[side]
            s = strength[side]
            now = expected(side, k)
            before = expected(side, k - 1) if k else dict.fromkeys(now, 0.0)
            counts = produced[side]
            for name in now:
                counts[name] += int(rng.poisson(s * max(now[name] - before[name], 0.0)))

            main = lay.bases[0]
            expanded = len(lay.bases) > 1 and k >= expansion[side]
            hq = "Command Center" if side == "A" else "Nexus"
            worker = "SCV" if side == "A" else "Probe"
            build = A_BUILD if side == "A" else B_BUILD

            _scatter(rng, ids[hq], side, main, 1, units)
            if expanded:
                _scatter(rng, ids[hq], side, lay.bases[1], 1, units)
            for slot, (name, start, growth) in zip(BUILDING_SLOTS, build):
                _scatter(rng, ids[name], side, lay.offset(main, slot),
                         _building_count(progress, start, growth * s), units)

            workers = counts[worker]
            at_natural = int(round(0.4 * workers)) if expanded else 0
            _scatter(rng, ids[worker], side, lay.offset(main, MINERAL_OFFSET), workers - at_natural, units)
            if at_natural:
                _scatter(rng, ids[worker], side, lay.offset(lay.bases[1], MINERAL_OFFSET), at_natural, units)

            rally = lay.offset(main, RALLY_OFFSET)
            for name in now:
                if name != worker:
                    _scatter_area(rng, ids[name], side, rally, ARMY_SPREAD, counts[name], units)

        # A's scouting SCV circles B's main; B's probe wanders near A's main
        b_main = layouts["B"].bases[0]
        if k >= 3 and rng.random() < config.scout_probability:
            ang = rng.uniform(0, 2 * math.pi)
            rad = rng.uniform(*SCOUT_ORBIT) * CELL_PX
            cx, cy = (b_main[1] + 0.5) * CELL_PX, (b_main[0] + 0.5) * CELL_PX
            units.append(_point_unit(ids["SCV"], "A", cx + rad * math.cos(ang), cy + rad * math.sin(ang)))
        a_main = layouts["A"].bases[0]
        if k >= 3 and rng.random() < config.enemy_scout_probability:
            ang = rng.uniform(0, 2 * math.pi)
            rad = rng.uniform(1.0, 3.0) * CELL_PX
            cx, cy = (a_main[1] + 0.5) * CELL_PX, (a_main[0] + 0.5) * CELL_PX
            units.append(_point_unit(ids["Probe"], "B", cx + rad * math.cos(ang), cy + rad * math.sin(ang)))

        frames.append(Frame(rid, k * FRAME_PERIOD_S, tuple(units), ""))

    final = frames[-1].units
    value = {"A": 0.0, "B": 0.0}
    for u in final:
        value[u.owner] += table[u.type_id].combat_value
    winner = "A" if value["A"] >= value["B"] else "B"
    return [Frame(f.replay_id, f.t_seconds, f.units, winner) for f in frames]


def clean_replay(frames, config):
    """Drop the uninformative opening and closing frames, then keep every
    ``frame_stride``-th of the rest."""
    stop = len(frames) - config.skip_last_frames
    return frames[config.skip_first_frames:max(stop, config.skip_first_frames):config.frame_stride]


def generate_corpus(config, table=None):
    """Cleaned frames of replays ``0 .. num_replays-1`` in replay order."""
    frames = []
    for r in range(config.num_replays):
        frames.extend(clean_replay(generate_synthetic_replay(config, r, table), config))
    return frames


def upgrade_done(config, t_seconds):
    """Whether A's Vehicle Weapons upgrade has completed at time ``t_seconds``."""
    return t_seconds // FRAME_PERIOD_S >= config.upgrade_frame
