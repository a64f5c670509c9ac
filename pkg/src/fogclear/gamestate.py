"""Unit registry, frame encoding and fog-of-war masking.

Coordinates are pixels on a 4096x4096 map. A feature map is a float32 array
of shape ``(66, 32, 32)``: channel = unit type, cell ``(i, j)`` =
``(y // 128, x // 128)``, value = unit count. Channels 0-33 belong to the
observer (race A), 34-65 to the opponent (race B).
"""

import csv
import io
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from .errors import FrameError, InvalidArgument

MAP_PX = 4096
GRID = 32
CELL_PX = MAP_PX // GRID
N_A_TYPES = 34
N_B_TYPES = 32
N_CHANNELS = N_A_TYPES + N_B_TYPES
FRAME_PERIOD_S = 3
SIDES = ("A", "B")

REGISTRY_HEADER = ["type_id", "race", "name", "sight_range_px", "combat_value", "is_combat"]


@dataclass(frozen=True)
class UnitType:
    type_id: int
    race: str
    name: str
    sight_range_px: float
    combat_value: float
    is_combat: bool


class UnitTypeTable:
    """The 66-entry unit registry, indexable by type id."""

    def __init__(self, types):
        self.types = list(types)
        if len(self.types) != N_CHANNELS:
            raise InvalidArgument(f"registry must have {N_CHANNELS} rows, got {len(self.types)}")
        for expected, t in enumerate(self.types):
            if t.type_id != expected:
                raise InvalidArgument(f"type ids must be contiguous 0..65; row {expected} has id {t.type_id}")
            want = "A" if expected < N_A_TYPES else "B"
            if t.race != want:
                raise InvalidArgument(f"type {expected} ({t.name}) must be race {want}, got {t.race}")
            if t.combat_value < 0:
                raise InvalidArgument(f"type {expected} has negative combat value")
            # a unit's own cell centre can be up to 64*sqrt(2) px away
            if t.sight_range_px < CELL_PX / np.sqrt(2):
                raise InvalidArgument(f"type {expected} sight range {t.sight_range_px} is below one cell")
        self.sight = np.array([t.sight_range_px for t in self.types], dtype=np.float64)
        self.combat_value = np.array([t.combat_value for t in self.types], dtype=np.float64)
        self._by_name = {t.name: t for t in self.types}

    def __len__(self):
        return len(self.types)

    def __getitem__(self, type_id):
        return self.types[type_id]

    def by_name(self, name):
        return self._by_name[name]

    def race_of(self, type_id):
        return "A" if type_id < N_A_TYPES else "B"

    def scaled(self, factor):
        """Copy with every combat value multiplied by ``factor``."""
        return UnitTypeTable(
            UnitType(t.type_id, t.race, t.name, t.sight_range_px, t.combat_value * factor, t.is_combat)
            for t in self.types)


def parse_registry(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != REGISTRY_HEADER:
        raise InvalidArgument(f"registry header must be {','.join(REGISTRY_HEADER)}")
    types = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(REGISTRY_HEADER):
            raise InvalidArgument(f"registry line {lineno}: expected 6 fields, got {len(row)}")
        try:
            types.append(UnitType(int(row[0]), row[1], row[2], float(row[3]), float(row[4]),
                                  row[5].strip() in ("1", "true", "True")))
        except ValueError as exc:
            raise InvalidArgument(f"registry line {lineno}: {exc}") from None
    return UnitTypeTable(types)


def load_registry(path=None):
    """Load the registry CSV; defaults to the copy shipped with the package."""
    if path is None:
        text = resources.files("fogclear").joinpath("data/units.csv").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_registry(text)


class UnitInstance(NamedTuple):
    type_id: int
    owner: str
    x: int
    y: int


@dataclass(frozen=True)
class Frame:
    replay_id: str
    t_seconds: int
    units: tuple
    winner: str


def validate_frame(frame, table):
    """Raise :class:`FrameError` if any frame or unit invariant is violated."""
    if not isinstance(frame.t_seconds, int) or frame.t_seconds < 0:
        raise FrameError(f"t must be a non-negative integer, got {frame.t_seconds!r}", field="t")
    if frame.t_seconds % FRAME_PERIOD_S:
        raise FrameError(f"t must be a multiple of {FRAME_PERIOD_S}, got {frame.t_seconds}", field="t")
    if frame.winner not in SIDES:
        raise FrameError(f"winner must be 'A' or 'B', got {frame.winner!r}", field="winner")
    for idx, u in enumerate(frame.units):
        if not 0 <= u.type_id < N_CHANNELS:
            raise FrameError(f"unit {idx}: type {u.type_id} out of range 0..65", unit_index=idx, field="type")
        if u.owner not in SIDES:
            raise FrameError(f"unit {idx}: owner must be 'A' or 'B'", unit_index=idx, field="owner")
        if table.race_of(u.type_id) != u.owner:
            raise FrameError(f"unit {idx}: type {u.type_id} does not belong to owner {u.owner}",
                             unit_index=idx, field="owner")
        for name in ("x", "y"):
            v = getattr(u, name)
            if not 0 <= v < MAP_PX:
                raise FrameError(f"unit {idx}: {name}={v} outside [0, {MAP_PX})", unit_index=idx, field=name)


def _unit_arrays(units):
    if not units:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    arr = np.array([(u.type_id, u.x, u.y) for u in units], dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def encode_frame(frame, table):
    """Clean ``(66, 32, 32)`` count map of every unit in the frame."""
    for idx, u in enumerate(frame.units):
        if not (0 <= u.x < MAP_PX and 0 <= u.y < MAP_PX):
            raise FrameError(f"unit {idx}: position ({u.x}, {u.y}) outside the map",
                             unit_index=idx, field="x" if not 0 <= u.x < MAP_PX else "y")
        if not 0 <= u.type_id < N_CHANNELS:
            raise FrameError(f"unit {idx}: type {u.type_id} out of range", unit_index=idx, field="type")
    types, xs, ys = _unit_arrays(frame.units)
    fmap = np.zeros((N_CHANNELS, GRID, GRID), dtype=np.float32)
    np.add.at(fmap, (types, ys // CELL_PX, xs // CELL_PX), 1.0)
    return fmap


_CENTERS = (np.arange(GRID) + 0.5) * CELL_PX


def compute_visibility(frame, table):
    """Boolean ``(32, 32)`` mask: cells whose centre lies within sight of an A unit."""
    mask = np.zeros((GRID, GRID), dtype=bool)
    friendly = [u for u in frame.units if u.owner == "A"]
    if not friendly:
        return mask
    types, xs, ys = _unit_arrays(friendly)
    sight2 = table.sight[types] ** 2
    dy2 = (_CENTERS[None, :] - ys[:, None]) ** 2  # (units, rows)
    dx2 = (_CENTERS[None, :] - xs[:, None]) ** 2  # (units, cols)
    # chunked so huge frames do not allocate units x 1024 at once
    for start in range(0, len(types), 256):
        sl = slice(start, start + 256)
        d2 = dy2[sl, :, None] + dx2[sl, None, :]
        mask |= np.any(d2 <= sight2[sl, None, None], axis=0)
    return mask


def apply_fog(clean, mask):
    """Zero opponent channels outside ``mask``; friendly channels pass through.

    Accepts a single map ``(66, 32, 32)`` with mask ``(32, 32)`` or a batch
    ``(n, 66, 32, 32)`` with masks ``(n, 32, 32)``.
    """
    if clean.shape[-3:] != (N_CHANNELS, GRID, GRID) or mask.shape != clean.shape[:-3] + (GRID, GRID):
        raise InvalidArgument(f"feature map {clean.shape} and mask {mask.shape} are inconsistent")
    noisy = clean.copy()
    noisy[..., N_A_TYPES:, :, :] *= mask[..., None, :, :]
    return noisy


def downsample_sum_8x8(fmap, channel):
    """Sum 4x4 blocks of one channel into an 8x8 grid (totals preserved)."""
    if not 0 <= channel < N_CHANNELS:
        raise InvalidArgument(f"channel must be in 0..65, got {channel}")
    grid = np.asarray(fmap[channel], dtype=np.float64)
    return grid.reshape(8, GRID // 8, 8, GRID // 8).sum(axis=(1, 3))


def side_values(fmap, table):
    """Total combat value of side A and side B in a (possibly fogged) map."""
    per_type = np.asarray(fmap, dtype=np.float64).sum(axis=(-2, -1)) * table.combat_value
    return float(per_type[:N_A_TYPES].sum()), float(per_type[N_A_TYPES:].sum())
