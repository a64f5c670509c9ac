"""(noisy, clean) sample sets, replay-level splitting and the FOGD shard format."""

import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, InvalidArgument
from ..gamestate import GRID, N_CHANNELS, apply_fog, compute_visibility, encode_frame, load_registry

MAP_SHAPE = (N_CHANNELS, GRID, GRID)
SHARD_MAGIC = b"FOGD"
SHARD_VERSION = 1
_MAP_BYTES = N_CHANNELS * GRID * GRID * 4


@dataclass
class DatasetSample:
    x: np.ndarray
    y: np.ndarray
    winner: str
    replay_id: str
    t_seconds: int


class SampleSet(Sequence):
    """Stacked samples: ``x``/``y`` are ``(n, 66, 32, 32)`` float32 arrays."""

    def __init__(self, x, y, winners, replay_ids, t_seconds):
        self.x = np.ascontiguousarray(x, dtype=np.float32)
        self.y = np.ascontiguousarray(y, dtype=np.float32)
        self.winners = list(winners)
        self.replay_ids = list(replay_ids)
        self.t_seconds = np.asarray(t_seconds, dtype=np.int64)
        n = len(self.winners)
        if self.x.shape != (n,) + MAP_SHAPE or self.y.shape != self.x.shape:
            raise InvalidArgument(f"sample arrays {self.x.shape}/{self.y.shape} do not match {n} samples")
        if len(self.replay_ids) != n or self.t_seconds.shape != (n,):
            raise InvalidArgument("metadata lengths do not match sample count")

    def __len__(self):
        return len(self.winners)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.subset(range(len(self))[i])
        return DatasetSample(self.x[i], self.y[i], self.winners[i], self.replay_ids[i], int(self.t_seconds[i]))

    @property
    def labels(self):
        """0 when A wins, 1 when B wins."""
        return np.array([0 if w == "A" else 1 for w in self.winners], dtype=np.int64)

    def subset(self, indices):
        idx = np.asarray(list(indices), dtype=np.int64)
        return SampleSet(self.x[idx], self.y[idx], [self.winners[i] for i in idx],
                         [self.replay_ids[i] for i in idx], self.t_seconds[idx])

    def select_replays(self, replay_ids):
        keep = set(replay_ids)
        return self.subset(i for i, r in enumerate(self.replay_ids) if r in keep)

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        if not samples:
            empty = np.zeros((0,) + MAP_SHAPE, np.float32)
            return cls(empty, empty.copy(), [], [], [])
        return cls(np.stack([s.x for s in samples]), np.stack([s.y for s in samples]),
                   [s.winner for s in samples], [s.replay_id for s in samples],
                   [s.t_seconds for s in samples])


def build_samples(frames, table=None):
    """Encode every frame: ``y`` = full map, ``x`` = ``y`` under A's fog."""
    table = table or load_registry()
    n = len(frames)
    x = np.zeros((n,) + MAP_SHAPE, np.float32)
    y = np.zeros((n,) + MAP_SHAPE, np.float32)
    for i, frame in enumerate(frames):
        y[i] = encode_frame(frame, table)
        x[i] = apply_fog(y[i], compute_visibility(frame, table))
    return SampleSet(x, y, [f.winner for f in frames], [f.replay_id for f in frames],
                     [f.t_seconds for f in frames])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise InvalidArgument(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def split_by_replay(items, spec=SplitSpec()):
    """Partition replay ids into ``(train_ids, val_ids)``.

    ``items`` may be frames, samples or plain replay-id strings. Ids are sorted,
    shuffled by ``spec.seed`` and the first ``round(fraction * R)`` go to
    training, clamped so both sides keep at least one replay.
    """
    ids = sorted({it if isinstance(it, str) else it.replay_id for it in items})
    if len(ids) < 2:
        raise InvalidArgument(f"need at least 2 distinct replays to split, got {len(ids)}")
    order = np.random.default_rng(spec.seed).permutation(len(ids))
    n_train = int(math.floor(spec.train_fraction * len(ids) + 0.5))
    n_train = min(max(n_train, 1), len(ids) - 1)
    train = sorted(ids[i] for i in order[:n_train])
    val = sorted(ids[i] for i in order[n_train:])
    return train, val


def write_shard(samples, path):
    """Write samples to a little-endian FOGD shard."""
    if not isinstance(samples, SampleSet):
        samples = SampleSet.from_samples(samples)
    with open(path, "wb") as fh:
        fh.write(SHARD_MAGIC)
        fh.write(struct.pack("<IQ", SHARD_VERSION, len(samples)))
        for i in range(len(samples)):
            rid = samples.replay_ids[i].encode("utf-8")
            if len(rid) > 0xFFFF:
                raise InvalidArgument(f"replay id too long: {len(rid)} bytes")
            fh.write(struct.pack("<H", len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<IB", int(samples.t_seconds[i]), 0 if samples.winners[i] == "A" else 1))
            fh.write(samples.x[i].astype("<f4", copy=False).tobytes())
            fh.write(samples.y[i].astype("<f4", copy=False).tobytes())


def _take(buf, offset, size, what):
    if offset + size > len(buf):
        raise FormatError(f"truncated shard while reading {what}", offset=offset)
    return buf[offset:offset + size], offset + size


def read_shard(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, off = _take(buf, 0, 4, "magic")
    if magic != SHARD_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SHARD_MAGIC!r}", offset=0)
    raw, off = _take(buf, off, 4, "version")
    (version,) = struct.unpack("<I", raw)
    if version != SHARD_VERSION:
        raise FormatError(f"unsupported shard version {version}", offset=4)
    raw, off = _take(buf, off, 8, "sample count")
    (count,) = struct.unpack("<Q", raw)
    # reject absurd counts before allocating
    min_record = 2 + 4 + 1 + 2 * _MAP_BYTES
    if count * min_record > len(buf) - off:
        raise FormatError(f"shard declares {count} samples but only {len(buf) - off} bytes follow", offset=8)
    x = np.empty((count,) + MAP_SHAPE, np.float32)
    y = np.empty((count,) + MAP_SHAPE, np.float32)
    winners, rids, ts = [], [], []
    for i in range(count):
        raw, off = _take(buf, off, 2, "replay id length")
        (n,) = struct.unpack("<H", raw)
        raw, off2 = _take(buf, off, n, "replay id")
        try:
            rids.append(raw.decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError("replay id is not valid UTF-8", offset=off) from None
        off = off2
        raw, off2 = _take(buf, off, 5, "timestamp/winner")
        t, w = struct.unpack("<IB", raw)
        if w > 1:
            raise FormatError(f"winner byte must be 0 or 1, got {w}", offset=off + 4)
        off = off2
        ts.append(t)
        winners.append("A" if w == 0 else "B")
        raw, off = _take(buf, off, _MAP_BYTES, "X map")
        x[i] = np.frombuffer(raw, dtype="<f4").reshape(MAP_SHAPE)
        raw, off = _take(buf, off, _MAP_BYTES, "Y map")
        y[i] = np.frombuffer(raw, dtype="<f4").reshape(MAP_SHAPE)
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after last sample", offset=off)
    return SampleSet(x, y, winners, rids, ts)
