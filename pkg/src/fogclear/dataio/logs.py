"""Line-delimited JSON frame logs.

One record per line::

    {"replay_id": "r7", "t": 42, "winner": "A",
     "units": [{"type": 3, "owner": "A", "x": 100, "y": 2050}, ...]}

Unknown fields are rejected. Errors carry the 1-based line number.
"""

import json

from ..errors import FrameError, ParseError
from ..gamestate import Frame, UnitInstance, load_registry, validate_frame

FRAME_FIELDS = ("replay_id", "t", "winner", "units")
UNIT_FIELDS = ("type", "owner", "x", "y")


def _require_int(value, line, field):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"field {field!r} must be an integer, got {value!r}", line=line, field=field)
    return value


def _check_fields(obj, allowed, line, where):
    if not isinstance(obj, dict):
        raise ParseError(f"{where} must be an object", line=line)
    for key in obj:
        if key not in allowed:
            raise ParseError(f"unknown field {key!r} in {where}", line=line, field=key)
    for key in allowed:
        if key not in obj:
            raise ParseError(f"missing field {key!r} in {where}", line=line, field=key)


def parse_record(text, line=1, table=None):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=line) from None
    _check_fields(obj, FRAME_FIELDS, line, "record")
    replay_id = obj["replay_id"]
    if not isinstance(replay_id, str) or not replay_id:
        raise ParseError("field 'replay_id' must be a non-empty string", line=line, field="replay_id")
    t = _require_int(obj["t"], line, "t")
    winner = obj["winner"]
    if not isinstance(winner, str):
        raise ParseError("field 'winner' must be a string", line=line, field="winner")
    if not isinstance(obj["units"], list):
        raise ParseError("field 'units' must be an array", line=line, field="units")
    units = []
    for u in obj["units"]:
        _check_fields(u, UNIT_FIELDS, line, "unit")
        owner = u["owner"]
        if not isinstance(owner, str):
            raise ParseError("field 'owner' must be a string", line=line, field="owner")
        units.append(UnitInstance(_require_int(u["type"], line, "type"), owner,
                                  _require_int(u["x"], line, "x"), _require_int(u["y"], line, "y")))
    frame = Frame(replay_id, t, tuple(units), winner)
    try:
        validate_frame(frame, table)
    except FrameError as exc:
        raise FrameError(f"line {line}: {exc}", unit_index=exc.unit_index, field=exc.field, line=line) from None
    return frame


def parse_frame_log(lines, table=None):
    """Parse an iterable of text lines into frames; blank lines are skipped."""
    table = table or load_registry()
    frames = []
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        frames.append(parse_record(text, lineno, table))
    return frames


def serialize_frame(frame):
    record = {
        "replay_id": frame.replay_id,
        "t": frame.t_seconds,
        "winner": frame.winner,
        "units": [{"type": u.type_id, "owner": u.owner, "x": u.x, "y": u.y} for u in frame.units],
    }
    return json.dumps(record, separators=(",", ":"))


def write_frame_log(frames, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in frames:
            fh.write(serialize_frame(frame) + "\n")


def read_frame_log(path, table=None):
    with open(path, encoding="utf-8") as fh:
        return parse_frame_log(fh, table)
