from .logs import parse_frame_log, read_frame_log, serialize_frame, write_frame_log
from .samples import (
    DatasetSample,
    SampleSet,
    SplitSpec,
    build_samples,
    read_shard,
    split_by_replay,
    write_shard,
)
from .synthetic import (
    SyntheticConfig,
    clean_replay,
    generate_corpus,
    generate_synthetic_replay,
    upgrade_done,
)

__all__ = [
    "DatasetSample", "SampleSet", "SplitSpec", "SyntheticConfig", "build_samples", "clean_replay",
    "generate_corpus", "generate_synthetic_replay", "parse_frame_log", "read_frame_log",
    "read_shard", "serialize_frame", "split_by_replay", "upgrade_done", "write_frame_log",
    "write_shard",
]
