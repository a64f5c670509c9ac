"""Command-line entry point: ``fogclear <command> [flags]``.

Exit codes: 0 success, 1 invalid arguments or input values, 2 file I/O or
format errors. Every run writes ``<command>.manifest.json`` into ``--out-dir``.
``FOGCLEAR_THREADS`` caps BLAS threads (unset or 0 means one thread).
"""

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .dataio import SplitSpec, SyntheticConfig, build_samples, generate_corpus, read_shard, split_by_replay, write_shard
from .dataio.logs import write_frame_log
from .errors import FormatError, InvalidArgument, TrainingError
from .gamestate import load_registry
from .learning import (
    VARIANTS,
    ClassifierConfig,
    EncoderDecoderConfig,
    TrainConfig,
    baseline_mse,
    build_encoder_decoder,
    ed_backward,
    ed_forward,
    ed_forward_cached,
    evaluate_classifier,
    load_classifier,
    load_encoder_decoder,
    save_checkpoint,
    train_classifier,
    train_encoder_decoder,
)
from .nn import grad_check, mse_loss
from .policy import (
    ModelPolicy,
    ModelPolicyConfig,
    OraclePolicy,
    RatioPolicy,
    RatioPolicyConfig,
    benchmark_csv,
    run_policy_benchmark,
)
from .render import MODES, grid_csv, pgm_bytes, render_heatmap, triptych

GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--out-dir", default=".", help="directory for outputs and the manifest")
    p.add_argument("--config", help="JSON file of flag overrides (keys are flag names with underscores)")


def _train_flags(p, epochs):
    p.add_argument("--data", required=True, help="FOGD shard with (noisy, clean) samples")
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--precision", choices=("float32", "float64"), default="float32")


def build_parser():
    parser = _Parser(prog="fogclear", description="Fog-of-war state estimation toolkit")
    parser.add_argument("--version", action="version", version=f"fogclear {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic corpus as a FOGD shard")
    _common(p)
    p.add_argument("--replays", type=int, default=50)
    p.add_argument("--frames-per-replay", type=int, default=44)
    p.add_argument("--frame-stride", type=int, default=1)
    p.add_argument("--scout-probability", type=float, default=SyntheticConfig.scout_probability)
    p.add_argument("--out", default="data.fogd", help="shard path (relative to --out-dir)")
    p.add_argument("--log", help="also write the frame log (JSON lines) to this path")

    p = sub.add_parser("train-ed", help="train the encoder-decoder")
    _common(p)
    _train_flags(p, epochs=20)
    p.add_argument("--base-filters", type=int, default=16)
    p.add_argument("--down-stages", type=int, default=3)
    p.add_argument("--out", default="ed.fogc")

    p = sub.add_parser("train-clf", help="train a winner classifier on one input variant")
    _common(p)
    _train_flags(p, epochs=15)
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--ed-checkpoint", help="encoder-decoder checkpoint (needed for 'retrieved')")
    p.add_argument("--widths", default="8,8,16,16,32", help="five comma-separated conv widths")
    p.add_argument("--out", help="checkpoint path (default clf_<variant>.fogc)")

    p = sub.add_parser("eval-clf", help="evaluate a classifier checkpoint")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--ed-checkpoint")
    p.add_argument("--subset", choices=("val", "train", "all"), default="val",
                   help="which side of the seeded replay split to score")
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--out", default="metrics.csv")

    p = sub.add_parser("render", help="heatmaps of one sample (noisy / clean / predicted)")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0, help="sample index in the shard")
    p.add_argument("--channel", type=int, required=True)
    p.add_argument("--mode", choices=MODES, default="raw32")
    p.add_argument("--ed-checkpoint", help="adds the predicted panel and a triptych")
    p.add_argument("--prefix", default="heatmap")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full encoder-decoder")
    _common(p)
    p.add_argument("--base-filters", type=int, default=4)
    p.add_argument("--spatial", type=int, default=8)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--out", default="gradcheck.csv")

    p = sub.add_parser("bench-policies", help="compare combat-timing policies on synthetic games")
    _common(p)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--frames-per-replay", type=int, default=44)
    p.add_argument("--ed-checkpoint")
    p.add_argument("--clf-checkpoint")
    p.add_argument("--correction-coefficient", type=float, default=1.5)
    p.add_argument("--attack-ratio-threshold", type=float, default=1.0)
    p.add_argument("--probability-threshold", type=float, default=0.69)
    p.add_argument("--no-upgrade-gate", action="store_true")
    p.add_argument("--out", default="bench.csv")
    return parser


def _peek(argv, flag):
    for i, tok in enumerate(argv):
        if tok == flag and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith(flag + "="):
            return tok.split("=", 1)[1]
    return None


def _load_overrides(path):
    with open(path, encoding="utf-8") as fh:
        try:
            overrides = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"--config is not valid JSON: {exc.msg}") from None
    if not isinstance(overrides, dict):
        raise InvalidArgument("--config must hold a JSON object")
    return overrides


def parse_args(argv):
    """Parse ``argv``; values from ``--config`` act as defaults so explicit flags win."""
    parser = build_parser()
    command = argv[0] if argv and argv[0] in COMMANDS else None
    config_path = _peek(argv, "--config")
    if command and config_path:
        overrides = _load_overrides(config_path)
        subparser = parser._subparsers._group_actions[0].choices[command]
        dests = {a.dest for a in subparser._actions} - {"help", "config"}
        unknown = sorted(set(overrides) - dests)
        if unknown:
            raise InvalidArgument(f"--config has unknown keys for '{command}': {unknown}")
        subparser.set_defaults(**overrides)
        for action in subparser._actions:  # a config value satisfies a required flag
            if action.dest in overrides:
                action.required = False
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(f"fogclear: error: a command is required\n{parser.format_usage()}")
    return args


# --- helpers -------------------------------------------------------------------


class Run:
    """Collects outputs; writes files only after validation and the manifest last."""

    def __init__(self, args):
        self.args = args
        self.out_dir = args.out_dir
        self.outputs = []
        self.started = datetime.now(timezone.utc).isoformat()

    def path(self, name):
        return name if os.path.isabs(name) else os.path.join(self.out_dir, name)

    def write(self, name, data):
        path = self.path(name)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        with open(path, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        self.outputs.append(path)
        return path

    def target(self, name):
        """Path for an output written by other code; recorded for the manifest."""
        path = self.path(name)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self.outputs.append(path)
        return path

    def manifest(self, extra=None):
        checksums = {}
        for path in self.outputs:
            with open(path, "rb") as fh:
                checksums[path] = hashlib.sha256(fh.read()).hexdigest()
        config = {k: v for k, v in sorted(vars(self.args).items())}
        doc = {
            "command": self.args.command,
            "version": __version__,
            "seed": self.args.seed,
            "config": config,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "outputs": self.outputs,
            "sha256": checksums,
        }
        if extra:
            doc["results"] = extra
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, f"{self.args.command}.manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _split(samples, fraction, seed):
    train_ids, val_ids = split_by_replay(samples.replay_ids, SplitSpec(fraction, seed))
    return samples.select_replays(train_ids), samples.select_replays(val_ids)


def _history_csv(history):
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{r.epoch},{r.train_loss:.9g},{r.val_loss:.9g}" for r in history.records]
    return "\n".join(lines) + "\n"


def _widths(text):
    try:
        widths = tuple(int(w) for w in str(text).split(","))
    except ValueError:
        raise InvalidArgument(f"--widths must be comma-separated integers, got {text!r}") from None
    return ClassifierConfig(widths)


def _ed_or_none(path):
    return load_encoder_decoder(path) if path else None


# --- commands --------------------------------------------------------------------


def cmd_gen(args, run):
    cfg = SyntheticConfig(num_replays=args.replays, frames_per_replay=args.frames_per_replay,
                          frame_stride=args.frame_stride, scout_probability=args.scout_probability,
                          seed=args.seed)
    table = load_registry()
    frames = generate_corpus(cfg, table)
    if not frames:
        raise InvalidArgument("configuration leaves no frames after cleaning")
    samples = build_samples(frames, table)
    path = run.target(args.out)
    write_shard(samples, path)
    if args.log:
        write_frame_log(frames, run.target(args.log))
    print(f"wrote {len(samples)} samples from {cfg.num_replays} replays to {path}")
    return {"samples": len(samples)}


def cmd_train_ed(args, run):
    ed_cfg = EncoderDecoderConfig(base_filters=args.base_filters, down_stages=args.down_stages)
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                            precision=args.precision)
    train, val = _split(read_shard(args.data), args.train_fraction, args.seed)
    params, history = train_encoder_decoder(train, val, train_cfg, ed_cfg)
    base = baseline_mse(val.x, val.y)
    best = history.records[history.best_epoch].val_loss
    save_checkpoint(params, run.target(args.out))
    run.write("ed_history.csv", _history_csv(history))
    print(f"best epoch {history.best_epoch}: val MSE {best:.6g} (baseline {base:.6g}, ratio {best / base:.3f})")
    return {"best_epoch": history.best_epoch, "val_mse": best, "baseline_mse": base}


def cmd_train_clf(args, run):
    if args.variant == "retrieved" and not args.ed_checkpoint:
        raise InvalidArgument("variant 'retrieved' requires --ed-checkpoint")
    clf_cfg = _widths(args.widths)
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                            precision=args.precision)
    ed = _ed_or_none(args.ed_checkpoint)
    train, val = _split(read_shard(args.data), args.train_fraction, args.seed)
    params, history = train_classifier(train, val, args.variant, ed, train_cfg, clf_cfg)
    out = args.out or f"clf_{args.variant}.fogc"
    save_checkpoint(params, run.target(out))
    run.write(f"clf_{args.variant}_history.csv", _history_csv(history))
    report = evaluate_classifier(params, val, args.variant, ed)
    print(f"best epoch {history.best_epoch}: val accuracy {report.accuracy:.4f}, loss {report.loss:.4f}")
    return {"best_epoch": history.best_epoch, "val_accuracy": report.accuracy}


def cmd_eval_clf(args, run):
    if args.variant == "retrieved" and not args.ed_checkpoint:
        raise InvalidArgument("variant 'retrieved' requires --ed-checkpoint")
    clf = load_classifier(args.checkpoint)
    ed = _ed_or_none(args.ed_checkpoint)
    samples = read_shard(args.data)
    if args.subset != "all":
        train, val = _split(samples, args.train_fraction, args.seed)
        samples = val if args.subset == "val" else train
    report = evaluate_classifier(clf, samples, args.variant, ed)
    lines = ["metric,value"] + [f"{k},{v:.9g}" if isinstance(v, float) else f"{k},{v}" for k, v in report.rows()]
    run.write(args.out, "\n".join(lines) + "\n")
    for line in lines[1:5]:
        print(line)
    return {"accuracy": report.accuracy, "f1_positive": report.f1_positive}


def cmd_render(args, run):
    samples = read_shard(args.data)
    if not 0 <= args.index < len(samples):
        raise InvalidArgument(f"--index must be in 0..{len(samples) - 1}, got {args.index}")
    sample = samples[args.index]
    panels = [("noisy", sample.x), ("clean", sample.y)]
    if args.ed_checkpoint:
        ed = load_encoder_decoder(args.ed_checkpoint)
        panels.append(("predicted", ed_forward(ed, sample.x[None])[0]))
    rendered = [(name, render_heatmap(fmap, args.channel, args.mode)) for name, fmap in panels]
    for name, (img, grid) in rendered:
        stem = f"{args.prefix}_{name}_c{args.channel}_{args.mode}"
        run.write(stem + ".pgm", pgm_bytes(img))
        run.write(stem + ".csv", grid_csv(grid))
    if len(rendered) == 3:
        run.write(f"{args.prefix}_triptych_c{args.channel}_{args.mode}.pgm",
                  pgm_bytes(triptych([img for _, (img, _) in rendered])))
    print(f"rendered {len(rendered)} panels for sample {args.index}, channel {args.channel}")
    return {"panels": len(rendered)}


def full_gradient_check(base_filters=4, spatial=8, seed=0, eps=1e-5):
    """Max relative error of the tied encoder-decoder with skip and MSE, in float64."""
    cfg = EncoderDecoderConfig(base_filters=base_filters, spatial=spatial)
    params = build_encoder_decoder(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for name, arr in params.named_tensors().items():
        if name.endswith("bias"):
            arr[...] = rng.uniform(-0.1, 0.1, arr.shape)
    # dense positive inputs keep ReLU pre-activations away from their kinks
    x = rng.uniform(0.1, 2.0, (1, cfg.in_channels, spatial, spatial))
    y = rng.uniform(0.0, 2.0, x.shape)

    def loss_and_grads():
        out, cache = ed_forward_cached(params, x)
        loss, g = mse_loss(out, y)
        return loss, ed_backward(params, cache, g)

    def loss_fn():
        return mse_loss(ed_forward(params, x), y)[0]

    err = grad_check(loss_and_grads, params.named_tensors(), eps=eps, loss_fn=loss_fn)
    return err, params.parameter_count()


def cmd_gradcheck(args, run):
    err, count = full_gradient_check(args.base_filters, args.spatial, args.seed, args.eps)
    passed = err < GRADCHECK_TOLERANCE
    run.write(args.out, f"metric,value\nmax_relative_error,{err:.6e}\nparameters,{count}\n"
                        f"passed,{int(passed)}\n")
    print(f"max relative error {err:.3e} over {count} parameters: {'PASS' if passed else 'FAIL'}")
    return {"max_relative_error": err, "passed": passed, "exit_code": 0 if passed else 1}


def cmd_bench(args, run):
    if bool(args.ed_checkpoint) != bool(args.clf_checkpoint):
        raise InvalidArgument("--ed-checkpoint and --clf-checkpoint must be given together")
    table = load_registry()
    policies = [RatioPolicy(table, RatioPolicyConfig(args.correction_coefficient, args.attack_ratio_threshold))]
    if args.ed_checkpoint:
        policies.append(ModelPolicy(load_encoder_decoder(args.ed_checkpoint), load_classifier(args.clf_checkpoint),
                                    ModelPolicyConfig(args.probability_threshold, not args.no_upgrade_gate)))
    policies.append(OraclePolicy(table))
    games = SyntheticConfig(num_replays=args.trials, frames_per_replay=args.frames_per_replay, seed=args.seed)
    results = run_policy_benchmark(policies, games, args.trials, table)
    text = benchmark_csv(results)
    run.write(args.out, text)
    sys.stdout.write(text)
    return {name: r.win_rate for name, r in results.items()}


COMMANDS = {
    "gen": cmd_gen,
    "train-ed": cmd_train_ed,
    "train-clf": cmd_train_clf,
    "eval-clf": cmd_eval_clf,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
    "bench-policies": cmd_bench,
}


def thread_limit():
    raw = os.environ.get("FOGCLEAR_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgument(f"FOGCLEAR_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidArgument(f"FOGCLEAR_THREADS must be >= 0, got {n}")
    return n or 1


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        with threadpool_limits(limits=thread_limit()):
            run = Run(args)
            results = dict(COMMANDS[args.command](args, run) or {})
            code = results.pop("exit_code", 0)
            run.manifest(results)
        return code
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except (FormatError, OSError) as exc:
        sys.stderr.write(f"fogclear: error: {exc}\n")
        return 2
    except (ValueError, TrainingError) as exc:
        sys.stderr.write(f"fogclear: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
