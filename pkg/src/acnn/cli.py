"""Command-line entry point: ``acnn <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` (JSON run configuration) and
``--seed``. Values resolve as built-in defaults < config file < explicit
flags, and the effective configuration is echoed as a comment line at the top
of every CSV report. Exit codes: 0 success, 1 validation error (bad flags,
bad inputs, rejected files), 2 runtime error.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import ACNNError, CheckpointError, InvalidArgument

PRECISIONS = {"float32": np.float32, "float64": np.float64}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --- run configuration ------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    precision: str = "float32"

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"command", "params", "seed", "precision"}
        if unknown:
            raise InvalidArgument(f"unknown config keys {sorted(unknown)}")
        return cls(d.get("command", ""), dict(d.get("params", {})), int(d.get("seed", 0)),
                   d.get("precision", "float32"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return RunConfig.from_json(fh.read())
    except FileNotFoundError:
        raise InvalidArgument(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise InvalidArgument(f"config file {path} is not valid JSON: {e}") from None


# --- argument parsing -------------------------------------------------------------

COMMON = ("config", "save_config", "seed", "precision", "no_figures", "force")

# (flags, kwargs) per subcommand; "required" is checked after merging the config file
COMMANDS = {
    "gen-synth": [
        (("--out",), dict(required=True, help="output directory (train/ and test/ are created)")),
        (("--train-per-context",), dict(type=int, default=8)),
        (("--test-per-context",), dict(type=int, default=2)),
        (("--people-min",), dict(type=int, default=5)),
        (("--people-max",), dict(type=int, default=25)),
        (("--rows",), dict(type=int, default=96)),
        (("--cols",), dict(type=int, default=128)),
        (("--fov-deg",), dict(type=float, default=16.0)),
    ],
    "gen-deconv-data": [
        (("--out",), dict(required=True)),
        (("--n",), dict(type=int, default=200, help="training images")),
        (("--n-val",), dict(type=int, default=40)),
        (("--n-test",), dict(type=int, default=80)),
        (("--size",), dict(type=int, default=64)),
        (("--radii",), dict(default="3,7,11")),
        (("--sigma",), dict(type=float, default=0.01)),
        (("--images",), dict(default=None, help="extra grayscale PGM folder added to the training split")),
    ],
    "train-count": [
        (("--spec",), dict(required=True)),
        (("--data",), dict(required=True, help="scene directory (gen-synth .../train)")),
        (("--out",), dict(required=True, help="checkpoint manifest path")),
        (("--lambda",), dict(type=float, default=0.1, dest="lam")),
        (("--epochs",), dict(type=int, default=20)),
        (("--steps",), dict(type=int, default=None, help="stop after this many updates")),
        (("--lr",), dict(type=float, default=1e-3)),
        (("--batch-size",), dict(type=int, default=64)),
        (("--patches-per-scene",), dict(type=int, default=300)),
        (("--patch-stride",), dict(type=int, default=2)),
        (("--val-fraction",), dict(type=float, default=0.1)),
        (("--patience",), dict(type=int, default=10)),
        (("--holdout-middle-third",), dict(action="store_true", default=False,
                                           help="drop contexts whose perspective is in the middle third")),
    ],
    "eval-count": [
        (("--ckpt",), dict(required=True)),
        (("--data",), dict(required=True)),
        (("--report",), dict(required=True)),
        (("--stride",), dict(type=int, default=4)),
    ],
    "train-deconv": [
        (("--data",), dict(required=True, help="corpus directory from gen-deconv-data")),
        (("--out",), dict(required=True)),
        (("--radii",), dict(default="3,7,11")),
        (("--model",), dict(choices=("acnn", "cnn"), default="acnn")),
        (("--filter-length",), dict(type=int, default=121)),
        (("--channels",), dict(type=int, default=None, help="default 12 (acnn) / 38 (cnn)")),
        (("--steps",), dict(type=int, default=2000)),
        (("--batch-size",), dict(type=int, default=16)),
        (("--lr",), dict(type=float, default=3e-3)),
        (("--sigma",), dict(type=float, default=0.01)),
    ],
    "eval-deconv": [
        (("--ckpt",), dict(required=True)),
        (("--data",), dict(required=True)),
        (("--report",), dict(required=True)),
        (("--radii",), dict(default="3,5,7,9,11")),
        (("--split",), dict(choices=("train", "val", "test"), default="test")),
        (("--sigma",), dict(type=float, default=0.01)),
    ],
    "params": [
        (("--spec",), dict(required=True)),
        (("--report",), dict(default=None)),
    ],
    "perspective": [
        (("--angle-deg",), dict(type=float, required=True)),
        (("--height-m",), dict(type=float, required=True)),
        (("--fov-deg",), dict(type=float, default=16.0)),
        (("--rows",), dict(type=int, default=96)),
        (("--cols",), dict(type=int, default=128)),
        (("--out",), dict(required=True, help="output prefix; writes PREFIX.pgm and PREFIX.csv")),
    ],
    "gradcheck": [
        (("--all",), dict(action="store_true", default=False)),
        (("--suite",), dict(action="append", default=None, help="suite name (repeatable)")),
        (("--report",), dict(default=None)),
    ],
    "manifold-probe": [
        (("--ckpt",), dict(required=True)),
        (("--report",), dict(required=True)),
        (("--layer",), dict(type=int, default=1, help="1-based index among adaptive layers")),
        (("--aux",), dict(default=None, help="comma list of raw aux values; 2-D values as a:b")),
        (("--steps",), dict(type=int, default=7, help="grid size when --aux is omitted")),
    ],
}


def build_parser(suppress=False):
    """``suppress=True`` gives a parser whose namespace holds only explicit flags."""

    def kw(d):
        d = dict(d)
        d.pop("required", None)
        if suppress:
            d["default"] = argparse.SUPPRESS
        return d

    parser = _Parser(prog="acnn", description="Adaptive convolutional networks with side information.")
    parser.add_argument("--version", action="version", version=f"acnn {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, flags in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", **kw(dict(default=None, help="JSON run configuration")))
        p.add_argument("--save-config", **kw(dict(default=None, help="write the effective configuration")))
        p.add_argument("--seed", **kw(dict(type=int, default=0)))
        p.add_argument("--precision", **kw(dict(choices=tuple(PRECISIONS), default="float32")))
        p.add_argument("--no-figures", **kw(dict(action="store_true", default=False)))
        p.add_argument("--force", **kw(dict(action="store_true", default=False, help="overwrite outputs")))
        for names, opts in flags:
            p.add_argument(*names, **kw(opts))
    return parser


def _dest(names, opts):
    return opts.get("dest", names[0].lstrip("-").replace("-", "_"))


def resolve_config(argv):
    """Merge defaults, the optional config file and explicit flags."""
    ns = build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError(build_parser().format_usage().rstrip() + "\nacnn: error: a subcommand is required")
    explicit = vars(build_parser(suppress=True).parse_args(argv))
    explicit.pop("command", None)
    values = {k: v for k, v in vars(ns).items() if k != "command"}
    if "config" in explicit:
        cfg = load_config_file(explicit["config"])
        if cfg.command and cfg.command != ns.command:
            raise InvalidArgument(f"config file is for {cfg.command!r}, not {ns.command!r}")
        known = {_dest(n, o) for n, o in COMMANDS[ns.command]}
        unknown = set(cfg.params) - known
        if unknown:
            raise InvalidArgument(f"config file has unknown parameters for {ns.command}: {sorted(unknown)}")
        values.update(cfg.params)
        values.update(seed=cfg.seed, precision=cfg.precision)
    values.update(explicit)
    for names, opts in COMMANDS[ns.command]:
        if opts.get("required") and values.get(_dest(names, opts)) is None:
            raise UsageError(f"acnn {ns.command}: error: the following argument is required: {names[0]}")
    if values["precision"] not in PRECISIONS:
        raise InvalidArgument(f"unknown precision {values['precision']!r}")
    params = {_dest(n, o): values[_dest(n, o)] for n, o in COMMANDS[ns.command]}
    run = RunConfig(ns.command, params, int(values["seed"]), values["precision"])
    opts = {k: values[k] for k in COMMON}
    return run, opts


# --- helpers ----------------------------------------------------------------------

def _int_list(text, what):
    try:
        vals = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InvalidArgument(f"{what} must be a comma-separated list of integers, got {text!r}") from None
    if not vals:
        raise InvalidArgument(f"{what} is empty")
    return vals


def _check_new(path, force):
    if os.path.exists(path) and not force:
        raise CheckpointError(f"{path} already exists (use --force to overwrite)")


def _header(run):
    return [f"acnn {__version__} {run.command}", f"config {run.to_json()}"]


def _corruption_note(sigma):
    return (f"corruption: binary disk blur (reflect borders) + additive Gaussian noise sigma={sigma:g}, "
            "clamped to [0, 1]; no JPEG compression stage")


def _figures(opts):
    return not opts["no_figures"]


def _say(*parts):
    print(*parts, flush=True)


# --- subcommands ----------------------------------------------------------------

def cmd_gen_synth(run, opts):
    from .crowd.benchmark import BenchmarkConfig, build_benchmark
    from .crowd.storage import save_scene_dir

    p = run.params
    for split in ("train", "test"):
        _check_new(os.path.join(p["out"], split, "scenes.csv"), opts["force"])
    cfg = BenchmarkConfig(train_per_context=p["train_per_context"], test_per_context=p["test_per_context"],
                          people=(p["people_min"], p["people_max"]), rows=p["rows"], cols=p["cols"],
                          fov_deg=p["fov_deg"], seed=run.seed)
    bench = build_benchmark(cfg)
    for split, rows in (("train", bench.train), ("test", bench.test)):
        named = [(f"{split}_c{c:02d}_{k:03d}", sc) for k, (c, sc) in enumerate(rows)]
        save_scene_dir(os.path.join(p["out"], split), named, comments=_header(run))
        _say(f"{split}: {len(named)} scenes -> {os.path.join(p['out'], split)}")
    return 0


def cmd_gen_deconv_data(run, opts):
    from .deconv import CorruptionConfig, corrupt, scale_to_range, texture_corpus
    from .io import load_image, save_image, write_csv

    p = run.params
    radii = _int_list(p["radii"], "--radii")
    CorruptionConfig(tuple(radii), p["sigma"], run.seed)
    _check_new(os.path.join(p["out"], "corpus.csv"), opts["force"])
    seeds = np.random.SeedSequence(run.seed).generate_state(3)
    splits = {}
    for (split, n), s in zip((("train", p["n"]), ("val", p["n_val"]), ("test", p["n_test"])), seeds):
        if n < 0:
            raise InvalidArgument(f"negative image count for {split}")
        splits[split] = list(texture_corpus(n, p["size"], int(s))) if n else []
    if p["images"]:
        size = p["size"]
        for fname in sorted(os.listdir(p["images"])):
            if not fname.endswith(".pgm"):
                continue
            img = load_image(os.path.join(p["images"], fname))
            if min(img.shape) < size:
                continue
            r0, c0 = (img.shape[0] - size) // 2, (img.shape[1] - size) // 2
            splits["train"].append(scale_to_range(img[r0:r0 + size, c0:c0 + size].astype(np.float64)))
    rows = []
    cfg = CorruptionConfig(tuple(radii), p["sigma"], run.seed)
    for split, images in splits.items():
        os.makedirs(os.path.join(p["out"], split), exist_ok=True)
        for i, img in enumerate(images):
            name = f"{i:04d}.pgm"
            save_image(os.path.join(p["out"], split, name), img)
            rows.append((split, name))
            for r in radii:
                d = os.path.join(p["out"], split, f"blurred_r{r}")
                os.makedirs(d, exist_ok=True)
                save_image(os.path.join(d, name), corrupt(img, cfg, r, seed=run.seed + i))
    write_csv(os.path.join(p["out"], "corpus.csv"), ("split", "image"), rows,
              _header(run) + [_corruption_note(p["sigma"])])
    _say(" ".join(f"{k}={len(v)}" for k, v in splits.items()), f"-> {p['out']}")
    return 0


def _load_deconv_split(path, split):
    from .io import load_image, read_csv

    index = os.path.join(path, "corpus.csv")
    if not os.path.exists(index):
        raise InvalidArgument(f"{path} has no corpus.csv (run gen-deconv-data first)")
    names = [r["image"] for r in read_csv(index) if r["split"] == split]
    if not names:
        raise InvalidArgument(f"{path} has no {split} images")
    return np.stack([load_image(os.path.join(path, split, n)).astype(np.float64) for n in names])


def cmd_train_count(run, opts):
    from . import plots
    from .checkpoint import save_checkpoint
    from .counting import CountingModel, TrainConfig, get_spec, train_counting
    from .crowd.benchmark import middle_third, patch_dataset, scene_aux
    from .crowd.storage import load_scene_dir
    from .io import write_csv

    p = run.params
    _check_new(p["out"], opts["force"])
    spec = get_spec(p["spec"])
    _, scenes, _ = load_scene_dir(p["data"])
    if p["holdout_middle_third"]:
        keys = sorted({(sc.camera.angle_deg, sc.camera.height_m) for sc in scenes})
        aux = [scene_aux(next(sc for sc in scenes if (sc.camera.angle_deg, sc.camera.height_m) == k)) for k in keys]
        held = {keys[i] for i in middle_third(aux)}
        scenes = [sc for sc in scenes if (sc.camera.angle_deg, sc.camera.height_m) not in held]
        _say(f"holding out contexts {sorted(held)}")
    data = patch_dataset(scenes, spec.aux_kind, p["patches_per_scene"], p["patch_stride"], run.seed,
                         spec.patch_size)
    cfg = TrainConfig(lam=p["lam"], epochs=p["epochs"], batch_size=p["batch_size"], seed=run.seed, lr=p["lr"],
                      val_fraction=p["val_fraction"], patience=p["patience"], max_steps=p["steps"])
    model = CountingModel(spec, seed=run.seed, dtype=PRECISIONS[run.precision])
    _say(f"{spec.name}: {len(data)} patches from {len(scenes)} scenes")
    _, hist = train_counting(model, data, cfg, log=_say)
    save_checkpoint(model, p["out"], force=opts["force"], extra={"config": json.loads(run.to_json())})
    hist_csv = p["out"] + ".history.csv"
    rows = [(i + 1, a, b, hist.val_mae[i] if i < len(hist.val_mae) else "")
            for i, (a, b) in enumerate(zip(hist.train_loss, hist.train_mse))]
    write_csv(hist_csv, ("epoch", "train_loss", "train_mse", "val_density_mae"), rows, _header(run))
    if _figures(opts) and hist.train_loss:
        plots.loss_curve(plots.figure_path(hist_csv), hist.train_loss)
    _say(f"saved {p['out']} (best epoch {hist.best_epoch + 1}, {hist.steps} steps)")
    return 0


def cmd_eval_count(run, opts):
    from . import plots
    from .checkpoint import load_checkpoint
    from .counting import eval_counting
    from .crowd.storage import load_scene_dir
    from .io import write_csv

    p = run.params
    _check_new(p["report"], opts["force"])
    model = load_checkpoint(p["ckpt"]).astype(PRECISIONS[run.precision])
    names, scenes, roi = load_scene_dir(p["data"])
    report = eval_counting(model, scenes, p["stride"], roi)
    rows = [(n, t, q, abs(q - t)) for n, t, q in zip(names, report.true, report.predicted)]
    write_csv(p["report"], ("scene", "true", "predicted", "abs_error"), rows,
              _header(run) + [f"mae {report.mae:.6f} over {len(rows)} scenes"])
    if _figures(opts):
        plots.count_scatter(plots.figure_path(p["report"]), report.true, report.predicted,
                            f"{model.spec.name}  MAE {report.mae:.3f}")
    _say(f"MAE {report.mae:.4f} over {len(rows)} scenes -> {p['report']}")
    return 0


def cmd_train_deconv(run, opts):
    from . import plots
    from .checkpoint import save_checkpoint
    from .deconv import DeconvNet, DeconvSpec, DeconvTrainConfig, train_deconv
    from .io import write_csv

    p = run.params
    _check_new(p["out"], opts["force"])
    radii = _int_list(p["radii"], "--radii")
    adaptive = p["model"] == "acnn"
    channels = p["channels"] or (12 if adaptive else 38)
    spec = DeconvSpec(adaptive, channels, p["filter_length"])
    corpus = _load_deconv_split(p["data"], "train")
    model = DeconvNet(spec, seed=run.seed, dtype=PRECISIONS[run.precision])
    cfg = DeconvTrainConfig(p["steps"], p["batch_size"], p["lr"], run.seed, p["sigma"])
    _, hist = train_deconv(model, corpus, radii, cfg, log=_say)
    save_checkpoint(model, p["out"], force=opts["force"], extra={"config": json.loads(run.to_json())})
    hist_csv = p["out"] + ".history.csv"
    write_csv(hist_csv, ("step", "loss"), list(enumerate(hist.loss, 1)),
              _header(run) + [_corruption_note(p["sigma"])])
    if _figures(opts):
        plots.loss_curve(plots.figure_path(hist_csv), hist.loss, "pixel MSE")
    _say(f"saved {p['out']}")
    return 0


def cmd_eval_deconv(run, opts):
    from . import plots
    from .checkpoint import load_checkpoint
    from .deconv import eval_deconv
    from .io import write_csv

    p = run.params
    _check_new(p["report"], opts["force"])
    radii = _int_list(p["radii"], "--radii")
    model = load_checkpoint(p["ckpt"]).astype(PRECISIONS[run.precision])
    corpus = _load_deconv_split(p["data"], p["split"])
    rows = eval_deconv(model, corpus, radii, p["sigma"], run.seed)
    write_csv(p["report"], ("radius", "seen", "psnr_blurred", "psnr_model", "delta"),
              [(r.radius, r.seen, r.psnr_blurred, r.psnr_model, r.delta) for r in rows],
              _header(run) + [_corruption_note(p["sigma"])])
    if _figures(opts):
        plots.deconv_gains(plots.figure_path(p["report"]), [r.radius for r in rows], [r.delta for r in rows],
                           [r.seen for r in rows])
    for r in rows:
        _say(f"r={r.radius} {'seen  ' if r.seen else 'unseen'} blurred {r.psnr_blurred:.2f} dB "
             f"restored {r.psnr_model:.2f} dB delta {r.delta:+.2f}")
    return 0


def cmd_params(run, opts):
    from .counting import CountingModel, count_params, format_param_table, get_spec

    p = run.params
    spec = get_spec(p["spec"])
    text = format_param_table(spec.name, count_params(CountingModel(spec)))
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    if p["report"]:
        _check_new(p["report"], opts["force"])
        with open(p["report"], "w", encoding="utf-8") as fh:
            fh.write("".join(f"# {h}\n" for h in _header(run)) + text + ("" if text.endswith("\n") else "\n"))
    return 0


def cmd_perspective(run, opts):
    from . import plots
    from .geometry import CameraExtrinsics, estimate_perspective_map, ray_angles
    from .io import save_scaled, write_csv

    p = run.params
    csv_path = p["out"] + ".csv"
    _check_new(csv_path, opts["force"])
    cam = CameraExtrinsics(p["angle_deg"], p["height_m"], p["fov_deg"], p["rows"], p["cols"])
    pmap = estimate_perspective_map(cam)
    per_row = pmap.values[:, 0]
    beta = np.degrees(ray_angles(cam))
    save_scaled(p["out"] + ".pgm", pmap.values)
    write_csv(csv_path, ("row", "ray_angle_deg", "pixels_per_m"),
              [(i, b, m) for i, (b, m) in enumerate(zip(beta, per_row))], _header(run))
    if _figures(opts):
        plots.perspective_profile(p["out"] + ".png", np.arange(len(per_row)), per_row)
    _say(f"perspective {per_row[0]:.3f} (top) .. {per_row[-1]:.3f} (bottom) px/m -> {csv_path}")
    return 0


def cmd_gradcheck(run, opts):
    from .gradsuite import SUITES, run_suites
    from .io import write_csv

    p = run.params
    names = None if p["all"] or not p["suite"] else list(p["suite"])
    if names:
        unknown = set(names) - {n for n, _, _ in SUITES}
        if unknown:
            raise InvalidArgument(f"unknown gradient suites {sorted(unknown)}")
    results = run_suites(names, run.seed)
    for r in results:
        _say(f"{'PASS' if r.passed else 'FAIL'} {r.name:24s} rel err {r.error:.3e} (tol {r.tolerance:.0e})")
    if p["report"]:
        _check_new(p["report"], opts["force"])
        write_csv(p["report"], ("suite", "rel_error", "tolerance", "passed"),
                  [(r.name, r.error, r.tolerance, r.passed) for r in results], _header(run))
    return 0 if all(r.passed for r in results) else 2


def _adaptive_layers(model):
    from .adaptive import AdaptiveConv2d

    if hasattr(model, "_conv_layers"):
        return [layer for _, layer, fmn in model._conv_layers if fmn]
    return [c for c in getattr(model, "convs", []) if isinstance(c, AdaptiveConv2d)]


def _parse_aux(text, dim):
    grid = []
    for tok in str(text).split(","):
        parts = [float(v) for v in tok.split(":")]
        if len(parts) != dim:
            raise InvalidArgument(f"aux value {tok!r} needs {dim} component(s)")
        grid.append(parts)
    return grid


def cmd_manifold_probe(run, opts):
    from . import plots
    from .adaptive import manifold_probe, probe_distances
    from .checkpoint import load_checkpoint
    from .crowd.context import TRAIN_BOUND
    from .io import write_csv

    p = run.params
    _check_new(p["report"], opts["force"])
    model = load_checkpoint(p["ckpt"])
    layers = _adaptive_layers(model)
    if not layers:
        raise InvalidArgument(f"{p['ckpt']} has no adaptive layers")
    if not 1 <= p["layer"] <= len(layers):
        raise InvalidArgument(f"--layer must be in 1..{len(layers)}")
    layer = layers[p["layer"] - 1]
    norm = model.normalizer
    dim = layer.fmn.aux_dim
    if p["aux"] is not None:
        grid = _parse_aux(p["aux"], dim)
    else:
        if norm is None or dim != 1:
            raise InvalidArgument("--aux is required for this model")
        if p["steps"] < 2:
            raise InvalidArgument("--steps must be at least 2")
        c, s = float(norm.center[0]), float(norm.scale[0])
        grid = [[v] for v in np.linspace(c - TRAIN_BOUND * s, c + TRAIN_BOUND * s, p["steps"])]
    snaps = manifold_probe(layer, grid, norm)
    w0, b0 = snaps[0]
    header = [f"aux{i}" for i in range(dim)] + [f"w{i}" for i in range(w0.size)] + [f"b{i}" for i in range(b0.size)]
    rows = [list(z) + list(w.ravel()) + list(b.ravel()) for z, (w, b) in zip(grid, snaps)]
    write_csv(p["report"], header, rows, _header(run))
    if _figures(opts):
        plots.filter_manifold(plots.figure_path(p["report"]), [z[0] for z in grid], [w for w, _ in snaps])
    for z, d in zip(grid[1:], probe_distances(snaps)):
        _say(f"aux {','.join(f'{v:.4g}' for v in z)}: filter step {d:.4g}")
    return 0


HANDLERS = {
    "gen-synth": cmd_gen_synth,
    "gen-deconv-data": cmd_gen_deconv_data,
    "train-count": cmd_train_count,
    "eval-count": cmd_eval_count,
    "train-deconv": cmd_train_deconv,
    "eval-deconv": cmd_eval_deconv,
    "params": cmd_params,
    "perspective": cmd_perspective,
    "gradcheck": cmd_gradcheck,
    "manifold-probe": cmd_manifold_probe,
}


def _thread_limit():
    raw = os.environ.get("ACNN_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise InvalidArgument(f"ACNN_THREADS must be a positive integer, got {raw!r}")
    return n


def run(argv):
    """Execute one subcommand; returns the process exit code."""
    try:
        cfg, opts = resolve_config(argv)
        if opts["save_config"]:
            with open(opts["save_config"], "w", encoding="utf-8") as fh:
                fh.write(json.dumps(json.loads(cfg.to_json()), indent=2, sort_keys=True) + "\n")
        limit = _thread_limit()
        if limit is None:
            return HANDLERS[cfg.command](cfg, opts)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            return HANDLERS[cfg.command](cfg, opts)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except (InvalidArgument, CheckpointError, FileNotFoundError) as e:
        print(f"acnn: error: {e}", file=sys.stderr)
        return 1
    except (ACNNError, ArithmeticError, MemoryError, OSError) as e:
        print(f"acnn: runtime error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
