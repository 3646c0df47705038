"""Command-line entry point: ``shapeattr <command> [--config FILE] [--seed N] [--out DIR]``.

Every command reads defaults, then an optional YAML config, then
``--set key=value`` overrides (values parsed as YAML).  Unknown keys are
rejected.  The resolved config is written to ``<out>/config.yaml`` and all
report files go under ``<out>``.  Timestamps appear only in ``run.log``.

Seeds: every random component draws from ``derive_seed(seed, name)``, a
SeedSequence keyed on the root seed and the CRC32 of the component name.

On failure the last line on stderr is a JSON object
``{"error": kind, "command": ..., "message": ...}`` and the exit status is
2 (invalid config/argument), 3 (io-error), 4 (numeric-failure) or 1.

Outputs per command::

  synth     images/*.png, manifest.csv
            (file,family,p,background,seed,object_id,view_cluster,<12 label columns>)
  train     model.bin, model.manifest.txt, curves.csv (step,attribute_loss,triplet_loss,combined)
  probe     probe.csv (family,background,p,response), summary.txt
  cues      cues.csv (metric, five shading|contour conditions), summary.txt
  lighting  lighting.csv (lighting,background,r_s), summary.txt
  texture   texture.csv (texture,p,mean_response,std_response), summary.txt
  rotation  rotation.csv (setting,auroc,eer,positive_fraction,n_positives,n_negatives), summary.txt
  cam       cam.csv (image,attribute,localization_auroc), cam_XX.png/.csv, summary.txt
  cluster   assignment.csv (index,label), spectrum.csv (index,eigenvalue), summary.txt

A ``model`` entry is either a checkpoint prefix or one of ``oracle:parameter``,
``oracle:geometry``, ``oracle:shading``, ``oracle:contour``, ``oracle:constant``.
"""

import argparse
import copy
import json
import logging
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import experiments as ex
from .backgrounds import load_backgrounds, training_backgrounds
from .cluster import laplacian_spectrum, planted_partition, read_matrix, spectral_cluster, suggest_k, write_assignment
from .errors import DegenerateStimulus, InvalidArgument, NumericFailure, PreconditionViolation, UndefinedMetric
from .geometry import StimulusSpec, parameter_sweep
from .metrics import write_csv
from .model import (
    ATTRIBUTES,
    TrainConfig,
    init_cam_model,
    init_mlp,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .render import composite, load_png, save_png
from .saliency import bright_quadrant_set, cam_localization_auroc, model_cam, save_cam, train_quadrant_detector

log = logging.getLogger("shapeattr")

RENDER_DEFAULTS = {"subdivision": 5, "image_size": 72, "azimuth": 20.0, "elevation": 15.0, "distance": 4.0, "fov": 40.0}

DEFAULTS = {
    "synth": {
        "mode": "sweep",  # sweep | objects
        "families": ["LpLow", "LpHigh", "Noise", "Oval"],
        "sweep_size": 20,
        "n_backgrounds": 10,
        "n_objects": 1500,
        "views": 4,
        "appearance": "plain",
        "random_light_fraction": 0.3,
        "object_families": ["LpLow", "LpHigh", "LpHigh", "Noise", "Noise", "Noise", "Oval"],
        "n_training_backgrounds": 200,
    },
    "train": {
        "data": None,
        "kind": "mlp",
        "hidden": [256, 128],
        "channels": [8, 16],
        "embed_dim": 32,
        "downsample": 2,
        "steps": 7000,
        "batch_size": 64,
        "views_per_object": 4,
        "margin": 0.1,
        "triplet_weight": 3.0,
        "lr_trunk": 0.005,
        "lr_attribute": 0.005,
        "lr_embedding": 0.2,
        "momentum": 0.9,
        "weight_decay": 0.02,
        "mining": "semi-hard",
        "crop_size": 32,
        "log_every": 10,
    },
    "probe": {"model": None, "families": ["LpLow", "LpHigh", "Noise", "Oval"], "sweep_size": 10, "n_backgrounds": 10},
    "cues": {"model": None, "sweep_size": 10, "n_backgrounds": 10, "attribute": "planarity"},
    "lighting": {
        "model": None,
        "n_setups": 100,
        "n_backgrounds": 10,
        "sweep_family": "LpHigh",
        "sweep_size": 8,
        "grayscale": False,
        "attribute": "planarity",
    },
    "texture": {"model": None, "sweep_size": 10, "n_backgrounds": 10, "attribute": "planarity"},
    "rotation": {"model": None, "n_objects": 20, "views": 8, "appearance": "varied", "n_training_backgrounds": 200},
    "cam": {"model": "toy:quadrant", "n_images": 8, "attribute": "planarity", "steps": 300},
    "cluster": {"matrix": None, "k": None, "sizes": [10, 10], "within": 0.9, "between": 0.1, "jitter": 0.05},
}
COMMON = {"seed": 0, "jobs": 1, "render": RENDER_DEFAULTS, "backgrounds_dir": None}

EXIT_CODES = {"invalid-argument": 2, "io-error": 3, "numeric-failure": 4}


class CliError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def derive_seed(root, component):
    """Per-component seed from the root seed and a component name."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(component.encode())])
    return int(ss.generate_state(1)[0] & 0x7FFFFFFF)


# ------------------------------------------------------------------ config


def _merge(base, update, path=""):
    out = copy.deepcopy(base)
    for k, v in update.items():
        if k not in base:
            raise CliError("invalid-argument", f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise CliError("invalid-argument", f"config key {path + k!r} must be a mapping")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    nested = value
    for k in reversed(keys):
        nested = {k: nested}
    return nested


def resolve_config(command, config_path=None, overrides=(), seed=None, jobs=None):
    cfg = {**copy.deepcopy(COMMON), **copy.deepcopy(DEFAULTS[command])}
    if config_path is not None:
        try:
            loaded = yaml.safe_load(Path(config_path).read_text()) or {}
        except OSError as exc:
            raise CliError("io-error", f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise CliError("invalid-argument", "config file must hold a mapping")
        cfg = _merge(cfg, loaded)
    for item in overrides:
        if "=" not in item:
            raise CliError("invalid-argument", f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        cfg = _merge(cfg, _set_path(cfg, key.strip(), yaml.safe_load(raw)))
    if seed is not None:
        cfg["seed"] = seed
    if jobs is not None:
        cfg["jobs"] = jobs
    return cfg


# ----------------------------------------------------------------- helpers


def _renderer(cfg):
    return ex.StimulusRenderer(**cfg["render"])


def _backgrounds(cfg, n):
    size = (cfg["render"]["image_size"],) * 2
    try:
        bgs = load_backgrounds(size, cfg["backgrounds_dir"])
    except FileNotFoundError as exc:
        raise CliError("io-error", str(exc)) from exc
    if not 1 <= n <= len(bgs):
        raise CliError("invalid-argument", f"n_backgrounds must be in [1, {len(bgs)}]")
    return bgs[:n]


def _attribute(name):
    if isinstance(name, int):
        return name
    key = str(name).lower().replace(" ", "_").replace("-", "_")
    if key in ATTRIBUTES:
        return ATTRIBUTES.index(key)
    for prefix in ("has_", ""):
        if prefix + key in ATTRIBUTES:
            return ATTRIBUTES.index(prefix + key)
    raise CliError("invalid-argument", f"unknown attribute {name!r}")


ORACLES = {
    "oracle:parameter": ex.ParameterOracle,
    "oracle:geometry": ex.GeometryOracle,
    "oracle:shading": ex.ShadingOracle,
    "oracle:contour": ex.ContourOracle,
    "oracle:constant": ex.ConstantPredictor,
}


def _load_params(ref):
    if ref is None:
        raise CliError("io-error", "no model given; run `shapeattr train` first and pass --set model=<out>/model")
    try:
        return load_checkpoint(ref)
    except FileNotFoundError as exc:
        raise CliError("io-error", f"{exc}; run `shapeattr train` to create it") from exc


def _predictor(ref, attribute=0, downsample_factor=2):
    if ref in ORACLES:
        return ORACLES[ref](attribute=attribute)
    return ex.ModelPredictor(_load_params(ref), downsample_factor)


def _write_summary(out, lines):
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def _fmt(x):
    return "nan" if x != x else f"{x:.4f}"


# ---------------------------------------------------------------- commands


def cmd_synth(cfg, out):
    renderer = _renderer(cfg)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    header = ["file", "family", "p", "background", "seed", "object_id", "view_cluster"] + [
        "label_" + a for a in ATTRIBUTES
    ]
    rows = []
    if cfg["mode"] == "sweep":
        bgs = _backgrounds(cfg, cfg["n_backgrounds"])
        jobs = []
        for fam in cfg["families"]:
            specs = parameter_sweep(fam, cfg["sweep_size"], derive_seed(cfg["seed"], "synth.noise") % 1000)
            for i, spec in enumerate(specs):
                jobs.append((fam, i, spec))
        with ThreadPoolExecutor(max_workers=max(1, int(cfg["jobs"]))) as pool:
            fgs = list(pool.map(lambda j: renderer.foreground(j[2]), jobs))
        for (fam, i, spec), fg in zip(jobs, fgs):
            y = ex.labels_for_spec(spec)
            for b, bg in enumerate(bgs):
                name = f"{fam}_{i:02d}_bg{b:02d}.png"
                save_png(img_dir / name, composite(fg, bg), with_mask=False)
                rows.append([name, fam, spec.p, b, spec.seed, len(rows), 0, *y.tolist()])
    elif cfg["mode"] == "objects":
        size = (cfg["render"]["image_size"],) * 2
        tb = training_backgrounds(cfg["n_training_backgrounds"], size)
        ds = ex.make_object_dataset(
            cfg["n_objects"],
            cfg["views"],
            tb,
            renderer,
            seed=derive_seed(cfg["seed"], "synth.objects"),
            families=tuple(cfg["object_families"]),
            appearance=cfg["appearance"],
            random_light_fraction=cfg["random_light_fraction"],
            downsample_factor=1,
        )
        for i in range(len(ds.images)):
            name = f"obj{ds.object_ids[i]:05d}_v{i % cfg['views']:02d}.png"
            save_png(img_dir / name, ds.images[i], with_mask=False)
            s = ds.specs[i]
            rows.append([name, s.family, s.p, -1, s.seed, int(ds.object_ids[i]), int(ds.view_cluster_ids[i]), *ds.labels[i].tolist()])
    else:
        raise CliError("invalid-argument", f"synth mode must be 'sweep' or 'objects', got {cfg['mode']!r}")
    write_csv(out / "manifest.csv", header, rows)
    _write_summary(out, [f"mode: {cfg['mode']}", f"images: {len(rows)}", "manifest: manifest.csv"])


def _read_manifest(data_dir):
    path = Path(data_dir) / "manifest.csv"
    if not path.exists():
        raise CliError("io-error", f"manifest not found at {path}; run `shapeattr synth` first")
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    label_cols = [h for h in header if h.startswith("label_")]
    if not label_cols:
        raise CliError("invalid-argument", "manifest carries no label columns")
    return rows, label_cols


def cmd_train(cfg, out):
    if cfg["data"] is None:
        raise CliError("io-error", "no training data given; pass --set data=<synth output dir>")
    rows, label_cols = _read_manifest(cfg["data"])
    f = int(cfg["downsample"])
    try:
        images = np.stack([ex.downsample(load_png(Path(cfg["data"]) / "images" / r["file"]).rgb, f) for r in rows])
    except FileNotFoundError as exc:
        raise CliError("io-error", str(exc)) from exc
    labels = np.array([[int(r[c]) for c in label_cols] for r in rows])
    oids = np.array([int(r["object_id"]) for r in rows])
    shape = (cfg["crop_size"], cfg["crop_size"], 3)
    init_seed = derive_seed(cfg["seed"], "train.init")
    if cfg["kind"] == "mlp":
        params = init_mlp(shape, tuple(cfg["hidden"]), labels.shape[1], cfg["embed_dim"], init_seed)
    elif cfg["kind"] == "cam":
        params = init_cam_model(shape, tuple(cfg["channels"]), labels.shape[1], cfg["embed_dim"], init_seed)
    else:
        raise CliError("invalid-argument", f"kind must be 'mlp' or 'cam', got {cfg['kind']!r}")
    tc = TrainConfig(
        margin=cfg["margin"],
        triplet_weight=cfg["triplet_weight"],
        lr_trunk=cfg["lr_trunk"],
        lr_attribute=cfg["lr_attribute"],
        lr_embedding=cfg["lr_embedding"],
        momentum=cfg["momentum"],
        batch_size=cfg["batch_size"],
        views_per_object=cfg["views_per_object"],
        steps=cfg["steps"],
        seed=derive_seed(cfg["seed"], "train.sgd"),
        mining=cfg["mining"],
        crop_size=cfg["crop_size"],
        log_every=cfg["log_every"],
        weight_decay=cfg["weight_decay"],
    )
    curve = []

    def keep(step, info):
        curve.append((step, info["attribute_loss"], info["triplet_loss"], info["combined"]))

    try:
        params, _ = train(params, images, labels, oids, tc, callback=keep)
    finally:
        write_csv(out / "curves.csv", ["step", "attribute_loss", "triplet_loss", "combined"], curve)
    save_checkpoint(params, out / "model")
    last = curve[-1] if curve else (0, float("nan"), float("nan"), float("nan"))
    _write_summary(
        out,
        [
            f"images: {len(images)}  objects: {len(set(oids.tolist()))}",
            f"steps: {tc.steps}  kind: {params.kind}  parameters: {params.n_parameters}",
            f"final attribute loss: {_fmt(last[1])}",
            f"final triplet loss: {_fmt(last[2])}",
            f"final combined loss: {_fmt(last[3])}",
            "checkpoint: model.bin / model.manifest.txt",
        ],
    )


def cmd_probe(cfg, out):
    bgs = _backgrounds(cfg, cfg["n_backgrounds"])
    renderer = _renderer(cfg)
    rows, lines = [], ["family,attribute,mean_r_s,pooled_r_s,pooled_minus_mean,flagged"]
    for fam in cfg["families"]:
        attr = ex.FAMILY_ATTRIBUTE[fam]
        rep = ex.run_sweep(_predictor(cfg["model"], attr), fam, cfg["sweep_size"], bgs, attr, renderer)
        for c in rep.curves:
            rows += [[fam, c.background_id, p, r] for p, r in zip(c.params, c.responses)]
        rows += [[fam, "mean", p, r] for p, r in zip(rep.params, rep.mean_curve)]
        lines.append(
            f"{fam},{ATTRIBUTES[attr]},{_fmt(rep.mean_r_s)},{_fmt(rep.pooled_r_s)},{_fmt(rep.pooled_minus_mean)},{int(rep.flagged)}"
        )
    write_csv(out / "probe.csv", ["family", "background", "p", "response"], rows)
    _write_summary(out, lines)


def cmd_cues(cfg, out):
    attr = _attribute(cfg["attribute"])
    table = ex.conflicting_cues_table(
        _predictor(cfg["model"], attr), _backgrounds(cfg, cfg["n_backgrounds"]), _renderer(cfg), cfg["sweep_size"], attr
    )
    header, rows = table.rows()
    write_csv(out / "cues.csv", header, rows)
    lines = [f"{h}: r_s={_fmt(r)} Range={_fmt(g)}" for h, r, g in zip(header[1:], table.r_s, table.ranges)]
    lines.append(f"largest Range: {header[1 + int(np.argmax(table.ranges))]}")
    _write_summary(out, lines)


def cmd_lighting(cfg, out):
    attr = _attribute(cfg["attribute"])
    rep = ex.lighting_sensitivity(
        _predictor(cfg["model"], attr),
        _backgrounds(cfg, cfg["n_backgrounds"]),
        cfg["n_setups"],
        _renderer(cfg),
        cfg["sweep_family"],
        cfg["sweep_size"],
        attr,
        seed=derive_seed(cfg["seed"], "lighting.setups"),
        grayscale=cfg["grayscale"],
    )
    rows = [[l, b, rep.r_s[l, b]] for l in range(rep.r_s.shape[0]) for b in range(rep.r_s.shape[1])]
    write_csv(out / "lighting.csv", ["lighting", "background", "r_s"], rows)
    lines = [
        f"mean r_s over lighting x background: {_fmt(rep.mean_r_s)}",
        "std across lightings per stimulus: " + " ".join(_fmt(s) for s in rep.std_per_stimulus),
        "std across lightings: " + " ".join(f"{k}={_fmt(v)}" for k, v in rep.anchor_std.items()),
        f"catastrophic errors, identical lighting: {rep.identical_errors}/{rep.identical_total}",
        f"catastrophic errors, independent lighting: {rep.independent_errors}/{rep.independent_total}",
    ]
    _write_summary(out, lines)


def cmd_texture(cfg, out):
    attr = _attribute(cfg["attribute"])
    rep = ex.texture_sensitivity(
        _predictor(cfg["model"], attr), _backgrounds(cfg, cfg["n_backgrounds"]), _renderer(cfg), cfg["sweep_size"], attr,
        texture_seed=derive_seed(cfg["seed"], "texture.seed") % 100000,
    )
    rows = []
    lines = []
    for kind, r in rep.reports.items():
        rows += [[kind, p, m, s] for p, m, s in zip(r.params, r.mean_curve, r.centered_std)]
        lines.append(f"{kind}: mean r_s={_fmt(r.mean_r_s)}")
    lines.append(f"mean r_s across textures: {_fmt(rep.mean_r_s)}")
    write_csv(out / "texture.csv", ["texture", "p", "mean_response", "std_response"], rows)
    _write_summary(out, lines)


def cmd_rotation(cfg, out):
    size = (cfg["render"]["image_size"],) * 2
    renderer = _renderer(cfg)
    tb = training_backgrounds(cfg["n_training_backgrounds"], size)
    ds = ex.make_object_dataset(
        cfg["n_objects"],
        cfg["views"],
        tb,
        renderer,
        seed=derive_seed(cfg["seed"], "rotation.heldout"),
        appearance=cfg["appearance"],
        downsample_factor=1,
        object_id_offset=10**6,
    )
    if cfg["model"] == "oracle:perfect":
        emb = np.eye(cfg["n_objects"])[ds.object_ids - 10**6]
        factor = 2
    else:
        pred = _predictor(cfg["model"])
        if not isinstance(pred, ex.ModelPredictor):
            raise CliError("invalid-argument", "rotation needs a checkpoint or oracle:perfect")
        emb = pred.embed(ds.images)
        factor = pred.factor
    baseline = np.stack([ex.downsample(im, factor).reshape(-1) for im in ds.images])
    rows, lines = [], []
    for setting in ("Easy", "Hard"):
        r = ex.mental_rotation_eval(emb, ds.object_ids, ds.view_cluster_ids, setting, baseline)
        rows.append([setting, r.auroc, r.eer, r.positive_fraction, r.n_positives, r.n_negatives])
        lines.append(f"{setting}: AUROC={_fmt(r.auroc)} EER={_fmt(r.eer)} positives={r.n_positives} negatives={r.n_negatives}")
    write_csv(out / "rotation.csv", ["setting", "auroc", "eer", "positive_fraction", "n_positives", "n_negatives"], rows)
    _write_summary(out, lines)


def cmd_cam(cfg, out):
    rows = []
    if cfg["model"] == "toy:quadrant":
        params, _ = train_quadrant_detector(steps=cfg["steps"], seed=derive_seed(cfg["seed"], "cam.train") % 100000)
        imgs, labels, masks = bright_quadrant_set(2 * cfg["n_images"], params.input_shape[0], 1, derive_seed(cfg["seed"], "cam.test"))
        keep = np.nonzero(labels[:, 0] == 1)[0][: cfg["n_images"]]
        items = [(imgs[i], masks[i]) for i in keep]
        attr = 0
    else:
        params = _load_params(cfg["model"])
        if params.kind != "cam":
            raise CliError("invalid-argument", "cam needs a conv (cam) checkpoint or toy:quadrant")
        attr = _attribute(cfg["attribute"])
        renderer = _renderer(cfg)
        bg = _backgrounds(cfg, 1)[0]
        crop = params.input_shape[0]
        factor = max(1, cfg["render"]["image_size"] // crop)
        items = []
        for spec in parameter_sweep("LpHigh", cfg["n_images"]):
            im = composite(renderer.foreground(spec), bg)
            rgb = ex.downsample(im.rgb, factor)
            m = ex.downsample(np.repeat(im.mask[..., None], 3, axis=2).astype(float), factor)[..., 0] > 0.5
            o = (rgb.shape[0] - crop) // 2
            items.append((rgb[o : o + crop, o : o + crop], m[o : o + crop, o : o + crop]))
    for i, (img, mask) in enumerate(items):
        cmap = model_cam(params, img, attr)
        save_cam(out / f"cam_{i:02d}", cmap)
        try:
            score = cam_localization_auroc(cmap, mask)
        except UndefinedMetric:
            score = float("nan")
        rows.append([i, attr, score])
    write_csv(out / "cam.csv", ["image", "attribute", "localization_auroc"], rows)
    scores = np.array([r[2] for r in rows], dtype=float)
    _write_summary(out, [f"images: {len(rows)}", f"mean localization AUROC: {_fmt(float(np.nanmean(scores)))}"])


def cmd_cluster(cfg, out):
    if cfg["matrix"] is not None:
        try:
            S = read_matrix(cfg["matrix"])
        except OSError as exc:
            raise CliError("io-error", f"cannot read matrix {cfg['matrix']}: {exc}") from exc
        truth = None
    else:
        S, truth = planted_partition(
            tuple(cfg["sizes"]), cfg["within"], cfg["between"], cfg["jitter"], derive_seed(cfg["seed"], "cluster.planted")
        )
    k = cfg["k"] if cfg["k"] is not None else suggest_k(S)
    assignment = spectral_cluster(S, int(k), seed=derive_seed(cfg["seed"], "cluster.kmeans"))
    write_assignment(out / "assignment.csv", assignment)
    spectrum, _ = laplacian_spectrum(S)
    write_csv(out / "spectrum.csv", ["index", "eigenvalue"], list(enumerate(spectrum.tolist())))
    lines = [f"n: {len(S)}", f"k: {assignment.k}", "cluster sizes: " + " ".join(str(int(c)) for c in np.bincount(assignment.labels))]
    if truth is not None:
        from .cluster import agreement

        lines.append(f"agreement with planted partition: {_fmt(agreement(assignment.labels, truth))}")
    _write_summary(out, lines)


COMMANDS = {
    "synth": (cmd_synth, "render sweep stimuli or multi-view training objects with labels"),
    "train": (cmd_train, "train the attribute/embedding model on a synth output directory"),
    "probe": (cmd_probe, "response curves and rank correlations over parameter sweeps"),
    "cues": (cmd_cues, "conflicting contour/shading cue table"),
    "lighting": (cmd_lighting, "sensitivity to random lighting setups"),
    "texture": (cmd_texture, "sensitivity to surface texture"),
    "rotation": (cmd_rotation, "same-object pair verification across viewpoints"),
    "cam": (cmd_cam, "class activation maps and their localization AUROC"),
    "cluster": (cmd_cluster, "spectral clustering of a similarity matrix"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="shapeattr", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="YAML file with config overrides")
        p.add_argument("--seed", type=int, help="root seed")
        p.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        p.add_argument("--jobs", type=int, help="worker threads for rendering")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return parser


def _error_kind(exc):
    if isinstance(exc, CliError):
        return exc.kind
    if isinstance(exc, (OSError,)):
        return "io-error"
    if isinstance(exc, NumericFailure):
        return "numeric-failure"
    if isinstance(exc, (InvalidArgument, PreconditionViolation, DegenerateStimulus, UndefinedMetric, ValueError, KeyError, TypeError)):
        return "invalid-argument"
    return "internal-error"


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args.config, args.overrides, args.seed, args.jobs)
        if args.print_config:
            print(yaml.safe_dump(cfg, sort_keys=True), end="")
            return 0
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))
        handler = logging.FileHandler(out / "run.log", mode="w")
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(handler)
        log.setLevel(logging.INFO)
        try:
            t0 = time.perf_counter()
            log.info("start %s seed=%s", args.command, cfg["seed"])
            COMMANDS[args.command][0](cfg, out)
            log.info("done %s in %.1fs", args.command, time.perf_counter() - t0)
        finally:
            log.removeHandler(handler)
            handler.close()
    except Exception as exc:  # noqa: BLE001 - surfaced as a structured error line
        kind = _error_kind(exc)
        print(json.dumps({"error": kind, "command": args.command, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES.get(kind, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
