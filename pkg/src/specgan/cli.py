"""Command-line entry point: encode, decode, train, generate, eval.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .cascade_gan import (
    GeneratorStack,
    NumericalAbort,
    SmvDataset,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    synthesize_smv,
    train,
)
from .datasets import box_meshes, encode_meshes
from .feature_net import FeatureExtractor, PretrainError, pretrain
from .fileio import MeshFormatError, read_cloud, read_mesh, write_cloud
from .mesh_sampler import (
    DegenerateMeshError,
    NON_POLAR_MISS_FRACTION,
    grid_to_pointcloud,
    is_polar,
    normalize_mesh,
    raycast_sample,
)
from .metrics import evaluate
from .neural import load_mlp, save_mlp
from .sh_core import dh_grid, forward_sht, inverse_sht, load_smv, save_smv

log = logging.getLogger("specgan")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

MESH_SUFFIXES = (".obj", ".off")
CLOUD_SUFFIXES = (".ply", ".xyz")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# -- helpers ------------------------------------------------------------------

def _files(path, suffixes):
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise DataError(f"{path}: no such file or directory")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in suffixes)
    if not files:
        raise DataError(f"{path}: no {'/'.join(suffixes)} files found")
    return files


def _decode(smv):
    return grid_to_pointcloud(inverse_sht(smv, dh_grid(smv.max_degree)))


def _load_config(args):
    cfg = TrainConfig()
    try:
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.is_file():
                raise ConfigError(f"{path}: config file not found")
            cfg = TrainConfig.from_text(path.read_text())
        overrides = {}
        if getattr(args, "bandlimit", None) is not None:
            overrides["bandlimit"] = args.bandlimit
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        if overrides:
            vals = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
            vals.update(overrides)
            cfg = TrainConfig(**vals)
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


class CsvLog:
    """Appends ``phase,iter,net,loss`` rows."""

    def __init__(self, path, append=False):
        new = not (append and Path(path).exists())
        self._fh = open(path, "a" if append else "w", newline="")
        self._writer = csv.writer(self._fh)
        if new:
            self._writer.writerow(["phase", "iter", "net", "loss"])

    def __call__(self, phase, it, net, loss):
        self._writer.writerow([phase, it, net, repr(float(loss))])

    def close(self):
        self._fh.close()


# -- commands -----------------------------------------------------------------

def cmd_encode(args):
    meshes = _files(args.input, MESH_SUFFIXES)
    if args.bandlimit is None or args.bandlimit < 1:
        raise ConfigError("--bandlimit must be a positive integer")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, written = [], 0
    for path in meshes:
        try:
            mesh = normalize_mesh(read_mesh(path))
        except (MeshFormatError, DegenerateMeshError, OSError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            rows.append((path.name, "", "unreadable"))
            continue
        grid = raycast_sample(mesh, args.bandlimit)
        rate = grid.misses / grid.radii.size
        if not is_polar(grid):
            log.warning("skipping %s: %.1f%% rays missed (limit %.0f%%)",
                        path.name, 100 * rate, 100 * NON_POLAR_MISS_FRACTION)
            rows.append((path.name, f"{rate:.6f}", "non-polar"))
            continue
        save_smv(forward_sht(grid), out / f"{path.stem}.smv")
        rows.append((path.name, f"{rate:.6f}", "ok"))
        written += 1
    with open(out / "miss_report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mesh", "miss_rate", "status"])
        w.writerows(rows)
    print(f"encoded {written} of {len(meshes)} meshes into {out}")
    if written == 0:
        raise DataError("no mesh could be encoded")
    return EXIT_OK


def cmd_decode(args):
    files = _files(args.input, (".smv",))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in files:
        try:
            smv = load_smv(path)
        except (ValueError, OSError) as exc:
            raise DataError(f"{path}: {exc}") from exc
        write_cloud(_decode(smv), out / f"{path.stem}.{args.format}", args.format)
    print(f"decoded {len(files)} files into {out}")
    return EXIT_OK


def _load_smvs(directory):
    smvs = []
    for path in _files(directory, (".smv",)):
        try:
            smvs.append(load_smv(path))
        except (ValueError, OSError) as exc:
            raise DataError(f"{path}: {exc}") from exc
    return smvs


def _extractor(args, cfg, real_clouds, out):
    if args.extractor:
        path = Path(args.extractor)
        if not path.is_file():
            raise DataError(f"{path}: feature network not found")
        return FeatureExtractor(mlp=load_mlp(path)).freeze()
    # contrast class for the classification pretext task: boxes of similar size
    rng = np.random.default_rng([cfg.seed, 1])
    boxes, _ = box_meshes(len(real_clouds), rng)
    _, box_clouds = encode_meshes(boxes, cfg.bandlimit)
    fe = FeatureExtractor(rng=np.random.default_rng([cfg.seed, 2]))
    labels = [0] * len(real_clouds) + [1] * len(box_clouds)
    acc = pretrain(fe, list(real_clouds) + box_clouds, labels, np.random.default_rng([cfg.seed, 3]))
    log.info("feature network pretrained to %.3f accuracy", acc)
    save_mlp(fe.mlp, out / "feature.nnw")
    return fe


def cmd_train(args):
    out = Path(args.out)
    if args.resume:
        if not (out / "progress.json").is_file():
            raise DataError(f"{out}: no checkpoint to resume from")
        cfg = _load_config(args) if (args.config or args.bandlimit or args.seed is not None) else None
        try:
            stack = load_checkpoint(out, cfg)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg = stack.config
    else:
        cfg = _load_config(args)
        stack = None
    smvs = _load_smvs(args.data)
    if any(s.max_degree != cfg.bandlimit for s in smvs):
        raise ConfigError(f"dataset SMVs do not all have bandlimit {cfg.bandlimit}")
    out.mkdir(parents=True, exist_ok=True)
    if stack is None:
        dataset = SmvDataset.from_smvs(smvs)
        stack = GeneratorStack(cfg, dataset.scale)
    else:
        dataset = SmvDataset.from_smvs(smvs, stack.scale)
    extractor, real_clouds = None, None
    if cfg.reg_iters > 0:
        real_clouds = [_decode(s) for s in smvs]
        if any(len(c.points) == 0 for c in real_clouds):
            raise DataError("a training SMV decodes to an empty cloud")
        feature_file = out / "feature.nnw"
        if args.resume and feature_file.is_file() and not args.extractor:
            extractor = FeatureExtractor(mlp=load_mlp(feature_file)).freeze()
        else:
            try:
                extractor = _extractor(args, cfg, real_clouds, out)
            except PretrainError as exc:
                raise DataError(str(exc)) from exc
    logger = CsvLog(out / "train_log.csv", append=args.resume)
    try:
        train(stack, dataset, extractor, real_clouds, logger, out)
    finally:
        logger.close()
    save_checkpoint(stack, out)
    print(f"trained {stack.completed_outer} outer iterations; checkpoint in {out}")
    return EXIT_OK


def cmd_generate(args):
    ckpt = Path(args.checkpoint)
    if not (ckpt / "config.txt").is_file():
        raise DataError(f"{ckpt}: not a checkpoint directory")
    try:
        stack = load_checkpoint(ckpt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.count < 0:
        raise ConfigError("--count must be non-negative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = stack.config.seed if args.seed is None else args.seed
    smvs = synthesize_smv(stack, args.count, seed=seed, forward_only=args.forward_only) if args.count else []
    for i, smv in enumerate(smvs):
        save_smv(smv, out / f"sample_{i:05d}.smv")
        write_cloud(_decode(smv), out / f"sample_{i:05d}.{args.format}", args.format)
    print(f"generated {len(smvs)} samples into {out}")
    return EXIT_OK


def _load_clouds(directory):
    """Point clouds from PLY/XYZ files, or decoded from SMV files when no clouds exist."""
    path = Path(directory)
    if path.is_dir() and not any(p.suffix.lower() in CLOUD_SUFFIXES for p in path.iterdir()):
        return [_decode(s) for s in _load_smvs(path)]
    clouds = []
    for f in _files(path, CLOUD_SUFFIXES):
        try:
            clouds.append(read_cloud(f))
        except (MeshFormatError, ValueError, OSError) as exc:
            raise DataError(f"{f}: {exc}") from exc
    return clouds


def cmd_eval(args):
    generated = _load_clouds(args.generated)
    reference = _load_clouds(args.reference)
    if any(len(c.points) == 0 for c in reference):
        raise DataError("reference set contains an empty cloud")
    seed = 0 if args.seed is None else args.seed
    report = evaluate(generated, reference, seed=seed)
    text = report.to_text()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="specgan", description="Spectral shape encoding and cascaded GAN training.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="meshes -> moment vectors")
    p.add_argument("input", help="mesh file or directory of OBJ/OFF meshes")
    p.add_argument("--bandlimit", "-M", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="moment vectors -> point clouds")
    p.add_argument("input", help=".smv file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("ply", "xyz"), default="ply")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train the generator cascade")
    p.add_argument("data", help="directory of training .smv files")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--config")
    p.add_argument("--bandlimit", "-M", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--extractor", help="frozen feature network (.nnw); pretrained if omitted")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample moment vectors from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("ply", "xyz"), default="ply")
    p.add_argument("--forward-only", action="store_true", help="assemble from forward-pass generators only")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="MMD-CD and MMD-EMD of generated vs reference clouds")
    p.add_argument("generated")
    p.add_argument("reference")
    p.add_argument("--out", help="report file")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
