"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 runtime failure (bad files,
mismatched inputs), 3 quality gate missed (gradcheck or --min-psnr).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import __version__
from .backward import fd_check
from .field import ScalingMode
from .harmonics import SH_C0
from .initialize import init_scene
from .losses import psnr, ssim
from .rasterize import (EXACT_SETTINGS, RenderSettings, prepare_view, render,
                        render_reference)
from .sceneio import (load_bundle, load_cameras, load_checkpoint, load_png,
                      save_cameras, save_checkpoint, save_png, write_ply)
from .synth import (TARGET_KINDS, flat_camera, flat_scene, make_scene,
                    perturb_scene, render_dataset, ring_cameras,
                    seed_scene_from_target, target_image)
from .trainer import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_QUALITY = 3

SCALING_CHOICES = tuple(m.value for m in ScalingMode)

# These TrainConfig fields get dedicated or merged flags below.
_SPECIAL_CONFIG_FIELDS = {"total_iterations", "seed", "scaling_mode"}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; this tool reserves 2 for runtime
    # failures, so usage problems exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_scaling(parser, with_default=True):
    parser.add_argument("--scaling-mode", choices=SCALING_CHOICES,
                        default="depth" if with_default else None,
                        help="perspective scaling of delta/sigma")


def _add_config_flags(parser):
    """One flag per training option, defaulting to unset."""
    for f in dataclass_fields(TrainConfig):
        if f.name in _SPECIAL_CONFIG_FIELDS:
            continue
        flag = "--" + f.name.replace("_", "-")
        kind = int if isinstance(f.default, int) else float
        parser.add_argument(flag, type=kind, default=None, dest=f.name)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convexsplat",
                     description="Differentiable smooth-convex splatting")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--primitives", type=int, default=5)
    p.add_argument("--cameras", type=int, default=10)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--k-points", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-every", type=int, default=0,
                   help="hold out every Nth view (0: keep all for training)")
    _add_scaling(p)

    p = sub.add_parser("train", help="optimize a scene from a dataset directory")
    p.add_argument("--scene", required=True, help="dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value file mirroring training options")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single training option")
    p.add_argument("--iterations", type=int, help="alias for --total-iterations")
    p.add_argument("--seed", type=int)
    _add_scaling(p, with_default=False)
    _add_config_flags(p)
    p.add_argument("--k-points", type=int, default=6)
    p.add_argument("--sh-degree", type=int, choices=(0, 1, 2, 3), default=3)
    p.add_argument("--precision", type=int, choices=(16, 32), default=32)
    p.add_argument("--random-init", action="store_true",
                   help="ignore dataset points and start from a random cloud")
    p.add_argument("--n-init-points", type=int, default=100)

    p = sub.add_parser("render", help="render a checkpoint from given cameras")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cameras", required=True, help="camera JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--renderer", choices=("tile", "reference"), default="tile")
    p.add_argument("--sh-degree", type=int, choices=(0, 1, 2, 3), default=3)
    _add_scaling(p)

    p = sub.add_parser("eval", help="compare rendered images against targets")
    p.add_argument("--renders", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--out", help="write per-image metrics CSV here")
    p.add_argument("--min-psnr", type=float,
                   help="exit 3 if mean PSNR falls below this")

    p = sub.add_parser("fit2d", help="fit primitives to a flat procedural target")
    p.add_argument("--target", choices=TARGET_KINDS, default="rectangle")
    p.add_argument("--target-image", help="fit a PNG instead of a procedural target")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--num-primitives", type=int, default=4)
    p.add_argument("--k-points", type=int, default=6)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for target/final images and metrics")
    p.add_argument("--snapshot-every", type=int, default=0,
                   help="write intermediate renders every N iterations")
    p.add_argument("--overlay", action="store_true",
                   help="also write the final render with hull lines and points")
    p.add_argument("--min-psnr", type=float,
                   help="exit 3 if the final PSNR falls below this")

    p = sub.add_parser("gradcheck",
                       help="compare analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--primitives", type=int, default=3)
    p.add_argument("--size", type=int, default=48)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    _add_scaling(p)

    return parser


# --------------------------------------------------------------------------

def _scene_to_pointcloud(scene):
    points = np.stack([c.center() for c in scene.primitives])
    colors = np.clip(0.5 + SH_C0 * np.stack([c.sh[0] for c in scene.primitives]),
                     0.0, 1.0)
    return points, colors


def cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    scene = make_scene(args.primitives, args.k_points, args.seed)
    cameras = ring_cameras(args.cameras, size=args.size)
    mode = ScalingMode(args.scaling_mode)
    images = render_dataset(scene, cameras, mode)
    for cam, img in zip(cameras, images):
        cam.image_name = f"images/{cam.image_name}"
        save_png(out / cam.image_name, img)
    points, colors = _scene_to_pointcloud(scene)
    write_ply(out / "points.ply", points, colors)
    save_checkpoint(out / "gt.3dcs", scene)
    indices = list(range(len(cameras)))
    test = indices[::args.test_every] if args.test_every else []
    train_idx = [i for i in indices if i not in test]
    save_cameras(out / "cameras.json", cameras, points_file="points.ply",
                 train=train_idx, test=test)
    print(f"wrote {len(cameras)} views, {len(scene.primitives)} primitives -> {out}")
    return EXIT_OK


def _parse_config_file(path) -> dict:
    mapping = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _train_config(args) -> TrainConfig:
    mapping = _parse_config_file(args.config) if args.config else {}
    for f in dataclass_fields(TrainConfig):
        if f.name in _SPECIAL_CONFIG_FIELDS:
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            mapping[f.name] = value
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    if args.iterations is not None:
        mapping["total_iterations"] = args.iterations
    if args.seed is not None:
        mapping["seed"] = args.seed
    if args.scaling_mode is not None:
        mapping["scaling_mode"] = args.scaling_mode
    return TrainConfig.from_mapping(mapping)


def cmd_train(args) -> int:
    config = _train_config(args)
    bundle = load_bundle(args.scene)
    views = bundle.views(bundle.train_indices)
    cameras = [cam for cam, _ in views]
    if bundle.points is None or args.random_init:
        rng = np.random.default_rng(config.seed)
        centers = np.stack([cam.center() for cam in cameras])
        middle = centers.mean(axis=0)
        spread = max(np.linalg.norm(centers - middle, axis=1).max(), 1e-6)
        direction = rng.normal(size=(args.n_init_points, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        points = middle + 0.25 * spread * direction \
            * np.cbrt(rng.random(args.n_init_points))[:, None]
        colors = None
    else:
        points, colors = bundle.points, bundle.colors
    scene = init_scene(points, colors, cameras, points_per_convex=args.k_points)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    settings = RenderSettings(sh_degree=args.sh_degree)
    result = train(scene, views, config, settings,
                   metrics_path=out / "metrics.csv")
    save_checkpoint(out / "model.3dcs", result.scene, precision=args.precision)
    print(f"final: {len(result.scene.primitives)} primitives, "
          f"train PSNR {result.final_psnr:.2f} dB")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = load_checkpoint(args.checkpoint)
    cameras = load_cameras(args.cameras)
    mode = ScalingMode(args.scaling_mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    settings = RenderSettings(sh_degree=args.sh_degree)
    for i, cam in enumerate(cameras):
        if args.renderer == "reference":
            image = render_reference(scene, cam, mode).image
        else:
            image = render(scene, cam, mode, settings).image
        name = Path(cam.image_name).name if cam.image_name else f"render_{i:03d}.png"
        save_png(out / name, image)
    print(f"rendered {len(cameras)} views -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    renders = sorted(Path(args.renders).glob("*.png"))
    targets = sorted(Path(args.targets).glob("*.png"))
    if [p.name for p in renders] != [p.name for p in targets]:
        raise ValueError(
            f"render/target mismatch: {len(renders)} renders vs "
            f"{len(targets)} targets (filenames must correspond)"
        )
    if not renders:
        raise ValueError("no PNG files to evaluate")
    rows = []
    for rp, tp in zip(renders, targets):
        img, target = load_png(rp), load_png(tp)
        if img.shape != target.shape:
            raise ValueError(f"{rp.name}: size {img.shape} != target {target.shape}")
        rows.append((rp.name, psnr(img, target), ssim(img, target)))
        print(f"{rp.name}  psnr {rows[-1][1]:.3f}  ssim {rows[-1][2]:.4f}")
    mean_psnr = float(np.mean([r[1] for r in rows]))
    mean_ssim = float(np.mean([r[2] for r in rows]))
    print(f"mean  psnr {mean_psnr:.3f}  ssim {mean_ssim:.4f}")
    if args.out:
        with open(args.out, "w") as f:
            f.write("image,psnr,ssim\n")
            for name, p_val, s_val in rows:
                f.write(f"{name},{p_val:.6f},{s_val:.6f}\n")
            f.write(f"mean,{mean_psnr:.6f},{mean_ssim:.6f}\n")
    if args.min_psnr is not None and mean_psnr < args.min_psnr:
        print(f"mean PSNR {mean_psnr:.3f} below bound {args.min_psnr:.3f}",
              file=sys.stderr)
        return EXIT_QUALITY
    return EXIT_OK


def _draw_overlay(image, scene, cam, mode):
    """Final render with red hull edges and black defining points."""
    out = image.copy()
    height, width = out.shape[:2]
    for vp in prepare_view(scene, cam, mode, EXACT_SETTINGS):
        hull = vp.pc.pixels[vp.pc.hull_indices]
        closed = np.vstack([hull, hull[:1]])
        for a, b in zip(closed[:-1], closed[1:]):
            steps = max(int(np.hypot(*(b - a)) * 2), 2)
            for t in np.linspace(0.0, 1.0, steps):
                x, y = a + t * (b - a)
                ix, iy = int(round(x - 0.5)), int(round(y - 0.5))
                if 0 <= ix < width and 0 <= iy < height:
                    out[iy, ix] = (1.0, 0.0, 0.0)
        for x, y in vp.pc.pixels:
            ix, iy = int(round(x - 0.5)), int(round(y - 0.5))
            if 0 <= ix < width and 0 <= iy < height:
                out[max(iy - 1, 0):iy + 2, max(ix - 1, 0):ix + 2] = 0.0
    return out


def cmd_fit2d(args) -> int:
    if args.snapshot_every and not args.out:
        raise ValueError("--snapshot-every requires --out")
    if args.target_image:
        target = load_png(args.target_image)
        if target.shape[0] != target.shape[1]:
            raise ValueError("fit2d targets must be square")
        size = target.shape[0]
    else:
        target = target_image(args.target, args.size)
        size = args.size
    cam = flat_camera(size)
    mode = ScalingMode.NONE
    scene = flat_scene(size, args.num_primitives, args.k_points, args.seed)
    seed_scene_from_target(scene, target)
    # flat scenes live in pixel units, so position steps scale with the
    # image; sharpness learns faster since depth never tempers it here
    config = TrainConfig(
        total_iterations=args.iterations,
        densify_start=args.iterations + 1,   # flat fits keep a fixed set
        scaling_mode=mode,
        seed=args.seed,
        lr_position_init=5e-4 * size,
        lr_position_final=5e-6 * size,
        lr_delta=0.015,
        lr_sigma=0.0135,
    )
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    callbacks = []
    if args.snapshot_every:
        def snapshot(iteration, current, _row):
            if iteration % args.snapshot_every == 0:
                img = render(current, cam, mode, RenderSettings()).image
                save_png(out / f"snap_{iteration:05d}.png", img)
        callbacks.append(snapshot)

    result = train(scene, [(cam, target)], config,
                   metrics_path=None if out is None else out / "metrics.csv",
                   callbacks=callbacks)
    final = render(result.scene, cam, mode, RenderSettings()).image
    value = psnr(final, target)
    print(f"fit2d {args.target}: PSNR {value:.2f} dB "
          f"({args.num_primitives} primitives, {args.iterations} iterations)")
    if out is not None:
        save_png(out / "target.png", target)
        save_png(out / "final.png", final)
        if args.overlay:
            save_png(out / "overlay.png",
                     _draw_overlay(final, result.scene, cam, mode))
    if args.min_psnr is not None and value < args.min_psnr:
        print(f"PSNR {value:.2f} below bound {args.min_psnr:.2f}", file=sys.stderr)
        return EXIT_QUALITY
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    scene = make_scene(args.primitives, seed=args.seed, spread=0.8)
    cam = ring_cameras(1, size=args.size)[0]
    mode = ScalingMode(args.scaling_mode)
    target = render(perturb_scene(scene, seed=args.seed + 1), cam, mode,
                    RenderSettings()).image
    report = fd_check(scene, cam, target, mode,
                      step=args.step, tolerance=args.tolerance)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_QUALITY


_HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "render": cmd_render,
    "eval": cmd_eval,
    "fit2d": cmd_fit2d,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"convexsplat {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
