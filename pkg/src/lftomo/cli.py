"""Command line front end: phantom, render, reconstruct, compare, selftest."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .camera import CameraConfig
from .config import GridConfig, PhantomConfig, ReconConfig, load_json
from .lightfield import read_raw, write_raw
from .metrics import nrmse, nsd
from .phantom import PhantomSpec, pronged_phantom, rasterize
from .recon import NumericalError, ReconProblem, absorb_weights, balanced_weights, fista_run
from .system import build_system
from .transport import inject_kernel_fault, serial_execution
from .volume import VoxelVolume, load_volume, save_volume

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

log = logging.getLogger("lftomo")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit min-max scaled preview."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape, np.uint8) if hi <= lo else \
        np.round(255 * (img - lo) / (hi - lo)).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(scaled.tobytes())


def save_image(path, image: np.ndarray, extra: dict | None = None) -> None:
    meta = {"n_s": int(image.shape[1]), "n_t": int(image.shape[0])}
    meta.update(extra or {})
    write_raw(path, image, meta)


def load_image(path) -> np.ndarray:
    data, meta = read_raw(path)
    return data.reshape(meta["n_t"], meta["n_s"])


def load_array(path) -> np.ndarray:
    """Image or volume file, shaped by its sidecar."""
    data, meta = read_raw(path)
    if "n_z" in meta:
        return data.reshape(meta["n_z"], meta["n_y"], meta["n_x"])
    return data.reshape(meta["n_t"], meta["n_s"])


# --- commands ---------------------------------------------------------------------

def cmd_phantom(args) -> int:
    cfg = PhantomConfig.from_dict(load_json(args.config)) if args.config else PhantomConfig()
    g = cfg.grid
    if cfg.shapes is None:
        vol = pronged_phantom(g.shape_xyz, g.delta, cfg.supersample)
    else:
        vol = rasterize(PhantomSpec.from_dict({"shapes": cfg.shapes}), g.shape_xyz, g.delta,
                        cfg.supersample)
    save_volume(args.out, vol)
    print(json.dumps({"out": str(args.out), "shape_xyz": vol.shape_xyz,
                      "sum": float(vol.data.sum(dtype=np.float64))}))
    return EXIT_OK


def cmd_render(args) -> int:
    cam = CameraConfig.from_dict(load_json(args.config))
    vol = load_volume(args.volume)
    op = build_system(cam, vol.shape_xyz, vol.delta)
    image = op.forward(vol.data).astype(np.float32)
    save_image(args.out, image, {"camera": cam.type})
    if args.preview:
        write_pgm(args.preview, image)
    print(json.dumps({"out": str(args.out), "shape": list(image.shape),
                      "sum": float(image.sum(dtype=np.float64))}))
    return EXIT_OK


def _init_volume(cfg: ReconConfig, shape):
    if cfg.init == "zero":
        return np.zeros(shape)
    if isinstance(cfg.init, (int, float)):
        return np.full(shape, float(cfg.init))
    return load_volume(cfg.init).data.astype(np.float64).reshape(shape)


def cmd_reconstruct(args) -> int:
    path = Path(args.config)
    cfg = ReconConfig.from_dict(load_json(path), path.parent)
    ops, ys, ws = [], [], []
    for entry in cfg.cameras:
        op = build_system(entry.camera, cfg.grid.shape_xyz, cfg.grid.delta)
        ops.append(op)
        ys.append(load_image(entry.data_path))
        ws.append(load_image(entry.weights_path) if entry.weights_path else None)
    if cfg.weighting == "balanced":
        ws = [b if w is None else w * b for w, b in zip(ws, balanced_weights(ys))]
    problem = ReconProblem(absorb_weights(ops, ys, ws), beta=cfg.beta, nu=cfg.nu,
                           n_subset=cfg.n_subset)
    records = []
    state = fista_run(problem, _init_volume(cfg, ops[0].volume_shape), cfg.iters,
                      log_every=cfg.log_every, log_sink=records.append)
    out = args.out or cfg.output_path
    save_volume(out, VoxelVolume(state.x.astype(np.float32), cfg.grid.delta))
    if args.log_json:
        with open(args.log_json, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    print(json.dumps({"out": str(out), "iterations": state.iterations,
                      "final_cost": state.cost_history[-1], "gains": state.gains,
                      "restarts": state.restarts}))
    return EXIT_OK


def cmd_compare(args) -> int:
    ref = load_array(args.ref)
    test = load_array(args.test)
    value = nsd(ref, test) if args.metric == "nsd" else nrmse(ref, test)
    print(json.dumps({"metric": args.metric, "value": value}))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    if args.inject_fault:
        with inject_kernel_fault(1.01):
            results = run_selftest(args.seed)
    else:
        results = run_selftest(args.seed)
    for r in results:
        print(r.line())
    if args.log_json:
        with open(args.log_json, "w") as fh:
            json.dump([{"name": r.name, "max_error": r.max_error, "tol": r.tol,
                        "passed": r.passed} for r in results], fh, indent=2)
    ok = all(r.passed for r in results)
    print("selftest:", "all checks passed" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="JSON configuration file")
    common.add_argument("--out", type=str, help="output path")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--serial", action="store_true", help="force the serial reference path")
    common.add_argument("--log-json", type=str, help="write JSON records here")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="lftomo", description="Light field tomography tools")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phantom", parents=[common], help="rasterize a phantom volume")
    s.set_defaults(func=cmd_phantom, needs_out=True)

    s = sub.add_parser("render", parents=[common], help="forward-model a camera image")
    s.add_argument("--volume", required=True)
    s.add_argument("--preview", help="optional 8-bit PGM preview")
    s.set_defaults(func=cmd_render, needs_out=True, needs_config=True)

    s = sub.add_parser("reconstruct", parents=[common], help="FISTA reconstruction")
    s.set_defaults(func=cmd_reconstruct, needs_config=True)

    s = sub.add_parser("compare", parents=[common], help="NSD / NRMSE between two files")
    s.add_argument("--ref", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--metric", choices=["nsd", "nrmse"], default="nsd")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("selftest", parents=[common], help="built-in consistency checks")
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if getattr(args, "needs_out", False) and not args.out:
        parser.error(f"{args.command} needs --out")
    if getattr(args, "needs_config", False) and not args.config:
        parser.error(f"{args.command} needs --config")
    np.random.seed(args.seed % 2 ** 32)
    try:
        with serial_execution(args.serial):
            return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
