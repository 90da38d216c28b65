"""Command line: ``cslidar {scene,simulate,reconstruct,analyze}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, io
from .config import PRESETS, ConfigError, RunConfig, from_mapping, load_config, load_preset, parse_config_text
from .pipeline import (
    acquire,
    acquire_raster,
    acquisition_from_trace_set,
    acquisition_meta,
    raster_pixel_snr,
    raster_pulses_for_budget,
    run,
    run_raster,
)
from .scene import SCENE_KINDS, generate_scene, load_scene, save_scene
from .sensing import mask_images

log = logging.getLogger("cslidar")


class CliError(RuntimeError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _run_config(args) -> RunConfig:
    cfg = load_preset(args.preset) if args.preset else RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    for item in args.set or ():
        overrides.update(parse_config_text(item, "--set"))
    for key in ("masks", "repeats"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    return from_mapping(overrides, cfg) if overrides else cfg


def cmd_scene(args) -> int:
    width = args.width or args.size
    height = args.height or args.size
    params = {}
    if args.kind == "two_plane":
        params.update(r1=args.r1, r2=args.r2)
    elif args.kind == "bars":
        if args.ranges:
            params["ranges"] = _floats(args.ranges)
    else:
        params.update(seed=args.seed, n_blobs=args.n_blobs, range_min=args.range_min,
                      range_max=args.range_max)
    scene = generate_scene(args.kind, width, height, **params)
    save_scene(scene, args.out)
    ext = scene.depth_extent()
    extent = "empty" if ext is None else f"{ext[0]:.2f}-{ext[1]:.2f} m"
    print(f"{args.kind} scene {scene.width}x{scene.height}, {int(scene.valid.sum())} returns, "
          f"depth {extent} -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    cfg = _run_config(args)
    if args.raster:
        pulses = args.pulses_per_pixel or raster_pulses_for_budget(cfg, scene.n)
        acq = acquire_raster(scene, cfg, args.seed, pulses)
    else:
        acq = acquire(scene, cfg, args.seed)
    out = Path(args.out)
    io.write_trace_set(out, acq.traces, acq.schedule, acquisition_meta(acq))
    if args.export_masks and not args.raster:
        mdir = out / "masks"
        mdir.mkdir(exist_ok=True)
        for i, m in enumerate(mask_images(acq.schedule, scene.width, scene.height)):
            io.write_pbm(mdir / f"mask_{i:05d}.pbm", m)
    total = np.mean([t.total.sum() for t in acq.traces])
    print(f"{len(acq.traces)} traces ({acq.schedule.basis.kind}, {acq.schedule.repeats} pulses each, "
          f"mean {total:.0f} counts per mask) -> {out}")
    return 0


def cmd_reconstruct(args) -> int:
    manifest, schedule, traces = io.read_trace_set(args.traces)
    acq = acquisition_from_trace_set(manifest, schedule, traces)
    overrides = {}
    for item in args.set or ():
        overrides.update(parse_config_text(item, "--set"))
    if overrides:
        acq.config = from_mapping(overrides, acq.config)
    scene = load_scene(args.scene) if args.scene else None
    if scene is not None and (scene.width, scene.height) != (acq.width, acq.height):
        raise CliError(f"scene is {scene.width}x{scene.height} but traces are {acq.width}x{acq.height}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if schedule.basis.kind == "raster":
        result = run_raster(scene, acq.config, acq.seed, acq=acq)
    else:
        m = args.masks
        if m is not None and not 1 <= m <= schedule.m:
            raise CliError(f"--masks must be between 1 and {schedule.m}")
        result = run(scene, acq.config, acq.seed, acq=acq, n_masks=m, score=scene is not None)
    _emit(result, out, "")
    if args.raster:
        if scene is None:
            raise CliError("--raster needs --scene to simulate the baseline scan")
        baseline = run_raster(scene, acq.config, acq.seed)
        _emit(baseline, out, "raster_")
        print(f"raster baseline: {baseline.acquisition.schedule.repeats} pulses per pixel, "
              f"pixel SNR {raster_pixel_snr(baseline, scene):.2f}")
    return 0


def _emit(result, out: Path, prefix: str) -> None:
    fov = result.acquisition.config.fov_mrad * 1e-3
    w, h = result.acquisition.width, result.acquisition.height
    fs = result.frame_set
    if fs is None:
        log.warning("no target returns found in the traces; writing an empty point cloud")
        print("warning: no target returns found; point cloud is empty", file=sys.stderr)
    else:
        for b, frame in enumerate(result.frames):
            io.write_pgm(out / f"{prefix}frame_{b:03d}.pgm", frame)
        io.write_frame_set_csv(out / f"{prefix}frameset.csv", fs)
        if result.reconstruction is not None:
            io.write_diagnostics_csv(out / f"{prefix}diagnostics.csv", result.reconstruction)
    points = result.points if result.points is not None else np.zeros((0, 4))
    io.write_ply(out / f"{prefix}points.ply", io.pixel_to_metric(points, w, h, fov))
    depths = ", ".join(f"{d:.2f}" for d in result.depth_bins)
    print(f"{prefix or 'cs '}reconstruction: {len(result.frames)} depth frames [{depths}] m, "
          f"{len(points)} points -> {out}")
    if result.scores:
        for b, (p, c) in enumerate(zip(result.scores["psnr"], result.scores["ncc"])):
            print(f"  frame {b}: PSNR {p:.2f} dB, NCC {c:.3f}")


def cmd_analyze(args) -> int:
    if args.what == "bounds":
        eb = analysis.entropy_bound(args.n, args.k)
        mu = args.mu if args.mu is not None else 1.0
        print(f"n={args.n} k={args.k}")
        print(f"entropy bound: exact {eb.exact_bits:.2f} bits, approx {eb.approx_bits:.2f} bits")
        print(f"required measurements (mu={mu:g}, delta={args.delta:g}): "
              f"{analysis.required_measurements(mu, args.k, args.n, args.delta)}")
        print(f"practical measurements: {analysis.practical_measurements(args.k, args.n)}")
    elif args.what == "budget":
        p = analysis.BUDGET_PRESETS[args.preset]
        bg = args.background if args.background is not None else 30.0
        window = args.window if args.window is not None else p.window_ns
        snr = args.target_snr if args.target_snr is not None else p.target_snr
        note = p.note if args.window is None and args.target_snr is None else ""
        r = analysis.photon_budget(bg, window, snr, args.photons_per_pulse, note)
        print(f"background {r.background_rate_per_ns:g}/ns over {r.window_ns:g} ns "
              f"({r.background_photons:g} photons), target SNR {r.target_snr:g}")
        print(f"minimum signal photons per measurement: {r.min_signal_photons_per_measurement}")
        print(f"recommended repeats: {r.recommended_repeats}")
        print(f"expected SNR: {r.expected_snr:.3f}")
        if r.note:
            print(f"note: {r.note}")
    else:
        rep = analysis.incoherence_report(args.n, args.seed)
        print(f"n={args.n} seed={args.seed}")
        print(f"mu(pixel, fast_binary) = {rep['mu_pixel_fast_binary']:.6f}")
        print(f"mu(pixel, random orthonormal) = {rep['mu_pixel_random_orthonormal']:.6f} "
              f"(sqrt(2 ln n) = {rep['sqrt_2_ln_n']:.6f}, max {rep['mu_max']:.6f})")
        if args.photons is not None:
            print(f"mask SNR estimate at {args.photons:g} photons: "
                  f"{analysis.mask_snr_estimate(args.photons, args.n):.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cslidar", description="Compressive single-pixel depth imaging.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene", help="generate a synthetic depth scene")
    p.add_argument("--kind", required=True, choices=SCENE_KINDS)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--r1", type=float, default=50.0)
    p.add_argument("--r2", type=float, default=55.0)
    p.add_argument("--ranges", help="comma-separated bar ranges in metres")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-blobs", type=int, default=4)
    p.add_argument("--range-min", type=float, default=40.0)
    p.add_argument("--range-max", type=float, default=60.0)
    p.add_argument("--out", default="scene.pscene")
    p.set_defaults(func=cmd_scene)

    p = sub.add_parser("simulate", help="simulate detector traces for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--masks", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--raster", action="store_true", help="scan pixels one at a time instead")
    p.add_argument("--pulses-per-pixel", type=int)
    p.add_argument("--export-masks", action="store_true", help="also write the masks as PBM files")
    p.add_argument("--out", default="traces")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="recover depth frames from a trace set")
    p.add_argument("--traces", required=True)
    p.add_argument("--out", default="recon")
    p.add_argument("--masks", type=int, help="use only the first N masks")
    p.add_argument("--scene", help="ground truth scene for scoring")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--raster", action="store_true", help="also run a raster baseline at equal pulses")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("analyze", help="measurement bounds, photon budgets, incoherence")
    asub = p.add_subparsers(dest="what", required=True)
    a = asub.add_parser("bounds")
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--mu", type=float)
    a.add_argument("--delta", type=float, default=0.01)
    a = asub.add_parser("budget")
    a.add_argument("--preset", choices=sorted(analysis.BUDGET_PRESETS), default=analysis.DAYLIGHT_532NM.name,
                   help="window and target SNR defaults")
    a.add_argument("--background", type=float, help="background photons per ns (default 30)")
    a.add_argument("--window", type=float, help="timing window in ns")
    a.add_argument("--target-snr", type=float)
    a.add_argument("--photons-per-pulse", type=float, default=1.0)
    a = asub.add_parser("incoherence")
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--photons", type=float, help="photons per mask for the SNR estimate")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"cslidar: error: {exc}", file=sys.stderr)
        return 2
    except (CliError, OSError, RuntimeError) as exc:
        print(f"cslidar: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
