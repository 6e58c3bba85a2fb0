"""Command-line interface.

Subcommands: texture (full pipeline), consistent2d (joint 2D denoising),
backend-check (wire-protocol conformance probe), serve-toy (host the toy
backend over TCP), dump-maps (rasterizer debug PNGs), make-mesh
(procedural OBJ files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backend import get_backend
from .backend.protocol import encode_frame, parse_payload, read_frame, write_frame
from .backend.server import BackendServer
from .backend.toy import ToyBackend
from .camera import build_views
from .mesh_io import load_mesh, write_mesh
from .pipeline import PipelineConfig, export_texture, texture_mesh
from .primitives import GENERATORS, write_primitive
from .raster import rasterize
from .report import (
    render_report_figures,
    save_gray_png,
    save_rgb_png,
    write_report,
    write_step_csv,
)
from .scheduler import make_schedule, run_consistent_2d


def _parse_mask(spec: str, size: int) -> np.ndarray:
    """Mask spec: "full", "none", or "center:<lo>-<hi>" (fractions)."""
    if spec == "full":
        return np.ones((size, size), dtype=bool)
    if spec == "none":
        return np.zeros((size, size), dtype=bool)
    if spec.startswith("center:"):
        lo_s, _, hi_s = spec[len("center:") :].partition("-")
        lo, hi = float(lo_s), float(hi_s)
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"bad mask range in {spec!r}")
        mask = np.zeros((size, size), dtype=bool)
        a, b = int(round(lo * size)), int(round(hi * size))
        mask[a:b, a:b] = True
        return mask
    raise ValueError(f"unknown mask spec {spec!r}")


def _cmd_texture(args) -> int:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
    config = PipelineConfig.from_dict(raw)
    if args.prompt is not None:
        config.prompt = args.prompt
    if args.seed is not None:
        config.seed = args.seed
    if args.skip_inversion:
        config.skip_inversion = True
    if not config.prompt:
        print("error: no prompt given (flag or config)", file=sys.stderr)
        return 2

    mesh = load_mesh(args.mesh)
    backend = get_backend(args.backend)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = texture_mesh(mesh, config, backend)
    finally:
        backend.close()

    export_texture(result.texture, out / "texture.png")
    write_mesh(mesh, out / "mesh_out.obj", texture_name="texture.png")
    write_report(result.report, out)
    write_step_csv(result.report["steps"], out)
    render_report_figures(result.report, out)

    if args.debug_views:
        br = mesh.bounding_radius
        views = build_views(
            n=config.views.count,
            mode=config.views.mode,
            radius=2.5 * br,
            half_extent=1.1 * br,
            resolution=config.views.resolution,
        )
        for vi, view in enumerate(views):
            maps = rasterize(mesh, view, config.rgb_texture_size)
            save_gray_png(maps.depth, out / f"view{vi:02d}_depth.png")
            save_gray_png(maps.weight, out / f"view{vi:02d}_weight.png")
            save_gray_png(maps.mask.astype(float), out / f"view{vi:02d}_mask.png")

    print(f"texture.png written to {out} "
          f"(coverage {result.report['coverage_fraction']:.1%})")
    return 0


def _cmd_consistent2d(args) -> int:
    prompts = [
        line.strip()
        for line in Path(args.prompts).read_text().splitlines()
        if line.strip()
    ]
    if not prompts:
        print("error: prompts file is empty", file=sys.stderr)
        return 2
    mask = _parse_mask(args.mask, args.latent_size)
    schedule = make_schedule(args.steps, args.guidance_scale)
    backend = get_backend(args.backend)
    try:
        result = run_consistent_2d(
            prompts,
            mask,
            args.alpha,
            schedule,
            backend,
            latent_size=args.latent_size,
            seed=args.seed,
        )
    finally:
        backend.close()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, image in enumerate(result.images):
        save_rgb_png(image, out / f"image_{i:02d}.png")
    report = {
        "prompts": prompts,
        "alpha": args.alpha,
        "num_steps": args.steps,
        "seed": args.seed,
        "mask": args.mask,
        "masked_spread": result.masked_spread,
    }
    write_report(report, out)
    render_report_figures(report, out)
    print(f"{len(prompts)} images written to {out}")
    return 0


def _probe_backend(address: str) -> int:
    """Raw-socket conformance probe: shapes and request_id echo."""
    import socket

    host, _, port_s = address.rpartition(":")
    rng = np.random.default_rng(7)
    latents = rng.standard_normal((2, 8, 8, 4)).astype(np.float32)
    cotangent = rng.standard_normal((2, 64, 64, 3)).astype(np.float32)
    checks = [
        (
            "predict_noise",
            {
                "type": "predict_noise",
                "request_id": 101,
                "timestep_index": 3,
                "alpha_bar_t": 0.5,
                "guidance_scale": 7.5,
                "prompts": ["probe a", "probe b"],
            },
            [("latents", latents)],
            latents.shape,
        ),
        (
            "decode",
            {"type": "decode", "request_id": 202},
            [("latents", latents)],
            (2, 64, 64, 3),
        ),
        (
            "decode_pullback",
            {"type": "decode_pullback", "request_id": 303},
            [("latents", latents), ("cotangent", cotangent)],
            latents.shape,
        ),
    ]
    failures = 0
    with socket.create_connection((host, int(port_s)), timeout=30) as sock:
        for name, header, tensors, want_shape in checks:
            write_frame(sock, encode_frame(header, tensors))
            payload = read_frame(sock)
            ok = payload is not None
            detail = ""
            if ok:
                resp, resp_tensors = parse_payload(payload)
                if resp.get("type") != "response":
                    ok, detail = False, f"got {resp.get('type')}: {resp.get('message')}"
                elif resp.get("request_id") != header["request_id"]:
                    ok, detail = False, f"request_id {resp.get('request_id')} != {header['request_id']}"
                elif tuple(resp_tensors["result"].shape) != tuple(want_shape):
                    ok, detail = False, f"shape {resp_tensors['result'].shape} != {want_shape}"
            else:
                detail = "connection closed"
            print(f"{'PASS' if ok else 'FAIL'}: {name} {detail}".rstrip())
            failures += 0 if ok else 1
    return failures


def _cmd_backend_check(args) -> int:
    spec = args.backend or "toy"
    if spec == "toy":
        # Host the toy backend locally so the probe exercises the real wire.
        with BackendServer(ToyBackend()) as server:
            host, port = server.address
            failures = _probe_backend(f"{host}:{port}")
    elif spec.startswith("remote:"):
        failures = _probe_backend(spec[len("remote:") :])
    else:
        print(f"error: unknown backend spec {spec!r}", file=sys.stderr)
        return 2
    print("backend-check:", "all checks passed" if failures == 0 else f"{failures} failed")
    return 0 if failures == 0 else 1


def _cmd_serve_toy(args) -> int:
    host, _, port_s = args.listen.rpartition(":")
    server = BackendServer(ToyBackend(), host or "127.0.0.1", int(port_s))
    server.start()
    print(f"toy backend listening on {server.address[0]}:{server.address[1]}")
    try:
        import threading

        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def _cmd_dump_maps(args) -> int:
    mesh = load_mesh(args.mesh)
    br = mesh.bounding_radius
    views = build_views(
        n=args.views, mode=args.mode, radius=2.5 * br, half_extent=1.1 * br,
        resolution=args.resolution,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for vi, view in enumerate(views):
        maps = rasterize(mesh, view, args.texture_size)
        save_gray_png(maps.depth, out / f"view{vi:02d}_depth.png")
        save_gray_png(maps.weight, out / f"view{vi:02d}_weight.png")
        save_gray_png(maps.mask.astype(float), out / f"view{vi:02d}_mask.png")
    print(f"wrote {3 * len(views)} debug maps to {out}")
    return 0


def _cmd_make_mesh(args) -> int:
    write_primitive(args.kind, args.out)
    print(f"wrote {args.kind} to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshtex", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("texture", help="texture a mesh from a text prompt")
    p.add_argument("--mesh", required=True)
    p.add_argument("--prompt", default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--backend", default=None, help="toy or remote:<host:port>")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--skip-inversion", action="store_true")
    p.add_argument("--debug-views", action="store_true")
    p.set_defaults(func=_cmd_texture)

    p = sub.add_parser("consistent2d", help="jointly denoise N prompts in 2D")
    p.add_argument("--prompts", required=True, help="file with one prompt per line")
    p.add_argument("--mask", default="center:0.25-0.75")
    p.add_argument("--alpha", type=float, default=0.97)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance-scale", type=float, default=7.5)
    p.add_argument("--latent-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_consistent2d)

    p = sub.add_parser("backend-check", help="wire-protocol conformance probe")
    p.add_argument("--backend", default="toy")
    p.set_defaults(func=_cmd_backend_check)

    p = sub.add_parser("serve-toy", help="host the toy backend over TCP")
    p.add_argument("--listen", default="127.0.0.1:7351")
    p.set_defaults(func=_cmd_serve_toy)

    p = sub.add_parser("dump-maps", help="dump RenderMaps as grayscale PNGs")
    p.add_argument("--mesh", required=True)
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--mode", default="hemisphere")
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--texture-size", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump_maps)

    p = sub.add_parser("make-mesh", help="write a procedural OBJ")
    p.add_argument("kind", choices=sorted(GENERATORS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_mesh)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
