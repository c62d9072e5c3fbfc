"""Command line front end: generate, serve, metrics, dump-config."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, SimConfig, format_config
from .engine import Engine, snapshot_text
from .io import (
    channel_grid,
    channel_image,
    flat_with_lake,
    grid_text,
    load_config,
    load_terrain,
    parse_grid,
    pnm_text,
    polygons_text,
    vectorize,
)
from .metrics import (
    composition,
    configuration_matrix,
    matrix_image,
    matrix_table,
)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sprawl")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run a simulation and export results")
    gen.add_argument("--terrain", help="terrain file (text grid or graymap)")
    gen.add_argument("--config", help="key=value config file")
    gen.add_argument("--seed", type=int, help="override the RNG seed")
    gen.add_argument("--ticks", type=int, help="override the tick budget")
    gen.add_argument("--out", default="out", help="output directory")
    gen.add_argument("--replay", help="recorded command log to re-apply")
    gen.add_argument("--snapshot-every", type=int, dest="snapshot_every")

    srv = sub.add_parser("serve", help="expose a live engine on a socket")
    srv.add_argument("--terrain")
    srv.add_argument("--config")
    srv.add_argument("--seed", type=int)
    srv.add_argument("--port", type=int, default=4270)
    srv.add_argument("--host", default="127.0.0.1")

    met = sub.add_parser("metrics", help="composition and configuration matrices")
    met.add_argument("grid", help="use-grid text file or canonical snapshot")
    met.add_argument("--out", help="directory for matrix images")

    sub.add_parser("dump-config", help="print the full default config")
    return ap


def _load_inputs(args):
    cfg = SimConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "ticks", None) is not None:
        cfg.ticks = args.ticks
    if getattr(args, "snapshot_every", None) is not None:
        cfg.snapshot_every = args.snapshot_every
    terrain = load_terrain(args.terrain) if args.terrain else flat_with_lake()
    return cfg, terrain


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text)


def cmd_generate(args) -> int:
    cfg, terrain = _load_inputs(args)
    replay = None
    if args.replay:
        with open(args.replay) as fh:
            replay = [json.loads(line) for line in fh if line.strip()]
    eng = Engine(cfg, terrain)
    eng.run(replay=replay)
    os.makedirs(args.out, exist_ok=True)
    snap = eng.snapshot()
    _write(os.path.join(args.out, "snapshot.txt"), snapshot_text(snap))
    _write(os.path.join(args.out, "config.txt"), format_config(cfg))
    for channel in ("use", "density", "age", "value", "honey"):
        grid = channel_grid(snap, channel)
        _write(os.path.join(args.out, f"{channel}.txt"), grid_text(grid, kind=channel))
        _write(
            os.path.join(args.out, f"{channel}.pnm"),
            pnm_text(channel_image(snap, channel)),
        )
    _write(os.path.join(args.out, "polygons.txt"), polygons_text(vectorize(snap)))
    with open(os.path.join(args.out, "events.jsonl"), "w") as fh:
        for rec in eng.log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(os.path.join(args.out, "commands.jsonl"), "w") as fh:
        for rec in eng.command_log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"tick {eng.tick_count}, wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .service import Service

    cfg, terrain = _load_inputs(args)
    eng = Engine(cfg, terrain)
    svc = Service(eng, host=args.host, port=args.port)
    print(f"listening on {args.host}:{svc.port}", flush=True)
    try:
        svc.serve_forever()
    except KeyboardInterrupt:
        svc.stop()
    return 0


def _use_grid_from_file(path: str) -> np.ndarray:
    with open(path) as fh:
        text = fh.read()
    if text.startswith("sprawl-snapshot"):
        lines = text.splitlines()
        size = next(ln for ln in lines if ln.startswith("size "))
        w, h = (int(v) for v in size.split()[1:3])
        at = lines.index("use") + 1
        rows = [[int(v) for v in ln.split()] for ln in lines[at : at + h]]
        return np.array(rows, np.int64)
    return parse_grid(text).astype(np.int64)


def cmd_metrics(args) -> int:
    grid = _use_grid_from_file(args.grid)
    comp = composition(grid)
    print("# composition")
    for name, share in comp.items():
        print(f"{name} {share:.4f}")
    for r in (1, 4, 16):
        m = configuration_matrix(grid, r)
        print()
        print(matrix_table(m), end="")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            _write(
                os.path.join(args.out, f"matrix_r{r}.pnm"),
                pnm_text(matrix_image(m)),
            )
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "metrics":
            return cmd_metrics(args)
        if args.command == "dump-config":
            print(format_config(SimConfig()), end="")
            return 0
    except (OSError, ValueError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
