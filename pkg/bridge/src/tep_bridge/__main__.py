"""Backend server entry point.

    tep-bridge --transport stdio|tcp [--port P] --dataset ROOT \
               --role all|segmenter|tracker|detector|judge

``--drift START,DX,DY`` makes the reference segmenter drift (for failure
injection over the wire); ``--delay-ms`` delays every non-hello response,
which lets clients exercise their timeout handling.
"""

from __future__ import annotations

import argparse
import sys

from .reference import ROLES, DriftConfig, reference_backend
from .server import serve, serve_tcp
from .world import DatasetMissing


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tep-bridge", description=__doc__)
    parser.add_argument("--transport", choices=("stdio", "tcp"), default="stdio")
    parser.add_argument("--port", type=int, default=0, help="tcp port; 0 picks one and prints it")
    parser.add_argument("--dataset", required=True, help="dataset root with simulator label grids")
    parser.add_argument("--role", default="all", choices=("all", *ROLES))
    parser.add_argument("--delay-ms", type=int, default=0)
    parser.add_argument("--drift", default=None, metavar="START,DX,DY",
                        help="translation drift for the reference segmenter")
    args = parser.parse_args(argv)

    drift = None
    if args.drift:
        try:
            start, dx, dy = (int(p) for p in args.drift.split(","))
        except ValueError:
            parser.error(f"--drift expects START,DX,DY integers, got {args.drift!r}")
        drift = DriftConfig(start, dx, dy)
    roles = tuple(ROLES) if args.role == "all" else (args.role,)
    try:
        registry = reference_backend(args.dataset, roles=roles, drift=drift)
    except DatasetMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.transport == "tcp":
        serve_tcp(args.port, registry, delay_ms=args.delay_ms)
    else:
        serve(sys.stdin.buffer, sys.stdout.buffer, registry, delay_ms=args.delay_ms)
    return 0


if __name__ == "__main__":
    sys.exit(main())
