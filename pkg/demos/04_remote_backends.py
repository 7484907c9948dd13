"""Backends over the wire: the same run served by an external process.

Requires the bridge package (pip install -e bridge/).  The bridge speaks the
newline-delimited JSON protocol and serves all four capabilities from the
dataset's label grids, so the run below is bit-identical to the in-process
one.

Run with:  python3 demos/04_remote_backends.py
"""

import sys
import tempfile
from pathlib import Path

from tep.cli import main
from tep.protocol import connect

with tempfile.TemporaryDirectory() as td:
    root = Path(td)
    data = root / "data"
    main(["simulate", "--suite", "reappear", "--seed", "0", "--out", str(data)])
    manifest = str(data / "manifest.json")

    # Talk to a bridge by hand first: one JSON document per line.
    server = (f"exec:{sys.executable} -m tep_bridge --transport stdio "
              f"--dataset {data} --role all")
    with connect(server) as conn:
        print("capabilities:", ", ".join(conn.capabilities))
        video = sorted(p.name for p in data.iterdir() if p.is_dir())[0]
        verdict = conn.call("classify_semantic", {
            "video_id": video, "frame_index": 0,
            "mask": (data / video / "gt" / "001" / "00000.rle").read_text().strip(),
        })
        print("classify_semantic says:", verdict)

    # Now the full pipeline, once in-process and once through the bridge.
    main(["run", "--manifest", manifest, "--out", str(root / "local")])
    main(["run", "--manifest", manifest, "--out", str(root / "wire"),
          "--segmenter", server, "--tracker", server,
          "--detector", server, "--judge", server])

    local = sorted((root / "local").rglob("*.rle"))
    wire = sorted((root / "wire").rglob("*.rle"))
    identical = all(
        a.read_bytes() == b.read_bytes() for a, b in zip(local, wire)
    ) and len(local) == len(wire)
    print(f"\n{len(local)} prediction files, bit-identical across transports: {identical}")
