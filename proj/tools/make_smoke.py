"""Writes the three-point R^2 smoke instance used by the CLI examples and tests."""

import json
import struct
import sys
from pathlib import Path


def write_htk(path, shape, values):
    header = b"HTK1" + struct.pack("<BB", 2, len(shape)) + b"".join(struct.pack("<Q", d) for d in shape)
    path.write_bytes(header + struct.pack(f"<{len(values)}d", *values))


def dump(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def main(out):
    out.mkdir(parents=True, exist_ok=True)
    write_htk(out / "xs.htk", [3, 2], [0.0, 0.0, 1.0, 0.0, 0.0, 3.0])
    write_htk(out / "ys.htk", [2, 1], [0.0, 1.0])
    write_htk(out / "projection.htk", [1, 2], [1.0, 0.0])
    write_htk(out / "x.htk", [2], [0.0, 0.0])
    write_htk(out / "x_det.htk", [2], [0.0, 3.0])
    write_htk(out / "x_plus_det.htk", [2], [0.0, 3.0])
    # Measurement noise samples strictly inside the ball of radius 0.5.
    write_htk(out / "noise.htk", [5, 1], [-0.4, -0.2, 0.0, 0.2, 0.4])
    dump(out / "model.json", {
        "kind": "matrix",
        "parameters": {"path": "projection.htk"},
        "epsilon": 0.5,
        "norm_spec": {"p": 2, "q": 2},
    })
    dump(out / "dataset.json", {
        "schema": "halluc.dataset/1",
        "xs": "xs.htk",
        "ys": "ys.htk",
        "ids": ["x1", "x2", "x3"],
        "probe_ids": ["y1", "y2"],
    })
    dump(out / "eta_nearest.json", {
        "model": "model.json",
        "dataset": "dataset.json",
        "x": "x.htk",
        "x_det": "x_det.htk",
        "decoder": {"kind": "nearest_feasible"},
        "noise": {"samples": "noise.htk"},
        "etas": [1.0, 1.5],
    })
    dump(out / "eta_perfect.json", {
        "model": "model.json",
        "x": "x.htk",
        "x_det": "x_det.htk",
        "decoder": {"kind": "constant", "z": "x_plus_det.htk"},
        "noise": {"count": 8, "norm_fraction": 0.5},
        "etas": [1.5],
    })
    paste_dir = out.parent / "paste"
    paste_dir.mkdir(parents=True, exist_ok=True)
    side = 16
    z = [0.1 * ((3 * r + 5 * c) % 7) for r in range(side) for c in range(side)]
    source = list(z)
    for r in range(5, 11):
        for c in range(5, 11):
            source[r * side + c] += 1.0
    write_htk(paste_dir / "z.htk", [side, side], z)
    write_htk(paste_dir / "source.htk", [side, side], source)
    dump(paste_dir / "model.json", {
        "kind": "masked_fft",
        "parameters": {"side": side, "acceleration": 4, "center_lines": 2},
        "epsilon": 0.05,
    })
    # No "y": the CLI then measures z itself, so z is exactly consistent.
    dump(paste_dir / "paste.json", {
        "model": "model.json",
        "z": "z.htk",
        "source": "source.htk",
        "source_region": {"start": [4, 4], "stop": [12, 12]},
        "target_offset": [0, 0],
        "taper_width": 2,
    })

if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "smoke")
