"""Constant-velocity angular errors computed straight from BLRD1 files.

Usage: python3 cv_reference.py <dataset_dir> > cv_reference.json
"""
import json
import math
import struct
import sys
from pathlib import Path

KS = [1, 5, 20]
WINDOW = 4
EPS_V = 1e-6


def read_blrd(path):
    raw = path.read_bytes()
    assert raw[:5] == b"BLRD1"
    n_balls, steps = struct.unpack_from("<II", raw, 5)
    off = 5 + 8 + 8
    frames = []
    for _ in range(steps + 1):
        row = []
        for _ in range(n_balls):
            row.append(struct.unpack_from("<4d", raw, off))
            off += 32
        frames.append(row)
    (n_events,) = struct.unpack_from("<I", raw, off)
    off += 4
    event_steps = []
    for _ in range(n_events):
        step, _kind, _a, _b, _toi = struct.unpack_from("<IBIId", raw, off)
        off += 21
        event_steps.append(step)
    return frames, event_steps


def angle(u, p):
    nu = math.hypot(*u)
    if nu <= EPS_V:
        return None
    if math.hypot(*p) <= EPS_V:
        return 180.0
    cross = u[0] * p[1] - u[1] * p[0]
    dot = u[0] * p[0] + u[1] * p[1]
    return math.degrees(math.atan2(abs(cross), dot))


def main(root):
    manifest = json.loads((root / "manifest.json").read_text())
    sums = {s: {k: [0.0, 0] for k in KS} for s in ("overall", "near_collision")}
    for entry in manifest["sequences"]:
        frames, events = read_blrd(root / entry["file"])
        steps = len(frames) - 1
        near = [any(abs(f - s) <= WINDOW for s in events) for f in range(steps + 1)]
        for b in range(len(frames[0])):
            c = [(fr[b][0], fr[b][1]) for fr in frames]
            for t in range(steps):
                if t == 0:
                    p = (frames[0][b][2], frames[0][b][3])
                else:
                    p = (c[t][0] - c[t - 1][0], c[t][1] - c[t - 1][1])
                for k in KS:
                    if t + k > steps:
                        continue
                    u = (c[t + k][0] - c[t + k - 1][0], c[t + k][1] - c[t + k - 1][1])
                    a = angle(u, p)
                    if a is None:
                        continue
                    for s in ["overall"] + (["near_collision"] if near[t] else []):
                        sums[s][k][0] += a
                        sums[s][k][1] += 1
    out = {
        "dataset_seed": manifest["seed"],
        "n_sequences": manifest["n_sequences"],
        "angular_deg": {s: {str(k): v[0] / v[1] for k, v in d.items()} for s, d in sums.items()},
    }
    json.dump(out, sys.stdout, indent=2)
    print()


if __name__ == "__main__":
    main(Path(sys.argv[1]))
