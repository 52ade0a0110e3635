"""Stand-in external segmenter for protocol tests.

Usage: fake_backend.py MODE, where MODE is one of
zero | silent | mismatch | malformed | square | die
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np

from semcanvas.pnm import read_pnm, write_pgm


def main() -> None:
    mode = sys.argv[1]
    for line in sys.stdin:
        req = json.loads(line)
        if mode == "silent":
            time.sleep(60)
            continue
        if mode == "die":
            sys.exit(3)
        if mode == "malformed":
            print("this is not json", flush=True)
            continue
        frame = read_pnm(req["frame_path"])
        assert frame.shape == (req["height"], req["width"], 3)
        labels = np.zeros((req["height"], req["width"]), np.uint16)
        segments = []
        if mode == "square":
            labels[2:6, 3:9] = 4
            segments = [{"id": 4, "class_id": 10, "score": 0.9}]
        out = Path(req["frame_path"]).with_suffix(".labels.pgm")
        write_pgm(out, labels)
        idx = req["frame_index"] + (1 if mode == "mismatch" else 0)
        print(json.dumps({"frame_index": idx, "label_map_path": str(out), "segments": segments}), flush=True)


if __name__ == "__main__":
    main()
