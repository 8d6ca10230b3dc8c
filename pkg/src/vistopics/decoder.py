"""Bundled video decoder executable (`vistopics-decode`).

The extraction stage never links codecs in-process: it spawns a decoder
subprocess and reads from its pipes. This module is the default decoder;
any executable honoring the same contract can replace it (env
`VISTOPICS_DECODER` or the `[decoder]` config section):

probe mode
    ``<decoder> probe <input>`` writes one JSON object to stdout:
    ``{"width": W, "height": H, "fps": F, "frame_count": N, "duration_sec": D}``
    Exit status non-zero (message on stderr) if the file cannot be decoded.

decode mode
    ``<decoder> decode <input>`` writes a single JSON header line
    (same fields as probe) followed by raw rgb24 frames, W*H*3 bytes each,
    in stream order. A mid-stream decode failure truncates the stream at a
    frame boundary and exits non-zero.
"""

from __future__ import annotations

import json
import sys


def _open(path: str):
    import cv2

    cap = cv2.VideoCapture(path)
    if not cap.isOpened():
        raise RuntimeError(f"cannot open video: {path}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    n = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    w = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
    h = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
    if fps <= 0 or n <= 0 or w <= 0 or h <= 0:
        cap.release()
        raise RuntimeError(f"no decodable video stream in: {path}")
    return cap, {"width": w, "height": h, "fps": fps, "frame_count": n,
                 "duration_sec": n / fps}


def probe(path: str) -> int:
    cap, meta = _open(path)
    cap.release()
    sys.stdout.write(json.dumps(meta) + "\n")
    return 0


def decode(path: str) -> int:
    import cv2

    cap, meta = _open(path)
    out = sys.stdout.buffer
    sys.stdout.write(json.dumps(meta) + "\n")
    sys.stdout.flush()
    emitted = 0
    try:
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            out.write(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB).tobytes())
            emitted += 1
    finally:
        cap.release()
        out.flush()
    # a short read is a decode failure only if the container promised more
    if emitted < meta["frame_count"]:
        print(f"decode stopped early: {emitted}/{meta['frame_count']} frames", file=sys.stderr)
        return 3
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2 or argv[0] not in ("probe", "decode"):
        print("usage: vistopics-decode {probe|decode} <video>", file=sys.stderr)
        return 2
    try:
        return probe(argv[1]) if argv[0] == "probe" else decode(argv[1])
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
