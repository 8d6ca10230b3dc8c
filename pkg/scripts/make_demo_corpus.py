#!/usr/bin/env python3
"""Generate a directory of synthetic news-style videos for demo runs.

Each video is a sequence of one-second block-pattern scenes; some scenes
repeat so the dedup stage has real work to do. Pair with run.example.toml:

    python3 scripts/make_demo_corpus.py --out demo_videos --n 5
    vistopics --config run.example.toml --input-dir demo_videos run-all
"""

from __future__ import annotations

import argparse
from pathlib import Path

from vistopics.synth import write_test_video


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("demo_videos"))
    parser.add_argument("--n", type=int, default=5, help="number of videos")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-duration", type=float, default=8.0, help="seconds")
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    fps_cycle = [24.0, 25.0, 30.0]
    for i in range(args.n):
        fps = fps_cycle[i % 3]
        duration = 3 + (args.max_duration - 3) * i / max(args.n - 1, 1)
        path = args.out / f"clip_{i:03d}.mp4"
        write_test_video(path, fps=fps, n_frames=int(fps * duration),
                         seed=args.seed + i, repeat_scene_of={2: 0})
        print(f"wrote {path} ({fps:g} fps, {duration:.0f} s)")


if __name__ == "__main__":
    main()
