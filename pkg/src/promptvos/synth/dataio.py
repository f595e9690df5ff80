"""Dataset files: binary PPM frames, PGM masks, line-based index records.

One directory per video; ``index.txt`` holds one record per video with
id, seed, event flag, target index, and comma-joined word ids.  Output is
byte-deterministic, so identical arguments produce identical trees.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from promptvos.synth.scenes import VideoSample

INDEX = "index.txt"


def write_pgm(path: Path, gray: np.ndarray) -> None:
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(gray, dtype=np.uint8).tobytes())


def read_pgm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, dims, maxval = fh.readline(), fh.readline(), fh.readline()
        if magic.strip() != b"P5" or maxval.strip() != b"255":
            raise ValueError(f"unsupported PGM header in {path}")
        w, h = map(int, dims.split())
        return np.frombuffer(fh.read(w * h), dtype=np.uint8).reshape(h, w)


def write_ppm(path: Path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_ppm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, dims, maxval = fh.readline(), fh.readline(), fh.readline()
        if magic.strip() != b"P6" or maxval.strip() != b"255":
            raise ValueError(f"unsupported PPM header in {path}")
        w, h = map(int, dims.split())
        return np.frombuffer(fh.read(w * h * 3), dtype=np.uint8).reshape(h, w, 3)


def save_dataset(directory: str | Path, samples: list[VideoSample]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for sample in samples:
        words = ",".join(str(w) for w in sample.words)
        lines.append(f"{sample.video_id} {sample.seed} {int(sample.event)} {sample.target} {words}")
        video_dir = directory / sample.video_id
        video_dir.mkdir(exist_ok=True)
        for t in range(sample.frames.shape[0]):
            rgb = np.rint(sample.frames[t] * 255.0).astype(np.uint8)
            write_ppm(video_dir / f"frame_{t:03d}.ppm", rgb)
            gray = np.rint(sample.masks[t] * 255.0).astype(np.uint8)
            write_pgm(video_dir / f"mask_{t:03d}.pgm", gray)
    (directory / INDEX).write_text("".join(line + "\n" for line in lines))


def load_dataset(directory: str | Path) -> list[VideoSample]:
    directory = Path(directory)
    samples = []
    for line in (directory / INDEX).read_text().splitlines():
        video_id, seed, event, target, words = line.split()
        video_dir = directory / video_id
        frame_paths = sorted(video_dir.glob("frame_*.ppm"))
        frames = np.stack([read_ppm(p).astype(np.float64) / 255.0 for p in frame_paths])
        masks = np.stack(
            [read_pgm(video_dir / f"mask_{i:03d}.pgm").astype(np.float64) / 255.0 for i in range(len(frame_paths))]
        )
        samples.append(
            VideoSample(
                video_id=video_id,
                seed=int(seed),
                words=[int(w) for w in words.split(",")],
                target=int(target),
                event=bool(int(event)),
                frames=frames,
                masks=masks,
            )
        )
    return samples
