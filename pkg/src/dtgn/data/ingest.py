"""Frame-directory datasets: ``<root>/<videoId>/frame_%04d.pgm`` plus
``<root>/metadata.csv`` with columns ``videoId, ef, fps, split``."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from ..errors import EmptyDatasetError, MissingMetadataError
from .echo import EchoSample
from .pgm import read_pgm, write_pgm

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("videoId", "ef", "fps", "split")
TARGET_FRAMES = 64
TARGET_FPS = 32.0
MIN_SECONDS = 2.0


def resample_indices(n_frames: int, fps: float, frames: int = TARGET_FRAMES, target_fps: float = TARGET_FPS) -> np.ndarray:
    """Nearest source frame for each output time ``k / target_fps``."""
    t = np.arange(frames) / target_fps
    return np.clip(np.rint(t * fps).astype(int), 0, n_frames - 1)


def read_metadata(root: Path) -> list[dict]:
    meta = root / "metadata.csv"
    if not meta.is_file():
        raise MissingMetadataError(f"{meta} not found")
    with open(meta, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MissingMetadataError(f"{meta}: missing columns {missing}")
        return list(reader)


def ingest_video_dir(path, frames: int = TARGET_FRAMES, fps: float = TARGET_FPS,
                     min_seconds: float = MIN_SECONDS, report: dict | None = None) -> list[EchoSample]:
    """Load, filter and temporally resample every listed video.

    Clips shorter than ``min_seconds`` are discarded (reason logged and
    counted in ``report``). EF values above 1 are read as percentages.
    """
    root = Path(path)
    rows = read_metadata(root)
    kept: list[EchoSample] = []
    discarded: dict[str, int] = {}
    for row in rows:
        vid = row["videoId"]
        files = sorted((root / vid).glob("frame_*.pgm"))
        if not files:
            log.warning("discarding %s: no frames", vid)
            discarded["no frames"] = discarded.get("no frames", 0) + 1
            continue
        src_fps = float(row["fps"])
        duration = len(files) / src_fps
        if duration < min_seconds:
            log.info("discarding %s: %.2f s shorter than %.1f s", vid, duration, min_seconds)
            discarded["too short"] = discarded.get("too short", 0) + 1
            continue
        idx = resample_indices(len(files), src_fps, frames, fps)
        cache: dict[int, np.ndarray] = {}
        video = np.stack([cache.setdefault(i, read_pgm(files[i])) for i in idx]).astype(np.float32)
        ef = float(row["ef"])
        if ef > 1.0:
            ef /= 100.0
        seed = int(row.get("anatomySeed") or 0)
        hr = int(row.get("heartRate") or 1)
        kept.append(EchoSample(video, ef, seed, hr, video_id=vid, split=row["split"], fps=fps))
    if report is not None:
        report["listed"] = len(rows)
        report["kept"] = len(kept)
        report["discarded"] = discarded
        report["splits"] = split_counts(kept)
    if not kept:
        raise EmptyDatasetError(f"no usable videos under {root}")
    return kept


def split_counts(samples) -> dict[str, int]:
    counts: dict[str, int] = {}
    for s in samples:
        counts[s.split] = counts.get(s.split, 0) + 1
    return dict(sorted(counts.items()))


def write_video_dir(root, samples: list[EchoSample]) -> None:
    """Persist clips in the ingestion layout (8-bit frames, sorted metadata)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for s in samples:
        d = root / s.video_id
        d.mkdir(exist_ok=True)
        for t, frame in enumerate(s.video):
            write_pgm(d / f"frame_{t:04d}.pgm", frame)
    with open(root / "metadata.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS + ("anatomySeed", "heartRate"))
        for s in samples:
            w.writerow([s.video_id, f"{s.ef:.6f}", f"{s.fps:g}", s.split, s.anatomy_seed, s.heart_rate])
