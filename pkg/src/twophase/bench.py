"""Benchmark harness: averaged phase-two time and PSNR per (image, ratio, method)."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .amf_detector import AmfConfig, adaptive_median
from .image_core import load_pgm
from .metrics import psnr
from .noise_model import NoiseSpec, corrupt
from .restoration import METHODS, ContinuationSchedule, StopCriteria, restore

log = logging.getLogger(__name__)

CSV_FIELDS = ("image", "ratio", "method", "mean_time_s", "mean_psnr_db",
              "mean_iters", "stop_reason_mode", "status")


@dataclass
class ExperimentConfig:
    images: list[str]
    ratios: tuple[float, ...] = (0.3, 0.5, 0.7, 0.9)
    methods: tuple[str, ...] = METHODS
    repetitions: int = 5
    seed_base: int = 0
    w_max: int = 39
    schedule: ContinuationSchedule = field(default_factory=ContinuationSchedule.default)
    stop: StopCriteria = field(default_factory=StopCriteria)
    output_csv: str | None = None
    timing: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.images:
            raise ValueError("at least one image is required")
        if any(not 0 < r < 1 for r in self.ratios):
            raise ValueError("noise ratios must lie in (0, 1)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {', '.join(sorted(unknown))}")


@dataclass
class RunRecord:
    """One repetition of one cell."""

    image: str
    ratio: float
    method: str
    rep: int
    time_s: float
    psnr_db: float
    iterations: int
    stop_reason: str
    status: str = "ok"


def rep_seed(seed_base: int, ratio_index: int, rep: int) -> int:
    # the same noisy image is shared by all methods of a (ratio, rep) pair
    return (seed_base + 1009 * ratio_index + rep) % 2**64


def _stop_conformant(report, stop: StopCriteria) -> bool:
    """Each stage ended at the first iteration passing both tests, or at ``ite_max``."""
    for s in report.outer_stages:
        passed = [stop.passes(*c) for c in s.changes]
        if s.iterations > stop.ite_max or any(passed[:-1]):
            return False
        if s.stop_reason == "tolerance" and passed and not passed[-1]:
            return False
        if s.stop_reason == "ite_max" and (s.iterations != stop.ite_max or (passed and passed[-1])):
            return False
    return True


def _run_image_ratio(args) -> list[RunRecord]:
    cfg, image_path, ratio_index = args
    ratio = cfg.ratios[ratio_index]
    name = Path(image_path).stem
    clean = load_pgm(image_path)
    records = []
    for rep in range(cfg.repetitions):
        noisy, _ = corrupt(clean, NoiseSpec.symmetric(ratio, rep_seed(cfg.seed_base, ratio_index, rep)))
        mask, u0 = adaptive_median(noisy, AmfConfig(w_max=cfg.w_max))
        for method in cfg.methods:
            try:
                restored, report = restore(noisy, mask, u0, method, cfg.schedule, cfg.stop)
            except Exception as exc:  # recorded, the run goes on
                log.exception("cell %s/%s/%s rep %d failed", name, ratio, method, rep)
                records.append(RunRecord(name, ratio, method, rep, float("nan"), float("nan"), 0,
                                         "error", f"error: {type(exc).__name__}: {exc}"))
                continue
            status = "ok"
            if not np.array_equal(restored.pixels[~mask.flags], noisy.pixels[~mask.flags]):
                status = "clean_pixels_changed"
            elif not _stop_conformant(report, cfg.stop):
                status = "stop_rule_violated"
            records.append(RunRecord(
                name, ratio, method, rep,
                report.elapsed_seconds if cfg.timing else 0.0,
                psnr(clean, restored), report.total_iterations, report.stop_reason, status))
    return records


def run_repetitions(cfg: ExperimentConfig) -> list[RunRecord]:
    tasks = [(cfg, img, k) for img in cfg.images for k in range(len(cfg.ratios))]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(_run_image_ratio, tasks))
    else:
        chunks = [_run_image_ratio(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def summarize(records: list[RunRecord]) -> list[dict]:
    """Average repetitions into one row per (image, ratio, method), sorted."""
    cells = defaultdict(list)
    for r in records:
        cells[(r.image, r.ratio, r.method)].append(r)
    rows = []
    for (image, ratio, method), reps in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1], METHODS.index(kv[0][2]))):
        bad = [r.status for r in reps if r.status != "ok"]
        rows.append({
            "image": image,
            "ratio": ratio,
            "method": method,
            "mean_time_s": float(np.mean([r.time_s for r in reps])),
            "mean_psnr_db": float(np.mean([r.psnr_db for r in reps])),
            "mean_iters": float(np.mean([r.iterations for r in reps])),
            "stop_reason_mode": Counter(r.stop_reason for r in reps).most_common(1)[0][0],
            "status": bad[0] if bad else "ok",
        })
    return rows


def run_benchmark(cfg: ExperimentConfig) -> list[dict]:
    rows = summarize(run_repetitions(cfg))
    if cfg.output_csv:
        Path(cfg.output_csv).write_text(rows_to_csv(rows), encoding="utf-8")
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

