"""Training loop, evaluation and metrics reports."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .autodiff import Optimizer, ParameterSet, load_checkpoint, load_into, save_checkpoint
from .config import RunConfig, save_config
from .data import Corpus, CorpusSplit, Protocol, build_split, sample_stream, stack_labels, stack_pixels
from .errors import TrainingError
from .losses import LossWeights, fsc_loss, init_centers
from .model import DualBranchDetector
from .spectral import FAKE, ImageSample

log = logging.getLogger(__name__)

METRICS_VERSION = 1
REPORT_VERSION = 1
THRESHOLD = 0.5


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    @classmethod
    def from_predictions(cls, p: np.ndarray, labels: np.ndarray) -> "Confusion":
        pred = np.asarray(p).reshape(-1) > THRESHOLD
        fake = np.asarray(labels).reshape(-1) == FAKE
        return cls(
            tp=int(np.sum(pred & fake)),
            fp=int(np.sum(pred & ~fake)),
            tn=int(np.sum(~pred & ~fake)),
            fn=int(np.sum(~pred & fake)),
        )

    def as_dict(self) -> Dict[str, float]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn, "accuracy": self.accuracy}


@dataclass
class EpochRecord:
    epoch: int
    focal: float
    supcon: float
    f_center: float
    total: float
    total_median: float
    train_acc: float


@dataclass
class MetricsReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    domains: Dict[str, Confusion] = field(default_factory=dict)
    initial_domains: Dict[str, Confusion] = field(default_factory=dict)
    wall_seconds: float = 0.0
    config_hash: str = ""

    @property
    def accuracy(self) -> Dict[str, float]:
        return {d: c.accuracy for d, c in self.domains.items()}

    @property
    def overall(self) -> Confusion:
        out = Confusion()
        for c in self.domains.values():
            out.tp += c.tp
            out.fp += c.fp
            out.tn += c.tn
            out.fn += c.fn
        return out

    def to_dict(self) -> Dict:
        return {
            "version": REPORT_VERSION,
            "config_hash": self.config_hash,
            "wall_seconds": self.wall_seconds,
            "epochs": [asdict(e) for e in self.epochs],
            "test": {d: c.as_dict() for d, c in self.domains.items()},
            "initial_test": {d: c.as_dict() for d, c in self.initial_domains.items()},
            "overall": self.overall.as_dict(),
        }


@dataclass
class TrainResult:
    report: MetricsReport
    model: DualBranchDetector
    checkpoint: Optional[Path] = None


class DetectorRun:
    """A model plus its class centers, wired to the run's ablation flags."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.model = DualBranchDetector.create(config.model, config.seed)
        self.params: ParameterSet = self.model.params
        self.params.add("centers", init_centers(config.seed, config.model.fre.out_channels, config.loss.margin))

    @property
    def loss_weights(self) -> LossWeights:
        w = self.config.loss
        if self.config.ablation.disable_f_center:
            return LossWeights(**{**asdict(w), "lambda2": 0.0})
        return w

    def forward(self, pixels, spectra=None):
        flags = self.config.ablation
        return self.model.forward_batch(
            pixels,
            spectra,
            disable_fre_branch=flags.disable_fre_branch,
            disable_attention=flags.disable_attention,
        )

    def predict(self, pixels: np.ndarray, spectra: Optional[np.ndarray] = None, batch: int = 256) -> np.ndarray:
        out = []
        for start in range(0, len(pixels), batch):
            sl = slice(start, start + batch)
            out.append(self.forward(pixels[sl], None if spectra is None else spectra[sl]).p.data.copy())
        return np.concatenate(out) if out else np.zeros(0)


def batch_slices(n: int, batch_size: int) -> List[slice]:
    """Consecutive batches; a trailing single sample is folded into the previous batch."""
    starts = list(range(0, n, batch_size))
    slices = [slice(s, min(s + batch_size, n)) for s in starts]
    if len(slices) > 1 and slices[-1].stop - slices[-1].start < 2:
        last = slices.pop()
        slices[-1] = slice(slices[-1].start, last.stop)
    return slices


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return sample_stream(seed, f"shuffle:epoch{epoch}").permutation(n)


def evaluation_sets(config: RunConfig, corpus: Corpus) -> Dict[str, List[ImageSample]]:
    """Evaluation sets per family: held-out 20% parts (in-domain) or whole families (cross-domain)."""
    out = {}
    for d in config.resolved_test_domains():
        if config.protocol.kind == "cross-domain":
            out[d] = list(corpus.domain(d))
        else:
            out[d] = corpus.in_domain_parts(d)[1]
    return out


def evaluate_predictor(predict: Callable[[np.ndarray], np.ndarray], samples: Sequence[ImageSample]) -> Confusion:
    """Confusion counts for any callable mapping (N,H,W,3) pixels to fake-probabilities."""
    if not samples:
        raise ValueError("evaluate: empty test set")
    p = np.asarray(predict(stack_pixels(samples)))
    return Confusion.from_predictions(p, stack_labels(samples))


def group_by_domain(samples: Sequence[ImageSample]) -> Dict[str, List[ImageSample]]:
    out: Dict[str, List[ImageSample]] = {}
    for s in samples:
        out.setdefault(s.domain, []).append(s)
    return out


def _check_finite(breakdown, batch_index: int, epoch: int) -> None:
    for name in ("focal", "supcon", "f_center", "total"):
        value = getattr(breakdown, name).item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite {name} loss ({value}) at epoch {epoch}, batch {batch_index}")


def train(
    config: RunConfig,
    corpus: Optional[Corpus] = None,
    output_dir: Optional[Path] = None,
    progress: Optional[Callable[[EpochRecord], None]] = None,
    split: Optional[CorpusSplit] = None,
) -> TrainResult:
    """Train one detector per ``config`` and evaluate it on the configured test families.

    ``split`` (e.g. an imported corpus directory) replaces the generated
    corpus: training uses ``split.train`` and the test report groups
    ``split.test`` by family.

    When an output directory is given (argument or ``config.output_dir``) it
    receives ``metrics.csv``, ``report.json``, ``config.json`` and
    ``checkpoint.bin``.
    """
    config.validate()
    started = time.perf_counter()
    if split is None:
        corpus = corpus or Corpus(config.corpus)
        split = build_split(corpus, config.protocol)
        tests = evaluation_sets(config, corpus)
    else:
        tests = group_by_domain(split.test)
    if not split.train:
        raise TrainingError("empty training set")

    run = DetectorRun(config)
    weights = run.loss_weights
    opt = Optimizer(config.optimizer.kind, config.optimizer.learning_rate)

    train_px = stack_pixels(split.train)
    train_y = stack_labels(split.train)
    train_spec = None if config.ablation.disable_fre_branch else run.model.spectra(train_px)
    test_data = {}
    for d, samples in tests.items():
        px = stack_pixels(samples)
        sp = None if config.ablation.disable_fre_branch else run.model.spectra(px)
        test_data[d] = (px, sp, stack_labels(samples))

    report = MetricsReport(config_hash=config.hash())
    for d, (px, sp, y) in test_data.items():
        report.initial_domains[d] = Confusion.from_predictions(run.predict(px, sp), y)

    centers = run.params["centers"]
    n = len(train_y)
    for epoch in range(1, config.epochs + 1):
        order = epoch_order(config.seed, epoch, n)
        rows = []
        correct = 0
        for b, sl in enumerate(batch_slices(n, config.batch_size)):
            idx = order[sl]
            out = run.forward(train_px[idx], None if train_spec is None else train_spec[idx])
            y = train_y[idx]
            breakdown = fsc_loss(out.p, out.z, out.f_fre, y, centers, weights)
            _check_finite(breakdown, b, epoch)
            breakdown.total.backward()
            opt.step(run.params)
            run.params.zero_grad()
            rows.append([breakdown.focal.item(), breakdown.supcon.item(), breakdown.f_center.item(), breakdown.total.item()])
            correct += int(np.sum((out.p.data > THRESHOLD) == (y == FAKE)))
        arr = np.array(rows)
        record = EpochRecord(
            epoch=epoch,
            focal=float(arr[:, 0].mean()),
            supcon=float(arr[:, 1].mean()),
            f_center=float(arr[:, 2].mean()),
            total=float(arr[:, 3].mean()),
            total_median=float(np.median(arr[:, 3])),
            train_acc=correct / n,
        )
        report.epochs.append(record)
        log.info(
            "epoch %d focal=%.4f supcon=%.4f f_center=%.4f total=%.4f train_acc=%.3f",
            epoch, record.focal, record.supcon, record.f_center, record.total, record.train_acc,
        )
        if progress:
            progress(record)

    for d, (px, sp, y) in test_data.items():
        report.domains[d] = Confusion.from_predictions(run.predict(px, sp), y)
    report.wall_seconds = time.perf_counter() - started

    result = TrainResult(report=report, model=run.model)
    out_dir = output_dir or (Path(config.output_dir) if config.output_dir else None)
    if out_dir is not None:
        result.checkpoint = write_run_outputs(Path(out_dir), config, run.params, report)
    return result


def write_metrics_csv(path: Path, epochs: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# dualbranch-metrics v{METRICS_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "focal", "supcon", "f_center", "total", "train_acc"])
        for e in epochs:
            writer.writerow([e.epoch, repr(e.focal), repr(e.supcon), repr(e.f_center), repr(e.total), repr(e.train_acc)])


def read_metrics_csv(path: Path) -> List[Dict[str, float]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    reader = csv.DictReader(lines[1:])
    return [{k: float(v) for k, v in row.items()} for row in reader]


def write_run_outputs(out_dir: Path, config: RunConfig, params: ParameterSet, report: MetricsReport) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics.csv", report.epochs)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    save_config(config, out_dir / "config.json")
    ckpt = out_dir / "checkpoint.bin"
    save_checkpoint(ckpt, params)
    return ckpt


def load_run(config: RunConfig, checkpoint: Path) -> DetectorRun:
    """Rebuild a detector from a checkpoint; raises CheckpointError on architecture mismatch."""
    run = DetectorRun(config)
    load_into(run.params, load_checkpoint(checkpoint))
    return run


def evaluate(config: RunConfig, checkpoint: Path, samples: Sequence[ImageSample]) -> MetricsReport:
    """Read-only evaluation of a checkpoint on ``samples``, grouped by family."""
    run = load_run(config, checkpoint)
    if not samples:
        raise ValueError("evaluate: empty test set")
    report = MetricsReport(config_hash=config.hash())
    started = time.perf_counter()
    for d, group in group_by_domain(samples).items():
        report.domains[d] = evaluate_predictor(run.predict, group)
    report.wall_seconds = time.perf_counter() - started
    return report


__all__ = [
    "Confusion",
    "DetectorRun",
    "EpochRecord",
    "MetricsReport",
    "Protocol",
    "TrainResult",
    "batch_slices",
    "evaluate",
    "evaluate_predictor",
    "group_by_domain",
    "load_run",
    "read_metrics_csv",
    "evaluation_sets",
    "train",
]
