"""Ablation suite and cross-domain matrix runs built on :func:`training.train`."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import RunConfig
from .data import Corpus
from .spectral import DOMAINS, SPATIAL_DOMAINS, SPECTRAL_DOMAINS
from .training import MetricsReport, train

# row label -> ablation flag (None for the full model)
VARIANTS: Tuple[Tuple[str, Optional[str]], ...] = (
    ("full", None),
    ("w/o Fre-Branch", "disable_fre_branch"),
    ("w/o L_f-center", "disable_f_center"),
    ("w/o M_c", "disable_attention"),
)


def variant_config(config: RunConfig, flag: Optional[str]) -> RunConfig:
    """``config`` with exactly one ablation flag set (or none for the full model)."""
    flags = {name: False for _, name in VARIANTS if name}
    if flag is not None:
        flags[flag] = True
    return config.replace(ablation=flags, output_dir=None)


def _train_job(args) -> MetricsReport:
    config, corpus = args
    return train(config, corpus=corpus).report


def _run_all(configs: Sequence[RunConfig], jobs: int) -> List[MetricsReport]:
    if jobs <= 1:
        corpus = Corpus(configs[0].corpus) if configs else None
        return [_train_job((c, corpus)) for c in configs]
    # each worker builds its own corpus; generation is a pure function of CorpusSpec
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_train_job, [(c, None) for c in configs]))


@dataclass
class AblationRow:
    name: str
    flag: Optional[str]
    accuracy: Dict[str, float]
    reports: List[MetricsReport] = field(default_factory=list, repr=False)


@dataclass
class AblationReport:
    rows: List[AblationRow]
    columns: List[str]

    @property
    def full(self) -> AblationRow:
        return self.rows[0]

    def deltas(self, row: AblationRow) -> Dict[str, float]:
        return {c: row.accuracy[c] - self.full.accuracy[c] for c in self.columns}

    def mean_delta(self, row: AblationRow, columns: Optional[Sequence[str]] = None) -> float:
        cols = self.spectral_columns() if columns is None else list(columns)
        return float(np.mean([self.deltas(row)[c] for c in cols]))

    def spectral_columns(self) -> List[str]:
        cols = [c for c in self.columns if c.split("->")[-1] in SPECTRAL_DOMAINS]
        return cols or list(self.columns)

    def largest_drop(self) -> str:
        """Name of the ablation with the most negative mean delta over spectral columns."""
        return min(self.rows[1:], key=self.mean_delta).name

    def to_dict(self) -> Dict:
        return {
            "version": 1,
            "columns": self.columns,
            "rows": [
                {
                    "name": r.name,
                    "flag": r.flag,
                    "accuracy": r.accuracy,
                    "delta": self.deltas(r),
                    "mean_spectral_delta": self.mean_delta(r),
                }
                for r in self.rows
            ],
        }

    def format_table(self) -> str:
        head = f"{'variant':<16}" + "".join(f"{c:>22}" for c in self.columns) + f"{'mean spectral delta':>22}"
        lines = [head]
        for r in self.rows:
            cells = "".join(
                f"{r.accuracy[c]:>12.3f} ({self.deltas(r)[c]:+.3f})" for c in self.columns
            )
            lines.append(f"{r.name:<16}{cells}{self.mean_delta(r):>+22.3f}")
        return "\n".join(lines)


def run_ablation_suite(
    config: RunConfig,
    train_domains: Optional[Sequence[str]] = None,
    jobs: int = 1,
    output_dir: Optional[Path] = None,
) -> AblationReport:
    """Train the full model and each single-flag ablation under identical seeds and corpora.

    With ``train_domains`` every listed family gets its own run per variant
    (same protocol kind as ``config``); otherwise the config's own protocol is
    used. Columns are test families, prefixed ``train->`` when more than one
    training family shares a column set.
    """
    config.validate()
    domains = list(train_domains) if train_domains else [config.protocol.train_domain]
    base = []
    for d in domains:
        protocol = {"train_domain": d}
        test_domains = config.test_domains
        if config.protocol.kind == "cross-domain":
            if d == config.protocol.test_domain:
                continue
        elif train_domains:
            test_domains = None
        base.append(config.replace(protocol=protocol, test_domains=test_domains))
    configs = [variant_config(b, flag) for _, flag in VARIANTS for b in base]
    reports = _run_all(configs, jobs)

    rows, columns = [], []
    for v, (name, flag) in enumerate(VARIANTS):
        acc: Dict[str, float] = {}
        mine = reports[v * len(base) : (v + 1) * len(base)]
        for b, rep in zip(base, mine):
            for test, value in rep.accuracy.items():
                key = test if len(base) == 1 or test == b.protocol.train_domain else f"{b.protocol.train_domain}->{test}"
                acc[key] = value
                if v == 0:
                    columns.append(key)
        rows.append(AblationRow(name, flag, acc, mine))
    report = AblationReport(rows, columns)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        (out / "ablation.txt").write_text(report.format_table() + "\n", encoding="utf-8")
    return report


@dataclass
class CrossDomainReport:
    """Accuracy per (train family, test family) plus the per-test-family cross-domain mean."""

    accuracy: Dict[Tuple[str, str], float]

    def in_domain(self, family: str) -> Optional[float]:
        return self.accuracy.get((family, family))

    def cross_mean(self, test_family: str) -> float:
        """Mean accuracy over every run that tests on ``test_family`` from a different family."""
        vals = [a for (tr, te), a in self.accuracy.items() if te == test_family and tr != test_family]
        return float(np.mean(vals)) if vals else float("nan")

    def train_mean(self, train_family: str, test_families: Sequence[str]) -> float:
        vals = [self.accuracy[(train_family, t)] for t in test_families if (train_family, t) in self.accuracy]
        return float(np.mean(vals)) if vals else float("nan")

    def families(self) -> Tuple[List[str], List[str]]:
        trains = sorted({k[0] for k in self.accuracy}, key=DOMAINS.index)
        tests = sorted({k[1] for k in self.accuracy}, key=DOMAINS.index)
        return trains, tests

    def to_dict(self) -> Dict:
        trains, tests = self.families()
        return {
            "version": 1,
            "accuracy": {f"{tr}->{te}": a for (tr, te), a in self.accuracy.items()},
            "cross_domain_mean": {t: self.cross_mean(t) for t in tests},
        }

    def format_table(self) -> str:
        trains, tests = self.families()
        lines = [f"{'train/test':<14}" + "".join(f"{t:>10}" for t in tests)]
        for tr in trains:
            cells = "".join(
                f"{self.accuracy[(tr, te)]:>10.3f}" if (tr, te) in self.accuracy else f"{'-':>10}" for te in tests
            )
            lines.append(f"{tr:<14}{cells}")
        lines.append(f"{'cross mean':<14}" + "".join(f"{self.cross_mean(t):>10.3f}" for t in tests))
        return "\n".join(lines)


def cross_domain_matrix(
    config: RunConfig,
    train_domains: Sequence[str] = SPECTRAL_DOMAINS,
    test_domains: Sequence[str] = DOMAINS,
    jobs: int = 1,
    output_dir: Optional[Path] = None,
) -> CrossDomainReport:
    """Per training family: an in-domain run (80/20 split) and a cross-domain run tested on every other family."""
    config.validate()
    configs = []
    for tr in train_domains:
        if tr in test_domains:
            protocol = {"kind": "in-domain", "train_domain": tr, "test_domain": None}
            configs.append(config.replace(protocol=protocol, test_domains=[tr], output_dir=None))
        others = [te for te in test_domains if te != tr]
        if others:
            # the cross-domain training set (all of family tr) does not depend on the test family
            protocol = {"kind": "cross-domain", "train_domain": tr, "test_domain": others[0]}
            configs.append(config.replace(protocol=protocol, test_domains=others, output_dir=None))
    accuracy = {}
    for cfg, rep in zip(configs, _run_all(configs, jobs)):
        for te, a in rep.accuracy.items():
            accuracy[(cfg.protocol.train_domain, te)] = a
    report = CrossDomainReport(accuracy)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cross_domain.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        (out / "cross_domain.txt").write_text(report.format_table() + "\n", encoding="utf-8")
    return report


__all__ = [
    "AblationReport",
    "AblationRow",
    "CrossDomainReport",
    "SPATIAL_DOMAINS",
    "VARIANTS",
    "cross_domain_matrix",
    "run_ablation_suite",
    "variant_config",
]
