"""Per-sample evaluation records and the summary statistics computed from them."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .augment import AugmentedDataset
from .errors import DegenerateVariance, EmptyRecords, FormatError
from .nn import NetworkModel, softmax

ALL_RECORDS = "all"
CORRECT_ONLY = "correct"


@dataclass(frozen=True)
class EvalRecord:
    q: float
    true_label: int
    predicted: int
    confidence: float


class EvalRecords:
    """Column-oriented storage for a sequence of :class:`EvalRecord`."""

    def __init__(self, q, true_label, predicted, confidence):
        self.q = np.asarray(q, dtype=np.float64)
        self.true_label = np.asarray(true_label, dtype=np.int64)
        self.predicted = np.asarray(predicted, dtype=np.int64)
        self.confidence = np.asarray(confidence, dtype=np.float64)
        n = len(self.q)
        if not (len(self.true_label) == len(self.predicted) == len(self.confidence) == n):
            raise ValueError("record columns differ in length")

    @classmethod
    def from_records(cls, records) -> "EvalRecords":
        if isinstance(records, cls):
            return records
        records = list(records)
        return cls(
            [r.q for r in records],
            [r.true_label for r in records],
            [r.predicted for r in records],
            [r.confidence for r in records],
        )

    def __len__(self) -> int:
        return len(self.q)

    def __iter__(self) -> Iterator[EvalRecord]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return EvalRecord(float(self.q[i]), int(self.true_label[i]), int(self.predicted[i]),
                              float(self.confidence[i]))
        return EvalRecords(self.q[i], self.true_label[i], self.predicted[i], self.confidence[i])

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.true_label

    def population(self, which: str = ALL_RECORDS) -> "EvalRecords":
        if which == ALL_RECORDS:
            return self
        if which == CORRECT_ONLY:
            return self[self.correct]
        raise ValueError(f"population must be {ALL_RECORDS!r} or {CORRECT_ONLY!r}")


def _records(records) -> EvalRecords:
    rec = EvalRecords.from_records(records)
    if len(rec) == 0:
        raise EmptyRecords("no evaluation records")
    return rec


def evaluate_model(model, test: AugmentedDataset, batch_size: int = 1000) -> EvalRecords:
    """Classify every test sample with the bare network (no head).

    ``model`` may be a :class:`NetworkModel` or anything with a ``.model``
    attribute holding one.
    """
    net: NetworkModel = getattr(model, "model", model)
    logits = net.predict_logits(test.pixels, batch_size=batch_size)
    probs = softmax(logits)
    predicted = np.argmax(probs, axis=1)
    return EvalRecords(test.q, test.labels, predicted, probs[np.arange(len(probs)), predicted])


def accuracy(records) -> float:
    rec = _records(records)
    return 100.0 * rec.correct.sum() / len(rec)


def error_free_threshold(records) -> float:
    """Highest confidence among misclassified records (0 when there are none)."""
    rec = _records(records)
    wrong = rec.confidence[~rec.correct]
    return float(wrong.max()) if wrong.size else 0.0


def error_free_rate(records, denominator: str = ALL_RECORDS) -> float:
    """Percent of records that are correct with confidence strictly above the threshold.

    ``denominator="correct"`` divides by the number of correct records instead
    of by all records.
    """
    rec = _records(records)
    hits = (rec.correct & (rec.confidence > error_free_threshold(rec))).sum()
    if denominator == ALL_RECORDS:
        total = len(rec)
    elif denominator == CORRECT_ONLY:
        total = rec.correct.sum()
        if total == 0:
            return 0.0
    else:
        raise ValueError(f"denominator must be {ALL_RECORDS!r} or {CORRECT_ONLY!r}")
    return 100.0 * hits / total


def average_ranks(x) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    ranks = np.empty(len(x))
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    return ranks


def rank_correlation(x, y) -> float:
    rx, ry = average_ranks(x), average_ranks(y)
    if len(rx) < 2:
        raise EmptyRecords("need at least two records")
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = (dx * dx).sum(), (dy * dy).sum()
    if sxx == 0 or syy == 0:
        raise DegenerateVariance("one variable is constant")
    return float(np.clip((dx * dy).sum() / np.sqrt(sxx * syy), -1.0, 1.0))


def spearman(records, population: str = ALL_RECORDS) -> float:
    """Spearman correlation between blur level and confidence."""
    rec = _records(records).population(population)
    return rank_correlation(rec.q, rec.confidence)


@dataclass(frozen=True)
class MetricsReport:
    quality_percent: float
    error_free_threshold: float
    error_free_rate_percent: float
    spearman_rho: float
    sample_count: int

    def as_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.__dict__.items())

    @staticmethod
    def csv_header() -> str:
        return "quality_percent,error_free_threshold,error_free_rate_percent,spearman_rho,sample_count"

    def csv_row(self) -> str:
        return ",".join(str(v) for v in self.__dict__.values())


def metrics_report(records, denominator: str = ALL_RECORDS, population: str = ALL_RECORDS) -> MetricsReport:
    rec = _records(records)
    return MetricsReport(
        quality_percent=accuracy(rec),
        error_free_threshold=error_free_threshold(rec),
        error_free_rate_percent=error_free_rate(rec, denominator),
        spearman_rho=spearman(rec, population),
        sample_count=len(rec),
    )


def export_correlation_field(records, path) -> None:
    """CSV ``q,confidence,correct`` with one row per record (9 significant digits)."""
    rec = EvalRecords.from_records(records)
    with open(path, "w", newline="") as fh:
        fh.write("q,confidence,correct\n")
        for q, c, ok in zip(rec.q, rec.confidence, rec.correct):
            fh.write(f"{q:.9g},{c:.9g},{int(ok)}\n")


def read_correlation_field(path) -> EvalRecords:
    """Parse a correlation-field CSV back into records.

    Only ``q``, ``confidence`` and correctness survive the export, so labels
    are reconstructed as ``true=0`` and ``predicted=0/1`` for correct/incorrect.
    """
    q, conf, ok = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["q", "confidence", "correct"]:
            raise FormatError(f"{path}: expected header q,confidence,correct, got {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                a, b, c = row
                q.append(float(a))
                conf.append(float(b))
                if c not in ("0", "1"):
                    raise ValueError(c)
                ok.append(c == "1")
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: malformed row {row}") from exc
    ok = np.array(ok, dtype=bool)
    return EvalRecords(q, np.zeros(len(ok), dtype=np.int64), (~ok).astype(np.int64), conf)
