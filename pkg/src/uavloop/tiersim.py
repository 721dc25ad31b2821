"""Tiered deployment simulation: task placement, batch latency, reports.

Execution locations (onboard, edge, cloud) trade per-record compute cost
against link latency.  A logical-clock simulator streams a telemetry series
through a detector in batches, charging each batch a fixed overhead, a
per-record cost scaled by the tier's compute factor, and one link traversal.
Elapsed time for a stream therefore follows t = a + (b + link) * ceil(N/B)
+ c * N * factor, which amortizes toward t = a' + b'/B for large batches;
that two-parameter form is also what fit_latency_model recovers from
measured (batch size, elapsed) pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .detect import DetectionResult, Metrics, evaluate, percentile_threshold
from .errors import ConfigError, DimensionError, NumericError
from .inject import LabeledSeries
from .telemetry import TelemetrySeries, window_matrix

TIER_NAMES = ("onboard", "edge", "cloud")
TASKS = ("inference", "detection", "forecasting", "finetuning")

# Detection sits one hop out by default: flagging on the edge keeps round
# trips short while training-heavy work rides the slow link to the cloud.
DEFAULT_POLICY = {
    "inference": "onboard",
    "detection": "edge",
    "forecasting": "cloud",
    "finetuning": "cloud",
}


@dataclass(frozen=True)
class Tier:
    name: str
    compute_factor: float
    link_latency_ms: float = 0.0
    model_class: str = "small"

    def __post_init__(self) -> None:
        if self.name not in TIER_NAMES:
            raise ConfigError(f"tier name must be one of {TIER_NAMES}, got {self.name!r}")
        if not (self.compute_factor > 0 and math.isfinite(self.compute_factor)):
            raise ConfigError(f"compute_factor must be positive, got {self.compute_factor!r}")
        if not (self.link_latency_ms >= 0 and math.isfinite(self.link_latency_ms)):
            raise ConfigError(
                f"link_latency_ms must be non-negative, got {self.link_latency_ms!r}"
            )


def default_tiers() -> dict:
    return {
        "onboard": Tier("onboard", compute_factor=4.0, link_latency_ms=0.0, model_class="small"),
        "edge": Tier("edge", compute_factor=1.5, link_latency_ms=10.0, model_class="medium"),
        "cloud": Tier("cloud", compute_factor=1.0, link_latency_ms=150.0, model_class="large"),
    }


def validate_tiers(tiers: dict) -> None:
    missing = [name for name in TIER_NAMES if name not in tiers]
    if missing:
        raise ConfigError(f"tier set is missing {missing}")
    if not (
        tiers["cloud"].compute_factor
        <= tiers["edge"].compute_factor
        <= tiers["onboard"].compute_factor
    ):
        raise ConfigError("per-record cost must not increase moving from onboard to cloud")


def place(task: str, policy: dict | None = None, tiers: dict | None = None) -> Tier:
    """Resolve a task class to the tier that runs it."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}, expected one of {TASKS}")
    policy = DEFAULT_POLICY if policy is None else policy
    tiers = default_tiers() if tiers is None else tiers
    if task not in policy:
        raise ConfigError(f"placement policy does not cover task {task!r}")
    name = policy[task]
    if name not in tiers:
        raise ConfigError(f"policy places {task!r} on undefined tier {name!r}")
    return tiers[name]


@dataclass(frozen=True)
class LatencyModel:
    """t = a (once) + b (per batch) + c (per record); all in seconds."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        for name in ("a", "b", "c"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"latency coefficient {name} must be >= 0, got {v!r}")

    def batch_cost(
        self, n_records: int, compute_factor: float = 1.0, link_latency_ms: float = 0.0
    ) -> float:
        return self.b + self.c * n_records * compute_factor + link_latency_ms / 1000.0

    def elapsed(
        self,
        n_records: int,
        batch_size: float,
        compute_factor: float = 1.0,
        link_latency_ms: float = 0.0,
    ) -> float:
        """Amortized (continuous) form, treating N/B as exact."""
        if batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {batch_size}")
        per_batch = self.b + link_latency_ms / 1000.0
        return self.a + per_batch * n_records / batch_size + self.c * n_records * compute_factor


@dataclass(frozen=True)
class LatencyFit:
    """Least-squares fit of measured elapsed times to t = a' + b'/B."""

    a_prime: float
    b_prime: float
    batch_sizes: tuple
    elapsed_s: tuple
    residuals: tuple

    def predict(self, batch_size: float) -> float:
        return self.a_prime + self.b_prime / batch_size

    def to_latency_model(self, n_records: int) -> LatencyModel:
        """Interpret b' as a per-batch overhead amortized over n_records."""
        if n_records < 1:
            raise ConfigError(f"n_records must be positive, got {n_records}")
        return LatencyModel(a=max(self.a_prime, 0.0), b=self.b_prime / n_records, c=0.0)


def fit_latency_model(batch_sizes, elapsed_s) -> LatencyFit:
    b = np.asarray(batch_sizes, dtype=np.float64).ravel()
    t = np.asarray(elapsed_s, dtype=np.float64).ravel()
    if b.shape != t.shape:
        raise DimensionError(f"batch sizes {b.shape} and timings {t.shape} differ in length")
    if np.unique(b).size < 2:
        raise ConfigError("need at least 2 distinct batch sizes to fit a latency model")
    if (b < 1).any():
        raise ConfigError("batch sizes must be >= 1")
    if (t <= 0).any():
        raise ConfigError("elapsed times must be positive")
    design = np.column_stack([np.ones_like(b), 1.0 / b])
    coef, *_ = np.linalg.lstsq(design, t, rcond=None)
    pred = design @ coef
    residuals = tuple(float(abs(p - m) / m) for p, m in zip(pred, t))
    return LatencyFit(
        a_prime=float(coef[0]),
        b_prime=float(coef[1]),
        batch_sizes=tuple(float(v) for v in b),
        elapsed_s=tuple(float(v) for v in t),
        residuals=residuals,
    )


class PersistenceDetector:
    """Scores each record by its mean squared jump from the previous record.

    Needs no training, so it suits latency experiments where the detector
    itself should not vary.  The first record of a stream scores 0.
    """

    def __init__(self, anomaly_ratio: float = 20.0):
        if not (0.0 < anomaly_ratio < 100.0):
            raise ConfigError(f"anomaly_ratio must be in (0, 100), got {anomaly_ratio}")
        self.anomaly_ratio = float(anomaly_ratio)

    def losses(self, matrix: np.ndarray) -> np.ndarray:
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1:
            raise DimensionError(f"expected a non-empty (N, D) matrix, got shape {m.shape}")
        jumps = np.mean(np.diff(m, axis=0) ** 2, axis=1)
        return np.concatenate([[0.0], jumps])


class PredictorDetector:
    """Scores records by reconstruction loss under a trained predictor."""

    def __init__(self, predictor, anomaly_ratio: float = 20.0):
        if not (0.0 < anomaly_ratio < 100.0):
            raise ConfigError(f"anomaly_ratio must be in (0, 100), got {anomaly_ratio}")
        if predictor.config.horizon != predictor.config.seq_len:
            raise ConfigError("stream scoring needs a reconstruction predictor")
        self.predictor = predictor
        self.anomaly_ratio = float(anomaly_ratio)

    def losses(self, matrix: np.ndarray) -> np.ndarray:
        from .detect import record_losses

        data = window_matrix(matrix, self.predictor.config.seq_len, stride=1, mode="reconstruction")
        indices, losses = record_losses(self.predictor, data)
        n = matrix.shape[0]
        if indices.size != n:
            raise DimensionError("stride-1 reconstruction must cover every record")
        out = np.empty(n)
        out[indices] = losses
        return out


def _index_runs(indices: np.ndarray) -> list[tuple[int, int]]:
    if indices.size == 0:
        return []
    breaks = np.diff(indices) > 1
    starts = indices[np.concatenate([[True], breaks])]
    ends = indices[np.concatenate([breaks, [True]])]
    return [(int(s), int(e)) for s, e in zip(starts, ends)]


def flag_runs(flags) -> list[tuple[int, int]]:
    """Contiguous True runs as inclusive (start, end) index pairs."""
    f = np.asarray(flags, dtype=bool).ravel()
    return _index_runs(np.nonzero(f)[0])


@dataclass(frozen=True)
class AnomalyReport:
    mission_id: str
    tier: str
    ranges: tuple
    threshold: float
    metrics: Metrics | None
    timestamp: float

    def to_json(self) -> str:
        payload = {
            "mission_id": self.mission_id,
            "tier": self.tier,
            "ranges": [[int(s), int(e)] for s, e in self.ranges],
            "threshold": self.threshold,
            "metrics": None if self.metrics is None else self.metrics.as_dict(),
            "timestamp": self.timestamp,
        }
        return json.dumps(payload, sort_keys=True)


def report_from_json(text: str) -> AnomalyReport:
    payload = json.loads(text)
    metrics = None
    if payload.get("metrics") is not None:
        m = payload["metrics"]
        metrics = Metrics(
            tp=m["tp"],
            tn=m["tn"],
            fp=m["fp"],
            fn=m["fn"],
            accuracy=m["accuracy"],
            precision=m["precision"],
            recall=m["recall"],
            f_score=m["f_score"],
        )
    return AnomalyReport(
        mission_id=payload["mission_id"],
        tier=payload["tier"],
        ranges=tuple((int(s), int(e)) for s, e in payload["ranges"]),
        threshold=payload["threshold"],
        metrics=metrics,
        timestamp=payload["timestamp"],
    )


def emit_report(
    detection: DetectionResult,
    mission_id: str,
    tier: str = "edge",
    timestamp: float = 0.0,
) -> AnomalyReport:
    """One report covering a whole detection pass; empty range list is valid."""
    flagged = detection.record_indices[detection.predicted]
    ranges = tuple(_index_runs(flagged))
    return AnomalyReport(
        mission_id=mission_id,
        tier=tier,
        ranges=ranges,
        threshold=detection.threshold,
        metrics=detection.metrics,
        timestamp=timestamp,
    )


@dataclass(frozen=True)
class StreamStats:
    batch_size: int
    records: int
    n_batches: int
    elapsed_s: float
    metrics: Metrics | None


def simulate_stream(
    data,
    tier: Tier,
    batch_size: int,
    latency_model: LatencyModel,
    detector,
    mission_id: str = "mission",
) -> tuple[StreamStats, list[AnomalyReport]]:
    """Stream a series through the detector in order, batch by batch.

    The threshold comes from the full stream's loss distribution so the set
    of flagged records is a property of the data, not of the batch size;
    batching only moves the logical clock.  One report is emitted per
    contiguous flagged run, stamped with the clock at the end of the batch
    that carried the run's last record.
    """
    labels = None
    if isinstance(data, LabeledSeries):
        labels = data.labels
        series = data.series
    elif isinstance(data, TelemetrySeries):
        series = data
    else:
        raise ConfigError(f"cannot stream a {type(data).__name__}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    matrix = series.features()
    n = matrix.shape[0]
    losses = np.asarray(detector.losses(matrix), dtype=np.float64)
    if losses.shape != (n,):
        raise DimensionError(f"detector returned {losses.shape}, expected ({n},)")
    if not np.isfinite(losses).all():
        raise NumericError("detector produced non-finite losses")
    threshold = percentile_threshold(losses, detector.anomaly_ratio)
    flags = losses > threshold
    clock = latency_model.a
    batch_end_clock = []
    for start in range(0, n, batch_size):
        count = min(batch_size, n - start)
        clock += latency_model.batch_cost(count, tier.compute_factor, tier.link_latency_ms)
        batch_end_clock.append(clock)
    reports = []
    for s, e in flag_runs(flags):
        reports.append(
            AnomalyReport(
                mission_id=mission_id,
                tier=tier.name,
                ranges=((s, e),),
                threshold=threshold,
                metrics=None,
                timestamp=batch_end_clock[e // batch_size],
            )
        )
    metrics = evaluate(flags, labels, detector.anomaly_ratio) if labels is not None else None
    stats = StreamStats(
        batch_size=int(batch_size),
        records=n,
        n_batches=len(batch_end_clock),
        elapsed_s=clock,
        metrics=metrics,
    )
    return stats, reports


def run_batch_experiment(
    data,
    batch_sizes,
    tier: Tier,
    latency_model: LatencyModel,
    detector,
    mission_id: str = "mission",
) -> list[tuple[StreamStats, list[AnomalyReport]]]:
    sizes = [int(b) for b in batch_sizes]
    if not sizes:
        raise ConfigError("batch size list is empty")
    if any(b < 1 for b in sizes):
        raise ConfigError("batch sizes must be >= 1")
    return [
        simulate_stream(data, tier, b, latency_model, detector, mission_id=mission_id)
        for b in sizes
    ]


def batch_experiment_csv(results) -> str:
    """CSV rows for a batch sweep, one line per batch size."""
    lines = ["batch_size,elapsed_s,accuracy,precision,recall,f_score"]
    for stats, _ in results:
        m = stats.metrics
        if m is None:
            cells = ["", "", "", ""]
        else:
            cells = [repr(m.accuracy), repr(m.precision), repr(m.recall), repr(m.f_score)]
        lines.append(f"{stats.batch_size},{stats.elapsed_s!r}," + ",".join(cells))
    return "\n".join(lines) + "\n"
