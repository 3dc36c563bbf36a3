"""Synthetic detectors with known ground truth, and the evaluation quantities.

Per part, positive and negative responses are unit-variance Gaussians whose
means are separated by `separation` scaled by a per-part informativeness
multiplier.  The stored likelihoods are fitted from a held-out sample draw
rather than the analytic truth, so policies face the same estimation error a
deployed detector would.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, UndefinedMetricError
from .inference import (
    DetectorModel,
    InferenceStats,
    MatrixResponseProvider,
    POS_LABEL,
    run_grid,
)
from .likelihoods import ScoreSampleSet, fit_part_likelihood
from .policy import BeliefGrid, CostParams, train_policy

log = logging.getLogger(__name__)

DEFAULT_PROFILE_RATIO = 0.8


@dataclass(frozen=True)
class SyntheticSpec:
    """Configuration of one synthetic detector + location grid."""

    n_parts: int
    separation: float
    prior_positive: float
    n_locations: int
    seed: int
    informativeness_profile: tuple[float, ...] | None = None
    train_samples: int = 2000

    def __post_init__(self):
        if self.n_parts < 1:
            raise InvalidParameterError(f"n_parts must be >= 1, got {self.n_parts}")
        if self.n_locations < 1:
            raise InvalidParameterError(f"n_locations must be >= 1, got {self.n_locations}")
        if not (self.separation >= 0.0 and math.isfinite(self.separation)):
            raise InvalidParameterError(f"separation must be >= 0, got {self.separation}")
        if not (0.0 <= self.prior_positive <= 1.0):
            raise InvalidParameterError(f"prior_positive must be in [0, 1], got {self.prior_positive}")
        if self.train_samples < 2:
            raise InvalidParameterError("train_samples must be >= 2")
        if self.informativeness_profile is not None:
            profile = tuple(float(v) for v in self.informativeness_profile)
            if len(profile) != self.n_parts:
                raise InvalidParameterError("informativeness_profile must have one multiplier per part")
            if any(v < 0.0 for v in profile):
                raise InvalidParameterError("informativeness multipliers must be >= 0")
            object.__setattr__(self, "informativeness_profile", profile)

    @property
    def multipliers(self) -> np.ndarray:
        """Per-part separation multipliers; defaults to a descending geometric sequence."""
        if self.informativeness_profile is not None:
            return np.asarray(self.informativeness_profile)
        return DEFAULT_PROFILE_RATIO ** np.arange(self.n_parts)


def make_synthetic(spec: SyntheticSpec,
                   costs: CostParams | None = None
                   ) -> tuple[DetectorModel, MatrixResponseProvider, np.ndarray]:
    """Build (model, response provider, truth labels) from a spec, deterministically.

    Truth labels are Bernoulli(prior); responses come from the labeled class's
    Gaussian.  Likelihoods are fitted from an independent training draw.
    """
    rng = np.random.default_rng(spec.seed)
    means = 0.5 * spec.separation * spec.multipliers
    truth = rng.random(spec.n_locations) < spec.prior_positive
    noise = rng.standard_normal((spec.n_locations, spec.n_parts))
    scores = noise + np.where(truth[:, None], means[None, :], -means[None, :])
    likelihoods = []
    for k in range(spec.n_parts):
        pos = rng.standard_normal(spec.train_samples) + means[k]
        neg = rng.standard_normal(spec.train_samples) - means[k]
        likelihoods.append(fit_part_likelihood(ScoreSampleSet(k, pos, neg)))
    model = DetectorModel(bias=0.0, likelihoods=tuple(likelihoods),
                          costs=costs or CostParams(20.0, 5.0))
    return model, MatrixResponseProvider(scores), truth


def compute_rnpe(stats: InferenceStats, n_parts: int, n_locations: int) -> float:
    """Ratio of exhaustive non-root evaluations to the engine's.

    The exhaustive baseline evaluates every non-root part everywhere, i.e.
    (n_parts - 1) * n_locations times.  An engine that never evaluated a
    non-root part gets the infinity flag rather than an error.
    """
    if stats.non_root_evals == 0:
        return math.inf
    return (n_parts - 1) * n_locations / stats.non_root_evals


@dataclass(frozen=True)
class ClassificationCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def fp_rate(self) -> float:
        return self.fp / (self.fp + self.tn) if (self.fp + self.tn) else 0.0

    @property
    def fn_rate(self) -> float:
        return self.fn / (self.fn + self.tp) if (self.fn + self.tp) else 0.0

    @property
    def error_rate(self) -> float:
        total = self.tp + self.fp + self.tn + self.fn
        return (self.fp + self.fn) / total if total else 0.0


def classification_counts(results, truth) -> ClassificationCounts:
    truth = np.asarray(truth, dtype=bool)
    tp = fp = tn = fn = 0
    for r in results:
        predicted_pos = r.label == POS_LABEL
        actual_pos = bool(truth[r.location_id])
        if predicted_pos and actual_pos:
            tp += 1
        elif predicted_pos:
            fp += 1
        elif actual_pos:
            fn += 1
        else:
            tn += 1
    return ClassificationCounts(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class PrCurve:
    precision: np.ndarray
    recall: np.ndarray
    thresholds: np.ndarray
    average_precision: float


def precision_recall(results, truth) -> PrCurve:
    """Location-level precision/recall sweep over score thresholds.

    Background-labeled locations carry -inf scores and therefore rank below
    every foreground-labeled one; equal scores move across a threshold as one
    group.  Average precision integrates the interpolated (monotone envelope)
    precision over recall.
    """
    truth = np.asarray(truth, dtype=bool)
    n_positive = int(truth.sum())
    if n_positive == 0:
        raise UndefinedMetricError("precision/recall needs at least one positive location")
    scores = np.array([r.score for r in results])
    labels = truth[np.array([r.location_id for r in results])]
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    labels = labels[order]
    # one threshold per distinct score value; equality (not diff) so tied
    # -inf groups stay single thresholds
    boundaries = np.flatnonzero(scores[1:] != scores[:-1]) if scores.size else np.array([], dtype=int)
    ends = np.concatenate([boundaries, [scores.size - 1]]) if scores.size else np.array([], dtype=int)
    tp_cum = np.cumsum(labels)[ends]
    n_cum = ends + 1
    precision = tp_cum / n_cum
    recall = tp_cum / n_positive
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    ap = float(((recall - recall_prev) * envelope).sum())
    return PrCurve(precision=precision, recall=recall,
                   thresholds=scores[ends], average_precision=ap)


@dataclass(frozen=True)
class SweepRow:
    lambda_fp: float
    lambda_fn: float
    ap: float
    rnpe: float
    mean_tau: float
    fp_rate: float
    fn_rate: float


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    failures: list[tuple[float, float, str]] = field(default_factory=list)

    def diagonal_rows(self) -> list[SweepRow]:
        return sorted((r for r in self.rows if r.lambda_fp == r.lambda_fn),
                      key=lambda r: r.lambda_fp)

    def diagonal_diagnostics(self) -> dict:
        """Trend checks along the equal-cost diagonal: error down, savings ratio down."""
        diag = self.diagonal_rows()
        errors = [r.fp_rate + r.fn_rate for r in diag]
        rnpes = [r.rnpe for r in diag]
        return {
            "lambdas": [r.lambda_fp for r in diag],
            "total_error": errors,
            "rnpe": rnpes,
            "error_nonincreasing": all(b <= a for a, b in zip(errors, errors[1:])),
            "rnpe_nonincreasing": all(b <= a for a, b in zip(rnpes, rnpes[1:])),
        }


def evaluate_operating_point(model: DetectorModel, provider, truth,
                             costs: CostParams, grid: BeliefGrid | None = None) -> SweepRow:
    """Train a policy at one cost point and measure it on the provider."""
    policy = train_policy(model.likelihoods, costs, grid or BeliefGrid())
    results, stats = run_grid(model, policy, provider)
    counts = classification_counts(results, truth)
    ap = precision_recall(results, truth).average_precision
    return SweepRow(
        lambda_fp=costs.lambda_fp,
        lambda_fn=costs.lambda_fn,
        ap=ap,
        rnpe=compute_rnpe(stats, model.n_parts, provider.n_locations),
        mean_tau=stats.mean_tau,
        fp_rate=counts.fp_rate,
        fn_rate=counts.fn_rate,
    )


def _sweep_job(args):
    model, provider, truth, lam_fp, lam_fn, d = args
    return evaluate_operating_point(model, provider, truth,
                                    CostParams(lam_fp, lam_fn), BeliefGrid(d))


def lambda_sweep(spec: SyntheticSpec, lambda_grid, grid: BeliefGrid | None = None,
                 threads: int = 1) -> SweepResult:
    """Train and evaluate one policy per (lambda_fp, lambda_fn) grid point.

    All points share the same synthetic likelihoods and response grid.  A
    failing point is recorded and skipped rather than aborting the sweep.
    """
    points = [(float(fp), float(fn)) for fp, fn in lambda_grid]
    if not points:
        raise InvalidParameterError("lambda grid must be non-empty")
    if len(set(points)) != len(points):
        raise InvalidParameterError("lambda grid points must be unique")
    grid = grid or BeliefGrid()
    model, provider, truth = make_synthetic(spec)
    out = SweepResult()
    jobs = [(model, provider, truth, fp, fn, grid.d) for fp, fn in points]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            settled = list(pool.map(_try_sweep_job, jobs))
    else:
        settled = [_try_sweep_job(job) for job in jobs]
    for (fp, fn), (row, error) in zip(points, settled):
        if row is not None:
            out.rows.append(row)
        else:
            log.warning("sweep point (%s, %s) failed: %s", fp, fn, error)
            out.failures.append((fp, fn, error))
    diag = out.diagonal_diagnostics()
    if len(diag["lambdas"]) > 1:
        log.info("diagonal diagnostics: %s", diag)
    return out


def _try_sweep_job(args):
    try:
        return _sweep_job(args), None
    except Exception as exc:  # sweep rows fail independently
        return None, f"{type(exc).__name__}: {exc}"


def save_sweep_csv(result: SweepResult, path) -> None:
    from pathlib import Path

    lines = ["lambda_fp,lambda_fn,ap,rnpe,mean_tau,fp_rate,fn_rate"]
    for r in result.rows:
        lines.append(f"{float(r.lambda_fp)!r},{float(r.lambda_fn)!r},{float(r.ap)!r},"
                     f"{float(r.rnpe)!r},{float(r.mean_tau)!r},{float(r.fp_rate)!r},"
                     f"{float(r.fn_rate)!r}")
    Path(path).write_text("\n".join(lines) + "\n")
