"""Sequential inference over candidate locations.

Each location starts from an uninformative belief and repeatedly asks the
policy what to do: evaluate some part (pay for it, add its response to the
running score, update the belief) or stop with a label.  A foreground stop
evaluates whatever parts remain so the reported score is the complete
additive score; a background stop reports negative infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArityMismatchError, FormatError, InvalidActionError, ProviderError
from .likelihoods import ScoreLikelihood
from .policy import (
    LABEL_NEG,
    LABEL_POS,
    CostParams,
    Policy,
    action_part,
    belief_update,
    is_part_action,
    query_policy,
)

POS_LABEL = "pos"
NEG_LABEL = "neg"


class ResponseProvider:
    """Source of part responses, keyed by (location, part).

    Responses must be deterministic per (location, part); the engine asks for
    each pair at most once per pass.
    """

    n_parts: int
    n_locations: int

    def get_response(self, location_id: int, part_id: int) -> float:
        raise NotImplementedError


class MatrixResponseProvider(ResponseProvider):
    """Responses backed by a dense (n_locations, n_parts) matrix."""

    def __init__(self, scores):
        scores = np.asarray(scores, dtype=float)
        if scores.ndim != 2:
            raise ValueError(f"scores must be 2-D, got shape {scores.shape}")
        self.scores = scores

    @property
    def n_locations(self) -> int:
        return self.scores.shape[0]

    @property
    def n_parts(self) -> int:
        return self.scores.shape[1]

    def get_response(self, location_id: int, part_id: int) -> float:
        return float(self.scores[location_id, part_id])


@dataclass(frozen=True)
class DetectorModel:
    """Additive-score detector: per-part likelihoods, a bias term, and costs."""

    bias: float
    likelihoods: tuple[ScoreLikelihood, ...]
    costs: CostParams

    def __post_init__(self):
        likelihoods = tuple(self.likelihoods)
        if not likelihoods:
            raise ValueError("model needs at least one part")
        for k, lik in enumerate(likelihoods):
            if lik.part_id != k:
                raise ValueError(f"likelihoods must be ordered by part_id 0..n, got {lik.part_id} at {k}")
        object.__setattr__(self, "likelihoods", likelihoods)

    @property
    def n_parts(self) -> int:
        return len(self.likelihoods)


@dataclass(frozen=True)
class DetectionResult:
    """Outcome at one location.

    `tau` is the number of parts evaluated when the stop decision fired;
    a foreground label then evaluates the remaining parts, so
    `parts_evaluated` holds all parts for positives.  `partial_score` keeps
    the running sum at the stop decision for diagnostics even though the
    official score of a background label is -inf.
    """

    location_id: int
    label: str
    score: float
    parts_evaluated: tuple[int, ...]
    tau: int
    final_belief: float
    partial_score: float


@dataclass(frozen=True)
class InferenceStats:
    """Aggregates over one inference pass; non_root_evals excludes part 0."""

    n_locations: int
    non_root_evals: int
    n_positive: int
    mean_tau: float


def _response(provider: ResponseProvider, location_id: int, part_id: int) -> float:
    try:
        return float(provider.get_response(location_id, part_id))
    except Exception as exc:
        raise ProviderError(f"response provider failed at location {location_id}, part {part_id}") from exc


def run_location(model: DetectorModel, policy: Policy, provider: ResponseProvider,
                 location_id: int) -> DetectionResult:
    """Label one location by querying the policy until it stops."""
    n = model.n_parts
    if policy.n_parts != n:
        raise ArityMismatchError(f"policy has {policy.n_parts} parts, model has {n}")
    mask = 0
    p = 0.5
    score = 0.0
    evaluated: list[int] = []
    for _ in range(n + 1):
        action = query_policy(policy, mask, p)
        if action == LABEL_POS:
            tau = len(evaluated)
            partial = score
            for k in range(n):
                if not (mask >> k) & 1:
                    score += _response(provider, location_id, k)
                    evaluated.append(k)
            score += model.bias
            return DetectionResult(location_id, POS_LABEL, score, tuple(evaluated),
                                   tau, final_belief=p, partial_score=partial)
        if action == LABEL_NEG:
            return DetectionResult(location_id, NEG_LABEL, float("-inf"), tuple(evaluated),
                                   len(evaluated), final_belief=p, partial_score=score)
        k = action_part(action)
        if (mask >> k) & 1:
            raise InvalidActionError(f"policy named already-used part {k} at mask {mask:b}")
        m = _response(provider, location_id, k)
        score += m
        evaluated.append(k)
        p = belief_update(p, m, model.likelihoods[k])
        mask |= 1 << k
    # All parts used; an admissible policy must label now.
    action = query_policy(policy, mask, p)
    if is_part_action(action):
        raise InvalidActionError("policy did not label at the full mask")
    partial = score
    if action == LABEL_POS:
        score += model.bias
        label = POS_LABEL
        partial = score
    else:
        score = float("-inf")
        label = NEG_LABEL
    return DetectionResult(location_id, label, score, tuple(evaluated),
                           len(evaluated), final_belief=p, partial_score=partial)


def run_grid(model: DetectorModel, policy: Policy,
             provider: ResponseProvider) -> tuple[list[DetectionResult], InferenceStats]:
    """Run every location independently and aggregate evaluation statistics."""
    results = [run_location(model, policy, provider, loc)
               for loc in range(provider.n_locations)]
    non_root = sum(1 for r in results for k in r.parts_evaluated if k > 0)
    n_positive = sum(1 for r in results if r.label == POS_LABEL)
    mean_tau = float(np.mean([r.tau for r in results])) if results else 0.0
    stats = InferenceStats(n_locations=len(results), non_root_evals=non_root,
                           n_positive=n_positive, mean_tau=mean_tau)
    return results, stats


def full_score(model: DetectorModel, provider: ResponseProvider, location_id: int) -> float:
    """Exhaustive additive score: every part response plus the bias."""
    score = 0.0
    for k in range(model.n_parts):
        score += _response(provider, location_id, k)
    return score + model.bias


# ---------------------------------------------------------------------------
# Response files: dense CSV (location_id,part_id,score) or a binary matrix
# with an ASCII "n_locations,n_parts" header line and row-major 8-byte
# little-endian scores.  Results files: one CSV row per location.

def save_responses_csv(scores, path) -> None:
    scores = np.asarray(scores, dtype=float)
    lines = ["location_id,part_id,score"]
    for loc in range(scores.shape[0]):
        lines.extend(f"{loc},{k},{float(scores[loc, k])!r}" for k in range(scores.shape[1]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_responses_csv(path) -> MatrixResponseProvider:
    import csv

    entries: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"location_id", "part_id", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise FormatError(f"{path}: expected header location_id,part_id,score")
        for lineno, row in enumerate(reader, start=2):
            try:
                entries[(int(row["location_id"]), int(row["part_id"]))] = float(row["score"])
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad row {row!r}") from exc
    if not entries:
        return MatrixResponseProvider(np.empty((0, 0)))
    n_loc = max(loc for loc, _ in entries) + 1
    n_parts = max(part for _, part in entries) + 1
    if len(entries) != n_loc * n_parts:
        raise FormatError(f"{path}: responses must be dense, "
                          f"got {len(entries)} of {n_loc * n_parts} (location, part) pairs")
    scores = np.empty((n_loc, n_parts))
    for (loc, part), value in entries.items():
        scores[loc, part] = value
    return MatrixResponseProvider(scores)


def save_responses_bin(scores, path) -> None:
    scores = np.asarray(scores, dtype=float)
    header = f"{scores.shape[0]},{scores.shape[1]}\n".encode()
    Path(path).write_bytes(header + scores.astype("<f8").tobytes())


def load_responses_bin(path) -> MatrixResponseProvider:
    data = Path(path).read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing n_locations,n_parts header")
    try:
        n_loc, n_parts = (int(v) for v in data[:newline].decode().split(","))
    except (UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed header line") from exc
    body = data[newline + 1:]
    if len(body) != n_loc * n_parts * 8:
        raise FormatError(f"{path}: payload is {len(body)} bytes, expected {n_loc * n_parts * 8}")
    scores = np.frombuffer(body, dtype="<f8").reshape(n_loc, n_parts).astype(float)
    return MatrixResponseProvider(scores)


def load_responses(path) -> MatrixResponseProvider:
    """Dispatch on extension: .csv reads the CSV schema, anything else binary."""
    if str(path).endswith(".csv"):
        return load_responses_csv(path)
    return load_responses_bin(path)


def save_results_csv(results, path) -> None:
    lines = ["location_id,label,score,tau,parts_order"]
    for r in results:
        parts = ";".join(str(k) for k in r.parts_evaluated)
        lines.append(f"{r.location_id},{r.label},{float(r.score)!r},{r.tau},{parts}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_results_csv(path) -> list[DetectionResult]:
    """Read back a results file.

    Belief and partial-score diagnostics are not part of the schema and come
    back as NaN.
    """
    import csv

    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"location_id", "label", "score", "tau", "parts_order"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise FormatError(f"{path}: expected header location_id,label,score,tau,parts_order")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = row["label"]
                if label not in (POS_LABEL, NEG_LABEL):
                    raise ValueError(f"bad label {label!r}")
                parts = tuple(int(v) for v in row["parts_order"].split(";") if v != "")
                out.append(DetectionResult(
                    location_id=int(row["location_id"]),
                    label=label,
                    score=float(row["score"]),
                    parts_evaluated=parts,
                    tau=int(row["tau"]),
                    final_belief=math.nan,
                    partial_score=math.nan,
                ))
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad row {row!r}") from exc
    return out
