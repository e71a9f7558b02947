"""Datasets, fidelity metrics, epsilon-halving sweeps, and reports."""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baseline import BaselineConfig, api_attack_extract
from .channel import ChannelModel, ChannelSession, label_only_oracle, make_oracle
from .errors import FeatureNotFoundError, PathDeviationError, SchemaError
from .extraction import dt_extraction
from .trees import DecisionTree, infer


@dataclass
class Dataset:
    """Rows of (feature vector, label) plus derived per-feature ranges."""

    rows: list[tuple[list[float], object]]
    feature_names: Optional[list[str]] = None
    ranges_low: list[float] = field(default_factory=list)
    ranges_high: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.rows and not self.ranges_low:
            self.ranges_low, self.ranges_high = infer_ranges(self, margin=0.0)

    @property
    def num_features(self) -> int:
        return len(self.rows[0][0]) if self.rows else 0

    def inputs(self) -> list[list[float]]:
        return [row[0] for row in self.rows]

    def labels(self) -> list[object]:
        return [row[1] for row in self.rows]


def load_dataset(path, header: bool = False) -> Dataset:
    """Read a CSV whose last column is the label; features are numeric.

    Integer-looking labels load as ints, other numerics as floats, and
    anything else as strings (class names).
    """
    rows: list[tuple[list[float], object]] = []
    names: Optional[list[str]] = None
    width: Optional[int] = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if not record:
                continue
            if header and lineno == 1:
                names = record[:-1]
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise SchemaError(
                    f"row {lineno}: {len(record)} columns, expected {width}")
            features = []
            for col, cell in enumerate(record[:-1]):
                try:
                    features.append(float(cell))
                except ValueError:
                    raise SchemaError(
                        f"row {lineno}, column {col + 1}: non-numeric feature {cell!r}")
            rows.append((features, _parse_label(record[-1])))
    if not rows:
        raise SchemaError("dataset has no data rows")
    return Dataset(rows=rows, feature_names=names)


def _parse_label(cell: str) -> object:
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def infer_ranges(dataset: Dataset, margin: float = 0.05) -> tuple[list[float], list[float]]:
    """Per-feature [min - margin*span, max + margin*span]."""
    X = np.asarray([row[0] for row in dataset.rows], dtype=float)
    lows, highs = X.min(axis=0), X.max(axis=0)
    span = highs - lows
    span[span == 0] = 1.0
    return (lows - margin * span).tolist(), (highs + margin * span).tolist()


def split_dataset(dataset: Dataset, holdout: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Shuffle rows and split off a held-out fraction: (train, holdout).

    Fidelity defaults to the full dataset; this is the opt-in split for
    measuring on rows the trainer never saw.
    """
    if not 0.0 < holdout < 1.0:
        raise ValueError("holdout fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(dataset.rows))
    cut = max(1, int(round(holdout * len(dataset.rows))))
    held = [dataset.rows[i] for i in order[:cut]]
    train = [dataset.rows[i] for i in order[cut:]]
    if not train:
        raise ValueError("holdout fraction leaves no training rows")
    return (Dataset(rows=train, feature_names=dataset.feature_names),
            Dataset(rows=held, feature_names=dataset.feature_names))


def uniform_inputs(ranges_low: Sequence[float], ranges_high: Sequence[float],
                   n: int, seed: int = 0) -> list[list[float]]:
    """n inputs sampled uniformly inside the feature ranges."""
    rng = np.random.default_rng(seed)
    lows = np.asarray(ranges_low, dtype=float)
    highs = np.asarray(ranges_high, dtype=float)
    return rng.uniform(lows, highs, size=(n, len(lows))).tolist()


def threshold_margin(tree: DecisionTree) -> float:
    """Half the smallest same-feature gap between the tree's thresholds
    (and between thresholds and range limits)."""
    per_feature: dict[int, list[float]] = {}
    for node in tree.inner_nodes():
        per_feature.setdefault(node.feature, []).append(node.threshold)
    best = np.inf
    for f, values in per_feature.items():
        values = sorted(set(values))
        best = min(best, values[0] - tree.ranges_low[f],
                   tree.ranges_high[f] - values[-1])
        for a, b in zip(values, values[1:]):
            best = min(best, b - a)
    return float(best / 2) if np.isfinite(best) else np.inf


def boundary_margin_inputs(tree: DecisionTree, n: int, seed: int = 0,
                           margin: Optional[float] = None) -> list[list[float]]:
    """Uniform samples nudged off the target's decision boundaries.

    Training rows never sit on a trained tree's thresholds (those are
    midpoints between data values), so dataset-style fidelity is immune
    to sub-margin threshold error. This sampler reproduces that property
    for synthetic targets: any coordinate closer than ``margin`` to one
    of the tree's thresholds on that feature is pushed to exactly
    ``margin`` away, on the side it started (ties push right-side, i.e.
    down). The default margin is half the minimal threshold separation,
    so pushing never crosses a neighboring boundary.
    """
    if margin is None:
        margin = threshold_margin(tree)
    samples = uniform_inputs(tree.ranges_low, tree.ranges_high, n, seed)
    if not np.isfinite(margin) or margin <= 0:
        return samples
    per_feature: dict[int, list[float]] = {}
    for node in tree.inner_nodes():
        per_feature.setdefault(node.feature, []).append(node.threshold)
    for f, values in per_feature.items():
        thresholds = sorted(set(values))
        for x in samples:
            v = x[f]
            for t in thresholds:
                if abs(v - t) < margin:
                    x[f] = t + margin if v > t else t - margin
                    break
    return samples


def predict_label(model, x: Sequence[float]) -> object:
    """Prediction from either a decision tree or a rule-set model."""
    if isinstance(model, DecisionTree):
        return infer(model, x)
    return model.predict(x)


def _as_inputs(dataset) -> list:
    if isinstance(dataset, Dataset):
        return dataset.inputs()
    data = list(dataset)
    if data and isinstance(data[0], tuple) and len(data[0]) == 2:
        return [row[0] for row in data]
    return data


def extraction_error(target, shadow, dataset) -> float:
    """Fraction of dataset rows where target and shadow predictions differ.

    The 0-1 mismatch average; fidelity is 1 minus this. Symmetric in
    which model is which.
    """
    inputs = _as_inputs(dataset)
    if not inputs:
        raise ValueError("dataset must be non-empty")
    mismatches = sum(
        1 for x in inputs if predict_label(target, x) != predict_label(shadow, x))
    return mismatches / len(inputs)


def fidelity(target, shadow, dataset) -> float:
    return 1.0 - extraction_error(target, shadow, dataset)


@dataclass
class SweepPoint:
    epsilon: float
    queries: int
    fidelity: float
    wall_time: float
    status: str  # ok | timeout | plateau | path_deviation


@dataclass
class SweepResult:
    attack: str
    points: list[SweepPoint] = field(default_factory=list)

    def pareto_frontier(self) -> list[SweepPoint]:
        return pareto_frontier(self.points)


def pareto_frontier(points: Sequence[SweepPoint]) -> list[SweepPoint]:
    """Non-dominated (queries, fidelity) points, queries ascending and
    fidelity strictly increasing along the frontier."""
    frontier: list[SweepPoint] = []
    best_fidelity = -1.0
    for point in sorted(points, key=lambda p: (p.queries, -p.fidelity)):
        if point.fidelity > best_fidelity:
            frontier.append(point)
            best_fidelity = point.fidelity
    return frontier


def _run_extractor_point(target: DecisionTree, epsilon: float,
                         session: ChannelSession, eval_inputs) -> tuple[int, float]:
    oracle = make_oracle(target, session)
    result = dt_extraction(oracle, target.ranges_low, target.ranges_high, epsilon,
                           record_transcript=False)
    shadow = result.to_decision_tree(target.ranges_low, target.ranges_high)
    return result.queries, fidelity(target, shadow, eval_inputs)


def _run_baseline_point(target: DecisionTree, epsilon: float,
                        session: ChannelSession, eval_inputs,
                        max_queries: int) -> tuple[int, float]:
    oracle = label_only_oracle(target, session)
    config = BaselineConfig(epsilon=epsilon, max_queries=max_queries)
    result = api_attack_extract(oracle, target.ranges_low, target.ranges_high,
                                target.num_features, config)
    return result.queries, fidelity(target, result.model, eval_inputs)


def pareto_sweep(
    target: DecisionTree,
    attack: str,
    channel: ChannelModel = ChannelModel(),
    eps_start: float = 100.0,
    timeout: float = 60.0,
    plateau_limit: int = 10,
    eval_inputs: Optional[Sequence[Sequence[float]]] = None,
    samples: int = 1000,
    seed: int = 0,
    max_points: int = 64,
    baseline_budget: int = 200_000,
    jobs: int = 1,
) -> SweepResult:
    """Run an attack at halving resolutions until it is perfect, too slow,
    or stuck.

    One point per epsilon records (queries, fidelity, wall time, status);
    the sweep stops at fidelity 1.0, a run exceeding ``timeout`` seconds,
    or ``plateau_limit`` consecutive runs with identical fidelity. Runs
    aborted by a path deviation or an undetectable feature score fidelity
    0 and the sweep halves epsilon, the same response as any other
    imperfect run. ``jobs`` > 1 evaluates upcoming epsilons speculatively
    in parallel; results are identical to the sequential sweep.
    """
    if attack not in ("extractor", "baseline"):
        raise ValueError(f"unknown attack {attack!r}")
    if eps_start <= 0:
        raise ValueError("eps_start must be positive")
    if eval_inputs is None:
        eval_inputs = boundary_margin_inputs(target, samples, seed=seed)

    def run_point(epsilon: float) -> SweepPoint:
        started = time.perf_counter()
        session = ChannelSession(channel, seed=seed, strict=True)
        try:
            if attack == "extractor":
                queries, fid = _run_extractor_point(target, epsilon, session,
                                                    eval_inputs)
            else:
                queries, fid = _run_baseline_point(target, epsilon, session,
                                                   eval_inputs, baseline_budget)
            status = "ok"
        except (PathDeviationError, FeatureNotFoundError):
            # Resolution too coarse for this target; halve and retry.
            queries, fid, status = session.queries_observed, 0.0, "path_deviation"
        wall = time.perf_counter() - started
        return SweepPoint(epsilon=epsilon, queries=queries, fidelity=fid,
                          wall_time=wall, status=status)

    epsilons = [eps_start / (2 ** i) for i in range(max_points)]
    result = SweepResult(attack=attack)

    def finished() -> bool:
        if not result.points:
            return False
        last = result.points[-1]
        if last.status == "timeout" or last.fidelity >= 1.0:
            return True
        tail = [p.fidelity for p in result.points[-plateau_limit:]]
        if len(tail) == plateau_limit and len(set(tail)) == 1:
            last.status = "plateau" if last.status == "ok" else last.status
            return True
        return False

    index = 0
    while index < len(epsilons) and not finished():
        batch = epsilons[index:index + max(1, jobs)]
        if len(batch) > 1:
            with ThreadPoolExecutor(max_workers=len(batch)) as pool:
                points = list(pool.map(run_point, batch))
        else:
            points = [run_point(batch[0])]
        for point in points:
            if point.wall_time > timeout:
                point.status = "timeout"
            result.points.append(point)
            index += 1
            if finished():
                break
    return result


def sweep_to_dict(result: SweepResult, include_timing: bool = True) -> dict:
    points = []
    for p in result.points:
        entry = {"epsilon": p.epsilon, "queries": p.queries,
                 "fidelity": p.fidelity, "status": p.status}
        if include_timing:
            entry["wall_time"] = p.wall_time
        points.append(entry)
    frontier = [{"epsilon": p.epsilon, "queries": p.queries, "fidelity": p.fidelity}
                for p in result.pareto_frontier()]
    return {"attack": result.attack, "points": points, "pareto_frontier": frontier}


def sweep_from_dict(data: dict) -> SweepResult:
    points = [SweepPoint(epsilon=p["epsilon"], queries=p["queries"],
                         fidelity=p["fidelity"], wall_time=p.get("wall_time", 0.0),
                         status=p["status"])
              for p in data["points"]]
    return SweepResult(attack=data["attack"], points=points)


def emit_report(results: dict[str, SweepResult] | SweepResult, out_dir,
                include_timing: bool = True) -> tuple[Path, Path]:
    """Write report.json (full) and report.csv (one row per point).

    ``include_timing=False`` omits wall-clock fields so reruns with the
    same seed emit byte-identical files.
    """
    if isinstance(results, SweepResult):
        results = {results.attack: results}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"
    doc = {"attacks": {name: sweep_to_dict(res, include_timing)
                       for name, res in sorted(results.items())}}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack", "epsilon", "queries", "fidelity", "status"])
        for name, res in sorted(results.items()):
            for p in res.points:
                writer.writerow([name, repr(p.epsilon), p.queries,
                                 repr(p.fidelity), p.status])
    return json_path, csv_path


def load_report(path) -> dict[str, SweepResult]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "attacks" not in doc:
        raise SchemaError('missing required key "attacks"', field="attacks")
    return {name: sweep_from_dict(data) for name, data in doc["attacks"].items()}
