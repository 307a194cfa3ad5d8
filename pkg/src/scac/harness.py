"""Multi-seed experiments with exact oracle snapshots, and record export."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actor_critic import AgentState, AlgoConfig, RunStreams, advance
from .errors import ErgodicityError, ConditioningError, ParameterError, ScacError
from .mdp import GarnetSpec, Mdp, garnet_generate
from .oracle import compute_bundle, critic_distance, td_fixed_point_min_norm
from .policy import FeatureSet, build_feature_set

CSV_COLUMNS = ("n", "eta_tilde_mean", "eta_exact_mean", "eta_exact_se", "grad_norm_mean",
               "w_dist_mean")
PAIRED_COLUMNS = ("n", "a_mean", "a_se", "b_mean", "b_se", "diff_mean", "diff_se")
RECORDS_FORMAT = "scac.records"
RECORDS_VERSION = 1
DEFAULT_SNAPSHOTS = 200


class RunFailure(ScacError):
    def __init__(self, run_index: int, cause: Exception, partial=None):
        super().__init__(f"run {run_index} failed: {cause}")
        self.run_index = run_index
        self.cause = cause
        self.partial = partial or []


@dataclass(eq=False)
class RunRecord:
    seed: int
    n: np.ndarray
    eta_tilde: np.ndarray
    eta_exact: np.ndarray
    grad_norm: np.ndarray
    w_dist: np.ndarray
    retries: int = 0
    snapshot_failures: int = 0
    wall_time: float = field(default=0.0, compare=False)

    def same_as(self, other: "RunRecord") -> bool:
        arrays = ("n", "eta_tilde", "eta_exact", "grad_norm", "w_dist")
        return (self.seed == other.seed and self.retries == other.retries
                and all(getattr(self, a).tobytes() == getattr(other, a).tobytes() for a in arrays))


@dataclass
class BatchSummary:
    n: np.ndarray
    eta_tilde_mean: np.ndarray
    eta_exact_mean: np.ndarray
    eta_exact_se: np.ndarray  # NaN when fewer than two runs
    grad_norm_mean: np.ndarray
    w_dist_mean: np.ndarray
    n_runs: int
    config_hash: str
    config: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)

    def rows(self) -> list[tuple]:
        return list(zip(self.n.tolist(), self.eta_tilde_mean.tolist(), self.eta_exact_mean.tolist(),
                        self.eta_exact_se.tolist(), self.grad_norm_mean.tolist(),
                        self.w_dist_mean.tolist()))


@dataclass
class PairedSummary:
    a: BatchSummary
    b: BatchSummary
    diff_mean: np.ndarray
    diff_se: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return self.a.n

    def rows(self) -> list[tuple]:
        return list(zip(self.n.tolist(), self.a.eta_exact_mean.tolist(),
                        self.a.eta_exact_se.tolist(), self.b.eta_exact_mean.tolist(),
                        self.b.eta_exact_se.tolist(), self.diff_mean.tolist(),
                        self.diff_se.tolist()))


def mean_and_se(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard errors (sample std / sqrt(count)), ignoring NaN."""
    values = np.asarray(values, dtype=float)
    count = np.sum(np.isfinite(values), axis=0)
    safe = np.where(np.isfinite(values), values, 0.0)
    mean = np.where(count > 0, safe.sum(axis=0) / np.maximum(count, 1), np.nan)
    dev = np.where(np.isfinite(values), values - mean, 0.0)
    var = np.where(count > 1, (dev ** 2).sum(axis=0) / np.maximum(count - 1, 1), np.nan)
    return mean, np.sqrt(var) / np.sqrt(np.maximum(count, 1))


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def default_stride(n_steps: int) -> int:
    return max(1, n_steps // DEFAULT_SNAPSHOTS)


def _snapshot(mdp, fs, theta, w, lam):
    try:
        bundle = compute_bundle(mdp, fs, theta, lam)
    except (ErgodicityError, ConditioningError):
        return math.nan, math.nan, math.nan
    w_star, null_basis = td_fixed_point_min_norm(bundle.A, bundle.b)
    return (bundle.eta, float(np.linalg.norm(bundle.grad_eta)),
            critic_distance(w, w_star, null_basis))


def run_single(mdp: Mdp, fs: FeatureSet, config: AlgoConfig, seed: int, n_steps: int,
               snapshot_stride: int | None = None, theta0=None, x0: int = 0) -> RunRecord:
    """Run the configured algorithm and snapshot exact quantities every stride.

    Snapshots are taken at n = 0, stride, 2*stride, ... <= n_steps. A snapshot
    whose chain is numerically singular is recorded as NaN and counted.
    """
    if n_steps < 0:
        raise ParameterError("n_steps must be >= 0")
    stride = snapshot_stride or default_stride(n_steps)
    if stride < 1:
        raise ParameterError("snapshot stride must be >= 1")
    start = time.perf_counter()
    state = AgentState.initial(fs, x0)
    if theta0 is not None:
        state.theta = np.array(theta0, dtype=float)
    streams = RunStreams.from_seed(seed)
    lam = config.effective_lam
    ns, eta_t, eta_x, grads, dists = [], [], [], [], []
    failures = 0

    def record():
        nonlocal failures
        eta, g, dist = _snapshot(mdp, fs, state.theta, state.w, lam)
        failures += math.isnan(eta)
        ns.append(state.n)
        eta_t.append(state.eta_tilde)
        eta_x.append(eta)
        grads.append(g)
        dists.append(dist)

    record()
    while state.n < n_steps:
        chunk = min(stride, n_steps - state.n)
        state = advance(state, mdp, fs, config, streams, chunk)
        if state.n % stride == 0:
            record()
    return RunRecord(seed=seed, n=np.array(ns), eta_tilde=np.array(eta_t),
                     eta_exact=np.array(eta_x), grad_norm=np.array(grads),
                     w_dist=np.array(dists), retries=mdp.retries, snapshot_failures=failures,
                     wall_time=time.perf_counter() - start)


def make_instance(spec: GarnetSpec, seed: int, exclude_constant: bool = False):
    return garnet_generate(spec, seed), build_feature_set(spec, seed,
                                                          exclude_constant=exclude_constant)


def _summarize(records: list[RunRecord], payload: dict) -> BatchSummary:
    stack = lambda attr: np.array([getattr(r, attr) for r in records])  # noqa: E731
    eta_mean, eta_se = mean_and_se(stack("eta_exact"))
    return BatchSummary(
        n=records[0].n.copy(),
        eta_tilde_mean=mean_and_se(stack("eta_tilde"))[0],
        eta_exact_mean=eta_mean,
        eta_exact_se=eta_se,
        grad_norm_mean=mean_and_se(stack("grad_norm"))[0],
        w_dist_mean=mean_and_se(stack("w_dist"))[0],
        n_runs=len(records),
        config_hash=config_hash(payload),
        config=payload,
        records=records,
    )


def run_batch(spec: GarnetSpec, config: AlgoConfig, n_runs: int, base_seed: int, n_steps: int,
              stride: int | None = None, *, shared_instance: bool = False,
              exclude_constant: bool = False, instance=None) -> BatchSummary:
    """Independent runs with seeds base_seed + i, each on a fresh instance by default.

    With ``shared_instance`` every run uses the instance of ``base_seed``;
    ``instance=(mdp, fs)`` pins an explicit instance. On failure a
    ``RunFailure`` carries the run index and the records completed so far.
    """
    if n_runs < 1:
        raise ParameterError("n_runs must be >= 1")
    stride = stride or default_stride(n_steps)
    if instance is None and shared_instance:
        instance = make_instance(spec, base_seed, exclude_constant)
    records = []
    for i in range(n_runs):
        seed = base_seed + i
        try:
            mdp, fs = instance or make_instance(spec, seed, exclude_constant)
            records.append(run_single(mdp, fs, config, seed, n_steps, stride))
        except ScacError as exc:
            raise RunFailure(i, exc, records) from exc
    payload = experiment_payload(spec, config, n_runs, base_seed, n_steps, stride,
                                 shared_instance or instance is not None, exclude_constant)
    return _summarize(records, payload)


def compare_algorithms(spec: GarnetSpec, configs: tuple[AlgoConfig, AlgoConfig], n_runs: int,
                       base_seed: int, n_steps: int, stride: int | None = None,
                       **kwargs) -> PairedSummary:
    """Paired batches with common random numbers.

    Run i of both arms uses the same instance, features and random streams,
    so the environment noise consumed at every step is shared.
    """
    a = run_batch(spec, configs[0], n_runs, base_seed, n_steps, stride, **kwargs)
    b = run_batch(spec, configs[1], n_runs, base_seed, n_steps, stride, **kwargs)
    diff = (np.array([r.eta_exact for r in a.records])
            - np.array([r.eta_exact for r in b.records]))
    diff_mean, diff_se = mean_and_se(diff)
    return PairedSummary(a=a, b=b, diff_mean=diff_mean, diff_se=diff_se)


def experiment_payload(spec, config, n_runs, base_seed, n_steps, stride, shared, exclude_constant):
    return {
        "format": "scac.experiment", "version": 1,
        "garnet": spec.to_dict(), "algo": config.to_dict(), "n_runs": n_runs,
        "seed": base_seed, "n_steps": n_steps, "record_stride": stride,
        "shared_instance": bool(shared), "exclude_constant": bool(exclude_constant),
    }


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.17g}"


def _parse(text: str) -> float:
    return math.nan if text == "" else float(text)


def records_csv(rows: list[tuple], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def records_json(summary, rows: list[tuple], columns=CSV_COLUMNS) -> str:
    doc = {
        "format": RECORDS_FORMAT, "version": RECORDS_VERSION, "columns": list(columns),
        "config": summary.config if isinstance(summary, BatchSummary) else summary.a.config,
        "rows": [[_fmt(v) for v in row] for row in rows],
    }
    return json.dumps(doc, indent=1) + "\n"


def export_records(summary, fmt: str, path) -> Path:
    """Write a batch (or paired) summary as CSV or as self-describing JSON."""
    rows = summary.rows()
    if not rows:
        raise ParameterError("no records to export")
    columns = PAIRED_COLUMNS if isinstance(summary, PairedSummary) else CSV_COLUMNS
    if fmt == "csv":
        text = records_csv(rows, columns)
    elif fmt in ("json", "structured-text"):
        text = records_json(summary, rows, columns)
    else:
        raise ParameterError(f"unknown export format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc}") from exc
    return path


def import_records(path) -> tuple[list[str], list[list[float]]]:
    """Read back an exported file as (columns, numeric rows); blank cells become NaN."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        if doc.get("format") != RECORDS_FORMAT:
            raise ParameterError(f"{path} is not a records document")
        return doc["columns"], [[_parse(c) for c in row] for row in doc["rows"]]
    reader = csv.reader(io.StringIO(text))
    columns = next(reader)
    return columns, [[_parse(c) for c in row] for row in reader]
