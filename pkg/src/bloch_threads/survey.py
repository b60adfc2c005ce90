"""Randomized census of how many alternate threads a system has.

The largest eigenvalue of A is fixed to 100, the other two are uniform on
[0, 100], and the scaled drift ``b*`` (the set where the positivity
constraint holds) is uniform on the unit ball.  Each sample draws from its
own stream ``SeedSequence([seed, index])`` so results do not depend on the
worker count or the order of evaluation.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .critical import special_case_critical_sets, tangency_points
from .errors import BlochThreadsError
from .system import LindbladSystem, validate_system

log = logging.getLogger(__name__)

THREADS_ENV = "BLOCH_THREADS_THREADS"
MULTIPLICITY_LABELS = ("0", "1", "2", ">=3")


@dataclass(frozen=True)
class SurveyConfig:
    sample_count: int = 100_000
    seed: int = 42
    a1: float = 100.0
    min_eigenvalue: float = 1e-6
    dedup_tol: float = 1e-9
    # tangency points with r < 1 - ball_margin count as inside the ball
    ball_margin: float = 0.0
    workers: int | None = None

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")


@dataclass
class SurveyStats:
    sample_count: int
    seed: int
    counts: dict[str, int]
    proportions: dict[str, float]
    standard_errors: dict[str, float]
    failures: int = 0
    failed_indices: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_system(rng: np.random.Generator, a1: float = 100.0, min_eigenvalue: float = 1e-6) -> LindbladSystem:
    """One random system with A = diag(a1, a2, a3) and b* uniform in the unit ball."""
    while True:
        a2, a3 = rng.uniform(0.0, a1, size=2)
        if a2 >= min_eigenvalue and a3 >= min_eigenvalue:
            break
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    b_star = direction * rng.uniform() ** (1 / 3)
    b = 2 * np.array([np.sqrt(a2 * a3), np.sqrt(a1 * a3), np.sqrt(a1 * a2)]) * b_star
    return LindbladSystem.from_eigen([a1, a2, a3], b)


def count_alternate_threads(system: LindbladSystem, dedup_tol: float = 1e-9, ball_margin: float = 0.0) -> int:
    """Alternate threads meeting the open unit ball, counted as connected pieces.

    Each tangency point strictly inside the ball starts one alternate thread
    (its two halves are one thread).  A line or plane of critical points from
    a drift-free eigenspace counts once if it meets the ball, unless its
    eigenvalue lies in an interval whose branch is already counted: the set
    crosses that branch and both belong to the same alternate structure.
    """
    if system.is_unital:
        return 0
    found: list[np.ndarray] = []
    counted_intervals = []
    for tp in tangency_points(system):
        if tp.r < 1 - ball_margin and all(np.linalg.norm(tp.n - q) > dedup_tol for q in found):
            found.append(tp.n)
            counted_intervals.append(tp.interval)
    count = len(found)
    for s in special_case_critical_sets(system):
        if s.kind not in ("line", "plane") or np.linalg.norm(s.offset) >= 1 - ball_margin:
            continue
        if any(lo < s.eigenvalue < hi for lo, hi in counted_intervals):
            continue
        count += 1
    return count


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _count_range(cfg: SurveyConfig, start: int, stop: int) -> tuple[np.ndarray, list[int]]:
    out = np.full(stop - start, -1, dtype=np.int64)
    failed = []
    for i in range(start, stop):
        system = sample_system(_sample_rng(cfg.seed, i), cfg.a1, cfg.min_eigenvalue)
        report = validate_system(system)
        if not report.passed:
            raise AssertionError(f"sample {i} violates the positivity constraints: {report.failures()}")
        try:
            out[i - start] = count_alternate_threads(system, cfg.dedup_tol, cfg.ball_margin)
        except (BlochThreadsError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("sample %d excluded: %s", i, exc)
            failed.append(i)
    return out, failed


def worker_count(requested: int | None = None) -> int:
    available = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        available = min(available, max(1, int(cap)))
    if requested is not None:
        available = min(available, max(1, requested))
    return available


def multiplicity_stats(cfg: SurveyConfig, multiplicities: np.ndarray, failed: list[int]) -> SurveyStats:
    valid = multiplicities[multiplicities >= 0]
    binned = np.minimum(valid, 3)
    counts = {label: int(np.sum(binned == k)) for k, label in enumerate(MULTIPLICITY_LABELS)}
    total = max(len(valid), 1)
    props = {k: v / total for k, v in counts.items()}
    errs = {k: float(np.sqrt(p * (1 - p) / total)) for k, p in props.items()}
    return SurveyStats(cfg.sample_count, cfg.seed, counts, props, errs, len(failed), sorted(failed))


def run_survey(cfg: SurveyConfig) -> SurveyStats:
    """Sample ``cfg.sample_count`` systems and tally alternate-thread multiplicities.

    Failed samples are excluded from the proportions and listed in the report,
    so the counts sum to ``sample_count - failures``.
    """
    workers = worker_count(cfg.workers)
    n = cfg.sample_count
    if workers == 1 or n < 1000:
        mult, failed = _count_range(cfg, 0, n)
    else:
        edges = np.linspace(0, n, 4 * workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_range, [cfg] * (len(edges) - 1), edges[:-1], edges[1:]))
        mult = np.concatenate([p[0] for p in parts])
        failed = [i for p in parts for i in p[1]]
    return multiplicity_stats(cfg, mult, failed)
