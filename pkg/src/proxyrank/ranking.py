"""Rank statistics, preference pairs, and the four proxy ranker classes.

Spearman correlations here are computed through exact integer arithmetic on
doubled average ranks: every intermediate sum is an integer small enough to
be exact in float64 (n up to ~6000 subjects), so the scalar routine, the
vectorized sweep, and any brute-force re-implementation that uses the same
final ``cov / sqrt(varx * vary)`` expression agree bit for bit.  The 3-sparse
enumeration relies on this to make its parallel sweep independent of worker
count and block size.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .proxylib import LIBRARY_SIZE, PROXY_IDS, PROXY_INDEX, ProxyId, ProxyVector

RANKER_VARIANTS = ("univariate", "sparse3", "ranksvm_linear", "ranksvm_rbf")

# Score differences below this range are treated as a collapsed (degenerate)
# scoring function.
DEGENERATE_SCORE_RANGE = 1e-9


class UndefinedCorrelation(ValueError):
    """Spearman correlation is undefined (too short or zero rank variance)."""


# ---------------------------------------------------------------------------
# Rank statistics
# ---------------------------------------------------------------------------


def average_ranks(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """1-based average ranks with standard tie handling."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("average_ranks expects a 1-D sequence")
    return _doubled_ranks_columns(arr[:, None])[:, 0] / 2.0


def _doubled_ranks_columns(a: np.ndarray) -> np.ndarray:
    """Column-wise average ranks of an (n, m) array, doubled.

    Doubling makes every rank an exact small integer, which keeps all
    downstream rank sums exact in float64 regardless of summation order.
    """
    n = a.shape[0]
    if n >= 2**15:
        raise ValueError("rank computation supports at most 32767 rows")
    order = np.argsort(a, axis=0)  # tie order is irrelevant: ties share one average rank
    sorted_a = np.take_along_axis(a, order, axis=0)
    starts = np.empty(a.shape, dtype=bool)
    starts[0] = True
    np.not_equal(sorted_a[1:], sorted_a[:-1], out=starts[1:])
    idx = np.arange(n, dtype=np.int32)[:, None]
    first = np.where(starts, idx, np.int32(0))
    np.maximum.accumulate(first, axis=0, out=first)
    ends = np.empty(a.shape, dtype=bool)
    ends[-1] = True
    ends[:-1] = starts[1:]
    last = np.where(ends, idx, np.int32(n - 1))
    last = np.flip(np.minimum.accumulate(np.flip(last, axis=0), axis=0), axis=0)
    # doubled 1-based average rank of a tie group spanning sorted positions
    # [f, l] is f + l + 2.
    doubled = (first + last + 2).astype(np.float64)
    out = np.empty(a.shape, dtype=np.float64)
    np.put_along_axis(out, order, doubled, axis=0)
    return out


def _rho_from_doubled_ranks(r2: np.ndarray, s2: np.ndarray) -> float:
    n = r2.shape[0]
    m = float(n * (n + 1))  # both doubled-rank sums, exactly
    srs = float(np.dot(r2, s2))
    cov4 = n * srs - m * m
    vx4 = n * float(np.dot(r2, r2)) - m * m
    vy4 = n * float(np.dot(s2, s2)) - m * m
    if vx4 <= 0.0 or vy4 <= 0.0:
        raise UndefinedCorrelation("zero variance in ranks")
    rho = cov4 / math.sqrt(vx4 * vy4)
    return min(1.0, max(-1.0, rho))


def spearman(x: Sequence[float] | np.ndarray, y: Sequence[float] | np.ndarray) -> float:
    """Spearman rank correlation with average-rank tie handling.

    Raises :class:`UndefinedCorrelation` when fewer than two points are given
    or either argument has zero rank variance; the caller decides how to
    report that, it is never silently coerced to 0.
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError(f"spearman needs two equal-length 1-D sequences, got {xs.shape} and {ys.shape}")
    if xs.shape[0] < 2:
        raise UndefinedCorrelation("spearman needs at least 2 points")
    if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        raise ValueError("spearman inputs must be finite")
    r2 = _doubled_ranks_columns(xs[:, None])[:, 0]
    s2 = _doubled_ranks_columns(ys[:, None])[:, 0]
    return _rho_from_doubled_ranks(r2, s2)


def decision_accuracy(pred: Mapping[str, float], truth: Mapping[str, float]) -> float:
    """Fraction of subject pairs whose predicted ordering matches the truth.

    Pairs tied in the truth are excluded; pairs tied in the prediction count
    as disagreements.
    """
    if set(pred) != set(truth):
        raise ValueError("pred and truth must cover the same subjects")
    subjects = sorted(truth)
    if len(subjects) < 2:
        raise ValueError("decision accuracy needs at least 2 subjects")
    agree = 0
    comparable = 0
    for a, b in itertools.combinations(subjects, 2):
        dt = truth[a] - truth[b]
        if dt == 0.0:
            continue
        comparable += 1
        dp = pred[a] - pred[b]
        if dp != 0.0 and (dp > 0.0) == (dt > 0.0):
            agree += 1
    if comparable == 0:
        raise ValueError("no subject pair has distinct truth values")
    return agree / comparable


# ---------------------------------------------------------------------------
# Scores and preference pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreTable:
    """Downstream score per (subject, task); the ranking ground truth."""

    scores: dict[tuple[str, str], float]
    kind: str = "model"

    def validate(self) -> None:
        for key, value in self.scores.items():
            if not math.isfinite(value):
                raise ValueError(f"score for {key} is not finite: {value!r}")

    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({s for s, _ in self.scores}))

    def tasks(self) -> tuple[str, ...]:
        return tuple(sorted({t for _, t in self.scores}))

    def get(self, subject: str, task: str) -> float:
        try:
            return self.scores[(subject, task)]
        except KeyError:
            raise KeyError(f"no score for subject={subject!r}, task={task!r}") from None


@dataclass(frozen=True)
class PreferencePair:
    task: str
    winner: str
    loser: str


def preference_pairs(
    scores: ScoreTable, tasks: Iterable[str], subjects: Iterable[str]
) -> list[PreferencePair]:
    """All (winner, loser) pairs induced by strict score differences.

    One pair per unordered subject pair per task; ties are skipped.  Order is
    deterministic: tasks sorted, then sorted subject combinations.
    """
    pairs: list[PreferencePair] = []
    for task in sorted(tasks):
        for a, b in itertools.combinations(sorted(subjects), 2):
            sa = scores.get(a, task)
            sb = scores.get(b, task)
            if sa == sb:
                continue
            if sa > sb:
                pairs.append(PreferencePair(task, a, b))
            else:
                pairs.append(PreferencePair(task, b, a))
    return pairs


# ---------------------------------------------------------------------------
# Feature matrices and preprocessing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskScaler:
    """Fit-time per-task feature statistics.

    ``impute`` fills undefined entries (their raw per-task mean); ``center``
    and ``scale`` define the z-scoring used by the RankSVM variants.
    """

    impute: np.ndarray
    center: np.ndarray
    scale: np.ndarray


def task_feature_matrix(
    features: Mapping[tuple[str, str], ProxyVector], task: str, subjects: Sequence[str]
) -> np.ndarray:
    """Raw (n_subjects, 80) matrix for one task; undefined entries are NaN."""
    x = np.full((len(subjects), LIBRARY_SIZE), np.nan)
    for i, subject in enumerate(subjects):
        try:
            vector = features[(subject, task)]
        except KeyError:
            raise KeyError(f"no proxy vector for subject={subject!r}, task={task!r}") from None
        for pid, value in vector.values.items():
            x[i, PROXY_INDEX[pid]] = value
    return x


def _column_means(x: np.ndarray) -> np.ndarray:
    defined = ~np.isnan(x)
    counts = defined.sum(axis=0)
    sums = np.where(defined, x, 0.0).sum(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def _impute(x: np.ndarray, means: np.ndarray) -> np.ndarray:
    return np.where(np.isnan(x), means, x)


def _make_scaler(x: np.ndarray) -> TaskScaler:
    means = _column_means(x)
    filled = _impute(x, means)
    center = filled.mean(axis=0)
    std = filled.std(axis=0)
    scale = np.where(std > 0.0, std, 1.0)
    return TaskScaler(impute=means, center=center, scale=scale)


# ---------------------------------------------------------------------------
# Rankers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientGrid:
    """Signed log-spaced coefficient grid for the 3-sparse search.

    The first coefficient is pinned to +1; each free coefficient ranges over
    {-10^e, +10^e} for the configured exponents, plus 0 when enabled.  Values
    are enumerated in ascending numeric order and combined second-coefficient
    major, which fixes the grid-order tie-break.
    """

    exponents: tuple[int, ...] = (-3, -2, -1, 0, 1, 2, 3)
    include_zero: bool = True

    def values(self) -> tuple[float, ...]:
        if not self.exponents and not self.include_zero:
            raise ValueError("coefficient grid is empty")
        vals = {float(sign * 10.0**e) for e in self.exponents for sign in (1, -1)}
        if self.include_zero:
            vals.add(0.0)
        return tuple(sorted(vals))

    def rows(self) -> np.ndarray:
        vals = self.values()
        rows = [(1.0, u, v) for u in vals for v in vals]
        return np.asarray(rows, dtype=np.float64)


@dataclass
class RankerSpec:
    """Configuration for fitting one ranker variant."""

    variant: str = "ranksvm_linear"
    regularization: float = 1.0
    kernel_width: float | None = None
    grid: CoefficientGrid = field(default_factory=CoefficientGrid)
    max_iter: int = 500
    tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.variant not in RANKER_VARIANTS:
            raise ValueError(f"unknown ranker variant {self.variant!r}; expected one of {RANKER_VARIANTS}")


@dataclass
class Ranker:
    """A fitted scoring function over proxy vectors; higher is better.

    ``scalers`` holds the fit-time per-task preprocessing.  The RankSVM
    variants z-score features through it; the univariate and 3-sparse
    variants score raw entries (their rank-based selection objective is
    already invariant to per-task positive rescaling) and use the scalers
    only to impute undefined entries.  Tasks unseen at fit time are
    standardized from the evaluation batch itself.
    """

    variant: str
    feature_ids: tuple[ProxyId, ...]
    coefficients: np.ndarray | None
    scalers: dict[str, TaskScaler] = field(default_factory=dict)
    support: np.ndarray | None = None
    kernel_width: float | None = None
    regularization: float | None = None
    degenerate: bool = False
    heldin_objective: float | None = None
    objective_trace: tuple[float, ...] = ()

    def describe(self) -> str:
        if self.variant == "univariate":
            sign = "+" if self.coefficients is not None and self.coefficients[0] >= 0 else "-"
            return f"univariate:{sign}{self.feature_ids[0]}"
        if self.variant == "sparse3":
            assert self.coefficients is not None
            terms = ";".join(f"{c:.6g}*{pid}" for c, pid in zip(self.coefficients, self.feature_ids))
            return f"sparse3:{terms}"
        extra = f";width={self.kernel_width:.6g}" if self.kernel_width is not None else ""
        flag = ";degenerate" if self.degenerate else ""
        return f"{self.variant}:C={self.regularization:.6g}{extra}{flag}"

    def selected_ids(self) -> tuple[ProxyId, ...]:
        if self.variant in ("univariate", "sparse3"):
            return self.feature_ids
        return ()

    def _check_fitted(self) -> None:
        if self.coefficients is None:
            raise ValueError("ranker has not been fitted")

    def _uses_standardization(self) -> bool:
        return self.variant in ("ranksvm_linear", "ranksvm_rbf")

    def _score_rows(self, x: np.ndarray) -> np.ndarray:
        assert self.coefficients is not None
        if self.variant == "univariate":
            j = PROXY_INDEX[self.feature_ids[0]]
            return self.coefficients[0] * x[:, j]
        if self.variant == "sparse3":
            j = [PROXY_INDEX[pid] for pid in self.feature_ids]
            c = self.coefficients
            return x[:, j[0]] * c[0] + x[:, j[1]] * c[1] + x[:, j[2]] * c[2]
        if self.variant == "ranksvm_linear":
            return np.einsum("ij,j->i", x, self.coefficients)
        assert self.support is not None and self.kernel_width is not None
        sq = ((x[:, None, :] - self.support[None, :, :]) ** 2).sum(axis=2)
        kernel = np.exp(-sq / (2.0 * self.kernel_width**2))
        return np.einsum("ij,j->i", kernel, self.coefficients)

    def score_task(self, task: str, vectors: Mapping[str, ProxyVector]) -> dict[str, float]:
        """Score every subject of one task; deterministic given the batch."""
        self._check_fitted()
        subjects = sorted(vectors)
        x = np.full((len(subjects), LIBRARY_SIZE), np.nan)
        for i, subject in enumerate(subjects):
            for pid, value in vectors[subject].values.items():
                x[i, PROXY_INDEX[pid]] = value
        scaler = self.scalers.get(task)
        if scaler is None:
            scaler = _make_scaler(x)
        x = _impute(x, scaler.impute)
        if self._uses_standardization():
            x = (x - scaler.center) / scaler.scale
        scores = self._score_rows(x)
        return {subject: float(score) for subject, score in zip(subjects, scores)}


def score_model(ranker: Ranker, features: ProxyVector) -> float:
    """Score a single proxy vector.

    Undefined entries impute to the fit-time per-task mean when the vector's
    task was seen at fit time (0 after standardization for the RankSVM
    variants) and to 0 otherwise.
    """
    ranker._check_fitted()
    x = np.full((1, LIBRARY_SIZE), np.nan)
    for pid, value in features.values.items():
        x[0, PROXY_INDEX[pid]] = value
    scaler = ranker.scalers.get(features.task)
    x = _impute(x, scaler.impute if scaler is not None else np.zeros(LIBRARY_SIZE))
    if ranker._uses_standardization() and scaler is not None:
        x = (x - scaler.center) / scaler.scale
    return float(ranker._score_rows(x)[0])


# ---------------------------------------------------------------------------
# Univariate selection
# ---------------------------------------------------------------------------


def _per_task_arrays(
    features: Mapping[tuple[str, str], ProxyVector],
    scores: ScoreTable,
    tasks: Sequence[str],
    subjects: Sequence[str],
) -> tuple[list[np.ndarray], list[np.ndarray], list[float], dict[str, TaskScaler]]:
    """Imputed feature matrices, doubled score ranks and rank variances per task.

    Tasks whose scores have zero rank variance are dropped: no candidate can
    have a defined correlation there.
    """
    matrices: list[np.ndarray] = []
    rank_vectors: list[np.ndarray] = []
    variances: list[float] = []
    scalers: dict[str, TaskScaler] = {}
    n = len(subjects)
    for task in tasks:
        x = task_feature_matrix(features, task, subjects)
        scalers[task] = _make_scaler(x)
        x = _impute(x, scalers[task].impute)
        y = np.asarray([scores.get(s, task) for s in subjects], dtype=np.float64)
        y2 = _doubled_ranks_columns(y[:, None])[:, 0]
        m = float(n * (n + 1))
        vy4 = n * float(np.dot(y2, y2)) - m * m
        if vy4 <= 0.0:
            continue
        matrices.append(x)
        rank_vectors.append(y2)
        variances.append(vy4)
    return matrices, rank_vectors, variances, scalers


def _columns_rho(x: np.ndarray, y2: np.ndarray, vy4: float) -> np.ndarray:
    """Spearman of every column of x against doubled score ranks (NaN if undefined)."""
    n = x.shape[0]
    m = float(n * (n + 1))
    r2 = _doubled_ranks_columns(x)
    srs = y2 @ r2
    sr2 = np.einsum("ij,ij->j", r2, r2)
    cov4 = n * srs - m * m
    vx4 = n * sr2 - m * m
    rho = np.full(x.shape[1], np.nan)
    defined = vx4 > 0.0
    rho[defined] = np.clip(cov4[defined] / np.sqrt(vx4[defined] * vy4), -1.0, 1.0)
    return rho


def select_univariate(
    features: Mapping[tuple[str, str], ProxyVector],
    scores: ScoreTable,
    heldin_tasks: Iterable[str],
    subjects: Iterable[str],
) -> Ranker:
    """Pick the single library entry with the largest |mean held-in Spearman|.

    The selected entry is oriented so its mean correlation is non-negative.
    Ties break to the lowest canonical library index.
    """
    tasks = sorted(heldin_tasks)
    subject_list = sorted(subjects)
    if len(subject_list) < 2:
        raise ValueError("univariate selection needs at least 2 subjects")
    if not tasks:
        raise ValueError("univariate selection needs at least 1 held-in task")
    matrices, rank_vectors, variances, scalers = _per_task_arrays(features, scores, tasks, subject_list)
    rho_sum = np.zeros(LIBRARY_SIZE)
    rho_count = np.zeros(LIBRARY_SIZE, dtype=np.int64)
    for x, y2, vy4 in zip(matrices, rank_vectors, variances):
        rho = _columns_rho(x, y2, vy4)
        defined = ~np.isnan(rho)
        rho_sum = rho_sum + np.where(defined, rho, 0.0)
        rho_count = rho_count + defined
    if not rho_count.any():
        raise UndefinedCorrelation("every feature/score correlation is undefined on the held-in tasks")
    mean_rho = np.where(rho_count > 0, rho_sum / np.maximum(rho_count, 1), np.nan)
    objective = np.where(rho_count > 0, np.abs(mean_rho), -1.0)
    best = int(np.argmax(objective))
    orientation = 1.0 if mean_rho[best] >= 0.0 else -1.0
    return Ranker(
        variant="univariate",
        feature_ids=(PROXY_IDS[best],),
        coefficients=np.asarray([orientation]),
        scalers=scalers,
        heldin_objective=float(objective[best]),
    )


# ---------------------------------------------------------------------------
# 3-sparse enumeration
# ---------------------------------------------------------------------------

# Worker-process state for the parallel sweep, set by _sweep_init.
_SWEEP_STATE: dict = {}


def _sweep_init(matrices, rank_vectors, variances, grid_rows, triplets) -> None:
    _SWEEP_STATE["payload"] = (matrices, rank_vectors, variances, grid_rows, triplets)


def _sweep_range_worker(bounds: tuple[int, int]) -> tuple[float, int, float]:
    matrices, rank_vectors, variances, grid_rows, triplets = _SWEEP_STATE["payload"]
    return _sweep_range(matrices, rank_vectors, variances, grid_rows, triplets, bounds[0], bounds[1])


def _sweep_range(
    matrices: Sequence[np.ndarray],
    rank_vectors: Sequence[np.ndarray],
    variances: Sequence[float],
    grid_rows: np.ndarray,
    triplets: np.ndarray,
    start: int,
    stop: int,
    block: int = 256,
) -> tuple[float, int, float]:
    """Best (|mean rho|, candidate index, mean rho) over a triplet range.

    Candidates are indexed triplet-major, grid-minor; every per-candidate
    value is computed independently of the block layout, so partitioning the
    range across workers cannot change the result.
    """
    n = matrices[0].shape[0]
    n_grid = grid_rows.shape[0]
    a0 = grid_rows[:, 0]
    a1 = grid_rows[:, 1]
    a2 = grid_rows[:, 2]
    m = float(n * (n + 1))
    best_objective = -1.0
    best_index = -1
    best_mean = 0.0
    for block_start in range(start, stop, block):
        block_stop = min(block_start + block, stop)
        t = triplets[block_start:block_stop]
        width = (block_stop - block_start) * n_grid
        rho_sum = np.zeros(width)
        rho_count = np.zeros(width, dtype=np.int64)
        for x, y2, vy4 in zip(matrices, rank_vectors, variances):
            x1 = x[:, t[:, 0]][:, :, None]
            x2 = x[:, t[:, 1]][:, :, None]
            x3 = x[:, t[:, 2]][:, :, None]
            combined = (x1 * a0 + x2 * a1 + x3 * a2).reshape(n, width)
            r2 = _doubled_ranks_columns(combined)
            srs = y2 @ r2
            sr2 = np.einsum("ij,ij->j", r2, r2)
            cov4 = n * srs - m * m
            vx4 = n * sr2 - m * m
            defined = vx4 > 0.0
            rho = np.zeros(width)
            np.divide(cov4, np.sqrt(vx4 * vy4, where=defined, out=np.ones(width)), where=defined, out=rho)
            np.clip(rho, -1.0, 1.0, out=rho)
            rho_sum += np.where(defined, rho, 0.0)
            rho_count += defined
        mean_rho = np.where(rho_count > 0, rho_sum / np.maximum(rho_count, 1), 0.0)
        objective = np.where(rho_count > 0, np.abs(mean_rho), -1.0)
        local = int(np.argmax(objective))
        local_objective = float(objective[local])
        if local_objective > best_objective:
            best_objective = local_objective
            best_index = block_start * n_grid + local
            best_mean = float(mean_rho[local])
    return best_objective, best_index, best_mean


def select_sparse3(
    features: Mapping[tuple[str, str], ProxyVector],
    scores: ScoreTable,
    heldin_tasks: Iterable[str],
    subjects: Iterable[str],
    grid: CoefficientGrid | None = None,
    threads: int = 1,
    library_indices: Sequence[int] | None = None,
) -> Ranker:
    """Exhaustive 3-sparse search over library triplets and a coefficient grid.

    Maximizes |mean held-in Spearman| of ``a1*F_j1 + a2*F_j2 + a3*F_j3`` over
    all index triplets and grid rows, then orients the overall sign so the
    mean correlation is non-negative.  Ties break deterministically by
    (triplet order, grid order).  ``library_indices`` restricts the search to
    a sub-library (used by oracle-equivalence checks).
    """
    grid = grid or CoefficientGrid()
    grid_rows = grid.rows()
    if grid_rows.shape[0] == 0:
        raise ValueError("coefficient grid is empty")
    tasks = sorted(heldin_tasks)
    subject_list = sorted(subjects)
    if len(subject_list) < 2:
        raise ValueError("sparse3 selection needs at least 2 subjects")
    matrices, rank_vectors, variances, scalers = _per_task_arrays(features, scores, tasks, subject_list)
    if not matrices:
        raise UndefinedCorrelation("scores have zero rank variance on every held-in task")
    indices = list(library_indices) if library_indices is not None else list(range(LIBRARY_SIZE))
    sub_matrices = [x[:, indices] for x in matrices]
    triplets = np.asarray(list(itertools.combinations(range(len(indices)), 3)), dtype=np.int64)
    if triplets.shape[0] == 0:
        raise ValueError("need at least 3 library entries for a 3-sparse search")

    n_grid = grid_rows.shape[0]
    n_triplets = triplets.shape[0]
    if threads > 1 and n_triplets > 256:
        chunk = max(256, -(-n_triplets // (threads * 8)))
        bounds = [(lo, min(lo + chunk, n_triplets)) for lo in range(0, n_triplets, chunk)]
        with ProcessPoolExecutor(
            max_workers=threads,
            initializer=_sweep_init,
            initargs=(sub_matrices, rank_vectors, variances, grid_rows, triplets),
        ) as pool:
            results = list(pool.map(_sweep_range_worker, bounds))
    else:
        results = [_sweep_range(sub_matrices, rank_vectors, variances, grid_rows, triplets, 0, n_triplets)]

    best_objective, best_index, best_mean = -1.0, -1, 0.0
    for objective, index, mean in results:
        if objective > best_objective or (objective == best_objective and 0 <= index < best_index):
            best_objective, best_index, best_mean = objective, index, mean
    if best_index < 0 or best_objective < 0.0:
        raise UndefinedCorrelation("every candidate correlation is undefined on the held-in tasks")

    triplet_index, grid_index = divmod(best_index, n_grid)
    j = triplets[triplet_index]
    ids = tuple(PROXY_IDS[indices[k]] for k in j)
    orientation = 1.0 if best_mean >= 0.0 else -1.0
    coefficients = orientation * grid_rows[grid_index]
    return Ranker(
        variant="sparse3",
        feature_ids=ids,
        coefficients=coefficients,
        scalers=scalers,
        heldin_objective=best_objective,
    )


# ---------------------------------------------------------------------------
# RankSVM (pairwise hinge loss)
# ---------------------------------------------------------------------------


def _standardized_rows(
    features: Mapping[tuple[str, str], ProxyVector],
) -> tuple[dict[tuple[str, str], np.ndarray], dict[str, TaskScaler]]:
    """Per-task z-scored feature rows for every (subject, task) in the set."""
    tasks = sorted({t for _, t in features})
    rows: dict[tuple[str, str], np.ndarray] = {}
    scalers: dict[str, TaskScaler] = {}
    for task in tasks:
        subjects = sorted(s for s, t in features if t == task)
        x = task_feature_matrix(features, task, subjects)
        scaler = _make_scaler(x)
        scalers[task] = scaler
        z = (_impute(x, scaler.impute) - scaler.center) / scaler.scale
        for i, subject in enumerate(subjects):
            rows[(subject, task)] = z[i]
    return rows, scalers


def _hinge_descent(
    objective,
    subgradient,
    theta: np.ndarray,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, list[float]]:
    """Backtracking subgradient descent; the objective never increases."""
    trace = [float(objective(theta))]
    for _ in range(max_iter):
        g = subgradient(theta)
        gnorm2 = float(np.dot(g, g))
        if gnorm2 == 0.0:
            break
        base = trace[-1]
        step = 1.0
        accepted = None
        for _ in range(60):
            candidate = theta - step * g
            value = float(objective(candidate))
            if value <= base - 1e-4 * step * gnorm2 or value < base - 1e-12:
                accepted = (candidate, value)
                break
            step *= 0.5
        if accepted is None:
            break
        theta, value = accepted
        trace.append(value)
        if base - value <= tol * max(abs(base), 1.0):
            break
    return theta, trace


def fit_ranksvm_linear(
    pairs: Sequence[PreferencePair],
    features: Mapping[tuple[str, str], ProxyVector],
    regularization: float = 1.0,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> Ranker:
    """Linear RankSVM via the difference-vector reduction.

    Minimizes ``0.5*||w||^2 + C * sum max(0, 1 - w.(z_winner - z_loser))``
    over per-task z-scored features, by deterministic backtracking
    subgradient descent.
    """
    if not pairs:
        raise ValueError("RankSVM needs at least one preference pair")
    if regularization < 0:
        raise ValueError("regularization must be >= 0")
    rows, scalers = _standardized_rows(features)
    diffs = np.stack([rows[(p.winner, p.task)] - rows[(p.loser, p.task)] for p in pairs])
    c = regularization

    if c == 0.0:
        return Ranker(
            variant="ranksvm_linear",
            feature_ids=PROXY_IDS,
            coefficients=np.zeros(LIBRARY_SIZE),
            scalers=scalers,
            regularization=c,
            degenerate=True,
            objective_trace=(0.0,),
        )

    def objective(w: np.ndarray) -> float:
        margins = diffs @ w
        hinge = np.maximum(0.0, 1.0 - margins).sum()
        return 0.5 * float(np.dot(w, w)) + c * float(hinge)

    def subgradient(w: np.ndarray) -> np.ndarray:
        margins = diffs @ w
        active = margins < 1.0
        return w - c * diffs[active].sum(axis=0)

    w, trace = _hinge_descent(objective, subgradient, np.zeros(LIBRARY_SIZE), max_iter, tol)
    degenerate = not np.any(w)
    return Ranker(
        variant="ranksvm_linear",
        feature_ids=PROXY_IDS,
        coefficients=w,
        scalers=scalers,
        regularization=c,
        degenerate=degenerate,
        objective_trace=tuple(trace),
    )


def median_pairwise_distance(z: np.ndarray) -> float:
    """Median Euclidean distance over all row pairs (the kernel-width heuristic)."""
    if z.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 vectors")
    sq = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    upper = sq[np.triu_indices(z.shape[0], k=1)]
    return float(np.median(np.sqrt(upper)))


def fit_ranksvm_rbf(
    pairs: Sequence[PreferencePair],
    features: Mapping[tuple[str, str], ProxyVector],
    regularization: float = 1.0,
    kernel_width: float | None = None,
    max_iter: int = 300,
    tol: float = 1e-6,
    seed: int = 0,
) -> Ranker:
    """Gaussian-kernel RankSVM in the dual representation.

    The score is ``f(z) = sum_i alpha_i * k(z, z_i)`` over the fitting-set
    vectors, trained under the same pairwise hinge objective with an RKHS-
    norm penalty ``0.5 * alpha' K alpha``.  The fit is deterministic; the
    seed parameter is accepted for interface stability but the zero
    initialization never consumes randomness.
    """
    del seed
    if not pairs:
        raise ValueError("RankSVM needs at least one preference pair")
    if regularization < 0:
        raise ValueError("regularization must be >= 0")
    rows, scalers = _standardized_rows(features)
    keys = sorted(rows)
    z = np.stack([rows[k] for k in keys])
    index = {k: i for i, k in enumerate(keys)}

    if kernel_width is None:
        kernel_width = median_pairwise_distance(z)
        if kernel_width == 0.0:
            kernel_width = 1.0
    sq = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    kernel = np.exp(-sq / (2.0 * kernel_width**2))
    p = np.stack(
        [kernel[index[(pair.winner, pair.task)]] - kernel[index[(pair.loser, pair.task)]] for pair in pairs]
    )
    c = regularization

    if c == 0.0:
        alpha = np.zeros(len(keys))
        trace = [0.0]
    else:

        def objective(a: np.ndarray) -> float:
            margins = p @ a
            hinge = np.maximum(0.0, 1.0 - margins).sum()
            return 0.5 * float(a @ kernel @ a) + c * float(hinge)

        def subgradient(a: np.ndarray) -> np.ndarray:
            margins = p @ a
            active = margins < 1.0
            return kernel @ a - c * p[active].sum(axis=0)

        alpha, trace = _hinge_descent(objective, subgradient, np.zeros(len(keys)), max_iter, tol)

    fit_scores = kernel @ alpha
    degenerate = float(fit_scores.max() - fit_scores.min()) < DEGENERATE_SCORE_RANGE if len(keys) else True
    return Ranker(
        variant="ranksvm_rbf",
        feature_ids=PROXY_IDS,
        coefficients=alpha,
        scalers=scalers,
        support=z,
        kernel_width=kernel_width,
        regularization=c,
        degenerate=degenerate,
        objective_trace=tuple(trace),
    )
