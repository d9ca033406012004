"""Nearest-neighbor classifiers for transfer learning under posterior drift.

The source sample (P) and target sample (Q) share a covariate marginal but
have different regression functions eta_P and eta_Q, linked by a relative
signal exponent gamma: the source signal |eta_P - 1/2| dominates
|eta_Q - 1/2|^gamma with matching signs. Classifiers here:

* ``weighted_knn_predict``: a two-sample weighted k-NN vote whose neighbor
  counts and weights come from ``minimax_plan`` (rate-optimal in n_P, n_Q,
  beta, gamma, d), plus the multi-source generalization.
* ``adaptive_predict``: a fully data-driven rule that scans k over the
  merged neighbor sequence, tracks a signal-to-noise statistic per k, and
  stops the first time it clears a (d+3) * log(n) threshold (falling back
  to the argmax k when nothing clears it).
* ``lepski_predict``: a classical adaptive baseline that intersects
  confidence intervals for eta(x) over increasing k and stops when the
  intersection separates from 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    HyperParams,
    KnnPlan,
    MultiKnnPlan,
    MultiSourceDataset,
    SampleSet,
    TransferDataset,
)
from .neighbors import (
    NeighborIndex,
    merged_order_multi,
    merged_order_transfer,
)

__all__ = [
    "default_knn_k",
    "minimax_plan",
    "multisource_plan",
    "weighted_knn_eta",
    "weighted_knn_predict",
    "knn_predict",
    "snr_index",
    "AdaptiveTrace",
    "adaptive_predict",
    "MultiAdaptiveTrace",
    "multisource_weighted_predict",
    "multisource_adaptive_predict",
    "LEPSKI_WIDTHS",
    "LepskiTrace",
    "lepski_predict",
    "bayes_classify",
]


def default_knn_k(n: int, hp: HyperParams) -> int:
    """Rate-optimal single-sample neighbor count floor(n^(2b/(2b+d))), >= 1."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0:
        return 0
    return max(1, math.floor(n ** (2 * hp.beta / (2 * hp.beta + hp.d))))


def combined_budget_k(n_p: int, n_q: int, hp: HyperParams) -> int:
    """Neighbor count for the source-blind pooled baseline.

    Uses the same total budget k_P + k_Q as the two-sample plan, so the
    pooled classifier looks at essentially the same neighborhood but
    votes it uniformly. This isolates what the weights buy. With n_P=0
    it collapses to default_knn_k(n_Q), so the pooled and target-only
    baselines coincide exactly in the degenerate case.
    """
    plan = minimax_plan(n_p, n_q, hp)
    return max(1, plan.k_p + plan.k_q)


def minimax_plan(n_p: int, n_q: int, hp: HyperParams) -> KnnPlan:
    """Neighbor counts and weights for the two-sample weighted k-NN.

    With N = n_P^((2b+d)/(2gb+d)) + n_Q (the effective target-equivalent
    sample size), the plan is

        w_Q = N^(-b/(2b+d))          k_Q = floor(n_Q * N^(-d/(2b+d)))
        w_P = N^(-gb/(2b+d))         k_P = floor(n_P * N^(-d/(2b+d)))

    where b is the smoothness, g the relative signal exponent, d the
    dimension. Counts are clamped so a nonempty sample always contributes
    at least one neighbor. Requires at least one sample overall.
    """
    if n_p < 0 or n_q < 0:
        raise ValueError(f"sample sizes must be >= 0, got ({n_p}, {n_q})")
    if n_p == 0 and n_q == 0:
        raise ValueError("need at least one sample in P or Q")
    b, d = hp.beta, float(hp.d)
    g = hp.scalar_gamma()
    eff = float(n_p) ** ((2 * b + d) / (2 * g * b + d)) + float(n_q)
    w_q = eff ** (-b / (2 * b + d))
    w_p = eff ** (-g * b / (2 * b + d))
    shrink = eff ** (-d / (2 * b + d))
    k_q = math.floor(n_q * shrink)
    k_p = math.floor(n_p * shrink)
    k_q = max(k_q, min(n_q, 1))
    k_p = max(k_p, min(n_p, 1))
    return KnnPlan(k_p=k_p, k_q=k_q, w_p=w_p, w_q=w_q)


def multisource_plan(source_sizes: Sequence[int], n_q: int, hp: HyperParams) -> MultiKnnPlan:
    """Per-source neighbor counts and weights for m source samples.

    The effective size pools every source at its own exponent:
    N = n_Q + sum_j n_j^((2b+d)/(2 g_j b + d)); then each source i gets
    w_i = N^(-g_i b/(2b+d)), k_i = floor(n_i * N^(-d/(2b+d))), and the
    target gets the gamma = 1 weight. Same clamping as the two-sample plan.
    """
    sizes = [int(n) for n in source_sizes]
    if len(sizes) < 1:
        raise ValueError("need at least one source")
    if any(n < 0 for n in sizes) or n_q < 0:
        raise ValueError("sample sizes must be >= 0")
    if sum(sizes) == 0 and n_q == 0:
        raise ValueError("need at least one sample across all sets")
    b, d = hp.beta, float(hp.d)
    gammas = hp.gamma_vector(len(sizes))
    eff = float(n_q) + sum(
        float(n) ** ((2 * b + d) / (2 * g * b + d)) for n, g in zip(sizes, gammas)
    )
    shrink = eff ** (-d / (2 * b + d))
    w_q = eff ** (-b / (2 * b + d))
    k_q = max(math.floor(n_q * shrink), min(n_q, 1))
    w_s = tuple(eff ** (-g * b / (2 * b + d)) for g in gammas)
    k_s = tuple(max(math.floor(n * shrink), min(n, 1)) for n in sizes)
    return MultiKnnPlan(k_sources=k_s, w_sources=w_s, k_q=k_q, w_q=w_q)


def weighted_knn_eta(ds: TransferDataset, plan: KnnPlan, x) -> float:
    """The weighted neighbor-vote estimate of the target regression at x.

    eta_hat = (w_P * sum of k_P nearest P-labels + w_Q * sum of k_Q nearest
    Q-labels) / (w_P k_P + w_Q k_Q). Raises if the plan requests more
    neighbors than a set holds or gives every selected neighbor zero weight.
    """
    if plan.k_p > ds.n_p:
        raise ValueError(f"plan needs k_P = {plan.k_p} but P has {ds.n_p} samples")
    if plan.k_q > ds.n_q:
        raise ValueError(f"plan needs k_Q = {plan.k_q} but Q has {ds.n_q} samples")
    den = plan.w_p * plan.k_p + plan.w_q * plan.k_q
    if den <= 0:
        raise ValueError("plan selects no positively weighted neighbors")
    num = 0.0
    if plan.k_p > 0:
        num += plan.w_p * NeighborIndex(ds.p_data).query(x, plan.k_p).label_sum
    if plan.k_q > 0:
        num += plan.w_q * NeighborIndex(ds.q_data).query(x, plan.k_q).label_sum
    return num / den


def weighted_knn_predict(ds: TransferDataset, plan: KnnPlan, x) -> int:
    """Two-sample weighted k-NN label at x: 1 iff eta_hat > 1/2."""
    return int(weighted_knn_eta(ds, plan, x) > 0.5)


def knn_predict(s: SampleSet, k: int, x) -> int:
    """Plain k-NN majority label with strict-majority tie rule (> 1/2)."""
    if not (1 <= k <= len(s)):
        raise ValueError(f"k must be in [1, {len(s)}], got {k}")
    nl = NeighborIndex(s).query(x, k)
    return int(nl.label_sum / k > 0.5)


def snr_index(k_p: int, eta_p: float, k_q: int, eta_q: float) -> float:
    """Signal-to-noise statistic of a (k_P, k_Q) neighbor split.

    When the two estimates sit on the same side of 1/2 their evidence adds:
    k_P (eta_P - 1/2)^2 + k_Q (eta_Q - 1/2)^2. On opposite sides only the
    stronger one counts: max of the two terms. An estimate exactly at 1/2
    agrees with everything and contributes zero either way.
    """
    sp = eta_p - 0.5
    sq = eta_q - 0.5
    tp = k_p * sp * sp
    tq = k_q * sq * sq
    if sp * sq >= 0:
        return tp + tq
    return max(tp, tq)


@dataclass(frozen=True)
class AdaptiveTrace:
    """Per-step record of the adaptive scan over the merged neighbor order.

    Arrays are indexed by step (k = index + 1). ``stop_step`` is the first
    1-based k whose statistic exceeded ``threshold``, or None if none did;
    ``chosen_step`` is the step whose intermediate classifier produced
    ``label`` (the stop step, else the first argmax of the statistic).
    """

    k_p: np.ndarray
    k_q: np.ndarray
    eta_p: np.ndarray
    eta_q: np.ndarray
    snr: np.ndarray
    threshold: float
    stop_step: int | None
    chosen_step: int
    label: int

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, len(self.snr) + 1)


def adaptive_predict(ds: TransferDataset, x) -> tuple[int, AdaptiveTrace]:
    """Adaptive two-sample classifier: scan k, stop on strong evidence.

    Walks the merged (distance-sorted) sequence of all n_P + n_Q samples.
    At step k the k nearest points split into k_P from P and k_Q from Q
    with label means eta_P, eta_Q (1/2 when a side is empty). The scan
    stops at the first k whose snr_index exceeds (d+3) * log(n_P + n_Q);
    if none does, the argmax step (smallest on ties) is used. The label is
    1{sqrt(k_P)(eta_P - 1/2) + sqrt(k_Q)(eta_Q - 1/2) >= 0} at that step.
    """
    n = ds.n_p + ds.n_q
    if n == 0:
        raise ValueError("dataset is empty")
    mo = merged_order_transfer(ds, x)
    is_q = mo.group == 0
    steps = np.arange(1, n + 1, dtype=np.float64)
    k_q = np.cumsum(is_q)
    k_p = steps.astype(np.int64) - k_q
    sum_q = np.cumsum(np.where(is_q, mo.labels, 0))
    sum_p = np.cumsum(np.where(is_q, 0, mo.labels))
    with np.errstate(invalid="ignore"):
        eta_q = np.where(k_q > 0, sum_q / np.maximum(k_q, 1), 0.5)
        eta_p = np.where(k_p > 0, sum_p / np.maximum(k_p, 1), 0.5)
    sp = eta_p - 0.5
    sq = eta_q - 0.5
    term_p = k_p * sp * sp
    term_q = k_q * sq * sq
    snr = np.where(sp * sq >= 0, term_p + term_q, np.maximum(term_p, term_q))
    threshold = (ds.d + 3) * math.log(n)
    exceed = snr > threshold
    if exceed.any():
        stop = int(np.argmax(exceed))
        stop_step = stop + 1
        chosen = stop
    else:
        stop_step = None
        chosen = int(np.argmax(snr))
    score = math.sqrt(k_p[chosen]) * sp[chosen] + math.sqrt(k_q[chosen]) * sq[chosen]
    label = int(score >= 0)
    trace = AdaptiveTrace(
        k_p=k_p, k_q=k_q.astype(np.int64), eta_p=eta_p, eta_q=eta_q, snr=snr,
        threshold=threshold, stop_step=stop_step, chosen_step=chosen + 1, label=label,
    )
    return label, trace


def multisource_weighted_predict(mds: MultiSourceDataset, plan: MultiKnnPlan, x) -> int:
    """Weighted k-NN vote pooled over every source sample and the target.

    eta_hat = (sum_i w_i * [k_i nearest labels of source i] + w_Q * [k_Q
    nearest target labels]) / (sum_i w_i k_i + w_Q k_Q); label 1 iff > 1/2.
    """
    if plan.m != mds.m:
        raise ValueError(f"plan has {plan.m} sources, dataset has {mds.m}")
    if plan.k_q > mds.n_q:
        raise ValueError(f"plan needs k_Q = {plan.k_q} but Q has {mds.n_q} samples")
    for i, (k_i, s) in enumerate(zip(plan.k_sources, mds.sources)):
        if k_i > len(s):
            raise ValueError(f"plan needs k = {k_i} from source {i + 1} of size {len(s)}")
    den = plan.w_q * plan.k_q + sum(w * k for w, k in zip(plan.w_sources, plan.k_sources))
    if den <= 0:
        raise ValueError("plan selects no positively weighted neighbors")
    num = 0.0
    if plan.k_q > 0:
        num += plan.w_q * NeighborIndex(mds.q_data).query(x, plan.k_q).label_sum
    for w_i, k_i, s in zip(plan.w_sources, plan.k_sources, mds.sources):
        if k_i > 0:
            num += w_i * NeighborIndex(s).query(x, k_i).label_sum
    return int(num / den > 0.5)


@dataclass(frozen=True)
class MultiAdaptiveTrace:
    """Per-step record of the multi-source adaptive scan.

    Row 0 of the (m+1, n) arrays is the target set, rows 1..m the sources.
    ``snr_pos``/``snr_neg`` accumulate the evidence of groups sitting at or
    above 1/2 and strictly below it; the scan statistic is their maximum.
    """

    k_counts: np.ndarray
    etas: np.ndarray
    snr_pos: np.ndarray
    snr_neg: np.ndarray
    snr: np.ndarray
    threshold: float
    stop_step: int | None
    chosen_step: int
    label: int

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, len(self.snr) + 1)


def multisource_adaptive_predict(mds: MultiSourceDataset, x) -> tuple[int, MultiAdaptiveTrace]:
    """Adaptive classifier over m sources plus the target.

    Same scan as adaptive_predict, with per-group evidence split by side:
    snr_pos(k) sums k_g (eta_g - 1/2)^2 over groups with eta_g >= 1/2,
    snr_neg(k) over groups with eta_g < 1/2. Stops at the first k where
    max(snr_pos, snr_neg) clears (d+3) * log(total n), argmax fallback.
    The label is 1{snr_pos >= snr_neg} at the chosen step.
    """
    n = mds.n_q + sum(mds.source_sizes)
    if n == 0:
        raise ValueError("dataset is empty")
    mo = merged_order_multi(mds, x)
    n_groups = mds.m + 1
    k_counts = np.empty((n_groups, n), dtype=np.int64)
    etas = np.empty((n_groups, n), dtype=np.float64)
    snr_pos = np.zeros(n, dtype=np.float64)
    snr_neg = np.zeros(n, dtype=np.float64)
    for g in range(n_groups):
        in_g = mo.group == g
        k_g = np.cumsum(in_g)
        sum_g = np.cumsum(np.where(in_g, mo.labels, 0))
        eta_g = np.where(k_g > 0, sum_g / np.maximum(k_g, 1), 0.5)
        k_counts[g] = k_g
        etas[g] = eta_g
        term = k_g * (eta_g - 0.5) ** 2
        above = eta_g >= 0.5
        snr_pos += np.where(above, term, 0.0)
        snr_neg += np.where(above, 0.0, term)
    snr = np.maximum(snr_pos, snr_neg)
    threshold = (mds.d + 3) * math.log(n)
    exceed = snr > threshold
    if exceed.any():
        chosen = int(np.argmax(exceed))
        stop_step = chosen + 1
    else:
        stop_step = None
        chosen = int(np.argmax(snr))
    label = int(snr_pos[chosen] >= snr_neg[chosen])
    trace = MultiAdaptiveTrace(
        k_counts=k_counts, etas=etas, snr_pos=snr_pos, snr_neg=snr_neg, snr=snr,
        threshold=threshold, stop_step=stop_step, chosen_step=chosen + 1, label=label,
    )
    return label, trace


def _width_log_outside(n: int, d: int, k: np.ndarray) -> np.ndarray:
    return np.sqrt((d + 3) / k) * math.log(n)


def _width_log_inside(n: int, d: int, k: np.ndarray) -> np.ndarray:
    return np.sqrt((d + 3) * math.log(n) / k)


# Two conventions for the confidence width at step k; they differ in
# where the log(n) factor sits relative to the square root.
LEPSKI_WIDTHS = {
    "algorithm3": _width_log_outside,  # sqrt((d+3)/k) * log(n)
    "lemma5": _width_log_inside,       # sqrt((d+3) * log(n) / k)
}


@dataclass(frozen=True)
class LepskiTrace:
    """Per-step record of the interval-intersection scan."""

    eta: np.ndarray
    width: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    stop_step: int | None
    label: int


def lepski_predict(s: SampleSet, x, width: str = "algorithm3", return_trace: bool = False):
    """Interval-intersection adaptive k-NN label on a single sample.

    For k = 1..n the running intersection of the confidence intervals
    [eta_k - w_k, eta_k + w_k] around the k-NN label mean is tracked; the
    scan stops as soon as the intersection lies strictly above or below
    1/2 and labels 1{eta_k >= 1/2} at that k. If the intersection never
    separates, the label comes from eta_n. ``width`` picks the convention
    from LEPSKI_WIDTHS.
    """
    n = len(s)
    if n == 0:
        raise ValueError("sample set is empty")
    try:
        width_fn = LEPSKI_WIDTHS[width]
    except KeyError:
        raise ValueError(f"unknown width variant {width!r}; options: {sorted(LEPSKI_WIDTHS)}")
    _, order = NeighborIndex(s).sorted_order(x)
    labels = s.labels[order]
    k = np.arange(1, n + 1, dtype=np.float64)
    eta = np.cumsum(labels) / k
    w = width_fn(n, s.d, k)
    lower = np.maximum.accumulate(eta - w)
    upper = np.minimum.accumulate(eta + w)
    split = (lower > 0.5) | (upper < 0.5)
    if split.any():
        stop = int(np.argmax(split))
        stop_step = stop + 1
        label = int(eta[stop] >= 0.5)
    else:
        stop_step = None
        label = int(eta[-1] >= 0.5)
    if not return_trace:
        return label
    return label, LepskiTrace(eta=eta, width=w, lower=lower, upper=upper,
                              stop_step=stop_step, label=label)


def bayes_classify(model, x) -> int:
    """Oracle label under a known target regression: 0 iff eta_Q(x) <= 1/2.

    ``model`` is anything exposing ``eta_q(x)`` (see simulation.DriftModel).
    """
    return int(np.asarray(model.eta_q(x)) > 0.5)
