"""Ranking metrics, the popularity floor, and the latent-user-count report.

Every test target is ranked against the full item vocabulary (no candidate
sampling), with ties broken by ascending item id so reports are invariant
to evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Dataset

__all__ = [
    "recall_at_k",
    "mrr_at_k",
    "rank_of_target",
    "MetricReport",
    "evaluate",
    "PopularityBaseline",
    "popularity_baseline",
    "evaluate_fixed_ranking",
    "CountReport",
    "latent_user_report",
    "write_metrics_csv",
    "write_count_report_csv",
]


def recall_at_k(rank: int, k: int) -> float:
    """1 if the 1-based rank falls within the top k, else 0."""
    if rank < 1:
        raise ValueError("rank is 1-based")
    return 1.0 if rank <= k else 0.0


def mrr_at_k(rank: int, k: int) -> float:
    """Reciprocal rank truncated at k."""
    if rank < 1:
        raise ValueError("rank is 1-based")
    return 1.0 / rank if rank <= k else 0.0


def rank_of_target(scores: np.ndarray, target: int) -> int:
    """1-based rank of the target under descending score, ties broken by
    ascending item id."""
    better = int(np.sum(scores > scores[target]))
    tied_before = int(np.sum(scores[:target] == scores[target]))
    return 1 + better + tied_before


@dataclass
class MetricReport:
    """Recall@K and MRR@K as percentages, per requested K."""

    ks: tuple[int, ...]
    recall: dict[int, float]
    mrr: dict[int, float]
    n_samples: int


def _report_from_ranks(ranks: list[int], ks: tuple[int, ...]) -> MetricReport:
    recall = {
        k: 100.0 * float(np.mean([recall_at_k(r, k) for r in ranks])) for k in ks
    }
    mrr = {k: 100.0 * float(np.mean([mrr_at_k(r, k) for r in ranks])) for k in ks}
    return MetricReport(ks=tuple(ks), recall=recall, mrr=mrr, n_samples=len(ranks))


def evaluate(params, adjacency, dataset: Dataset, hyper, ks=(5, 20)) -> MetricReport:
    """Rank every test target under the trained model and average.

    Propagation is refreshed from the given parameters, so the report
    always reflects the current tables.
    """
    # Imported here so the pure metric helpers stay importable from the
    # training loop without a cycle.
    from .model import _forward_sample, prepare_samples, propagate_params

    propagated = propagate_params(params, adjacency, hyper)
    ranks = []
    for sample in prepare_samples(dataset, hyper):
        state = _forward_sample(params, propagated, sample, hyper)
        ranks.append(rank_of_target(state.probs, sample.target))
    return _report_from_ranks(ranks, ks)


@dataclass
class PopularityBaseline:
    """Fixed ranking by descending training frequency, ties by id."""

    ranking: np.ndarray  # item ids, best first
    rank_by_item: np.ndarray  # 1-based rank of each item id

    def rank_of(self, item: int) -> int:
        return int(self.rank_by_item[item])


def popularity_baseline(train_dataset: Dataset) -> PopularityBaseline:
    """Non-personalized floor: every target is ranked by global frequency.

    Items unseen in training follow all seen items, still ordered by id.
    """
    if not train_dataset.sequences:
        raise ValueError("popularity baseline needs training data")
    counts = np.zeros(train_dataset.n_items, dtype=np.int64)
    for seq in train_dataset.sequences:
        for item in seq.items:
            counts[item] += 1
    order = np.lexsort((np.arange(train_dataset.n_items), -counts))
    rank_by_item = np.empty(train_dataset.n_items, dtype=np.int64)
    rank_by_item[order] = np.arange(1, train_dataset.n_items + 1)
    return PopularityBaseline(ranking=order, rank_by_item=rank_by_item)


def evaluate_fixed_ranking(
    baseline: PopularityBaseline, dataset: Dataset, ks=(5, 20)
) -> MetricReport:
    ranks = [baseline.rank_of(seq.target) for seq in dataset.sequences]
    return _report_from_ranks(ranks, ks)


@dataclass
class CountReport:
    """Per-account inferred reasoning depth versus true latent-user count."""

    accounts: list[int]
    inferred: dict[int, int]
    true_k: dict[int, int] | None
    spearman: float
    exact_match: float  # fraction in [0, 1]; nan without ground truth
    degenerate: bool  # true when either side had zero variance


def latent_user_report(
    params, adjacency, dataset: Dataset, hyper, ground_truth=None
) -> CountReport:
    """Run the reasoning trace per account and record the inferred user
    count; with ground truth, summarize recovery by Spearman correlation
    and exact-match rate. Zero-variance inputs make Spearman undefined and
    are reported as 0 with the degenerate flag set."""
    from .model import _forward_sample, prepare_samples, propagate_params

    propagated = propagate_params(params, adjacency, hyper)
    inferred: dict[int, int] = {}
    for sample in prepare_samples(dataset, hyper):
        state = _forward_sample(params, propagated, sample, hyper)
        inferred[sample.account] = state.trace.steps

    accounts = sorted(inferred)
    spearman = float("nan")
    exact = float("nan")
    degenerate = False
    true_k = None
    if ground_truth is not None:
        true_k = {a: ground_truth.k[a] for a in accounts if a in ground_truth.k}
        shared = [a for a in accounts if a in true_k]
        t_vals = np.array([inferred[a] for a in shared], dtype=np.float64)
        k_vals = np.array([true_k[a] for a in shared], dtype=np.float64)
        if len(shared) >= 2 and np.ptp(t_vals) > 0 and np.ptp(k_vals) > 0:
            spearman = float(stats.spearmanr(t_vals, k_vals).statistic)
        else:
            spearman = 0.0
            degenerate = True
        exact = float(np.mean(t_vals == k_vals)) if shared else float("nan")
    return CountReport(
        accounts=accounts,
        inferred=inferred,
        true_k=true_k,
        spearman=spearman,
        exact_match=exact,
        degenerate=degenerate,
    )


def write_metrics_csv(report: MetricReport, hyper, seed: int, path: str) -> None:
    """``metric,k,value`` rows (two-decimal percentages) under a header
    comment recording the hyperparameters and seed."""
    hyper_desc = " ".join(f"{k}={v}" for k, v in sorted(vars(hyper).items()))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={seed} {hyper_desc}\n")
        fh.write("metric,k,value\n")
        for k in report.ks:
            fh.write(f"recall,{k},{report.recall[k]:.2f}\n")
        for k in report.ks:
            fh.write(f"mrr,{k},{report.mrr[k]:.2f}\n")


def write_count_report_csv(report: CountReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("account_id,inferred_T,true_K\n")
        for account in report.accounts:
            true = "" if report.true_k is None else report.true_k.get(account, "")
            fh.write(f"{account},{report.inferred[account]},{true}\n")
