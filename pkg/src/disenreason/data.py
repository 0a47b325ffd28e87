"""Shared-account datasets: synthetic generation with known latent users,
text file I/O, interaction-matrix construction, splitting, and padding.

The synthetic generator exists because the real shared-account logs are not
available at desk scale. Each account draws K latent users with disjoint
item pools and block-periodic activity rhythms, so distinct users occupy
distinct temporal frequencies and the true K is unambiguous for analysis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "AccountSequence",
    "Dataset",
    "SyntheticGroundTruth",
    "GeneratorConfig",
    "InteractionMatrix",
    "DatasetFormatError",
    "generate_synthetic",
    "write_dataset",
    "read_dataset",
    "write_ground_truth",
    "read_ground_truth",
    "build_interaction_matrix",
    "split_train_test",
    "prepare_sequence",
]

FILE_HEADER_TAG = "#disenreason-v1"


class DatasetFormatError(ValueError):
    """Raised when a dataset file violates the on-disk contract."""


class AccountSequence(NamedTuple):
    account: int
    items: tuple[int, ...]
    target: int


@dataclass
class Dataset:
    """Interaction sequences for a set of shared accounts.

    ``sequences`` holds (account id, chronological input items, held-out
    target). The target never appears in the input portion it was split
    from, and all ids index the declared vocabularies.
    """

    n_items: int
    n_accounts: int
    sequences: list[AccountSequence]

    def validate(self) -> None:
        for idx, seq in enumerate(self.sequences):
            if not (0 <= seq.account < self.n_accounts):
                raise DatasetFormatError(
                    f"sequence {idx}: account id {seq.account} out of range"
                )
            if len(seq.items) == 0:
                raise DatasetFormatError(f"sequence {idx}: empty item list")
            for item in seq.items:
                if not (0 <= item < self.n_items):
                    raise DatasetFormatError(
                        f"sequence {idx}: item id {item} out of range"
                    )
            if not (0 <= seq.target < self.n_items):
                raise DatasetFormatError(
                    f"sequence {idx}: target id {seq.target} out of range"
                )

    @property
    def padding_id(self) -> int:
        """Reserved padding index, one past the item vocabulary."""
        return self.n_items


@dataclass
class SyntheticGroundTruth:
    """True latent-user structure behind a synthetic dataset.

    ``k`` maps account id to its latent-user count; ``labels`` holds, per
    dataset sequence (same order), the generating-user index of every
    input position.
    """

    k: dict[int, int] = field(default_factory=dict)
    labels: list[list[int]] = field(default_factory=list)
    accounts: list[int] = field(default_factory=list)  # aligned with labels


@dataclass
class GeneratorConfig:
    """Knobs for the synthetic shared-account generator.

    The latent-user count K is drawn uniformly from {1..k_max} unless
    ``k_weights`` supplies per-count probabilities. User i of an account
    stays active for ``rhythm_periods[i % len]`` consecutive interactions
    before the next user takes over, round-robin. Each account contributes
    ``sequences_per_account`` independent sequences drawn from the same
    latent users, mirroring production logs where one account accumulates
    many sessions.
    """

    n_items: int = 200
    n_accounts: int = 500
    k_max: int = 3
    pool_size: int = 8
    rhythm_periods: tuple[int, ...] = (1, 2, 4, 8)
    mean_len: float = 15.0
    sequences_per_account: int = 4
    seed: int = 0
    k_weights: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.n_items < 1 or self.n_accounts < 1:
            raise ValueError("n_items and n_accounts must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.k_max * self.pool_size > self.n_items:
            raise ValueError(
                f"k_max * pool_size = {self.k_max * self.pool_size} exceeds "
                f"n_items = {self.n_items}; disjoint pools are impossible"
            )
        if self.mean_len < 1:
            raise ValueError("mean_len must be >= 1")
        if self.sequences_per_account < 1:
            raise ValueError("sequences_per_account must be >= 1")
        if not self.rhythm_periods or any(p < 1 for p in self.rhythm_periods):
            raise ValueError("rhythm_periods must be positive")
        if self.k_weights is not None:
            if len(self.k_weights) != self.k_max:
                raise ValueError("k_weights must have k_max entries")
            if any(w < 0 for w in self.k_weights) or sum(self.k_weights) <= 0:
                raise ValueError("k_weights must be non-negative and sum > 0")


def generate_synthetic(config: GeneratorConfig) -> tuple[Dataset, SyntheticGroundTruth]:
    """Generate mixed shared-account sequences plus their ground truth.

    Every account draws K users once; each user owns a private pool of
    ``pool_size`` items disjoint from its siblings' pools, and users take
    turns in blocks of their rhythm period (the rotation starts at a random
    user per sequence). The final interaction of every sequence becomes its
    held-out target. Per-account randomness is derived from the master seed
    through ``SeedSequence.spawn``, so generation is deterministic and
    could be parallelized per account without changing the output.
    """
    config.validate()
    master = np.random.SeedSequence(config.seed)
    children = master.spawn(config.n_accounts)

    if config.k_weights is not None:
        weights = np.asarray(config.k_weights, dtype=np.float64)
        weights = weights / weights.sum()
    else:
        weights = np.full(config.k_max, 1.0 / config.k_max)

    sequences: list[AccountSequence] = []
    truth = SyntheticGroundTruth()
    for account in range(config.n_accounts):
        rng = np.random.default_rng(children[account])
        k = int(rng.choice(np.arange(1, config.k_max + 1), p=weights))
        shuffled = rng.permutation(config.n_items)
        pools = [
            shuffled[u * config.pool_size : (u + 1) * config.pool_size]
            for u in range(k)
        ]
        periods = [
            config.rhythm_periods[u % len(config.rhythm_periods)] for u in range(k)
        ]
        truth.k[account] = k

        for _ in range(config.sequences_per_account):
            # Input length ~ Poisson(mean_len); one extra step is the target.
            total = max(2, int(rng.poisson(config.mean_len)) + 1)
            items: list[int] = []
            labels: list[int] = []
            user = int(rng.integers(0, k))
            remaining_in_block = periods[user]
            while len(items) < total:
                items.append(int(rng.choice(pools[user])))
                labels.append(user)
                remaining_in_block -= 1
                if remaining_in_block == 0:
                    user = (user + 1) % k
                    remaining_in_block = periods[user]

            sequences.append(
                AccountSequence(
                    account=account, items=tuple(items[:-1]), target=items[-1]
                )
            )
            truth.labels.append(labels[:-1])
            truth.accounts.append(account)

    dataset = Dataset(
        n_items=config.n_items, n_accounts=config.n_accounts, sequences=sequences
    )
    dataset.validate()
    return dataset, truth


def write_dataset(dataset: Dataset, path: str) -> None:
    """Write the UTF-8 text format:

    header ``#disenreason-v1 n_items=<n> n_accounts=<m>``, then one line per
    sequence: ``<account>\\t<item> <item> ...\\t<target>``.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{FILE_HEADER_TAG} n_items={dataset.n_items} n_accounts={dataset.n_accounts}\n")
        for seq in dataset.sequences:
            items = " ".join(str(i) for i in seq.items)
            fh.write(f"{seq.account}\t{items}\t{seq.target}\n")


def read_dataset(path: str) -> Dataset:
    """Parse a dataset file, reporting the offending line on any defect."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file")

    header = lines[0].split()
    if len(header) != 3 or header[0] != FILE_HEADER_TAG:
        raise DatasetFormatError(f"line 1: bad header {lines[0]!r}")
    try:
        n_items = int(header[1].removeprefix("n_items="))
        n_accounts = int(header[2].removeprefix("n_accounts="))
    except ValueError as exc:
        raise DatasetFormatError(f"line 1: unparsable header counts: {exc}") from exc

    sequences: list[AccountSequence] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetFormatError(
                f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}"
            )
        try:
            account = int(parts[0])
            items = tuple(int(tok) for tok in parts[1].split())
            target = int(parts[2])
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from exc
        if not items:
            raise DatasetFormatError(f"line {lineno}: empty item sequence")
        sequences.append(AccountSequence(account=account, items=items, target=target))

    dataset = Dataset(n_items=n_items, n_accounts=n_accounts, sequences=sequences)
    try:
        dataset.validate()
    except DatasetFormatError as exc:
        raise DatasetFormatError(str(exc)) from exc
    return dataset


def write_ground_truth(truth: SyntheticGroundTruth, path: str) -> None:
    """One JSON record per dataset sequence, in dataset order:
    {"account": id, "k": K, "labels": [...]}."""
    with open(path, "w", encoding="utf-8") as fh:
        for account, labels in zip(truth.accounts, truth.labels):
            record = {"account": account, "k": truth.k[account], "labels": labels}
            fh.write(json.dumps(record) + "\n")


def read_ground_truth(path: str) -> SyntheticGroundTruth:
    truth = SyntheticGroundTruth()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                account = int(record["account"])
                truth.k[account] = int(record["k"])
                truth.labels.append([int(v) for v in record["labels"]])
                truth.accounts.append(account)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"line {lineno}: {exc}") from exc
    return truth


@dataclass
class InteractionMatrix:
    """Binary account-item incidence stored as sorted (account, item) pairs."""

    n_accounts: int
    n_items: int
    pairs: np.ndarray  # shape (p, 2), int64, lexicographically sorted
    account_degrees: np.ndarray  # shape (n_accounts,)
    item_degrees: np.ndarray  # shape (n_items,)


def build_interaction_matrix(dataset: Dataset) -> InteractionMatrix:
    """Incidence over the input portions only; targets never enter the graph.

    Duplicate interactions collapse to a single binary entry.
    """
    seen: set[tuple[int, int]] = set()
    for seq in dataset.sequences:
        for item in seq.items:
            seen.add((seq.account, item))
    if seen:
        pairs = np.array(sorted(seen), dtype=np.int64)
    else:
        pairs = np.zeros((0, 2), dtype=np.int64)
    account_degrees = np.bincount(pairs[:, 0], minlength=dataset.n_accounts).astype(np.int64)
    item_degrees = np.bincount(pairs[:, 1], minlength=dataset.n_items).astype(np.int64)
    return InteractionMatrix(
        n_accounts=dataset.n_accounts,
        n_items=dataset.n_items,
        pairs=pairs,
        account_degrees=account_degrees,
        item_degrees=item_degrees,
    )


def split_train_test(
    dataset: Dataset, ratio: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Disjoint sequence split: ceil(ratio * N) train, the rest test.

    The shuffle is seeded; within each split, sequences keep their original
    dataset order so downstream iteration is stable.
    """
    if not (0.0 < ratio < 1.0):
        raise ValueError("split ratio must lie strictly between 0 and 1")
    n = len(dataset.sequences)
    n_train = math.ceil(ratio * n)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])
    train = Dataset(
        n_items=dataset.n_items,
        n_accounts=dataset.n_accounts,
        sequences=[dataset.sequences[i] for i in train_idx],
    )
    test = Dataset(
        n_items=dataset.n_items,
        n_accounts=dataset.n_accounts,
        sequences=[dataset.sequences[i] for i in test_idx],
    )
    return train, test


def prepare_sequence(
    items: Sequence[int], max_len: int, pad_id: int
) -> tuple[np.ndarray, int]:
    """Fixed-length view of a sequence: keep the most recent ``max_len``
    items, left-pad shorter sequences with ``pad_id``.

    Returns the padded id array and the count of valid (real) positions.
    Left padding keeps the most recent interaction at the final slot.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    kept = list(items[-max_len:])
    valid = len(kept)
    out = np.full(max_len, pad_id, dtype=np.int64)
    if valid:
        out[max_len - valid :] = kept
    return out, valid
