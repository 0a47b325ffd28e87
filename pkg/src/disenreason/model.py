"""End-to-end model: forward pass, prediction head, losses, analytic
gradients, and the Adam training loop with early stopping.

The forward pass is lookup -> frequency disentanglement -> pivot ->
residual reasoning -> aggregation -> prediction. Every learnable tensor is
reachable through the uniform parameter-group interface, and the backward
pass is written by hand as the exact adjoint of the forward computation
(the band decomposition and the graph propagation are linear maps, so
their adjoints are transposes of fixed operators). Central finite
differences over the same loss function serve as the independent oracle in
the tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .data import Dataset, build_interaction_matrix, InteractionMatrix, prepare_sequence
from .frequency import (
    FusionProjection,
    _pool,
    _vector_components,
    band_edges,
    band_projectors,
    num_bins,
)
from .graph import (
    init_embeddings,
    lookup_sequence,
    normalize_adjacency,
    propagate,
    propagate_backward,
)
from .numeric import AdamState, adam_step, softmax, softmax_vjp
from .reasoning import ReasoningTrace, aggregate, run_reasoning

__all__ = [
    "Hyper",
    "ModelParams",
    "Propagated",
    "StaleEmbeddingsError",
    "Sample",
    "prepare_samples",
    "propagate_params",
    "forward",
    "predict",
    "rec_loss",
    "aux_loss",
    "total_loss",
    "LossBreakdown",
    "compute_gradients",
    "batch_total_loss",
    "train",
    "EpochStats",
    "save_checkpoint",
    "load_checkpoint",
]

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


class StaleEmbeddingsError(RuntimeError):
    """Propagated embeddings no longer match the current parameters."""


@dataclass
class Hyper:
    """Hyperparameters. Defaults follow the tuned operating point:
    bandwidth 5, three propagation layers, termination threshold 0.5,
    auxiliary loss weight 1.0, maximum sequence length 50."""

    embedding_dim: int = 64
    layers: int = 3
    bandwidth: int = 5
    alpha: float = 0.5
    beta: float = 1.0
    learning_rate: float = 1e-3
    t_max: int = 8
    max_len: int = 50
    epochs: int = 20
    batch_size: int = 64
    patience: int = 5
    seed: int = 0
    include_layer0: bool = False
    refresh_per_batch: bool = False
    gate_pooling: str = "mean"
    gate_scale: float = 1.0

    def validate(self) -> None:
        for name in ("embedding_dim", "layers", "bandwidth", "t_max", "max_len",
                     "epochs", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.gate_scale <= 0:
            raise ValueError("gate_scale must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.gate_pooling not in ("mean", "last"):
            raise ValueError("gate_pooling must be 'mean' or 'last'")

    @property
    def seq_bands(self) -> int:
        return len(band_edges(num_bins(self.max_len), self.bandwidth))

    @property
    def vec_bands(self) -> int:
        return len(band_edges(num_bins(self.embedding_dim), self.bandwidth))


# Stable enumeration order for optimizers and gradient checks.
GROUP_NAMES = (
    "account_embed",
    "item_embed",
    "seq_gate_weight",
    "seq_gate_bias",
    "vec_gate_weight",
    "vec_gate_bias",
    "reason_position",
    "head_weight",
    "head_bias",
    "aux_head_weight",
    "aux_head_bias",
)


@dataclass
class ModelParams:
    """Every learnable tensor, enumerable through ``groups()`` so the
    optimizer and the gradient check cover all of them uniformly.

    ``revision`` counts in-place parameter updates; propagated embedding
    bundles are stamped with it so staleness is detectable.
    """

    account_embed: np.ndarray  # m x d
    item_embed: np.ndarray  # (n+1) x d, final row = padding
    fusion: FusionProjection
    reason_position: np.ndarray  # d
    head_weight: np.ndarray  # 2d x n
    head_bias: np.ndarray  # n
    aux_head_weight: np.ndarray  # 2d x n
    aux_head_bias: np.ndarray  # n
    revision: int = 0

    @classmethod
    def init(cls, n_accounts: int, n_items: int, hyper: Hyper) -> "ModelParams":
        hyper.validate()
        d = hyper.embedding_dim
        rng = np.random.default_rng(hyper.seed)
        accounts, items = init_embeddings(n_accounts, n_items, d, rng)
        bound = 1.0 / np.sqrt(d)
        head_bound = 1.0 / np.sqrt(2 * d)
        # The vector gate starts band-aligned: column z lies in band z's
        # subspace, so gate logits respond to the state's per-band content
        # from the first step. A content-blind (white) gate makes every
        # extraction near-parallel and collapses all traces to the minimum
        # depth; gate_scale sets how sharply the gate reacts.
        vec_weight = np.empty((d, hyper.vec_bands))
        vec_projectors = band_projectors(d, hyper.bandwidth)
        for z in range(hyper.vec_bands):
            direction = vec_projectors[z] @ rng.standard_normal(d)
            norm = np.linalg.norm(direction)
            if norm == 0.0:
                direction = rng.standard_normal(d)
                norm = np.linalg.norm(direction)
            vec_weight[:, z] = hyper.gate_scale * direction / norm
        gate_bound = hyper.gate_scale * bound
        fusion = FusionProjection(
            seq_weight=rng.uniform(-gate_bound, gate_bound, size=(d, hyper.seq_bands)),
            seq_bias=np.zeros(hyper.seq_bands),
            vec_weight=vec_weight,
            vec_bias=np.zeros(hyper.vec_bands),
        )
        return cls(
            account_embed=accounts,
            item_embed=items,
            fusion=fusion,
            reason_position=rng.uniform(-bound, bound, size=d),
            head_weight=rng.uniform(-head_bound, head_bound, size=(2 * d, n_items)),
            head_bias=np.zeros(n_items),
            aux_head_weight=rng.uniform(-head_bound, head_bound, size=(2 * d, n_items)),
            aux_head_bias=np.zeros(n_items),
        )

    @property
    def n_accounts(self) -> int:
        return self.account_embed.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_embed.shape[0] - 1

    def groups(self) -> dict[str, np.ndarray]:
        return {
            "account_embed": self.account_embed,
            "item_embed": self.item_embed,
            "seq_gate_weight": self.fusion.seq_weight,
            "seq_gate_bias": self.fusion.seq_bias,
            "vec_gate_weight": self.fusion.vec_weight,
            "vec_gate_bias": self.fusion.vec_bias,
            "reason_position": self.reason_position,
            "head_weight": self.head_weight,
            "head_bias": self.head_bias,
            "aux_head_weight": self.aux_head_weight,
            "aux_head_bias": self.aux_head_bias,
        }

    def set_group(self, name: str, value: np.ndarray) -> None:
        if name.startswith("seq_gate") or name.startswith("vec_gate"):
            attr = name.replace("seq_gate", "seq").replace("vec_gate", "vec")
            setattr(self.fusion, attr, value)
        else:
            setattr(self, name, value)

    def copy(self) -> "ModelParams":
        return ModelParams(
            account_embed=self.account_embed.copy(),
            item_embed=self.item_embed.copy(),
            fusion=FusionProjection(
                seq_weight=self.fusion.seq_weight.copy(),
                seq_bias=self.fusion.seq_bias.copy(),
                vec_weight=self.fusion.vec_weight.copy(),
                vec_bias=self.fusion.vec_bias.copy(),
            ),
            reason_position=self.reason_position.copy(),
            head_weight=self.head_weight.copy(),
            head_bias=self.head_bias.copy(),
            aux_head_weight=self.aux_head_weight.copy(),
            aux_head_bias=self.aux_head_bias.copy(),
            revision=self.revision,
        )


@dataclass
class Propagated:
    """Graph-propagated embedding tables, stamped with the parameter
    revision they were computed from."""

    h_accounts: np.ndarray
    h_items: np.ndarray
    revision: int


def propagate_params(
    params: ModelParams, adjacency: sp.csr_matrix, hyper: Hyper
) -> Propagated:
    h_accounts, h_items = propagate(
        params.account_embed,
        params.item_embed,
        adjacency,
        hyper.layers,
        hyper.include_layer0,
    )
    return Propagated(h_accounts=h_accounts, h_items=h_items, revision=params.revision)


class Sample(NamedTuple):
    account: int
    ids: np.ndarray  # max_len, left-padded
    valid_len: int
    target: int


def prepare_samples(dataset: Dataset, hyper: Hyper) -> list[Sample]:
    pad = dataset.padding_id
    out = []
    for seq in dataset.sequences:
        ids, valid = prepare_sequence(seq.items, hyper.max_len, pad)
        out.append(Sample(seq.account, ids, valid, seq.target))
    return out


@lru_cache(maxsize=None)
def _pivot_rows(length: int, bandwidth: int) -> np.ndarray:
    """Final row of every band projector, shape (Z, length).

    Only the last temporal position of each pattern feeds the pivot, so
    the hot path never materializes full patterns; row z applied to the
    sequence representation gives pattern z's last hidden state.
    """
    rows = band_projectors(length, bandwidth)[:, -1, :].copy()
    rows.flags.writeable = False
    return rows


@dataclass
class _SampleState:
    """Forward intermediates kept for the backward pass of one sample."""

    sample: Sample
    seq_embed: np.ndarray  # s x d
    pooled: np.ndarray  # d
    gate: np.ndarray  # Z
    pattern_last: np.ndarray  # Z x d
    pivot: np.ndarray  # d
    trace: ReasoningTrace
    step_gates: list[np.ndarray]  # T entries of Z'
    step_bands: list[np.ndarray]  # T entries of Z' x d
    h_final: np.ndarray  # d
    h_account: np.ndarray  # d
    probs: np.ndarray  # n
    aux_probs: list[np.ndarray]  # T entries of n
    rec: float
    aux: float


def _nll(probs: np.ndarray, target: int) -> float:
    return float(-np.log(max(probs[target], PROB_FLOOR)))


def predict(
    h_final: np.ndarray,
    h_account: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
) -> np.ndarray:
    """Softmax over the n real items from the concatenated representation.

    The head only scores real items, so the padding index can never be
    recommended.
    """
    feat = np.concatenate([h_final, h_account])
    if weight.shape[0] != feat.shape[0] or weight.shape[1] != bias.shape[0]:
        raise ValueError(
            f"head shapes {weight.shape}/{bias.shape} do not fit a "
            f"{feat.shape[0]}-dim input"
        )
    return softmax(weight.T @ feat + bias)


def rec_loss(probs: np.ndarray, target: int) -> float:
    """Categorical cross-entropy -ln p[target], clamped at 1e-12."""
    return _nll(probs, target)


def aux_loss(
    users: list[np.ndarray],
    h_account: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    target: int,
) -> float:
    """Sum of per-step cross-entropies through the shared auxiliary head."""
    if not users:
        raise ValueError("auxiliary loss needs at least one inferred user")
    return sum(
        _nll(predict(u, h_account, weight, bias), target) for u in users
    )


def total_loss(rec: float, aux: float, beta: float) -> float:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return rec + beta * aux


@dataclass
class LossBreakdown:
    rec: float
    aux: float
    total: float


def _forward_sample(
    params: ModelParams,
    propagated: Propagated,
    sample: Sample,
    hyper: Hyper,
) -> _SampleState:
    seq_embed = lookup_sequence(propagated.h_items, sample.ids)
    pooled = _pool(seq_embed, sample.valid_len, hyper.gate_pooling)
    gate = softmax(params.fusion.seq_weight.T @ pooled + params.fusion.seq_bias)
    pattern_last = _pivot_rows(hyper.max_len, hyper.bandwidth) @ seq_embed
    pivot = gate @ pattern_last

    step_gates: list[np.ndarray] = []
    step_bands: list[np.ndarray] = []

    def extract(state: np.ndarray) -> np.ndarray:
        out, g, bands = _vector_components(
            state, params.fusion.vec_weight, params.fusion.vec_bias, hyper.bandwidth
        )
        step_gates.append(g)
        step_bands.append(bands)
        return out

    trace = run_reasoning(
        pivot, params.reason_position, extract, hyper.alpha, hyper.t_max
    )
    h_final = aggregate(trace.users)
    h_account = propagated.h_accounts[sample.account]
    probs = predict(h_final, h_account, params.head_weight, params.head_bias)
    aux_probs = [
        predict(u, h_account, params.aux_head_weight, params.aux_head_bias)
        for u in trace.users
    ]
    # Target -1 marks inference-only calls that never read the losses.
    if sample.target >= 0:
        rec = _nll(probs, sample.target)
        aux = sum(_nll(p, sample.target) for p in aux_probs)
    else:
        rec = 0.0
        aux = 0.0
    return _SampleState(
        sample=sample,
        seq_embed=seq_embed,
        pooled=pooled,
        gate=gate,
        pattern_last=pattern_last,
        pivot=pivot,
        trace=trace,
        step_gates=step_gates,
        step_bands=step_bands,
        h_final=h_final,
        h_account=h_account,
        probs=probs,
        aux_probs=aux_probs,
        rec=rec,
        aux=aux,
    )


def forward(
    params: ModelParams,
    propagated: Propagated,
    account: int,
    ids: np.ndarray,
    valid_len: int,
    hyper: Hyper,
    allow_stale: bool = False,
) -> tuple[np.ndarray, ReasoningTrace]:
    """Full forward pass for one prepared sequence.

    Returns the probability vector over the n real items and the realized
    reasoning trace. Raises :class:`StaleEmbeddingsError` when the
    propagated bundle predates the current parameters, unless the caller
    explicitly accepts staleness (the per-epoch training refresh does).
    """
    if propagated.revision != params.revision and not allow_stale:
        raise StaleEmbeddingsError(
            f"propagated embeddings at revision {propagated.revision} but "
            f"parameters at revision {params.revision}; re-propagate first"
        )
    state = _forward_sample(
        params, propagated, Sample(account, np.asarray(ids), valid_len, -1), hyper
    )
    return state.probs, state.trace


def _onehot_residual(probs: np.ndarray, target: int, scale: float) -> np.ndarray:
    grad = probs * scale
    grad[target] -= scale
    return grad


def _backward_sample(
    state: _SampleState,
    params: ModelParams,
    hyper: Hyper,
    scale: float,
    grads: dict[str, np.ndarray],
    grad_h_accounts: np.ndarray,
    grad_h_items: np.ndarray,
) -> None:
    """Accumulate the exact gradient of ``scale * (rec + beta*aux)`` for one
    sample into the buffers; ``grad_h_*`` collect propagated-table
    gradients for the shared graph adjoint at the end of the batch."""
    d = hyper.embedding_dim
    steps = state.trace.steps
    target = state.sample.target

    # Prediction head.
    dlogits = _onehot_residual(state.probs, target, scale)
    feat = np.concatenate([state.h_final, state.h_account])
    grads["head_weight"] += np.outer(feat, dlogits)
    grads["head_bias"] += dlogits
    dfeat = params.head_weight @ dlogits
    dh_final = dfeat[:d].copy()
    dh_account = dfeat[d:].copy()

    # Auxiliary heads (shared across steps); exactly zero when beta is 0.
    du = [np.zeros(d) for _ in range(steps)]
    if hyper.beta != 0.0:
        aux_scale = scale * hyper.beta
        for t in range(steps):
            dlog_t = _onehot_residual(state.aux_probs[t], target, aux_scale)
            feat_t = np.concatenate([state.trace.users[t], state.h_account])
            grads["aux_head_weight"] += np.outer(feat_t, dlog_t)
            grads["aux_head_bias"] += dlog_t
            dfeat_t = params.aux_head_weight @ dlog_t
            du[t] += dfeat_t[:d]
            dh_account += dfeat_t[d:]

    # Aggregation: h_final is the mean of the inferred users.
    for t in range(steps):
        du[t] += dh_final / steps

    # Reasoning loop adjoint. state_{t} = state_{t-1} - u_t and
    # u_t = extract(state_{t-1}); termination is control flow and carries
    # no gradient of its own.
    projectors = band_projectors(d, hyper.bandwidth)
    dstate = np.zeros(d)
    for t in reversed(range(1, steps + 1)):
        du_total = du[t - 1] - dstate
        dprev = dstate.copy()
        gate_t = state.step_gates[t - 1]
        bands_t = state.step_bands[t - 1]
        prev_state = state.trace.states[t - 1]
        dgate = bands_t @ du_total
        dgate_logits = softmax_vjp(gate_t, dgate)
        grads["vec_gate_weight"] += np.outer(prev_state, dgate_logits)
        grads["vec_gate_bias"] += dgate_logits
        dprev += params.fusion.vec_weight @ dgate_logits
        weighted_proj = np.tensordot(gate_t, projectors, axes=1)
        dprev += weighted_proj.T @ du_total
        dstate = dprev

    # dstate is now the gradient at the initial state = pivot + position.
    grads["reason_position"] += dstate
    dpivot = dstate

    # Fusion gate and pivot.
    dgate_seq = state.pattern_last @ dpivot
    dgate_logits_seq = softmax_vjp(state.gate, dgate_seq)
    grads["seq_gate_weight"] += np.outer(state.pooled, dgate_logits_seq)
    grads["seq_gate_bias"] += dgate_logits_seq
    dpooled = params.fusion.seq_weight @ dgate_logits_seq

    # Pattern path: pivot = sum_z gate_z * (row_z @ seq_embed), so the
    # sequence gradient is a rank-1 outer product per band, collapsed here.
    rows = _pivot_rows(hyper.max_len, hyper.bandwidth)
    dseq = np.outer(rows.T @ state.gate, dpivot)
    if hyper.gate_pooling == "mean":
        valid = max(1, min(state.sample.valid_len, hyper.max_len))
        dseq[-valid:] += dpooled / valid
    else:
        dseq[-1] += dpooled

    np.add.at(grad_h_items, state.sample.ids, dseq)
    grad_h_accounts[state.sample.account] += dh_account


def compute_gradients(
    params: ModelParams,
    adjacency: sp.csr_matrix,
    batch: list[Sample],
    hyper: Hyper,
    propagated: Propagated | None = None,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Analytic gradients of the batch-mean total loss for every group.

    When ``propagated`` is omitted the graph is re-propagated from the
    current embeddings, which is the exact differentiable pipeline the
    finite-difference oracle probes. Passing a cached bundle implements
    the per-epoch refresh mode; the propagation adjoint still routes the
    table gradients back to the initial embeddings either way.
    """
    if not batch:
        raise ValueError("empty batch")
    if propagated is None:
        propagated = propagate_params(params, adjacency, hyper)
    grads = {name: np.zeros_like(arr) for name, arr in params.groups().items()}
    grad_h_accounts = np.zeros_like(propagated.h_accounts)
    grad_h_items = np.zeros_like(propagated.h_items)
    scale = 1.0 / len(batch)
    rec_sum = 0.0
    aux_sum = 0.0
    for sample in batch:
        state = _forward_sample(params, propagated, sample, hyper)
        rec_sum += state.rec
        aux_sum += state.aux
        _backward_sample(
            state, params, hyper, scale, grads, grad_h_accounts, grad_h_items
        )
    ga, gv = propagate_backward(
        grad_h_accounts, grad_h_items, adjacency, hyper.layers, hyper.include_layer0
    )
    grads["account_embed"] += ga
    grads["item_embed"] += gv
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in group {name!r}")
    losses = LossBreakdown(
        rec=rec_sum * scale,
        aux=aux_sum * scale,
        total=total_loss(rec_sum * scale, aux_sum * scale, hyper.beta),
    )
    return losses, grads


def batch_total_loss(
    params: ModelParams,
    adjacency: sp.csr_matrix,
    batch: list[Sample],
    hyper: Hyper,
) -> float:
    """Batch-mean total loss with fresh propagation; the scalar function
    the finite-difference gradient oracle differentiates."""
    propagated = propagate_params(params, adjacency, hyper)
    rec_sum = 0.0
    aux_sum = 0.0
    for sample in batch:
        state = _forward_sample(params, propagated, sample, hyper)
        rec_sum += state.rec
        aux_sum += state.aux
    n = len(batch)
    return total_loss(rec_sum / n, aux_sum / n, hyper.beta)


def _rank_of_target(scores: np.ndarray, target: int) -> int:
    """1-based rank with ties broken by ascending item id."""
    better = int(np.sum(scores > scores[target]))
    tied_before = int(np.sum(scores[:target] == scores[target]))
    return 1 + better + tied_before


def _validation_mrr5(
    params: ModelParams,
    adjacency: sp.csr_matrix,
    samples: list[Sample],
    hyper: Hyper,
) -> float:
    propagated = propagate_params(params, adjacency, hyper)
    total = 0.0
    for sample in samples:
        state = _forward_sample(params, propagated, sample, hyper)
        rank = _rank_of_target(state.probs, sample.target)
        if rank <= 5:
            total += 1.0 / rank
    return total / len(samples)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_rec: float
    train_aux: float
    val_mrr5: float


def train(
    train_dataset: Dataset,
    val_dataset: Dataset | None,
    hyper: Hyper,
) -> tuple[ModelParams, list[EpochStats]]:
    """Train with Adam and early stopping on validation MRR@5.

    The interaction graph is built from the training sequences only and
    re-propagated once per epoch from the current embeddings (or per batch
    with ``refresh_per_batch``). Shuffling, initialization, and therefore
    the final parameters are a deterministic function of the seed.

    Returns the best-validation parameters (final parameters when no
    validation data is supplied) and the per-epoch history.
    """
    hyper.validate()
    if not train_dataset.sequences:
        raise ValueError("empty training set")
    adjacency = normalize_adjacency(build_interaction_matrix(train_dataset))
    params = ModelParams.init(train_dataset.n_accounts, train_dataset.n_items, hyper)
    opt_states = {
        name: AdamState.zeros_like(arr) for name, arr in params.groups().items()
    }
    samples = prepare_samples(train_dataset, hyper)
    val_samples = (
        prepare_samples(val_dataset, hyper)
        if val_dataset is not None and val_dataset.sequences
        else []
    )

    history: list[EpochStats] = []
    best_mrr = -1.0
    best_params = params.copy()
    epochs_since_best = 0

    for epoch in range(hyper.epochs):
        propagated = propagate_params(params, adjacency, hyper)
        order = np.random.default_rng([hyper.seed, 9176, epoch]).permutation(
            len(samples)
        )
        rec_sum = 0.0
        aux_sum = 0.0
        for start in range(0, len(order), hyper.batch_size):
            batch = [samples[i] for i in order[start : start + hyper.batch_size]]
            if hyper.refresh_per_batch:
                propagated = propagate_params(params, adjacency, hyper)
            losses, grads = compute_gradients(
                params, adjacency, batch, hyper, propagated=propagated
            )
            rec_sum += losses.rec * len(batch)
            aux_sum += losses.aux * len(batch)
            for name, arr in params.groups().items():
                params.set_group(
                    name,
                    adam_step(
                        arr, grads[name], opt_states[name], lr=hyper.learning_rate
                    ),
                )
            params.revision += 1

        rec_epoch = rec_sum / len(samples)
        aux_epoch = aux_sum / len(samples)
        val_mrr = (
            _validation_mrr5(params, adjacency, val_samples, hyper)
            if val_samples
            else float("nan")
        )
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=total_loss(rec_epoch, aux_epoch, hyper.beta),
                train_rec=rec_epoch,
                train_aux=aux_epoch,
                val_mrr5=val_mrr,
            )
        )
        if val_samples:
            if val_mrr > best_mrr:
                best_mrr = val_mrr
                best_params = params.copy()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= hyper.patience:
                    break

    if not val_samples:
        best_params = params
    return best_params, history


def save_checkpoint(
    path: str,
    params: ModelParams,
    hyper: Hyper,
    interactions: InteractionMatrix,
) -> None:
    """Versioned container with every parameter group, the hyperparameters,
    and the training interaction pairs (so evaluation reconstructs the
    exact propagation graph). Round-trips bit-exactly via npz."""
    arrays = {f"param_{name}": arr for name, arr in params.groups().items()}
    np.savez(
        path,
        format_version=np.int64(CHECKPOINT_VERSION),
        hyper_json=np.bytes_(json.dumps(vars(hyper), sort_keys=True).encode()),
        interaction_pairs=interactions.pairs,
        n_accounts=np.int64(interactions.n_accounts),
        n_items=np.int64(interactions.n_items),
        **arrays,
    )


def load_checkpoint(path: str) -> tuple[ModelParams, Hyper, InteractionMatrix]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        hyper = Hyper(**json.loads(data["hyper_json"].item().decode()))
        pairs = data["interaction_pairs"]
        n_accounts = int(data["n_accounts"])
        n_items = int(data["n_items"])
        groups = {name: data[f"param_{name}"] for name in GROUP_NAMES}
    interactions = InteractionMatrix(
        n_accounts=n_accounts,
        n_items=n_items,
        pairs=pairs,
        account_degrees=np.bincount(pairs[:, 0], minlength=n_accounts).astype(np.int64),
        item_degrees=np.bincount(pairs[:, 1], minlength=n_items).astype(np.int64),
    )
    params = ModelParams(
        account_embed=groups["account_embed"],
        item_embed=groups["item_embed"],
        fusion=FusionProjection(
            seq_weight=groups["seq_gate_weight"],
            seq_bias=groups["seq_gate_bias"],
            vec_weight=groups["vec_gate_weight"],
            vec_bias=groups["vec_gate_bias"],
        ),
        reason_position=groups["reason_position"],
        head_weight=groups["head_weight"],
        head_bias=groups["head_bias"],
        aux_head_weight=groups["aux_head_weight"],
        aux_head_bias=groups["aux_head_bias"],
    )
    hyper.validate()
    return params, hyper, interactions
