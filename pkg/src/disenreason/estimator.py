"""Scikit-learn style estimator facade over the training/evaluation core.

The estimator keeps the hyperparameter surface on ``__init__`` (so
``get_params``/``set_params``/``clone`` compose with the wider ecosystem),
holds the learned state on trailing-underscore attributes, and exposes
recommendation-shaped prediction methods on top of the functional model
layer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .data import Dataset, build_interaction_matrix, prepare_sequence, split_train_test
from .graph import normalize_adjacency
from .metrics import CountReport, MetricReport, evaluate, latent_user_report
from .model import (
    Hyper,
    forward,
    load_checkpoint,
    propagate_params,
    save_checkpoint,
    train,
)
from .reasoning import ReasoningTrace

__all__ = ["DisenReasonRecommender"]

VALIDATION_FRACTION = 0.1
VALIDATION_SPLIT_SALT = 7711


class DisenReasonRecommender(BaseEstimator):
    """Shared-account next-item recommender.

    Stage one disentangles the mixed account sequence into frequency-band
    behavioral patterns and fuses them into a reasoning pivot; stage two
    iteratively extracts latent-user vectors from the pivot with adaptive
    termination, and the aggregated users drive the prediction head.

    Parameters mirror :class:`~disenreason.model.Hyper`; all learned state
    lives on ``params_`` after :meth:`fit`.
    """

    def __init__(
        self,
        embedding_dim: int = 64,
        layers: int = 3,
        bandwidth: int = 5,
        alpha: float = 0.5,
        beta: float = 1.0,
        learning_rate: float = 1e-3,
        t_max: int = 8,
        max_len: int = 50,
        epochs: int = 20,
        batch_size: int = 64,
        patience: int = 5,
        seed: int = 0,
        include_layer0: bool = False,
        refresh_per_batch: bool = False,
        gate_pooling: str = "mean",
        gate_scale: float = 1.0,
    ):
        self.embedding_dim = embedding_dim
        self.layers = layers
        self.bandwidth = bandwidth
        self.alpha = alpha
        self.beta = beta
        self.learning_rate = learning_rate
        self.t_max = t_max
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.seed = seed
        self.include_layer0 = include_layer0
        self.refresh_per_batch = refresh_per_batch
        self.gate_pooling = gate_pooling
        self.gate_scale = gate_scale

    def _hyper(self) -> Hyper:
        hyper = Hyper(**self.get_params())
        hyper.validate()
        return hyper

    def fit(self, dataset: Dataset, validation: Dataset | None = None):
        """Train on the dataset's sequences.

        Without an explicit validation dataset, 10% of the training
        sequences are held out by seed to drive early stopping.
        """
        dataset.validate()
        hyper = self._hyper()
        if validation is None and len(dataset.sequences) >= 10:
            fit_part, validation = split_train_test(
                dataset, 1.0 - VALIDATION_FRACTION, hyper.seed + VALIDATION_SPLIT_SALT
            )
        else:
            fit_part = dataset
        self.hyper_ = hyper
        self.params_, self.history_ = train(fit_part, validation, hyper)
        self.interactions_ = build_interaction_matrix(fit_part)
        self.adjacency_ = normalize_adjacency(self.interactions_)
        self.propagated_ = propagate_params(self.params_, self.adjacency_, hyper)
        self.n_items_ = dataset.n_items
        self.n_accounts_ = dataset.n_accounts
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def score_items(self, account: int, items) -> np.ndarray:
        """Probability over all n items of being the next interaction."""
        self._check_fitted()
        ids, valid = prepare_sequence(items, self.hyper_.max_len, self.n_items_)
        probs, _ = forward(
            self.params_, self.propagated_, account, ids, valid, self.hyper_
        )
        return probs

    def predict(self, account: int, items, k: int = 5) -> np.ndarray:
        """Top-k item ids, best first (ties by ascending id)."""
        probs = self.score_items(account, items)
        order = np.lexsort((np.arange(probs.size), -probs))
        return order[:k]

    def reasoning_trace(self, account: int, items) -> ReasoningTrace:
        """The realized reasoning trace for one account sequence."""
        self._check_fitted()
        ids, valid = prepare_sequence(items, self.hyper_.max_len, self.n_items_)
        _, trace = forward(
            self.params_, self.propagated_, account, ids, valid, self.hyper_
        )
        return trace

    def evaluate(self, dataset: Dataset, ks=(5, 20)) -> MetricReport:
        self._check_fitted()
        return evaluate(self.params_, self.adjacency_, dataset, self.hyper_, ks=ks)

    def score(self, dataset: Dataset) -> float:
        """MRR@5 as a fraction in [0, 1]; higher is better."""
        return self.evaluate(dataset, ks=(5,)).mrr[5] / 100.0

    def latent_user_report(self, dataset: Dataset, ground_truth=None) -> CountReport:
        self._check_fitted()
        return latent_user_report(
            self.params_, self.adjacency_, dataset, self.hyper_, ground_truth
        )

    def save(self, path: str) -> None:
        self._check_fitted()
        save_checkpoint(path, self.params_, self.hyper_, self.interactions_)

    @classmethod
    def load(cls, path: str) -> "DisenReasonRecommender":
        params, hyper, interactions = load_checkpoint(path)
        est = cls(**vars(hyper))
        est.hyper_ = hyper
        est.params_ = params
        est.interactions_ = interactions
        est.adjacency_ = normalize_adjacency(interactions)
        est.propagated_ = propagate_params(params, est.adjacency_, hyper)
        est.n_items_ = interactions.n_items
        est.n_accounts_ = interactions.n_accounts
        est.history_ = []
        return est
