"""Scikit-learn style front end for the pruning pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import seeding
from .datasets import Dataset, standardize_pair, stratified_split
from .driver import PruneRunConfig, imp_run
from .masks import SamplingConfig
from .nn import KDConfig, MaskedNetwork, forward, init_network
from .validation import check_labels, check_matrix


class RandomizedPruningClassifier(BaseEstimator, ClassifierMixin):
    """Feedforward classifier pruned by randomized mask search.

    ``fit`` trains a dense network, then prunes it over a sparsity
    schedule: at each stage a pool of candidate masks (one deterministic
    magnitude cut plus sampled ensemble masks) is scored by a single
    boosted-learning-rate epoch on the validation split, the best
    candidate is kept, the model is rewound, and training resumes under
    the winning mask.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(32, 32)
        Widths of the hidden layers.
    activation : {"relu", "identity"}, default="relu"
        Hidden-layer activation; the output layer is always linear.
    schedule : tuple of float, default=(0.54, 0.83, 0.91, 0.9375)
        Strictly increasing per-stage sparsities in (0, 1).
    n_candidates : int, default=8
        Candidate masks per stage, including the deterministic one.
    sampling_ratio : float, default=0.01
        Scales the number of masks ensembled per candidate.
    sharpening_power : int, default=5
        Exponent applied to normalized weight magnitudes when deriving
        sampling probabilities.
    range_multiplier : float, default=2.0
        Restricts sampling to the top ``range_multiplier * k`` weight
        magnitudes of each layer.
    randomness_schedule : {"decrease", "increase"}, default="decrease"
        Whether ensemble size follows the pruned or the kept count.
    optimizer : {"adam", "sgd"}, default="adam"
    base_lr : float, default=0.01
    emep_lr_multiplier : float, default=5.0
        Learning-rate boost used for the one-epoch candidate scoring.
    batch_size : int, default=32
    finetune_epochs_max : int, default=30
    convergence_patience : int, default=5
        Stop finetuning after this many epochs without a validation-loss
        improvement.
    distill : bool, default=False
        Add hidden-state and logit mean-squared-error penalties against
        the converged dense model while finetuning sparse stages.
    distill_hidden_weight, distill_output_weight : float, default=1.0
    val_fraction : float, default=0.2
        Share of the training data held out for candidate scoring and
        early stopping.
    n_jobs : int, default=1
        Thread count for candidate scoring; results are identical for
        any value.
    random_state : int, default=0

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
    n_features_in_ : int
    network_ : the pruned MaskedNetwork
    stage_reports_ : list of per-stage StageReport records
    """

    def __init__(
        self,
        hidden_layer_sizes=(32, 32),
        activation="relu",
        schedule=(0.54, 0.83, 0.91, 0.9375),
        n_candidates=8,
        sampling_ratio=0.01,
        sharpening_power=5,
        range_multiplier=2.0,
        randomness_schedule="decrease",
        optimizer="adam",
        base_lr=0.01,
        emep_lr_multiplier=5.0,
        batch_size=32,
        finetune_epochs_max=30,
        convergence_patience=5,
        distill=False,
        distill_hidden_weight=1.0,
        distill_output_weight=1.0,
        val_fraction=0.2,
        n_jobs=1,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.schedule = schedule
        self.n_candidates = n_candidates
        self.sampling_ratio = sampling_ratio
        self.sharpening_power = sharpening_power
        self.range_multiplier = range_multiplier
        self.randomness_schedule = randomness_schedule
        self.optimizer = optimizer
        self.base_lr = base_lr
        self.emep_lr_multiplier = emep_lr_multiplier
        self.batch_size = batch_size
        self.finetune_epochs_max = finetune_epochs_max
        self.convergence_patience = convergence_patience
        self.distill = distill
        self.distill_hidden_weight = distill_hidden_weight
        self.distill_output_weight = distill_output_weight
        self.val_fraction = val_fraction
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _config(self) -> PruneRunConfig:
        return PruneRunConfig(
            schedule=list(self.schedule),
            n_candidates=self.n_candidates,
            sampling=SamplingConfig(
                sampling_ratio=self.sampling_ratio,
                sharpening_power=self.sharpening_power,
                range_multiplier=self.range_multiplier,
                schedule_kind=self.randomness_schedule,
            ),
            optimizer=self.optimizer,
            base_lr=self.base_lr,
            emep_lr_multiplier=self.emep_lr_multiplier,
            batch_size=self.batch_size,
            finetune_epochs_max=self.finetune_epochs_max,
            convergence_patience=self.convergence_patience,
            kd=KDConfig(
                enabled=self.distill,
                hidden_weight=self.distill_hidden_weight,
                output_weight=self.distill_output_weight,
            ),
            seed=self.random_state,
        )

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_labels(y, X.shape[0])
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        self.n_features_in_ = X.shape[1]

        data = Dataset(X, y_enc, len(self.classes_))
        split_seed = seeding.substream_seed(self.random_state, seeding.TAG_SPLIT)
        train, val = stratified_split(data, self.val_fraction, split_seed)
        train, val, self.feature_mean_, self.feature_scale_ = standardize_pair(
            train, val
        )

        sizes = [self.n_features_in_, *self.hidden_layer_sizes, len(self.classes_)]
        init_seed = seeding.substream_seed(self.random_state, seeding.TAG_INIT)
        net = MaskedNetwork.dense(
            init_network(sizes, activation=self.activation, seed=init_seed)
        )
        net, reports = imp_run(net, self._config(), train, val, n_jobs=self.n_jobs)
        self.network_ = net
        self.stage_reports_ = reports
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError(
                "this RandomizedPruningClassifier instance is not fitted yet"
            )

    def _transform(self, X) -> np.ndarray:
        X = check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return (X - self.feature_mean_) / self.feature_scale_

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        return forward(self.network_, self._transform(X)).logits

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        return forward(self.network_, self._transform(X)).probs

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
