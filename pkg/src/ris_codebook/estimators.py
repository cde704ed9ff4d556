"""scikit-learn style estimators wrapping the codebook design pipeline.

X is always a complex (num_users, M) matrix of per-user composite channels
(or anything `validation.channel_matrix` accepts). Both estimators follow
the fit/predict/score protocol and inherit get_params/set_params, so they
compose with sklearn tooling that does not touch the data itself.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .clustering import (
    assign_to_centroids,
    cluster_users,
    power_features,
    sensing_codebook,
)
from .codebook import Codebook, PhaseGrid, gain_matrix
from .drl.agent import AgentConfig
from .drl.learn import learn_vector
from .errors import ConfigurationError
from .multilevel import LevelSpec
from .utils import derive_seed
from .validation import channel_matrix, check_fitted


class PowerFeatureClusterer(ClusterMixin, BaseEstimator):
    """Group users by sensing-beam receive-power signatures.

    Parameters
    ----------
    n_clusters : number of groups (the eventual codebook size).
    n_sensing_beams : random sensing beams used to build power features.
    bits : phase-shifter resolution of the sensing beams.
    noise_scale : lognormal measurement noise on the power features (fit only).
    max_iter : k-means iteration cap.
    random_state : master seed; sensing beams, noise, and seeding derive from it.
    """

    def __init__(self, n_clusters=4, n_sensing_beams=32, bits=3,
                 noise_scale=0.0, max_iter=100, random_state=0):
        self.n_clusters = n_clusters
        self.n_sensing_beams = n_sensing_beams
        self.bits = bits
        self.noise_scale = noise_scale
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = channel_matrix(X)
        grid = PhaseGrid(self.bits)
        sensing = sensing_codebook(
            X.shape[1], self.n_sensing_beams, grid,
            seed=derive_seed(self.random_state, "sensing"),
        )
        rng = np.random.default_rng(derive_seed(self.random_state, "noise"))
        features = power_features(X, sensing, self.noise_scale, rng)
        assignment = cluster_users(
            features, self.n_clusters,
            seed=derive_seed(self.random_state, "kmeans"),
            max_iter=self.max_iter,
        )
        self.sensing_codebook_ = sensing
        self.labels_ = assignment.labels
        self.cluster_centers_ = assignment.centroids
        self.assignment_ = assignment
        return self

    def predict(self, X):
        check_fitted(self, "cluster_centers_")
        X = channel_matrix(X)
        features = power_features(X, self.sensing_codebook_)
        return assign_to_centroids(features, self.cluster_centers_)


class CodebookLearner(BaseEstimator):
    """Learn an N-beam reflection codebook from composite channels.

    fit(X) clusters the users into n_beams groups and learns one beam per
    group with the multi-level agent loop; predict(X) returns each user's
    best beam index and score(X) the mean best-beam gain (the codebook
    design objective, higher is better).
    """

    def __init__(self, n_beams=4, bits=3, level_sizes=None, budget=1000,
                 candidates=8, hidden=(64, 32), actor_lr=1e-4, critic_lr=1e-3,
                 gamma=0.99, tau=0.01, noise_scale=1.0, noise_final=0.05,
                 batch_size=64, buffer_capacity=10_000, n_sensing_beams=32,
                 feature_noise=0.0, transfer=True, n_jobs=1, random_state=0):
        self.n_beams = n_beams
        self.bits = bits
        self.level_sizes = level_sizes
        self.budget = budget
        self.candidates = candidates
        self.hidden = hidden
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.gamma = gamma
        self.tau = tau
        self.noise_scale = noise_scale
        self.noise_final = noise_final
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.n_sensing_beams = n_sensing_beams
        self.feature_noise = feature_noise
        self.transfer = transfer
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _agent_config(self) -> AgentConfig:
        return AgentConfig(
            hidden=tuple(self.hidden),
            actor_lr=self.actor_lr,
            critic_lr=self.critic_lr,
            gamma=self.gamma,
            tau=self.tau,
            noise_scale=self.noise_scale,
            noise_final=self.noise_final,
            buffer_capacity=self.buffer_capacity,
            batch_size=self.batch_size,
            k=self.candidates,
            budget=self.budget,
            seed=int(self.random_state),
        )

    def fit(self, X, y=None):
        X = channel_matrix(X)
        num_users, m = X.shape
        if self.n_beams < 1:
            raise ConfigurationError("need at least one beam")
        if self.n_beams > num_users:
            raise ConfigurationError(
                f"cannot split {num_users} users into {self.n_beams} groups"
            )
        grid = PhaseGrid(self.bits)
        spec = LevelSpec(tuple(self.level_sizes) if self.level_sizes else (m,))
        spec.require_elements(m)

        clusterer = PowerFeatureClusterer(
            n_clusters=self.n_beams,
            n_sensing_beams=self.n_sensing_beams,
            bits=self.bits,
            noise_scale=self.feature_noise,
            random_state=derive_seed(self.random_state, "cluster"),
        ).fit(X)
        labels = clusterer.labels_

        config = self._agent_config()
        beams = np.empty((self.n_beams, m), dtype=np.int64)
        results = []
        for c in range(self.n_beams):
            members = X[labels == c]
            if members.shape[0] == 0:
                # empty cluster: deterministic all-zero-phase beam
                beams[c] = grid.zero_index
                results.append(None)
                continue
            result = learn_vector(
                members, spec, grid, config,
                master_seed=derive_seed(self.random_state, "learn", c),
                transfer=self.transfer,
                max_workers=self.n_jobs,
            )
            beams[c] = result.vector.indices
            results.append(result)

        self.grid_ = grid
        self.level_spec_ = spec
        self.codebook_ = Codebook(beams, grid)
        self.labels_ = labels
        self.clusterer_ = clusterer
        self.results_ = results
        self.n_elements_ = m
        self.objective_ = float(gain_matrix(X, self.codebook_).max(axis=1).mean())
        return self

    def transform(self, X) -> np.ndarray:
        """Gain of every user under every learned beam, shape (users, beams)."""
        check_fitted(self, "codebook_")
        return gain_matrix(channel_matrix(X), self.codebook_)

    def predict(self, X) -> np.ndarray:
        """Index of the best learned beam for each user."""
        return self.transform(X).argmax(axis=1)

    def score(self, X, y=None) -> float:
        """Mean best-beam gain over the given users."""
        return float(self.transform(X).max(axis=1).mean())
