"""Scikit-learn style front end for the generative flow.

fit(X) treats X as draws from the target distribution and trains the
flow against minibatches resampled from it; sample / transform integrate
the learned field.  Hyperparameters follow the sklearn convention of
being stored verbatim so get_params / set_params / clone all work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import flow, nn
from .divergence import DivergenceConfig


class ProximalFlowSampler(BaseEstimator):
    """Deterministic generative flow fit by adversarial proximal training.

    Parameters mirror the training configuration: lam weights the kinetic
    running cost, T / K set the integration horizon and step count, L the
    discriminator Lipschitz bound, f the divergence generator
    ("reverse_kl" or "kl"), and mode selects which of the two
    regularizers are active.
    """

    def __init__(self, mode="w1w2", lam=0.05, T=5.0, K=5, L=1.0,
                 f="reverse_kl", widths_potential=(512, 512, 512),
                 widths_discriminator=(256, 256, 256), activation="softplus",
                 M=64, n_outer=500, n_inner=5, lr=1e-4, penalty_weight=10.0,
                 eps_dom=1e-3, seed=0, compute_indicators=True):
        self.mode = mode
        self.lam = lam
        self.T = T
        self.K = K
        self.L = L
        self.f = f
        self.widths_potential = widths_potential
        self.widths_discriminator = widths_discriminator
        self.activation = activation
        self.M = M
        self.n_outer = n_outer
        self.n_inner = n_inner
        self.lr = lr
        self.penalty_weight = penalty_weight
        self.eps_dom = eps_dom
        self.seed = seed
        self.compute_indicators = compute_indicators

    def _configs(self, d):
        cfg = flow.FlowConfig(
            d=d, mode=self.mode, lam=self.lam, T=self.T, K=self.K, M=self.M,
            n_outer=self.n_outer, lr=self.lr,
            widths_potential=tuple(self.widths_potential),
            widths_discriminator=tuple(self.widths_discriminator),
            activation=self.activation, seed=self.seed,
            compute_indicators=self.compute_indicators)
        div = DivergenceConfig(f=self.f, L=self.L,
                               penalty_weight=self.penalty_weight,
                               inner_iters=self.n_inner, eps_dom=self.eps_dom,
                               lr=self.lr)
        return cfg, div

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg, div = self._configs(X.shape[1])

        def resample(n, seed):
            rng = np.random.default_rng(seed)
            return X[rng.integers(0, X.shape[0], size=n)]

        result = flow.train(resample, cfg, div)
        self.n_features_in_ = X.shape[1]
        self.cfg_ = cfg
        self.potential_ = result.potential
        self.discriminator_ = result.discriminator
        self.history_ = result.history
        self.blown_up_ = result.blown_up
        return self

    def transform(self, X0):
        """Push reference-space points through the learned flow."""
        check_is_fitted(self, "potential_")
        X0 = check_array(X0, dtype=np.float64)
        if X0.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X0.shape[1]}")
        return flow.generate(self.potential_, len(X0), self.K,
                             seed=0, cfg=self.cfg_, initial=X0)

    def sample(self, n, K_gen=None, seed=0):
        """Draw n fresh generated samples."""
        check_is_fitted(self, "potential_")
        return flow.generate(self.potential_, n, K_gen or self.K, seed, self.cfg_)

    def save(self, path):
        check_is_fitted(self, "potential_")
        nn.save_checkpoint(path, self.potential_)

    def _more_tags(self):
        return {"requires_y": False}
