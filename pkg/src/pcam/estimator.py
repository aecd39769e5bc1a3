"""scikit-learn style estimator wrapping training, threshold tuning and registration."""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import OptimizerConfig, adamw_step, step_decay_lr
from .config import RunConfig
from .exceptions import DegenerateWeightsError, NumericError, RankDeficiencyError
from .geometry import RigidTransform, random_rotation, weighted_procrustes
from .confidence import hard_threshold
from .losses import LossFlags, build_correspondences, registration_losses
from .metrics import RegistrationResult, recall
from .model import PCAMNetwork
from .validation import check_is_fitted, check_pairs

log = logging.getLogger(__name__)

_MODEL_KEYS = ("n_layers", "channels", "k", "temperature", "combine_mode", "map_mode",
               "conf_width", "conf_blocks", "conf_k", "input_features")


class PCAMRegistration(BaseEstimator):
    """Learned rigid registration of point-cloud pairs.

    ``fit`` takes a sequence of training pairs carrying ground-truth
    transforms; ``predict`` returns one :class:`RigidTransform` (P onto Q)
    per input pair.

    Parameters mirror the ``model``, ``loss``, ``optim``, ``train`` and
    ``eval`` sections of :class:`~pcam.config.RunConfig`; see
    :meth:`from_config`.
    """

    def __init__(self, n_layers=2, channels=None, k=32, temperature=0.03, combine_mode="product",
                 map_mode="soft", conf_width=64, conf_blocks=9, conf_k=32, input_features="ones", losses="ca+cc+gc",
                 kappa=0.05, epochs=10, learning_rate=1e-3, weight_decay=1e-3, beta1=0.9,
                 beta2=0.999, epsilon=1e-8, lr_decay_epochs=(6, 8), lr_decay_factor=10.0,
                 augment_rotation_deg=0.0, val_every=1, tau=None,
                 tau_grid=tuple(round(0.05 * i, 2) for i in range(20)), te_max=0.3,
                 re_max_deg=15.0, icp=False, icp_max_iters=50, icp_max_pair_dist=0.05,
                 random_state=0):
        self.n_layers = n_layers
        self.channels = channels
        self.k = k
        self.temperature = temperature
        self.combine_mode = combine_mode
        self.map_mode = map_mode
        self.conf_width = conf_width
        self.conf_blocks = conf_blocks
        self.conf_k = conf_k
        self.input_features = input_features
        self.losses = losses
        self.kappa = kappa
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.lr_decay_epochs = lr_decay_epochs
        self.lr_decay_factor = lr_decay_factor
        self.augment_rotation_deg = augment_rotation_deg
        self.val_every = val_every
        self.tau = tau
        self.tau_grid = tau_grid
        self.te_max = te_max
        self.re_max_deg = re_max_deg
        self.icp = icp
        self.icp_max_iters = icp_max_iters
        self.icp_max_pair_dist = icp_max_pair_dist
        self.random_state = random_state

    # -- configuration bridging ---------------------------------------------

    @classmethod
    def from_config(cls, config: RunConfig):
        m, o, t, e = config.model, config.optim, config.train, config.eval
        params = {key: getattr(m, key) for key in _MODEL_KEYS}
        params.update(
            losses=config.loss.terms, kappa=config.loss.kappa, epochs=t.epochs,
            learning_rate=o.learning_rate, weight_decay=o.weight_decay, beta1=o.beta1,
            beta2=o.beta2, epsilon=o.epsilon, lr_decay_epochs=tuple(t.lr_decay_epochs),
            lr_decay_factor=t.lr_decay_factor, augment_rotation_deg=t.augment_rotation_deg,
            val_every=t.val_every, tau=e.tau, tau_grid=tuple(e.tau_grid), te_max=e.te_max,
            re_max_deg=e.re_max_deg, icp=e.icp, icp_max_iters=e.icp_max_iters,
            icp_max_pair_dist=e.icp_max_pair_dist, random_state=t.seed,
        )
        return cls(**params)

    def _model_section(self):
        from .config import ModelSection

        return ModelSection(**{key: getattr(self, key) for key in _MODEL_KEYS})

    @property
    def re_max(self):
        return math.radians(self.re_max_deg)

    # -- training -----------------------------------------------------------

    def _init_network(self):
        self.network_ = PCAMNetwork.from_section(self._model_section(), seed=self.random_state)
        self.flags_ = LossFlags.parse(self.losses)
        return self.network_

    def fit(self, X, y=None, X_val=None, callback=None):
        """Train on ``X`` (pairs with ground truth), then tune ``tau`` on ``X_val``.

        ``callback(record)`` receives one dict per epoch. Weights are rounded
        to float32 at the end so that the fitted model matches its
        checkpoint exactly.
        """
        X = list(X)
        seeds = [getattr(item, "seed", i) for i, item in enumerate(X)]
        train = check_pairs(X, require_gt=True, min_points=max(self.k, self.conf_k))
        val = check_pairs(X_val, require_gt=True) if X_val is not None else None
        net = self._init_network()
        corr = [build_correspondences(P, Q, T) for P, Q, T in train]
        opt_cfg = OptimizerConfig(self.learning_rate, self.weight_decay, self.beta1, self.beta2, self.epsilon)
        params = net.parameters
        self.history_ = []
        self.tau_ = 0.0 if self.tau is None else float(self.tau)
        for epoch in range(self.epochs):
            lr = step_decay_lr(self.learning_rate, epoch, self.lr_decay_epochs, self.lr_decay_factor)
            rng = np.random.default_rng([self.random_state, epoch])
            sums = np.zeros(5)
            for i in rng.permutation(len(train)):
                P, Q, T = train[i]
                C = corr[i]
                if self.augment_rotation_deg > 0:
                    Q, T, C = self._augment(rng, P, Q, T, C)
                for p in params:
                    p.grad = None
                try:
                    out = net.forward(P, Q)
                    total, parts = registration_losses(out.match, out.w_P, out.w_Q, P, Q, T, C,
                                                       self.flags_, self.kappa)
                    ad.backward(total)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch}, pair seed {seeds[i]}: {exc}") from exc
                adamw_step(params, opt_cfg, lr=lr)
                sums += (parts.l_ca, parts.l_cc, parts.l_gc, parts.l_ga, parts.total)
            means = sums / len(train)
            record = {"epoch": epoch + 1, "lr": lr, "l_ca": means[0], "l_cc": means[1],
                      "l_gc": means[2], "l_ga": means[3], "total": means[4]}
            if val is not None and self.val_every and (epoch + 1) % self.val_every == 0:
                record["val_recall"] = recall(self._evaluate(val, self.tau_), self.te_max, self.re_max).recall
            self.history_.append(record)
            log.info("epoch %d: %s", epoch + 1, record)
            if callback is not None:
                callback(record)
        for p in params:
            p.data = p.data.astype(np.float32).astype(np.float64)
            p.grad = None
        self.epochs_trained_ = self.epochs
        if self.tau is None and val is not None:
            self.tau_ = self.tune_tau(val)
        return self

    def _augment(self, rng, P, Q, T, C):
        Ra = random_rotation(rng, math.radians(self.augment_rotation_deg))
        centre = Q.mean(axis=0)
        aug = RigidTransform(Ra, centre - Ra @ centre)
        return aug.apply(Q), aug.compose(T), C

    def tune_tau(self, pairs):
        """Threshold from ``tau_grid`` with the best recall on ``pairs`` (lowest on ties)."""
        check_is_fitted(self)
        pairs = check_pairs(pairs, require_gt=True)
        cached = []
        with ad.no_grad():
            for P, Q, T in pairs:
                out = self.network_.forward(P, Q)
                cached.append((P, out.match.mapped_pq.data, out.w_P.data, T))
        best_tau, best = 0.0, -1.0
        for tau in self.tau_grid:
            results = [self._result(P, mapped, hard_threshold(w, tau), T) for P, mapped, w, T in cached]
            r = recall(results, self.te_max, self.re_max).recall
            if r > best:
                best_tau, best = float(tau), r
        return best_tau

    def _result(self, P, mapped, weights, T):
        try:
            est = weighted_procrustes(P, mapped, weights)
            failed = False
        except (DegenerateWeightsError, RankDeficiencyError):
            est, failed = RigidTransform.identity(), True
        return RegistrationResult.from_estimate(est, T, self.te_max, self.re_max, failed)

    # -- inference ----------------------------------------------------------

    def register(self, P, Q, tau=None, icp=None, map_mode=None):
        """Register a single pair; raises on degenerate weights."""
        check_is_fitted(self)
        return self.network_.register(
            P, Q,
            tau=self.tau_ if tau is None else tau,
            map_mode=map_mode,
            icp=self.icp if icp is None else icp,
            icp_max_iters=self.icp_max_iters,
            icp_max_pair_dist=self.icp_max_pair_dist,
        )

    def _evaluate(self, pairs, tau, icp=False, map_mode=None):
        results = []
        for P, Q, T in pairs:
            try:
                est = self.network_.register(P, Q, tau=tau, map_mode=map_mode, icp=icp,
                                             icp_max_iters=self.icp_max_iters,
                                             icp_max_pair_dist=self.icp_max_pair_dist).transform
                failed = False
            except (DegenerateWeightsError, RankDeficiencyError):
                est, failed = RigidTransform.identity(), True
            results.append(RegistrationResult.from_estimate(est, T, self.te_max, self.re_max, failed))
        return results

    def evaluate(self, X, tau=None, icp=None, map_mode=None):
        """Per-pair :class:`RegistrationResult`; failed registrations fall back to identity."""
        check_is_fitted(self)
        pairs = check_pairs(X, require_gt=True)
        return self._evaluate(pairs, self.tau_ if tau is None else tau,
                              self.icp if icp is None else icp, map_mode)

    def predict(self, X):
        """Estimated transforms, identity where registration failed."""
        check_is_fitted(self)
        out = []
        for P, Q, _ in check_pairs(X):
            try:
                out.append(self.register(P, Q).transform)
            except (DegenerateWeightsError, RankDeficiencyError):
                out.append(RigidTransform.identity())
        return out

    def score(self, X, y=None):
        """Registration recall at ``(te_max, re_max_deg)``."""
        return recall(self.evaluate(X), self.te_max, self.re_max).recall
