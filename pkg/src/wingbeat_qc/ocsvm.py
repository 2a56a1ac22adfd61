"""ν-One-Class SVM with an RBF kernel, trained by pairwise coordinate descent
(SMO) on the dual

    min_a  1/2 a' K a    s.t.  0 <= a_i <= 1 / (nu * l),  sum(a) = 1.

The decision function is ``f(x) = sum_i a_i k(x_i, x) - rho``; positive means
inside the learned region.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConvergenceError, DataContractError, DimensionMismatchError

log = logging.getLogger(__name__)

MODEL_FORMAT = "wingbeat_qc.ocsvm"
MODEL_VERSION = 1
# training decision spread below this counts as a single value
DEGENERATE_RANGE = 1e-12


def rbf_kernel(x, y, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2) for two vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_gram(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B``."""
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def initial_alpha(n: int, upper: float) -> np.ndarray:
    """Fill the first coordinates up to the box bound until the sum reaches 1."""
    alpha = np.zeros(n)
    remaining = 1.0
    for i in range(n):
        alpha[i] = min(upper, remaining)
        remaining -= alpha[i]
        if remaining <= 0:
            break
    return alpha


def solve_dual(K: np.ndarray, upper: float, tol: float = 1e-6, max_iter: int = 100_000,
               track_objective: bool = False):
    """SMO on the one-class dual.

    Each step picks the maximal violating pair: ``i`` minimising the gradient
    among coordinates that can grow, ``j`` maximising it among coordinates that
    can shrink (``argmin``/``argmax`` break ties at the lowest index), then moves
    mass from ``j`` to ``i`` with an exact, box-clipped line search.

    Returns ``(alpha, grad, n_iter, objective_history)``.
    """
    n = K.shape[0]
    alpha = initial_alpha(n, upper)
    grad = K @ alpha
    history = [0.5 * alpha @ grad] if track_objective else []
    eps = 1e-12 * upper
    for it in range(max_iter):
        can_up = alpha < upper - eps
        can_down = alpha > eps
        g_up = np.where(can_up, grad, np.inf)
        g_down = np.where(can_down, grad, -np.inf)
        i = int(np.argmin(g_up))
        j = int(np.argmax(g_down))
        if g_down[j] - g_up[i] <= tol:
            return alpha, grad, it, history
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step = (grad[j] - grad[i]) / max(eta, 1e-12)
        step = min(step, upper - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        # snap to the bounds so the active sets stay exact
        if alpha[j] < eps:
            alpha[j] = 0.0
        if alpha[i] > upper - eps:
            alpha[i] = upper
        grad += step * (K[:, i] - K[:, j])
        if track_objective:
            history.append(0.5 * alpha @ (K @ alpha))
    raise ConvergenceError(f"SMO did not converge within {max_iter} iterations")


def offset_from_gradient(alpha: np.ndarray, grad: np.ndarray, upper: float) -> tuple[float, bool]:
    """ρ from the KKT conditions; second value is True when the fallback was used.

    Free coordinates (0 < a_i < upper) sit on the margin and ρ is their mean
    gradient.  Without any, ρ is the midpoint of the interval the bound
    coordinates allow: ``max grad over a_i = upper`` .. ``min grad over a_i = 0``.
    """
    eps = 1e-12 * upper
    free = (alpha > eps) & (alpha < upper - eps)
    if free.any():
        return float(grad[free].mean()), False
    at_upper = alpha >= upper - eps
    at_zero = alpha <= eps
    lo = grad[at_upper].max() if at_upper.any() else grad.min()
    hi = grad[at_zero].min() if at_zero.any() else grad.max()
    return float(0.5 * (lo + hi)), True


class OneClassSVM:
    """One-class SVM with RBF kernel.

    ``gamma=None`` means 1/D at fit time.  After ``fit`` the model keeps only
    the support vectors (a_i > 0) and the range of decision values seen on the
    training rows, which ``anomaly_score`` uses to map decisions onto [0, 1].
    """

    def __init__(self, nu: float = 0.01, gamma: float | None = None, tolerance: float = 1e-6,
                 max_iter: int = 100_000, track_objective: bool = False):
        if not 0 < nu <= 1:
            raise ConfigError(f"nu must lie in (0, 1], got {nu}")
        if gamma is not None and gamma <= 0:
            raise ConfigError("gamma must be positive")
        self.nu = nu
        self.gamma = gamma
        self.tolerance = tolerance
        self.max_iter = max_iter
        self.track_objective = track_objective

        self.support_vectors: np.ndarray | None = None
        self.alpha: np.ndarray | None = None
        self.rho: float | None = None
        self.gamma_: float | None = None
        self.n_train: int = 0
        self.train_score_range: tuple[float, float] | None = None
        self.rho_fallback = False
        self.degenerate_range = False
        self.n_iter = 0
        self.objective_history: list[float] = []
        # full training-set view, kept for diagnostics (not persisted)
        self.train_alpha_: np.ndarray | None = None
        self.train_decision_: np.ndarray | None = None

    @property
    def upper_bound(self) -> float:
        return 1.0 / (self.nu * self.n_train)

    def fit(self, X) -> "OneClassSVM":
        X = _as_matrix(X)
        n, dim = X.shape
        if n == 0:
            raise DataContractError("cannot fit a one-class SVM on an empty training set")
        if self.nu * n < 1 - 1e-12:
            raise ConfigError(f"infeasible: nu * l = {self.nu * n:.4g} < 1 (nu={self.nu}, l={n})")
        self.gamma_ = self.gamma if self.gamma is not None else 1.0 / dim
        self.n_train = n
        K = rbf_gram(X, X, self.gamma_)
        upper = self.upper_bound
        alpha, grad, n_iter, history = solve_dual(K, upper, self.tolerance, self.max_iter, self.track_objective)
        rho, fallback = offset_from_gradient(alpha, grad, upper)
        if fallback:
            log.warning("no free support vectors; rho taken as the midpoint of its KKT interval")

        sv = alpha > 0
        self.support_vectors = X[sv].copy()
        self.alpha = alpha[sv].copy()
        self.rho = rho
        self.rho_fallback = fallback
        self.n_iter = n_iter
        self.objective_history = history
        self.train_alpha_ = alpha
        # same code path as scoring, so range endpoints map exactly to 0 and 1
        self.train_decision_ = self.decision(X)
        self.train_score_range = (float(self.train_decision_.min()), float(self.train_decision_.max()))
        self.degenerate_range = self.train_score_range[1] - self.train_score_range[0] <= DEGENERATE_RANGE
        if self.degenerate_range:
            log.warning("training decision values are all equal; anomaly scores will be 0.5")
        return self

    @property
    def feature_dim(self) -> int | None:
        return None if self.support_vectors is None else self.support_vectors.shape[1]

    def _check(self, X) -> np.ndarray:
        if self.support_vectors is None:
            raise DataContractError("one-class SVM is not fitted")
        X = _as_matrix(X)
        if X.shape[1] != self.feature_dim:
            raise DimensionMismatchError(f"features have D={X.shape[1]}, model was fitted on D={self.feature_dim}")
        return X

    def decision(self, X) -> np.ndarray:
        X = self._check(X)
        return rbf_gram(X, self.support_vectors, self.gamma_) @ self.alpha - self.rho

    def anomaly_score(self, X) -> np.ndarray:
        """Min-max map of -decision against the training range, clamped to [0, 1].

        The most inlying training row scores 0 and the most outlying scores 1.
        """
        d = self.decision(X)
        lo, hi = self.train_score_range
        if self.degenerate_range:
            return np.full(d.shape, 0.5)
        return np.clip((hi - d) / (hi - lo), 0.0, 1.0)

    # diagnostics ---------------------------------------------------------

    def nu_property(self) -> dict:
        """Training outlier fraction and support-vector fraction."""
        l = self.n_train
        return {
            "nu": self.nu,
            "n_train": l,
            "outlier_fraction": float(np.sum(self.train_decision_ < -self.tolerance) / l),
            "sv_fraction": float(np.sum(self.train_alpha_ > 0) / l),
            "n_iter": self.n_iter,
            "rho_fallback": self.rho_fallback,
        }

    # persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": {
                "nu": self.nu,
                "gamma": self.gamma,
                "tolerance": self.tolerance,
                "max_iter": self.max_iter,
            },
            "kernel": {"kind": "rbf", "gamma": self.gamma_},
            "n_train": self.n_train,
            "rho": self.rho,
            "rho_fallback": self.rho_fallback,
            "train_score_range": list(self.train_score_range),
            "degenerate_range": self.degenerate_range,
            "alpha": self.alpha.tolist(),
            "support_vectors": self.support_vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OneClassSVM":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise DataContractError(f"not a one-class SVM model file (format={d.get('format')}, version={d.get('version')})")
        model = cls(**d["params"])
        model.gamma_ = d["kernel"]["gamma"]
        model.n_train = d["n_train"]
        model.rho = d["rho"]
        model.rho_fallback = d["rho_fallback"]
        model.train_score_range = tuple(d["train_score_range"])
        model.degenerate_range = d["degenerate_range"]
        model.alpha = np.array(d["alpha"], dtype=np.float64)
        model.support_vectors = np.array(d["support_vectors"], dtype=np.float64).reshape(model.alpha.size, -1)
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "OneClassSVM":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_matrix(X) -> np.ndarray:
    arr = np.asarray(getattr(X, "values", X), dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatchError("expected a 2-D feature matrix")
    return arr
