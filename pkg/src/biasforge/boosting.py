"""Gradient-boosted decision trees on logistic loss, built from scratch.

Deterministic by construction: no subsampling, histogram splits over
quantile bins with first-best tie breaking, Newton leaf values with L2
regularization.  Models serialize to a plain JSON forest so audits can be
archived and replayed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, DegenerateDataError

_MIN_GAIN = 1e-12


@dataclass
class TreeNode:
    feature: Optional[int] = None
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self, feature_names: Sequence[str]) -> Dict[str, object]:
        if self.is_leaf:
            return {"value": self.value}
        return {
            "feature": feature_names[self.feature],
            "threshold": self.threshold,
            "left": self.left.to_dict(feature_names),
            "right": self.right.to_dict(feature_names),
        }

    @staticmethod
    def from_dict(d: Dict[str, object], feature_index: Dict[str, int]) -> "TreeNode":
        if "value" in d:
            return TreeNode(value=float(d["value"]))
        return TreeNode(
            feature=feature_index[str(d["feature"])],
            threshold=float(d["threshold"]),
            left=TreeNode.from_dict(d["left"], feature_index),
            right=TreeNode.from_dict(d["right"], feature_index),
        )


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 20
    reg_lambda: float = 1.0
    n_bins: int = 256

    def __post_init__(self) -> None:
        if self.n_rounds < 1:
            raise ConfigurationError("n_rounds must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigurationError("learning_rate must lie in (0, 1]")
        if self.min_leaf < 1:
            raise ConfigurationError("min_leaf must be >= 1")
        if self.max_depth < 1:
            raise ConfigurationError("max_depth must be >= 1")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class BoostedTreesClassifier:
    """Binary classifier; ``predict_score`` returns P(label = 1)."""

    def __init__(self, config: BoostConfig = BoostConfig()):
        self.config = config
        self.feature_names: List[str] = []
        self.base_margin: float = 0.0
        self.trees: List[TreeNode] = []
        self._edges: List[np.ndarray] = []

    # -- fitting ------------------------------------------------------------

    def fit(self, X: np.ndarray, y: np.ndarray,
            feature_names: Optional[Sequence[str]] = None) -> "BoostedTreesClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ConfigurationError("X must be (n, p) with matching labels")
        n, p = X.shape
        pos = float(y.sum())
        if pos == 0.0 or pos == float(n):
            raise DegenerateDataError("training labels contain a single class")
        self.feature_names = list(feature_names) if feature_names else [
            "f%d" % j for j in range(p)
        ]
        if len(self.feature_names) != p:
            raise ConfigurationError("feature_names length mismatch")

        base_rate = pos / n
        self.base_margin = float(np.log(base_rate / (1.0 - base_rate)))
        self._edges = [self._bin_edges(X[:, j]) for j in range(p)]
        codes = np.empty((n, p), dtype=np.int64)
        for j in range(p):
            codes[:, j] = np.searchsorted(self._edges[j], X[:, j], side="left")

        margin = np.full(n, self.base_margin)
        self.trees = []
        cfg = self.config
        for _ in range(cfg.n_rounds):
            prob = _sigmoid(margin)
            g = prob - y
            h = prob * (1.0 - prob)
            tree = self._grow(codes, g, h, np.arange(n), depth=0)
            self.trees.append(tree)
            margin += self._tree_margins(tree, codes)
        return self

    def _bin_edges(self, col: np.ndarray) -> np.ndarray:
        qs = np.linspace(0.0, 1.0, self.config.n_bins + 1)[1:-1]
        return np.unique(np.quantile(col, qs))

    def _grow(self, codes: np.ndarray, g: np.ndarray, h: np.ndarray,
              idx: np.ndarray, depth: int) -> TreeNode:
        cfg = self.config
        G, H = float(g[idx].sum()), float(h[idx].sum())
        leaf_value = -cfg.learning_rate * G / (H + cfg.reg_lambda)
        if depth >= cfg.max_depth or idx.size < 2 * cfg.min_leaf:
            return TreeNode(value=leaf_value)

        best_gain, best = _MIN_GAIN, None
        parent_score = G * G / (H + cfg.reg_lambda)
        for j in range(codes.shape[1]):
            edges = self._edges[j]
            if edges.size == 0:
                continue
            c = codes[idx, j]
            nb = edges.size + 1
            gh = np.bincount(c, weights=g[idx], minlength=nb)
            hh = np.bincount(c, weights=h[idx], minlength=nb)
            cnt = np.bincount(c, minlength=nb)
            gl = np.cumsum(gh)[:-1]
            hl = np.cumsum(hh)[:-1]
            nl = np.cumsum(cnt)[:-1]
            ok = (nl >= cfg.min_leaf) & (idx.size - nl >= cfg.min_leaf)
            if not ok.any():
                continue
            gr, hr = G - gl, H - hl
            with np.errstate(invalid="ignore", divide="ignore"):
                gains = 0.5 * (
                    gl * gl / (hl + cfg.reg_lambda)
                    + gr * gr / (hr + cfg.reg_lambda)
                    - parent_score
                )
            gains[~ok | ~np.isfinite(gains)] = -np.inf
            k = int(np.argmax(gains))
            if gains[k] > best_gain:
                best_gain = float(gains[k])
                best = (j, k)

        if best is None:
            return TreeNode(value=leaf_value)
        j, k = best
        go_left = codes[idx, j] <= k
        return TreeNode(
            feature=j,
            threshold=float(self._edges[j][k]),
            left=self._grow(codes, g, h, idx[go_left], depth + 1),
            right=self._grow(codes, g, h, idx[~go_left], depth + 1),
        )

    def _tree_margins(self, tree: TreeNode, codes: np.ndarray) -> np.ndarray:
        out = np.empty(codes.shape[0])
        self._fill_margins(tree, codes, np.arange(codes.shape[0]), out, by_codes=True)
        return out

    def _fill_margins(self, node: TreeNode, X: np.ndarray, idx: np.ndarray,
                      out: np.ndarray, by_codes: bool) -> None:
        if node.is_leaf:
            out[idx] = node.value
            return
        if by_codes:
            k = int(np.searchsorted(self._edges[node.feature], node.threshold, side="left"))
            go_left = X[idx, node.feature] <= k
        else:
            go_left = X[idx, node.feature] <= node.threshold
        self._fill_margins(node.left, X, idx[go_left], out, by_codes)
        self._fill_margins(node.right, X, idx[~go_left], out, by_codes)

    # -- inference ----------------------------------------------------------

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        margin = np.full(X.shape[0], self.base_margin)
        buf = np.empty(X.shape[0])
        for tree in self.trees:
            self._fill_margins(tree, X, np.arange(X.shape[0]), buf, by_codes=False)
            margin += buf
        return margin

    def predict_score(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_margin(X))

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "kind": "boosted_trees",
            "version": 1,
            "base_margin": self.base_margin,
            "feature_names": list(self.feature_names),
            "config": {
                "n_rounds": self.config.n_rounds,
                "max_depth": self.config.max_depth,
                "learning_rate": self.config.learning_rate,
                "min_leaf": self.config.min_leaf,
                "reg_lambda": self.config.reg_lambda,
                "n_bins": self.config.n_bins,
            },
            "trees": [t.to_dict(self.feature_names) for t in self.trees],
        }

    @staticmethod
    def from_json_dict(d: Dict[str, object]) -> "BoostedTreesClassifier":
        if d.get("kind") != "boosted_trees":
            raise ConfigurationError("not a serialized boosted-trees model")
        cfg = d.get("config", {})
        model = BoostedTreesClassifier(BoostConfig(
            n_rounds=int(cfg.get("n_rounds", 100)),
            max_depth=int(cfg.get("max_depth", 3)),
            learning_rate=float(cfg.get("learning_rate", 0.1)),
            min_leaf=int(cfg.get("min_leaf", 20)),
            reg_lambda=float(cfg.get("reg_lambda", 1.0)),
            n_bins=int(cfg.get("n_bins", 256)),
        ))
        model.feature_names = [str(x) for x in d["feature_names"]]
        model.base_margin = float(d["base_margin"])
        index = {nm: j for j, nm in enumerate(model.feature_names)}
        model.trees = [TreeNode.from_dict(t, index) for t in d["trees"]]
        return model


def log_loss(y: np.ndarray, scores: np.ndarray) -> float:
    eps = 1e-12
    s = np.clip(scores, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))
