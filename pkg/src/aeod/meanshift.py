"""k-d tree neighbour search and k-NN mean-shift of training and query points.

One shift step replaces a point by the mean of itself and its k nearest
neighbours (the point itself excluded from the search), so each mean is
over k + 1 points. Neighbours are ordered by (squared distance, row index),
which makes every result reproducible bit for bit. Means are accumulated
left to right over [self, nn_1, ..., nn_k].
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .detector import ReconOutput, ScoreWeights, apre_score, mse_score


def sq_distances(X, q):
    return ((X - q) ** 2).sum(axis=1)


class KdTree:
    """Median-split k-d tree with leaf buckets.

    Each internal node splits on its widest-spread dimension (lowest index on
    ties) with ``left <= split < right``. Subsets whose points all coincide
    stay in a single leaf whatever their size.
    """

    def __init__(self, X, leaf_size: int = 16):
        X = np.array(X, dtype=float, copy=True)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("cannot build a k-d tree over an empty matrix")
        if not np.all(np.isfinite(X)):
            raise ValueError("k-d tree input contains non-finite values")
        X.setflags(write=False)
        self.data = X
        self.leaf_size = max(1, int(leaf_size))
        self.split_dim = []
        self.split_value = []
        self.children = []  # (left, right) or None for leaves
        self.leaf_points = []  # index array or None for internal nodes
        self._build()

    @property
    def n(self):
        return self.data.shape[0]

    def _new_node(self):
        self.split_dim.append(-1)
        self.split_value.append(np.nan)
        self.children.append(None)
        self.leaf_points.append(None)
        return len(self.children) - 1

    def _build(self):
        root = self._new_node()
        stack = [(root, np.arange(self.n))]
        while stack:
            node, idx = stack.pop()
            if idx.size <= self.leaf_size:
                self.leaf_points[node] = idx
                continue
            pts = self.data[idx]
            spread = pts.max(axis=0) - pts.min(axis=0)
            d = int(np.argmax(spread))
            if spread[d] == 0:
                self.leaf_points[node] = idx
                continue
            vals = pts[:, d]
            split = np.sort(vals)[(vals.size - 1) // 2]
            if split == vals.max():
                split = vals[vals < split].max()
            go_left = vals <= split
            left, right = self._new_node(), self._new_node()
            self.split_dim[node] = d
            self.split_value[node] = float(split)
            self.children[node] = (left, right)
            stack.append((right, idx[~go_left]))
            stack.append((left, idx[go_left]))

    def query(self, q, k: int, exclude: Optional[int] = None) -> np.ndarray:
        """Indices of the k nearest rows to ``q`` in (distance, index) order."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.data.shape[1],):
            raise ValueError(f"query has shape {q.shape}, expected ({self.data.shape[1]},)")
        available = self.n - (1 if exclude is not None else 0)
        if not 1 <= k <= available:
            raise ValueError(f"k={k} out of range: {available} candidate points")
        best_d = np.empty(0)
        best_i = np.empty(0, dtype=np.intp)
        worst = np.inf
        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            if bound > worst:
                continue
            leaf = self.leaf_points[node]
            if leaf is not None:
                if exclude is not None:
                    leaf = leaf[leaf != exclude]
                    if leaf.size == 0:
                        continue
                d2 = sq_distances(self.data[leaf], q)
                cand_d = np.concatenate([best_d, d2])
                cand_i = np.concatenate([best_i, leaf])
                order = np.lexsort((cand_i, cand_d))[:k]
                best_d, best_i = cand_d[order], cand_i[order]
                if best_d.size == k:
                    worst = best_d[-1]
                continue
            diff = q[self.split_dim[node]] - self.split_value[node]
            left, right = self.children[node]
            near, far = (left, right) if diff <= 0 else (right, left)
            stack.append((far, max(bound, diff * diff)))
            stack.append((near, bound))
        return best_i

    def query_many(self, Q, k: int, exclude_self: bool = False) -> np.ndarray:
        """(n, k) neighbour indices; with ``exclude_self`` row i of Q skips tree row i."""
        Q = np.asarray(Q, dtype=float)
        out = np.empty((Q.shape[0], k), dtype=np.intp)
        for i in range(Q.shape[0]):
            out[i] = self.query(Q[i], k, exclude=i if exclude_self else None)
        return out


def build_kdtree(X, leaf_size: int = 16) -> KdTree:
    return KdTree(X, leaf_size)


def knn(tree: KdTree, query, k: int, exclude: Optional[int] = None) -> np.ndarray:
    return tree.query(query, k, exclude)


def _running_means(points, neighbors, source, ks):
    """Means of [point, nn_1..nn_k] for each k in ``ks``; returns (len(ks), n, D)."""
    stacked = np.concatenate([points[:, None, :], source[neighbors]], axis=1)
    sums = np.cumsum(stacked, axis=1)
    ks = np.asarray(ks)
    return np.stack([sums[:, k, :] / (k + 1) for k in ks])


@dataclass
class ShiftChain:
    """Training matrix plus its successive shifts X^(1) .. X^(m) for one k."""

    base: np.ndarray
    shifted_sets: tuple
    k: int
    _trees: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def m(self):
        return len(self.shifted_sets)

    def level(self, j):
        """Matrix after j shifts (j = 0 is the original training matrix)."""
        return self.base if j == 0 else self.shifted_sets[j - 1]

    def tree(self, j) -> KdTree:
        if j not in self._trees:
            self._trees[j] = KdTree(self.level(j))
        return self._trees[j]

    def source_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.base, dtype="<f8").tobytes()).hexdigest()


def _check_k(k, n):
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} out of range for {n} training points (need 1 <= k <= {n - 1})")


def shift_training_set(X, k: int, m: int, first_neighbors=None) -> ShiftChain:
    """Apply the k-NN mean-shift m times, rebuilding the tree each iteration."""
    X = np.array(X, dtype=float, copy=True)
    _check_k(k, X.shape[0])
    if m < 1:
        raise ValueError("m must be >= 1")
    chain = ShiftChain(X, (), k)
    prev = X
    sets = []
    for j in range(m):
        if j == 0 and first_neighbors is not None:
            nbrs = first_neighbors[:, :k]
        else:
            nbrs = chain.tree(j).query_many(prev, k, exclude_self=True)
        prev = _running_means(prev, nbrs, prev, [k])[0]
        sets.append(prev)
        chain.shifted_sets = tuple(sets)
    return chain


def shift_points(Q, chain: ShiftChain) -> np.ndarray:
    """Shift query rows one at a time against the training chain.

    Step 1 averages each query with its k nearest original training rows;
    step j > 1 moves the running point against the (j-1)-times shifted
    training matrix. Queries never see each other.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[1] != chain.base.shape[1]:
        raise ValueError(f"query shape {Q.shape} does not match training width {chain.base.shape[1]}")
    cur = Q
    for j in range(chain.m):
        nbrs = chain.tree(j).query_many(cur, chain.k)
        cur = _running_means(cur, nbrs, chain.level(j), [chain.k])[0]
    return cur


def shift_test_point(x, train, chain: ShiftChain, k: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    train = np.asarray(train, dtype=float)
    if k != chain.k:
        raise ValueError(f"chain was built with k={chain.k}, not {k}")
    if train.shape != chain.base.shape or not np.array_equal(train, chain.base):
        raise ValueError("chain was not built from this training matrix")
    if x.shape != (train.shape[1],):
        raise ValueError(f"point has shape {x.shape}, expected ({train.shape[1]},)")
    return shift_points(x[None, :], chain)[0]


class CandidateShifter:
    """Shifted versions of query sets for a list of candidate k values.

    The first-iteration neighbour lists are computed once with the largest k
    and reused as prefixes for every smaller k.
    """

    def __init__(self, X_train, ks: Sequence[int], m: int = 1):
        self.X = np.array(X_train, dtype=float, copy=True)
        self.ks = [int(k) for k in ks]
        if not self.ks:
            raise ValueError("empty candidate list")
        for k in self.ks:
            _check_k(k, self.X.shape[0])
        if m < 1:
            raise ValueError("m must be >= 1")
        self.m = int(m)
        self.kmax = max(self.ks)
        self.tree = KdTree(self.X)
        self._train_nbrs = None
        self._chains = {}

    def chain(self, k) -> ShiftChain:
        if k not in self._chains:
            if self._train_nbrs is None:
                self._train_nbrs = self.tree.query_many(self.X, self.kmax, exclude_self=True)
            chain = shift_training_set(self.X, k, self.m, first_neighbors=self._train_nbrs)
            chain._trees[0] = self.tree
            self._chains[k] = chain
        return self._chains[k]

    def shift(self, Q) -> np.ndarray:
        """(K, n, D) array, one slice per candidate k."""
        Q = np.asarray(Q, dtype=float)
        if self.m == 1:
            nbrs = self.tree.query_many(Q, self.kmax)
            return _running_means(Q, nbrs, self.X, self.ks)
        return np.stack([shift_points(Q, self.chain(k)) for k in self.ks])


def default_k_candidates(n_train: int):
    return list(range(1, min(99, n_train - 1) + 1))


def mss_mse_score(x, shifted_x, recon: ReconOutput) -> float:
    if np.shape(x) != np.shape(shifted_x):
        raise ValueError("x and shifted_x lengths differ")
    return mse_score(shifted_x, recon)


def mss_apre_score(x, shifted_x, recon: ReconOutput, w: ScoreWeights) -> float:
    if np.shape(x) != np.shape(shifted_x):
        raise ValueError("x and shifted_x lengths differ")
    return apre_score(shifted_x, recon, w)


# -- persistence: one CSV per shifted matrix plus a JSON sidecar ---------------


def save_chain(chain: ShiftChain, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for j, S in enumerate(chain.shifted_sets, start=1):
        name = f"shift_{j}.csv"
        np.savetxt(outdir / name, S, delimiter=",", fmt="%.17g")
        files.append(name)
    meta = {"k": chain.k, "m": chain.m, "source_sha256": chain.source_hash(), "files": files}
    (outdir / "chain.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_chain(indir, train) -> ShiftChain:
    indir = Path(indir)
    meta = json.loads((indir / "chain.json").read_text())
    chain = ShiftChain(np.array(train, dtype=float, copy=True), (), int(meta["k"]))
    if chain.source_hash() != meta["source_sha256"]:
        raise ValueError(f"{indir}: shift chain was computed from a different training matrix")
    sets = []
    for name in meta["files"]:
        S = np.loadtxt(indir / name, delimiter=",", ndmin=2)
        sets.append(S.reshape(-1, chain.base.shape[1]))
    chain.shifted_sets = tuple(sets)
    return chain
