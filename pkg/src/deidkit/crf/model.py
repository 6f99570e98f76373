"""Linear-chain CRF: parameters, log-space forward-backward, Viterbi, and the training objective."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from ..corpus import TagSet
from .features import FeatureConfig

MODEL_VERSION = 1


def logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(x - m), axis=axis))


@dataclass
class CrfModel:
    tagset: TagSet
    labels: list[str]
    features: list[str]
    emission: np.ndarray  # (n_features, n_labels)
    transition: np.ndarray  # (n_labels, n_labels), previous -> next
    start: np.ndarray  # (n_labels,) BOS -> label
    end: np.ndarray  # (n_labels,) label -> EOS
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        F, L = len(self.features), len(self.labels)
        if self.emission.shape != (F, L) or self.transition.shape != (L, L):
            raise ValueError("weight shapes do not match the feature index and label alphabet")
        if self.start.shape != (L,) or self.end.shape != (L,):
            raise ValueError("boundary weight shapes do not match the label alphabet")
        self.feature_lookup = {f: i for i, f in enumerate(self.features)}

    @classmethod
    def zeros(cls, tagset: TagSet, features: Sequence[str], feature_config: FeatureConfig = FeatureConfig(),
              labels: Sequence[str] | None = None) -> "CrfModel":
        labels = list(labels) if labels is not None else tagset.bio_labels()
        F, L = len(features), len(labels)
        return cls(tagset, labels, list(features), np.zeros((F, L)), np.zeros((L, L)), np.zeros(L), np.zeros(L),
                   feature_config)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def n_params(self) -> int:
        L = self.n_labels
        return len(self.features) * L + L * L + 2 * L

    def pack(self) -> np.ndarray:
        return np.concatenate([self.emission.ravel(), self.transition.ravel(), self.start, self.end])

    def unpack(self, vec: np.ndarray) -> None:
        F, L = len(self.features), self.n_labels
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ValueError(f"parameter vector has shape {vec.shape}, expected ({self.n_params},)")
        k = F * L
        self.emission = vec[:k].reshape(F, L).copy()
        self.transition = vec[k:k + L * L].reshape(L, L).copy()
        self.start = vec[k + L * L:k + L * L + L].copy()
        self.end = vec[k + L * L + L:].copy()

    def encode(self, featseq: Sequence[Sequence[str]]) -> list[list[int]]:
        lookup = self.feature_lookup
        return [[lookup[f] for f in feats if f in lookup] for feats in featseq]

    def emissions(self, featseq: Sequence[Sequence[str]]) -> np.ndarray:
        """(T, L) emission scores for one sentence of feature strings."""
        return emission_scores(self.emission, self.encode(featseq))

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        obj = {
            "version": MODEL_VERSION,
            "tagset": {"name": self.tagset.name, "tags": list(self.tagset.tags)},
            "feature_config": self.feature_config.to_dict(),
            "label_alphabet": self.labels,
            "features": self.features,
            "weights": _b64(self.emission),
            "transitions": {"matrix": _b64(self.transition), "start": _b64(self.start), "end": _b64(self.end)},
            "meta": self.meta,
        }
        return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, data: str) -> "CrfModel":
        obj = json.loads(data)
        if obj.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        labels = obj["label_alphabet"]
        F, L = len(obj["features"]), len(labels)
        tr = obj["transitions"]
        return cls(
            TagSet(obj["tagset"]["name"], tuple(obj["tagset"]["tags"])),
            labels,
            obj["features"],
            _unb64(obj["weights"], (F, L)),
            _unb64(tr["matrix"], (L, L)),
            _unb64(tr["start"], (L,)),
            _unb64(tr["end"], (L,)),
            FeatureConfig.from_dict(obj["feature_config"]),
            obj.get("meta", {}),
        )


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _unb64(s: str, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)
    return arr.reshape(shape)


def emission_scores(emission: np.ndarray, encoded: Sequence[Sequence[int]]) -> np.ndarray:
    out = np.zeros((len(encoded), emission.shape[1]))
    for t, idx in enumerate(encoded):
        if idx:
            out[t] = emission[idx].sum(axis=0)
    return out


# ---------------------------------------------------------------------------
# Inference on dense emission scores
# ---------------------------------------------------------------------------


def forward_backward_scores(E: np.ndarray, A: np.ndarray, start: np.ndarray, end: np.ndarray):
    """Log partition, unary marginals (T, L) and pairwise marginals (T-1, L, L) for one sequence."""
    T, L = E.shape
    if T == 0:
        return 0.0, np.zeros((0, L)), np.zeros((0, L, L))
    alpha = np.empty((T, L))
    beta = np.empty((T, L))
    alpha[0] = start + E[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + A, axis=0) + E[t]
    beta[T - 1] = end
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(A + (E[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = float(logsumexp(alpha[T - 1] + end, axis=0))
    unary = np.exp(alpha + beta - log_z)
    pair = np.exp(alpha[:-1, :, None] + A[None] + (E[1:] + beta[1:])[:, None, :] - log_z)
    return log_z, unary, pair


def viterbi_scores(E: np.ndarray, A: np.ndarray, start: np.ndarray, end: np.ndarray) -> tuple[list[int], float]:
    """Best label path and its score; ties go to the lower label index."""
    T, L = E.shape
    if T == 0:
        return [], 0.0
    delta = start + E[0]
    back = np.zeros((T, L), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + A
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(L)] + E[t]
    final = delta + end
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path, float(final[path[-1]])


def path_score(E: np.ndarray, A: np.ndarray, start: np.ndarray, end: np.ndarray, y: Sequence[int]) -> float:
    if len(y) == 0:
        return 0.0
    s = start[y[0]] + end[y[-1]] + sum(E[t, y[t]] for t in range(len(y)))
    s += sum(A[y[t - 1], y[t]] for t in range(1, len(y)))
    return float(s)


def forward_backward(model: CrfModel, featseq: Sequence[Sequence[str]]):
    return forward_backward_scores(model.emissions(featseq), model.transition, model.start, model.end)


def viterbi(model: CrfModel, featseq: Sequence[Sequence[str]]) -> list[str]:
    path, _ = viterbi_scores(model.emissions(featseq), model.transition, model.start, model.end)
    return [model.labels[i] for i in path]


# ---------------------------------------------------------------------------
# Training objective
# ---------------------------------------------------------------------------


class Batch:
    """Indexed training sentences packed for vectorised forward-backward.

    Sentences are sorted by length and padded into buckets so each time step
    is one numpy operation over a whole bucket.
    """

    def __init__(self, encoded: Sequence[Sequence[Sequence[int]]], labels: Sequence[Sequence[int]],
                 n_features: int, n_labels: int, bucket_size: int = 256):
        if len(encoded) != len(labels):
            raise ValueError("feature and label sequences differ in number")
        self.n_features, self.n_labels = n_features, n_labels
        rows, cols = [], []
        ys: list[int] = []
        lengths = []
        pos = 0
        for seq, lab in zip(encoded, labels):
            if len(seq) != len(lab):
                raise ValueError("feature and label sequence lengths differ")
            if not seq:
                continue
            for t, idx in enumerate(seq):
                rows.extend([pos + t] * len(idx))
                cols.extend(idx)
            ys.extend(lab)
            lengths.append(len(seq))
            pos += len(seq)
        self.n_tokens = pos
        self.lengths = np.array(lengths, dtype=np.int64)
        self.X = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(pos, n_features))
        self.y = np.array(ys, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(self.lengths)[:-1]]).astype(np.int64)
        # length-sorted buckets, right-padded; padded cells point at row 0 and are masked
        self.buckets = []
        order = np.argsort(self.lengths, kind="stable")
        for lo in range(0, len(order), bucket_size):
            members = order[lo:lo + bucket_size]
            lens = self.lengths[members]
            T = int(lens.max())
            steps = np.arange(T)[None, :]
            mask = steps < lens[:, None]
            idx = np.where(mask, offsets[members][:, None] + steps, 0)
            self.buckets.append((idx, mask, lens))

        L = n_labels
        Y = sparse.csr_matrix((np.ones(pos), (np.arange(pos), self.y)), shape=(pos, L))
        self.emp_emission = np.asarray((self.X.T @ Y).todense())
        self.emp_transition = np.zeros((L, L))
        self.emp_start = np.zeros(L)
        self.emp_end = np.zeros(L)
        for off, T in zip(offsets, self.lengths):
            seq = self.y[off:off + T]
            self.emp_start[seq[0]] += 1
            self.emp_end[seq[-1]] += 1
            np.add.at(self.emp_transition, (seq[:-1], seq[1:]), 1)

        self._empirical = np.concatenate([self.emp_emission.ravel(), self.emp_transition.ravel(),
                                          self.emp_start, self.emp_end])

    def empirical(self) -> np.ndarray:
        return self._empirical


def _split(vec: np.ndarray, F: int, L: int):
    k = F * L
    return (vec[:k].reshape(F, L), vec[k:k + L * L].reshape(L, L), vec[k + L * L:k + L * L + L],
            vec[k + L * L + L:])


def nll_and_gradient(params: np.ndarray, batch: Batch, c1: float = 0.0, c2: float = 0.0):
    """Objective and gradient of the smooth part.

    objective = sum of negative log-likelihoods + c1*|w|_1 + c2*|w|_2^2.
    The returned gradient covers the NLL and L2 terms only; the L1 term is left
    to the orthant-wise optimizer.
    """
    F, L = batch.n_features, batch.n_labels
    W, A, s, e = _split(params, F, L)
    E_all = np.asarray(batch.X @ W)
    U = np.zeros((batch.n_tokens, L))
    pair_sum = np.zeros((L, L))
    start_m = np.zeros(L)
    end_m = np.zeros(L)
    log_z_total = 0.0
    # scaled forward-backward in probability space: each step is a matrix product
    a_max = A.max()
    M = np.exp(A - a_max)
    e_max = e.max()
    end_pot = np.exp(e - e_max)
    for idx, mask, lens in batch.buckets:
        E = E_all[idx]  # (B, T, L)
        E[:, 0] += s
        B, T, _ = E.shape
        m = E.max(axis=2, keepdims=True)
        psi = np.exp(E - m)
        alpha = np.empty((B, T, L))
        c = np.ones((B, T))
        alpha[:, 0] = psi[:, 0]
        c[:, 0] = alpha[:, 0].sum(axis=1)
        alpha[:, 0] /= c[:, 0, None]
        for t in range(1, T):
            nxt = (alpha[:, t - 1] @ M) * psi[:, t]
            live = mask[:, t]
            c[live, t] = nxt[live].sum(axis=1)
            alpha[:, t] = np.where(live[:, None], nxt / c[:, t, None], alpha[:, t - 1])
        z = alpha[:, T - 1] @ end_pot
        beta = np.empty((B, T, L))
        beta[:, T - 1] = end_pot[None, :] / z[:, None]
        for t in range(T - 2, -1, -1):
            live = mask[:, t + 1]
            prev = ((psi[:, t + 1] * beta[:, t + 1]) @ M.T) / c[:, t + 1, None]
            beta[:, t] = np.where(live[:, None], prev, beta[:, t + 1])
        log_z = (np.log(c).sum(axis=1) + (m[..., 0] * mask).sum(axis=1) + (lens - 1) * a_max + e_max + np.log(z))
        log_z_total += float(log_z.sum())
        marg = alpha * beta
        U[idx[mask]] = marg[mask]
        start_m += marg[:, 0].sum(axis=0)
        end_m += marg[np.arange(B), lens - 1].sum(axis=0)
        for t in range(T - 1):
            live = mask[:, t + 1]
            if not live.any():
                break
            right = psi[live, t + 1] * beta[live, t + 1] / c[live, t + 1, None]
            pair_sum += (alpha[live, t].T @ right) * M

    gold = float(E_all[np.arange(batch.n_tokens), batch.y].sum())
    gold += float((batch.emp_transition * A).sum() + batch.emp_start @ s + batch.emp_end @ e)
    nll = log_z_total - gold

    expected = np.concatenate([np.asarray(batch.X.T @ U).ravel(), pair_sum.ravel(), start_m, end_m])
    grad = expected - batch.empirical() + 2.0 * c2 * params
    objective = nll + c1 * float(np.abs(params).sum()) + c2 * float(params @ params)
    return objective, grad
