"""Evaluation metrics: rank AUC, cosine recall@k and linear predictability."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import ContractError


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ContractError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise ContractError("labels must be binary 0/1")
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise ContractError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - pos * (pos + 1) / 2) / (pos * neg))


def recall_at_k(queries, keys, k: int = 1) -> float:
    """Fraction of rows i whose key i is among the k most cosine-similar keys."""
    q = np.asarray(queries, dtype=np.float64)
    c = np.asarray(keys, dtype=np.float64)
    if q.shape[0] != c.shape[0]:
        raise ContractError(f"{q.shape[0]} queries for {c.shape[0]} keys")
    q = q / np.maximum(np.linalg.norm(q, axis=1, keepdims=True), 1e-300)
    c = c / np.maximum(np.linalg.norm(c, axis=1, keepdims=True), 1e-300)
    sim = q @ c.T
    own = np.diag(sim)
    better = (sim > own[:, None]).sum(axis=1)
    return float(np.mean(better < k))


def linear_r2(features, target, train=None, test=None) -> float:
    """R^2 of an affine least-squares fit of ``target`` from ``features``.

    Fitted on ``train`` rows and scored on ``test`` rows (all rows by default).
    """
    f = np.asarray(features, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    train = np.arange(f.shape[0]) if train is None else train
    test = train if test is None else test
    design = np.hstack([f, np.ones((f.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(design[train], t[train], rcond=None)
    resid = t[test] - design[test] @ coef
    total = ((t[test] - t[test].mean(axis=0)) ** 2).sum()
    if total == 0:
        return 1.0 if not resid.any() else 0.0
    return float(1.0 - (resid ** 2).sum() / total)
