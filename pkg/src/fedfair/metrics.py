"""Regret accounting and client-level fairness statistics."""

from __future__ import annotations

import numpy as np

from . import aggregators, decision
from .errors import InvalidInputError


def regret(decisions, responses) -> float:
    """Cumulative decision loss of the played decisions minus the loss of the
    best fixed decision in hindsight.

    ``decisions[t]`` must be the decision in effect when ``responses[t]``
    arrived. Responses are full-length vectors; under client sampling the
    caller passes the doubly-robust estimated ones. Nonnegative up to solver
    tolerance.
    """
    decisions = np.atleast_2d(np.asarray(decisions, dtype=float))
    responses = np.atleast_2d(np.asarray(responses, dtype=float))
    if decisions.size == 0 or responses.size == 0:
        raise InvalidInputError("need at least one round")
    if decisions.shape != responses.shape:
        raise InvalidInputError("decision and response sequences must align")
    played = sum(decision.decision_loss(p, r) for p, r in zip(decisions, responses))
    best = aggregators.hindsight_best(responses)
    return played - aggregators.cumulative_loss(best, responses)


def gini(perf) -> float:
    """Gini coefficient of a nonnegative performance distribution.

    Population definition sum_ij |x_i - x_j| / (2 n^2 mean), computed via the
    sorted O(n log n) identity. Raw value in [0, 1); report formatters may
    scale by 100.
    """
    x = np.asarray(perf, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise InvalidInputError("performances must be nonempty and finite")
    if np.any(x < 0):
        raise InvalidInputError("performances must be >= 0")
    total = x.sum()
    if total == 0.0:
        raise InvalidInputError("Gini undefined: all performances are zero")
    xs = np.sort(x)
    n = x.size
    ranks = np.arange(1, n + 1)
    return float(2.0 * (ranks * xs).sum() / (n * total) - (n + 1.0) / n)


def worst_best(perf, fraction: float) -> tuple[float, float]:
    """Means of the bottom and top ceil(fraction*n) performances.

    Sorting is ascending with ties broken by client index, so results are
    deterministic across platforms.
    """
    x = np.asarray(perf, dtype=float)
    if x.size == 0:
        raise InvalidInputError("performances must be nonempty")
    if not (0 < fraction <= 0.5):
        raise InvalidInputError("fraction must be in (0, 0.5]")
    order = np.argsort(x, kind="stable")
    m = int(np.ceil(fraction * x.size))
    return float(x[order[:m]].mean()), float(x[order[-m:]].mean())


def accuracy_parity_gap(perf) -> float:
    """Absolute spread between the best and worst performance."""
    x = np.asarray(perf, dtype=float)
    if x.size == 0:
        raise InvalidInputError("performances must be nonempty")
    return float(x.max() - x.min())


def cumulative_objective(records) -> float:
    """Sum over rounds of the decision-weighted pre-update losses of the
    participating clients: sum_t sum_{i in S_t} p_i^{(t)} F_i(theta^{(t)}).
    """
    if not records:
        raise InvalidInputError("need at least one round record")
    total = 0.0
    for rec in records:
        p = np.asarray(rec.decision_prev, dtype=float)
        losses = np.asarray(rec.losses, dtype=float)
        sampled = np.asarray(rec.sampled, dtype=int)
        total += float(p[sampled] @ losses)
    return total


def system_loss(p, transformed_losses) -> float:
    """log(1 + sum_i p_i F~_i): the federation-wide loss the server drives
    down; equals the negated decision loss by construction.
    """
    t = np.asarray(transformed_losses, dtype=float)
    if np.any(t < 0):
        raise InvalidInputError("transformed losses must be >= 0")
    return -decision.decision_loss(p, t)


def decision_entropy(p) -> float:
    """Shannon entropy of a decision, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    pos = p[p > 0]
    return float(-(pos * np.log(pos)).sum())
