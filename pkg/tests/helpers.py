"""Shared test utilities: brute-force oracles and monotone parameter draws.

The oracles recompute probabilities from first principles (explicit
loops over patterns and profiles) so that library outputs are checked
against an independent path, not against themselves.
"""

from __future__ import annotations

import itertools

import numpy as np

from rlcm import (
    DinaParams,
    DinoParams,
    GdinaParams,
    LlmParams,
    ProportionVector,
    QMatrix,
    RrumParams,
    ThetaMatrix,
)


def brute_joint(theta_values: np.ndarray, alpha: int, pattern: int) -> float:
    """P(R = pattern | alpha) as an explicit product over items."""
    prob = 1.0
    for j in range(theta_values.shape[0]):
        th = theta_values[j, alpha]
        prob *= th if (pattern >> j) & 1 else (1.0 - th)
    return prob


def brute_joint_table(theta_values: np.ndarray) -> np.ndarray:
    """All joint probabilities, shape (2**J, 2**K)."""
    n_patterns = 1 << theta_values.shape[0]
    n_cols = theta_values.shape[1]
    table = np.empty((n_patterns, n_cols))
    for r in range(n_patterns):
        for a in range(n_cols):
            table[r, a] = brute_joint(theta_values, a, r)
    return table


def brute_dominance_table(theta_values: np.ndarray) -> np.ndarray:
    """Entry (r, alpha) = sum of joint probabilities over patterns >= r."""
    joint = brute_joint_table(theta_values)
    n_patterns = joint.shape[0]
    out = np.zeros_like(joint)
    for r in range(n_patterns):
        for rp in range(n_patterns):
            if rp & r == r:
                out[r] += joint[rp]
    return out


def brute_distribution(theta_values: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """P(R = r) for every pattern, mixing the joint table over profiles."""
    return brute_joint_table(theta_values) @ probs


def brute_gap(first, second) -> float:
    """Max-abs distribution gap between two (theta, p) parameter sets."""
    theta_a, p_a = first
    theta_b, p_b = second
    da = brute_distribution(theta_a.values, p_a.probs)
    db = brute_distribution(theta_b.values, p_b.probs)
    return float(np.abs(da - db).max())


def random_proportions(rng: np.random.Generator, n_attributes: int) -> ProportionVector:
    raw = rng.uniform(0.2, 1.0, size=1 << n_attributes)
    return ProportionVector(raw / raw.sum())


def random_theta(rng: np.random.Generator, n_items: int, n_attributes: int) -> ThetaMatrix:
    return ThetaMatrix(rng.uniform(0.02, 0.98, size=(n_items, 1 << n_attributes)))


def gdina_from_group_means(required: list, means: dict) -> GdinaParams:
    """Coefficients reproducing the given subset-group means.

    ``means`` maps frozensets (subsets of ``required``) to target
    response probabilities.  Inclusion-exclusion here is written
    independently of the library's transform code.
    """
    beta = {}
    for subset in map(frozenset, _powerset(required)):
        total = 0.0
        for inner in map(frozenset, _powerset(sorted(subset))):
            sign = (-1) ** (len(subset) - len(inner))
            total += sign * means[inner]
        beta[subset] = total
    return GdinaParams(beta)


def _powerset(items):
    items = list(items)
    return itertools.chain.from_iterable(
        itertools.combinations(items, n) for n in range(len(items) + 1)
    )


def draw_monotone_params(rng: np.random.Generator, family: str, q_row: np.ndarray):
    """One random parameter set of the given family that satisfies the
    monotonicity assumptions for an item with requirement row ``q_row``."""
    n_attributes = q_row.size
    required = [int(k) for k in np.flatnonzero(q_row)]
    if family == "DINA":
        return DinaParams(s=rng.uniform(0.05, 0.45), g=rng.uniform(0.05, 0.5))
    if family == "DINO":
        return DinoParams(s=rng.uniform(0.05, 0.45), g=rng.uniform(0.05, 0.5))
    if family == "LLM":
        beta = np.zeros(n_attributes)
        beta[required] = rng.uniform(0.5, 2.5, size=len(required))
        return LlmParams(beta0=rng.uniform(-2.0, 1.0), beta=tuple(beta))
    if family == "RRUM":
        penalties = np.full(n_attributes, 0.5)
        penalties[required] = rng.uniform(0.1, 0.8, size=len(required))
        return RrumParams(pi=rng.uniform(0.6, 0.95), r=tuple(penalties))
    if family == "GDINA":
        low = rng.uniform(0.05, 0.3)
        high = rng.uniform(0.7, 0.95)
        means = {frozenset(): low}
        for subset in map(frozenset, _powerset(required)):
            if not subset:
                continue
            if len(subset) == len(required):
                means[subset] = high
            else:
                means[subset] = rng.uniform(low + 0.02, high - 0.02)
        return gdina_from_group_means(required, means)
    raise ValueError(family)


def draw_monotone_item_params(rng: np.random.Generator, family: str, q: QMatrix):
    return [draw_monotone_params(rng, family, q.entries[j]) for j in range(q.n_items)]


def stacked_identity(n_attributes: int, copies: int) -> QMatrix:
    return QMatrix(np.vstack([np.eye(n_attributes, dtype=int)] * copies))
