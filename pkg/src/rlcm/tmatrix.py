"""Joint and marginal probability algebra over binary response patterns.

The central object is the marginal table whose (r, alpha) entry is the
probability that a subject in class alpha answers every item named by
pattern r positively.  Because each row is an elementwise product of
single-item rows, the table extends verbatim to non-probability inputs,
and a row shift of the generating table acts on it as multiplication by
a lower-triangular, unit-diagonal matrix that this module builds in
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from numpy.typing import NDArray

from .core import (
    DimensionError,
    ProportionVector,
    SizeLimitError,
    ThetaMatrix,
    bits_to_int,
    check_table_size,
    _freeze,
)

PROB_ATOL = 1e-12  # absolute tolerance for probability comparisons here

MAX_DENSE_TRANSFORM_ITEMS = 12


@dataclass(frozen=True)
class TMatrix:
    """2**J x 2**K marginal table, rows by pattern, columns by profile."""

    values: NDArray[np.float64]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError("marginal table must be two-dimensional")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n_items(self) -> int:
        return int(self.values.shape[0]).bit_length() - 1

    @property
    def n_patterns(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TransformMatrix:
    """Lower-triangular 2**J x 2**J shift action with unit diagonal.

    Entry (r, r') is zero unless r' is dominated by r, one on the
    diagonal, and otherwise the product of -shift_j over the items where
    r and r' differ.
    """

    values: NDArray[np.float64]
    theta_star: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(np.asarray(self.values, dtype=np.float64)))
        object.__setattr__(self, "theta_star", _freeze(np.asarray(self.theta_star, dtype=np.float64)))

    @property
    def n_items(self) -> int:
        return self.theta_star.size


def joint_prob(item_probs, pattern) -> float:
    """Probability of one full response pattern given per-item success probs.

    ``item_probs`` holds each item's positive-response probability for a
    single latent class; ``pattern`` is an integer encoding or a 0/1
    sequence.
    """
    probs = np.asarray(item_probs, dtype=np.float64)
    if probs.ndim != 1:
        raise DimensionError("item probabilities must be one-dimensional")
    if not isinstance(pattern, (int, np.integer)):
        pattern = bits_to_int(np.asarray(pattern).tolist())
    if not 0 <= pattern < (1 << probs.size):
        raise DimensionError(
            f"pattern {pattern} out of range for {probs.size} items"
        )
    bits = (int(pattern) >> np.arange(probs.size)) & 1
    return float(np.prod(np.where(bits == 1, probs, 1.0 - probs)))


def build_tmatrix(theta: ThetaMatrix) -> TMatrix:
    """Assemble the full marginal table from a per-item table.

    Row r is the elementwise product over set bits of the corresponding
    single-item rows; row 0 is all ones.  Works for arbitrary real
    tables, not only probability ones.  Rows are filled in one pass by
    reusing the row with the lowest set bit cleared.
    """
    n_items = theta.n_items
    check_table_size(n_items, theta.n_attributes)
    values = theta.values
    out = np.empty((1 << n_items, values.shape[1]), dtype=np.float64)
    out[0] = 1.0
    for r in range(1, 1 << n_items):
        low = r & -r
        out[r] = out[r ^ low] * values[low.bit_length() - 1]
    return TMatrix(out)


def marginal_vector(t: TMatrix, p: ProportionVector) -> NDArray[np.float64]:
    """Dominance probabilities P(R >= r) for every pattern r."""
    if t.values.shape[1] != p.probs.size:
        raise DimensionError(
            f"table has {t.values.shape[1]} columns, proportions have "
            f"{p.probs.size} entries"
        )
    return t.values @ p.probs


def response_distribution(theta: ThetaMatrix, p: ProportionVector) -> NDArray[np.float64]:
    """Exact distribution over all 2**J response patterns.

    Computed directly from the per-pattern product form, mixing over
    profiles with weights p.  The result is non-negative and sums to one
    up to floating-point rounding.
    """
    if not theta.is_probability:
        raise ValueError("response distribution requires a probability table")
    if theta.values.shape[1] != p.probs.size:
        raise DimensionError(
            f"theta has {theta.values.shape[1]} columns, proportions have "
            f"{p.probs.size} entries"
        )
    check_table_size(theta.n_items, theta.n_attributes)
    per_class = np.ones((1, theta.values.shape[1]), dtype=np.float64)
    for j in range(theta.n_items):
        row = theta.values[j]
        per_class = np.concatenate([per_class * (1.0 - row), per_class * row], axis=0)
    return per_class @ p.probs


def mobius_from_marginals(marginals: NDArray[np.float64]) -> NDArray[np.float64]:
    """Recover pointwise probabilities from dominance probabilities.

    Inverts m(r) = sum over r' >= r of f(r') by inclusion-exclusion:
    f(r) = sum over r' >= r of (-1)**popcount(r' - r) m(r').
    """
    out = np.array(marginals, dtype=np.float64).copy()
    n_bits = int(out.size).bit_length() - 1
    if out.size != 1 << n_bits:
        raise DimensionError(f"length {out.size} is not a power of two")
    for i in range(n_bits):
        grid = out.reshape(-1, 2, 1 << i)
        grid[:, 0, :] -= grid[:, 1, :]
    return out


def superset_sums(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Sum over dominating patterns: out[r] = sum over r' >= r of values[r']."""
    out = np.array(values, dtype=np.float64).copy()
    n_bits = int(out.size).bit_length() - 1
    if out.size != 1 << n_bits:
        raise DimensionError(f"length {out.size} is not a power of two")
    for i in range(n_bits):
        grid = out.reshape(-1, 2, 1 << i)
        grid[:, 0, :] += grid[:, 1, :]
    return out


def apply_shift(theta: ThetaMatrix, theta_star) -> ThetaMatrix:
    """Subtract a per-item constant from every entry of its row.

    The output is flagged non-probability regardless of its range.
    """
    shift = np.asarray(theta_star, dtype=np.float64)
    if shift.shape != (theta.n_items,):
        raise DimensionError(
            f"shift length {shift.shape} does not match {theta.n_items} items"
        )
    return ThetaMatrix(theta.values - shift[:, None], is_probability=False)


def build_transform(theta_star) -> TransformMatrix:
    """Closed-form matrix mapping a table's marginals to its shifted ones.

    For shift vector c, multiplying the marginal table of any per-item
    table on the left by this matrix equals the marginal table of the
    row-shifted input.  Entries: zero when r' is not dominated by r, one
    on the diagonal, else the product of -c_j over items j set in r but
    not r'.  Built densely (Kronecker product of 2x2 factors), so capped
    at 12 items; beyond that, shift the table first and rebuild its
    marginals, which is mathematically identical.
    """
    shift = np.asarray(theta_star, dtype=np.float64)
    if shift.ndim != 1 or shift.size < 1:
        raise DimensionError("shift vector must be one-dimensional and non-empty")
    if shift.size > MAX_DENSE_TRANSFORM_ITEMS:
        raise SizeLimitError(
            f"dense transform capped at {MAX_DENSE_TRANSFORM_ITEMS} items; "
            f"use apply_shift + build_tmatrix instead"
        )
    factors = [np.array([[1.0, 0.0], [-c, 1.0]]) for c in shift]
    dense = reduce(np.kron, factors[::-1])
    return TransformMatrix(dense, shift)
