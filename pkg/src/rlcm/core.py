"""Bit encodings and validated containers for Q-restricted latent class models.

Attribute profiles (length K) and response patterns (length J) are encoded
as non-negative integers with bit k of the integer holding coordinate k,
so bit 0 is attribute 1 / item 1.  The canonical in-memory order of
profiles and patterns is increasing integer encoding (binary-counter
order), which respects the coordinatewise partial order.  The paper-style
weight-graded order is available as a display permutation only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

MAX_ATTRIBUTES = 20
MAX_ITEMS = 20
MAX_TABLE_BYTES = 2**31


class SizeLimitError(ValueError):
    """Requested operation exceeds the exhaustive-enumeration size caps."""


class DimensionError(ValueError):
    """Inputs have incompatible shapes or lengths."""


def bits_to_int(bits) -> int:
    """Encode a 0/1 vector as an integer, bit k = coordinate k."""
    code = 0
    for k, b in enumerate(bits):
        if b not in (0, 1):
            raise ValueError(f"bit vector entries must be 0 or 1, got {b!r}")
        code |= int(b) << k
    return code


def int_to_bits(code: int, length: int) -> NDArray[np.int8]:
    """Decode an integer into a 0/1 vector of the given length."""
    if not 0 <= code < (1 << length):
        raise ValueError(f"encoding {code} out of range for length {length}")
    return ((code >> np.arange(length)) & 1).astype(np.int8)


def dominates(a: int, b: int) -> bool:
    """Coordinatewise a >= b for integer-encoded profiles/patterns."""
    return (a & b) == b


def profile_geq(a, b) -> bool:
    """Coordinatewise dominance for explicit bit vectors of equal length."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return dominates(bits_to_int(a.tolist()), bits_to_int(b.tolist()))


def enumerate_profiles(n_attributes: int) -> NDArray[np.int64]:
    """All 2**K profile encodings in increasing (binary-counter) order."""
    if not 1 <= n_attributes <= MAX_ATTRIBUTES:
        raise SizeLimitError(
            f"attribute count must be in [1, {MAX_ATTRIBUTES}], got {n_attributes}"
        )
    return np.arange(1 << n_attributes, dtype=np.int64)


def enumerate_patterns(n_items: int) -> NDArray[np.int64]:
    """All 2**J response-pattern encodings in increasing order."""
    if not 1 <= n_items <= MAX_ITEMS:
        raise SizeLimitError(
            f"item count must be in [1, {MAX_ITEMS}], got {n_items}"
        )
    return np.arange(1 << n_items, dtype=np.int64)


def bit_matrix(codes, length: int) -> NDArray[np.int8]:
    """Stack int_to_bits over an array of encodings, shape (len(codes), length)."""
    codes = np.asarray(codes, dtype=np.int64)
    return ((codes[:, None] >> np.arange(length)) & 1).astype(np.int8)


def weight_graded_order(length: int) -> NDArray[np.int64]:
    """Display permutation: encodings ordered by popcount, then by index set.

    Yields 0, e_1, ..., e_n, e_1+e_2, e_1+e_3, ..., 1 as in hand-written
    marginal tables.  Used for printing only; storage stays binary-counter.
    """
    order = [
        sum(1 << i for i in combo)
        for w in range(length + 1)
        for combo in itertools.combinations(range(length), w)
    ]
    return np.array(order, dtype=np.int64)


def check_table_size(log2_rows: int, log2_cols: int) -> None:
    """Enforce the dense-table byte cap for exhaustive operations."""
    if 8 * (1 << (log2_rows + log2_cols)) > MAX_TABLE_BYTES:
        raise SizeLimitError(
            f"dense table 2^{log2_rows} x 2^{log2_cols} exceeds "
            f"{MAX_TABLE_BYTES} bytes"
        )


def _freeze(arr: np.ndarray) -> np.ndarray:
    # copy so that freezing never flips flags on a caller's array
    arr = np.array(arr, order="C", copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class QMatrix:
    """J x K binary design matrix linking items to attributes.

    Row j gives the attribute requirements of item j.  Every entry is 0/1
    and no row may be all zero (an item must require at least one
    attribute).
    """

    entries: NDArray[np.int8]

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2:
            raise DimensionError("Q-matrix must be two-dimensional")
        n_items, n_attributes = entries.shape
        if n_items < 1 or n_attributes < 1:
            raise DimensionError("Q-matrix needs at least one item and one attribute")
        if n_items > MAX_ITEMS or n_attributes > MAX_ATTRIBUTES:
            raise SizeLimitError(
                f"Q-matrix {n_items}x{n_attributes} exceeds caps "
                f"J<={MAX_ITEMS}, K<={MAX_ATTRIBUTES}"
            )
        if not np.isin(entries, (0, 1)).all():
            raise ValueError("Q-matrix entries must be 0 or 1")
        if (entries.sum(axis=1) == 0).any():
            bad = int(np.flatnonzero(entries.sum(axis=1) == 0)[0])
            raise ValueError(f"Q-matrix row {bad} is all zero")
        object.__setattr__(self, "entries", _freeze(entries.astype(np.int8)))

    @property
    def n_items(self) -> int:
        return self.entries.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.entries.shape[1]

    @property
    def row_codes(self) -> NDArray[np.int64]:
        """Integer encoding of each row's requirement vector."""
        weights = (1 << np.arange(self.n_attributes)).astype(np.int64)
        return self.entries.astype(np.int64) @ weights

    def __eq__(self, other) -> bool:
        return isinstance(other, QMatrix) and np.array_equal(self.entries, other.entries)


@dataclass(frozen=True)
class ThetaMatrix:
    """J x 2**K table of per-item positive-response values by profile column.

    Columns are indexed by the integer profile encoding.  A probability
    table has all entries in [0, 1]; tables produced by row shifts are
    flagged non-probability and may hold arbitrary reals.
    """

    values: NDArray[np.float64]
    is_probability: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError("theta table must be two-dimensional")
        n_items, n_cols = values.shape
        if n_items < 1 or n_items > MAX_ITEMS:
            raise SizeLimitError(f"item count {n_items} outside [1, {MAX_ITEMS}]")
        n_attributes = int(n_cols).bit_length() - 1
        if n_cols != 1 << n_attributes or n_attributes < 1:
            raise DimensionError(
                f"theta column count {n_cols} is not 2**K for K >= 1"
            )
        if n_attributes > MAX_ATTRIBUTES:
            raise SizeLimitError(f"attribute count {n_attributes} exceeds {MAX_ATTRIBUTES}")
        if not np.isfinite(values).all():
            raise ValueError("theta table contains non-finite entries")
        if self.is_probability and ((values < 0).any() or (values > 1).any()):
            raise ValueError("probability theta table has entries outside [0, 1]")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n_items(self) -> int:
        return self.values.shape[0]

    @property
    def n_attributes(self) -> int:
        return int(self.values.shape[1]).bit_length() - 1

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ThetaMatrix)
            and self.is_probability == other.is_probability
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class ProportionVector:
    """Distribution over the 2**K attribute profiles, all entries in (0, 1).

    Inputs whose sum deviates from 1 by at most 1e-9 are renormalized so
    that round-tripped files stay valid; larger deviations are rejected.
    """

    probs: NDArray[np.float64]

    SUM_TOLERANCE = 1e-9

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise DimensionError("proportion vector must be one-dimensional")
        n_attributes = int(probs.size).bit_length() - 1
        if probs.size != 1 << n_attributes or n_attributes < 1:
            raise DimensionError(f"length {probs.size} is not 2**K for K >= 1")
        if n_attributes > MAX_ATTRIBUTES:
            raise SizeLimitError(f"attribute count {n_attributes} exceeds {MAX_ATTRIBUTES}")
        if not np.isfinite(probs).all():
            raise ValueError("proportions contain non-finite entries")
        if (probs <= 0).any() or (probs >= 1).any():
            raise ValueError("every proportion must lie strictly in (0, 1)")
        total = float(probs.sum())
        if abs(total - 1.0) > self.SUM_TOLERANCE:
            raise ValueError(f"proportions sum to {total}, beyond tolerance "
                             f"{self.SUM_TOLERANCE} of 1")
        object.__setattr__(self, "probs", _freeze(probs / total))

    @property
    def n_attributes(self) -> int:
        return int(self.probs.size).bit_length() - 1

    def __eq__(self, other) -> bool:
        return isinstance(other, ProportionVector) and np.array_equal(self.probs, other.probs)
