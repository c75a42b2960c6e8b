"""Item parameterizations for the five standard cognitive-diagnosis families.

Each item carries one of DINA, DINO, G-DINA, LLM (logit link) or reduced
RUM (log link) parameters; families may be mixed within a test.  The only
structure the downstream theory needs from a parameterization is the
monotonicity of the resulting response-probability table, which
``check_monotonicity`` verifies numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .core import (
    DimensionError,
    QMatrix,
    ThetaMatrix,
    bit_matrix,
    bits_to_int,
    dominates,
    enumerate_profiles,
)

EQ_TOL = 1e-10  # equality within this, strictness means margin beyond it


class InvalidParameterError(ValueError):
    """Item parameters produce an out-of-range response probability."""


@dataclass(frozen=True)
class DinaParams:
    """Conjunctive item: slip s and guess g with 1 - s > g."""

    s: float
    g: float
    family = "DINA"

    def __post_init__(self):
        _check_slip_guess(self.s, self.g, self.family)


@dataclass(frozen=True)
class DinoParams:
    """Disjunctive item: slip s and guess g with 1 - s > g."""

    s: float
    g: float
    family = "DINO"

    def __post_init__(self):
        _check_slip_guess(self.s, self.g, self.family)


def _check_slip_guess(s: float, g: float, family: str) -> None:
    if not (0.0 < s < 1.0 and 0.0 < g < 1.0):
        raise InvalidParameterError(f"{family}: s and g must lie in (0, 1), got s={s}, g={g}")
    if not 1.0 - s > g:
        raise InvalidParameterError(f"{family}: requires 1 - s > g, got s={s}, g={g}")


@dataclass(frozen=True)
class GdinaParams:
    """Additive-effects item: coefficients keyed by attribute subsets.

    ``beta`` maps frozensets of 0-based attribute indices to real
    coefficients; the empty set holds the baseline.  Subsets absent from
    the map contribute nothing.  The response probability for profile
    ``alpha`` is the sum of coefficients over stored subsets contained in
    ``alpha``, so every such partial sum must lie in [0, 1].
    """

    beta: Mapping[frozenset, float]

    family = "GDINA"

    def __post_init__(self):
        canon = {frozenset(int(a) for a in key): float(v) for key, v in self.beta.items()}
        if len(canon) != len(self.beta):
            raise InvalidParameterError("GDINA: duplicate attribute subsets in beta")
        if frozenset() not in canon:
            raise InvalidParameterError("GDINA: beta must include the empty-set baseline")
        if any(a < 0 for key in canon for a in key):
            raise InvalidParameterError("GDINA: attribute indices must be non-negative")
        object.__setattr__(self, "beta", MappingProxyType(canon))
        sums = self.partial_sums()
        bad = (sums < -1e-12) | (sums > 1 + 1e-12)
        if bad.any():
            raise InvalidParameterError(
                f"GDINA: partial sum {sums[bad][0]:.6g} outside [0, 1]"
            )

    @property
    def attributes(self) -> frozenset:
        """Union of all attribute indices referenced by beta."""
        return frozenset().union(*self.beta.keys())

    def partial_sums(self) -> NDArray[np.float64]:
        """Coefficient sums for every subset of the referenced attributes.

        Entry m of the result is the sum of beta over stored subsets
        contained in the subset encoded by bit mask m (bits follow the
        sorted order of ``self.attributes``).
        """
        attrs = sorted(self.attributes)
        pos = {a: i for i, a in enumerate(attrs)}
        sums = np.zeros(1 << len(attrs))
        for key, value in self.beta.items():
            sums[sum(1 << pos[a] for a in key)] += value
        # subset-sum (zeta) transform over the compact attribute mask
        for i in range(len(attrs)):
            grid = sums.reshape(-1, 2, 1 << i)
            grid[:, 1, :] += grid[:, 0, :]
        return sums


@dataclass(frozen=True)
class LlmParams:
    """Logit-link item: intercept and one slope per attribute.

    Slopes are consulted only where the item's Q-matrix row is 1; the
    rest are conventionally zero.
    """

    beta0: float
    beta: tuple = ()

    family = "LLM"

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if not np.isfinite([self.beta0, *beta]).all():
            raise InvalidParameterError("LLM: coefficients must be finite")


@dataclass(frozen=True)
class RrumParams:
    """Log-link item: baseline probability and one penalty per attribute.

    ``pi`` is the positive-response probability of fully capable
    profiles; each missing required attribute multiplies it by the
    corresponding penalty in (0, 1).  Penalties are consulted only where
    the Q-matrix row is 1.
    """

    pi: float
    r: tuple = ()

    family = "RRUM"

    def __post_init__(self):
        r = tuple(float(v) for v in self.r)
        object.__setattr__(self, "r", r)
        if not 0.0 < self.pi <= 1.0:
            raise InvalidParameterError(f"RRUM: pi must lie in (0, 1], got {self.pi}")
        if any(not 0.0 < v < 1.0 for v in r):
            raise InvalidParameterError("RRUM: every penalty must lie strictly in (0, 1)")


ItemParams = Union[DinaParams, DinoParams, GdinaParams, LlmParams, RrumParams]

FAMILIES = ("DINA", "DINO", "GDINA", "LLM", "RRUM")


def ideal_response_dina(q_row, alpha) -> int:
    """1 iff the profile possesses every attribute the item requires."""
    return int(profile_dominates(alpha, q_row))


def ideal_response_dino(q_row, alpha) -> int:
    """1 iff the profile possesses at least one required attribute."""
    q_row = np.asarray(q_row)
    alpha = np.asarray(alpha)
    if q_row.shape != alpha.shape:
        raise DimensionError(f"length mismatch: {q_row.shape} vs {alpha.shape}")
    return int((bits_to_int(alpha.tolist()) & bits_to_int(q_row.tolist())) != 0)


def profile_dominates(alpha, q_row) -> bool:
    q_row = np.asarray(q_row)
    alpha = np.asarray(alpha)
    if q_row.shape != alpha.shape:
        raise DimensionError(f"length mismatch: {alpha.shape} vs {q_row.shape}")
    return dominates(bits_to_int(alpha.tolist()), bits_to_int(q_row.tolist()))


def _sigmoid(x: NDArray[np.float64]) -> NDArray[np.float64]:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _theta_row(q_code: int, q_bits: NDArray, params: ItemParams, item: int,
               profiles: NDArray, alpha_bits: NDArray) -> NDArray[np.float64]:
    if isinstance(params, DinaParams):
        capable = (profiles & q_code) == q_code
        return np.where(capable, 1.0 - params.s, params.g)
    if isinstance(params, DinoParams):
        touched = (profiles & q_code) != 0
        return np.where(touched, 1.0 - params.s, params.g)
    if isinstance(params, GdinaParams):
        required = [int(k) for k in np.flatnonzero(q_bits)]
        if not params.attributes <= set(required):
            extra = sorted(params.attributes - set(required))
            raise InvalidParameterError(
                f"GDINA: item {item} beta references attributes {extra} "
                f"not required by its Q-matrix row"
            )
        pos = {a: i for i, a in enumerate(sorted(params.attributes))}
        compact = np.zeros(profiles.size, dtype=np.int64)
        for a, i in pos.items():
            compact |= ((profiles >> a) & 1) << i
        row = params.partial_sums()[compact]
        bad = np.flatnonzero((row < -1e-12) | (row > 1 + 1e-12))
        if bad.size:
            raise InvalidParameterError(
                f"GDINA: item {item} probability {row[bad[0]]:.6g} outside "
                f"[0, 1] at profile {bad[0]}"
            )
        return np.clip(row, 0.0, 1.0)
    if isinstance(params, LlmParams):
        if len(params.beta) != q_bits.size:
            raise DimensionError(
                f"LLM: item {item} has {len(params.beta)} slopes for "
                f"{q_bits.size} attributes"
            )
        slope = np.asarray(params.beta) * q_bits
        return _sigmoid(params.beta0 + alpha_bits @ slope)
    if isinstance(params, RrumParams):
        if len(params.r) != q_bits.size:
            raise DimensionError(
                f"RRUM: item {item} has {len(params.r)} penalties for "
                f"{q_bits.size} attributes"
            )
        log_pen = np.log(np.asarray(params.r)) * q_bits
        return params.pi * np.exp((1 - alpha_bits) @ log_pen)
    raise TypeError(f"unknown item parameter type {type(params).__name__}")


def theta_from_params(q: QMatrix, params: Sequence[ItemParams]) -> ThetaMatrix:
    """Build the J x 2**K response-probability table for the given items.

    Parameters
    ----------
    q : QMatrix
        Design matrix; row j restricts which attributes may affect item j.
    params : sequence of ItemParams
        One parameter object per item; families may be mixed.

    Returns
    -------
    ThetaMatrix
        Probability table with columns in binary-counter profile order.

    Raises
    ------
    InvalidParameterError
        If any coefficient combination puts a probability outside [0, 1]
        or references attributes the item does not require.
    """
    if len(params) != q.n_items:
        raise DimensionError(
            f"expected {q.n_items} item parameter sets, got {len(params)}"
        )
    profiles = enumerate_profiles(q.n_attributes)
    alpha_bits = bit_matrix(profiles, q.n_attributes).astype(np.float64)
    codes = q.row_codes
    rows = [
        _theta_row(int(codes[j]), q.entries[j], params[j], j, profiles, alpha_bits)
        for j in range(q.n_items)
    ]
    return ThetaMatrix(np.vstack(rows))


@dataclass(frozen=True)
class MonotonicityViolation:
    item: int
    kind: str
    detail: str


@dataclass(frozen=True)
class MonotonicityReport:
    """Outcome of the monotonicity check; empty violations means pass."""

    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.kind for v in self.violations}


def check_monotonicity(q: QMatrix, theta: ThetaMatrix) -> MonotonicityReport:
    """Check the two ordering assumptions the theory places on a table.

    For every item the capable profiles (those dominating the item's
    requirement row) must share a single value, that value must be the
    row maximum, and the zero profile must be the row minimum.  For every
    single-attribute item the fully capable profile must strictly exceed
    every profile missing that attribute.

    Violations are reported as data, one record per failed clause:
    ``capable-not-constant``, ``capable-not-maximal``,
    ``baseline-not-minimal`` and ``singleton-gap-not-strict``.
    """
    if not theta.is_probability:
        raise ValueError("monotonicity check expects a probability table")
    if theta.n_items != q.n_items or theta.n_attributes != q.n_attributes:
        raise DimensionError(
            f"theta shape {theta.values.shape} does not match Q "
            f"{q.n_items}x{q.n_attributes}"
        )
    profiles = enumerate_profiles(q.n_attributes)
    codes = q.row_codes
    violations = []
    for j in range(q.n_items):
        row = theta.values[j]
        capable = (profiles & codes[j]) == codes[j]
        cap = row[capable]
        if cap.max() - cap.min() > EQ_TOL:
            violations.append(MonotonicityViolation(
                j, "capable-not-constant",
                f"capable values spread over [{cap.min():.6g}, {cap.max():.6g}]"))
        if row.max() > cap.max() + EQ_TOL:
            violations.append(MonotonicityViolation(
                j, "capable-not-maximal",
                f"profile {int(row.argmax())} has {row.max():.6g} above "
                f"capable value {cap.max():.6g}"))
        if row.min() < row[0] - EQ_TOL:
            violations.append(MonotonicityViolation(
                j, "baseline-not-minimal",
                f"profile {int(row.argmin())} has {row.min():.6g} below "
                f"zero-profile value {row[0]:.6g}"))
    for k in range(q.n_attributes):
        singleton = 1 << k
        for j in np.flatnonzero(codes == singleton):
            row = theta.values[j]
            missing = (profiles & singleton) == 0
            gap = row[-1] - row[missing].max()
            if gap <= EQ_TOL:
                violations.append(MonotonicityViolation(
                    int(j), "singleton-gap-not-strict",
                    f"full profile at {row[-1]:.6g} does not strictly exceed "
                    f"max {row[missing].max():.6g} over profiles lacking "
                    f"attribute {k}"))
    return MonotonicityReport(tuple(violations))


def dina_params_from_theta(q: QMatrix, theta: ThetaMatrix) -> list:
    """Recover per-item slip/guess pairs from a DINA-structured table.

    Requires every row to be two-valued by capability group; used to seed
    estimation at an explicitly constructed parameter point.
    """
    if theta.n_items != q.n_items or theta.n_attributes != q.n_attributes:
        raise DimensionError("theta does not match Q")
    profiles = enumerate_profiles(q.n_attributes)
    out = []
    for j in range(q.n_items):
        row = theta.values[j]
        capable = (profiles & q.row_codes[j]) == q.row_codes[j]
        cap, non = row[capable], row[~capable]
        if cap.max() - cap.min() > 1e-9 or (non.size and non.max() - non.min() > 1e-9):
            raise ValueError(f"item {j} table row is not DINA-structured")
        out.append(DinaParams(s=1.0 - float(cap[0]), g=float(non[0])))
    return out
