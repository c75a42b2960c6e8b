"""Readers and writers for the on-disk formats.

All matrices and vectors are stored in binary-counter order with bit 0
holding attribute 1 / item 1, and every JSON document declares that
convention so foreign files are rejected loudly.  Attribute and item
indices appearing in JSON are 0-based.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .core import ProportionVector, QMatrix, ThetaMatrix
from .identifiability import NonIdentifiablePair
from .inference import ExperimentTable, FitResult, ResponseData
from .models import (
    DinaParams,
    DinoParams,
    GdinaParams,
    ItemParams,
    LlmParams,
    RrumParams,
)

CANONICAL_ORDER = "binary-counter, bit0=attr1"


class FileFormatError(ValueError):
    """A file failed to parse; the message carries location diagnostics."""


def _load_json(path) -> dict:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: expected a JSON object at top level")
    return doc


def _expect_format(doc: dict, path, expected: str) -> None:
    found = doc.get("format")
    if found != expected:
        raise FileFormatError(
            f"{path}: expected format {expected!r}, found {found!r}"
        )


def _expect_order(doc: dict, path, key: str) -> None:
    if doc.get(key) != CANONICAL_ORDER:
        raise FileFormatError(
            f"{path}: {key} must declare {CANONICAL_ORDER!r}, found {doc.get(key)!r}"
        )


def read_qmatrix_csv(path) -> QMatrix:
    """Parse a Q-matrix: one line per item, comma-separated 0/1 entries.

    Lines starting with '#' are comments.
    """
    rows: List[List[int]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        row = []
        for col, cell in enumerate(cells, start=1):
            if cell not in ("0", "1"):
                raise FileFormatError(
                    f"{path}: line {lineno}, column {col}: expected 0 or 1, "
                    f"got {cell!r}"
                )
            row.append(int(cell))
        if rows and len(row) != len(rows[0]):
            raise FileFormatError(
                f"{path}: line {lineno}: expected {len(rows[0])} columns, "
                f"got {len(row)}"
            )
        rows.append(row)
    if not rows:
        raise FileFormatError(f"{path}: no Q-matrix rows found")
    return QMatrix(np.array(rows))


def write_qmatrix_csv(path, q: QMatrix) -> None:
    lines = ["# Q-matrix: one line per item, columns are attributes 1..K"]
    lines += [",".join(str(int(v)) for v in row) for row in q.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def read_theta_json(path) -> ThetaMatrix:
    doc = _load_json(path)
    _expect_format(doc, path, "theta-matrix")
    _expect_order(doc, path, "column_order")
    values = np.asarray(doc["values"], dtype=np.float64)
    theta = ThetaMatrix(values, is_probability=bool(doc.get("is_probability", True)))
    if theta.n_items != doc.get("J") or theta.n_attributes != doc.get("K"):
        raise FileFormatError(
            f"{path}: declared J={doc.get('J')}, K={doc.get('K')} do not match "
            f"values of shape {values.shape}"
        )
    return theta


def write_theta_json(path, theta: ThetaMatrix) -> None:
    doc = {
        "format": "theta-matrix",
        "J": theta.n_items,
        "K": theta.n_attributes,
        "column_order": CANONICAL_ORDER,
        "is_probability": theta.is_probability,
        "values": theta.values.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_proportion_json(path) -> ProportionVector:
    doc = _load_json(path)
    _expect_format(doc, path, "proportion-vector")
    _expect_order(doc, path, "order")
    probs = np.asarray(doc["probs"], dtype=np.float64)
    p = ProportionVector(probs)
    if p.n_attributes != doc.get("K"):
        raise FileFormatError(
            f"{path}: declared K={doc.get('K')} does not match {probs.size} entries"
        )
    return p


def write_proportion_json(path, p: ProportionVector) -> None:
    doc = {
        "format": "proportion-vector",
        "K": p.n_attributes,
        "order": CANONICAL_ORDER,
        "probs": p.probs.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _params_to_dict(params: ItemParams) -> dict:
    if isinstance(params, (DinaParams, DinoParams)):
        return {"family": params.family, "s": params.s, "g": params.g}
    if isinstance(params, GdinaParams):
        beta = {
            ",".join(str(a) for a in sorted(key)): value
            for key, value in params.beta.items()
        }
        return {"family": "GDINA", "beta": beta}
    if isinstance(params, LlmParams):
        return {"family": "LLM", "beta0": params.beta0, "beta": list(params.beta)}
    if isinstance(params, RrumParams):
        return {"family": "RRUM", "pi": params.pi, "r": list(params.r)}
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def _params_from_dict(item: dict, index: int, path) -> ItemParams:
    family = item.get("family")
    try:
        if family == "DINA":
            return DinaParams(s=float(item["s"]), g=float(item["g"]))
        if family == "DINO":
            return DinoParams(s=float(item["s"]), g=float(item["g"]))
        if family == "GDINA":
            beta = {}
            for key, value in item["beta"].items():
                subset = frozenset(int(a) for a in key.split(",") if a != "")
                beta[subset] = float(value)
            return GdinaParams(beta)
        if family == "LLM":
            return LlmParams(beta0=float(item["beta0"]),
                             beta=tuple(float(b) for b in item["beta"]))
        if family == "RRUM":
            return RrumParams(pi=float(item["pi"]),
                              r=tuple(float(v) for v in item["r"]))
    except KeyError as exc:
        raise FileFormatError(
            f"{path}: item {index}: missing field {exc.args[0]!r} for family {family}"
        ) from exc
    raise FileFormatError(
        f"{path}: item {index}: unknown family {family!r}"
    )


def read_item_params_json(path) -> Tuple[List[ItemParams], int]:
    """Read per-item parameters; returns (params, K)."""
    doc = _load_json(path)
    _expect_format(doc, path, "item-params")
    n_attributes = int(doc["K"])
    items = doc.get("items")
    if not isinstance(items, list) or not items:
        raise FileFormatError(f"{path}: 'items' must be a non-empty list")
    return [_params_from_dict(item, i, path) for i, item in enumerate(items)], n_attributes


def write_item_params_json(path, params: Sequence[ItemParams], n_attributes: int) -> None:
    doc = {
        "format": "item-params",
        "K": n_attributes,
        "items": [_params_to_dict(p) for p in params],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_response_csv(path) -> ResponseData:
    """Parse response data: one line per subject, comma-separated 0/1."""
    rows: List[List[int]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        row = []
        for col, cell in enumerate(cells, start=1):
            if cell not in ("0", "1"):
                raise FileFormatError(
                    f"{path}: line {lineno}, column {col}: expected 0 or 1, "
                    f"got {cell!r}"
                )
            row.append(int(cell))
        if rows and len(row) != len(rows[0]):
            raise FileFormatError(
                f"{path}: line {lineno}: expected {len(rows[0])} columns, "
                f"got {len(row)}"
            )
        rows.append(row)
    if not rows:
        raise FileFormatError(f"{path}: no response rows found")
    return ResponseData.from_matrix(np.array(rows))


def write_response_csv(path, data: ResponseData) -> None:
    lines = ["# responses: one line per subject, columns are items 1..J"]
    lines += [",".join(str(int(v)) for v in row) for row in data.to_matrix()]
    Path(path).write_text("\n".join(lines) + "\n")


def pair_to_dict(pair: NonIdentifiablePair) -> dict:
    theta_a, p_a = pair.first
    theta_b, p_b = pair.second
    return {
        "format": "nonidentifiable-pair",
        "J": theta_a.n_items,
        "K": theta_a.n_attributes,
        "order": CANONICAL_ORDER,
        "first": {"theta": theta_a.values.tolist(), "p": p_a.probs.tolist()},
        "second": {"theta": theta_b.values.tolist(), "p": p_b.probs.tolist()},
        "max_distribution_gap": pair.max_distribution_gap,
        "parameter_distance": pair.parameter_distance,
    }


def write_pair_json(path, pair: NonIdentifiablePair) -> None:
    Path(path).write_text(json.dumps(pair_to_dict(pair), indent=2) + "\n")


def read_pair_json(path) -> NonIdentifiablePair:
    doc = _load_json(path)
    _expect_format(doc, path, "nonidentifiable-pair")
    _expect_order(doc, path, "order")

    def member(key: str):
        part = doc[key]
        return (ThetaMatrix(np.asarray(part["theta"], dtype=np.float64)),
                ProportionVector(np.asarray(part["p"], dtype=np.float64)))

    # build() re-verifies the invariants instead of trusting stored numbers
    return NonIdentifiablePair.build(member("first"), member("second"))


def write_fit_json(path, fit: FitResult, n_attributes: int) -> None:
    doc = {
        "format": "fit-result",
        "K": n_attributes,
        "item_params": [_params_to_dict(p) for p in fit.item_params_hat],
        "p": fit.p_hat.probs.tolist(),
        "loglik": fit.loglik_trace[-1],
        "loglik_trace": list(fit.loglik_trace),
        "converged": fit.converged,
        "restarts_used": fit.restarts_used,
        "restart_logliks": list(fit.restart_logliks),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_experiment_json(path, table: ExperimentTable) -> None:
    doc = {"format": "consistency-table", **table.to_dict()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


SCHEMAS = {
    "q-matrix-csv": {
        "description": "One line per item; K comma-separated 0/1 entries; "
                       "'#' lines are comments. No all-zero rows.",
    },
    "response-csv": {
        "description": "One line per subject; J comma-separated 0/1 entries; "
                       "'#' lines are comments.",
    },
    "theta-matrix": {
        "type": "object",
        "required": ["format", "J", "K", "column_order", "values"],
        "properties": {
            "format": {"const": "theta-matrix"},
            "J": {"type": "integer", "minimum": 1, "maximum": 20},
            "K": {"type": "integer", "minimum": 1, "maximum": 20},
            "column_order": {"const": CANONICAL_ORDER},
            "is_probability": {"type": "boolean", "default": True},
            "values": {"type": "array", "items": {"type": "array",
                                                  "items": {"type": "number"}}},
        },
    },
    "proportion-vector": {
        "type": "object",
        "required": ["format", "K", "order", "probs"],
        "properties": {
            "format": {"const": "proportion-vector"},
            "K": {"type": "integer", "minimum": 1, "maximum": 20},
            "order": {"const": CANONICAL_ORDER},
            "probs": {"type": "array", "items": {"type": "number",
                                                 "exclusiveMinimum": 0,
                                                 "exclusiveMaximum": 1}},
        },
    },
    "item-params": {
        "type": "object",
        "required": ["format", "K", "items"],
        "properties": {
            "format": {"const": "item-params"},
            "K": {"type": "integer", "minimum": 1, "maximum": 20},
            "items": {"type": "array", "items": {"oneOf": [
                {"properties": {"family": {"enum": ["DINA", "DINO"]},
                                "s": {"type": "number"},
                                "g": {"type": "number"}},
                 "required": ["family", "s", "g"]},
                {"properties": {"family": {"const": "GDINA"},
                                "beta": {"type": "object",
                                         "description": "keys are comma-separated "
                                                        "0-based attribute indices; "
                                                        "'' is the empty set"}},
                 "required": ["family", "beta"]},
                {"properties": {"family": {"const": "LLM"},
                                "beta0": {"type": "number"},
                                "beta": {"type": "array", "items": {"type": "number"}}},
                 "required": ["family", "beta0", "beta"]},
                {"properties": {"family": {"const": "RRUM"},
                                "pi": {"type": "number"},
                                "r": {"type": "array", "items": {"type": "number"}}},
                 "required": ["family", "pi", "r"]},
            ]}},
        },
    },
    "nonidentifiable-pair": {
        "type": "object",
        "required": ["format", "J", "K", "order", "first", "second",
                     "max_distribution_gap", "parameter_distance"],
        "properties": {
            "format": {"const": "nonidentifiable-pair"},
            "order": {"const": CANONICAL_ORDER},
            "first": {"type": "object", "required": ["theta", "p"]},
            "second": {"type": "object", "required": ["theta", "p"]},
        },
    },
    "fit-result": {
        "type": "object",
        "required": ["format", "K", "item_params", "p", "loglik", "loglik_trace",
                     "converged", "restarts_used"],
        "properties": {"format": {"const": "fit-result"}},
    },
    "consistency-table": {
        "type": "object",
        "required": ["format", "rows", "median_overall_error"],
        "properties": {"format": {"const": "consistency-table"}},
    },
}
