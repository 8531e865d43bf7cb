"""HMM spec files: a JSON object describing an HMM and one observed sequence.

Schema (every field required, no others allowed)::

    {
      "hidden_states": ["H1", "H2"],
      "visible_states": ["V1", "V2"],
      "pi": [0.6, 0.4],
      "theta": [[0.6, 0.4], [0.3, 0.7]],
      "psi": [[0.5, 0.5], [0.5, 0.5]],
      "sequence": ["V1", "V2", "V1"]
    }

``theta`` and ``psi`` are row-major, one row per hidden state; every row and
``pi`` must sum to 1 within 1e-12. ``sequence`` lists visible-state names.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hmm import STOCHASTIC_TOL, Hmm

FIELDS = ("hidden_states", "visible_states", "pi", "theta", "psi", "sequence")


class SpecError(ValueError):
    """Invalid spec file; ``field`` and ``line`` locate the problem when known."""

    def __init__(self, message, field=None, line=None, source=None):
        self.field, self.line, self.source = field, line, source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")


@dataclass(frozen=True)
class HmmSpec:
    hmm: Hmm
    sequence: tuple  # visible-state names
    obs: np.ndarray  # indices into visible_states

    @property
    def L(self) -> int:
        return len(self.obs)

    def to_dict(self) -> dict:
        return dict(
            hidden_states=list(self.hmm.hidden_states),
            visible_states=list(self.hmm.visible_states),
            pi=self.hmm.pi.tolist(),
            theta=self.hmm.theta.tolist(),
            psi=self.hmm.psi.tolist(),
            sequence=list(self.sequence),
        )


def _line_of(text: str, field: str):
    m = re.search(r'"%s"\s*:' % re.escape(field), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _labels(doc, field, err):
    val = doc[field]
    if not isinstance(val, list) or not val or not all(isinstance(v, str) for v in val):
        raise err("must be a non-empty list of strings", field)
    if len(set(val)) != len(val):
        raise err("labels must be unique", field)
    return tuple(val)


def _numbers(val, field, err, what="entry"):
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise err(f"{what} must be a list of numbers", field)
    arr = np.array(val, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise err(f"{what} has negative or non-finite values", field)
    return arr


def _prob_row(val, n, field, err, what):
    arr = _numbers(val, field, err, what)
    if arr.shape != (n,):
        raise err(f"{what} has {arr.size} entries, expected {n}", field)
    s = arr.sum()
    if abs(s - 1.0) > STOCHASTIC_TOL:
        raise err(f"{what} sums to {float(s)!r}, expected 1", field)
    return arr


def parse_spec(text: str, source=None) -> HmmSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno, source=source) from None

    def err(msg, field):
        return SpecError(msg, field, _line_of(text, field), source)

    if not isinstance(doc, dict):
        raise SpecError("top level must be a JSON object", line=1, source=source)
    unknown = [k for k in doc if k not in FIELDS]
    if unknown:
        raise err(f"unknown field (allowed: {', '.join(FIELDS)})", unknown[0])
    missing = [k for k in FIELDS if k not in doc]
    if missing:
        raise SpecError(f"missing field(s): {', '.join(missing)}", source=source)

    hidden = _labels(doc, "hidden_states", err)
    visible = _labels(doc, "visible_states", err)
    H, V = len(hidden), len(visible)
    pi = _prob_row(doc["pi"], H, "pi", err, "pi")
    mats = {}
    for field, cols in (("theta", H), ("psi", V)):
        rows = doc[field]
        if not isinstance(rows, list) or len(rows) != H:
            raise err(f"must have {H} rows, one per hidden state", field)
        mats[field] = np.array(
            [_prob_row(r, cols, field, err, f"row {i + 1} ({hidden[i]})") for i, r in enumerate(rows)]
        )
    seq = doc["sequence"]
    if not isinstance(seq, list) or not all(isinstance(v, str) for v in seq):
        raise err("must be a list of visible-state names", "sequence")
    index = {v: i for i, v in enumerate(visible)}
    bad = [v for v in seq if v not in index]
    if bad:
        raise err(f"unknown visible state {bad[0]!r}", "sequence")
    if len(seq) < 2:
        raise err(f"needs at least 2 symbols, got {len(seq)}", "sequence")
    hmm = Hmm(hidden, visible, pi, mats["theta"], mats["psi"])
    return HmmSpec(hmm, tuple(seq), np.array([index[v] for v in seq], dtype=np.intp))


def load_spec(path) -> HmmSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read: {exc.strerror}", source=path) from None
    return parse_spec(text, source=path)


def dump_spec(spec: HmmSpec) -> str:
    """Spec file text with one matrix row per line."""
    doc = spec.to_dict()
    lines = []
    for key, val in doc.items():
        if key in ("theta", "psi"):
            rows = ",\n".join(f"    {json.dumps(r)}" for r in val)
            lines.append(f'  "{key}": [\n{rows}\n  ]')
        else:
            lines.append(f'  "{key}": {json.dumps(val)}')
    return "{\n" + ",\n".join(lines) + "\n}\n"
