"""Plot data for summary (beeswarm), dependence and waterfall views.

Bundles only reshape existing :class:`~acadrisk.shapley.Explanation`
objects; nothing here recomputes attributions.  JSON is the primary output,
with a small static SVG renderer for the summary and waterfall views.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from html import escape

import numpy as np

from .errors import DomainError, SchemaError
from .schema import interpret

KINDS = ("summary", "dependence", "waterfall")


def model_hash(ensemble) -> str:
    """Short content hash of a model's canonical JSON."""
    text = ensemble.to_json() if hasattr(ensemble, "to_json") else json.dumps(ensemble, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def timestamp() -> str:
    """UTC time in ISO form; ``SOURCE_DATE_EPOCH`` pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
           else _dt.datetime.now(_dt.timezone.utc))
    return now.replace(microsecond=0).isoformat()


@dataclass
class PlotBundle:
    kind: str
    payload: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown plot kind {self.kind!r}; expected one of {KINDS}")
        if not self.payload:
            raise DomainError("plot payload is empty")

    def to_dict(self, with_timestamp: bool = True) -> dict:
        meta = dict(self.metadata)
        if not with_timestamp:
            meta.pop("timestamp", None)
        return {"kind": self.kind, "metadata": meta, "payload": self.payload}

    def to_json(self, with_timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(with_timestamp), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PlotBundle":
        return cls(d["kind"], d["payload"], d.get("metadata", {}))


def save_bundle(bundle: PlotBundle, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(bundle.to_json())


def load_bundle(path) -> PlotBundle:
    with open(path, encoding="utf-8") as fh:
        return PlotBundle.from_dict(json.load(fh))


def percentile_of(column, value) -> float:
    """Share of the cohort with a strictly smaller value."""
    column = np.asarray(column, dtype=np.float64)
    return float(np.mean(column < value))


def _meta(cohort, ensemble=None, **extra) -> dict:
    meta = {"cohort_tag": getattr(cohort, "cohort_tag", ""), "timestamp": timestamp()}
    meta["model_hash"] = model_hash(ensemble) if ensemble is not None else ""
    meta.update(extra)
    return meta


def _rows_by_id(cohort, sample_ids):
    try:
        return [cohort.index_of(sid) for sid in sample_ids]
    except (KeyError, DomainError) as exc:
        raise DomainError(f"explained sample not in cohort: {exc}") from None


def summary_plot_data(importance, cohort, top_k: int = 20, ensemble=None) -> PlotBundle:
    """Per-sample records for the ``top_k`` globally most important features.

    Records come feature by feature in rank order and, within a feature, in
    the order the samples were explained.
    """
    names = list(importance.feature_names)
    if len(importance.mean_abs) == 0 or len(importance.per_sample) == 0:
        raise DomainError("importance is empty")
    if not 1 <= top_k <= len(names):
        raise DomainError(f"top_k must lie in [1, {len(names)}], got {top_k}")
    rows = _rows_by_id(cohort, importance.sample_ids)
    payload = []
    for rank, f in enumerate(importance.order[:top_k], start=1):
        name = names[f]
        column = cohort.column(name)
        for r, sid in enumerate(importance.sample_ids):
            value = float(column[rows[r]])
            payload.append({"feature": name, "rank": rank, "sample_id": sid,
                            "phi": float(importance.per_sample[r, f]), "feature_value": value,
                            "feature_value_percentile": percentile_of(column, value)})
    return PlotBundle("summary", payload, _meta(cohort, ensemble, top_k=top_k))


def dependence_plot_data(feature: str, color_feature: str, explanations, cohort,
                         ensemble=None) -> PlotBundle:
    """``(feature value, phi of feature, colour feature value)`` for every explained sample."""
    explanations = list(explanations)
    if not explanations:
        raise DomainError("no explanations given")
    names = list(explanations[0].feature_names or cohort.feature_names)
    unknown = [f for f in (feature, color_feature) if f not in names]
    if unknown:
        raise SchemaError(f"unknown features {unknown}; valid names: {names}")
    k = names.index(feature)
    rows = _rows_by_id(cohort, [e.sample_id for e in explanations])
    x, c = cohort.column(feature), cohort.column(color_feature)
    payload = [{"sample_id": e.sample_id, "feature_value": float(x[r]), "phi": float(e.phi[k]),
                "color_value": float(c[r])} for e, r in zip(explanations, rows)]
    return PlotBundle("dependence", payload,
                      _meta(cohort, ensemble, feature=feature, color_feature=color_feature))


def waterfall_data(explanation, cohort, ensemble=None) -> PlotBundle:
    """One sample's contributions, largest magnitude first, with readable values.

    Each record carries the variable, its stored value, a reading produced
    from the schema template, and the contribution.  The base value and the
    model output go into the metadata; base plus contributions equals the
    output.
    """
    row = _rows_by_id(cohort, [explanation.sample_id])[0]
    names = list(explanation.feature_names or cohort.feature_names)
    phi = np.asarray(explanation.phi, dtype=np.float64)
    order = np.lexsort((np.arange(len(phi)), -np.abs(phi)))
    payload = []
    for j in order:
        name = names[j]
        spec = cohort.schema[name]
        column = cohort.column(name)
        value = float(column[row])
        record = {"variable": name, "value": value,
                  "interpretation": interpret(spec, value, percentile_of(column, value)),
                  "contribution": float(phi[j])}
        if spec.is_categorical:
            record["label"] = spec.decode(value)
        payload.append(record)
    return PlotBundle("waterfall", payload,
                      _meta(cohort, ensemble, sample_id=explanation.sample_id,
                            base_value=float(explanation.base_value),
                            output=float(explanation.output)))


# --- SVG -------------------------------------------------------------------

_WIDTH, _ROW, _LEFT, _RIGHT, _TOP = 720, 24, 150, 30, 30


def _svg(height: int, body: list) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}" '
            f'viewBox="0 0 {_WIDTH} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _scale(lo, hi):
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    span = _WIDTH - _LEFT - _RIGHT
    return lambda v: _LEFT + (v - lo) / (hi - lo) * span


def summary_svg(bundle: PlotBundle, jitter_seed: int = 0) -> str:
    """Beeswarm-style scatter: one row per feature, x = phi, colour = value percentile."""
    if bundle.kind != "summary":
        raise DomainError("summary_svg needs a summary bundle")
    features = []
    for rec in bundle.payload:
        if rec["feature"] not in features:
            features.append(rec["feature"])
    phis = [rec["phi"] for rec in bundle.payload]
    x = _scale(min(min(phis), 0.0), max(max(phis), 0.0))
    rng = np.random.default_rng(jitter_seed)
    height = _TOP + _ROW * len(features) + 30
    body = [f'<line x1="{x(0.0):.1f}" y1="{_TOP - 10}" x2="{x(0.0):.1f}" '
            f'y2="{height - 25}" stroke="#999"/>']
    for i, name in enumerate(features):
        y = _TOP + _ROW * i + _ROW / 2
        body.append(f'<text x="{_LEFT - 8}" y="{y + 4:.1f}" text-anchor="end">{escape(name)}</text>')
    for rec in bundle.payload:
        i = features.index(rec["feature"])
        y = _TOP + _ROW * i + _ROW / 2 + rng.uniform(-0.35, 0.35) * _ROW
        p = rec["feature_value_percentile"]
        colour = f"rgb({int(40 + 215 * p)},{60},{int(255 - 215 * p)})"
        body.append(f'<circle cx="{x(rec["phi"]):.2f}" cy="{y:.2f}" r="2.2" fill="{colour}"/>')
    body.append(f'<text x="{_WIDTH / 2:.0f}" y="{height - 8}" text-anchor="middle">'
                'contribution to risk (log-odds)</text>')
    return _svg(height, body)


def waterfall_svg(bundle: PlotBundle, max_rows: int = 20) -> str:
    """Horizontal bars stepping from the base value to the model output."""
    if bundle.kind != "waterfall":
        raise DomainError("waterfall_svg needs a waterfall bundle")
    records = bundle.payload[:max_rows]
    rest = sum(r["contribution"] for r in bundle.payload[max_rows:])
    base = bundle.metadata["base_value"]
    steps, level = [], base
    for r in records:
        steps.append((r["variable"], level, level + r["contribution"]))
        level += r["contribution"]
    if len(bundle.payload) > max_rows:
        steps.append((f"{len(bundle.payload) - max_rows} others", level, level + rest))
    ends = [base] + [v for _, a, b in steps for v in (a, b)]
    x = _scale(min(ends), max(ends))
    height = _TOP + _ROW * len(steps) + 40
    body = []
    for i, (name, a, b) in enumerate(steps):
        y = _TOP + _ROW * i
        colour = "#d62728" if b >= a else "#1f77b4"
        left, width = min(x(a), x(b)), max(abs(x(b) - x(a)), 1.0)
        body.append(f'<text x="{_LEFT - 8}" y="{y + _ROW / 2 + 4:.1f}" '
                    f'text-anchor="end">{escape(name)}</text>')
        body.append(f'<rect x="{left:.2f}" y="{y + 4}" width="{width:.2f}" '
                    f'height="{_ROW - 8}" fill="{colour}"/>')
    out = bundle.metadata["output"]
    body.append(f'<text x="{_LEFT}" y="{height - 12}">base {base:.3f} -&gt; output {out:.3f}</text>')
    return _svg(height, body)
