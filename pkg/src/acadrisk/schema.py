"""Feature schema for grade-group cohorts.

The default schema lists the 36 independent variables collected for each
student: eight numeric ones (entrance-exam scores and the three
interaction-network centralities) and 28 ordinal categoricals.  Ten of them
are flagged as pruned and never reach the model.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DomainError, IngestionError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical-ordinal"

RISK_GPA_THRESHOLD = 2.0
GPA_MIN, GPA_MAX = 0.0, 5.0

NETWORK_FEATURES = ("DgrCnt", "BtwnCnt", "EgnCnt")


@dataclass(frozen=True)
class FeatureSpec:
    """One schema variable.

    ``codes`` gives the stored integer for each category, aligned with
    ``categories``; it defaults to zero-based positions.  Codes must be
    strictly increasing so that the declared order is preserved.
    """

    name: str
    kind: str
    categories: tuple = ()
    pruned: bool = False
    description: str = ""
    codes: tuple = ()
    template: str = ""

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind == NUMERIC:
            if self.categories or self.codes:
                raise SchemaError(f"{self.name}: numeric spec cannot declare categories")
            return
        if len(self.categories) < 2:
            raise SchemaError(f"{self.name}: categorical spec needs at least 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise SchemaError(f"{self.name}: duplicate category labels")
        codes = tuple(int(c) for c in self.codes) if self.codes else tuple(range(len(self.categories)))
        if len(codes) != len(self.categories):
            raise SchemaError(f"{self.name}: codes and categories differ in length")
        if any(b <= a for a, b in zip(codes, codes[1:])):
            raise SchemaError(f"{self.name}: codes must be strictly increasing")
        object.__setattr__(self, "codes", codes)

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def encode(self, raw: str) -> float:
        """Parse a raw CSV cell into the stored value (category code or real)."""
        text = raw.strip()
        if self.kind == NUMERIC:
            try:
                value = float(text)
            except ValueError:
                raise IngestionError(f"unparseable numeric {raw!r}", column=self.name) from None
            if not math.isfinite(value):
                raise IngestionError(f"non-finite numeric {raw!r}", column=self.name)
            return value
        try:
            return float(self.codes[self.categories.index(text)])
        except ValueError:
            raise IngestionError(f"unknown category {raw!r}", column=self.name) from None

    def decode(self, value: float) -> str:
        if self.kind == NUMERIC:
            return repr(float(value))
        try:
            return self.categories[self.codes.index(int(value))]
        except ValueError:
            raise DomainError(f"{self.name}: {value!r} is not a valid code") from None

    def is_valid(self, value: float) -> bool:
        if not math.isfinite(value):
            return False
        if self.kind == NUMERIC:
            return True
        return float(value).is_integer() and int(value) in self.codes

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "pruned": self.pruned,
               "description": self.description}
        if self.is_categorical:
            out["categories"] = list(self.categories)
            out["codes"] = list(self.codes)
        if self.template:
            out["template"] = self.template
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            categories=tuple(d.get("categories", ())),
            pruned=bool(d.get("pruned", False)),
            description=d.get("description", ""),
            codes=tuple(d.get("codes", ())),
            template=d.get("template", ""),
        )


@dataclass(frozen=True)
class FeatureSchema:
    specs: tuple
    label_name: str = "GPA-derived risk"

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        names = [s.name for s in self.specs]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate feature names: {dupes}")

    def __getitem__(self, name: str) -> FeatureSpec:
        for spec in self.specs:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(s.name == name for s in self.specs)

    @property
    def names(self) -> list:
        return [s.name for s in self.specs]

    @property
    def active(self) -> list:
        """Unpruned specs, in declared order; these are the model features."""
        return [s for s in self.specs if not s.pruned]

    @property
    def active_names(self) -> list:
        return [s.name for s in self.active]

    @property
    def pruned_names(self) -> list:
        return [s.name for s in self.specs if s.pruned]

    def with_pruned(self, names: Iterable[str]) -> "FeatureSchema":
        """Return a copy with ``names`` additionally pruned (drop-and-retrain)."""
        names = set(names)
        unknown = names - set(self.names)
        if unknown:
            raise SchemaError(f"unknown features: {sorted(unknown)}")
        specs = [FeatureSpec(**{**s.__dict__, "pruned": s.pruned or s.name in names})
                 for s in self.specs]
        return FeatureSchema(specs, self.label_name)

    def to_dict(self) -> dict:
        return {"label_name": self.label_name, "specs": [s.to_dict() for s in self.specs]}

    @classmethod
    def from_dict(cls, d) -> "FeatureSchema":
        if isinstance(d, list):
            d = {"specs": d}
        return cls(tuple(FeatureSpec.from_dict(s) for s in d["specs"]),
                   d.get("label_name", "GPA-derived risk"))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def save_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def derive_label(gpa: float, row=None) -> int:
    """Map a GPA on the 0-5 scale to the risk label (1 iff GPA < 2)."""
    gpa = float(gpa)
    if not (GPA_MIN <= gpa <= GPA_MAX):
        raise DomainError(f"GPA {gpa!r} outside [0, 5] (row={row})")
    return int(gpa < RISK_GPA_THRESHOLD)


def encode_value(raw: str, spec: FeatureSpec) -> float:
    return spec.encode(raw)


_FREQ = ("never", "seldom", "often", "always")
_PROVINCES = (
    "Liaoning", "Beijing", "Jilin", "Heilongjiang", "Hebei", "Shandong", "Henan",
    "Shanxi", "Inner Mongolia", "Tianjin", "Jiangsu", "Zhejiang", "Anhui", "Hubei",
    "Hunan", "Sichuan", "Guangdong", "Fujian", "Yunnan",
)
_ETHNICITIES = ("Han", "Mongolian", "Manchu", "Hui", "Korean", "Zhuang", "Tujia", "Miao")
_ZODIAC = ("Aries", "Taurus", "Gemini", "Cancer", "Leo", "Virgo", "Libra",
           "Scorpio", "Sagittarius", "Capricorn", "Aquarius", "Pisces")
_NO_YES = ("No", "Yes")


def _num(name, description, template="", pruned=False):
    return FeatureSpec(name, NUMERIC, pruned=pruned, description=description, template=template)


def _cat(name, description, categories, pruned=False, codes=(), template=""):
    return FeatureSpec(name, CATEGORICAL, tuple(categories), pruned, description, tuple(codes), template)


def default_schema() -> FeatureSchema:
    """The 36-variable grade-group schema with the ten weak variables pruned."""
    exam = "{description} exceeds {percentile:.1%} of classmates ({value:g})"
    net = "{description}: {value:.3f} (exceeds {percentile:.1%} of classmates)"
    specs = [
        _num("ExmSumN", "Total entrance-exam score", exam),
        _num("ExamCnN", "Chinese entrance-exam score", exam),
        _num("ExamEnN", "English entrance-exam score", exam),
        _num("ExamMatN", "Maths entrance-exam score", exam),
        _num("ExamProN", "Professional course entrance-exam score", exam),
        _num("DgrCnt", "Quantity of academic partners", net),
        _num("BtwnCnt", "Mobility of academic partners", net),
        _num("EgnCnt", "Quality of academic partners", net),
        _cat("EntrnceTyp", "Entrance type", ("Upgrade", "Common")),
        _cat("Gndr", "Gender", ("Male", "Female")),
        _cat("Age", "Age at entrance", [str(a) for a in range(16, 25)], pruned=True),
        _cat("UrbnRrl", "Urban-rural origin",
             ("rural-fresh", "rural-former", "urban-fresh", "urban-former")),
        _cat("BrthPrvnce", "Birth province", _PROVINCES, pruned=True),
        _cat("Eth", "Ethnicity", _ETHNICITIES, pruned=True),
        _cat("Hrsce", "Horoscope", _ZODIAC, pruned=True),
        _cat("NonRsdnt", "Non-resident", _NO_YES),
        _cat("Gurdn", "Guardian type", ("Parents", "Father", "Mother", "Other"), pruned=True),
        _cat("PltclStts", "Politics status",
             ("Masses", "League member", "Party candidate", "Party member")),
        _cat("Dorm", "Dormitory code", [f"D{i:03d}" for i in range(1, 104)], pruned=True),
        _cat("DrmStyle", "Dormitory study atmosphere", ("for-fun", "lax", "mixed", "for-study"),
             template="Dormitory study atmosphere: {label}"),
        _cat("GftedStdnt", "Gifted student", _NO_YES),
        _cat("Class", "Class code", [f"C{i:02d}" for i in range(1, 15)]),
        _cat("SftSp", "Soft soap", _NO_YES),
        _cat("Truant", "Truant level", _FREQ, template="Skips class: {label}"),
        _cat("Seat", "Seat order", ("front", "middle", "rear"), codes=(1, 2, 3),
             template="Sits at the {label} of the classroom"),
        _cat("Leader", "Student leader", ("None", "Class", "School")),
        _cat("Awrds", "Academic awards", _NO_YES, pruned=True),
        _cat("BkBrrw", "Book borrowing", _FREQ),
        _cat("WrkStdy", "Work study", _NO_YES),
        _cat("Lover", "Relationship count", ("0", "1", "2", "more")),
        _cat("Hair", "Hair amount", ("0", "1", "2", "3", "4"), pruned=True),
        _cat("Tattoo", "Tattoo", _NO_YES, pruned=True),
        _cat("CmpsLn", "Campus loan", _NO_YES, pruned=True),
        _cat("Lpstck", "Lipstick addiction", _FREQ, template="Uses lipstick: {label}"),
        _cat("Smk", "Smoking", _NO_YES),
        _cat("Game", "Game addiction", _FREQ, template="Plays video games: {label}"),
    ]
    return FeatureSchema(tuple(specs))


def interpret(spec: FeatureSpec, value: float, percentile: float | None = None) -> str:
    """Human-readable reading of one stored value using the feature's interpretation template."""
    label = spec.decode(value) if spec.is_categorical else None
    template = spec.template or ("{description}: {label}" if spec.is_categorical
                                 else "{description}: {value:g}")
    if percentile is None and "{percentile" in template:
        template = "{description}: {value:g}"
    return template.format(description=spec.description or spec.name, label=label,
                           value=float(value), percentile=percentile or 0.0, name=spec.name)


def check_names(schema: FeatureSchema, names: Sequence[str]) -> None:
    unknown = [n for n in names if n not in schema]
    if unknown:
        raise SchemaError(f"unknown features {unknown}; valid names: {schema.names}")
