"""Dataset audits: diversity (entropy), uniqueness, field dependencies, fidelity and stealthiness."""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .imageio import read_png
from .manifest import ManifestEntry
from .optimize.ssim import DEFAULT, SsimConfig, ssim

ENTROPY_COLUMNS = ("sex", "surname", "given_name", "birth_year", "issue_year", "expiry_year")
UNIQUE_COLUMNS = {"dln": "license_number", "dd": "document_discriminator"}


class QualityError(ValueError):
    pass


def column_entropy(values) -> float:
    """Shannon entropy (bits) of the empirical distribution of `values`."""
    values = list(values)
    if not values:
        raise QualityError("entropy of an empty column")
    n = len(values)
    h = -sum(c / n * math.log2(c / n) for c in Counter(values).values())
    return max(h, 0.0)


@dataclass
class SsimStats:
    mean: float
    std: float
    n: int
    values: list[float] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @classmethod
    def of(cls, values, skipped=()) -> "SsimStats":
        v = [float(x) for x in values]
        if not v:
            return cls(float("nan"), float("nan"), 0, [], list(skipped))
        return cls(float(np.mean(v)), float(np.std(v)), len(v), v, list(skipped))

    def summary(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n, "skipped": self.skipped}


@dataclass
class QualityReport:
    n_records: int
    column_entropies: dict[str, float]
    uniqueness_violations: list[dict]
    dependency_violations: list[tuple[str, str]]
    malformed: list[str] = field(default_factory=list)
    fidelity: SsimStats | None = None
    stealthiness: dict[str, SsimStats] = field(default_factory=dict)

    @property
    def conforming(self) -> bool:
        return not self.uniqueness_violations and not self.dependency_violations

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "column_entropies": self.column_entropies,
            "uniqueness_violations": self.uniqueness_violations,
            "dependency_violations": [list(v) for v in self.dependency_violations],
            "malformed": self.malformed,
            "fidelity": None if self.fidelity is None else self.fidelity.summary(),
            "stealthiness": {k: v.summary() for k, v in sorted(self.stealthiness.items())},
        }

    def write(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _identity_columns(ident: dict) -> dict[str, str]:
    return {
        "sex": ident["sex"],
        "surname": ident["surname"],
        "given_name": ident["given_name"],
        "birth_year": ident["dob"][:4],
        "issue_year": ident["issue_date"][:4],
        "expiry_year": ident["expiry_date"][:4],
    }


def check_dependencies(ident: dict) -> list[str]:
    """Names of the violated rules for one identity record."""
    dob = date.fromisoformat(ident["dob"])
    issue = date.fromisoformat(ident["issue_date"])
    expiry = date.fromisoformat(ident["expiry_date"])
    bad = []
    if not dob < issue:
        bad.append("dob_before_issue")
    if not issue <= expiry:
        bad.append("issue_not_after_expiry")
    validity = int(ident.get("validity_years") or 0)
    if validity and expiry.year - issue.year != validity:
        bad.append("expiry_minus_issue_equals_validity")
    return bad


def audit_dataset(entries) -> QualityReport:
    """Audit the genuine records of a manifest (fraud variants share their genuine identity)."""
    columns: dict[str, list[str]] = defaultdict(list)
    seen: dict[tuple[str, str, str], list[str]] = defaultdict(list)
    dependency, malformed = [], []
    n = 0
    for e in entries:
        if isinstance(e, dict):
            e = ManifestEntry.from_dict(e)
        if e.is_fraud or e.privacy is not None or e.composition is not None:
            continue
        n += 1
        try:
            cols = _identity_columns(e.identity)
            for k, v in cols.items():
                columns[k].append(v)
            for name, key in UNIQUE_COLUMNS.items():
                seen[(e.pack_id, name, e.identity[key])].append(e.doc_id)
            for rule in check_dependencies(e.identity):
                dependency.append((e.doc_id, rule))
        except (KeyError, TypeError, ValueError) as err:
            malformed.append(f"{e.doc_id}: {err}")
    uniqueness = [{"pack_id": p, "field": f, "value": v, "doc_ids": ids}
                  for (p, f, v), ids in sorted(seen.items()) if len(ids) > 1]
    entropies = {k: column_entropy(columns[k]) for k in ENTROPY_COLUMNS if columns[k]}
    return QualityReport(n, entropies, uniqueness, dependency, malformed)


def ssim_report(pairs, cfg: SsimConfig = DEFAULT) -> SsimStats:
    """SSIM over (image, reference) pairs; mismatched pairs are skipped and reported by index."""
    values, skipped = [], []
    for i, (a, b) in enumerate(pairs):
        if np.shape(a) != np.shape(b):
            skipped.append(f"pair {i}: {np.shape(a)} vs {np.shape(b)}")
            continue
        values.append(ssim(a, b, cfg))
    return SsimStats.of(values, skipped)


def stealthiness_report(entries, root: str | Path, cfg: SsimConfig = DEFAULT) -> dict[str, SsimStats]:
    """SSIM of each fraud image against its genuine original, grouped by fraud type."""
    root = Path(root)
    entries = [ManifestEntry.from_dict(e) if isinstance(e, dict) else e for e in entries]
    genuine = {e.doc_id: e for e in entries if not e.is_fraud}
    groups: dict[str, list[float]] = defaultdict(list)
    skipped: dict[str, list[str]] = defaultdict(list)
    cache: dict[str, np.ndarray] = {}
    for e in entries:
        if not e.is_fraud:
            continue
        ftype = e.fraud["fraud_type"]
        g = genuine.get(e.genuine_id or "")
        if g is None:
            skipped[ftype].append(f"{e.doc_id}: genuine record missing")
            continue
        if g.doc_id not in cache:
            cache[g.doc_id] = read_png(root / g.image_path, "RGB")
        img = read_png(root / e.image_path, "RGB")
        if img.shape != cache[g.doc_id].shape:
            skipped[ftype].append(f"{e.doc_id}: dimension mismatch")
            continue
        groups[ftype].append(ssim(img, cache[g.doc_id], cfg))
    return {k: SsimStats.of(groups.get(k, []), skipped.get(k, [])) for k in sorted(set(groups) | set(skipped))}


def per_pair_rows(stats: dict[str, SsimStats]) -> list[tuple[str, int, float]]:
    return [(k, i, v) for k, s in sorted(stats.items()) for i, v in enumerate(s.values)]


def report_dict(report: QualityReport) -> dict:
    return asdict(report)
