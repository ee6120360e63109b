import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idsynth.imageio import write_png
from idsynth.manifest import ManifestEntry
from idsynth.quality import (QualityError, SsimStats, audit_dataset, check_dependencies, column_entropy,
                             ssim_report, stealthiness_report)


def _entry(i, ident, **kw):
    return ManifestEntry(f"p-{i:06d}-genuine", f"p/{i:06d}/genuine.png", ident, i, "p", i, **kw)


@pytest.fixture
def records(identities):
    return [_entry(i, ident.to_dict()) for i, ident in enumerate(identities)]


def test_entropy_examples():
    assert column_entropy(["x"] * 9) == 0.0
    assert column_entropy(list("abcd") * 3) == pytest.approx(2.0, abs=1e-12)
    assert column_entropy([f"{m:02d}" for m in range(1, 13)]) == pytest.approx(3.584962500721156, abs=1e-6)
    assert column_entropy([f"{m:02d}" for m in range(1, 13)]) == pytest.approx(math.log2(12), abs=1e-12)
    with pytest.raises(QualityError):
        column_entropy([])


@given(st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=60))
def test_entropy_bounds(values):
    h = column_entropy(values)
    assert 0 <= h <= math.log2(len(set(values))) + 1e-12


def test_generated_identities_conform(records):
    rep = audit_dataset(records)
    assert rep.n_records == len(records)
    assert rep.conforming and not rep.malformed
    assert set(rep.column_entropies) == {"sex", "surname", "given_name", "birth_year", "issue_year", "expiry_year"}
    assert audit_dataset(records).to_dict() == rep.to_dict()


def test_duplicate_dln_is_one_violation(records):
    for e in records[:2]:
        e.identity = {**e.identity, "license_number": "668174749"}
    rep = audit_dataset(records)
    assert len(rep.uniqueness_violations) == 1
    v = rep.uniqueness_violations[0]
    assert v["field"] == "dln" and v["value"] == "668174749" and len(v["doc_ids"]) == 2


def test_dob_equal_issue_is_one_violation(records):
    ident = records[0].identity
    records[0].identity = {**ident, "dob": ident["issue_date"]}
    rep = audit_dataset(records)
    assert rep.dependency_violations == [(records[0].doc_id, "dob_before_issue")]


def test_validity_rule():
    ident = {"dob": "1990-01-01", "issue_date": "2020-03-01", "expiry_date": "2026-03-01", "validity_years": 5}
    assert check_dependencies(ident) == ["expiry_minus_issue_equals_validity"]
    assert check_dependencies({**ident, "expiry_date": "2025-03-01"}) == []
    assert "issue_not_after_expiry" in check_dependencies({**ident, "expiry_date": "2019-01-01"})


def test_fraud_and_malformed_records(records):
    fraud = _entry(99, records[0].identity, fraud={"fraud_type": "text_replacement"})
    broken = _entry(100, {"sex": "F"})
    rep = audit_dataset([*records, fraud, broken])
    assert rep.n_records == len(records) + 1
    assert len(rep.malformed) == 1 and rep.conforming


def test_ssim_report_identity_and_mismatch():
    a = np.random.default_rng(0).integers(0, 256, (30, 40, 3), dtype=np.uint8)
    s = ssim_report([(a, a.copy()), (a, a[:20])])
    assert s.mean == 1.0 and s.n == 1 and len(s.skipped) == 1
    assert math.isnan(SsimStats.of([]).mean)


def test_stealthiness_groups(tmp_path, genuine):
    img = genuine.pixels
    dark = img.copy()
    dark[100:200, 200:400] //= 3
    write_png(tmp_path / "g.png", img)
    write_png(tmp_path / "same.png", img)
    write_png(tmp_path / "dark.png", dark)
    g = ManifestEntry("g", "g.png", {}, 0, "p", 0)
    f1 = ManifestEntry("f1", "same.png", {}, 0, "p", 0, "a", {"fraud_type": "portrait_substitution"}, genuine_id="g")
    f2 = ManifestEntry("f2", "dark.png", {}, 0, "p", 0, "b", {"fraud_type": "text_replacement"}, genuine_id="g")
    f3 = ManifestEntry("f3", "dark.png", {}, 0, "p", 0, "c", {"fraud_type": "mixed"}, genuine_id="missing")
    stats = stealthiness_report([g, f1, f2, f3], tmp_path)
    assert stats["portrait_substitution"].mean == 1.0
    assert stats["portrait_substitution"].mean > stats["text_replacement"].mean
    assert stats["mixed"].n == 0 and stats["mixed"].skipped


def test_report_write(records, tmp_path):
    rep = audit_dataset(records)
    rep.write(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["n_records"] == len(records) and d["uniqueness_violations"] == []
