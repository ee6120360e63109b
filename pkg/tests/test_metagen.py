import re
from dataclasses import replace
from datetime import date

import numpy as np
import pytest
from scipy.stats import chisquare

from idsynth.metagen import (Address, IdentityRecord, IssuanceState, IssuedNumbers, MetagenError, augment_address,
                             build_identity, draw_full_name, gen_document_numbers, height_feet, make_dd,
                             sample_dates_and_class, sample_license_class, sample_traits)
from idsynth.rng import stream

NOW = date(2024, 6, 1)


def test_five_feet_fraction():
    rng = np.random.default_rng(0)
    u = rng.random(1_000_000)
    feet = np.fromiter((height_feet(x, "F") for x in u), np.int64, len(u))
    assert abs((feet == 5).mean() - 0.6) <= 0.002


@pytest.mark.parametrize("sex,probs", [("F", (0.6, 0.3, 0.1)), ("M", (0.6, 0.2, 0.2))])
def test_height_distribution_chi_square(sex, probs):
    rng = np.random.default_rng(1)
    n = 1_000_000
    feet = np.fromiter((height_feet(x, sex) for x in rng.random(n)), np.int64, n)
    counts = [(feet == f).sum() for f in (5, 6, 7)]
    assert chisquare(counts, np.array(probs) * n).pvalue > 0.01


def test_traits_follow_metadata(corpus):
    meta = replace(corpus[0], sex_probs=(0.3, 0.7), eye_color_probs={"brown": 0.5, "blue": 0.3, "green": 0.2})
    rng = np.random.default_rng(2)
    n = 20_000
    draws = [sample_traits(rng, meta) for _ in range(n)]
    males = sum(d[0] == "M" for d in draws)
    assert chisquare([males, n - males], [0.3 * n, 0.7 * n]).pvalue > 0.01
    eyes = [sum(d[1] == e for d in draws) for e in ("brown", "blue", "green")]
    assert chisquare(eyes, [0.5 * n, 0.3 * n, 0.2 * n]).pvalue > 0.01
    for sex, _, (feet, inches), weight in draws:
        assert feet in (5, 6, 7) and 0 <= inches < 12
        assert 100 <= weight <= (250 if sex == "M" else 200)


def test_degenerate_sex(corpus):
    meta = replace(corpus[0], sex_probs=(1.0, 0.0))
    rng = np.random.default_rng(3)
    assert {sample_traits(rng, meta)[0] for _ in range(500)} == {"M"}


def test_weight_ranges(corpus):
    rng = np.random.default_rng(4)
    for probs, lo, hi in (((1.0, 0.0), 100, 250), ((0.0, 1.0), 100, 200)):
        meta = replace(corpus[0], sex_probs=probs)
        w = [sample_traits(rng, meta)[3] for _ in range(5000)]
        assert min(w) >= lo and max(w) <= hi
        assert min(w) == lo and max(w) == hi


def test_unnormalized_distribution(corpus):
    with pytest.raises(MetagenError):
        sample_traits(np.random.default_rng(0), replace(corpus[0], sex_probs=(0.9, 0.9)))


def test_dd_format():
    rng = np.random.default_rng(5)
    pat = re.compile(r"^[A-Z0-9]{16}$")
    for _ in range(2000):
        dd = make_dd(rng)
        assert pat.match(dd)
        assert 1 <= sum(c.isalpha() for c in dd) <= 6


def test_distinct_numeric_dlns():
    state = IssuedNumbers()
    rng = np.random.default_rng(6)
    out = [gen_document_numbers(rng, state, "########") for _ in range(5979)]
    assert len({dln for _, dln in out}) == 5979
    assert len({dd for dd, _ in out}) == 5979
    assert all(re.fullmatch(r"\d{8}", dln) for _, dln in out)


def test_alphanumeric_format():
    rng = np.random.default_rng(7)
    for _ in range(200):
        _, dln = gen_document_numbers(rng, IssuedNumbers(), "@##-??##")
        assert re.fullmatch(r"[A-Z]\d\d-[A-Z0-9]{2}\d\d", dln)


def test_numbers_deterministic():
    a = [gen_document_numbers(np.random.default_rng(8), IssuedNumbers(), "########") for _ in range(3)]
    b = [gen_document_numbers(np.random.default_rng(8), IssuedNumbers(), "########") for _ in range(3)]
    assert a == b


def test_pool_exhaustion():
    state = IssuedNumbers()
    rng = np.random.default_rng(9)
    for _ in range(10):
        gen_document_numbers(rng, state, "#")
    with pytest.raises(MetagenError, match="exhausted"):
        gen_document_numbers(rng, state, "#")


def test_dates_examples():
    rng = np.random.default_rng(10)
    for _ in range(2000):
        dob, issue, expiry, _ = sample_dates_and_class(rng, 30, 5, NOW)
        assert dob.year == 1994
        assert expiry.year - issue.year == 5
        assert dob < issue <= expiry
        assert NOW.year - 5 <= issue.year <= NOW.year


def test_issue_2021_expires_2026():
    rng = np.random.default_rng(11)
    seen = False
    for _ in range(500):
        _, issue, expiry, _ = sample_dates_and_class(rng, 40, 5, NOW)
        if issue.year == 2021:
            seen = True
            assert expiry.year == 2026
    assert seen


def test_unsatisfiable_dates():
    # a birth year after the date anchor can never precede an issue date
    with pytest.raises(MetagenError, match="unsatisfiable"):
        sample_dates_and_class(np.random.default_rng(0), -1, 5, NOW)


def test_class_d_fraction():
    rng = np.random.default_rng(12)
    n = 1_000_000
    d = sum(sample_license_class(rng) == "D" for _ in range(n))
    assert abs(d / n - 0.9) <= 0.002


def test_address_augmentation():
    seed_line = "1200 Mesa Verde Rd, Tucson, AZ 85701"
    rng = np.random.default_rng(13)
    a, b = augment_address(rng, seed_line), augment_address(rng, seed_line)
    while a.number == b.number:
        b = augment_address(rng, seed_line)
    assert a.number != b.number
    assert (a.street, a.city, a.region, a.postal_code) == (b.street, b.city, b.region, b.postal_code)
    assert 1 <= len(a.number) <= 4 and a.number[0] != "0"
    assert Address.parse(str(a)) == a


def test_names_without_replacement():
    given, surnames = ("Ann", "Bea"), ("Cole", "Dunn", "Eng")
    used = set()
    rng = np.random.default_rng(14)
    pairs = [draw_full_name(rng, given, surnames, used) for _ in range(6)]
    assert len(set(pairs)) == 6
    with pytest.raises(MetagenError, match="exhausted"):
        draw_full_name(rng, given, surnames, used)


def test_hundred_identities(pack, partition, pools):
    qualified, _ = partition
    state = IssuanceState()
    records = [build_identity(stream(1, "id", i), qualified[i % len(qualified)], pack, pools, state, NOW)
               for i in range(100)]
    assert len({(r.given_name, r.surname) for r in records}) == 100
    assert len({r.license_number for r in records}) == 100
    for r in records:
        assert r.dob < r.issue_date <= r.expiry_date
        assert r.expiry_date.year - r.issue_date.year == pack.validity_years
        assert len(r.document_discriminator) == 16
        assert IdentityRecord.from_dict(r.to_dict()) == r

    again = IssuanceState()
    replay = [build_identity(stream(1, "id", i), qualified[i % len(qualified)], pack, pools, again, NOW)
              for i in range(100)]
    assert [r.to_dict() for r in replay] == [r.to_dict() for r in records]
