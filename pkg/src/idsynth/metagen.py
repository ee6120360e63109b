"""Identity metadata generation conditioned on portrait metadata."""
from __future__ import annotations

import calendar
import re
import string
from dataclasses import asdict, dataclass, field
from datetime import date

import numpy as np

from .assets import PortraitAsset, TemplatePack
from .pools import PoolSet

LETTERS = string.ascii_uppercase
DD_LENGTH = 16
DD_MAX_LETTERS = 6
CLASSES_NON_D = ("A", "B", "C")
MAX_DATE_RETRIES = 100

_ADDRESS_PARSE = re.compile(r"^(\d+)\s+(.+?),\s*(.+?),\s*([A-Za-z]{2,3})\s+(\S+)$")


class MetagenError(RuntimeError):
    pass


@dataclass(frozen=True)
class Address:
    number: str
    street: str
    city: str
    region: str
    postal_code: str

    @classmethod
    def parse(cls, line: str) -> "Address":
        m = _ADDRESS_PARSE.match(line.strip())
        if not m:
            raise MetagenError(f"unparseable address {line!r}")
        return cls(*m.groups())

    @property
    def line1(self) -> str:
        return f"{self.number} {self.street}"

    @property
    def line2(self) -> str:
        return f"{self.city}, {self.region} {self.postal_code}"

    def __str__(self) -> str:
        return f"{self.line1}, {self.line2}"


@dataclass(frozen=True)
class IdentityRecord:
    given_name: str
    surname: str
    sex: str
    eye_color: str
    height: tuple[int, int]  # feet, inches
    weight_lb: int
    dob: date
    issue_date: date
    expiry_date: date
    document_discriminator: str
    license_number: str
    license_class: str
    address: Address
    portrait_id: str
    ethnicity: str = ""
    age: int = 0
    validity_years: int = 0

    @property
    def full_name(self) -> str:
        return f"{self.given_name} {self.surname}"

    def field_values(self, date_format: str = "%m/%d/%Y") -> dict[str, str]:
        """Flat source-name -> text mapping used by the layout's `source` keys."""
        feet, inches = self.height
        return {
            "given_name": self.given_name,
            "surname": self.surname,
            "full_name": self.full_name,
            "sex": self.sex,
            "eye_color": self.eye_color.upper()[:3],
            "height": f"{feet}'-{inches:02d}\"",
            "weight": f"{self.weight_lb} lb",
            "dob": self.dob.strftime(date_format),
            "issue_date": self.issue_date.strftime(date_format),
            "expiry_date": self.expiry_date.strftime(date_format),
            "dd": self.document_discriminator,
            "dln": self.license_number,
            "class": self.license_class,
            "address": str(self.address),
            "address_line1": self.address.line1,
            "address_line2": self.address.line2,
            "region": self.address.region,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("dob", "issue_date", "expiry_date"):
            d[k] = getattr(self, k).isoformat()
        d["height"] = list(self.height)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IdentityRecord":
        d = dict(d)
        for k in ("dob", "issue_date", "expiry_date"):
            d[k] = date.fromisoformat(d[k])
        d["height"] = tuple(d["height"])
        d["address"] = Address(**d["address"])
        return cls(**d)


@dataclass
class IssuedNumbers:
    """Numbers already issued in one run (per document type)."""

    dd: set[str] = field(default_factory=set)
    dln: set[str] = field(default_factory=set)


@dataclass
class IssuanceState:
    numbers: IssuedNumbers = field(default_factory=IssuedNumbers)
    used_names: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# traits


def _check_probs(name: str, probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-3:
        raise MetagenError(f"{name} is not a normalized distribution: {list(probs)}")
    return p / p.sum()


def height_feet(u: float, sex: str) -> int:
    if u < 0.6:
        return 5
    if sex == "F":
        return 6 if u < 0.9 else 7
    return 6 if u < 0.8 else 7


WEIGHT_RANGE = {"F": (100, 200), "M": (100, 250)}


def sample_traits(rng: np.random.Generator, meta: PortraitAsset):
    """(sex, eye_color, (feet, inches), weight_lb) sampled from the portrait's metadata."""
    p_male, p_female = _check_probs("sex_probs", meta.sex_probs)
    eye_names = list(meta.eye_color_probs)
    eye_p = _check_probs("eye_color_probs", [meta.eye_color_probs[k] for k in eye_names])

    sex = "M" if rng.random() < p_male else "F"
    eye = eye_names[int(rng.choice(len(eye_names), p=eye_p))]
    feet = height_feet(rng.random(), sex)
    inches = int(rng.integers(0, 12))
    lo, hi = WEIGHT_RANGE[sex]
    # uniform within the range; no height correlation is specified
    weight = int(rng.integers(lo, hi + 1))
    return sex, eye, (feet, inches), weight


# ---------------------------------------------------------------------------
# document numbers


def make_dd(rng: np.random.Generator, length: int = DD_LENGTH) -> str:
    n_letters = int(rng.integers(1, DD_MAX_LETTERS + 1))
    return _mix_slots(rng, length, n_letters)


def _mix_slots(rng: np.random.Generator, n_slots: int, n_letters: int) -> str:
    chars = [str(d) for d in rng.integers(0, 10, n_slots)]
    positions = rng.choice(n_slots, size=n_letters, replace=False)
    letters = rng.integers(0, 26, n_letters)
    for pos, li in zip(positions, letters):
        chars[int(pos)] = LETTERS[int(li)]
    return "".join(chars)


def format_capacity(fmt: str) -> int | None:
    """Number of distinct values for a purely numeric format, else None."""
    if "@" in fmt or "?" in fmt:
        return None
    return 10 ** fmt.count("#")


def _fill_numeric(fmt: str, value: int) -> str:
    digits = str(value).zfill(fmt.count("#"))
    it = iter(digits)
    return "".join(next(it) if c == "#" else c for c in fmt)


def _fill_alnum(rng: np.random.Generator, fmt: str) -> str:
    """'#' digit, '@' letter, '?' mixed slots filled like a document discriminator, else literal."""
    n_mixed = fmt.count("?")
    mixed = ""
    if n_mixed:
        mixed = _mix_slots(rng, n_mixed, int(rng.integers(1, min(DD_MAX_LETTERS, n_mixed) + 1)))
    it = iter(mixed)
    out = []
    for c in fmt:
        if c == "#":
            out.append(str(int(rng.integers(0, 10))))
        elif c == "@":
            out.append(LETTERS[int(rng.integers(0, 26))])
        elif c == "?":
            out.append(next(it))
        else:
            out.append(c)
    return "".join(out)


def gen_document_numbers(rng: np.random.Generator, pool_state: IssuedNumbers, fmt: str) -> tuple[str, str]:
    """(document_discriminator, license_number), both unique within `pool_state`."""
    capacity = format_capacity(fmt)
    if capacity is not None and len(pool_state.dln) >= capacity:
        raise MetagenError(f"license number pool exhausted ({capacity} values)")

    while True:
        dd = make_dd(rng)
        if dd not in pool_state.dd:
            break
    for _ in range(10_000):
        if capacity is not None:
            dln = _fill_numeric(fmt, int(rng.integers(0, capacity)))
        else:
            dln = _fill_alnum(rng, fmt)
        if dln not in pool_state.dln:
            break
    else:
        raise MetagenError(f"could not draw a fresh license number for format {fmt!r}")
    pool_state.dd.add(dd)
    pool_state.dln.add(dln)
    return dd, dln


# ---------------------------------------------------------------------------
# dates and class


def _random_day(rng: np.random.Generator, year: int) -> date:
    month = int(rng.integers(1, 13))
    day = int(rng.integers(1, calendar.monthrange(year, month)[1] + 1))
    return date(year, month, day)


def sample_license_class(rng: np.random.Generator) -> str:
    if rng.random() > 0.9:
        return CLASSES_NON_D[int(rng.integers(0, 3))]
    return "D"


def sample_dates_and_class(rng: np.random.Generator, age: int, validity_years: int, now: date):
    """(dob, issue_date, expiry_date, license_class)."""
    dob = _random_day(rng, now.year - int(age))
    for _ in range(MAX_DATE_RETRIES):
        k = int(rng.integers(0, validity_years + 1))
        issue = _random_day(rng, now.year - k)
        expiry = _random_day(rng, issue.year + validity_years)
        if dob < issue <= expiry:
            break
    else:
        raise MetagenError("date constraint unsatisfiable")
    return dob, issue, expiry, sample_license_class(rng)


# ---------------------------------------------------------------------------
# names and addresses


def augment_address(rng: np.random.Generator, line: str) -> Address:
    """Seed address with a fresh 1-4 digit street number."""
    addr = Address.parse(line)
    n_digits = int(rng.integers(1, 5))
    number = int(rng.integers(10 ** (n_digits - 1) if n_digits > 1 else 1, 10**n_digits))
    return Address(str(number), addr.street, addr.city, addr.region, addr.postal_code)


def draw_full_name(rng: np.random.Generator, given: tuple[str, ...], surnames: tuple[str, ...],
                   used: set) -> tuple[str, str]:
    """Uniform draw without replacement over all (given, surname) combinations."""
    total = len(given) * len(surnames)
    if len(used) >= total:
        raise MetagenError("name-combination pool exhausted")
    for _ in range(64):
        pair = (int(rng.integers(len(given))), int(rng.integers(len(surnames))))
        if pair not in used:
            break
    else:
        free = [(i, j) for i in range(len(given)) for j in range(len(surnames)) if (i, j) not in used]
        pair = free[int(rng.integers(len(free)))]
    used.add(pair)
    return given[pair[0]], surnames[pair[1]]


def build_identity(rng: np.random.Generator, portrait: PortraitAsset, pack: TemplatePack, pools: PoolSet,
                   state: IssuanceState, now: date) -> IdentityRecord:
    sex, eye, height, weight = sample_traits(rng, portrait)
    given_pool = pools.given_names(portrait.ethnicity, sex, pack.language)
    surname_pool = pools.surnames(portrait.ethnicity, pack.language)
    used = state.used_names.setdefault((given_pool.key, surname_pool.key), set())
    given, surname = draw_full_name(rng, given_pool.entries, surname_pool.entries, used)
    dd, dln = gen_document_numbers(rng, state.numbers, pack.dln_format)
    age = int(portrait.age)
    dob, issue, expiry, klass = sample_dates_and_class(rng, age, pack.validity_years, now)
    addresses = pools.addresses(pack.region).entries
    address = augment_address(rng, addresses[int(rng.integers(len(addresses)))])
    return IdentityRecord(
        given_name=given,
        surname=surname,
        sex=sex,
        eye_color=eye,
        height=height,
        weight_lb=weight,
        dob=dob,
        issue_date=issue,
        expiry_date=expiry,
        document_discriminator=dd,
        license_number=dln,
        license_class=klass,
        address=address,
        portrait_id=portrait.id,
        ethnicity=portrait.ethnicity,
        age=age,
        validity_years=pack.validity_years,
    )
