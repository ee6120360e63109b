"""The six fraud variants. Each injector returns a new DocumentImage plus a FraudRecord that
lists every region it touched, so locality can be checked by pixel diff."""
from __future__ import annotations

import calendar
from dataclasses import dataclass, field
from datetime import date

import numpy as np
from PIL import Image, ImageEnhance

from ..assets import FieldSpec, PortraitAsset, TemplatePack
from ..metagen import IssuedNumbers, augment_address, gen_document_numbers
from ..overlay import OverlayParams
from ..pools import PoolSet
from ..render import (DocumentImage, TextOverflowError, composite_ghost, composite_portrait, render_text_field,
                      template_rgb, text_mask)
from .morph import MorphConfig, morph_faces

FRAUD_TYPES = ("face_morph", "portrait_substitution", "text_replacement", "mixed", "inpaint_rewrite",
               "crop_replace")
EASY_PROBABILITY = 0.65
SAME_FIELD_PROBABILITY = 0.95
SHIFT_RANGE = 4
EASY_AGE_MARGIN = 10
MAX_AGE_SHIFT = 20
BACKGROUND_FACTORS = (0.85, 1.15)
SIZE_FACTORS = (0.9, 1.1)
FONT_SWITCH_PROBABILITY = 0.5
# standalone text replacement rewrites every attribute group, the mixed variant only one
TEXT_ATTRIBUTES = 4
MIXED_TEXT_ATTRIBUTES = 1

# attribute -> field sources it rewrites
ATTRIBUTES = {
    "name": ("given_name", "surname", "full_name"),
    "dob": ("dob",),
    "address": ("address", "address_line1", "address_line2"),
    "number": ("dln", "dd"),
}
INCONSISTENT_ATTRIBUTES = ("name", "dob")


class FraudError(ValueError):
    pass


@dataclass
class ChangedField:
    field_id: str
    original_text: str | None
    new_text: str | None
    original_params: dict | None = None
    new_params: dict | None = None

    def to_dict(self) -> dict:
        return {"field_id": self.field_id, "original_text": self.original_text, "new_text": self.new_text,
                "original_params": self.original_params, "new_params": self.new_params}


@dataclass
class FraudRecord:
    fraud_type: str
    level: str | None = None
    morph_weight: float | None = None
    partner_portrait_id: str | None = None
    partner_doc_id: str | None = None
    original_portrait_id: str | None = None
    changed_fields: list[ChangedField] = field(default_factory=list)
    shift: tuple[int, int] | None = None
    source_field: str | None = None
    target_field: str | None = None
    face_fraud: str | None = None
    background_factors: tuple[float, float] | None = None
    regions: list[tuple[int, int, int, int]] = field(default_factory=list)
    sub_records: list["FraudRecord"] = field(default_factory=list)

    def __post_init__(self):
        if self.fraud_type not in FRAUD_TYPES:
            raise FraudError(f"unknown fraud type {self.fraud_type!r}")

    def to_dict(self) -> dict:
        d = {"fraud_type": self.fraud_type}
        for k in ("level", "morph_weight", "partner_portrait_id", "partner_doc_id", "original_portrait_id",
                  "source_field", "target_field", "face_fraud"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        if self.shift is not None:
            d["shift"] = list(self.shift)
        if self.background_factors is not None:
            d["background_factors"] = list(self.background_factors)
        if self.changed_fields:
            d["changed_fields"] = [c.to_dict() for c in self.changed_fields]
        d["regions"] = [list(r) for r in self.regions]
        if self.sub_records:
            d["sub_records"] = [r.to_dict() for r in self.sub_records]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FraudRecord":
        d = dict(d)
        d["changed_fields"] = [ChangedField(**c) for c in d.get("changed_fields", [])]
        d["sub_records"] = [cls.from_dict(r) for r in d.get("sub_records", [])]
        d["regions"] = [tuple(r) for r in d.get("regions", [])]
        for k in ("shift", "background_factors"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


# ---------------------------------------------------------------------------
# helpers


def _pack(doc: DocumentImage, pack: TemplatePack | None = None) -> TemplatePack:
    pack = pack or doc.pack
    if pack is None:
        raise FraudError("document carries no template pack")
    return pack


def _expanded(pack: TemplatePack, f: FieldSpec) -> tuple[int, int, int, int]:
    W, H = pack.size
    s = pack.slack if f.kind == "text" else 0
    x0, y0 = max(f.x - s, 0), max(f.y - s, 0)
    x1, y1 = min(f.x + f.w + s, W), min(f.y + f.h + s, H)
    return (x0, y0, x1 - x0, y1 - y0)


def _sl(box):
    x, y, w, h = box
    return slice(y, y + h), slice(x, x + w)


def _intersects(a, b) -> bool:
    return a[0] < b[0] + b[2] and b[0] < a[0] + a[2] and a[1] < b[1] + b[3] and b[1] < a[1] + a[3]


def _redraw_image_field(doc: DocumentImage, pack: TemplatePack, f: FieldSpec, portrait_rgba: np.ndarray) -> None:
    """Restore the template under an image field, composite a new portrait/ghost, then redraw any
    overlapping text, touching pixels inside the field box only."""
    box = _expanded(pack, f)
    scratch = doc.pixels.copy()
    scratch[_sl(box)] = template_rgb(pack)[_sl(box)]
    if f.kind == "portrait":
        composite_portrait(scratch, f, portrait_rgba)
    else:
        composite_ghost(scratch, f, portrait_rgba, pack.ghost_opacity)
    for t in pack.fields_of("text"):
        if t.source in doc.values and _intersects(_expanded(pack, t), box):
            render_text_field(scratch, pack, t, doc.values[t.source], doc.params[t.id])
    doc.pixels[_sl(box)] = scratch[_sl(box)]


def _adjust_background(patch: np.ndarray, contrast: float, saturation: float) -> np.ndarray:
    img = Image.fromarray(patch)
    img = ImageEnhance.Contrast(img).enhance(contrast)
    img = ImageEnhance.Color(img).enhance(saturation)
    return np.asarray(img).copy()


def _fit_params(pack: TemplatePack, f: FieldSpec, text: str, params: OverlayParams) -> OverlayParams:
    """Shrink the size until the text fits its slack-expanded box."""
    for _ in range(40):
        try:
            text_mask(text, pack.font_path(params.font_id), params, f.w, f.h, pack.slack)
            return params
        except TextOverflowError:
            params = params.with_(size_pt=round(params.size_pt * 0.93, 2), offset=(0.0, 0.0))
    raise FraudError(f"cannot fit {text!r} into field {f.id}")


def _rewrite_field(doc: DocumentImage, pack: TemplatePack, f: FieldSpec, text: str, params: OverlayParams,
                   factors: tuple[float, float] | None = None) -> tuple[int, int, int, int]:
    box = _expanded(pack, f)
    patch = template_rgb(pack)[_sl(box)]
    if factors is not None:
        patch = _adjust_background(patch, *factors)
    doc.pixels[_sl(box)] = patch
    params = _fit_params(pack, f, text, params)
    render_text_field(doc.pixels, pack, f, text, params)
    doc.params[f.id] = params
    doc.values[f.source] = text
    return box


# ---------------------------------------------------------------------------
# parameter samplers (cheap, used directly by the statistics checks)


def plan_text_level(rng: np.random.Generator, level: str = "auto") -> str:
    if level == "auto":
        return "easy" if rng.random() < EASY_PROBABILITY else "hard"
    if level not in ("easy", "hard"):
        raise FraudError(f"unknown level {level!r}")
    return level


def plan_mixed_face(rng: np.random.Generator) -> str:
    return "face_morph" if rng.random() < 0.5 else "portrait_substitution"


def plan_shift(rng: np.random.Generator, s: int = SHIFT_RANGE) -> tuple[int, int]:
    choices = np.array([v for v in range(-s, s + 1) if v != 0])
    return int(rng.choice(choices)), int(rng.choice(choices))


def plan_crop_replace(rng: np.random.Generator, field_ids, s: int = SHIFT_RANGE):
    """(target field on doc_a, source field on doc_b, same-field branch taken, shift)."""
    field_ids = list(field_ids)
    if not field_ids:
        raise FraudError("no PII fields to crop")
    same = bool(rng.random() < SAME_FIELD_PROBABILITY)
    target = field_ids[int(rng.integers(len(field_ids)))]
    source = target if same else field_ids[int(rng.integers(len(field_ids)))]
    return target, source, same, plan_shift(rng, s)


def plan_attributes(rng: np.random.Generator, level: str, available, n: int) -> list[str]:
    """Attributes to rewrite; easy level always includes at least one inconsistent one."""
    available = [a for a in ATTRIBUTES if a in available]
    inconsistent = [a for a in INCONSISTENT_ATTRIBUTES if a in available]
    if level == "easy":
        if not inconsistent:
            raise FraudError("easy level needs a name or DOB field")
        first = inconsistent[int(rng.integers(len(inconsistent)))]
    else:
        first = available[int(rng.integers(len(available)))]
    rest = [a for a in available if a != first]
    k = min(max(n - 1, 0), len(rest))
    picked = [rest[i] for i in sorted(rng.choice(len(rest), size=k, replace=False))] if k else []
    return [first] + picked


# ---------------------------------------------------------------------------
# value generators


def _shift_years(d: date, years: int) -> date:
    y = d.year + years
    return d.replace(year=y, day=min(d.day, calendar.monthrange(y, d.month)[1]))


def altered_dob(rng: np.random.Generator, dob: date, age: int, level: str) -> date:
    """Easy: implied age off by at least EASY_AGE_MARGIN years. Hard: within two years."""
    if level == "easy":
        s = int(rng.integers(EASY_AGE_MARGIN, MAX_AGE_SHIFT + 1))
        older = age - s < 16 or rng.random() < 0.5
        return _shift_years(dob, -s if older else s)
    s = int(rng.integers(-2, 3))
    month = int(rng.integers(1, 13))
    year = dob.year + s
    return date(year, month, int(rng.integers(1, calendar.monthrange(year, month)[1] + 1)))


def _new_name(rng, pools: PoolSet, ethnicity: str, sex: str, language: str, level: str, old: tuple[str, str]):
    name_sex = {"F": "M", "M": "F"}[sex] if level == "easy" else sex
    given = pools.given_names(ethnicity, name_sex, language).entries
    surnames = pools.surnames(ethnicity, language).entries
    for _ in range(50):
        g = given[int(rng.integers(len(given)))]
        s = surnames[int(rng.integers(len(surnames)))]
        if (g, s) != old:
            return g, s
    return g, s


def _new_values(rng, attr: str, doc: DocumentImage, pack: TemplatePack, pools: PoolSet, level: str,
                portrait: PortraitAsset | None) -> dict[str, str]:
    ident = doc.identity
    v = doc.values
    if attr == "name":
        sex = ident.sex if ident is not None else v.get("sex", "F")
        eth = ident.ethnicity if ident is not None and ident.ethnicity else (portrait.ethnicity if portrait else "white")
        g, s = _new_name(rng, pools, eth, sex, pack.language, level, (v.get("given_name"), v.get("surname")))
        return {"given_name": g, "surname": s, "full_name": f"{g} {s}"}
    if attr == "dob":
        dob = ident.dob if ident is not None else None
        if dob is None:
            raise FraudError("DOB rewrite needs the identity record")
        age = ident.age
        if not age and portrait is not None:
            age = int(round(portrait.age))
        return {"dob": altered_dob(rng, dob, age, level).strftime(pack.date_format)}
    if attr == "address":
        lines = pools.addresses(pack.region).entries
        a = augment_address(rng, lines[int(rng.integers(len(lines)))])
        return {"address": str(a), "address_line1": a.line1, "address_line2": a.line2}
    if attr == "number":
        used = IssuedNumbers({v.get("dd", "")}, {v.get("dln", "")})
        dd, dln = gen_document_numbers(rng, used, pack.dln_format)
        return {"dd": dd, "dln": dln}
    raise FraudError(f"unknown attribute {attr!r}")


def _perturbed_params(rng, pack: TemplatePack, p: OverlayParams) -> OverlayParams:
    font = p.font_id
    others = [f for f in pack.fonts if f != p.font_id]
    if others and rng.random() < FONT_SWITCH_PROBABILITY:
        font = others[int(rng.integers(len(others)))]
    size = round(p.size_pt * rng.uniform(*SIZE_FACTORS), 2)
    offset = (round(p.offset[0] + rng.uniform(-1, 1), 2), round(p.offset[1] + rng.uniform(-1, 1), 2))
    return p.with_(font_id=font, size_pt=size, offset=offset)


# ---------------------------------------------------------------------------
# injectors


def inject_face_morph(doc: DocumentImage, portrait: PortraitAsset, partner: PortraitAsset,
                      cfg: MorphConfig = MorphConfig(), rng: np.random.Generator | None = None,
                      pack: TemplatePack | None = None) -> tuple[DocumentImage, FraudRecord]:
    """Replace portrait and ghost with a morph of the holder and a look-alike partner."""
    pack = _pack(doc, pack)
    if partner.id == portrait.id:
        raise FraudError("morph partner must differ from the holder")
    morph = morph_faces(portrait, partner, cfg)
    out = doc.copy()
    regions = []
    for f in pack.fields:
        if f.kind in ("portrait", "ghost"):
            _redraw_image_field(out, pack, f, morph)
            regions.append(_expanded(pack, f))
    out.portrait_id = f"morph({portrait.id},{partner.id})"
    rec = FraudRecord("face_morph", morph_weight=cfg.blend, partner_portrait_id=partner.id,
                      original_portrait_id=portrait.id, regions=regions)
    return out, rec


def inject_portrait_substitution(doc: DocumentImage, disqualified_pool, rng: np.random.Generator,
                                 pack: TemplatePack | None = None) -> tuple[DocumentImage, FraudRecord]:
    """Swap the portrait for a uniformly drawn photo that fails the photo-quality rules."""
    pack = _pack(doc, pack)
    pool = list(disqualified_pool)
    if not pool:
        raise FraudError("empty disqualified-portrait pool")
    sub = pool[int(rng.integers(len(pool)))]
    out = doc.copy()
    regions = []
    for f in pack.fields_of("portrait"):
        _redraw_image_field(out, pack, f, sub.image)
        regions.append(_expanded(pack, f))
    out.portrait_id = sub.id
    rec = FraudRecord("portrait_substitution", partner_portrait_id=sub.id, original_portrait_id=doc.portrait_id,
                      regions=regions)
    return out, rec


def inject_text_replacement(doc: DocumentImage, identity=None, portrait_meta: PortraitAsset | None = None,
                            level: str = "auto", rng: np.random.Generator | None = None,
                            pools: PoolSet | None = None, n_attributes: int = TEXT_ATTRIBUTES,
                            pack: TemplatePack | None = None) -> tuple[DocumentImage, FraudRecord]:
    """Rewrite PII text with perturbed style on a contrast/saturation-shifted background.

    `n_attributes` attribute groups (name, DOB, address, numbers) are rewritten; every field
    drawing on a rewritten attribute is re-rendered.
    """
    pack = _pack(doc, pack)
    rng = rng if rng is not None else np.random.default_rng()
    pools = pools or PoolSet()
    if identity is not None and doc.identity is None:
        doc = doc.copy()
        doc.identity = identity
    pii = [f for f in pack.fields_of("text") if f.pii and f.source in doc.values]
    if not pii:
        raise FraudError("document has no PII text fields")
    available = {a for a, srcs in ATTRIBUTES.items() if any(f.source in srcs for f in pii)}
    if doc.identity is None:
        available.discard("dob")
    lvl = plan_text_level(rng, level)
    attrs = plan_attributes(rng, lvl, available, n_attributes)
    factors = (round(float(rng.uniform(*BACKGROUND_FACTORS)), 4), round(float(rng.uniform(*BACKGROUND_FACTORS)), 4))
    out = doc.copy()
    changed, regions = [], []
    for attr in attrs:
        new = _new_values(rng, attr, out, pack, pools, lvl, portrait_meta)
        for f in pii:
            if f.source not in new:
                continue
            old_text, old_params = out.values[f.source], out.params[f.id]
            new_params = _perturbed_params(rng, pack, old_params)
            regions.append(_rewrite_field(out, pack, f, new[f.source], new_params, factors))
            changed.append(ChangedField(f.id, old_text, new[f.source], old_params.to_dict(),
                                        out.params[f.id].to_dict()))
        out.values.update(new)
    rec = FraudRecord("text_replacement", level=lvl, changed_fields=changed, background_factors=factors,
                      regions=regions)
    return out, rec


@dataclass
class MixedInputs:
    """What the mixed injector may need: name pools, a morph partner, disqualified photos."""

    portrait: PortraitAsset
    partner: PortraitAsset | None
    disqualified: list[PortraitAsset]
    pools: PoolSet | None = None
    morph: MorphConfig = field(default_factory=MorphConfig)


def inject_mixed(doc: DocumentImage, identity, pools: MixedInputs, rng: np.random.Generator,
                 pack: TemplatePack | None = None, level: str = "auto") -> tuple[DocumentImage, FraudRecord]:
    """Text replacement on one attribute, then a fair coin between face morph and substitution."""
    pack = _pack(doc, pack)
    text_doc, text_rec = inject_text_replacement(doc, identity, pools.portrait, level, rng, pools.pools,
                                                 n_attributes=MIXED_TEXT_ATTRIBUTES, pack=pack)
    face = plan_mixed_face(rng)
    if face == "face_morph":
        if pools.partner is None:
            raise FraudError("mixed fraud drew a morph but no partner is available")
        out, face_rec = inject_face_morph(text_doc, pools.portrait, pools.partner, pools.morph, rng, pack)
    else:
        out, face_rec = inject_portrait_substitution(text_doc, pools.disqualified, rng, pack)
    rec = FraudRecord("mixed", level=text_rec.level, morph_weight=face_rec.morph_weight,
                      partner_portrait_id=face_rec.partner_portrait_id,
                      original_portrait_id=face_rec.original_portrait_id, changed_fields=text_rec.changed_fields,
                      face_fraud=face, background_factors=text_rec.background_factors,
                      regions=text_rec.regions + face_rec.regions, sub_records=[text_rec, face_rec])
    return out, rec


def inject_inpaint_rewrite(doc: DocumentImage, pack: TemplatePack | None = None, identity=None,
                           rng: np.random.Generator | None = None) -> tuple[DocumentImage, FraudRecord]:
    """Erase one text field to the blank template and redraw the same text in another pack font."""
    pack = _pack(doc, pack)
    rng = rng if rng is not None else np.random.default_rng()
    if len(pack.fonts) < 2:
        raise FraudError("inpaint-rewrite needs at least two pack fonts")
    fields = [f for f in pack.fields_of("text") if doc.values.get(f.source)]
    if not fields:
        raise FraudError("no rendered text fields")
    f = fields[int(rng.integers(len(fields)))]
    old = doc.params[f.id]
    others = [x for x in pack.fonts if x != old.font_id]
    new = old.with_(font_id=others[int(rng.integers(len(others)))])
    out = doc.copy()
    text = doc.values[f.source]
    box = _rewrite_field(out, pack, f, text, new)
    rec = FraudRecord("inpaint_rewrite", changed_fields=[ChangedField(f.id, text, text, old.to_dict(),
                                                                      out.params[f.id].to_dict())],
                      regions=[box])
    return out, rec


def crop_regions(pack: TemplatePack) -> list[FieldSpec]:
    return [f for f in pack.fields if f.pii]


def inject_crop_replace(doc_a: DocumentImage, doc_b: DocumentImage, rng: np.random.Generator,
                        shift_range: int = SHIFT_RANGE, partner_doc_id: str | None = None,
                        plan=None) -> tuple[DocumentImage, FraudRecord]:
    """Paste a PII field region cut from doc_b onto doc_a with a small nonzero misalignment."""
    pack = _pack(doc_a)
    if doc_b.pack is not None and doc_b.pack.pack_id != pack.pack_id:
        raise FraudError("crop-replace needs two documents of the same pack")
    if doc_a.pixels.shape != doc_b.pixels.shape:
        raise FraudError("document sizes differ")
    fields = {f.id: f for f in crop_regions(pack)}
    target, source, _, (dx, dy) = plan or plan_crop_replace(rng, list(fields), shift_range)
    src, dst = fields[source], fields[target]
    H, W = doc_a.pixels.shape[:2]
    patch = doc_b.pixels[_sl(src.bbox)]
    x0, y0 = dst.x + dx, dst.y + dy
    # clip the paste rectangle to the document
    px0, py0 = max(x0, 0), max(y0, 0)
    px1, py1 = min(x0 + src.w, W), min(y0 + src.h, H)
    out = doc_a.copy()
    out.pixels[py0:py1, px0:px1] = patch[py0 - y0:py1 - y0, px0 - x0:px1 - x0]
    rec = FraudRecord("crop_replace", partner_doc_id=partner_doc_id, source_field=source, target_field=target,
                      shift=(dx, dy), regions=[(px0, py0, px1 - px0, py1 - py0)])
    return out, rec
