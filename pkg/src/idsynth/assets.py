"""Template packs and portrait assets: loading, validation, qualification, preprocessing.

Template pack directory::

    template.png      RGBA blank document
    layout.json       fields, document rules, fonts (schema in README)
    reference.png     optional filled official sample (tuning target)
    fonts/<id>.ttf    every font id referenced by the layout

Portrait asset: ``<id>.png`` (RGBA, background in the alpha matte) next to a
``<id>.json`` sidecar with landmarks and demographic/pose/emotion metadata.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .imageio import luma_u8, read_png
from .overlay import OverlayParams

DOC_KINDS = ("driver_license", "id_card", "passport")
FIELD_KINDS = ("text", "portrait", "ghost", "signature")
NAME_SOURCES = ("full_name", "given_name", "surname")

MIN_AGE = 18
MIN_EXPRESSION_PROB = 0.8
MAX_HEAD_POSE_DEG = 9.0
MIN_PORTRAIT_BOX = 8


class PackError(ValueError):
    """A template pack is missing files or violates a layout invariant."""


class AssetError(ValueError):
    """A portrait asset or its sidecar is malformed."""


@dataclass(frozen=True)
class FieldSpec:
    id: str
    kind: str
    bbox: tuple[int, int, int, int]  # x, y, w, h
    pii: bool = False
    segment: str | None = None
    default_params: OverlayParams | None = None
    source: str | None = None
    background: dict | None = None

    @property
    def x(self) -> int:
        return self.bbox[0]

    @property
    def y(self) -> int:
        return self.bbox[1]

    @property
    def w(self) -> int:
        return self.bbox[2]

    @property
    def h(self) -> int:
        return self.bbox[3]

    def slice(self, slack: int = 0, shape: tuple[int, int] | None = None):
        x, y, w, h = self.bbox
        y0, x0, y1, x1 = y - slack, x - slack, y + h + slack, x + w + slack
        if shape is not None:
            y0, x0 = max(y0, 0), max(x0, 0)
            y1, x1 = min(y1, shape[0]), min(x1, shape[1])
        return slice(y0, y1), slice(x0, x1)


@dataclass(eq=False)
class TemplatePack:
    pack_id: str
    template_image: np.ndarray
    fields: list[FieldSpec]
    doc_kind: str
    region: str
    validity_years: int
    dln_format: str
    fonts: list[str]
    font_paths: dict[str, Path]
    reference_image: np.ndarray | None = None
    language: str = "en"
    date_format: str = "%m/%d/%Y"
    ghost_opacity: float = 0.35
    slack: int = 4
    reference_values: dict[str, str] = field(default_factory=dict)
    search_space: dict = field(default_factory=dict)
    root: Path | None = None

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)."""
        return self.template_image.shape[1], self.template_image.shape[0]

    def field(self, field_id: str) -> FieldSpec:
        for f in self.fields:
            if f.id == field_id:
                return f
        raise KeyError(field_id)

    def fields_of(self, kind: str) -> list[FieldSpec]:
        return [f for f in self.fields if f.kind == kind]

    def segments(self) -> list[str]:
        seen: list[str] = []
        for f in self.fields:
            if f.kind == "text" and f.segment is not None and f.segment not in seen:
                seen.append(f.segment)
        return seen

    def default_params(self) -> dict[str, OverlayParams]:
        return {f.id: f.default_params for f in self.fields if f.kind == "text"}

    def font_path(self, font_id: str) -> Path:
        try:
            return self.font_paths[font_id]
        except KeyError:
            raise PackError(f"unresolvable font id {font_id!r}") from None

    def pii_boxes(self) -> list[tuple[int, int, int, int]]:
        return [f.bbox for f in self.fields if f.pii]


def _parse_field(d: dict) -> FieldSpec:
    try:
        fid = str(d["id"])
        kind = d["kind"]
        bbox = tuple(int(v) for v in d["bbox"])
    except (KeyError, TypeError, ValueError) as e:
        raise PackError(f"malformed layout field {d!r}: {e}") from None
    if kind not in FIELD_KINDS:
        raise PackError(f"field {fid!r}: unknown kind {kind!r}")
    if len(bbox) != 4:
        raise PackError(f"field {fid!r}: bbox must be [x, y, w, h]")
    params = d.get("default_params")
    return FieldSpec(
        id=fid,
        kind=kind,
        bbox=bbox,
        pii=bool(d.get("pii", False)),
        segment=d.get("segment"),
        default_params=OverlayParams.from_dict(params) if params else None,
        source=d.get("source"),
        background=d.get("background"),
    )


def validate_pack(pack: TemplatePack) -> None:
    W, H = pack.size
    ids = [f.id for f in pack.fields]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise PackError(f"duplicate field ids: {dup}")
    if pack.validity_years < 1:
        raise PackError("validity_years must be >= 1")
    if pack.doc_kind not in DOC_KINDS:
        raise PackError(f"unknown doc_kind {pack.doc_kind!r}")
    if not pack.fields_of("portrait"):
        raise PackError("no portrait field")
    by_id = {f.id: f for f in pack.fields}
    for f in pack.fields:
        x, y, w, h = f.bbox
        if w <= 0 or h <= 0:
            raise PackError(f"field {f.id!r}: degenerate bbox {f.bbox}")
        if x < 0 or y < 0 or x + w > W or y + h > H:
            raise PackError(f"field {f.id!r}: field out of bounds {f.bbox} for {W}x{H} template")
        if f.kind == "text":
            if f.default_params is None:
                raise PackError(f"text field {f.id!r} has no default_params")
            if not f.source:
                raise PackError(f"text field {f.id!r} has no source")
            pack.font_path(f.default_params.font_id)
        elif f.kind == "ghost":
            src = by_id.get(f.source or "")
            if src is None or src.kind != "portrait":
                raise PackError(f"ghost field {f.id!r} must reference a portrait field")
        elif f.kind == "signature":
            if f.source not in NAME_SOURCES and not (f.source in by_id and by_id[f.source].kind == "text"):
                raise PackError(f"signature field {f.id!r} must reference a name source")
    for font_id in pack.fonts:
        pack.font_path(font_id)
    if pack.reference_image is not None and pack.reference_image.shape[:2] != (H, W):
        raise PackError("reference image size differs from template")


def load_template_pack(path: str | Path) -> TemplatePack:
    root = Path(path)
    template_path = root / "template.png"
    layout_path = root / "layout.json"
    for p in (template_path, layout_path):
        if not p.is_file():
            raise PackError(f"missing file: {p}")
    font_dir = root / "fonts"
    if not font_dir.is_dir():
        raise PackError(f"missing font directory: {font_dir}")
    try:
        layout = json.loads(layout_path.read_text())
    except json.JSONDecodeError as e:
        raise PackError(f"malformed layout: {e}") from None
    if not isinstance(layout, dict) or not isinstance(layout.get("fields"), list):
        raise PackError("malformed layout: expected an object with a 'fields' list")

    font_paths = {}
    for p in sorted(font_dir.iterdir()):
        if p.suffix.lower() in (".ttf", ".otf"):
            font_paths[p.stem] = p

    reference = None
    if (root / "reference.png").is_file():
        reference = read_png(root / "reference.png", "RGB")

    try:
        pack = TemplatePack(
            pack_id=str(layout.get("pack_id", root.name)),
            template_image=read_png(template_path, "RGBA"),
            fields=[_parse_field(d) for d in layout["fields"]],
            doc_kind=layout["doc_kind"],
            region=str(layout["region"]),
            validity_years=int(layout["validity_years"]),
            dln_format=str(layout.get("dln_format", "########")),
            fonts=list(layout.get("fonts", [])),
            font_paths=font_paths,
            reference_image=reference,
            language=layout.get("language", "en"),
            date_format=layout.get("date_format", "%m/%d/%Y"),
            ghost_opacity=float(layout.get("ghost_opacity", 0.35)),
            slack=int(layout.get("slack", 4)),
            reference_values=dict(layout.get("reference_values", {})),
            search_space=dict(layout.get("search_space", {})),
            root=root,
        )
    except KeyError as e:
        raise PackError(f"malformed layout: missing key {e}") from None
    validate_pack(pack)
    return pack


# ---------------------------------------------------------------------------
# portraits


@dataclass(eq=False)
class PortraitAsset:
    id: str
    image: np.ndarray  # RGBA
    landmarks: np.ndarray  # (N, 2) x, y pixels
    age: float
    sex_probs: tuple[float, float]  # (p_male, p_female)
    ethnicity: str
    eye_color_probs: dict[str, float]
    emotion_probs: dict[str, float]
    head_pose: tuple[float, float, float]  # pitch, roll, yaw in degrees
    misc: bool = False

    def __post_init__(self):
        self.landmarks = np.asarray(self.landmarks, dtype=np.float64).reshape(-1, 2)
        self.sex_probs = tuple(float(p) for p in self.sex_probs)
        self.head_pose = tuple(float(p) for p in self.head_pose)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape[:2]

    def meta_dict(self) -> dict:
        return {
            "id": self.id,
            "age": self.age,
            "sex_probs": list(self.sex_probs),
            "ethnicity": self.ethnicity,
            "eye_color_probs": dict(self.eye_color_probs),
            "emotion_probs": dict(self.emotion_probs),
            "head_pose": dict(zip(("pitch", "roll", "yaw"), self.head_pose)),
            "landmarks": self.landmarks.tolist(),
            "misc": self.misc,
        }


def _check_distribution(name: str, probs, tol: float = 1e-3) -> None:
    p = np.asarray(list(probs), dtype=np.float64)
    if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise AssetError(f"{name} must be a normalized distribution, got {list(probs)}")


def validate_portrait(asset: PortraitAsset) -> None:
    _check_distribution("sex_probs", asset.sex_probs)
    _check_distribution("eye_color_probs", asset.eye_color_probs.values())
    _check_distribution("emotion_probs", asset.emotion_probs.values())
    if len(asset.landmarks) < 5:
        raise AssetError(f"portrait {asset.id}: need at least 5 landmarks")
    h, w = asset.shape
    lm = asset.landmarks
    if np.any(lm < 0) or np.any(lm[:, 0] > w) or np.any(lm[:, 1] > h):
        raise AssetError(f"portrait {asset.id}: landmarks outside image bounds")
    if asset.image.ndim != 3 or asset.image.shape[2] != 4:
        raise AssetError(f"portrait {asset.id}: image must be RGBA")


def portrait_from_meta(image: np.ndarray, meta: dict) -> PortraitAsset:
    try:
        pose = meta["head_pose"]
        if isinstance(pose, dict):
            pose = (pose["pitch"], pose["roll"], pose["yaw"])
        asset = PortraitAsset(
            id=str(meta["id"]),
            image=image,
            landmarks=meta["landmarks"],
            age=float(meta["age"]),
            sex_probs=tuple(meta["sex_probs"]),
            ethnicity=str(meta["ethnicity"]),
            eye_color_probs=dict(meta["eye_color_probs"]),
            emotion_probs=dict(meta["emotion_probs"]),
            head_pose=tuple(pose),
            misc=bool(meta.get("misc", False)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise AssetError(f"malformed portrait metadata: {e}") from None
    validate_portrait(asset)
    return asset


def load_portrait(png_path: str | Path) -> PortraitAsset:
    png_path = Path(png_path)
    sidecar = png_path.with_suffix(".json")
    if not sidecar.is_file():
        raise AssetError(f"missing sidecar {sidecar}")
    meta = json.loads(sidecar.read_text())
    meta.setdefault("id", png_path.stem)
    return portrait_from_meta(read_png(png_path, "RGBA"), meta)


def load_portrait_corpus(directory: str | Path) -> list[PortraitAsset]:
    directory = Path(directory)
    return [load_portrait(p) for p in sorted(directory.glob("*.png")) if p.with_suffix(".json").is_file()]


@dataclass(frozen=True)
class QualificationResult:
    qualified: bool
    reasons: tuple[str, ...] = ()


def qualify_portrait(asset: PortraitAsset) -> QualificationResult:
    reasons = []
    if asset.age < MIN_AGE:
        reasons.append("underage")
    expression = max(asset.emotion_probs.get("neutral", 0.0), asset.emotion_probs.get("happiness", 0.0))
    if expression < MIN_EXPRESSION_PROB:
        reasons.append("expression")
    if any(abs(a) > MAX_HEAD_POSE_DEG for a in asset.head_pose):
        reasons.append("head_pose")
    if asset.misc:
        reasons.append("misc")
    return QualificationResult(not reasons, tuple(reasons))


def partition_portraits(assets) -> tuple[list[PortraitAsset], list[PortraitAsset]]:
    """Split into (qualified, disqualified), preserving order."""
    good, bad = [], []
    for a in assets:
        (good if qualify_portrait(a).qualified else bad).append(a)
    return good, bad


# ---------------------------------------------------------------------------
# preprocessing


def fit_crop_transform(src_w: int, src_h: int, dst_w: int, dst_h: int) -> tuple[float, float, float]:
    """Scale and crop offsets for an aspect-preserving cover fit: x' = s*x - ox."""
    s = max(dst_w / src_w, dst_h / src_h)
    ox = (src_w * s - dst_w) / 2.0
    oy = (src_h * s - dst_h) / 2.0
    return s, ox, oy


def fit_crop(image: np.ndarray, dst_w: int, dst_h: int, landmarks=None):
    """Resize + center-crop `image` to exactly dst_w x dst_h; landmarks follow the same map."""
    h, w = image.shape[:2]
    s, ox, oy = fit_crop_transform(w, h, dst_w, dst_h)
    box = (ox / s, oy / s, (ox + dst_w) / s, (oy + dst_h) / s)
    im = Image.fromarray(image)
    if im.mode == "RGBA":
        # premultiplied resampling so transparent pixels do not bleed color
        out = np.asarray(im.convert("RGBa").resize((dst_w, dst_h), Image.BILINEAR, box=box).convert("RGBA"))
    else:
        out = np.asarray(im.resize((dst_w, dst_h), Image.BILINEAR, box=box))
    if landmarks is None:
        return out.copy()
    lm = np.asarray(landmarks, dtype=np.float64) * s - np.array([ox, oy])
    return out.copy(), lm


def apply_background_rule(rgba: np.ndarray, rule: dict | None) -> np.ndarray:
    """Apply a template's portrait background rule to an RGBA portrait.

    rule = {"mode": "solid", "color": [r, g, b]} flattens onto an opaque color;
    {"mode": "transparent"} keeps the matte.  Either may carry
    "monochrome": [r, g, b] to recolor the subject as a single hue.
    """
    rule = rule or {"mode": "solid", "color": [255, 255, 255]}
    out = rgba.copy()
    hue = rule.get("monochrome")
    if hue is not None:
        lum = luma_u8(out).astype(np.int64)[..., None]
        out[..., :3] = ((lum * np.asarray(hue, dtype=np.int64) + 127) // 255).astype(np.uint8)
    mode = rule.get("mode", "solid")
    if mode == "solid":
        color = np.asarray(rule.get("color", (255, 255, 255)), dtype=np.int64)
        a = out[..., 3:4].astype(np.int64)
        rgb = out[..., :3].astype(np.int64)
        out[..., :3] = ((rgb * a + color * (255 - a) + 127) // 255).astype(np.uint8)
        out[..., 3] = 255
    elif mode != "transparent":
        raise PackError(f"unknown background mode {mode!r}")
    return out


def preprocess_portrait(asset: PortraitAsset, field: FieldSpec):
    """Portrait cropped to the field bbox with the field's background rule applied.

    Returns (rgba raster of shape (h, w, 4), rescaled landmarks).
    """
    if field.kind not in ("portrait", "ghost"):
        raise PackError(f"field {field.id!r} is not a portrait field")
    if field.w < MIN_PORTRAIT_BOX or field.h < MIN_PORTRAIT_BOX:
        raise PackError(f"field {field.id!r}: bbox smaller than {MIN_PORTRAIT_BOX}x{MIN_PORTRAIT_BOX}")
    raster, lm = fit_crop(asset.image, field.w, field.h, asset.landmarks)
    # landmarks cropped away by the fit are pinned to the border
    lm = np.clip(lm, 0.0, [field.w, field.h])
    return apply_background_rule(raster, field.background), lm
