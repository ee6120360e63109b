"""Compositing an identity onto a template: text overlays, portrait, ghost image, signature."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .assets import FieldSpec, TemplatePack, apply_background_rule, fit_crop
from .imageio import alpha_over, luma_u8, rgba_to_rgb
from .metagen import IdentityRecord
from .overlay import OverlayParams

__all__ = [
    "OverlayParams", "DocumentImage", "RenderError", "TextOverflowError", "render_document", "render_text_field",
    "text_mask", "render_ghost", "render_signature", "compact_signature", "signature_fonts", "composite_portrait",
    "composite_ghost", "composite_signature", "template_rgb",
]

SIGNATURE_INK = (22, 32, 96)
SIGNATURE_SHEAR = 0.22
CONSONANTS = "bcdfghjklmnprstvwxz"
VOWELS = "aeiou"


class RenderError(RuntimeError):
    pass


class TextOverflowError(RenderError):
    pass


@dataclass(eq=False)
class DocumentImage:
    pixels: np.ndarray  # RGB
    field_map: dict[str, tuple[int, int, int, int]] = field(default_factory=dict)
    identity: IdentityRecord | None = None
    params: dict[str, OverlayParams] = field(default_factory=dict)
    values: dict[str, str] = field(default_factory=dict)
    pack: TemplatePack | None = None
    portrait_id: str | None = None
    signature_seed: int = 0

    def copy(self) -> "DocumentImage":
        return DocumentImage(self.pixels.copy(), dict(self.field_map), self.identity, dict(self.params),
                             dict(self.values), self.pack, self.portrait_id, self.signature_seed)


@lru_cache(maxsize=512)
def _font(path: str, size: float) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(path, size)


def get_font(path: str | Path, size: float) -> ImageFont.FreeTypeFont:
    return _font(str(path), round(float(size), 3))


def template_rgb(pack: TemplatePack) -> np.ndarray:
    return rgba_to_rgb(pack.template_image)


def text_mask(text: str, font_path: str | Path, params: OverlayParams, box_w: int, box_h: int,
              slack: int) -> tuple[np.ndarray, tuple[int, int, int, int] | None]:
    """Anti-aliased ink coverage of `text` over the bbox expanded by `slack` on every side.

    Returns (mask of shape (box_h + 2*slack, box_w + 2*slack), ink bbox in mask coords or None).
    Raises TextOverflowError if the ink leaves the expanded box.
    """
    W, H = box_w + 2 * slack, box_h + 2 * slack
    mask = Image.new("L", (W, H), 0)
    if not text:
        return np.zeros((H, W), np.uint8), None
    font = get_font(font_path, params.size_pt)
    stroke = int(round(params.stroke_width))
    xy = (slack + params.offset[0], slack + params.offset[1])
    draw = ImageDraw.Draw(mask)
    x0, y0, x1, y1 = draw.textbbox(xy, text, font=font, anchor="la", stroke_width=stroke)
    if x0 < 0 or y0 < 0 or x1 > W or y1 > H:
        raise TextOverflowError(f"text {text!r} overflows its box ({x0},{y0},{x1},{y1}) vs {W}x{H}")
    draw.text(xy, text, fill=255, font=font, anchor="la", stroke_width=stroke, stroke_fill=255)
    arr = np.asarray(mask).copy()
    ys, xs = np.nonzero(arr)
    ink = None if ys.size == 0 else (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
    return arr, ink


def render_text_field(pixels: np.ndarray, pack: TemplatePack, f: FieldSpec, text: str,
                      params: OverlayParams) -> tuple[int, int, int, int]:
    """Draw one text field in place; returns the realized ink bbox in document coords."""
    slack = pack.slack
    mask, ink = text_mask(text, pack.font_path(params.font_id), params, f.w, f.h, slack)
    if ink is None:
        return (f.x, f.y, 0, 0)
    color = np.empty(mask.shape + (3,), np.uint8)
    color[...] = params.color
    alpha_over(pixels, color, mask, f.x - slack, f.y - slack)
    return (f.x - slack + ink[0], f.y - slack + ink[1], ink[2], ink[3])


# ---------------------------------------------------------------------------
# portrait and ghost


def composite_portrait(pixels: np.ndarray, f: FieldSpec, portrait_rgba: np.ndarray) -> None:
    raster = fit_crop(portrait_rgba, f.w, f.h)
    raster = apply_background_rule(raster, f.background)
    alpha_over(pixels, raster[..., :3], raster[..., 3], f.x, f.y)


def render_ghost(portrait_rgba: np.ndarray, f: FieldSpec, opacity: float = 0.35) -> np.ndarray:
    """(h, w, 2) array: BT.601 luminosity and opacity-scaled alpha from the portrait matte."""
    if portrait_rgba.shape[:2] == (f.h, f.w):
        raster = portrait_rgba
    else:
        raster = fit_crop(portrait_rgba, f.w, f.h)
    if raster.ndim == 2:
        lum = raster.astype(np.uint8)
        alpha = np.full(raster.shape, 255, np.uint8)
    else:
        lum = luma_u8(raster)
        alpha = raster[..., 3] if raster.shape[2] == 4 else np.full(raster.shape[:2], 255, np.uint8)
    alpha = np.rint(alpha.astype(np.float64) * opacity).astype(np.uint8)
    return np.stack([lum, alpha], axis=-1)


def composite_ghost(pixels: np.ndarray, f: FieldSpec, portrait_rgba: np.ndarray, opacity: float) -> None:
    ghost = render_ghost(portrait_rgba, f, opacity)
    gray = np.repeat(ghost[..., :1], 3, axis=2)
    alpha_over(pixels, gray, ghost[..., 1], f.x, f.y)


# ---------------------------------------------------------------------------
# signature


def compact_signature(name: str) -> str:
    """Pronounceable 6-10 letter string derived from a 64-bit hash of the name."""
    h = int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "big")
    length = 6 + h % 5
    h //= 5
    chars = []
    for i in range(length):
        alphabet = CONSONANTS if i % 2 == 0 else VOWELS
        h, r = divmod(h, len(alphabet))
        chars.append(alphabet[r])
    return "".join(chars).capitalize()


def signature_fonts() -> list[Path]:
    base = resources.files("idsynth") / "data" / "fonts"
    return sorted(Path(str(p)) for p in base.iterdir() if str(p).endswith(".ttf"))


def render_signature(full_name: str, fonts, rng: np.random.Generator, size: tuple[int, int]) -> np.ndarray:
    """Ink mask (h, w) of the hashed name in a randomly chosen handwriting font."""
    w, h = size
    fonts = list(fonts)
    if not fonts:
        raise RenderError("no signature fonts available")
    font_path = fonts[int(rng.integers(len(fonts)))]
    if not full_name:
        return np.zeros((h, w), np.uint8)
    text = compact_signature(full_name)
    pad = int(h * SIGNATURE_SHEAR) + 2
    pt = max(h * 0.85, 4.0)
    while True:
        font = get_font(font_path, pt)
        x0, y0, x1, y1 = font.getbbox(text)
        if (x1 - x0) + pad <= w and (y1 - y0) <= h or pt <= 4.0:
            break
        pt *= 0.92
    canvas = Image.new("L", (w, h), 0)
    ImageDraw.Draw(canvas).text(((w - (x1 - x0) - pad) / 2 - x0 + pad, (h - (y1 - y0)) / 2 - y0), text,
                                font=font, fill=255)
    # forward slant: x_src = x + shear * (y - h/2)
    canvas = canvas.transform((w, h), Image.AFFINE, (1, SIGNATURE_SHEAR, -SIGNATURE_SHEAR * h / 2, 0, 1, 0),
                              resample=Image.BILINEAR)
    return np.asarray(canvas).copy()


def composite_signature(pixels: np.ndarray, f: FieldSpec, full_name: str, rng: np.random.Generator) -> None:
    mask = render_signature(full_name, signature_fonts(), rng, (f.w, f.h))
    ink = np.empty(mask.shape + (3,), np.uint8)
    ink[...] = SIGNATURE_INK
    alpha_over(pixels, ink, mask, f.x, f.y)


# ---------------------------------------------------------------------------


def _values(pack: TemplatePack, identity) -> dict[str, str]:
    if identity is None:
        return {}
    if isinstance(identity, IdentityRecord):
        return identity.field_values(pack.date_format)
    return dict(identity)


def render_document(pack: TemplatePack, identity, params: dict[str, OverlayParams] | None,
                    portrait: np.ndarray | None, signature_seed: int = 0) -> DocumentImage:
    """Render a document.

    `identity` is an IdentityRecord or a plain source -> text mapping; `portrait` is the
    matte RGBA portrait (the background rule of each field is applied here). The
    signature font is drawn from a stream seeded by `signature_seed`.
    """
    values = _values(pack, identity)
    params = {**pack.default_params(), **(params or {})}
    pixels = template_rgb(pack)
    field_map: dict[str, tuple[int, int, int, int]] = {}

    for f in pack.fields:
        if f.kind == "portrait" and portrait is not None:
            composite_portrait(pixels, f, portrait)
            field_map[f.id] = f.bbox
        elif f.kind == "ghost" and portrait is not None:
            composite_ghost(pixels, f, portrait, pack.ghost_opacity)
            field_map[f.id] = f.bbox
        elif f.kind == "signature":
            name = values.get(f.source, "")
            if name:
                composite_signature(pixels, f, name, np.random.default_rng(signature_seed))
                field_map[f.id] = f.bbox

    for f in pack.fields:
        if f.kind != "text":
            continue
        if f.source not in values:
            if values:
                raise RenderError(f"missing value for field {f.id!r} (source {f.source!r})")
            continue
        field_map[f.id] = render_text_field(pixels, pack, f, values[f.source], params[f.id])

    ident = identity if isinstance(identity, IdentityRecord) else None
    return DocumentImage(pixels, field_map, ident, params, values, pack,
                         ident.portrait_id if ident is not None else None, signature_seed)
