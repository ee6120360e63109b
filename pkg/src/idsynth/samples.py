"""Deterministic demo assets: a driver-license template pack, procedural portraits, scenes.

Everything here is synthetic and reproducible from a seed, so the whole
pipeline (and the test suite) runs without external data.
"""
from __future__ import annotations

import json
import math
import shutil
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from .assets import load_template_pack
from .imageio import write_png
from .overlay import OverlayParams
from .render import get_font, render_document, signature_fonts

DEMO_SIZE = (600, 400)
PACK_FONTS = ("DejaVuSans", "DejaVuSans-Bold", "DejaVuSerif", "DejaVuSansMono")

# segment -> (true params used for the reference sample, perturbed defaults)
_SEGMENT_STYLES = {
    "numbers": (OverlayParams("DejaVuSans-Bold", 19.0, (148, 16, 24), 0, (2.0, 1.0)),
                OverlayParams("DejaVuSans-Bold", 18.5, (100, 40, 40), 0, (1.0, 2.0))),
    "dates": (OverlayParams("DejaVuSans", 15.0, (16, 16, 24), 0, (1.0, 2.0)),
              OverlayParams("DejaVuSans", 15.5, (70, 70, 80), 0, (2.0, 1.0))),
    "names": (OverlayParams("DejaVuSans-Bold", 21.0, (8, 8, 16), 0, (0.0, 1.0)),
              OverlayParams("DejaVuSans", 20.5, (60, 60, 60), 0, (1.0, 2.0))),
    "address": (OverlayParams("DejaVuSans", 15.0, (24, 24, 40), 0, (1.0, 1.0)),
                OverlayParams("DejaVuSans", 14.5, (80, 80, 80), 0, (0.0, 2.0))),
    "traits": (OverlayParams("DejaVuSans", 14.0, (16, 16, 24), 1, (1.0, 1.0)),
               OverlayParams("DejaVuSans", 14.5, (70, 70, 70), 0, (2.0, 0.0))),
}


def segment_styles(variant: int = 0) -> dict[str, tuple[OverlayParams, OverlayParams]]:
    """(true, default) params per segment. Variant 0 is fixed; others jitter it from a seeded stream."""
    if variant == 0:
        return dict(_SEGMENT_STYLES)
    rng = np.random.default_rng(variant)
    out = {}
    for seg, (true, _) in _SEGMENT_STYLES.items():
        true = true.with_(
            size_pt=float(np.clip(true.size_pt + rng.choice([-1.5, -1.0, -0.5, 0.5, 1.0, 1.5]), 12, 23)),
            color=tuple(int(c) for c in np.clip(np.asarray(true.color) + rng.integers(-16, 17, 3), 0, 255)),
            offset=tuple(float(max(o + rng.integers(-1, 2), 0)) for o in true.offset),
        )
        sign = rng.choice([-1.0, 1.0], 3)
        default = true.with_(
            font_id=str(rng.choice(PACK_FONTS)) if rng.random() < 0.3 else true.font_id,
            size_pt=round(true.size_pt + sign[0] * rng.uniform(0.4, 0.6), 1),
            color=tuple(int(c) for c in np.clip(np.asarray(true.color) + rng.integers(40, 80), 0, 255)),
            stroke_width=0.0,
            offset=(max(round(true.offset[0] + sign[1] * rng.uniform(0.75, 1.25), 1), 0.5),
                    max(round(true.offset[1] + sign[2] * rng.uniform(0.75, 1.25), 1), 0.5)),
        )
        out[seg] = (true, default)
    return out


# id, source, bbox (x, y, w, h), segment, pii, label
_TEXT_FIELDS = [
    ("dln", "dln", (262, 60, 200, 30), "numbers", True, "DLN"),
    ("class", "class", (520, 60, 56, 30), "numbers", False, "CLASS"),
    ("exp", "expiry_date", (262, 94, 130, 26), "dates", True, "EXP"),
    ("iss", "issue_date", (448, 94, 130, 26), "dates", True, "ISS"),
    ("surname", "surname", (212, 126, 370, 32), "names", True, "1"),
    ("given_name", "given_name", (212, 158, 370, 32), "names", True, "2"),
    ("addr1", "address_line1", (212, 194, 370, 24), "address", True, "8"),
    ("addr2", "address_line2", (212, 216, 370, 24), "address", True, ""),
    ("dob", "dob", (262, 246, 120, 24), "traits", True, "DOB"),
    ("sex", "sex", (420, 246, 40, 24), "traits", True, "SEX"),
    ("hgt", "height", (262, 272, 80, 24), "traits", True, "HGT"),
    ("wgt", "weight", (384, 272, 80, 24), "traits", True, "WGT"),
    ("eyes", "eye_color", (262, 298, 60, 24), "traits", True, "EYES"),
    ("dd", "dd", (262, 324, 200, 24), "traits", True, "DD"),
    ("dob_small", "dob", (24, 290, 110, 24), "traits", True, ""),
    ("full_name", "full_name", (24, 362, 250, 24), "traits", True, ""),
    ("region", "region", (536, 14, 44, 24), "numbers", False, ""),
]

REFERENCE_VALUES = {
    "dln": "D08954796",
    "class": "D",
    "expiry_date": "03/01/2029",
    "issue_date": "03/01/2024",
    "surname": "Sample",
    "given_name": "Jelani",
    "address_line1": "1234 Main St",
    "address_line2": "Phoenix, AZ 85007",
    "dob": "03/01/1974",
    "sex": "F",
    "height": "5'-05\"",
    "weight": "125 lb",
    "eye_color": "BRO",
    "dd": "1234AB56789CD012",
    "full_name": "Jelani Sample",
    "region": "AZ",
}


def true_params(variant: int = 0) -> dict[str, OverlayParams]:
    styles = segment_styles(variant)
    return {fid: styles[seg][0] for fid, _, _, seg, _, _ in _TEXT_FIELDS}


def _template_image(seed: int) -> np.ndarray:
    W, H = DEMO_SIZE
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    base = np.empty((H, W, 3))
    t = xx / W
    base[..., 0] = 232 - 30 * t + 6 * np.sin(yy / 37.0)
    base[..., 1] = 228 - 8 * t + 5 * np.sin(xx / 53.0)
    base[..., 2] = 205 + 30 * t
    # guilloche rosette + wave lines
    cx, cy = 420.0, 230.0
    r = np.hypot(xx - cx, yy - cy)
    th = np.arctan2(yy - cy, xx - cx)
    rosette = np.cos(r / 6.0 + 7 * np.sin(6 * th)) > 0.93
    waves = np.abs(np.sin(yy / 9.0 + 2.2 * np.sin(xx / 41.0))) < 0.05
    base[rosette] -= (28, 22, 6)
    base[waves] -= (10, 16, 22)
    base += rng.normal(0, 1.6, base.shape)
    img = Image.fromarray(np.clip(base, 0, 255).astype(np.uint8)).filter(ImageFilter.GaussianBlur(0.6))
    draw = ImageDraw.Draw(img)
    draw.rectangle((0, 0, W, 52), fill=(24, 62, 122))
    draw.rectangle((0, 52, W, 55), fill=(196, 150, 40))
    draw.text((18, 10), "ARIZONA", font=get_font(_font_path("DejaVuSans-Bold"), 26), fill=(245, 230, 170))
    draw.text((200, 16), "DRIVER LICENSE", font=get_font(_font_path("DejaVuSans-Bold"), 20), fill=(255, 255, 255))
    label_font = get_font(_font_path("DejaVuSans"), 9)
    for fid, _, (x, y, w, h), _, _, label in _TEXT_FIELDS:
        if label:
            draw.text((x - 4, y + 4), label, font=label_font, fill=(150, 40, 40), anchor="ra")
    draw.rounded_rectangle((1, 1, W - 2, H - 2), radius=18, outline=(120, 120, 140), width=2)
    rgba = np.asarray(img.convert("RGBA")).copy()
    return rgba


def _font_path(font_id: str) -> Path:
    for p in signature_fonts():
        if p.stem == font_id:
            return p
    raise KeyError(font_id)


def make_demo_pack(out_dir: str | Path, seed: int = 7, with_reference: bool = True,
                   reference_portrait: np.ndarray | None = None, variant: int = 0) -> Path:
    """Write a 600x400 driver-license pack (17 text + 3 image fields) to `out_dir`.

    `variant` > 0 gives a different background and jittered reference/default styles,
    so several distinct tuning tasks can be built from one layout.
    """
    out = Path(out_dir)
    styles = segment_styles(variant)
    seed = seed + 101 * variant
    (out / "fonts").mkdir(parents=True, exist_ok=True)
    for font_id in PACK_FONTS:
        shutil.copyfile(_font_path(font_id), out / "fonts" / f"{font_id}.ttf")
    write_png(out / "template.png", _template_image(seed))

    fields = []
    for fid, source, bbox, seg, pii, _ in _TEXT_FIELDS:
        fields.append({
            "id": fid, "kind": "text", "bbox": list(bbox), "pii": pii, "segment": seg, "source": source,
            "default_params": styles[seg][1].to_dict(),
        })
    fields += [
        {"id": "portrait", "kind": "portrait", "bbox": [24, 66, 170, 212], "pii": True,
         "background": {"mode": "solid", "color": [214, 222, 232]}},
        {"id": "ghost", "kind": "ghost", "bbox": [480, 250, 96, 120], "pii": True, "source": "portrait"},
        {"id": "signature", "kind": "signature", "bbox": [300, 352, 170, 40], "pii": True, "source": "full_name"},
    ]
    layout = {
        "pack_id": "demo_az_dl" + (f"_v{variant}" if variant else ""),
        "doc_kind": "driver_license",
        "region": "AZ",
        "language": "en",
        "validity_years": 5,
        "dln_format": "D########",
        "date_format": "%m/%d/%Y",
        "fonts": list(PACK_FONTS),
        "ghost_opacity": 0.35,
        "slack": 4,
        "search_space": {"size_pt": [11.0, 24.0], "stroke_width": [0.0, 1.49], "offset": [-5.0, 5.0]},
        "reference_values": REFERENCE_VALUES,
        "fields": fields,
    }
    (out / "layout.json").write_text(json.dumps(layout, indent=1))
    if with_reference:
        pack = load_template_pack(out)
        if reference_portrait is None:
            reference_portrait = make_portrait(seed + 1000, age=50, sex="F", ethnicity="black")[0]
        doc = render_document(pack, REFERENCE_VALUES, true_params(variant), reference_portrait, signature_seed=seed)
        write_png(out / "reference.png", doc.pixels)
    return out


# ---------------------------------------------------------------------------
# portraits

SKIN = {
    "white": [(238, 206, 180), (226, 190, 160), (244, 214, 190)],
    "black": [(120, 80, 56), (98, 64, 44), (140, 98, 70)],
    "asian": [(236, 204, 168), (222, 188, 150), (230, 196, 160)],
    "hispanic": [(204, 160, 120), (190, 146, 106), (214, 172, 132)],
}
HAIR = [(30, 22, 18), (70, 46, 28), (120, 86, 50), (200, 170, 110), (110, 108, 104)]
EYES = {"brown": (82, 50, 30), "blue": (70, 110, 170), "green": (70, 120, 70), "hazel": (120, 96, 50)}
ETHNICITIES = tuple(SKIN)
PORTRAIT_SIZE = 256


def _rot(points, angle_deg, cx, cy):
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    out = []
    for x, y in points:
        dx, dy = x - cx, y - cy
        out.append((cx + c * dx - s * dy, cy + s * dx + c * dy))
    return out


def make_portrait(seed: int, *, age=None, sex=None, ethnicity=None, expression=None, pose=None, misc=None):
    """Procedural face: (RGBA 256x256 with matte, metadata dict incl. 27 landmarks)."""
    rng = np.random.default_rng(seed)
    S = 2 * PORTRAIT_SIZE  # draw at 2x then downsample
    ethnicity = ethnicity or ETHNICITIES[int(rng.integers(len(ETHNICITIES)))]
    sex = sex or ("M" if rng.random() < 0.5 else "F")
    age = int(age if age is not None else rng.integers(12, 72))
    roll_u = rng.random()
    if pose is None:
        big = rng.random() < 0.3
        pose = tuple(float(v) for v in (rng.uniform(-16, 16, 3) if big else rng.uniform(-6, 6, 3)))
    pitch, roll, yaw = pose
    if expression is None:
        expression = "happiness" if roll_u < 0.35 else ("neutral" if roll_u < 0.93 else "surprise")
    if misc is None:
        misc = bool(rng.random() < 0.02)

    skin = SKIN[ethnicity][int(rng.integers(3))]
    hair = HAIR[int(rng.integers(len(HAIR)))]
    eye_name = list(EYES)[int(rng.integers(len(EYES)))] if ethnicity == "white" else "brown"
    cx = S / 2 + yaw * 2.0
    cy = S * 0.50 + pitch * 1.5
    fw = S * rng.uniform(0.20, 0.25) * (1.04 if sex == "M" else 0.97)
    fh = fw * rng.uniform(1.25, 1.40)

    im = Image.new("RGBA", (S, S), (0, 0, 0, 0))
    d = ImageDraw.Draw(im)
    # shoulders, neck, hair back, face
    d.ellipse((S * 0.12, S * 0.80, S * 0.88, S * 1.30), fill=tuple(int(c) for c in rng.integers(30, 200, 3)) + (255,))
    d.rectangle((cx - fw * 0.38, cy + fh * 0.6, cx + fw * 0.38, S * 0.88), fill=skin + (255,))
    hair_len = rng.uniform(0.2, 1.1) if sex == "F" else rng.uniform(0.0, 0.3)
    d.ellipse((cx - fw * 1.12, cy - fh * 1.12, cx + fw * 1.12, cy + fh * (0.2 + hair_len)), fill=hair + (255,))
    d.ellipse((cx - fw, cy - fh, cx + fw, cy + fh), fill=skin + (255,))
    d.chord((cx - fw * 1.02, cy - fh * 1.06, cx + fw * 1.02, cy - fh * 0.1), 180, 360, fill=hair + (255,))

    ey = cy - fh * 0.12
    ex = fw * rng.uniform(0.36, 0.44)
    ew = fw * rng.uniform(0.17, 0.22)
    eh = ew * 0.5
    brow_y = ey - eh * 2.2
    nose_y = cy + fh * rng.uniform(0.22, 0.30)
    nw = fw * rng.uniform(0.14, 0.2)
    my = cy + fh * rng.uniform(0.50, 0.58)
    mw = fw * rng.uniform(0.28, 0.38)
    for side in (-1, 1):
        x0 = cx + side * ex
        d.ellipse((x0 - ew, ey - eh, x0 + ew, ey + eh), fill=(250, 250, 250, 255))
        d.ellipse((x0 - eh * 0.9, ey - eh * 0.9, x0 + eh * 0.9, ey + eh * 0.9), fill=EYES[eye_name] + (255,))
        d.ellipse((x0 - eh * 0.35, ey - eh * 0.35, x0 + eh * 0.35, ey + eh * 0.35), fill=(10, 10, 10, 255))
        d.line((x0 - ew * 1.1, brow_y + eh * 0.3, x0 + ew * 1.1, brow_y - eh * 0.2), fill=hair + (255,), width=int(eh * 0.7))
        if misc:
            d.ellipse((x0 - ew * 1.4, ey - eh * 2, x0 + ew * 1.4, ey + eh * 2), fill=(20, 20, 24, 255))
    shade = tuple(max(0, int(c * 0.8)) for c in skin)
    d.polygon([(cx, ey + eh), (cx - nw, nose_y), (cx + nw, nose_y)], fill=shade + (255,))
    lip = (168, 74, 74, 255) if sex == "F" else tuple(max(0, int(c * 0.7)) for c in skin) + (255,)
    if expression == "happiness":
        d.chord((cx - mw, my - mw * 0.45, cx + mw, my + mw * 0.45), 0, 180, fill=lip)
    elif expression == "surprise":
        d.ellipse((cx - mw * 0.35, my - mw * 0.35, cx + mw * 0.35, my + mw * 0.35), fill=lip)
    else:
        d.line((cx - mw, my, cx + mw, my), fill=lip, width=int(eh * 0.6))

    landmarks = []
    for k in range(9):  # jaw contour from left temple through chin to right temple
        t = math.pi * (k / 8.0)
        landmarks.append((cx - fw * math.cos(t) * 0.98, cy + fh * math.sin(t) * 0.98 * (0.2 + 0.8 * math.sin(t) ** 0.5)))
    for side in (-1, 1):
        x0 = cx + side * ex
        landmarks += [(x0 - ew, ey), (x0, ey - eh), (x0 + ew, ey), (x0, ey + eh)]
        landmarks += [(x0 - ew, brow_y + eh * 0.2), (x0 + ew, brow_y - eh * 0.1)]
    landmarks += [(cx, ey + eh), (cx - nw, nose_y), (cx + nw, nose_y), (cx, nose_y)]
    landmarks += [(cx - mw, my), (cx + mw, my)]
    landmarks = _rot(landmarks, roll, cx, cy)
    im = im.rotate(-roll, resample=Image.BICUBIC, center=(cx, cy))
    im = im.resize((PORTRAIT_SIZE, PORTRAIT_SIZE), Image.LANCZOS)
    lm = [[round(x / 2, 3), round(y / 2, 3)] for x, y in landmarks]

    p_sex = float(rng.uniform(0.85, 0.999))
    sex_probs = [p_sex, 1 - p_sex] if sex == "M" else [1 - p_sex, p_sex]
    eye_probs = {k: 0.02 for k in EYES}
    eye_probs[eye_name] = 1 - 0.02 * (len(EYES) - 1)
    emotion = {"neutral": 0.02, "happiness": 0.02, "surprise": 0.02, "sadness": 0.02}
    emotion[expression] = float(rng.uniform(0.82, 0.94))
    rest = (1 - emotion[expression]) / 3
    for k in emotion:
        if k != expression:
            emotion[k] = rest
    meta = {
        "age": age,
        "sex_probs": sex_probs,
        "ethnicity": ethnicity,
        "eye_color_probs": eye_probs,
        "emotion_probs": emotion,
        "head_pose": {"pitch": pitch, "roll": roll, "yaw": yaw},
        "landmarks": lm,
        "misc": misc,
    }
    return np.asarray(im).copy(), meta


def make_demo_portraits(out_dir: str | Path, n: int, seed: int = 11) -> Path:
    """Write `n` portraits (`p00000.png` + `.json`) to out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        img, meta = make_portrait(seed * 1_000_003 + i)
        meta = {"id": f"p{i:05d}", **meta}
        write_png(out / f"p{i:05d}.png", img)
        (out / f"p{i:05d}.json").write_text(json.dumps(meta, indent=1))
    return out


# ---------------------------------------------------------------------------
# scenes


def make_demo_scene(out_dir: str | Path, name: str = "desk", seed: int = 3, size=(900, 700),
                    quad=((170, 140), (760, 175), (735, 575), (150, 540))) -> Path:
    """Textured desk photo with an annotated card quad; writes <name>.png and <name>.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    W, H = size
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    grain = np.sin(xx / 13.0 + 3 * np.sin(yy / 70.0)) * 12 + rng.normal(0, 3, (H, W))
    img = np.stack([150 + grain, 104 + grain * 0.8, 66 + grain * 0.5], axis=-1)
    light = 1.0 - 0.25 * ((xx - W * 0.3) ** 2 + (yy - H * 0.2) ** 2) / (W**2)
    img = np.clip(img * light[..., None], 0, 255).astype(np.uint8)
    pil = Image.fromarray(img)
    ImageDraw.Draw(pil).polygon([tuple(p) for p in quad], fill=(236, 236, 240))
    write_png(out / f"{name}.png", np.asarray(pil))
    (out / f"{name}.json").write_text(json.dumps({"image": f"{name}.png", "quad": [list(p) for p in quad]}, indent=1))
    return out
