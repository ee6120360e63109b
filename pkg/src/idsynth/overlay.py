from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class OverlayParams:
    """How one text field is drawn: font, size, color, stroke and offset from the bbox origin."""

    font_id: str
    size_pt: float
    color: tuple[int, int, int] = (0, 0, 0)
    stroke_width: float = 0.0
    offset: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if not self.size_pt > 0:
            raise ValueError(f"size_pt must be positive, got {self.size_pt}")
        if self.stroke_width < 0:
            raise ValueError("stroke_width must be nonnegative")
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))
        object.__setattr__(self, "offset", tuple(float(o) for o in self.offset))

    def to_dict(self) -> dict:
        return {
            "font_id": self.font_id,
            "size_pt": float(self.size_pt),
            "color": list(self.color),
            "stroke_width": float(self.stroke_width),
            "offset": list(self.offset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OverlayParams":
        return cls(
            font_id=d["font_id"],
            size_pt=float(d["size_pt"]),
            color=tuple(d.get("color", (0, 0, 0))),
            stroke_width=float(d.get("stroke_width", 0.0)),
            offset=tuple(d.get("offset", (0.0, 0.0))),
        )

    def with_(self, **kw) -> "OverlayParams":
        return replace(self, **kw)
