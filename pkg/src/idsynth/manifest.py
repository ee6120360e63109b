"""JSON Lines manifest: one record per generated image."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

GENUINE = "genuine"


class ManifestError(ValueError):
    pass


@dataclass
class ManifestEntry:
    doc_id: str
    image_path: str
    identity: dict
    seed: int
    pack_id: str
    doc_index: int
    variant: str = GENUINE
    fraud: dict | None = None
    privacy: dict | None = None
    composition: dict | None = None
    genuine_id: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def is_fraud(self) -> bool:
        return self.fraud is not None

    def to_json(self) -> str:
        d = {
            "doc_id": self.doc_id,
            "image_path": self.image_path,
            "pack_id": self.pack_id,
            "doc_index": self.doc_index,
            "variant": self.variant,
            "seed": self.seed,
            "identity": self.identity,
        }
        for k in ("fraud", "privacy", "composition", "genuine_id"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        if self.extra:
            d["extra"] = self.extra
        return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        try:
            return cls(
                doc_id=str(d["doc_id"]),
                image_path=str(d["image_path"]),
                identity=dict(d["identity"]),
                seed=int(d["seed"]),
                pack_id=str(d["pack_id"]),
                doc_index=int(d["doc_index"]),
                variant=str(d.get("variant", GENUINE)),
                fraud=d.get("fraud"),
                privacy=d.get("privacy"),
                composition=d.get("composition"),
                genuine_id=d.get("genuine_id"),
                extra=dict(d.get("extra", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"malformed manifest record: {e}") from None


def doc_id(pack_id: str, index: int, variant: str) -> str:
    return f"{pack_id}-{index:06d}-{variant}"


def image_path(pack_id: str, index: int, variant: str) -> str:
    return f"{pack_id}/{index:06d}/{variant}.png"


def read_manifest(path: str | Path, strict: bool = False) -> tuple[list[ManifestEntry], list[tuple[int, str]]]:
    """(entries, problems). Unparseable lines are reported as (line number, message) unless strict."""
    entries, problems = [], []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                entries.append(ManifestEntry.from_dict(json.loads(line)))
            except (json.JSONDecodeError, ManifestError) as e:
                if strict:
                    raise ManifestError(f"line {n}: {e}") from None
                problems.append((n, str(e)))
    return entries, problems


def write_manifest(path: str | Path, entries) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")
