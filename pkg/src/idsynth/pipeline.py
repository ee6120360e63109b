"""End-to-end generation: identities, genuine documents, fraud variants, manifest."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .assets import PortraitAsset, TemplatePack, load_portrait_corpus, load_template_pack, partition_portraits
from .fraud.injectors import (FRAUD_TYPES, MixedInputs, inject_crop_replace, inject_face_morph, inject_inpaint_rewrite,
                              inject_mixed, inject_portrait_substitution, inject_text_replacement)
from .fraud.morph import MorphConfig
from .compose import DEFAULT_LEVELS, SceneAnnotation, insert_into_scene, load_scene
from .imageio import read_png, write_png
from .manifest import GENUINE, ManifestEntry, doc_id, image_path, read_manifest, write_manifest
from .metagen import IdentityRecord, IssuanceState, build_identity
from .overlay import OverlayParams
from .pools import PoolSet, TextPool
from .render import DocumentImage, render_document
from .privacy import PixelDPConfig, apply_privacy, pixeldp_sigma
from .rng import derive_seed, stream

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


class PipelineError(RuntimeError):
    pass


@dataclass
class RunConfig:
    pack: Path
    portraits: Path
    out: Path
    count: int
    seed: int
    now: date
    frauds: tuple[str, ...] = FRAUD_TYPES
    threads: int = 1
    pools: PoolSet | None = None
    params: Path | None = None
    morph_blend: float = 0.5

    def __post_init__(self):
        self.pack, self.portraits, self.out = Path(self.pack), Path(self.portraits), Path(self.out)
        if self.params is not None:
            self.params = Path(self.params)
        unknown = set(self.frauds) - set(FRAUD_TYPES)
        if unknown:
            raise PipelineError(f"unknown fraud types {sorted(unknown)}")
        if self.count < 0:
            raise PipelineError("count must be nonnegative")
        if self.threads < 1:
            raise PipelineError("threads must be >= 1")

    @property
    def variants(self) -> tuple[str, ...]:
        return (GENUINE,) + tuple(f for f in FRAUD_TYPES if f in self.frauds)


@dataclass
class RunSummary:
    manifest: Path
    n_documents: int
    n_images: int
    skipped: int
    seconds: float
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def docs_per_second(self) -> float:
        return self.n_documents / self.seconds if self.seconds > 0 else float("inf")


# ---------------------------------------------------------------------------
# pools travel to workers as plain data so every process sees identical entries


class StaticPools:
    def __init__(self, pools: dict):
        self._pools = pools

    def get(self, kind: str, key) -> TextPool:
        return self._pools[(kind, tuple(str(k) for k in key))]

    def given_names(self, ethnicity: str, sex: str, language: str) -> TextPool:
        return self.get("given_names", (ethnicity, sex, language))

    def surnames(self, ethnicity: str, language: str) -> TextPool:
        return self.get("surnames", (ethnicity, "*", language))

    def addresses(self, region: str) -> TextPool:
        return self.get("addresses", (region,))


def snapshot_pools(pools: PoolSet, pack: TemplatePack, ethnicities) -> StaticPools:
    out = {}
    for eth in sorted(set(ethnicities)):
        for sex in ("F", "M"):
            p = pools.given_names(eth, sex, pack.language)
            out[("given_names", p.key)] = p
        p = pools.surnames(eth, pack.language)
        out[("surnames", p.key)] = p
    p = pools.addresses(pack.region)
    out[("addresses", p.key)] = p
    return StaticPools(out)


def load_params(path: Path | None) -> dict[str, OverlayParams]:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    data = data.get("params", data)
    return {fid: OverlayParams.from_dict(d) for fid, d in data.items()}


# ---------------------------------------------------------------------------
# planning (sequential, in index order)


def dominant_sex(p: PortraitAsset) -> str:
    return "M" if p.sex_probs[0] >= p.sex_probs[1] else "F"


def pick_partner(rng: np.random.Generator, portrait: PortraitAsset, candidates: list[PortraitAsset]) -> PortraitAsset | None:
    """A look-alike for morphing: same ethnicity and dominant sex when possible."""
    others = [c for c in candidates if c.id != portrait.id]
    for pred in (lambda c: c.ethnicity == portrait.ethnicity and dominant_sex(c) == dominant_sex(portrait),
                 lambda c: c.ethnicity == portrait.ethnicity, lambda c: True):
        pool = [c for c in others if pred(c)]
        if pool:
            return pool[int(rng.integers(len(pool)))]
    return None


@dataclass
class Job:
    index: int
    seed: int
    identity: dict
    portrait_id: str
    partner_id: str | None
    crop_index: int
    crop_seed: int
    crop_identity: dict
    crop_portrait_id: str
    variants: tuple[str, ...]
    out: str
    pack: str
    portraits: str
    params: str | None
    morph_blend: float
    pools: StaticPools
    write_genuine: bool = True


def plan_jobs(cfg: RunConfig, pack: TemplatePack, qualified: list[PortraitAsset], pools,
              identities: list[IdentityRecord] | None = None) -> list[Job]:
    n = cfg.count
    if identities is None:
        if len(qualified) < n:
            raise PipelineError(f"need {n} qualified portraits, found {len(qualified)}")
        state = IssuanceState()
        identities = [build_identity(stream(cfg.seed, "identity", i), qualified[i], pack, pools, state, cfg.now)
                      for i in range(n)]
    by_id = {p.id: p for p in qualified}
    static = pools if isinstance(pools, StaticPools) else snapshot_pools(pools, pack, [p.ethnicity for p in qualified])
    jobs = []
    for i, ident in enumerate(identities):
        rng = stream(cfg.seed, "pairing", i)
        portrait = by_id[ident.portrait_id]
        partner = pick_partner(rng, portrait, qualified)
        crop = int(rng.integers(n - 1)) if n > 1 else 0
        crop = crop + 1 if n > 1 and crop >= i else crop
        jobs.append(Job(
            index=i, seed=derive_seed(cfg.seed, i), identity=ident.to_dict(), portrait_id=portrait.id,
            partner_id=partner.id if partner else None, crop_index=crop, crop_seed=derive_seed(cfg.seed, crop),
            crop_identity=identities[crop].to_dict(), crop_portrait_id=identities[crop].portrait_id,
            variants=cfg.variants, out=str(cfg.out), pack=str(cfg.pack), portraits=str(cfg.portraits),
            params=str(cfg.params) if cfg.params else None, morph_blend=cfg.morph_blend, pools=static,
        ))
    return jobs


# ---------------------------------------------------------------------------
# work unit: one portrait -> genuine document plus its variants

_CONTEXT: dict = {}


def _context(pack_path: str, portraits_path: str, params_path: str | None):
    key = (pack_path, portraits_path, params_path)
    if key not in _CONTEXT:
        pack = load_template_pack(pack_path)
        corpus = load_portrait_corpus(portraits_path)
        qualified, disqualified = partition_portraits(corpus)
        _CONTEXT.clear()
        _CONTEXT[key] = (pack, {p.id: p for p in corpus}, disqualified,
                         load_params(Path(params_path) if params_path else None))
    return _CONTEXT[key]


def render_genuine(pack: TemplatePack, identity: IdentityRecord, portrait: PortraitAsset,
                   params: dict[str, OverlayParams], seed: int) -> DocumentImage:
    return render_document(pack, identity, params, portrait.image, signature_seed=seed & 0xFFFFFFFF)


def run_job(job: Job) -> list[dict]:
    pack, portraits, disqualified, params = _context(job.pack, job.portraits, job.params)
    identity = IdentityRecord.from_dict(job.identity)
    portrait = portraits[job.portrait_id]
    genuine = render_genuine(pack, identity, portrait, params, job.seed)
    out = Path(job.out)
    gid = doc_id(pack.pack_id, job.index, GENUINE)
    records = []
    for variant in job.variants:
        rng = stream(job.seed, variant)
        fraud = None
        if variant == GENUINE:
            doc = genuine
        elif variant == "face_morph":
            if job.partner_id is None:
                raise PipelineError("no morph partner available")
            doc, fraud = inject_face_morph(genuine, portrait, portraits[job.partner_id],
                                           MorphConfig(job.morph_blend), rng, pack)
        elif variant == "portrait_substitution":
            doc, fraud = inject_portrait_substitution(genuine, disqualified, rng, pack)
        elif variant == "text_replacement":
            doc, fraud = inject_text_replacement(genuine, identity, portrait, "auto", rng, job.pools, pack=pack)
        elif variant == "mixed":
            partner = portraits[job.partner_id] if job.partner_id else None
            inputs = MixedInputs(portrait, partner, disqualified, job.pools, MorphConfig(job.morph_blend))
            doc, fraud = inject_mixed(genuine, identity, inputs, rng, pack)
        elif variant == "inpaint_rewrite":
            doc, fraud = inject_inpaint_rewrite(genuine, pack, identity, rng)
        elif variant == "crop_replace":
            other = render_genuine(pack, IdentityRecord.from_dict(job.crop_identity),
                                   portraits[job.crop_portrait_id], params, job.crop_seed)
            doc, fraud = inject_crop_replace(genuine, other, rng,
                                             partner_doc_id=doc_id(pack.pack_id, job.crop_index, GENUINE))
        else:
            raise PipelineError(f"unknown variant {variant!r}")
        rel = image_path(pack.pack_id, job.index, variant)
        if variant != GENUINE or job.write_genuine:
            write_png(out / rel, doc.pixels)
        entry = ManifestEntry(
            doc_id=doc_id(pack.pack_id, job.index, variant), image_path=rel, identity=job.identity,
            seed=job.seed, pack_id=pack.pack_id, doc_index=job.index, variant=variant,
            fraud=None if fraud is None else fraud.to_dict(), genuine_id=None if fraud is None else gid,
        )
        records.append(json.loads(entry.to_json()))
    return records


# ---------------------------------------------------------------------------


def _resume(manifest: Path, variants: tuple[str, ...]) -> set[int]:
    """Keep the longest prefix of complete work units; drop anything after it (e.g. a torn line)."""
    if not manifest.exists():
        return set()
    entries, problems = read_manifest(manifest)
    by_index: dict[int, list[ManifestEntry]] = {}
    for e in entries:
        by_index.setdefault(e.doc_index, []).append(e)
    done, keep = set(), []
    i = 0
    while i in by_index and tuple(e.variant for e in by_index[i]) == variants:
        done.add(i)
        keep.extend(by_index[i])
        i += 1
    if problems or len(keep) != len(entries):
        log.warning("resume: keeping %d complete documents, discarding %d records", len(done),
                    len(entries) - len(keep) + len(problems))
    with open(manifest, "w", encoding="utf-8") as fh:
        for e in keep:
            fh.write(e.to_json() + "\n")
    return done


def execute_jobs(jobs: list[Job], manifest: Path, threads: int, resume: bool = True,
                 variants: tuple[str, ...] | None = None) -> tuple[int, int]:
    """Run jobs (in parallel when threads > 1) and append records in index order."""
    manifest.parent.mkdir(parents=True, exist_ok=True)
    done = _resume(manifest, variants or jobs[0].variants) if resume and jobs else set()
    if not resume and manifest.exists():
        manifest.unlink()
    todo = [j for j in jobs if j.index not in done]
    n_images = 0
    with open(manifest, "a", encoding="utf-8") as fh:
        if threads > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=threads) as ex:
                results = ex.map(run_job, todo)
                for recs in results:
                    n_images += _append(fh, recs)
        else:
            for job in todo:
                n_images += _append(fh, run_job(job))
    return len(todo), len(done)


def _append(fh, records: list[dict]) -> int:
    for r in records:
        fh.write(ManifestEntry.from_dict(r).to_json() + "\n")
    fh.flush()
    os.fsync(fh.fileno())
    return len(records)


def generate_dataset(cfg: RunConfig, resume: bool = True) -> RunSummary:
    t0 = time.perf_counter()
    pack = load_template_pack(cfg.pack)
    corpus = load_portrait_corpus(cfg.portraits)
    qualified, _ = partition_portraits(corpus)
    if len(qualified) < cfg.count:
        raise PipelineError(f"need {cfg.count} qualified portraits, found {len(qualified)}")
    pools = cfg.pools or PoolSet()
    jobs = plan_jobs(cfg, pack, qualified, pools)
    manifest = cfg.out / MANIFEST_NAME
    ran, skipped = execute_jobs(jobs, manifest, cfg.threads, resume)
    entries, _ = read_manifest(manifest)
    return RunSummary(manifest, ran, len(entries), skipped, time.perf_counter() - t0, entries)


def apply_frauds(manifest_in: Path, cfg: RunConfig) -> RunSummary:
    """Re-render the genuine records of an existing manifest and add the requested fraud variants."""
    t0 = time.perf_counter()
    pack = load_template_pack(cfg.pack)
    corpus = load_portrait_corpus(cfg.portraits)
    qualified, _ = partition_portraits(corpus)
    entries, _ = read_manifest(manifest_in)
    genuine = sorted((e for e in entries if not e.is_fraud), key=lambda e: e.doc_index)
    identities = [IdentityRecord.from_dict(e.identity) for e in genuine]
    known = {p.id for p in qualified}
    missing = [i.portrait_id for i in identities if i.portrait_id not in known]
    if missing:
        raise PipelineError(f"portraits not found among qualified: {missing[:5]}")
    cfg.count = len(identities)
    jobs = plan_jobs(cfg, pack, qualified, cfg.pools or PoolSet(), identities)
    manifest = cfg.out / MANIFEST_NAME
    ran, skipped = execute_jobs(jobs, manifest, cfg.threads, resume=True)
    out_entries, _ = read_manifest(manifest)
    return RunSummary(manifest, ran, len(out_entries), skipped, time.perf_counter() - t0, out_entries)


# ---------------------------------------------------------------------------
# manifest-level transforms


def _suffixed(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}__{suffix}{p.suffix}"))


def privatize_manifest(manifest_in: Path, out: Path, mode: str, seed: int, cfg: PixelDPConfig | None = None,
                       pack: TemplatePack | None = None) -> list[ManifestEntry]:
    """Apply a privacy transform to every image of a manifest; writes a new manifest under `out`."""
    manifest_in, out = Path(manifest_in), Path(out)
    entries, problems = read_manifest(manifest_in)
    if problems:
        log.warning("skipping %d malformed manifest lines", len(problems))
    regions = pack.pii_boxes() if pack is not None else ()
    cfg = cfg or PixelDPConfig()
    descriptor = {"mode": mode}
    if mode == "pixeldp":
        descriptor.update(cfg.to_dict(), sigma=pixeldp_sigma(cfg))
    else:
        descriptor["regions"] = [list(r) for r in regions]
    new = []
    for e in entries:
        img = read_png(manifest_in.parent / e.image_path, "RGB")
        rng = stream(seed, "privacy", e.doc_id) if mode == "pixeldp" else None
        res = apply_privacy(img, mode, regions, cfg, rng)
        rel = _suffixed(e.image_path, mode)
        write_png(out / rel, res)
        new.append(ManifestEntry(
            doc_id=f"{e.doc_id}-{mode}", image_path=rel, identity=e.identity, seed=e.seed, pack_id=e.pack_id,
            doc_index=e.doc_index, variant=e.variant, fraud=e.fraud, composition=e.composition,
            genuine_id=e.genuine_id and f"{e.genuine_id}-{mode}", privacy={**descriptor, "source_doc_id": e.doc_id},
        ))
    write_manifest(out / MANIFEST_NAME, new)
    return new


def compose_manifest(manifest_in: Path, scenes: list[SceneAnnotation] | Path, out: Path,
                     levels: int = DEFAULT_LEVELS) -> list[ManifestEntry]:
    """Insert every image of a manifest into every annotated scene."""
    manifest_in, out = Path(manifest_in), Path(out)
    if not isinstance(scenes, list):
        scenes = [load_scene(p) for p in sorted(Path(scenes).glob("*.json"))]
    if not scenes:
        raise PipelineError("no scene annotations found")
    entries, problems = read_manifest(manifest_in)
    if problems:
        log.warning("skipping %d malformed manifest lines", len(problems))
    new = []
    for e in entries:
        img = read_png(manifest_in.parent / e.image_path, "RGB")
        for ann in scenes:
            rel = _suffixed(e.image_path, ann.name)
            write_png(out / rel, insert_into_scene(img, ann, levels))
            new.append(ManifestEntry(
                doc_id=f"{e.doc_id}-{ann.name}", image_path=rel, identity=e.identity, seed=e.seed,
                pack_id=e.pack_id, doc_index=e.doc_index, variant=e.variant, fraud=e.fraud, privacy=e.privacy,
                genuine_id=e.genuine_id and f"{e.genuine_id}-{ann.name}",
                composition={"scene": ann.name, "quad": ann.quad.tolist(), "levels": levels,
                             "source_doc_id": e.doc_id},
            ))
    write_manifest(out / MANIFEST_NAME, new)
    return new
