"""Command-line entry point: idsynth <subcommand> [options]."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import date
from pathlib import Path

from .assets import load_template_pack
from .compose import DEFAULT_LEVELS
from .fraud.injectors import FRAUD_TYPES
from .imageio import read_png
from .manifest import read_manifest
from .optimize.ssim import ssim
from .optimize.tuning import FullObjective, tune_document
from .pipeline import (MANIFEST_NAME, RunConfig, apply_frauds, compose_manifest, generate_dataset, load_params,
                       privatize_manifest)
from .plotting import plot_entropies, plot_stealthiness, plot_tuning_trace
from .pools import HttpProvider, OfflineCorpus, PoolSet
from .privacy import MODES, PixelDPConfig
from .quality import SsimStats, audit_dataset, per_pair_rows, stealthiness_report
from .samples import make_demo_pack, make_demo_portraits, make_demo_scene

log = logging.getLogger("idsynth")


def _date(s: str) -> date:
    try:
        return date.fromisoformat(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {s!r}") from None


def _frauds(s: str) -> tuple[str, ...]:
    if s == "all":
        return FRAUD_TYPES
    out = tuple(x.strip() for x in s.split(",") if x.strip())
    bad = [x for x in out if x not in FRAUD_TYPES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown fraud types {bad}; choose from {', '.join(FRAUD_TYPES)} or all")
    return out


def _pools(args) -> PoolSet:
    corpus = OfflineCorpus()
    provider = HttpProvider(fallback=corpus) if args.provider == "http" else corpus
    return PoolSet(provider, cache_dir=args.pool_cache)


def _common(p: argparse.ArgumentParser, *, generation: bool = True) -> None:
    p.add_argument("--seed", type=int, required=True, help="master seed (mandatory)")
    p.add_argument("--pack", type=Path, required=generation, help="template pack directory")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    if generation:
        p.add_argument("--portraits", type=Path, required=True, help="portrait corpus directory")
        p.add_argument("--now", type=_date, required=True, help="date anchor, YYYY-MM-DD")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--provider", choices=("offline", "http"), default="offline")
        p.add_argument("--pool-cache", type=Path, default=None, help="cache directory for text pools")
        p.add_argument("--params", type=Path, default=None, help="tuned overlay params JSON")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idsynth", description="Synthetic identity-document dataset generator.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="genuine documents plus fraud variants")
    _common(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--frauds", type=_frauds, default=FRAUD_TYPES, help="comma list or 'all'")
    p.add_argument("--no-resume", action="store_true", help="start over instead of resuming")

    p = sub.add_parser("fraud", help="add fraud variants to an existing manifest")
    _common(p)
    p.add_argument("--in", dest="manifest_in", type=Path, required=True)
    p.add_argument("--type", dest="frauds", type=_frauds, default=FRAUD_TYPES)

    p = sub.add_parser("privacy", help="masking or PixelDP over a manifest")
    _common(p, generation=False)
    p.add_argument("--in", dest="manifest_in", type=Path, required=True)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--L", type=float, default=PixelDPConfig.L)
    p.add_argument("--epsilon", type=float, default=PixelDPConfig.epsilon)
    p.add_argument("--delta", type=float, default=PixelDPConfig.delta)
    p.add_argument("--no-clamp", action="store_true")

    p = sub.add_parser("audit", help="diversity, uniqueness, dependency, fidelity and stealthiness report")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True, help="JSON report path")
    p.add_argument("--figures", type=Path, default=None, help="directory for PNG figures and CSV tables")
    p.add_argument("--pack", type=Path, default=None, help="pack with reference image, for fidelity")
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--no-images", action="store_true", help="skip SSIM (metadata audit only)")

    p = sub.add_parser("compose", help="insert manifest images into annotated scenes")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--scenes", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS)

    p = sub.add_parser("tune", help="fit overlay params against a reference image")
    p.add_argument("--pack", type=Path, required=True)
    p.add_argument("--reference", type=Path, default=None, help="defaults to the pack's reference image")
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="params JSON path")
    p.add_argument("--trace", type=Path, default=None, help="trace CSV (default: next to --out)")
    p.add_argument("--figure", type=Path, default=None, help="convergence PNG (default: next to --out)")

    p = sub.add_parser("demo", help="write a demo pack, portrait corpus and scene")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--portraits", type=int, default=120)
    p.add_argument("--seed", type=int, default=7)
    return ap


def cmd_generate(args) -> int:
    cfg = RunConfig(args.pack, args.portraits, args.out, args.count, args.seed, args.now, args.frauds,
                    args.threads, _pools(args), args.params)
    s = generate_dataset(cfg, resume=not args.no_resume)
    print(f"{s.n_images} images in {s.manifest} ({s.n_documents} documents rendered, {s.skipped} resumed, "
          f"{s.docs_per_second:.2f} doc/s)")
    return 0


def cmd_fraud(args) -> int:
    cfg = RunConfig(args.pack, args.portraits, args.out, 0, args.seed, args.now, args.frauds, args.threads,
                    _pools(args), args.params)
    s = apply_frauds(args.manifest_in, cfg)
    print(f"{s.n_images} images in {s.manifest}")
    return 0


def cmd_privacy(args) -> int:
    pack = load_template_pack(args.pack) if args.pack else None
    if args.mode == "masking" and pack is None:
        raise SystemExit("privacy --mode masking needs --pack for the PII regions")
    cfg = PixelDPConfig(epsilon=args.epsilon, delta=args.delta, L=args.L, clamp=not args.no_clamp)
    entries = privatize_manifest(args.manifest_in, args.out, args.mode, args.seed, cfg, pack)
    print(f"{len(entries)} images in {args.out / MANIFEST_NAME}")
    return 0


def _fidelity(pack_dir: Path, params_path: Path | None) -> float:
    pack = load_template_pack(pack_dir)
    params = {**pack.default_params(), **load_params(params_path)}
    obj = FullObjective(pack, None)
    return ssim(obj.render(params), obj.ref)


def cmd_audit(args) -> int:
    entries, problems = read_manifest(args.manifest)
    report = audit_dataset(entries)
    report.malformed += [f"line {n}: {msg}" for n, msg in problems]
    if not args.no_images:
        report.stealthiness = stealthiness_report(entries, args.manifest.parent)
    if args.pack is not None:
        report.fidelity = SsimStats.of([_fidelity(args.pack, args.params)])
    report.write(args.report)
    if args.figures is not None:
        args.figures.mkdir(parents=True, exist_ok=True)
        if report.column_entropies:
            plot_entropies(report.column_entropies, args.figures / "entropy.png")
        with open(args.figures / "entropy.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["column", "bits"])
            w.writerows(sorted(report.column_entropies.items()))
        if report.stealthiness:
            plot_stealthiness(report.stealthiness, args.figures / "stealthiness.png")
            with open(args.figures / "stealthiness.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["fraud_type", "index", "ssim"])
                w.writerows(per_pair_rows(report.stealthiness))
    print(json.dumps({
        "n_records": report.n_records,
        "uniqueness_violations": len(report.uniqueness_violations),
        "dependency_violations": len(report.dependency_violations),
        "stealthiness": {k: round(v.mean, 4) for k, v in sorted(report.stealthiness.items())},
    }))
    return 0 if report.conforming else 1


def cmd_compose(args) -> int:
    entries = compose_manifest(args.manifest, args.scenes, args.out, args.levels)
    print(f"{len(entries)} images in {args.out / MANIFEST_NAME}")
    return 0


def cmd_tune(args) -> int:
    pack = load_template_pack(args.pack)
    reference = read_png(args.reference, "RGB") if args.reference else None
    res = tune_document(pack, reference, budget_per_segment=args.budget, rng=args.seed)
    trace = args.trace or args.out.with_suffix(".trace.csv")
    figure = args.figure or args.out.with_suffix(".trace.png")
    res.write(args.out, trace)
    plot_tuning_trace(res.reports, figure)
    print(f"full-image SSIM {res.ssim_before:.4f} -> {res.ssim_after:.4f}; params {args.out}, trace {trace}")
    return 0


def cmd_demo(args) -> int:
    out = args.out
    make_demo_pack(out / "pack", seed=args.seed)
    make_demo_portraits(out / "portraits", args.portraits)
    make_demo_scene(out / "scenes")
    print(f"demo assets in {out}: pack/, portraits/, scenes/")
    return 0


COMMANDS = {"generate": cmd_generate, "fraud": cmd_fraud, "privacy": cmd_privacy, "audit": cmd_audit,
            "compose": cmd_compose, "tune": cmd_tune, "demo": cmd_demo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
