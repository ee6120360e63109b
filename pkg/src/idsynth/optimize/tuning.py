"""Per-segment search for overlay parameters that make a rendering match a reference sample."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.stats import qmc

from ..assets import TemplatePack
from ..imageio import luminance
from ..overlay import OverlayParams
from ..rng import derive_seed
from ..render import RenderError, TextOverflowError, render_text_field, template_rgb
from .gp import GaussianProcess, expected_improvement, fit_length_scales
from .ssim import DEFAULT, SsimConfig, ssim

log = logging.getLogger(__name__)

N_INITIAL = 20
COLOR_LEVELS = 32
N_RANDOM_CANDIDATES = 256
N_LOCAL_CANDIDATES = 1024
FAILED = -1.0
GUIDE_SIGMA = 3.0
DIMS = ("size_pt", "r", "g", "b", "stroke_width", "dx", "dy")


class TuneError(ValueError):
    pass


@dataclass(frozen=True)
class SearchSpace:
    fonts: tuple[str, ...]
    size_pt: tuple[float, float] = (8.0, 32.0)
    stroke_width: tuple[float, float] = (0.0, 1.49)
    offset: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        if not self.fonts:
            raise TuneError("empty search space: no fonts")
        for name in ("size_pt", "stroke_width", "offset"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise TuneError(f"empty search space: {name} range [{lo}, {hi}]")
        if self.size_pt[0] <= 0 or self.stroke_width[0] < 0:
            raise TuneError("search space admits invalid parameters")

    @classmethod
    def from_pack(cls, pack: TemplatePack, overrides: dict | None = None) -> "SearchSpace":
        d = {**pack.search_space, **(overrides or {})}
        kw = {k: tuple(float(v) for v in d[k]) for k in ("size_pt", "stroke_width", "offset") if k in d}
        return cls(fonts=tuple(d.get("fonts", pack.fonts)), **kw)

    def _bounds(self):
        lo = np.array([self.size_pt[0], 0, 0, 0, self.stroke_width[0], self.offset[0], self.offset[0]])
        hi = np.array([self.size_pt[1], 1, 1, 1, self.stroke_width[1], self.offset[1], self.offset[1]])
        return lo, hi

    def decode(self, font_index: int, u: np.ndarray) -> OverlayParams:
        lo, hi = self._bounds()
        v = lo + np.clip(u, 0, 1) * (hi - lo)
        color = tuple(int(round(round(c * (COLOR_LEVELS - 1)) * 255 / (COLOR_LEVELS - 1))) for c in v[1:4])
        return OverlayParams(self.fonts[font_index], round(float(v[0]), 2), color,
                             round(float(v[4]), 3), (round(float(v[5]), 2), round(float(v[6]), 2)))

    def encode(self, params: OverlayParams) -> tuple[int, np.ndarray]:
        lo, hi = self._bounds()
        v = np.array([params.size_pt, *(c / 255 for c in params.color), params.stroke_width, *params.offset])
        u = np.clip((v - lo) / (hi - lo), 0, 1)
        fi = self.fonts.index(params.font_id) if params.font_id in self.fonts else 0
        return fi, u


@dataclass
class TuneReport:
    segment: str
    best_params: OverlayParams
    trace: list[tuple[int, float, float]]
    budget: int
    initial_params: OverlayParams | None = None
    evaluations: list[tuple[int, dict, float]] = field(default_factory=list)

    @property
    def initial_score(self) -> float:
        return self.trace[0][1]

    @property
    def best_score(self) -> float:
        return self.trace[-1][1]

    def write_trace_csv(self, path: str | Path) -> None:
        write_trace_csv({self.segment: self}, path)


@dataclass
class DocumentTuneResult:
    params: dict[str, OverlayParams]
    reports: dict[str, TuneReport]
    ssim_before: float
    ssim_after: float

    @property
    def improvement(self) -> float:
        return self.ssim_after - self.ssim_before

    def params_json(self) -> dict:
        return {fid: p.to_dict() for fid, p in sorted(self.params.items())}

    def write(self, params_path: str | Path, trace_path: str | Path | None = None) -> None:
        out = {"ssim_before": self.ssim_before, "ssim_after": self.ssim_after, "params": self.params_json()}
        Path(params_path).parent.mkdir(parents=True, exist_ok=True)
        Path(params_path).write_text(json.dumps(out, indent=2) + "\n")
        if trace_path is not None:
            write_trace_csv(self.reports, trace_path)


def write_trace_csv(reports: dict[str, TuneReport], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "step", "segment_ssim", "full_image_ssim"])
        for seg, rep in reports.items():
            for step, s, f in rep.trace:
                w.writerow([seg, step, f"{s:.6f}", f"{f:.6f}"])


# ---------------------------------------------------------------------------
# objectives


def tuning_canvas(pack: TemplatePack, reference: np.ndarray) -> np.ndarray:
    """Template with every non-text field region copied from the reference, so only text differs."""
    base = template_rgb(pack)
    for f in pack.fields:
        if f.kind != "text":
            sl = f.slice(0, base.shape[:2])
            base[sl] = reference[sl]
    return base


def _reference_rgb(pack: TemplatePack, reference) -> np.ndarray:
    if reference is None:
        reference = pack.reference_image
    if reference is None:
        raise TuneError("no reference image")
    ref = np.asarray(reference)
    if ref.ndim == 3 and ref.shape[2] == 4:
        ref = ref[..., :3]
    W, H = pack.size
    if ref.shape[:2] != (H, W):
        raise TuneError(f"reference is {ref.shape[1]}x{ref.shape[0]}, template is {W}x{H}")
    return ref.astype(np.uint8)


def _values(pack: TemplatePack, values: dict | None) -> dict[str, str]:
    values = dict(pack.reference_values if values is None else values)
    missing = [f.source for f in pack.fields_of("text") if f.source not in values]
    if missing:
        raise TuneError(f"reference values missing for sources {missing}")
    return values


class FullObjective:
    def __init__(self, pack: TemplatePack, reference, values=None, cfg: SsimConfig = DEFAULT):
        self.pack = pack
        self.ref = _reference_rgb(pack, reference)
        self.values = _values(pack, values)
        self.cfg = cfg
        self.base = tuning_canvas(pack, self.ref)
        self.ref_lum = luminance(self.ref)

    def render(self, params: dict[str, OverlayParams]) -> np.ndarray:
        px = self.base.copy()
        for f in self.pack.fields_of("text"):
            render_text_field(px, self.pack, f, self.values[f.source], params[f.id])
        return px

    def __call__(self, params: dict[str, OverlayParams]) -> float:
        try:
            px = self.render(params)
        except RenderError as e:
            log.warning("full render failed: %s", e)
            return FAILED
        return ssim(luminance(px), self.ref_lum, self.cfg)


class SegmentObjective:
    """SSIM restricted to the union of the segment's (slack-expanded) text boxes."""

    def __init__(self, pack: TemplatePack, segment: str, reference, values=None, cfg: SsimConfig = DEFAULT):
        fields = [f for f in pack.fields_of("text") if f.segment == segment]
        if not fields:
            raise TuneError(f"segment {segment!r} has no text fields")
        self.pack, self.segment, self.fields, self.cfg = pack, segment, fields, cfg
        ref = _reference_rgb(pack, reference)
        self.values = _values(pack, values)
        H, W = ref.shape[:2]
        s = pack.slack
        x0 = max(min(f.x for f in fields) - s, 0)
        y0 = max(min(f.y for f in fields) - s, 0)
        x1 = min(max(f.x + f.w for f in fields) + s, W)
        y1 = min(max(f.y + f.h for f in fields) + s, H)
        self.region = (x0, y0, x1 - x0, y1 - y0)
        self.base = tuning_canvas(pack, ref)[y0:y1, x0:x1].copy()
        self.ref_lum = luminance(ref[y0:y1, x0:x1])
        # field boxes in crop coordinates; text may spill past the crop and is clipped
        self.local = [replace(f, bbox=(f.x - x0, f.y - y0, f.w, f.h)) for f in fields]

        self.ref_coarse = gaussian_filter(self.ref_lum, GUIDE_SIGMA)

    def evaluate(self, params: OverlayParams) -> tuple[float, float]:
        """(segment SSIM, search guide). The guide averages SSIM at full and coarse scale,
        which keeps the optimum but widens its basin of attraction."""
        px = self.base.copy()
        try:
            for f in self.local:
                render_text_field(px, self.pack, f, self.values[f.source], params)
        except TextOverflowError as e:
            log.info("segment %s: trial %s failed: %s", self.segment, params, e)
            return FAILED, FAILED
        lum = luminance(px)
        fine = ssim(lum, self.ref_lum, self.cfg)
        coarse = ssim(gaussian_filter(lum, GUIDE_SIGMA), self.ref_coarse, self.cfg)
        return fine, 0.5 * (fine + coarse)

    def __call__(self, params: OverlayParams) -> float:
        return self.evaluate(params)[0]


# ---------------------------------------------------------------------------
# search


class TrustRegion:
    """Box around the incumbent that grows after successes and shrinks after failures."""

    def __init__(self, length: float = 0.4, lo: float = 0.02, hi: float = 0.8, grow_after: int = 2,
                 shrink_after: int = 4):
        self.init, self.length, self.lo, self.hi = length, length, lo, hi
        self.grow_after, self.shrink_after = grow_after, shrink_after
        self.wins = self.losses = 0

    def update(self, improved: bool) -> None:
        if improved:
            self.wins, self.losses = self.wins + 1, 0
        else:
            self.wins, self.losses = 0, self.losses + 1
        if self.wins >= self.grow_after:
            self.length, self.wins = min(2 * self.length, self.hi), 0
        elif self.losses >= self.shrink_after:
            self.length, self.losses = self.length / 2, 0
            if self.length < self.lo:
                self.length = self.init


def _candidates(rng: np.random.Generator, center: np.ndarray, length: float, d: int) -> np.ndarray:
    box = center + (rng.random((N_LOCAL_CANDIDATES, d)) - 0.5) * length
    # perturb only a random subset of coordinates for most local candidates
    mask = rng.random((N_LOCAL_CANDIDATES, d)) < np.maximum(2.0 / d, rng.random((N_LOCAL_CANDIDATES, 1)))
    local = np.where(mask, box, center)
    return np.clip(np.concatenate([local, rng.random((N_RANDOM_CANDIDATES, d))]), 0.0, 1.0)


def tune_segment(pack: TemplatePack, segment: str, reference=None, space: SearchSpace | dict | None = None,
                 budget: int = 100, rng: np.random.Generator | int | None = 0,
                 initial: OverlayParams | None = None, cfg: SsimConfig = DEFAULT,
                 full_objective: FullObjective | None = None,
                 base_params: dict[str, OverlayParams] | None = None) -> TuneReport:
    """GP/EI search over one segment's shared overlay params.

    Step 0 scores the initial params, steps 1..20 a scrambled Sobol design with fonts
    assigned round-robin, later steps the argmax of expected improvement across one GP
    per font. The evaluation sequence does not depend on `budget`, so a longer run
    extends a shorter one with the same rng.
    """
    if budget < 0:
        raise TuneError("budget must be nonnegative")
    if not isinstance(space, SearchSpace):
        space = SearchSpace.from_pack(pack, space)
    rng = np.random.default_rng(rng)
    objective = SegmentObjective(pack, segment, reference, cfg=cfg)
    full = full_objective or FullObjective(pack, reference, cfg=cfg)
    base_params = {**pack.default_params(), **(base_params or {})}
    fields = [f.id for f in objective.fields]
    if initial is None:
        initial = base_params[fields[0]]

    def full_score(p: OverlayParams) -> float:
        return full({**base_params, **{fid: p for fid in fields}})

    n_fonts, d = len(space.fonts), len(DIMS)
    sobol = qmc.Sobol(d, scramble=True, seed=rng).random_base2(5)[:N_INITIAL]

    fi0, u0 = space.encode(initial)
    score0, guide0 = objective.evaluate(initial)
    obs_f, obs_x, obs_y = [fi0], [u0], [guide0]
    best, best_score, best_full = initial, score0, full_score(initial)
    trace = [(0, best_score, best_full)]
    evals = [(0, initial.to_dict(), score0)]

    region = TrustRegion()
    surrogate = _Surrogate(n_fonts, d)
    for step in range(1, budget + 1):
        if step <= N_INITIAL:
            fi, u = (step - 1) % n_fonts, sobol[step - 1]
        else:
            fi, u = surrogate.propose(rng, obs_f, obs_x, obs_y, region)
        params = space.decode(fi, u)
        score, guide = objective.evaluate(params)
        obs_f.append(fi)
        obs_x.append(u)
        obs_y.append(guide)
        evals.append((step, params.to_dict(), score))
        if step > N_INITIAL:
            region.update(guide > max(obs_y[:-1]))
        if score > best_score:
            best, best_score = params, score
            best_full = full_score(best)
        trace.append((step, best_score, best_full))
    return TuneReport(segment, best, trace, budget, initial, evals)


class _Surrogate:
    """One GP per font sharing per-dimension length scales, refit every few steps."""

    REFIT_EVERY = 5

    def __init__(self, n_fonts: int, dim: int):
        self.n_fonts, self.dim = n_fonts, dim
        self.length = np.full(dim, 0.3)
        self.calls = 0

    def propose(self, rng, obs_f, obs_x, obs_y, region: TrustRegion) -> tuple[int, np.ndarray]:
        f = np.asarray(obs_f)
        x = np.asarray(obs_x)
        y = np.asarray(obs_y, dtype=np.float64)
        ok = y > FAILED
        # failed trials enter the surrogate at the worst successful score
        y = np.where(ok, y, y[ok].min() if ok.any() else 0.0)
        # stretch the region near SSIM = 1 where the objective is sharply peaked
        z = -np.log1p(-np.minimum(y, 1 - 1e-4))
        ys = (z - z.mean()) / (z.std() if z.std() > 1e-12 else 1.0)
        groups = [(x[f == fi], ys[f == fi]) for fi in range(self.n_fonts)]
        if self.calls % self.REFIT_EVERY == 0:
            self.length = fit_length_scales(groups, self.dim, start=self.length)
        self.calls += 1
        best = ys.max()
        incumbent = x[int(np.argmax(ys))]
        choice = None
        for fi, (xf, yf) in enumerate(groups):
            gp = GaussianProcess(self.length).fit(xf, yf)
            cands = _candidates(rng, incumbent, region.length, self.dim)
            m, sd = gp.predict(cands)
            ei = expected_improvement(m, sd, best)
            j = int(np.argmax(ei))
            if choice is None or ei[j] > choice[0]:
                choice = (ei[j], fi, cands[j])
        return choice[1], choice[2]


def tune_document(pack: TemplatePack, reference=None, budget_per_segment: int = 100,
                  rng: np.random.Generator | int | None = 0, space: SearchSpace | dict | None = None,
                  segments: list[str] | None = None, cfg: SsimConfig = DEFAULT) -> DocumentTuneResult:
    """Tune each segment independently and compose the full per-field parameter map.

    Each segment draws from its own stream derived from `rng` and the segment name,
    so results do not depend on the order segments are visited.
    """
    defaults = pack.default_params()
    if reference is None and pack.reference_image is None:
        log.info("pack %s has no reference; using default params verbatim", pack.pack_id)
        return DocumentTuneResult(defaults, {}, float("nan"), float("nan"))
    seed = rng if isinstance(rng, int) else int(np.random.default_rng(rng).integers(2**63))
    full = FullObjective(pack, reference, cfg=cfg)
    before = full(defaults)
    params = dict(defaults)
    reports = {}
    for seg in segments or pack.segments():
        rep = tune_segment(pack, seg, reference, space, budget_per_segment,
                           np.random.default_rng(derive_seed(seed, "tune", seg)), cfg=cfg, full_objective=full)
        reports[seg] = rep
        for f in pack.fields_of("text"):
            if f.segment == seg:
                params[f.id] = rep.best_params
    return DocumentTuneResult(params, reports, before, full(params))
