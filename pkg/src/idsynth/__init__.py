"""Deterministic synthetic identity-document datasets with labeled fraud variants."""
from .assets import PortraitAsset, TemplatePack, load_portrait_corpus, load_template_pack
from .compose import SceneAnnotation, insert_into_scene, laplacian_blend, perspective_warp
from .manifest import ManifestEntry, read_manifest
from .metagen import IdentityRecord, build_identity
from .pipeline import RunConfig, apply_frauds, generate_dataset
from .privacy import PixelDPConfig, apply_privacy, pixeldp_sigma
from .quality import audit_dataset, column_entropy, stealthiness_report
from .render import DocumentImage, render_document

__version__ = "0.1.0"

__all__ = [
    "DocumentImage", "IdentityRecord", "ManifestEntry", "PixelDPConfig", "PortraitAsset", "RunConfig",
    "SceneAnnotation", "TemplatePack", "apply_frauds", "apply_privacy", "audit_dataset", "build_identity",
    "column_entropy", "generate_dataset", "insert_into_scene", "laplacian_blend", "load_portrait_corpus",
    "load_template_pack", "perspective_warp", "pixeldp_sigma", "read_manifest", "render_document",
    "stealthiness_report",
]
