"""Fraud-pattern injectors and landmark face morphing."""
from .injectors import (FRAUD_TYPES, ChangedField, FraudError, FraudRecord, MixedInputs, inject_crop_replace,
                        inject_face_morph, inject_inpaint_rewrite, inject_mixed, inject_portrait_substitution,
                        inject_text_replacement)
from .morph import MorphConfig, MorphError, morph_faces

__all__ = [
    "FRAUD_TYPES", "ChangedField", "FraudError", "FraudRecord", "MixedInputs", "MorphConfig", "MorphError",
    "inject_crop_replace", "inject_face_morph", "inject_inpaint_rewrite", "inject_mixed",
    "inject_portrait_substitution", "inject_text_replacement", "morph_faces",
]
