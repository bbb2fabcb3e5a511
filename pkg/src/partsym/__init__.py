"""Part symmetry detection, score-based symmetry sampling, part assembly and shape metrics."""

__version__ = "0.1.0"

from .geom import PointCloud, ReflectionPlane, RigidTransform, normalize_cloud, reflect_point
from .symgroup import GeneratorSet, SymmetryGroup, extract_fundamental_domain, generate_group
from .detect import DetectConfig, detect_symmetry_group
from .metrics import MetricKind, chamfer, emd, one_nna, sdi, sdi_default
from .assembly import Assembler, AssemblerSet, apply_assembler, compose_shape, fit_assembler

__all__ = [
    "Assembler",
    "AssemblerSet",
    "DetectConfig",
    "GeneratorSet",
    "MetricKind",
    "PointCloud",
    "ReflectionPlane",
    "RigidTransform",
    "SymmetryGroup",
    "apply_assembler",
    "chamfer",
    "compose_shape",
    "detect_symmetry_group",
    "emd",
    "extract_fundamental_domain",
    "fit_assembler",
    "generate_group",
    "normalize_cloud",
    "one_nna",
    "reflect_point",
    "sdi",
    "sdi_default",
]
