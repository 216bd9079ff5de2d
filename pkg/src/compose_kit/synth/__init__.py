from .dataset import (
    DatasetManifest,
    Sample,
    canonicalize_cylinder_rotation,
    generate_sample,
    generate_split,
    load_dataset,
    occlusion_augment,
    render_partial,
    sample_pose,
    write_dataset,
)
from .shapes import CATEGORIES, ShapeSpec, generate_shape, sample_shape_spec

__all__ = [
    "CATEGORIES",
    "DatasetManifest",
    "Sample",
    "ShapeSpec",
    "canonicalize_cylinder_rotation",
    "generate_sample",
    "generate_split",
    "generate_shape",
    "load_dataset",
    "occlusion_augment",
    "render_partial",
    "sample_pose",
    "sample_shape_spec",
    "write_dataset",
]
