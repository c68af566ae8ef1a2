"""Set-based generative novel view synthesis toolkit (desk-scale)."""

from .geometry import Camera, RigidTransform, build_ray_map, fourier_encode, fundamental_matrix
from .plan import GenerationPlan, ViewSpec, depth, validate

__version__ = "0.1.0"
