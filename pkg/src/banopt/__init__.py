"""Robust relay placement and routing for body area networks."""

from .instance import BanInstance, GeneratorProfile, generate_instance, load_instance, save_instance
from .model import Solution, build_band_ilp, build_rob_band_ilp, evaluate

__all__ = [
    "BanInstance", "GeneratorProfile", "Solution", "build_band_ilp", "build_rob_band_ilp",
    "evaluate", "generate_instance", "load_instance", "save_instance",
]
