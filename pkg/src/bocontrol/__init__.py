"""Benjamin-Ono simulation and two-mode control synthesis on the torus."""

__version__ = "0.1.0"

from .spectral import (
    SpectralField,
    TorusGrid,
    antiderivative,
    dealiased_product,
    derivative,
    galilean_shift,
    gauge_transform,
    hilbert_transform,
    l2_inner,
    project,
    sobolev_norm,
)

__all__ = [
    "SpectralField",
    "TorusGrid",
    "antiderivative",
    "dealiased_product",
    "derivative",
    "galilean_shift",
    "gauge_transform",
    "hilbert_transform",
    "l2_inner",
    "project",
    "sobolev_norm",
]
