"""Sampled complex fields on a 1D grid."""

from dataclasses import dataclass

import numpy as np

from optics.errors import DimensionMismatchError


@dataclass(frozen=True, eq=False)
class SampledField:
    """Complex (or real) amplitude values on a Grid1D"""
    grid: "Grid1D"
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1 or values.shape[0] != self.grid.sample_count:
            raise DimensionMismatchError(
                f"field has shape {values.shape}, grid has {self.grid.sample_count} samples"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains NaN or Inf")
        object.__setattr__(self, "values", values)

    @property
    def positions(self) -> np.ndarray:
        return self.grid.positions

    def __len__(self) -> int:
        return self.values.shape[0]

    def integral(self) -> complex:
        """Riemann sum of the samples times the grid step."""
        return self.values.sum() * self.grid.spacing
