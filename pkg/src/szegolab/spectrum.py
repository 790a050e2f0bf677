from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Domain

CLIP_TOL = 1e-6


class SpectrumError(RuntimeError):
    """Eigenvalues of a truncated projection fell measurably outside [0, 1]."""


def clip_unit(ev: np.ndarray, tol: float = CLIP_TOL) -> np.ndarray:
    ev = np.sort(np.asarray(ev, dtype=float))
    if ev.size and (ev[0] < -tol or ev[-1] > 1.0 + tol):
        raise SpectrumError(
            f"truncated spectrum leaves [0, 1] by more than {tol:g} "
            f"(min {ev[0]:.3e}, max {ev[-1]:.6f}); discretisation is inconsistent")
    return np.clip(ev, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class TruncatedSpectrum:
    """Spectrum of 1_{Lambda_L} 1_{<E}(H) 1_{Lambda_L} with provenance."""

    eigenvalues: np.ndarray
    L: float
    engine: str
    domain: Domain
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))
