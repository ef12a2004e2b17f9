"""Residual summaries shared by the PDE modules."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class ResidualReport:
    """Norms of a residual field.

    ``l2_norm`` is the root-mean-square over all nodes (space-time nodes for
    flows), i.e. the discrete ``L2`` norm on the unit-volume torus normalized
    by the time horizon.  ``slice_profile`` holds the per-slice max norm.
    """

    name: str
    max_norm: float
    l2_norm: float
    slice_profile: list[float] = field(default_factory=list)

    @classmethod
    def from_field(cls, name: str, r: np.ndarray, time_axis: bool = False) -> "ResidualReport":
        r = np.asarray(r, dtype=float)
        a = np.abs(r)
        profile = [float(x) for x in a.reshape(a.shape[0], -1).max(axis=1)] if time_axis else []
        return cls(name, float(a.max()) if a.size else 0.0, float(np.sqrt(np.mean(r * r))) if r.size else 0.0, profile)

    def to_dict(self) -> dict:
        return asdict(self)


def convergence_orders(errors) -> list[float]:
    """``log2(e_k / e_{k+1})`` for successive refinements by a factor of two."""
    e = np.asarray(errors, dtype=float)
    return [float(np.log2(a / b)) if a > 0 and b > 0 else float("inf") for a, b in zip(e[:-1], e[1:])]
