"""
Test-statistic functionals of a process on the grid

    D       sup_x |v(x)|
    omega2  integral of v^2 q
    A2      integral of v^2 q / [Q (1 - Q)]

The same functionals apply to projected and rotated processes; rotated
processes are weighted with the reference model's density and cdf.
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np

from k2gof.process.projection import ProcessField
from k2gof.quadrature.grid import GridField, check_same_grid

STAT_KINDS = ("D", "omega2", "A2")
AD_CLAMP = 1e-10
AD_NEGLIGIBLE = 1e-20


@dataclass(frozen=True)
class StatTriple:
    """The three statistics of one process"""

    D: float
    omega2: float
    A2: float
    kind: str

    def as_dict(self) -> Dict[str, float]:
        return {"D": self.D, "omega2": self.omega2, "A2": self.A2}

    def to_dict(self) -> Dict:
        return {**self.as_dict(), "kind": self.kind}

    def __getitem__(self, stat: str) -> float:
        return self.as_dict()[stat]


def stat_sup(v: ProcessField) -> float:
    """Largest absolute process value over the nodes"""
    return float(np.max(np.abs(v.values)))


def stat_cvm(v: ProcessField, q_density: GridField) -> float:
    """Cramer-von Mises: Darboux sum of v^2 q"""
    grid = check_same_grid(v.field, q_density)
    return float(np.sum(v.values**2 * q_density.values) * grid.cell_weight)


def stat_ad(v: ProcessField, q_density: GridField, q_cdf: GridField, eps: float = AD_CLAMP) -> float:
    """
    Anderson-Darling: Darboux sum of v^2 q / [Q (1 - Q)]

    Q is clamped into [eps, 1 - eps]; nodes where the clamp binds and
    v^2 < 1e-20 contribute nothing.
    """
    grid = check_same_grid(v.field, q_density, q_cdf)
    cdf = q_cdf.values
    clamped = np.clip(cdf, eps, 1.0 - eps)
    v2 = v.values**2
    contrib = v2 * q_density.values / (clamped * (1.0 - clamped))
    binds = (cdf < eps) | (cdf > 1.0 - eps)
    contrib = np.where(binds & (v2 < AD_NEGLIGIBLE), 0.0, contrib)
    return float(np.sum(contrib) * grid.cell_weight)


def stat_triple(v: ProcessField, q_density: GridField, q_cdf: GridField) -> StatTriple:
    return StatTriple(
        D=stat_sup(v),
        omega2=stat_cvm(v, q_density),
        A2=stat_ad(v, q_density, q_cdf),
        kind=v.kind,
    )
