"""Quantum-classical correspondence for one step of the dynamics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .classical import equivalence_classes, transition_matrix
from .errors import ContractError, NumericalFailure
from .interval_map import PiecewiseLinearMap
from .observables import Observable, ObservableSpec, quantize_composed, quantize_observable
from .partitioning import build_partition
from .quantizer import UnitaryPropagator, quantize

DIAGONAL_TOL = 1e-10
OFF_BLOCK_TOL = 1e-12
DENSE_NORM_LIMIT = 2048
ZERO_DEFECT = 1e-13


@dataclass(frozen=True)
class EgorovReport:
    level: int | None
    atom_count: int
    defect: float
    block_max: float
    lipschitz_bound_used: float | None
    diagonal_error: float
    off_block_max: float

    def to_dict(self):
        return {"n": self.level, "M": self.atom_count, "defect": self.defect,
                "block_max": self.block_max}


def egorov_defect(U: UnitaryPropagator, O_phi: Observable, O_phiS: Observable, *,
                  level: int | None = None) -> EgorovReport:
    """Operator norm of ``U O(phi) U^-1 - O(phi o S)``.

    The difference is block diagonal over the equivalence classes (up to a
    permutation), which the report checks and exploits above
    ``DENSE_NORM_LIMIT``.
    """
    M = U.size
    if O_phi.size != M or O_phiS.size != M:
        raise ContractError(f"sizes disagree: U {M}, O(phi) {O_phi.size}, O(phi o S) {O_phiS.size}")
    Us = U.sparse.tocsr()
    Q = (Us @ sp.diags(O_phi.diagonal) @ Us.conj().T).tocsr()
    diag_err = float(np.max(np.abs(Q.diagonal().real - O_phiS.diagonal)))
    if diag_err > DIAGONAL_TOL:
        raise NumericalFailure(f"diag(U O U^*) misses O(phi o S) by {diag_err:.3e}",
                               residual=diag_err)
    D = (Q - sp.diags(O_phiS.diagonal)).tocoo()
    class_of = np.asarray(U.classes.class_of)
    off = class_of[D.row] != class_of[D.col]
    off_max = float(np.max(np.abs(D.data[off]), initial=0.0))
    if off_max > OFF_BLOCK_TOL:
        raise NumericalFailure(f"entries outside class blocks reach {off_max:.3e}", residual=off_max)

    block_max = 0.0
    block_norm = 0.0
    Dc = D.tocsr()
    for rows in U.classes.classes:
        idx = np.asarray(rows)
        blk = Dc[idx][:, idx].toarray()
        if blk.size == 0:
            continue
        block_max = max(block_max, len(rows) * float(np.max(np.abs(blk))))
        if M > DENSE_NORM_LIMIT:
            block_norm = max(block_norm, float(np.linalg.norm(blk, 2)))
    if M > DENSE_NORM_LIMIT:
        defect = block_norm
    else:
        defect = float(np.linalg.norm(Dc.toarray(), 2))
    return EgorovReport(level, M, defect, block_max, O_phi.lipschitz_bound, diag_err, off_max)


@dataclass
class EgorovScaling:
    reports: list
    exponent: float | None
    constant: float | None
    degenerate: bool
    ratios: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return "degenerate: zero defect" if self.degenerate else "fitted"

    def bound_holds(self) -> bool:
        """``defect <= D * Lip / M`` at every level for the fitted ``D``."""
        if self.degenerate or self.constant is None:
            return True
        lip = self.reports[0].lipschitz_bound_used
        if lip is None:
            return True
        return all(r.defect <= self.constant * lip / r.atom_count * (1 + 1e-12)
                   for r in self.reports)

    def rows(self):
        for i, r in enumerate(self.reports):
            last = i == len(self.reports) - 1
            yield {"n": r.level, "M": r.atom_count, "defect": r.defect, "block_max": r.block_max,
                   "fitted_exponent": self.exponent if last else None}


EGOROV_COLUMNS = ("n", "M", "defect", "block_max", "fitted_exponent")


def egorov_level(smap: PiecewiseLinearMap, spec: ObservableSpec, n: int, *,
                 scheme: str = "fourier", user_blocks=None) -> EgorovReport:
    partition = build_partition(smap, n)
    B = transition_matrix(smap, partition)
    U = quantize(B, equivalence_classes(B), scheme, user_blocks)
    O = quantize_observable(spec, partition)
    OS = quantize_composed(spec, smap, partition)
    return egorov_defect(U, O, OS, level=n)


def egorov_scaling(smap: PiecewiseLinearMap, spec: ObservableSpec, levels: Sequence[int], *,
                   scheme: str = "fourier", user_blocks=None) -> EgorovScaling:
    """Least-squares slope of ``log defect`` against ``log M`` over ``levels``."""
    levels = list(levels)
    if len(levels) < 3:
        raise ContractError(f"need at least 3 levels for a fit, got {len(levels)}")
    reports = [egorov_level(smap, spec, n, scheme=scheme, user_blocks=user_blocks)
               for n in levels]
    defects = np.array([r.defect for r in reports])
    Ms = np.array([r.atom_count for r in reports], dtype=float)
    ratios = [float(b / a) if a > ZERO_DEFECT else float("nan")
              for a, b in zip(defects, defects[1:])]
    if np.all(defects <= ZERO_DEFECT):
        return EgorovScaling(reports, None, None, True, ratios)
    usable = defects > ZERO_DEFECT
    if usable.sum() < 3:
        raise ContractError("fewer than 3 levels with a nonzero defect")
    exponent = float(np.polyfit(np.log(Ms[usable]), np.log(defects[usable]), 1)[0])
    lip = reports[0].lipschitz_bound_used
    constant = None
    if lip:
        constant = float(np.max(defects * Ms) / lip)
    return EgorovScaling(reports, exponent, constant, False, ratios)
