"""Eigenvectors of the quantum propagator and the variance majorant.

All routines that involve the majorant work with the centred observable, so
the mean never leaks into ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .classical import (DEFAULT_PATH_BUDGET, classical_time_variance, enumerate_paths,
                        equivalence_classes, transition_matrix)
from .errors import ConfigError, ContractError, NumericalFailure
from .interval_map import PiecewiseLinearMap
from .observables import Observable, ObservableSpec, quantize_observable
from .partitioning import build_partition
from .quantizer import UnitaryPropagator, quantize, random_phase_ensemble

EIGEN_TOL = 1e-8
CLUSTER_TOL = 1e-8
IDENTITY_TOL = 1e-9


def identity_tolerance(M: int) -> float:
    """Tolerance for exact identities: ``1e-9`` up to ``M = 2048``, ``M * 1e-12`` above."""
    return IDENTITY_TOL if M <= 2048 else M * 1e-12


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    residual: float
    orthonormality_defect: float
    clusters: tuple = ()

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


def _clusters(eigenvalues: np.ndarray, tol: float) -> tuple:
    order = np.argsort(np.angle(eigenvalues))
    groups, current = [], [int(order[0])]
    for a, b in zip(order, order[1:]):
        if abs(eigenvalues[b] - eigenvalues[a]) <= tol:
            current.append(int(b))
        else:
            groups.append(tuple(current))
            current = [int(b)]
    groups.append(tuple(current))
    # the unit circle wraps around
    if len(groups) > 1 and abs(eigenvalues[groups[0][0]] - eigenvalues[groups[-1][-1]]) <= tol:
        groups[0] = groups[-1] + groups[0]
        groups.pop()
    return tuple(g for g in groups if len(g) > 1)


def eigenbasis(U, *, tol: float = EIGEN_TOL) -> SpectralData:
    """Orthonormal eigenbasis of a unitary matrix via complex Schur form.

    For a normal matrix the triangular Schur factor is diagonal, so the
    unitary Schur vectors are eigenvectors even inside degenerate eigenspaces.
    """
    A = U.matrix if isinstance(U, UnitaryPropagator) else np.asarray(U, dtype=complex)
    T, Z = la.schur(A, output="complex")
    lam = np.diag(T).copy()
    residual = float(np.max(np.linalg.norm(A @ Z - Z * lam[None, :], axis=0)))
    defect = float(np.max(np.abs(Z.conj().T @ Z - np.eye(len(lam)))))
    modulus = float(np.max(np.abs(np.abs(lam) - 1.0)))
    if residual > tol or defect > tol or modulus > tol:
        raise NumericalFailure(
            f"eigen-decomposition failed: residual {residual:.2e}, orthonormality {defect:.2e}, "
            f"|lambda|-1 {modulus:.2e}",
            residual=max(residual, defect, modulus),
        )
    return SpectralData(lam, Z, residual, defect, _clusters(lam, CLUSTER_TOL))


class QuantumMoments(NamedTuple):
    mean: float
    variance: float
    matrix_elements: np.ndarray


def quantum_moments(spec: SpectralData, O: Observable) -> QuantumMoments:
    """Mean and variance of ``<psi_j, O psi_j>`` about the classical mean."""
    if spec.size != O.size:
        raise ContractError(f"{spec.size} eigenvectors but observable of size {O.size}")
    weights = np.abs(spec.eigenvectors) ** 2
    elements = weights.T @ O.diagonal
    mean = float(np.mean(elements))
    variance = float(np.mean((elements - O.mean) ** 2))
    return QuantumMoments(mean, variance, elements)


def majorant_curve(U: UnitaryPropagator, O: Observable, T_max: int) -> np.ndarray:
    """``K(T)`` for ``T = 1 .. T_max`` from one pass of iterated conjugation."""
    if T_max < 1:
        raise ContractError(f"T must be positive, got {T_max}")
    if U.size != O.size:
        raise ContractError(f"U has size {U.size}, observable has {O.size}")
    M = U.size
    Us = U.sparse
    Uh = Us.conj().T.tocsr()
    X = np.diag(O.centered().diagonal).astype(complex)
    acc = X.copy()
    out = np.empty(T_max)
    for T in range(1, T_max + 1):
        if T > 1:
            X = np.asarray(Uh @ np.asarray(X @ Us))  # (U^*)^t O U^t
            acc += X
        OT = acc / T
        out[T - 1] = float(np.vdot(OT, OT).real) / M
    return out


def majorant_K(U: UnitaryPropagator, O: Observable, T: int) -> float:
    """``M^-1 Tr(O_T^* O_T)`` with ``O_T`` the ``T``-step time average of ``O``."""
    return float(majorant_curve(U, O, T)[-1])


def _amplitude_data(U: UnitaryPropagator):
    Us = U.sparse.tocsr()
    Us.sort_indices()
    return Us.indptr.astype(np.int64), Us.indices.astype(np.int64), Us.data


def diagonal_K(U: UnitaryPropagator, O: Observable, T: int, *,
               budget: int = DEFAULT_PATH_BUDGET) -> float:
    """Diagonal part ``M^-1 sum_tau |Phi_tau|^2 |A_tau|^2`` by path enumeration."""
    if T < 1:
        raise ContractError(f"T must be positive, got {T}")
    indptr, indices, data = _amplitude_data(U)
    paths = enumerate_paths(indptr, indices, np.abs(data) ** 2, np.arange(U.size), T,
                            O.centered().diagonal, budget=budget)
    phi = paths.obs_sum / T
    return float(np.sum(phi * phi * paths.weight)) / U.size


@dataclass(frozen=True)
class TrajectorySum:
    s: int
    f: int
    T: int
    paths: np.ndarray      # one row (b_0 .. b_T) per trajectory
    amplitudes: np.ndarray
    averages: np.ndarray   # Phi_tau
    total: complex

    @property
    def terms(self):
        return list(zip(map(tuple, self.paths.tolist()), self.amplitudes, self.averages))


def trajectory_sum(U: UnitaryPropagator, O: Observable, s: int, f: int, T: int, *,
                   budget: int = DEFAULT_PATH_BUDGET) -> TrajectorySum:
    """Sum of ``Phi_tau A_tau`` over all trajectories ``s -> f`` of length ``T``."""
    M = U.size
    if not (0 <= s < M and 0 <= f < M):
        raise ContractError(f"atoms ({s}, {f}) outside 0..{M - 1}")
    if T < 1:
        raise ContractError(f"T must be positive, got {T}")
    indptr, indices, data = _amplitude_data(U)
    paths = enumerate_paths(indptr, indices, data, [s], T, O.centered().diagonal,
                            budget=budget, keep_history=True, weight_dtype=complex)
    hit = paths.current == f
    amps = paths.weight[hit]
    avgs = paths.obs_sum[hit] / T
    return TrajectorySum(s, f, T, paths.history[hit], amps, avgs, complex(np.sum(avgs * amps)))


def propagated_average(U: UnitaryPropagator, O: Observable, T: int) -> np.ndarray:
    """``S_T = U^T O_T``, the matrix whose entries the trajectory sums expand."""
    Us = U.sparse
    Uh = Us.conj().T.tocsr()
    X = np.diag(O.centered().diagonal).astype(complex)
    acc = X.copy()
    for _ in range(1, T):
        X = np.asarray(Uh @ np.asarray(X @ Us))
        acc += X
    OT = acc / T
    P = np.eye(U.size, dtype=complex)
    for _ in range(T):
        P = np.asarray(P @ Us)
    return P @ OT


@dataclass
class VarianceReport:
    level: int
    atom_count: int
    quantum_mean: float
    classical_mean: float
    variance: float
    headline_T: int
    K_curve: dict = field(default_factory=dict)
    K_diag_curve: dict = field(default_factory=dict)
    classical_curve: dict = field(default_factory=dict)

    def violations(self) -> list[str]:
        tol = identity_tolerance(self.atom_count)
        out = []
        for T, K in self.K_curve.items():
            if self.variance > K + tol:
                out.append(f"n={self.level}: V_n={self.variance:.6g} exceeds K(n,{T})={K:.6g}")
            if T <= self.level and T in self.K_diag_curve and abs(K - self.K_diag_curve[T]) > tol:
                out.append(f"n={self.level}: K({T}) != K_diag({T}) inside the exactness window")
        for T, Kd in self.K_diag_curve.items():
            if T in self.classical_curve and abs(Kd - self.classical_curve[T]) > tol:
                out.append(f"n={self.level}: K_diag({T}) != classical variance")
        return out

    def rows(self):
        for T in sorted(self.K_curve):
            yield {
                "n": self.level, "M": self.atom_count, "mean": self.quantum_mean,
                "V_n": self.variance, "T": T, "K": self.K_curve[T],
                "K_diag": self.K_diag_curve.get(T), "V_T_classical": self.classical_curve.get(T),
            }


SWEEP_COLUMNS = ("n", "M", "mean", "V_n", "T", "K", "K_diag", "V_T_classical")


def _headline_T(n: int, T_rule) -> int:
    if T_rule in ("n", None):
        return max(n, 1)
    try:
        T = int(T_rule)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"T rule must be 'n' or an integer, got {T_rule!r}") from exc
    if T < 1:
        raise ConfigError(f"fixed T must be positive, got {T}")
    return T


def variance_report(smap: PiecewiseLinearMap, spec: ObservableSpec, n: int, *,
                    T_values: Sequence[int] | None = None, T_rule="n",
                    U: UnitaryPropagator | None = None, scheme: str = "fourier",
                    user_blocks=None, diag_T_max: int | None = None,
                    budget: int = DEFAULT_PATH_BUDGET, check: bool = True) -> VarianceReport:
    """Everything about one level: quantum moments, ``K``, ``K_diag``, classical variance.

    ``diag_T_max`` caps the path-enumeration curves (they grow exponentially
    in ``T``); the matrix-product curve covers every requested ``T``.
    """
    partition = build_partition(smap, n)
    B = transition_matrix(smap, partition)
    if U is None:
        U = quantize(B, equivalence_classes(B), scheme, user_blocks)
    O = quantize_observable(spec, partition)
    T_head = _headline_T(n, T_rule)
    Ts = sorted(set(T_values or range(1, T_head + 1)) | {T_head})
    data = eigenbasis(U)
    mean, V, _ = quantum_moments(data, O)
    curve = majorant_curve(U, O, max(Ts))
    report = VarianceReport(n, partition.atom_count, mean, O.mean, V, T_head,
                            K_curve={T: float(curve[T - 1]) for T in Ts})
    for T in Ts:
        if diag_T_max is not None and T > diag_T_max:
            continue
        report.K_diag_curve[T] = diagonal_K(U, O, T, budget=budget)
        report.classical_curve[T] = classical_time_variance(smap, partition, O, T, matrix=B,
                                                            budget=budget)
    if check:
        bad = report.violations()
        if bad:
            raise NumericalFailure("; ".join(bad))
    return report


def qe_sweep(smap: PiecewiseLinearMap, spec: ObservableSpec, levels: Sequence[int], *,
             T_rule="n", scheme: str = "fourier", user_blocks=None, seed: int | None = None,
             diag_T_max: int | None = None,
             budget: int = DEFAULT_PATH_BUDGET) -> list[VarianceReport]:
    """Variance reports over a range of levels.

    With ``seed`` set, each level uses the first member of a random-phase
    ensemble instead of the bare Fourier propagator.
    """
    reports = []
    for n in levels:
        U = None
        if seed is not None:
            partition = build_partition(smap, n)
            B = transition_matrix(smap, partition)
            U0 = quantize(B, equivalence_classes(B), scheme, user_blocks)
            U = random_phase_ensemble(U0, seed + n, 1, B=B)[0]
        T_head = _headline_T(n, T_rule)
        reports.append(variance_report(smap, spec, n, T_values=range(1, T_head + 1), T_rule=T_rule,
                                       U=U, scheme=scheme, user_blocks=user_blocks,
                                       diag_T_max=diag_T_max, budget=budget))
    return reports
