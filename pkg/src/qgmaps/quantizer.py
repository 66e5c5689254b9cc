"""Unitary quantisation of doubly stochastic matrices."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .classical import EquivalenceClasses, StochasticMatrix
from .errors import ConfigError, NumericalFailure, UnistochasticityError

UNITARITY_TOL = 1e-10
MODULUS_TOL = 1e-12

SCHEMES = ("fourier", "user_supplied")


@dataclass(frozen=True)
class UnitaryPropagator:
    """Unitary ``U`` with ``|U_jk|**2 = B_jk``, stored sparse.

    ``matrix`` gives the dense array; the sparse form is what the heavy
    routines use since each row has only ``|slope|`` nonzeros.
    """

    sparse: sp.csr_matrix
    classes: EquivalenceClasses
    phase_scheme: str
    unitarity_residual: float
    modulus_residual: float

    @property
    def size(self) -> int:
        return self.sparse.shape[0]

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.sparse.toarray()

    def moduli_squared(self) -> sp.csr_matrix:
        out = self.sparse.copy()
        out.data = np.abs(out.data) ** 2
        return out


def fourier_block(s: int) -> np.ndarray:
    """``F[j, k] = exp(2 pi i j k / s) / sqrt(s)`` with ``j, k = 0 .. s-1``."""
    idx = np.arange(s)
    return np.exp(2j * np.pi * np.outer(idx, idx) / s) / np.sqrt(s)


def _class_block(B: StochasticMatrix, rows, cols) -> np.ndarray:
    pos = {k: i for i, k in enumerate(cols)}
    block = np.zeros((len(rows), len(cols)))
    for a, j in enumerate(rows):
        for k, v in B.rows[j]:
            block[a, pos[k]] = float(v)
    return block


def _residuals(U: sp.csr_matrix, B: StochasticMatrix) -> tuple[float, float]:
    M = U.shape[0]
    gram = (U.conj().T @ U - sp.identity(M, format="csr")).tocoo()
    unitarity = float(np.max(np.abs(gram.data), initial=0.0))
    diff = (abs(U).power(2) - B.to_sparse()).tocoo()
    modulus = float(np.max(np.abs(diff.data), initial=0.0))
    return unitarity, modulus


def _support_ok(U: sp.csr_matrix, B: StochasticMatrix) -> bool:
    indptr, indices = B.csr_structure()
    Uc = U.tocsr().copy()
    Uc.eliminate_zeros()
    Uc.sort_indices()
    for j in range(B.size):
        allowed = set(indices[indptr[j]:indptr[j + 1]].tolist())
        if not set(Uc.indices[Uc.indptr[j]:Uc.indptr[j + 1]].tolist()) <= allowed:
            return False
    return True


def quantize(B: StochasticMatrix, classes: EquivalenceClasses, scheme: str = "fourier",
             user_blocks: Sequence[np.ndarray] | Callable | None = None) -> UnitaryPropagator:
    """Assemble ``U`` class by class.

    With ``scheme="fourier"`` every class must be square with uniform entries
    ``1/s``, and receives the ``s x s`` discrete Fourier block on its rows
    and (ascending) column support.  With ``scheme="user_supplied"``,
    ``user_blocks`` is either a sequence indexed by class or a callable
    ``(rows, cols, B_block) -> unitary block``.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown phase scheme {scheme!r}; choose from {SCHEMES}")
    if scheme == "user_supplied" and user_blocks is None:
        raise ConfigError("user_supplied scheme needs per-class unitaries")
    r_idx, c_idx, vals = [], [], []
    for c, rows in enumerate(classes.classes):
        cols = classes.columns(B, c)
        if len(cols) != len(rows):
            raise UnistochasticityError(
                f"class {c} has {len(rows)} rows but {len(cols)} columns; no square block exists"
            )
        block_B = _class_block(B, rows, cols)
        s = len(rows)
        if scheme == "fourier":
            if not np.all(block_B == 1.0 / s):
                raise UnistochasticityError(
                    f"class {c} (atoms {rows}) has non-uniform entries; the Fourier block "
                    f"cannot reproduce it"
                )
            block = fourier_block(s)
        else:
            block = user_blocks(rows, cols, block_B) if callable(user_blocks) else user_blocks[c]
            block = np.asarray(block, dtype=complex)
            if block.shape != (s, s):
                raise UnistochasticityError(f"class {c}: expected a {s}x{s} block, got {block.shape}")
            err = float(np.max(np.abs(np.abs(block) ** 2 - block_B)))
            if err > MODULUS_TOL:
                raise UnistochasticityError(
                    f"class {c}: block moduli miss B by {err:.3e}", residual=err
                )
        for a, j in enumerate(rows):
            for b, k in enumerate(cols):
                if block_B[a, b] != 0:
                    r_idx.append(j)
                    c_idx.append(k)
                    vals.append(block[a, b])
    M = B.size
    U = sp.csr_matrix((np.array(vals, dtype=complex), (r_idx, c_idx)), shape=(M, M))
    U.sort_indices()
    return _finish(U, B, classes, scheme)


def _finish(U, B, classes, scheme) -> UnitaryPropagator:
    unitarity, modulus = _residuals(U, B)
    if unitarity > UNITARITY_TOL:
        raise NumericalFailure(f"U is not unitary: residual {unitarity:.3e}", residual=unitarity)
    if modulus > MODULUS_TOL:
        raise NumericalFailure(f"|U|^2 misses B by {modulus:.3e}", residual=modulus)
    if not _support_ok(U, B):
        raise NumericalFailure("U has entries outside the support of B")
    return UnitaryPropagator(U, classes, scheme, unitarity, modulus)


def _uniform_phases(rng: np.random.Generator, M: int) -> np.ndarray:
    return rng.uniform(0.0, 2 * np.pi, size=M)


def random_phase_ensemble(U: UnitaryPropagator, seed: int, count: int, *,
                          B: StochasticMatrix | None = None,
                          phase_sampler: Callable = _uniform_phases) -> list[UnitaryPropagator]:
    """``D_m @ U`` for ``m = 0 .. count-1`` with i.i.d. uniform diagonal phases.

    Member ``m`` draws from a PCG64 stream seeded by ``SeedSequence(seed,
    spawn_key=(m,))`` so members are independent of ``count`` and of each
    other.  ``phase_sampler(rng, M)`` is a hook for tests.
    """
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    M = U.size
    out = []
    for m in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(m,))))
        theta = np.asarray(phase_sampler(rng, M), dtype=float)
        D = sp.diags(np.exp(1j * theta), format="csr")
        V = (D @ U.sparse).tocsr()
        V.sort_indices()
        if B is not None:
            out.append(_finish(V, B, U.classes, U.phase_scheme))
            continue
        gram = (V.conj().T @ V - sp.identity(M, format="csr")).tocoo()
        unitarity = float(np.max(np.abs(gram.data), initial=0.0))
        if unitarity > UNITARITY_TOL:
            raise NumericalFailure(f"ensemble member {m} not unitary", residual=unitarity)
        out.append(replace(U, sparse=V, unitarity_residual=unitarity))
    return out
