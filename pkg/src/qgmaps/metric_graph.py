"""Metric graphs given by ``S(lambda) = exp(i lambda L) S0``.

Eigenvalues of the graph are the roots of ``det(I - S(lambda)) = 0``.  They
are found by following the eigenphases of ``S(lambda)``, which all increase
with ``lambda`` at rates between the shortest and longest bond length, and
bisecting each crossing of a multiple of ``2 pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, ContractError, TrackingError

ROOT_TOL = 1e-10

_trapezoid = getattr(np, "trapezoid", None) or np.trapz
UNITARITY_TOL = 1e-10


@dataclass(frozen=True)
class MetricGraph:
    S0: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        S0 = np.asarray(self.S0, dtype=complex)
        L = np.asarray(self.lengths, dtype=float)
        if S0.ndim != 2 or S0.shape[0] != S0.shape[1] or S0.shape[0] != L.size:
            raise ContractError(f"S0 of shape {S0.shape} does not match {L.size} lengths")
        if np.any(L <= 0):
            raise ContractError("bond lengths must be positive")
        defect = np.max(np.abs(S0.conj().T @ S0 - np.eye(L.size)))
        if defect > UNITARITY_TOL:
            raise ContractError(f"S0 is not unitary (defect {defect:.2e})")
        object.__setattr__(self, "S0", S0)
        object.__setattr__(self, "lengths", L)

    @property
    def bonds(self) -> int:
        return self.lengths.size

    @property
    def mean_length(self) -> float:
        return float(np.mean(self.lengths))

    @property
    def total_length(self) -> float:
        return float(np.sum(self.lengths))

    @property
    def mean_spacing(self) -> float:
        return 2 * math.pi / self.total_length

    def mean_count(self, Lam: float) -> float:
        """Weyl estimate ``Lambda * Tr L / 2 pi``."""
        return Lam * self.total_length / (2 * math.pi)

    def scattering(self, lam):
        """``S(lambda)``; ``lam`` may be an array, giving a stack of matrices."""
        lam = np.asarray(lam, dtype=float)
        phases = np.exp(1j * lam[..., None] * self.lengths)
        return phases[..., :, None] * self.S0


def swap_graph(L1: float = 1.0, L2: float = math.sqrt(2)) -> MetricGraph:
    return MetricGraph(np.array([[0, 1], [1, 0]], dtype=complex), np.array([L1, L2]))


def random_unitary(B: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary from QR of a complex Gaussian matrix with phase-fixed R."""
    Z = (rng.standard_normal((B, B)) + 1j * rng.standard_normal((B, B))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))[None, :]


def random_graph(B: int = 4, seed: int = 7, spread: float = 0.1) -> MetricGraph:
    """Random ``S0`` with lengths ``1 + u``, ``u`` uniform on ``[-spread, spread]``.

    Rational independence of the lengths holds with probability one and is
    not (cannot be) checked in floating point.
    """
    rng = np.random.default_rng(seed)
    S0 = random_unitary(B, rng)
    lengths = 1.0 + rng.uniform(-spread, spread, size=B)
    return MetricGraph(S0, lengths)


def alternating_observable(B: int) -> np.ndarray:
    """Traceless ``diag(1, -1, 1, -1, ...)`` (a zero is appended for odd ``B``)."""
    d = np.array([(-1.0) ** k for k in range(B)])
    if B % 2:
        d[-1] = 0.0
    return np.diag(d)


# -- eigenphase tracking ------------------------------------------------------

def _eig_stack(g: MetricGraph, lams: np.ndarray):
    w, v = np.linalg.eig(g.scattering(lams))
    return w, v


def _orthonormal_eig(S: np.ndarray):
    w, v = np.linalg.eig(S)
    # eigenvectors of a unitary with simple spectrum are orthogonal; QR only
    # cleans up rounding and fixes normalisation
    q, r = np.linalg.qr(v)
    q = q * (np.diag(r) / np.abs(np.diag(r)))[None, :]
    return w, q


@dataclass
class MetricSpectrum:
    roots: np.ndarray
    branches: np.ndarray
    eigenvectors: np.ndarray          # rows: phi_n
    weights: np.ndarray               # <phi_n, L phi_n>
    matrix_elements: np.ndarray | None
    mean_count: float
    Lam: float
    phase_slopes: np.ndarray = field(default=None, repr=False)  # finite-difference theta'

    @property
    def count(self) -> int:
        return len(self.roots)


def default_step(g: MetricGraph) -> float:
    return math.pi / (10 * g.total_length)


def _track(g: MetricGraph, Lam: float, step: float):
    """Unwrapped eigenphases on a uniform grid covering ``[0, Lam]``."""
    n = max(2, int(math.ceil(Lam / step)) + 1)
    grid = np.linspace(0.0, Lam, n)
    h = grid[1] - grid[0]
    w, _ = _eig_stack(g, grid)
    Lmin, Lmax = float(g.lengths.min()), float(g.lengths.max())
    theta = np.empty((n, g.bonds))
    theta[0] = np.angle(w[0])
    for i in range(1, n):
        pred = theta[i - 1] + h * 0.5 * (Lmin + Lmax)
        cur = np.angle(w[i])
        # cost: wrapped angular distance between predicted and observed phases
        diff = cur[None, :] - pred[:, None]
        cost = np.abs(np.angle(np.exp(1j * diff)))
        r, c = linear_sum_assignment(cost)
        inc = np.angle(np.exp(1j * (cur[c] - theta[i - 1][r])))
        slack = 1e-9 + 4 * h * h * Lmax * Lmax
        if np.any(inc < h * Lmin - slack) or np.any(inc > h * Lmax + slack):
            raise TrackingError(
                "eigenphase increments left [h Lmin, h Lmax]; refine the step",
                window=(grid[i - 1], grid[i]),
            )
        theta[i][r] = theta[i - 1][r] + inc
    return grid, theta


def _refine(g: MetricGraph, a: float, b: float, target: float, theta_a: float, theta_b: float):
    """Bisect for the root of ``theta_k(lam) = target`` on ``[a, b]``."""
    slope = (theta_b - theta_a) / (b - a)
    while b - a > ROOT_TOL:
        mid = 0.5 * (a + b)
        w = np.linalg.eigvals(g.scattering(mid))
        predicted = np.exp(1j * (theta_a + slope * (mid - a)))
        k = int(np.argmin(np.abs(w - predicted)))
        phase = np.angle(w[k] * np.exp(-1j * target))
        if phase < 0:
            a, theta_a = mid, target + phase
        else:
            b, theta_b = mid, target + phase
        slope = (theta_b - theta_a) / (b - a) if b > a else slope
    return 0.5 * (a + b)


def secular_eigenvalues(g: MetricGraph, Lam: float, A: np.ndarray | None = None, *,
                        step: float | None = None, fd_step: float = 1e-6) -> MetricSpectrum:
    """Roots of ``det(I - S(lambda))`` in ``(0, Lam]`` with their eigenvectors."""
    if Lam < 0:
        raise ConfigError(f"Lambda must be nonnegative, got {Lam}")
    B = g.bonds
    empty = np.zeros(0)
    if Lam == 0:
        return MetricSpectrum(empty, empty.astype(int), np.zeros((0, B), complex), empty,
                              None if A is None else empty, 0.0, 0.0, empty)
    step = default_step(g) if step is None else step
    grid, theta = _track(g, Lam, step)
    two_pi = 2 * math.pi
    found = []
    windings = np.floor(theta / two_pi)
    for k in range(B):
        jumps = np.nonzero(np.diff(windings[:, k]))[0]
        for i in jumps:
            for m in range(int(windings[i, k]) + 1, int(windings[i + 1, k]) + 1):
                target = m * two_pi
                lam = _refine(g, grid[i], grid[i + 1], target, theta[i, k], theta[i + 1, k])
                if lam > 0:
                    found.append((lam, k))
    found.sort()
    roots = np.array([lam for lam, _ in found])
    branches = np.array([k for _, k in found], dtype=int)
    vecs = np.zeros((len(roots), B), dtype=complex)
    weights = np.zeros(len(roots))
    slopes = np.zeros(len(roots))
    for n, lam in enumerate(roots):
        w, q = _orthonormal_eig(g.scattering(lam))
        k = int(np.argmin(np.abs(w - 1)))
        phi = q[:, k]
        vecs[n] = phi
        weights[n] = float(np.real(np.vdot(phi, g.lengths * phi)))
        # central difference of the phase closest to zero
        wp = np.linalg.eigvals(g.scattering(lam + fd_step))
        wm = np.linalg.eigvals(g.scattering(lam - fd_step))
        tp = np.angle(wp[np.argmin(np.abs(wp - w[k]))])
        tm = np.angle(wm[np.argmin(np.abs(wm - w[k]))])
        slopes[n] = (tp - tm) / (2 * fd_step)
    mean_count = g.mean_count(Lam)
    if abs(len(roots) - mean_count) > B:
        raise TrackingError(
            f"found {len(roots)} roots but the Weyl estimate is {mean_count:.2f}", window=(0, Lam)
        )
    elements = None
    if A is not None:
        A = np.asarray(A)
        elements = np.real(np.einsum("ni,ij,nj->n", vecs.conj(), A, vecs))
    return MetricSpectrum(roots, branches, vecs, weights, elements, mean_count, Lam, slopes)


def _check_traceless(A: np.ndarray):
    A = np.asarray(A)
    if np.max(np.abs(A - A.conj().T), initial=0.0) > 1e-12:
        raise ContractError("observable must be Hermitian")
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    if abs(np.trace(A)) > 1e-12 * scale * A.shape[0]:
        raise ContractError(f"observable must be traceless, Tr A = {np.trace(A)}")


def variance_VS(g: MetricGraph, A: np.ndarray, Lam: float, *,
                spectrum: MetricSpectrum | None = None) -> tuple[float, float]:
    """``(V^S, hat V^S)``: plain and length-weighted spectral variances."""
    _check_traceless(A)
    if spectrum is None:
        spectrum = secular_eigenvalues(g, Lam, A)
    if spectrum.count == 0:
        return 0.0, 0.0
    elems = spectrum.matrix_elements
    if elems is None:
        elems = np.real(np.einsum("ni,ij,nj->n", spectrum.eigenvectors.conj(), A,
                                  spectrum.eigenvectors))
    Nbar = spectrum.mean_count
    VS = float(np.sum(elems**2) / Nbar)
    VS_hat = float(np.sum(elems**2 / spectrum.weights) / Nbar)
    Lmin, Lmax = float(g.lengths.min()), float(g.lengths.max())
    slack = 1e-12 * max(1.0, VS)
    if not (Lmin * VS_hat - slack <= VS <= Lmax * VS_hat + slack):
        raise ContractError("length sandwich L_min hatV <= V <= L_max hatV violated")
    return VS, VS_hat


def unitary_variance(S: np.ndarray, A: np.ndarray):
    """``V^U`` for one unitary or a stack of them, plus the per-state elements."""
    w, v = np.linalg.eig(S)
    v = v / np.linalg.norm(v, axis=-2, keepdims=True)
    elems = np.real(np.einsum("...ik,ij,...jk->...k", v.conj(), A, v))
    return np.mean(elems**2, axis=-1), elems


def variance_VU_avg(g: MetricGraph, A: np.ndarray, Lam: float, *, step: float | None = None,
                    chunk: int = 4096) -> float:
    """``Lambda^-1`` times the trapezoid integral of ``V^U(S(lambda))`` over ``[0, Lambda]``."""
    _check_traceless(A)
    A = np.asarray(A, dtype=complex)
    if Lam <= 0:
        return 0.0
    step = default_step(g) if step is None else step
    n = max(2, int(math.ceil(Lam / step)) + 1)
    grid = np.linspace(0.0, Lam, n)
    values = np.empty(n)
    for lo in range(0, n, chunk):
        part = grid[lo:lo + chunk]
        values[lo:lo + chunk], elems = unitary_variance(g.scattering(part), A)
        trace_gap = np.max(np.abs(elems.sum(axis=-1) - np.trace(A).real))
        if trace_gap > 1e-8:
            raise TrackingError("sum of diagonal elements drifted from Tr A", window=(part[0], part[-1]))
    return float(_trapezoid(values, grid) / Lam)


def ensemble_VU(g: MetricGraph, A: np.ndarray, samples: int, seed: int) -> tuple[float, float]:
    """Mean and standard error of ``V^U(D S0)`` over random diagonal unitaries ``D``."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, size=(samples, g.bonds))
    S = np.exp(1j * theta)[:, :, None] * g.S0[None]
    vals, _ = unitary_variance(S, np.asarray(A, dtype=complex))
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(samples))


@dataclass
class RelationReport:
    Lam: float
    spacings: float
    root_count: int
    mean_count: float
    VS: float
    VS_hat: float
    weighted: float        # N^-1 sum <A>^2 / (L_n / Lbar)
    VU_average: float      # Lambda^-1 int V^U
    residual: float
    alt_rhs: float         # (2 pi N)^-1 int V^U
    alt_residual: float
    spectrum: MetricSpectrum | None = field(default=None, repr=False)

    @property
    def matching_normalization(self) -> str:
        return "1/Lambda" if self.residual <= self.alt_residual else "1/(2 pi Nbar)"


def _relative(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def check_variance_relation(g: MetricGraph, A: np.ndarray, Lam: float, *,
                            step: float | None = None) -> RelationReport:
    """Compare the length-weighted spectral variance with the ``lambda``-averaged ``V^U``."""
    _check_traceless(A)
    spectrum = secular_eigenvalues(g, Lam, A, step=step)
    VS, VS_hat = variance_VS(g, A, Lam, spectrum=spectrum)
    weighted = g.mean_length * VS_hat
    avg = variance_VU_avg(g, A, Lam, step=step)
    Nbar = g.mean_count(Lam)
    alt = avg * Lam / (2 * math.pi * Nbar) if Nbar > 0 else 0.0
    return RelationReport(Lam, Lam / g.mean_spacing, spectrum.count, Nbar, VS, VS_hat, weighted,
                          avg, _relative(weighted, avg), alt, _relative(weighted, alt), spectrum)
