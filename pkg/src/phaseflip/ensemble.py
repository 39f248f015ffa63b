"""Eve's single-pulse view of the protocol and its von Neumann entropy.

Without knowledge of the basis index, one pulse is the uniform mixture of the
2M grid-rotated coherent states::

    rho = (1/2M) sum_k |exp(-i k pi/M) alpha><exp(-i k pi/M) alpha|

In the number basis ``rho[n, n'] = c_n conj(c_n') J(n, n'; M) / 2M`` with
``J = sum_k exp(i k (n'-n) pi/M)``. That geometric sum over a full period is
``2M`` when ``n' - n`` is a multiple of 2M and zero otherwise, so rho is
block diagonal over residue classes of n modulo 2M and contains no odd
coherences. The often-quoted odd-coherence closed form belongs to a grid
with half the step (phases covering only [0, pi)) and does not describe
this ensemble; ``rho_direct`` is kept as the ground truth that settles it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import poisson

from .fock import (
    DEFAULT_EPS_TAIL,
    Amplitude,
    PhaseGrid,
    coherent_coeffs,
    coherent_vector,
    poisson_tail,
    rotate,
    truncation_dim,
)

DEFAULT_EPS_PSD = 1e-10
DEFAULT_PLATEAU_TOL = 1e-4
DEFAULT_M_CAP = 2**16
LN2 = math.log(2.0)

ENTROPY_CSV_HEADER = (
    "mean_n",
    "M",
    "entropy_nats",
    "entropy_bits",
    "log2_2M",
    "margin",
    "poisson_bound_nats",
)
SMAX_CSV_HEADER = ("mean_n", "ln_mean_n", "S_max_nats", "poisson_bound_nats", "M_at_plateau")


class InvalidDensityMatrix(ValueError):
    """Raised for matrices with eigenvalues below ``-eps_psd``."""


class PlateauNotReached(RuntimeError):
    """Raised when doubling M hits the cap before the entropy settles."""


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = self.entries
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {a.shape}")

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def is_hermitian(self) -> bool:
        return bool(np.array_equal(self.entries, self.entries.conj().T))


@dataclass(frozen=True)
class EntropyReport:
    """Entropy of the single-pulse ensemble at one (mean_n, M) point.

    ``log2_2M`` is the Shannon entropy of a uniform basis index per pulse;
    ``shannon_basis_entropy_bits`` is the basis-pair count ``log2 M`` that the
    security margin is measured against.
    """

    M: int
    mean_n: float
    entropy_nats: float
    entropy_bits: float
    log2_2M: float
    shannon_basis_entropy_bits: float
    margin: float
    poisson_bound_nats: float

    def csv_row(self) -> list[str]:
        return [
            _fmt(self.mean_n),
            str(self.M),
            _fmt(self.entropy_nats),
            _fmt(self.entropy_bits),
            _fmt(self.log2_2M),
            _fmt(self.margin),
            _fmt(self.poisson_bound_nats),
        ]


@dataclass(frozen=True)
class SmaxPoint:
    mean_n: float
    s_max_nats: float
    poisson_bound_nats: float
    M_at_plateau: int

    def csv_row(self) -> list[str]:
        return [
            _fmt(self.mean_n),
            _fmt(math.log(self.mean_n)),
            _fmt(self.s_max_nats),
            _fmt(self.poisson_bound_nats),
            str(self.M_at_plateau),
        ]


def _fmt(x: float) -> str:
    # repr gives the shortest round-trip form, identical on every platform
    return repr(float(x))


def j_factor(n: int, n_prime: int, M: int) -> complex:
    """``sum_{k=0}^{2M-1} exp(i k (n'-n) pi / M)`` in closed form."""
    if M < 1:
        raise ValueError("M must be positive")
    return complex(2 * M) if (n_prime - n) % (2 * M) == 0 else 0j


def _resolve_dim(alpha: Amplitude, dim: int | None, eps_tail: float) -> int:
    return truncation_dim(alpha.mean_n, eps_tail) if dim is None else dim


def rho_direct(
    alpha: Amplitude, M: int, dim: int | None = None, eps_tail: float = DEFAULT_EPS_TAIL
) -> DensityMatrix:
    """Average of the 2M rank-one projectors, built state by state."""
    dim = _resolve_dim(alpha, dim, eps_tail)
    grid = PhaseGrid(M)
    cols = np.empty((dim, grid.size), dtype=complex)
    for k in range(grid.size):
        cols[:, k] = coherent_vector(rotate(alpha, grid.angle(k)), dim, eps_tail).coeffs
    rho = cols @ cols.conj().T / grid.size
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho)


def rho_closed(
    alpha: Amplitude, M: int, dim: int | None = None, eps_tail: float = DEFAULT_EPS_TAIL
) -> DensityMatrix:
    """Ensemble matrix from its closed-form elements.

    Diagonal entries are the Poisson weights; an off-diagonal entry survives
    only when ``n' - n`` is a nonzero multiple of 2M, where it equals the pure
    state coherence ``c_n conj(c_n')``.
    """
    if M < 1:
        raise ValueError("M must be positive")
    dim = _resolve_dim(alpha, dim, eps_tail)
    if poisson_tail(alpha.mean_n, dim - 1) >= eps_tail:
        # same guard as the direct construction
        coherent_vector(alpha, dim, eps_tail)
    c = coherent_coeffs(alpha, dim)
    n = np.arange(dim)
    keep = ((n[None, :] - n[:, None]) % (2 * M)) == 0
    rho = np.where(keep, np.outer(c, c.conj()), 0.0)
    np.fill_diagonal(rho, np.abs(c) ** 2)
    return DensityMatrix(rho)


def _entropy_from_eigenvalues(lam: np.ndarray, eps_psd: float) -> float:
    if lam.size and lam.min() < -eps_psd:
        raise InvalidDensityMatrix(f"eigenvalue {lam.min():.3g} below -{eps_psd:g}")
    lam = lam[lam > eps_psd]
    return float(-np.sum(lam * np.log(lam)))


def von_neumann_entropy(rho: DensityMatrix | np.ndarray, eps_psd: float = DEFAULT_EPS_PSD) -> float:
    """``-Tr rho ln rho`` in nats from a Hermitian eigendecomposition.

    Eigenvalues in ``(-eps_psd, eps_psd]`` count as zero; anything more
    negative raises :class:`InvalidDensityMatrix`.
    """
    a = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return _entropy_from_eigenvalues(np.linalg.eigvalsh(a), eps_psd)


def ensemble_entropy(
    alpha: Amplitude,
    M: int,
    dim: int | None = None,
    eps_tail: float = DEFAULT_EPS_TAIL,
    eps_psd: float = DEFAULT_EPS_PSD,
) -> float:
    """Entropy (nats) of the pulse ensemble, diagonalised block by block.

    Equivalent to ``von_neumann_entropy(rho_closed(...))`` but each residue
    class modulo 2M is a rank-one block ``|c_S><c_S|`` whose only nonzero
    eigenvalue is ``||c_S||^2``, so no dense eigensolve is needed.
    """
    dim = _resolve_dim(alpha, dim, eps_tail)
    p = np.abs(coherent_coeffs(alpha, dim)) ** 2
    step = 2 * M
    if step < dim:
        pad = (-dim) % step
        p = np.concatenate([p, np.zeros(pad)]).reshape(-1, step).sum(axis=0)
    return _entropy_from_eigenvalues(p, eps_psd)


def poisson_entropy_bound(mean_n: float, dim: int | None = None, eps_tail: float = DEFAULT_EPS_TAIL) -> float:
    """Shannon entropy (nats) of the photon-number distribution.

    The distribution is cut at ``dim`` levels and the discarded tail is added
    to the last kept level.
    """
    if not mean_n > 0.0:
        raise ValueError("mean_n must be positive")
    if dim is None:
        dim = truncation_dim(mean_n, eps_tail)
    p = poisson.pmf(np.arange(dim), mean_n)
    p[-1] += poisson.sf(dim - 1, mean_n)
    p = p[p > 0.0]
    return float(-np.sum(p * np.log(p)))


def entropy_report(
    alpha: Amplitude,
    M: int,
    eps_tail: float = DEFAULT_EPS_TAIL,
    eps_psd: float = DEFAULT_EPS_PSD,
    dense: bool = True,
) -> EntropyReport:
    dim = truncation_dim(alpha.mean_n, eps_tail)
    if dense:
        s = von_neumann_entropy(rho_closed(alpha, M, dim, eps_tail), eps_psd)
    else:
        s = ensemble_entropy(alpha, M, dim, eps_tail, eps_psd)
    s_bits = s / LN2
    log2_m = math.log2(M)
    margin = s_bits / log2_m if log2_m > 0 else math.inf
    return EntropyReport(
        M=M,
        mean_n=alpha.mean_n,
        entropy_nats=s,
        entropy_bits=s_bits,
        log2_2M=math.log2(2 * M),
        shannon_basis_entropy_bits=log2_m,
        margin=margin,
        poisson_bound_nats=poisson_entropy_bound(alpha.mean_n, dim),
    )


def entropy_scan(
    alpha: Amplitude,
    M_values: Sequence[int],
    eps_tail: float = DEFAULT_EPS_TAIL,
    eps_psd: float = DEFAULT_EPS_PSD,
    dense: bool = True,
) -> list[EntropyReport]:
    """One :class:`EntropyReport` per M, in the given (ascending) order."""
    M_values = list(M_values)
    if any(b < a for a, b in zip(M_values, M_values[1:])):
        raise ValueError("M_values must be sorted ascending")
    if any(m < 1 for m in M_values):
        raise ValueError("every M must be a positive integer")
    return [entropy_report(alpha, m, eps_tail, eps_psd, dense) for m in M_values]


def smax_point(
    mean_n: float,
    plateau_tol: float = DEFAULT_PLATEAU_TOL,
    M_cap: int = DEFAULT_M_CAP,
    eps_tail: float = DEFAULT_EPS_TAIL,
    eps_psd: float = DEFAULT_EPS_PSD,
) -> SmaxPoint:
    """Double M from 1 until successive entropies differ by less than ``plateau_tol``."""
    alpha = Amplitude.from_mean_n(mean_n)
    dim = truncation_dim(mean_n, eps_tail)
    rho_entropy = lambda m: von_neumann_entropy(rho_closed(alpha, m, dim, eps_tail), eps_psd)  # noqa: E731
    m = 1
    prev = rho_entropy(m)
    while m < M_cap:
        m *= 2
        cur = rho_entropy(m)
        if abs(cur - prev) < plateau_tol:
            return SmaxPoint(mean_n, cur, poisson_entropy_bound(mean_n, dim), m)
        prev = cur
    raise PlateauNotReached(f"mean_n={mean_n:g}: no plateau within tol {plateau_tol:g} up to M={M_cap}")


def smax_scan(
    mean_n_values: Iterable[float],
    plateau_tol: float = DEFAULT_PLATEAU_TOL,
    M_cap: int = DEFAULT_M_CAP,
    eps_tail: float = DEFAULT_EPS_TAIL,
) -> list[SmaxPoint]:
    return [smax_point(x, plateau_tol, M_cap, eps_tail) for x in mean_n_values]


def log_slope(points: Sequence[SmaxPoint]) -> float:
    """Least-squares slope of S_max (nats) against ln(mean_n)."""
    if len(points) < 2:
        raise ValueError("need at least two points for a slope")
    x = np.log([p.mean_n for p in points])
    y = np.array([p.s_max_nats for p in points])
    return float(np.polyfit(x, y, 1)[0])


def _write_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def entropy_csv(reports: Iterable[EntropyReport]) -> str:
    return _write_csv(ENTROPY_CSV_HEADER, (r.csv_row() for r in reports))


def smax_csv(points: Iterable[SmaxPoint]) -> str:
    return _write_csv(SMAX_CSV_HEADER, (p.csv_row() for p in points))
