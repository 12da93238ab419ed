"""Gaussian projection tables and assembly of the polynomial phase-averaged tendency.

Averaging a quadratically nonlinear modulated system against a Gaussian
weight of width ``T``, with the phase dependence expanded in monomials up to
degree ``p``, turns the dynamics into a coupled system for coefficient blocks
``V_0 .. V_p``.  The coupling is fully described by two families of Gaussian
integrals:

* plain moments ``I_alpha`` of the unit-mass Gaussian of width ``T``, which
  fill the (Gram) mass matrix of the monomial basis, and
* frequency-shifted moments ``R_alpha(c)``, one per interaction frequency
  ``c``, which weight each quadratic interaction term, with an overall
  damping factor ``exp(-(c*T)^2 / 2)`` kept separate for numerical range.

This module evaluates both families, bundles them into immutable
:class:`AveragingTables`, and assembles the right-hand side of the stacked
averaged system for any :class:`~phaseavg.models.ResonantQuadraticModel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .models import ResonantQuadraticModel

__all__ = [
    "AveragingConfig",
    "AveragingTables",
    "AveragedSystem",
    "IllConditionedError",
    "assemble_averaged_rhs",
    "build_tables",
    "damping_factor",
    "gaussian_moment",
    "shifted_moment",
]

# Monomial bases degrade quickly; beyond this the mass matrix is numerically
# rank deficient in double precision for any window of practical size.
DEFAULT_P_CAP = 12

# Largest moment order in the validated domain (three polynomial indices).
_MAX_ALPHA = 3 * DEFAULT_P_CAP

DEFAULT_CONDITION_CAP = 1e14

# Frequencies closer than this (rad/s) are treated as identical when tables
# are built; distinct model terms routinely share a frequency.
FREQ_TOL = 1e-12


class IllConditionedError(RuntimeError):
    """Mass matrix condition number exceeds the configured cap."""

    def __init__(self, condition: float, cap: float):
        super().__init__(
            f"mass matrix condition number {condition:.3e} exceeds cap {cap:.3e}; "
            "pass allow_ill_conditioned=True to proceed with a warning flag"
        )
        self.condition = condition
        self.cap = cap


def gaussian_moment(alpha: int, T: float) -> float:
    """Moment of order ``alpha`` of the unit-mass Gaussian of width ``T``.

    Computed by the two-step recursion ``I_alpha = T^2 (alpha - 1) I_{alpha-2}``
    with ``I_0 = 1``.  Odd moments vanish identically and are returned as an
    exact ``0.0``.
    """
    if alpha < 0:
        raise ValueError(f"moment order must be nonnegative, got {alpha}")
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"window width must be positive and finite, got {T}")
    if alpha % 2 == 1:
        return 0.0
    value = 1.0
    tt = T * T
    for k in range(2, alpha + 1, 2):
        value *= tt * (k - 1)
    return value


def damping_factor(c: float, T: float) -> float:
    """Attenuation ``exp(-(c*T)^2 / 2)`` of a frequency-``c`` interaction.

    Underflows cleanly to an exact ``0.0`` for very large ``|c| * T``.
    """
    x = 0.5 * (c * T) ** 2
    if x > 745.0:  # exp underflows below the smallest subnormal
        return 0.0
    return math.exp(-x)


def shifted_moment(alpha: int, c: float, T: float) -> complex:
    """Gaussian moment of order ``alpha`` shifted by frequency ``c``.

    Returns the moment of ``(s + i c T^2)^alpha`` under the unit-mass Gaussian
    of width ``T``, equivalently the binomial combination
    ``sum_beta binom(alpha, beta) * I_{alpha-beta} * (i c T^2)^beta``.  The
    damping factor ``exp(-(c*T)^2 / 2)`` is *not* included; it is stored
    separately (see :func:`damping_factor`) so that the two factors can be
    combined in a range-safe order.

    Evaluated by the two-term upward recurrence
    ``R_a = i c T^2 R_{a-1} + (a - 1) T^2 R_{a-2}`` (Gaussian integration by
    parts), which stays accurate to ~1e-14 relative over the whole supported
    domain; expanding the binomial sum instead loses up to seven digits where
    ``alpha`` is large and ``|c| T`` is a few units.
    """
    if alpha < 0:
        raise ValueError(f"moment order must be nonnegative, got {alpha}")
    if alpha > _MAX_ALPHA:
        raise ValueError(f"moment order {alpha} exceeds supported maximum {_MAX_ALPHA}")
    if not (T > 0 and math.isfinite(T)):
        raise ValueError(f"window width must be positive and finite, got {T}")
    shift = 1j * c * T * T
    if alpha == 0:
        return 1.0 + 0.0j
    tt = T * T
    older, newer = 1.0 + 0.0j, shift
    for a in range(2, alpha + 1):
        older, newer = newer, shift * newer + tt * (a - 1) * older
    return newer


@dataclass(frozen=True)
class AveragingConfig:
    """Degree and window of the polynomial phase average.

    ``p`` is the polynomial degree of the expansion in the phase variable and
    ``T`` the width (seconds) of the unit-mass Gaussian weight.  The weight
    and the monomial basis are fixed; only these two numbers vary.
    """

    p: int
    T: float
    p_cap: int = DEFAULT_P_CAP

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 0:
            raise ValueError(f"polynomial degree must be a nonnegative integer, got {self.p!r}")
        if self.p > self.p_cap:
            raise ValueError(
                f"polynomial degree {self.p} exceeds cap {self.p_cap} "
                "(monomial basis conditioning)"
            )
        if not (isinstance(self.T, (int, float, np.floating)) and self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"averaging window must be positive and finite, got {self.T!r}")


def _dedupe_frequencies(freqs: Sequence[float], tol: float = FREQ_TOL) -> np.ndarray:
    """Stable first-seen deduplication of a frequency list."""
    unique: list[float] = []
    for c in np.asarray(freqs, dtype=float).ravel():
        if not math.isfinite(c):
            raise ValueError(f"interaction frequencies must be finite, got {c}")
        if not any(abs(c - u) <= tol for u in unique):
            unique.append(float(c))
    return np.array(unique, dtype=float)


@dataclass(frozen=True)
class AveragingTables:
    """Precomputed projection data for one ``(p, T, frequency list)`` triple.

    Immutable after construction (all arrays are write-protected) and safe to
    share across worker processes or threads.
    """

    p: int
    T: float
    freqs: np.ndarray          # unique interaction frequencies, rad/s
    mass: np.ndarray           # (p+1, p+1) Gaussian Gram matrix of monomials
    mass_inv: np.ndarray       # dense inverse, LU with partial pivoting
    mass_condition: float      # 2-norm condition number estimate
    r_moments: np.ndarray      # (n_freq, 3p+1) shifted moments, damping excluded
    damping: np.ndarray        # (n_freq,) exp(-(c T)^2 / 2)
    ill_conditioned: bool = False

    def freq_index(self, c: float, tol: float = FREQ_TOL) -> int:
        """Index of frequency ``c`` in the deduplicated list."""
        diffs = np.abs(self.freqs - c)
        idx = int(np.argmin(diffs)) if diffs.size else -1
        if idx < 0 or diffs[idx] > tol:
            raise ValueError(f"frequency {c} not present in tables")
        return idx


def build_tables(
    cfg: AveragingConfig,
    freqs: Sequence[float],
    *,
    condition_cap: float = DEFAULT_CONDITION_CAP,
    allow_ill_conditioned: bool = False,
) -> AveragingTables:
    """Build mass matrix, its inverse and shifted moments for ``cfg``.

    Frequencies are deduplicated with tolerance ``1e-12`` rad/s.  If the mass
    matrix condition number exceeds ``condition_cap`` an
    :class:`IllConditionedError` is raised unless ``allow_ill_conditioned`` is
    set, in which case the returned tables carry ``ill_conditioned=True`` and
    the caller may proceed at its own risk (small windows at high degree are
    exactly the regime where accuracy degrades).
    """
    p, T = cfg.p, cfg.T
    n = p + 1
    mass = np.array([[gaussian_moment(j + k, T) for k in range(n)] for j in range(n)])
    condition = float(np.linalg.cond(mass))
    flagged = condition > condition_cap
    if flagged and not allow_ill_conditioned:
        raise IllConditionedError(condition, condition_cap)
    mass_inv = np.linalg.inv(mass)

    unique = _dedupe_frequencies(freqs)
    n_alpha = 3 * p + 1
    r_moments = np.empty((unique.size, n_alpha), dtype=complex)
    damping = np.empty(unique.size)
    for m, c in enumerate(unique):
        damping[m] = damping_factor(c, T)
        for alpha in range(n_alpha):
            r_moments[m, alpha] = shifted_moment(alpha, c, T)

    for arr in (unique, mass, mass_inv, r_moments, damping):
        arr.setflags(write=False)
    return AveragingTables(
        p=p,
        T=T,
        freqs=unique,
        mass=mass,
        mass_inv=mass_inv,
        mass_condition=condition,
        r_moments=r_moments,
        damping=damping,
        ill_conditioned=flagged,
    )


class AveragedSystem:
    """Right-hand side of the stacked averaged system, compiled for speed.

    For blocks ``V_0 .. V_p`` the tendency of row ``j`` is

        dV_j/dt = sum_m w_m(t) * sum_{k,l} C[m,j,k,l] * F_m(V_k, V_l)

    with ``w_m(t) = damping_m * exp(i c_m t)`` and
    ``C[m,j,k,l] = sum_j' mass_inv[j,j'] * R^m_{j'+k+l}``.  The coefficient
    tensor ``C`` and the bilinear maps (extended over ``[V, conj(V)]`` so that
    conjugating slots become plain linear ones) are precomputed once, leaving
    a handful of small tensor contractions per evaluation.

    Instances are immutable and reentrant; a single instance may be shared by
    concurrent integrations.
    """

    def __init__(self, model: "ResonantQuadraticModel", tables: AveragingTables):
        p = tables.p
        d = model.dim
        n_terms = len(model.terms)
        self.model = model
        self.tables = tables
        self.p = p
        self.dim = d

        jj, kk, ll = np.meshgrid(np.arange(p + 1), np.arange(p + 1), np.arange(p + 1), indexing="ij")
        alpha = jj + kk + ll  # (p+1, p+1, p+1), values 0 .. 3p

        coeff = np.empty((n_terms, p + 1, p + 1, p + 1), dtype=complex)
        ext = np.zeros((n_terms, d, 2 * d, 2 * d), dtype=complex)
        term_freqs = np.empty(n_terms)
        term_damp = np.empty(n_terms)
        for i, term in enumerate(model.terms):
            m = tables.freq_index(term.freq)
            r_hankel = tables.r_moments[m][alpha]  # R^m_{j'+k+l}
            coeff[i] = np.tensordot(tables.mass_inv, r_hankel, axes=1)
            a_off = d if term.conj_left else 0
            b_off = d if term.conj_right else 0
            ext[i, :, a_off:a_off + d, b_off:b_off + d] = term.coeffs
            term_freqs[i] = term.freq
            term_damp[i] = tables.damping[m]
        # Preshaped copies so each evaluation is a handful of small matmuls.
        bilinear_left = np.ascontiguousarray(
            ext.transpose(0, 1, 3, 2).reshape(n_terms * d * 2 * d, 2 * d)
        )
        coeff_rows = np.ascontiguousarray(coeff.reshape(n_terms, p + 1, (p + 1) ** 2))
        for arr in (coeff, ext, term_freqs, term_damp, bilinear_left, coeff_rows):
            arr.setflags(write=False)
        self._coeff = coeff
        self._ext = ext
        self._bilinear_left = bilinear_left
        self._coeff_rows = coeff_rows
        self._term_freqs = term_freqs
        self._term_damp = term_damp
        self._n_terms = n_terms

    def rhs_blocks(self, t: float, blocks: np.ndarray) -> np.ndarray:
        """Tendency of the coefficient blocks; ``blocks`` has shape (p+1, d)."""
        p1 = self.p + 1
        d = self.dim
        m = self._n_terms
        a_t = np.concatenate((blocks, blocks.conj()), axis=1).T  # (2d, p+1)
        # pair[m, i, k, l] = F_m(V_k, V_l)[i]
        half = (self._bilinear_left @ a_t).reshape(m * d, 2 * d, p1)
        pair = np.matmul(half.transpose(0, 2, 1), a_t).reshape(m, d, p1, p1)
        w = self._term_damp * np.exp(1j * self._term_freqs * t)
        out = np.zeros((p1, d), dtype=complex)
        for i in range(m):
            out += w[i] * (self._coeff_rows[i] @ pair[i].reshape(d, p1 * p1).T)
        return out

    def rhs_stacked(self, t: float, y: np.ndarray) -> np.ndarray:
        """Complex flat variant: ``y`` is the raveled (p+1)*d coefficient vector."""
        blocks = np.asarray(y, dtype=complex).reshape(self.p + 1, self.dim)
        return self.rhs_blocks(t, blocks).ravel()

    def rhs_flat(self, t: float, y: np.ndarray) -> np.ndarray:
        """Real flat variant for the stepper: interleaved re/im pairs."""
        blocks = y.view(complex).reshape(self.p + 1, self.dim)
        return np.ascontiguousarray(self.rhs_blocks(t, blocks).ravel()).view(np.float64)


def assemble_averaged_rhs(
    t: float,
    blocks: np.ndarray,
    model: "ResonantQuadraticModel",
    tables: AveragingTables,
) -> np.ndarray:
    """One-shot evaluation of the stacked averaged tendency.

    Convenience wrapper; for repeated evaluation (time integration) construct
    an :class:`AveragedSystem` once and call its ``rhs_blocks``.
    """
    blocks = np.asarray(blocks, dtype=complex)
    if blocks.shape != (tables.p + 1, model.dim):
        raise ValueError(
            f"expected blocks of shape {(tables.p + 1, model.dim)}, got {blocks.shape}"
        )
    return AveragedSystem(model, tables).rhs_blocks(t, blocks)
