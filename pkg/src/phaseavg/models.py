"""Resonant quadratic models and the swinging spring instance.

A model is a diagonal linear rotation (purely imaginary eigenvalues) plus a
finite list of quadratic interaction terms, each carrying one interaction
frequency.  After factoring the rotation out of the state, the tendency of the
modulated variable is exactly

    dV/dt = sum_m exp(i c_m t) * F_m(V, V)

where each ``F_m`` is bilinear up to componentwise conjugation of either
argument.  The swinging spring (elastic pendulum with a 2:1 frequency ratio
between its elastic and pendular oscillations) is provided as the built-in
instance, together with its state transforms, energy, and the resonance-only
limit model of its slow envelope.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ResonantQuadraticModel",
    "ResonantTerm",
    "SpringParams",
    "back_transform",
    "energy",
    "exact_modulated_rhs",
    "initial_state",
    "swing_spring_model",
    "whitham_limit_rhs",
]


@dataclass(frozen=True)
class ResonantTerm:
    """One quadratic interaction: frequency plus a (possibly conjugating) bilinear map.

    ``coeffs[i, a, b]`` multiplies slot-one component ``a`` and slot-two
    component ``b`` into output component ``i``; ``conj_left`` / ``conj_right``
    select whether a slot sees the conjugated argument.  Each slot is therefore
    linear or antilinear, fixed per term.
    """

    freq: float
    coeffs: np.ndarray  # (d, d, d) complex
    conj_left: bool = False
    conj_right: bool = False

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[0] != coeffs.shape[1] or coeffs.shape[0] != coeffs.shape[2]:
            raise ValueError(f"coefficient tensor must be (d, d, d), got {coeffs.shape}")
        if not math.isfinite(self.freq):
            raise ValueError(f"interaction frequency must be finite, got {self.freq}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def apply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Evaluate the bilinear map on a pair of d-vectors."""
        aa = np.conj(a) if self.conj_left else np.asarray(a, dtype=complex)
        bb = np.conj(b) if self.conj_right else np.asarray(b, dtype=complex)
        return np.einsum("iab,a,b->i", self.coeffs, aa, bb)


@dataclass(frozen=True)
class ResonantQuadraticModel:
    """Diagonal rotation plus a finite list of resonant quadratic terms."""

    dim: int
    linear_diag: np.ndarray  # length-d purely imaginary eigenvalues (rad/s)
    terms: tuple[ResonantTerm, ...]
    label: str = ""

    def __post_init__(self):
        diag = np.asarray(self.linear_diag, dtype=complex)
        if diag.shape != (self.dim,):
            raise ValueError(f"linear_diag must have shape ({self.dim},), got {diag.shape}")
        if np.abs(diag.real).max(initial=0.0) > 1e-14 * max(1.0, np.abs(diag).max(initial=0.0)):
            raise ValueError("linear part must have purely imaginary eigenvalues")
        diag.setflags(write=False)
        object.__setattr__(self, "linear_diag", diag)
        terms = tuple(self.terms)
        for term in terms:
            if term.dim != self.dim:
                raise ValueError(f"term dimension {term.dim} does not match model dimension {self.dim}")
        object.__setattr__(self, "terms", terms)

    @property
    def frequencies(self) -> np.ndarray:
        """Interaction frequencies, one per term (duplicates possible)."""
        return np.array([term.freq for term in self.terms])

    def modulated_rhs(self, t: float, v: np.ndarray) -> np.ndarray:
        """Tendency of the modulated variable: sum of all terms at time ``t``."""
        v = np.asarray(v, dtype=complex)
        out = np.zeros(self.dim, dtype=complex)
        for term in self.terms:
            out += cmath.exp(1j * term.freq * t) * term.apply(v, v)
        return out

    def resonant_rhs(self, v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Sum of the zero-frequency terms only (autonomous slow tendency)."""
        v = np.asarray(v, dtype=complex)
        out = np.zeros(self.dim, dtype=complex)
        for term in self.terms:
            if abs(term.freq) < tol:
                out += term.apply(v, v)
        return out


@dataclass(frozen=True)
class SpringParams:
    """Physical parameters of the swinging spring.

    Defaults give pendular frequency ``pi`` and elastic frequency ``2*pi``
    (exact 2:1 resonance), rest length 0.75 m and quadratic coupling
    ``3*pi^2``.
    """

    mass: float = 1.0                    # kg
    length: float = 1.0                  # m, spring length at equilibrium
    gravity: float = math.pi ** 2        # m/s^2
    spring_k: float = 4.0 * math.pi ** 2  # kg/s^2

    def __post_init__(self):
        for name in ("mass", "length", "gravity", "spring_k"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float, np.floating)) and val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val!r}")
        if not (0.0 < self.rest_length < self.length):
            raise ValueError(
                f"unstretched length {self.rest_length} must lie strictly between 0 "
                f"and the equilibrium length {self.length}"
            )

    @property
    def omega_r(self) -> float:
        """Frequency of linear pendular motion, sqrt(g / l)."""
        return math.sqrt(self.gravity / self.length)

    @property
    def omega_z(self) -> float:
        """Frequency of elastic oscillation, sqrt(k / m)."""
        return math.sqrt(self.spring_k / self.mass)

    @property
    def freq_ratio(self) -> float:
        """Elastic-to-pendular frequency ratio; 2 at exact resonance."""
        return self.omega_z / self.omega_r

    @property
    def rest_length(self) -> float:
        """Unstretched spring length, from the static balance k (l - l0) = m g."""
        return self.length - self.gravity * self.mass / self.spring_k

    @property
    def coupling(self) -> float:
        """Quadratic coupling coefficient l0 * omega_z^2 / l^2."""
        return self.rest_length * self.omega_z ** 2 / self.length ** 2

    @property
    def cxy(self) -> complex:
        """Interaction coefficient of the horizontal equations."""
        return 1j * self.coupling / (4.0 * self.omega_r)

    @property
    def cz(self) -> complex:
        """Interaction coefficient of the vertical equation."""
        return 1j * self.coupling / (8.0 * self.omega_z)

    @property
    def linear_diag(self) -> np.ndarray:
        """Diagonal of the linear rotation operator."""
        return np.array([-1j * self.omega_r, -1j * self.omega_r, -1j * self.omega_z])


def swing_spring_model(params: SpringParams) -> ResonantQuadraticModel:
    """Swinging spring as a resonant quadratic model in modulated variables.

    The five interaction terms are read directly off the modulated component
    equations; at a general frequency ratio ``rho`` the interaction frequencies
    are ``-rho``, ``+rho``, ``2 - rho``, ``rho - 2`` and ``rho + 2`` in units
    of the pendular frequency.  At exact resonance (``rho = 2``) the two
    ``|rho - 2|`` entries collapse onto the single resonant frequency zero.
    """
    w = params.omega_r
    rho = params.freq_ratio
    cxy = params.cxy
    cz = params.cz
    d = 3

    def tensor(entries: dict[tuple[int, int, int], complex]) -> np.ndarray:
        g = np.zeros((d, d, d), dtype=complex)
        for idx, val in entries.items():
            g[idx] = val
        return g

    x, y, z = 0, 1, 2
    terms = (
        # X Z and Y Z, frequency -rho*w
        ResonantTerm(-rho * w, tensor({(x, x, z): cxy, (y, y, z): cxy})),
        # X conj(Z), Y conj(Z) and 2 (X conj(X) + Y conj(Y)), frequency +rho*w
        ResonantTerm(
            rho * w,
            tensor({(x, x, z): cxy, (y, y, z): cxy, (z, x, x): 2 * cz, (z, y, y): 2 * cz}),
            conj_right=True,
        ),
        # Z conj(X) and Z conj(Y), frequency (2 - rho)*w
        ResonantTerm((2.0 - rho) * w, tensor({(x, z, x): cxy, (y, z, y): cxy}), conj_right=True),
        # conj(X) conj(Z), conj(Y) conj(Z) and conj squares, frequency (rho + 2)*w
        ResonantTerm(
            (rho + 2.0) * w,
            tensor({(x, x, z): cxy, (y, y, z): cxy, (z, x, x): cz, (z, y, y): cz}),
            conj_left=True,
            conj_right=True,
        ),
        # X^2 + Y^2, frequency (rho - 2)*w
        ResonantTerm((rho - 2.0) * w, tensor({(z, x, x): cz, (z, y, y): cz})),
    )
    return ResonantQuadraticModel(dim=d, linear_diag=params.linear_diag, terms=terms, label="swing-spring")


def exact_modulated_rhs(t: float, v: Sequence[complex], params: SpringParams) -> np.ndarray:
    """Tendency of the modulated swinging spring, transcribed term by term.

    Independent of the term-list machinery; used as the reference when testing
    that the model decomposition is complete.
    """
    X, Y, Z = complex(v[0]), complex(v[1]), complex(v[2])
    Xb, Yb, Zb = X.conjugate(), Y.conjugate(), Z.conjugate()
    w = params.omega_r
    rho = params.freq_ratio
    cxy = params.cxy
    cz = params.cz
    em = cmath.exp(-1j * w * rho * t)
    ep = cmath.exp(1j * w * rho * t)
    e2 = cmath.exp(2j * w * t)
    dx = cxy * (X * Z * em + X * Zb * ep + Z * Xb * em * e2 + Xb * Zb * ep * e2)
    dy = cxy * (Y * Z * em + Y * Zb * ep + Z * Yb * em * e2 + Yb * Zb * ep * e2)
    dz = cz * ((X * X + Y * Y) * ep / e2 + 2.0 * (X * Xb + Y * Yb) * ep + (Xb * Xb + Yb * Yb) * ep * e2)
    return np.array([dx, dy, dz])


def initial_state(
    positions: Sequence[float], velocities: Sequence[float], params: SpringParams
) -> np.ndarray:
    """Complex state from Cartesian positions (m) and velocities (m/s).

    Momenta are scaled velocities, ``p = v / omega`` per component, so the
    state packs as ``coordinate + i * momentum``.
    """
    x, y, z = (float(q) for q in positions)
    vx, vy, vz = (float(q) for q in velocities)
    return np.array(
        [
            x + 1j * vx / params.omega_r,
            y + 1j * vy / params.omega_r,
            z + 1j * vz / params.omega_z,
        ]
    )


def back_transform(t, v, params: SpringParams) -> np.ndarray:
    """Undo the modulation: multiply by the rotation ``exp(t L)`` componentwise.

    ``t`` may be a scalar or an array broadcasting against the leading axes of
    ``v``; each component picks up a unit-modulus phase.
    """
    v = np.asarray(v, dtype=complex)
    t = np.asarray(t, dtype=float)
    phases = np.exp(np.multiply.outer(t, params.linear_diag))
    return phases * v


def whitham_limit_rhs(v: Sequence[complex], params: SpringParams) -> np.ndarray:
    """Slow envelope tendency: the resonance-only (infinite window) limit.

    Only valid at the exact 2:1 frequency ratio, where the zero-frequency
    interactions are precisely these three.
    """
    if abs(params.freq_ratio - 2.0) > 1e-12:
        raise ValueError(
            f"resonance-only limit requires an exact 2:1 frequency ratio, "
            f"got {params.freq_ratio}"
        )
    X, Y, Z = complex(v[0]), complex(v[1]), complex(v[2])
    cxy = params.cxy
    cz = params.cz
    return np.array(
        [
            cxy * Z * X.conjugate(),
            cxy * Z * Y.conjugate(),
            cz * (X * X + Y * Y),
        ]
    )


def energy(u, params: SpringParams):
    """Hamiltonian of the swinging spring evaluated on the complex state.

    Accepts a single state of shape (3,) or a batch (..., 3); coordinates are
    the real parts, momenta the imaginary parts, velocities ``omega * p``.
    """
    u = np.asarray(u, dtype=complex)
    x, y, z = u[..., 0].real, u[..., 1].real, u[..., 2].real
    px, py, pz = u[..., 0].imag, u[..., 1].imag, u[..., 2].imag
    wr2 = params.omega_r ** 2
    wz2 = params.omega_z ** 2
    kinetic = 0.5 * (wr2 * (px * px + py * py) + wz2 * pz * pz)
    potential = 0.5 * wr2 * (x * x + y * y) + 0.5 * wz2 * z * z
    interaction = -0.5 * params.coupling * (x * x + y * y) * z
    result = kinetic + potential + interaction
    return float(result) if result.ndim == 0 else result
