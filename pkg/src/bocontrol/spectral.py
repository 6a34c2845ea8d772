"""Spectral representation of real periodic fields on the 2*pi torus.

Fields are stored by their Fourier coefficients u_hat(k), k = -K..K, with
the convention u_hat(k) = (1/2pi) * integral(u(x) exp(-i k x) dx), so that
u(x) = sum_k u_hat(k) exp(i k x).  The collocation grid carries enough
points that pointwise products of band-limited fields are alias-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

MEAN_ZERO_TOL = 1e-10


class NonMeanZeroError(ValueError):
    """Raised when an operation requires a mean-zero field but |u_hat(0)| > tol."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform collocation grid on [0, 2*pi) retaining modes |k| <= mode_cutoff."""

    mode_cutoff: int
    n_points: int

    def __post_init__(self):
        if self.mode_cutoff < 4:
            raise ValueError(f"mode_cutoff must be >= 4, got {self.mode_cutoff}")
        if self.n_points % 2 != 0:
            raise ValueError(f"n_points must be even, got {self.n_points}")
        if self.n_points < 2 * (2 * self.mode_cutoff + 1):
            raise ValueError(
                f"n_points={self.n_points} too small for dealiased products at "
                f"cutoff {self.mode_cutoff}; need >= {2 * (2 * self.mode_cutoff + 1)}"
            )

    @classmethod
    def for_cutoff(cls, mode_cutoff: int) -> "TorusGrid":
        """Smallest power-of-two grid supporting dealiased products at this cutoff."""
        n = 1
        while n < 2 * (2 * mode_cutoff + 1):
            n *= 2
        return cls(mode_cutoff, n)

    @property
    def nodes(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_points) / self.n_points

    @property
    def wavenumbers(self) -> np.ndarray:
        """Retained wavenumbers -K..K in storage order."""
        return np.arange(-self.mode_cutoff, self.mode_cutoff + 1)


class SpectralField:
    """A function on the torus held as Fourier coefficients for |k| <= K.

    Real-valued fields satisfy the Hermitian symmetry u_hat(-k) = conj(u_hat(k));
    one-sided projections and the gauge transform produce genuinely complex
    fields, so the symmetry is checked on demand rather than enforced.
    """

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: TorusGrid, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (2 * grid.mode_cutoff + 1,):
            raise ValueError(
                f"expected {2 * grid.mode_cutoff + 1} coefficients, got {coeffs.shape}"
            )
        self.grid = grid
        self.coeffs = coeffs

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, grid: TorusGrid) -> "SpectralField":
        return cls(grid, np.zeros(2 * grid.mode_cutoff + 1, dtype=np.complex128))

    @classmethod
    def from_values(cls, grid: TorusGrid, values: np.ndarray) -> "SpectralField":
        """Field from samples on the collocation nodes (real or complex)."""
        values = np.asarray(values)
        if values.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} samples, got {values.shape}")
        full = np.fft.fft(values) / grid.n_points
        K = grid.mode_cutoff
        coeffs = np.empty(2 * K + 1, dtype=np.complex128)
        coeffs[K:] = full[: K + 1]          # k = 0..K
        coeffs[:K] = full[grid.n_points - K:]  # k = -K..-1
        return cls(grid, coeffs)

    @classmethod
    def from_modes(cls, grid: TorusGrid, sin_coeffs=None, cos_coeffs=None,
                   mean: float = 0.0) -> "SpectralField":
        """Field sum_k a_k sin(kx) + b_k cos(kx) + mean from {k: amplitude} dicts."""
        f = cls.zero(grid)
        f.coeffs[grid.mode_cutoff] = mean
        for k, a in (sin_coeffs or {}).items():
            if not 1 <= k <= grid.mode_cutoff:
                raise ValueError(f"sin mode {k} outside 1..{grid.mode_cutoff}")
            f._set(k, f._get(k) - 0.5j * a)
            f._set(-k, f._get(-k) + 0.5j * a)
        for k, b in (cos_coeffs or {}).items():
            if not 1 <= k <= grid.mode_cutoff:
                raise ValueError(f"cos mode {k} outside 1..{grid.mode_cutoff}")
            f._set(k, f._get(k) + 0.5 * b)
            f._set(-k, f._get(-k) + 0.5 * b)
        return f

    # -- indexing ----------------------------------------------------------

    def _get(self, k: int) -> complex:
        return self.coeffs[k + self.grid.mode_cutoff]

    def _set(self, k: int, value: complex) -> None:
        self.coeffs[k + self.grid.mode_cutoff] = value

    def coefficient(self, k: int) -> complex:
        """u_hat(k); zero outside the retained band."""
        if abs(k) > self.grid.mode_cutoff:
            return 0.0 + 0.0j
        return self._get(k)

    # -- predicates --------------------------------------------------------

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return bool(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1]))) <= tol * scale)

    def mean(self) -> complex:
        return self._get(0)

    def require_mean_zero(self, tol: float = MEAN_ZERO_TOL) -> None:
        if abs(self._get(0)) > tol:
            raise NonMeanZeroError(
                f"field has mean {self._get(0):.3e}, above tolerance {tol:.1e}"
            )

    # -- evaluation --------------------------------------------------------

    def values(self) -> np.ndarray:
        """Samples on the collocation nodes (real array for Hermitian fields)."""
        n, K = self.grid.n_points, self.grid.mode_cutoff
        full = np.zeros(n, dtype=np.complex128)
        full[: K + 1] = self.coeffs[K:]
        full[n - K:] = self.coeffs[:K]
        vals = np.fft.ifft(full * n)
        if self.is_hermitian():
            return vals.real
        return vals

    # -- arithmetic --------------------------------------------------------

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def _check_grid(self, other: "SpectralField") -> None:
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        K = self.grid.mode_cutoff
        triples = [
            [int(k), float(self._get(k).real), float(self._get(k).imag)]
            for k in range(-K, K + 1)
            if self._get(k) != 0
        ]
        return {
            "grid": {"mode_cutoff": K, "n_points": self.grid.n_points},
            "coeffs": triples,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SpectralField":
        grid = TorusGrid(int(data["grid"]["mode_cutoff"]), int(data["grid"]["n_points"]))
        f = cls.zero(grid)
        for k, re, im in data["coeffs"]:
            f._set(int(k), complex(re, im))
        return f

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "SpectralField":
        return cls.from_json_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Fourier multiplier operations
# ---------------------------------------------------------------------------


def hilbert_transform(f: SpectralField) -> SpectralField:
    """Multiplier -i*sgn(k); maps cos(kx) -> sin(kx), sin(kx) -> -cos(kx)."""
    k = f.grid.wavenumbers
    return SpectralField(f.grid, -1j * np.sign(k) * f.coeffs)


def derivative(f: SpectralField) -> SpectralField:
    k = f.grid.wavenumbers
    return SpectralField(f.grid, 1j * k * f.coeffs)


def antiderivative(f: SpectralField) -> SpectralField:
    """Inverse of the derivative on mean-zero fields; output has zero mean."""
    f.require_mean_zero()
    k = f.grid.wavenumbers.astype(np.float64)
    k[f.grid.mode_cutoff] = 1.0  # avoid 0/0; the k=0 slot is zeroed below
    out = f.coeffs / (1j * k)
    out[f.grid.mode_cutoff] = 0.0
    return SpectralField(f.grid, out)


def project(f: SpectralField, selector: str, n: int | None = None) -> SpectralField:
    """Projection onto a coefficient range.

    selector: 'positive' (k >= 1), 'negative' (k <= -1), 'mean' (k = 0),
    'below' (|k| < n), 'at_or_above' (k >= n).
    """
    k = f.grid.wavenumbers
    if selector == "positive":
        mask = k >= 1
    elif selector == "negative":
        mask = k <= -1
    elif selector == "mean":
        mask = k == 0
    elif selector == "below":
        if n is None:
            raise ValueError("selector 'below' needs n")
        if n > f.grid.mode_cutoff:
            raise ValueError(f"n={n} exceeds mode cutoff {f.grid.mode_cutoff}")
        mask = np.abs(k) < n
    elif selector == "at_or_above":
        if n is None:
            raise ValueError("selector 'at_or_above' needs n")
        if n > f.grid.mode_cutoff:
            raise ValueError(f"n={n} exceeds mode cutoff {f.grid.mode_cutoff}")
        mask = k >= n
    else:
        raise ValueError(f"unknown selector {selector!r}")
    return SpectralField(f.grid, np.where(mask, f.coeffs, 0.0))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """H^s norm with multiplier (1+k^2)^(s/2), normalized so ||sin x||_0^2 = pi."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"Sobolev index must lie in [0, 1], got {s}")
    k = f.grid.wavenumbers
    weights = (1.0 + k.astype(np.float64) ** 2) ** s
    return float(np.sqrt(TWO_PI * np.sum(weights * np.abs(f.coeffs) ** 2)))


def l2_inner(f: SpectralField, g: SpectralField) -> float:
    """integral(f*g dx) over [0, 2*pi] for real fields."""
    f._check_grid(g)
    return float(TWO_PI * np.real(np.sum(f.coeffs * np.conj(g.coeffs))))


def dealiased_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product, exact for the retained band.

    The grid invariant n_points >= 2(2K+1) guarantees that no product mode
    aliases back into |k| <= K; modes beyond K are truncated.
    """
    f._check_grid(g)
    return SpectralField.from_values(f.grid, f.values() * g.values())


def galilean_shift(f: SpectralField, offset: float) -> SpectralField:
    """x -> f(x - offset); phase factor exp(-i k offset) on each coefficient."""
    k = f.grid.wavenumbers
    return SpectralField(f.grid, f.coeffs * np.exp(-1j * k * offset))


def gauge_transform(u: SpectralField, zeta: SpectralField) -> SpectralField:
    """Diagnostic unknown w = d/dx P_+ exp(i F / 2) with F the antiderivative of u+zeta.

    The exponential is evaluated on the collocation grid and truncated at the
    grid cutoff; the result is a complex (analytic-signal type) field.
    """
    u._check_grid(zeta)
    F = antiderivative(u + zeta)
    exp_field = SpectralField.from_values(u.grid, np.exp(0.5j * F.values()))
    return derivative(project(exp_field, "positive"))
