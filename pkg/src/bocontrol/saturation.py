"""Subspace ladder generated by the forced modes and the quadratic drift.

The ladder starts from span{sin x, cos x} and grows by adjoining all
directions eta - sum_i zeta_i * d/dx zeta_i with eta, zeta_i drawn from the
previous level.  A rank certificate tracks which Fourier modes each level
covers; decompose_direction inverts the construction, writing a target
direction in that drift form with zetas that the planner can realize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralField, TorusGrid, dealiased_product, derivative, sobolev_norm

MEMBERSHIP_TOL = 1e-8
RANK_TOL = 1e-10


class CutoffOverflowError(ValueError):
    """A quadratic product would exceed the span's mode cutoff."""


class NotInSpanError(ValueError):
    """Target direction is not reachable from the source span's ladder step."""


def bilinear_drift(f: SpectralField, g: SpectralField) -> SpectralField:
    """Symmetrized drift b(f, g) = (1/2) d/dx (f g); b(f, f) = f * d/dx f."""
    return 0.5 * derivative(dealiased_product(f, g))


class ModeSpan:
    """A subspace of mean-zero trigonometric polynomials up to mode K.

    The basis is stored as rows of coefficients over [sin 1x..sin Kx,
    cos 1x..cos Kx], orthonormal in L2(0, 2*pi) (each row has Euclidean
    norm 1/sqrt(pi) since the raw trig functions have norm sqrt(pi)).
    """

    def __init__(self, mode_cutoff: int, basis: np.ndarray, level: int = 0):
        basis = np.atleast_2d(np.asarray(basis, dtype=np.float64))
        if basis.shape[1] != 2 * mode_cutoff:
            raise ValueError(
                f"basis rows must have 2*K={2 * mode_cutoff} entries, got {basis.shape[1]}"
            )
        self.mode_cutoff = mode_cutoff
        self.basis = basis
        self.level = level

    @classmethod
    def h0(cls, mode_cutoff: int) -> "ModeSpan":
        """Level-0 span{sin x, cos x}, orthonormalized."""
        if mode_cutoff < 1:
            raise ValueError("mode cutoff must be >= 1")
        basis = np.zeros((2, 2 * mode_cutoff))
        basis[0, 0] = 1.0 / math.sqrt(math.pi)            # sin x
        basis[1, mode_cutoff] = 1.0 / math.sqrt(math.pi)  # cos x
        return cls(mode_cutoff, basis, level=0)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    # -- conversions -------------------------------------------------------

    def grid(self) -> TorusGrid:
        return TorusGrid.for_cutoff(max(4, self.mode_cutoff))

    def row_to_field(self, row: np.ndarray, grid: TorusGrid | None = None) -> SpectralField:
        grid = grid or self.grid()
        K = self.mode_cutoff
        sin_part = {k + 1: row[k] for k in range(K) if row[k] != 0.0}
        cos_part = {k + 1: row[K + k] for k in range(K) if row[K + k] != 0.0}
        return SpectralField.from_modes(grid, sin_part, cos_part)

    def member_field(self, i: int, grid: TorusGrid | None = None) -> SpectralField:
        return self.row_to_field(self.basis[i], grid)

    @staticmethod
    def field_to_row(f: SpectralField, mode_cutoff: int) -> np.ndarray:
        """Trig coefficients of a real mean-zero field, a_k = -2 Im u_hat(k) etc."""
        f.require_mean_zero()
        row = np.zeros(2 * mode_cutoff)
        for k in range(1, mode_cutoff + 1):
            c = f.coefficient(k)
            row[k - 1] = -2.0 * c.imag
            row[mode_cutoff + k - 1] = 2.0 * c.real
        # reject content beyond the span's cutoff
        for k in range(mode_cutoff + 1, f.grid.mode_cutoff + 1):
            if abs(f.coefficient(k)) > RANK_TOL:
                raise CutoffOverflowError(
                    f"field has mode {k} content beyond span cutoff {mode_cutoff}"
                )
        return row

    # -- geometry ----------------------------------------------------------

    def project_row(self, row: np.ndarray) -> np.ndarray:
        """L2-orthogonal projection of a trig-coefficient row onto the span."""
        # rows are orthonormal under <v, w> = pi * v.w
        inner = math.pi * self.basis @ row
        return inner @ self.basis

    def residual(self, f: SpectralField) -> float:
        row = self.field_to_row(f, self.mode_cutoff)
        diff = row - self.project_row(row)
        return math.sqrt(math.pi * float(diff @ diff))

    def contains(self, f: SpectralField, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.residual(f) <= tol * max(1.0, sobolev_norm(f, 0))

    def modes_covered(self, tol: float = MEMBERSHIP_TOL, cap: int | None = None) -> int:
        """Largest m such that sin kx and cos kx lie in the span for all k <= m."""
        cap = self.mode_cutoff if cap is None else min(cap, self.mode_cutoff)
        covered = 0
        for k in range(1, cap + 1):
            sin_row = np.zeros(2 * self.mode_cutoff)
            cos_row = np.zeros(2 * self.mode_cutoff)
            sin_row[k - 1] = 1.0
            cos_row[self.mode_cutoff + k - 1] = 1.0
            ok = True
            for row in (sin_row, cos_row):
                diff = row - self.project_row(row)
                if math.sqrt(math.pi * float(diff @ diff)) > tol * math.sqrt(math.pi):
                    ok = False
                    break
            if not ok:
                break
            covered = k
        return covered

    def max_mode(self, tol: float = RANK_TOL) -> int:
        """Largest mode carrying basis content above tol."""
        K = self.mode_cutoff
        top = 0
        for k in range(1, K + 1):
            amp = max(float(np.max(np.abs(self.basis[:, k - 1]))),
                      float(np.max(np.abs(self.basis[:, K + k - 1]))))
            if amp > tol:
                top = k
        return top

    def zero_extend(self, new_cutoff: int) -> "ModeSpan":
        if new_cutoff < self.mode_cutoff:
            raise ValueError("zero_extend cannot shrink the cutoff")
        K = self.mode_cutoff
        basis = np.zeros((self.dim, 2 * new_cutoff))
        basis[:, :K] = self.basis[:, :K]
        basis[:, new_cutoff:new_cutoff + K] = self.basis[:, K:]
        return ModeSpan(new_cutoff, basis, self.level)


def _orthonormalize(rows: np.ndarray, sv_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal (in L2) row basis of the row space, rank-truncated by SVD."""
    norms = np.sqrt(math.pi * np.sum(rows**2, axis=1))
    keep = norms > sv_tol
    if not np.any(keep):
        return np.zeros((0, rows.shape[1]))
    normalized = rows[keep] / norms[keep, None] * (1.0 / math.sqrt(math.pi))
    _, sv, vt = np.linalg.svd(normalized, full_matrices=False)
    rank = int(np.sum(sv > sv_tol))
    return vt[:rank] / math.sqrt(math.pi)


def ladder_step(span: ModeSpan) -> ModeSpan:
    """Next ladder level: old span plus all pairwise drifts of its basis.

    Raises CutoffOverflowError when products would exceed the span's cutoff,
    rather than silently truncating.
    """
    top = span.max_mode()
    if 2 * top > span.mode_cutoff:
        raise CutoffOverflowError(
            f"products of modes up to {top} exceed cutoff {span.mode_cutoff}; "
            f"zero_extend to at least {2 * top} first"
        )
    grid = span.grid()
    fields = [span.member_field(i, grid) for i in range(span.dim)]
    rows = [span.basis[i] for i in range(span.dim)]
    for a in range(span.dim):
        for b in range(a, span.dim):
            prod = bilinear_drift(fields[a], fields[b])
            rows.append(ModeSpan.field_to_row(prod, span.mode_cutoff))
    basis = _orthonormalize(np.array(rows))
    return ModeSpan(span.mode_cutoff, basis, level=span.level + 1)


@dataclass
class CertificateRow:
    level: int
    dim: int
    modes_covered: int


@dataclass
class SaturationCertificate:
    target_modes: int
    rows: list[CertificateRow]
    spans: list[ModeSpan]

    @property
    def covered(self) -> bool:
        return any(r.modes_covered >= self.target_modes for r in self.rows)

    @property
    def covering_level(self) -> int | None:
        for r in self.rows:
            if r.modes_covered >= self.target_modes:
                return r.level
        return None

    def least_level_containing(self, f: SpectralField,
                               tol: float = MEMBERSHIP_TOL) -> int | None:
        band = max(1, _band_limit(f))
        for span in self.spans:
            wide = span.zero_extend(max(span.mode_cutoff, band))
            if wide.contains(f, tol):
                return span.level
        return None

    def to_csv(self) -> str:
        lines = ["level,dim,modes_covered"]
        lines += [f"{r.level},{r.dim},{r.modes_covered}" for r in self.rows]
        return "\n".join(lines) + "\n"


def _band_limit(f: SpectralField, tol: float = RANK_TOL) -> int:
    top = 0
    for k in range(1, f.grid.mode_cutoff + 1):
        if abs(f.coefficient(k)) > tol or abs(f.coefficient(-k)) > tol:
            top = k
    return top


def saturation_certificate(target_modes: int, j_max: int = 8,
                           max_cutoff: int = 512) -> SaturationCertificate:
    """Run the ladder until it covers all modes <= target_modes (or stalls).

    Spans are zero-extended as products require; exceeding max_cutoff raises
    CutoffOverflowError.  Returns per-level dimension and coverage rows, the
    finite analogue of the density of the ladder union.
    """
    if target_modes < 2:
        raise ValueError("target_modes must be >= 2")
    span = ModeSpan.h0(max(4, target_modes))
    rows = [CertificateRow(0, span.dim, span.modes_covered(cap=target_modes))]
    spans = [span]
    for _ in range(j_max):
        if rows[-1].modes_covered >= target_modes:
            break
        needed = 2 * span.max_mode()
        if needed > span.mode_cutoff:
            if needed > max_cutoff:
                raise CutoffOverflowError(
                    f"ladder needs cutoff {needed} > max_cutoff {max_cutoff}"
                )
            span = span.zero_extend(needed)
        new_span = ladder_step(span)
        rows.append(CertificateRow(new_span.level, new_span.dim,
                                   new_span.modes_covered(cap=target_modes)))
        if new_span.dim == span.dim:
            break  # fixed point: further steps cannot grow the span
        span = new_span
        spans.append(span)
    return SaturationCertificate(target_modes, rows, spans)


# ---------------------------------------------------------------------------
# Direction decomposition
# ---------------------------------------------------------------------------


@dataclass
class DirectionDecomposition:
    """target = eta - sum_i zeta_i * d/dx zeta_i with eta, zeta_i in the source span."""

    level: int
    eta: SpectralField
    zetas: list[SpectralField] = field(default_factory=list)
    target: SpectralField | None = None

    def reconstruction(self) -> SpectralField:
        out = self.eta.copy()
        for z in self.zetas:
            out = out - bilinear_drift(z, z)
        return out

    def residual(self) -> float:
        if self.target is None:
            return 0.0
        return sobolev_norm(self.reconstruction() - self.target, 0)


def _mode_component(f: SpectralField, m: int) -> tuple[float, float]:
    """(alpha, beta) with the mode-m part of f equal to alpha sin(mx) + beta cos(mx)."""
    c = f.coefficient(m)
    return -2.0 * c.imag, 2.0 * c.real


def _pair_field(grid: TorusGrid, k: int, z: complex) -> SpectralField:
    """Re(z) sin(kx) + Im(z) cos(kx)."""
    return SpectralField.from_modes(grid, {k: z.real}, {k: z.imag})


def decompose_direction(target: SpectralField, source_span: ModeSpan,
                        tol: float = MEMBERSHIP_TOL,
                        symmetrize: bool = True) -> DirectionDecomposition:
    """Write target as eta - sum_i zeta_i d/dx zeta_i over the source span.

    High modes are eliminated pairwise: a mode-m direction alpha sin(mx) +
    beta cos(mx) is produced by -zeta d/dx zeta with zeta supported on modes
    (k, l), k + l = m, whose complex pair amplitudes solve z*w =
    -(2/m)(alpha + i beta).  Odd modes are handled first (their side effects
    land on even modes and mode 1), then even modes via single-pair zetas
    which are side-effect free; whatever remains must lie in the source span
    and becomes eta.  With symmetrize=True every zeta is emitted as the pair
    +-zeta/sqrt(2), which realizes the same drift while cancelling the
    leading dispersive error of the planner's short-time blocks.
    """
    target.require_mean_zero()
    grid = target.grid
    M = source_span.modes_covered(tol)
    if M < 1:
        raise NotInSpanError("source span covers no full mode pair")
    top = _band_limit(target)
    if top > min(2 * M, grid.mode_cutoff):
        raise NotInSpanError(
            f"target has mode {top} content; ladder step of the source reaches "
            f"only {min(2 * M, grid.mode_cutoff)}"
        )
    if 2 * M > grid.mode_cutoff and top > M:
        raise CutoffOverflowError(
            f"grid cutoff {grid.mode_cutoff} cannot hold products up to {2 * M}"
        )

    scale = max(1.0, sobolev_norm(target, 0))
    cur = target.copy()
    zetas: list[SpectralField] = []

    def emit(zeta: SpectralField) -> None:
        nonlocal cur
        if symmetrize:
            half = (1.0 / math.sqrt(2.0)) * zeta
            zetas.extend([half, -1.0 * half])
        else:
            zetas.append(zeta)
        cur = cur + bilinear_drift(zeta, zeta)

    # odd high modes first: side effects fall on even modes and mode 1
    for m in range(2 * M - 1, M, -1):
        if m % 2 == 0:
            continue
        alpha, beta = _mode_component(cur, m)
        if math.hypot(alpha, beta) <= tol * scale:
            continue
        k, l = (m + 1) // 2, (m - 1) // 2
        zw = complex(-2.0 * alpha / m, -2.0 * beta / m)
        z = np.sqrt(complex(zw))  # balanced split z = w
        emit(_pair_field(grid, k, z) + _pair_field(grid, l, z))

    # even high modes: single-pair zetas, no side effects
    for m in range(2 * M if 2 * M % 2 == 0 else 2 * M - 1, M, -2):
        alpha, beta = _mode_component(cur, m)
        if math.hypot(alpha, beta) <= tol * scale:
            continue
        k = m // 2
        w = np.sqrt(complex(-2.0 * alpha / k, -2.0 * beta / k))
        emit(_pair_field(grid, k, w))

    eta = cur
    if source_span.zero_extend(max(source_span.mode_cutoff,
                                   grid.mode_cutoff)).residual(eta) > tol * scale:
        raise NotInSpanError("residual after removing high modes is not in the source span")

    decomp = DirectionDecomposition(level=source_span.level + 1, eta=eta,
                                    zetas=zetas, target=target)
    assert decomp.residual() <= tol * scale
    return decomp
