"""Control synthesis: admissible two-mode schedules reaching arbitrary targets.

Motion along sin x / cos x is produced directly by large short kicks
(elementary moves).  New directions come from three-phase blocks: steer a
large spike delta^(-1/2) zeta onto the state, coast for delta while the
nonlinearity generates -zeta d/dx zeta, then remove the spike.  Decomposed
spikes arrive in +-zeta/sqrt(2) pairs so the leading dispersive error of
consecutive blocks cancels; whatever error survives a move is folded into
the next move's target, so a plan is a chain of extended moves on the
shrinking residual.  Every move is verified by simulation while planning,
and the reported error always comes from an independent refined-step solve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .saturation import (
    DirectionDecomposition,
    ModeSpan,
    SaturationCertificate,
    bilinear_drift,
    decompose_direction,
    saturation_certificate,
)
from .solver import ForcingInput, IntegratorConfig, solve
from .spectral import SpectralField, TorusGrid, sobolev_norm


class BudgetExhaustedError(RuntimeError):
    """Halvings or correction rounds ran out before meeting the tolerance."""

    def __init__(self, message: str, schedule: "ControlSchedule | None" = None):
        super().__init__(message)
        self.schedule = schedule


class RecursionLimitError(RuntimeError):
    """Move recursion exceeded the ladder height."""


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleSegment:
    """One piecewise-constant control segment: duration and a field in a span."""

    duration: float
    span: ModeSpan | None          # None marks a zero-control coast
    coefficients: np.ndarray | None

    @classmethod
    def coast(cls, duration: float) -> "ScheduleSegment":
        return cls(duration, None, None)

    @classmethod
    def two_mode(cls, duration: float, a: float, b: float) -> "ScheduleSegment":
        """Control a sin x + b cos x held for the given duration."""
        span = ModeSpan.h0(1)
        coeffs = np.array([a, b]) * math.sqrt(math.pi)  # basis rows are trig/sqrt(pi)
        return cls(duration, span, coeffs)

    @property
    def is_coast(self) -> bool:
        return self.span is None or not np.any(self.coefficients)

    def admissible(self) -> bool:
        return self.is_coast or self.span.max_mode() <= 1

    def two_mode_amplitudes(self) -> tuple[float, float]:
        """(a, b) with control = a sin x + b cos x; requires an admissible segment."""
        if self.is_coast:
            return 0.0, 0.0
        if not self.admissible():
            raise ValueError("segment is not supported on sin x / cos x only")
        row = self.coefficients @ self.span.basis
        return float(row[0]), float(row[self.span.mode_cutoff])

    def control_field(self, grid: TorusGrid) -> SpectralField | None:
        if self.is_coast:
            return None
        a, b = self.two_mode_amplitudes() if self.admissible() else (None, None)
        if a is not None:
            return SpectralField.from_modes(grid, {1: a}, {1: b})
        row = self.coefficients @ self.span.basis
        return self.span.row_to_field(row, grid)

    def amplitude(self) -> float:
        if self.is_coast:
            return 0.0
        row = self.coefficients @ self.span.basis
        K = self.span.mode_cutoff
        return float(np.sqrt(np.sum(
            np.hypot(row[:K], row[K:]) ** 2
        )))


@dataclass
class ControlSchedule:
    segments: list[ScheduleSegment] = field(default_factory=list)

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def admissible(self) -> bool:
        return all(s.admissible() for s in self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def max_amplitude(self) -> float:
        return max((s.amplitude() for s in self.segments), default=0.0)

    def to_forcing(self, grid: TorusGrid) -> ForcingInput:
        if not self.segments:
            raise ValueError("empty schedule has no forcing")
        return ForcingInput.piecewise(
            [(s.duration, s.control_field(grid)) for s in self.segments]
        )

    def to_json_dict(self) -> dict:
        out = []
        for s in self.segments:
            a, b = s.two_mode_amplitudes()
            out.append({"duration": float(s.duration), "a": a, "b": b})
        return {"segments": out}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, data: dict) -> "ControlSchedule":
        segs = []
        for i, s in enumerate(data["segments"]):
            try:
                dur, a, b = float(s["duration"]), float(s["a"]), float(s["b"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"malformed segment {i}: {s!r}") from exc
            if dur <= 0:
                raise ValueError(f"malformed segment {i}: duration must be positive")
            if a == 0.0 and b == 0.0:
                segs.append(ScheduleSegment.coast(dur))
            else:
                segs.append(ScheduleSegment.two_mode(dur, a, b))
        return cls(segs)

    @classmethod
    def from_json(cls, text: str) -> "ControlSchedule":
        return cls.from_json_dict(json.loads(text))


def concatenate(f: ControlSchedule, g: ControlSchedule) -> ControlSchedule:
    """Schedule f followed by schedule g; durations add."""
    return ControlSchedule(list(f.segments) + list(g.segments))


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------


@dataclass
class PlannerConfig:
    grid_cutoff: int = 16
    integrator: IntegratorConfig = field(
        default_factory=lambda: IntegratorConfig(dt_max=4e-3)
    )
    delta_start: float = 0.1
    max_halvings: int = 20
    max_rounds: int = 16
    projection_fraction: float = 0.5  # share of epsilon spent on ladder projection
    ladder_j_max: int = 8

    def grid(self) -> TorusGrid:
        return TorusGrid.for_cutoff(self.grid_cutoff)


@dataclass
class PlanReport:
    achieved_error: float
    requested_epsilon: float
    total_duration: float
    segment_count: int
    max_amplitude: float
    recursion_depth: int

    def to_json_dict(self) -> dict:
        return {
            "achieved_error": float(self.achieved_error),
            "requested_epsilon": float(self.requested_epsilon),
            "total_duration": float(self.total_duration),
            "segment_count": int(self.segment_count),
            "max_amplitude": float(self.max_amplitude),
            "recursion_depth": int(self.recursion_depth),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


class _Planner:
    """Stateful helper carrying the grid, ladder spans and simulation state."""

    def __init__(self, cfg: PlannerConfig, certificate: SaturationCertificate | None = None):
        self.cfg = cfg
        self.grid = cfg.grid()
        self.certificate = certificate
        self.depth_used = 0
        self._delta_hint: dict[int, float] = {}

    # -- simulation --------------------------------------------------------

    def run(self, u: SpectralField, schedule: ControlSchedule) -> SpectralField:
        if not schedule.segments:
            return u.copy()
        forcing = schedule.to_forcing(self.grid)
        traj = solve(u, forcing, schedule.total_duration, self.cfg.integrator)
        return traj.final_state

    # -- ladder access -----------------------------------------------------

    def span_for_level(self, level: int) -> ModeSpan:
        if self.certificate is None or level >= len(self.certificate.spans):
            raise RecursionLimitError(
                f"level {level} exceeds the certified ladder height"
            )
        return self.certificate.spans[level].zero_extend(self.grid.mode_cutoff)

    # -- moves -------------------------------------------------------------

    def elementary(self, u: SpectralField, eta: SpectralField, eps: float,
                   ) -> tuple[ControlSchedule, SpectralField]:
        """Single segment (delta, eta/delta) reaching u + eta within eps.

        The error is asymptotically linear in delta, so after probing at
        delta_start the search jumps proportionally toward the budget and
        then falls back to plain halving; the floor stays at
        delta_start * 2^-max_halvings either way.
        """
        if sobolev_norm(eta, 0) <= 1e-14:
            return ControlSchedule(), u.copy()
        a = -2.0 * eta.coefficient(1).imag
        b = 2.0 * eta.coefficient(1).real
        resid = eta - SpectralField.from_modes(self.grid, {1: a}, {1: b})
        if sobolev_norm(resid, 0) > 1e-9 * max(1.0, sobolev_norm(eta, 0)):
            raise ValueError("elementary move target is not supported on sin x, cos x")
        target = u + eta
        floor = self.cfg.delta_start * 0.5 ** self.cfg.max_halvings
        delta = self.cfg.delta_start
        for _ in range(self.cfg.max_halvings + 1):
            cand = ControlSchedule([ScheduleSegment.two_mode(delta, a / delta, b / delta)])
            final = self.run(u, cand)
            err = sobolev_norm(final - target, 0)
            if err < eps:
                return cand, final
            if delta <= floor * (1 + 1e-9):
                break
            jump = delta * (0.5 * eps / err)
            delta = max(floor, min(0.5 * delta, jump))
        raise BudgetExhaustedError(
            f"elementary move missed eps={eps:.3e} at the delta floor", None
        )

    def displace(self, u: SpectralField, d: SpectralField, eps: float,
                 level: int) -> tuple[ControlSchedule, SpectralField]:
        """Steer u -> u + d within eps using ladder level `level` machinery."""
        self.depth_used = max(self.depth_used, level)
        if sobolev_norm(d, 0) <= 1e-14:
            return ControlSchedule(), u.copy()
        if level == 0:
            return self.elementary(u, d, eps)
        source = self.span_for_level(level - 1)
        decomp = decompose_direction(d, source)
        return self.extended(u, decomp, eps, depth=level)

    def extended(self, u: SpectralField, decomp: DirectionDecomposition,
                 eps: float, depth: int) -> tuple[ControlSchedule, SpectralField]:
        """Realize eta - sum zeta_i dx zeta_i by sequential three-phase blocks.

        Spikes arriving as +-zeta pairs share one coast length delta and are
        verified jointly; delta halves until the pair lands within its error
        share.  Phase C always targets the intended post-block state, so
        phase errors do not stack.  The residual eta share is applied last
        and absorbs whatever the planner can correct at the base level.
        """
        groups = _group_zetas(decomp.zetas)
        eta_norm = sobolev_norm(decomp.eta, 0)
        n_terms = len(groups) + (1 if eta_norm > 1e-14 else 0)
        if n_terms == 0:
            return ControlSchedule(), u.copy()
        eps_term = eps / n_terms

        direction = decomp.target if decomp.target is not None else decomp.reconstruction()
        schedule = ControlSchedule()
        sim = u.copy()
        intended = u.copy()

        for grp in groups:
            drift = SpectralField.zero(self.grid)
            for z in grp:
                drift = drift - bilinear_drift(z, z)
            intended = intended + drift
            plan, sim = self._spike_group(sim, grp, intended, eps_term, depth)
            schedule = concatenate(schedule, plan)

        # residual eta share, folding accumulated block error into the target
        correction = (u + direction) - sim
        corr_proj = _project_onto(correction, self.span_for_level(depth - 1))
        if sobolev_norm(corr_proj, 0) > 1e-14:
            budget = eps_term if eta_norm > 1e-14 else 0.5 * eps_term
            plan, sim = self.displace(sim, corr_proj, budget, depth - 1)
            schedule = concatenate(schedule, plan)
        return schedule, sim

    def _spike_group(self, base: SpectralField, zetas: list[SpectralField],
                     intended_end: SpectralField, eps_term: float, depth: int,
                     ) -> tuple[ControlSchedule, SpectralField]:
        """One or two three-phase blocks (a +- pair) with a shared coast length.

        The shared coast length delta shrinks until the group's verified
        error fits its share; the decay rate is estimated from consecutive
        samples (the intrinsic rate sits between sqrt(delta) and delta) so
        the search jumps rather than crawling one halving at a time.
        """
        floor = self.cfg.delta_start * 0.5 ** self.cfg.max_halvings
        phase_eps = eps_term / 3.0
        drift_size = sobolev_norm(intended_end - base, 0)
        # start from the last coast length that worked at this depth: sibling
        # blocks need similar deltas, and retries from delta_start are the
        # planner's dominant cost
        delta = min(self.cfg.delta_start,
                    4.0 * self._delta_hint.get(depth, self.cfg.delta_start))
        prev: tuple[float, float] | None = None
        best: tuple[float, ControlSchedule, SpectralField] | None = None
        last_exc: BudgetExhaustedError | None = None
        for _ in range(self.cfg.max_halvings + 1):
            err = None
            try:
                schedule = ControlSchedule()
                sim = base.copy()
                spike_scale = delta ** -0.5

                def phase_budget(target: SpectralField) -> float:
                    # recursive phases may be sloppy in-span (the next C phase
                    # retargets within the wider span); elementary phases leak
                    # quadratic junk out of H_0, so they keep the strict share
                    if depth - 1 == 0:
                        return phase_eps
                    return max(phase_eps, 0.08 * sobolev_norm(target, 0))

                for i, z in enumerate(zetas):
                    spike = spike_scale * z
                    plan_a, sim = self.displace(
                        sim, spike, phase_budget(spike), depth - 1
                    )
                    coast = ControlSchedule([ScheduleSegment.coast(delta)])
                    sim = self.run(sim, coast)
                    last = i == len(zetas) - 1
                    target_c = (intended_end - sim) if last else -1.0 * spike
                    target_c = _project_onto(target_c, self.span_for_level(depth - 1))
                    plan_c, sim = self.displace(
                        sim, target_c, phase_budget(target_c), depth - 1
                    )
                    schedule = concatenate(
                        schedule, concatenate(plan_a, concatenate(coast, plan_c))
                    )
                err = sobolev_norm(sim - intended_end, 0)
                if err < eps_term:
                    self._delta_hint[depth] = delta
                    return schedule, sim
                if best is None or err < best[0]:
                    best = (err, schedule, sim)
            except BudgetExhaustedError as exc:
                last_exc = exc
            if delta <= floor * (1 + 1e-9):
                break
            if err is None:
                delta = max(floor, 0.5 * delta)  # inner move failed: just shrink
                continue
            if prev is not None and err > 0.85 * prev[1]:
                break  # block error floor reached: shrinking delta only adds junk
            rate = 0.5
            if prev is not None and err < prev[1] and delta < prev[0]:
                est = math.log(prev[1] / err) / math.log(prev[0] / delta)
                rate = min(1.2, max(0.4, est))
            prev = (delta, err)
            jump = delta * (0.5 * eps_term / err) ** (1.0 / rate)
            # clamp to at most 8x shrink per try: spikes inflate as
            # delta^(-1/2), and a junk-floored error must hit the stall
            # check before the blocks get expensive
            delta = max(floor, min(0.5 * delta, max(jump, 0.125 * delta)))
        # a block that contracts the residual is still useful: later corrective
        # moves re-attack what its phases could not express in their spans
        if best is not None and best[0] <= 0.6 * drift_size:
            self._delta_hint[depth] = delta
            return best[1], best[2]
        raise BudgetExhaustedError(
            f"spike block stalled at error "
            f"{best[0] if best else float('nan'):.3e} (eps={eps_term:.3e})", None
        ) from last_exc


def _top_mode(f: SpectralField) -> int:
    top = 1
    for k in range(1, f.grid.mode_cutoff + 1):
        if abs(f.coefficient(k)) > 1e-12:
            top = k
    return top


def _group_zetas(zetas: list[SpectralField]) -> list[list[SpectralField]]:
    """Group adjacent +-zeta pairs so each pair shares one coast length."""
    groups: list[list[SpectralField]] = []
    i = 0
    while i < len(zetas):
        if i + 1 < len(zetas) and np.allclose(
            zetas[i].coeffs, -zetas[i + 1].coeffs, atol=1e-14
        ):
            groups.append([zetas[i], zetas[i + 1]])
            i += 2
        else:
            groups.append([zetas[i]])
            i += 1
    return groups


def _project_onto(f: SpectralField, span: ModeSpan) -> SpectralField:
    row = ModeSpan.field_to_row(f, span.mode_cutoff)
    proj = span.project_row(row)
    K = span.mode_cutoff
    return SpectralField.from_modes(
        f.grid,
        {k + 1: proj[k] for k in range(K) if proj[k] != 0.0},
        {k + 1: proj[K + k] for k in range(K) if proj[K + k] != 0.0},
    )


# ---------------------------------------------------------------------------
# Public planner entry points
# ---------------------------------------------------------------------------


def elementary_move(u0: SpectralField, eta: SpectralField, eps: float,
                    cfg: PlannerConfig | None = None,
                    ) -> tuple[ControlSchedule, PlanReport]:
    """Reach u0 + eta (eta in span{sin x, cos x}) by one large short kick."""
    cfg = cfg or PlannerConfig()
    planner = _Planner(cfg)
    schedule, _ = planner.elementary(u0, eta, eps)
    report = verify(schedule, u0, u0 + eta, cfg)
    report.requested_epsilon = eps
    return schedule, report


def extended_move(u0: SpectralField, decomp: DirectionDecomposition, eps: float,
                  depth: int, cfg: PlannerConfig | None = None,
                  ) -> tuple[ControlSchedule, PlanReport]:
    """Realize a decomposed direction from u0 within eps; fully admissible output."""
    cfg = cfg or PlannerConfig()
    if depth < 1:
        raise RecursionLimitError("extended move needs depth >= 1")
    cert = saturation_certificate(
        max(2, 2 ** depth), j_max=max(depth, cfg.ladder_j_max)
    )
    planner = _Planner(cfg, cert)
    target = u0 + decomp.reconstruction() if decomp.target is None else u0 + decomp.target
    schedule, _ = planner.extended(u0, decomp, eps, depth)
    report = verify(schedule, u0, target, cfg)
    report.requested_epsilon = eps
    report.recursion_depth = depth
    return schedule, report


def steer(u0: SpectralField, u1: SpectralField, eps: float, mode_span: int,
          cfg: PlannerConfig | None = None,
          ) -> tuple[ControlSchedule, PlanReport]:
    """Admissible schedule driving u0 to within eps of u1 in L2.

    The difference is projected onto the least certified ladder level whose
    projection error fits the projection share of eps; extended moves are
    then chained on the remaining residual until the simulated error clears
    the dynamics share, and the result is re-verified at refined dt.
    """
    cfg = cfg or PlannerConfig()
    u0.require_mean_zero()
    u1.require_mean_zero()
    cert = saturation_certificate(mode_span, j_max=cfg.ladder_j_max)
    planner = _Planner(cfg, cert)

    eps_proj = eps * cfg.projection_fraction
    schedule = ControlSchedule()
    sim = u0.copy()

    for _ in range(cfg.max_rounds):
        residual = u1 - sim
        err = sobolev_norm(residual, 0)
        if err < 0.7 * eps:
            break
        # shallow levels first: deep quadratic machinery only engages once
        # the residual is small enough that its blocks are cheap and accurate
        level = _least_level(planner, residual, max(eps_proj, 0.45 * err))
        target = _project_onto(residual, planner.span_for_level(level))
        move_eps = max(0.4 * err, 0.35 * eps)
        try:
            plan, sim = planner.displace(sim, target, move_eps, level)
        except BudgetExhaustedError:
            if err < 0.9 * eps:
                break  # blocks stalled, but the state is already inside budget
            raise BudgetExhaustedError(
                f"steer stalled at error {err:.3e} (eps={eps:.3e})", schedule
            )
        schedule = concatenate(schedule, plan)
    else:
        raise BudgetExhaustedError(
            f"steer missed eps={eps:.3e} after {cfg.max_rounds} correction rounds",
            schedule,
        )

    report = verify(schedule, u0, u1, cfg)
    report.requested_epsilon = eps
    report.recursion_depth = planner.depth_used
    return schedule, report


def _least_level(planner: _Planner, d: SpectralField, proj_tol: float) -> int:
    for span in planner.certificate.spans:
        wide = span.zero_extend(planner.grid.mode_cutoff)
        row = ModeSpan.field_to_row(d, wide.mode_cutoff)
        diff = row - wide.project_row(row)
        if math.sqrt(math.pi * float(diff @ diff)) <= proj_tol:
            return span.level
    raise BudgetExhaustedError(
        f"no certified ladder level projects the target within {proj_tol:.3e}",
        None,
    )


def steer_in_time(u0: SpectralField, u1: SpectralField, T: float, eps: float,
                  mode_span: int, cfg: PlannerConfig | None = None,
                  ) -> tuple[ControlSchedule, PlanReport]:
    """Schedule of exact total duration T: steer to zero, coast, steer to u1.

    Zero is an equilibrium of the unforced flow, so the coast preserves the
    small ball reached by the first stage; its radius r halves on retry until
    the end-to-end verification meets eps.
    """
    cfg = cfg or PlannerConfig()
    zero = SpectralField.zero(cfg.grid())

    plan_to_target, _ = steer(zero, u1, 0.5 * eps, mode_span, cfg)
    stage_cfg = cfg
    while plan_to_target.total_duration >= 0.5 * T:
        stage_cfg = replace(stage_cfg, delta_start=stage_cfg.delta_start * 0.5)
        plan_to_target, _ = steer(zero, u1, 0.5 * eps, mode_span, stage_cfg)

    r = 0.25 * eps
    for _ in range(10):
        plan_to_zero, _ = steer(u0, zero, r, mode_span, stage_cfg)
        coast_len = T - plan_to_zero.total_duration - plan_to_target.total_duration
        while coast_len <= 0:
            stage_cfg = replace(stage_cfg, delta_start=stage_cfg.delta_start * 0.5)
            plan_to_zero, _ = steer(u0, zero, r, mode_span, stage_cfg)
            plan_to_target, _ = steer(zero, u1, 0.5 * eps, mode_span, stage_cfg)
            coast_len = T - plan_to_zero.total_duration - plan_to_target.total_duration
        schedule = concatenate(
            plan_to_zero,
            concatenate(ControlSchedule([ScheduleSegment.coast(coast_len)]),
                        plan_to_target),
        )
        report = verify(schedule, u0, u1, cfg)
        if report.achieved_error < eps:
            report.requested_epsilon = eps
            return schedule, report
        r *= 0.5
    raise BudgetExhaustedError(
        f"fixed-time steering missed eps={eps:.3e} after shrinking the "
        f"handoff radius to {r:.3e}", schedule,
    )


def verify(schedule: ControlSchedule, u0: SpectralField, u1: SpectralField,
           cfg: PlannerConfig | None = None) -> PlanReport:
    """Independent check: solve the schedule at refined dt and report the error."""
    cfg = cfg or PlannerConfig()
    if not schedule.admissible:
        raise ValueError("verification requires an admissible schedule")
    if schedule.segments:
        forcing = schedule.to_forcing(cfg.grid())
        traj = solve(u0, forcing, schedule.total_duration,
                     cfg.integrator.refined())
        final = traj.final_state
    else:
        final = u0
    return PlanReport(
        achieved_error=sobolev_norm(final - u1, 0),
        requested_epsilon=float("nan"),
        total_duration=schedule.total_duration,
        segment_count=len(schedule),
        max_amplitude=schedule.max_amplitude(),
        recursion_depth=0,
    )
