"""Mild-solution integrator on certified time windows.

The integral form of ``y' = Ay + f(y,t)``, ``y(0) = y0 >= 0`` is solved by
fixed-point iteration of the shifted map

    (My)(t) = e^{t(A-lam I)} y0
              + int_0^t e^{(t-s)(A-lam I)} [f(y(s),s) + lam y(s)] ds

on a window [0, t0] whose length is chosen so the map is a contraction on
the set of cone-valued paths of norm <= m.  Every ingredient of one map
application is positivity-preserving: the shifted semigroup maps the cone
into itself (Metzler generator), the integrand is nonnegative by the
quasi-positivity certificate, and the quadrature (composite left
rectangle) has nonnegative weights only — higher-order rules with negative
influence coefficients are deliberately not offered on this path.

Windows are chained, re-deriving the radius, shift, Lipschitz constant and
window length from the current state norm at each restart.  The run either
reaches the horizon or flags blow-up (norm beyond a threshold, or a run of
degenerately short windows).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .certify import NonlinearField, _shift_scan, lipschitz_estimate, sample_cone_ball
from .errors import (
    CertificationError,
    CertificationMismatchError,
    DimensionMismatchError,
    PicardIterationError,
    PositivityError,
    SemiposError,
)
from .lattice import SpaceSpec, cone_tolerance, min_component, norm, norms, validate_state
from .semigroup import GeneratorMatrix, GrowthBound, Propagator

__all__ = [
    "CauchyProblem",
    "SolverConfig",
    "WindowResult",
    "BlowUp",
    "Trajectory",
    "SolveCaches",
    "window_length",
    "contraction_bound",
    "apply_mild_map",
    "picard_window",
    "solve",
    "exponential_euler_step",
]

CONE_REL_TOL = 1e-12
#: Safety pad applied to sampled (non-analytic) certification constants.
SAMPLED_SHIFT_PAD = 1.25
SAMPLED_LIPSCHITZ_PAD = 1.25


@dataclass(frozen=True)
class CauchyProblem:
    """Everything the windowed solver consumes.

    The generator must be Metzler-verified (positive semigroup at the
    discrete level); the growth bound is the (M, omega) estimate for the
    space's norm.  ``notes`` carries builder remarks (e.g. renormalization
    factors) into run metadata.
    """

    space: SpaceSpec
    generator: GeneratorMatrix
    f: NonlinearField
    growth: GrowthBound
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.generator.metzler_verified:
            raise PositivityError(
                "generator is not Metzler-verified; the semigroup may leave the cone"
            )
        if self.generator.dimension != self.space.dof:
            raise DimensionMismatchError(
                f"generator dimension {self.generator.dimension} != space dof {self.space.dof}"
            )


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the windowed fixed-point solver.

    ``picard_tol`` is relative to (1 + window start norm): near blow-up the
    state norm passes 1e12, where an absolute residual target is not
    representable.  ``window_cap`` caps every window (the construction
    needs windows of length at most 1; the cap is exposed rather than
    hard-coded).  ``quantize_windows`` rounds window lengths down to dyadic
    fractions of the cap and shifts up to half-octave steps so the
    fixed-step propagator can be cached across windows and runs — both
    roundings are in the safe direction.
    """

    picard_tol: float = 1e-8
    max_picard_iters: int = 200
    quadrature_nodes_per_window: int = 16
    window_cap: float = 1.0
    blow_up_norm_threshold: float = 1e12
    horizon: float = 5.0
    max_node_spacing: Optional[float] = None
    quantize_windows: bool = True
    dense_cutoff: int = 200
    certify_samples: int = 1024
    pair_samples: int = 128
    seed: int = 20260810
    picard_initial: str = "constant"
    tiny_window: float = 1e-8
    max_windows: int = 200_000

    def __post_init__(self):
        if self.picard_tol <= 0 or self.max_picard_iters <= 0:
            raise ValueError("picard_tol and max_picard_iters must be positive")
        if self.quadrature_nodes_per_window < 1:
            raise ValueError("need at least one quadrature node per window")
        if not (0 < self.window_cap <= 1.0):
            raise ValueError("window_cap must lie in (0, 1]")
        if self.blow_up_norm_threshold <= 0:
            raise ValueError("blow_up_norm_threshold must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.picard_initial not in ("constant", "semigroup_orbit"):
            raise ValueError("picard_initial must be 'constant' or 'semigroup_orbit'")


@dataclass
class WindowResult:
    """Diagnostics of one fixed-point window."""

    t_start: float
    t_len: float
    iterations: int
    residual: float
    contraction_ratios: tuple
    residual_history: tuple
    lambda_used: float
    k_used: float
    radius: float
    node_count: int
    min_component: float
    max_norm: float
    node_times: np.ndarray
    node_states: np.ndarray
    notes: tuple = ()

    def summary(self) -> dict:
        return {
            "t_start": float(self.t_start),
            "t_len": float(self.t_len),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "contraction_ratios": [float(r) for r in self.contraction_ratios],
            "lambda": float(self.lambda_used),
            "k": float(self.k_used),
            "radius": float(self.radius),
            "nodes": int(self.node_count),
            "min_component": float(self.min_component),
            "max_norm": float(self.max_norm),
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class BlowUp:
    time_estimate: float
    final_norm: float


@dataclass
class Trajectory:
    """Time-stamped states of one run plus per-window diagnostics."""

    space: SpaceSpec
    times: np.ndarray
    states: np.ndarray
    min_component_overall: float
    blow_up: Optional[BlowUp]
    windows: list
    notes: tuple = ()

    def write_csv(self, path, mode: str = "full", stride: int = 1) -> None:
        """Write ``t`` plus labeled state columns (or per-component norms).

        Floats are written with shortest round-trip decimal formatting, so
        re-parsing the file reproduces the doubles exactly.
        """
        if mode not in ("full", "norms"):
            raise ValueError("mode must be 'full' or 'norms'")
        idx = list(range(0, len(self.times), max(1, stride)))
        if idx and idx[-1] != len(self.times) - 1:
            idx.append(len(self.times) - 1)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if mode == "full":
                fh.write("t," + ",".join(self.space.labels) + "\n")
                for i in idx:
                    row = [repr(float(self.times[i]))]
                    row.extend(repr(float(x)) for x in self.states[i])
                    fh.write(",".join(row) + "\n")
            else:
                comp_labels = [c.label for c in self.space.components]
                fh.write("t," + ",".join(comp_labels) + "\n")
                for i in idx:
                    row = [repr(float(self.times[i]))]
                    for c, sl in zip(self.space.components, self.space.slices):
                        sub = SpaceSpec((c,))
                        row.append(repr(float(norm(sub, self.states[i][sl]))))
                    fh.write(",".join(row) + "\n")

    def metadata_dict(self) -> dict:
        return {
            "n_times": int(len(self.times)),
            "t_end": float(self.times[-1]) if len(self.times) else 0.0,
            "min_component_overall": float(self.min_component_overall),
            "blow_up": None
            if self.blow_up is None
            else {
                "time_estimate": float(self.blow_up.time_estimate),
                "final_norm": float(self.blow_up.final_norm),
            },
            "windows": [w.summary() for w in self.windows],
            "notes": list(self.notes),
        }

    def write_metadata(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.metadata_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def window_length(
    y0_norm: float,
    growth: GrowthBound,
    k_m: float,
    lambda_m: float,
    gamma_f: float,
    window_cap: float = 1.0,
) -> tuple:
    """Invariant-ball radius and window length for one restart.

    Returns ``(m, t0)`` with ``m = 2 M e^omega ||y0||`` and
    ``t0 = min(cap, ||y0|| / (m k_m + gamma + m lambda_m))``.  A zero
    denominator with a nonzero state means the window is unconstrained
    (t0 = cap).  Zero initial data with a source degenerates the formula
    to 0; the substitute ``min(cap, 1/(gamma (k+lambda+1)))`` is used.
    """
    if y0_norm < 0 or k_m < 0 or lambda_m < 0 or gamma_f < 0:
        raise ValueError("window_length arguments must be nonnegative")
    m = 2.0 * growth.M * math.exp(growth.omega) * y0_norm
    denom = m * k_m + gamma_f + m * lambda_m
    if y0_norm == 0.0:
        if gamma_f > 0.0:
            return m, min(window_cap, 1.0 / (gamma_f * (k_m + lambda_m + 1.0)))
        return m, window_cap
    if denom == 0.0:
        return m, window_cap
    return m, min(window_cap, y0_norm / denom)


def contraction_bound(n: int, t: float, growth: GrowthBound, k_m: float, lambda_m: float) -> float:
    """n-fold contraction estimate ``[M e^omega t (k_m + lambda_m)]^n / n!``."""
    if n < 0 or t < 0:
        raise ValueError("n and t must be nonnegative")
    base = growth.M * math.exp(growth.omega) * t * (k_m + lambda_m)
    return base**n / math.factorial(n)


@dataclass(frozen=True)
class _WindowGrid:
    t_start: float
    t_len: float
    n_nodes: int

    @property
    def h(self) -> float:
        return self.t_len / self.n_nodes

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.n_nodes + 1) * self.h

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.offsets


def _integrand(problem: CauchyProblem, lam: float, path: np.ndarray, times: np.ndarray) -> np.ndarray:
    """f + lam*y at the quadrature nodes, verified nonnegative up to tau."""
    g = problem.f.eval_many(path, times) + lam * path
    tol = CONE_REL_TOL * (1.0 + norms(problem.space, path))
    bad = g < -tol[:, None]
    if np.any(bad):
        rows, cols = np.nonzero(bad)
        k = int(np.argmin(g[rows, cols]))
        raise CertificationMismatchError(
            f"integrand component {cols[k]} = {g[rows[k], cols[k]]:.3e} at node {rows[k]} "
            f"(t = {times[rows[k]]:.6g}): shift {lam:.6g} too small for realized states"
        )
    return g


def _sweep(prop: Propagator, y0: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """One application of the shifted mild map on uniform nodes.

    Uses the recurrence x_{j+1} = P (x_j + h g_j) with P = e^{h(A-lam I)},
    which reproduces the composite left-rectangle quadrature of the
    convolution exactly.  Scalar propagators take a closed cumulative-sum
    form when it cannot overflow.
    """
    n = g.shape[0]
    out = np.empty((n + 1, y0.shape[0]))
    out[0] = y0
    if prop.mode == "scalar":
        c = prop.factor
        if c == 1.0:
            out[1:] = y0 + h * np.cumsum(g, axis=0)
            return out
        if n * abs(math.log(max(c, 1e-300))) <= 200.0:
            inv = c ** -np.arange(n, dtype=float)
            cum = np.cumsum(inv[:, None] * g, axis=0)
            pows = c ** np.arange(1, n + 1, dtype=float)
            out[1:] = pows[:, None] * (y0 + h * cum)
            return out
    for j in range(n):
        out[j + 1] = prop.apply(out[j] + h * g[j])
    return out


def apply_mild_map(
    problem: CauchyProblem,
    lambda_m: float,
    y_path: np.ndarray,
    y0: np.ndarray,
    window: _WindowGrid,
    propagator: Optional[Propagator] = None,
    dense_cutoff: int = 200,
) -> np.ndarray:
    """Apply the shifted mild-solution map once to a path on window nodes.

    The input path holds states at the uniform nodes of ``window``; the
    output is the mapped path at the same nodes.  Raises
    :class:`CertificationMismatchError` if the shifted integrand dips
    below the cone tolerance at a node.
    """
    y_path = np.asarray(y_path, dtype=float)
    if y_path.shape != (window.n_nodes + 1, problem.space.dof):
        raise DimensionMismatchError(
            f"path shape {y_path.shape} does not match window with {window.n_nodes} nodes"
        )
    if propagator is None:
        propagator = Propagator(problem.generator, lam=lambda_m, h=window.h, dense_cutoff=dense_cutoff)
    g = _integrand(problem, lambda_m, y_path[:-1], window.times[:-1])
    return _sweep(propagator, np.asarray(y0, dtype=float), g, window.h)


def _initial_path(problem, y0, window, prop, kind):
    if kind == "constant":
        return np.tile(y0, (window.n_nodes + 1, 1))
    # Shifted-semigroup orbit: positive and norm-bounded by M e^{omega t}||y0||.
    return _sweep(prop, y0, np.zeros((window.n_nodes, y0.shape[0])), window.h)


def picard_window(
    problem: CauchyProblem,
    y0: np.ndarray,
    t0: float,
    lambda_m: float,
    config: SolverConfig,
    t_start: float = 0.0,
    n_nodes: Optional[int] = None,
    k_m: float = 0.0,
    radius: float = math.inf,
    propagator: Optional[Propagator] = None,
) -> WindowResult:
    """Iterate the shifted mild map to a fixed point on one window.

    Starts from the constant path y(t) = y0 (which lies in the invariant
    set by construction) and stops when the sup-node residual drops below
    ``picard_tol * (1 + ||y0||)``.  Successive residual ratios are
    recorded; they are bounded by the one-step contraction estimate.
    """
    y0 = validate_state(problem.space, y0)
    if t0 <= 0:
        raise ValueError("window length must be positive")
    n = n_nodes if n_nodes is not None else config.quadrature_nodes_per_window
    window = _WindowGrid(t_start=t_start, t_len=t0, n_nodes=int(n))
    if propagator is None:
        propagator = Propagator(
            problem.generator, lam=lambda_m, h=window.h, dense_cutoff=config.dense_cutoff
        )
    path = _initial_path(problem, y0, window, propagator, config.picard_initial)
    scale = 1.0 + norm(problem.space, y0)
    tol = config.picard_tol * scale
    residuals = []
    ratios = []
    converged = False
    for _ in range(config.max_picard_iters):
        new = _sweep(propagator, y0, _integrand(problem, lambda_m, path[:-1], window.times[:-1]), window.h)
        resid = float(norms(problem.space, new - path).max())
        if residuals and residuals[-1] > 0.0:
            ratios.append(resid / residuals[-1])
        residuals.append(resid)
        path = new
        if resid <= tol:
            converged = True
            break
    if not converged:
        raise PicardIterationError(
            f"no fixed point within {config.max_picard_iters} iterations "
            f"(last residual {residuals[-1]:.3e}, tol {tol:.3e})",
            residual=residuals[-1],
        )
    mins = path.min(axis=1)
    node_norms = norms(problem.space, path)
    cone_tol = CONE_REL_TOL * (1.0 + node_norms)
    if np.any(mins < -cone_tol):
        j = int(np.argmin(mins + cone_tol))
        raise PositivityError(
            f"state left the cone at node {j} (t = {window.times[j]:.6g}): "
            f"min component {mins[j]:.3e}"
        )
    return WindowResult(
        t_start=t_start,
        t_len=t0,
        iterations=len(residuals),
        residual=residuals[-1],
        contraction_ratios=tuple(ratios),
        residual_history=tuple(residuals),
        lambda_used=float(lambda_m),
        k_used=float(k_m),
        radius=float(radius),
        node_count=window.n_nodes,
        min_component=float(mins.min()),
        max_norm=float(node_norms.max()),
        node_times=window.times,
        node_states=path,
    )


@dataclass
class SolveCaches:
    """Reusable per-problem caches (certification and propagators).

    Sharing one instance across repeated solves of the *same* problem
    amortizes sampling and matrix-exponential costs; never share across
    problems.
    """

    cert: dict = field(default_factory=dict)
    prop: dict = field(default_factory=dict)
    gamma: Optional[float] = None


def _dyadic_down(x: float, cap: float) -> float:
    """Largest cap * 2^-j (j >= 0) that is <= x."""
    if x >= cap:
        return cap
    val = cap
    while val > x:
        val *= 0.5
    return val


_SQRT2 = math.sqrt(2.0)


def _halfoctave_up(x: float) -> float:
    """Smallest power of sqrt(2) that is >= x (0 stays 0)."""
    if x <= 0.0:
        return 0.0
    p = math.ceil(2.0 * math.log2(x) - 1e-12)
    val = _SQRT2**p
    while val < x:
        val *= _SQRT2
    return val


def _certified_constants(problem, m, config, caches):
    """Shift and Lipschitz constant valid on the cone ball of radius m.

    Analytic model formulas are used as-is (they are certified bounds);
    sampled estimates are cached per half-octave of the radius and padded,
    since sampling can only under-estimate the ball supremum.
    """
    f = problem.f
    m_eff = max(m, 1e-8)
    need_sampling = f.analytic_shift is None or f.analytic_lipschitz is None
    lam_s = k_s = 0.0
    if need_sampling:
        key = math.ceil(2.0 * math.log2(m_eff) - 1e-12)
        entry = caches.cert.get(key)
        if entry is None:
            r = _SQRT2**key
            t_grid = f.time_samples if f.time_samples else (0.0,)
            Z = sample_cone_ball(problem.space, r, config.certify_samples, config.seed)
            lam_raw, worst = _shift_scan(f, problem.space, Z, t_grid)
            if worst is not None:
                raise CertificationError(
                    f"uncertifiable nonlinearity: f_{worst.component} = {worst.value:.3e} "
                    "on the cone boundary",
                    violation=worst,
                )
            Zp = sample_cone_ball(problem.space, r, config.pair_samples, config.seed + 1)
            k_raw = lipschitz_estimate(
                replace_analytic_free(f), problem.space, r, Zp, t_grid
            )
            entry = (lam_raw, k_raw)
            caches.cert[key] = entry
        lam_s = SAMPLED_SHIFT_PAD * entry[0] + 1e-9 * (1.0 + m_eff)
        k_s = SAMPLED_LIPSCHITZ_PAD * entry[1] + 1e-9
    lam = float(f.analytic_shift(m)) if f.analytic_shift is not None else lam_s
    k = float(f.analytic_lipschitz(m)) if f.analytic_lipschitz is not None else k_s
    return max(lam, 0.0), max(k, 0.0)


def replace_analytic_free(f):
    """Copy of a field with the analytic formulas stripped (sampled-only)."""
    return NonlinearField(
        evaluate=f.evaluate,
        evaluate_many=f.evaluate_many,
        zero_bound=f.zero_bound,
        time_samples=f.time_samples,
    )


def _zero_bound(problem, config, caches):
    if caches.gamma is not None:
        return caches.gamma
    if problem.f.zero_bound is not None:
        caches.gamma = float(problem.f.zero_bound)
        return caches.gamma
    zero = np.zeros(problem.space.dof)
    ts = np.linspace(0.0, max(config.horizon, 1.0), 17)
    vals = norms(problem.space, problem.f.eval_many(np.tile(zero, (ts.size, 1)), ts))
    caches.gamma = float(vals.max()) * 1.05
    return caches.gamma


def solve(
    problem: CauchyProblem,
    y0: np.ndarray,
    config: SolverConfig,
    caches: Optional[SolveCaches] = None,
) -> Trajectory:
    """Chain certified windows from t = 0 to the horizon (or blow-up).

    At each restart the invariant radius, shift, Lipschitz constant and
    window length are re-derived from the current state norm.  Blow-up is
    a flagged outcome, not an error: it is declared when the state norm
    exceeds the configured threshold or when five consecutive windows come
    out shorter than ``tiny_window`` before horizon clipping.
    """
    y0 = validate_state(problem.space, y0)
    if min_component(y0)[0] < -cone_tolerance(problem.space, y0):
        raise PositivityError("initial state is outside the nonnegative cone")
    caches = caches if caches is not None else SolveCaches()
    gamma_f = _zero_bound(problem, config, caches)
    growth = problem.growth
    wgrowth = (
        growth
        if growth.omega >= 0.0
        else GrowthBound(M=growth.M, omega=0.0, method=growth.method, estimated=growth.estimated)
    )

    t = 0.0
    y = y0.copy()
    times = [np.array([0.0])]
    states = [y0[None, :].copy()]
    windows: list = []
    min_overall = float(y0.min())
    blow = None
    tiny_run = 0
    horizon = config.horizon
    eps = 1e-12 * max(1.0, horizon)

    while t < horizon - eps:
        if len(windows) >= config.max_windows:
            raise SemiposError(f"window budget exhausted ({config.max_windows})")
        nrm = norm(problem.space, y)
        if nrm > config.blow_up_norm_threshold:
            blow = BlowUp(time_estimate=t, final_norm=nrm)
            break
        radius = 2.0 * wgrowth.M * math.exp(wgrowth.omega) * nrm
        lam, k = _certified_constants(problem, radius, config, caches)
        lam = _halfoctave_up(lam)
        _, t_formula = window_length(nrm, wgrowth, k, lam, gamma_f, window_cap=config.window_cap)
        if t_formula < config.tiny_window:
            tiny_run += 1
            if tiny_run >= 5:
                blow = BlowUp(time_estimate=t, final_norm=nrm)
                break
        else:
            tiny_run = 0
        rem = horizon - t
        if config.quantize_windows:
            t_len = rem if rem <= t_formula else _dyadic_down(t_formula, config.window_cap)
        else:
            t_len = min(t_formula, rem)
        n_nodes = config.quadrature_nodes_per_window
        if config.max_node_spacing is not None:
            n_nodes = max(n_nodes, int(math.ceil(t_len / config.max_node_spacing - 1e-12)))

        win = None
        lam_try = lam
        notes: list = []
        for attempt in range(3):
            h = t_len / n_nodes
            pkey = (lam_try, h, n_nodes)
            prop = caches.prop.get(pkey)
            if prop is None:
                prop = Propagator(
                    problem.generator, lam=lam_try, h=h, dense_cutoff=config.dense_cutoff
                )
                caches.prop[pkey] = prop
            try:
                win = picard_window(
                    problem,
                    y,
                    t_len,
                    lam_try,
                    config,
                    t_start=t,
                    n_nodes=n_nodes,
                    k_m=k,
                    radius=radius,
                    propagator=prop,
                )
                break
            except CertificationMismatchError:
                if attempt == 2:
                    raise
                lam_try = 2.0 * lam_try if lam_try > 0 else 1e-3
                notes.append(f"shift escalated to {lam_try:.6g} after certification mismatch")
        win.notes = tuple(notes)
        windows.append(win)
        times.append(win.node_times[1:])
        states.append(win.node_states[1:])
        min_overall = min(min_overall, win.min_component)
        y = win.node_states[-1].copy()
        t = t + t_len

    return Trajectory(
        space=problem.space,
        times=np.concatenate(times),
        states=np.concatenate(states, axis=0),
        min_component_overall=min_overall,
        blow_up=blow,
        windows=windows,
        notes=problem.notes,
    )


def exponential_euler_step(
    problem: CauchyProblem, lam: float, y: np.ndarray, t: float, h: float
) -> np.ndarray:
    """One fast positivity-preserving step: a one-node rectangle realization
    of the shifted mild map.

    ``y+ = e^{h(A-lam I)} y + h e^{h(A-lam I)} (f(y,t) + lam y)`` — the sum
    of two positive-operator images of nonnegative vectors with a
    nonnegative weight, first-order consistent with the mild solution.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    y = validate_state(problem.space, y)
    g = problem.f.eval_many(y[None, :], np.array([t]))[0] + lam * y
    tol = cone_tolerance(problem.space, y)
    if g.min() < -tol:
        raise CertificationMismatchError(
            f"shifted integrand has component {g.min():.3e} below -{tol:.1e}"
        )
    prop = Propagator(problem.generator, lam=lam, h=h)
    return prop.apply(y) + h * prop.apply(g)
