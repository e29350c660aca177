"""Numerical quasi-positivity certification.

For a nonlinearity f and a ball radius m, estimate

* the smallest shift ``lambda`` with ``f(z,t) + lambda z >= 0`` for all
  sampled states z in the nonnegative cone intersected with the m-ball,
  and
* the local Lipschitz constant of f on that set.

The continuum condition is pointwise in the state, so pointwise sampling
of cone states is exact in spirit; sampling can only under-estimate, which
is why analytic formulas supplied by a model always take precedence via
``max(analytic, sampled)``.

A negative component of f on the cone boundary (z_i = 0, f_i(z) < -tau)
cannot be repaired by any finite shift and is reported as an
*uncertifiable* violation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CertificationError, DimensionMismatchError
from .lattice import SpaceSpec, norms

__all__ = [
    "NonlinearField",
    "Violation",
    "CertificationReport",
    "sample_cone_ball",
    "certify_shift",
    "lipschitz_estimate",
    "quasi_positivity_report",
]

DEFAULT_SAMPLES = 4096
DEFAULT_PAIR_SAMPLES = 256
DEFAULT_SEED = 20260810
CONE_REL_TOL = 1e-12


@dataclass(frozen=True)
class NonlinearField:
    """Evaluation contract for the nonlinearity f(state, t).

    ``evaluate`` maps one state and a time to a state of the same length
    and must be deterministic.  ``evaluate_many`` optionally vectorizes
    over a batch of states with per-state times; the default falls back to
    a loop.  ``analytic_shift``/``analytic_lipschitz`` map a ball radius m
    to a certified shift / Lipschitz constant.  ``zero_bound`` bounds
    sup_t ||f(0, t)||.  ``time_samples`` lists the times a certification
    scan should probe for non-autonomous fields (default: t = 0 only).
    """

    evaluate: Callable[[np.ndarray, float], np.ndarray]
    evaluate_many: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    analytic_shift: Optional[Callable[[float], float]] = None
    analytic_lipschitz: Optional[Callable[[float], float]] = None
    zero_bound: Optional[float] = None
    time_samples: Optional[tuple] = None

    def eval_many(self, states: np.ndarray, times: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        times = np.broadcast_to(np.asarray(times, dtype=float), (states.shape[0],))
        if self.evaluate_many is not None:
            out = np.asarray(self.evaluate_many(states, times), dtype=float)
        else:
            out = np.stack([np.asarray(self.evaluate(s, float(t)), dtype=float) for s, t in zip(states, times)])
        if out.shape != states.shape:
            raise DimensionMismatchError(
                f"nonlinearity returned shape {out.shape} for states of shape {states.shape}"
            )
        return out


@dataclass(frozen=True)
class Violation:
    """A cone-boundary component where no finite shift restores positivity."""

    state: np.ndarray
    component: int
    value: float
    time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "component": int(self.component),
            "value": float(self.value),
            "time": float(self.time),
            "state": [float(x) for x in np.asarray(self.state)],
        }


@dataclass(frozen=True)
class CertificationReport:
    m: float
    lambda_hat: float
    k_hat: float
    samples_used: int
    worst_violation: Optional[Violation] = None
    certified: bool = True
    lambda_sampled: float = 0.0
    lambda_analytic: Optional[float] = None
    k_sampled: float = 0.0
    k_analytic: Optional[float] = None
    notes: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "m": float(self.m),
            "lambda_hat": float(self.lambda_hat),
            "k_hat": float(self.k_hat),
            "samples_used": int(self.samples_used),
            "certified": bool(self.certified),
            "lambda_sampled": float(self.lambda_sampled),
            "lambda_analytic": None if self.lambda_analytic is None else float(self.lambda_analytic),
            "k_sampled": float(self.k_sampled),
            "k_analytic": None if self.k_analytic is None else float(self.k_analytic),
            "worst_violation": None if self.worst_violation is None else self.worst_violation.to_dict(),
            "notes": list(self.notes),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def sample_cone_ball(space: SpaceSpec, m: float, count: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Draw ``count`` states from the cone intersected with the m-ball.

    The head of the sample set is deterministic: the zero state, every
    basis direction scaled to norm m, then sparse states (support size 1
    to 3) that exercise zero patterns at the cone boundary.  The remainder
    is dense nonnegative noise at random radii, a fraction of it exactly
    on the sphere of radius m.
    """
    if m <= 0:
        raise ValueError("ball radius must be positive")
    if count < 1:
        raise ValueError("need at least one sample")
    n = space.dof
    rng = np.random.default_rng(seed)

    corners = [np.zeros(n)]
    eye = np.eye(n)
    basis_norms = norms(space, eye)
    corners.extend(eye * (m / basis_norms)[:, None])

    n_sparse = min(max(32, n // 2), max(0, count - len(corners)))
    sparse = np.zeros((n_sparse, n))
    for row in sparse:
        support = rng.choice(n, size=int(rng.integers(1, min(3, n) + 1)), replace=False)
        row[support] = rng.uniform(0.1, 1.0, size=support.size)
    if n_sparse:
        sparse *= (m * rng.uniform(0.05, 1.0, n_sparse) / norms(space, sparse))[:, None]

    head = np.vstack([np.asarray(corners), sparse]) if n_sparse else np.asarray(corners)
    if count <= head.shape[0]:
        return head[:count]

    n_dense = count - head.shape[0]
    dense = np.abs(rng.standard_normal((n_dense, n)))
    radii = m * rng.uniform(0.0, 1.0, n_dense)
    radii[: max(1, n_dense // 8)] = m  # keep some mass exactly on the sphere
    dense *= (radii / np.maximum(norms(space, dense), 1e-300))[:, None]
    return np.vstack([head, dense])


def _shift_scan(f: NonlinearField, space: SpaceSpec, samples: np.ndarray, t_grid: Sequence[float]):
    """Sampled shift sup(-f_i/z_i) plus the worst cone-boundary violation."""
    lam = 0.0
    worst: Optional[Violation] = None
    tol = CONE_REL_TOL * (1.0 + norms(space, samples))
    for t in t_grid:
        F = f.eval_many(samples, np.full(samples.shape[0], float(t)))
        pos = samples > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(pos, -F / np.where(pos, samples, 1.0), -np.inf)
        lam = max(lam, float(ratios.max()) if ratios.size else 0.0)
        boundary = (samples == 0.0) & (F < -tol[:, None])
        if np.any(boundary):
            rows, cols = np.nonzero(boundary)
            vals = F[rows, cols]
            k = int(np.argmin(vals))
            cand = Violation(
                state=samples[rows[k]].copy(),
                component=int(cols[k]),
                value=float(vals[k]),
                time=float(t),
            )
            if worst is None or cand.value < worst.value:
                worst = cand
    return max(0.0, lam), worst


def certify_shift(
    f: NonlinearField,
    space: SpaceSpec,
    m: float,
    samples: np.ndarray,
    t_grid: Sequence[float] = (0.0,),
) -> float:
    """Shift estimate: max(0, sup over samples/times/components of -f_i/z_i).

    Components at the cone boundary (z_i = 0) must satisfy f_i >= -tau;
    otherwise certification fails with the worst violation attached, since
    no finite shift repairs a negative value there.  Returns
    max(analytic, sampled) when the field carries an analytic formula.
    """
    lam, worst = _shift_scan(f, space, np.atleast_2d(samples), t_grid)
    if worst is not None:
        raise CertificationError(
            f"uncertifiable: f_{worst.component}(z, t={worst.time}) = {worst.value:.3e} "
            "with z at the cone boundary",
            violation=worst,
        )
    if f.analytic_shift is not None:
        lam = max(lam, float(f.analytic_shift(m)))
    return lam


def lipschitz_estimate(
    f: NonlinearField,
    space: SpaceSpec,
    m: float,
    samples: np.ndarray,
    t_grid: Sequence[float] = (0.0,),
) -> float:
    """Pairwise Lipschitz estimate max ||f(z1,t)-f(z2,t)|| / ||z1-z2||.

    Exhaustive over all sample pairs (chunked to bound memory); returns
    max(analytic, sampled) when an analytic constant is available.
    """
    Z = np.atleast_2d(np.asarray(samples, dtype=float))
    k = Z.shape[0]
    if k < 2:
        raise ValueError("need at least two samples")
    best = 0.0
    chunk = max(1, int(2**22 // max(1, k * Z.shape[1])))
    for t in t_grid:
        F = f.eval_many(Z, np.full(k, float(t)))
        for i0 in range(0, k, chunk):
            i1 = min(k, i0 + chunk)
            dz = norms(space, Z[i0:i1, None, :] - Z[None, :, :])
            df = norms(space, F[i0:i1, None, :] - F[None, :, :])
            mask = dz > 0.0
            if np.any(mask):
                best = max(best, float((df[mask] / dz[mask]).max()))
    if f.analytic_lipschitz is not None:
        best = max(best, float(f.analytic_lipschitz(m)))
    return best


def quasi_positivity_report(
    f: NonlinearField,
    space: SpaceSpec,
    m: float,
    samples: int = DEFAULT_SAMPLES,
    pair_samples: int = DEFAULT_PAIR_SAMPLES,
    seed: int = DEFAULT_SEED,
    t_grid: Optional[Sequence[float]] = None,
    notes: Sequence[str] = (),
) -> CertificationReport:
    """Bundle the shift and Lipschitz estimates into one report.

    The report is marked certified iff no uncertifiable cone-boundary
    violation turned up; the worst violation (state, component, value of
    f_i there) is attached either way.
    """
    if m <= 0:
        raise ValueError("ball radius must be positive")
    if t_grid is None:
        t_grid = f.time_samples if f.time_samples else (0.0,)
    Z = sample_cone_ball(space, m, samples, seed)
    lam_sampled, worst = _shift_scan(f, space, Z, t_grid)
    lam_analytic = None if f.analytic_shift is None else float(f.analytic_shift(m))
    lam = lam_sampled if lam_analytic is None else max(lam_sampled, lam_analytic)

    Zp = sample_cone_ball(space, m, min(pair_samples, samples), seed + 1)
    k_sampled = 0.0
    if Zp.shape[0] >= 2:
        Fp = NonlinearField(evaluate=f.evaluate, evaluate_many=f.evaluate_many)
        k_sampled = lipschitz_estimate(Fp, space, m, Zp, t_grid)
    k_analytic = None if f.analytic_lipschitz is None else float(f.analytic_lipschitz(m))
    k_hat = k_sampled if k_analytic is None else max(k_sampled, k_analytic)

    return CertificationReport(
        m=float(m),
        lambda_hat=float(lam),
        k_hat=float(k_hat),
        samples_used=int(Z.shape[0]),
        worst_violation=worst,
        certified=worst is None,
        lambda_sampled=float(lam_sampled),
        lambda_analytic=lam_analytic,
        k_sampled=float(k_sampled),
        k_analytic=k_analytic,
        notes=tuple(notes),
    )
