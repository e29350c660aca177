"""Built-in problem generators: three biological systems.

Each builder discretizes one semilinear model onto a product lattice,
encodes its boundary condition *inside* the generator (inflow rows keep
the matrix exactly Metzler), attaches the nonlinearity with analytic
shift/Lipschitz formulas where they exist, and returns a solver-ready
problem.

* ``build_epidemic`` — susceptible/infected dynamics with an
  infection-load transport equation: load grows at speed ``nu * i``, new
  infections enter at the minimal load through the boundary flux
  ``nu kappa I(t, kappa) = alpha S(t)``, and the incidence couples through
  the integral operator T(h) = sum of cell masses.
* ``build_predator_prey`` — age-structured prey with renewal boundary
  (births = integral of beta * x) advected at unit speed, coupled to a
  scalar predator through a bilinear predation term.
* ``build_oncology`` — three diffusing fields (tumor, healthy tissue,
  drug) with reflecting (Neumann) boundaries, logistic growth,
  competition, drug kill terms and a nonnegative injected-drug control
  that is piecewise constant in time.

Transport is discretized donor-cell (upwind) everywhere: it is the
canonical scheme that keeps the off-diagonal stencil entries nonnegative;
central differencing of advection would break positivity of the linear
part at the discrete level.  Unbounded domains are truncated with pure
outflow at the far end; defaults put the stationary tail mass far below
test tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .certify import NonlinearField
from .errors import ParameterError
from .lattice import Grid, Scalar, SpaceSpec, norms
from .semigroup import GeneratorMatrix, growth_bound
from .solver import CauchyProblem

__all__ = [
    "EpidemicParams",
    "PredatorPreyParams",
    "OncologyParams",
    "build_epidemic",
    "build_predator_prey",
    "build_oncology",
    "epidemic_initial",
    "predator_initial",
    "oncology_initial",
    "epidemic_shift",
    "predator_shift",
    "oncology_shift",
    "scalar_blowup_problem",
    "negative_source_problem",
]

RateSpec = Union[None, float, Sequence[float], np.ndarray, Callable]


def _tabulate(rate: RateSpec, centers: np.ndarray, name: str, default: float) -> np.ndarray:
    """Resolve a rate given as constant, per-cell table or callable."""
    if rate is None:
        return np.full(centers.size, float(default))
    if callable(rate):
        vals = np.asarray(rate(centers), dtype=float)
    elif np.isscalar(rate):
        vals = np.full(centers.size, float(rate))
    else:
        vals = np.asarray(rate, dtype=float)
        if vals.size != centers.size:
            raise ParameterError(
                f"{name}: table has {vals.size} values for {centers.size} cells"
            )
    if not np.all(np.isfinite(vals)):
        raise ParameterError(f"{name}: non-finite table values")
    return vals


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ParameterError(message)


# ----------------------------------------------------------------------
# Epidemic: infection-load structured susceptible/infected system
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class EpidemicParams:
    """Rates of the load-structured epidemic model.

    Constraints: beta, mu0, nu, alpha > 0 and gamma >= 0; the mortality
    table must dominate mu0 on the grid; the load distribution phi is
    nonnegative with unit integral (renormalized by the builder, factor
    recorded); the load domain is (kappa, i_max) with i_max > kappa > 0.
    """

    gamma: float = 0.5
    mu0: float = 0.25
    alpha: float = 0.4
    beta: float = 0.4
    nu: float = 0.15
    kappa: float = 0.1
    i_max: float = 14.0
    mu: RateSpec = None
    phi: RateSpec = None


def _epidemic_grid(p: EpidemicParams, n_cells: int):
    dx = (p.i_max - p.kappa) / n_cells
    centers = p.kappa + (np.arange(n_cells) + 0.5) * dx
    edges = p.kappa + (np.arange(n_cells) + 1.0) * dx
    return dx, centers, edges


def _default_phi(p: EpidemicParams):
    return lambda i: np.exp(-2.0 * (i - p.kappa))


def build_epidemic(p: EpidemicParams, n_cells: int, strict: bool = True) -> CauchyProblem:
    """Discretize the epidemic system on n load cells.

    State layout: ``(S, I_1 .. I_n)`` over ``[Scalar, Grid(n, L1)]``.  The
    load transport is donor-cell upwind with flux ``nu * i * I`` taken at
    the right cell edge; the infection inflow enters the first load cell
    as the off-diagonal coupling ``alpha/dx * S``, which keeps the
    generator exactly Metzler.  The analytic shift for the ball of radius
    m is ``m * beta``.

    ``strict=False`` relaxes the alpha > 0 and beta > 0 checks (decoupled
    limit cases used by tests); all other constraints stay enforced.
    """
    _require(n_cells >= 2, "epidemic: n_cells must be at least 2")
    _require(p.mu0 > 0, "epidemic: mu0 must be positive")
    _require(p.nu > 0, "epidemic: nu must be positive")
    _require(p.gamma >= 0, "epidemic: gamma must be nonnegative")
    _require(p.kappa > 0, "epidemic: kappa must be positive")
    _require(p.i_max > p.kappa, "epidemic: i_max must exceed kappa")
    if strict:
        _require(p.alpha > 0, "epidemic: alpha must be positive")
        _require(p.beta > 0, "epidemic: beta must be positive")
    else:
        _require(p.alpha >= 0, "epidemic: alpha must be nonnegative")
        _require(p.beta >= 0, "epidemic: beta must be nonnegative")

    dx, centers, edges = _epidemic_grid(p, n_cells)
    mu = _tabulate(p.mu, centers, "epidemic.mu", p.mu0)
    _require(bool(np.all(mu >= p.mu0 - 1e-12)), "epidemic: mu must dominate mu0 on the grid")
    phi_raw = _tabulate(p.phi if p.phi is not None else _default_phi(p), centers, "epidemic.phi", 0.0)
    _require(bool(np.all(phi_raw >= 0)), "epidemic: phi must be nonnegative")
    mass = float(phi_raw @ np.full(n_cells, dx))
    _require(mass > 0, "epidemic: phi must carry positive mass")
    phi = phi_raw / mass

    rows = [0, 1]
    cols = [0, 0]
    data = [-(p.mu0 + p.alpha), p.alpha / dx]
    for j in range(n_cells):
        k = 1 + j
        rows.append(k)
        cols.append(k)
        data.append(-p.nu * edges[j] / dx - mu[j])
        if j + 1 < n_cells:
            rows.append(k + 1)
            cols.append(k)
            data.append(p.nu * edges[j] / dx)
    A = GeneratorMatrix.from_matrix(
        sp.coo_matrix((data, (rows, cols)), shape=(n_cells + 1, n_cells + 1))
    )
    assert A.metzler_verified

    space = SpaceSpec((Scalar("S"), Grid(n_cells, dx, "L1", "I")))
    w = np.full(n_cells, dx)
    beta = p.beta
    gamma = p.gamma

    def evaluate_many(states, times):
        states = np.atleast_2d(states)
        S = states[:, 0]
        incidence = beta * (states[:, 1:] @ w)  # T(beta I)
        out = np.empty_like(states)
        out[:, 0] = gamma - S * incidence
        out[:, 1:] = phi[None, :] * (S * incidence)[:, None]
        return out

    f = NonlinearField(
        evaluate=lambda s, t: evaluate_many(s[None, :], t)[0],
        evaluate_many=evaluate_many,
        analytic_shift=lambda m: m * beta,
        analytic_lipschitz=lambda m: 2.0 * beta * m,
        zero_bound=gamma,
    )
    notes = (f"phi renormalized by factor {1.0 / mass:.12g}",)
    return CauchyProblem(space=space, generator=A, f=f, growth=growth_bound(space, A), notes=notes)


def epidemic_initial(p: EpidemicParams, n_cells: int, S0: float = 1.0, I0: RateSpec = 0.6) -> np.ndarray:
    """Initial state (S0, I profile); a scalar I0 means total infected mass
    distributed along the default load profile."""
    _require(S0 >= 0, "epidemic: S0 must be nonnegative")
    dx, centers, _ = _epidemic_grid(p, n_cells)
    if I0 is None or np.isscalar(I0):
        mass = 0.6 if I0 is None else float(I0)
        _require(mass >= 0, "epidemic: I0 mass must be nonnegative")
        prof = _default_phi(p)(centers)
        prof /= prof @ np.full(n_cells, dx)
        I = mass * prof
    else:
        I = _tabulate(I0, centers, "epidemic.I0", 0.0)
        _require(bool(np.all(I >= 0)), "epidemic: I0 must be nonnegative")
    return np.concatenate(([float(S0)], I))


def epidemic_shift(p: EpidemicParams, m: float) -> float:
    """Certified shift for the epidemic ball of radius m: ``m * beta``."""
    return m * p.beta


# ----------------------------------------------------------------------
# Predator-prey: age-structured prey with renewal boundary
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class PredatorPreyParams:
    """Rates of the age-structured predation model.

    Constraints: assimilation alpha in (0,1), predator mortality delta > 0,
    and tabulated nonnegative mu/gamma_pred/beta with mu >= mu0 > 0.
    """

    alpha: float = 0.4
    delta: float = 0.25
    mu0: float = 0.3
    mu: RateSpec = None
    gamma_pred: RateSpec = 0.15
    beta: RateSpec = 0.25
    a_max: float = 15.0


def _age_grid(p: PredatorPreyParams, n_cells: int):
    dx = p.a_max / n_cells
    centers = (np.arange(n_cells) + 0.5) * dx
    return dx, centers


def build_predator_prey(p: PredatorPreyParams, n_cells: int) -> CauchyProblem:
    """Discretize the predation system on n age cells plus one predator dof.

    State layout: ``(x_1 .. x_n, y)`` over ``[Grid(n, L1), Scalar]``.  Age
    advection is upwind at unit speed; the renewal boundary feeds the
    weighted birth integral into the first age cell as nonnegative
    off-diagonal entries.  The analytic shift for radius m is
    ``m * max(gamma)`` and the bilinear structure gives the Lipschitz
    constant ``(1 + alpha) * m * max(gamma)``.
    """
    _require(n_cells >= 2, "predator_prey: n_cells must be at least 2")
    _require(0 < p.alpha < 1, "predator_prey: alpha must lie in (0, 1)")
    _require(p.delta > 0, "predator_prey: delta must be positive")
    _require(p.mu0 > 0, "predator_prey: mu0 must be positive")
    _require(p.a_max > 0, "predator_prey: a_max must be positive")

    dx, centers = _age_grid(p, n_cells)
    mu = _tabulate(p.mu, centers, "predator_prey.mu", p.mu0)
    _require(bool(np.all(mu >= p.mu0 - 1e-12)), "predator_prey: mu must dominate mu0")
    gam = _tabulate(p.gamma_pred, centers, "predator_prey.gamma_pred", 0.0)
    _require(bool(np.all(gam >= 0)), "predator_prey: gamma_pred must be nonnegative")
    beta = _tabulate(p.beta, centers, "predator_prey.beta", 0.0)
    _require(bool(np.all(beta >= 0)), "predator_prey: beta must be nonnegative")

    rows, cols, data = [], [], []
    for j in range(n_cells):
        rows.append(j)
        cols.append(j)
        data.append(-1.0 / dx - mu[j])
        if j + 1 < n_cells:
            rows.append(j + 1)
            cols.append(j)
            data.append(1.0 / dx)
    for k in range(n_cells):  # renewal inflow: x(t, 0) = sum_k beta_k x_k w_k
        rows.append(0)
        cols.append(k)
        data.append(beta[k])
    rows.append(n_cells)
    cols.append(n_cells)
    data.append(-p.delta)
    A = GeneratorMatrix.from_matrix(
        sp.coo_matrix((data, (rows, cols)), shape=(n_cells + 1, n_cells + 1))
    )
    assert A.metzler_verified

    space = SpaceSpec((Grid(n_cells, dx, "L1", "x"), Scalar("y")))
    w = np.full(n_cells, dx)
    gmax = float(gam.max())
    alpha = p.alpha

    def evaluate_many(states, times):
        states = np.atleast_2d(states)
        x = states[:, :-1]
        y = states[:, -1]
        pred = (x * gam[None, :]) @ w  # integral of gamma(a) x(t,a) da
        out = np.empty_like(states)
        out[:, :-1] = -y[:, None] * gam[None, :] * x
        out[:, -1] = alpha * y * pred
        return out

    f = NonlinearField(
        evaluate=lambda s, t: evaluate_many(s[None, :], t)[0],
        evaluate_many=evaluate_many,
        analytic_shift=lambda m: m * gmax,
        analytic_lipschitz=lambda m: (1.0 + alpha) * m * gmax,
        zero_bound=0.0,
    )
    return CauchyProblem(space=space, generator=A, f=f, growth=growth_bound(space, A))


def predator_initial(
    p: PredatorPreyParams, n_cells: int, x0: RateSpec = 1.2, y0: float = 0.8
) -> np.ndarray:
    """Initial (prey profile, predator); scalar x0 is a total prey mass
    spread along a decaying default age profile."""
    _require(y0 >= 0, "predator_prey: y0 must be nonnegative")
    dx, centers = _age_grid(p, n_cells)
    if x0 is None or np.isscalar(x0):
        mass = 1.2 if x0 is None else float(x0)
        _require(mass >= 0, "predator_prey: x0 mass must be nonnegative")
        prof = np.exp(-1.5 * centers)
        prof /= prof @ np.full(n_cells, dx)
        x = mass * prof
    else:
        x = _tabulate(x0, centers, "predator_prey.x0", 0.0)
        _require(bool(np.all(x >= 0)), "predator_prey: x0 must be nonnegative")
    return np.concatenate((x, [float(y0)]))


def predator_shift(p: PredatorPreyParams, m: float, n_cells: int = 256) -> float:
    """Certified shift ``m * ess-sup(gamma)`` on the ball of radius m."""
    _, centers = _age_grid(p, n_cells)
    gam = _tabulate(p.gamma_pred, centers, "predator_prey.gamma_pred", 0.0)
    return m * float(gam.max())


# ----------------------------------------------------------------------
# Oncology: three diffusing fields with logistic growth and a drug control
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class OncologyParams:
    """Rates of the tumor / tissue / drug system.

    ``domain`` is an interval length (1D) or an (lx, ly) pair (2D
    rectangle).  ``u`` is the injected-drug control: a constant, a per-cell
    table, or a ``(times, values)`` pair sampled on the builder's grid;
    it must be nonnegative everywhere and is interpolated piecewise
    constant in time.
    """

    d: tuple = (0.02, 0.02, 0.05)
    a: tuple = (0.2, 0.15, 0.4)
    k: tuple = (1.0, 1.2)
    alpha12: float = 0.05
    alpha21: float = 0.05
    kappa13: float = 0.15
    kappa23: float = 0.05
    u: object = 0.05
    domain: object = 10.0


def _oncology_grid(p: OncologyParams, grid):
    """Cell count, cell measure and the Neumann Laplacian of the domain."""
    if isinstance(p.domain, (tuple, list)):
        lx, ly = (float(p.domain[0]), float(p.domain[1]))
        if isinstance(grid, (tuple, list)):
            nx, ny = int(grid[0]), int(grid[1])
        else:
            nx = ny = int(grid)
        _require(nx >= 2 and ny >= 2, "oncology: 2D grid needs at least 2x2 cells")
        dx, dy = lx / nx, ly / ny
        # flat index iy*nx + ix: kron(I_ny, Lx) + kron(Ly, I_nx)
        lap = sp.kronsum(_neumann_1d(nx, dx), _neumann_1d(ny, dy), format="csr")
        return nx * ny, dx * dy, lap
    length = float(p.domain)
    n = int(grid)
    _require(n >= 2, "oncology: grid needs at least 2 cells")
    dx = length / n
    return n, dx, _neumann_1d(n, dx)


def _neumann_1d(n: int, dx: float) -> sp.csr_matrix:
    """Second-order Laplacian with reflecting ghost cells (zero row sums)."""
    a = 1.0 / (dx * dx)
    main = np.full(n, -2.0 * a)
    main[0] = main[-1] = -a
    off = np.full(n - 1, a)
    return sp.diags([off, main, off], offsets=(-1, 0, 1), format="csr")


def _control_table(p: OncologyParams, n_cells: int):
    """Normalize the control spec to (knot times, per-knot cell rows)."""
    u = p.u
    if u is None:
        return np.array([0.0]), np.zeros((1, n_cells))
    if np.isscalar(u):
        vals = np.full((1, n_cells), float(u))
        times = np.array([0.0])
    elif isinstance(u, tuple) and len(u) == 2:
        times = np.asarray(u[0], dtype=float)
        vals = np.atleast_2d(np.asarray(u[1], dtype=float))
        if vals.shape == (1, times.size) and times.size != 1 and n_cells == 1:
            vals = vals.T
        _require(vals.shape[0] == times.size, "oncology: u times/values mismatch")
        if vals.shape[1] == 1 and n_cells > 1:
            vals = np.repeat(vals, n_cells, axis=1)
        _require(vals.shape[1] == n_cells, "oncology: u values do not match the grid")
        _require(bool(np.all(np.diff(times) > 0)), "oncology: u times must increase")
    else:
        row = np.asarray(u, dtype=float)
        _require(row.size == n_cells, "oncology: u table does not match the grid")
        vals = row[None, :]
        times = np.array([0.0])
    _require(bool(np.all(np.isfinite(vals))), "oncology: u contains non-finite entries")
    _require(bool(np.all(vals >= 0)), "oncology: u must be nonnegative everywhere")
    return times, vals


def build_oncology(p: OncologyParams, grid) -> CauchyProblem:
    """Discretize the three-field system on a 1D or 2D cell grid.

    State layout: three stacked grids (L2 norm) ``(y1, y2, y3)``.  The
    linear part is pure diffusion with reflecting boundaries (exactly
    Metzler, zero row sums so constants are equilibria of each block); the
    logistic growth, competition, drug kill and reabsorption terms plus
    the control all live in the nonlinearity.  No analytic shift is
    supplied: the certifier's sampled estimate is authoritative for this
    model (see ``oncology_shift`` for the printed closed form).
    """
    _require(len(p.d) == 3 and all(x > 0 for x in p.d), "oncology: d must be three positive rates")
    _require(len(p.a) == 3 and all(x > 0 for x in p.a), "oncology: a must be three positive rates")
    _require(len(p.k) == 2 and all(x > 0 for x in p.k), "oncology: k must be two positive capacities")
    _require(p.alpha12 > 0 and p.alpha21 > 0, "oncology: competition rates must be positive")
    _require(p.kappa13 > p.kappa23 > 0, "oncology: need kappa13 > kappa23 > 0")

    nc, wcell, lap = _oncology_grid(p, grid)
    A = GeneratorMatrix.from_matrix(sp.block_diag([p.d[0] * lap, p.d[1] * lap, p.d[2] * lap]))
    assert A.metzler_verified

    space = SpaceSpec(
        (Grid(nc, wcell, "L2", "y1"), Grid(nc, wcell, "L2", "y2"), Grid(nc, wcell, "L2", "y3"))
    )
    u_times, u_vals = _control_table(p, nc)
    a1, a2, a3 = p.a
    k1, k2 = p.k
    al12, al21, k13, k23 = p.alpha12, p.alpha21, p.kappa13, p.kappa23

    def control_at(times):
        idx = np.clip(np.searchsorted(u_times, times, side="right") - 1, 0, u_times.size - 1)
        return u_vals[idx]

    def evaluate_many(states, times):
        states = np.atleast_2d(states)
        y1 = states[:, :nc]
        y2 = states[:, nc : 2 * nc]
        y3 = states[:, 2 * nc :]
        out = np.empty_like(states)
        out[:, :nc] = a1 * (1.0 - y1 / k1) * y1 - (al12 * y2 + k13 * y3) * y1
        out[:, nc : 2 * nc] = a2 * (1.0 - y2 / k2) * y2 - (al21 * y1 + k23 * y3) * y2
        out[:, 2 * nc :] = -a3 * y3 + control_at(np.asarray(times))
        return out

    sub = SpaceSpec((Grid(nc, wcell, "L2", "u"),))
    zero_bound = float(norms(sub, u_vals).max())

    f = NonlinearField(
        evaluate=lambda s, t: evaluate_many(s[None, :], np.array([t]))[0],
        evaluate_many=evaluate_many,
        zero_bound=zero_bound,
        time_samples=tuple(float(t) for t in u_times),
    )
    return CauchyProblem(space=space, generator=A, f=f, growth=growth_bound(space, A))


def oncology_initial(p: OncologyParams, grid, y1=0.4, y2=0.36, y3=0.05) -> np.ndarray:
    """Initial fields; scalars mean spatially homogeneous densities."""
    nc, _, _ = _oncology_grid(p, grid)
    parts = []
    for name, spec in (("y1", y1), ("y2", y2), ("y3", y3)):
        if np.isscalar(spec):
            _require(spec >= 0, f"oncology: {name} must be nonnegative")
            parts.append(np.full(nc, float(spec)))
        else:
            arr = np.asarray(spec, dtype=float)
            _require(arr.size == nc, f"oncology: {name} does not match the grid")
            _require(bool(np.all(arr >= 0)), f"oncology: {name} must be nonnegative")
            parts.append(arr)
    return np.concatenate(parts)


def oncology_shift(p: OncologyParams, m: float, sampled: float = 0.0) -> float:
    """Shift for the oncology ball: max of the printed closed form and the
    certifier's sampled estimate.

    The closed form ``max(m(a1/k1 - a12 - k13), m(a2/k2 - a21 - k23), a3)``
    lets the competition and kill rates *reduce* the shift, which is not
    consistent with the inequality it is meant to produce; the sampled
    estimate is authoritative and the certification report carries both.
    """
    printed = max(
        m * (p.a[0] / p.k[0] - p.alpha12 - p.kappa13),
        m * (p.a[1] / p.k[1] - p.alpha21 - p.kappa23),
        p.a[2],
    )
    return max(printed, sampled)


# ----------------------------------------------------------------------
# Tiny demo problems (CLI fixtures and tests)
# ----------------------------------------------------------------------


def scalar_blowup_problem(y0: float = 1.0):
    """Scalar ``y' = y**2`` (zero generator): blows up at t = 1/y0."""
    space = SpaceSpec((Scalar("y"),))
    A = GeneratorMatrix.from_matrix(sp.csr_matrix((1, 1)))

    def evaluate_many(states, times):
        states = np.atleast_2d(states)
        return states * states

    f = NonlinearField(
        evaluate=lambda s, t: evaluate_many(s[None, :], t)[0],
        evaluate_many=evaluate_many,
        analytic_shift=lambda m: 0.0,
        analytic_lipschitz=lambda m: 2.0 * m,
        zero_bound=0.0,
    )
    problem = CauchyProblem(space=space, generator=A, f=f, growth=growth_bound(space, A))
    return problem, np.array([float(y0)])


def negative_source_problem():
    """Scalar constant drain f = -1: uncertifiable at the cone boundary."""
    space = SpaceSpec((Scalar("y"),))
    A = GeneratorMatrix.from_matrix(sp.csr_matrix((1, 1)))

    def evaluate_many(states, times):
        states = np.atleast_2d(states)
        return np.full_like(states, -1.0)

    f = NonlinearField(
        evaluate=lambda s, t: evaluate_many(s[None, :], t)[0],
        evaluate_many=evaluate_many,
        zero_bound=1.0,
    )
    problem = CauchyProblem(space=space, generator=A, f=f, growth=growth_bound(space, A))
    return problem, np.array([1.0])
