"""Integral-equation form of the optimal filter, solved by time marching.

This is the general two-time formulation: the error matrix P(t, s) on the
triangle s <= t solves the Riccati-type Volterra equation

    P(t,s) = Gamma_ZZ(t,s)
             - int_0^s {P(t,r)+D(t,r)} a(r) a*(r) {P(s,r)+D(s,r)}* dr,

and the filter is the integral

    Zhat(t) = int_0^t {P(t,s)+D(t,s)} a(s) {dY(s) - a*(s) Zhat(s) ds}.

The augmented state is Z = (X, U, alpha)* where alpha is the memory state
of the observation noise; for the linear system with memory the companion
process U is the state-noise memory state alpha1 and alpha = alpha2.
Any externally supplied second-moment table is accepted, but the builder
here covers exactly that system family (with a centered initial law).

The solver marches the s-index with an explicit left-rectangle rule, which
is first-order and unconditionally computable; it exists as the reference
against which the Riccati-ODE filter of :mod:`memfilter.filters` is
validated, trading O(N^2) memory and O(N^3) time for generality.
"""

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import Grid
from .filters import SystemSpec, lemma_b
from .noise import diag_l

__all__ = [
    "ObservationKernelSpec",
    "GammaTable",
    "ErrorTable",
    "build_gamma_for_system",
    "solve_error_table",
    "run_filter_volterra",
]


@dataclass
class ObservationKernelSpec:
    """Observation gain mu(t) (nonvanishing) and Volterra noise kernel l(t, s).

    ``mu`` is a constant or a callable of t; ``kernel`` is a vectorized
    callable evaluated only on the triangle s <= t.
    """

    mu: Union[float, Callable]
    kernel: Callable

    @classmethod
    def for_system(cls, spec: SystemSpec) -> "ObservationKernelSpec":
        """Constant-gain spec with the memory kernel of the system's
        observation channel."""
        noise = spec.noise2
        r = noise.r

        def kern(t, s):
            return np.exp(-r * (np.asarray(t) - np.asarray(s))) * diag_l(noise, s)

        return cls(mu=spec.mu, kernel=kern)

    def mu_values(self, nodes: np.ndarray) -> np.ndarray:
        if callable(self.mu):
            vals = np.asarray([self.mu(t) for t in nodes], dtype=float)
        else:
            vals = np.full(nodes.shape, float(self.mu))
        if np.any(vals == 0.0):
            raise ValueError("observation gain mu must be nonzero on the grid")
        return vals

    def kernel_table(self, nodes: np.ndarray) -> np.ndarray:
        """Lower-triangular table l(t_i, t_j), zero above the diagonal."""
        n = nodes.size
        ii, jj = np.tril_indices(n)
        out = np.zeros((n, n))
        out[ii, jj] = self.kernel(nodes[ii], nodes[jj])
        return out


@dataclass
class GammaTable:
    """Lower-triangular table of second moments E[Z(t_i) Z*(t_j)], j <= i."""

    grid: Grid
    gamma: np.ndarray  # (N+1, N+1, 3, 3)


@dataclass
class ErrorTable:
    """Lower-triangular table of error matrices P(t_i, t_j), j <= i."""

    grid: Grid
    p: np.ndarray  # (N+1, N+1, 3, 3)


def _trapezoid_gram(f: np.ndarray, g: np.ndarray, dt: float) -> np.ndarray:
    """int_0^{t_j} f(t_i, u) g(t_j, u) du for all j <= i by one matmul.

    Both factor tables are lower triangular, so the full inner product over
    u already truncates at u = t_j; trapezoid endpoint weights are then
    corrected explicitly.  Entries above the diagonal are not meaningful.
    """
    full = f @ g.T
    corr = 0.5 * (np.outer(f[:, 0], g[:, 0]) + f * np.diag(g)[None, :])
    return dt * (full - corr)


def build_gamma_for_system(spec: SystemSpec, grid: Grid) -> GammaTable:
    """Second-moment table of Z = (X, alpha1, alpha2)* for the linear system.

    Uses the explicit innovation integral X(t) = e^{theta t} X0
    + int_0^t Kx(t,u) dB1(u) with Kx(t,u) = sigma (e^{theta(t-u)}
    - b(t-u) l1(u)), so every block is a Gram integral evaluated by
    composite trapezoid on the grid.  The initial law enters through its
    variance only (centered convention of the integral-equation filter).
    """
    n = grid.count
    dt = grid.step
    nodes = grid.nodes
    lag_idx = np.arange(n + 1)[:, None] - np.arange(n + 1)[None, :]
    lower = lag_idx >= 0
    lag_idx = np.where(lower, lag_idx, 0)

    theta, sigma = spec.theta, spec.sigma
    r1, r2 = spec.noise1.r, spec.noise2.r
    ld1 = np.asarray(diag_l(spec.noise1, nodes))
    ld2 = np.asarray(diag_l(spec.noise2, nodes))

    exp_theta = np.exp(theta * nodes)
    b_lag = np.asarray(lemma_b(theta, r1, nodes))
    kx = sigma * (exp_theta[lag_idx] - b_lag[lag_idx] * ld1[None, :])
    kx[~lower] = 0.0
    l1 = np.exp(-r1 * nodes)[lag_idx] * ld1[None, :]
    l1[~lower] = 0.0
    l2 = np.exp(-r2 * nodes)[lag_idx] * ld2[None, :]
    l2[~lower] = 0.0

    gamma = np.zeros((n + 1, n + 1, 3, 3))
    gamma[:, :, 0, 0] = _trapezoid_gram(kx, kx, dt) + spec.x0_var * np.outer(exp_theta, exp_theta)
    gamma[:, :, 0, 1] = _trapezoid_gram(kx, l1, dt)
    gamma[:, :, 1, 0] = _trapezoid_gram(l1, kx, dt)
    gamma[:, :, 1, 1] = _trapezoid_gram(l1, l1, dt)
    gamma[:, :, 2, 2] = _trapezoid_gram(l2, l2, dt)
    gamma[~lower] = 0.0
    return GammaTable(grid=grid, gamma=gamma)


def _observation_arrays(obs: ObservationKernelSpec, grid: Grid):
    nodes = grid.nodes
    mu = obs.mu_values(nodes)
    a = np.zeros((nodes.size, 3))
    a[:, 0] = mu
    a[:, 2] = -1.0
    ltab = obs.kernel_table(nodes)
    return a, ltab


def solve_error_table(gamma: GammaTable, obs: ObservationKernelSpec, grid: Grid) -> ErrorTable:
    """March the error-matrix integral equation over the s-index.

    Left-rectangle in the inner integral makes each column explicit in the
    previously computed ones.  The diagonal is symmetrized after every
    column (the continuous P(t,t) is symmetric; the discretization breaks
    it at O(dt)).
    """
    if gamma.grid != grid:
        raise ValueError("gamma table grid does not match the requested grid")
    n = grid.count
    dt = grid.step
    a, ltab = _observation_arrays(obs, grid)

    p = np.zeros_like(gamma.gamma)
    # w[r, i, :] = {P(t_i, t_r) + D(t_i, t_r)} a(t_r), transposed layout so
    # each marching step is one contiguous GEMM over r < j.
    w = np.zeros((n + 1, n + 1, 3))
    for j in range(n + 1):
        if j == 0:
            p[:, 0] = gamma.gamma[:, 0]
        else:
            flat = w[:j].reshape(j, 3 * (n + 1))
            vj = np.ascontiguousarray(w[:j, j, :])  # (j, 3)
            s = (vj.T @ flat).reshape(3, n + 1, 3)
            p[j:, j] = gamma.gamma[j:, j] - dt * s.transpose(1, 2, 0)[j:]
        p[j, j] = 0.5 * (p[j, j] + p[j, j].T)
        w[j] = p[:, j] @ a[j]
        w[j, :, 2] += ltab[:, j]
    return ErrorTable(grid=grid, p=p)


def run_filter_volterra(ptable: ErrorTable, obs: ObservationKernelSpec, y, grid: Grid) -> np.ndarray:
    """Evaluate the filter integral on an observation path (centered case).

    Returns the (N+1, 3) path of Zhat with Zhat(0) = 0; the sum over past
    nodes uses the same left-rectangle rule as the error-table march, and
    the recursion is linear in y.
    """
    if ptable.grid != grid:
        raise ValueError("error table grid does not match the requested grid")
    y = np.asarray(y, dtype=float)
    n = grid.count
    if y.shape != (n + 1,):
        raise ValueError(f"observation path must have {n + 1} nodes, got shape {y.shape}")
    if y[0] != 0.0:
        raise ValueError("observation path must start at Y(0) = 0")
    dt = grid.step
    a, ltab = _observation_arrays(obs, grid)
    u = np.einsum("ijab,jb->ija", ptable.p, a)
    u[:, :, 2] += ltab
    dy = np.diff(y)
    zhat = np.zeros((n + 1, 3))
    dinnov = np.empty(n)
    dinnov[0] = dy[0]
    for i in range(1, n + 1):
        zhat[i] = u[i, :i].T @ dinnov[:i]
        if i < n:
            dinnov[i] = dy[i] - (a[i] @ zhat[i]) * dt
    return zhat
