"""Shared numeric scaffolding: time grids, reproducible normal streams and
exact Ornstein-Uhlenbeck transitions.

Everything here is pure given its inputs.  Grids are uniform and shared by
all solvers so that paths, filters and error metrics align index by index.
Random streams are counter-based (Philox keyed on ``(seed, stream_id)``) so
Monte Carlo runs can be farmed out without any coordination and replayed
bitwise.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid", "make_grid", "RandomStream", "ou_exact_step"]


@dataclass(frozen=True)
class Grid:
    """Uniform mesh t_i = i*dt, i = 0..count, with count*dt = horizon."""

    horizon: float
    step: float
    count: int

    @property
    def nodes(self) -> np.ndarray:
        """Array of the count+1 grid times, starting at 0."""
        return np.arange(self.count + 1) * self.step


def make_grid(T: float, dt: float) -> Grid:
    """Build the uniform grid on [0, T] with step dt.

    Parameters
    ----------
    T : float
        Horizon, > 0.
    dt : float
        Step, > 0, with T/dt >= 2 and T an (almost) integer multiple of dt.

    Raises
    ------
    ValueError
        For non-positive inputs, fewer than two steps, or a horizon that is
        not commensurate with the step (|N*dt - T| > 1e-9*T).
    """
    if T <= 0 or dt <= 0:
        raise ValueError(f"T and dt must be positive, got T={T}, dt={dt}")
    n = int(round(T / dt))
    if n < 2:
        raise ValueError(f"grid needs at least 2 steps, got T/dt={T / dt}")
    if abs(n * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    return Grid(horizon=T, step=dt, count=n)


class RandomStream:
    """Reproducible stream of i.i.d. standard normal variates.

    Two instances constructed with the same ``(seed, stream_id)`` replay the
    identical sequence; distinct ``stream_id`` values give statistically
    independent streams (counter-based Philox keying).  A simulator that
    receives a stream owns it for the duration of the call: drawing advances
    the stream state.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def normal(self, size=None):
        """Draw the next standard normal variate(s)."""
        return self._gen.standard_normal(size)

    def spawn(self, stream_id: int) -> "RandomStream":
        """Fresh independent stream with the same seed and a new id."""
        return RandomStream(self.seed, stream_id)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id})"


def ou_exact_step(x, rate: float, vol: float, dt: float, z):
    """One exact-in-law transition of d xi = -rate*xi dt + vol dW.

    Returns ``exp(-rate*dt)*x + vol*sqrt((1-exp(-2*rate*dt))/(2*rate))*z``
    where ``z`` is standard normal.  Iterating n steps of dt matches a
    single step of n*dt in distribution exactly, unlike Euler stepping.

    ``x`` and ``z`` may be arrays (broadcast together).
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    decay = np.exp(-rate * dt)
    scale = vol * np.sqrt((1.0 - decay * decay) / (2.0 * rate))
    return decay * x + scale * z
