"""Discretised Brownian trajectories on a uniform grid over [-T, T].

The sampler is standard 3D Brownian motion: each increment component is
centred Gaussian with variance dt (generator -Laplacian/2), so on [-T, T]
the per-component quadratic variation concentrates at 2T and the total at
6T.  Paths are immutable value objects; sampling takes an explicit
generator so parallel chains can use independent named streams.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BrownianPath:
    """Positions on the uniform grid t_j = t0 + j dt, with cached increments."""

    t0: float
    dt: float
    points: np.ndarray  # (n+1, 3)
    increments: np.ndarray = field(init=False)  # (n, 3), B_{t_j} - B_{t_{j-1}}

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValueError("points must be an (n+1, 3) array with n >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        pts = pts.copy()
        pts.flags.writeable = False
        inc = np.diff(pts, axis=0)
        inc.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "increments", inc)

    @property
    def n_steps(self):
        return self.points.shape[0] - 1

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.points.shape[0])

    @property
    def half_width(self):
        """T for a path living on [-T, T]."""
        return 0.5 * self.dt * self.n_steps

    def diameter(self):
        """max_{i,j} |B_{t_i} - B_{t_j}|, the radius a kernel table must cover."""
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(np.linalg.norm(hi - lo))


def sample_brownian(T, n, x0, rng):
    """One standard Brownian path on [-T, T] with n steps, started at x0."""
    return BrownianPath(-float(T), 2.0 * T / n, _walk(T, n, x0, rng, 1)[0])


def sample_brownian_batch(T, n, x0, rng, n_paths):
    """(n_paths, n+1, 3) array of independent paths; cheaper than n_paths calls."""
    return _walk(T, n, x0, rng, n_paths)


def _walk(T, n, x0, rng, n_paths):
    if not (T > 0 and n >= 1):
        raise ValueError("need T > 0 and n >= 1")
    dt = 2.0 * T / n
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (3,))
    steps = rng.standard_normal((n_paths, n, 3)) * np.sqrt(dt)
    pts = np.empty((n_paths, n + 1, 3))
    pts[:, 0] = x0
    np.cumsum(steps, axis=1, out=pts[:, 1:])
    pts[:, 1:] += x0
    return pts


def quadratic_variation(path):
    """(per-component sums of squared increments, their total)."""
    per_component = np.sum(path.increments**2, axis=0)
    return per_component, float(per_component.sum())


def truncate(path, a):
    """Clamp every position componentwise to [-a, a] (a = inf is the identity).

    The clamp is 1-Lipschitz: |clamp(x) - clamp(y)| <= |x - y| pairwise.
    """
    if a < 0:
        raise ValueError("truncation level must be >= 0")
    if np.isinf(a):
        return path
    return BrownianPath(path.t0, path.dt, np.clip(path.points, -a, a))


def save_path_csv(path, filename):
    with open(filename, "w") as fh:
        fh.write("t,x,y,z\n")
        for t, p in zip(path.times, path.points):
            fh.write(",".join(format(v, ".17g") for v in (t, *p)) + "\n")


def load_path_csv(filename):
    data = np.loadtxt(filename, delimiter=",", skiprows=1)
    t = data[:, 0]
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=0, atol=1e-12 * max(abs(dt), 1.0)):
        raise ValueError(f"{filename}: time grid is not uniform")
    return BrownianPath(float(t[0]), float(dt), data[:, 1:4])
