"""Finite-mode realisation of the auxiliary transverse Gaussian field.

The field X_s(f) has covariance

    E[X_s(f)_mu X_t(g)_nu] = int d^3k |phi_hat|^2/(2 omega) e^{-omega|t-s|}
                              e^{ik.(x-y)} P_munu(k)

for f, g translates of the coupling function.  We realise it as a finite
sum over k-space quadrature cells: each mode carries two polarisation
directions and, per polarisation, an independent cosine/sine pair of
stationary Ornstein-Uhlenbeck processes with rate omega(k) and variance
1/(2 omega(k)).  All arithmetic stays real; the plane-wave phases enter
through cos(k.x) and sin(k.x).

The coupled single integral J is the left-endpoint (Ito) Riemann sum of
X_s(coupling at B_s) . dB_s along a Brownian path, and `mc_characteristic`
estimates E[e^{iJ}] over field samples at a fixed path.  Because J is a
linear functional of a Gaussian vector, E[e^{iJ}] = exp(-Var(J)/2) holds
exactly at every discretisation; the exact Var(J) lives in `stochint`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridMismatchError
from .kernel import diagonal_constant, _panel_nodes, _GL_MAIN


@dataclass(frozen=True)
class ModeSet:
    """Quadrature mesh over the k-ball with polarisation frames.

    weight is the k-space volume element of each cell (includes k^2 and the
    angular weights); pol[m] holds the two orthonormal vectors spanning the
    plane transverse to k[m].  Immutable after construction.
    """

    k: np.ndarray       # (M, 3)
    weight: np.ndarray  # (M,)
    pol: np.ndarray     # (M, 2, 3)
    spec: object = field(repr=False)

    def __post_init__(self):
        for name in ("k", "weight", "pol"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "omega", self.spec.omega(np.linalg.norm(self.k, axis=1)))
        object.__setattr__(self, "phi", self.spec.phi_hat(np.linalg.norm(self.k, axis=1)))
        self.omega.flags.writeable = False
        self.phi.flags.writeable = False

    def __len__(self):
        return self.k.shape[0]

    @property
    def coupling_amp(self):
        """sqrt(cell_weight) |phi_hat(k)| per mode."""
        return np.sqrt(self.weight) * np.abs(self.phi)

    def covariance_mass(self):
        """sum_m weight |phi_hat|^2 / (2 omega): the mesh's value of the
        diagonal constant, for tail/accuracy checks."""
        return float(np.sum(self.weight * self.phi**2 / (2.0 * self.omega)))


def polarization_frame(khat):
    """Two orthonormal vectors transverse to khat (continuous away from the
    k3-axis, where the frame is pinned to the x/y axes)."""
    khat = np.asarray(khat, dtype=float)
    zcross = np.array([-khat[1], khat[0], 0.0])
    s = np.linalg.norm(zcross)
    if s < 1e-12:
        e1 = np.array([1.0, 0.0, 0.0])
    else:
        e1 = zcross / s
    e2 = np.cross(khat, e1)
    return e1, e2


def build_modes(spec, k_max, n_radial, n_angular, tail_tol=1e-3):
    """Product mesh: Gauss-Legendre radial x (Gauss-Legendre in cos theta,
    uniform midpoint in phi with 2*n_angular nodes).

    Raises ConfigError when the neglected radial tail of
    int |phi_hat|^2/(2 omega) beyond k_max exceeds ``tail_tol``.
    """
    if k_max <= 0 or n_radial < 2 or n_angular < 1:
        raise ConfigError("need k_max > 0, n_radial >= 2, n_angular >= 1")
    total = diagonal_constant(spec)
    if total > 0.0:
        inner = _radial_mass(spec, k_max)
        tail = max(0.0, 1.0 - inner / total)
        if tail > tail_tol:
            raise ConfigError(
                f"k_max={k_max:.3g} keeps only {1 - tail:.6f} of the covariance "
                f"mass (tail {tail:.2e} > tol {tail_tol:.2e}); "
                f"increase k_max towards {spec.k_support(tail_tol):.3g}"
            )

    x, w = np.polynomial.legendre.leggauss(n_radial)
    k_nodes = 0.5 * k_max * (x + 1.0)
    k_w = 0.5 * k_max * w
    u_nodes, u_w = np.polynomial.legendre.leggauss(n_angular)
    n_phi = 2 * n_angular
    phi_nodes = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    phi_w = 2.0 * np.pi / n_phi

    su = np.sqrt(1.0 - u_nodes**2)
    khat = np.empty((n_angular, n_phi, 3))
    khat[..., 0] = su[:, None] * np.cos(phi_nodes)
    khat[..., 1] = su[:, None] * np.sin(phi_nodes)
    khat[..., 2] = u_nodes[:, None]
    khat = khat.reshape(-1, 3)

    k_vec = (k_nodes[:, None, None] * khat[None, :, :]).reshape(-1, 3)
    cell = (k_w * k_nodes**2)[:, None] * (u_w[:, None] * phi_w).reshape(-1)[None, :]
    weight = cell.reshape(-1)

    pol = np.empty((len(khat), 2, 3))
    for i, kh in enumerate(khat):
        pol[i, 0], pol[i, 1] = polarization_frame(kh)
    pol = np.tile(pol, (len(k_nodes), 1, 1))

    return ModeSet(k_vec, weight, pol, spec)


def _radial_mass(spec, k_max):
    nodes, weights = _panel_nodes(0.0, k_max, max(64, int(8 * k_max / spec.cutoff)), _GL_MAIN)
    omega = spec.omega(nodes)
    f2 = spec.phi_hat(nodes) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(omega > 0, nodes**2 * f2 / (2.0 * omega), 0.0)
    return 4.0 * np.pi * float(weights @ integrand)


def mode_kernel(modes, x, t):
    """Covariance of the coupling field under this mode set: the 3x3 matrix

        sum_m weight |phi|^2 e^{-omega|t|}/(2 omega) cos(k.x) sum_j e_j e_j^T .

    This is exactly the covariance of `eval_coupling` values at displacement
    x and time separation t, and approximates the pair kernel W(x, t).
    """
    x = np.asarray(x, dtype=float)
    c = modes.weight * modes.phi**2 * np.exp(-modes.omega * abs(t)) / (2.0 * modes.omega)
    c = c * np.cos(modes.k @ x)
    proj = np.einsum("mpi,mpj->mij", modes.pol, modes.pol)
    return np.einsum("m,mij->ij", c, proj)


# ---------------------------------------------------------------------------
# sampling

@dataclass(frozen=True)
class FieldSample:
    """Per-mode OU trajectories on a time grid.

    xi and eta are the cosine and sine quadratures, shape (M, 2, n_times):
    mode, polarisation, time.  Stationary marginals have variance
    1/(2 omega); consecutive values follow the exact conditional law
    xi(t+d) = e^{-omega d} xi(t) + noise of variance (1-e^{-2 omega d})/(2 omega).
    """

    times: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    modes: ModeSet = field(repr=False)


def _sample_ou(rng, omega, times, lead_shape=()):
    """Stationary OU trajectories, exact discretisation.

    omega: (M, P) rates; returns lead_shape + (M, P, len(times)).
    """
    nt = len(times)
    shape = tuple(lead_shape) + omega.shape
    out = np.empty(shape + (nt,))
    out[..., 0] = rng.standard_normal(shape) / np.sqrt(2.0 * omega)
    if nt == 1:
        return out
    dts = np.diff(times)
    uniform = np.allclose(dts, dts[0], rtol=0, atol=1e-14 * max(abs(dts[0]), 1.0))
    rho = np.exp(-omega * dts[0])
    sig = np.sqrt((1.0 - rho**2) / (2.0 * omega))
    for i in range(1, nt):
        if not uniform:
            rho = np.exp(-omega * dts[i - 1])
            sig = np.sqrt((1.0 - rho**2) / (2.0 * omega))
        out[..., i] = rho * out[..., i - 1] + sig * rng.standard_normal(shape)
    return out


def sample_field(modes, times, rng):
    """Independent OU processes per (mode, polarisation, quadrature)."""
    times = np.asarray(times, dtype=float)
    omega2 = np.broadcast_to(modes.omega[:, None], (len(modes), 2))
    xi = _sample_ou(rng, omega2, times)
    eta = _sample_ou(rng, omega2, times)
    return FieldSample(times, xi, eta, modes)


def eval_coupling(sample, j, x):
    """The 3-vector X_{t_j}(coupling translated to x) of this field sample."""
    modes = sample.modes
    if not 0 <= j < len(sample.times):
        raise IndexError(f"grid index {j} outside 0..{len(sample.times) - 1}")
    x = np.asarray(x, dtype=float)
    phase = modes.k @ x
    amp = modes.coupling_amp
    coef = amp[:, None] * (np.cos(phase)[:, None] * sample.xi[:, :, j]
                           + np.sin(phase)[:, None] * sample.eta[:, :, j])
    return np.einsum("mp,mpi->i", coef, modes.pol)


def _coupling_coefficients(path, modes):
    """Arrays (M, 2, n) contracting a field sample's left-endpoint values to J."""
    left = path.points[:-1]
    inc = path.increments
    phase = modes.k @ left.T                      # (M, n)
    edotb = np.einsum("mpi,ni->mpn", modes.pol, inc)
    amp = modes.coupling_amp[:, None, None]
    return amp * np.cos(phase)[:, None, :] * edotb, amp * np.sin(phase)[:, None, :] * edotb


def single_integral_J(sample, path):
    """Left-endpoint Ito sum  sum_j X_{t_{j-1}}(coupling at B_{t_{j-1}}) . dB_j."""
    if len(sample.times) != len(path.times) or not np.allclose(
        sample.times, path.times, rtol=0, atol=1e-12
    ):
        raise GridMismatchError("field sample and path live on different time grids")
    coef_c, coef_s = _coupling_coefficients(path, sample.modes)
    n = path.n_steps
    return float(np.sum(coef_c * sample.xi[:, :, :n]) + np.sum(coef_s * sample.eta[:, :, :n]))


@dataclass(frozen=True)
class CharacteristicEstimate:
    mean_re: float
    mean_im: float
    stderr_re: float
    stderr_im: float
    n_samples: int

    @property
    def mean(self):
        return complex(self.mean_re, self.mean_im)


def mc_characteristic(path, modes, n_samples, rng, batch_size=256):
    """Monte Carlo mean and standard error of e^{iJ} at a fixed path.

    Field samples are drawn in batches from the given stream; the reduction
    order is fixed (sequential batches), so results are reproducible for a
    given (seed, batch_size).
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples for a standard error")
    left_times = path.times[:-1]
    omega2 = np.broadcast_to(modes.omega[:, None], (len(modes), 2))
    coef_c, coef_s = _coupling_coefficients(path, modes)

    sum_re = sum_im = sum_re2 = sum_im2 = 0.0
    done = 0
    while done < n_samples:
        b = min(batch_size, n_samples - done)
        xi = _sample_ou(rng, omega2, left_times, lead_shape=(b,))
        eta = _sample_ou(rng, omega2, left_times, lead_shape=(b,))
        j_vals = np.einsum("mpn,bmpn->b", coef_c, xi) + np.einsum("mpn,bmpn->b", coef_s, eta)
        re, im = np.cos(j_vals), np.sin(j_vals)
        sum_re += re.sum()
        sum_im += im.sum()
        sum_re2 += (re**2).sum()
        sum_im2 += (im**2).sum()
        done += b

    mean_re = sum_re / n_samples
    mean_im = sum_im / n_samples
    var_re = max(sum_re2 / n_samples - mean_re**2, 0.0)
    var_im = max(sum_im2 / n_samples - mean_im**2, 0.0)
    return CharacteristicEstimate(
        mean_re,
        mean_im,
        float(np.sqrt(var_re / (n_samples - 1))),
        float(np.sqrt(var_im / (n_samples - 1))),
        n_samples,
    )
