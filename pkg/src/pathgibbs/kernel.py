"""Transverse pair kernel: evaluation, tabulation, brute-force oracle.

The central object is the 3x3 matrix kernel

    W(X, t) = int d^3k  |phi_hat(k)|^2 / (2 omega(k)) * exp(-omega(k)|t|)
              * exp(i k.X) * (I - khat khat^T),

with omega(k) = sqrt(|k|^2 + m^2) and phi_hat a radial UV profile.  Because
phi_hat is rotation invariant, W decomposes as

    W(X, t) = A(|X|, t) I + B(|X|, t) Xhat Xhat^T,

where A and B are 1D radial integrals obtained by integrating the angular
part analytically:

    int dOmega e^{ik.X} (I - khat khat^T)
        = 4 pi [ (j0(kr) - j1(kr)/(kr)) I + j2(kr) Xhat Xhat^T ].

`kernel_exact` evaluates (A, B) by adaptive panelised Gauss-Legendre
quadrature in the radial variable; `kernel_brute` checks it by direct 3D
quadrature in spherical coordinates with the complex exponential and the
projector evaluated pointwise (no Bessel reduction), so the two routes are
independent.  `KernelTable` caches (A, B) on a rectangular (r, |t|) grid
with bilinear interpolation for the O(n^2) pair sums downstream.

Everything here is computed at unit coupling; couplings enter only as
prefactors in the Gibbs weights.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureError, TableRangeError

_PROFILES = ("gaussian", "sharp", "lorentzian")

# Gauss-Legendre orders of the main and the internal check pass.
_GL_MAIN = 16
_GL_CHECK = 11

_QUAD_RTOL = 1e-9


@dataclass(frozen=True)
class FormFactor:
    """Radial UV profile |phi_hat| and boson mass defining omega and W.

    profile
        "gaussian":    phi_hat(k) = amplitude * exp(-k^2 / (2 cutoff^2))
        "sharp":       phi_hat(k) = amplitude * 1{k <= cutoff}
        "lorentzian":  phi_hat(k) = amplitude * (1 + k^2/cutoff^2)^(-3)
    All three are real, even and rotation invariant.  Square integrability
    of sqrt(omega) phi_hat and phi_hat/omega holds for every variant and
    every mass >= 0: the profiles decay fast enough at infinity (a
    first-power lorentzian would not; the exponent -3 keeps the k-space
    tails tractable for quadrature as well), and at k = 0 the worst case
    |phi_hat|^2/omega^2 ~ 1/k^2 is integrable in 3D.
    """

    profile: str
    cutoff: float
    mass: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; choose from {_PROFILES}")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if self.mass < 0:
            raise ValueError("mass must be >= 0")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")

    def phi_hat(self, k):
        """Radial profile phi_hat(|k|), vectorised."""
        k = np.asarray(k, dtype=float)
        if self.profile == "gaussian":
            return self.amplitude * np.exp(-0.5 * (k / self.cutoff) ** 2)
        if self.profile == "sharp":
            return self.amplitude * (k <= self.cutoff)
        return self.amplitude * (1.0 + (k / self.cutoff) ** 2) ** -3

    def omega(self, k):
        k = np.asarray(k, dtype=float)
        return np.sqrt(k * k + self.mass**2)

    def k_support(self, tail_tol=1e-12):
        """Radius K such that the neglected tail of int k^2|phi_hat|^2/(2w) dk
        is below ``tail_tol`` relative to the whole integral."""
        lam = self.cutoff
        if self.profile == "sharp":
            return lam
        if self.profile == "gaussian":
            # integrand ~ k^2 exp(-k^2/lam^2); solve the exponential factor.
            return lam * (np.sqrt(np.log(1.0 / tail_tol)) + 2.0)
        # lorentzian: relative tail ~ (lam/K)^10
        return 1.3 * lam * tail_tol**-0.1

    def admissibility_integrals(self):
        """(int omega |phi_hat|^2 d3k, int |phi_hat|^2/omega^2 d3k) by quadrature.

        Both must be finite for the kernel and the field construction to make
        sense; they are, for every profile variant, but the numbers are useful
        diagnostics.  For mass = 0 the second integrand goes like |phi_hat|^2
        near k = 0, which the k^2 volume factor makes regular.
        """
        kmax = self.k_support(1e-13)
        nodes, weights = _panel_nodes(0.0, kmax, max(64, _panel_count(self, 0.0)), _GL_MAIN)
        f2 = self.phi_hat(nodes) ** 2
        w = self.omega(nodes)
        i_up = 4.0 * np.pi * np.sum(weights * nodes**2 * w * f2)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = np.where(w > 0, nodes**2 / w**2, 1.0)  # k^2/omega^2 -> 1 as k->0, m=0
        i_low = 4.0 * np.pi * np.sum(weights * low * f2)
        return i_up, i_low


def transverse_projector(k):
    """Projector onto the plane orthogonal to k: I - khat khat^T.

    Symmetric, idempotent, annihilates k, trace 2.  Raises for k = 0 where
    no direction is defined.
    """
    k = np.asarray(k, dtype=float)
    n2 = float(k @ k)
    if n2 == 0.0:
        raise ValueError("transverse projector undefined for the zero vector")
    return np.eye(3) - np.outer(k, k) / n2


# ---------------------------------------------------------------------------
# spherical Bessel factors of the angular reduction

def _j_factors(x):
    """Return (j0(x), j1(x)/x, j2(x)) with series near 0 to avoid cancellation."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.2
    xs = np.where(small, 1.0, x)  # safe divisor
    sin, cos = np.sin(xs), np.cos(xs)
    j0 = np.where(small, 0.0, sin / xs)
    j1x = np.where(small, 0.0, sin / xs**3 - cos / xs**2)
    j2 = np.where(small, 0.0, (3.0 / xs**2 - 1.0) * sin / xs - 3.0 * cos / xs**2)
    x2 = x * x
    j0_s = 1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0
    j1x_s = (1.0 - x2 / 10.0 + x2 * x2 / 280.0 - x2 * x2 * x2 / 15120.0) / 3.0
    j2_s = x2 / 15.0 * (1.0 - x2 / 14.0 + x2 * x2 / 504.0 - x2 * x2 * x2 / 33264.0)
    return (
        np.where(small, j0_s, j0),
        np.where(small, j1x_s, j1x),
        np.where(small, j2_s, j2),
    )


def _panel_count(spec, r):
    """Panels on [0, k_support]: at least ~2 per Bessel half-period pi/(kr)
    plus a floor that resolves the radial profile itself."""
    kmax = spec.k_support()
    oscillation = int(np.ceil(2.0 * kmax * max(r, 0.0) / np.pi))
    profile_floor = int(np.ceil(4.0 * kmax / spec.cutoff))
    return min(20000, max(16, profile_floor, oscillation))


def _panel_nodes(a, b, n_panels, order):
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _radial_ab_pass(spec, r, t_row, order):
    """One quadrature pass for A(r, t) and B(r, t) over a row of |t| values."""
    kmax = spec.k_support()
    nodes, weights = _panel_nodes(0.0, kmax, _panel_count(spec, r), order)
    f2 = spec.phi_hat(nodes) ** 2
    if not f2.any():
        z = np.zeros_like(t_row)
        return z, z.copy()
    omega = spec.omega(nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(omega > 0, weights * nodes**2 * f2 / (2.0 * omega), 0.0)
    j0, j1x, j2 = _j_factors(nodes * r)
    fac_a = base * (j0 - j1x)
    fac_b = base * j2
    decay = np.exp(-np.outer(omega, np.abs(t_row)))
    a_row = 4.0 * np.pi * (fac_a @ decay)
    b_row = 4.0 * np.pi * (fac_b @ decay)
    return a_row, b_row


def kernel_exact(spec, r, t):
    """(A, B) of the decomposition W = A I + B Xhat Xhat^T at radius r.

    ``t`` may be a scalar or a 1D array (a row of time separations sharing
    the radius); the radial quadrature is panelised against the Bessel
    oscillation and verified by a second pass at a different Gauss order.

    Raises QuadratureError when the two passes disagree beyond tolerance.
    """
    if r < 0:
        raise ValueError("radius must be >= 0")
    t_row = np.atleast_1d(np.asarray(t, dtype=float))
    a, b = _radial_ab_pass(spec, r, t_row, _GL_MAIN)
    a_chk, b_chk = _radial_ab_pass(spec, r, t_row, _GL_CHECK)
    scale = max(diagonal_constant(spec), 1e-300)
    err = max(np.max(np.abs(a - a_chk)), np.max(np.abs(b - b_chk)))
    if err > _QUAD_RTOL * scale:
        raise QuadratureError(
            f"radial quadrature did not converge at r={r:.6g} "
            f"(estimate {err:.3e}, tolerance {_QUAD_RTOL * scale:.3e})",
            estimate=err,
            tolerance=_QUAD_RTOL * scale,
        )
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(a[0]), float(b[0])
    return a, b


def reconstruct(a, b, x):
    """Assemble A I + B Xhat Xhat^T for displacement x (B term vanishes at x=0)."""
    x = np.asarray(x, dtype=float)
    r2 = float(x @ x)
    w = a * np.eye(3)
    if r2 > 0.0:
        w = w + (b / r2) * np.outer(x, x)
    return w


def diagonal_constant(spec):
    """int |phi_hat(k)|^2 / (2 omega(k)) d^3k  (>= 0), 1D radial quadrature."""
    if spec.amplitude == 0.0:
        return 0.0
    kmax = spec.k_support(1e-14)
    nodes, weights = _panel_nodes(0.0, kmax, max(64, _panel_count(spec, 0.0)), _GL_MAIN)
    omega = spec.omega(nodes)
    f2 = spec.phi_hat(nodes) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(omega > 0, nodes**2 * f2 / (2.0 * omega), 0.0)
    val = 4.0 * np.pi * float(weights @ integrand)
    if not np.isfinite(val):
        raise QuadratureError("diagonal constant diverged for this form factor")
    return val


# ---------------------------------------------------------------------------
# brute 3D oracle

def kernel_brute(spec, x, t, check=True):
    """W(X, t) by direct 3D quadrature in spherical coordinates.

    Tensor Gauss-Legendre in (k, cos theta) and a uniform (trapezoidal)
    azimuthal grid over the truncated ball |k| <= k_support; the complex
    plane wave and the transverse projector are evaluated node by node, so
    this shares nothing with the Bessel reduction of `kernel_exact`.

    With ``check=True`` the integral is recomputed at 4/3 the resolution and
    a QuadratureError is raised if the two disagree beyond tolerance.  The
    result is real symmetric; the imaginary residue of the quadrature is
    checked against 1e-10 of the kernel scale.
    """
    x = np.asarray(x, dtype=float)
    if spec.amplitude == 0.0:
        return np.zeros((3, 3))
    r = float(np.linalg.norm(x))
    w, imag_resid = _brute_pass(spec, x, t, 1.0)
    if check:
        w_hi, _ = _brute_pass(spec, x, t, 4.0 / 3.0)
        scale = max(diagonal_constant(spec), 1e-300)
        err = float(np.max(np.abs(w - w_hi)))
        if err > 1e-8 * scale:
            raise QuadratureError(
                f"brute 3D quadrature did not converge at r={r:.6g}, t={t:.6g} "
                f"(estimate {err:.3e})",
                estimate=err,
                tolerance=1e-8 * scale,
            )
        w = w_hi
    scale = max(diagonal_constant(spec), 1e-300)
    if imag_resid > 1e-10 * scale:
        raise QuadratureError(
            f"imaginary residue {imag_resid:.3e} above 1e-10 * kernel scale",
            estimate=imag_resid,
            tolerance=1e-10 * scale,
        )
    return 0.5 * (w + w.T)


def _brute_pass(spec, x, t, refine):
    kmax = spec.k_support(1e-10)
    q = kmax * float(np.linalg.norm(x))  # maximal phase in radians
    n_k = int(refine * (0.9 * q + 48))
    n_u = int(refine * (0.7 * q + 32))
    n_phi = int(refine * (1.4 * q + 64))
    if n_k * n_u * n_phi > 3e8:
        raise QuadratureError(
            f"brute 3D quadrature needs ~{n_k * n_u * n_phi:.2e} nodes at "
            f"|X|={np.linalg.norm(x):.3g} (k support {kmax:.3g}); "
            "beyond the brute-force budget, use kernel_exact"
        )

    profile_floor = int(np.ceil(4.0 * kmax / spec.cutoff))
    k_nodes, k_weights = _panel_nodes(0.0, kmax, max(profile_floor, n_k // _GL_MAIN), _GL_MAIN)
    u_nodes, u_weights = np.polynomial.legendre.leggauss(n_u)
    phi_nodes = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    phi_weight = 2.0 * np.pi / n_phi

    su = np.sqrt(1.0 - u_nodes**2)
    # unit directions khat(u, phi): shape (n_u, n_phi, 3)
    khat = np.empty((n_u, n_phi, 3))
    khat[..., 0] = su[:, None] * np.cos(phi_nodes)[None, :]
    khat[..., 1] = su[:, None] * np.sin(phi_nodes)[None, :]
    khat[..., 2] = u_nodes[:, None]

    proj = np.eye(3)[None, None] - khat[..., :, None] * khat[..., None, :]
    ang_w = u_weights[:, None] * phi_weight  # (n_u, 1) broadcast over phi

    omega = spec.omega(k_nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        radial = np.where(
            omega > 0,
            k_weights * k_nodes**2 * spec.phi_hat(k_nodes) ** 2
            * np.exp(-omega * abs(t)) / (2.0 * omega),
            0.0,
        )

    cosang = khat @ x  # (n_u, n_phi)
    w = np.zeros((3, 3), dtype=complex)
    block = max(1, int(2e6 / (cosang.size or 1)))
    for start in range(0, len(k_nodes), block):
        kk = k_nodes[start : start + block]
        rr = radial[start : start + block]
        phase = np.exp(1j * kk[:, None, None] * cosang[None, :, :])
        ang = np.einsum("up,kup,upij->kij", ang_w * np.ones_like(cosang), phase, proj)
        w += np.tensordot(rr, ang, axes=(0, 0))
    imag_resid = float(np.max(np.abs(w.imag)))
    return w.real, imag_resid


# ---------------------------------------------------------------------------
# tabulation

@dataclass(frozen=True)
class KernelTable:
    """(A, B) sampled on a uniform (r, |t|) grid with bilinear lookup.

    Immutable after construction; lookups are pure, so unlimited concurrent
    readers are safe.  Queries with |t| beyond ``t_grid[-1]`` fall back to
    `kernel_exact` on demand (correctness over speed; the exponential time
    damping makes them rare).  Queries with r beyond ``r_grid[-1]`` raise
    TableRangeError: the caller must size r_max from the path diameter.
    """

    r_grid: np.ndarray
    t_grid: np.ndarray
    a_vals: np.ndarray  # (n_r, n_t)
    b_vals: np.ndarray
    diag_const: float
    spec: FormFactor = field(repr=False)

    @property
    def r_max(self):
        return float(self.r_grid[-1])

    @property
    def t_max(self):
        return float(self.t_grid[-1])

    def lookup_ab(self, r, t):
        """Vectorised (A, B) at radii ``r`` and time separations ``t``.

        Stored as a function of (r, |t|), hence lookup(X, t) = lookup(-X, t)
        = lookup(X, -t) automatically.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        t = np.abs(np.atleast_1d(np.asarray(t, dtype=float)))
        r, t = np.broadcast_arrays(r, t)
        if np.any(r > self.r_max * (1.0 + 1e-12)):
            raise TableRangeError(float(np.max(r)), self.r_max)

        a = np.empty(r.shape)
        b = np.empty(r.shape)
        beyond = t > self.t_max
        if np.any(beyond):
            for idx in np.argwhere(beyond):
                ai, bi = kernel_exact(self.spec, float(r[tuple(idx)]), float(t[tuple(idx)]))
                a[tuple(idx)], b[tuple(idx)] = ai, bi
        inside = ~beyond
        if np.any(inside):
            ri, ti = r[inside], t[inside]
            hr = self.r_grid[1] - self.r_grid[0] if len(self.r_grid) > 1 else 1.0
            ht = self.t_grid[1] - self.t_grid[0] if len(self.t_grid) > 1 else 1.0
            ir = np.clip((ri / hr).astype(int), 0, max(len(self.r_grid) - 2, 0))
            it = np.clip((ti / ht).astype(int), 0, max(len(self.t_grid) - 2, 0))
            fr = np.clip(ri / hr - ir, 0.0, 1.0)
            ft = np.clip(ti / ht - it, 0.0, 1.0)
            ir1 = np.minimum(ir + 1, len(self.r_grid) - 1)
            it1 = np.minimum(it + 1, len(self.t_grid) - 1)

            def interp(v):
                return ((1 - fr) * (1 - ft) * v[ir, it]
                        + fr * (1 - ft) * v[ir1, it]
                        + (1 - fr) * ft * v[ir, it1]
                        + fr * ft * v[ir1, it1])

            a[inside] = interp(self.a_vals)
            b[inside] = interp(self.b_vals)
        return a, b

    def lookup(self, x, t):
        """Interpolated 3x3 kernel matrix at displacement x, separation t."""
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        a, b = self.lookup_ab(r, float(t))
        return reconstruct(float(a[0]), float(b[0]), x)


def build_table(spec, r_max, t_max, n_r, n_t):
    """Tabulate kernel_exact on the uniform n_r x n_t grid of (r, |t|).

    Grid nodes store exactly the values kernel_exact returns (row by row,
    the same code path), so lookup at a node reproduces kernel_exact.
    """
    if r_max <= 0 or t_max <= 0 or n_r < 2 or n_t < 2:
        raise ValueError("need r_max, t_max > 0 and n_r, n_t >= 2")
    r_grid = np.linspace(0.0, r_max, n_r)
    t_grid = np.linspace(0.0, t_max, n_t)
    a_vals = np.empty((n_r, n_t))
    b_vals = np.empty((n_r, n_t))
    for i, r in enumerate(r_grid):
        a_vals[i], b_vals[i] = kernel_exact(spec, float(r), t_grid)
    return KernelTable(r_grid, t_grid, a_vals, b_vals, diagonal_constant(spec), spec)


# ---------------------------------------------------------------------------
# text export / import (17 significant digits round-trips float64 exactly)

def _fmt(x):
    return format(float(x), ".17g")


def save_table(table, path):
    """Write the table as header lines followed by CSV rows (r,t,A,B)."""
    with open(path, "w") as fh:
        fh.write("pathgibbs-kernel-table v1\n")
        fh.write(f"profile {table.spec.profile}\n")
        fh.write(f"cutoff {_fmt(table.spec.cutoff)}\n")
        fh.write(f"mass {_fmt(table.spec.mass)}\n")
        fh.write(f"amplitude {_fmt(table.spec.amplitude)}\n")
        fh.write(f"diag_const {_fmt(table.diag_const)}\n")
        fh.write("r_grid " + " ".join(_fmt(v) for v in table.r_grid) + "\n")
        fh.write("t_grid " + " ".join(_fmt(v) for v in table.t_grid) + "\n")
        fh.write("r,t,A,B\n")
        for i, r in enumerate(table.r_grid):
            for j, t in enumerate(table.t_grid):
                fh.write(f"{_fmt(r)},{_fmt(t)},{_fmt(table.a_vals[i, j])},{_fmt(table.b_vals[i, j])}\n")


def load_table(path):
    with open(path) as fh:
        magic = fh.readline().strip()
        if magic != "pathgibbs-kernel-table v1":
            raise ValueError(f"{path}: not a kernel table file (got {magic!r})")

        def header(name, conv=float):
            line = fh.readline().split()
            if not line or line[0] != name:
                raise ValueError(f"{path}: expected header {name!r}")
            return conv(line[1]) if len(line) == 2 else [conv(v) for v in line[1:]]

        profile = header("profile", str)
        spec = FormFactor(profile, header("cutoff"), header("mass"), header("amplitude"))
        diag_const = header("diag_const")
        r_grid = np.asarray(header("r_grid"), dtype=float)
        t_grid = np.asarray(header("t_grid"), dtype=float)
        if fh.readline().strip() != "r,t,A,B":
            raise ValueError(f"{path}: missing CSV header row")
        a_vals = np.empty((len(r_grid), len(t_grid)))
        b_vals = np.empty_like(a_vals)
        for i in range(len(r_grid)):
            for j in range(len(t_grid)):
                row = fh.readline().split(",")
                if len(row) != 4:
                    raise ValueError(f"{path}: truncated at row ({i},{j})")
                r, t, a, b = map(float, row)
                if r != r_grid[i] or t != t_grid[j]:
                    raise ValueError(f"{path}: row ({i},{j}) grid mismatch")
                a_vals[i, j], b_vals[i, j] = a, b
    return KernelTable(r_grid, t_grid, a_vals, b_vals, diag_const, spec)
