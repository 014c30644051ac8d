"""Certified series approximations of 1/x on D_kappa = [-1, -1/kappa] u [1/kappa, 1].

Two decompositions are provided:

* a discretized Fourier sum ``h(x)`` built from a Gaussian-weighted grid of
  evolution times ``y_j * z_k``;
* an odd Chebyshev sum ``g(x) = sum_j c_j T_{2j+1}(x)`` obtained by expanding
  ``(1 - (1 - x^2)^b) / x`` and truncating.

Every constructor scans D_kappa before returning and raises
:class:`CertificationError` if the promised bound is not met.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

SCAN_POINTS = 10_000
# escalation rounds for the Fourier grid (halve both steps each round)
MAX_ESCALATIONS = 5
# desk-scale ceiling on the taming exponent
MAX_TAMING_EXPONENT = 5_000_000


class CertificationError(RuntimeError):
    """A series failed its error certification scan."""


def scan_domain(kappa: float, points: int = SCAN_POINTS) -> np.ndarray:
    """Log-spaced points on both halves of D_kappa, endpoints included."""
    if kappa == 1:
        return np.array([-1.0, 1.0])
    pos = np.geomspace(1.0 / kappa, 1.0, points)
    pos[0], pos[-1] = 1.0 / kappa, 1.0
    return np.concatenate([-pos[::-1], pos])


def max_inverse_error(values: np.ndarray, xs: np.ndarray) -> float:
    return float(np.max(np.abs(values - 1.0 / xs)))


# -- Fourier -------------------------------------------------------------

@dataclass(frozen=True)
class FourierGrid:
    """Sampling grid for the discretized Fourier representation of 1/x."""

    J: int
    K: int
    delta_y: float
    delta_z: float
    kappa: float
    epsilon: float
    max_error: float = math.nan
    scan_points: int = 0

    @property
    def y_J(self) -> float:
        return self.J * self.delta_y

    @property
    def z_K(self) -> float:
        return self.K * self.delta_z

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.J) * self.delta_y

    @property
    def z(self) -> np.ndarray:
        """Nonzero z samples ``k * delta_z`` for k = -K..K, k != 0."""
        k = np.concatenate([np.arange(-self.K, 0), np.arange(1, self.K + 1)])
        return k * self.delta_z

    @property
    def max_time(self) -> float:
        """Largest evolution time |y_j z_k| used by any term."""
        return (self.J - 1) * self.delta_y * self.z_K

    @property
    def z_weights(self) -> np.ndarray:
        z = self.z
        return self.delta_z * np.abs(z) * np.exp(-z * z / 2)

    @property
    def alpha(self) -> float:
        """L1 norm of the term coefficients."""
        return float(self.J * self.delta_y * self.z_weights.sum() / math.sqrt(2 * math.pi))

    @property
    def n_terms(self) -> int:
        return 2 * self.J * self.K

    def parameters(self) -> dict:
        return {
            "J": self.J, "K": self.K, "delta_y": self.delta_y, "delta_z": self.delta_z,
            "y_J": self.y_J, "z_K": self.z_K, "kappa": self.kappa, "epsilon": self.epsilon,
        }


def _grid_steps(kappa: float, epsilon: float) -> tuple[int, int, float, float]:
    y_cut = kappa * math.sqrt(2 * math.log(8 * kappa / epsilon))
    z_cut = math.sqrt(2 * math.log(16 * kappa / epsilon))
    delta_y = epsilon / (16 * math.sqrt(2))
    J = math.ceil(y_cut / delta_y)
    # size delta_z against the rounded y_J so that 2 pi / delta_z >= 2 y_J holds exactly
    K = math.ceil(z_cut * J * delta_y / math.pi)
    delta_z = z_cut / K
    return J, K, delta_y, delta_z


def fourier_grid(kappa: float, epsilon: float, *, certify: bool = True,
                 scan_points: int = SCAN_POINTS) -> FourierGrid:
    """Grid whose h(x) is certified epsilon-close to 1/x on D_kappa."""
    if kappa < 1:
        raise ValueError(f"kappa={kappa} must be >= 1")
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon={epsilon} must lie in (0, 1/2)")
    J, K, delta_y, delta_z = _grid_steps(kappa, epsilon)
    grid = FourierGrid(J, K, delta_y, delta_z, kappa, epsilon)
    if not certify:
        return grid
    xs = scan_domain(kappa, scan_points)
    for _ in range(MAX_ESCALATIONS + 1):
        err = max_inverse_error(eval_h(xs, grid).real, xs)
        if err <= epsilon:
            return FourierGrid(grid.J, grid.K, grid.delta_y, grid.delta_z, kappa, epsilon, err, xs.size)
        grid = FourierGrid(2 * grid.J, 2 * grid.K, grid.delta_y / 2, grid.delta_z / 2, kappa, epsilon)
    raise CertificationError(f"Fourier grid for kappa={kappa}, epsilon={epsilon} misses the bound: {err}")


def _geometric_sum(u: np.ndarray, J: int, delta_y: float) -> np.ndarray:
    """sum_{j<J} exp(-i u j delta_y), closed form with expm1 for small phases."""
    num = np.expm1(-1j * u * J * delta_y)
    den = np.expm1(-1j * u * delta_y)
    out = np.full(u.shape, complex(J))
    nz = u != 0
    out[nz] = num[nz] / den[nz]
    return out


def eval_h(x, grid: FourierGrid) -> np.ndarray:
    """Discretized Fourier approximation of 1/x at the points ``x``.

    The sum over ``y_j`` is evaluated in closed form; the sum over ``z_k``
    runs over every nonzero k so the imaginary part cancels only numerically.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = grid.z
    w = grid.delta_z * z * np.exp(-z * z / 2)
    out = np.empty(x.shape, dtype=complex)
    # chunk over x to bound memory at (chunk x 2K)
    chunk = max(1, 2_000_000 // z.size)
    for start in range(0, x.size, chunk):
        u = np.outer(x[start:start + chunk], z)
        g = _geometric_sum(u, grid.J, grid.delta_y)
        out[start:start + chunk] = (g * w).sum(axis=1)
    return 1j * grid.delta_y / math.sqrt(2 * math.pi) * out


def eval_h_direct(x: float, grid: FourierGrid) -> complex:
    """Brute-force double sum; reference for small grids only."""
    y = grid.y[:, None]
    z = grid.z[None, :]
    terms = grid.delta_y * grid.delta_z * z * np.exp(-z * z / 2) * np.exp(-1j * x * y * z)
    return complex(1j / math.sqrt(2 * math.pi) * terms.sum())


def eval_g_truncated_integral(x: float, y_J: float, z_K: float) -> float:
    """The y-integrated approximation of 1/x, by adaptive quadrature.

    The odd (sine) part of the integrand integrates to zero, leaving
    ``(2 / (sqrt(2 pi) x)) int_0^{z_K} e^{-z^2/2} (1 - cos(x y_J z)) dz``.
    """
    x = float(x)
    if x == 0.0:
        return 0.0
    omega = abs(x * y_J)
    gauss, err_a = integrate.quad(lambda z: math.exp(-z * z / 2), 0.0, z_K, epsabs=1e-14, epsrel=1e-13, limit=200)
    osc, err_b = integrate.quad(lambda z: math.exp(-z * z / 2), 0.0, z_K, weight="cos", wvar=omega,
                                epsabs=1e-14, epsrel=1e-13, limit=400)
    if err_a + err_b > 1e-12:
        raise ArithmeticError(f"quadrature did not converge at x={x}: error estimate {err_a + err_b}")
    return 2.0 / (math.sqrt(2 * math.pi) * x) * (gauss - osc)


def poisson_check(omega: float, delta_z: float, K_terms: int | None = None) -> tuple[float, complex]:
    """Both sides of the Gaussian Poisson summation identity.

    lhs = sum_k exp(-(omega + 2 pi k / delta_z)^2 / 2)
    rhs = (delta_z / sqrt(2 pi)) sum_k exp(-z_k^2 / 2 - i omega z_k),  z_k = k delta_z
    """
    if delta_z <= 0:
        raise ValueError("delta_z must be positive")
    if K_terms is None:
        # both Gaussians are negligible past ~12 standard deviations
        K_terms = math.ceil(12 / delta_z + (12 + abs(omega)) * delta_z / (2 * math.pi)) + 5
    k = np.arange(-K_terms, K_terms + 1)
    lhs = math.fsum(np.exp(-((omega + 2 * math.pi * k / delta_z) ** 2) / 2))
    zk = k * delta_z
    terms = np.exp(-zk * zk / 2 - 1j * omega * zk)
    rhs = delta_z / math.sqrt(2 * math.pi) * complex(math.fsum(terms.real), math.fsum(terms.imag))
    return lhs, rhs


# -- Chebyshev -----------------------------------------------------------

def binomial_tails(b: int, jmax: int) -> np.ndarray:
    """``tails[j] = P(Bin(2b, 1/2) >= b + j + 1)`` for j = 0..min(jmax, b-1).

    Uses the regularized incomplete beta survival function, which keeps
    relative accuracy near 1e-15 where summing log-domain terms loses ~1e-10
    at b ~ 1e5.
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    j = np.arange(min(jmax, b - 1) + 1)
    return stats.binom.sf(b + j, 2 * b, 0.5)


@dataclass(frozen=True)
class ChebyshevSeries:
    """Truncated odd Chebyshev expansion of the tamed inverse."""

    b: int
    j0: int
    coeffs: np.ndarray
    kappa_eff: float
    epsilon: float
    max_error: float = math.nan
    scan_points: int = 0

    @property
    def orders(self) -> np.ndarray:
        return 2 * np.arange(self.j0 + 1) + 1

    @property
    def max_order(self) -> int:
        return 2 * self.j0 + 1

    @property
    def alpha(self) -> float:
        return float(np.abs(self.coeffs).sum())

    @property
    def tails(self) -> np.ndarray:
        """The probability factors of the coefficients (|c_j| / 4)."""
        return np.abs(self.coeffs) / 4

    def terms(self) -> list[tuple[int, float]]:
        return list(zip(self.orders.tolist(), self.coeffs.tolist()))

    def parameters(self) -> dict:
        return {"b": self.b, "j0": self.j0, "max_order": self.max_order,
                "kappa_eff": self.kappa_eff, "epsilon": self.epsilon}


def chebyshev_parameters(kappa_eff: float, epsilon: float) -> tuple[int, int]:
    eps_half = epsilon / 2
    b = math.ceil(kappa_eff ** 2 * math.log(kappa_eff / eps_half))
    b = max(b, 1)
    j0 = math.ceil(math.sqrt(b * math.log(4 * b / eps_half)))
    return b, min(j0, b - 1)


def chebyshev_series(kappa_eff: float, epsilon: float, *, b: int | None = None,
                     certify: bool = True, scan_points: int = SCAN_POINTS,
                     max_b: int = MAX_TAMING_EXPONENT) -> ChebyshevSeries:
    """Truncated Chebyshev series certified epsilon-close to 1/x on D_kappa_eff.

    ``b`` overrides the taming exponent; the truncation index is then chosen
    by the same rule and capped at ``b - 1`` (where the expansion is exact).
    """
    if kappa_eff < 1:
        raise ValueError(f"kappa_eff={kappa_eff} must be >= 1")
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon={epsilon} must lie in (0, 1/2)")
    if b is None:
        b, j0 = chebyshev_parameters(kappa_eff, epsilon)
    else:
        j0 = min(math.ceil(math.sqrt(b * math.log(4 * b / (epsilon / 2)))), b - 1)
    if b > max_b:
        raise OverflowError(f"taming exponent b={b} exceeds the ceiling {max_b}")
    tails = binomial_tails(b, j0)
    signs = np.where(np.arange(j0 + 1) % 2 == 0, 1.0, -1.0)
    series = ChebyshevSeries(b, j0, 4 * signs * tails, kappa_eff, epsilon)
    if not certify:
        return series
    xs = scan_domain(kappa_eff, scan_points)
    err = max_inverse_error(eval_chebyshev_series(xs, series), xs)
    if err > epsilon:
        raise CertificationError(f"Chebyshev series for kappa_eff={kappa_eff}, epsilon={epsilon} misses the bound: {err}")
    return ChebyshevSeries(b, j0, series.coeffs, kappa_eff, epsilon, err, xs.size)


def eval_chebyshev_series(x, series: ChebyshevSeries) -> np.ndarray:
    """sum_j c_j T_{2j+1}(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    t_prev = np.ones_like(x)
    t_cur = x.copy()
    out = series.coeffs[0] * t_cur
    for j in range(1, series.j0 + 1):
        # two recurrence steps take T_{2j-1} to T_{2j+1}
        t_prev, t_cur = t_cur, 2 * x * t_cur - t_prev
        t_prev, t_cur = t_cur, 2 * x * t_cur - t_prev
        out = out + series.coeffs[j] * t_cur
    return out


def tamed_inverse(x, b: int) -> np.ndarray:
    """(1 - (1 - x^2)^b) / x, continuous at 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    # log1p(-1) = -inf at |x| = 1 gives the exact limit 1/x
    with np.errstate(divide="ignore"):
        out[nz] = -np.expm1(b * np.log1p(-x[nz] ** 2)) / x[nz]
    return out


def chebyshev_t(n: int, x) -> np.ndarray:
    """First-kind Chebyshev polynomial T_n(x) by recurrence."""
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.ones_like(x)
    t_prev, t_cur = np.ones_like(x), x.copy()
    for _ in range(n - 1):
        t_prev, t_cur = t_cur, 2 * x * t_cur - t_prev
    return t_cur


def chebyshev_u(n: int, x) -> np.ndarray:
    """Second-kind Chebyshev polynomial U_n(x) by recurrence; U_{-1} = 0."""
    x = np.asarray(x, dtype=float)
    if n < 0:
        return np.zeros_like(x)
    u_prev, u_cur = np.zeros_like(x), np.ones_like(x)
    for _ in range(n):
        u_prev, u_cur = u_cur, 2 * x * u_cur - u_prev
    return u_cur
