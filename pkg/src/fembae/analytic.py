"""Bessel and Hankel functions of integer order, and the circular-scatterer reference field.

The Bessel functions use the ascending series for small arguments and
Miller's backward recurrence otherwise; ``Y_0`` and ``Y_1`` come from the
Neumann series over the same ``J_{2k}`` values, and higher orders from
upward recurrence, which is stable for ``Y``. Large arguments switch to
the Hankel asymptotic expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UnsupportedDomainError

MAX_ARGUMENT = 100.0
SERIES_LIMIT = 2.0
ASYMPTOTIC_LIMIT = 20.0
_EULER_GAMMA = 0.57721566490153286061
_RESCALE = 1e250


def _as_complex(z) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise UnsupportedDomainError(f"non-finite argument {z}")
    if abs(z) > MAX_ARGUMENT:
        raise UnsupportedDomainError(f"|z| = {abs(z):g} exceeds the supported range {MAX_ARGUMENT:g}")
    return z


def _series_j(n: int, z: complex) -> complex:
    half = z / 2
    term = half**n / math.factorial(n)
    total = term
    q = -half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        total += term
        if abs(term) <= 1e-17 * abs(total) or k > 200:
            return total


def _miller_sequence(nmax: int, z: complex) -> np.ndarray:
    """``J_0 .. J_nmax`` by backward recurrence, normalised by ``J_0 + 2 sum J_2k = 1``."""
    a = abs(z)
    start = int(max(nmax, a) + 25 + 12 * a ** (1 / 3))
    start += start % 2
    out = np.zeros(nmax + 1, dtype=complex)
    j_next, j_cur = 0j, 1e-300 + 0j
    norm = 0j
    for k in range(start, 0, -1):
        j_prev = (2 * k / z) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if k - 1 <= nmax:
            out[k - 1] = j_cur
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2 * j_cur
        if abs(j_cur) > _RESCALE:
            j_cur /= _RESCALE
            j_next /= _RESCALE
            out /= _RESCALE
            norm /= _RESCALE
    norm += j_cur
    return out / norm


def _j_sequence(nmax: int, z: complex) -> np.ndarray:
    if abs(z) <= SERIES_LIMIT:
        return np.array([_series_j(k, z) for k in range(nmax + 1)], dtype=complex)
    return _miller_sequence(nmax, z)


def bessel_j(order: int, argument) -> complex:
    """``J_n(z)`` for integer ``n`` and ``|z| <= 100``."""
    n = int(order)
    z = _as_complex(argument)
    sign = -1 if (n < 0 and n % 2) else 1
    n = abs(n)
    if z == 0:
        return complex(1.0 if n == 0 else 0.0)
    return sign * complex(_j_sequence(n, z)[n])


def _y01(z: complex) -> tuple[complex, complex]:
    a = abs(z)
    kmax = int(a + 25 + 12 * a ** (1 / 3)) + 2
    j = _miller_sequence(2 * kmax + 2, z) if a > SERIES_LIMIT else \
        np.array([_series_j(k, z) for k in range(2 * kmax + 2)], dtype=complex)
    log_term = np.log(z / 2) + _EULER_GAMMA
    ks = np.arange(1, kmax + 1)
    signs = np.where(ks % 2 == 0, 1.0, -1.0)
    y0 = (2 / np.pi) * log_term * j[0] - (4 / np.pi) * np.sum(signs * j[2 * ks] / ks)
    y1 = (-(2 / np.pi) * (j[0] / z - log_term * j[1])
          + (2 / np.pi) * np.sum(signs * (j[2 * ks - 1] - j[2 * ks + 1]) / ks))
    return complex(y0), complex(y1)


def _hankel_asymptotic(nu: int, z: complex) -> complex:
    """Large-argument expansion, summed until the terms stop shrinking."""
    mu = 4.0 * nu * nu
    term = 1.0 + 0j
    total = term
    for k in range(1, 60):
        nxt = term * 1j * (mu - (2 * k - 1) ** 2) / (k * 8 * z)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    omega = z - nu * np.pi / 2 - np.pi / 4
    return complex(np.sqrt(2 / (np.pi * z)) * np.exp(1j * omega) * total)


def _hankel_upward(n: int, h0: complex, h1: complex, z: complex) -> complex:
    if n == 0:
        return h0
    for k in range(1, n):
        h0, h1 = h1, (2 * k / z) * h1 - h0
    return h1


def _check_half_plane(z: complex) -> None:
    if z.real <= 0:
        raise UnsupportedDomainError(f"Y and H need Re(z) > 0, got {z}")


def bessel_y(order: int, argument) -> complex:
    """``Y_n(z)`` for integer ``n``, ``Re z > 0`` and ``|z| <= 100``."""
    n = int(order)
    z = _as_complex(argument)
    _check_half_plane(z)
    sign = -1 if (n < 0 and n % 2) else 1
    n = abs(n)
    if abs(z) >= ASYMPTOTIC_LIMIT:
        h = _hankel_upward(n, _hankel_asymptotic(0, z), _hankel_asymptotic(1, z), z)
        return sign * (h - bessel_j(n, z)) / 1j
    y_prev, y_cur = _y01(z)
    if n == 0:
        return sign * y_prev
    for k in range(1, n):
        y_prev, y_cur = y_cur, (2 * k / z) * y_cur - y_prev
    return sign * y_cur


def hankel1(order: int, argument) -> complex:
    """``H^(1)_n(z) = J_n(z) + i Y_n(z)``.

    For ``|z| >= 20`` the asymptotic expansion of ``H_0`` and ``H_1`` plus
    upward recurrence is used directly, which avoids the cancellation in
    ``J + i Y`` when ``Im z`` is large.
    """
    n = int(order)
    z = _as_complex(argument)
    _check_half_plane(z)
    if abs(z) >= ASYMPTOTIC_LIMIT:
        sign = -1 if (n < 0 and n % 2) else 1
        return sign * _hankel_upward(abs(n), _hankel_asymptotic(0, z), _hankel_asymptotic(1, z), z)
    return bessel_j(n, z) + 1j * bessel_y(n, z)


def hankel1_derivative(order: int, argument) -> complex:
    """``H^(1)_n'(z) = (H_{n-1} - H_{n+1}) / 2``."""
    return 0.5 * (hankel1(order - 1, argument) - hankel1(order + 1, argument))


@dataclass(frozen=True)
class CircleProblem:
    """Sound-hard circle with radial derivative ``K cos(N phi)`` on ``r = R``.

    Equivalently ``du/d(Kr) = cos(N phi)``, so the surface value is
    ``H_N(KR) / H_N'(KR) cos(N phi)``.
    """

    radius: float
    wavenumber: complex
    harmonic: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParameterError(f"radius must be positive, got {self.radius}")
        if int(self.harmonic) != self.harmonic or self.harmonic < 0:
            raise InvalidParameterError(f"harmonic must be a nonnegative integer, got {self.harmonic}")

    @property
    def amplitude(self) -> complex:
        kr = self.wavenumber * self.radius
        n = int(self.harmonic)
        return 2 * hankel1(n, kr) / (hankel1(n - 1, kr) - hankel1(n + 1, kr))


def exact_scattered_field(problem: CircleProblem, phi, r=None):
    """Exact field at angle(s) ``phi`` on the circle, or at radii ``r >= R``.

    Off the surface the field is ``amplitude * H_N(K r) / H_N(K R) cos(N phi)``.
    Array inputs broadcast; a scalar input returns a complex scalar.
    """
    n = int(problem.harmonic)
    K = complex(problem.wavenumber)
    if not (K * problem.radius).real > 0:
        raise UnsupportedDomainError("K R must have positive real part")
    phi_arr = np.asarray(phi, dtype=float)
    ang = np.cos(n * phi_arr)
    if r is None:
        out = problem.amplitude * ang
    else:
        r_arr = np.asarray(r, dtype=float)
        deriv = hankel1_derivative(n, K * problem.radius)
        r_flat, inv = np.unique(r_arr.ravel(), return_inverse=True)
        prof = np.array([hankel1(n, K * x) for x in r_flat], dtype=complex) / deriv
        out = prof[inv].reshape(r_arr.shape) * ang
    return complex(out) if np.ndim(out) == 0 else out
