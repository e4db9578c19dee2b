"""Higher-order kernels of the form ``p(t) * phi(t)``.

``phi`` is a centered Gaussian density (variance 1 for base kernels, 2 for
self-convolutions) and ``p`` a polynomial chosen so that the first ``m``
moments of the kernel vanish. Everything here is closed form: values,
derivatives up to order two, moments and the self-convolution ``k * k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import comb


def gaussian_moment(i: int, variance: float = 1.0) -> float:
    """E[T**i] for T ~ N(0, variance)."""
    if i < 0:
        raise ValueError("moment index must be nonnegative")
    if i % 2:
        return 0.0
    half = i // 2
    # (2j-1)!! * v**j
    dfact = 1.0
    for r in range(1, i, 2):
        dfact *= r
    return dfact * variance**half


@dataclass(frozen=True)
class Kernel:
    """Kernel ``k(t) = p(t) * phi_v(t)`` with ``phi_v`` the N(0, v) density.

    Attributes
    ----------
    order_m : int
        Requested order; moments 1..order_m vanish.
    poly_coeffs : tuple of float
        Coefficients c_0, c_1, ... of ``p`` in increasing degree.
    gaussian_variance : float
        Variance ``v`` of the Gaussian factor.
    """

    order_m: int
    poly_coeffs: tuple
    gaussian_variance: float = 1.0

    @property
    def coeffs(self) -> np.ndarray:
        return np.asarray(self.poly_coeffs, dtype=float)

    @property
    def is_even(self) -> bool:
        return all(c == 0.0 for c in self.poly_coeffs[1::2])

    def _gauss(self, t):
        v = self.gaussian_variance
        return np.exp(-0.5 * t * t / v) / math.sqrt(2.0 * math.pi * v)

    def _deriv_poly(self, deriv: int) -> np.ndarray:
        # (q phi_v)' = (q' - t q / v) phi_v
        q = self.coeffs
        for _ in range(deriv):
            q = P.polysub(P.polyder(q), P.polymulx(q) / self.gaussian_variance)
        return np.trim_zeros(q, "b") if np.any(q) else np.zeros(1)

    def eval(self, t, deriv: int = 0):
        """Return k(t), k'(t) or k''(t)."""
        if deriv not in (0, 1, 2):
            raise ValueError("deriv must be 0, 1 or 2")
        t = np.asarray(t, dtype=float)
        q = self._deriv_poly(deriv)
        if deriv == 0 and self.is_even:
            # evaluate in t**2 so that k(-t) == k(t) bit for bit
            t2 = t * t
            poly = P.polyval(t2, q[::2])
            out = poly * np.exp(-0.5 * t2 / self.gaussian_variance)
            out /= math.sqrt(2.0 * math.pi * self.gaussian_variance)
        else:
            out = P.polyval(t, q) * self._gauss(t)
        return out if out.ndim else float(out)

    __call__ = eval

    def scaled_eval(self, b: float, x, deriv: int = 0):
        """Derivative of the rescaled kernel ``k_b(x) = k(x / b) / b``."""
        if not b > 0:
            raise ValueError("bandwidth must be positive")
        x = np.asarray(x, dtype=float)
        return self.eval(x / b, deriv) / b ** (1 + deriv)

    def moment(self, i: int) -> float:
        """Exact value of the integral of t**i k(t)."""
        v = self.gaussian_variance
        return float(sum(c * gaussian_moment(a + i, v) for a, c in enumerate(self.poly_coeffs)))


def build_kernel(m: int) -> Kernel:
    """Gaussian-polynomial kernel of type (m, 2).

    ``p`` uses even powers only, so odd moments vanish by symmetry and the
    even ones are set to zero by solving a small Gaussian-moment system.
    For odd ``m`` this gives the same kernel as ``m + 1`` would minus one
    degree, i.e. build_kernel(3) == build_kernel(2) up to ``order_m``.
    """
    if int(m) != m or m < 1:
        raise ValueError("kernel order must be a positive integer")
    m = int(m)
    half = m // 2
    A = np.array([[gaussian_moment(2 * (i + j)) for j in range(half + 1)]
                  for i in range(half + 1)])
    rhs = np.zeros(half + 1)
    rhs[0] = 1.0
    if np.linalg.cond(A) > 1e14:
        raise RuntimeError("moment system is numerically singular")
    even = np.linalg.solve(A, rhs)
    coeffs = np.zeros(2 * half + 1)
    coeffs[::2] = even
    return Kernel(order_m=m, poly_coeffs=tuple(float(c) for c in coeffs),
                  gaussian_variance=1.0)


def self_convolution(k: Kernel) -> Kernel:
    """Closed-form ``K = k * k``, again polynomial times a Gaussian.

    With phi_v(x - y) phi_v(y) = phi_2v(x) phi_{v/2}(y - x/2) the
    convolution reduces to E[p(x/2 - W) p(x/2 + W)], W ~ N(0, v/2).
    """
    c = k.coeffs
    v = k.gaussian_variance
    deg = len(c) - 1
    # coefficient of x**i w**l in p(x/2 + s*w)
    def shifted(sign):
        B = np.zeros((deg + 1, deg + 1))
        for a, ca in enumerate(c):
            for l in range(a + 1):
                B[a - l, l] += ca * comb(a, l, exact=True) * 0.5 ** (a - l) * sign**l
        return B

    minus, plus = shifted(-1.0), shifted(1.0)
    prod = np.zeros((2 * deg + 1, 2 * deg + 1))
    for i in range(deg + 1):
        for l in range(deg + 1):
            if minus[i, l] != 0.0:
                prod[i:i + deg + 1, l:l + deg + 1] += minus[i, l] * plus
    w_moments = np.array([gaussian_moment(l, v / 2.0) for l in range(2 * deg + 1)])
    q = prod @ w_moments
    if k.is_even:
        q[1::2] = 0.0
    return Kernel(order_m=k.order_m, poly_coeffs=tuple(float(x) for x in q),
                  gaussian_variance=2.0 * v)


def moment(k: Kernel, i: int) -> float:
    return k.moment(i)
