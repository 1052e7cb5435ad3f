"""Quadrature rules on the reference tetrahedron and triangle.

Rules are returned as (barycentric points, weights) with weights summing to
one; multiply by the element volume/area to integrate.  Low degrees use
standard fixed-point rules, higher degrees fall back to a collapsed
(Duffy-type) tensor Gauss rule of the requested exactness.
"""

from __future__ import annotations

import numpy as np

# Degree-2, 4-point tet rule.
_TET4_A = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_TET4_B = (5.0 - np.sqrt(5.0)) / 20.0

# Degree-4, 11-point Keast rule (barycentric pairs a/b and c/c/d/d).
_K11_A = 11.0 / 14.0
_K11_B = 1.0 / 14.0
_K11_C = 0.3994035761667992
_K11_D = 0.1005964238332008
_K11_W1 = -592.0 / 7500.0
_K11_W2 = 343.0 / 7500.0
_K11_W3 = 1120.0 / 7500.0


def _perms_of(values: tuple) -> np.ndarray:
    """Distinct permutations of a barycentric 4-tuple, in sorted order."""
    import itertools
    return np.array(sorted(set(itertools.permutations(values))))


def tet_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule exact for polynomials up to `degree` on a tetrahedron."""
    if degree <= 1:
        return np.full((1, 4), 0.25), np.array([1.0])
    if degree == 2:
        pts = _perms_of((_TET4_A, _TET4_B, _TET4_B, _TET4_B))
        return pts, np.full(4, 0.25)
    if degree <= 4:
        pts = [np.full((1, 4), 0.25),
               _perms_of((_K11_A, _K11_B, _K11_B, _K11_B)),
               _perms_of((_K11_C, _K11_C, _K11_D, _K11_D))]
        wts = np.concatenate([np.full(1, _K11_W1), np.full(4, _K11_W2),
                              np.full(6, _K11_W3)])
        return np.concatenate(pts), wts
    return _tet_duffy(degree)


def _tet_duffy(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed tensor Gauss rule; the u-direction carries degree + 2."""
    n = (degree + 4) // 2  # Gauss-n exact to 2n-1 >= degree+2
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    u, v, t = np.meshgrid(g, g, g, indexing="ij")
    wu, wv, wt = np.meshgrid(w, w, w, indexing="ij")
    x = u
    y = v * (1.0 - u)
    z = t * (1.0 - u) * (1.0 - v)
    jac = (1.0 - u) ** 2 * (1.0 - v)
    pts = np.stack([1.0 - x - y - z, x, y, z], axis=-1).reshape(-1, 4)
    wts = (wu * wv * wt * jac).ravel() * 6.0
    return pts, wts


def tri_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule exact for polynomials up to `degree` on a triangle."""
    if degree <= 1:
        return np.full((1, 3), 1.0 / 3.0), np.array([1.0])
    if degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
        return pts, np.full(3, 1.0 / 3.0)
    n = (degree + 3) // 2
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(g, g, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    x = u
    y = v * (1.0 - u)
    jac = 1.0 - u
    pts = np.stack([1.0 - x - y, x, y], axis=-1).reshape(-1, 3)
    wts = (wu * wv * jac).ravel() * 2.0
    return pts, wts


def gauss_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1]."""
    g, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (g + 1.0), 0.5 * w
