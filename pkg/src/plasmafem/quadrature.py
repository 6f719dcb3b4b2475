"""Simplex quadrature rules in barycentric coordinates (weights sum to 1)."""

import itertools

import numpy as np


def _orbit(coords):
    return sorted(set(itertools.permutations(coords)))


def _tet_rule_deg5():
    # 14-point positive-weight rule, exact for polynomials of degree 5.
    groups = [
        (0.31088591926330060980, 0.11268792571801585080),
        (0.09273525031089122640, 0.07349304311636194955),
    ]
    pts, wts = [], []
    for a, w in groups:
        for p in _orbit((a, a, a, 1 - 3 * a)):
            pts.append(p)
            wts.append(w)
    a = 0.04550370412564964949
    for p in _orbit((a, a, 0.5 - a, 0.5 - a)):
        pts.append(p)
        wts.append(0.04254602077708146644)
    wts = np.array(wts)
    return np.array(pts), wts / wts.sum()


def _tri_rule_deg4():
    # 6-point rule, exact for polynomials of degree 4.
    groups = [(0.445948490915965, 0.223381589678011),
              (0.091576213509771, 0.109951743655322)]
    pts, wts = [], []
    for a, w in groups:
        for p in _orbit((a, a, 1 - 2 * a)):
            pts.append(p)
            wts.append(w)
    wts = np.array(wts)
    return np.array(pts), wts / wts.sum()


TET_POINTS, TET_WEIGHTS = _tet_rule_deg5()
TRI_POINTS, TRI_WEIGHTS = _tri_rule_deg4()
TET_DEGREE = 5
TRI_DEGREE = 4


def tet_rule():
    """(barycentric points (nq, 4), weights (nq,)) on the reference tetrahedron."""
    return TET_POINTS, TET_WEIGHTS


def tri_rule():
    """(barycentric points (nq, 3), weights (nq,)) on the reference triangle."""
    return TRI_POINTS, TRI_WEIGHTS
