"""Independent reference implementations used as test oracles."""

import math


def naive_basis(x, k, lower, upper):
    """Independent scalar evaluation of a normalized cosine basis function.

    Normalization is recomputed here from the integral of cos^2 on each
    interval rather than taken from the package.
    """
    val = 1.0
    norm_sq = 1.0
    for xi, ki, lo, hi in zip(x, k, lower, upper):
        width = hi - lo
        val *= math.cos(ki * math.pi / width * (xi - lo))
        norm_sq *= width if ki == 0 else width / 2.0
    return val / math.sqrt(norm_sq)
