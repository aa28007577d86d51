"""Register a rotated, shifted copy of a synthetic object and report the error.

Run with ``python3 demos/basic_registration.py``.
"""

from __future__ import annotations

import math

from flsreg import SimilarityTransform, apply_transform, register, rotation_error_deg, translation_error
from flsreg.bench import primitive_cloud, random_rotation


def main() -> None:
    source = primitive_cloud(seed=7, n_points=1024)

    # 40 degrees about a random axis, shifted well outside the unit cube
    truth = SimilarityTransform(random_rotation((math.radians(40), math.radians(40)), seed=1), [1.5, 1.2, 1.8])
    target = apply_transform(source, truth)

    result = register(source, target)
    est = result.transform
    print(f"iterations       {result.iterations} ({result.details['termination']})")
    print(f"final cost       {result.final_cost:.3e}")
    print(f"wall time        {result.wall_time * 1e3:.1f} ms")
    print(f"rotation error   {rotation_error_deg(est.rotation, truth.rotation):.2e} deg")
    print(f"translation err  {translation_error(est.translation, truth.translation):.2e}")


if __name__ == "__main__":
    main()
