"""
Skin tone as an angle, and fairness as a spread
===============================================

The Individual Typology Angle (ITA) turns a colour into a single number:
the angle of ``(L* - 50, b*)``. Higher means lighter skin. Six bins of that
angle give skin types I to VI, and a benchmark score adds the mean error per
type to the spread of those means.
"""

import numpy as np

from albedofair.colorimetry import SKIN_TYPES, classify_skin_type, ita, lab_to_rgb, rgb_to_lab
from albedofair.benchmark import aggregate_metrics

# A few reflectances, from pale to deep. Lab is computed directly from linear RGB.
for rgb in ([0.62, 0.45, 0.36], [0.40, 0.25, 0.16], [0.17, 0.09, 0.05], [0.05, 0.03, 0.02]):
    lab = rgb_to_lab(rgb)
    angle = ita(lab)
    print(f"rgb={rgb}  L*={lab[0]:5.1f} b*={lab[2]:5.1f}  ITA={angle:6.1f}  type {classify_skin_type(angle).name}")

# ITA ignores a*: two colours with the same L* and b* share an angle.
lab = np.array([60.0, 5.0, 18.0])
print("a* = 5 vs 25:", ita(lab), ita(lab + [0.0, 20.0, 0.0]))

# The inverse conversion is exact enough to build test colours from a target angle.
target = 30.0
b = 16.0
rgb = lab_to_rgb([50 + b * np.tan(np.radians(target)), 10.0, b])
print("built for 30 deg ->", round(ita(rgb_to_lab(rgb)), 6))

# Aggregation: per-type errors -> Avg (mean of type means), Bias (sample std of
# type means), Score = Avg + Bias. A method that is accurate on light skin but
# poor on dark skin is penalised twice.
skewed = [8.92, 9.08, 8.15, 10.90, 28.48, 69.90]
even = [11.90, 11.87, 11.20, 13.92, 16.15, 18.21]
for name, row in (("skewed", skewed), ("even", even)):
    rep = aggregate_metrics([(t, e, 0.0) for t, e in zip(SKIN_TYPES, row)])
    print(f"{name:7s} avg {rep.avg_ita:6.2f}  bias {rep.bias:6.2f}  score {rep.score:6.2f}")
