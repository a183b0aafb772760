"""
The reduction curve R(theta, t) and its average
===============================================

"""

from pathlib import Path

from ate_lab.experiments import PUBLISHED_R, DgpConfig, r_average
from ate_lab.io import curve_svg

# a coarse 16-point grid keeps this quick; the tables use 64 points and 1e6 draws
curve = r_average(DgpConfig(covariate_dist="uniform"), t=2.0, theta_grid_size=16, draws=100_000, seed=5)
for theta, r in zip(curve.thetas, curve.r_values):
    print(f"theta={theta:5.3f}  R={r:.4f}")
print(f"R(t=2) ~ {curve.r_average:.4f}  (published {PUBLISHED_R['uniform', 2.0]})")

# the same single-polyline SVG the CLI writes
Path("reduction_curve.svg").write_text(curve_svg(curve.thetas, curve.r_values, "uniform, t = 2"))
