"""
Asymptotic variances against the efficiency bound
=================================================

"""

import math

from ate_lab import asymptotics as asy
from ate_lab.experiments import DgpConfig

model = DgpConfig(covariate_dist="uniform", t=1.0, theta=math.pi / 2).population_model()

# every quantity below integrates over the same 200k covariate draws
s = asy.summarize(model, draws=200_000, seed=3)
for name, m in [("bound", s.bound), ("imputation (known p)", s.asyvar_imp),
                ("ipw (known p)", s.asyvar_ipw), ("lm", s.asyvar_lm)]:
    print(f"{name:>22s}  {m.value:8.4f}  +/- {m.std_error:.4f}")

# R(theta, t): share of the IPW excess that the LM correction removes
print(f"R = {s.ratio.value:.4f} +/- {s.ratio.std_error:.4f}")

# with equal slopes the correction closes the whole gap
flat = DgpConfig(covariate_dist="uniform", t=1.0, theta=0.0).population_model()
print("R at theta=0:", round(asy.summarize(flat, 200_000, 3).ratio.value, 10))
