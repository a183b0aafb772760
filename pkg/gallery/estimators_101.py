"""
Five ways to estimate an average treatment effect
=================================================

"""

import math

from ate_lab import estimate
from ate_lab.experiments import DgpConfig, generate_sample

# one draw from the simulation design: confounder U, instrument I, outcome predictor C
config = DgpConfig(covariate_dist="uniform", t=1.0, theta=math.pi / 2, a1=1.0)
sample, ps = generate_sample(config, n=5000, seed=1)
print(f"n={sample.n}  treated={sample.n_treated}  true ATE={config.true_ate}")

# known-propensity estimators take the true propensity; the others fit their own
for name in ("ipw_known", "ipw_estimated", "kps", "lm"):
    res = estimate(name, sample, ps)
    print(f"{name:>15s}  {res.estimate: .4f}")

# the LM correction coefficients, one per covariate
print("alpha_hat:", estimate("lm", sample, ps).alpha_hat.round(3))

# imputation needs finite support, so switch to ternary covariates
ternary, tps = generate_sample(DgpConfig(covariate_dist="ternary", a1=1.0), n=5000, seed=1)
print("imputation_known    ", round(estimate("imputation_known", ternary, tps).estimate, 4))
print("imputation_estimated", round(estimate("imputation_estimated", ternary).estimate, 4))
