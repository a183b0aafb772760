"""
What happens when an instrument or an outcome predictor is dropped
==================================================================

"""

import math

from ate_lab import asymptotics as asy
from ate_lab.experiments import DgpConfig

model = DgpConfig(covariate_dist="uniform", t=1.0, theta=math.pi / 2).population_model()

# X = (I, U, C); X0 drops the outcome predictor C, X1 drops the instrument I
cmp = asy.compare_covariate_sets(model, draws=200_000, seed=7)
for (covs, quantity), m in cmp.quantities.items():
    print(f"{covs:>2s} {quantity:>17s}  {m.value:.4f}")

# paired differences, judged at 3 standard errors
for c in cmp.checks:
    print(f"{c.name:>32s}  diff={c.difference: .5f}  se={c.std_error:.1e}  {'ok' if c.passed else 'FAIL'}")

# the projected propensity given U alone integrates I out by quadrature
proj = asy.marginalize(model, [1, 2])
print("E[p | U=0] =", proj.model.propensity([[0.0, 0.0]])[0])
