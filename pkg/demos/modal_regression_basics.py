#!/usr/bin/env python3
"""Modal regression on clean data: what the kernel objective sees.

The response is y = 1 * exp(x) + exp(x) * eps where eps is a two-component
normal mixture with mean 0, median 0.67 and mode 1.  Mean, median and mode
regression therefore chase three different curves:

    E[y|x]      = 1.00 * exp(x)
    Median[y|x] = 1.67 * exp(x)
    Mode[y|x]   = 2.00 * exp(x)

This script fits all three on the true covariates (no measurement error)
and shows the EM machinery behind the modal fit.
"""

import numpy as np

from modalsimex import (
    Bandwidth,
    Dataset,
    estep_weights,
    exponential_model,
    lse_fit,
    median_fit,
    modal_em,
    modal_objective,
)
from modalsimex.simstudy import Scenario, generate_replication

model = exponential_model()
scenario = Scenario(n=200, sigma_u2=0.01)
y, x_true, _ = generate_replication(scenario, rep_index=0, master_seed=7)
data = Dataset(y, x_true)
h = Bandwidth.from_rule(0.8, data.n)

print(f"n = {data.n}, bandwidth h = c * n**(-1/7) = {h.h:.4f}")
print()

print("Mean fit (least squares), target (1.00, 1.00):")
mean_fit = lse_fit(model, data)
print(f"  theta = ({mean_fit.theta_hat[0]:.3f}, {mean_fit.theta_hat[1]:.3f})")
print()

print("Median fit (L1 / simplex search), target (1.67, 1.00):")
med_fit = median_fit(model, data)
print(f"  theta = ({med_fit.theta_hat[0]:.3f}, {med_fit.theta_hat[1]:.3f})")
print()

print("Modal fit (kernel EM), target (2.00, 1.00):")
theta_modal, diag = modal_em(model, data, h)
print(f"  theta = ({theta_modal[0]:.3f}, {theta_modal[1]:.3f})")
print(f"  EM iterations: {diag.iterations}, converged: {diag.converged}")
print(f"  kernel objective rose from {diag.objective_trace[0]:.5f} "
      f"to {diag.objective_trace[-1]:.5f} (ascent at every step)")
print()

# The E-step weights reveal which observations the modal fit listens to:
# points whose residual sits within about one bandwidth of zero.
weights = estep_weights(model, data, theta_modal, h)
resid = data.y - theta_modal[0] * np.exp(theta_modal[1] * data.x[:, 0])
inside = np.abs(resid) < h.h
print(f"E-step weight mass within one bandwidth of zero residual: "
      f"{weights[inside].sum():.2%} carried by {inside.sum()} of {data.n} points")

# Compare the kernel density of residuals at zero across the three fits;
# the modal fit maximizes it by construction.
for name, theta in [
    ("mean  ", mean_fit.theta_hat),
    ("median", med_fit.theta_hat),
    ("modal ", theta_modal),
]:
    print(f"  residual density at zero under {name} fit: "
          f"{modal_objective(model, data, theta, h):.5f}")
