# # Pump depletion in a single-pass SHG waveguide
#
# At low power the second harmonic grows with the square of the
# fundamental; at high power the fundamental is used up and the converted
# fraction saturates. The tanh^2 law captures both regimes with two
# numbers: the facet coupling c and the undepleted efficiency eta_BK.

# %%
import numpy as np

from pairforge.shg import PulseTiming, ShgParams, conversion_ratio, fit_shg, peak_from_average, shg_power

timing = PulseTiming(repetition_rate=300e6, pulse_duration=501e-12)
print(f"duty cycle {timing.duty_cycle:.3f}")
peak = peak_from_average(54e-3, timing)
print(f"54 mW average -> {1e3 * peak:.1f} mW peak")

# %% [markdown]
# A synthetic measurement: 20 powers with 2 % multiplicative noise.

# %%
truth = ShgParams(coupling_ratio=0.8, bk_efficiency=1.57)
rng = np.random.default_rng(7)
p = np.linspace(0.02, 1.2, 20)
y = shg_power(truth, p) * (1 + 0.02 * rng.standard_normal(p.size))
fit = fit_shg(np.column_stack([p, y]))
print(f"fit: c = {fit.params.coupling_ratio:.3f} +- {fit.sigma[0]:.3f}, "
      f"eta_BK = {fit.params.bk_efficiency:.3f} +- {fit.sigma[1]:.3f} /W")

# %%
for pk in (0.05, peak, 1.0, 3.0):
    print(f"peak {1e3 * pk:6.0f} mW: conversion {100 * conversion_ratio(fit.params, pk):5.1f} %")
print(f"ceiling set by coupling: c^2 = {100 * fit.params.coupling_ratio ** 2:.0f} %")

# %% [markdown]
# c and eta_BK are strongly correlated when the data stop short of the
# saturated regime:

# %%
corr = fit.covariance[0, 1] / np.sqrt(fit.covariance[0, 0] * fit.covariance[1, 1])
print(f"correlation(c, eta_BK) = {corr:+.2f}")
