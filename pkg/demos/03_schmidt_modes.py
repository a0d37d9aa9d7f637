# # How many spectral modes does a long-pulse pair source emit?
#
# A 400 ps pump is spectrally narrow (about 1 GHz), while the phase matching
# lets each photon spread over 1.2 nm (150 GHz). Energy conservation then
# ties the signal and idler frequencies tightly together: the joint spectrum
# is a thin diagonal ridge and carries many Schmidt modes.

# %%
from pairforge import jsa
from pairforge.estimators import nm_per_thz

signal_fwhm = 1.2 / nm_per_thz(1550e-9)
pump_fwhm = jsa.GAUSS_TBP / 400e-12 * 1e-12
print(f"pump bandwidth {1e3 * pump_fwhm:.2f} GHz, photon bandwidth {1e3 * signal_fwhm:.1f} GHz")

# %% [markdown]
# The phase-matching profile can be read as an amplitude sinc(dk L/2) or
# as its square; both are calibrated to the same photon bandwidth, but the
# squared form has weaker side lobes and yields fewer modes.

# %%
for conv in (jsa.SINC, jsa.SINC2):
    psi = jsa.pulsed_source_jsa(400e-12, signal_fwhm, conv)
    spec = jsa.schmidt_decompose(psi)
    print(f"{conv:6s}: K = {spec.K:6.1f}, largest lambda = {spec.coefficients[0]:.4f}, "
          f"g2 unheralded = {jsa.g2_unheralded(spec.K):.4f}")

# %% [markdown]
# A cross-check that needs no numerics: for a Gaussian pump and Gaussian
# phase matching the Schmidt number has a closed form in the two widths.

# %%
for ratio in (1.0, 4.0, 20.0):
    g = jsa.FrequencyGrid(0.0, 4 * ratio, 401)
    wide = jsa.FrequencyGrid(0.0, 16 * ratio, 4001)
    psi = jsa.build_jsa(jsa.PumpSpectrum.gaussian(1.0, wide), jsa.PhaseMatching.gaussian(ratio, wide), g, g)
    print(f"width ratio {ratio:4.0f}: K = {jsa.schmidt_decompose(psi).K:.4f}, "
          f"closed form {jsa.gaussian_schmidt_number(1.0, ratio):.4f}")

# %% [markdown]
# Shorter pulses broaden the pump and shrink K toward a single mode. These
# few-mode cases are resolved by a coarser grid than the 400 ps ridge.

# %%
for tau in (100e-12, 40e-12, 10e-12, 4e-12):
    psi = jsa.pulsed_source_jsa(tau, signal_fwhm, jsa.SINC2, n_points=1200,
                                span_factor=8 + 2 * jsa.GAUSS_TBP / tau * 1e-12 / signal_fwhm)
    print(f"pump {1e12 * tau:5.0f} ps: K = {jsa.schmidt_decompose(psi).K:.1f}")
