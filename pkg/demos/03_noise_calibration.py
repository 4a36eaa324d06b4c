"""Sensor noise and quantization, then recovering the noise law from data."""
import numpy as np

from dofsynth import BayerImage, NoiseModel, add_noise, dequantize, noise_params, noise_stats, quantize

model = NoiseModel(shot=1e-4, read0=1e-6, read1=2e-7)
for iso in (100, 400, 1600, 3200):
    read, shot = noise_params(iso, model)
    print(f"ISO {iso:5d}: read var {read:.2e}  shot var {shot:.2e}")

# A ramp over most of the signal range. Near 1.0 the output clamp cuts off
# the upper tail and the measured variance drops, so the fit stops at 0.85.
n = 1000
clean = BayerImage(np.linspace(0.02, 0.85, n * n, dtype=np.float32).reshape(n, n))
read, shot = noise_params(800, model)
noisy = add_noise(clean, read, shot, np.random.default_rng(3))

stats = noise_stats(clean, noisy, bins=24, value_range=(0.0, 0.85))
print("\nbin  mean   variance   predicted")
for m, v in list(zip(stats.mean, stats.variance))[::4]:
    print(f"     {m:.3f}  {v:.3e}  {read + shot * m:.3e}")

fit_read, fit_shot = stats.fit()
print(f"\nfitted read {fit_read:.3e} (true {read:.3e})")
print(f"fitted shot {fit_shot:.3e} (true {shot:.3e})")

# 10-bit quantization, rounding half to even
q = quantize(noisy, bits=10)
print("\nquantized dtype", q.data.dtype, "codes", int(q.data.min()), "to", int(q.data.max()))
step = float(np.abs(dequantize(q).data - noisy.data).max())
print("max quantization error", round(step, 6), "<= half an LSB", round(0.5 / 1023, 6))
