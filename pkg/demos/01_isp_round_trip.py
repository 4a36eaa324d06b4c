"""Unprocessing an sRGB image into linear RAW space and back."""
import numpy as np

from dofsynth import IspParams, PlanarImage, demosaic, mosaic, pack_rggb, process, unprocess

rng = np.random.default_rng(0)

# A smooth synthetic "photo": two colour gradients plus a little texture
yy, xx = np.mgrid[0:64, 0:96] / np.array([63.0, 95.0])[:, None, None]
rgb = np.stack([0.2 + 0.4 * xx, 0.3 + 0.5 * yy, 0.5 - 0.2 * xx])
rgb = np.clip(rgb + 0.02 * rng.standard_normal(rgb.shape), 0.01, 0.99)
img = PlanarImage(rgb)
print("display image", img.shape, "range", rgb.min().round(3), rgb.max().round(3))

# Default parameters: tone curve + sRGB gamma + colour matrix + white balance
params = IspParams()
print("white-balance gains", params.wb_gains)
print("ccm rows sum to", params.ccm.sum(axis=1).round(12))

linear = unprocess(img, params)
print("linear RAW mean per channel", linear.data.mean(axis=(1, 2)).round(4))
# white balance divides red and blue, so RAW looks green-tinted
assert linear.data[1].mean() > linear.data[0].mean()

back = process(linear, params)
print("round-trip max error", float(np.abs(back.data - img.data).max()))

# Jittered parameters give a different camera each draw
for seed in range(3):
    j = unprocess(img, params, rng=np.random.default_rng(seed))
    print(f"  jitter {seed}: red mean {j.data[0].mean():.4f}")

# RGGB sampling, packing and bilinear reconstruction
bayer = mosaic(linear)
packed = pack_rggb(bayer)
print("mosaic", bayer.data.shape, "-> packed", packed.shape)
recon = demosaic(bayer)
err = np.abs(recon.data - linear.data)[:, 1:-1, 1:-1]
print(f"demosaic interior max error {err.max():.5f}")
