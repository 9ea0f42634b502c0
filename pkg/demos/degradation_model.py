"""Tour of the forward degradation model: blur, decimation, and their adjoints.

A low-resolution face is modeled as a cyclically blurred, decimated, and
optionally noisy version of the unknown high-resolution image.  This script
builds the operators, shows their basic identities, and cross-checks the fast
spatial implementations against explicit dense matrices.
"""

from pathlib import Path

import numpy as np

from facehall import (
    DegradationParams,
    Image,
    Psf,
    blur_cyclic,
    blur_cyclic_adjoint,
    decimate,
    degrade,
    dense_operators,
    image_io,
    vectorize,
    zero_interpolate,
)

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

rng = np.random.default_rng(0)

# A synthetic "face": smooth blobs plus a gradient, 32x24 on the 8-bit scale.
yy, xx = np.mgrid[0:32, 0:24]
face = (
    120
    + 60 * np.exp(-((yy - 10) ** 2 + (xx - 8) ** 2) / 30)
    + 50 * np.exp(-((yy - 20) ** 2 + (xx - 16) ** 2) / 40)
    + 0.8 * xx
)
hr = Image(np.clip(face, 0, 255))
image_io(out_dir / "hr.pgm", "save", hr)

print("== blur kernels ==")
for psf, name in [(Psf.average(4), "4x4 average"), (Psf.gaussian(7, 2.0), "7x7 gaussian s=2")]:
    blurred = blur_cyclic(hr, psf)
    print(f"{name}: kernel sum {psf.kernel.sum():.12f}, blurred range "
          f"[{blurred.data.min():.1f}, {blurred.data.max():.1f}]")

# Kernels sum to one, so flat images pass through untouched.
flat = Image(np.full((16, 16), 99.0))
assert np.allclose(blur_cyclic(flat, Psf.average(4)).data, 99.0)
print("constant image is a fixed point of any normalized blur")

print("\n== decimation and its adjoint ==")
lr = decimate(hr, 4)
print(f"decimate keeps the phase-(0,0) grid: {hr.dims} -> {lr.dims}")
up = zero_interpolate(lr, 4)
assert np.array_equal(decimate(up, 4).data, lr.data)
print("decimate(zero_interpolate(y)) == y  (S S^T = I)")

x = Image(rng.standard_normal((8, 8)))
y = Image(rng.standard_normal((2, 2)))
lhs = float(vectorize(decimate(x, 4)) @ vectorize(y))
rhs = float(vectorize(x) @ vectorize(zero_interpolate(y, 4)))
print(f"adjoint identity <Sx, y> = <x, S^T y>: gap {abs(lhs - rhs):.2e}")

psf = Psf.gaussian(3, 1.0)
xb = Image(rng.standard_normal((8, 8)))
yb = Image(rng.standard_normal((8, 8)))
lhs = float(vectorize(blur_cyclic(xb, psf)) @ vectorize(yb))
rhs = float(vectorize(xb) @ vectorize(blur_cyclic_adjoint(yb, psf)))
print(f"adjoint identity <Hx, y> = <x, H^T y>: gap {abs(lhs - rhs):.2e}")

print("\n== dense-matrix cross-check ==")
H, S = dense_operators(psf, (8, 8), 2)
img = Image(rng.uniform(0, 255, (8, 8)))
fast = vectorize(degrade(img, DegradationParams(psf, 2)))
dense = S @ H @ vectorize(img)
print(f"degrade(x) vs S @ H @ vec(x): max |diff| {np.abs(fast - dense).max():.2e}")

print("\n== seeded noise ==")
params = DegradationParams(Psf.average(4), 4, noise_sigma=5.0)
noisy_a = degrade(hr, params, seed=7)
noisy_b = degrade(hr, params, seed=7)
assert np.array_equal(noisy_a.data, noisy_b.data)
print("same seed, same bytes")
big = Image(rng.uniform(0, 255, (128, 128)))
noisy_big = degrade(big, DegradationParams(Psf.average(4), 2, 5.0), seed=7)
clean_big = degrade(big, DegradationParams(Psf.average(4), 2))
print(f"empirical noise std over {clean_big.data.size} px: "
      f"{float((noisy_big.data - clean_big.data).std()):.2f} (target 5.0)")
image_io(out_dir / "lr_noisy.pgm", "save", noisy_a)
print(f"\nwrote {out_dir / 'hr.pgm'} and {out_dir / 'lr_noisy.pgm'}")
