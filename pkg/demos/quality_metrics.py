"""PSNR, SSIM, and the neighborhood preservation rate.

The first two score reconstructions against ground truth.  The third measures
how well nearest-neighbor structure survives degradation: for each item, how
many of its K nearest neighbors in low-resolution space remain among its K
nearest in high-resolution space.  Whole images preserve neighborhoods far
better than small patches, which is the motivation for coding entire faces.
"""

import numpy as np

from facehall import DegradationParams, Image, Psf, bicubic_upscale, degrade, npr, psnr, ssim, vectorize

rng = np.random.default_rng(4)


def smooth_field(dims, cell=6):
    h, w = dims
    coarse = rng.standard_normal((h // cell + 3, w // cell + 3))
    up = bicubic_upscale(Image(coarse), cell).data[:h, :w]
    lo, hi = up.min(), up.max()
    return (up - lo) / (hi - lo + 1e-12) * 170.0 + 40.0


print("== PSNR basics ==")
img = smooth_field((32, 32))
print(f"identical images      : {psnr(img, img)}")
print(f"uniform +1 difference : {psnr(img, img + 1):.4f} dB (= 20 log10 255)")
for amp in (2, 8, 32):
    noisy = img + rng.normal(0, amp, img.shape)
    print(f"noise std {amp:2d}          : {psnr(img, noisy):8.2f} dB")

print("\n== SSIM basics ==")
print(f"identical             : {ssim(img, img):.4f}")
print(f"+10 luminance shift   : {ssim(img, img + 10):.4f}")
print(f"mild blur             : "
      f"{ssim(img, np.asarray(degrade(Image(img), DegradationParams(Psf.gaussian(5, 1.0), 1)).data)):.4f}")
print(f"inverted              : {ssim(img, 255 - img):.4f}")

print("\n== neighborhood preservation under degradation ==")
hr_dims, d = (32, 24), 4
deg = DegradationParams(Psf.average(4), d, 0.0)
n_items = 60
hr_images = [smooth_field(hr_dims) for _ in range(n_items)]
hr_vectors = np.stack([vectorize(Image(im)) for im in hr_images])
lr_vectors = np.stack([vectorize(degrade(Image(im), deg)) for im in hr_images])

print(f"{n_items} items, K=10")
print(f"whole images          : NPR {npr(lr_vectors, hr_vectors, 10):.3f}")

# small patches from the same images: neighborhoods decay
patch = 6
hr_patches, lr_patches = [], []
for im in hr_images:
    r = int(rng.integers(0, hr_dims[0] - patch))
    c = int(rng.integers(0, hr_dims[1] - patch))
    hr_patches.append(im[r : r + patch, c : c + patch].ravel())
    lr_im = degrade(Image(im), deg).data
    lr_patches.append(
        lr_im[r // d : r // d + patch // d + 1, c // d : c // d + patch // d + 1].ravel()
    )
# pad ragged LR patches to a common length
L = max(len(p) for p in lr_patches)
lr_pad = np.stack([np.pad(p, (0, L - len(p))) for p in lr_patches])
print(f"{patch}x{patch} patches          : NPR {npr(lr_pad, np.stack(hr_patches), 10):.3f}")
print("larger supports preserve neighbor structure better")
