"""
What 16-to-8-bit quantization does to a sub-LSB watermark
=========================================================

The watermark lives in the 16-bit domain with an amplitude of half an 8-bit
step. It only survives where it pushes a pixel across a rounding boundary, so
the pattern that reaches the 8-bit image depends on the underlying level.
"""

import numpy as np

from prnu_nua.core import normalized_correlation, tile_average
from prnu_nua.synth import develop, make_pipeline, quantize16to8

print("382 ->", quantize16to8(382), "   638 ->", quantize16to8(638), "   65535 ->", quantize16to8(65535))

pipe = make_pipeline(seed=7, amplitude=128.0)
flat = lambda v: np.full((128, 128), float(v))

a = develop(flat(382), pipe).data
b = develop(flat(638), pipe).data
print(f"levels 382 and 638: {np.sum(b - a != 1)} of {a.size} pixels differ from a plain +1 shift, "
      f"correlation {normalized_correlation(a, b):.4f}")

# Levels that are a whole 8-bit step apart (257 in 16-bit units) see the same pattern;
# levels 256 apart do not, even though they agree modulo 256.
c = develop(flat(382 + 257), pipe).data
print("382 vs 639 (one 8-bit step apart): identical up to +1:", np.array_equal(c - a, np.ones_like(a)))

# How much of the tile survives at a mid-gray level, over many levels.
levels = np.arange(20000, 20000 + 257 * 8, 37)
corrs = [normalized_correlation(develop(flat(v), pipe).data, pipe.watermark16) for v in levels]
print(f"correlation of the 8-bit output with the 16-bit tile across {len(levels)} levels: "
      f"min {min(corrs):.2f}, median {np.median(corrs):.2f}, max {max(corrs):.2f}")

# JPEG compression reshapes what is left of the tile. On a flat image the coarser
# tables can remove it entirely (the average tile becomes constant, correlation 0).
img = develop(np.full((512, 512), 30000.0), pipe)
for q in (100, 90, 80):
    jp = develop(np.full((512, 512), 30000.0), make_pipeline(seed=7, amplitude=128.0, jpeg_quality=q))
    print(f"QF {q:3d}: tile correlation with the lossless output "
          f"{normalized_correlation(tile_average(jp, 128), tile_average(img, 128)):.3f}")
