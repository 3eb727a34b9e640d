"""
False positives from a shared watermark, and their removal
===========================================================

Two independent sensors develop their images through the same pipeline, which
adds one fixed 128x128 dither tile just before 16-to-8-bit quantization. The
tile leaks into every fingerprint, so a plain fingerprint of sensor A also
"matches" photos from sensor B. Cancelling the average watermark fixes this.
"""

import numpy as np

from prnu_nua import attribute, fit_source, residual
from prnu_nua.synth import render_scenario, two_sensor_scenario

# A small version of the acceptance scenario: 512x512, 12 flat references and
# 5 textured test photos per sensor.
scenario = two_sensor_scenario(shared_watermark=True, n_ref=12, n_test=5)
sensors = render_scenario(scenario)
test_residuals = {sd.spec.name: [residual(im) for im in sd.tests] for sd in sensors}

for mode in ("plain", "residual_cancel", "spatial_cancel"):
    models = {sd.spec.name: fit_source(sd.references, mode=mode) for sd in sensors}
    print(f"\n{mode}  (|w_hat| = {models['A'].watermark.norm:.1f})")
    for fp_name, model in models.items():
        for sd in sensors:
            pces = [attribute(im, model.fingerprint, test_residual=w).pce
                    for im, w in zip(sd.tests, test_residuals[sd.spec.name])]
            tag = "match   " if fp_name == sd.spec.name else "mismatch"
            print(f"  fingerprint {fp_name} vs photos of {sd.spec.name} [{tag}]  "
                  f"PCE median {np.median(pces):10.1f}  above 60: {sum(p > 60 for p in pces)}/{len(pces)}")

# Expected: with "plain", mismatching pairs land well above 60. With either
# cancellation mode they drop to around 20 while matches stay in the tens of thousands.
