"""
Prediction stability under realistic shifts
===========================================

Untrained networks have no labels to be right about, so robustness is
measured as consistency: does the argmax survive a translation? Cyclic
shifts are the setting of the guarantees; crops and bilinear shifts move
content out of view, so no model is exactly invariant to them and only
the deviations are compared.
"""

from afvit.harness import GridSpec, adversarial_eval, synth_image, synth_source
from afvit.model import ModelConfig, init_weights

N_IMAGES = 3
grid = GridSpec("half", 2)

print(f"{'model':22s} {'family':9s} {'worst-case':>10s} {'mean dev':>10s} {'max dev':>10s}")
for activation, variant in [("poly", "aft"), ("gelu", "aft"), ("gelu", "aps_vit"), ("gelu", "baseline_vit")]:
    cfg = ModelConfig.desk(activation, variant)
    w = init_weights(cfg, seed=0)
    cyclic = [synth_image(s, 64, 3) for s in range(N_IMAGES)]
    crops = [synth_source(s, 64, margin=2) for s in range(N_IMAGES)]
    bilinear = [synth_source(s, 64, margin=1) for s in range(N_IMAGES)]
    for family, images, g in [
        ("cyclic", cyclic, grid),
        ("crop", crops, GridSpec("integer", 2)),
        ("bilinear", bilinear, GridSpec("integer", 3)),
    ]:
        rep = adversarial_eval(cfg, w, images, g, family)
        print(
            f"{variant + '/' + activation:22s} {family:9s} {rep.worst_case_consistency:10.2f} "
            f"{rep.mean_deviation:10.2e} {rep.max_deviation:10.2e}"
        )

print("\ndeviations are relative logit changes; worst-case = every grid shift keeps the prediction")
