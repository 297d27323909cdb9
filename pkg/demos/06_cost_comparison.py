"""Parameter and FLOP counts of the interlaced-mask fusion against the pairwise cross-modal baseline."""

from gsifn.cost import cost_report
from gsifn.model import ModelConfig

print(f"{'d':>4} {'heads':>5} {'seg':>10} {'params ratio':>13} {'FLOP ratio':>11}")
for d in (32, 128):
    for heads in (2, 4):
        for seg in ((8, 8, 8), (5, 38, 50)):
            g = cost_report(ModelConfig(model="gsifn", d_model=d, heads=heads), seg)
            m = cost_report(ModelConfig(model="mult", d_model=d, heads=heads), seg)
            p = m.params_breakdown["fusion"] / g.params_breakdown["fusion"]
            f = m.flops_breakdown["fusion"]["total"] / g.flops_breakdown["fusion"]["total"]
            print(f"{d:>4} {heads:>5} {'x'.join(map(str, seg)):>10} {p:>13.2f} {f:>11.2f}")

report = cost_report(ModelConfig(model="gsifn", d_model=128, heads=4), (20, 30, 30))
print(f"\nfull model at d=128: {report.params:,} parameters, {report.flops:,} FLOPs per sample, "
      f"{report.transformers} fusion transformers")
print("convention:", report.convention)
