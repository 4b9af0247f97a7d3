# Recover three constant SIRQ rates from a small synthetic study
# (1000 people, 60 days, prevalence surveys plus confirmed-case counts).
# Run: python demos/05_constant_fit.py

from tvepi.inference import FitSettings, deviance, fit, scenario_objective

bundle, obj = scenario_objective("constant-sirq", seed=0)
print(len(obj.data), "observations")
for rec in obj.data.records[:4]:
    print(f"   {rec.kind.value:12s} day {rec.t:4.0f}  k={rec.k}  m={rec.m}")

report = fit(obj, FitSettings(starts=5))
print()
print("rate    truth   estimate")
for name in ("beta", "gamma", "delta"):
    print(f"{name:6s} {bundle.truth[name].values[0]:6.3f}   {report.paths[name][0]:.4f}")

# the fit should sit at or below the truth's loss (the truth is not the MLE)
print()
print("loss at estimate %.3f, at truth %.3f" % (report.loss, obj(obj.encoding.encode(bundle.truth))))
print("deviance %.1f on %d observations" % (deviance(obj, report.result.x), len(obj.data)))
for k, v in report.reproduction_numbers().items():
    print(f"{k:24s} {v:.3f}")
print("restart trace:", [round(v, 4) for _, v in report.result.trace])
