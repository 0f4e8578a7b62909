"""Distance to the min-norm solution shrinks like 1/sqrt(d).

Runs the sweep preset (5 dimensions x 20 seeds) and writes the aggregate
CSV plus a log-log SVG under demo_out/.
"""

import sys

from relubias.experiments import ExperimentConfig, run_experiment

out = sys.argv[1] if len(sys.argv) > 1 else "demo_out"
man = run_experiment(ExperimentConfig.preset("single_sweep_d", output_dir=out))
s = man.summary
print(f"slope {s['slope']:.3f} (r2 {s['r2']:.4f}), means inside the bound envelope: {s['means_within_envelope']}")
print((man.root / "aggregate.csv").read_text())
print("plot:", man.root / "sweep.svg")
