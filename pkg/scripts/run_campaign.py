#!/usr/bin/env python3
"""Run the full comparison campaign and print a one-screen summary.

Usage: python scripts/run_campaign.py [config.yaml]
Defaults to scripts/campaign.yaml.
"""

import json
import sys
import time
from pathlib import Path

import yaml

from dvopt.cli import EXIT_OK, main

STEPS = (
    ["dataset"],
    ["train"],
    ["optimize", "-a", "classical"],
    ["optimize", "-a", "hybrid"],
    ["optimize", "-a", "factor2"],
    ["compare", "--a", "classical", "--b", "hybrid"],
    ["compare", "--a", "classical", "--b", "factor2"],
    ["predict-plot", "--run", "hybrid"],
)


def run(config: str) -> int:
    run_dir = Path(yaml.safe_load(Path(config).read_text())["run_dir"])
    for step in STEPS:
        t0 = time.perf_counter()
        code = main([step[0], "-c", config] + step[1:])
        if code != EXIT_OK:
            print(f"step {' '.join(step)} failed with exit code {code}")
            return code
        print(f"  [{time.perf_counter() - t0:6.1f}s] {' '.join(step)}")

    train = json.loads((run_dir / "train_metrics.json").read_text())
    cmp_h = json.loads((run_dir / "compare_classical_hybrid" / "report.json").read_text())
    cmp_f = json.loads((run_dir / "compare_classical_factor2" / "report.json").read_text())
    scatter = json.loads((run_dir / "predict_plot_hybrid" / "summary.json").read_text())
    t_c = json.loads((run_dir / "classical" / "timing.json").read_text())
    t_h = json.loads((run_dir / "hybrid" / "timing.json").read_text())

    print("\n=== campaign summary ===")
    m = train["metrics"]
    print(f"meta-model ({train['n_train']} train / {train['n_eval']} held out): "
          f"flux R2={m['flux']['r2']:.4f}, "
          f"max-power MAPE={m['kpi_max_power']['mape'] * 100:.2f}%")
    print(f"front quality vs classical: hybrid x{cmp_h['hv_ratio_b_over_a']:.4f}, "
          f"factor2 x{cmp_f['hv_ratio_b_over_a']:.4f} (hypervolume ratio)")
    print(f"evaluation cost: classical {t_c['seconds_per_evaluation'] * 1e3:.2f} ms, "
          f"hybrid {t_h['seconds_per_evaluation'] * 1e3:.2f} ms "
          f"(x{t_c['seconds_per_evaluation'] / t_h['seconds_per_evaluation']:.2f} speedup)")
    print(f"hybrid Pareto designs re-checked with the reference model: "
          f"max-power R2={scatter['max_power']['r2']:.4f} "
          f"over {scatter['n_designs']} designs")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "scripts/campaign.yaml"))
