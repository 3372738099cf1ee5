"""Offline synthesis followed by one closed-loop lane-keeping run.

Run from the repository root:

    python demos/lane_keeping.py [artifact.json]

If the artifact file exists it is loaded, otherwise the gains and the
invariant set are synthesized (about half a minute) and saved there.
"""

import sys
from pathlib import Path

import numpy as np

from lpvtube import (compute_metrics, default_config, load_artifact, run_scenario,
                     save_artifact)
from lpvtube.synthesis import compute_rpi, synthesize_gains


def get_artifact(path, cfg, model):
    if Path(path).exists():
        return load_artifact(path, model)
    syn = cfg.synthesis
    gains = synthesize_gains(model, syn.Q_syn * np.eye(model.nx), syn.R_syn)
    S = compute_rpi(model, gains, max_iter=syn.max_iter)
    save_artifact(path, model, gains, S, {})
    return gains, S


def main(path="lane_keeping_artifact.json"):
    cfg = default_config()
    model = cfg.lateral_model()
    gains, S = get_artifact(path, cfg, model)
    print(f"invariant set: {S.n_vertices} vertices, {S.H.n_rows} facets")

    log = run_scenario(cfg, gains, S, model)
    met = compute_metrics(log, model)
    t = log.col("t")
    e_y = log.col("e_y")
    v = log.col("v")
    for k in range(0, len(log), 10):
        print(f"t={t[k]:5.1f} s  v={v[k]:6.2f} m/s  e_y={e_y[k]:+7.3f} m  "
              f"delta={log.col('delta_cmd')[k]:+.4f} rad")
    for key in ("time_to_e_y_band", "settling_time_v", "max_abs_e_y",
                "infeasible_steps", "constraint_violations"):
        print(f"{key}: {met[key]}")
    log.to_csv("lane_keeping.csv")


if __name__ == "__main__":
    main(*sys.argv[1:])
