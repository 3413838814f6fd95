"""
Where a cluster tracker goes wrong
==================================

The cluster tracker follows any events close to its estimate.  With the
camera still it works, but once the background starts producing events it
gets dragged off the puck and never recovers.
"""

import numpy as np

from pucktrack.cluster import ClusterState, run_cluster
from pucktrack.evaluation import evaluate, tracker_for_scene
from pucktrack.pipeline import PipelineConfig, reports_to_array, run
from pucktrack.scene import scenario, simulate
from pucktrack.tracker import TRACKING

for kind in ("static", "moving"):
    cfg = scenario(kind, seed=22, duration_s=5.0)
    sim = simulate(cfg)
    reports = reports_to_array(run(sim.events, tracker_for_scene(cfg), PipelineConfig())[0])
    # start the cluster where the ring detector first locked on
    first = reports[reports["mode"] == TRACKING][0]
    init = ClusterState.seeded(first["x"], first["y"], cfg.size_model, int(first["t"]))
    cluster, final = run_cluster(sim.events, init)
    thr = 4.0 if kind == "moving" else 3.5
    p = evaluate(reports, sim.ground_truth, thr)
    c = evaluate(cluster, sim.ground_truth, thr)
    print(f"{kind:>7}: ring tracker median {p.median:.2f} px | cluster median {c.median:.2f} px, "
          f"{c.valid_pct:.0f}% valid, ends at ({final.x:.0f}, {final.y:.0f})")
    err = c.errors
    lost = np.argmax(err > 3 * thr) if np.any(err > 3 * thr) else None
    if lost is not None:
        print(f"{'':>9}cluster first strays past {3 * thr:.0f} px after {lost} ms")
