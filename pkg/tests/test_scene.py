import math

import numpy as np
import pytest

from pucktrack.events import validate_events
from pucktrack.kernel import SizeModel
from pucktrack.scene import (
    SceneConfig,
    SceneConfigError,
    puck_trajectory,
    reflect_1d,
    render_silhouette_events,
    scenario,
    silhouette_change,
    simulate,
)

QUIET = dict(noise_rate=0.0, paddle=False, jitter_deg=0.0, stars=())


def disc(cx, cy, r, w=80, h=80):
    ys, xs = np.mgrid[0:h, 0:w]
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


def test_no_motion_no_events():
    cfg = SceneConfig(puck_vel=(0.0, 0.0), duration_s=0.2, **QUIET)
    sim = simulate(cfg)
    assert len(sim.events) == 0
    assert len(sim.ground_truth) == 200
    assert np.all(sim.ground_truth["cx"] == 320.0) and np.all(sim.ground_truth["cy"] == 250.0)


def test_straight_line_kinematics():
    cfg = SceneConfig(puck_pos=(150.0, 250.0), puck_vel=(300.0, 0.0), duration_s=1.0, **QUIET)
    gt = simulate(cfg).ground_truth
    expect = 150.0 + 300.0 * gt["t"] * 1e-6
    assert np.allclose(gt["cx"], expect, rtol=0, atol=1e-9)
    assert np.all(gt["cy"] == 250.0)


def test_elastic_bounce_keeps_speed():
    cfg = SceneConfig(puck_pos=(500.0, 250.0), puck_vel=(700.0, 130.0), restitution=1.0, duration_s=0.5, **QUIET)
    _, pos, vel = puck_trajectory(cfg)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    assert np.any(np.diff(np.sign(vel[:, 0])) != 0)  # the bounce happened
    assert np.abs(speed - math.hypot(700, 130)).max() <= 1e-9
    assert pos[:, 0].max() <= cfg.field[2]


def test_restitution_scales_normal_component():
    pos, vel, n = reflect_1d(105.0, 10.0, 0.0, 100.0, 0.5)
    assert (pos, vel, n) == (97.5, -5.0, 1)


def test_identical_poses_no_events():
    assert len(render_silhouette_events((40, 40, 10, 10), (40, 40, 10, 10), 1000)) == 0


def test_one_pixel_shift_is_set_difference():
    xs, ys, entered = silhouette_change((40, 40, 10, 10), (41, 40, 10, 10), 80, 80)
    a, b = disc(40, 40, 10), disc(41, 40, 10)
    want = a ^ b
    got = np.zeros_like(want)
    got[ys, xs] = True
    assert np.array_equal(got, want)
    assert np.all(entered == b[ys, xs])
    # leading crescent on the right, trailing on the left
    assert xs[entered].min() > 40 and xs[~entered].max() < 41


def test_disjoint_discs_give_twice_the_area():
    ev = render_silhouette_events((100, 100, 10, 10), (300, 100, 10, 10), 1000, width=640, height=480)
    area = np.count_nonzero(disc(40, 40, 10))
    assert len(ev) == 2 * area
    assert abs(len(ev) - 2 * math.pi * 100) / (2 * math.pi * 100) < 0.03


def test_event_timestamps_inside_step():
    ev = render_silhouette_events((100, 100, 10, 10), (103, 101, 10, 10), 1000, t0=5000, density=2.0)
    assert ev["t"].min() > 5000 and ev["t"].max() <= 6000


def test_determinism():
    cfg = scenario("moving", 3, 0.3)
    a, b = simulate(cfg), simulate(cfg)
    assert a.events.tobytes() == b.events.tobytes()
    assert a.ground_truth.tobytes() == b.ground_truth.tobytes()


def test_pattern_events_only_with_jitter():
    still = simulate(scenario("moving", 4, 0.3, jitter_deg=0.0))
    moving = simulate(scenario("moving", 4, 0.3))
    assert still.n_pattern_events == 0
    assert moving.n_pattern_events > 0


def test_stream_is_sorted_and_valid(short_static):
    validate_events(short_static.events, 640, 480)
    assert short_static.header.event_count == len(short_static.events)
    assert len(short_static.ground_truth) == 2000


def test_events_hug_the_true_outline():
    cfg = SceneConfig(duration_s=0.5, puck_vel=(550.0, -320.0), **QUIET)
    sim = simulate(cfg)
    ev, gt = sim.events, sim.ground_truth
    lo = np.searchsorted(ev["t"], np.concatenate([[0], gt["t"][:-1]]), side="right")
    hi = np.searchsorted(ev["t"], gt["t"], side="right")
    worst = 0.0
    for s in range(0, len(gt), 7):
        e = ev[lo[s] : hi[s]]
        g = gt[s]
        r = np.sqrt(((e["x"] - g["cx"]) / g["a"]) ** 2 + ((e["y"] - g["cy"]) / g["b"]) ** 2)
        # |r - 1| * max(a, b) bounds the distance to the boundary from above
        if len(e):
            worst = max(worst, float(np.max(np.abs(r - 1) * max(g["a"], g["b"]))))
    assert 0 < worst <= 2.0


def test_event_count_scales_with_density():
    one = simulate(scenario("static", 9, 0.5, paddle=False, noise_rate=0.0)).n_puck_events
    three = simulate(scenario("static", 9, 0.5, paddle=False, noise_rate=0.0, edge_density=3.0)).n_puck_events
    assert three == 3 * one


def test_noise_rate():
    sim = simulate(SceneConfig(puck_vel=(0.0, 0.0), duration_s=0.5, stars=(), paddle=False, noise_rate=0.05))
    expect = 0.05 * 640 * 480 * 0.5
    assert abs(sim.n_noise_events - expect) < 5 * math.sqrt(expect)


@pytest.mark.parametrize(
    "kw",
    [
        dict(duration_s=0.0),
        dict(restitution=0.0),
        dict(restitution=1.2),
        dict(puck_vel=(5000.0, 0.0)),
        dict(puck_pos=(10.0, 10.0)),
        dict(step_us=0),
    ],
)
def test_bad_configs(kw):
    with pytest.raises(SceneConfigError):
        SceneConfig(**kw)


def test_unknown_preset():
    with pytest.raises(SceneConfigError):
        scenario("underwater", 1)


def test_size_model_from_tuple():
    cfg = SceneConfig(size_model=(1, 0, 0, 2, 0, 0))
    assert cfg.size_model == SizeModel(1, 0, 0, 2, 0, 0)
