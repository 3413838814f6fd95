import math

import numpy as np
import pytest

from pucktrack.eros import ErosSurface, Roi
from pucktrack.kernel import KernelBank, SizeModel, build_kernel
from pucktrack.tracker import (
    DETECTING,
    TRACKING,
    PatchTooSmallError,
    PuckTracker,
    TrackerConfig,
    TrackerState,
    argmax_first,
    convolve,
    gaussian_prior,
)

FLAT = SizeModel(8.0, 0.0, 0.0, 6.0, 0.0, 0.0)


def quad_loop(patch, w):
    kh, kw = w.shape
    oh, ow = patch.shape[0] - kh + 1, patch.shape[1] - kw + 1
    out = np.zeros((oh, ow))
    for i in range(oh):
        for j in range(ow):
            s = 0.0
            for u in range(kh):
                for v in range(kw):
                    s += w[u, v] * patch[i + u, j + v]
            out[i, j] = s
    return out


def ring_image(kernel, shape, cx, cy):
    img = np.zeros(shape)
    ring = np.argwhere(kernel.weights == 1.0)
    img[ring[:, 0] + cy - kernel.half_height, ring[:, 1] + cx - kernel.half_width] = 255
    return img


def stamp(surface, kernel, cx, cy):
    img = ring_image(kernel, surface.cells.shape, cx, cy)
    surface.cells[img > 0] = 255


def make_tracker(**cfg):
    bank = KernelBank((7, 9), (5, 7))
    return PuckTracker(TrackerConfig(**cfg), FLAT, bank)


# -- convolve ---------------------------------------------------------------


def test_zero_patch_zero_response():
    k = build_kernel(5, 4)
    assert not convolve(np.zeros((30, 30)), k).scores.any()


def test_own_ring_scores_one_at_its_alignment():
    k = build_kernel(9, 6)
    patch = ring_image(k, (k.height + 10, k.width + 10), k.half_width + 4, k.half_height + 7)
    r = convolve(patch, k, origin=(100, 50))
    i, j = argmax_first(r.scores)
    assert r.scores[i, j] == pytest.approx(1.0, abs=1e-12)
    assert r.frame_coords(i, j) == (100 + k.half_width + 4, 50 + k.half_height + 7)


def test_matches_quadruple_loop(rng):
    for _ in range(10):
        a, b = rng.uniform(2, 15, 2)
        k = build_kernel(a, b)
        patch = rng.uniform(0, 255, (k.height + rng.integers(1, 8), k.width + rng.integers(1, 8)))
        got = convolve(patch, k).scores
        assert np.abs(got - quad_loop(patch, k.weights) / k.norm).max() <= 1e-9


def test_patch_smaller_than_kernel():
    k = build_kernel(6, 6)
    with pytest.raises(PatchTooSmallError):
        convolve(np.zeros((k.height - 1, k.width + 5)), k)


# -- prior ------------------------------------------------------------------


def test_prior_values():
    w = 17.0
    g = gaussian_prior((20, 10), 0.5 * w, 0.5 * w, (0, 0), (21, 61))
    assert g[10, 20] == 1.0
    assert g[10, 20 + 17] == pytest.approx(math.exp(-2), rel=1e-12)
    assert g.max() == 1.0


def test_prior_symmetry():
    g = gaussian_prior((15, 12), 4.0, 2.5, (0, 0), (25, 31))
    assert np.allclose(g, g[::-1, ::-1], rtol=0, atol=1e-15)


# -- detect -----------------------------------------------------------------


def test_empty_surface_stays_detecting():
    tr = make_tracker()
    st = tr.detect(tr.initial_state(), ErosSurface(640, 480))
    assert st.mode == DETECTING and st.det_count == 0


def test_ring_in_detection_zone_detected():
    tr = make_tracker(det_persistence=1)
    s = ErosSurface(640, 480)
    stamp(s, tr.detection_kernel, 300, 240)
    st = tr.detect(tr.initial_state(), s)
    assert st.mode == TRACKING
    assert math.hypot(st.x - 300, st.y - 240) <= 1.0
    assert st.roi_t.w == round(1.5 * st.kernel.width)
    r = st.roi_t
    assert r.x <= st.x < r.x + r.w and r.y <= st.y < r.y + r.h


def test_ring_outside_detection_zone_ignored():
    tr = make_tracker(det_persistence=1)
    s = ErosSurface(640, 480)
    stamp(s, tr.detection_kernel, 80, 60)
    assert tr.detect(tr.initial_state(), s).mode == DETECTING


def test_persistence_counts_consecutive_passes():
    tr = make_tracker(det_persistence=3)
    s = ErosSurface(640, 480)
    stamp(s, tr.detection_kernel, 300, 240)
    st = tr.initial_state()
    modes = []
    for _ in range(3):
        st = tr.detect(st, s)
        modes.append((st.mode, st.det_count))
    assert modes == [(DETECTING, 1), (DETECTING, 2), (TRACKING, 3)]


# -- track ------------------------------------------------------------------


def tracking_at(tr, x, y):
    k, _ = tr._kernel_at(x, y)
    return TrackerState(TRACKING, float(x), float(y), tr.roi_for(x, y, k), k)


def test_stationary_ring():
    tr = make_tracker()
    s = ErosSurface(640, 480)
    st = tracking_at(tr, 200, 150)
    stamp(s, st.kernel, 200, 150)
    new, rep = tr.track_pass(st, s, 42)
    assert math.hypot(new.x - 200, new.y - 150) <= 1.0
    assert rep.t_us == 42 and rep.mode == TRACKING
    resp = tr.response(st, s)
    assert rep.score >= 0.99 * resp.scores.max()


def test_near_ring_wins_over_equal_far_ring():
    tr = make_tracker()
    s = ErosSurface(640, 480)
    st = tracking_at(tr, 200, 150)
    off = int(round(0.9 * 2 * st.kernel.a))
    stamp(s, st.kernel, 200, 150)
    stamp(s, st.kernel, 200 + off, 150)
    resp = tr.response(st, s)
    # prior-weighted oracle: the far peak is scaled by exp(-1.62)-ish
    g = gaussian_prior((200, 150), st.kernel.a, st.kernel.b, (resp.origin_x, resp.origin_y), resp.shape)
    assert g[150 - resp.origin_y, 200 - resp.origin_x] / math.exp(-(off**2) / (2 * st.kernel.a**2)) > 4
    new, _ = tr.track_pass(st, s)
    assert math.hypot(new.x - 200, new.y - 150) <= 1.0


def test_uniform_response_keeps_previous_position():
    from pucktrack.tracker import ResponseMap

    tr = make_tracker()
    st = tracking_at(tr, 321, 207)
    resp = ResponseMap(np.full((23, 31), 0.3), 300, 190)
    i, j = tr.select_peak(st, resp)
    assert resp.frame_coords(i, j) == (321, 207)


def test_locality_bound(rng):
    tr = make_tracker()
    s = ErosSurface(640, 480)
    st = tracking_at(tr, 320, 240)
    rho = tr.config.argmax_fraction
    for _ in range(40):
        s.cells[:] = rng.integers(0, 256, s.cells.shape, dtype=np.uint8)
        prev = st
        st, _ = tr.track_pass(st, s)
        assert abs(st.x - prev.x) <= rho / 2 * prev.roi_t.w
        assert abs(st.y - prev.y) <= rho / 2 * prev.roi_t.h


def test_scale_invariance_of_track_pass():
    tr = make_tracker()
    a = ErosSurface(640, 480)
    b = ErosSurface(640, 480)
    k, _ = tr._kernel_at(250, 200)
    stamp(a, k, 253, 198)
    b.cells[:] = a.cells // 5
    st = tracking_at(tr, 250, 200)
    pa, _ = tr.track_pass(st, a)
    pb, _ = tr.track_pass(st, b)
    assert (pa.x, pa.y) == (pb.x, pb.y)


def test_deterministic():
    tr = make_tracker()
    s = ErosSurface(640, 480)
    s.cells[:] = np.random.default_rng(3).integers(0, 256, s.cells.shape, dtype=np.uint8)
    st = tracking_at(tr, 250, 200)
    assert tr.track_pass(st, s) == tr.track_pass(st, s)


def test_loss_after_persistent_low_scores():
    tr = make_tracker(lost_persistence=4)
    s = ErosSurface(640, 480)
    st = tracking_at(tr, 300, 240)
    modes = []
    for _ in range(5):
        st, rep = tr.step(st, s)
        modes.append(st.mode)
    assert modes == [TRACKING] * 3 + [DETECTING, DETECTING]


def test_loss_disabled_keeps_tracking():
    tr = make_tracker(lost_persistence=2, redetect=False)
    s = ErosSurface(640, 480)
    st = tracking_at(tr, 300, 240)
    for _ in range(6):
        st, _ = tr.track_pass(st, s)
    assert st.mode == TRACKING and st.lost_count == 6


def test_transitions_only_through_counters(short_static):
    tr = make_tracker()
    s = ErosSurface(640, 480)
    st = tr.initial_state()
    ev = short_static.events
    for chunk in np.array_split(ev, 400):
        s.update_events(chunk)
        prev = st
        st, _ = tr.step(st, s)
        if prev.mode == DETECTING and st.mode == TRACKING:
            assert st.det_count == tr.config.det_persistence
        if prev.mode == TRACKING and st.mode == DETECTING:
            assert prev.lost_count == tr.config.lost_persistence - 1


def test_roi_clipped_at_border_reports_loss():
    tr = make_tracker(lost_persistence=1)
    s = ErosSurface(640, 480)
    st = tracking_at(tr, 1, 1)
    st, rep = tr.track_pass(st, s)
    assert rep.score == 0.0 and st.mode == DETECTING


@pytest.mark.parametrize(
    "kw",
    [
        dict(det_threshold=0.1, lost_threshold=0.2),
        dict(lost_threshold=0.0),
        dict(det_threshold=1.5),
        dict(roi_scale=1.0),
        dict(argmax_fraction=1.0),
        dict(det_persistence=0),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrackerConfig(**kw)


def test_roi_d_from_tuple():
    assert TrackerConfig(roi_d=(1, 2, 30, 40)).roi_d == Roi(1, 2, 30, 40)
