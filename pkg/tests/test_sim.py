import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from rf_fusion.geometry import bistatic_delay_bin, build_grid
from rf_fusion.rti import RtiStream, calibrate, rti_frames
from rf_fusion.sim import (
    CirModel,
    RssModel,
    Scenario,
    generate_cir_stream,
    generate_rss_arrays,
    generate_rss_stream,
    ground_truth,
    motel_room,
    static_cir_profile,
    study_room,
    target_bin,
)

NODES = [[-0.3, 0.5], [-0.3, 1.0], [-0.3, 1.5], [2.3, 0.5], [2.3, 1.0], [2.3, 1.5]]
QUIET = dict(noise_std=0.0, drift_std=0.0, deep_fade_std=0.0, quantize=False)


def scenario(waypoints=(), rss=None, cir=None, **kw):
    base = dict(name="unit", room_bounds=(0.0, 0.0, 2.0, 2.0), rss_nodes=NODES,
                uwb_tx=[-0.5, 0.6], uwb_rx=[-0.5, 1.4], waypoints=[list(p) for p in waypoints],
                calibration_s=2.0, duration=8.0)
    base.update(kw)
    return Scenario(**base, rss=RssModel(**(rss or {})), cir=CirModel(**(cir or {})))


def test_no_target_zero_noise_equals_static_means():
    a = generate_rss_arrays(scenario(rss=QUIET))
    assert np.array_equal(a.rss, np.broadcast_to(a.static_mean, a.rss.shape))
    q = generate_rss_arrays(scenario(rss={**QUIET, "quantize": True}))
    assert np.array_equal(q.rss, np.broadcast_to(np.round(q.static_mean), q.rss.shape))


def test_target_on_link_line_drops_by_shadow_depth():
    # the target walks along the y = 1 line joining nodes 1 and 4
    scn = scenario([(0.5, 1.0), (1.5, 1.0)], rss=QUIET, calibration_s=0.0)
    a = generate_rss_arrays(scn)
    drop = a.static_mean[None] - a.rss
    line = a.links.index((1, 4))
    assert np.all(drop[:, :, line] == scn.rss.shadow_depth)
    # every other link drops exactly when its ellipse holds the target
    nodes = np.array(NODES)
    for r in range(0, drop.shape[0], 5):
        for c in range(drop.shape[1]):
            p = np.array(scn.position(float(a.times[r, c, 0])))
            for l, (i, j) in enumerate(a.links):
                ex = np.hypot(*(nodes[i] - p)) + np.hypot(*(nodes[j] - p)) - np.hypot(*(nodes[i] - nodes[j]))
                assert drop[r, c, l] == (scn.rss.shadow_depth if ex < scn.rss.shadow_excess else 0.0)


def test_calibration_recovers_static_mean():
    sigma = 2.0
    scn = scenario(rss={**QUIET, "noise_std": sigma}, duration=40.0, seed=5)
    a = generate_rss_arrays(scn)
    table = calibrate(a.samples())
    z = []
    for c, ch in enumerate(a.channels):
        for l, link in enumerate(a.links):
            n = table.counts[(link, ch)]
            z.append((table.mean(link, ch) - a.static_mean[c, l]) / (sigma / np.sqrt(n)))
    z = np.abs(z)
    # 3-sigma is exceeded by 0.27% of estimates in expectation
    assert np.mean(z > 3) <= 0.01


def test_cir_target_at_its_bistatic_bin():
    p = (1.0, 1.0)
    scn = scenario([p, (1.0, 1.0 + 1e-9)], calibration_s=0.0, duration=20.0)
    frames = generate_cir_stream(scn)
    excess = np.mean([f.energies for f in frames], axis=0) - static_cir_profile(scn)
    assert int(np.argmax(excess)) + 1 == target_bin(scn, p)


def test_cir_without_target_stays_at_profile():
    scn = scenario(cir={"snr_db": 30.0}, duration=20.0)
    R = np.array([f.energies for f in generate_cir_stream(scn)])
    prof = static_cir_profile(scn)
    s = scn.cir.noise_std
    # energies are floored at zero: E[max(X, 0)] for X ~ N(mu, s^2)
    expected = prof * norm.cdf(prof / s) + s * norm.pdf(prof / s)
    assert np.all(np.abs(R.mean(axis=0) - expected) <= 5 * s / np.sqrt(len(R)))


def test_same_seed_is_bit_identical():
    a = study_room(seed=3, duration=10.0, calibration_s=2.0)
    b = study_room(seed=3, duration=10.0, calibration_s=2.0)
    ra, rb = generate_rss_stream(a), generate_rss_stream(b)
    assert ra == rb
    ca, cb = generate_cir_stream(a), generate_cir_stream(b)
    assert all(x.t == y.t and np.array_equal(x.energies, y.energies) for x, y in zip(ca, cb))
    assert generate_rss_stream(a.with_seed(4)) != ra


def test_stream_sizes_follow_rates():
    scn = scenario(duration=8.0)
    rss = generate_rss_stream(scn)
    assert len(rss) == 20 * scn.rss.n_channels * 15
    assert len(generate_cir_stream(scn)) == 80
    assert all(a.t <= b.t for a, b in zip(rss, rss[1:]))


@pytest.mark.parametrize("make", [study_room, motel_room])
def test_ground_truth_k_star_matches_geometry(make):
    scn = make(seed=0, duration=60.0)
    gt = ground_truth(scn)
    dep = scn.deployment
    grid = build_grid(dep, 0.15)
    for p, k in zip(gt.xy[::7], gt.k_star[::7]):
        if np.isnan(p[0]):
            assert k == 0
            continue
        assert k == bistatic_delay_bin(grid, dep, grid.voxel_of(p), scn.cir.sampling_period, scn.cir.los_bin)


def test_no_phantom_attenuation_without_target():
    sigma = 1.0
    scn = scenario(rss={**QUIET, "noise_std": sigma}, duration=40.0, calibration_s=20.0, seed=2)
    samples = generate_rss_stream(scn)
    calib = [s for s in samples if s.t < scn.calibration_s]
    table = calibrate(calib)
    links = sorted({s.link for s in samples})
    stream = RtiStream(links, [1, 2, 3, 4], "ab", calibration=table)
    y = np.array([f.y for f in rti_frames([s for s in samples if s.t >= scn.calibration_s], stream)])
    # y_l averages m = 3 channel deviations, each with variance sigma^2 (1 + 1/n)
    n = min(table.counts.values())
    sd = sigma * np.sqrt((1 + 1 / n) / 3)
    assert np.mean(np.abs(y) > 4 * sd) < 1e-3


def test_scenario_validation():
    with pytest.raises(ValueError):
        scenario([(5.0, 5.0), (1.0, 1.0)])
    with pytest.raises(ValueError):
        scenario([(1.0, 1.0)])
    with pytest.raises(ValueError):
        scenario(calibration_s=10.0, duration=8.0)
    with pytest.raises(ValueError):
        Scenario.from_dict({**scenario().to_dict(), "colour": "red"})
    assert Scenario.from_dict(scenario().to_dict()) == scenario()


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 200.0))
def test_position_stays_in_room(t):
    scn = study_room(seed=0)
    p = scn.position(t)
    if t < scn.calibration_s:
        assert p is None
    else:
        xmin, ymin, xmax, ymax = scn.room_bounds
        assert xmin - 1e-9 <= p[0] <= xmax + 1e-9 and ymin - 1e-9 <= p[1] <= ymax + 1e-9
