import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogbench.atmosphere import FogCondition, FogType
from fogbench.errors import DomainError, ValidationError
from fogbench.gated import CHAMBER_SCHEME, GatingScheme, suppression_ratio
from fogbench.metrics import entropy
from fogbench.scene import (
    DEFAULT_PARAMS,
    NOISELESS,
    STANDARD_TARGETS,
    FrameBuffer,
    LayoutItem,
    NoiseModel,
    OncomingSource,
    ReflectanceTarget,
    Scenario,
    SensorKind,
    SensorModel,
    SimulationParams,
    TargetTrace,
    bin_by_depth,
    corona_intensity,
    default_layout,
    illuminated_region,
    quantize,
    render_frame,
    render_series,
    simulate_sweep,
    sweep_depths,
)

PASSIVE = Scenario.passive()
ONCOMING = Scenario.oncoming_car()
STANDARD = SensorModel.standard()
GATED = SensorModel.gated()
SMALL_STD = STANDARD.scaled(0.1)
SMALL_GATED = GATED.scaled(0.15)


def fog(v, kind=FogType.RADIATION):
    return FogCondition(kind, v)


class TestTypes:
    def test_target_defaults(self):
        assert [t.rho for t in STANDARD_TARGETS] == [0.05, 0.5, 0.9]
        assert STANDARD_TARGETS[0].mount_height_m == 1.6
        with pytest.raises(DomainError):
            ReflectanceTarget(1.2)

    def test_scenario_invariants(self):
        assert (PASSIVE.chamber_length_m, PASSIVE.chamber_width_m, PASSIVE.chamber_height_m) == (30, 5.5, 2)
        assert ONCOMING.oncoming_source.angular_sigma_rad == 0.1
        with pytest.raises(DomainError):
            Scenario(kind="oncoming_car")
        with pytest.raises(DomainError):
            Scenario(kind="passive", oncoming_source=OncomingSource())
        with pytest.raises(DomainError):
            Scenario.passive(chamber_length_m=0)

    def test_sensor_invariants(self):
        assert STANDARD.resolution == (1980, 1088) and STANDARD.bit_depth == 12
        assert GATED.resolution == (1280, 960) and GATED.gating == CHAMBER_SCHEME
        with pytest.raises(DomainError):
            SensorModel(SensorKind.GATED)
        with pytest.raises(DomainError):
            SensorModel(SensorKind.STANDARD, gating=CHAMBER_SCHEME)
        with pytest.raises(DomainError):
            SensorModel.standard(bit_depth=17)

    def test_scaled_sensor(self):
        assert STANDARD.scaled(0.25).resolution == (495, 272)

    def test_noise_model(self):
        n = NoiseModel(0.01, 1e-4)
        assert n.std(0.0) == pytest.approx(0.01)
        assert n.std(1.0) == pytest.approx(math.sqrt(1e-4 + 1e-4))
        assert not NOISELESS.enabled
        with pytest.raises(DomainError):
            NoiseModel(-1.0)

    def test_frame_buffer_validation(self):
        with pytest.raises(DomainError):
            FrameBuffer(2, 2, 8, np.zeros((3, 2), dtype=np.uint16))
        with pytest.raises(DomainError):
            FrameBuffer(2, 2, 8, np.full((2, 2), 256, dtype=np.uint16))
        with pytest.raises(DomainError):
            FrameBuffer(2, 2, 8, np.zeros((2, 2)))


class TestBinning:
    def test_two_point_example(self):
        b = bin_by_depth([10.1, 10.4], [0.2, 0.4], 1.0)
        assert list(b.center_m) == [10.5]
        assert b.mean[0] == pytest.approx(0.3)
        assert b.std[0] == pytest.approx(math.sqrt(0.02), rel=1e-12)
        assert list(b.count) == [2]

    def test_single_sample_bins(self):
        b = bin_by_depth([1.2, 3.7], [0.5, 0.6])
        np.testing.assert_array_equal(b.std, 0.0)
        np.testing.assert_array_equal(b.mean, [0.5, 0.6])

    def test_empty_bins_omitted(self):
        b = bin_by_depth([0.5, 5.5], [1.0, 2.0])
        assert list(b.center_m) == [0.5, 5.5]

    def test_exact_edges(self):
        # 0.1 * 60 == 6.000000000000001; must land in bin [6, 7)
        b = bin_by_depth(np.round(np.arange(50, 71) * 0.1, 9), np.ones(21))
        assert list(b.center_m) == [5.5, 6.5, 7.5]
        assert list(b.count) == [10, 10, 1]

    def test_rejects_bad_width(self):
        with pytest.raises(DomainError):
            bin_by_depth([1.0], [1.0], 0.0)

    @given(st.lists(st.tuples(st.floats(0.01, 50), st.floats(0, 1)), min_size=1, max_size=60), st.floats(0.1, 5))
    def test_conservation_and_ordering(self, samples, width):
        d, v = map(np.array, zip(*samples))
        b = bin_by_depth(d, v, width)
        assert np.all(np.diff(b.center_m) > 0)
        assert b.count.sum() == len(d) and b.count.min() >= 1
        assert np.sum(b.mean * b.count) / b.count.sum() == pytest.approx(v.mean(), rel=1e-9, abs=1e-12)

    @given(st.lists(st.floats(0.01, 50), min_size=1, max_size=30), st.floats(0, 1))
    def test_identical_values_zero_std(self, d, value):
        b = bin_by_depth(d, [value] * len(d))
        np.testing.assert_allclose(b.std, 0.0, atol=1e-12)


class TestSweep:
    def test_depths_within_chamber(self):
        d = sweep_depths(PASSIVE, 0.1)
        assert d[0] == DEFAULT_PARAMS.illumination_onset_m and d[-1] == 30.0
        assert np.all((d > 0) & (d <= PASSIVE.chamber_length_m))

    def test_one_trace_per_target(self):
        traces = simulate_sweep(PASSIVE, fog(50), STANDARD, STANDARD_TARGETS, 0.1)
        assert [t.rho for t in traces] == [0.05, 0.5, 0.9]
        assert all(isinstance(t, TargetTrace) for t in traces)

    def test_empty_targets_rejected(self):
        with pytest.raises(ValidationError):
            simulate_sweep(PASSIVE, fog(50), STANDARD, [], 0.1)

    def test_bad_step_rejected(self):
        with pytest.raises(DomainError):
            simulate_sweep(PASSIVE, fog(50), STANDARD, STANDARD_TARGETS, 0.0)

    def test_gate_closed_everywhere(self):
        late = SensorModel.gated(GatingScheme(160, 300, 160, 2000), noise=NOISELESS)  # starts at 45 m
        for t in simulate_sweep(PASSIVE, fog(30), late, STANDARD_TARGETS, 0.1):
            np.testing.assert_array_equal(t.intensity, 0.0)

    def test_clear_air_is_constant(self):
        sensor = SensorModel.standard(noise=NOISELESS)
        for t in simulate_sweep(PASSIVE, 0.0, sensor, STANDARD_TARGETS, 0.1):
            np.testing.assert_allclose(t.intensity, DEFAULT_PARAMS.headlight_gain * t.rho, rtol=1e-15)

    def test_ordering_at_50m(self):
        lo, mid, hi = simulate_sweep(PASSIVE, fog(50), SensorModel.standard(noise=NOISELESS), STANDARD_TARGETS, 0.1)
        assert np.all(hi.intensity > mid.intensity) and np.all(mid.intensity > lo.intensity)

    def test_standard_trace_tends_to_horizon(self):
        long = Scenario.passive(chamber_length_m=400)
        (t,) = simulate_sweep(long, fog(20), SensorModel.standard(noise=NOISELESS), [ReflectanceTarget(0.9)], 1.0)
        assert t.intensity[-1] == pytest.approx(long.horizon_brightness, abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(8, 200), st.sampled_from(["standard", "gated"]), st.booleans())
    def test_monotone_in_rho(self, v, kind, oncoming):
        sensor = (STANDARD if kind == "standard" else GATED)
        sensor = SensorModel(sensor.kind, sensor.bit_depth, sensor.resolution, NOISELESS, sensor.gating)
        scen = ONCOMING if oncoming else PASSIVE
        traces = simulate_sweep(scen, fog(v), sensor, STANDARD_TARGETS, 0.25)
        for a, b in zip(traces, traces[1:]):
            assert np.all(b.intensity >= a.intensity)

    def test_deterministic_and_seeded(self):
        a = simulate_sweep(PASSIVE, fog(25), GATED, STANDARD_TARGETS, 0.1, seed=[4, 2])
        b = simulate_sweep(PASSIVE, fog(25), GATED, STANDARD_TARGETS, 0.1, seed=[4, 2])
        c = simulate_sweep(PASSIVE, fog(25), GATED, STANDARD_TARGETS, 0.1, seed=[4, 3])
        for x, y, z in zip(a, b, c):
            np.testing.assert_array_equal(x.intensity, y.intensity)
            assert not np.array_equal(x.intensity, z.intensity)

    def test_gated_bright_inside_slice(self):
        traces = simulate_sweep(PASSIVE, fog(35), SensorModel.gated(noise=NOISELESS), STANDARD_TARGETS, 0.1)
        white = traces[-1]
        before = white.depth_m < CHAMBER_SCHEME.slice_start_m
        np.testing.assert_array_equal(white.intensity[before], 0.0)
        # laser is scaled so a perfect reflector peaks at the target level; backscatter adds a little
        level = SimulationParams().laser_target_level
        assert 0.9 * level * (1 - 1e-3) <= white.intensity.max() <= level

    def test_oncoming_adds_glare(self):
        sensor = SensorModel.standard(noise=NOISELESS)
        p = simulate_sweep(PASSIVE, fog(25), sensor, STANDARD_TARGETS, 0.1)
        o = simulate_sweep(ONCOMING, fog(25), sensor, STANDARD_TARGETS, 0.1)
        for a, b in zip(p, o):
            assert np.all(b.intensity >= a.intensity) and np.any(b.intensity > a.intensity)


class TestCorona:
    def test_requires_oncoming_scenario(self):
        with pytest.raises(DomainError):
            corona_intensity(PASSIVE, 0.1, 0.0)

    def test_clear_air(self):
        assert corona_intensity(ONCOMING, 0.0, 0.0) == 0.0

    def test_peak_at_source_direction(self):
        theta = np.linspace(-0.5, 0.5, 101)
        c = corona_intensity(ONCOMING, 0.1, theta)
        assert np.argmax(c) == 50 and c.max() == corona_intensity(ONCOMING, 0.1, 0.0)

    def test_grows_with_fog(self):
        assert corona_intensity(ONCOMING, 0.2, 0.05) > corona_intensity(ONCOMING, 0.05, 0.05)

    @given(st.floats(1e-4, 1.0), st.floats(0, 0.3))
    @settings(deadline=None, max_examples=30)
    def test_gated_suppressed(self, beta, theta):
        std = corona_intensity(ONCOMING, beta, theta, sensor=STANDARD)
        gat = corona_intensity(ONCOMING, beta, theta, sensor=GATED)
        assert gat < std
        assert gat == pytest.approx(std * suppression_ratio(CHAMBER_SCHEME, beta), rel=1e-12)

    def test_depth_argument(self):
        c = corona_intensity(ONCOMING, 0.1, depth_m=np.array([5.0, 20.0]))
        assert c.shape == (2,) and np.all(c > 0)
        with pytest.raises(DomainError):
            corona_intensity(ONCOMING, 0.1)


class TestFrames:
    def test_quantize_half_away_from_zero(self):
        scale = 255
        x = np.array([0.5, 1.5, 2.5, 254.5]) / scale
        np.testing.assert_array_equal(quantize(x, 8), [1, 2, 3, 255])
        np.testing.assert_array_equal(quantize([-0.2, 1.4], 8), [0, 255])

    def test_deterministic(self):
        a = render_frame(PASSIVE, fog(25), SMALL_STD, default_layout(), 9)
        b = render_frame(PASSIVE, fog(25), SMALL_STD, default_layout(), 9)
        c = render_frame(PASSIVE, fog(25), SMALL_STD, default_layout(), 10)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        assert not np.array_equal(a.pixels, c.pixels)

    @pytest.mark.parametrize("sensor", [SMALL_STD, SMALL_GATED])
    @pytest.mark.parametrize("scenario", [PASSIVE, ONCOMING])
    def test_pixels_in_range(self, sensor, scenario):
        f = render_frame(scenario, fog(15), sensor, default_layout(), 1)
        assert (f.width, f.height) == sensor.resolution
        assert f.pixels.min() >= 0 and f.pixels.max() <= f.max_value

    def test_dense_fog_washes_out(self):
        sensor = SensorModel.standard(noise=NOISELESS).scaled(0.1)
        f = render_frame(PASSIVE, 1e3, sensor, default_layout(), 0)
        assert entropy(f).bits == 0.0
        assert np.all(f.pixels == quantize(PASSIVE.horizon_brightness, 12))

    def test_entropy_rises_with_visibility(self):
        sensor = STANDARD.scaled(0.2)
        e = [entropy(render_frame(PASSIVE, fog(v), sensor, default_layout(), 3)).bits for v in (20, 60)]
        assert e[1] > e[0]

    def test_series_streams(self):
        frames = render_series(PASSIVE, fog(25), SMALL_STD, default_layout(), [1, 0], 3)
        np.testing.assert_array_equal(frames[2].pixels, render_frame(PASSIVE, fog(25), SMALL_STD, default_layout(), [1, 0, 2]).pixels)

    @pytest.mark.parametrize(
        "item", [LayoutItem(0.5, 31.0), LayoutItem(0.5, 10.0, lateral_m=3.0), LayoutItem(0.5, 10.0, height_m=1.9), LayoutItem(0.5, 0.0)]
    )
    def test_layout_outside_chamber(self, item):
        with pytest.raises(ValidationError) as err:
            render_frame(PASSIVE, fog(25), SMALL_STD, [item], 0)
        assert err.value.path == "layout[0]"

    def test_targets_visible(self):
        sensor = SensorModel.standard(noise=NOISELESS).scaled(0.25)
        f = render_frame(PASSIVE, fog(55), sensor, default_layout(), 0)
        w, h = sensor.resolution
        # panels sit at 1.6 m, above the 1.3 m camera, left to right 5 %, 50 %, 90 %
        row = f.pixels[h // 2 - 10]
        assert row.max() > row.min()

    def test_illuminated_region(self):
        x, y, w, h = illuminated_region(PASSIVE, SMALL_GATED, CHAMBER_SCHEME, default_layout())
        W, H = SMALL_GATED.resolution
        assert 0 <= x and 0 <= y and x + w <= W and y + h <= H and w > 0 and h > 0
        assert w < W and h < H
