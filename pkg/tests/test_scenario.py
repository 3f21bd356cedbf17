"""Scene geometry, visibility, and synthesis oracles."""

import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toapose.frames import Attitude, Pose
from toapose.scenario import (
    Box,
    Scenario,
    build_four_anchor_scene,
    build_port_scene,
    compute_visibility,
    epoch_rng,
    load_bundled,
    los_visible,
    sample_route,
    scenario_from_dict,
    scenario_to_dict,
    synthesize_epoch,
    synthesize_trial,
)

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "toapose" / "data"


def toy_scenario(**overrides):
    defaults = dict(
        name="toy",
        anchors=np.array([[40.0, 40.0, 0.0]]),
        levers=np.array([[0.0, 0.0, 0.0]]),
        trajectory=(Pose(0.0, 0.0, Attitude(0.0)),),
        clock_bias=149.90,
        sigma=0.1,
        sigma_p=0.1,
        sigma_psi=0.1,
    )
    defaults.update(overrides)
    return Scenario(**defaults)


class TestLineOfSight:
    def test_clear_path_without_obstacles(self):
        sc = toy_scenario()
        assert los_visible([0.0, 0.0, 0.0], [40.0, 40.0, 0.0], sc)

    def test_box_straddling_midpoint_blocks(self):
        box = Box(lo=np.array([18.0, 18.0, -1.0]), hi=np.array([22.0, 22.0, 1.0]))
        sc = toy_scenario(obstacles=(box,))
        assert not los_visible([0.0, 0.0, 0.0], [40.0, 40.0, 0.0], sc)

    def test_box_off_to_the_side_does_not_block(self):
        box = Box(lo=np.array([18.0, 30.0, -1.0]), hi=np.array([22.0, 34.0, 1.0]))
        sc = toy_scenario(obstacles=(box,))
        assert los_visible([0.0, 0.0, 0.0], [40.0, 0.0, 0.0], sc)

    @given(
        data=st.lists(st.floats(min_value=-20.0, max_value=20.0, allow_nan=False), min_size=12, max_size=12)
    )
    @settings(max_examples=200)
    def test_direction_symmetry(self, data):
        a = np.array(data[0:3])
        b = np.array(data[3:6])
        lo = np.minimum(data[6:9], data[9:12])
        hi = np.maximum(data[6:9], data[9:12])
        sc = toy_scenario(obstacles=(Box(lo=np.array(lo), hi=np.array(hi)),))
        assert los_visible(a, b, sc) == los_visible(b, a, sc)

    def test_goods_box_shadows_rear_sector(self):
        # Quarter-circle of near-ground anchors around the vehicle: the cargo
        # box must hide at least one of them from the front-left antenna
        # while the forward anchor stays visible.
        sc = build_port_scene()
        pose = Pose(0.0, 0.0, Attitude(0.0), h=sc.h)
        antenna = sc.antenna_positions(pose)[0]
        front = np.array([60.0, 0.0, 8.0])
        rear = np.array([-60.0, 20.0, 3.2])
        stripped = dataclasses.replace(sc, obstacles=())
        assert los_visible(antenna, front, stripped, pose)
        assert not los_visible(antenna, rear, stripped, pose)

    def test_removing_all_obstacles_makes_everything_visible(self):
        sc = build_port_scene()
        open_site = dataclasses.replace(sc, obstacles=(), goods=None)
        vm = compute_visibility(open_site)
        for k in range(0, open_site.num_epochs, 29):
            assert vm.counts(k) == [open_site.num_anchors] * open_site.num_antennas


class TestVisibilityTables:
    def test_override_mode_returns_listed_sets(self):
        sc = build_four_anchor_scene()
        vm = compute_visibility(sc)
        assert vm.visible(0, 2) == (0,)
        assert vm.visible(0, 0) == (1, 3)
        assert vm.visible(1, 2) == (0, 1, 2, 3)
        assert vm.visible(3, 1) == (2,)

    def test_union_at_least_max_per_antenna(self):
        vm = compute_visibility(build_port_scene())
        for k in range(290):
            counts = vm.counts(k)
            assert len(vm.union(k)) >= max(counts)

    def test_port_union_never_degenerate(self):
        vm = compute_visibility(build_port_scene())
        assert min(len(vm.union(k)) for k in range(290)) >= 4

    def test_port_per_antenna_counts_frequently_small(self):
        vm = compute_visibility(build_port_scene())
        counts = np.array([vm.counts(k) for k in range(290)])
        assert np.mean(counts < 4) > 0.2
        assert np.all(counts >= 1)


class TestSynthesis:
    def test_noiseless_toa_is_range_plus_clock_bias(self):
        sc = toy_scenario(sigma=0.0, sigma_p=0.0, sigma_psi=0.0)
        epoch, pose = synthesize_epoch(sc, 0, epoch_rng(0, 0, 0))
        assert epoch.toas[(0, 0)] == pytest.approx(40.0 * math.sqrt(2.0) + 149.90, abs=1e-12)
        assert pose is sc.trajectory[0]

    def test_noiseless_stationary_inter_epoch_is_zero(self):
        pose = Pose(3.0, 4.0, Attitude(0.3))
        sc = toy_scenario(trajectory=(pose, pose), sigma=0.0, sigma_p=0.0, sigma_psi=0.0)
        epoch, _ = synthesize_epoch(sc, 1, epoch_rng(0, 0, 1))
        np.testing.assert_allclose(epoch.inter_epoch, [0.0, 0.0, 0.0], atol=1e-15)

    def test_first_epoch_has_no_inter_epoch_channel(self):
        epoch, _ = synthesize_epoch(build_four_anchor_scene(), 0, epoch_rng(1, 0, 0))
        assert epoch.inter_epoch is None

    def test_four_anchor_epoch1_has_six_toas(self):
        epoch, _ = synthesize_epoch(build_four_anchor_scene(), 0, epoch_rng(1, 0, 0))
        assert epoch.num_toas == 6
        assert [len(v) for v in epoch.visibility] == [2, 3, 1]

    def test_trial_synthesis_is_bit_reproducible(self):
        sc = build_four_anchor_scene()
        m1, _ = synthesize_trial(sc, seed=7, trial=3)
        m2, _ = synthesize_trial(sc, seed=7, trial=3)
        for a, b in zip(m1, m2):
            assert a.toas == b.toas
            if a.inter_epoch is None:
                assert b.inter_epoch is None
            else:
                np.testing.assert_array_equal(a.inter_epoch, b.inter_epoch)

    def test_different_trials_get_different_noise(self):
        sc = build_four_anchor_scene()
        m1, _ = synthesize_trial(sc, seed=7, trial=0)
        m2, _ = synthesize_trial(sc, seed=7, trial=1)
        assert m1[0].toas != m2[0].toas

    def test_trial_order_independence(self):
        sc = build_four_anchor_scene()
        before, _ = synthesize_trial(sc, seed=7, trial=5)
        synthesize_trial(sc, seed=7, trial=4)
        after, _ = synthesize_trial(sc, seed=7, trial=5)
        assert before[2].toas == after[2].toas

    def test_epoch_out_of_range(self):
        with pytest.raises(IndexError):
            synthesize_epoch(build_four_anchor_scene(), 4, epoch_rng(0, 0, 4))


class TestSceneNumbers:
    def test_four_anchor_scene_shape(self):
        sc = build_four_anchor_scene()
        assert sc.num_anchors == 4 and sc.num_antennas == 3 and sc.num_epochs == 4
        assert sc.clock_bias == pytest.approx(149.90)
        np.testing.assert_allclose(sc.trajectory[0].as_state(), [11.24, -9.29, 0.74])
        np.testing.assert_allclose(sc.trajectory[3].as_state(), [15.12, -9.26, 0.41])

    def test_port_scene_shape(self):
        sc = build_port_scene()
        assert sc.num_anchors == 17 and sc.num_antennas == 3 and sc.num_epochs == 290
        np.testing.assert_allclose(sc.anchors[0], [150.0, 72.0, 8.0])
        np.testing.assert_allclose(sc.anchors[16], [60.0, 6.5, 8.0])
        assert sc.h == pytest.approx(2.0)
        np.testing.assert_allclose(sc.levers[:, 2], [-0.15, -0.15, -0.15])

    def test_port_trajectory_is_smooth(self):
        traj = build_port_scene().trajectory
        steps = [np.linalg.norm(b.center - a.center) for a, b in zip(traj[:-1], traj[1:])]
        assert 1.0 < min(steps) and max(steps) < 1.6
        turns = [abs(math.remainder(b.yaw - a.yaw, 2 * math.pi)) for a, b in zip(traj[:-1], traj[1:])]
        assert max(turns) < 0.35

    def test_bundled_scenes_have_positive_noise(self):
        for name in ("four_anchor", "port"):
            sc = load_bundled(name)
            assert sc.sigma > 0 and sc.sigma_p > 0 and sc.sigma_psi > 0


class TestSerialization:
    @pytest.mark.parametrize("builder", [build_four_anchor_scene, build_port_scene])
    def test_bundled_file_matches_builder(self, builder):
        built = builder()
        shipped = load_bundled(built.name)
        assert scenario_to_dict(shipped) == scenario_to_dict(built)

    def test_round_trip_preserves_everything(self):
        sc = build_port_scene()
        again = scenario_from_dict(json.loads(json.dumps(scenario_to_dict(sc))))
        assert scenario_to_dict(again) == scenario_to_dict(sc)

    def test_missing_key_rejected(self):
        data = scenario_to_dict(build_four_anchor_scene())
        del data["anchors"]
        with pytest.raises(ValueError, match="missing"):
            scenario_from_dict(data)

    def test_unknown_key_rejected(self):
        data = scenario_to_dict(build_four_anchor_scene())
        data["sigma_toa"] = 0.1
        with pytest.raises(ValueError, match="unknown"):
            scenario_from_dict(data)

    def test_negative_sigma_rejected(self):
        data = scenario_to_dict(build_four_anchor_scene())
        data["sigma_toa_m"] = -0.1
        with pytest.raises(ValueError, match="negative"):
            scenario_from_dict(data)

    def test_override_must_cover_every_epoch(self):
        data = scenario_to_dict(build_four_anchor_scene())
        data["visibility_override"] = data["visibility_override"][:2]
        with pytest.raises(ValueError, match="every epoch"):
            scenario_from_dict(data)

    def test_override_bad_anchor_rejected(self):
        data = scenario_to_dict(build_four_anchor_scene())
        data["visibility_override"][0][0] = [9]
        with pytest.raises(ValueError, match="unknown anchor"):
            scenario_from_dict(data)


class TestRouteSampler:
    def test_uniform_spacing_and_continuous_heading(self):
        samples = sample_route([(0.0, 0.0), (30.0, 0.0), (30.0, 30.0)], radius=5.0, num_samples=60)
        pts = np.array([[s[0], s[1]] for s in samples])
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        assert steps.max() - steps.min() < 0.05
        headings = [s[2] for s in samples]
        jumps = np.abs([math.remainder(b - a, 2 * math.pi) for a, b in zip(headings[:-1], headings[1:])])
        assert jumps.max() < 0.3
        assert headings[0] == pytest.approx(0.0, abs=1e-9)
        assert headings[-1] == pytest.approx(math.pi / 2, abs=0.02)
