import math

import numpy as np
import pytest

from graspforge.geom import RigidTransform, rotation_about_z
from graspforge.sampling import (
    ClassAlignment,
    align_class,
    align_instance,
    cross_instance_sample,
    farthest_point_sample,
)

from fixtures_3d import (
    grasp_at,
    make_box_mesh,
    make_icosphere,
    make_instance,
    make_l_prism,
    transformed_mesh,
)
from oracles import greedy_cross_replay, greedy_fps_replay, min_pairwise_distance


class TestFarthestPointSample:
    def test_single_grasp(self):
        grasps = [grasp_at("g0", (0.1, 0.0, 0.0))]
        assert farthest_point_sample(grasps, 1) == ["g0"]

    def test_collinear_extremes(self):
        grasps = [grasp_at(f"g{i}", (float(i), 0.0, 0.0)) for i in range(4)]
        picked = farthest_point_sample(grasps, 2, seed_index=0)
        assert picked == ["g0", "g3"]

    def test_matches_greedy_replay(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            n = int(rng.integers(4, 9))
            grasps = [grasp_at(f"g{i:02d}", rng.uniform(-1, 1, size=3)) for i in range(n)]
            k = int(rng.integers(2, n + 1))
            picked = farthest_point_sample(grasps, k)
            oracle = greedy_fps_replay([g.id for g in grasps],
                                       [g.pose.translation for g in grasps], k, 0)
            assert picked == oracle, f"trial {trial}"

    def test_k_too_large_rejected(self):
        grasps = [grasp_at("g0", (0, 0, 0))]
        with pytest.raises(ValueError):
            farthest_point_sample(grasps, 2)

    def test_duplicate_ids_rejected(self):
        grasps = [grasp_at("g0", (0, 0, 0)), grasp_at("g0", (1, 0, 0))]
        with pytest.raises(ValueError):
            farthest_point_sample(grasps, 1)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        grasps = [grasp_at(f"g{i}", rng.uniform(-1, 1, size=3)) for i in range(8)]
        assert farthest_point_sample(grasps, 4) == farthest_point_sample(grasps, 4)

    def test_default_seed_is_smallest_id(self):
        grasps = [grasp_at("b", (1.0, 0, 0)), grasp_at("a", (0.0, 0, 0))]
        assert farthest_point_sample(grasps, 1) == ["a"]


class TestAlignInstance:
    def test_self_alignment_identity_for_corpus(self):
        meshes = [make_l_prism(), make_box_mesh((0.2, 0.12, 0.06)), make_icosphere(0.1, 1)]
        for i, mesh in enumerate(meshes):
            ref = make_instance("C", "ref", mesh, [(0, 0, 0)])
            tgt = make_instance("C", "tgt", mesh, [(0, 0, 0)])
            result = align_instance(ref, tgt, seed=i)
            assert result.success
            np.testing.assert_allclose(result.transform.as_matrix(), np.eye(4), atol=1e-6)

    def test_recovers_synthetic_transform(self):
        mesh = make_l_prism()
        moved = RigidTransform(rotation_about_z(math.radians(40.0)),
                               np.array([0.3, -0.1, 0.0]))
        ref = make_instance("C", "ref", mesh, [(0, 0, 0)])
        tgt = make_instance("C", "tgt", transformed_mesh(mesh, moved), [(0, 0, 0)])
        result = align_instance(ref, tgt, seed=0)
        assert result.success
        recovered = result.transform
        expected = moved.invert()
        assert np.linalg.norm(recovered.translation - expected.translation) < 1e-3
        angle_err = abs(math.atan2(recovered.rotation[1, 0], recovered.rotation[0, 0])
                        - math.atan2(expected.rotation[1, 0], expected.rotation[0, 0]))
        assert math.degrees(angle_err) < 0.5

    def test_unrelated_mesh_fails(self):
        ref = make_instance("C", "ref", make_l_prism(scale=0.08), [(0, 0, 0)])
        tgt = make_instance("C", "tgt", make_box_mesh((0.8, 0.8, 0.1)), [(0, 0, 0)])
        result = align_instance(ref, tgt, seed=0)
        assert not result.success
        assert result.residual > 0.02

    def test_align_class_reference_maps_to_identity(self):
        mesh = make_l_prism()
        members = [
            make_instance("C", "i1", mesh, [(0, 0, 0)]),
            make_instance("C", "i0", mesh, [(0, 0, 0)]),
        ]
        alignment = align_class(members, seed=0)
        assert alignment.reference_id == "i0"
        np.testing.assert_allclose(alignment.transforms["i0"].as_matrix(), np.eye(4))
        assert alignment.success["i0"] and alignment.success["i1"]


def _identity_alignment(instance_ids, failed=()):
    return ClassAlignment(
        reference_id=sorted(instance_ids)[0],
        transforms={iid: RigidTransform.identity() for iid in instance_ids},
        success={iid: iid not in failed for iid in instance_ids},
    )


class TestCrossInstanceSample:
    def test_single_instance_equals_fps(self):
        rng = np.random.default_rng(1)
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        inst = make_instance("C", "i0", mesh, rng.uniform(-0.1, 0.1, size=(8, 3)))
        alignment = _identity_alignment(["i0"])
        picks = cross_instance_sample([inst], alignment, k_per_instance=4)
        assert picks["i0"] == farthest_point_sample(inst.grasps, 4)

    def test_identical_instances_pick_disjoint_locations(self):
        rng = np.random.default_rng(2)
        positions = rng.uniform(-0.1, 0.1, size=(9, 3))  # >= 2k distinct locations
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        a = make_instance("C", "a", mesh, positions)
        b = make_instance("C", "b", mesh, positions)
        picks = cross_instance_sample([a, b], _identity_alignment(["a", "b"]),
                                      k_per_instance=4)
        pos_by_id = {g.id: tuple(g.pose.translation) for g in a.grasps}
        loc_a = {pos_by_id[g] for g in picks["a"]}
        loc_b = {pos_by_id[g] for g in picks["b"]}
        assert not (loc_a & loc_b)

    def test_failed_alignment_falls_back_to_independent_fps(self):
        rng = np.random.default_rng(3)
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        a = make_instance("C", "a", mesh, rng.uniform(-0.1, 0.1, size=(8, 3)))
        b = make_instance("C", "b", mesh, rng.uniform(-0.1, 0.1, size=(8, 3)))
        picks = cross_instance_sample([a, b], _identity_alignment(["a", "b"], failed={"b"}),
                                      k_per_instance=4)
        assert picks["b"] == farthest_point_sample(b.grasps, 4)

    def test_matches_greedy_replay(self):
        rng = np.random.default_rng(4)
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        transforms = {}
        members = []
        for i in range(3):
            iid = f"i{i}"
            members.append(make_instance("C", iid, mesh,
                                         rng.uniform(-0.1, 0.1, size=(6, 3))))
            transforms[iid] = RigidTransform(
                rotation_about_z(rng.uniform(0, 2 * math.pi)),
                np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0.0]))
        alignment = ClassAlignment(reference_id="i0", transforms=transforms,
                                   success={m.instance_id: True for m in members})
        picks = cross_instance_sample(members, alignment, k_per_instance=3)

        per_instance = {}
        for m in members:
            ids = sorted(g.id for g in m.grasps)
            by_id = {g.id: g for g in m.grasps}
            positions = [transforms[m.instance_id].apply(by_id[g].pose.translation)
                         for g in ids]
            per_instance[m.instance_id] = (ids, positions)
        oracle = greedy_cross_replay(per_instance, 3)
        assert picks == oracle

    def test_dispersion_dominance_on_translated_copies(self):
        # shared grasp set on translated copies: cross-instance picks can
        # never be less dispersed than independent per-instance picks
        rng = np.random.default_rng(5)
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        shared = rng.uniform(-0.1, 0.1, size=(10, 3))
        members, transforms = [], {}
        for i in range(3):
            iid = f"i{i}"
            offset = np.array([0.5 * i, 0.0, 0.0])
            members.append(make_instance("C", iid, transformed_mesh(
                mesh, RigidTransform(np.eye(3), offset)), shared + offset))
            transforms[iid] = RigidTransform(np.eye(3), -offset)
        alignment = ClassAlignment("i0", transforms,
                                   {m.instance_id: True for m in members})
        picks = cross_instance_sample(members, alignment, k_per_instance=4)

        def class_frame_points(selection):
            pts = []
            for m in members:
                by_id = {g.id: g for g in m.grasps}
                for gid in selection[m.instance_id]:
                    pts.append(transforms[m.instance_id].apply(by_id[gid].pose.translation))
            return pts

        independent = {m.instance_id: farthest_point_sample(m.grasps, 4) for m in members}
        assert (min_pairwise_distance(class_frame_points(picks))
                >= min_pairwise_distance(class_frame_points(independent)))

    def test_too_few_stable_grasps_rejected(self):
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        inst = make_instance("C", "i0", mesh, [(0, 0, 0), (0.1, 0, 0)])
        with pytest.raises(ValueError, match="stable grasps"):
            cross_instance_sample([inst], _identity_alignment(["i0"]), k_per_instance=4)

    def test_missing_alignment_rejected(self):
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        inst = make_instance("C", "i0", mesh, [(0, 0, 0)] * 4)
        with pytest.raises(ValueError, match="alignment missing"):
            cross_instance_sample([inst], _identity_alignment(["other"]), k_per_instance=1)

    def test_unstable_grasps_excluded_from_pool(self):
        mesh = make_box_mesh((0.2, 0.2, 0.1))
        grasps = [grasp_at("g0", (0, 0, 0)), grasp_at("g1", (0.1, 0, 0)),
                  grasp_at("g2", (0.2, 0, 0), stable=False)]
        inst = make_instance("C", "i0", mesh, [])
        inst.grasps = grasps
        picks = cross_instance_sample([inst], _identity_alignment(["i0"]), k_per_instance=2)
        assert "g2" not in picks["i0"]
