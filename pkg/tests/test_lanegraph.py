import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lanedac.geometry import Polyline, Pose
from lanedac.lanegraph import (
    AnchorCandidate,
    AnchorConfig,
    LaneGraph,
    LaneGraphError,
    LaneSegment,
    NoAnchorError,
    candidate_from_ids,
    centerline_yaw_score,
    closest_segments,
    distance_along_lane_score,
    dumps_graph,
    fallback_anchor,
    heuristic_prune,
    loads_graph,
    prune_subset_duplicates,
    rank_anchors,
    retrieve_anchors,
    retrieve_candidates,
)

from conftest import dense_project


def seg(sid, pts, succ=(), pred=()):
    return LaneSegment(sid, Polyline(pts), succ, pred)


def arc(start, heading, radius, angle, n=20):
    """Points of a circular arc; positive angle turns left."""
    sgn = 1.0 if angle >= 0 else -1.0
    cx = start[0] - sgn * radius * math.sin(heading)
    cy = start[1] + sgn * radius * math.cos(heading)
    a0 = heading - sgn * math.pi / 2
    ts = np.linspace(0.0, abs(angle), n)
    return np.stack([cx + radius * np.cos(a0 + sgn * ts), cy + radius * np.sin(a0 + sgn * ts)], 1)


@pytest.fixture
def chain():
    return LaneGraph.from_segments([
        seg("A", [[0, 0], [10, 0]], ["B"]),
        seg("B", [[10, 0], [20, 0]], ["C"], ["A"]),
        seg("C", [[20, 0], [30, 0]], [], ["B"]),
    ])


@pytest.fixture
def fork():
    """A runs 40 m along +x, then B straight, C left turn, D right turn."""
    return LaneGraph.from_segments([
        seg("A", [[0, 0], [40, 0]], ["B", "C", "D"]),
        seg("B", [[40, 0], [100, 0]], [], ["A"]),
        seg("C", arc((40, 0), 0.0, 20.0, math.pi / 2), [], ["A"]),
        seg("D", arc((40, 0), 0.0, 20.0, -math.pi / 2), [], ["A"]),
    ])


@pytest.fixture
def diamond():
    return LaneGraph.from_segments([
        seg("A", [[0, 0], [10, 0]], ["B", "C"]),
        seg("B", [[10, 0], [15, 3], [20, 0]], ["D"], ["A"]),
        seg("C", [[10, 0], [15, -3], [20, 0]], ["D"], ["A"]),
        seg("D", [[20, 0], [30, 0]], [], ["B", "C"]),
    ])


def ids(cands):
    return [list(c.segment_ids) for c in cands]


class TestGraph:
    def test_rejects_inconsistent_links(self):
        with pytest.raises(LaneGraphError):
            LaneGraph.from_segments([seg("A", [[0, 0], [1, 0]], ["B"]), seg("B", [[1, 0], [2, 0]])])

    def test_rejects_self_loop(self):
        with pytest.raises(LaneGraphError):
            LaneGraph.from_segments([seg("A", [[0, 0], [1, 0]], ["A"], ["A"])])

    def test_json_round_trip(self, diamond):
        g = loads_graph(dumps_graph(diamond))
        assert list(g.segments) == list(diamond.segments)
        np.testing.assert_array_equal(g["B"].centerline.points, diamond["B"].centerline.points)
        assert g["D"].predecessors == ("B", "C")

    def test_json_error_reports_line(self, diamond):
        data = diamond.to_dict()
        data["segments"][2]["successors"] = ["A"]
        text = json.dumps(data, indent=1)
        with pytest.raises(LaneGraphError, match=r"line \d+") as exc:
            loads_graph(text)
        line = int(str(exc.value).split()[1].rstrip(":"))
        assert '"C"' in text.splitlines()[line - 1]


class TestClosest:
    def test_single_lane(self):
        g = LaneGraph.from_segments([seg("L", [[0, 0], [10, 0]])])
        assert closest_segments(g, Pose((5, 1), 0), 5) == ["L"]

    def test_parallel_lanes(self):
        g = LaneGraph.from_segments([seg("near", [[0, 1], [10, 1]]), seg("far", [[0, 3], [10, 3]])])
        assert closest_segments(g, Pose((5, 0), 0), 2) == ["near"]

    def test_fork_all_branches(self, fork):
        # at the fork every segment touches (40, 0): distance 0, ordered by id
        assert closest_segments(fork, Pose((40, 0), 0), 10) == ["A", "B", "C", "D"]
        # (42, 1): C arc |hypot(2, 19) - 20| = 0.895, B 1.0,
        # D |hypot(2, 21) - 20| = 1.095, A hypot(2, 1) = 2.236
        assert closest_segments(fork, Pose((42, 1), 0), 10) == ["C", "B", "D", "A"]
        assert closest_segments(fork, Pose((42, 1), 0), 1.05) == ["C", "B"]


class TestRetrieve:
    def test_chain(self, chain):
        assert ids(retrieve_candidates(chain, ["A"], ahead=100, behind=0)) == [["A", "B", "C"]]

    def test_chain_budget(self, chain):
        assert ids(retrieve_candidates(chain, ["A"], ahead=15, behind=0)) == [["A", "B"]]

    def test_fork(self):
        g = LaneGraph.from_segments([
            seg("A", [[0, 0], [10, 0]], ["B", "C"]),
            seg("B", [[10, 0], [20, 0]], [], ["A"]),
            seg("C", [[10, 0], [20, 5]], [], ["A"]),
        ])
        assert ids(retrieve_candidates(g, ["A"], 100, 0)) == [["A", "B"], ["A", "C"]]

    def test_diamond(self, diamond):
        assert ids(retrieve_candidates(diamond, ["A"], 100, 0)) == [["A", "B", "D"], ["A", "C", "D"]]

    def test_predecessors(self, diamond):
        got = ids(retrieve_candidates(diamond, ["D"], 5, 100))
        assert got == [["A", "B", "D"], ["A", "C", "D"]]

    def test_cycle_is_cut(self):
        g = LaneGraph.from_segments([
            seg("A", [[0, 0], [10, 0]], ["B"], ["B"]),
            seg("B", [[10, 0], [0, 0.5]], ["A"], ["A"]),
        ])
        got = ids(retrieve_candidates(g, ["A"], 1000, 0))
        assert got == [["A", "B"]]

    def test_polyline_is_concatenation(self, diamond):
        c = retrieve_candidates(diamond, ["A"], 100, 0)[0]
        assert len(c.polyline) == 2 + 2 + 1
        assert c.polyline.length == pytest.approx(10 + 2 * math.hypot(5, 3) + 10)


class TestPrune:
    def test_subset(self, chain):
        cands = [candidate_from_ids(chain, x) for x in (["A", "B"], ["A", "B", "C"])]
        assert ids(prune_subset_duplicates(cands)) == [["A", "B", "C"]]

    def test_disjoint(self, diamond):
        cands = [candidate_from_ids(diamond, x) for x in (["A", "B"], ["C", "D"])]
        assert ids(prune_subset_duplicates(cands)) == [["A", "B"], ["C", "D"]]

    def test_three_way(self, chain):
        cands = [candidate_from_ids(chain, x) for x in (["B", "C"], ["A", "B", "C"], ["A", "B"])]
        assert ids(prune_subset_duplicates(cands)) == [["A", "B", "C"]]

    def test_exact_duplicates_keep_first(self, chain):
        cands = [candidate_from_ids(chain, ["A", "B"]) for _ in range(3)]
        assert len(prune_subset_duplicates(cands)) == 1

    @given(st.lists(st.lists(st.sampled_from("ABCDE"), min_size=1, max_size=4, unique=True), max_size=8))
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, seqs):
        dummy = Polyline([[0, 0], [1, 0]])
        cands = [AnchorCandidate(tuple(s), dummy) for s in seqs]
        once = prune_subset_duplicates(cands)
        assert [c.segment_ids for c in prune_subset_duplicates(once)] == [c.segment_ids for c in once]
        for c in once:
            for o in once:
                if c is not o:
                    assert not (len(o.segment_ids) > len(c.segment_ids)
                                and any(o.segment_ids[i:i + len(c.segment_ids)] == c.segment_ids
                                        for i in range(len(o.segment_ids))))


class TestHeuristicPrune:
    def test_same_until_lookahead(self, fork):
        cands = retrieve_candidates(fork, ["A"], 100, 0)
        # 5 m/s for 6 s from x=5: look-ahead at x=35, before the fork at 40
        kept = heuristic_prune(cands, Pose((5, 0), 0), 5.0, 6.0, 2.0)
        assert ids(kept) == [["A", "B"]]

    def test_diverged(self, fork):
        cands = retrieve_candidates(fork, ["A"], 100, 0)
        kept = heuristic_prune(cands, Pose((30, 0), 0), 5.0, 6.0, 2.0)
        assert ids(kept) == [["A", "B"], ["A", "C"], ["A", "D"]]

    def test_two_branches_20m_apart(self):
        g = LaneGraph.from_segments([
            seg("A", [[0, 0], [10, 0]], ["B", "C"]),
            seg("B", [[10, 0], [40, 10]], [], ["A"]),
            seg("C", [[10, 0], [40, -10]], [], ["A"]),
        ])
        cands = retrieve_candidates(g, ["A"], 100, 0)
        kept = heuristic_prune(cands, Pose((0, 0), 0), 5.0, 6.0, 2.0)
        assert len(kept) == 2


class TestScores:
    def test_dal_on_centerline(self, fork):
        c = candidate_from_ids(fork, ["A", "C"])
        pts = c.polyline.points[::3]
        assert distance_along_lane_score(c, pts) == pytest.approx(0.0, abs=1e-9)

    def test_dal_offset(self):
        c = AnchorCandidate(("L",), Polyline([[0, 0], [100, 0]]))
        past = np.stack([np.arange(5.0) * 3, np.ones(5)], 1)
        assert distance_along_lane_score(c, past) == pytest.approx(5.0)

    def test_dal_matches_dense_oracle(self, fork):
        c = candidate_from_ids(fork, ["A", "D"])
        rng = np.random.default_rng(3)
        past = np.stack([rng.uniform(30, 55, 8), rng.uniform(-12, 2, 8)], 1)
        oracle = sum(dense_project(c.polyline, q, step=2e-5)[0] for q in past)
        assert distance_along_lane_score(c, past) == pytest.approx(oracle, abs=1e-6 * len(past) + 1e-4)

    def test_yaw(self):
        c = AnchorCandidate(("L",), Polyline([[0, 0], [100, 0]]))
        assert centerline_yaw_score(c, Pose((5, 0), 0.0)) == 0.0
        assert centerline_yaw_score(c, Pose((5, 0), math.pi)) == pytest.approx(math.pi)
        tilted = AnchorCandidate(("T",), Polyline([[0, 0], [100 * math.cos(0.1), 100 * math.sin(0.1)]]))
        assert centerline_yaw_score(tilted, Pose((5, 0.5), 0.3)) == pytest.approx(0.2)


class TestRank:
    def test_on_lane_first(self):
        on = AnchorCandidate(("on",), Polyline([[0, 0], [100, 0]]))
        off = AnchorCandidate(("off",), Polyline([[0, 5], [100, 5]]))
        past = np.stack([np.arange(4.0), np.zeros(4)], 1)
        assert [c.segment_ids for c in rank_anchors([off, on], past, Pose((3, 0), 0))] == [("on",), ("off",)]

    def test_yaw_breaks_ties(self):
        a = AnchorCandidate(("a",), Polyline([[0, 0], [100, 0]]))
        b = AnchorCandidate(("b",), Polyline([[0, 0], [100, 0]]))
        past = np.zeros((1, 2))
        # identical geometry: id order decides
        assert [c.segment_ids for c in rank_anchors([b, a], past, Pose((0, 0), 0))] == [("a",), ("b",)]
        c = AnchorCandidate(("c",), Polyline([[0, 0], [100, 10]]))
        ranked = rank_anchors([c, b], past, Pose((0, 0), 0.0))
        assert ranked[0].segment_ids == ("b",)

    def test_turning_ground_truth(self, fork):
        cands = retrieve_candidates(fork, ["A"], 100, 0)
        c = candidate_from_ids(fork, ["A", "C"])
        traj = c.polyline.points[np.linspace(0, len(c.polyline) - 1, 12).astype(int)]
        ranked = rank_anchors(cands, traj, Pose(traj[0], 0.0))
        assert ranked[0].segment_ids == ("A", "C")
        assert ranked[0].dal_score == pytest.approx(0.0, abs=1e-9)
        assert sorted(c.segment_ids for c in ranked) == sorted(c.segment_ids for c in cands)

    def test_empty(self):
        with pytest.raises(NoAnchorError):
            rank_anchors([], np.zeros((1, 2)), Pose((0, 0), 0))


def test_fallback_nearest(fork):
    far = np.array([[45.0, 30.0], [46.0, 30.0]])
    c = fallback_anchor(fork, far)
    assert c.segment_ids[0] == "C"


def test_pipeline_oracle_anchor(fork):
    c = candidate_from_ids(fork, ["A", "D"])
    l = np.linspace(10, 60, 13)
    from lanedac.geometry import nt_to_xy_batch

    traj = nt_to_xy_batch(c.polyline, np.stack([np.zeros_like(l), l], 1))
    past = traj[:4]
    # oracle ranking with the whole trajectory, observed pose at t_obs
    ranked = retrieve_anchors(fork, past, dt=1.0, config=AnchorConfig(horizon=9.0), score_with=traj)
    assert ranked[0].segment_ids == ("A", "D")
