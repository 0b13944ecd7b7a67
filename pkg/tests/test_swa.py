import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cadspot.metrics import panoptic_quality
from cadspot.model import InstanceProposal, PanopticLabeling, WindowProposals
from cadspot.predictor import PredictorError, ReplayPredictor
from cadspot.sampler import sample_drawing
from cadspot.swa import (SWAConfig, SemanticAccumulator, SlidingWindowSpotter, _starts, aggregate_instances,
                         collect_window, enumerate_windows, finalize_semantic, pool_proposals, predict_windows,
                         run_swa, vote_semantic)
from cadspot.synth import SyntheticPredictor, generate_scene


def giant(drawing):
    x0, y0, x1, y1 = drawing.bounds
    size = max(x1 - x0, y1 - y0) + 1.0
    return SWAConfig(window=size, step=size)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(3, n_tiles=4)


def test_starts_cover_and_clamp():
    assert _starts(0, 100, 140, 70) == [0]
    assert _starts(0, 280, 140, 70) == [0, 70, 140]
    assert _starts(0, 300, 140, 70) == [0, 70, 140, 160]
    s = _starts(5.0, 1000.0, 140, 70)
    assert s[-1] + 140 == 1000.0
    assert all(b > a for a, b in zip(s, s[1:]))


def test_window_grid_order_and_errors():
    g = enumerate_windows((0, 0, 280, 140))
    assert g.windows == ((0, 0, 140, 140), (70, 0, 210, 140), (140, 0, 280, 140))
    g2 = enumerate_windows((0, 0, 210, 210))
    assert [w[:2] for w in g2.windows[:3]] == [(0, 0), (70, 0), (0, 70)]
    with pytest.raises(ValueError):
        enumerate_windows((0, 0, 1, 1), 10, 20)
    with pytest.raises(ValueError):
        enumerate_windows((0, 0, 1, 1), 0, 0)


def test_every_point_lies_in_some_window(scene):
    cloud = sample_drawing(scene.drawing, 0.14)
    seen = np.zeros(len(cloud), dtype=bool)
    p = cloud.points
    for x0, y0, x1, y1 in enumerate_windows(scene.drawing.bounds).windows:
        seen |= (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
    assert seen.all()


def test_collect_window_counts(scene):
    cloud = sample_drawing(scene.drawing, 0.14)
    ids, counts = collect_window(cloud, scene.drawing.bounds)
    assert ids.tolist() == list(range(len(scene.drawing)))
    assert np.array_equal(counts, cloud.counts)


def test_weighted_votes_prefer_larger_view():
    acc = SemanticAccumulator(np.array([10, 4]), 3)
    acc.add(np.array([0, 0, 0]), np.array([1, 2, 2]), np.array([9, 2, 2]))
    labels, untouched = finalize_semantic(acc, background=2)
    assert labels[0] == 1  # 9 observed points beat 2 + 2
    assert labels[1] == 2 and untouched.tolist() == [1]
    assert np.allclose(acc.votes[0], [0, 0.9, 0.4])
    plain = SemanticAccumulator(np.array([10]), 3, weighted=False)
    plain.add(np.array([0, 0, 0]), np.array([1, 2, 2]), np.array([9, 2, 2]))
    assert finalize_semantic(plain, 2)[0][0] == 2


def test_vote_ties_take_lowest_class():
    acc = SemanticAccumulator(np.array([4]), 4)
    acc.add(np.array([0, 0]), np.array([3, 1]), np.array([2, 2]))
    assert finalize_semantic(acc, 0)[0][0] == 1


def test_vote_rejects_misaligned_rows():
    acc = SemanticAccumulator(np.array([3, 3]), 2)
    props = WindowProposals((0, 0, 1, 1), np.array([0]), np.zeros((1, 2)), ())
    with pytest.raises(ValueError):
        vote_semantic(acc, props, np.array([1]), np.array([1]))


def test_accumulator_merge_is_order_free():
    rng = np.random.default_rng(0)
    batches = [(rng.integers(0, 5, 6), rng.integers(0, 4, 6), rng.integers(1, 9, 6)) for _ in range(8)]
    a = SemanticAccumulator(np.full(5, 20), 4)
    for b in batches:
        a.add(*b)
    parts = [SemanticAccumulator(np.full(5, 20), 4).add(*b) for b in batches[::-1]]
    b = parts[0]
    for p in parts[1:]:
        b.merge(p)
    assert np.array_equal(a.counts, b.counts)


def _props(window, ids, masks_scores, n_labels=36):
    insts = []
    for mask, label, score in masks_scores:
        cls = np.zeros(n_labels)
        cls[label] = 1.0
        insts.append(InstanceProposal(np.array(mask, float), cls, score))
    return WindowProposals(window, np.array(ids), np.zeros((len(ids), n_labels)), tuple(insts))


def test_pool_order_is_canonical(table):
    w1 = _props((0, 0, 1, 1), [0, 1, 2], [([1, 1, 0], 0, 0.5), ([0, 0, 0], 0, 0.9)])
    w2 = _props((1, 0, 2, 1), [2, 3], [([1, 1], 1, 0.5), ([0, 1], 1, 0.7)])
    pool = pool_proposals([w2, w1])
    assert pool.scores.tolist() == [0.7, 0.5, 0.5]  # empty mask dropped
    assert [m.tolist() for m in pool.masks] == [[3], [0, 1], [2, 3]]
    again = pool_proposals([w1, w2])
    assert [m.tolist() for m in again.masks] == [m.tolist() for m in pool.masks]


def test_fusion_claims_each_primitive_once(table):
    door = table.id_of("single door")
    w1 = _props((0, 0, 1, 1), [0, 1, 2, 3], [([1, 1, 1, 0], door, 0.9)])
    w2 = _props((1, 0, 2, 1), [2, 3, 4], [([1, 1, 1], door, 0.8)])
    final, stats = aggregate_instances([w1, w2], table)
    assert [f.members.tolist() for f in final] == [[0, 1, 2], [3, 4]]
    assert stats["proposals"] == 2
    w3 = _props((1, 0, 2, 1), [2, 3], [([1, 1], door, 0.8)])
    final, _ = aggregate_instances([w1, w3], table)
    assert [f.members.tolist() for f in final] == [[0, 1, 2], [3]]  # half unclaimed is enough
    assert len(aggregate_instances([w1, w3], table, min_unclaimed=0.6)[0]) == 1


def test_stuff_proposals_never_become_instances(table):
    wall = table.id_of("wall")
    w = _props((0, 0, 1, 1), [0, 1], [([1, 1], wall, 0.9)])
    assert aggregate_instances([w], table)[0] == []


def test_giant_window_equivalence(scene):
    pred = SyntheticPredictor(scene.labeling, scene.table)
    oracle = run_swa(scene.drawing, pred, giant(scene.drawing), scene.table)
    rec = run_swa(scene.drawing, pred, SWAConfig(), scene.table)
    replay = run_swa(scene.drawing, ReplayPredictor(rec.windows), SWAConfig(), scene.table)
    assert panoptic_quality(oracle.labeling, replay.labeling, scene.table).pq == 1.0
    assert panoptic_quality(scene.labeling, oracle.labeling, scene.table).pq == 1.0
    assert replay.report["windows"] == len(enumerate_windows(scene.drawing.bounds))


def test_thread_count_does_not_change_results(scene):
    pred = SyntheticPredictor(scene.labeling, scene.table)
    one = run_swa(scene.drawing, pred, SWAConfig(), scene.table, n_jobs=1)
    four = run_swa(scene.drawing, pred, SWAConfig(), scene.table, n_jobs=4)
    assert one.labeling == four.labeling
    assert one.report == four.report
    assert [i.score for i in one.instances] == [i.score for i in four.instances]


def test_sliding_beats_block_partition():
    s = generate_scene(5, n_tiles=6)
    pred = SyntheticPredictor(s.labeling, s.table)
    swa = run_swa(s.drawing, pred, SWAConfig(), s.table)
    bp = run_swa(s.drawing, pred, SWAConfig(step=140.0), s.table)
    a = panoptic_quality(s.labeling, swa.labeling, s.table).pq
    b = panoptic_quality(s.labeling, bp.labeling, s.table).pq
    assert a - b >= 0.10


def test_replay_missing_window_raises(scene):
    with pytest.raises(PredictorError):
        run_swa(scene.drawing, ReplayPredictor([], n_labels=36), SWAConfig(), scene.table)


def test_config_validation():
    with pytest.raises(ValueError):
        SWAConfig(step=200)
    with pytest.raises(ValueError):
        SWAConfig(nms_kernel="box")
    with pytest.raises(ValueError):
        SWAConfig(top_k=-1)
    assert SWAConfig().to_dict()["top_k"] == 220


def test_estimator_wrapper(scene):
    est = SlidingWindowSpotter(SyntheticPredictor(scene.labeling, scene.table))
    assert est.get_params()["window"] == 140.0
    out = est.fit().predict(scene.drawing)
    assert isinstance(out, PanopticLabeling)
    assert est.result_.report["windows"] > 1
    with pytest.raises(ValueError):
        SlidingWindowSpotter().fit()


@pytest.fixture(scope="module")
def window_results(scene):
    cloud = sample_drawing(scene.drawing)
    grid = enumerate_windows(scene.drawing.bounds)
    return cloud, predict_windows(scene.drawing, cloud, SyntheticPredictor(scene.labeling, scene.table), grid)


def _aggregate(cloud, results, table):
    acc = SemanticAccumulator(cloud.counts, table.num_semantic_labels)
    for ids, observed, props in results:
        vote_semantic(acc, props, ids, observed)
    final, _ = aggregate_instances([r[2] for r in results], table)
    return finalize_semantic(acc, table.background_id)[0], final


@settings(max_examples=15, deadline=None)
@given(st.randoms(use_true_random=False))
def test_window_order_invariance(window_results, scene, rnd):
    cloud, results = window_results
    shuffled = list(results)
    rnd.shuffle(shuffled)
    sem_a, inst_a = _aggregate(cloud, results, scene.table)
    sem_b, inst_b = _aggregate(cloud, shuffled, scene.table)
    assert np.array_equal(sem_a, sem_b)
    assert [(f.members.tolist(), f.label, f.score) for f in inst_a] == \
        [(f.members.tolist(), f.label, f.score) for f in inst_b]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4), st.integers(1, 20)), min_size=1, max_size=12),
       st.integers(1, 20))
def test_vote_for_current_winner_keeps_it(votes, extra):
    acc = SemanticAccumulator(np.full(4, 20), 5)
    for pid, label, obs in votes:
        acc.add([pid], [label], [obs])
    before, _ = finalize_semantic(acc, 4)
    touched = np.flatnonzero(acc.touched)
    acc.add(touched, before[touched], np.full(len(touched), extra))
    after, _ = finalize_semantic(acc, 4)
    assert np.array_equal(before, after)


def test_every_point_bearing_primitive_is_observed(scene, window_results):
    cloud, results = window_results
    seen = np.zeros(len(scene.drawing), bool)
    for ids, _, _ in results:
        seen[ids] = True
    assert np.all(seen[cloud.counts > 0])
