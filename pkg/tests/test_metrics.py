import math

import numpy as np
import pytest

from rmts.core import BBox
from rmts.errors import InputError
from rmts.metrics import (
    HOTA_ALPHAS,
    LabeledFrameSet,
    MetricsReport,
    aggregate,
    evaluate_all,
    evaluate_clear,
    evaluate_hota,
    evaluate_idf1,
    evaluate_per_class,
    format_table,
    to_machine,
)

import oracles


def fs(table, source="gt"):
    """table: {frame: [(identity, (l,t,w,h)), ...]} with one class."""
    records = [
        (fno, ident, BBox(*box), 0)
        for fno, items in table.items()
        for ident, box in items
    ]
    return LabeledFrameSet.from_records(records, source=source)


BOX = (10.0, 10.0, 20.0, 20.0)


def one_switch_tables():
    gt = {f: [(1, BOX)] for f in range(1, 5)}
    res = {1: [(101, BOX)], 2: [(101, BOX)], 3: [(102, BOX)], 4: [(102, BOX)]}
    return gt, res


class TestClear:
    def test_perfect(self):
        gt, _ = one_switch_tables()
        rep = evaluate_clear(fs(gt), fs(gt, "result"))
        assert rep.mota == 1.0
        assert (rep.fp, rep.fn, rep.idsw) == (0, 0, 0)

    def test_one_switch(self):
        gt, res = one_switch_tables()
        rep = evaluate_clear(fs(gt), fs(res, "result"))
        assert rep.idsw == 1
        assert rep.mota == pytest.approx(0.75)
        assert rep.num_gt == 4

    def test_all_misses(self):
        gt, _ = one_switch_tables()
        rep = evaluate_clear(fs(gt), fs({}, "result"))
        assert rep.mota == 0.0
        assert rep.fn == rep.num_gt == 4

    def test_identity_collision_rejected(self):
        with pytest.raises(InputError):
            fs({1: [(1, BOX), (1, BOX)]})

    def test_continuity_preference_avoids_spurious_switch(self):
        # two identical overlapping objects: continuity keeps the pairing
        a = (0.0, 0.0, 10.0, 10.0)
        b = (6.0, 0.0, 10.0, 10.0)
        gt = {f: [(1, a), (2, b)] for f in range(1, 4)}
        res = {f: [(11, a), (12, b)] for f in range(1, 4)}
        rep = evaluate_clear(fs(gt), fs(res, "result"))
        assert rep.idsw == 0 and rep.mota == 1.0


class TestIdf1:
    def test_perfect(self):
        gt, _ = one_switch_tables()
        assert evaluate_idf1(fs(gt), fs(gt, "result")).idf1 == 1.0

    def test_one_switch(self):
        gt, res = one_switch_tables()
        rep = evaluate_idf1(fs(gt), fs(res, "result"))
        assert (rep.idtp, rep.idfp, rep.idfn) == (2, 2, 2)
        assert rep.idf1 == pytest.approx(0.5)

    def test_empty_result(self):
        gt, _ = one_switch_tables()
        assert evaluate_idf1(fs(gt), fs({}, "result")).idf1 == 0.0


class TestHota:
    def test_perfect(self):
        gt, _ = one_switch_tables()
        rep = evaluate_hota(fs(gt), fs(gt, "result"))
        assert rep.hota == pytest.approx(1.0)
        assert rep.deta == rep.assa == rep.loca == pytest.approx(1.0)

    def test_one_switch(self):
        gt, res = one_switch_tables()
        rep = evaluate_hota(fs(gt), fs(res, "result"))
        for deta_a, assa_a, hota_a in rep.per_alpha:
            assert deta_a == pytest.approx(1.0)
            assert assa_a == pytest.approx(0.5)
            assert hota_a == pytest.approx(math.sqrt(0.5), abs=1e-9)
        assert rep.hota == pytest.approx(math.sqrt(0.5), abs=1e-9)

    def test_empty_result(self):
        gt, _ = one_switch_tables()
        rep = evaluate_hota(fs(gt), fs({}, "result"))
        assert rep.hota == 0.0

    def test_sqrt_identity_holds_per_alpha(self):
        rng = np.random.default_rng(3)
        gt, res = oracles.random_scenario(rng)
        rep = evaluate_hota(fs(gt), fs(res, "result"))
        for deta_a, assa_a, hota_a in rep.per_alpha:
            assert hota_a == pytest.approx(math.sqrt(deta_a * assa_a), abs=1e-12)


class TestInvariantProperties:
    def test_ranges(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            gt, res = oracles.random_scenario(rng)
            rep = evaluate_all(fs(gt), fs(res, "result"))
            assert rep.clear.mota <= 1.0
            assert 0.0 <= rep.ident.idf1 <= 1.0
            assert 0.0 <= rep.hota.hota <= 1.0
            assert 0.0 <= rep.hota.deta <= 1.0
            assert 0.0 <= rep.hota.assa <= 1.0
            if rep.clear.num_gt > 0:
                expect = 1.0 - (rep.clear.fp + rep.clear.fn + rep.clear.idsw) / rep.clear.num_gt
                assert rep.clear.mota == pytest.approx(expect, abs=1e-12)

    def test_pure_fp_never_improves(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            gt, res = oracles.random_scenario(rng)
            base = evaluate_all(fs(gt), fs(res, "result"))
            res2 = {f: list(items) for f, items in res.items()}
            # a far-away detection with a fresh identity on some frame
            fno = 1
            res2.setdefault(fno, [])
            res2[fno] = res2[fno] + [(999, (5000.0, 5000.0, 10.0, 10.0))]
            worse = evaluate_all(fs(gt), fs(res2, "result"))
            assert worse.clear.mota <= base.clear.mota
            assert worse.ident.idf1 <= base.ident.idf1 + 1e-12
            for k in range(len(HOTA_ALPHAS)):
                assert worse.hota.per_alpha[k][0] <= base.hota.per_alpha[k][0] + 1e-12

    def test_relabeling_results_changes_nothing(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            gt, res = oracles.random_scenario(rng)
            relabel = {rid: 500 + i for i, rid in enumerate(
                sorted({rid for items in res.values() for rid, _ in items})
            )}
            res2 = {
                f: [(relabel[rid], box) for rid, box in items]
                for f, items in res.items()
            }
            a = evaluate_all(fs(gt), fs(res, "result"))
            b = evaluate_all(fs(gt), fs(res2, "result"))
            assert a.clear == b.clear
            assert a.ident == b.ident
            assert a.hota.per_alpha == b.hota.per_alpha


class TestOracleEquivalence:
    def test_random_small_instances(self):
        rng = np.random.default_rng(1234)
        for trial in range(60):
            gt, res = oracles.random_scenario(rng)
            gt_set, res_set = fs(gt), fs(res, "result")

            clear = evaluate_clear(gt_set, res_set)
            oc = oracles.oracle_clear(gt, res)
            assert (clear.fp, clear.fn, clear.idsw, clear.num_gt) == (
                oc["fp"], oc["fn"], oc["idsw"], oc["num_gt"]), trial
            assert clear.mota == pytest.approx(oc["mota"], abs=1e-9)

            ident = evaluate_idf1(gt_set, res_set)
            oi = oracles.oracle_idf1(gt, res)
            assert (ident.idtp, ident.idfp, ident.idfn) == (
                oi["idtp"], oi["idfp"], oi["idfn"]), trial
            assert ident.idf1 == pytest.approx(oi["idf1"], abs=1e-9)

            hota = evaluate_hota(gt_set, res_set)
            oh = oracles.oracle_hota(gt, res)
            for k in range(len(HOTA_ALPHAS)):
                deta_a, assa_a, hota_a = hota.per_alpha[k]
                o_deta, o_assa, o_hota, o_loca, o_tp = oh["per_alpha"][k]
                assert hota.tp[k] == o_tp, (trial, k)
                assert deta_a == pytest.approx(o_deta, abs=1e-9)
                assert assa_a == pytest.approx(o_assa, abs=1e-9)
                assert hota_a == pytest.approx(o_hota, abs=1e-9)
            assert hota.hota == pytest.approx(oh["hota"], abs=1e-9)
            assert hota.loca == pytest.approx(oh["loca"], abs=1e-9)


class TestAggregate:
    def test_single_sequence_identity(self):
        gt, res = one_switch_tables()
        rep = evaluate_all(fs(gt), fs(res, "result"))
        agg = aggregate([rep])
        assert agg.clear == rep.clear
        assert agg.ident == rep.ident
        assert agg.hota.per_alpha == rep.hota.per_alpha

    def test_two_identical_sequences(self):
        gt, res = one_switch_tables()
        rep = evaluate_all(fs(gt), fs(res, "result"))
        agg = aggregate([rep, rep])
        assert agg.clear.mota == pytest.approx(rep.clear.mota)
        assert agg.clear.num_gt == 2 * rep.clear.num_gt
        assert agg.ident.idf1 == pytest.approx(rep.ident.idf1)
        assert agg.hota.hota == pytest.approx(rep.hota.hota)

    def test_half_and_half(self):
        gt = {f: [(1, BOX)] for f in range(1, 11)}
        perfect = evaluate_all(fs(gt), fs(gt, "result"))
        empty = evaluate_all(fs(gt), fs({}, "result"))
        assert perfect.clear.mota == 1.0 and empty.clear.mota == 0.0
        agg = aggregate([perfect, empty])
        assert agg.clear.mota == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            aggregate([])


class TestClassHandling:
    def test_cross_class_match_forbidden_by_default(self):
        gt = {1: [(1, BOX)]}
        res = {1: [(9, BOX)]}
        records_gt = [(1, 1, BBox(*BOX), 3)]
        records_res = [(1, 9, BBox(*BOX), 5)]
        gt_set = LabeledFrameSet.from_records(records_gt)
        res_set = LabeledFrameSet.from_records(records_res, source="result")
        aware = evaluate_clear(gt_set, res_set, class_aware=True)
        assert (aware.fp, aware.fn) == (1, 1)
        blind = evaluate_clear(gt_set, res_set, class_aware=False)
        assert (blind.fp, blind.fn) == (0, 0)

    def test_per_class_macro(self):
        records_gt = [(1, 1, BBox(*BOX), 3), (1, 2, BBox(100, 100, 20, 20), 5)]
        records_res = [(1, 9, BBox(*BOX), 3)]
        gt_set = LabeledFrameSet.from_records(records_gt)
        res_set = LabeledFrameSet.from_records(records_res, source="result")
        per_class = evaluate_per_class(gt_set, res_set)
        assert set(per_class) == {3, 5}
        assert per_class[3].clear.mota == 1.0
        assert per_class[5].clear.mota == 0.0


class TestReporting:
    def test_table_and_machine_output(self):
        gt, res = one_switch_tables()
        rep = evaluate_all(fs(gt), fs(res, "result"), name="fixture")
        table = format_table([rep])
        assert "HOTA" in table and "fixture" in table
        assert "70.71" in table  # percent scale
        doc = to_machine(rep)
        assert doc["MOTA"] == pytest.approx(0.75)
        assert doc["IDs"] == 1
        assert len(doc["per_alpha"]) == 19
