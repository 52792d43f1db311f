import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trailseg.errors import DimensionMismatch, EmptyDataset, EmptyEvaluation, MissingLux
from trailseg.fusion import FusionMode
from trailseg.geometry import DepthMap
from trailseg.metrics import (
    LUX_BINS,
    REPORT_BINS,
    REPORT_COLUMNS,
    ConfusionCounts,
    EvalFrame,
    MetricsReport,
    ReportRow,
    bin_by_lux,
    compute_metrics,
    confusion,
    evaluate,
    format_report_text,
    lux_bin,
    machine_descriptor,
    measure_fps,
    write_report_csv,
)
from trailseg.network import DcmConfig, init_weights
from trailseg.synthetic import corpus_pairs, generate_corpus

counts_st = st.integers(min_value=0, max_value=10**9)


class TestConfusion:
    def test_worked_example(self):
        acc, iou, f1 = compute_metrics(ConfusionCounts(tp=2, fp=2, fn=2, tn=4))
        assert acc == pytest.approx(0.6)
        assert iou == pytest.approx(1 / 3, abs=5e-5)
        assert f1 == pytest.approx(0.5)

    def test_counts_from_masks(self):
        pred = np.array([[1, 1, 0], [0, 1, 0]])
        truth = np.array([[1, 0, 1], [0, 1, 0]])
        c = confusion(pred, truth)
        assert (c.tp, c.fp, c.fn, c.tn) == (2, 1, 1, 2)
        assert c.total == 6

    def test_shape_and_binary_validation(self):
        with pytest.raises(DimensionMismatch):
            confusion(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            confusion(np.full((2, 2), 0.5), np.zeros((2, 2)))

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ConfusionCounts(tp=-1)

    def test_addition(self):
        a = ConfusionCounts(1, 2, 3, 4)
        b = ConfusionCounts(10, 20, 30, 40)
        s = a + b
        assert (s.tp, s.fp, s.fn, s.tn) == (11, 22, 33, 44)

    @given(counts_st, counts_st, counts_st, counts_st)
    def test_f1_iou_identity(self, tp, fp, fn, tn):
        c = ConfusionCounts(tp, fp, fn, tn)
        if c.total == 0:
            with pytest.raises(EmptyEvaluation):
                compute_metrics(c)
            return
        _, iou, f1 = compute_metrics(c)
        assert abs(f1 - 2 * iou / (1 + iou)) < 1e-12
        assert 0.0 <= iou <= 1.0 and 0.0 <= f1 <= 1.0

    def test_empty_union_counts_as_perfect(self):
        acc, iou, f1 = compute_metrics(ConfusionCounts(tn=10))
        assert (acc, iou, f1) == (1.0, 1.0, 1.0)

    def test_micro_differs_from_macro(self):
        # Pooled counts are not the mean of per-frame metrics.
        frames = [ConfusionCounts(tp=1, fp=0, fn=0, tn=99), ConfusionCounts(tp=50, fp=50, fn=0, tn=0)]
        pooled = frames[0] + frames[1]
        _, micro_iou, _ = compute_metrics(pooled)
        per_frame = [compute_metrics(c)[1] for c in frames]
        macro_iou = sum(per_frame) / 2
        assert micro_iou != pytest.approx(macro_iou)


class TestLuxBins:
    @pytest.mark.parametrize(
        "lux,bin_", [(0, "low"), (99.999, "low"), (100, "medium"), (10000, "medium"),
                     (10000.01, "high"), (1e9, "high")],
    )
    def test_boundaries(self, lux, bin_):
        assert lux_bin(lux) == bin_

    @given(st.floats(min_value=0, allow_nan=False, allow_infinity=False))
    def test_partition_disjoint_exhaustive(self, lux):
        assert lux_bin(lux) in LUX_BINS

    def test_errors(self):
        with pytest.raises(MissingLux):
            lux_bin(None)
        with pytest.raises(ValueError):
            lux_bin(-1.0)

    def test_bin_by_lux_partitions(self):
        frames = [{"lux": v} for v in (5, 99, 100, 5000, 10000, 10001, 2e6)]
        bins = bin_by_lux(frames)
        assert sum(len(v) for v in bins.values()) == len(frames)
        assert [f["lux"] for f in bins["low"]] == [5, 99]
        assert [f["lux"] for f in bins["medium"]] == [100, 5000, 10000]
        assert [f["lux"] for f in bins["high"]] == [10001, 2e6]

    def test_bin_by_lux_missing(self):
        with pytest.raises(MissingLux):
            bin_by_lux([{"a": 1}])


def scenes_to_eval_frames(scenes):
    from trailseg.synthetic import scene_dense_depth

    return [
        EvalFrame(rgb=s.rgb, depth=scene_dense_depth(s), mask=s.mask, lux=s.lux)
        for s in scenes
    ]


TINY = DcmConfig(scales=(1, 3), reduced_channels=2, backbone_channels=8, backbone_depth=2)


class TestEvaluate:
    def test_report_structure(self):
        scenes = generate_corpus(8, seed=0)
        frames = scenes_to_eval_frames(scenes)
        weights = init_weights(TINY, seed=0, mode="mixed")
        report = evaluate(weights, frames, max_depth=20.0)
        assert [r.bin for r in report.rows] == list(REPORT_BINS)
        overall = report.row("Mixed", "overall")
        assert overall.frames == 8
        assert (overall.input1, overall.input2) == ("RGB", "rgD_d")
        assert 0.0 <= overall.iou <= 1.0

    def test_multi_mode_mapping(self):
        scenes = generate_corpus(6, seed=1)
        frames = scenes_to_eval_frames(scenes)
        weights = {
            "mixed": init_weights(TINY, seed=0),
            "na-rgb": init_weights(TINY, seed=0),
        }
        report = evaluate(weights, frames, max_depth=20.0)
        assert len(report.rows) == 2 * len(REPORT_BINS)
        assert report.row("Mixed", "overall") is not None
        assert report.row("N/A", "overall") is not None

    def test_empty_bins_have_none_metrics(self):
        scenes = generate_corpus(5, seed=2, low_light=True)  # all lux < 100
        frames = scenes_to_eval_frames(scenes)
        report = evaluate(init_weights(TINY, seed=0, mode="mixed"), frames, max_depth=20.0)
        assert report.row("Mixed", "low").frames == 5
        for b in ("medium", "high"):
            row = report.row("Mixed", b)
            assert row.frames == 0 and row.iou is None

    def test_overall_is_pooled_not_averaged(self):
        scenes = generate_corpus(7, seed=3)
        frames = scenes_to_eval_frames(scenes)
        report = evaluate(init_weights(TINY, seed=1, mode="mixed"), frames, max_depth=20.0)
        per_bin = [report.row("Mixed", b) for b in LUX_BINS]
        total = sum(r.frames for r in per_bin)
        assert total == report.row("Mixed", "overall").frames == 7

    def test_requires_mode_or_mapping(self):
        frames = scenes_to_eval_frames(generate_corpus(2, seed=4))
        with pytest.raises(ValueError):
            evaluate(init_weights(TINY, seed=0), frames)  # mode=None

    def test_empty_frames(self):
        with pytest.raises(EmptyDataset):
            evaluate(init_weights(TINY, seed=0, mode="mixed"), [])


class TestFps:
    def test_positive_and_machine_tagged(self):
        scenes = generate_corpus(6, seed=5)
        pairs = corpus_pairs(scenes, "mixed")
        weights = init_weights(TINY, seed=0, mode="mixed")
        result = measure_fps(weights, [s for s, _ in pairs], warmup=2)
        assert result.fps > 0
        assert result.timed_frames == 6
        assert result.seconds > 0
        assert result.machine == machine_descriptor()
        assert result.machine.strip()

    def test_empty_samples(self):
        with pytest.raises(EmptyDataset):
            measure_fps(init_weights(TINY, seed=0), [])


class TestReportIO:
    def make_report(self):
        rows = [
            ReportRow("Mixed", "RGB", "rgD_d", "low", 0.9, 0.8, 8 / 9, 3),
            ReportRow("Mixed", "RGB", "rgD_d", "medium", None, None, None, 0),
            ReportRow("Mixed", "RGB", "rgD_d", "high", 0.5, 0.25, 0.4, 1),
            ReportRow("Mixed", "RGB", "rgD_d", "overall", 0.8, 0.6, 0.75, 4),
        ]
        from trailseg.metrics import FpsResult

        return MetricsReport(rows, FpsResult(12.5, 4, 0.32, "host x86 4cpu"))

    def test_csv_columns_and_blanks(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(REPORT_COLUMNS)
        assert len(rows) == 5
        medium = rows[2]
        assert medium[4] == medium[5] == medium[6] == ""
        assert rows[1][0] == "Mixed" and rows[1][3] == "low"
        assert float(rows[1][5]) == pytest.approx(0.8)

    def test_text_table(self):
        text = format_report_text(self.make_report())
        lines = text.splitlines()
        assert lines[0].split() == ["Mode", "Input1", "Input2", "Bin", "Accuracy", "IoU", "F1", "Frames"]
        assert any(line.startswith("FPS: 12.50") for line in lines)
        assert "-" in text  # blank metrics rendered as dashes

    def test_mode_labels(self):
        assert FusionMode.parse("mixed").label == "Mixed"
        assert FusionMode.parse("na").label == "N/A"
