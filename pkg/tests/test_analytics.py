import pytest

from analytics import analytics_engine, knn_matches_truth
from attacks import FlawSetting, demonstrate_flaw
from numkit import SeededRng
from protocol import run_full_query
from report_pdf import pdf_generator


def comparison(pair, decision, truth, flawed=None):
    return {"pair": list(pair), "decision": decision, "truth": truth, "flawed_decision": flawed}


class TestKnnMatch:
    def test_exact_match(self):
        assert knn_matches_truth([0, 2], [100, 260, 180, 200], 2)

    def test_tie_accepts_either_index(self):
        distances = [100, 260, 180, 200, 260]
        assert knn_matches_truth([0, 2, 3, 1], distances, 4)
        assert knn_matches_truth([0, 2, 3, 4], distances, 4)

    def test_wrong_poi(self):
        assert not knn_matches_truth([1], [100, 260, 180], 1)

    def test_duplicate_or_short(self):
        assert not knn_matches_truth([0, 0], [100, 260, 180], 2)
        assert not knn_matches_truth([0], [100, 260, 180], 2)


class TestProcessComparisons:
    def test_counts(self):
        metrics = analytics_engine.process_comparisons([
            comparison((0, 1), False, False),
            comparison((0, 2), True, False, flawed=True),
            comparison((1, 2), True, True, flawed=False),
        ])
        assert metrics["pairs"] == 3
        assert metrics["correct_decisions"] == 2
        assert metrics["decision_accuracy"] == pytest.approx(2 / 3)
        assert metrics["wrong_pairs"] == [[0, 2]]
        assert metrics["errors_by_poi"] == {"0": 1, "2": 1}
        assert metrics["flawed_decisions_wrong"] == 2
        assert metrics["knn_matches_truth"] is None

    def test_empty(self):
        metrics = analytics_engine.process_comparisons([], [], [], 0)
        assert metrics["pairs"] == 0
        assert metrics["decision_accuracy"] == 0.0

    def test_from_transcript(self, scene_factory, settings):
        transcript = run_full_query(scene_factory(), settings)
        metrics = analytics_engine.process_comparisons(
            transcript.comparisons, transcript.response.indices, transcript.sidecar["distances"], 1)
        assert metrics["pairs"] == 3
        assert metrics["decision_accuracy"] == 1.0
        assert metrics["knn_matches_truth"]


def test_process_flaw_report():
    report = demonstrate_flaw(FlawSetting(15, 4), 400, SeededRng(4))
    stats = analytics_engine.process_flaw_report(report)
    assert stats["trials"] == 400
    assert stats["exact_agreement_rate"] == pytest.approx(15 / 32)
    assert stats["deviation"] == pytest.approx(abs(stats["agreement_rate"] - 15 / 32))
    assert stats["counterexamples"] == len(report.counterexamples)


class TestPdf:
    def test_transcript_pdf(self, scene_factory, settings, tmp_path):
        data = run_full_query(scene_factory(), settings).to_dict()
        path = tmp_path / "run.pdf"
        pdf_generator.generate_report(data, str(path))
        assert path.read_bytes().startswith(b"%PDF")

    def test_pdf_is_reproducible(self, tmp_path):
        data = demonstrate_flaw(FlawSetting(15, 4), 50, SeededRng(1)).to_dict()
        a, b = tmp_path / "a.pdf", tmp_path / "b.pdf"
        pdf_generator.generate_report(data, str(a))
        pdf_generator.generate_report(data, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            pdf_generator.generate_report({"format_version": "other/1"}, str(tmp_path / "x.pdf"))
