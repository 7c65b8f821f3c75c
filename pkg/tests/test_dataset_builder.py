import json
import random

import pytest

from spancoder.dataset_builder import (
    ABLATION_CONFIGS,
    SampleError,
    build_code_only_sample,
    build_doc_sample,
    build_span_sample,
    build_span_samples_from_pairs,
    emit_ablation_bundles,
    emit_training_bundle,
    mix_datasets,
    sample_to_record,
)
from spancoder.documents import AnnotatedDocument, EvidenceSpan
from spancoder.inference_parser import parse_prediction
from spancoder.prompts import render_doc_prompt
from spancoder.span_expansion import EvidenceCodePair


def doc_with_layout(order: list[tuple[str, str]]) -> AnnotatedDocument:
    """Build a note placing the given (span, code) pairs left to right."""
    text = "Patient summary: " + " | ".join(span for span, _ in order) + "."
    evidence = []
    cursor = 0
    for span, code in order:
        at = text.index(span, cursor)
        evidence.append(EvidenceSpan(text=span, code=code, start=at))
        cursor = at + len(span)
    codes = []
    for _, code in order:
        if code not in codes:
            codes.append(code)
    return AnnotatedDocument(id="synthetic", text=text, codes=tuple(codes), evidence=tuple(evidence))


class TestDocSample:
    def test_fixture_layout(self, documents, hierarchy):
        sample = build_doc_sample(documents[0], hierarchy)
        assert sample.prompt == render_doc_prompt(documents[0].text)
        assert sample.kind == "document"
        assert sample.origin == "doc-001"
        expected = (
            "### Evidence\n"
            "\n"
            "CAD\n"
            "COPD\n"
            "acute blood loss anemia\n"
            "\n"
            "### ICD-10-CM Codes\n"
            "\n"
            "I25.10 - Atherosclerotic heart disease of native coronary artery without angina pectoris\n"
            "J44.9 - Chronic obstructive pulmonary disease, unspecified\n"
            "D62 - Acute posthemorrhagic anemia"
        )
        assert sample.completion == expected

    def test_code_order_tracks_span_positions(self, hierarchy):
        forward = doc_with_layout([("chest pain", "R07.9"), ("low back pain", "M54.50")])
        backward = doc_with_layout([("low back pain", "M54.50"), ("chest pain", "R07.9")])
        first = build_doc_sample(forward, hierarchy)
        second = build_doc_sample(backward, hierarchy)

        def code_lines(sample):
            return sample.completion.split("### ICD-10-CM Codes\n\n")[1].splitlines()

        def evidence_lines(sample):
            middle = sample.completion.split("### Evidence\n\n")[1]
            return middle.split("\n\n### ICD-10-CM Codes")[0].splitlines()

        assert code_lines(first) == list(reversed(code_lines(second)))
        assert evidence_lines(first) == list(reversed(evidence_lines(second)))

    def test_multi_span_code_emitted_once_at_earliest(self, hierarchy):
        doc = doc_with_layout(
            [("chest pain", "R07.9"), ("low back pain", "M54.50"), ("chest pressure", "R07.9")]
        )
        sample = build_doc_sample(doc, hierarchy)
        code_block = sample.completion.split("### ICD-10-CM Codes\n\n")[1]
        assert code_block.splitlines() == [
            "R07.9 - Chest pain, unspecified",
            "M54.50 - Low back pain, unspecified",
        ]

    def test_duplicate_span_text_collapses(self, hierarchy):
        doc = doc_with_layout([("chest pain", "R07.9"), ("chest pain", "R07.9")])
        sample = build_doc_sample(doc, hierarchy)
        evidence = sample.completion.split("### Evidence\n\n")[1].split("\n\n")[0]
        assert evidence.splitlines() == ["chest pain"]

    def test_code_without_evidence_rejected(self, hierarchy):
        doc = AnnotatedDocument(
            id="d",
            text="chest pain noted",
            codes=("R07.9", "I10"),
            evidence=(EvidenceSpan("chest pain", "R07.9", 0),),
        )
        with pytest.raises(SampleError, match="I10"):
            build_doc_sample(doc, hierarchy)

    def test_offsetless_spans_use_first_occurrence(self, documents, hierarchy):
        offsetless = documents[4]
        assert all(s.start is None for s in offsetless.evidence)
        sample = build_doc_sample(offsetless, hierarchy)
        evidence = sample.completion.split("### Evidence\n\n")[1].split("\n\n")[0].splitlines()
        positions = [offsetless.text.find(e) for e in evidence]
        assert positions == sorted(positions)

    def test_round_trip_through_parser(self, documents, hierarchy):
        for doc in documents:
            sample = build_doc_sample(doc, hierarchy)
            parsed = parse_prediction(sample.completion, hierarchy)
            expected_evidence = []
            for span in sorted(doc.evidence, key=doc.span_position):
                if span.text not in expected_evidence:
                    expected_evidence.append(span.text)
            assert list(parsed.evidence) == expected_evidence
            assert set(parsed.codes) == set(doc.codes)
            assert parsed.unknown_codes == ()


class TestSpanSample:
    def test_single_code(self, hierarchy):
        sample = build_span_sample("Anemia", ["D62"], hierarchy)
        assert sample.completion == "D62 - Acute posthemorrhagic anemia"
        assert sample.kind == "span"
        assert sample.body == "Anemia"

    def test_two_codes_sorted(self, hierarchy):
        sample = build_span_sample("anemia work-up", ["D64.9", "D62"], hierarchy)
        assert sample.completion.splitlines() == [
            "D62 - Acute posthemorrhagic anemia",
            "D64.9 - Anemia, unspecified",
        ]

    def test_empty_evidence_rejected(self, hierarchy):
        with pytest.raises(SampleError):
            build_span_sample("  ", ["D62"], hierarchy)

    def test_grouping_from_pairs(self, hierarchy):
        pairs = [
            EvidenceCodePair(evidence="anemia", code="D64.9", source="gold"),
            EvidenceCodePair(evidence="anemia", code="D62", source="silver"),
            EvidenceCodePair(evidence="CAD", code="I25.10", source="gold"),
        ]
        samples = build_span_samples_from_pairs(pairs, hierarchy)
        assert [s.body for s in samples] == ["CAD", "anemia"]
        multi = samples[1]
        assert multi.completion.splitlines() == [
            "D62 - Acute posthemorrhagic anemia",
            "D64.9 - Anemia, unspecified",
        ]
        assert multi.origin == "gold+silver"


class TestCodeOnlySample:
    def test_exactly_code_lines(self, documents, hierarchy):
        doc = documents[0]
        sample = build_code_only_sample(doc, hierarchy)
        assert sample.kind == "code_only"
        lines = sample.completion.splitlines()
        assert len(lines) == len(doc.codes)
        assert "### " not in sample.completion
        assert lines[0].startswith(doc.codes[0] + " - ")

    def test_gold_label_order_preserved(self, hierarchy):
        doc = AnnotatedDocument(
            id="d", text="note text", codes=("M54.50", "D62"), evidence=()
        )
        sample = build_code_only_sample(doc, hierarchy)
        assert [line.split(" - ")[0] for line in sample.completion.splitlines()] == [
            "M54.50",
            "D62",
        ]

    def test_empty_codes_rejected(self, hierarchy):
        doc = AnnotatedDocument(id="d", text="note", codes=(), evidence=())
        with pytest.raises(SampleError):
            build_code_only_sample(doc, hierarchy)


class TestMixing:
    def make_samples(self, documents, hierarchy, n_spans=3):
        docs = [build_doc_sample(d, hierarchy) for d in documents[:2]]
        spans = [
            build_span_sample(f"span {i}", ["D62"], hierarchy, origin=f"s{i}")
            for i in range(n_spans)
        ]
        return docs, spans

    def test_count_conservation(self, documents, hierarchy):
        docs, spans = self.make_samples(documents, hierarchy)
        mixed = mix_datasets(docs, spans, seed=1, duplication=1)
        assert len(mixed) == 5

    def test_duplication(self, documents, hierarchy):
        docs, _ = self.make_samples(documents, hierarchy)
        assert len(mix_datasets(docs, [], seed=1, duplication=3)) == 6

    def test_same_seed_same_order(self, documents, hierarchy):
        docs, spans = self.make_samples(documents, hierarchy)
        assert mix_datasets(docs, spans, seed=9, duplication=2) == mix_datasets(
            docs, spans, seed=9, duplication=2
        )

    def test_different_seed_same_multiset(self, documents, hierarchy):
        docs, spans = self.make_samples(documents, hierarchy, n_spans=8)
        one = mix_datasets(docs, spans, seed=1)
        two = mix_datasets(docs, spans, seed=2)
        assert one != two
        assert sorted(s.origin for s in one) == sorted(s.origin for s in two)

    def test_duplication_validated(self, documents, hierarchy):
        docs, spans = self.make_samples(documents, hierarchy)
        with pytest.raises(ValueError):
            mix_datasets(docs, spans, seed=1, duplication=0)

    def test_permutation_property(self, documents, hierarchy):
        rng = random.Random(5)
        docs, spans = self.make_samples(documents, hierarchy, n_spans=6)
        for _ in range(20):
            seed = rng.randrange(10_000)
            dup = rng.randint(1, 4)
            mixed = mix_datasets(docs, spans, seed=seed, duplication=dup)
            assert len(mixed) == dup * len(docs) + len(spans)
            assert sorted(s.prompt for s in mixed) == sorted(
                s.prompt for s in docs * dup + spans
            )


class TestBundleEmission:
    def test_files_and_config(self, documents, hierarchy, tmp_path):
        samples = [build_doc_sample(d, hierarchy) for d in documents]
        manifest = emit_training_bundle(samples, tmp_path, seed=42)
        dataset = (tmp_path / "dataset.jsonl").read_text(encoding="utf-8")
        records = [json.loads(line) for line in dataset.splitlines()]
        assert len(records) == 5
        assert set(records[0]) == {"instruction", "input", "output", "kind", "origin"}
        config = (tmp_path / "training_config.txt").read_text(encoding="utf-8")
        assert config == (
            "adapter_rank: 8\n"
            "batch_size: 16\n"
            "learning_rate: 0.0001\n"
            "scheduler: cosine\n"
            "warmup_ratio: 0.1\n"
            "seed: 42\n"
        )
        assert manifest["files"]["dataset.jsonl"]["records"] == 5
        assert len(manifest["files"]["dataset.jsonl"]["sha256"]) == 64

    def test_rerun_identical_hashes(self, documents, hierarchy, tmp_path):
        samples = [build_doc_sample(d, hierarchy) for d in documents]
        first = emit_training_bundle(samples, tmp_path / "a", seed=7)
        second = emit_training_bundle(samples, tmp_path / "b", seed=7)
        assert first == second

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(SampleError):
            emit_training_bundle([], tmp_path, seed=1)

    def test_record_prompt_reconstructable(self, documents, hierarchy):
        sample = build_doc_sample(documents[0], hierarchy)
        record = sample_to_record(sample)
        assert record["instruction"] + record["input"] + "\n" == sample.prompt
        assert record["output"] == sample.completion


class TestAblation:
    def test_four_configs_with_expected_counts(self, documents, hierarchy, tmp_path):
        gold = [EvidenceCodePair(evidence="Anemia", code="D64.9", source="gold")]
        full = gold + [
            EvidenceCodePair(evidence="CAD", code="I25.10", source="silver"),
            EvidenceCodePair(evidence="irregular rhythm", code="I48.91", source="synthetic"),
        ]
        manifests = emit_ablation_bundles(
            documents, gold, full, hierarchy, tmp_path, seed=42, duplication=2
        )
        assert set(manifests) == set(ABLATION_CONFIGS)
        records = {
            name: manifests[name]["files"]["dataset.jsonl"]["records"] for name in manifests
        }
        assert records == {
            "code_only": 10,
            "evidence": 10,
            "evidence_gold": 11,
            "full": 13,
        }
        for name in manifests:
            assert (tmp_path / name / "dataset.jsonl").exists()
            assert (tmp_path / name / "training_config.txt").exists()

    def test_code_only_config_has_no_evidence_sections(self, documents, hierarchy, tmp_path):
        manifests = emit_ablation_bundles(documents, [], [], hierarchy, tmp_path, seed=1)
        assert set(manifests) == set(ABLATION_CONFIGS)
        lines = (tmp_path / "code_only" / "dataset.jsonl").read_text().splitlines()
        for line in lines:
            record = json.loads(line)
            assert record["kind"] == "code_only"
            assert "### Evidence" not in record["output"]
