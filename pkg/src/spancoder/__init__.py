"""Evidence-first ICD-10-CM coding toolkit.

Pipeline: build a code knowledge base from the official order file, expand
an evidence-code pair store over three tiers (curated, mined, generated),
render instruction datasets, run and parse inference, score predictions,
and review results through a REST service.
"""

from .documents import AnnotatedDocument, DocumentError, EvidenceSpan, load_documents, save_documents
from .icd_kb import (
    CodeHierarchy,
    CodeRecord,
    CodeShapeError,
    IndexEntry,
    OrderFileError,
    UnknownCodeError,
    load_hierarchy,
    nearest_code,
    normalize_code,
    parse_alpha_index,
    parse_order_file,
)
from .llm_gateway import (
    ChatRequest,
    ChatResponse,
    CompletionParseError,
    Gateway,
    GatewayError,
    MockMissError,
    load_transcript,
    request_hash,
    save_transcript,
)
from .span_expansion import (
    CoverageReport,
    EvidenceCodePair,
    aggregate_evidence,
    build_silver_pairs,
    build_synthetic_pairs,
    consolidate_code_evidence,
    coverage_report,
    extract_gold_pairs,
    knowledge_from_pairs,
    load_pairs,
    mine_document_evidence,
    save_pairs,
    synthesize_for_code,
)
from .dataset_builder import (
    InstructionSample,
    SampleError,
    build_code_only_sample,
    build_doc_sample,
    build_span_sample,
    build_span_samples_from_pairs,
    emit_ablation_bundles,
    emit_training_bundle,
    mix_datasets,
)
from .inference_parser import (
    PredictionResult,
    parse_prediction,
    predict_document,
    predict_with_evidence,
    render_evid_prompt,
    render_inference_prompt,
)
from .eval_metrics import (
    EvalReport,
    MatchCounts,
    code_set_metrics,
    evaluate_corpus,
    evidence_metrics,
    format_report_table,
    match_evidence_llm,
    match_evidence_local,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedDocument",
    "ChatRequest",
    "ChatResponse",
    "CodeHierarchy",
    "CodeRecord",
    "CodeShapeError",
    "CompletionParseError",
    "CoverageReport",
    "DocumentError",
    "EvalReport",
    "EvidenceCodePair",
    "EvidenceSpan",
    "Gateway",
    "GatewayError",
    "IndexEntry",
    "InstructionSample",
    "MatchCounts",
    "MockMissError",
    "OrderFileError",
    "PredictionResult",
    "SampleError",
    "UnknownCodeError",
    "aggregate_evidence",
    "build_code_only_sample",
    "build_doc_sample",
    "build_silver_pairs",
    "build_span_sample",
    "build_span_samples_from_pairs",
    "build_synthetic_pairs",
    "code_set_metrics",
    "consolidate_code_evidence",
    "coverage_report",
    "emit_ablation_bundles",
    "emit_training_bundle",
    "evaluate_corpus",
    "evidence_metrics",
    "extract_gold_pairs",
    "format_report_table",
    "knowledge_from_pairs",
    "load_documents",
    "load_hierarchy",
    "load_pairs",
    "load_transcript",
    "match_evidence_llm",
    "match_evidence_local",
    "mine_document_evidence",
    "mix_datasets",
    "nearest_code",
    "normalize_code",
    "parse_alpha_index",
    "parse_order_file",
    "parse_prediction",
    "predict_document",
    "predict_with_evidence",
    "render_evid_prompt",
    "render_inference_prompt",
    "request_hash",
    "save_documents",
    "save_pairs",
    "save_transcript",
]
