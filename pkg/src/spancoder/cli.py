"""Command-line entry point tying the pipeline together.

Subcommands: kb build, pairs gold|silver|synth, dataset build, infer, eval,
serve. Settings come from defaults, then an optional JSON config file
(--config flag or SPANCODER_CONFIG env var), then explicit flags, last one
winning. Every run ends with one machine-readable JSON summary line on
stdout. Exit codes: 0 success, 1 validation error, 2 gateway or IO error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import dataset_builder, span_expansion
from .documents import DocumentError, load_documents
from .eval_metrics import (
    evaluate_corpus,
    format_report_table,
    match_evidence_llm,
    match_evidence_local,
    report_to_dict,
    save_report,
)
from .icd_kb import load_hierarchy, parse_alpha_index, parse_order_file
from .inference_parser import (
    load_predictions,
    predict_document,
    predict_with_evidence,
    save_predictions,
)
from .llm_gateway import Gateway, GatewayError, load_transcript

CONFIG_ENV_VAR = "SPANCODER_CONFIG"


@dataclass
class ToolConfig:
    kb: str | None = None
    index: str | None = None
    base_url: str | None = None
    model: str = "default-model"
    api_key_env: str = "SPANCODER_API_KEY"
    cache_dir: str | None = None
    transcript: str | None = None
    temperature: float = 0.0
    max_tokens: int = 1024
    parallelism: int = 4
    retry_limit: int = 2
    seed: int = 42
    duplication: int = 1
    consolidation_cap: int = span_expansion.DEFAULT_CONSOLIDATION_CAP
    tau: float = 0.5

    def validate(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.duplication < 1:
            raise ValueError("duplication must be >= 1")
        if self.consolidation_cap < 1:
            raise ValueError("consolidation cap must be >= 1")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")


def load_config(args: argparse.Namespace) -> ToolConfig:
    """defaults < config file < explicit flags"""
    values: dict = {}
    config_path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        file_values = json.loads(Path(config_path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(ToolConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for f in fields(ToolConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    config = ToolConfig(**values)
    config.validate()
    return config


def build_gateway(config: ToolConfig) -> Gateway:
    if config.transcript:
        transcript = load_transcript(config.transcript)
        return Gateway(
            model=config.model,
            transcript=transcript,
            cache_dir=config.cache_dir,
            temperature=config.temperature,
            max_tokens=config.max_tokens,
        )
    if not config.base_url:
        raise ValueError("model endpoint needs --base-url (or a --transcript for mock mode)")
    return Gateway(
        model=config.model,
        base_url=config.base_url,
        api_key=os.environ.get(config.api_key_env),
        cache_dir=config.cache_dir,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        retry_limit=config.retry_limit,
    )


def _summary(command: str, **payload) -> None:
    print(json.dumps({"command": command, **payload}, ensure_ascii=False, sort_keys=True))


def _sha256(path: str | Path) -> str:
    return dataset_builder.file_sha256(path)


# -- subcommand handlers -----------------------------------------------------------


def cmd_kb_build(args) -> int:
    hierarchy = parse_order_file(Path(args.order).read_text(encoding="utf-8"))
    Path(args.out).write_text(hierarchy.to_json(), encoding="utf-8")
    _summary(
        "kb build",
        codes=len(hierarchy),
        roots=len(hierarchy.roots),
        out=args.out,
        sha256=_sha256(args.out),
    )
    return 0


def cmd_pairs_gold(args) -> int:
    hierarchy = load_hierarchy(args.kb)
    index = parse_alpha_index(Path(args.index).read_text(encoding="utf-8"))
    pairs, dropped = span_expansion.extract_gold_pairs(index, hierarchy)
    span_expansion.save_pairs(pairs, args.out)
    _summary(
        "pairs gold",
        entries=len(index),
        pairs=len(pairs),
        dropped=dropped,
        out=args.out,
        sha256=_sha256(args.out),
    )
    return 0


def cmd_pairs_silver(args, config: ToolConfig) -> int:
    hierarchy = load_hierarchy(args.kb)
    documents = load_documents(args.docs)
    gold_pairs = span_expansion.load_pairs(args.gold) if args.gold else []
    gateway = build_gateway(config)
    pairs, skipped = span_expansion.build_silver_pairs(
        documents,
        gateway,
        hierarchy,
        gold_pairs=gold_pairs,
        parallelism=config.parallelism,
        cap=config.consolidation_cap,
    )
    span_expansion.save_pairs(pairs, args.out)
    _summary(
        "pairs silver",
        documents=len(documents),
        skipped=skipped,
        pairs=len(pairs),
        network_calls=gateway.network_calls,
        out=args.out,
        sha256=_sha256(args.out),
    )
    return 0


def cmd_pairs_synth(args, config: ToolConfig) -> int:
    hierarchy = load_hierarchy(args.kb)
    existing = [pair for path in args.pairs for pair in span_expansion.load_pairs(path)]
    if args.targets == "billable":
        targets = [c for c in hierarchy.codes() if hierarchy.record(c).billable]
    else:
        targets = hierarchy.codes()
    knowledge = span_expansion.knowledge_from_pairs(existing)
    gateway = build_gateway(config)
    synthetic, residue = span_expansion.build_synthetic_pairs(
        targets, hierarchy, knowledge, gateway, quota=config.consolidation_cap
    )
    span_expansion.save_pairs(synthetic, args.out)
    coverage = span_expansion.coverage_report(existing + synthetic, targets)
    _summary(
        "pairs synth",
        targets=len(targets),
        synthesized=len(synthetic),
        residue=sorted(residue),
        uncovered=len(coverage.uncovered),
        network_calls=gateway.network_calls,
        out=args.out,
        sha256=_sha256(args.out),
    )
    return 0


def cmd_dataset_build(args, config: ToolConfig) -> int:
    hierarchy = load_hierarchy(args.kb)
    documents = load_documents(args.docs)
    all_pairs = [pair for path in (args.pairs or []) for pair in span_expansion.load_pairs(path)]
    if args.ablation:
        gold_pairs = [p for p in all_pairs if p.source == span_expansion.SOURCE_GOLD]
        manifests = dataset_builder.emit_ablation_bundles(
            documents,
            gold_pairs,
            all_pairs,
            hierarchy,
            args.out,
            seed=config.seed,
            duplication=config.duplication,
        )
        _summary(
            "dataset build",
            ablation=True,
            out=args.out,
            configs={
                name: manifest["files"]["dataset.jsonl"] for name, manifest in manifests.items()
            },
        )
        return 0
    doc_samples = [dataset_builder.build_doc_sample(d, hierarchy) for d in documents]
    span_samples = dataset_builder.build_span_samples_from_pairs(all_pairs, hierarchy)
    mixed = dataset_builder.mix_datasets(
        doc_samples, span_samples, seed=config.seed, duplication=config.duplication
    )
    manifest = dataset_builder.emit_training_bundle(mixed, args.out, seed=config.seed)
    _summary(
        "dataset build",
        ablation=False,
        documents=len(doc_samples),
        spans=len(span_samples),
        records=len(mixed),
        out=args.out,
        sha256=manifest["files"]["dataset.jsonl"]["sha256"],
    )
    return 0


def cmd_infer(args, config: ToolConfig) -> int:
    hierarchy = load_hierarchy(args.kb)
    documents = load_documents(args.docs)
    gateway = build_gateway(config)
    results = {}
    for doc in documents:
        if args.with_gold_evidence:
            spans = [span.text for span in doc.evidence]
            if not spans:
                raise ValueError(f"document {doc.id!r} has no gold evidence to prefill")
            results[doc.id] = predict_with_evidence(doc.text, spans, gateway, hierarchy)
        else:
            results[doc.id] = predict_document(doc.text, gateway, hierarchy)
    save_predictions(results, args.out)
    _summary(
        "infer",
        documents=len(documents),
        with_gold_evidence=bool(args.with_gold_evidence),
        network_calls=gateway.network_calls,
        out=args.out,
        sha256=_sha256(args.out),
    )
    return 0


def cmd_eval(args, config: ToolConfig) -> int:
    documents = load_documents(args.gold)
    predictions = load_predictions(args.pred)
    code_pairs = []
    evidence_counts = []
    gateway = build_gateway(config) if args.evidence == "llm" else None
    for doc in documents:
        result = predictions.get(doc.id)
        predicted_codes = set(result.codes) if result else set()
        code_pairs.append((set(doc.codes), predicted_codes))
        if args.evidence == "none":
            continue
        gold_spans = [span.text for span in doc.evidence]
        if not gold_spans:
            continue
        predicted_spans = list(result.evidence) if result else []
        if args.evidence == "local":
            evidence_counts.append(
                match_evidence_local(predicted_spans, gold_spans, similarity_threshold=config.tau)
            )
        else:
            evidence_counts.append(match_evidence_llm(predicted_spans, gold_spans, gateway))
    report = evaluate_corpus(
        code_pairs, evidence_counts if evidence_counts else None, macro_universe=args.macro
    )
    print(format_report_table(report))
    if args.out:
        save_report(report, args.out)
    _summary(
        "eval",
        documents=len(documents),
        evidence=args.evidence,
        **{k: v for k, v in report_to_dict(report).items() if k != "per_code"},
    )
    return 0


def cmd_serve(args, config: ToolConfig) -> int:
    from .review_service import create_app

    hierarchy = load_hierarchy(args.kb)
    gateway = build_gateway(config)
    app = create_app(
        args.store,
        documents=args.docs,
        gateway=gateway,
        hierarchy=hierarchy,
        ui_dir=args.ui,
        tau=config.tau,
    )
    _summary("serve", store=args.store, host=args.host, port=args.port)
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# -- argument wiring ----------------------------------------------------------------


def _add_gateway_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default=None)
    parser.add_argument("--base-url", dest="base_url", default=None)
    parser.add_argument("--api-key-env", dest="api_key_env", default=None)
    parser.add_argument("--cache-dir", dest="cache_dir", default=None)
    parser.add_argument("--transcript", default=None, help="mock transcript JSONL")
    parser.add_argument("--temperature", type=float, default=None)
    parser.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    parser.add_argument("--parallelism", type=int, default=None)
    parser.add_argument("--retry-limit", dest="retry_limit", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spancoder")
    parser.add_argument("--config", default=None, help="JSON config file")
    commands = parser.add_subparsers(dest="command", required=True)

    kb = commands.add_parser("kb", help="knowledge base operations")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    kb_build = kb_sub.add_parser("build", help="compile an order file to a snapshot")
    kb_build.add_argument("--order", required=True)
    kb_build.add_argument("--out", required=True)
    kb_build.set_defaults(handler=lambda a, c: cmd_kb_build(a))

    pairs = commands.add_parser("pairs", help="evidence-code pair tiers")
    pairs_sub = pairs.add_subparsers(dest="pairs_command", required=True)

    gold = pairs_sub.add_parser("gold", help="curated index terms")
    gold.add_argument("--index", required=True)
    gold.add_argument("--kb", required=True)
    gold.add_argument("--out", required=True)
    gold.set_defaults(handler=lambda a, c: cmd_pairs_gold(a))

    silver = pairs_sub.add_parser("silver", help="mine labeled notes")
    silver.add_argument("--docs", required=True)
    silver.add_argument("--kb", required=True)
    silver.add_argument("--gold", default=None, help="gold pairs for index terms")
    silver.add_argument("--out", required=True)
    _add_gateway_flags(silver)
    silver.add_argument("--consolidation-cap", dest="consolidation_cap", type=int, default=None)
    silver.set_defaults(handler=cmd_pairs_silver)

    synth = pairs_sub.add_parser("synth", help="synthesize for uncovered codes")
    synth.add_argument("--kb", required=True)
    synth.add_argument("--pairs", nargs="+", required=True, help="existing pair stores")
    synth.add_argument("--targets", choices=("all", "billable"), default="all")
    synth.add_argument("--out", required=True)
    _add_gateway_flags(synth)
    synth.add_argument("--consolidation-cap", dest="consolidation_cap", type=int, default=None)
    synth.set_defaults(handler=cmd_pairs_synth)

    dataset = commands.add_parser("dataset", help="training dataset emission")
    dataset_sub = dataset.add_subparsers(dest="dataset_command", required=True)
    dataset_build = dataset_sub.add_parser("build")
    dataset_build.add_argument("--docs", required=True)
    dataset_build.add_argument("--kb", required=True)
    dataset_build.add_argument("--pairs", nargs="*", default=None)
    dataset_build.add_argument("--out", required=True)
    dataset_build.add_argument("--seed", type=int, default=None)
    dataset_build.add_argument("--duplication", type=int, default=None)
    dataset_build.add_argument("--ablation", action="store_true")
    dataset_build.set_defaults(handler=cmd_dataset_build)

    infer = commands.add_parser("infer", help="run inference over documents")
    infer.add_argument("--docs", required=True)
    infer.add_argument("--kb", required=True)
    infer.add_argument("--out", required=True)
    infer.add_argument("--with-gold-evidence", action="store_true")
    _add_gateway_flags(infer)
    infer.set_defaults(handler=cmd_infer)

    evaluate = commands.add_parser("eval", help="score predictions")
    evaluate.add_argument("--gold", required=True, help="documents JSONL with gold labels")
    evaluate.add_argument("--pred", required=True, help="predictions JSONL")
    evaluate.add_argument("--evidence", choices=("none", "local", "llm"), default="none")
    evaluate.add_argument("--macro", choices=("union", "gold"), default="union")
    evaluate.add_argument("--tau", type=float, default=None)
    evaluate.add_argument("--out", default=None, help="report JSON path")
    _add_gateway_flags(evaluate)
    evaluate.set_defaults(handler=cmd_eval)

    serve = commands.add_parser("serve", help="run the review service")
    serve.add_argument("--docs", required=True)
    serve.add_argument("--kb", required=True)
    serve.add_argument("--store", required=True)
    serve.add_argument("--ui", default=None, help="built frontend directory")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8123)
    _add_gateway_flags(serve)
    serve.add_argument("--tau", type=float, default=None)
    serve.set_defaults(handler=cmd_serve)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        config = load_config(args)
        return args.handler(args, config)
    except GatewayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, DocumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
