"""Command-line front end.

Subcommands wire the library into the full flow: ``build-dcf`` for the
domain analysis, ``extract`` for per-note CSRs, ``prune``/``summarize``
for domain-adapted output, ``score`` for the evaluation report, and
``serve-ngram`` to expose the reference model over the wire protocol.
Configuration lives in one JSON file; every value can be overridden with
``--set dotted.key=value`` or the dedicated flags. Failures print a
machine-readable error object on stderr: usage and configuration problems
exit 2, runtime failures exit 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable

from . import metrics
from .annotator import annotate, build_lexicon
from .decoder import DecodeConfig
from .lm import LmContract, LmServer, NgramLm, RemoteLm, train_ngram
from .ontology import Ontology, load_ontology
from .pipeline import (
    CSR,
    DCF,
    DomainSpec,
    Note,
    average_dcf,
    build_dcf,
    extract_csr,
    normalize_dcf,
    prune_csr,
    read_corpus,
    verbalize,
)

logger = logging.getLogger(__name__)

LOG_ENV_VAR = "ONTO_DECODE_LOG"

DEFAULTS: dict[str, Any] = {
    "ontology_path": None,
    "corpus_path": None,
    "lm": {
        "kind": "ngram",
        "order": 2,
        "corpus": None,
        "endpoint": None,
        "top_k": 50,
    },
    "decode": {
        "beam_size": 10,
        "num_groups": 2,
        "diversity_penalty": 0.5,
        "window": 10,
        "h_bf": 3.0,
        "p_bf": 10.0,
        "s_bf": 10.0,
        "max_tokens": 100,
        "similarity_full_beam": False,
    },
    "dcf": {"min_occ": 1, "domains": [], "count": "documents"},
    "prune": {"k": 30, "alpha": 2},
    "task_instruction": "Summarize these clinical notes in a short text.",
    "output_dir": "out",
}


class UsageError(ValueError):
    """Bad invocation or configuration; maps to exit code 2."""


# --------------------------------------------------------------------------
# Configuration handling
# --------------------------------------------------------------------------


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _set_dotted(config: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    target = config
    for part in parts[:-1]:
        nxt = target.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            target[part] = nxt
        target = nxt
    target[parts[-1]] = value


def load_config(args: argparse.Namespace) -> dict:
    config = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            file_config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_config, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        config = _deep_merge(config, file_config)

    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_dotted(config, key, value)

    flag_map = {
        "k": ("prune", "k"),
        "alpha": ("prune", "alpha"),
        "window": ("decode", "window"),
        "beam_size": ("decode", "beam_size"),
        "groups": ("decode", "num_groups"),
        "h_bf": ("decode", "h_bf"),
        "p_bf": ("decode", "p_bf"),
        "s_bf": ("decode", "s_bf"),
    }
    for flag, (section, key) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            config[section][key] = value
    return config


def _require(config: dict, key: str) -> Any:
    value = config.get(key)
    if not value:
        raise UsageError(f"config value {key!r} is required for this command")
    return value


def _decode_config(config: dict) -> DecodeConfig:
    try:
        cfg = DecodeConfig(**config["decode"])
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid decode configuration: {exc}") from exc
    return cfg


def _build_lm(config: dict) -> LmContract:
    lm_config = config["lm"]
    kind = lm_config.get("kind")
    if kind == "ngram":
        corpus_path = lm_config.get("corpus")
        if not corpus_path:
            raise UsageError("config value 'lm.corpus' is required for the ngram backend")
        path = Path(corpus_path)
        if not path.exists():
            raise UsageError(f"lm corpus not found: {path}")
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not lines:
            raise UsageError(f"lm corpus {path} is empty")
        return train_ngram(lines, int(lm_config.get("order", 2)))
    if kind == "remote":
        endpoint = lm_config.get("endpoint")
        if not endpoint:
            raise UsageError("config value 'lm.endpoint' is required for the remote backend")
        return RemoteLm(endpoint, top_k=int(lm_config.get("top_k", 50)))
    raise UsageError(f"unknown lm kind {kind!r}; expected 'ngram' or 'remote'")


def _load_ontology(config: dict) -> Ontology:
    path = Path(_require(config, "ontology_path"))
    if not path.exists():
        raise UsageError(f"ontology file not found: {path}")
    return load_ontology(path)


def _slug(name: str) -> str:
    cleaned = re.sub(r"[^0-9A-Za-z._-]+", "_", name).strip("_")
    return cleaned or "unnamed"


def _write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def _output_dir(config: dict) -> Path:
    out = Path(config.get("output_dir") or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map_jobs(fn: Callable, items: Iterable, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _domain_corpora(notes: list[Note], domains: list[str]) -> list[DomainSpec]:
    specs = []
    for domain in domains:
        docs = [note.text for note in notes if note.domain == domain]
        if not docs:
            raise UsageError(f"domain {domain!r} has no documents in the corpus")
        specs.append(DomainSpec(name=domain, corpus=docs))
    return specs


def _corpus_domains(config: dict, notes: list[Note]) -> list[str]:
    configured = config["dcf"].get("domains") or []
    if configured:
        return [str(d) for d in configured]
    seen: list[str] = []
    for note in notes:
        if note.domain is not None and note.domain not in seen:
            seen.append(note.domain)
    return seen


def _normalized_dcfs(config: dict, onto: Ontology, lex) -> tuple[list[DCF], DCF, list[str]]:
    corpus_path = Path(_require(config, "corpus_path"))
    if not corpus_path.exists():
        raise UsageError(f"corpus file not found: {corpus_path}")
    notes = read_corpus(corpus_path)
    domains = _corpus_domains(config, notes)
    if len(domains) < 2:
        raise UsageError(
            f"DCF normalization needs at least 2 domains, found {domains or 'none'}"
        )
    specs = _domain_corpora(notes, domains)
    dcf_cfg = config["dcf"]
    raws = [
        build_dcf(onto, lex, spec, min_occ=int(dcf_cfg.get("min_occ", 1)),
                  count=str(dcf_cfg.get("count", "documents")))
        for spec in specs
    ]
    return normalize_dcf(raws), average_dcf(raws), domains


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_build_dcf(args: argparse.Namespace) -> int:
    config = load_config(args)
    onto = _load_ontology(config)
    lex = build_lexicon(onto)
    normalized, average, _ = _normalized_dcfs(config, onto, lex)
    out = _output_dir(config)
    for dcf in normalized:
        path = out / f"dcf_{_slug(dcf.domain)}.json"
        _write_json(path, dcf.to_dict())
        print(path)
    avg_path = out / "dcf_average.json"
    _write_json(avg_path, average.to_dict())
    print(avg_path)
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    config = load_config(args)
    onto = _load_ontology(config)
    lex = build_lexicon(onto)
    cfg = _decode_config(config)
    lm = _build_lm(config)

    note_path = Path(args.note_file)
    if not note_path.exists():
        raise UsageError(f"note file not found: {note_path}")
    notes = read_corpus(note_path)
    if not notes:
        raise UsageError(f"note file {note_path} contains no notes")

    concepts = None
    if args.concept:
        unknown = [c for c in args.concept if c not in onto]
        if unknown:
            raise UsageError(f"unknown concept ids: {unknown}")
        concepts = set(args.concept)

    def one(note: Note) -> CSR:
        return extract_csr(lm, onto, lex, (note.id, note.text), cfg, concepts=concepts)

    csrs = _map_jobs(one, notes, args.jobs)
    out = _output_dir(config)
    for csr in csrs:
        path = out / f"csr_{_slug(csr.note_id)}.json"
        _write_json(path, csr.to_dict(onto))
        print(path)
    return 0


def cmd_prune(args: argparse.Namespace) -> int:
    config = load_config(args)
    onto = _load_ontology(config)
    dcf_path = Path(args.dcf)
    if not dcf_path.exists():
        raise UsageError(f"DCF file not found: {dcf_path}")
    dcf = DCF.from_dict(json.loads(dcf_path.read_text(encoding="utf-8")))
    k = int(config["prune"]["k"])
    alpha = int(config["prune"]["alpha"])

    out = _output_dir(config)
    for csr_file in args.csr_files:
        path = Path(csr_file)
        if not path.exists():
            raise UsageError(f"CSR file not found: {path}")
        csr = CSR.from_dict(json.loads(path.read_text(encoding="utf-8")))
        pruned = prune_csr(csr, dcf, onto, k=k, alpha=alpha)
        target = out / f"{path.stem}_pruned.json"
        _write_json(target, pruned.to_dict(onto))
        print(target)
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    config = load_config(args)
    onto = _load_ontology(config)
    lex = build_lexicon(onto)
    cfg = _decode_config(config)
    lm = _build_lm(config)

    admission_dir = Path(args.admission_dir)
    notes_path = admission_dir / "notes.jsonl"
    if not notes_path.exists():
        raise UsageError(f"admission directory must contain notes.jsonl: {admission_dir}")
    notes = read_corpus(notes_path)
    if not notes:
        raise UsageError(f"{notes_path} contains no notes")

    normalized, _, domains = _normalized_dcfs(config, onto, lex)
    if args.domain not in domains:
        raise UsageError(f"unknown domain {args.domain!r}; known domains: {domains}")
    domain_dcf = next(d for d in normalized if d.domain == args.domain)

    def one(note: Note) -> CSR:
        return extract_csr(lm, onto, lex, (note.id, note.text), cfg)

    csrs = _map_jobs(one, notes, args.jobs)
    if args.no_prune:
        kept = csrs
    else:
        k = int(config["prune"]["k"])
        alpha = int(config["prune"]["alpha"])
        kept = [prune_csr(csr, domain_dcf, onto, k=k, alpha=alpha) for csr in csrs]

    summary = verbalize(lm, onto, lex, kept, str(config["task_instruction"]), cfg)

    out = _output_dir(config)
    structured_path = out / "structured_summary.json"
    text_path = out / "summary.txt"
    _write_json(structured_path, [csr.to_dict(onto) for csr in kept])
    text_path.write_text(summary + "\n", encoding="utf-8")
    print(structured_path)
    print(text_path)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    config = load_config(args)
    onto = _load_ontology(config)
    lex = build_lexicon(onto)

    summary_path = Path(args.summary)
    notes_path = Path(args.notes)
    for path in (summary_path, notes_path):
        if not path.exists():
            raise UsageError(f"input file not found: {path}")
    summary = summary_path.read_text(encoding="utf-8")
    notes = read_corpus(notes_path)
    if not notes:
        raise UsageError(f"{notes_path} contains no notes")

    summary_concepts = {a.class_id for a in annotate(lex, summary)}
    note_concepts: set[str] = set()
    for note in notes:
        note_concepts |= {a.class_id for a in annotate(lex, note.text)}

    fields: dict[str, Any] = {
        "hs": metrics.hallucination_score(summary_concepts, note_concepts),
        "domain_score": None,
        "groundedness": None,
        "relevance": None,
    }
    if args.reference:
        reference_path = Path(args.reference)
        if not reference_path.exists():
            raise UsageError(f"reference file not found: {reference_path}")
        reference = reference_path.read_text(encoding="utf-8")
        reference_concepts = {a.class_id for a in annotate(lex, reference)}
        fields["rouge1"] = metrics.rouge1(summary, reference)
        fields["rouge2"] = metrics.rouge2(summary, reference)
        fields["rougeLsum"] = metrics.rouge_lsum(summary, reference)
        fields["ahs"] = metrics.adjusted_hallucination_score(
            summary_concepts, note_concepts, reference_concepts
        )
    report = metrics.evaluation_report(**fields)
    print(json.dumps(report, indent=2, ensure_ascii=False))
    return 0


def cmd_serve_ngram(args: argparse.Namespace) -> int:
    config = load_config(args)
    if config["lm"].get("kind") != "ngram":
        raise UsageError("serve-ngram requires lm.kind == 'ngram'")
    lm = _build_lm(config)
    assert isinstance(lm, NgramLm)
    server = LmServer(lm, host=args.host, port=args.port)
    print(json.dumps({
        "endpoint": server.endpoint,
        "host": server.host,
        "port": server.port,
        "eos_id": lm.eos,
        "vocab_size": lm.vocab_size,
    }), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


# --------------------------------------------------------------------------
# Parser / entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ontodecode",
        description="Ontology-guided constrained decoding and domain-adapted summaries",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to the JSON configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config value by dotted key")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel worker limit for per-note work")
    common.add_argument("--k", type=int, help="pruning: number of top classes kept")
    common.add_argument("--alpha", type=int, help="pruning: hops expanded below kept classes")
    common.add_argument("--window", type=int, help="decoder: generation window size")
    common.add_argument("--beam-size", dest="beam_size", type=int, help="decoder: beam size")
    common.add_argument("--groups", type=int, help="decoder: number of beam groups")
    common.add_argument("--h-bf", dest="h_bf", type=float, help="hierarchy boost factor")
    common.add_argument("--p-bf", dest="p_bf", type=float, help="property boost factor")
    common.add_argument("--s-bf", dest="s_bf", type=float, help="similarity boost factor")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dcf", parents=[common],
                       help="build and normalize per-domain class frequencies")
    p.set_defaults(func=cmd_build_dcf)

    p = sub.add_parser("extract", parents=[common],
                       help="extract one CSR per note in a JSONL file")
    p.add_argument("note_file")
    p.add_argument("--concept", action="append",
                   help="restrict extraction to this class id (repeatable)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("prune", parents=[common],
                       help="prune CSR files against a DCF")
    p.add_argument("csr_files", nargs="+")
    p.add_argument("--dcf", required=True, help="normalized DCF JSON file")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("summarize", parents=[common],
                       help="end-to-end domain-adapted summary for an admission")
    p.add_argument("admission_dir")
    p.add_argument("--domain", required=True, help="target domain label")
    p.add_argument("--no-prune", action="store_true",
                   help="skip DCF pruning of the extracted CSRs")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("score", parents=[common],
                       help="write the evaluation report for a summary")
    p.add_argument("summary")
    p.add_argument("notes")
    p.add_argument("--reference", help="reference summary text file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve-ngram", parents=[common],
                       help="serve the reference n-gram model over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_serve_ngram)

    return parser


def _configure_logging() -> None:
    level_name = os.environ.get(LOG_ENV_VAR, "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _print_error(exc: Exception) -> None:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _print_error(exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        _print_error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
