"""Command-line entry points.

Every subcommand takes ``--config FILE`` (JSON).  Settings resolve as
command-line flag, then the config file (top level, then a section named
after the subcommand), then the built-in default.  Each run writes a
``<output>.manifest.json`` with the resolved settings, their hash, the seed
and package versions.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 invalid input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import zlib
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .canon import (
    canonicalize_stream,
    load_lexicon,
    load_stoplist,
    read_annotations,
    select_per_sense,
    selection_summary,
)
from .grammar import GrammarError, desugar_wildcards, language_enumerate, parse_grammar
from .lm import SamplerConfig, load_lm, read_corpus, tokenize, train_ngram
from .sampler import GenRequest, divergence_report, generate_unique, write_results
from .sense import (
    MONOSEMOUS_PROMPT,
    CannedCompleter,
    PromptCandidate,
    fill,
    fit_polysemy_classifier,
    generate_glosses,
    load_lexicon as load_sense_lexicon,
    polysemy_features,
    prompt_candidates,
    score_prompts,
    best_set,
)
from .stimulus import (
    PAIR_LISTS,
    RATING_LISTS,
    CalibrationSet,
    calibration_audit,
    make_lists,
    make_pairs,
    rank_by_zsum,
    read_ratings,
    read_scores,
    select_calibration,
    write_jsonl,
    zscore_by_participant,
)

log = logging.getLogger("eventgen")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3

_SAMPLER = SamplerConfig()
DEFAULTS: dict[str, dict[str, Any]] = {
    "train-lm": {"order": 3, "k": 0.1},
    "generate": {
        "top_k": _SAMPLER.top_k,
        "top_p": _SAMPLER.top_p,
        "min_p": _SAMPLER.min_p,
        "temperature": _SAMPLER.temperature,
        "repeat_penalty": _SAMPLER.repeat_penalty,
        "max_tokens": _SAMPLER.max_tokens,
        "n_unique": 10,
        "n_keep": 4,
        "max_seeds": 100,
        "max_temps": 100,
        "temp_step": 0.1,
    },
    "canon": {"n": 4},
    "curate": {
        "k": 50,
        "block_size": RATING_LISTS.block_size,
        "list_total": RATING_LISTS.list_total,
        "target_cap": RATING_LISTS.target_cap,
        "min_gap_sd": 0.5,
    },
    "senses": {"bootstrap_b": 1000, "outer_folds": 5, "inner_folds": 4},
    "divergence": {
        "top_k": _SAMPLER.top_k,
        "top_p": _SAMPLER.top_p,
        "min_p": _SAMPLER.min_p,
        "temperature": _SAMPLER.temperature,
        "repeat_penalty": _SAMPLER.repeat_penalty,
        "max_tokens": 12,
        "cap": 200_000,
    },
    "enumerate": {"max_len": 8, "vocab_size": 0},
}
GLOBAL_DEFAULTS = {"seed": 0, "log_level": "WARNING"}

_WHY = {
    "top_p": "nucleus mass used for the original generations",
    "min_p": "min-p cutoff used for the original generations",
    "top_k": "top-k cutoff used for the original generations",
    "temperature": "starting temperature of the original generation loop",
    "repeat_penalty": "repeat penalty used for the original generations",
    "max_tokens": "token limit per sample",
    "n_unique": "distinct sentences collected per sense",
    "n_keep": "lowest-surprisal sentences kept per sense",
    "max_seeds": "seeds tried per temperature",
    "max_temps": "temperatures tried before giving up",
    "temp_step": "temperature increase after each round of seeds",
    "n": "sentences kept per sense",
    "k": "calibration sentences to select",
    "block_size": "lead-in calibration block excluded from padding",
    "list_total": "items per list (62 for the pair task)",
    "target_cap": "max targets per list (60 for the pair task)",
    "min_gap_sd": "min score gap, in SDs, between two sentences of one verb",
    "bootstrap_b": "bootstrap resamples for prompt comparison",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of the global seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def substream_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


def _opt(p: argparse.ArgumentParser, cmd: str, name: str, type_, help_: str = ""):
    default = DEFAULTS[cmd][name]
    why = help_ or _WHY.get(name, "")
    p.add_argument(
        "--" + name.replace("_", "-"), dest=name, type=type_, default=None,
        help=f"{why} (default: {default})".strip(),
    )


def _top_k(s: str):
    return None if s.lower() in ("none", "0") else int(s)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eventgen", description="Constrained sentence generation and stimulus curation.")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="global seed (default: 0)")
    common.add_argument("--log-level", default=None, help="logging level (default: WARNING)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train-lm", parents=[common], help="train the bundled n-gram LM")
    p.add_argument("--corpus", type=Path, required=True, help="one sentence per line")
    _opt(p, "train-lm", "order", int, "n-gram order")
    _opt(p, "train-lm", "k", float, "add-k smoothing constant")
    p.add_argument("--out", type=Path, required=True)

    for cmd in ("generate", "divergence"):
        p = sub.add_parser(
            cmd, parents=[common],
            help="generate sentences per request" if cmd == "generate"
            else "exact TV distance between constrained and rejection sampling",
        )
        p.add_argument("--model", type=Path, required=True, help="LM JSON file")
        p.add_argument("--out", type=Path, required=True)
        _opt(p, cmd, "top_k", _top_k)
        for name in ("top_p", "min_p", "temperature", "repeat_penalty"):
            _opt(p, cmd, name, float)
        _opt(p, cmd, "max_tokens", int)
        if cmd == "generate":
            p.add_argument("--requests", type=Path, required=True, help="JSONL of generation requests")
            for name in ("n_unique", "n_keep", "max_seeds", "max_temps"):
                _opt(p, cmd, name, int)
            _opt(p, cmd, "temp_step", float)
        else:
            p.add_argument("--grammar", type=Path, required=True)
            p.add_argument("--prompt", default="", help="prompt text the LM conditions on")
            _opt(p, cmd, "cap", int, "max prefixes to explore")

    p = sub.add_parser("canon", parents=[common], help="canonicalize annotated corpus sentences")
    p.add_argument("--annotations", type=Path, required=True, help="JSONL of annotated sentences")
    p.add_argument("--verbs", type=Path, required=True, help="target verb lemmas, one per line")
    p.add_argument("--model", type=Path, required=True, help="LM JSON file for surprisal")
    p.add_argument("--stoplist", type=Path, help="bleached nouns (default: bundled list)")
    p.add_argument("--lexicon", type=Path, help="past-tense JSON (default: bundled list)")
    _opt(p, "canon", "n", int)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("curate", parents=[common], help="ratings, calibration sets, lists and pairs")
    p.add_argument("--mode", choices=["zscore", "calibration", "lists", "pairs"], required=True)
    p.add_argument(
        "--input", type=Path, required=True,
        help="zscore: ratings CSV/JSONL; calibration: scores JSONL; "
        "lists: target ids, one per line; pairs: JSONL of verb/sense/sentence_id/z rows",
    )
    p.add_argument("--calibration", type=Path, help="lists mode: calibration JSON")
    for name in ("k", "block_size", "list_total", "target_cap"):
        _opt(p, "curate", name, int)
    _opt(p, "curate", "min_gap_sd", float)
    p.add_argument("--out", type=Path, required=True, help="file, or directory in lists mode")

    p = sub.add_parser("senses", parents=[common], help="polysemy classifier and prompt selection")
    p.add_argument("--lexicon", type=Path, required=True, help="reference sense lexicon JSON")
    p.add_argument("--model", type=Path, required=True, help="LM JSON file for yes/no features")
    p.add_argument(
        "--completions", type=Path, required=True,
        help='JSON {prompt_id: {verb: text}}; the id "monosemous" holds one-sense answers',
    )
    p.add_argument("--prompts", type=Path, help="prompt candidates JSON (default: all 48)")
    _opt(p, "senses", "bootstrap_b", int)
    _opt(p, "senses", "outer_folds", int, "outer CV folds")
    _opt(p, "senses", "inner_folds", int, "inner CV folds")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("enumerate", parents=[common], help="list a grammar's strings with probabilities")
    p.add_argument("--grammar", type=Path, required=True)
    _opt(p, "enumerate", "max_len", int, "longest string to list")
    _opt(p, "enumerate", "vocab_size", int, "placeholder vocabulary for wildcards")
    p.add_argument("--vocab", type=Path, help="wildcard vocabulary, one token per line")
    p.add_argument("--out", type=Path, help="TSV output (default: stdout)")
    return parser


def resolve(args: argparse.Namespace, cmd: str) -> dict[str, Any]:
    """Merge flags over the config file over defaults."""
    config: Mapping[str, Any] = {}
    if getattr(args, "config", None):
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(config, dict):
            raise ValueError("config file must hold a JSON object")
    section = {k: v for k, v in config.items() if not isinstance(v, dict)}
    section.update(config.get(cmd, {}))
    known = set(DEFAULTS.get(cmd, {})) | set(GLOBAL_DEFAULTS)
    unknown = set(section) - known - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown config keys for {cmd}: {sorted(unknown)}")
    out = {}
    for name, default in {**GLOBAL_DEFAULTS, **DEFAULTS.get(cmd, {})}.items():
        flag = getattr(args, name, None)
        out[name] = flag if flag is not None else section.get(name, default)
    return out


def _sampler(cfg: Mapping[str, Any], seed: int) -> SamplerConfig:
    return SamplerConfig(
        top_k=cfg["top_k"], top_p=cfg["top_p"], min_p=cfg["min_p"],
        temperature=cfg["temperature"], repeat_penalty=cfg["repeat_penalty"],
        max_tokens=cfg["max_tokens"], seed=seed,
    )


def write_manifest(out: Path, cmd: str, cfg: Mapping[str, Any], inputs: Mapping[str, Any]) -> Path:
    blob = json.dumps({"command": cmd, "config": cfg, "inputs": inputs}, sort_keys=True, default=str)
    manifest = {
        "command": cmd,
        "config": cfg,
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": cfg.get("seed"),
        "versions": {
            "eventgen": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    path = out.with_name(out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _read_lines(path: Path) -> list[str]:
    return [
        line.strip() for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def cmd_train_lm(args, cfg) -> int:
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise ValueError(f"{args.corpus}: corpus is empty")
    train_ngram(corpus, order=cfg["order"], smoothing_k=cfg["k"]).save(args.out)
    write_manifest(args.out, "train-lm", cfg, {"corpus": args.corpus})
    return EXIT_OK


def cmd_generate(args, cfg) -> int:
    lm = load_lm(args.model)
    base = asdict(_sampler(cfg, cfg["seed"]))
    results = []
    with open(args.requests, encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    for line in lines:
        d = json.loads(line)
        d["sampler"] = {**base, **d.get("sampler", {})}
        for name in ("n_unique", "n_keep", "max_seeds", "max_temps", "temp_step"):
            d.setdefault(name, cfg[name])
        req = GenRequest.from_json(d, base_dir=args.requests.parent)
        res = generate_unique(req, lm)
        if res.exhausted:
            log.warning("%s %s: only %d distinct sentences", req.verb, req.sense_id, res.n_unique_found)
        results.append(res)
    write_results(results, args.out)
    write_manifest(args.out, "generate", cfg, {"requests": args.requests, "model": args.model})
    return EXIT_OK


def cmd_divergence(args, cfg) -> int:
    lm = load_lm(args.model)
    g = parse_grammar(args.grammar.read_text(encoding="utf-8"))
    rep = divergence_report(lm, g, tokenize(args.prompt), _sampler(cfg, cfg["seed"]), cfg["cap"])

    def top(d):
        return [[" ".join(k), v] for k, v in sorted(d.items(), key=lambda kv: -kv[1])[:20]]

    _dump(
        {
            "tv": rep.tv,
            "constrained_mass": rep.local_mass,
            "language_mass": rep.global_mass,
            "constrained_top": top(rep.local),
            "rejection_top": top(rep.globl),
        },
        args.out,
    )
    write_manifest(args.out, "divergence", cfg, {"grammar": args.grammar, "model": args.model})
    return EXIT_OK


def cmd_canon(args, cfg) -> int:
    lm = load_lm(args.model)
    verbs = _read_lines(args.verbs)
    cands, errors = canonicalize_stream(
        read_annotations(args.annotations), verbs, load_stoplist(args.stoplist), load_lexicon(args.lexicon)
    )
    selected = select_per_sense(cands, lm, cfg["n"])
    with open(args.out, "w", encoding="utf-8") as fh:
        for sense, items in selected.items():
            for c in items:
                fh.write(json.dumps(c.to_json(), sort_keys=True) + "\n")
    summary = selection_summary(selected, cfg["n"])
    summary["candidates"] = len(cands)
    summary["errors"] = errors
    _dump(summary, args.out.with_name(args.out.name + ".summary.json"))
    write_manifest(args.out, "canon", cfg, {"annotations": args.annotations, "verbs": args.verbs, "model": args.model})
    return EXIT_OK


def cmd_curate(args, cfg) -> int:
    mode = args.mode
    if mode == "zscore":
        write_jsonl(zscore_by_participant(read_ratings(args.input)), args.out)
    elif mode == "calibration":
        scores = read_scores(args.input)
        cal = select_calibration(scores, cfg["k"], cfg["block_size"], cfg["min_gap_sd"])
        if cal.shortfall:
            log.warning("only %d of %d calibration sentences admissible", len(cal.selected), cal.k)
        _dump(
            {
                "selected": list(cal.selected),
                "initial_block": list(cal.initial_block),
                "k": cal.k,
                "shortfall": cal.shortfall,
                "audit": calibration_audit(scores, cal, cfg["min_gap_sd"]),
            },
            args.out,
        )
    elif mode == "lists":
        if args.calibration is None:
            raise UsageError("--calibration is required in lists mode")
        c = json.loads(args.calibration.read_text(encoding="utf-8"))
        cal = CalibrationSet(tuple(c["selected"]), tuple(c["initial_block"]), c.get("k", 0), c.get("shortfall", False))
        lists = make_lists(
            _read_lines(args.input), cal, cfg["list_total"], cfg["target_cap"],
            substream(cfg["seed"], "lists"), block_size=cfg["block_size"],
        )
        args.out.mkdir(parents=True, exist_ok=True)
        for sl in lists:
            _dump(sl.to_json(), args.out / f"list_{sl.list_number:02d}.json")
        _dump(
            {
                "n_lists": len(lists),
                "targets_per_list": [sl.target_count for sl in lists],
                "totals": [sl.total for sl in lists],
            },
            args.out / "summary.json",
        )
    else:
        with open(args.input, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        ranked = rank_by_zsum(
            (r["verb"], r["sense"], r["sentence_id"], float(r["z_naturalness"]), float(r["z_typicality"]))
            for r in rows
        )
        write_jsonl(make_pairs(ranked), args.out)
    write_manifest(args.out, f"curate-{mode}", cfg, {"input": args.input, "calibration": args.calibration})
    return EXIT_OK


def cmd_senses(args, cfg) -> int:
    lexicon = load_sense_lexicon(args.lexicon)
    lm = load_lm(args.model)
    completions = json.loads(args.completions.read_text(encoding="utf-8"))
    if args.prompts:
        candidates = [PromptCandidate.from_json(d) for d in json.loads(args.prompts.read_text(encoding="utf-8"))]
    else:
        candidates = prompt_candidates()
    verbs = sorted(lexicon)
    feats = [polysemy_features(lm, v) for v in verbs]
    labels = [len(lexicon[v]) == 1 for v in verbs]
    clf, report = fit_polysemy_classifier(
        feats, labels, seed=substream_seed(cfg["seed"], "cv"),
        outer_folds=cfg["outer_folds"], inner_folds=cfg["inner_folds"],
    )
    mono = dict(zip(verbs, (p == "monosemous" for p in clf.predict(feats))))

    poly_verbs = [v for v in verbs if len(lexicon[v]) > 1]
    ref = {v: len(lexicon[v]) for v in poly_verbs}
    for c in candidates:
        answers = CannedCompleter(completions.get(c.id, {}))
        c.counts = {
            v: len(generate_glosses(answers, v, False, c)) for v in poly_verbs
        }
    scored = score_prompts(candidates, ref, cfg["bootstrap_b"], substream_seed(cfg["seed"], "bootstrap"))
    chosen = min(best_set(scored), key=lambda c: (len(c.text), c.temperature, c.id))

    inventories = {}
    for v in verbs:
        source = completions.get("monosemous" if mono[v] else chosen.id, {})
        inv = generate_glosses(CannedCompleter(source), v, mono[v], chosen)
        inventories[v] = {
            "monosemous": mono[v],
            "senses": [list(s) for s in inv.senses],
            "diagnostic": inv.diagnostic,
        }

    args.out.mkdir(parents=True, exist_ok=True)
    _dump([{"verb": f.verb, "log_odds": list(f.log_odds), "flags": list(f.flags)} for f in feats],
          args.out / "features.json")
    _dump({k: v for k, v in asdict(report).items() if k != "inner_scores"}, args.out / "cv_report.json")
    _dump([c.to_json() for c in scored], args.out / "prompts.json")
    _dump({**chosen.to_json(), "monosemous_prompt": fill(MONOSEMOUS_PROMPT, "{{VERB}}")},
          args.out / "selected_prompt.json")
    _dump(inventories, args.out / "inventories.json")
    write_manifest(args.out / "selected_prompt.json", "senses", cfg,
                   {"lexicon": args.lexicon, "model": args.model, "completions": args.completions})
    return EXIT_OK


def cmd_enumerate(args, cfg) -> int:
    g = parse_grammar(args.grammar.read_text(encoding="utf-8"))
    if g.has_wildcards:
        if args.vocab:
            g = desugar_wildcards(g, _read_lines(args.vocab))
        elif cfg["vocab_size"] > 0:
            g = desugar_wildcards(g, cfg["vocab_size"])
        else:
            raise UsageError("grammar has wildcards: give --vocab or --vocab-size")
    rows = language_enumerate(g, cfg["max_len"])
    text = "".join(f"{p!r}\t{s}\n" for s, p in sorted(rows, key=lambda r: (-r[1], r[0])))
    if args.out:
        args.out.write_text(text, encoding="utf-8")
        write_manifest(args.out, "enumerate", cfg, {"grammar": args.grammar})
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS: dict[str, Callable] = {
    "train-lm": cmd_train_lm,
    "generate": cmd_generate,
    "divergence": cmd_divergence,
    "canon": cmd_canon,
    "curate": cmd_curate,
    "senses": cmd_senses,
    "enumerate": cmd_enumerate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve(args, args.command)
        logging.basicConfig(level=str(cfg["log_level"]).upper(), format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, cfg)
    except UsageError as e:
        print(f"eventgen {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        name = getattr(e, "filename", None)
        where = f"{name}: " if name else ""
        print(f"eventgen {args.command}: {where}{e.strerror or e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, GrammarError) as e:
        # json.JSONDecodeError and the package's own errors are ValueErrors
        print(f"eventgen {args.command}: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
