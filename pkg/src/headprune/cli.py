"""Command-line pipeline: corpus generation, training, translation,
attention capture, per-head metrics, rankings, pruning curves, statistics,
and SVG figures. Every command writes a manifest next to its outputs and
refuses to overwrite existing artifacts unless --force is given."""

from __future__ import annotations

import argparse
import sys
from itertools import product
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .bleu import corpus_bleu, format_bleu
from .checkpoint import checkpoint_files, load_checkpoint, load_config
from .core import AttnType, EMPTY_MASK, check_mask, parse_mask, universe_for
from .core import validate_capture
from .data import SyntheticTaskSpec, corpora_to_files, corpus_langs, gen_corpus, read_corpus
from .decode import captures_to_jsonl, collect_captures, read_captures_jsonl, translate
from .manifest import RunManifest, check_fresh, data_fingerprint, write_manifest
from .metrics import ALL_PAIRS, MetricKind, build_table, read_table_csv, table_to_csv
from .model import ModelConfig, build_batch
from .ranking import (
    average_curves,
    curves_to_csv,
    prune_curve,
    rank_by_metric,
    rank_random,
    rank_std_across_pairs,
    ranking_to_csv,
    read_curves_csv,
    read_ranking_csv,
    sbs,
    sbs_step_json,
)
from .stats import compare_curves, polyfit
from .svg import bar_chart_svg, heatmap_svg, line_chart_svg
from .train import TrainConfig, TrainingDivergedError, corpus_to_examples, train


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _emit(args, files: dict[str, str | bytes]) -> dict[str, str]:
    """Write artifacts into --out-dir; refuse collisions without --force;
    remove everything written here if any write fails. Returns name->sha."""
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    existing = sorted(n for n in files if (out_dir / n).exists())
    if existing and not args.force:
        raise CliError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    written: list[Path] = []
    fingerprints: dict[str, str] = {}
    try:
        for name in sorted(files):
            data = files[name]
            if isinstance(data, str):
                data = data.encode("utf-8")
            path = out_dir / name
            path.write_bytes(data)
            written.append(path)
            fingerprints[name] = data_fingerprint(data)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return fingerprints


def _finish(args, manifest_name: str, inputs: dict[str, str],
            files: dict[str, str | bytes], extra_config: dict | None = None) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    if extra_config:
        config.update(extra_config)
    outputs = _emit(args, files)
    manifest = RunManifest(args.command, __version__, args.seed, config,
                           inputs, outputs)
    write_manifest(args.out_dir, manifest_name, manifest)
    names = ", ".join(sorted(files))
    print(f"{args.command}: wrote {names} in {args.out_dir}")


def _inputs(*paths) -> dict[str, str]:
    """Fingerprint input files, rejecting any that a sibling manifest marks
    as stale."""
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        if not p.exists():
            raise CliError(f"missing input file {p}")
        out[str(p)] = check_fresh(p)
    return out


def _resolve_pairs(arg: str, data_dir: Path, split: str) -> list[str]:
    available = corpus_langs(data_dir, split)
    if arg == "all":
        return available
    pairs = [p for p in arg.split(",") if p]
    for p in pairs:
        if p not in available:
            raise CliError(f"pair {p!r} not in corpus (have {', '.join(available)})")
    return pairs


def _load_mask(path, config):
    if path is None:
        return EMPTY_MASK
    mask = parse_mask(Path(path).read_text(encoding="utf-8"))
    check_mask(mask, config)
    return mask


def _corpus_inputs(data_dir: Path, split: str, pairs) -> dict[str, str]:
    paths = [data_dir / f"{split}.{p}.src" for p in pairs]
    paths.append(data_dir / f"{split}.tgt")
    return _inputs(*paths)


def _model_inputs(model_dir: Path) -> dict[str, str]:
    return _inputs(model_dir / "model.json", model_dir / "model.bin")


def _make_evaluator(ckpt, eval_corpora, batch_size):
    """Translate every pair's corpus under a mask and score the pooled
    corpus BLEU. One call = one logical dev/test-set translation."""
    refs = [list(r) for _, corpus in eval_corpora for r in corpus.references]
    state = {"calls": 0}

    def evaluate(mask):
        state["calls"] += 1
        hyps = []
        for pair, corpus in eval_corpora:
            result = translate(ckpt, pair, corpus.sources, mask=mask,
                               batch_size=batch_size)
            hyps.extend(result.hypotheses)
        return corpus_bleu(hyps, refs)

    return evaluate, state


def _data_dir(args) -> Path:
    return Path(args.data_dir if args.data_dir else args.out_dir)


def _model_dir(args) -> Path:
    return Path(args.model_dir if args.model_dir else args.out_dir)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    spec = SyntheticTaskSpec(
        langs=tuple(args.langs.split(",")),
        len_range=(args.len_min, args.len_max),
        sizes=(args.train_size, args.dev_size, args.test_size),
        seed=args.seed,
        vocab_size=args.vocab,
        max_len=args.max_len,
    )
    files = corpora_to_files(gen_corpus(spec))
    _finish(args, "gen-data", {}, files)
    return 0


def cmd_train(args) -> int:
    data_dir = _data_dir(args)
    langs = corpus_langs(data_dir)
    inputs = _corpus_inputs(data_dir, "train", langs)
    inputs.update(_corpus_inputs(data_dir, "dev", langs))
    corpora = {lang: read_corpus(data_dir, "train", lang) for lang in langs}
    config = ModelConfig(vocab_size=args.vocab, d_model=args.d_model,
                         heads=args.heads, enc_layers=args.enc_layers,
                         dec_layers=args.dec_layers, ffn=args.ffn,
                         max_len=args.max_len, seed=args.seed)
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                     warmup_steps=args.warmup, clip_norm=args.clip,
                     head_dropout=args.head_dropout)
    dev_corpora = {lang: read_corpus(data_dir, "dev", lang) for lang in langs}
    dev_examples = corpus_to_examples(dev_corpora, config, tuple(langs))
    dev_batch = build_batch(dev_examples[: min(len(dev_examples), 256)], config)

    def progress(epoch, loss):
        print(f"epoch {epoch}: train loss {loss:.4f}", flush=True)

    try:
        result = train(config, corpora, tc, dev_batch=dev_batch, progress=progress)
    except TrainingDivergedError as exc:
        raise CliError(str(exc)) from None
    log_lines = ["epoch,loss,dev_loss"]
    for i, loss in enumerate(result.epoch_losses):
        dev = result.dev_losses[i] if i < len(result.dev_losses) else float("nan")
        log_lines.append(f"{i + 1},{loss!r},{dev!r}")
    files: dict[str, str | bytes] = dict(checkpoint_files(result.checkpoint))
    files["train_log.csv"] = "\n".join(log_lines) + "\n"
    if result.dev_losses:
        print(f"final dev loss {result.dev_losses[-1]:.4f} "
              f"after {result.checkpoint.step} steps")
    _finish(args, "train", inputs, files)
    return 0


def cmd_translate(args) -> int:
    model_dir = _model_dir(args)
    data_dir = _data_dir(args)
    inputs = _model_inputs(model_dir)
    inputs.update(_corpus_inputs(data_dir, args.split, [args.pair]))
    if args.mask:
        inputs.update(_inputs(args.mask))
    ckpt = load_checkpoint(model_dir)
    mask = _load_mask(args.mask, ckpt.config)
    corpus = read_corpus(data_dir, args.split, args.pair)
    result = translate(ckpt, args.pair, corpus.sources, mask=mask,
                       batch_size=args.batch_size)
    for err in result.errors:
        print(f"sid {err.sid}: {err.message}", file=sys.stderr)
    print(format_bleu(corpus_bleu(result.hypotheses, corpus.references)))
    name = args.out if args.out else f"{args.split}.{args.pair}.hyp"
    text = "".join((" ".join(h) if h is not None else "") + "\n"
                   for h in result.hypotheses)
    suffix = f"-{Path(args.mask).stem}" if args.mask else ""
    _finish(args, f"translate-{args.split}-{args.pair}{suffix}", inputs,
            {name: text})
    return 0


def cmd_dump_attn(args) -> int:
    model_dir = _model_dir(args)
    data_dir = _data_dir(args)
    ckpt = load_checkpoint(model_dir)
    mask = _load_mask(args.mask, ckpt.config)
    pairs = _resolve_pairs(args.pairs, data_dir, args.split)
    inputs = _model_inputs(model_dir)
    inputs.update(_corpus_inputs(data_dir, args.split, pairs))
    if args.mask:
        inputs.update(_inputs(args.mask))
    chunks = []
    for pair in pairs:
        corpus = read_corpus(data_dir, args.split, pair)
        result = translate(ckpt, pair, corpus.sources, mask=mask, capture=True,
                           batch_size=args.batch_size)
        for err in result.errors:
            print(f"{pair} sid {err.sid}: {err.message}", file=sys.stderr)
        chunks.append(captures_to_jsonl(collect_captures(result)))
    name = args.out if args.out else f"attn.{args.split}.jsonl"
    _finish(args, f"dump-attn-{args.split}", inputs, {name: "".join(chunks)})
    return 0


def cmd_validate(args) -> int:
    config, _ = load_config(_model_dir(args))
    captures = read_captures_jsonl(args.captures)
    violations = [v for cap in captures for v in validate_capture(cap, config)]
    for v in violations:
        print(f"sid {v.sid} {v.attn.value} layer {v.layer} "
              f"head {v.head}: {v.kind} ({v.detail})")
    if violations:
        print(f"{len(violations)} violations across {len(captures)} captures")
        return 1
    print(f"OK ({len(captures)} captures)")
    return 0


def cmd_metrics(args) -> int:
    model_dir = _model_dir(args)
    config, _ = load_config(model_dir)
    inputs = _inputs(args.captures)
    inputs.update(_inputs(model_dir / "model.json"))
    captures = read_captures_jsonl(args.captures)
    violations = [v for cap in captures for v in validate_capture(cap, config)]
    if violations:
        for v in violations:
            print(f"sid {v.sid} {v.attn.value} layer {v.layer} head {v.head}: "
                  f"{v.kind} ({v.detail})", file=sys.stderr)
        raise CliError(f"capture dump failed validation "
                       f"({len(violations)} violations)")
    present = sorted({c.pair for c in captures})
    if args.pairs == "all":
        pairs = present
    else:
        pairs = [p for p in args.pairs.split(",") if p]
        for p in pairs:
            if p not in present:
                raise CliError(f"pair {p!r} absent from capture dump "
                               f"(have {', '.join(present)})")
    kinds = [MetricKind.parse(k) for k in args.kinds.split(",")]
    attns = [AttnType.parse(a) for a in args.attn.split(",")]
    files = {}
    for kind, attn in product(kinds, attns):
        for pair in [*pairs, ALL_PAIRS]:
            table = build_table(captures, kind, attn, pair)
            files[f"metrics_{kind.value}_{attn.value}_{pair}.csv"] = table_to_csv(table)
    _finish(args, f"metrics-{Path(args.captures).stem}", inputs, files)
    return 0


def cmd_heatmap(args) -> int:
    paths = [p for p in args.tables.split(",") if p]
    inputs = _inputs(*paths)
    tables = [read_table_csv(p) for p in paths]
    try:
        svg = heatmap_svg(tables)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    metric, attn = tables[0].metric.value, tables[0].attn.value
    name = args.out if args.out else f"heatmap_{metric}_{attn}.svg"
    _finish(args, f"heatmap-{Path(name).stem}", inputs, {name: svg})
    return 0


def cmd_rank(args) -> int:
    config, _ = load_config(_model_dir(args))
    if bool(args.table) == bool(args.method):
        raise CliError("specify exactly one of --table or --method rand")
    if args.table:
        inputs = _inputs(args.table)
        table = read_table_csv(args.table)
        ranking = rank_by_metric(table, universe_for(config, table.attn))
    else:
        if args.method != "rand":
            raise CliError(f"unknown ranking method {args.method!r}")
        if not args.attn:
            raise CliError("--method rand needs --attn enc|cross")
        attn = AttnType.parse(args.attn)
        inputs = {}
        ranking = rank_random(universe_for(config, attn), args.seed)
    name = f"ranking_{ranking.method}_{ranking.attn.value}_{ranking.pair}.csv"
    _finish(args, f"rank-{ranking.method}-{ranking.attn.value}-{ranking.pair}",
            inputs, {name: ranking_to_csv(ranking)})
    return 0


def cmd_sbs(args) -> int:
    model_dir = _model_dir(args)
    data_dir = _data_dir(args)
    ckpt = load_checkpoint(model_dir)
    attn = AttnType.parse(args.attn)
    pairs = _resolve_pairs(args.pairs, data_dir, args.split)
    inputs = _model_inputs(model_dir)
    inputs.update(_corpus_inputs(data_dir, args.split, pairs))
    eval_corpora = [(p, read_corpus(data_dir, args.split, p)) for p in pairs]
    pair_label = pairs[0] if len(pairs) == 1 else ALL_PAIRS
    evaluate, state = _make_evaluator(ckpt, eval_corpora, args.batch_size)
    baseline = evaluate(EMPTY_MASK)
    print(f"baseline {format_bleu(baseline)}", flush=True)
    calls_before = state["calls"]
    universe = universe_for(ckpt.config, attn)
    log_lines: list[str] = []

    def on_step(step):
        log_lines.append(sbs_step_json(step))
        print(f"step {step.step}/{len(universe)}: masked {step.chosen} "
              f"(drop {step.drop:+.3f})", flush=True)

    log_name = f"sbs_log_{attn.value}_{pair_label}.jsonl"
    try:
        ranking, steps = sbs(evaluate, universe, baseline, pair_label, on_step)
    except Exception:
        partial = Path(args.out_dir) / f"{log_name}.partial"
        partial.parent.mkdir(parents=True, exist_ok=True)
        partial.write_text("".join(line + "\n" for line in log_lines),
                           encoding="utf-8")
        print(f"aborted; partial log persisted to {partial}", file=sys.stderr)
        raise
    calls = state["calls"] - calls_before
    print(f"sbs finished with {calls} translate calls")
    files = {
        f"ranking_sbs_{attn.value}_{pair_label}.csv": ranking_to_csv(ranking),
        log_name: "".join(line + "\n" for line in log_lines),
    }
    _finish(args, f"sbs-{attn.value}-{pair_label}", inputs, files,
            extra_config={"translate_calls": calls})
    return 0


def cmd_curve(args) -> int:
    model_dir = _model_dir(args)
    data_dir = _data_dir(args)
    ckpt = load_checkpoint(model_dir)
    pairs = _resolve_pairs(args.pairs, data_dir, args.split)
    inputs = _model_inputs(model_dir)
    inputs.update(_corpus_inputs(data_dir, args.split, pairs))
    eval_corpora = [(p, read_corpus(data_dir, args.split, p)) for p in pairs]
    eval_label = pairs[0] if len(pairs) == 1 else ALL_PAIRS
    evaluate, _ = _make_evaluator(ckpt, eval_corpora, args.batch_size)

    if bool(args.ranking) == bool(args.method):
        raise CliError("specify exactly one of --ranking or --method rand")
    if args.ranking:
        inputs.update(_inputs(args.ranking))
        ranking = read_ranking_csv(args.ranking)
        if set(ranking.order) != set(universe_for(ckpt.config, ranking.attn)):
            raise CliError(f"{args.ranking} does not cover the model's "
                           f"{ranking.attn.value} head universe")
        main_curve = prune_curve(evaluate, ranking, step=args.step)
        all_curves = [main_curve]
    else:
        if args.method != "rand":
            raise CliError(f"unknown curve method {args.method!r}")
        if not args.attn:
            raise CliError("--method rand needs --attn enc|cross")
        universe = universe_for(ckpt.config, AttnType.parse(args.attn))
        runs = []
        for i in range(args.runs):
            ranking = rank_random(universe, args.seed + i)
            runs.append(prune_curve(evaluate, ranking, step=args.step))
            print(f"run {i + 1}/{args.runs} done", flush=True)
        main_curve = average_curves(runs, "rand")
        all_curves = [*runs, main_curve]

    fit = polyfit(main_curve.points, args.degree) if args.degree is not None else None
    attn = main_curve.attn.value
    base = args.out if args.out else f"curve_{main_curve.method}_{attn}_" \
                                     f"{main_curve.pair}_on_{eval_label}"
    title = f"{main_curve.method} {attn} (ranked on {main_curve.pair}, " \
            f"evaluated on {eval_label})"
    files = {
        f"{base}.csv": curves_to_csv(all_curves),
        f"{base}.svg": line_chart_svg([main_curve], [fit] if fit else None,
                                      title=title),
    }
    _finish(args, f"curve-{Path(base).stem}", inputs, files,
            extra_config={"eval_pairs": ",".join(pairs)})
    return 0


def cmd_mwu(args) -> int:
    inputs = _inputs(args.curve_a, args.curve_b)
    curve_a = _select_curve(args.curve_a, args.method_a)
    curve_b = _select_curve(args.curve_b, args.method_b)
    if curve_a.attn is not curve_b.attn:
        raise CliError("curves describe different attention types")
    try:
        result = compare_curves(curve_a, curve_b)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    label = args.label if args.label else curve_a.method
    header = "metric,attn,pairA,pairB,U,n,m,p,mode"
    row = (f"{label},{curve_a.attn.value},{curve_a.pair},{curve_b.pair},"
           f"{result.u!r},{result.n},{result.m},{result.p!r},{result.mode}")
    print(header)
    print(row)
    name = args.out if args.out else "mwu.csv"
    _finish(args, f"mwu-{Path(name).stem}", inputs,
            {name: header + "\n" + row + "\n"})
    return 0


def _select_curve(path, method):
    curves = read_curves_csv(path)
    if method:
        matching = [c for c in curves if c.method == method]
        if not matching:
            have = ", ".join(c.method for c in curves)
            raise CliError(f"{path} has no curve with method {method!r} (have {have})")
        return matching[0]
    if len(curves) > 1:
        have = ", ".join(c.method for c in curves)
        raise CliError(f"{path} holds several curves ({have}); pick one with "
                       f"--method-a/--method-b")
    return curves[0]


def cmd_rank_std(args) -> int:
    paths = [p for p in args.rankings.split(",") if p]
    if len(paths) < 2:
        raise CliError("need at least 2 ranking files")
    inputs = _inputs(*paths)
    by_pair = {}
    for p in paths:
        ranking = read_ranking_csv(p)
        if ranking.pair in by_pair:
            raise CliError(f"two rankings claim pair {ranking.pair!r}")
        by_pair[ranking.pair] = ranking
    try:
        stds = rank_std_across_pairs(by_pair)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    attn = next(iter(by_pair.values())).attn
    heads = sorted(stds)
    lines = ["attn,layer,head,std"]
    for h in heads:
        lines.append(f"{attn.value},{h.layer},{h.head},{stds[h]!r}")
    labels = [f"{h.layer}:{h.head}" for h in heads]
    svg = bar_chart_svg(labels, [stds[h] for h in heads],
                        title=f"rank std across pairs ({attn.value})")
    files = {
        f"rank_std_{attn.value}.csv": "\n".join(lines) + "\n",
        f"rank_std_{attn.value}.svg": svg,
    }
    _finish(args, f"rank-std-{attn.value}", inputs, files)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="headprune",
        description="Attention-head importance analysis for a toy "
                    "many-to-one translation model.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="seed for all randomness in this command")
    common.add_argument("--out-dir", default=".",
                        help="directory artifacts are written into")
    common.add_argument("--force", action="store_true",
                        help="overwrite existing artifacts")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS thread cap")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common],
                       help="generate the synthetic many-to-one corpora")
    p.add_argument("--langs", default="rev,offset3,swap",
                   help="comma list of transform names (identity|rev|swap|offset<k>)")
    p.add_argument("--train-size", type=int, default=5000)
    p.add_argument("--dev-size", type=int, default=300)
    p.add_argument("--test-size", type=int, default=300)
    p.add_argument("--len-min", type=int, default=5)
    p.add_argument("--len-max", type=int, default=15)
    p.add_argument("--vocab", type=int, default=64)
    p.add_argument("--max-len", type=int, default=24)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common],
                       help="train the toy model on all language pairs")
    p.add_argument("--data-dir", default=None, help="corpus directory (default: out-dir)")
    p.add_argument("--epochs", type=int, default=14)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--warmup", type=int, default=200)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--head-dropout", type=float, default=0.3,
                   help="per-step probability of dropping each attention head")
    p.add_argument("--vocab", type=int, default=64)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--enc-layers", type=int, default=4)
    p.add_argument("--dec-layers", type=int, default=2)
    p.add_argument("--ffn", type=int, default=128)
    p.add_argument("--max-len", type=int, default=24)
    p.set_defaults(func=cmd_train)

    def io_flags(p, split_default):
        p.add_argument("--model-dir", default=None,
                       help="checkpoint directory (default: out-dir)")
        p.add_argument("--data-dir", default=None,
                       help="corpus directory (default: out-dir)")
        p.add_argument("--split", default=split_default,
                       choices=("train", "dev", "test"))
        p.add_argument("--batch-size", type=int, default=64)

    p = sub.add_parser("translate", parents=[common],
                       help="translate one pair's corpus, optionally masked")
    io_flags(p, "test")
    p.add_argument("--pair", required=True)
    p.add_argument("--mask", default=None, help="head-mask file")
    p.add_argument("--out", default=None, help="hypothesis file name")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("dump-attn", parents=[common],
                       help="capture attention weights while translating")
    io_flags(p, "dev")
    p.add_argument("--pairs", default="all")
    p.add_argument("--mask", default=None)
    p.add_argument("--out", default=None, help="JSONL file name")
    p.set_defaults(func=cmd_dump_attn)

    p = sub.add_parser("validate", parents=[common],
                       help="validate an attention capture dump")
    p.add_argument("--model-dir", default=None)
    p.add_argument("--captures", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", parents=[common],
                       help="per-head metric tables from a capture dump")
    p.add_argument("--model-dir", default=None)
    p.add_argument("--captures", required=True)
    p.add_argument("--pairs", default="all")
    p.add_argument("--kinds", default="conf,var,cov")
    p.add_argument("--attn", default="enc,cross")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("heatmap", parents=[common],
                       help="heatmap SVG from metric tables (shared scale)")
    p.add_argument("--tables", required=True, help="comma list of metric CSVs")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("rank", parents=[common],
                       help="head ranking from a metric table or at random")
    p.add_argument("--model-dir", default=None)
    p.add_argument("--table", default=None, help="metric CSV to rank by")
    p.add_argument("--method", default=None, help="'rand' for a random ranking")
    p.add_argument("--attn", default=None, choices=("enc", "cross"))
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("sbs", parents=[common],
                       help="sequential backward selection over one head type")
    io_flags(p, "dev")
    p.add_argument("--attn", required=True, choices=("enc", "cross"))
    p.add_argument("--pairs", default="all")
    p.set_defaults(func=cmd_sbs)

    p = sub.add_parser("curve", parents=[common],
                       help="BLEU curve while pruning along a ranking")
    io_flags(p, "test")
    p.add_argument("--ranking", default=None, help="ranking CSV to follow")
    p.add_argument("--method", default=None, help="'rand' for random baselines")
    p.add_argument("--attn", default=None, choices=("enc", "cross"))
    p.add_argument("--runs", type=int, default=5,
                   help="random rankings to average (method rand)")
    p.add_argument("--pairs", default="all", help="evaluation pairs")
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--degree", type=int, default=None,
                   help="fit overlay polynomial of this degree")
    p.add_argument("--out", default=None, help="output base name")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("mwu", parents=[common],
                       help="Mann-Whitney U test between two pruning curves")
    p.add_argument("--curve-a", required=True)
    p.add_argument("--curve-b", required=True)
    p.add_argument("--method-a", default=None)
    p.add_argument("--method-b", default=None)
    p.add_argument("--label", default=None, help="metric column value")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mwu)

    p = sub.add_parser("rank-std", parents=[common],
                       help="per-head rank std across language pairs")
    p.add_argument("--rankings", required=True,
                   help="comma list of ranking CSVs, one per pair")
    p.set_defaults(func=cmd_rank_std)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
