"""Command-line entry point: ``mtsmt <command> ...``."""

import argparse
import sys

from . import align, corpus, decode, harness, lm, metrics, phrase


def _tok_lines(path):
    return [line.split() for line in corpus.read_lines(path)]


def _write_tok(path, sentences):
    corpus.write_lines(path, (" ".join(s) for s in sentences))


# -- corpus ---------------------------------------------------------------

def cmd_tokenize(a):
    lines = corpus.read_lines(a.input)
    if a.normalize_punct:
        lines = [corpus.normalize_punctuation(x) for x in lines]
    _write_tok(a.output, (corpus.tokenize(x, a.lang) for x in lines))


def cmd_clean(a):
    pc = corpus.read_parallel(a.src, a.tgt, tokenized=True)
    scripts = None
    if a.src_scripts or a.tgt_scripts:
        scripts = ((a.src_scripts or "LATIN").split(","), (a.tgt_scripts or "LATIN").split(","))
    kept, log = corpus.clean_corpus(pc, a.max_len, a.max_ratio, scripts, a.noise_threshold,
                                    a.dedup)
    corpus.write_parallel(kept, a.out_src, a.out_tgt)
    if a.log:
        corpus.write_lines(a.log, (f"{n}\t{r}" for n, r in log))
    print(f"kept {len(kept)} of {len(pc)} pairs", file=sys.stderr)


def cmd_truecase_train(a):
    corpus.save_truecaser(corpus.train_truecaser(_tok_lines(a.input)), a.model)


def cmd_truecase_apply(a):
    model = corpus.load_truecaser(a.model)
    _write_tok(a.output, (corpus.truecase(s, model) for s in _tok_lines(a.input)))


def cmd_split(a):
    pc = corpus.read_parallel(a.src, a.tgt, tokenized=True)
    parts = corpus.split_corpus(pc, a.n_dev, a.n_test, a.seed)
    for name, part in zip(("train", "dev", "test"), parts):
        corpus.write_parallel(part, f"{a.out_prefix}.{name}.src", f"{a.out_prefix}.{name}.tgt")


def cmd_stats(a):
    st = corpus.corpus_stats(corpus.read_parallel(a.src, a.tgt, tokenized=True))
    print("sentences\tsource_tokens\ttarget_tokens\tsource_vocab\ttarget_vocab")
    print(f"{st.sentences}\t{st.source_tokens}\t{st.target_tokens}\t{st.source_vocab}\t"
          f"{st.target_vocab}")


# -- lm -------------------------------------------------------------------

def cmd_lm_train(a):
    model = lm.train(_tok_lines(a.input), a.order, a.smoothing, a.unk_floor)
    if a.arpa:
        with open(a.output, "w", encoding="utf-8") as fh:
            fh.write(lm.to_arpa(model))
    else:
        lm.save(model, a.output)


def cmd_lm_perplexity(a):
    print(f"{lm.perplexity(lm.load(a.lm), _tok_lines(a.input)):.4f}")


def cmd_lm_export_arpa(a):
    with open(a.output, "w", encoding="utf-8") as fh:
        fh.write(lm.to_arpa(lm.load(a.lm)))


# -- align ----------------------------------------------------------------

def _maybe_stem(pc, k):
    return align._stemmed(pc, k) if k else pc


def cmd_align_train(a):
    pc = _maybe_stem(corpus.read_parallel(a.src, a.tgt, tokenized=True), a.stem_k)
    if a.model == "model1":
        fwd = align.train_model1(pc, a.iterations)
        bwd = align.train_model1(pc.swapped(), a.iterations)
    else:
        fwd = align.train_fast_align(pc, a.iterations, a.optimize_tension)
        bwd = align.train_fast_align(pc.swapped(), a.iterations, a.optimize_tension)
    align.save_params(fwd, f"{a.out_prefix}.f2e")
    align.save_params(bwd, f"{a.out_prefix}.e2f")


def cmd_align_apply(a):
    pc = _maybe_stem(corpus.read_parallel(a.src, a.tgt, tokenized=True), a.stem_k)
    fwd = align.load_params(f"{a.params_prefix}.f2e")
    bwd = align.load_params(f"{a.params_prefix}.e2f")
    links = [align.symmetrize(align.viterbi_align(fwd, p, "forward"),
                              align.viterbi_align(bwd, p, "backward"), a.heuristic) for p in pc]
    align.write_pharaoh(links, a.output)


# -- phrase ---------------------------------------------------------------

def cmd_phrase_extract(a):
    pc = corpus.read_parallel(a.src, a.tgt, tokenized=True)
    links = align.read_pharaoh(a.alignment, pc)
    phrase.write_extract(phrase.extract_corpus(pc, links, a.max_len), a.output)


def cmd_phrase_score(a):
    extracted = phrase.read_extract(a.extract)
    fwd = align.load_params(a.lex_f2e)
    bwd = align.load_params(a.lex_e2f)
    key = (lambda w: corpus.stem(w, a.stem_k)) if a.stem_k else None
    table = phrase.score_phrase_table(extracted, getattr(fwd, "lex", fwd),
                                      getattr(bwd, "lex", bwd), key)
    phrase.write_phrase_table(table, a.output)


def cmd_phrase_reorder(a):
    model = phrase.estimate_reordering(phrase.read_extract(a.extract), a.scheme, a.sigma)
    phrase.write_reordering_table(model, a.output)


def cmd_compound_split(a):
    vocab = corpus.Vocabulary.from_sentences(_tok_lines(a.vocab_from))
    _write_tok(a.output, (phrase.split_sentence(s, vocab, a.min_part_len, a.max_parts)
                          for s in _tok_lines(a.input)))


# -- decode / tune --------------------------------------------------------

def _models(a):
    reordering = phrase.read_reordering_table(a.reordering) if a.reordering else None
    return decode.Models(phrase.read_phrase_table(a.table), lm.load(a.lm), reordering)


def _weights(path, models):
    if path:
        return decode.Weights.load(path)
    return decode.default_weights(models.reordering.scheme if models.reordering else None)


def _config(a):
    limit = None if a.distortion < 0 else a.distortion
    return decode.DecoderConfig(a.beam, limit, a.max_phrase_len)


def cmd_decode(a):
    models = _models(a)
    weights = _weights(a.weights, models)
    sources = _tok_lines(a.input)
    results = decode.decode_corpus(sources, models, weights, _config(a))
    _write_tok(a.output, (r.output for r in results))
    if a.trace:
        with open(a.trace, "w", encoding="utf-8") as fh:
            for s, r in zip(sources, results):
                decode.write_trace(r, len(s), models, fh)


def cmd_tune(a):
    models = _models(a)
    dev = corpus.read_parallel(a.dev_src, a.dev_ref, tokenized=True)
    w = decode.tune_weights(dev, models, _weights(a.weights, models), restarts=a.restarts,
                            iterations=a.iterations, seed=a.seed, config=_config(a))
    w.save(a.output)


# -- evaluation and experiments --------------------------------------------

def cmd_score(a):
    chosen = metrics.METRICS if a.metric == "all" else (a.metric,)
    report = metrics.evaluate(a.hyp, a.refs, not a.no_lowercase, chosen)
    print(report.header())
    print(report.row())


def cmd_run(a):
    result = harness.run_experiment(harness.ExperimentConfig.load(a.config))
    sys.stdout.write(result.report_text())
    print(f"manifest: {result.manifest_path}", file=sys.stderr)


def cmd_suite(a):
    result = harness.run_suite(harness.load_suite(a.configs))
    sys.stdout.write(result.table())


def cmd_fetch_emea(a):
    src, tgt, n = harness.fetch_emea(a.out, a.pair, a.release)
    print(f"{src}\n{tgt}\n{n} lines")


def build_parser():
    p = argparse.ArgumentParser(prog="mtsmt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(func=func)
        return sp

    sp = add("tokenize", cmd_tokenize, help="tokenize raw text")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--lang", default="")
    sp.add_argument("--normalize-punct", action="store_true")

    sp = add("clean", cmd_clean, help="filter a tokenized parallel corpus")
    for flag in ("--src", "--tgt", "--out-src", "--out-tgt"):
        sp.add_argument(flag, required=True)
    sp.add_argument("--max-len", type=int, default=80)
    sp.add_argument("--max-ratio", type=float, default=9.0)
    sp.add_argument("--src-scripts")
    sp.add_argument("--tgt-scripts")
    sp.add_argument("--noise-threshold", type=float, default=0.2)
    sp.add_argument("--dedup", action="store_true")
    sp.add_argument("--log")

    sp = add("truecase-train", cmd_truecase_train, help="learn casing statistics")
    sp.add_argument("--input", required=True)
    sp.add_argument("--model", required=True)
    sp = add("truecase-apply", cmd_truecase_apply, help="recase sentence-initial tokens")
    for flag in ("--model", "--input", "--output"):
        sp.add_argument(flag, required=True)

    sp = add("split", cmd_split, help="carve dev and test sets")
    for flag in ("--src", "--tgt", "--out-prefix"):
        sp.add_argument(flag, required=True)
    sp.add_argument("--n-dev", type=int, default=1000)
    sp.add_argument("--n-test", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("stats", cmd_stats, help="sentence, token and vocabulary counts")
    sp.add_argument("--src", required=True)
    sp.add_argument("--tgt", required=True)

    sp = add("lm-train", cmd_lm_train, help="estimate an n-gram model")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--order", type=int, default=5)
    sp.add_argument("--smoothing", choices=("kn", "wb"), default="kn")
    sp.add_argument("--unk-floor", type=int, default=1)
    sp.add_argument("--arpa", action="store_true", help="write ARPA text instead of binary")
    sp = add("lm-perplexity", cmd_lm_perplexity, help="perplexity of a tokenized file")
    sp.add_argument("--lm", required=True)
    sp.add_argument("--input", required=True)
    sp = add("lm-export-arpa", cmd_lm_export_arpa, help="convert a model to ARPA text")
    sp.add_argument("--lm", required=True)
    sp.add_argument("--output", required=True)

    sp = add("align", None, help="word alignment")
    asub = sp.add_subparsers(dest="align_command", required=True)
    tr = asub.add_parser("train")
    tr.set_defaults(func=cmd_align_train)
    ap = asub.add_parser("apply")
    ap.set_defaults(func=cmd_align_apply)
    for x in (tr, ap):
        x.add_argument("--src", required=True)
        x.add_argument("--tgt", required=True)
        x.add_argument("--stem-k", type=int, default=0)
    tr.add_argument("--model", choices=("model1", "fast_align"), default="model1")
    tr.add_argument("--iterations", type=int, default=5)
    tr.add_argument("--optimize-tension", action="store_true")
    tr.add_argument("--out-prefix", required=True)
    ap.add_argument("--params-prefix", required=True)
    ap.add_argument("--heuristic", default="grow-diag-final-and")
    ap.add_argument("--output", required=True)

    sp = add("phrase", None, help="phrase extraction and scoring")
    psub = sp.add_subparsers(dest="phrase_command", required=True)
    ex = psub.add_parser("extract")
    ex.set_defaults(func=cmd_phrase_extract)
    for flag in ("--src", "--tgt", "--alignment", "--output"):
        ex.add_argument(flag, required=True)
    ex.add_argument("--max-len", type=int, default=7)
    sc = psub.add_parser("score")
    sc.set_defaults(func=cmd_phrase_score)
    for flag in ("--extract", "--lex-f2e", "--lex-e2f", "--output"):
        sc.add_argument(flag, required=True)
    sc.add_argument("--stem-k", type=int, default=0)
    ro = psub.add_parser("reorder")
    ro.set_defaults(func=cmd_phrase_reorder)
    ro.add_argument("--extract", required=True)
    ro.add_argument("--output", required=True)
    ro.add_argument("--scheme", choices=("msd", "hier-mslr"), default="msd")
    ro.add_argument("--sigma", type=float, default=0.5)

    sp = add("compound-split", cmd_compound_split, help="split compounds by part frequency")
    for flag in ("--input", "--vocab-from", "--output"):
        sp.add_argument(flag, required=True)
    sp.add_argument("--min-part-len", type=int, default=3)
    sp.add_argument("--max-parts", type=int, default=2)

    for name, func in (("decode", cmd_decode), ("tune", cmd_tune)):
        sp = add(name, func, help=f"{name} with a phrase table and language model")
        sp.add_argument("--table", required=True)
        sp.add_argument("--lm", required=True)
        sp.add_argument("--reordering")
        sp.add_argument("--weights")
        sp.add_argument("--beam", type=int, default=100)
        sp.add_argument("--distortion", type=int, default=6, help="negative = unlimited")
        sp.add_argument("--max-phrase-len", type=int, default=7)
        sp.add_argument("--output", required=True)
        if name == "decode":
            sp.add_argument("--input", required=True)
            sp.add_argument("--trace")
        else:
            sp.add_argument("--dev-src", required=True)
            sp.add_argument("--dev-ref", required=True)
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--restarts", type=int, default=8)
            sp.add_argument("--iterations", type=int, default=30)

    sp = add("score", cmd_score, help="BLEU NIST METEOR RIBES TER report")
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--refs", nargs="+", required=True)
    sp.add_argument("--no-lowercase", action="store_true")
    sp.add_argument("--metric", choices=("all",) + metrics.METRICS, default="all")

    sp = add("run", cmd_run, help="run one experiment config")
    sp.add_argument("--config", required=True)
    sp = add("suite", cmd_suite, help="run every *.cfg in a directory")
    sp.add_argument("--configs", required=True)
    sp = add("fetch-emea", cmd_fetch_emea, help="download the OPUS EMEA corpus")
    sp.add_argument("--pair", default="pl-en")
    sp.add_argument("--out", required=True)
    sp.add_argument("--release", default=harness.EMEA_RELEASE)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"mtsmt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
