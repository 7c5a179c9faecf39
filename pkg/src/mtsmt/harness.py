"""Experiment management: a cached, content-hashed pipeline from raw
parallel text to an evaluation report.

Stages run in dependency order:

    prepare -> segment -> align -> phrase --\\
    prepare -> lm ---------------------------+-> tune -> decode -> score

Each stage's key is a SHA-256 over its upstream keys and the config values
it reads (``prepare`` also digests the input files).  Outputs live under
``<work_dir>/cache/<stage>/<key>/``; a stage whose directory is complete is
reused, otherwise it runs into a temporary directory that is renamed into
place.  A run writes ``manifest.json`` listing every stage, key, output
file and timing.
"""

import configparser
import fcntl
import hashlib
import json
import os
import re
import shutil
import tempfile
import time
import urllib.request
import zipfile
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

from . import align as align_mod
from . import corpus as corpus_mod
from . import decode as decode_mod
from . import lm as lm_mod
from . import metrics as metrics_mod
from . import phrase as phrase_mod

RESERVED_KEYS = {
    "osm": "operation sequence model is not supported",
    "operation_sequence_model": "operation sequence model is not supported",
    "factored": "factored / POS models are not supported",
    "hierarchical": "hierarchical phrase-based model is not supported",
    "target_syntax": "target-syntax model is not supported",
    "wmt13": "WMT'13 configuration bundle is not supported",
    "iwslt13": "IWSLT'13 configuration bundle is not supported",
}

TOGGLES = ("truecase", "stem_k", "fast_align", "witten_bell", "hier_mslr", "compound_split")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, error):
        super().__init__(f"stage '{stage}' failed: {error}")
        self.stage = stage
        self.error = error


@dataclass
class ExperimentConfig:
    id: str
    source: str
    target: str
    work_dir: str = "work"
    source_lang: str = "src"
    target_lang: str = "tgt"
    reverse: bool = False           # translate target -> source
    # toggles
    truecase: bool = False          # truecasing plus punctuation normalization
    stem_k: int = 0                 # 0 = align surface forms
    fast_align: bool = False
    witten_bell: bool = False
    hier_mslr: bool = False
    compound_split: bool = False    # applied to the source side
    # everything else
    lm_order: int = 5
    seed: int = 0
    n_dev: int = 1000
    n_test: int = 1000
    max_len: int = 80
    max_ratio: float = 9.0
    heuristic: str = "grow-diag-final-and"
    align_iterations: int = 5
    max_phrase_len: int = 7
    beam_size: int = 100
    distortion_limit: int = 6
    tune: bool = True
    tune_restarts: int = 0
    tune_iterations: int = 2
    lowercase_eval: bool = True

    def __post_init__(self):
        if self.stem_k < 0:
            raise ConfigError("stem_k must be >= 0")
        if self.lm_order < 1:
            raise ConfigError("lm_order must be >= 1")
        align_mod.parse_heuristic(self.heuristic)

    @classmethod
    def from_dict(cls, values: Dict[str, str], base_dir=None):
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().lower()
            if key in RESERVED_KEYS:
                raise ConfigError(f"config key '{key}': {RESERVED_KEYS[key]}")
            if key not in types:
                raise ConfigError(f"unknown config key '{key}'")
            kwargs[key] = _convert(key, raw, types[key])
        for required in ("id", "source", "target"):
            if required not in kwargs:
                raise ConfigError(f"config is missing '{required}'")
        if base_dir is not None:
            kwargs.setdefault("work_dir", cls.work_dir)
            for key in ("source", "target", "work_dir"):
                if not os.path.isabs(kwargs[key]):
                    kwargs[key] = str(Path(base_dir) / kwargs[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        parser = configparser.ConfigParser(interpolation=None)
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        if not parser.has_section("experiment"):
            raise ConfigError(f"{path}: missing [experiment] section")
        extra = [s for s in parser.sections() if s != "experiment"]
        if extra:
            raise ConfigError(f"{path}: unexpected sections {extra}")
        values = dict(parser.items("experiment"))
        return cls.from_dict(values, base_dir=Path(path).parent)

    def dumps(self):
        lines = ["[experiment]"]
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"


def _convert(key, raw, typ):
    raw = raw.strip()
    if typ in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key '{key}': expected a boolean, got {raw!r}")
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key '{key}': cannot parse {raw!r}") from None
    return raw


# -- cache ----------------------------------------------------------------

def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def stage_key(stage, upstream, settings):
    payload = json.dumps({"stage": stage, "upstream": upstream, "settings": settings},
                         sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class StageArtifact:
    stage: str
    key: str
    outputs: List[str]
    seconds: float
    cached: bool


@contextmanager
def _locked(path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


class Cache:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, stage, key):
        return self.root / stage / key

    def run(self, stage, key, build):
        """Return the stage directory, building it with ``build(tmp_dir)`` when
        absent.  A failed build leaves its partial output in ``<key>.failed``."""
        final = self.path(stage, key)
        start = time.perf_counter()
        with _locked(self.root / stage / f"{key}.lock"):
            if (final / ".complete").exists():
                return final, time.perf_counter() - start, True
            tmp = Path(tempfile.mkdtemp(prefix=f"{key}.", dir=final.parent))
            try:
                build(tmp)
            except Exception as exc:
                failed = final.parent / f"{key}.failed"
                shutil.rmtree(failed, ignore_errors=True)
                tmp.rename(failed)
                raise StageError(stage, exc) from exc
            (tmp / ".complete").write_text("")
            shutil.rmtree(final, ignore_errors=True)
            tmp.rename(final)
        return final, time.perf_counter() - start, False


# -- stages ---------------------------------------------------------------

def _read_tok(path):
    return [line.split() for line in corpus_mod.read_lines(path)]


def _write_tok(path, sentences):
    corpus_mod.write_lines(path, (" ".join(s) for s in sentences))


def _prepare(cfg: ExperimentConfig, out: Path):
    for p in (cfg.source, cfg.target):
        if not os.path.exists(p):
            raise FileNotFoundError(f"corpus file not found: {p}")
    src_lines = corpus_mod.read_lines(cfg.source)
    tgt_lines = corpus_mod.read_lines(cfg.target)
    if cfg.reverse:
        src_lines, tgt_lines = tgt_lines, src_lines
    if len(src_lines) != len(tgt_lines):
        raise corpus_mod.IngestionError(
            f"line count mismatch: {len(src_lines)} source vs {len(tgt_lines)} target lines")
    raw = corpus_mod.ParallelCorpus(
        [corpus_mod.SentencePair(corpus_mod.tokenize(s), corpus_mod.tokenize(t), i)
         for i, (s, t) in enumerate(zip(src_lines, tgt_lines), 1)])
    if cfg.truecase:
        norm = corpus_mod.ParallelCorpus(
            [corpus_mod.SentencePair(corpus_mod.tokenize(corpus_mod.normalize_punctuation(s)),
                                     corpus_mod.tokenize(corpus_mod.normalize_punctuation(t)), i)
             for i, (s, t) in enumerate(zip(src_lines, tgt_lines), 1)])
    else:
        norm = raw
    # cleaning decisions come from the processed text; references stay raw
    kept, dropped = corpus_mod.clean_corpus(norm, cfg.max_len, cfg.max_ratio)
    keep_lines = {p.line_number for p in kept}
    raw_kept = corpus_mod.ParallelCorpus([p for p in raw if p.line_number in keep_lines])
    train, dev, test = corpus_mod.split_corpus(kept, cfg.n_dev, cfg.n_test, cfg.seed)
    if cfg.truecase:
        tc_src = corpus_mod.train_truecaser(train.sources())
        tc_tgt = corpus_mod.train_truecaser(train.targets())

        def apply(part):
            return corpus_mod.ParallelCorpus(
                [corpus_mod.SentencePair(corpus_mod.truecase(p.source, tc_src),
                                         corpus_mod.truecase(p.target, tc_tgt), p.line_number)
                 for p in part])
        train, dev, test = apply(train), apply(dev), apply(test)
    by_line = {p.line_number: p for p in raw_kept}
    for name, part in (("train", train), ("dev", dev), ("test", test)):
        corpus_mod.write_parallel(part, out / f"{name}.src", out / f"{name}.tgt")
    _write_tok(out / "test.ref", [by_line[p.line_number].target for p in test])
    corpus_mod.write_lines(out / "dropped.log", (f"{n}\t{r}" for n, r in dropped))


def _segment(cfg, prep: Path, out: Path):
    train_src = _read_tok(prep / "train.src")
    vocab = corpus_mod.Vocabulary.from_sentences(train_src) if cfg.compound_split else None
    for name in ("train", "dev", "test"):
        sents = _read_tok(prep / f"{name}.src")
        if vocab is not None:
            sents = [phrase_mod.split_sentence(s, vocab) for s in sents]
        _write_tok(out / f"{name}.src", sents)


def _lm(cfg, prep: Path, out: Path):
    model = lm_mod.train(_read_tok(prep / "train.tgt"), cfg.lm_order,
                         "wb" if cfg.witten_bell else "kn")
    lm_mod.save(model, out / "lm.bin")


def _parallel(src_path, tgt_path):
    return corpus_mod.read_parallel(src_path, tgt_path, tokenized=True)


def _align(cfg, seg: Path, prep: Path, out: Path):
    train = _parallel(seg / "train.src", prep / "train.tgt")
    res = align_mod.align_corpus(train, "fast_align" if cfg.fast_align else "model1",
                                 cfg.heuristic, cfg.stem_k or None, cfg.align_iterations)
    align_mod.write_pharaoh(res.links, out / "aligned.grow")
    align_mod.save_params(res.forward, out / "lex.f2e")
    align_mod.save_params(res.backward, out / "lex.e2f")
    (out / "stem_k").write_text(str(cfg.stem_k))


def _phrase(cfg, seg: Path, prep: Path, aligned: Path, out: Path):
    train = _parallel(seg / "train.src", prep / "train.tgt")
    links = align_mod.read_pharaoh(aligned / "aligned.grow", train)
    fwd = align_mod.load_params(aligned / "lex.f2e")
    bwd = align_mod.load_params(aligned / "lex.e2f")
    k = int((aligned / "stem_k").read_text())
    key = (lambda w: corpus_mod.stem(w, k)) if k else None
    extracted = phrase_mod.extract_corpus(train, links, cfg.max_phrase_len)
    table = phrase_mod.score_phrase_table(extracted, getattr(fwd, "lex", fwd),
                                          getattr(bwd, "lex", bwd), key)
    scheme = phrase_mod.HIER_MSLR if cfg.hier_mslr else phrase_mod.MSD
    reordering = phrase_mod.estimate_reordering(extracted, scheme)
    phrase_mod.write_phrase_table(table, out / "phrase-table")
    phrase_mod.write_reordering_table(reordering, out / "reordering-table")


def _models(lm_dir: Path, phrase_dir: Path):
    return decode_mod.Models(phrase_mod.read_phrase_table(phrase_dir / "phrase-table"),
                             lm_mod.load(lm_dir / "lm.bin"),
                             phrase_mod.read_reordering_table(phrase_dir / "reordering-table"))


def _decoder_config(cfg):
    return decode_mod.DecoderConfig(cfg.beam_size, cfg.distortion_limit, cfg.max_phrase_len)


def _tune(cfg, seg, prep, lm_dir, phrase_dir, out: Path):
    models = _models(lm_dir, phrase_dir)
    weights = decode_mod.default_weights(models.reordering.scheme)
    if cfg.tune:
        dev = _parallel(seg / "dev.src", prep / "dev.tgt")
        weights = decode_mod.tune_weights(dev, models, weights, restarts=cfg.tune_restarts,
                                          iterations=cfg.tune_iterations, seed=cfg.seed,
                                          config=_decoder_config(cfg))
    weights.save(out / "weights")


def _decode(cfg, seg, lm_dir, phrase_dir, tuned, out: Path):
    models = _models(lm_dir, phrase_dir)
    weights = decode_mod.Weights.load(tuned / "weights")
    sources = _read_tok(seg / "test.src")
    results = decode_mod.decode_corpus(sources, models, weights, _decoder_config(cfg))
    _write_tok(out / "test.hyp", [r.output for r in results])
    with open(out / "test.trace", "w", encoding="utf-8") as fh:
        for src, r in zip(sources, results):
            decode_mod.write_trace(r, len(src), models, fh)


def _score(cfg, prep, decoded, out: Path):
    report = metrics_mod.evaluate(decoded / "test.hyp", [prep / "test.ref"], cfg.lowercase_eval)
    (out / "report.tsv").write_text(format_table([(cfg.id, report)]), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report.as_dict(), sort_keys=True), encoding="utf-8")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: metrics_mod.EvaluationReport
    artifacts: List[StageArtifact] = field(default_factory=list)
    manifest_path: Optional[str] = None

    def report_text(self):
        return format_table([(self.config.id, self.report)])


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run (or reuse) every stage and write the report plus a manifest."""
    work = Path(cfg.work_dir)
    cache = Cache(work / "cache")
    artifacts = []

    def stage(name, upstream, settings, build):
        key = stage_key(name, upstream, settings)
        path, seconds, cached = cache.run(name, key, build)
        outputs = sorted(p.name for p in path.iterdir() if not p.name.startswith("."))
        artifacts.append(StageArtifact(name, key, outputs, round(seconds, 6), cached))
        return key, path

    for p in (cfg.source, cfg.target):
        if not os.path.exists(p):
            raise StageError("prepare", FileNotFoundError(f"corpus file not found: {p}"))
    inputs = {"source": file_digest(cfg.source), "target": file_digest(cfg.target)}
    prep_settings = {k: getattr(cfg, k) for k in ("reverse", "truecase", "seed", "n_dev", "n_test",
                                                  "max_len", "max_ratio")}
    k_prep, prep = stage("prepare", [inputs], prep_settings, lambda d: _prepare(cfg, d))
    k_seg, seg = stage("segment", [k_prep], {"compound_split": cfg.compound_split},
                       lambda d: _segment(cfg, prep, d))
    k_lm, lm_dir = stage("lm", [k_prep], {"order": cfg.lm_order, "witten_bell": cfg.witten_bell},
                         lambda d: _lm(cfg, prep, d))
    k_al, al = stage("align", [k_seg, k_prep],
                     {"stem_k": cfg.stem_k, "fast_align": cfg.fast_align,
                      "heuristic": align_mod.parse_heuristic(cfg.heuristic),
                      "iterations": cfg.align_iterations},
                     lambda d: _align(cfg, seg, prep, d))
    k_ph, ph = stage("phrase", [k_al, k_seg, k_prep],
                     {"max_phrase_len": cfg.max_phrase_len, "hier_mslr": cfg.hier_mslr},
                     lambda d: _phrase(cfg, seg, prep, al, d))
    dec_settings = {"beam_size": cfg.beam_size, "distortion_limit": cfg.distortion_limit,
                    "max_phrase_len": cfg.max_phrase_len}
    k_tu, tu = stage("tune", [k_ph, k_lm, k_seg],
                     dict(dec_settings, tune=cfg.tune, restarts=cfg.tune_restarts,
                          iterations=cfg.tune_iterations, seed=cfg.seed),
                     lambda d: _tune(cfg, seg, prep, lm_dir, ph, d))
    k_de, de = stage("decode", [k_tu, k_ph, k_lm, k_seg], dec_settings,
                     lambda d: _decode(cfg, seg, lm_dir, ph, tu, d))
    _, sc = stage("score", [k_de, k_prep], {"lowercase": cfg.lowercase_eval},
                  lambda d: _score(cfg, prep, de, d))

    values = json.loads((sc / "report.json").read_text(encoding="utf-8"))
    report = metrics_mod.EvaluationReport(**{k.lower(): v for k, v in values.items()})
    run_dir = work / "runs" / cfg.id
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "experiment": cfg.id,
        "config": asdict(cfg),
        "inputs": inputs,
        "stages": [dict(asdict(a), path=str(cache.path(a.stage, a.key))) for a in artifacts],
        "report": report.as_dict(),
    }
    manifest_path = run_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    (run_dir / "report.tsv").write_text(format_table([(cfg.id, report)]), encoding="utf-8")
    return ExperimentResult(cfg, report, artifacts, str(manifest_path))


# -- suites ---------------------------------------------------------------

HEADER = ("System", "BLEU", "NIST", "METEOR", "RIBES", "TER")


def format_table(rows, baseline_bleu=None):
    """Tab-separated score table; ``rows`` are ``(name, report or error)``."""
    header = list(HEADER) + (["dBLEU"] if baseline_bleu is not None else [])
    lines = ["\t".join(header)]
    for name, report in rows:
        if isinstance(report, metrics_mod.EvaluationReport):
            cells = [f"{v:.2f}" for v in report.values()]
            if baseline_bleu is not None:
                cells.append(f"{report.bleu - baseline_bleu:+.2f}")
        else:
            cells = [f"FAILED: {report}"]
        lines.append("\t".join([str(name)] + cells))
    return "\n".join(lines) + "\n"


@dataclass
class SuiteResult:
    rows: List[tuple]     # (experiment id, EvaluationReport or error string)

    def table(self):
        ok = [r for _, r in self.rows if isinstance(r, metrics_mod.EvaluationReport)]
        base = None
        for name, r in self.rows:
            if name == "00" and isinstance(r, metrics_mod.EvaluationReport):
                base = r.bleu
        if base is None and ok and isinstance(self.rows[0][1], metrics_mod.EvaluationReport):
            base = self.rows[0][1].bleu
        return format_table(self.rows, base)


def run_suite(configs) -> SuiteResult:
    """Run experiments in order; a failing experiment becomes a FAILED row."""
    configs = list(configs)
    if not configs:
        raise ValueError("empty experiment suite")
    rows = []
    for cfg in configs:
        try:
            rows.append((cfg.id, run_experiment(cfg).report))
        except Exception as exc:   # row-level failure, the suite continues
            rows.append((cfg.id, f"{type(exc).__name__}: {exc}"))
    return SuiteResult(rows)


def load_suite(directory):
    paths = sorted(Path(directory).glob("*.cfg"))
    if not paths:
        raise ValueError(f"no *.cfg files in {directory}")
    return [ExperimentConfig.load(p) for p in paths]


# -- OPUS EMEA download ---------------------------------------------------

EMEA_RELEASE = "v3"
EMEA_URL = "https://object.pouta.csc.fi/OPUS-EMEA/{release}/moses/{pair}.txt.zip"
EMEA_LANGUAGES = {"bg", "cs", "da", "de", "el", "en", "es", "et", "fi", "fr", "hu", "it", "lt",
                  "lv", "mt", "nl", "pl", "pt", "ro", "sk", "sl", "sv"}


def parse_pair(pair):
    m = re.fullmatch(r"([a-z]{2})-([a-z]{2})", pair or "")
    if not m or m.group(1) == m.group(2):
        raise ValueError(f"invalid language pair {pair!r}; expected e.g. 'pl-en'")
    for lang in m.groups():
        if lang not in EMEA_LANGUAGES:
            raise ValueError(f"language {lang!r} is not part of the EMEA corpus")
    return m.group(1), m.group(2)


def fetch_emea(target_dir, pair="pl-en", release=EMEA_RELEASE, sha256=None, timeout=600):
    """Download the Moses-format EMEA release for ``pair``.

    Returns ``(source_path, target_path, line_count)``.  The pair is checked
    before any network access; ``sha256`` (optional) is compared against the
    downloaded archive.
    """
    src, tgt = parse_pair(pair)
    opus_pair = "-".join(sorted((src, tgt)))
    url = EMEA_URL.format(release=release, pair=opus_pair)
    target_dir = Path(target_dir)
    target_dir.mkdir(parents=True, exist_ok=True)
    archive = target_dir / f"EMEA.{opus_pair}.zip"
    with urllib.request.urlopen(url, timeout=timeout) as resp, open(archive, "wb") as fh:
        shutil.copyfileobj(resp, fh)
    if sha256 is not None and file_digest(archive) != sha256:
        raise ValueError(f"checksum mismatch for {archive}")
    paths = {}
    with zipfile.ZipFile(archive) as zf:
        for lang in (src, tgt):
            name = f"EMEA.{opus_pair}.{lang}"
            zf.extract(name, target_dir)
            paths[lang] = target_dir / name
    counts = [sum(1 for _ in open(paths[lang], "rb")) for lang in (src, tgt)]
    if counts[0] != counts[1]:
        raise ValueError(f"EMEA sides disagree: {counts[0]} vs {counts[1]} lines")
    (target_dir / "EMEA.release.json").write_text(
        json.dumps({"url": url, "release": release, "pair": pair, "lines": counts[0],
                    "sha256": file_digest(archive)}, indent=2), encoding="utf-8")
    return paths[src], paths[tgt], counts[0]
