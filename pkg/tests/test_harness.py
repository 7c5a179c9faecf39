import json
from dataclasses import replace

import pytest

from mtsmt import harness, synthetic
from mtsmt.harness import ConfigError, ExperimentConfig, StageError

UPSTREAM_OF_LM = ("prepare", "segment", "align", "phrase")


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    corpus = synthetic.make_corpus(300, seed=3, compound_rate=0.2, quote_rate=0.3)
    synthetic.write_corpus(corpus, d / "train.src", d / "train.tgt")
    return d


def base_config(data_dir, work, **kw):
    values = dict(id="00", source=str(data_dir / "train.src"), target=str(data_dir / "train.tgt"),
                  work_dir=str(work), n_dev=5, n_test=30, lm_order=3, tune=False,
                  align_iterations=3)
    values.update(kw)
    return ExperimentConfig(**values)


@pytest.fixture(scope="module")
def baseline(data_dir, tmp_path_factory):
    work = tmp_path_factory.mktemp("work")
    cfg = base_config(data_dir, work)
    return cfg, harness.run_experiment(cfg)


def test_baseline_report_and_manifest(baseline):
    cfg, res = baseline
    assert 0 <= res.report.bleu <= 100
    manifest = json.loads(open(res.manifest_path).read())
    stages = [s["stage"] for s in manifest["stages"]]
    assert stages == ["prepare", "segment", "lm", "align", "phrase", "tune", "decode", "score"]
    assert all(len(s["key"]) == 64 for s in manifest["stages"])
    assert manifest["report"] == res.report.as_dict()
    assert res.report_text().splitlines()[0].split("\t") == list(harness.HEADER)


def test_rerun_is_cached_and_identical(baseline):
    cfg, first = baseline
    again = harness.run_experiment(cfg)
    assert all(a.cached for a in again.artifacts)
    assert again.report_text() == first.report_text()


def test_fresh_cache_reproduces_report(baseline, tmp_path):
    cfg, first = baseline
    again = harness.run_experiment(replace(cfg, work_dir=str(tmp_path)))
    assert not any(a.cached for a in again.artifacts)
    assert again.report_text() == first.report_text()


def test_witten_bell_reuses_upstream_stages(baseline):
    cfg, first = baseline
    wb = harness.run_experiment(replace(cfg, id="09", witten_bell=True))
    by_stage = {a.stage: a for a in wb.artifacts}
    base_keys = {a.stage: a.key for a in first.artifacts}
    for name in UPSTREAM_OF_LM:
        assert by_stage[name].cached and by_stage[name].key == base_keys[name]
    assert by_stage["lm"].key != base_keys["lm"] and not by_stage["lm"].cached


def test_hier_mslr_reuses_alignment(baseline):
    cfg, first = baseline
    hier = harness.run_experiment(replace(cfg, id="10", hier_mslr=True))
    by_stage = {a.stage: a for a in hier.artifacts}
    for name in ("prepare", "segment", "lm", "align"):
        assert by_stage[name].cached
    assert not by_stage["phrase"].cached


def test_missing_corpus_names_path(tmp_path):
    cfg = ExperimentConfig(id="x", source=str(tmp_path / "nope.src"),
                           target=str(tmp_path / "nope.tgt"), work_dir=str(tmp_path / "w"))
    with pytest.raises(StageError, match="nope.src"):
        harness.run_experiment(cfg)


def test_stage_failure_keeps_partial_output(tmp_path):
    cache = harness.Cache(tmp_path)

    def build(d):
        (d / "partial.txt").write_text("half")
        raise RuntimeError("boom")

    with pytest.raises(StageError, match="stage 'lm' failed: boom") as err:
        cache.run("lm", "k1", build)
    assert err.value.stage == "lm"
    assert (tmp_path / "lm" / "k1.failed" / "partial.txt").read_text() == "half"
    path, _, cached = cache.run("lm", "k1", lambda d: (d / "ok").write_text("1"))
    assert not cached and (path / "ok").exists()
    assert cache.run("lm", "k1", build)[2]


def test_config_file_parsing(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("[experiment]\nid = 06\nsource = a.src\ntarget = a.tgt\nstem_k = 6\n"
                    "fast_align = yes\n", encoding="utf-8")
    cfg = ExperimentConfig.load(path)
    assert cfg.stem_k == 6 and cfg.fast_align is True
    assert cfg.source == str(tmp_path / "a.src")
    again = tmp_path / "again.cfg"
    again.write_text(cfg.dumps(), encoding="utf-8")
    assert ExperimentConfig.load(again) == cfg


@pytest.mark.parametrize("body, message", [
    ("osm = true", "operation sequence model is not supported"),
    ("hierarchical = true", "hierarchical phrase-based model"),
    ("colour = blue", "unknown config key 'colour'"),
    ("stem_k = six", "cannot parse"),
    ("truecase = maybe", "expected a boolean"),
    ("heuristic = grow-sideways", "unknown symmetrization heuristic"),
])
def test_config_rejections(tmp_path, body, message):
    path = tmp_path / "exp.cfg"
    path.write_text(f"[experiment]\nid = x\nsource = a\ntarget = b\n{body}\n", encoding="utf-8")
    with pytest.raises(ValueError, match=message):
        ExperimentConfig.load(path)


def test_config_structure_errors(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("[other]\nid = x\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="missing \\[experiment\\]"):
        ExperimentConfig.load(path)
    with pytest.raises(ConfigError, match="missing 'source'"):
        ExperimentConfig.from_dict({"id": "x", "target": "t"})


def test_suite_rows_and_failures(baseline, tmp_path):
    cfg, first = baseline
    broken = replace(cfg, id="99", source=str(tmp_path / "missing.src"))
    wb = replace(cfg, id="09", witten_bell=True)
    suite = harness.run_suite([cfg, wb, broken])
    assert [name for name, _ in suite.rows] == ["00", "09", "99"]
    lines = suite.table().splitlines()
    assert lines[0].split("\t") == list(harness.HEADER) + ["dBLEU"]
    assert lines[1].split("\t")[-1] == "+0.00"
    assert lines[1].split("\t")[1] == f"{first.report.bleu:.2f}"
    assert "FAILED" in lines[3] and "missing.src" in lines[3]
    with pytest.raises(ValueError):
        harness.run_suite([])


def test_load_suite(tmp_path):
    for name in ("01", "00"):
        (tmp_path / f"{name}.cfg").write_text(
            f"[experiment]\nid = {name}\nsource = s\ntarget = t\n", encoding="utf-8")
    assert [c.id for c in harness.load_suite(tmp_path)] == ["00", "01"]
    with pytest.raises(ValueError):
        harness.load_suite(tmp_path / "empty")


def test_parse_pair_validates_before_network():
    assert harness.parse_pair("pl-en") == ("pl", "en")
    for bad in ("xx-en", "pl_en", "pl-pl", "", "pol-eng"):
        with pytest.raises(ValueError):
            harness.parse_pair(bad)
    with pytest.raises(ValueError):
        harness.fetch_emea("/nonexistent/never-created", "xx-en")


@pytest.mark.network
def test_fetch_emea_pl_en(tmp_path):
    src, tgt, n = harness.fetch_emea(tmp_path, "pl-en")
    assert sum(1 for _ in open(src, "rb")) == sum(1 for _ in open(tgt, "rb")) == n
