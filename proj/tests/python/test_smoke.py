"""End-to-end smoke tests for the Python bindings.

Everything here drives the same code paths as the `uapt` CLI binary; the
goal is to prove the module imports, the pipeline round-trips through
`uapt.run`, and the direct helpers return sane Python structures.
"""

import json
import math

import pytest

import uapt

TINY_CFG = """\
# tiny desk config so the whole pipeline runs in seconds
model.d = 32
model.l_q = 4
model.l_u = 2
model.visual_tokens = 4
model.mapping_depth = 1
model.mapping_heads = 2
model.fusion_depth = 1
model.fusion_heads = 2
model.ff = 32
model.max_caption_len = 8
lm.d = 32
lm.depth = 1
lm.heads = 2
lm.ff = 64
lm.max_seq = 24
lm.steps = 25
lm.batch = 8
lm.warmup = 2
opt.epochs = 1
opt.batch = 8
opt.warmup = 2
decode.beam = 2
decode.max_len = 8
"""


def test_version_and_normalize():
    assert uapt.__version__ == "0.1.0"
    assert uapt.normalize("  Alpha BETA\tgamma ") == ["alpha", "beta", "gamma"]
    assert uapt.normalize("") == []


def test_metric_self_evaluation_identities():
    pairs = [
        (["a", "b", "c", "d", "e"], ["a", "b", "c", "d", "e"]),
        (["u", "v", "w", "x"], ["u", "v", "w", "x"]),
    ]
    for n in (1, 2, 3, 4):
        assert uapt.bleu(pairs, n) == pytest.approx(1.0, abs=1e-12)
    assert uapt.rouge_l(pairs) == pytest.approx(1.0, abs=1e-12)
    assert uapt.cider_d(pairs) == pytest.approx(10.0, abs=1e-9)
    assert 0.9 < uapt.meteor_lite(pairs) <= 1.0

    report = uapt.evaluate(pairs)
    assert report["bleu4"] == pytest.approx(1.0, abs=1e-12)
    assert report["cider_d"] == pytest.approx(10.0, abs=1e-9)
    assert report["n_pairs"] == 2
    assert report["candidate_tokens"] == 9
    assert report["meteor_exact_match_only"] is True


def test_metrics_penalize_mismatch():
    pairs = [(["a", "b", "c", "d"], ["a", "b", "x", "y"])]
    assert 0.0 < uapt.bleu(pairs, 1) < 1.0
    assert uapt.bleu(pairs, 4) == 0.0  # no common 4-gram => clipped precision 0
    assert 0.0 < uapt.rouge_l(pairs) < 1.0
    with pytest.raises(ValueError):
        uapt.bleu([], 1)


def test_synth_structure_and_determinism():
    records, styles = uapt.synth(users=4, posts_per_user=10, seed=7)
    assert len(records) == 40
    assert sorted(styles) == sorted({r["user_id"] for r in records})
    for rec in records:
        assert len(rec["image"]) == 128
        assert rec["split"] in {"train", "val", "test"}
        assert rec["caption"]
    # per-user split fractions: 8 train / 1 val / 1 test
    by_split = {"train": 0, "val": 0, "test": 0}
    for rec in records:
        by_split[rec["split"]] += 1
    assert by_split == {"train": 32, "val": 4, "test": 4}
    # style vocabularies are pairwise disjoint
    seen = set()
    for words in styles.values():
        assert not (set(words) & seen)
        seen |= set(words)
    again, _ = uapt.synth(users=4, posts_per_user=10, seed=7)
    assert again == records
    other, _ = uapt.synth(users=4, posts_per_user=10, seed=8)
    assert other != records


def test_stats_and_keywords(tmp_path):
    data = str(tmp_path / "corpus.jsonl")
    styles_path = str(tmp_path / "styles.json")
    rc = uapt.run(
        ["synth", "--out", data, "--styles", styles_path,
         "--users", "6", "--posts", "12", "--seed", "9"]
    )
    assert rc == 0

    stats = uapt.corpus_stats(data)
    assert stats["posts"] == 72
    assert stats["users"] == 6
    assert stats["intra_class"] > stats["inter_class"]

    with open(styles_path) as fh:
        styles = json.load(fh)
    table = uapt.keyword_table(data, k=16)
    assert sorted(table) == sorted(styles)
    hits = total = 0
    for user, planted in styles.items():
        ranked = [w for w, _ in table[user]]
        weights = [wt for _, wt in table[user]]
        assert weights == sorted(weights, reverse=True)
        total += len(planted)
        hits += sum(1 for w in planted if w in ranked)
    assert hits / total >= 0.8  # noise-free corpus: style words dominate TF-IDF


def test_pipeline_round_trip(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    data = str(tmp_path / "corpus.jsonl")
    lm = str(tmp_path / "lm.ckpt")
    model = str(tmp_path / "model.ckpt")
    caps = str(tmp_path / "captions.jsonl")
    rep = str(tmp_path / "report.json")

    assert uapt.run(["synth", "--out", data, "--users", "4", "--posts", "10",
                     "--seed", "5"]) == 0
    assert uapt.run(["pretrain-lm", "--data", data, "--out", lm,
                     "--config", str(cfg), "--seed", "1"]) == 0
    assert uapt.run(["train", "--data", data, "--lm", lm, "--out", model,
                     "--config", str(cfg), "--seed", "3"]) == 0
    assert uapt.run(["generate", "--data", data, "--lm", lm, "--model", model,
                     "--out", caps, "--split", "test", "--config", str(cfg)]) == 0
    assert uapt.run(["eval", "--data", data, "--captions", caps, "--out", rep,
                     "--split", "test"]) == 0

    lines = [json.loads(line) for line in open(caps)]
    assert len(lines) == 4  # one test post per user
    for line in lines:
        assert set(line) == {"user_id", "caption", "logprob"}
        assert math.isfinite(line["logprob"])

    with open(rep) as fh:
        report = json.load(fh)
    assert report["n_pairs"] == 4
    for key in ("bleu1", "bleu4", "rouge_l", "cider_d", "meteor_lite"):
        assert 0.0 <= report[key]


def test_exit_codes(tmp_path):
    assert uapt.run(["--bogus"]) == 2
    assert uapt.run(["stats", "--data", str(tmp_path / "absent.jsonl")]) == 3
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("model.d = banana\n")
    assert uapt.run(["train", "--data", "x", "--lm", "y", "--out", "z",
                     "--config", str(bad_cfg)]) == 4


def test_gradcheck_bindings():
    results = uapt.gradcheck()
    assert len(results) >= 10
    names = {r["name"] for r in results}
    assert "uapt_micro" in names
    for r in results:
        assert r["ok"], f"{r['name']} max_rel_err={r['max_rel_err']}"
        assert r["n_checked"] > 0
