import math

import pytest

import dwd

TINY = {
    "data.n_train": "48",
    "data.n_val": "16",
    "train.batch": "16",
    "train.epochs": "1",
    "train.games_per_epoch": "16",
    "train.rounds": "2",
}


def test_config_roundtrip_and_errors():
    text = dwd.default_config({"train.lr": "0.01"})
    assert "train.lr = 0.01" in text
    with pytest.raises(ValueError):
        dwd.default_config({"nope.key": "1"})


def test_grid_names():
    names = dwd.setting_names()
    assert len(names) == 6
    assert "2-random-5R-base" in names


def test_oracle_matches_generated_answers():
    for ex in dwd.generate_examples(20, seed=3):
        images = ex["pool"]["images"]
        got = tuple(dwd.oracle_answer(img, ex["question"]) for img in images)
        assert got == ex["answers"]
        assert got[0] != got[1]


def test_pools_are_seeded():
    a = dwd.sample_pool(9, seed=5)
    assert a == dwd.sample_pool(9, seed=5)
    assert len(a["images"]) == 9
    assert 1 <= a["target_index"] <= 9
    with pytest.raises(ValueError):
        dwd.sample_pool(3, seed=5)


def test_diversity_by_hand():
    assert dwd.diversity(["what color is the circle ?", "what color is the square ?"], 1) == pytest.approx(
        100 * 7 / 12
    )
    with pytest.raises(ValueError):
        dwd.diversity([], 2)


def test_rollout_and_metrics():
    model = dwd.Model.init("discrete_elbo", seed=1)
    pools = dwd.setting_pools("2-random-5R-base", 8, seed=2)
    ts = model.rollout(pools, rounds=5, seed=4)
    assert len(ts) == 8
    assert all(len(t["rounds"]) == 5 for t in ts)
    assert ts == model.rollout(pools, rounds=5, seed=4)

    corpus = [ex["question"] for ex in dwd.generate_examples(64, seed=1)]
    lm = dwd.LanguageModel.train(corpus, epochs=1, seed=1)
    assert math.isfinite(lm.perplexity(corpus[:8]))
    rep = dwd.evaluate(ts, lm)
    assert 0.0 <= rep["accuracy"] <= 1.0
    assert len(rep["accuracy_by_round"]) == 5
    assert rep["perplexity"] > 1.0
    assert dwd.evaluate(ts)["perplexity"] is None


def test_training_is_deterministic(tmp_path):
    a = dwd.Model.train_stage1("ours_discrete_elbo", seed=5, overrides=TINY)
    b = dwd.Model.train_stage1("ours_discrete_elbo", seed=5, overrides=TINY)
    assert a.group_hashes == b.group_hashes
    s2 = a.train_stage2("stage2a", "ours_discrete_elbo", seed=5, overrides=TINY)
    before, after = a.group_hashes, s2.group_hashes
    for g in ("ctx.", "embed.", "policy.", "speaker."):
        assert before[g] == after[g]
    path = tmp_path / "m.ckpt"
    s2.save(path)
    loaded = dwd.Model.load(path, tag="ours")
    assert loaded.group_hashes == after
    assert loaded.tag == "ours"
    with pytest.raises(ValueError):
        dwd.Model.train_stage1("magic", seed=1, overrides=TINY)
