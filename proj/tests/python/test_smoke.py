import itertools
import math

import pytest

import emoq

TINY = {
    "image_size": 8,
    "patch": 4,
    "vision_dim": 8,
    "vision_depth": 1,
    "vision_heads": 2,
    "queries": 2,
    "dim": 8,
    "layers": 2,
    "heads": 2,
    "ffn_dim": 16,
    "synth_train": 40,
    "synth_val": 10,
    "max_epochs": 2,
    "batch_size": 8,
}


def brute_ap(scores, labels):
    n = len(scores)
    ahead = lambda j, i: scores[j] > scores[i] or (scores[j] == scores[i] and j < i)
    precisions = []
    for i in range(n):
        if labels[i]:
            better = [j for j in range(n) if j != i and ahead(j, i)]
            precisions.append((1 + sum(labels[j] for j in better)) / (1 + len(better)))
    return sum(precisions) / len(precisions)


def test_prompt_variants():
    names = emoq.caers_class_names()
    with_box = emoq.build_prompt(names, True)
    without = emoq.build_prompt(names, has_bbox=False)
    assert with_box.startswith("USER: <image>\nGiven the following list of emotions: Anger, Disgust,")
    assert "in the red box" in with_box and "in the red box" not in without
    assert len(emoq.emotic_class_names()) == 26
    with pytest.raises(ValueError):
        emoq.build_prompt(["Fear", "Fear"])


def test_metrics_against_brute_force():
    for scores, labels in [
        ([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]),
        ([0.5, 0.5, 0.5], [0, 1, 1]),
        ([0.2, 0.4, 0.4, 0.9, 0.0], [1, 0, 1, 0, 0]),
    ]:
        assert emoq.average_precision(scores, labels) == pytest.approx(brute_ap(scores, labels), abs=1e-12)
        pairs = [(p, q) for p, q in itertools.product(range(len(scores)), repeat=2) if labels[p] and not labels[q]]
        auc = sum(1.0 if scores[p] > scores[q] else 0.5 if scores[p] == scores[q] else 0.0 for p, q in pairs) / len(pairs)
        assert emoq.roc_auc(scores, labels) == pytest.approx(auc, abs=1e-12)
    assert emoq.iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert emoq.iou((0, 0, 10, 10), (5, 0, 15, 10)) == 1.0 / 3.0


def test_frame_indices():
    assert emoq.frame_indices(16, 8) == [0, 2, 4, 6, 8, 10, 12, 14]
    assert emoq.frame_indices(3, 5) == [0, 1, 2, 2, 2]


def test_ceiling_and_config_errors():
    c = emoq.modality_ceiling()
    assert c["chance"] == pytest.approx(0.2)
    assert c["vision"] <= 0.5 + c["chance"] and c["text"] <= 0.5 + c["chance"]
    with pytest.raises(emoq.ConfigError):
        emoq.modality_ceiling({"no_such_key": 1})


def test_gradient_suite():
    passed, errors = emoq.gradient_suite()
    assert passed
    assert "end_to_end_multi" in errors
    assert max(errors.values()) < 1e-4


def test_synth_train_eval(tmp_path):
    manifest = emoq.write_synthetic(tmp_path / "corpus", TINY)
    assert manifest.exists()
    out = emoq.train({**TINY, "output_dir": tmp_path / "run"})
    assert [r["epoch"] for r in out["history"]] == [1, 2]
    assert all(math.isfinite(r["train_loss"]) for r in out["history"])
    again = emoq.train({**TINY, "output_dir": tmp_path / "run2"})
    assert again["history"] == out["history"]
    report = emoq.evaluate(out["checkpoint"], manifest, "val")
    assert report["samples"] == 10
    assert 0.0 <= report["accuracy"] <= 1.0
