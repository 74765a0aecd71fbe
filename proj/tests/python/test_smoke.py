import math

import numpy as np
import pytest

import osda

SHORT = {"total_iterations": 200, "breakpoint_iteration": 100, "seed": 3}


@pytest.fixture(scope="module")
def bench():
    return osda.synthetic_benchmark()


def test_h_score():
    assert osda.h_score(91.8, 90.3) == pytest.approx(2 * 91.8 * 90.3 / (91.8 + 90.3))
    assert osda.h_score(0.0, 0.0) == 0.0


def test_loss_values_and_gradient_shape():
    value, grad, parts = osda.loss("negative_constraint", np.array([[0.9, 0.1, 0.5]]), from_probs=True)
    assert value == pytest.approx(-(math.log(0.1) + math.log(0.9) + math.log(0.5)) / 3, abs=1e-9)
    assert grad.shape == (1, 6)  # w.r.t. the (known, unknown) logit pairs
    assert parts["clamped"] == 0.0
    logits = np.random.default_rng(0).normal(size=(4, 6))
    value, grad, _ = osda.loss("open_set_entropy_minimization", logits)
    assert grad.shape == logits.shape and value > 0
    with pytest.raises(osda.ConfigError):
        osda.loss("nope", logits)


def test_benchmark_shapes(bench):
    source, target, ls = bench
    assert len(source) == 600 and len(target) == 1200
    assert source.samples.shape == (600, 2)
    assert ls.known == ["c00", "c01", "c02"]
    assert len(ls.unknown) == 3


def test_train_infer_evaluate(bench, tmp_path):
    source, target, ls = bench
    cfg = dict(SHORT, strategy="original", extraction_threshold=0.5)
    model = osda.train(cfg, source, target, ls)
    out = model.infer(target.samples[:10])
    assert out["pseudo_label"].shape == (10,)
    assert np.all((out["known_prob"] >= 0) & (out["known_prob"] <= 1))
    assert np.array_equal(out["is_known"], out["known_prob"] >= 0.5)

    report = osda.evaluate(model, target, ls)
    assert 0 <= report["acc_known"] <= 100
    assert report["h_score"] == pytest.approx(osda.h_score(report["acc_known"], report["acc_unknown"]))

    path = tmp_path / "m.ckpt"
    model.save(path)
    again = osda.load_model(path)
    assert np.array_equal(again.infer(target.samples)["known_prob"], model.infer(target.samples)["known_prob"])


def test_extraction_is_strictly_above_threshold(bench):
    source, target, ls = bench
    model = osda.train(dict(SHORT, strategy="baseline"), source, target, ls)
    negs = osda.extract_negatives(model, target, 0.5)
    probs = model.infer(target.samples)["known_prob"]
    expected = {i for i, p in enumerate(probs) if 1 - p > 0.5}
    assert {row for row, _, _ in negs} == expected
    assert all(conf > 0.5 for _, _, conf in negs)


def test_trainer_events_and_resume(bench, tmp_path):
    source, target, ls = bench
    cfg = dict(SHORT, strategy="original", extraction_threshold=0.3)
    t = osda.Trainer(cfg, source, target, ls)
    t.run_until(120)
    assert t.iteration == 120
    assert t.events[0][:2] == (100, "extraction")
    t.save(tmp_path / "t.ckpt")
    r = osda.Trainer.resume(tmp_path / "t.ckpt", source, target, ls)
    r.run()
    t.run()
    assert r.done and t.done
    assert r.loss_history == t.loss_history


def test_schedule_and_config_errors():
    cfg = {"strategy": "generationpp", "total_iterations": 4000, "breakpoint_iteration": 1000,
           "interleave_interval": 1000}
    assert osda.event_schedule(cfg) == [1000, 2000, 3000]
    assert osda.default_config()["lambda_neg"] == 0.2
    with pytest.raises(osda.ConfigError):
        osda.event_schedule({"lambda_neg": -1.0})
    with pytest.raises(osda.ConfigError):
        osda.event_schedule({"no_such_key": 1})


def test_evaluate_decisions():
    ls = osda.LabelSpace(["a", "b"], ["u"])
    rows = [("a", "a"), ("a", "a"), ("a", "b"), ("b", "b"), ("u", None), ("u", "a")]
    r = osda.evaluate_decisions(rows, ls)
    assert r["acc_known"] == pytest.approx((200 / 3 + 100) / 2)
    assert r["acc_unknown"] == pytest.approx(50.0)


def test_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(osda.ContractError):
        osda.load_model(bad)
