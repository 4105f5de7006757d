import math
from dataclasses import replace

import numpy as np
import pytest

from fusepath import checkpoint as ck
from fusepath import fusion
from fusepath import training as tr
from fusepath.dataset import FOUR_CLASS, SynthSpec, load_manifest, synthesize_corpus
from fusepath.model import ModelSpec, embed, forward, init_model
from fusepath.training import TrainConfig

FAST = TrainConfig(batch_size=4, epochs_stage1=2, epochs_stage2=1, epochs_e2e=2, lr_tdnn_stage1=1e-4)


def _spec(n_classes=2, **kw):
    return ModelSpec(head=fusion.HeadConfig(n_classes=n_classes), **kw)


def test_single_batch_when_batch_size_covers_corpus(tiny_examples):
    batches = tr.make_batches(tiny_examples, len(tiny_examples) + 5, seed=0, epoch=0)
    assert len(batches) == 1
    assert sorted(batches[0].ids) == sorted(e.id for e in tiny_examples)


def test_batch_order_keyed_by_seed_and_epoch(tiny_examples):
    def order(seed, epoch):
        return [i for b in tr.make_batches(tiny_examples, 3, seed, epoch) for i in b.ids]

    assert order(1, 2) == order(1, 2)
    assert order(1, 2) != order(1, 3)
    assert order(1, 2) != order(2, 2)
    sizes = [len(b) for b in tr.make_batches(tiny_examples, 3, 0, 0)]
    assert sizes[:-1] == [3] * (len(sizes) - 1) and sum(sizes) == len(tiny_examples)


def test_empty_corpus_errors():
    with pytest.raises(tr.EmptyCorpusError):
        tr.make_batches([], 4, 0, 0)
    with pytest.raises(tr.EmptyCorpusError):
        tr.stage1_train_tdnn([], _spec(), FAST)


def test_label_out_of_range(tiny_examples):
    bad = [replace(e, label=5) if i == 0 else e for i, e in enumerate(tiny_examples)]
    bad = [replace(e, split="train") for e in bad]
    with pytest.raises(ValueError, match="out of range"):
        tr.stage1_train_tdnn(bad, _spec(), FAST)


@pytest.mark.parametrize("kind", ["tdnn", "acoustic", "fusion"])
def test_masked_pool_matches_unpadded_clip(tiny_examples, kind):
    spec = _spec(kind=kind)
    params = init_model(spec, 3)
    short = min(tiny_examples, key=lambda e: len(e.wave))
    long = max(tiny_examples, key=lambda e: len(e.wave))
    alone = embed(spec, params, tr.collate([short])).data[0]
    padded = embed(spec, params, tr.collate([long, short])).data[1]
    np.testing.assert_allclose(padded, alone, atol=1e-6)


@pytest.mark.parametrize("style", ["attention", "add", "concat"])
def test_logits_do_not_depend_on_batch_company(tiny_examples, style):
    spec = _spec(fusion_style=style)
    params = init_model(spec, 4)
    alone = np.concatenate([forward(spec, params, tr.collate([e]))[0].data for e in tiny_examples])
    batched = forward(spec, params, tr.collate(tiny_examples))[0].data
    np.testing.assert_allclose(batched, alone, atol=1e-5)


def test_stage1_is_bit_reproducible(tiny_examples, tmp_path):
    for run in ("a", "b"):
        res = tr.stage1_train_tdnn(tiny_examples, _spec(), FAST)
        tr.save_result(res, tmp_path / f"{run}.fpck", "stage1_tdnn", {})
        tr.write_log([{k: v for k, v in r.items() if k != "wall_time"} for r in res.log], tmp_path / f"{run}.log")
    assert (tmp_path / "a.fpck").read_bytes() == (tmp_path / "b.fpck").read_bytes()
    assert (tmp_path / "a.head.fpck").read_bytes() == (tmp_path / "b.head.fpck").read_bytes()
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()
    state = ck.read_state(tmp_path / "a.fpck")
    assert all(n.startswith("tdnn.") for n in state)


def test_stage1_log_records(tiny_examples):
    res = tr.stage1_train_acoustic(tiny_examples, _spec(), FAST)
    assert [r["epoch"] for r in res.log] == [0, 1]
    for r in res.log:
        assert r["stage"] == "stage1_acoustic"
        assert math.isfinite(r["loss"]) and 0 <= r["train_acc"] <= 1 and 0 <= r["val_acc"] <= 1
        assert r["wall_time"] >= 0


@pytest.fixture(scope="module")
def four_class_examples(tmp_path_factory):
    out = tmp_path_factory.mktemp("four")
    synthesize_corpus(SynthSpec(n_per_class=6, classes=FOUR_CLASS, seed=3), out)
    return tr.prepare_corpus(load_manifest(out / "manifest.jsonl"))


@pytest.mark.parametrize("path", ["tdnn", "acoustic"])
def test_initial_loss_near_log_c_for_four_classes(four_class_examples, path):
    train = tr.split_of(four_class_examples, "train")
    cfg = TrainConfig(batch_size=2, epochs_stage1=1, n_classes=4, lr_tdnn_stage1=1e-4)
    assert len(tr.make_batches(train, cfg.batch_size, cfg.seed, 0)) == 10
    fn = tr.stage1_train_tdnn if path == "tdnn" else tr.stage1_train_acoustic
    res = fn(four_class_examples, _spec(4), cfg)
    assert abs(res.log[0]["loss"] - math.log(4)) <= 0.3


def test_stage2_reload_and_initial_loss(tiny_examples, tmp_path):
    r_t = tr.stage1_train_tdnn(tiny_examples, _spec(), FAST)
    r_a = tr.stage1_train_acoustic(tiny_examples, _spec(), FAST)
    tr.save_result(r_t, tmp_path / "t.fpck", "stage1_tdnn", {})
    tr.save_result(r_a, tmp_path / "a.fpck", "stage1_acoustic", {})
    t_state, a_state = ck.read_state(tmp_path / "t.fpck"), ck.read_state(tmp_path / "a.fpck")
    params = tr.stage2_init(_spec(), t_state, a_state, FAST.seed)
    for name, value in {**t_state, **a_state}.items():
        cur = params.buffers[name] if name in params.buffers else params[name].data
        assert cur.tobytes() == value.tobytes(), name
    ck.save_checkpoint(tmp_path / "re.fpck", params.subset("tdnn."))
    assert (tmp_path / "re.fpck").read_bytes() == (tmp_path / "t.fpck").read_bytes()

    res = tr.stage2_finetune(tiny_examples, t_state, a_state, _spec(), FAST)
    init = res.log[0]
    assert init["stage"] == "stage2_init" and init["epoch"] == -1
    assert math.isfinite(init["loss"]) and init["loss"] <= 2 * math.log(2)
    assert [r["epoch"] for r in res.log[1:]] == list(range(FAST.epochs_stage2))


def test_stage2_rejects_mismatched_checkpoint(tiny_examples):
    r_t = tr.stage1_train_tdnn(tiny_examples, _spec(), replace(FAST, epochs_stage1=0))
    state = r_t.params.state()
    state["tdnn.proj.weight"] = np.zeros((3, 3, 3), np.float32)
    a_state = tr.init_encoder("acoustic", _spec(), 0).state()
    with pytest.raises(ck.CheckpointError, match="tdnn.proj.weight"):
        tr.stage2_init(_spec(), state, a_state, 0)


def test_end_to_end_log_length_and_reproducibility(tiny_examples, tmp_path):
    a = tr.end_to_end_train(tiny_examples, _spec(), FAST)
    b = tr.end_to_end_train(tiny_examples, _spec(), FAST)
    assert len(a.log) == FAST.epochs_e2e
    assert all(r["stage"] == "end_to_end" for r in a.log)
    ck.save_checkpoint(tmp_path / "a.fpck", a.params)
    ck.save_checkpoint(tmp_path / "b.fpck", b.params)
    assert (tmp_path / "a.fpck").read_bytes() == (tmp_path / "b.fpck").read_bytes()
    strip = [[{k: v for k, v in r.items() if k != "wall_time"} for r in res.log] for res in (a, b)]
    assert strip[0] == strip[1]


def test_saved_model_reloads_to_same_predictions(tiny_examples, tmp_path):
    res = tr.end_to_end_train(tiny_examples, _spec(), replace(FAST, epochs_e2e=1))
    tr.save_result(res, tmp_path / "m.fpck", "end_to_end", {"x": 1})
    spec, params = tr.load_model(tmp_path / "m.fpck")
    assert spec == res.spec
    _, _, before, _ = tr.predict(res.spec, res.params, tiny_examples)
    _, _, after, _ = tr.predict(spec, params, tiny_examples)
    np.testing.assert_array_equal(before, after)


def test_stage1_model_reloads_with_its_head(tiny_examples, tmp_path):
    res = tr.stage1_train_tdnn(tiny_examples, _spec(), FAST)
    tr.save_result(res, tmp_path / "s.fpck", "stage1_tdnn", {})
    spec, params = tr.load_model(tmp_path / "s.fpck")
    full = res.params.merge(res.head)
    np.testing.assert_array_equal(tr.predict(spec, params, tiny_examples)[2],
                                  tr.predict(res.spec, full, tiny_examples)[2])


@pytest.mark.slow
@pytest.mark.parametrize("path", ["tdnn", "acoustic"])
def test_stage1_fits_the_synthetic_corpus(pipeline, default_examples, path):
    res = pipeline[path]
    assert len(res.log) == pipeline["cfg"].epochs_stage1
    full = res.params.merge(res.head)
    assert tr.accuracy(res.spec, full, tr.split_of(default_examples, "train")) >= 0.95


@pytest.mark.slow
def test_stage2_not_worse_than_single_paths(pipeline, default_examples):
    val = tr.split_of(default_examples, "val")
    fused = pipeline["fused"]
    singles = [tr.accuracy(r.spec, r.params.merge(r.head), val) for r in (pipeline["tdnn"], pipeline["acoustic"])]
    assert tr.accuracy(fused.spec, fused.params, val) >= max(singles) - 0.02
