# Copyright 2026 The voxt Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math

import numpy as np
import pytest

import voxt


def small_vocab():
    chars = [chr(c) for c in range(ord("a"), ord("z") + 1)] + [" "]
    return voxt.VoxtVocab.build(chars, 16)


def test_vocab_round_trip():
    v = small_vocab()
    assert len(v) == 7 + 27 + 16
    ids = v.encode_text("hello world")
    assert v.decode_text(ids) == "hello world"
    units = [3, 1, 4, 1, 5]
    assert v.decode_speech(v.encode_speech(units)) == units
    assert voxt.VoxtVocab.from_json(v.to_json()).digest() == v.digest()


def test_toy_domain_inverse():
    spec = voxt.ToyDomainSpec.lowercase(3)
    dom = voxt.ToyDomain(spec)
    utts = voxt.gen_toy_corpus(spec, 5, (1, 3))
    for u in utts:
        assert dom.invert(u.speech) == u.text


def test_kmeans_and_dedup():
    rng = np.random.default_rng(0)
    frames = np.concatenate([rng.normal(0, 0.01, (10, 2)), rng.normal(5, 0.01, (10, 2))]).astype(np.float32)
    cb = voxt.train_codebook(frames, 2, seed=1)
    labels = voxt.assign(frames, cb)
    assert len(set(labels[:10])) == 1 and len(set(labels[10:])) == 1
    assert labels[0] != labels[-1]
    assert voxt.dedup_runs([1, 1, 2, 2, 2, 1]) == [1, 2, 1]


def test_format_parse():
    v = small_vocab()
    rec = voxt.TaskRecord(voxt.Task.ASR, text=v.encode_text("ab"), speech=v.encode_speech([1, 2]))
    seq = voxt.format_train(rec, v)
    parsed = voxt.parse_generated(seq, v)
    assert parsed["task"] == voxt.Task.ASR
    assert parsed["record"] == rec


def test_model_forward_and_checkpoint(tmp_path):
    cfg = voxt.ModelConfig(11, n_layers=1, width=8, n_heads=2, max_seq_len=16)
    p = voxt.init_params(cfg, seed=3)
    logits = voxt.forward(p, [1, 2, 3])
    assert logits.shape == (3, 11)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    assert np.allclose(probs.sum(axis=1), 1.0)
    path = tmp_path / "m.ckpt"
    voxt.save_checkpoint(path, p)
    q, meta = voxt.load_checkpoint(path)
    assert q == p
    assert meta == "{}"


def test_config_error():
    with pytest.raises(voxt.VoxtError):
        voxt.ModelConfig(11, width=10, n_heads=3)


def test_lr_schedule():
    c = voxt.TrainConfig()
    c.peak_lr = 1e-3
    c.warmup_steps = 100
    assert voxt.lr_at_step(100, c) == pytest.approx(1e-3)
    assert voxt.lr_at_step(400, c) == pytest.approx(5e-4)


def test_short_training_lowers_loss():
    cfg = voxt.ModelConfig(11, n_layers=1, width=16, n_heads=2, max_seq_len=16)
    p = voxt.init_params(cfg, seed=0)
    examples = [(voxt.Task.TEXTLM, [2, 7, 8, 9, 7, 8, 9, 4])] * 4
    tc = voxt.TrainConfig()
    tc.total_steps = 60
    tc.warmup_steps = 5
    tc.batch_size = 4
    tc.peak_lr = 1e-2
    tc.task_weights = [1.0, 0.0, 0.0, 0.0]
    trained, losses = voxt.train(p, examples, tc)
    assert losses[-1] < losses[0]
    assert voxt.perplexity(trained, [examples[0][1]]) < voxt.perplexity(p, [examples[0][1]])


def test_decoding_respects_allowed_set():
    cfg = voxt.ModelConfig(11, n_layers=1, width=8, n_heads=2, max_seq_len=16)
    p = voxt.init_params(cfg, seed=5)
    dc = voxt.DecodeConfig(mode="beam", beam_size=3, max_new_tokens=4)
    dc.allowed = [1 if i in (4, 8, 9) else 0 for i in range(11)]
    for h in voxt.beam_search(p, [1, 2], dc):
        assert set(h.ids) <= {4, 8, 9}
        assert h.logprob <= 0.0


def test_error_rate():
    refs = [voxt.split_words("a b c")]
    hyps = [voxt.split_words("a x c d")]
    assert voxt.error_rate(refs, hyps) == pytest.approx(2 / 3)
    assert math.isclose(voxt.error_rate(refs, refs), 0.0)
