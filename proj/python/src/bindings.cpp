// Copyright 2026 The voxt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "voxt/corpus.hpp"
#include "voxt/error.hpp"
#include "voxt/eval.hpp"
#include "voxt/formatter.hpp"
#include "voxt/inference.hpp"
#include "voxt/model.hpp"
#include "voxt/quantizer.hpp"
#include "voxt/trainer.hpp"
#include "voxt/vocab.hpp"

namespace py = pybind11;
using namespace voxt;

namespace {

FeatureMatrix to_features(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw ValidationError("feature array must be 2-D");
  FeatureMatrix m(static_cast<std::uint32_t>(a.shape(0)), static_cast<std::uint32_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::array_t<float> from_features(const FeatureMatrix& m) {
  py::array_t<float> out({static_cast<py::ssize_t>(m.n_frames), static_cast<py::ssize_t>(m.dim)});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_voxt, m) {
  m.doc() = "Joint speech-text language model toolkit";

  static py::exception<Error> error(m, "VoxtError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (e.kind() + ": " + e.what()).c_str());
    }
  });

  py::enum_<Task>(m, "Task")
      .value("TEXTLM", Task::kTextLM)
      .value("SPEECHLM", Task::kSpeechLM)
      .value("ASR", Task::kAsr)
      .value("TTS", Task::kTts);
  py::enum_<Modality>(m, "Modality")
      .value("SPECIAL", Modality::kSpecial)
      .value("TEXT", Modality::kText)
      .value("SPEECH", Modality::kSpeech);
  py::enum_<Special>(m, "Special")
      .value("START_TEXT", Special::kStartText)
      .value("START_SPEECH", Special::kStartSpeech)
      .value("GENERATE_TEXT", Special::kGenerateText)
      .value("GENERATE_SPEECH", Special::kGenerateSpeech)
      .value("EOS", Special::kEos)
      .value("PAD", Special::kPad)
      .value("UNK", Special::kUnk);

  // Corpus and toy domain.
  py::class_<ToyDomainSpec>(m, "ToyDomainSpec")
      .def_static("lowercase", &ToyDomainSpec::lowercase, py::arg("seed") = 0)
      .def_readwrite("charset", &ToyDomainSpec::charset)
      .def_readwrite("arity", &ToyDomainSpec::arity)
      .def_readwrite("dup_prob", &ToyDomainSpec::dup_prob)
      .def_readwrite("seed", &ToyDomainSpec::seed)
      .def_readwrite("num_units", &ToyDomainSpec::num_units)
      .def_readwrite("lexicon_size", &ToyDomainSpec::lexicon_size);
  py::class_<ToyUtterance>(m, "ToyUtterance")
      .def_readonly("text", &ToyUtterance::text)
      .def_readonly("speech", &ToyUtterance::speech);
  py::class_<ToyDomain>(m, "ToyDomain")
      .def(py::init<ToyDomainSpec>())
      .def_property_readonly("lexicon", &ToyDomain::lexicon)
      .def("render", [](const ToyDomain& d, const std::string& text) { return d.render(text); })
      .def("invert", [](const ToyDomain& d, const SpeechTokenSeq& u) { return d.invert(u); });
  m.def("gen_toy_corpus", &gen_toy_corpus, py::arg("spec"), py::arg("n_utts"), py::arg("len_range"));
  m.def("save_feature_file", [](const std::filesystem::path& p, py::array_t<float> a) { save_feature_file(p, to_features(a)); });
  m.def("load_feature_file", [](const std::filesystem::path& p) { return from_features(load_feature_file(p)); });

  // Quantizer.
  py::class_<Codebook>(m, "Codebook")
      .def_readonly("k", &Codebook::k)
      .def_readonly("dim", &Codebook::dim)
      .def_property_readonly("centroids", [](const Codebook& c) {
        FeatureMatrix f(c.k, c.dim);
        f.data = c.centroids;
        return from_features(f);
      });
  m.def(
      "train_codebook",
      [](py::array_t<float> frames, std::uint32_t k, std::uint32_t max_iters, std::uint64_t seed) {
        return train_codebook(to_features(frames), {k, max_iters, seed});
      },
      py::arg("frames"), py::arg("k"), py::arg("max_iters") = 100, py::arg("seed") = 0);
  m.def("assign", [](py::array_t<float> frames, const Codebook& cb) { return assign(to_features(frames), cb); });
  m.def("dedup_runs", [](const SpeechTokenSeq& s) { return dedup_runs(s); });

  // Vocabulary.
  py::class_<VoxtVocab>(m, "VoxtVocab")
      .def_static("build", &VoxtVocab::build, py::arg("text_symbols"), py::arg("k"))
      .def_static("load", &VoxtVocab::load)
      .def_static("from_json", &VoxtVocab::from_json)
      .def("save", &VoxtVocab::save)
      .def("to_json", &VoxtVocab::to_json)
      .def("digest", &VoxtVocab::digest)
      .def("__len__", &VoxtVocab::size)
      .def("id", &VoxtVocab::id)
      .def("modality", &VoxtVocab::modality)
      .def("token_string", &VoxtVocab::token_string)
      .def("encode_text", &VoxtVocab::encode_text)
      .def("encode_speech", [](const VoxtVocab& v, const SpeechTokenSeq& u) { return v.encode_speech(u); })
      .def("decode_text", [](const VoxtVocab& v, const TokenSeq& ids) { return v.decode_text(ids); })
      .def("decode_speech", [](const VoxtVocab& v, const TokenSeq& ids) { return v.decode_speech(ids); })
      .def_property_readonly("merges", &VoxtVocab::merges);
  m.def(
      "train_bpe",
      [](const VoxtVocab& v, const std::vector<TokenSeq>& corpora, std::size_t target) {
        return train_bpe(v, corpora, target);
      },
      py::arg("vocab"), py::arg("corpora"), py::arg("target_size"));

  // Formatter.
  py::class_<TaskRecord>(m, "TaskRecord")
      .def(py::init([](Task t, std::optional<TokenSeq> text, std::optional<TokenSeq> speech) {
             return TaskRecord{t, std::move(text), std::move(speech)};
           }),
           py::arg("task"), py::arg("text") = py::none(), py::arg("speech") = py::none())
      .def_readwrite("task", &TaskRecord::task)
      .def_readwrite("text", &TaskRecord::text)
      .def_readwrite("speech", &TaskRecord::speech)
      .def("__eq__", [](const TaskRecord& a, const TaskRecord& b) { return a == b; });
  m.def("format_train", &format_train);
  m.def("format_prompt", [](Task t, const TokenSeq& cond, const VoxtVocab& v) { return format_prompt(t, cond, v); });
  m.def("parse_generated", [](const TokenSeq& seq, const VoxtVocab& v) {
    const ParsedSequence p = parse_generated(seq, v);
    py::dict d;
    d["task"] = p.task ? py::cast(*p.task) : py::none();
    d["content"] = p.content;
    d["terminated"] = p.terminated;
    d["malformed"] = p.malformed;
    d["record"] = p.to_record() ? py::cast(*p.to_record()) : py::none();
    return d;
  });

  // Model.
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](std::uint32_t vocab_size, std::uint32_t n_layers, std::uint32_t width, std::uint32_t n_heads,
                       std::uint32_t max_seq_len, double dropout) {
             ModelConfig c{vocab_size, n_layers, width, n_heads, max_seq_len, 4, dropout};
             c.validate();
             return c;
           }),
           py::arg("vocab_size"), py::arg("n_layers") = 1, py::arg("width") = 64, py::arg("n_heads") = 1,
           py::arg("max_seq_len") = 256, py::arg("dropout") = 0.0)
      .def_static("preset", &ModelConfig::preset)
      .def_readonly("vocab_size", &ModelConfig::vocab_size)
      .def_readonly("n_layers", &ModelConfig::n_layers)
      .def_readonly("width", &ModelConfig::width)
      .def_readonly("n_heads", &ModelConfig::n_heads)
      .def("to_json", &ModelConfig::to_json);
  py::class_<Params>(m, "Params")
      .def_readonly("config", &Params::config)
      .def("num_parameters", [](const Params& p) { return p.values.size(); })
      .def("__eq__", [](const Params& a, const Params& b) { return a == b; });
  m.def("init_params", &init_params<float>, py::arg("config"), py::arg("seed") = 0);
  m.def("forward", [](const Params& p, const TokenSeq& tokens) {
    const RowMatrix<float> logits = forward<float>(p, tokens);
    py::array_t<float> out({logits.rows(), logits.cols()});
    std::copy(logits.data(), logits.data() + logits.size(), out.mutable_data());
    return out;
  });
  m.def("token_logprobs", [](const Params& p, const TokenSeq& t) { return token_logprobs<float>(p, t); });
  m.def(
      "save_checkpoint",
      [](const std::filesystem::path& path, const Params& p, const std::string& meta) { save_checkpoint(path, p, meta); },
      py::arg("path"), py::arg("params"), py::arg("metadata_json") = "{}");
  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    return py::make_tuple(std::move(ck.params), ck.metadata_json);
  });
  m.def("load_pretrained_text_init", &load_pretrained_text_init<float>);

  // Training.
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("from_json", &TrainConfig::from_json)
      .def("to_json", &TrainConfig::to_json)
      .def_readwrite("task_weights", &TrainConfig::task_weights)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("peak_lr", &TrainConfig::peak_lr)
      .def_readwrite("warmup_steps", &TrainConfig::warmup_steps)
      .def_readwrite("total_steps", &TrainConfig::total_steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("grad_clip", &TrainConfig::grad_clip)
      .def_readwrite("eval_every", &TrainConfig::eval_every);
  m.def("lr_at_step", &lr_at_step);
  m.def(
      "train",
      [](const Params& params, const std::vector<std::pair<Task, TokenSeq>>& examples, const TrainConfig& cfg) {
        std::vector<FormattedExample> ex;
        for (const auto& [t, ids] : examples) ex.push_back({t, ids});
        TrainResult r = train(params, MixedDataset::from_examples(ex), cfg);
        std::vector<double> losses;
        for (const auto& s : r.steps) losses.push_back(s.loss);
        return py::make_tuple(std::move(r.params), losses);
      },
      py::arg("params"), py::arg("examples"), py::arg("config"));

  // Inference.
  py::class_<DecodeConfig>(m, "DecodeConfig")
      .def(py::init([](const std::string& mode, std::uint32_t beam_size, std::uint32_t max_new_tokens,
                       double length_penalty, double temperature, double top_p, std::uint64_t seed) {
             DecodeConfig c;
             c.mode = parse_decode_mode(mode);
             c.beam_size = beam_size;
             c.max_new_tokens = max_new_tokens;
             c.length_penalty = length_penalty;
             c.temperature = temperature;
             c.top_p = top_p;
             c.seed = seed;
             c.validate();
             return c;
           }),
           py::arg("mode") = "beam", py::arg("beam_size") = 4, py::arg("max_new_tokens") = 64,
           py::arg("length_penalty") = 0.6, py::arg("temperature") = 1.0, py::arg("top_p") = 1.0,
           py::arg("seed") = 0)
      .def_readwrite("allowed", &DecodeConfig::allowed);
  py::class_<Hypothesis>(m, "Hypothesis")
      .def_readonly("ids", &Hypothesis::ids)
      .def_readonly("logprob", &Hypothesis::logprob)
      .def_readonly("finished", &Hypothesis::finished)
      .def_readonly("score", &Hypothesis::score);
  m.def("beam_search", [](const Params& p, const std::vector<TokenId>& prompt, const DecodeConfig& c) { return beam_search(p, prompt, c); });
  m.def("decode", [](const Params& p, const std::vector<TokenId>& prompt, const DecodeConfig& c) { return decode(p, prompt, c); });
  m.def("recognize", [](const Params& p, const VoxtVocab& v, const SpeechTokenSeq& s, const DecodeConfig& c) {
    const Recognition r = recognize(p, v, s, c);
    return py::make_tuple(r.text, r.best);
  });
  m.def("synthesize", [](const Params& p, const VoxtVocab& v, const std::string& t, const DecodeConfig& c) {
    const Synthesis s = synthesize(p, v, t, c);
    return py::make_tuple(s.units, s.best);
  });

  // Evaluation.
  m.def("perplexity", [](const Params& p, const std::vector<TokenSeq>& data, const std::string& mask) {
    const TransformerScorer scorer(p);
    return perplexity(scorer, data, mask == "all" ? MaskPolicy::kAll : MaskPolicy::kTarget).ppl;
  }, py::arg("params"), py::arg("dataset"), py::arg("mask") = "all");
  m.def("error_rate", [](const std::vector<UnitList>& refs, const std::vector<UnitList>& hyps) {
    return error_rate(refs, hyps).rate;
  });
  m.def("split_words", &split_words);
  m.def("split_chars", &split_chars);
}
