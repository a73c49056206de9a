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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "voxt/corpus.hpp"
#include "voxt/error.hpp"
#include "voxt/eval.hpp"
#include "voxt/formatter.hpp"
#include "voxt/inference.hpp"
#include "voxt/model.hpp"
#include "voxt/quantizer.hpp"
#include "voxt/trainer.hpp"
#include "voxt/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace voxt;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(IngestFault::kOpen, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io", "failed writing " + path.string());
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

fs::path default_root() {
  const char* root = std::getenv("VOXT_DATA_ROOT");
  return root && *root ? fs::path(root) : fs::path(".");
}

// Speech side of a record as deduplicated units. Feature files are quantized
// with the codebook; token files are read as is.
SpeechTokenSeq record_units(const Manifest& m, const ManifestRecord& r, const Codebook* codebook, bool dedup) {
  SpeechTokenSeq units;
  if (r.token_path) {
    units = load_record_tokens(m, r);
  } else if (r.feature_path) {
    if (!codebook) throw ConfigError("record '" + r.utt_id + "' has features only; pass --codebook");
    units = assign(load_feature_file(m.resolve(*r.feature_path)), *codebook);
  } else {
    throw ValidationError("record '" + r.utt_id + "' has no speech side");
  }
  return dedup ? dedup_runs(units) : units;
}

void check_vocab_codebook(const VoxtVocab& vocab, const Codebook& codebook) {
  if (vocab.num_speech_units() != codebook.k) {
    throw VersionError("vocab has " + std::to_string(vocab.num_speech_units()) + " speech units but codebook k=" +
                       std::to_string(codebook.k));
  }
  if (vocab.codebook() && vocab.codebook()->digest != codebook_digest(codebook)) {
    throw VersionError("codebook digest " + codebook_digest(codebook) + " does not match the vocab's " +
                       vocab.codebook()->digest);
  }
}

void check_vocab_checkpoint(const VoxtVocab& vocab, const Checkpoint& ck) {
  if (ck.params.config.vocab_size != vocab.size()) {
    throw VersionError("checkpoint vocab_size " + std::to_string(ck.params.config.vocab_size) +
                       " does not match vocab size " + std::to_string(vocab.size()));
  }
  const json meta = json::parse(ck.metadata_json);
  if (meta.contains("vocab_digest") && meta["vocab_digest"].get<std::string>() != vocab.digest()) {
    throw VersionError("checkpoint was trained with vocab " + meta["vocab_digest"].get<std::string>() +
                       ", got " + vocab.digest());
  }
}

std::optional<Codebook> maybe_codebook(const std::string& path, const VoxtVocab* vocab) {
  if (path.empty()) return std::nullopt;
  Codebook cb = load_codebook(path);
  if (vocab) check_vocab_codebook(*vocab, cb);
  return cb;
}

TaskRecord encode_record(const Manifest& m, const ManifestRecord& r, const VoxtVocab& vocab,
                         const Codebook* codebook, bool dedup) {
  TaskRecord rec;
  rec.task = r.task;
  if (r.text && r.task != Task::kSpeechLM) rec.text = vocab.encode_text(*r.text);
  if (r.has_speech() && r.task != Task::kTextLM) rec.speech = vocab.encode_speech(record_units(m, r, codebook, dedup));
  return rec;
}

std::vector<TokenSeq> load_sequences(const std::vector<std::string>& paths, std::optional<Task> task) {
  std::vector<TokenSeq> out;
  for (const auto& p : paths) {
    for (auto& ex : load_dataset(p)) {
      if (!task || ex.task == *task) out.push_back(std::move(ex.ids));
    }
  }
  return out;
}

struct DecodeFlags {
  std::string mode = "beam";
  std::uint32_t beam = 4;
  std::uint32_t max_new = 128;
  double alpha = 0.6;
  double temperature = 1.0;
  double top_p = 1.0;

  void add(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "beam, greedy or sample")->capture_default_str();
    cmd->add_option("--beam", beam, "Beam size")->capture_default_str();
    cmd->add_option("--max-new", max_new, "Maximum generated tokens")->capture_default_str();
    cmd->add_option("--alpha", alpha, "Length penalty exponent")->capture_default_str();
    cmd->add_option("--temperature", temperature, "Sampling temperature")->capture_default_str();
    cmd->add_option("--top-p", top_p, "Nucleus mass")->capture_default_str();
  }

  DecodeConfig config(std::uint64_t seed) const {
    DecodeConfig c;
    c.mode = parse_decode_mode(mode);
    c.beam_size = beam;
    c.max_new_tokens = max_new;
    c.length_penalty = alpha;
    c.temperature = temperature;
    c.top_p = top_p;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct Loaded {
  Checkpoint ck;
  VoxtVocab vocab;
};

Loaded load_model(const std::string& ckpt, const std::string& vocab_path) {
  Loaded l{load_checkpoint(ckpt), VoxtVocab::load(vocab_path)};
  check_vocab_checkpoint(l.vocab, l.ck);
  return l;
}

// ---------------------------------------------------------------------------

struct GenToyArgs {
  std::string out_dir;
  std::string spec_path;
  std::size_t n_paired = 2000, n_text = 2000, n_speech = 2000, n_heldout = 200;
  std::uint32_t min_words = 1, max_words = 4;
  std::uint32_t feature_dim = 8;
  double noise = 0.1;
  std::uint32_t num_units = 16;
  double dup_prob = 0.3;
};

void gen_toy(const GenToyArgs& a, std::uint64_t seed) {
  ToyDomainSpec spec = a.spec_path.empty() ? ToyDomainSpec::lowercase(seed) : parse_toy_spec(read_text(a.spec_path));
  if (a.spec_path.empty()) {
    spec.num_units = a.num_units;
    spec.dup_prob = a.dup_prob;
  }
  const ToyDomain domain(spec);
  const fs::path out = a.out_dir.empty() ? default_root() : fs::path(a.out_dir);
  fs::create_directories(out / "speech");
  write_text(out / "toy_spec.json", dump_toy_spec(spec) + "\n");

  const std::size_t n_train = a.n_paired + a.n_text + a.n_speech;
  const auto utts = gen_toy_corpus(spec, n_train + 3 * a.n_heldout, {a.min_words, a.max_words});
  Rng noise_rng(Rng::mix(seed, 20));
  Manifest train, heldout;
  auto emit = [&](Manifest& m, std::size_t i, std::vector<Task> tasks) {
    char id[32];
    std::snprintf(id, sizeof id, "utt%06zu", i);
    const bool speech = std::any_of(tasks.begin(), tasks.end(), [](Task t) { return t != Task::kTextLM; });
    std::optional<std::string> feature;
    if (speech) {
      const std::string rel = std::string("speech/") + id + ".fmx";
      save_feature_file(out / rel, domain.render_features(utts[i].speech, a.feature_dim, a.noise, noise_rng));
      feature = rel;
    }
    for (Task t : tasks) {
      ManifestRecord r;
      r.utt_id = id;
      r.task = t;
      if (t != Task::kSpeechLM) r.text = utts[i].text;
      if (t != Task::kTextLM) r.feature_path = feature;
      m.records.push_back(r);
    }
  };
  std::size_t i = 0;
  for (std::size_t n = 0; n < a.n_paired; ++n, ++i) emit(train, i, {Task::kAsr, Task::kTts});
  for (std::size_t n = 0; n < a.n_text; ++n, ++i) emit(train, i, {Task::kTextLM});
  for (std::size_t n = 0; n < a.n_speech; ++n, ++i) emit(train, i, {Task::kSpeechLM});
  for (std::size_t n = 0; n < a.n_heldout; ++n, ++i) emit(heldout, i, {Task::kAsr, Task::kTts});
  for (std::size_t n = 0; n < a.n_heldout; ++n, ++i) emit(heldout, i, {Task::kTextLM});
  for (std::size_t n = 0; n < a.n_heldout; ++n, ++i) emit(heldout, i, {Task::kSpeechLM});
  save_manifest(out / "train.jsonl", train);
  save_manifest(out / "heldout.jsonl", heldout);
  std::cout << json{{"out_dir", out.string()}, {"train_records", train.records.size()},
                    {"heldout_records", heldout.records.size()}}
                   .dump()
            << "\n";
}

struct KMeansArgs {
  std::vector<std::string> manifests;
  std::string out;
  std::uint32_t k = 50;
  std::uint32_t max_iters = 100;
};

void train_kmeans(const KMeansArgs& a, std::uint64_t seed) {
  std::vector<FeatureMatrix> parts;
  std::set<fs::path> seen;
  for (const auto& path : a.manifests) {
    const Manifest m = load_manifest(path);
    for (const auto& r : m.records) {
      if (!r.feature_path) continue;
      const fs::path p = m.resolve(*r.feature_path);
      if (seen.insert(p).second) parts.push_back(load_feature_file(p));
    }
  }
  if (parts.empty()) throw ValidationError("no feature files found in the manifests");
  const FeatureMatrix frames = stack_frames(parts);
  KMeansReport report;
  const Codebook cb = train_codebook(frames, {a.k, a.max_iters, seed}, &report);
  save_codebook(a.out, cb);
  std::cout << json{{"codebook", a.out},
                    {"frames", frames.n_frames},
                    {"iterations", report.iterations},
                    {"converged", report.converged},
                    {"distortion", report.distortion.back()},
                    {"digest", codebook_digest(cb)}}
                   .dump()
            << "\n";
}

struct TokenizeArgs {
  std::string manifest, codebook, out_manifest, token_dir;
  bool no_dedup = false;
};

void tokenize(const TokenizeArgs& a) {
  const Manifest m = load_manifest(a.manifest);
  const Codebook cb = load_codebook(a.codebook);
  const fs::path out_manifest(a.out_manifest);
  const fs::path base = out_manifest.parent_path();
  const fs::path tok_dir = a.token_dir.empty() ? base / "tokens" : fs::path(a.token_dir);
  Manifest out;
  out.base_dir = base;
  std::map<std::string, std::string> written;
  for (auto r : m.records) {
    if (r.feature_path) {
      const std::string key = m.resolve(*r.feature_path).string();
      auto it = written.find(key);
      if (it == written.end()) {
        auto units = assign(load_feature_file(key), cb);
        if (!a.no_dedup) units = dedup_runs(units);
        const fs::path tok = tok_dir / (fs::path(*r.feature_path).stem().string() + ".tok");
        save_token_file(tok, units);
        it = written.emplace(key, fs::relative(tok, base.empty() ? fs::path(".") : base).generic_string()).first;
      }
      r.token_path = it->second;
      r.feature_path.reset();
    } else if (r.token_path) {
      r.token_path = fs::relative(m.resolve(*r.token_path), base.empty() ? fs::path(".") : base).generic_string();
    }
    out.records.push_back(r);
  }
  save_manifest(out_manifest, out);
  std::cout << json{{"manifest", a.out_manifest}, {"records", out.records.size()}, {"token_files", written.size()}}.dump()
            << "\n";
}

struct BuildVocabArgs {
  std::vector<std::string> manifests;
  std::string out, codebook, charset;
  std::uint32_t k = 0;
};

void build_vocab(const BuildVocabArgs& a) {
  std::vector<std::string> symbols;
  if (!a.charset.empty()) {
    symbols = split_utf8(a.charset);
  } else {
    std::set<std::string> seen;
    for (const auto& path : a.manifests) {
      for (const auto& r : load_manifest(path).records) {
        if (!r.text) continue;
        for (auto& s : split_utf8(*r.text)) seen.insert(std::move(s));
      }
    }
    symbols.assign(seen.begin(), seen.end());
  }
  std::uint32_t k = a.k;
  std::optional<Codebook> cb;
  if (!a.codebook.empty()) {
    cb = load_codebook(a.codebook);
    if (k != 0 && k != cb->k) throw ConfigError("--k disagrees with the codebook's k");
    k = cb->k;
  }
  if (k == 0) throw ConfigError("pass --k or --codebook");
  VoxtVocab v = VoxtVocab::build(symbols, k);
  if (cb) {
    const fs::path out_dir = fs::path(a.out).parent_path();
    v.set_codebook({fs::relative(a.codebook, out_dir.empty() ? fs::path(".") : out_dir).generic_string(),
                    codebook_digest(*cb)});
  }
  v.save(a.out);
  std::cout << json{{"vocab", a.out}, {"size", v.size()}, {"digest", v.digest()}}.dump() << "\n";
}

struct BpeArgs {
  std::string vocab, out, codebook;
  std::vector<std::string> manifests;
  std::size_t target_size = 0;
  bool no_dedup = false;
};

void train_bpe_cmd(const BpeArgs& a) {
  const VoxtVocab base = VoxtVocab::load(a.vocab);
  const auto cb = maybe_codebook(a.codebook, &base);
  std::vector<TokenSeq> corpora;
  for (const auto& path : a.manifests) {
    const Manifest m = load_manifest(path);
    for (const auto& r : m.records) {
      corpora.push_back(format_train(encode_record(m, r, base, cb ? &*cb : nullptr, !a.no_dedup), base));
    }
  }
  BpeReport report;
  const VoxtVocab v = train_bpe(base, corpora, a.target_size, &report);
  v.save(a.out);
  std::cout << json{{"vocab", a.out}, {"size", v.size()}, {"merges", v.merges().size()}, {"digest", v.digest()}}.dump()
            << "\n";
}

struct FormatArgs {
  std::string vocab, manifest, out, codebook;
  bool no_dedup = false;
};

void format_cmd(const FormatArgs& a) {
  const VoxtVocab v = VoxtVocab::load(a.vocab);
  const auto cb = maybe_codebook(a.codebook, &v);
  const Manifest m = load_manifest(a.manifest);
  std::vector<FormattedExample> examples;
  for (const auto& r : m.records) {
    examples.push_back({r.task, format_train(encode_record(m, r, v, cb ? &*cb : nullptr, !a.no_dedup), v)});
  }
  save_dataset(a.out, examples);
  const auto counts = MixedDataset::from_examples(examples).sizes();
  json per_task;
  for (Task t : kAllTasks) per_task[std::string(to_string(t))] = counts[task_index(t)];
  std::cout << json{{"dataset", a.out}, {"records", examples.size()}, {"per_task", per_task}}.dump() << "\n";
}

struct TrainArgs {
  std::string config, mix, out, metrics, init_from;
  std::optional<std::uint32_t> steps;
};

void train_cmd(const TrainArgs& a, std::optional<std::uint64_t> seed) {
  const json cfg = read_json(a.config);
  const json mixj = read_json(a.mix);
  const fs::path mix_dir = fs::path(a.mix).parent_path();
  auto rel = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : mix_dir / p; };

  const VoxtVocab vocab = VoxtVocab::load(rel(mixj.at("vocab").get<std::string>()));
  std::vector<FormattedExample> train_ex;
  for (const auto& p : mixj.at("train")) {
    auto part = load_dataset(rel(p.get<std::string>()));
    train_ex.insert(train_ex.end(), part.begin(), part.end());
  }
  MixedDataset mix = MixedDataset::from_examples(train_ex);
  mix.pad_id = vocab.id(Special::kPad);
  std::optional<MixedDataset> held;
  if (mixj.contains("heldout")) {
    std::vector<FormattedExample> ex;
    for (const auto& p : mixj.at("heldout")) {
      auto part = load_dataset(rel(p.get<std::string>()));
      ex.insert(ex.end(), part.begin(), part.end());
    }
    held = MixedDataset::from_examples(ex);
  }

  json tj = cfg.value("train", json::object());
  if (mixj.contains("task_weights")) tj["task_weights"] = mixj.at("task_weights");
  if (seed) tj["seed"] = *seed;
  if (a.steps) {
    tj["total_steps"] = *a.steps;
    tj["warmup_steps"] = std::min(tj.value("warmup_steps", TrainConfig{}.warmup_steps), *a.steps);
  }
  TrainConfig tc = TrainConfig::from_json(tj.dump());
  if (!mixj.contains("task_weights") && mixj.value("balance", std::string()) == "sizes") {
    tc.task_weights = weights_from_sizes(mix.sizes());
  }
  tc.validate();

  json model_j = cfg.value("model", json::object());
  model_j["vocab_size"] = vocab.size();
  const ModelConfig mc = ModelConfig::from_json(model_j.dump());
  mc.validate();
  Params params = init_params<float>(mc, Rng::mix(tc.seed, 1));
  if (!a.init_from.empty()) {
    const Checkpoint pre = load_checkpoint(a.init_from);
    params = load_pretrained_text_init<float>(params, pre.params);
  }

  std::ofstream metrics;
  TrainOptions opt;
  if (!a.metrics.empty()) {
    if (fs::path(a.metrics).has_parent_path()) fs::create_directories(fs::path(a.metrics).parent_path());
    metrics.open(a.metrics, std::ios::binary);
    if (!metrics) throw Error("io", "cannot write " + a.metrics);
    opt.metrics = &metrics;
  }
  if (held) opt.held_out = &*held;
  const TrainResult r = train(std::move(params), mix, tc, opt);
  json meta = json::parse(train_metadata_json(tc, vocab.digest(), r.steps_run));
  meta["init_from"] = a.init_from.empty() ? json(nullptr) : json(fs::path(a.init_from).filename().string());
  save_checkpoint(a.out, r.params, meta.dump());
  json summary{{"checkpoint", a.out}, {"steps", r.steps_run}, {"final_loss", r.steps.back().loss}};
  if (!r.evals.empty()) {
    json ppl;
    for (Task t : kAllTasks) {
      if (r.evals.back().ppl[task_index(t)]) ppl[std::string(to_string(t))] = *r.evals.back().ppl[task_index(t)];
    }
    summary["heldout_ppl"] = ppl;
  }
  std::cout << summary.dump() << "\n";
}

struct GenerateArgs {
  std::string ckpt, vocab, codebook, manifest, features, tokens, text, out, prefix, modality = "text";
  bool no_dedup = false;
};

void asr_cmd(const GenerateArgs& a, const DecodeFlags& d, std::uint64_t seed) {
  const Loaded l = load_model(a.ckpt, a.vocab);
  const auto cb = maybe_codebook(a.codebook, &l.vocab);
  const DecodeConfig dc = d.config(seed);
  auto run = [&](const std::string& utt_id, const SpeechTokenSeq& units, std::ostream* gen) {
    const Recognition r = recognize(l.ck.params, l.vocab, units, dc);
    if (gen) *gen << generation_json(utt_id, Task::kAsr, units.size(), r.best) << "\n";
    return r;
  };
  std::ofstream gen;
  if (!a.out.empty()) gen.open(a.out, std::ios::binary);
  std::ostream* gen_ptr = a.out.empty() ? nullptr : &gen;
  if (!a.manifest.empty()) {
    const Manifest m = load_manifest(a.manifest);
    for (const auto& rec : m.records) {
      if (rec.task != Task::kAsr) continue;
      const auto r = run(rec.utt_id, record_units(m, rec, cb ? &*cb : nullptr, !a.no_dedup), gen_ptr);
      std::cout << rec.utt_id << "\t" << r.text << (r.best.finished ? "" : "\t[unterminated]") << "\n";
    }
    return;
  }
  SpeechTokenSeq units;
  if (!a.features.empty()) {
    if (!cb) throw ConfigError("--features needs --codebook");
    units = assign(load_feature_file(a.features), *cb);
  } else if (!a.tokens.empty()) {
    units = load_token_file(a.tokens);
  } else {
    throw ConfigError("pass --features, --tokens or --manifest");
  }
  if (!a.no_dedup) units = dedup_runs(units);
  const auto r = run("input", units, gen_ptr);
  std::cout << r.text << "\n";
  if (!r.best.finished) std::cerr << json{{"warning", "unterminated"}, {"utt_id", "input"}}.dump() << "\n";
}

std::string join_units(const SpeechTokenSeq& u) {
  std::string s;
  for (std::size_t i = 0; i < u.size(); ++i) s += (i ? " " : "") + std::to_string(u[i]);
  return s;
}

void tts_cmd(const GenerateArgs& a, const DecodeFlags& d, std::uint64_t seed) {
  const Loaded l = load_model(a.ckpt, a.vocab);
  const DecodeConfig dc = d.config(seed);
  std::ofstream gen;
  if (!a.out.empty()) gen.open(a.out, std::ios::binary);
  auto run = [&](const std::string& utt_id, const std::string& text) {
    const Synthesis s = synthesize(l.ck.params, l.vocab, text, dc);
    if (gen.is_open()) gen << generation_json(utt_id, Task::kTts, text.size(), s.best) << "\n";
    return s;
  };
  if (!a.manifest.empty()) {
    const Manifest m = load_manifest(a.manifest);
    for (const auto& rec : m.records) {
      if (rec.task != Task::kTts) continue;
      const auto s = run(rec.utt_id, *rec.text);
      std::cout << rec.utt_id << "\t" << join_units(s.units) << (s.best.finished ? "" : "\t[unterminated]") << "\n";
    }
    return;
  }
  if (a.text.empty()) throw ConfigError("pass --text or --manifest");
  const auto s = run("input", a.text);
  std::cout << join_units(s.units) << "\n";
}

void continue_cmd(const GenerateArgs& a, const DecodeFlags& d, std::uint64_t seed) {
  const Loaded l = load_model(a.ckpt, a.vocab);
  const auto mod = parse_modality(a.modality);
  if (!mod || *mod == Modality::kSpecial) throw ConfigError("--modality must be text or speech");
  TokenSeq prefix;
  if (*mod == Modality::kText) {
    prefix = l.vocab.encode_text(a.prefix);
  } else {
    SpeechTokenSeq units;
    if (!a.tokens.empty()) {
      units = load_token_file(a.tokens);
    } else {
      std::istringstream in(a.prefix);
      std::uint32_t u;
      while (in >> u) units.push_back(u);
    }
    if (!a.no_dedup) units = dedup_runs(units);
    prefix = l.vocab.encode_speech(units);
  }
  const Continuation c = continue_sequence(l.ck.params, l.vocab, *mod, prefix, d.config(seed));
  if (!a.out.empty()) {
    write_text(a.out, generation_json("input", *mod == Modality::kText ? Task::kTextLM : Task::kSpeechLM,
                                      prefix.size() + 1, c.best) +
                          "\n");
  }
  if (*mod == Modality::kText) {
    std::cout << l.vocab.decode_text(c.ids) << "\n";
  } else {
    std::cout << join_units(l.vocab.decode_speech(c.ids)) << "\n";
  }
}

struct EvalArgs {
  std::string ckpt, vocab, task, mask = "target", baseline, out, codebook, manifest, toy_spec, unit = "word";
  std::string refs, hyps;
  std::vector<std::string> datasets, baseline_train;
  bool no_dedup = false;
};

std::optional<Task> task_arg(const std::string& name) {
  if (name.empty()) return std::nullopt;
  auto t = parse_task(name);
  if (!t) throw ConfigError("unknown task '" + name + "'");
  return t;
}

void emit_report(const EvalArgs& a, const json& report) {
  if (!a.out.empty()) write_text(a.out, report.dump() + "\n");
  std::cout << report.dump() << "\n";
}

void eval_ppl_cmd(const EvalArgs& a) {
  const auto task = task_arg(a.task);
  const MaskPolicy policy = a.mask == "all" ? MaskPolicy::kAll : MaskPolicy::kTarget;
  if (a.mask != "all" && a.mask != "target") throw ConfigError("--mask must be all or target");
  const auto data = load_sequences(a.datasets, task);
  json report;
  std::string digest;
  if (!a.ckpt.empty()) {
    const Loaded l = load_model(a.ckpt, a.vocab);
    digest = l.vocab.digest();
    const TransformerScorer scorer(l.ck.params);
    const PplResult r = perplexity(scorer, data, policy);
    report = json::parse(eval_report_json("ppl", r.ppl, data.size(), digest));
    report["n_scored"] = r.n_scored;
  }
  if (a.baseline == "unigram") {
    const VoxtVocab v = VoxtVocab::load(a.vocab);
    const auto train_seqs = load_sequences(a.baseline_train, task);
    const UnigramScorer uni(v.size(), train_seqs, policy);
    const PplResult u = perplexity(uni, data, policy);
    if (report.is_null()) report = json::parse(eval_report_json("ppl", u.ppl, data.size(), v.digest()));
    report["unigram_ppl"] = u.ppl;
    if (report["metric"] == "ppl" && !a.ckpt.empty()) {
      report["reduction_vs_unigram"] = 1.0 - report["value"].get<double>() / u.ppl;
    }
  } else if (!a.baseline.empty()) {
    throw ConfigError("unknown baseline '" + a.baseline + "'");
  }
  if (report.is_null()) throw ConfigError("pass --ckpt or --baseline unigram");
  if (task) report["task"] = to_string(*task);
  emit_report(a, report);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void eval_wer_cmd(const EvalArgs& a, const DecodeFlags& d, std::uint64_t seed) {
  auto units = [&](const std::string& s) { return a.unit == "char" ? split_chars(s) : split_words(s); };
  if (a.unit != "word" && a.unit != "char") throw ConfigError("--unit must be word or char");
  std::vector<UnitList> refs, hyps;
  std::string digest;
  std::string metric = a.unit == "char" ? "cer" : "wer";
  if (!a.refs.empty()) {
    for (const auto& l : read_lines(a.refs)) refs.push_back(units(l));
    for (const auto& l : read_lines(a.hyps)) hyps.push_back(units(l));
  } else {
    const auto task = task_arg(a.task.empty() ? "asr" : a.task);
    if (*task != Task::kAsr && *task != Task::kTts) throw ConfigError("eval-wer --task must be asr or tts");
    const Loaded l = load_model(a.ckpt, a.vocab);
    digest = l.vocab.digest();
    const auto cb = maybe_codebook(a.codebook, &l.vocab);
    const Manifest m = load_manifest(a.manifest);
    const DecodeConfig dc = d.config(seed);
    std::optional<ToyDomain> domain;
    std::vector<std::uint32_t> unit_map;
    if (*task == Task::kTts) {
      if (a.toy_spec.empty()) throw ConfigError("tts evaluation inverts speech with the toy domain; pass --toy-spec");
      domain.emplace(parse_toy_spec(read_text(a.toy_spec)));
      if (cb) {
        unit_map = domain->align_centroids(cb->centroids, cb->dim);
      }
    }
    std::ofstream gen;
    if (!a.out.empty()) gen.open(fs::path(a.out).replace_extension(".gen.jsonl"), std::ios::binary);
    for (const auto& rec : m.records) {
      if (rec.task != *task) continue;
      refs.push_back(units(*rec.text));
      if (*task == Task::kAsr) {
        const auto r = recognize(l.ck.params, l.vocab, record_units(m, rec, cb ? &*cb : nullptr, !a.no_dedup), dc);
        if (gen.is_open()) gen << generation_json(rec.utt_id, *task, 0, r.best) << "\n";
        hyps.push_back(units(r.text));
      } else {
        const auto s = synthesize(l.ck.params, l.vocab, *rec.text, dc);
        if (gen.is_open()) gen << generation_json(rec.utt_id, *task, 0, s.best) << "\n";
        SpeechTokenSeq u = s.units;
        if (!unit_map.empty()) {
          for (auto& x : u) x = unit_map.at(x);
        }
        hyps.push_back(units(domain->invert(u)));
      }
    }
    metric = std::string(to_string(*task)) + "_" + metric;
  }
  const ErrorRate er = error_rate(refs, hyps);
  json report = json::parse(eval_report_json(metric, er.rate, refs.size(), digest));
  report["errors"] = er.errors;
  report["ref_units"] = er.ref_units;
  emit_report(a, report);
}

void eval_paired_cmd(const EvalArgs& a, std::uint64_t seed) {
  const auto task = task_arg(a.task.empty() ? "textlm" : a.task);
  if (*task != Task::kTextLM && *task != Task::kSpeechLM) throw ConfigError("eval-paired --task must be textlm or speechlm");
  const Loaded l = load_model(a.ckpt, a.vocab);
  const auto seqs = load_sequences(a.datasets, task);
  // Content between the generate token and <eos>.
  std::vector<TokenSeq> contents;
  std::set<TokenId> pool_set;
  for (const auto& s : seqs) {
    TokenSeq c(s.begin() + 1, s.end() - 1);
    if (c.empty()) continue;
    pool_set.insert(c.begin(), c.end());
    contents.push_back(std::move(c));
  }
  const std::vector<TokenId> pool(pool_set.begin(), pool_set.end());
  Rng rng(seed);
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
  const TokenId lead = seqs.empty() ? 0 : seqs.front().front();
  for (auto& [pos, neg] : make_corrupted_pairs(contents, pool, rng)) {
    TokenSeq p{lead}, n{lead};
    p.insert(p.end(), pos.begin(), pos.end());
    n.insert(n.end(), neg.begin(), neg.end());
    p.push_back(l.vocab.id(Special::kEos));
    n.push_back(l.vocab.id(Special::kEos));
    pairs.emplace_back(std::move(p), std::move(n));
  }
  const TransformerScorer scorer(l.ck.params);
  const PairedResult r = paired_judgment(scorer, pairs);
  json report = json::parse(eval_report_json("paired_accuracy", r.accuracy, r.n, l.vocab.digest()));
  report["task"] = to_string(*task);
  report["wins"] = r.wins;
  report["ties"] = r.ties;
  emit_report(a, report);
}

void inspect_cmd(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  json j;
  j["config"] = json::parse(ck.params.config.to_json());
  j["metadata"] = json::parse(ck.metadata_json);
  j["n_params"] = ck.params.values.size();
  json tensors = json::array();
  const ParamLayout layout(ck.params.config);
  for (const auto& spec : layout.tensors()) {
    const auto t = ck.params.tensor(spec);
    tensors.push_back({{"name", spec.name}, {"shape", {spec.rows, spec.cols}}, {"norm", t.template cast<double>().norm()}});
  }
  j["tensors"] = tensors;
  std::cout << j.dump(2) << "\n";
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxt: joint speech-text language model toolkit"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_opt;
  int threads = 1;
  app.add_option("--seed", seed_opt, "Seed for every stochastic stage");
  app.add_option("--threads", threads, "Upper bound on worker threads")->check(CLI::PositiveNumber);

  GenToyArgs gt;
  auto* c_gen = app.add_subcommand("gen-toy", "Generate a synthetic toy speech-text corpus");
  c_gen->add_option("--out-dir", gt.out_dir, "Output directory (default $VOXT_DATA_ROOT or .)");
  c_gen->add_option("--spec", gt.spec_path, "Toy domain spec JSON");
  c_gen->add_option("--paired", gt.n_paired, "Paired utterances")->capture_default_str();
  c_gen->add_option("--text-only", gt.n_text, "Text-only utterances")->capture_default_str();
  c_gen->add_option("--speech-only", gt.n_speech, "Speech-only utterances")->capture_default_str();
  c_gen->add_option("--heldout", gt.n_heldout, "Held-out utterances per split")->capture_default_str();
  c_gen->add_option("--min-words", gt.min_words)->capture_default_str();
  c_gen->add_option("--max-words", gt.max_words)->capture_default_str();
  c_gen->add_option("--feature-dim", gt.feature_dim)->capture_default_str();
  c_gen->add_option("--noise", gt.noise, "Feature noise std")->capture_default_str();
  c_gen->add_option("--units", gt.num_units, "Toy speech units")->capture_default_str();
  c_gen->add_option("--dup-prob", gt.dup_prob, "Unit duplication probability")->capture_default_str();

  KMeansArgs km;
  auto* c_km = app.add_subcommand("train-kmeans", "Fit a k-means codebook over feature frames");
  c_km->add_option("--manifest", km.manifests, "Manifest(s) with feature_path records")->required();
  c_km->add_option("--out", km.out, "Codebook .fmx path")->required();
  c_km->add_option("--k", km.k)->capture_default_str();
  c_km->add_option("--max-iters", km.max_iters)->capture_default_str();

  TokenizeArgs tk;
  auto* c_tok = app.add_subcommand("tokenize", "Quantize features into speech token files");
  c_tok->add_option("--manifest", tk.manifest)->required();
  c_tok->add_option("--codebook", tk.codebook)->required();
  c_tok->add_option("--out-manifest", tk.out_manifest)->required();
  c_tok->add_option("--token-dir", tk.token_dir);
  c_tok->add_flag("--no-dedup", tk.no_dedup, "Keep repeated units");

  BuildVocabArgs bv;
  auto* c_bv = app.add_subcommand("build-vocab", "Build the base speech-text vocabulary");
  c_bv->add_option("--manifest", bv.manifests, "Manifest(s) whose text defines the text units");
  c_bv->add_option("--charset", bv.charset, "Explicit text units instead of manifest text");
  c_bv->add_option("--k", bv.k, "Speech units");
  c_bv->add_option("--codebook", bv.codebook, "Codebook to link (sets k)");
  c_bv->add_option("--out", bv.out)->required();

  BpeArgs bp;
  auto* c_bpe = app.add_subcommand("train-bpe", "Learn metatokens over formatted training data");
  c_bpe->add_option("--vocab", bp.vocab)->required();
  c_bpe->add_option("--manifest", bp.manifests)->required();
  c_bpe->add_option("--codebook", bp.codebook);
  c_bpe->add_option("--target-size", bp.target_size)->required();
  c_bpe->add_option("--out", bp.out)->required();
  c_bpe->add_flag("--no-dedup", bp.no_dedup);

  FormatArgs fa;
  auto* c_fmt = app.add_subcommand("format", "Write task-formatted training sequences");
  c_fmt->add_option("--vocab", fa.vocab)->required();
  c_fmt->add_option("--manifest", fa.manifest)->required();
  c_fmt->add_option("--codebook", fa.codebook);
  c_fmt->add_option("--out", fa.out)->required();
  c_fmt->add_flag("--no-dedup", fa.no_dedup);

  TrainArgs ta;
  auto* c_train = app.add_subcommand("train", "Train a model on a task mixture");
  c_train->add_option("--config", ta.config, "JSON with \"model\" and \"train\" sections")->required();
  c_train->add_option("--mix", ta.mix, "JSON naming vocab, train and heldout datasets")->required();
  c_train->add_option("--out", ta.out, "Checkpoint path")->required();
  c_train->add_option("--metrics", ta.metrics, "Metrics JSON-lines path");
  c_train->add_option("--init-from", ta.init_from, "Text-only checkpoint for block initialization");
  c_train->add_option("--steps", ta.steps, "Override total_steps");

  GenerateArgs ga;
  DecodeFlags df;
  auto* c_asr = app.add_subcommand("asr", "Recognize speech");
  auto* c_tts = app.add_subcommand("tts", "Synthesize speech units from text");
  auto* c_cont = app.add_subcommand("continue", "Continue a text or speech prefix");
  for (auto* c : {c_asr, c_tts, c_cont}) {
    c->add_option("--ckpt", ga.ckpt)->required();
    c->add_option("--vocab", ga.vocab)->required();
    c->add_option("--out", ga.out, "Generation JSON-lines path");
    c->add_flag("--no-dedup", ga.no_dedup);
    df.add(c);
  }
  c_asr->add_option("--codebook", ga.codebook);
  c_asr->add_option("--features", ga.features, "Feature file (.fmx)");
  c_asr->add_option("--tokens", ga.tokens, "Speech token file (.tok)");
  c_asr->add_option("--manifest", ga.manifest, "Recognize every asr record");
  c_tts->add_option("--text", ga.text);
  c_tts->add_option("--manifest", ga.manifest, "Synthesize every tts record");
  c_cont->add_option("--modality", ga.modality, "text or speech")->capture_default_str();
  c_cont->add_option("--prefix", ga.prefix, "Text, or space separated speech units");
  c_cont->add_option("--tokens", ga.tokens, "Speech prefix token file");

  EvalArgs ea;
  auto* c_ppl = app.add_subcommand("eval-ppl", "Teacher-forced perplexity");
  c_ppl->add_option("--ckpt", ea.ckpt);
  c_ppl->add_option("--vocab", ea.vocab)->required();
  c_ppl->add_option("--dataset", ea.datasets)->required();
  c_ppl->add_option("--task", ea.task);
  c_ppl->add_option("--mask", ea.mask, "all or target")->capture_default_str();
  c_ppl->add_option("--baseline", ea.baseline, "unigram");
  c_ppl->add_option("--baseline-train", ea.baseline_train, "Datasets the baseline is fit on");
  c_ppl->add_option("--out", ea.out, "Report path");

  DecodeFlags wer_df;
  auto* c_wer = app.add_subcommand("eval-wer", "Word or character error rate");
  c_wer->add_option("--refs", ea.refs, "Reference lines");
  c_wer->add_option("--hyps", ea.hyps, "Hypothesis lines");
  c_wer->add_option("--ckpt", ea.ckpt);
  c_wer->add_option("--vocab", ea.vocab);
  c_wer->add_option("--manifest", ea.manifest);
  c_wer->add_option("--codebook", ea.codebook);
  c_wer->add_option("--toy-spec", ea.toy_spec, "Toy domain used to invert synthesized speech");
  c_wer->add_option("--task", ea.task, "asr or tts");
  c_wer->add_option("--unit", ea.unit, "word or char")->capture_default_str();
  c_wer->add_option("--out", ea.out, "Report path");
  c_wer->add_flag("--no-dedup", ea.no_dedup);
  wer_df.add(c_wer);

  auto* c_pair = app.add_subcommand("eval-paired", "Paired judgment on corrupted held-out sequences");
  c_pair->add_option("--ckpt", ea.ckpt)->required();
  c_pair->add_option("--vocab", ea.vocab)->required();
  c_pair->add_option("--dataset", ea.datasets)->required();
  c_pair->add_option("--task", ea.task, "textlm or speechlm");
  c_pair->add_option("--out", ea.out, "Report path");

  std::string inspect_path;
  auto* c_inspect = app.add_subcommand("inspect-checkpoint", "Print checkpoint config, metadata and tensors");
  c_inspect->add_option("--ckpt", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 64);
  }

  Eigen::setNbThreads(threads);
  const std::uint64_t seed = seed_opt.value_or(0);
  try {
    if (*c_gen) gen_toy(gt, seed);
    else if (*c_km) train_kmeans(km, seed);
    else if (*c_tok) tokenize(tk);
    else if (*c_bv) build_vocab(bv);
    else if (*c_bpe) train_bpe_cmd(bp);
    else if (*c_fmt) format_cmd(fa);
    else if (*c_train) train_cmd(ta, seed_opt);
    else if (*c_asr) asr_cmd(ga, df, seed);
    else if (*c_tts) tts_cmd(ga, df, seed);
    else if (*c_cont) continue_cmd(ga, df, seed);
    else if (*c_ppl) eval_ppl_cmd(ea);
    else if (*c_wer) eval_wer_cmd(ea, wer_df, seed);
    else if (*c_pair) eval_paired_cmd(ea, seed);
    else if (*c_inspect) inspect_cmd(inspect_path);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what(), 2);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 3);
  }
  return 0;
}
