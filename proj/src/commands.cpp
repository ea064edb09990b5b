#include "tgeacm/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "json.hpp"
#include "tgeacm/checkpoint.hpp"
#include "tgeacm/error.hpp"
#include "tgeacm/evaluation.hpp"
#include "tgeacm/inference.hpp"

namespace tgeacm {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path prepare_out(const RunConfig& config) {
  const fs::path out = config.path("out");
  if (out.empty()) throw ConfigError("out must not be empty");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw InvalidInput("cannot create output directory '" + out.string() + "': " + ec.message());
  std::ofstream f(out / "effective_config.ini");
  f << config.to_ini();
  if (!f) throw InvalidInput("cannot write " + (out / "effective_config.ini").string());
  return out;
}

std::string required_path(const RunConfig& config, const std::string& key) {
  const std::string p = config.path(key);
  if (p.empty()) throw ConfigError(key + " is required for this command");
  if (!fs::exists(p)) throw InvalidInput(key + " '" + p + "' does not exist");
  return p;
}

std::optional<std::string> optional_path(const RunConfig& config, const std::string& key) {
  const std::string p = config.path(key);
  if (p.empty()) return std::nullopt;
  if (!fs::exists(p)) throw InvalidInput(key + " '" + p + "' does not exist");
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + p.string());
  return f;
}

ordered_json config_json(const RunConfig& config) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : config.effective()) j[k] = v;
  return j;
}

std::vector<TextPair> subset(const std::vector<TextPair>& all, const std::vector<std::size_t>& idx) {
  std::vector<TextPair> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

CheckpointMeta make_meta(const RunConfig& config, int step, const std::string& rng_state) {
  CheckpointMeta meta;
  meta.step = step;
  meta.seed = config.get_u64("seed");
  meta.rng_state = rng_state;
  meta.config = config.effective();
  return meta;
}

Model fresh_model(const RunConfig& config, const Vocabulary& vocab) {
  return Model::create(config.model_config(), vocab, config.get_u64("seed"),
                       optional_path(config, "semantic_embeddings"), optional_path(config, "emotional_embeddings"));
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::vector<std::string>> read_lines_tokenized(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(tokenize(line));
  }
  return out;
}

template <class F>
ordered_json metric_or_null(F&& f) {
  try {
    return f();
  } catch (const UndefinedMetric&) {
    return nullptr;
  }
}

// Validation split of a corpus file drawn the same way cmd_train draws it.
std::vector<TextPair> validation_texts(const RunConfig& config, const std::vector<TextPair>& corpus) {
  const int vs = config.get_int("validation_size");
  if (vs == 0) return corpus;
  return subset(corpus, split_indices(corpus.size(), vs, config.get_u64("seed")).validation);
}

}  // namespace

void cmd_gen_synthetic(const RunConfig& config) {
  const SyntheticSpec spec = config.synthetic_spec();
  const auto corpus = generate_synthetic_corpus(spec, config.get_u64("seed"));
  const fs::path out = prepare_out(config);
  write_corpus_file((out / "corpus.jsonl").string(), corpus);
}

void cmd_pretrain(const RunConfig& config) {
  TrainConfig tc = config.train_config();
  if (tc.pretrain_steps <= 0) throw ConfigError("pretrain needs pretrain_steps > 0");
  const auto corpus = read_corpus_file(required_path(config, "corpus"));
  const auto idx = split_indices(corpus.size(), tc.validation_size, tc.seed);
  const auto train_text = subset(corpus, idx.train);
  const Vocabulary vocab = build_vocab(train_text, tc.max_vocab);
  Model model = fresh_model(config, vocab);
  const auto pairs = encode_corpus(train_text, vocab, tc.max_len);

  const fs::path out = prepare_out(config);
  const auto history = pretrain_seq2seq(model, pairs, tc);
  auto log = open_out(out / "pretrain_log.jsonl");
  for (std::size_t i = 0; i < history.size(); ++i) {
    ordered_json j;
    j["step"] = i + 1;
    j["L_NLL"] = history[i];
    log << j.dump() << '\n';
  }
  save_checkpoint((out / "checkpoint").string(), model, make_meta(config, tc.pretrain_steps, ""));
}

void cmd_train(const RunConfig& config) {
  const TrainConfig tc = config.train_config();
  validate(tc);
  const auto corpus = read_corpus_file(required_path(config, "corpus"));
  const auto idx = split_indices(corpus.size(), tc.validation_size, tc.seed);
  const auto train_text = subset(corpus, idx.train);
  const auto val_text = subset(corpus, idx.validation);

  std::optional<LoadedCheckpoint> pretrained;
  if (auto ws = optional_path(config, "warm_start")) pretrained = load_checkpoint(*ws);
  const Vocabulary vocab = pretrained ? pretrained->model.vocab : build_vocab(train_text, tc.max_vocab);
  Model model = fresh_model(config, vocab);
  const auto pairs = encode_corpus(train_text, vocab, tc.max_len);
  const auto validation = encode_corpus(val_text, vocab, tc.max_len);

  const fs::path out = prepare_out(config);
  if (pretrained) {
    warm_start(model, pretrained->model);
  } else if (tc.pretrain_steps > 0) {
    const auto history = pretrain_seq2seq(model, pairs, tc);
    auto log = open_out(out / "pretrain_log.jsonl");
    for (std::size_t i = 0; i < history.size(); ++i) {
      ordered_json j;
      j["step"] = i + 1;
      j["L_NLL"] = history[i];
      log << j.dump() << '\n';
    }
  }

  auto metrics = open_out(out / "metrics.jsonl");
  std::string last_checkpoint;
  auto on_checkpoint = [&](const Model& m, int step, const Rng& rng) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%08d", step);
    last_checkpoint = (out / "checkpoints" / name).string();
    save_checkpoint(last_checkpoint, m, make_meta(config, step, rng.state()));
  };
  auto on_record = [&](const MetricRecord& r) { metrics << to_json_line(r) << '\n' << std::flush; };
  const TrainResult result = train(model, pairs, validation, tc, on_checkpoint, on_record);

  ordered_json summary;
  summary["steps"] = result.steps;
  summary["train_pairs"] = pairs.size();
  summary["validation_pairs"] = validation.size();
  summary["vocab_size"] = vocab.size();
  summary["final_checkpoint"] = last_checkpoint;
  if (!result.records.empty()) {
    const auto& last = result.records.back();
    summary["final"] = ordered_json::parse(to_json_line(last));
  }
  summary["config"] = config_json(config);
  open_out(out / "summary.json") << summary.dump(2) << '\n';
}

void cmd_eval(const RunConfig& config) {
  const int max_len = config.get_int("max_len");
  std::vector<std::vector<std::string>> hyps, refs, posts;
  ordered_json selector = nullptr;

  const bool from_files = !config.path("hypotheses").empty() || !config.path("references").empty();
  if (from_files) {
    hyps = read_lines_tokenized(required_path(config, "hypotheses"));
    refs = read_lines_tokenized(required_path(config, "references"));
    if (hyps.size() != refs.size())
      throw InvalidInput("hypotheses has " + std::to_string(hyps.size()) + " lines, references has " +
                         std::to_string(refs.size()));
  } else {
    const LoadedCheckpoint ck = load_checkpoint(required_path(config, "checkpoint"));
    const auto texts = validation_texts(config, read_corpus_file(required_path(config, "corpus")));
    for (const auto& t : texts) {
      const TokenSequence post = encode_post(ck.model, t.post);
      hyps.push_back(decode_text(respond(ck.model, post, max_len), ck.model.vocab));
      refs.push_back(tokenize(t.response));
      posts.push_back(tokenize(t.post));
    }
    if (!texts.empty()) {
      const auto pairs = encode_corpus(texts, ck.model.vocab, max_len);
      const SelectorEval ev = evaluate_selector(ck.model, pairs, 64);
      const AccuracyMode mode = config.accuracy_mode();
      selector = ordered_json::object();
      selector["acc_prior"] = emotion_accuracy(ev.prior, ev.gold, mode);
      selector["acc_recognition"] = emotion_accuracy(ev.recognition, ev.gold, mode);
      selector["kl"] = ev.kl;
    }
  }

  ordered_json report;
  report["distinct_1"] = metric_or_null([&] { return ordered_json(distinct_n(hyps, 1)); });
  report["distinct_2"] = metric_or_null([&] { return ordered_json(distinct_n(hyps, 2)); });
  report["bleu_1"] = metric_or_null([&] { return ordered_json(bleu_n(hyps, refs, 1)); });
  report["bleu_2"] = metric_or_null([&] { return ordered_json(bleu_n(hyps, refs, 2)); });
  report["count"] = hyps.size();
  if (!selector.is_null()) report["selector"] = selector;

  if (auto hs = optional_path(config, "human_scores")) {
    std::ifstream in(*hs);
    if (!in) throw InvalidInput("cannot read " + *hs);
    const HumanSummary s = summarize_human_scores(read_human_scores(in));
    ordered_json h;
    h["items"] = s.items;
    h["raters"] = s.raters;
    h["semantic"] = s.semantic;
    h["emotion"] = s.emotion;
    h["quality"] = s.quality;
    h["kappa_semantic"] = s.kappa_semantic ? ordered_json(*s.kappa_semantic) : ordered_json(nullptr);
    h["kappa_emotion"] = s.kappa_emotion ? ordered_json(*s.kappa_emotion) : ordered_json(nullptr);
    report["human"] = h;
  }

  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (const auto& t : toks) s += (s.empty() ? "" : " ") + t;
    return s;
  };
  ordered_json examples = ordered_json::array();
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    ordered_json e;
    e["index"] = i;
    if (!posts.empty()) e["post"] = join(posts[i]);
    e["hypothesis"] = join(hyps[i]);
    e["reference"] = join(refs[i]);
    examples.push_back(e);
  }
  report["examples"] = examples;
  report["config"] = config_json(config);

  const fs::path out = prepare_out(config);
  open_out(out / "report.json") << report.dump(2) << '\n';
}

void cmd_analyze_eip(const RunConfig& config) {
  const auto corpus = read_corpus_file(required_path(config, "corpus"));
  const EipMatrix eip = analyze_eip(corpus, config.eip_mode());
  const fs::path out = prepare_out(config);
  auto f = open_out(out / "eip.csv");
  write_eip_csv(f, eip);
}

void cmd_project_emotions(const RunConfig& config) {
  const LoadedCheckpoint ck = load_checkpoint(required_path(config, "checkpoint"));
  auto texts = validation_texts(config, read_corpus_file(required_path(config, "corpus")));
  const auto samples = static_cast<std::size_t>(config.get_int("samples"));
  if (texts.size() > samples) texts.resize(samples);
  if (texts.size() < 2) throw InvalidInput("projection needs at least 2 samples");
  const auto pairs = encode_corpus(texts, ck.model.vocab, config.get_int("max_len"));
  const SelectorEval ev = evaluate_selector(ck.model, pairs, 64);

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Mat data(2 * n, kNumEmotions);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < kNumEmotions; ++k) {
      data(i, k) = ev.prior[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      data(n + i, k) = ev.recognition[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
  const PcaProjection pca = pca_project(data, 2);

  const fs::path out = prepare_out(config);
  auto csv = open_out(out / "projection.csv");
  csv << "index,source,pc1,pc2\n";
  for (Eigen::Index i = 0; i < 2 * n; ++i)
    csv << (i % n) << ',' << (i < n ? "prior" : "posterior") << ',' << fixed(pca.coords(i, 0)) << ','
        << fixed(pca.coords(i, 1)) << '\n';

  ordered_json j;
  j["checkpoint_step"] = ck.meta.step;
  j["samples"] = pairs.size();
  j["mean_distance"] = prior_posterior_distance(ev);
  j["variances"] = {pca.variances(0), pca.variances(1)};
  j["config"] = config_json(config);
  open_out(out / "projection.json") << j.dump(2) << '\n';
}

}  // namespace tgeacm
