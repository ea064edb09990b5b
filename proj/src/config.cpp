#include "tgeacm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <sstream>

#include "tgeacm/error.hpp"

namespace tgeacm {

namespace {

enum class Kind { Int, Real, U64, Bool, Text, Choice };

struct KeySpec {
  const char* name;
  const char* fallback;
  Kind kind;
  std::vector<std::string> choices = {};
};

const std::vector<KeySpec>& table() {
  static const std::vector<KeySpec> t = {
      {"preset", "desk", Kind::Choice, {"tiny", "desk", "paper"}},
      {"seed", "1", Kind::U64},
      {"alpha", "0.5", Kind::Real},
      {"learning_rate", "0.5", Kind::Real},
      {"batch_size", "16", Kind::Int},
      {"max_steps", "1000", Kind::Int},
      {"clip_norm", "5", Kind::Real},
      {"pretrain_steps", "0", Kind::Int},
      {"log_every", "1", Kind::Int},
      {"eval_every", "100", Kind::Int},
      {"checkpoint_every", "0", Kind::Int},
      {"validation_size", "500", Kind::Int},
      {"max_len", "30", Kind::Int},
      {"max_vocab", "512", Kind::Int},
      {"embed_dim", "32", Kind::Int},
      {"emotion_dim", "32", Kind::Int},
      {"hidden_dim", "32", Kind::Int},
      {"layers", "2", Kind::Int},
      {"attn_width", "32", Kind::Int},
      {"kl_dim", "64", Kind::Int},
      {"xent", "positive", Kind::Choice, {"positive", "binary"}},
      {"share_fusion", "false", Kind::Bool},
      {"kl_stop_grad", "false", Kind::Bool},
      {"kl_direction", "prior_to_recognition", Kind::Choice, {"prior_to_recognition", "recognition_to_prior"}},
      {"corpus", "", Kind::Text},
      {"semantic_embeddings", "", Kind::Text},
      {"emotional_embeddings", "", Kind::Text},
      {"warm_start", "", Kind::Text},
      {"checkpoint", "", Kind::Text},
      {"out", "out", Kind::Text},
      {"hypotheses", "", Kind::Text},
      {"references", "", Kind::Text},
      {"human_scores", "", Kind::Text},
      {"synth_pairs", "1000", Kind::Int},
      {"synth_pattern", "shift", Kind::Choice, {"identity", "shift"}},
      {"synth_noise", "0.1", Kind::Real},
      {"synth_lexicon_size", "4", Kind::Int},
      {"synth_filler_size", "60", Kind::Int},
      {"synth_min_len", "3", Kind::Int},
      {"synth_max_len", "8", Kind::Int},
      {"eip_mode", "primary", Kind::Choice, {"primary", "dual"}},
      {"samples", "500", Kind::Int},
      {"accuracy_mode", "argmax", Kind::Choice, {"argmax", "exact"}},
  };
  return t;
}

const KeySpec& spec_of(const std::string& key) {
  for (const auto& k : table())
    if (key == k.name) return k;
  throw ConfigError("unknown key '" + key + "'");
}

std::map<std::string, std::string> preset_values(const std::string& preset) {
  const ModelConfig m = model_preset(preset);
  std::map<std::string, std::string> v = {
      {"embed_dim", std::to_string(m.embed_dim)},   {"emotion_dim", std::to_string(m.emotion_dim)},
      {"hidden_dim", std::to_string(m.hidden_dim)}, {"layers", std::to_string(m.layers)},
      {"attn_width", std::to_string(m.attn_width)}, {"kl_dim", std::to_string(m.kl_dim)},
  };
  if (preset == "tiny") {
    v["max_vocab"] = "32";
    v["batch_size"] = "16";
  } else if (preset == "desk") {
    v["max_vocab"] = "512";
    v["batch_size"] = "16";
  } else {
    v["max_vocab"] = "40000";
    v["batch_size"] = "128";
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

void check_value(const KeySpec& k, const std::string& v) {
  switch (k.kind) {
    case Kind::Int:
      parse_number<int>(k.name, v);
      break;
    case Kind::Real:
      parse_number<double>(k.name, v);
      break;
    case Kind::U64:
      parse_number<std::uint64_t>(k.name, v);
      break;
    case Kind::Bool:
      if (v != "true" && v != "false" && v != "1" && v != "0")
        throw ConfigError("'" + std::string(k.name) + "' expects true/false, got '" + v + "'");
      break;
    case Kind::Choice: {
      bool ok = false;
      for (const auto& c : k.choices) ok = ok || c == v;
      if (!ok) {
        std::string allowed;
        for (const auto& c : k.choices) allowed += (allowed.empty() ? "" : ", ") + c;
        throw ConfigError("'" + std::string(k.name) + "' must be one of " + allowed + ", got '" + v + "'");
      }
      break;
    }
    case Kind::Text:
      break;
  }
}

void load_tree(const boost::property_tree::ptree& tree, std::map<std::string, std::string>& into) {
  for (const auto& [key, node] : tree) {
    if (!node.empty()) {
      load_tree(node, into);  // [section] headers are accepted and ignored
      continue;
    }
    const std::string value = trim(node.data());
    check_value(spec_of(key), value);
    into[key] = value;
  }
}

}  // namespace

void RunConfig::load_file(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  load_tree(tree, file_);
}

void RunConfig::load_string(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  load_tree(tree, file_);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  check_value(spec_of(key), value);
  flags_[key] = value;
}

std::string RunConfig::get(const std::string& key) const {
  const KeySpec& k = spec_of(key);
  if (auto it = flags_.find(key); it != flags_.end()) return it->second;
  if (auto it = file_.find(key); it != file_.end()) return it->second;
  if (key != "preset") {
    const auto preset = preset_values(get("preset"));
    if (auto it = preset.find(key); it != preset.end()) return it->second;
  }
  return k.fallback;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }
bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  return v == "true" || v == "1";
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : table()) out.emplace_back(k.name);
  return out;
}

std::vector<std::pair<std::string, std::string>> RunConfig::effective() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : table()) out.emplace_back(k.name, get(k.name));
  return out;
}

std::string RunConfig::to_ini() const {
  std::string out;
  for (const auto& [k, v] : effective()) out += k + " = " + v + "\n";
  return out;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.alpha = get_double("alpha");
  c.learning_rate = get_double("learning_rate");
  c.batch_size = get_int("batch_size");
  c.max_steps = get_int("max_steps");
  c.seed = get_u64("seed");
  c.clip_norm = get_double("clip_norm");
  c.pretrain_steps = get_int("pretrain_steps");
  c.log_every = get_int("log_every");
  c.eval_every = get_int("eval_every");
  c.checkpoint_every = get_int("checkpoint_every");
  c.validation_size = get_int("validation_size");
  c.max_len = get_int("max_len");
  c.max_vocab = get_int("max_vocab");
  validate(c);
  return c;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.embed_dim = get_int("embed_dim");
  c.emotion_dim = get_int("emotion_dim");
  c.hidden_dim = get_int("hidden_dim");
  c.layers = get_int("layers");
  c.attn_width = get_int("attn_width");
  c.kl_dim = get_int("kl_dim");
  for (int v : {c.embed_dim, c.emotion_dim, c.hidden_dim, c.layers, c.attn_width, c.kl_dim})
    if (v < 1) throw ConfigError("model dimensions must be positive");
  c.selector.xent = get("xent") == "binary" ? ad::EmotionXent::Binary : ad::EmotionXent::PositiveTerm;
  c.selector.share_fusion = get_bool("share_fusion");
  c.selector.kl_stop_grad = get_bool("kl_stop_grad");
  c.selector.kl_direction =
      get("kl_direction") == "prior_to_recognition" ? KlDirection::PriorToRecognition : KlDirection::RecognitionToPrior;
  return c;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  const int pairs = get_int("synth_pairs");
  if (pairs < 1) throw ConfigError("synth_pairs must be positive");
  const int lexicon = get_int("synth_lexicon_size"), filler = get_int("synth_filler_size");
  if (lexicon < 1 || filler < 0) throw ConfigError("synthetic lexicon/filler sizes out of range");
  SyntheticSpec s = default_synthetic_spec(get("synth_pattern") == "identity" ? PlantedPattern::Identity
                                                                              : PlantedPattern::Shift,
                                           static_cast<std::size_t>(pairs), get_double("synth_noise"), lexicon,
                                           filler);
  s.min_len = get_int("synth_min_len");
  s.max_len = get_int("synth_max_len");
  validate(s);
  return s;
}

EipMode RunConfig::eip_mode() const { return get("eip_mode") == "dual" ? EipMode::Dual : EipMode::Primary; }

AccuracyMode RunConfig::accuracy_mode() const {
  return get("accuracy_mode") == "exact" ? AccuracyMode::ExactAtHalf : AccuracyMode::ArgmaxInGold;
}

}  // namespace tgeacm
