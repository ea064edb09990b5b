#include "tgeacm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "tgeacm/error.hpp"
#include "tgeacm/rng.hpp"

namespace tgeacm {

namespace {

constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {"Angry", "Disgust", "Happy",
                                                                     "Like",  "Sad",     "Other"};

const std::array<std::string, Vocabulary::kReserved> kReservedTokens = {"<pad>", "<unk>", "<s>", "</s>"};

EmotionLabels parse_labels(const nlohmann::json& j, bool ordered, std::size_t line_no, const char* field) {
  if (!j.is_array()) throw FormatError("line " + std::to_string(line_no) + ": '" + field + "' must be a list");
  EmotionLabels labels;
  labels.ordered = ordered;
  for (const auto& e : j) {
    if (!e.is_string()) throw FormatError("line " + std::to_string(line_no) + ": emotion names must be strings");
    const int idx = emotion_index(e.get<std::string>());
    if (std::find(labels.categories.begin(), labels.categories.end(), idx) == labels.categories.end())
      labels.categories.push_back(idx);
  }
  if (labels.categories.empty())
    throw FormatError("line " + std::to_string(line_no) + ": '" + field + "' needs at least one emotion");
  return labels;
}

std::string utterance(Rng& rng, const SyntheticSpec& spec, int emotion) {
  const int span = spec.max_len - spec.min_len + 1;
  const int len = spec.min_len + static_cast<int>(rng.below(static_cast<std::size_t>(span)));
  const auto& lexicon = spec.lexicons[static_cast<std::size_t>(emotion)];
  const std::size_t emotional_slot = rng.below(static_cast<std::size_t>(len));
  std::string out;
  for (int i = 0; i < len; ++i) {
    if (i) out += ' ';
    if (static_cast<std::size_t>(i) == emotional_slot)
      out += lexicon[rng.below(lexicon.size())];
    else
      out += spec.filler[rng.below(spec.filler.size())];
  }
  return out;
}

}  // namespace

std::string_view emotion_name(int index) {
  if (index < 0 || index >= kNumEmotions) throw InvalidInput("emotion index out of range");
  return kEmotionNames[static_cast<std::size_t>(index)];
}

int emotion_index(std::string_view name) {
  for (int i = 0; i < kNumEmotions; ++i) {
    const auto ref = kEmotionNames[static_cast<std::size_t>(i)];
    if (ref.size() == name.size() &&
        std::equal(ref.begin(), ref.end(), name.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        }))
      return i;
  }
  throw FormatError("unknown emotion category '" + std::string(name) + "'");
}

int EmotionLabels::primary() const {
  if (categories.empty()) throw InvalidInput("empty emotion label set");
  return ordered ? categories.front() : *std::min_element(categories.begin(), categories.end());
}

int EmotionLabels::secondary() const {
  if (categories.size() < 2) return static_cast<int>(Emotion::Other);
  if (ordered) return categories[1];
  std::vector<int> sorted = categories;
  std::sort(sorted.begin(), sorted.end());
  return sorted[1];
}

EmotionVector EmotionLabels::multi_hot() const {
  EmotionVector v{};
  for (int c : categories) v[static_cast<std::size_t>(c)] = 1.0;
  return v;
}

bool is_label_vector(const EmotionVector& v) {
  bool any = false;
  for (double x : v) {
    if (x != 0.0 && x != 1.0) return false;
    any = any || x == 1.0;
  }
  return any;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream ss{std::string(text)};
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<TextPair> read_corpus(std::istream& in) {
  std::vector<TextPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (const char* field : {"post", "response"})
      if (!j.contains(field) || !j[field].is_string())
        throw FormatError("line " + std::to_string(line_no) + ": missing string field '" + field + "'");
    for (const char* field : {"post_emotions", "response_emotions"})
      if (!j.contains(field)) throw FormatError("line " + std::to_string(line_no) + ": missing '" + field + "'");
    const bool ordered = j.value("labels_ordered", false);
    TextPair p;
    p.post = j["post"].get<std::string>();
    p.response = j["response"].get<std::string>();
    p.post_emotions = parse_labels(j["post_emotions"], ordered, line_no, "post_emotions");
    p.response_emotions = parse_labels(j["response_emotions"], ordered, line_no, "response_emotions");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<TextPair> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open corpus '" + path + "'");
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<TextPair>& pairs) {
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["post"] = p.post;
    j["response"] = p.response;
    auto names = [](const EmotionLabels& l) {
      std::vector<std::string> v;
      for (int c : l.categories) v.emplace_back(emotion_name(c));
      return v;
    };
    j["post_emotions"] = names(p.post_emotions);
    j["response_emotions"] = names(p.response_emotions);
    if (p.post_emotions.ordered || p.response_emotions.ordered) j["labels_ordered"] = true;
    out << j.dump() << '\n';
  }
}

void write_corpus_file(const std::string& path, const std::vector<TextPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write corpus '" + path + "'");
  write_corpus(out, pairs);
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& non_reserved_tokens) {
  tokens_.assign(kReservedTokens.begin(), kReservedTokens.end());
  for (const auto& t : non_reserved_tokens) {
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), t) != kReservedTokens.end()) continue;
    tokens_.push_back(t);
  }
  for (int i = 0; i < size(); ++i)
    if (!ids_.emplace(tokens_[static_cast<std::size_t>(i)], i).second)
      throw IntegrityError("duplicate vocabulary token '" + tokens_[static_cast<std::size_t>(i)] + "'");
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw InvalidInput("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary build_vocab(const std::vector<TextPair>& corpus, int max_size) {
  if (corpus.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  if (max_size < Vocabulary::kReserved + 1) throw ConfigError("vocabulary max_size must be at least 5");
  std::unordered_map<std::string, long> counts;
  for (const auto& p : corpus) {
    for (const auto& t : tokenize(p.post)) ++counts[t];
    for (const auto& t : tokenize(p.response)) ++counts[t];
  }
  for (const auto& r : kReservedTokens) counts.erase(r);
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(max_size - Vocabulary::kReserved));
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(tokens);
}

TokenSequence encode_text(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  if (tokens.empty()) throw InvalidInput("cannot encode an empty token sequence");
  TokenSequence ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

std::vector<std::string> decode_text(const TokenSequence& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

ConversationPair encode_pair(const TextPair& pair, const Vocabulary& vocab, int max_len) {
  auto clip = [max_len](std::vector<std::string> toks) {
    if (static_cast<int>(toks.size()) > max_len) toks.resize(static_cast<std::size_t>(max_len));
    return toks;
  };
  ConversationPair out;
  out.post = encode_text(clip(tokenize(pair.post)), vocab);
  out.response = encode_text(clip(tokenize(pair.response)), vocab);
  out.post_emotion = pair.post_emotions.multi_hot();
  out.response_emotion = pair.response_emotions.multi_hot();
  if (!is_label_vector(out.post_emotion) || !is_label_vector(out.response_emotion))
    throw InvalidInput("conversation pair without a valid emotion label");
  return out;
}

std::vector<ConversationPair> encode_corpus(const std::vector<TextPair>& corpus, const Vocabulary& vocab,
                                            int max_len) {
  std::vector<ConversationPair> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) out.push_back(encode_pair(p, vocab, max_len));
  return out;
}

// ---------------------------------------------------------------------------

SyntheticSpec default_synthetic_spec(PlantedPattern pattern, std::size_t pair_count, double noise_rate,
                                     int lexicon_size, int filler_size) {
  SyntheticSpec spec;
  for (int e = 0; e < kNumEmotions; ++e) {
    const int target = pattern == PlantedPattern::Identity ? e : (e + 1) % kNumEmotions;
    spec.transition[static_cast<std::size_t>(e)][static_cast<std::size_t>(target)] = 1.0;
    std::string stem(emotion_name(e));
    std::transform(stem.begin(), stem.end(), stem.begin(), [](unsigned char c) { return std::tolower(c); });
    for (int i = 0; i < lexicon_size; ++i)
      spec.lexicons[static_cast<std::size_t>(e)].push_back(stem + "_" + std::to_string(i));
  }
  for (int i = 0; i < filler_size; ++i) spec.filler.push_back("w" + std::to_string(i));
  spec.pair_count = pair_count;
  spec.noise_rate = noise_rate;
  return spec;
}

void validate(const SyntheticSpec& spec) {
  for (int e = 0; e < kNumEmotions; ++e) {
    double sum = 0.0;
    for (double p : spec.transition[static_cast<std::size_t>(e)]) {
      if (!(p >= 0.0)) throw ConfigError("transition row " + std::string(emotion_name(e)) + " has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("transition row " + std::string(emotion_name(e)) + " does not sum to 1");
    if (spec.lexicons[static_cast<std::size_t>(e)].empty())
      throw ConfigError("empty lexicon for " + std::string(emotion_name(e)));
  }
  std::set<std::string> seen;
  for (const auto& lex : spec.lexicons)
    for (const auto& t : lex)
      if (!seen.insert(t).second) throw ConfigError("lexicons are not disjoint ('" + t + "')");
  for (const auto& t : spec.filler)
    if (seen.count(t)) throw ConfigError("filler token '" + t + "' also appears in a lexicon");
  if (spec.filler.empty()) throw ConfigError("filler token list is empty");
  if (spec.min_len < 1 || spec.max_len < spec.min_len) throw ConfigError("invalid utterance length range");
  if (spec.noise_rate < 0.0 || spec.noise_rate > 1.0) throw ConfigError("noise_rate must lie in [0,1]");
}

std::vector<TextPair> generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(seed);
  std::vector<TextPair> pairs;
  pairs.reserve(spec.pair_count);
  for (std::size_t i = 0; i < spec.pair_count; ++i) {
    const int post_emotion = static_cast<int>(rng.below(kNumEmotions));
    const auto& row = spec.transition[static_cast<std::size_t>(post_emotion)];
    int response_emotion = static_cast<int>(rng.categorical(std::vector<double>(row.begin(), row.end())));
    if (rng.uniform() < spec.noise_rate) response_emotion = static_cast<int>(rng.below(kNumEmotions));
    TextPair p;
    p.post = utterance(rng, spec, post_emotion);
    p.response = utterance(rng, spec, response_emotion);
    p.post_emotions.categories = {post_emotion};
    p.response_emotions.categories = {response_emotion};
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ---------------------------------------------------------------------------

long EipMatrix::total() const {
  long n = 0;
  if (mode == EipMode::Primary) {
    for (const auto& row : primary)
      for (long c : row) n += c;
  } else {
    for (const auto& [k, c] : dual) n += c;
  }
  return n;
}

EipMatrix analyze_eip(const std::vector<TextPair>& corpus, EipMode mode) {
  EipMatrix m;
  m.mode = mode;
  for (const auto& p : corpus) {
    if (mode == EipMode::Primary) {
      ++m.primary[static_cast<std::size_t>(p.post_emotions.primary())]
                 [static_cast<std::size_t>(p.response_emotions.primary())];
    } else {
      const EipMatrix::Key post{p.post_emotions.primary(), p.post_emotions.secondary()};
      const EipMatrix::Key resp{p.response_emotions.primary(), p.response_emotions.secondary()};
      ++m.dual[{post, resp}];
    }
  }
  return m;
}

void write_eip_csv(std::ostream& out, const EipMatrix& eip) {
  if (eip.mode == EipMode::Primary) {
    out << "post\\response";
    for (int c = 0; c < kNumEmotions; ++c) out << ',' << emotion_name(c);
    out << '\n';
    for (int r = 0; r < kNumEmotions; ++r) {
      out << emotion_name(r);
      for (int c = 0; c < kNumEmotions; ++c)
        out << ',' << eip.primary[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      out << '\n';
    }
    return;
  }
  std::set<EipMatrix::Key> rows, cols;
  for (const auto& [k, c] : eip.dual) {
    rows.insert(k.first);
    cols.insert(k.second);
  }
  auto label = [](const EipMatrix::Key& k) {
    return "\"(" + std::string(emotion_name(k.first)) + "," + std::string(emotion_name(k.second)) + ")\"";
  };
  out << "post\\response";
  for (const auto& c : cols) out << ',' << label(c);
  out << '\n';
  for (const auto& r : rows) {
    out << label(r);
    for (const auto& c : cols) {
      auto it = eip.dual.find({r, c});
      out << ',' << (it == eip.dual.end() ? 0 : it->second);
    }
    out << '\n';
  }
}

}  // namespace tgeacm
