#pragma once

// Conversation corpus: emotion categories, vocabulary, JSONL I/O, synthetic
// corpora with planted emotion-interaction patterns, and EIP counting.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tgeacm {

inline constexpr int kNumEmotions = 6;

// Fixed global order. "Other" means no emotion.
enum class Emotion : int { Angry = 0, Disgust, Happy, Like, Sad, Other };

std::string_view emotion_name(int index);
// Case-insensitive; throws FormatError on unknown names.
int emotion_index(std::string_view name);

using EmotionVector = std::array<double, kNumEmotions>;

// Emotion labels of one utterance as given by the dataset. When `ordered` is
// false the first entry carries no meaning and the primary label is the
// lowest category index.
struct EmotionLabels {
  std::vector<int> categories;
  bool ordered = false;

  int primary() const;
  // Secondary label; "Other" for single-label utterances.
  int secondary() const;
  EmotionVector multi_hot() const;
};

// Label-form check: entries in {0,1} with at least one positive.
bool is_label_vector(const EmotionVector& v);

struct TextPair {
  std::string post;
  std::string response;
  EmotionLabels post_emotions;
  EmotionLabels response_emotions;
};

std::vector<std::string> tokenize(std::string_view text);

// JSON-lines: {"post": str, "response": str, "post_emotions": [names],
// "response_emotions": [names]} plus optional "labels_ordered": bool.
std::vector<TextPair> read_corpus(std::istream& in);
std::vector<TextPair> read_corpus_file(const std::string& path);
void write_corpus(std::ostream& out, const std::vector<TextPair>& pairs);
void write_corpus_file(const std::string& path, const std::vector<TextPair>& pairs);

using TokenSequence = std::vector<int>;

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& non_reserved_tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  // UNK for unknown tokens.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Frequency-ranked vocabulary (ties broken lexicographically) over posts and
// responses, truncated to max_size entries including the reserved ones.
Vocabulary build_vocab(const std::vector<TextPair>& corpus, int max_size);

// Maps tokens to ids (unknown -> UNK). Rejects empty input.
TokenSequence encode_text(const std::vector<std::string>& tokens, const Vocabulary& vocab);
std::vector<std::string> decode_text(const TokenSequence& ids, const Vocabulary& vocab);

struct ConversationPair {
  TokenSequence post;
  TokenSequence response;
  EmotionVector post_emotion{};
  EmotionVector response_emotion{};
};

// Encodes a text pair, truncating each side to max_len tokens.
ConversationPair encode_pair(const TextPair& pair, const Vocabulary& vocab, int max_len);
std::vector<ConversationPair> encode_corpus(const std::vector<TextPair>& corpus, const Vocabulary& vocab,
                                            int max_len);

// Planted emotion-interaction corpus generator.
struct SyntheticSpec {
  std::array<std::array<double, kNumEmotions>, kNumEmotions> transition{};
  std::array<std::vector<std::string>, kNumEmotions> lexicons;
  std::vector<std::string> filler;
  std::size_t pair_count = 1000;
  int min_len = 3;
  int max_len = 8;
  double noise_rate = 0.0;
};

enum class PlantedPattern { Identity, Shift };

// Lexicons "<emotion>_<i>", fillers "w<i>", and either the identity
// transition or the cyclic shift e -> (e+1) mod K.
SyntheticSpec default_synthetic_spec(PlantedPattern pattern, std::size_t pair_count, double noise_rate,
                                     int lexicon_size = 4, int filler_size = 60);

void validate(const SyntheticSpec& spec);
std::vector<TextPair> generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

enum class EipMode { Primary, Dual };

struct EipMatrix {
  EipMode mode = EipMode::Primary;
  std::array<std::array<long, kNumEmotions>, kNumEmotions> primary{};
  // (primary, secondary) of post -> (primary, secondary) of response.
  using Key = std::pair<int, int>;
  std::map<std::pair<Key, Key>, long> dual;

  long total() const;
};

EipMatrix analyze_eip(const std::vector<TextPair>& corpus, EipMode mode);
void write_eip_csv(std::ostream& out, const EipMatrix& eip);

}  // namespace tgeacm
