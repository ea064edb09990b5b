#include "tgeacm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tgeacm/error.hpp"

namespace tgeacm {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string xent_name(ad::EmotionXent x) { return x == ad::EmotionXent::Binary ? "binary" : "positive"; }

std::string direction_name(KlDirection d) {
  return d == KlDirection::PriorToRecognition ? "prior_to_recognition" : "recognition_to_prior";
}

void put_f32(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

double get_f32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

ordered_json model_config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["embed_dim"] = c.embed_dim;
  j["emotion_dim"] = c.emotion_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["layers"] = c.layers;
  j["attn_width"] = c.attn_width;
  j["kl_dim"] = c.kl_dim;
  j["xent"] = xent_name(c.selector.xent);
  j["share_fusion"] = c.selector.share_fusion;
  j["kl_stop_grad"] = c.selector.kl_stop_grad;
  j["kl_direction"] = direction_name(c.selector.kl_direction);
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.emotion_dim = j.at("emotion_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.attn_width = j.at("attn_width").get<int>();
    c.kl_dim = j.at("kl_dim").get<int>();
    const auto xent = j.at("xent").get<std::string>();
    if (xent != "binary" && xent != "positive") throw FormatError("unknown xent '" + xent + "'");
    c.selector.xent = xent == "binary" ? ad::EmotionXent::Binary : ad::EmotionXent::PositiveTerm;
    c.selector.share_fusion = j.at("share_fusion").get<bool>();
    c.selector.kl_stop_grad = j.at("kl_stop_grad").get<bool>();
    const auto dir = j.at("kl_direction").get<std::string>();
    if (dir != "prior_to_recognition" && dir != "recognition_to_prior")
      throw FormatError("unknown kl_direction '" + dir + "'");
    c.selector.kl_direction =
        dir == "prior_to_recognition" ? KlDirection::PriorToRecognition : KlDirection::RecognitionToPrior;
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const std::string& dir, const Model& model, const CheckpointMeta& meta) {
  fs::create_directories(dir);
  ordered_json m;
  m["format"] = kCheckpointFormat;
  m["version"] = kCheckpointVersion;
  m["dtype"] = "float32";
  m["byte_order"] = "little";
  m["step"] = meta.step;
  m["seed"] = meta.seed;
  m["rng_state"] = meta.rng_state;
  m["model"] = model_config_to_json(model.config);
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : meta.config) cfg[k] = v;
  m["config"] = cfg;
  std::vector<std::string> extra(model.vocab.tokens().begin() + Vocabulary::kReserved, model.vocab.tokens().end());
  m["vocab"] = extra;

  ordered_json tensors = ordered_json::object();
  std::ofstream payload(fs::path(dir) / "params.bin", std::ios::binary | std::ios::trunc);
  if (!payload) throw IntegrityError("cannot write " + (fs::path(dir) / "params.bin").string());
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& t = model.params.tensor(i);
    tensors[t.name] = {{"shape", {t.value.rows(), t.value.cols()}}, {"dtype", "float32"}, {"offset", offset}};
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) put_f32(payload, t.value(r, c));
    offset += static_cast<std::uint64_t>(t.value.size()) * 4;
  }
  m["tensors"] = tensors;
  payload.close();
  if (!payload) throw IntegrityError("failed writing checkpoint payload in " + dir);

  std::ofstream manifest(fs::path(dir) / "manifest.json", std::ios::trunc);
  manifest << m.dump(2) << "\n";
  if (!manifest) throw IntegrityError("failed writing checkpoint manifest in " + dir);
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  const fs::path payload_path = fs::path(dir) / "params.bin";
  if (!fs::is_directory(dir) || !fs::exists(manifest_path))
    throw InvalidInput("checkpoint not found: " + dir + " (expected a directory with manifest.json)");

  json m;
  {
    std::ifstream in(manifest_path);
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(manifest_path.string() + ": " + e.what());
    }
  }
  std::ifstream in(payload_path, std::ios::binary);
  if (!in) throw FormatError("missing " + payload_path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  try {
    if (m.at("format").get<std::string>() != kCheckpointFormat) throw FormatError("not a checkpoint manifest");
    if (m.at("version").get<int>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    if (m.at("dtype").get<std::string>() != "float32" || m.at("byte_order").get<std::string>() != "little")
      throw FormatError("unsupported payload encoding");

    LoadedCheckpoint ck;
    ck.meta.step = m.at("step").get<int>();
    ck.meta.seed = m.at("seed").get<std::uint64_t>();
    ck.meta.rng_state = m.at("rng_state").get<std::string>();
    for (const auto& [k, v] : m.at("config").items()) ck.meta.config.emplace_back(k, v.get<std::string>());
    const Vocabulary vocab(m.at("vocab").get<std::vector<std::string>>());
    ck.model = Model::create(model_config_from_json(m.at("model")), vocab, 0);

    const auto& tensors = m.at("tensors");
    if (tensors.size() != ck.model.params.size())
      throw IntegrityError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                           std::to_string(ck.model.params.size()));
    for (const auto& [name, info] : tensors.items()) {
      if (!ck.model.params.contains(name)) throw IntegrityError("unexpected tensor '" + name + "'");
      Mat& value = ck.model.params.mut(ck.model.params.id(name));
      const auto shape = info.at("shape").get<std::vector<long>>();
      if (shape.size() != 2 || shape[0] != value.rows() || shape[1] != value.cols())
        throw IntegrityError("shape mismatch for tensor '" + name + "'");
      if (info.at("dtype").get<std::string>() != "float32") throw FormatError("tensor '" + name + "' is not float32");
      const auto offset = info.at("offset").get<std::uint64_t>();
      if (offset + static_cast<std::uint64_t>(value.size()) * 4 > bytes.size())
        throw FormatError("payload too short for tensor '" + name + "'");
      const unsigned char* p = bytes.data() + offset;
      for (Eigen::Index r = 0; r < value.rows(); ++r)
        for (Eigen::Index c = 0; c < value.cols(); ++c, p += 4) value(r, c) = get_f32(p);
    }
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
}

}  // namespace tgeacm
