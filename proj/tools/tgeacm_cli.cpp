#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tgeacm.h"

namespace {

struct ConfigHandle {
  tgeacm_config* ptr = nullptr;
  ~ConfigHandle() { tgeacm_config_destroy(ptr); }
};

struct ModelHandle {
  tgeacm_model* ptr = nullptr;
  ~ModelHandle() { tgeacm_model_destroy(ptr); }
};

int fail(tgeacm_status s) {
  std::cerr << "error: " << tgeacm_last_error() << '\n';
  return static_cast<int>(s);
}

std::string config_value(const tgeacm_config* c, const char* key) {
  size_t needed = 0;
  tgeacm_config_get(c, key, nullptr, 0, &needed);
  std::string buf(needed, '\0');
  if (tgeacm_config_get(c, key, buf.data(), buf.size(), &needed) != TGEACM_OK) return {};
  buf.resize(needed - 1);
  return buf;
}

int chat(const tgeacm_config* c) {
  const std::string checkpoint = config_value(c, "checkpoint");
  if (checkpoint.empty()) {
    std::cerr << "error: chat needs --checkpoint\n";
    return TGEACM_ERR_VALIDATION;
  }
  const int max_len = std::stoi(config_value(c, "max_len"));
  ModelHandle model;
  if (auto s = tgeacm_model_load(checkpoint.c_str(), &model.ptr); s != TGEACM_OK) return fail(s);

  const bool interactive = isatty(STDIN_FILENO);
  std::string line;
  std::vector<char> buf(4096);
  for (;;) {
    if (interactive) std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line) || line.empty()) break;

    const auto t0 = std::chrono::steady_clock::now();
    double probs[TGEACM_NUM_EMOTIONS];
    auto s = tgeacm_model_predict_emotion(model.ptr, line.c_str(), probs);
    size_t needed = 0;
    if (s == TGEACM_OK) {
      s = tgeacm_model_respond(model.ptr, line.c_str(), max_len, buf.data(), buf.size(), &needed);
      if (s != TGEACM_OK && needed > buf.size()) {
        buf.resize(needed);
        s = tgeacm_model_respond(model.ptr, line.c_str(), max_len, buf.data(), buf.size(), &needed);
      }
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (s != TGEACM_OK) {
      std::cerr << "error: " << tgeacm_last_error() << '\n';
      continue;
    }
    std::cout << "emotion:";
    for (int k = 0; k < TGEACM_NUM_EMOTIONS; ++k) {
      char cell[64];
      std::snprintf(cell, sizeof cell, " %s=%.4f", tgeacm_emotion_name(k), probs[k]);
      std::cout << cell;
    }
    char lat[64];
    std::snprintf(lat, sizeof lat, "%.2f", ms);
    std::cout << "\nresponse: " << buf.data() << "\nlatency_ms: " << lat << '\n' << std::flush;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-aware dialogue model: data, training, evaluation and chat"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, preset, checkpoint, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--preset", preset, "Model preset: tiny, desk or paper");
  app.add_option("--checkpoint", checkpoint, "Checkpoint directory");
  app.add_option("--out", out, "Output directory");
  app.add_option("--set", overrides, "Override any config key (key=value), repeatable")->take_all();

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-synthetic", "Write a synthetic corpus with a planted emotion transition"},
      {"pretrain", "Pre-train the plain attention seq2seq"},
      {"train", "Train the full model"},
      {"eval", "Distinct-n / BLEU report (plus human scores when given)"},
      {"analyze-eip", "Emotion interaction counts of a corpus"},
      {"project-emotions", "2-D PCA of prior and posterior emotion vectors"},
      {"chat", "Interactive REPL over a checkpoint"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : TGEACM_ERR_VALIDATION;
  }

  ConfigHandle cfg;
  if (auto s = tgeacm_config_create(&cfg.ptr); s != TGEACM_OK) return fail(s);
  if (!config_file.empty())
    if (auto s = tgeacm_config_load_file(cfg.ptr, config_file.c_str()); s != TGEACM_OK) return fail(s);

  auto set = [&](const std::string& key, const std::string& value) {
    return tgeacm_config_set(cfg.ptr, key.c_str(), value.c_str());
  };
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
      return TGEACM_ERR_VALIDATION;
    }
    if (auto s = set(kv.substr(0, eq), kv.substr(eq + 1)); s != TGEACM_OK) return fail(s);
  }
  if (seed)
    if (auto s = set("seed", std::to_string(*seed)); s != TGEACM_OK) return fail(s);
  if (!preset.empty())
    if (auto s = set("preset", preset); s != TGEACM_OK) return fail(s);
  if (!checkpoint.empty())
    if (auto s = set("checkpoint", checkpoint); s != TGEACM_OK) return fail(s);
  if (!out.empty())
    if (auto s = set("out", out); s != TGEACM_OK) return fail(s);

  const std::string cmd = app.get_subcommands().front()->get_name();
  tgeacm_status s = TGEACM_OK;
  if (cmd == "gen-synthetic") s = tgeacm_cmd_gen_synthetic(cfg.ptr);
  else if (cmd == "pretrain") s = tgeacm_cmd_pretrain(cfg.ptr);
  else if (cmd == "train") s = tgeacm_cmd_train(cfg.ptr);
  else if (cmd == "eval") s = tgeacm_cmd_eval(cfg.ptr);
  else if (cmd == "analyze-eip") s = tgeacm_cmd_analyze_eip(cfg.ptr);
  else if (cmd == "project-emotions") s = tgeacm_cmd_project_emotions(cfg.ptr);
  else if (cmd == "chat") return chat(cfg.ptr);
  return s == TGEACM_OK ? 0 : fail(s);
}
