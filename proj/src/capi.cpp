#include "tgeacm.h"

#include <cstring>
#include <new>
#include <string>

#include "tgeacm/checkpoint.hpp"
#include "tgeacm/commands.hpp"
#include "tgeacm/config.hpp"
#include "tgeacm/error.hpp"
#include "tgeacm/inference.hpp"

struct tgeacm_config {
  tgeacm::RunConfig impl;
};

struct tgeacm_model {
  tgeacm::Model impl;
};

namespace {

thread_local std::string last_error;

template <class F>
tgeacm_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return TGEACM_OK;
  } catch (const tgeacm::Error& e) {
    last_error = e.what();
    return e.error_class() == tgeacm::ErrorClass::Validation ? TGEACM_ERR_VALIDATION : TGEACM_ERR_RUNTIME;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return TGEACM_ERR_RUNTIME;
  } catch (const std::exception& e) {
    last_error = e.what();
    return TGEACM_ERR_RUNTIME;
  } catch (...) {
    last_error = "unknown error";
    return TGEACM_ERR_RUNTIME;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw tgeacm::InvalidInput(std::string(what) + " is null");
}

void copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = s.size() + 1;
  if (buf == nullptr || cap < s.size() + 1)
    throw tgeacm::InvalidInput("buffer of " + std::to_string(cap) + " bytes is too small, need " +
                               std::to_string(s.size() + 1));
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

template <void (*Cmd)(const tgeacm::RunConfig&)>
tgeacm_status run_command(const tgeacm_config* c) {
  return guarded([&] {
    require(c, "config");
    Cmd(c->impl);
  });
}

}  // namespace

extern "C" {

const char* tgeacm_last_error(void) { return last_error.c_str(); }

const char* tgeacm_version(void) { return "1.0.0"; }

tgeacm_status tgeacm_config_create(tgeacm_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new tgeacm_config{};
  });
}

void tgeacm_config_destroy(tgeacm_config* c) { delete c; }

tgeacm_status tgeacm_config_load_file(tgeacm_config* c, const char* path) {
  return guarded([&] {
    require(c, "config");
    require(path, "path");
    c->impl.load_file(path);
  });
}

tgeacm_status tgeacm_config_set(tgeacm_config* c, const char* key, const char* value) {
  return guarded([&] {
    require(c, "config");
    require(key, "key");
    require(value, "value");
    c->impl.set(key, value);
  });
}

tgeacm_status tgeacm_config_get(const tgeacm_config* c, const char* key, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(c, "config");
    require(key, "key");
    copy_out(c->impl.get(key), buf, cap, needed);
  });
}

tgeacm_status tgeacm_config_to_ini(const tgeacm_config* c, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(c, "config");
    copy_out(c->impl.to_ini(), buf, cap, needed);
  });
}

tgeacm_status tgeacm_cmd_gen_synthetic(const tgeacm_config* c) { return run_command<tgeacm::cmd_gen_synthetic>(c); }
tgeacm_status tgeacm_cmd_pretrain(const tgeacm_config* c) { return run_command<tgeacm::cmd_pretrain>(c); }
tgeacm_status tgeacm_cmd_train(const tgeacm_config* c) { return run_command<tgeacm::cmd_train>(c); }
tgeacm_status tgeacm_cmd_eval(const tgeacm_config* c) { return run_command<tgeacm::cmd_eval>(c); }
tgeacm_status tgeacm_cmd_analyze_eip(const tgeacm_config* c) { return run_command<tgeacm::cmd_analyze_eip>(c); }
tgeacm_status tgeacm_cmd_project_emotions(const tgeacm_config* c) {
  return run_command<tgeacm::cmd_project_emotions>(c);
}

tgeacm_status tgeacm_model_load(const char* dir, tgeacm_model** out) {
  return guarded([&] {
    require(dir, "checkpoint_dir");
    require(out, "out");
    *out = nullptr;
    auto loaded = tgeacm::load_checkpoint(dir);
    *out = new tgeacm_model{std::move(loaded.model)};
  });
}

void tgeacm_model_destroy(tgeacm_model* m) { delete m; }

tgeacm_status tgeacm_model_predict_emotion(const tgeacm_model* m, const char* post,
                                           double probs[TGEACM_NUM_EMOTIONS]) {
  return guarded([&] {
    require(m, "model");
    require(post, "post");
    require(probs, "probs");
    const auto e = tgeacm::predict_response_emotion(m->impl, tgeacm::encode_post(m->impl, post));
    for (int k = 0; k < TGEACM_NUM_EMOTIONS; ++k) probs[k] = e[static_cast<std::size_t>(k)];
  });
}

tgeacm_status tgeacm_model_respond(const tgeacm_model* m, const char* post, int max_len, char* buf, size_t cap,
                                   size_t* needed) {
  return guarded([&] {
    require(m, "model");
    require(post, "post");
    if (max_len < 1) throw tgeacm::InvalidInput("max_len must be positive");
    const auto ids = tgeacm::respond(m->impl, tgeacm::encode_post(m->impl, post), max_len);
    std::string s;
    for (const auto& t : tgeacm::decode_text(ids, m->impl.vocab)) s += (s.empty() ? "" : " ") + t;
    copy_out(s, buf, cap, needed);
  });
}

const char* tgeacm_emotion_name(int index) {
  if (index < 0 || index >= TGEACM_NUM_EMOTIONS) return nullptr;
  return tgeacm::emotion_name(index).data();
}

}  // extern "C"
