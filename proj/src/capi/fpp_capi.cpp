#include "fpp/fpp.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "core/error.hpp"
#include "core/eval.hpp"
#include "core/train.hpp"
#include "core/workflow.hpp"

struct fpp_corpus {
  fpp::AnnotatedCorpus corpus;
};

struct fpp_checkpoint {
  fpp::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

fpp_status record(fpp_status status, const char* message) {
  g_last_error = message;
  return status;
}

template <typename F>
fpp_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return FPP_OK;
  } catch (const fpp::Error& e) {
    switch (e.kind()) {
      case fpp::ErrorKind::InvalidInput:
        return record(FPP_ERR_INVALID, e.what());
      case fpp::ErrorKind::Io:
        return record(FPP_ERR_IO, e.what());
      case fpp::ErrorKind::Runtime:
        break;
    }
    return record(FPP_ERR_RUNTIME, e.what());
  } catch (const nlohmann::json::exception& e) {
    return record(FPP_ERR_INVALID, e.what());
  } catch (const std::bad_alloc&) {
    return record(FPP_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return record(FPP_ERR_RUNTIME, e.what());
  } catch (...) {
    return record(FPP_ERR_RUNTIME, "unknown error");
  }
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* name) {
  if (!p) fpp::invalid(std::string(name) + " must not be NULL");
}

nlohmann::json parse_json_arg(const char* text, const char* name) {
  if (!text) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fpp::invalid(std::string(name) + " is not valid JSON: " + e.what());
  }
}

fpp::TrainOptions options_with_log(fpp_log_fn log, void* user_data) {
  fpp::TrainOptions opts;
  if (log) {
    opts.progress = [log, user_data](const fpp::TrainProgress& p) {
      const std::string msg = "step " + std::to_string(p.step) + " loss " + std::to_string(p.loss);
      log(FPP_LOG_INFO, msg.c_str(), user_data);
    };
  }
  return opts;
}

}  // namespace

extern "C" {

const char* fpp_version(void) { return "1.0.0"; }

const char* fpp_last_error(void) { return g_last_error.c_str(); }

void fpp_string_free(char* s) { std::free(s); }

fpp_status fpp_corpus_load(const char* path, fpp_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto handle = std::make_unique<fpp_corpus>();
    handle->corpus = fpp::parse_corpus(path);
    *out = handle.release();
  });
}

fpp_status fpp_corpus_save(const fpp_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus, "corpus");
    require(path, "path");
    fpp::write_corpus(corpus->corpus, path);
  });
}

fpp_status fpp_corpus_counts(const fpp_corpus* corpus, size_t* speakers, size_t* sentences, size_t* slots, size_t* fps) {
  return guarded([&] {
    require(corpus, "corpus");
    if (speakers) *speakers = corpus->corpus.speakers.size();
    if (sentences) *sentences = corpus->corpus.sentence_count();
    if (slots) *slots = corpus->corpus.slot_count();
    if (fps) *fps = corpus->corpus.fp_count();
  });
}

void fpp_corpus_free(fpp_corpus* corpus) { delete corpus; }

fpp_status fpp_checkpoint_load(const char* path, fpp_checkpoint** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto handle = std::make_unique<fpp_checkpoint>();
    handle->ckpt = fpp::load_checkpoint(path);
    *out = handle.release();
  });
}

fpp_status fpp_checkpoint_save(const fpp_checkpoint* ckpt, const char* path) {
  return guarded([&] {
    require(ckpt, "checkpoint");
    require(path, "path");
    fpp::save_checkpoint(ckpt->ckpt, path);
  });
}

fpp_status fpp_checkpoint_id(const fpp_checkpoint* ckpt, char** out) {
  return guarded([&] {
    require(ckpt, "checkpoint");
    require(out, "out");
    *out = duplicate(ckpt->ckpt.id);
  });
}

void fpp_checkpoint_free(fpp_checkpoint* ckpt) { delete ckpt; }

fpp_status fpp_train_base(const fpp_corpus* corpus, const char* config_json, fpp_log_fn log, void* user_data,
                          fpp_checkpoint** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = nullptr;
    const auto config = fpp::train_config_from_json(parse_json_arg(config_json, "config_json"),
                                                    fpp::preset_config(fpp::Preset::Desk, fpp::Phase::Base));
    auto handle = std::make_unique<fpp_checkpoint>();
    handle->ckpt = fpp::train_base(corpus->corpus, config, options_with_log(log, user_data));
    *out = handle.release();
  });
}

fpp_status fpp_finetune(const fpp_checkpoint* base, const fpp_corpus* corpus, const char* config_json, fpp_log_fn log,
                        void* user_data, fpp_checkpoint** out) {
  return guarded([&] {
    require(base, "base");
    require(corpus, "corpus");
    require(out, "out");
    *out = nullptr;
    const auto config = fpp::train_config_from_json(parse_json_arg(config_json, "config_json"),
                                                    fpp::preset_config(fpp::Preset::Desk, fpp::Phase::Finetune));
    auto handle = std::make_unique<fpp_checkpoint>();
    handle->ckpt = fpp::finetune(base->ckpt, corpus->corpus, config, options_with_log(log, user_data));
    *out = handle.release();
  });
}

fpp_status fpp_evaluate(const fpp_checkpoint* ckpt, const fpp_corpus* corpus, char** report_json) {
  return guarded([&] {
    require(ckpt, "checkpoint");
    require(corpus, "corpus");
    require(report_json, "report_json");
    *report_json = duplicate(fpp::to_json(fpp::evaluate_model(ckpt->ckpt, corpus->corpus)).dump());
  });
}

fpp_status fpp_predict_text(const fpp_checkpoint* ckpt, const char* sentence_json, char** text) {
  return guarded([&] {
    require(ckpt, "checkpoint");
    require(sentence_json, "sentence_json");
    require(text, "text");
    std::string line(sentence_json);
    for (char& c : line)
      if (c == '\n' || c == '\r') c = ' ';
    std::istringstream in(line);
    const auto fluent = fpp::parse_fluent(in);
    if (fluent.size() != 1) fpp::invalid("expected exactly one sentence");
    fpp::Sentence s{fluent.front().breath_groups, {}};
    s.fp_tags.assign(s.slot_count(), fpp::FpTag::none());
    s.fp_tags = fpp::predict_tags(ckpt->ckpt.model, s, {fluent.front().speaker, 0});
    *text = duplicate(fpp::render_plain(s, ckpt->ckpt.vocabulary));
  });
}

fpp_status fpp_run(const char* command, const char* options_json, fpp_log_fn log, void* user_data, char** result_json) {
  return guarded([&] {
    require(command, "command");
    if (result_json) *result_json = nullptr;
    const auto options = parse_json_arg(options_json, "options_json");
    fpp::LogSink sink;
    if (log) {
      sink = [log, user_data](fpp::LogLevel level, std::string_view msg) {
        const std::string copy(msg);
        log(level == fpp::LogLevel::Debug ? FPP_LOG_DEBUG : FPP_LOG_INFO, copy.c_str(), user_data);
      };
    }
    const auto result = fpp::run_workflow(command, options, sink);
    if (result_json) *result_json = duplicate(result.dump());
  });
}

}  // extern "C"
