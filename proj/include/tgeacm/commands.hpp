#pragma once

// Subcommand bodies behind the C API. Each reads its inputs from a RunConfig
// and writes everything under `out`, including effective_config.ini. The chat
// REPL lives in the command-line tool on top of the model handle API.

#include "tgeacm/config.hpp"

namespace tgeacm {

// out/corpus.jsonl
void cmd_gen_synthetic(const RunConfig& config);

// out/checkpoint/, out/pretrain_log.jsonl
void cmd_pretrain(const RunConfig& config);

// out/metrics.jsonl, out/checkpoints/step_NNNNNNNN/, out/summary.json
void cmd_train(const RunConfig& config);

// out/report.json
void cmd_eval(const RunConfig& config);

// out/eip.csv
void cmd_analyze_eip(const RunConfig& config);

// out/projection.csv, out/projection.json
void cmd_project_emotions(const RunConfig& config);

}  // namespace tgeacm
