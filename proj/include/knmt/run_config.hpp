#pragma once

// Every knob of a command-line run: a "key = value" file merged with
// command-line overrides. Unknown keys are errors.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "knmt/lm.hpp"
#include "knmt/model.hpp"
#include "knmt/rerank.hpp"
#include "knmt/trainer.hpp"
#include "knmt/translate.hpp"

namespace knmt {

struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  TrainSchedule schedule;
  DecodeConfig decode;
  LmConfig lm;
  LmSchedule lm_schedule;
  TuneOptions tune;

  double finetune_lr = 1e-4;
  std::size_t finetune_validate_every = 5000;

  std::size_t bpe_merges = 30000;
  long bpe_min_frequency = 2;

  std::size_t filter_min_len = 1;
  std::size_t filter_max_len = 100;
  std::optional<double> filter_max_ratio;

  /// Monolingual sentences to back-translate (none: all).
  std::optional<std::size_t> bt_limit;
  /// Reinflection candidates per position and the sentence cap.
  std::size_t reinflect_k = 1;
  std::size_t reinflect_cap = 1000;

  /// Vocabulary sizes for `params` without data.
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
  std::size_t factor_vocab_size = 0;

  /// ConfigError on unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  /// "key=value"; ConfigError without '='.
  void set_assignment(const std::string& assignment);
  void merge_file(const std::string& path);
  std::vector<std::pair<std::string, std::string>> items() const;
  void validate() const;
};

}  // namespace knmt
