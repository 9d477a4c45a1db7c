#include "knmt/run_config.hpp"

#include <algorithm>

#include "knmt/config.hpp"
#include "knmt/error.hpp"

namespace knmt {

namespace {

std::string optional_text(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : "none";
}

}  // namespace


void RunConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "seed") {
      seed = parse_count(key, value, true);
    } else if (key == "jobs") {
      schedule.set(key, value);
      decode.set(key, value);
    } else if (model.set(key, value) || schedule.set(key, value) || decode.set(key, value) ||
               lm.set(key, value) || lm_schedule.set(key, value)) {
    } else if (key == "finetune_lr") {
      finetune_lr = parse_real(key, value);
    } else if (key == "finetune_validate_every") {
      finetune_validate_every = parse_count(key, value, false);
    } else if (key == "bpe_merges") {
      bpe_merges = parse_count(key, value, true);
    } else if (key == "bpe_min_frequency") {
      bpe_min_frequency = static_cast<long>(parse_count(key, value, false));
    } else if (key == "filter_min_len") {
      filter_min_len = parse_count(key, value, false);
    } else if (key == "filter_max_len") {
      filter_max_len = parse_count(key, value, false);
    } else if (key == "filter_max_ratio") {
      if (value == "none") filter_max_ratio.reset();
      else filter_max_ratio = parse_real(key, value);
    } else if (key == "bt_limit") {
      if (value == "none") bt_limit.reset();
      else bt_limit = parse_count(key, value, true);
    } else if (key == "reinflect_k") {
      reinflect_k = parse_count(key, value, false);
    } else if (key == "reinflect_cap") {
      reinflect_cap = parse_count(key, value, false);
    } else if (key == "tune_restarts") {
      tune.restarts = parse_count(key, value, false);
    } else if (key == "tune_sweeps") {
      tune.sweeps = parse_count(key, value, false);
    } else if (key == "src_vocab_size") {
      src_vocab_size = parse_count(key, value, true);
    } else if (key == "tgt_vocab_size") {
      tgt_vocab_size = parse_count(key, value, true);
    } else if (key == "factor_vocab_size") {
      factor_vocab_size = parse_count(key, value, true);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::merge_file(const std::string& path) {
  for (const auto& e : read_config(path)) {
    try {
      set(e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(path + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
  std::vector<std::pair<std::string, std::string>> out{{"seed", std::to_string(seed)}};
  const auto append = [&](const auto& more) {
    for (const auto& kv : more) {
      const bool seen = std::any_of(out.begin(), out.end(), [&](const auto& o) { return o.first == kv.first; });
      if (!seen) out.push_back(kv);
    }
  };
  append(model.items());
  append(schedule.items());
  append(decode.items());
  append(lm.items());
  append(lm_schedule.items());
  append(std::vector<std::pair<std::string, std::string>>{
      {"finetune_lr", format_real(finetune_lr)},
      {"finetune_validate_every", std::to_string(finetune_validate_every)},
      {"bpe_merges", std::to_string(bpe_merges)},
      {"bpe_min_frequency", std::to_string(bpe_min_frequency)},
      {"filter_min_len", std::to_string(filter_min_len)},
      {"filter_max_len", std::to_string(filter_max_len)},
      {"filter_max_ratio", filter_max_ratio ? format_real(*filter_max_ratio) : "none"},
      {"bt_limit", optional_text(bt_limit)},
      {"reinflect_k", std::to_string(reinflect_k)},
      {"reinflect_cap", std::to_string(reinflect_cap)},
      {"tune_restarts", std::to_string(tune.restarts)},
      {"tune_sweeps", std::to_string(tune.sweeps)},
      {"src_vocab_size", std::to_string(src_vocab_size)},
      {"tgt_vocab_size", std::to_string(tgt_vocab_size)},
      {"factor_vocab_size", std::to_string(factor_vocab_size)}});
  return out;
}

void RunConfig::validate() const {
  model.validate();
  schedule.validate();
  decode.validate();
  lm.validate();
  if (filter_min_len > filter_max_len) throw ConfigError("filter_min_len exceeds filter_max_len");
  if (filter_max_ratio && !(*filter_max_ratio >= 1.0)) throw ConfigError("filter_max_ratio: must be >= 1");
  if (!(finetune_lr > 0)) throw ConfigError("finetune_lr: must be positive");
}

}  // namespace knmt
