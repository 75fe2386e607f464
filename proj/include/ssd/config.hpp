#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "ssd/ctc.hpp"
#include "ssd/error.hpp"

namespace ssd {

enum class Mode {
  kBoth,       // entropy gate, then verification, then fallback from prefix
  kLlmOnly,    // every draft goes to verification
  kCtcOnly,    // gate failures go straight to full AR
  kFullAr,     // baseline, no draft
  kCtcGreedy,  // every draft is accepted
};

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kBoth: return "both";
    case Mode::kLlmOnly: return "llm-only";
    case Mode::kCtcOnly: return "ctc-only";
    case Mode::kFullAr: return "full-ar";
    case Mode::kCtcGreedy: return "ctc-greedy";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "both") return Mode::kBoth;
  if (s == "llm-only") return Mode::kLlmOnly;
  if (s == "ctc-only") return Mode::kCtcOnly;
  if (s == "full-ar") return Mode::kFullAr;
  if (s == "ctc-greedy") return Mode::kCtcGreedy;
  throw Error(ErrorKind::kConfig, "unknown mode '" + std::string(s) + "'");
}

inline constexpr std::size_t kUnboundedBudget = static_cast<std::size_t>(-1);

struct DecodeConfig {
  double tau_ctc = 0.7;  // nats, or kGateAlways / kGateNever
  double tau_slm = 0.2;  // raw probability
  Mode mode = Mode::kBoth;
  std::optional<std::size_t> max_new_tokens;  // unset: default_max_new_tokens()
  std::size_t budget_tokens = 512;            // kUnboundedBudget disables batching limits
  bool logits_at_verification_positions_only = true;
  std::size_t workers = 1;

  static DecodeConfig high_accuracy() {
    DecodeConfig c;
    c.tau_ctc = 0.7;
    c.tau_slm = 0.2;
    return c;
  }
  static DecodeConfig high_rtfx() {
    DecodeConfig c;
    c.tau_ctc = 3.0;
    c.tau_slm = 0.1;
    return c;
  }

  void validate() const {
    if (!(tau_slm >= 0.0 && tau_slm <= 1.0)) {
      throw Error(ErrorKind::kConfig, "tau_slm must lie in [0, 1]");
    }
    if (std::isnan(tau_ctc) || (tau_ctc < 0.0 && tau_ctc != kGateNever)) {
      throw Error(ErrorKind::kConfig, "tau_ctc must be >= 0 or a sentinel");
    }
    if (budget_tokens == 0) throw Error(ErrorKind::kConfig, "budget_tokens must be > 0");
    if (workers == 0) throw Error(ErrorKind::kConfig, "workers must be >= 1");
  }
};

// Bounds fallback generation: 2 x (draft length + 8), at least 64.
inline std::size_t default_max_new_tokens(std::size_t draft_len) {
  return std::max<std::size_t>(64, 2 * (draft_len + 8));
}

// Effective stage wiring for a decode mode.
struct Wiring {
  bool run_draft = true;
  bool use_gate = true;
  bool run_verification = true;
  bool accept_every_draft = false;
};

inline Wiring ablation_mode(const DecodeConfig& config) {
  switch (config.mode) {
    case Mode::kBoth: return {true, true, true, false};
    case Mode::kLlmOnly: return {true, false, true, false};
    case Mode::kCtcOnly: return {true, true, false, false};
    case Mode::kFullAr: return {false, false, false, false};
    case Mode::kCtcGreedy: return {true, false, false, true};
  }
  throw Error(ErrorKind::kConfig, "unknown mode");
}

}  // namespace ssd
