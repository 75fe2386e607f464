#pragma once

// Verifier-side decoding: relaxed likelihood verification of a draft in a
// single teacher-forced pass, autoregressive continuation from the longest
// verified prefix, and the full autoregressive baseline.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssd/config.hpp"
#include "ssd/ctc.hpp"
#include "ssd/error.hpp"
#include "ssd/tokenizer.hpp"

namespace ssd {

// Handle to the adapter output for one utterance. The engine never looks
// inside; only the owning model resolves it.
struct AcousticContext {
  std::uint64_t handle = 0;
  std::size_t declared_length = 0;

  friend bool operator==(const AcousticContext&, const AcousticContext&) = default;
};

// Autoregressive verifier contract. score_teacher_forced must return, in one
// invocation, p(tokens[i] | tokens[<i], ctx) for every i, and agree with
// score_next position by position.
class VerifierModel {
 public:
  virtual ~VerifierModel() = default;

  // Size of the output distribution, end-of-sequence included.
  virtual std::size_t vocab_size() const = 0;
  virtual TokenId eos_id() const = 0;

  virtual std::vector<double> score_next(const AcousticContext& ctx,
                                         std::span<const TokenId> prefix) const = 0;
  virtual std::vector<double> score_teacher_forced(const AcousticContext& ctx,
                                                   std::span<const TokenId> tokens) const = 0;

  // Models that cannot score concurrently return false; the pipeline then
  // serializes calls into them.
  virtual bool concurrent_safe() const { return true; }
};

// Forwards to another model and counts invocations.
class CountingVerifier final : public VerifierModel {
 public:
  explicit CountingVerifier(const VerifierModel& inner) : inner_(inner) {}

  std::size_t vocab_size() const override { return inner_.vocab_size(); }
  TokenId eos_id() const override { return inner_.eos_id(); }
  bool concurrent_safe() const override { return inner_.concurrent_safe(); }

  std::vector<double> score_next(const AcousticContext& ctx,
                                 std::span<const TokenId> prefix) const override {
    next_calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.score_next(ctx, prefix);
  }
  std::vector<double> score_teacher_forced(const AcousticContext& ctx,
                                           std::span<const TokenId> tokens) const override {
    teacher_forced_calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.score_teacher_forced(ctx, tokens);
  }

  std::size_t next_calls() const { return next_calls_.load(); }
  std::size_t teacher_forced_calls() const { return teacher_forced_calls_.load(); }
  std::size_t total_calls() const { return next_calls() + teacher_forced_calls(); }
  void reset() {
    next_calls_ = 0;
    teacher_forced_calls_ = 0;
  }

 private:
  const VerifierModel& inner_;
  mutable std::atomic<std::size_t> next_calls_{0};
  mutable std::atomic<std::size_t> teacher_forced_calls_{0};
};

// Wraps a model that declared itself not concurrent-safe.
class SerializedVerifier final : public VerifierModel {
 public:
  explicit SerializedVerifier(const VerifierModel& inner) : inner_(inner) {}

  std::size_t vocab_size() const override { return inner_.vocab_size(); }
  TokenId eos_id() const override { return inner_.eos_id(); }
  bool concurrent_safe() const override { return true; }

  std::vector<double> score_next(const AcousticContext& ctx,
                                 std::span<const TokenId> prefix) const override {
    std::lock_guard lock(mu_);
    return inner_.score_next(ctx, prefix);
  }
  std::vector<double> score_teacher_forced(const AcousticContext& ctx,
                                           std::span<const TokenId> tokens) const override {
    std::lock_guard lock(mu_);
    return inner_.score_teacher_forced(ctx, tokens);
  }

 private:
  const VerifierModel& inner_;
  mutable std::mutex mu_;
};

struct VerificationOutcome {
  std::vector<double> likelihoods;
  std::optional<std::size_t> reject_at;  // 1-indexed first failing position

  bool accepted() const { return !reject_at.has_value(); }
  // Length of the longest verified prefix.
  std::size_t verified_prefix() const {
    return reject_at ? *reject_at - 1 : likelihoods.size();
  }
};

// Accepts iff every likelihood is strictly greater than tau_slm; otherwise
// rejects at the first position with likelihood <= tau_slm.
inline VerificationOutcome verify(std::vector<double> likelihoods, double tau_slm) {
  if (!(tau_slm >= 0.0 && tau_slm <= 1.0)) {
    throw Error(ErrorKind::kConfig, "tau_slm must lie in [0, 1]");
  }
  VerificationOutcome outcome;
  for (std::size_t i = 0; i < likelihoods.size(); ++i) {
    const double l = likelihoods[i];
    if (!(l >= 0.0 && l <= 1.0)) {
      throw Error(ErrorKind::kInvalidInput, "likelihood outside [0, 1] at " + std::to_string(i));
    }
    if (!outcome.reject_at && !(l > tau_slm)) outcome.reject_at = i + 1;
  }
  outcome.likelihoods = std::move(likelihoods);
  return outcome;
}

// One teacher-forced invocation, then verify().
inline VerificationOutcome verify_draft(const VerifierModel& model, const AcousticContext& ctx,
                                        std::span<const TokenId> draft, double tau_slm) {
  auto likelihoods = model.score_teacher_forced(ctx, draft);
  if (likelihoods.size() != draft.size()) {
    throw Error(ErrorKind::kModel, "teacher-forced scores have length " +
                                       std::to_string(likelihoods.size()) + ", expected " +
                                       std::to_string(draft.size()));
  }
  return verify(std::move(likelihoods), tau_slm);
}

struct Continuation {
  TokenSeq tokens;         // generated tokens, end-of-sequence excluded
  std::size_t calls = 0;   // score_next invocations, end-of-sequence step included
  bool truncated = false;  // stopped by the token budget
};

inline TokenId argmax_token(std::span<const double> dist) {
  if (dist.empty()) throw Error(ErrorKind::kModel, "empty next-token distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

// Greedy generation after `prefix` until end-of-sequence or budget.
inline Continuation ar_continue(const VerifierModel& model, const AcousticContext& ctx,
                                std::span<const TokenId> prefix, std::size_t max_new_tokens) {
  Continuation out;
  TokenSeq running(prefix.begin(), prefix.end());
  while (true) {
    if (out.tokens.size() >= max_new_tokens) {
      out.truncated = true;
      break;
    }
    auto dist = model.score_next(ctx, running);
    ++out.calls;
    if (dist.size() != model.vocab_size()) {
      throw Error(ErrorKind::kModel, "next-token distribution has wrong size");
    }
    const TokenId next = argmax_token(dist);
    if (next == model.eos_id()) break;
    out.tokens.push_back(next);
    running.push_back(next);
  }
  return out;
}

enum class Source { kCtcGate, kLlmVerified, kFallback, kFullAr };

inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::kCtcGate: return "ctc-gate";
    case Source::kLlmVerified: return "llm-verified";
    case Source::kFallback: return "fallback";
    case Source::kFullAr: return "full-ar";
  }
  return "?";
}

inline Source parse_source(std::string_view s) {
  if (s == "ctc-gate") return Source::kCtcGate;
  if (s == "llm-verified") return Source::kLlmVerified;
  if (s == "fallback") return Source::kFallback;
  if (s == "full-ar") return Source::kFullAr;
  throw Error(ErrorKind::kParse, "unknown source '" + std::string(s) + "'");
}

struct FinalHypothesis {
  TokenSeq tokens;  // verifier token ids
  std::string text;
  Source source = Source::kFullAr;
  std::size_t prefix_len = 0;  // verified draft prefix kept (kFallback only)
  std::size_t verifier_calls = 0;
  std::size_t generated = 0;  // AR steps taken, end-of-sequence step included
  bool truncated = false;
  std::string note;  // non-fatal diagnostics, e.g. a tokenization reroute

  friend bool operator==(const FinalHypothesis&, const FinalHypothesis&) = default;
};

inline FinalHypothesis full_ar_decode(const VerifierModel& model, const AcousticContext& ctx,
                                      std::size_t max_new_tokens, const Tokenizer& tokenizer) {
  auto cont = ar_continue(model, ctx, {}, max_new_tokens);
  FinalHypothesis out;
  out.tokens = std::move(cont.tokens);
  out.text = tokenizer.decode(out.tokens);
  out.source = Source::kFullAr;
  out.verifier_calls = cont.calls;
  out.generated = cont.calls;
  out.truncated = cont.truncated;
  return out;
}

// Everything the verifier side needs for one utterance.
struct VerifierBinding {
  const VerifierModel& model;
  const Tokenizer& tokenizer;
  const Vocabulary& draft_vocab;
};

inline std::size_t fallback_budget(const DecodeConfig& config, std::size_t draft_len) {
  return config.max_new_tokens.value_or(default_max_new_tokens(draft_len));
}

// Verification and fallback for a draft that did not pass the gate, with
// the draft already in verifier token space.
inline FinalHypothesis verify_and_continue(const TokenSeq& draft_ids, const VerifierBinding& v,
                                           const AcousticContext& ctx,
                                           const DecodeConfig& config) {
  FinalHypothesis out;
  auto outcome = verify_draft(v.model, ctx, draft_ids, config.tau_slm);
  if (outcome.accepted()) {
    out.tokens = draft_ids;
    out.text = v.tokenizer.decode(out.tokens);
    out.source = Source::kLlmVerified;
    out.verifier_calls = 1;
    return out;
  }
  const std::size_t k = outcome.verified_prefix();
  TokenSeq prefix(draft_ids.begin(), draft_ids.begin() + static_cast<std::ptrdiff_t>(k));
  auto cont = ar_continue(v.model, ctx, prefix, fallback_budget(config, draft_ids.size()));
  out.tokens = std::move(prefix);
  out.tokens.insert(out.tokens.end(), cont.tokens.begin(), cont.tokens.end());
  out.text = v.tokenizer.decode(out.tokens);
  out.source = Source::kFallback;
  out.prefix_len = k;
  out.verifier_calls = 1 + cont.calls;
  out.generated = cont.calls;
  out.truncated = cont.truncated;
  return out;
}

// Final hypothesis for one utterance given its draft: the draft itself if
// it passes the entropy gate or verification, otherwise the verified prefix
// extended autoregressively.
inline FinalHypothesis ssd_decode(const DraftHypothesis& draft, const VerifierBinding& v,
                                  const AcousticContext& ctx, const DecodeConfig& config) {
  config.validate();
  const Wiring wiring = ablation_mode(config);
  if (!wiring.run_draft) {
    return full_ar_decode(v.model, ctx, fallback_budget(config, ctx.declared_length), v.tokenizer);
  }

  const std::string draft_text = v.draft_vocab.detokenize(draft.tokens);
  if (wiring.accept_every_draft || (wiring.use_gate && draft.gate_passed)) {
    FinalHypothesis out;
    out.text = draft_text;
    out.source = Source::kCtcGate;
    try {
      out.tokens = retokenize(draft_text, v.tokenizer);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kTokenize) throw;
      out.note = e.what();
    }
    return out;
  }

  TokenSeq draft_ids;
  try {
    draft_ids = retokenize(draft_text, v.tokenizer);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kTokenize) throw;
    auto out = full_ar_decode(v.model, ctx, fallback_budget(config, draft.tokens.size()),
                              v.tokenizer);
    out.note = e.what();
    return out;
  }

  if (!wiring.run_verification) {
    return full_ar_decode(v.model, ctx, fallback_budget(config, draft_ids.size()), v.tokenizer);
  }
  return verify_and_continue(draft_ids, v, ctx, config);
}

}  // namespace ssd
