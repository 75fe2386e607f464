#pragma once

// Three-phase batched execution: (1) draft decoding and entropy gating,
// (2) single-pass verification of gate failures, (3) autoregressive
// fallback for verification failures. Phases are barriers; batches within a
// phase may run concurrently. Utterances waiting between phases live in a
// StagingStore.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "ssd/config.hpp"
#include "ssd/ctc.hpp"
#include "ssd/error.hpp"
#include "ssd/metrics.hpp"
#include "ssd/models.hpp"
#include "ssd/verifier.hpp"

namespace ssd {

enum class Phase { kDraft, kVerify, kFallback };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kDraft: return "draft";
    case Phase::kVerify: return "verify";
    case Phase::kFallback: return "fallback";
  }
  return "?";
}

struct BatchPlan {
  Phase phase = Phase::kDraft;
  std::size_t budget_tokens = kUnboundedBudget;
  std::vector<std::vector<std::size_t>> batches;  // indices into the planned items
  std::vector<bool> oversized;                    // per batch: lone item above budget
};

// Sorts items by cost descending (stable) and fills batches in order,
// opening a new batch whenever the next item would exceed the budget.
inline BatchPlan plan_batches(std::span<const std::size_t> costs, Phase phase,
                              std::size_t budget_tokens) {
  if (budget_tokens == 0) throw Error(ErrorKind::kConfig, "budget_tokens must be > 0");
  std::vector<std::size_t> order(costs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return costs[a] > costs[b]; });

  BatchPlan plan;
  plan.phase = phase;
  plan.budget_tokens = budget_tokens;
  std::size_t filled = 0;
  for (std::size_t idx : order) {
    const std::size_t c = costs[idx];
    if (plan.batches.empty() || filled + c > budget_tokens || filled + c < filled) {
      plan.batches.push_back({});
      plan.oversized.push_back(false);
      filled = 0;
    }
    plan.batches.back().push_back(idx);
    filled += c;
    if (plan.batches.back().size() == 1 && c > budget_tokens) plan.oversized.back() = true;
  }
  return plan;
}

// Verifier cost in scored positions. When logits are computed only at the
// verification positions, a verification call costs the draft length;
// otherwise the acoustic context is paid for as well.
struct CostModel {
  bool logits_at_verification_positions_only = true;

  double verification_cost(std::size_t context_len, std::size_t positions) const {
    const std::size_t scored =
        logits_at_verification_positions_only ? positions : context_len + positions;
    return static_cast<double>(std::max<std::size_t>(1, scored));
  }
  double ar_step_cost() const { return 1.0; }
};

// Per-utterance state carried between phases.
struct StagedState {
  std::string id;
  AcousticContext context;
  LabelSeq draft;     // collapsed draft labels
  TokenSeq draft_ids;  // draft in verifier token space
  std::vector<double> likelihoods;
  std::size_t verified_prefix = 0;
  bool from_empty = false;  // fallback restarts from scratch (full AR)
  std::size_t max_new_tokens = 0;
  std::size_t calls = 0;
  double cost_tokens = 0.0;
  double wall_time_s = 0.0;
  std::string note;

  friend bool operator==(const StagedState&, const StagedState&) = default;
};

inline void to_json(nlohmann::json& j, const StagedState& s) {
  j = nlohmann::json{{"id", s.id},
                     {"handle", s.context.handle},
                     {"declared_length", s.context.declared_length},
                     {"draft", s.draft},
                     {"draft_ids", s.draft_ids},
                     {"likelihoods", s.likelihoods},
                     {"verified_prefix", s.verified_prefix},
                     {"from_empty", s.from_empty},
                     {"max_new_tokens", s.max_new_tokens},
                     {"calls", s.calls},
                     {"cost_tokens", s.cost_tokens},
                     {"wall_time_s", s.wall_time_s},
                     {"note", s.note}};
}

inline void from_json(const nlohmann::json& j, StagedState& s) {
  j.at("id").get_to(s.id);
  j.at("handle").get_to(s.context.handle);
  j.at("declared_length").get_to(s.context.declared_length);
  j.at("draft").get_to(s.draft);
  j.at("draft_ids").get_to(s.draft_ids);
  j.at("likelihoods").get_to(s.likelihoods);
  j.at("verified_prefix").get_to(s.verified_prefix);
  j.at("from_empty").get_to(s.from_empty);
  j.at("max_new_tokens").get_to(s.max_new_tokens);
  j.at("calls").get_to(s.calls);
  j.at("cost_tokens").get_to(s.cost_tokens);
  j.at("wall_time_s").get_to(s.wall_time_s);
  j.at("note").get_to(s.note);
}

class StagingStore {
 public:
  virtual ~StagingStore() = default;
  virtual void stash(StagedState state) = 0;
  // Removes and returns the state for `id`.
  virtual StagedState take(const std::string& id) = 0;
  virtual bool contains(const std::string& id) const = 0;
  virtual std::size_t size() const = 0;
};

class InMemoryStagingStore final : public StagingStore {
 public:
  void stash(StagedState state) override {
    std::lock_guard lock(mu_);
    auto id = state.id;
    states_.insert_or_assign(std::move(id), std::move(state));
  }
  StagedState take(const std::string& id) override {
    std::lock_guard lock(mu_);
    auto it = states_.find(id);
    if (it == states_.end()) throw Error(ErrorKind::kInvalidInput, "nothing staged for '" + id + "'");
    StagedState s = std::move(it->second);
    states_.erase(it);
    return s;
  }
  bool contains(const std::string& id) const override {
    std::lock_guard lock(mu_);
    return states_.count(id) > 0;
  }
  std::size_t size() const override {
    std::lock_guard lock(mu_);
    return states_.size();
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, StagedState> states_;
};

// Offloads staged state to one JSON file per utterance under `dir`.
class DiskStagingStore final : public StagingStore {
 public:
  explicit DiskStagingStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create staging dir " + dir_.string());
  }

  void stash(StagedState state) override {
    std::lock_guard lock(mu_);
    std::ofstream out(path_for(state.id), std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write staging file for '" + state.id + "'");
    out << nlohmann::json(state).dump();
    ids_.insert(state.id);
  }
  StagedState take(const std::string& id) override {
    std::lock_guard lock(mu_);
    if (!ids_.count(id)) throw Error(ErrorKind::kInvalidInput, "nothing staged for '" + id + "'");
    const auto path = path_for(id);
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kIo, "cannot read staging file " + path.string());
    StagedState s = nlohmann::json::parse(in).get<StagedState>();
    in.close();
    std::filesystem::remove(path);
    ids_.erase(id);
    return s;
  }
  bool contains(const std::string& id) const override {
    std::lock_guard lock(mu_);
    return ids_.count(id) > 0;
  }
  std::size_t size() const override {
    std::lock_guard lock(mu_);
    return ids_.size();
  }

 private:
  std::filesystem::path path_for(const std::string& id) const {
    // Ids are hex-encoded so arbitrary strings map to safe file names.
    static constexpr char kHex[] = "0123456789abcdef";
    std::string name;
    for (unsigned char c : id) {
      name.push_back(kHex[c >> 4]);
      name.push_back(kHex[c & 15]);
    }
    return dir_ / (name + ".json");
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::set<std::string> ids_;
};

namespace detail {

// Runs fn(batch_index) for every batch on up to `workers` threads.
template <typename Fn>
void for_each_batch(std::size_t num_batches, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || num_batches <= 1) {
    for (std::size_t b = 0; b < num_batches; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  const std::size_t n = std::min(workers, num_batches);
  for (std::size_t w = 0; w < n; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < num_batches; b = next++) fn(b);
    });
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Decodes every utterance; each yields exactly one record. Model failures
// become error records and never abort the run.
inline RunReport run_pipeline(std::span<const Utterance> utterances, const DraftModel& draft_model,
                              const VerifierBinding& binding, const DecodeConfig& config,
                              StagingStore* staging = nullptr) {
  config.validate();
  const Wiring wiring = ablation_mode(config);
  const CostModel cost{config.logits_at_verification_positions_only};

  std::unique_ptr<SerializedVerifier> serialized;
  const VerifierModel* model = &binding.model;
  if (config.workers > 1 && !binding.model.concurrent_safe()) {
    serialized = std::make_unique<SerializedVerifier>(binding.model);
    model = serialized.get();
  }

  InMemoryStagingStore default_store;
  StagingStore& store = staging ? *staging : default_store;

  const std::size_t n = utterances.size();
  std::vector<std::optional<UtteranceRecord>> results(n);
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < n; ++i) {
    if (!position.emplace(utterances[i].id, i).second) {
      throw Error(ErrorKind::kDuplicateId, "duplicate utterance id '" + utterances[i].id + "'");
    }
  }

  RunReport report;
  report.label = std::string(to_string(config.mode));

  auto finalize = [&](std::size_t i, FinalHypothesis hyp, double cost_tokens, double wall) {
    const Utterance& u = utterances[i];
    UtteranceRecord r;
    r.id = u.id;
    r.source = hyp.source;
    r.prefix_len = hyp.prefix_len;
    r.tokens = std::move(hyp.tokens);
    r.hypothesis = std::move(hyp.text);
    r.reference = u.reference;
    r.wer = wer(u.reference, r.hypothesis);
    r.verifier_calls = hyp.verifier_calls;
    r.generated = hyp.generated;
    r.truncated = hyp.truncated;
    r.message = std::move(hyp.note);
    r.audio_s = u.audio_duration_s;
    r.cost_tokens = cost_tokens;
    r.wall_time_s = wall;
    results[i] = std::move(r);
  };
  auto fail = [&](std::size_t i, const std::exception& e, std::size_t calls, double cost_tokens,
                  double wall) {
    const Utterance& u = utterances[i];
    UtteranceRecord r;
    r.id = u.id;
    r.error = true;
    r.message = e.what();
    r.reference = u.reference;
    r.wer = wer(u.reference, "");
    r.verifier_calls = calls;
    r.audio_s = u.audio_duration_s;
    r.cost_tokens = cost_tokens;
    r.wall_time_s = wall;
    results[i] = std::move(r);
  };

  auto run_phase = [&](Phase phase, const std::vector<std::size_t>& members,
                       const std::vector<std::size_t>& costs, auto&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchPlan plan = plan_batches(costs, phase, config.budget_tokens);
    detail::for_each_batch(plan.batches.size(), config.workers, [&](std::size_t b) {
      for (std::size_t k : plan.batches[b]) body(members[k]);
    });
    PhaseStats stats;
    stats.phase = std::string(to_string(phase));
    stats.utterances = members.size();
    stats.batches = plan.batches.size();
    stats.oversized_batches =
        static_cast<std::size_t>(std::count(plan.oversized.begin(), plan.oversized.end(), true));
    stats.wall_time_s = detail::seconds_since(t0);
    report.phases.push_back(stats);
  };

  // Phase 1: draft decoding and entropy gate.
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (wiring.run_draft) {
    std::vector<std::size_t> frame_costs;
    for (const auto& u : utterances) frame_costs.push_back(std::max<std::size_t>(1, u.num_frames));
    run_phase(Phase::kDraft, all, frame_costs, [&](std::size_t i) {
      const Utterance& u = utterances[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const FramePosteriors post = draft_model.posteriors(u.context);
        const DraftHypothesis draft = decode_draft(post, config.tau_ctc, binding.draft_vocab);
        const std::string text = binding.draft_vocab.detokenize(draft.tokens);
        if (wiring.accept_every_draft || (wiring.use_gate && draft.gate_passed)) {
          FinalHypothesis hyp;
          hyp.text = text;
          hyp.source = Source::kCtcGate;
          try {
            hyp.tokens = retokenize(text, binding.tokenizer);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::kTokenize) throw;
            hyp.note = e.what();
          }
          finalize(i, std::move(hyp), 0.0, detail::seconds_since(t0));
          return;
        }
        StagedState s;
        s.id = u.id;
        s.context = u.context;
        s.draft = draft.tokens;
        try {
          s.draft_ids = retokenize(text, binding.tokenizer);
          s.from_empty = !wiring.run_verification;
          s.max_new_tokens = fallback_budget(config, s.draft_ids.size());
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kTokenize) throw;
          s.from_empty = true;
          s.max_new_tokens = fallback_budget(config, draft.tokens.size());
          s.note = e.what();
        }
        s.wall_time_s = detail::seconds_since(t0);
        store.stash(std::move(s));
      } catch (const std::exception& e) {
        fail(i, e, 0, 0.0, detail::seconds_since(t0));
      }
    });
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      StagedState s;
      s.id = utterances[i].id;
      s.context = utterances[i].context;
      s.from_empty = true;
      s.max_new_tokens = fallback_budget(config, s.context.declared_length);
      store.stash(std::move(s));
    }
  }

  // Phase 2: one teacher-forced pass per remaining utterance.
  std::vector<std::size_t> to_verify, verify_costs;
  if (wiring.run_verification) {
    for (std::size_t i = 0; i < n; ++i) {
      if (results[i] || !store.contains(utterances[i].id)) continue;
      StagedState s = store.take(utterances[i].id);
      const bool verify_it = !s.from_empty;
      const std::size_t c = s.context.declared_length + s.draft_ids.size();
      store.stash(std::move(s));
      if (verify_it) {
        to_verify.push_back(i);
        verify_costs.push_back(std::max<std::size_t>(1, c));
      }
    }
    run_phase(Phase::kVerify, to_verify, verify_costs, [&](std::size_t i) {
      const auto t0 = std::chrono::steady_clock::now();
      StagedState s = store.take(utterances[i].id);
      try {
        VerificationOutcome outcome = verify_draft(*model, s.context, s.draft_ids, config.tau_slm);
        s.calls += 1;
        s.cost_tokens += cost.verification_cost(s.context.declared_length, s.draft_ids.size());
        s.wall_time_s += detail::seconds_since(t0);
        if (outcome.accepted()) {
          FinalHypothesis hyp;
          hyp.tokens = s.draft_ids;
          hyp.text = binding.tokenizer.decode(hyp.tokens);
          hyp.source = Source::kLlmVerified;
          hyp.verifier_calls = s.calls;
          finalize(i, std::move(hyp), s.cost_tokens, s.wall_time_s);
          return;
        }
        s.verified_prefix = outcome.verified_prefix();
        s.likelihoods = std::move(outcome.likelihoods);
        store.stash(std::move(s));
      } catch (const std::exception& e) {
        fail(i, e, s.calls, s.cost_tokens, s.wall_time_s + detail::seconds_since(t0));
      }
    });
  }

  // Phase 3: autoregressive fallback, re-batched by prefix + generation bound.
  std::vector<std::size_t> to_continue, continue_costs;
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i] || !store.contains(utterances[i].id)) continue;
    StagedState s = store.take(utterances[i].id);
    to_continue.push_back(i);
    continue_costs.push_back(std::max<std::size_t>(1, s.verified_prefix + s.max_new_tokens));
    store.stash(std::move(s));
  }
  run_phase(Phase::kFallback, to_continue, continue_costs, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    StagedState s = store.take(utterances[i].id);
    try {
      FinalHypothesis hyp;
      if (s.from_empty) {
        hyp = full_ar_decode(*model, s.context, s.max_new_tokens, binding.tokenizer);
        hyp.note = s.note;
      } else {
        TokenSeq prefix(s.draft_ids.begin(),
                        s.draft_ids.begin() + static_cast<std::ptrdiff_t>(s.verified_prefix));
        Continuation cont = ar_continue(*model, s.context, prefix, s.max_new_tokens);
        hyp.tokens = std::move(prefix);
        hyp.tokens.insert(hyp.tokens.end(), cont.tokens.begin(), cont.tokens.end());
        hyp.text = binding.tokenizer.decode(hyp.tokens);
        hyp.source = Source::kFallback;
        hyp.prefix_len = s.verified_prefix;
        hyp.verifier_calls = s.calls + cont.calls;
        hyp.generated = cont.calls;
        hyp.truncated = cont.truncated;
      }
      const double cost_tokens = s.cost_tokens + cost.ar_step_cost() * static_cast<double>(hyp.generated);
      finalize(i, std::move(hyp), cost_tokens, s.wall_time_s + detail::seconds_since(t0));
    } catch (const std::exception& e) {
      fail(i, e, s.calls, s.cost_tokens, s.wall_time_s + detail::seconds_since(t0));
    }
  });

  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i]) {
      fail(i, Error(ErrorKind::kModel, "utterance was never finalized"), 0, 0.0, 0.0);
    }
    report.records.push_back(std::move(*results[i]));
  }
  std::sort(report.records.begin(), report.records.end(),
            [](const UtteranceRecord& a, const UtteranceRecord& b) { return a.id < b.id; });
  return report;
}

}  // namespace ssd
