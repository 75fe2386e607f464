#pragma once

// Word error rate, inverse real-time factor, acceptance rates, call
// accounting and the two-proportion z-test.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ssd/error.hpp"
#include "ssd/verifier.hpp"

namespace ssd {

struct WerCounts {
  std::size_t sub = 0;
  std::size_t del = 0;
  std::size_t ins = 0;
  std::size_t ref_len = 0;

  std::size_t errors() const { return sub + del + ins; }
  double percent() const {
    return ref_len == 0 ? (errors() == 0 ? 0.0 : 100.0)
                        : 100.0 * static_cast<double>(errors()) / static_cast<double>(ref_len);
  }
  WerCounts& operator+=(const WerCounts& o) {
    sub += o.sub;
    del += o.del;
    ins += o.ins;
    ref_len += o.ref_len;
    return *this;
  }
  friend bool operator==(const WerCounts&, const WerCounts&) = default;
};

// Lowercase, then split on whitespace.
inline std::vector<std::string> normalize_words(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream in(lowered);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

// Minimal-edit alignment by dynamic programming. Backtrace prefers
// match/substitution, then deletion, then insertion.
template <typename T>
WerCounts wer(const std::vector<T>& ref, const std::vector<T>& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  WerCounts c;
  c.ref_len = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.sub;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.del;
      --i;
    } else {
      ++c.ins;
      --j;
    }
  }
  return c;
}

inline WerCounts wer(std::string_view reference, std::string_view hypothesis) {
  return wer(normalize_words(reference), normalize_words(hypothesis));
}

inline double rtfx(double total_audio_s, double total_wall_s) {
  if (!(total_wall_s > 0.0)) throw Error(ErrorKind::kInvalidInput, "wall time must be > 0");
  return total_audio_s / total_wall_s;
}

struct ZTest {
  double z = 0.0;
  double p_value = 1.0;
};

// Pooled two-proportion z-test with a two-sided p-value.
inline ZTest two_proportion_z(double errors_a, double trials_a, double errors_b, double trials_b) {
  if (!(trials_a > 0.0) || !(trials_b > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "trials must be > 0");
  }
  const double pa = errors_a / trials_a;
  const double pb = errors_b / trials_b;
  const double pooled = (errors_a + errors_b) / (trials_a + trials_b);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / trials_a + 1.0 / trials_b));
  ZTest t;
  if (se == 0.0) return t;
  t.z = (pa - pb) / se;
  t.p_value = std::erfc(std::abs(t.z) / std::sqrt(2.0));
  return t;
}

struct UtteranceRecord {
  std::string id;
  Source source = Source::kFullAr;
  std::size_t prefix_len = 0;
  TokenSeq tokens;
  std::string hypothesis;
  std::string reference;
  WerCounts wer;
  std::size_t verifier_calls = 0;
  std::size_t generated = 0;
  bool truncated = false;
  bool error = false;
  std::string message;
  double audio_s = 0.0;
  double cost_tokens = 0.0;
  double wall_time_s = 0.0;  // excluded from determinism checks
};

struct Aggregates {
  std::size_t utterances = 0;
  std::size_t errors = 0;
  std::size_t ctc_gate = 0;
  std::size_t llm_verified = 0;
  std::size_t fallback = 0;
  std::size_t full_ar = 0;
  WerCounts wer_counts;
  double wer = 0.0;            // micro average, percent
  double pct_c = 0.0;          // CTC gate acceptances / utterances
  double pct_l = 0.0;          // LLM acceptances / gate-rejected utterances
  double pct_l_overall = 0.0;  // LLM acceptances / utterances
  std::size_t verifier_calls = 0;
  double mean_calls = 0.0;
  double audio_s = 0.0;
  double cost_tokens = 0.0;
  double wall_time_s = 0.0;
  double rtfx = 0.0;  // 0 when no wall time was recorded
};

inline Aggregates aggregate(const std::vector<UtteranceRecord>& records) {
  Aggregates a;
  a.utterances = records.size();
  for (const auto& r : records) {
    if (r.error) {
      ++a.errors;
    } else {
      switch (r.source) {
        case Source::kCtcGate: ++a.ctc_gate; break;
        case Source::kLlmVerified: ++a.llm_verified; break;
        case Source::kFallback: ++a.fallback; break;
        case Source::kFullAr: ++a.full_ar; break;
      }
    }
    a.wer_counts += r.wer;
    a.verifier_calls += r.verifier_calls;
    a.audio_s += r.audio_s;
    a.cost_tokens += r.cost_tokens;
    a.wall_time_s += r.wall_time_s;
  }
  a.wer = a.wer_counts.percent();
  if (a.utterances > 0) {
    const auto n = static_cast<double>(a.utterances);
    a.pct_c = 100.0 * static_cast<double>(a.ctc_gate) / n;
    a.pct_l_overall = 100.0 * static_cast<double>(a.llm_verified) / n;
    a.mean_calls = static_cast<double>(a.verifier_calls) / n;
    const std::size_t past_gate = a.utterances - a.ctc_gate;
    a.pct_l = past_gate ? 100.0 * static_cast<double>(a.llm_verified) / static_cast<double>(past_gate) : 0.0;
  }
  a.rtfx = a.wall_time_s > 0.0 ? a.audio_s / a.wall_time_s : 0.0;
  return a;
}

struct PhaseStats {
  std::string phase;
  std::size_t utterances = 0;
  std::size_t batches = 0;
  std::size_t oversized_batches = 0;  // singleton batches over the token budget
  double wall_time_s = 0.0;
};

struct RunReport {
  std::string label;
  std::vector<UtteranceRecord> records;  // sorted by id
  std::vector<PhaseStats> phases;

  Aggregates aggregates() const { return aggregate(records); }

  const UtteranceRecord* find(std::string_view id) const {
    auto it = std::lower_bound(records.begin(), records.end(), id,
                               [](const UtteranceRecord& r, std::string_view k) { return r.id < k; });
    return it != records.end() && it->id == id ? &*it : nullptr;
  }
};

// Union of two partial reports; order-independent.
inline RunReport merge(RunReport a, const RunReport& b) {
  a.records.insert(a.records.end(), b.records.begin(), b.records.end());
  std::sort(a.records.begin(), a.records.end(),
            [](const UtteranceRecord& x, const UtteranceRecord& y) { return x.id < y.id; });
  for (std::size_t i = 1; i < a.records.size(); ++i) {
    if (a.records[i].id == a.records[i - 1].id) {
      throw Error(ErrorKind::kDuplicateId, "utterance '" + a.records[i].id + "' reported twice");
    }
  }
  if (a.label.empty()) a.label = b.label;
  return a;
}

// Hardware-independent speed proxy: full-AR verifier calls over SSD calls.
// Infinite when SSD made no calls.
inline double call_speedup(const RunReport& ssd_report, const RunReport& full_ar_report) {
  std::set<std::string> ids_a, ids_b;
  for (const auto& r : ssd_report.records) ids_a.insert(r.id);
  for (const auto& r : full_ar_report.records) ids_b.insert(r.id);
  if (ids_a != ids_b) throw Error(ErrorKind::kIdMismatch, "reports cover different utterances");
  const auto ssd_calls = static_cast<double>(ssd_report.aggregates().verifier_calls);
  const auto ar_calls = static_cast<double>(full_ar_report.aggregates().verifier_calls);
  if (ssd_calls == 0.0) return std::numeric_limits<double>::infinity();
  return ar_calls / ssd_calls;
}

// Unweighted mean of per-corpus WERs, as in cross-corpus "average" rows.
inline double macro_wer(const std::vector<Aggregates>& corpora) {
  if (corpora.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& a : corpora) sum += a.wer;
  return sum / static_cast<double>(corpora.size());
}

}  // namespace ssd
