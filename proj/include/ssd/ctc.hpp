#pragma once

// Draft-side decoding over CTC frame posteriors: greedy alignment, the
// collapse mapping (merge repeats, then drop blanks), frame entropies and
// the entropy acceptance gate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ssd/error.hpp"

namespace ssd {

// Index into the augmented (tokens + blank) draft vocabulary.
using Label = std::int32_t;
using LabelSeq = std::vector<Label>;

// Entropy thresholds are in nats. The sentinels are used by the CLI's
// "always"/"never" spellings.
inline constexpr double kGateAlways = std::numeric_limits<double>::infinity();
inline constexpr double kGateNever = -std::numeric_limits<double>::infinity();

class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> symbols, Label blank_id)
      : symbols_(std::move(symbols)), blank_id_(blank_id) {
    if (symbols_.size() < 2) {
      throw Error(ErrorKind::kInvalidInput, "vocabulary needs at least one token plus blank");
    }
    if (blank_id_ < 0 || static_cast<std::size_t>(blank_id_) >= symbols_.size()) {
      throw Error(ErrorKind::kInvalidInput, "blank id out of range");
    }
    std::unordered_set<std::string> seen;
    for (const auto& s : symbols_) {
      if (!seen.insert(s).second) {
        throw Error(ErrorKind::kInvalidInput, "duplicate vocabulary symbol '" + s + "'");
      }
    }
  }

  // Blank at index 0 followed by the given tokens.
  static Vocabulary with_leading_blank(const std::vector<std::string>& tokens,
                                       std::string blank_symbol = "<b>") {
    std::vector<std::string> symbols;
    symbols.reserve(tokens.size() + 1);
    symbols.push_back(std::move(blank_symbol));
    symbols.insert(symbols.end(), tokens.begin(), tokens.end());
    return Vocabulary(std::move(symbols), 0);
  }

  std::size_t size() const noexcept { return symbols_.size(); }
  Label blank_id() const noexcept { return blank_id_; }
  const std::string& symbol(Label id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& symbols() const noexcept { return symbols_; }
  bool contains(Label id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < symbols_.size();
  }

  // Renders a collapsed label sequence as text, symbols joined by `separator`.
  std::string detokenize(std::span<const Label> labels, std::string_view separator = " ") const {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i) out.append(separator);
      out.append(symbol(labels[i]));
    }
    return out;
  }

 private:
  std::vector<std::string> symbols_;
  Label blank_id_;
};

// T x V row-major matrix of per-frame probabilities, stored as float32 like
// a real encoder output.
class FramePosteriors {
 public:
  FramePosteriors() = default;

  FramePosteriors(std::size_t num_frames, std::size_t vocab_size, std::vector<float> data,
                  double frame_duration_s)
      : num_frames_(num_frames),
        vocab_size_(vocab_size),
        data_(std::move(data)),
        frame_duration_s_(frame_duration_s) {
    if (data_.size() != num_frames_ * vocab_size_) {
      throw Error(ErrorKind::kInvalidInput, "posterior payload does not match T x V");
    }
  }

  static FramePosteriors from_rows(const std::vector<std::vector<double>>& rows,
                                   double frame_duration_s = 0.08) {
    const std::size_t v = rows.empty() ? 0 : rows.front().size();
    std::vector<float> data;
    data.reserve(rows.size() * v);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].size() != v) {
        throw Error(ErrorKind::kInvalidInput,
                    "row " + std::to_string(t) + " has length " + std::to_string(rows[t].size()) +
                        ", expected " + std::to_string(v));
      }
      for (double p : rows[t]) data.push_back(static_cast<float>(p));
    }
    return FramePosteriors(rows.size(), v, std::move(data), frame_duration_s);
  }

  std::size_t num_frames() const noexcept { return num_frames_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  double frame_duration_s() const noexcept { return frame_duration_s_; }
  double duration_s() const noexcept { return frame_duration_s_ * static_cast<double>(num_frames_); }
  const std::vector<float>& data() const noexcept { return data_; }

  std::span<const float> row(std::size_t t) const {
    return std::span<const float>(data_).subspan(t * vocab_size_, vocab_size_);
  }

  // Checks every row is a distribution: entries finite and in [0, 1], sum
  // within `tolerance` of 1. Returns the first offending row or -1.
  std::ptrdiff_t first_invalid_row(double tolerance = 1e-6) const {
    for (std::size_t t = 0; t < num_frames_; ++t) {
      double sum = 0.0;
      for (float p : row(t)) {
        if (!std::isfinite(p) || p < 0.0f || p > 1.0f) return static_cast<std::ptrdiff_t>(t);
        sum += p;
      }
      if (std::abs(sum - 1.0) > tolerance) return static_cast<std::ptrdiff_t>(t);
    }
    return -1;
  }

  void validate(double tolerance = 1e-6) const {
    if (auto t = first_invalid_row(tolerance); t >= 0) {
      throw Error(ErrorKind::kInvalidInput, "row " + std::to_string(t) + " is not a distribution");
    }
  }

  friend bool operator==(const FramePosteriors&, const FramePosteriors&) = default;

 private:
  std::size_t num_frames_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<float> data_;
  double frame_duration_s_ = 0.08;
};

struct AlignmentPath {
  LabelSeq labels;
};

struct DraftHypothesis {
  LabelSeq tokens;               // collapsed, blank-free
  std::vector<double> entropies;  // nats, one per frame
  bool gate_passed = false;
};

// Per-frame argmax; ties go to the lowest index.
inline AlignmentPath greedy_alignment(const FramePosteriors& post) {
  AlignmentPath path;
  path.labels.reserve(post.num_frames());
  for (std::size_t t = 0; t < post.num_frames(); ++t) {
    auto row = post.row(t);
    if (row.empty()) throw Error(ErrorKind::kInvalidInput, "empty posterior row");
    Label best = 0;
    for (std::size_t a = 0; a < row.size(); ++a) {
      if (std::isnan(row[a])) {
        throw Error(ErrorKind::kInvalidInput, "NaN in posterior row " + std::to_string(t));
      }
      if (row[a] > row[static_cast<std::size_t>(best)]) best = static_cast<Label>(a);
    }
    path.labels.push_back(best);
  }
  return path;
}

// Merges runs of identical labels first, then deletes blanks. The order
// matters: [a, blank, a] -> [a, a].
inline LabelSeq collapse(std::span<const Label> path, const Vocabulary& vocab) {
  LabelSeq out;
  bool have_prev = false;
  Label prev = 0;
  for (Label a : path) {
    if (!vocab.contains(a)) {
      throw Error(ErrorKind::kInvalidInput, "label " + std::to_string(a) + " outside vocabulary");
    }
    if (have_prev && a == prev) continue;
    have_prev = true;
    prev = a;
    if (a != vocab.blank_id()) out.push_back(a);
  }
  return out;
}

inline LabelSeq collapse(const AlignmentPath& path, const Vocabulary& vocab) {
  return collapse(std::span<const Label>(path.labels), vocab);
}

inline constexpr double kLogClampFloor = 1e-12;

// Shannon entropy (nats) of a single row; 0 log 0 is taken as 0.
inline double row_entropy(std::span<const float> row) {
  double h = 0.0;
  for (float pf : row) {
    const double p = pf;
    if (p < 0.0 || std::isnan(p)) throw Error(ErrorKind::kInvalidInput, "negative probability");
    if (p == 0.0) continue;
    h -= p * std::log(std::max(p, kLogClampFloor));
  }
  const double upper = std::log(static_cast<double>(row.size()));
  return std::clamp(h, 0.0, upper);
}

inline std::vector<double> frame_entropies(const FramePosteriors& post) {
  std::vector<double> out;
  out.reserve(post.num_frames());
  for (std::size_t t = 0; t < post.num_frames(); ++t) out.push_back(row_entropy(post.row(t)));
  return out;
}

// True iff every entropy is strictly below tau. An empty vector passes,
// except under the kGateNever sentinel which rejects unconditionally.
inline bool entropy_gate(std::span<const double> entropies, double tau_ctc) {
  if (tau_ctc == kGateNever) return false;
  return std::all_of(entropies.begin(), entropies.end(), [&](double e) { return e < tau_ctc; });
}

inline DraftHypothesis decode_draft(const FramePosteriors& post, double tau_ctc,
                                    const Vocabulary& vocab) {
  if (post.num_frames() > 0 && post.vocab_size() != vocab.size()) {
    throw Error(ErrorKind::kInvalidInput, "posterior width " + std::to_string(post.vocab_size()) +
                                              " != vocabulary size " + std::to_string(vocab.size()));
  }
  DraftHypothesis draft;
  draft.tokens = collapse(greedy_alignment(post), vocab);
  draft.entropies = frame_entropies(post);
  draft.gate_passed = entropy_gate(draft.entropies, tau_ctc);
  return draft;
}

}  // namespace ssd
