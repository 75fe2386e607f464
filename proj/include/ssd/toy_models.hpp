#pragma once

// Deterministic synthetic draft/verifier models and a corpus generator.
//
// Every utterance is a pure function of (corpus seed, utterance index,
// params); the RNG is mt19937_64 with hand-rolled uniform mappings so the
// output is identical across standard library implementations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssd/ctc.hpp"
#include "ssd/error.hpp"
#include "ssd/models.hpp"
#include "ssd/tokenizer.hpp"
#include "ssd/verifier.hpp"

namespace ssd::toy {

inline constexpr double kFrameDurationS = 0.08;
// Adapter downsampling from draft frames to verifier context positions.
inline constexpr std::size_t kContextDownsample = 5;

struct DraftParams {
  double temperature = 0.1;        // softening of one-hot rows, > 0
  double blank_rate = 0.3;         // target fraction of blank frames
  double repeat_rate = 0.3;        // chance of each extra (2nd, 3rd) frame per token
  double label_noise = 0.03;       // chance a frame's dominant label is corrupted
  double confidence_jitter = 0.5;  // per-frame logit scale drawn from [1 - jitter, 1]
  double corrupt_margin = 0.8;     // true label's logit relative to the corrupting one

  void validate() const {
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!(temperature > 0.0)) throw Error(ErrorKind::kConfig, "temperature must be > 0");
    if (!unit(blank_rate) || !unit(repeat_rate) || !unit(label_noise) ||
        !unit(confidence_jitter) || !unit(corrupt_margin)) {
      throw Error(ErrorKind::kConfig, "draft rates must lie in [0, 1]");
    }
  }

  friend bool operator==(const DraftParams&, const DraftParams&) = default;
};

enum class DistractorProfile { kUniform, kGeometric };

inline std::string_view to_string(DistractorProfile p) {
  return p == DistractorProfile::kUniform ? "uniform" : "geometric";
}

inline DistractorProfile parse_distractor_profile(std::string_view s) {
  if (s == "uniform") return DistractorProfile::kUniform;
  if (s == "geometric") return DistractorProfile::kGeometric;
  throw Error(ErrorKind::kConfig, "unknown distractor profile '" + std::string(s) + "'");
}

struct VerifierParams {
  double fidelity = 0.9;  // mass on the reference continuation
  DistractorProfile distractor_profile = DistractorProfile::kUniform;
  double eos_boost = 0.5;  // end-of-sequence mass once the prefix left the reference
  // Fraction of in-reference steps where a biased distractor outranks the
  // reference token, which then keeps only bias_ref_mass.
  double bias_rate = 0.0;
  double bias_ref_mass = 0.35;

  void validate() const {
    if (!(fidelity > 0.0 && fidelity <= 1.0)) throw Error(ErrorKind::kConfig, "fidelity must lie in (0, 1]");
    if (!(eos_boost >= 0.0 && eos_boost <= 1.0)) throw Error(ErrorKind::kConfig, "eos_boost must lie in [0, 1]");
    if (!(bias_rate >= 0.0 && bias_rate <= 1.0)) throw Error(ErrorKind::kConfig, "bias_rate must lie in [0, 1]");
    if (!(bias_ref_mass >= 0.0 && bias_ref_mass <= fidelity)) {
      throw Error(ErrorKind::kConfig, "bias_ref_mass must lie in [0, fidelity]");
    }
  }

  friend bool operator==(const VerifierParams&, const VerifierParams&) = default;
};

struct CorpusSpec {
  std::uint64_t seed = 7;
  std::size_t n_utts = 100;
  std::size_t alphabet_size = 26;
  std::size_t min_len = 4;
  std::size_t max_len = 16;
  DraftParams draft;
  VerifierParams verifier;

  // Regime used by the benchmark suite: roughly 15-20% of utterances pass
  // the entropy gate at 0.7 nats and about half of the rest verify.
  static CorpusSpec tuned() {
    CorpusSpec s;
    s.seed = 2026;
    s.n_utts = 500;
    s.verifier.bias_rate = 0.01;
    return s;
  }

  void validate() const {
    if (n_utts < 1) throw Error(ErrorKind::kConfig, "n_utts must be >= 1");
    if (alphabet_size < 2) throw Error(ErrorKind::kConfig, "alphabet_size must be >= 2");
    if (min_len > max_len) throw Error(ErrorKind::kConfig, "empty length range");
    draft.validate();
    verifier.validate();
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

// Symbol for alphabet entry i: letters first, then "w<i>".
inline std::string alphabet_symbol(std::size_t i) {
  if (i < 26) return std::string(1, static_cast<char>('a' + i));
  return "w" + std::to_string(i);
}

inline std::vector<std::string> alphabet(std::size_t size) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < size; ++i) out.push_back(alphabet_symbol(i));
  return out;
}

// Draft vocabulary: blank at 0, alphabet entry i at i + 1.
inline Vocabulary draft_vocabulary(std::size_t alphabet_size) {
  return Vocabulary::with_leading_blank(alphabet(alphabet_size));
}

// Builds posteriors for `reference` (alphabet indices). Frames are laid out
// as 1-3 label frames per token with blank frames spread over the gaps, a
// blank always separating identical neighbours; then dominant labels are
// corrupted and one-hot rows softened by temperature.
inline FramePosteriors synthesize_posteriors(std::span<const TokenId> reference,
                                             std::size_t alphabet_size, const DraftParams& p,
                                             Rng& rng) {
  const std::size_t vocab = alphabet_size + 1;
  constexpr Label kBlank = 0;

  std::vector<std::size_t> frames_per_token;
  std::size_t label_frames = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    std::size_t n = 1 + (rng.bernoulli(p.repeat_rate) ? 1 : 0) + (rng.bernoulli(p.repeat_rate) ? 1 : 0);
    frames_per_token.push_back(n);
    label_frames += n;
  }

  LabelSeq truth;
  if (p.blank_rate >= 1.0) {
    truth.assign(label_frames, kBlank);
  } else {
    const auto blanks = static_cast<std::size_t>(
        std::llround(static_cast<double>(label_frames) * p.blank_rate / (1.0 - p.blank_rate)));
    std::vector<std::size_t> gap(reference.size() + 1, 0);
    for (std::size_t b = 0; b < blanks; ++b) ++gap[rng.below(gap.size())];
    for (std::size_t i = 1; i < reference.size(); ++i) {
      if (reference[i] == reference[i - 1] && gap[i] == 0) gap[i] = 1;
    }
    for (std::size_t i = 0; i <= reference.size(); ++i) {
      truth.insert(truth.end(), gap[i], kBlank);
      if (i < reference.size()) truth.insert(truth.end(), frames_per_token[i], reference[i] + 1);
    }
  }

  std::vector<float> data;
  data.reserve(truth.size() * vocab);
  std::vector<double> logits(vocab);
  for (Label label : truth) {
    // Fixed number of draws per frame, so raising label_noise only adds
    // corrupted frames and leaves every other draw unchanged.
    const double scale = 1.0 - p.confidence_jitter * rng.uniform01();
    // An all-blank layout stays all blank.
    const bool corrupt = rng.bernoulli(p.label_noise) && p.blank_rate < 1.0;
    auto wrong = static_cast<Label>(rng.below(vocab - 1));
    if (wrong >= label) ++wrong;
    std::fill(logits.begin(), logits.end(), 0.0);
    if (corrupt) {
      logits[static_cast<std::size_t>(wrong)] = scale / p.temperature;
      logits[static_cast<std::size_t>(label)] = p.corrupt_margin * scale / p.temperature;
    } else {
      logits[static_cast<std::size_t>(label)] = scale / p.temperature;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - top);
      z += l;
    }
    for (double l : logits) data.push_back(static_cast<float>(l / z));
  }
  return FramePosteriors(truth.size(), vocab, std::move(data), kFrameDurationS);
}

// Verifier that knows each utterance's reference. score_next builds the full
// distribution explicitly; score_teacher_forced evaluates the same law in
// closed form per position, so their agreement is a genuine cross-check.
class ToyVerifier final : public VerifierModel {
 public:
  ToyVerifier(VerifierParams params, std::size_t alphabet_size)
      : params_(params), alphabet_size_(alphabet_size) {
    params_.validate();
  }

  void add_reference(std::uint64_t handle, TokenSeq reference) {
    references_[handle] = std::move(reference);
  }

  const VerifierParams& params() const { return params_; }
  std::size_t vocab_size() const override { return alphabet_size_ + 1; }
  TokenId eos_id() const override { return static_cast<TokenId>(alphabet_size_); }

  // Whether in-reference step `step` of `handle` carries the biased
  // distractor, and which token it is.
  bool biased(std::uint64_t handle, std::size_t step) const {
    if (params_.bias_rate <= 0.0) return false;
    const std::uint64_t h = splitmix64(splitmix64(handle) ^ (step * 0x2545F4914F6CDD1DULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53 < params_.bias_rate;
  }
  TokenId bias_token(TokenId reference_token) const {
    return static_cast<TokenId>((static_cast<std::size_t>(reference_token) + 1) % alphabet_size_);
  }

  std::vector<double> score_next(const AcousticContext& ctx,
                                 std::span<const TokenId> prefix) const override {
    const TokenSeq& ref = reference(ctx);
    const std::size_t v = vocab_size();
    std::vector<double> dist(v, 0.0);

    const bool on_reference =
        prefix.size() <= ref.size() && std::equal(prefix.begin(), prefix.end(), ref.begin());
    if (!on_reference) {
      for (std::size_t y = 0; y < alphabet_size_; ++y) {
        dist[y] = (1.0 - params_.eos_boost) / static_cast<double>(alphabet_size_);
      }
      dist[static_cast<std::size_t>(eos_id())] = params_.eos_boost;
      return dist;
    }

    const std::size_t step = prefix.size();
    const TokenId target = step < ref.size() ? ref[step] : eos_id();
    const double residual = 1.0 - params_.fidelity;
    std::vector<double> weights(v, 0.0);
    double total = 0.0;
    for (std::size_t y = 0; y < v; ++y) {
      if (static_cast<TokenId>(y) == target) continue;
      const std::size_t d = (y + v - static_cast<std::size_t>(target)) % v;
      weights[y] = params_.distractor_profile == DistractorProfile::kUniform
                       ? 1.0
                       : std::ldexp(1.0, -static_cast<int>(d));
      total += weights[y];
    }
    for (std::size_t y = 0; y < v; ++y) dist[y] = total > 0.0 ? residual * weights[y] / total : 0.0;
    dist[static_cast<std::size_t>(target)] = params_.fidelity;

    if (step < ref.size() && biased(ctx.handle, step)) {
      const double moved = params_.fidelity - params_.bias_ref_mass;
      dist[static_cast<std::size_t>(target)] -= moved;
      dist[static_cast<std::size_t>(bias_token(target))] += moved;
    }
    return dist;
  }

  std::vector<double> score_teacher_forced(const AcousticContext& ctx,
                                           std::span<const TokenId> tokens) const override {
    const TokenSeq& ref = reference(ctx);
    const std::size_t v = vocab_size();
    const double residual = 1.0 - params_.fidelity;
    // Geometric weights 2^-d for d = 1..v-1 sum to 1 - 2^-(v-1).
    const double geometric_norm = 1.0 - std::ldexp(1.0, -static_cast<int>(v - 1));

    std::size_t lcp = 0;
    while (lcp < tokens.size() && lcp < ref.size() && tokens[lcp] == ref[lcp]) ++lcp;

    std::vector<double> out(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const TokenId y = tokens[i];
      if (y < 0 || static_cast<std::size_t>(y) >= v) {
        throw Error(ErrorKind::kModel, "token " + std::to_string(y) + " outside verifier vocabulary");
      }
      if (i > lcp) {
        out[i] = y == eos_id() ? params_.eos_boost
                               : (1.0 - params_.eos_boost) / static_cast<double>(alphabet_size_);
        continue;
      }
      const TokenId target = i < ref.size() ? ref[i] : eos_id();
      if (y == target) {
        out[i] = i < ref.size() && biased(ctx.handle, i) ? params_.bias_ref_mass : params_.fidelity;
        continue;
      }
      const std::size_t d = (static_cast<std::size_t>(y) + v - static_cast<std::size_t>(target)) % v;
      double p = params_.distractor_profile == DistractorProfile::kUniform
                     ? residual / static_cast<double>(v - 1)
                     : residual * std::ldexp(1.0, -static_cast<int>(d)) / geometric_norm;
      if (i < ref.size() && biased(ctx.handle, i) && y == bias_token(target)) {
        p += params_.fidelity - params_.bias_ref_mass;
      }
      out[i] = p;
    }
    return out;
  }

 private:
  const TokenSeq& reference(const AcousticContext& ctx) const {
    auto it = references_.find(ctx.handle);
    if (it == references_.end()) {
      throw Error(ErrorKind::kModel, "unknown context handle " + std::to_string(ctx.handle));
    }
    return it->second;
  }

  VerifierParams params_;
  std::size_t alphabet_size_;
  std::unordered_map<std::uint64_t, TokenSeq> references_;
};

struct SyntheticUtterance {
  std::string id;
  std::size_t index = 0;  // position in the generating corpus
  TokenSeq reference;     // alphabet indices == verifier token ids
  std::string reference_text;
  FramePosteriors posteriors;
  AcousticContext context;
  double audio_duration_s = 0.0;
};

inline std::string utterance_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "utt%06zu", index);
  return buf;
}

// Regenerates utterance `index` of the corpus described by `spec`.
inline SyntheticUtterance make_utterance(const CorpusSpec& spec, std::size_t index) {
  Rng rng(splitmix64(spec.seed ^ splitmix64(index)));
  SyntheticUtterance u;
  u.id = utterance_id(index);
  u.index = index;
  const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
  for (std::size_t i = 0; i < len; ++i) u.reference.push_back(static_cast<TokenId>(rng.below(spec.alphabet_size)));
  for (std::size_t i = 0; i < len; ++i) {
    if (i) u.reference_text.push_back(' ');
    u.reference_text += alphabet_symbol(static_cast<std::size_t>(u.reference[i]));
  }
  u.posteriors = synthesize_posteriors(u.reference, spec.alphabet_size, spec.draft, rng);
  u.context.handle = index;
  u.context.declared_length =
      (u.posteriors.num_frames() + kContextDownsample - 1) / kContextDownsample;
  u.audio_duration_s = u.posteriors.duration_s();
  return u;
}

// A corpus plus the draft/verifier models bound to its contexts.
struct Corpus {
  CorpusSpec spec;
  std::vector<SyntheticUtterance> utterances;
  Vocabulary draft_vocab;
  WordTokenizer tokenizer;
  std::shared_ptr<PosteriorTable> draft_model;
  std::shared_ptr<ToyVerifier> verifier;

  VerifierBinding binding() const { return VerifierBinding{*verifier, tokenizer, draft_vocab}; }

  std::vector<Utterance> inputs() const {
    std::vector<Utterance> out;
    out.reserve(utterances.size());
    for (const auto& u : utterances) {
      out.push_back({u.id, u.reference_text, u.context, u.audio_duration_s, u.posteriors.num_frames()});
    }
    return out;
  }
};

// Binds already-built utterances (e.g. loaded from disk) to fresh models.
inline Corpus bind_corpus(const CorpusSpec& spec, std::vector<SyntheticUtterance> utts) {
  Corpus c{spec,
           std::move(utts),
           draft_vocabulary(spec.alphabet_size),
           WordTokenizer(alphabet(spec.alphabet_size)),
           std::make_shared<PosteriorTable>(kFrameDurationS),
           std::make_shared<ToyVerifier>(spec.verifier, spec.alphabet_size)};
  for (const auto& u : c.utterances) {
    c.draft_model->add(u.context.handle, u.posteriors);
    c.verifier->add_reference(u.context.handle, u.reference);
  }
  return c;
}

inline Corpus make_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<SyntheticUtterance> utts;
  utts.reserve(spec.n_utts);
  for (std::size_t i = 0; i < spec.n_utts; ++i) utts.push_back(make_utterance(spec, i));
  return bind_corpus(spec, std::move(utts));
}

}  // namespace ssd::toy
