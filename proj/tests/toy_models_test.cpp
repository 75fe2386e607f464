#include "ssd/toy_models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

namespace ssd::toy {
namespace {

CorpusSpec Small(std::size_t n = 60) {
  CorpusSpec s;
  s.n_utts = n;
  return s;
}

double MeanEntropy(const Corpus& c) {
  double sum = 0.0;
  std::size_t frames = 0;
  for (const auto& u : c.utterances) {
    for (double h : frame_entropies(u.posteriors)) sum += h;
    frames += u.posteriors.num_frames();
  }
  return sum / static_cast<double>(frames);
}

LabelSeq ReferenceLabels(const SyntheticUtterance& u) {
  LabelSeq out;
  for (TokenId t : u.reference) out.push_back(t + 1);
  return out;
}

TEST(ToyCorpusTest, Deterministic) {
  const auto a = make_corpus(Small());
  const auto b = make_corpus(Small());
  ASSERT_EQ(a.utterances.size(), b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    EXPECT_EQ(a.utterances[i].reference, b.utterances[i].reference);
    EXPECT_EQ(a.utterances[i].posteriors, b.utterances[i].posteriors);
    EXPECT_EQ(a.utterances[i].id, b.utterances[i].id);
  }
  auto other = Small();
  other.seed = 8;
  EXPECT_NE(make_corpus(other).utterances[0].posteriors, a.utterances[0].posteriors);
}

TEST(ToyCorpusTest, UtteranceShape) {
  const auto spec = Small();
  const auto c = make_corpus(spec);
  EXPECT_EQ(c.utterances[3].id, "utt000003");
  for (const auto& u : c.utterances) {
    EXPECT_GE(u.reference.size(), spec.min_len);
    EXPECT_LE(u.reference.size(), spec.max_len);
    EXPECT_NO_THROW(u.posteriors.validate());
    EXPECT_EQ(u.posteriors.vocab_size(), spec.alphabet_size + 1);
    const std::size_t t = u.posteriors.num_frames();
    EXPECT_EQ(u.context.declared_length, (t + 4) / 5);
    EXPECT_NEAR(u.audio_duration_s, 0.08 * static_cast<double>(t), 1e-9);
  }
  EXPECT_EQ(alphabet_symbol(0), "a");
  EXPECT_EQ(alphabet_symbol(30), "w30");
}

TEST(ToyCorpusTest, RegeneratesSingleUtterance) {
  const auto spec = Small(20);
  const auto c = make_corpus(spec);
  const auto u = make_utterance(spec, 13);
  EXPECT_EQ(u.posteriors, c.utterances[13].posteriors);
}

TEST(ToyDraftTest, ColdTemperatureGivesNearZeroEntropy) {
  auto spec = Small(30);
  spec.draft.temperature = 1e-3;
  const auto c = make_corpus(spec);
  for (const auto& u : c.utterances) {
    for (double h : frame_entropies(u.posteriors)) EXPECT_LT(h, 1e-6);
  }
}

TEST(ToyDraftTest, NoiselessDraftEqualsReference) {
  auto spec = Small(200);
  spec.draft.label_noise = 0.0;
  const auto c = make_corpus(spec);
  for (const auto& u : c.utterances) {
    EXPECT_EQ(decode_draft(u.posteriors, 0.7, c.draft_vocab).tokens, ReferenceLabels(u)) << u.id;
  }
}

TEST(ToyDraftTest, AllBlankDraftsAreEmpty) {
  auto spec = Small(30);
  spec.draft.blank_rate = 1.0;
  const auto c = make_corpus(spec);
  for (const auto& u : c.utterances) {
    EXPECT_GT(u.posteriors.num_frames(), 0u);
    EXPECT_TRUE(decode_draft(u.posteriors, 0.7, c.draft_vocab).tokens.empty());
  }
}

TEST(ToyDraftTest, HotTemperatureFailsGate) {
  auto spec = Small(50);
  spec.draft.temperature = 5.0;
  const auto c = make_corpus(spec);
  for (const auto& u : c.utterances) {
    EXPECT_FALSE(decode_draft(u.posteriors, 0.7, c.draft_vocab).gate_passed);
  }
}

TEST(ToyDraftTest, EntropyIncreasesWithTemperature) {
  double prev = -1.0;
  for (double t : {0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0}) {
    auto spec = Small(40);
    spec.draft.temperature = t;
    const double h = MeanEntropy(make_corpus(spec));
    EXPECT_GT(h, prev) << t;
    prev = h;
  }
}

TEST(ToyDraftTest, LabelNoiseLowersVerifierAcceptance) {
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double noise : {0.0, 0.02, 0.05, 0.1, 0.2}) {
    auto spec = Small(200);
    spec.draft.label_noise = noise;
    const auto c = make_corpus(spec);
    DecodeConfig cfg;
    cfg.mode = Mode::kLlmOnly;
    cfg.tau_slm = 0.1;
    std::size_t accepted = 0;
    for (const auto& u : c.utterances) {
      auto draft = decode_draft(u.posteriors, cfg.tau_ctc, c.draft_vocab);
      accepted += ssd_decode(draft, c.binding(), u.context, cfg).source == Source::kLlmVerified;
    }
    EXPECT_LE(accepted, prev) << noise;
    prev = accepted;
  }
  EXPECT_LT(prev, 200u);
}

TEST(ToyDraftTest, InvalidParams) {
  DraftParams p;
  p.temperature = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = DraftParams{};
  p.blank_rate = 1.5;
  EXPECT_THROW(p.validate(), Error);
  auto spec = Small();
  spec.n_utts = 0;
  EXPECT_THROW(make_corpus(spec), Error);
}

TEST(ToyVerifierTest, ScoreNextIsADistribution) {
  for (auto profile : {DistractorProfile::kUniform, DistractorProfile::kGeometric}) {
    VerifierParams p;
    p.distractor_profile = profile;
    p.bias_rate = 0.3;
    ToyVerifier model(p, 5);
    model.add_reference(1, {0, 4, 4, 2});
    for (const TokenSeq& prefix : {TokenSeq{}, TokenSeq{0, 4}, TokenSeq{0, 4, 4, 2}, TokenSeq{1}}) {
      const auto d = model.score_next({1, 1}, prefix);
      ASSERT_EQ(d.size(), 6u);
      EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
      for (double x : d) EXPECT_GE(x, 0.0);
    }
  }
}

TEST(ToyVerifierTest, FidelityOnReferenceStep) {
  VerifierParams p;
  p.fidelity = 0.9;
  ToyVerifier model(p, 4);
  model.add_reference(0, {2, 1});
  const auto d = model.score_next({0, 1}, TokenSeq{});
  EXPECT_DOUBLE_EQ(d[2], 0.9);
  // Residual 0.1 split over the four other entries, eos included.
  EXPECT_NEAR(d[0], 0.025, 1e-12);
  EXPECT_NEAR(d[4], 0.025, 1e-12);
  const auto end = model.score_next({0, 1}, TokenSeq{2, 1});
  EXPECT_DOUBLE_EQ(end[4], 0.9);
}

TEST(ToyVerifierTest, OffReferenceFavoursEos) {
  ToyVerifier model(VerifierParams{}, 4);
  model.add_reference(0, {2, 1});
  const auto d = model.score_next({0, 1}, TokenSeq{3});
  EXPECT_DOUBLE_EQ(d[4], 0.5);
  EXPECT_DOUBLE_EQ(d[0], 0.125);
}

TEST(ToyVerifierTest, TeacherForcingMatchesStepwiseScoring) {
  std::mt19937 gen(21);
  for (auto profile : {DistractorProfile::kUniform, DistractorProfile::kGeometric}) {
    VerifierParams p;
    p.distractor_profile = profile;
    p.fidelity = 0.8;
    p.bias_rate = 0.25;
    ToyVerifier model(p, 6);
    TokenSeq ref = {1, 5, 5, 0, 3, 2, 2, 4};
    model.add_reference(77, ref);
    std::uniform_int_distribution<int> tok(0, 6);
    for (int trial = 0; trial < 1000; ++trial) {
      // Mostly-on-reference prefixes so both branches get exercised.
      TokenSeq seq;
      const std::size_t len = static_cast<std::size_t>(trial % 11);
      for (std::size_t i = 0; i < len; ++i) {
        seq.push_back(i < ref.size() && tok(gen) < 4 ? ref[i] : tok(gen));
      }
      const auto tf = model.score_teacher_forced({77, 2}, seq);
      ASSERT_EQ(tf.size(), seq.size());
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const auto d = model.score_next({77, 2}, std::span<const TokenId>(seq).subspan(0, i));
        EXPECT_NEAR(tf[i], d[static_cast<std::size_t>(seq[i])], 1e-12) << trial << " @" << i;
      }
    }
  }
}

TEST(ToyVerifierTest, GreedyDecodingReproducesReference) {
  for (double fidelity : {0.51, 0.7, 0.95}) {
    auto spec = Small(50);
    spec.verifier.fidelity = fidelity;
    spec.verifier.bias_ref_mass = 0.3;
    const auto c = make_corpus(spec);
    for (const auto& u : c.utterances) {
      auto out = full_ar_decode(*c.verifier, u.context, 64, c.tokenizer);
      EXPECT_EQ(out.tokens, u.reference) << fidelity << " " << u.id;
      EXPECT_EQ(out.verifier_calls, u.reference.size() + 1);
    }
  }
}

TEST(ToyVerifierTest, BiasedStepsDivertGreedyDecoding) {
  auto spec = Small(100);
  spec.verifier.bias_rate = 0.2;
  const auto c = make_corpus(spec);
  std::size_t diverted = 0;
  for (const auto& u : c.utterances) {
    auto out = full_ar_decode(*c.verifier, u.context, 64, c.tokenizer);
    diverted += out.tokens != u.reference;
  }
  EXPECT_GT(diverted, 0u);
}

TEST(ToyVerifierTest, UnknownHandle) {
  ToyVerifier model(VerifierParams{}, 4);
  try {
    model.score_next({5, 1}, TokenSeq{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kModel);
  }
  VerifierParams bad;
  bad.fidelity = 0.0;
  EXPECT_THROW(ToyVerifier(bad, 4), Error);
}

}  // namespace
}  // namespace ssd::toy
