#include "ssd/verifier.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

#include "ssd/toy_models.hpp"

namespace ssd {
namespace {

// Bigram model over {0, 1, 2} plus end-of-sequence 3: the distribution
// depends only on the last token (or -1 for the empty prefix).
class TableModel final : public VerifierModel {
 public:
  explicit TableModel(std::map<TokenId, std::vector<double>> table) : table_(std::move(table)) {}
  std::size_t vocab_size() const override { return 4; }
  TokenId eos_id() const override { return 3; }
  std::vector<double> score_next(const AcousticContext&, std::span<const TokenId> prefix) const override {
    return table_.at(prefix.empty() ? -1 : prefix.back());
  }
  std::vector<double> score_teacher_forced(const AcousticContext& ctx,
                                           std::span<const TokenId> tokens) const override {
    std::vector<double> out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      out.push_back(score_next(ctx, tokens.subspan(0, i))[static_cast<std::size_t>(tokens[i])]);
    }
    return out;
  }

 private:
  std::map<TokenId, std::vector<double>> table_;
};

// start -> 1 -> 2 -> 0 -> eos
TableModel ChainModel() {
  return TableModel({{-1, {0.1, 0.7, 0.1, 0.1}},
                     {1, {0.1, 0.1, 0.6, 0.2}},
                     {2, {0.5, 0.2, 0.2, 0.1}},
                     {0, {0.2, 0.1, 0.1, 0.6}}});
}

std::optional<std::size_t> LinearScanReject(const std::vector<double>& l, double tau) {
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i] <= tau) return i + 1;
  }
  return std::nullopt;
}

TEST(VerifyTest, Examples) {
  EXPECT_TRUE(verify({0.9, 0.5, 0.3}, 0.1).accepted());
  auto r = verify({0.9, 0.05, 0.8}, 0.1);
  ASSERT_FALSE(r.accepted());
  EXPECT_EQ(*r.reject_at, 2u);
  EXPECT_EQ(r.verified_prefix(), 1u);
  auto first = verify({0.05, 0.9}, 0.1);
  EXPECT_EQ(*first.reject_at, 1u);
  EXPECT_EQ(first.verified_prefix(), 0u);
}

TEST(VerifyTest, EmptyAcceptsAndBoundaryRejects) {
  EXPECT_TRUE(verify({}, 0.5).accepted());
  EXPECT_EQ(*verify({0.1}, 0.1).reject_at, 1u);  // equal is not greater
  EXPECT_FALSE(verify({1.0}, 1.0).accepted());
  EXPECT_TRUE(verify({0.0}, 0.0).reject_at.has_value());
}

TEST(VerifyTest, ConfigErrors) {
  try {
    verify({0.5}, 1.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  EXPECT_THROW(verify({0.5}, -0.1), Error);
  EXPECT_THROW(verify({1.5}, 0.1), Error);
}

TEST(VerifyTest, MatchesLinearScan) {
  std::mt19937 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<double> taus = {0.0, 0.1, 0.2, 0.5, 1.0};
  for (int trial = 0; trial < 2000; ++trial) {
    const double tau = taus[trial % taus.size()];
    std::vector<double> l(static_cast<std::size_t>(trial % 9));
    for (auto& x : l) x = u(gen) < 0.2 ? tau : u(gen);
    auto r = verify(l, tau);
    EXPECT_EQ(r.reject_at, LinearScanReject(l, tau));
  }
}

TEST(VerifyDraftTest, SingleInvocation) {
  auto model = ChainModel();
  CountingVerifier counter(model);
  const TokenSeq draft = {1, 2, 0};
  auto r = verify_draft(counter, {}, draft, 0.1);
  EXPECT_EQ(counter.teacher_forced_calls(), 1u);
  EXPECT_EQ(counter.next_calls(), 0u);
  // Likelihoods 0.7, 0.6, 0.5 all exceed 0.1.
  EXPECT_TRUE(r.accepted());
  EXPECT_EQ(r.likelihoods, (std::vector<double>{0.7, 0.6, 0.5}));

  auto empty = verify_draft(counter, {}, TokenSeq{}, 0.1);
  EXPECT_TRUE(empty.accepted());
  EXPECT_TRUE(empty.likelihoods.empty());
  EXPECT_EQ(counter.teacher_forced_calls(), 2u);
}

TEST(VerifyDraftTest, PerfectFidelityAcceptsReference) {
  toy::VerifierParams p;
  p.fidelity = 1.0;
  toy::ToyVerifier model(p, 4);
  const TokenSeq ref = {0, 3, 3, 1, 2};
  model.add_reference(9, ref);
  for (double tau : {0.0, 0.5, 0.999}) {
    EXPECT_TRUE(verify_draft(model, {9, 2}, ref, tau).accepted());
  }
}

TEST(RetokenizeTest, WordAndMergeTokenizers) {
  WordTokenizer words({"a", "b", "c"});
  EXPECT_TRUE(retokenize("", words).empty());
  EXPECT_EQ(retokenize("a c b", words), (TokenSeq{0, 2, 1}));
  EXPECT_EQ(words.decode(retokenize("a c b", words)), "a c b");

  GreedyMergeTokenizer identity({"a", "b"});
  EXPECT_EQ(retokenize("abba", identity), (TokenSeq{0, 1, 1, 0}));

  GreedyMergeTokenizer merges({"a", "b", "ab"});
  EXPECT_EQ(retokenize("abab", merges), (TokenSeq{2, 2}));
}

TEST(RetokenizeTest, RoundTripProperty) {
  GreedyMergeTokenizer merges({"a", "b", "c", "ab", "bc", "abc", "ca"});
  WordTokenizer words({"a", "b", "c"});
  std::mt19937 gen(4);
  std::uniform_int_distribution<int> ch(0, 2);
  for (int trial = 0; trial < 300; ++trial) {
    std::string s, spaced;
    for (int i = 0; i < trial % 15; ++i) {
      const char c = static_cast<char>('a' + ch(gen));
      s.push_back(c);
      if (!spaced.empty()) spaced.push_back(' ');
      spaced.push_back(c);
    }
    EXPECT_EQ(merges.decode(retokenize(s, merges)), s);
    EXPECT_EQ(words.decode(retokenize(spaced, words)), spaced);
  }
}

TEST(RetokenizeTest, UntokenizableSymbol) {
  GreedyMergeTokenizer merges({"a", "b"});
  try {
    retokenize("abz", merges);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTokenize);
  }
  EXPECT_THROW(retokenize("a q", WordTokenizer({"a"})), Error);
}

TEST(ArContinueTest, ImmediateEos) {
  TableModel model({{-1, {0.1, 0.1, 0.1, 0.7}}});
  auto c = ar_continue(model, {}, {}, 10);
  EXPECT_TRUE(c.tokens.empty());
  EXPECT_EQ(c.calls, 1u);
  EXPECT_FALSE(c.truncated);
}

TEST(ArContinueTest, FollowsTransitionTable) {
  auto model = ChainModel();
  // Hand-executed: argmax from start is 1, then 2, then 0, then eos.
  auto c = ar_continue(model, {}, {}, 10);
  EXPECT_EQ(c.tokens, (TokenSeq{1, 2, 0}));
  EXPECT_EQ(c.calls, 4u);
  // From prefix [2]: 0, then eos.
  auto from_prefix = ar_continue(model, {}, TokenSeq{2}, 10);
  EXPECT_EQ(from_prefix.tokens, (TokenSeq{0}));
  EXPECT_EQ(from_prefix.calls, 2u);
}

TEST(ArContinueTest, BudgetTruncates) {
  auto model = ChainModel();
  auto zero = ar_continue(model, {}, {}, 0);
  EXPECT_TRUE(zero.tokens.empty());
  EXPECT_TRUE(zero.truncated);
  EXPECT_EQ(zero.calls, 0u);
  auto two = ar_continue(model, {}, {}, 2);
  EXPECT_EQ(two.tokens, (TokenSeq{1, 2}));
  EXPECT_TRUE(two.truncated);
  EXPECT_EQ(two.calls, 2u);
}

TEST(FullArDecodeTest, EqualsContinuationFromEmpty) {
  auto model = ChainModel();
  GreedyMergeTokenizer tok({"x", "y", "z"});
  CountingVerifier counter(model);
  auto a = full_ar_decode(counter, {}, 16, tok);
  auto b = full_ar_decode(counter, {}, 16, tok);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.tokens, ar_continue(model, {}, {}, 16).tokens);
  EXPECT_EQ(a.source, Source::kFullAr);
  EXPECT_EQ(a.text, "yzx");
  // Three tokens plus the end-of-sequence step.
  EXPECT_EQ(a.verifier_calls, a.tokens.size() + 1);
  EXPECT_EQ(counter.next_calls(), 2 * a.verifier_calls);
}

TEST(DefaultBudgetTest, FloorAndScale) {
  EXPECT_EQ(default_max_new_tokens(0), 64u);
  EXPECT_EQ(default_max_new_tokens(24), 64u);
  EXPECT_EQ(default_max_new_tokens(25), 66u);
}

class SsdDecodeTest : public ::testing::Test {
 protected:
  // Draft alphabet {a, b, c} with blank at 0; verifier ids 0..2, eos 3.
  Vocabulary vocab_ = Vocabulary::with_leading_blank({"a", "b", "c"});
  WordTokenizer tokenizer_{{"a", "b", "c"}};
  TableModel model_ = ChainModel();
  VerifierBinding binding() { return {model_, tokenizer_, vocab_}; }

  DraftHypothesis Draft(LabelSeq tokens, bool gate) {
    DraftHypothesis d;
    d.tokens = std::move(tokens);
    d.gate_passed = gate;
    return d;
  }
};

TEST_F(SsdDecodeTest, GatePassedSkipsVerifier) {
  CountingVerifier counter(model_);
  DecodeConfig cfg;
  auto out = ssd_decode(Draft({3, 1}, true), {counter, tokenizer_, vocab_}, {}, cfg);
  EXPECT_EQ(out.source, Source::kCtcGate);
  EXPECT_EQ(out.text, "c a");
  EXPECT_EQ(out.tokens, (TokenSeq{2, 0}));
  EXPECT_EQ(out.verifier_calls, 0u);
  EXPECT_EQ(counter.total_calls(), 0u);
}

TEST_F(SsdDecodeTest, AcceptedDraftIsUnchanged) {
  CountingVerifier counter(model_);
  DecodeConfig cfg;
  cfg.tau_slm = 0.1;
  // Draft "b c a" -> ids 1 2 0, likelihoods 0.7 0.6 0.5.
  auto out = ssd_decode(Draft({2, 3, 1}, false), {counter, tokenizer_, vocab_}, {}, cfg);
  EXPECT_EQ(out.source, Source::kLlmVerified);
  EXPECT_EQ(out.tokens, (TokenSeq{1, 2, 0}));
  EXPECT_EQ(out.verifier_calls, 1u);
  EXPECT_EQ(counter.total_calls(), 1u);
}

TEST_F(SsdDecodeTest, RejectionFallsBackFromVerifiedPrefix) {
  CountingVerifier counter(model_);
  DecodeConfig cfg;
  cfg.tau_slm = 0.15;
  // Draft "b a c": p(b)=0.7, p(a|b)=0.1 <= 0.15 -> reject at 2, keep [b].
  auto out = ssd_decode(Draft({2, 1, 3}, false), {counter, tokenizer_, vocab_}, {}, cfg);
  EXPECT_EQ(out.source, Source::kFallback);
  EXPECT_EQ(out.prefix_len, 1u);
  EXPECT_EQ(out.tokens, (TokenSeq{1, 2, 0}));
  EXPECT_EQ(out.generated, 3u);  // c, a, eos
  EXPECT_EQ(out.verifier_calls, 1u + out.generated);
  EXPECT_EQ(counter.total_calls(), out.verifier_calls);
}

TEST_F(SsdDecodeTest, AlwaysGateEqualsDraft) {
  DecodeConfig cfg;
  cfg.tau_ctc = kGateAlways;
  auto post = FramePosteriors::from_rows({{0.1, 0.6, 0.2, 0.1}, {0.1, 0.2, 0.6, 0.1}});
  auto draft = decode_draft(post, cfg.tau_ctc, vocab_);
  auto out = ssd_decode(draft, binding(), {}, cfg);
  EXPECT_EQ(out.source, Source::kCtcGate);
  EXPECT_EQ(out.text, vocab_.detokenize(draft.tokens));
}

TEST_F(SsdDecodeTest, NeverGateAndUnitThresholdEqualsFullAr) {
  DecodeConfig cfg;
  cfg.tau_ctc = kGateNever;
  cfg.tau_slm = 1.0;
  auto post = FramePosteriors::from_rows({{0.01, 0.01, 0.97, 0.01}, {0.01, 0.01, 0.01, 0.97}});
  auto draft = decode_draft(post, cfg.tau_ctc, vocab_);
  ASSERT_FALSE(draft.gate_passed);
  auto out = ssd_decode(draft, binding(), {}, cfg);
  auto ar = full_ar_decode(model_, {}, 64, tokenizer_);
  EXPECT_EQ(out.tokens, ar.tokens);
  EXPECT_EQ(out.prefix_len, 0u);
  EXPECT_EQ(out.verifier_calls, ar.verifier_calls + 1);
}

TEST_F(SsdDecodeTest, CtcOnlyRoutesGateFailuresToFullAr) {
  DecodeConfig cfg;
  cfg.mode = Mode::kCtcOnly;
  auto out = ssd_decode(Draft({2, 1, 3}, false), binding(), {}, cfg);
  EXPECT_EQ(out.source, Source::kFullAr);
  EXPECT_EQ(out.tokens, full_ar_decode(model_, {}, 64, tokenizer_).tokens);
}

TEST_F(SsdDecodeTest, UntokenizableDraftFallsBackToFullAr) {
  Vocabulary odd = Vocabulary::with_leading_blank({"a", "b", "c", "q"});
  DecodeConfig cfg;
  auto out = ssd_decode(Draft({4, 1}, false), {model_, tokenizer_, odd}, {}, cfg);
  EXPECT_EQ(out.source, Source::kFullAr);
  EXPECT_NE(out.note.find("unknown word"), std::string::npos);
}

TEST_F(SsdDecodeTest, EmptyDraftVerifiesVacuously) {
  DecodeConfig cfg;
  auto out = ssd_decode(Draft({}, false), binding(), {}, cfg);
  EXPECT_EQ(out.source, Source::kLlmVerified);
  EXPECT_TRUE(out.tokens.empty());
  EXPECT_EQ(out.verifier_calls, 1u);
}

TEST(AblationModeTest, Wiring) {
  DecodeConfig c;
  c.mode = Mode::kLlmOnly;
  EXPECT_FALSE(ablation_mode(c).use_gate);
  EXPECT_TRUE(ablation_mode(c).run_verification);
  c.mode = Mode::kCtcOnly;
  EXPECT_TRUE(ablation_mode(c).use_gate);
  EXPECT_FALSE(ablation_mode(c).run_verification);
  c.mode = Mode::kCtcGreedy;
  EXPECT_TRUE(ablation_mode(c).accept_every_draft);
  c.mode = Mode::kFullAr;
  EXPECT_FALSE(ablation_mode(c).run_draft);
  EXPECT_THROW(parse_mode("beam"), Error);
}

}  // namespace
}  // namespace ssd
