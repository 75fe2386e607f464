// Decodes a small synthetic corpus with both acceptance stages and compares
// it against plain autoregressive decoding.

#include <iostream>

#include "ssd/ssd.hpp"

int main() {
  auto spec = ssd::toy::CorpusSpec::tuned();
  spec.n_utts = 200;
  const auto corpus = ssd::toy::make_corpus(spec);

  // One utterance by hand.
  const auto& u = corpus.utterances.front();
  const auto draft = ssd::decode_draft(u.posteriors, 0.7, corpus.draft_vocab);
  ssd::DecodeConfig config = ssd::DecodeConfig::high_accuracy();
  const auto hyp = ssd::ssd_decode(draft, corpus.binding(), u.context, config);
  std::cout << u.id << "  ref: " << u.reference_text << "\n"
            << u.id << "  hyp: " << hyp.text << "  [" << ssd::to_string(hyp.source) << ", "
            << hyp.verifier_calls << " calls]\n\n";

  // The whole corpus through the batched pipeline.
  const auto ssd_run = ssd::run_corpus(corpus, config);
  const auto ar_run = ssd::run_full_ar(corpus, config);
  const auto a = ssd_run.aggregates();
  std::cout << "WER " << a.wer << "% (full AR " << ar_run.aggregates().wer << "%)\n"
            << "%C " << a.pct_c << "  %L " << a.pct_l << "\n"
            << "call speedup " << ssd::call_speedup(ssd_run, ar_run) << "x\n";
}
