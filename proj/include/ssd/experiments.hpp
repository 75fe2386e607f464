#pragma once

// Threshold sweeps and verification-pass ablations over a bound corpus.

#include <span>
#include <string>
#include <vector>

#include "ssd/config.hpp"
#include "ssd/data_io.hpp"
#include "ssd/metrics.hpp"
#include "ssd/pipeline.hpp"
#include "ssd/toy_models.hpp"

namespace ssd {

inline RunReport run_corpus(const toy::Corpus& corpus, const DecodeConfig& config,
                            StagingStore* staging = nullptr) {
  const auto inputs = corpus.inputs();
  return run_pipeline(inputs, *corpus.draft_model, corpus.binding(), config, staging);
}

inline RunReport run_full_ar(const toy::Corpus& corpus, DecodeConfig config) {
  config.mode = Mode::kFullAr;
  return run_corpus(corpus, config);
}

inline io::SweepRow sweep_row(const RunReport& report, const RunReport& baseline,
                              const DecodeConfig& config) {
  const Aggregates a = report.aggregates();
  io::SweepRow row;
  row.tau_ctc = config.tau_ctc;
  row.tau_slm = config.tau_slm;
  row.wer = a.wer;
  row.rtfx = a.rtfx;
  row.pct_c = a.pct_c;
  row.pct_l = a.pct_l;
  row.calls = a.verifier_calls;
  row.speedup = call_speedup(report, baseline);
  return row;
}

// One pipeline run per (tau_ctc, tau_slm) point, tau_ctc outermost.
inline std::vector<io::SweepRow> run_sweep(const toy::Corpus& corpus, const DecodeConfig& base,
                                           std::span<const double> tau_ctc_grid,
                                           std::span<const double> tau_slm_grid,
                                           const RunReport* baseline = nullptr) {
  if (tau_ctc_grid.empty() || tau_slm_grid.empty()) {
    throw Error(ErrorKind::kConfig, "sweep grids must be nonempty");
  }
  RunReport own_baseline;
  if (!baseline) {
    own_baseline = run_full_ar(corpus, base);
    baseline = &own_baseline;
  }
  std::vector<io::SweepRow> rows;
  for (double tc : tau_ctc_grid) {
    for (double ts : tau_slm_grid) {
      DecodeConfig c = base;
      c.tau_ctc = tc;
      c.tau_slm = ts;
      rows.push_back(sweep_row(run_corpus(corpus, c), *baseline, c));
    }
  }
  return rows;
}

inline const std::vector<Mode>& ablation_modes() {
  static const std::vector<Mode> modes = {Mode::kBoth, Mode::kLlmOnly, Mode::kCtcOnly};
  return modes;
}

// Every mode at every grid point; rows grouped by mode.
inline std::vector<io::SweepRow> run_ablation(const toy::Corpus& corpus, const DecodeConfig& base,
                                              std::span<const double> tau_ctc_grid,
                                              std::span<const double> tau_slm_grid,
                                              std::span<const Mode> modes = ablation_modes()) {
  const RunReport baseline = run_full_ar(corpus, base);
  std::vector<io::SweepRow> rows;
  for (Mode m : modes) {
    DecodeConfig c = base;
    c.mode = m;
    for (auto row : run_sweep(corpus, c, tau_ctc_grid, tau_slm_grid, &baseline)) {
      row.mode = std::string(to_string(m));
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace ssd
