#pragma once

// Command-line front end: bench, sweep, ablate and gen-corpus.
// Exit codes: 0 success, 1 runtime failure (or utterance errors with
// --strict), 2 usage error. Output files are written only after all work
// has succeeded.

#include <cstdlib>
#include <iomanip>
#include <memory>
#include <optional>
#include <set>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssd/ssd.hpp"

namespace ssd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::uint64_t kDefaultSeed = 2026;

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  // corpus
  std::vector<std::string> manifests;
  std::size_t n_utts = 500;
  std::optional<std::uint64_t> seed;
  std::size_t alphabet_size = 26;
  std::optional<double> temperature, label_noise, blank_rate;
  std::optional<double> fidelity, bias_rate;
  std::string distractor = "uniform";
  // decoding
  std::string preset;
  std::string tau_ctc;
  std::optional<double> tau_slm;
  std::string mode = "both";
  std::string budget = "512";
  std::optional<std::size_t> max_new_tokens;
  std::size_t workers = 1;
  bool full_context_logits = false;
  // outputs
  std::string report;
  std::string format = "json";
  bool strict = false;
  bool no_timing = false;
  std::string staging_dir;
  std::string tau_ctc_grid = "0.3,0.7,1.5,3.0";
  std::string tau_slm_grid = "0.1";
  std::string out;
  std::string out_dir;
  bool inline_spec = false;
};

inline double parse_tau_ctc(const std::string& s) {
  double v = 0.0;
  try {
    v = io::parse_double(s);
  } catch (const Error&) {
    throw UsageError("--tau-ctc expects a number, 'always' or 'never', got '" + s + "'");
  }
  if (v < 0.0 && v != kGateNever) throw UsageError("--tau-ctc must be >= 0");
  return v;
}

inline std::vector<double> parse_grid(const std::string& text, const std::string& flag, bool ctc) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (ctc) {
      out.push_back(parse_tau_ctc(item));
      continue;
    }
    try {
      out.push_back(io::parse_double(item));
    } catch (const Error&) {
      throw UsageError(flag + ": not a number '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + " must list at least one value");
  return out;
}

inline std::size_t parse_budget(const std::string& s) {
  if (s == "inf" || s == "unbounded") return kUnboundedBudget;
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || v == 0) throw UsageError("--max-batch-tokens expects a positive integer or 'inf'");
  return static_cast<std::size_t>(v);
}

inline std::uint64_t resolve_seed(const Options& o) {
  if (o.seed) return *o.seed;
  if (const char* env = std::getenv("SSD_SEED"); env && *env) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("SSD_SEED is not an integer: '") + env + "'");
  }
  return kDefaultSeed;
}

// Decode settings: preset first, explicit thresholds override it.
inline DecodeConfig build_config(const Options& o, bool allow_full_ar) {
  DecodeConfig c;
  try {
    c.mode = parse_mode(o.mode);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (c.mode == Mode::kFullAr) {
    if (!allow_full_ar) throw UsageError("mode full-ar has no thresholds to vary");
    if (!o.preset.empty() || !o.tau_ctc.empty() || o.tau_slm) {
      throw UsageError("mode full-ar does not take --preset, --tau-ctc or --tau-slm");
    }
  }
  if (o.preset == "high-accuracy") {
    c = DecodeConfig::high_accuracy();
  } else if (o.preset == "high-rtfx") {
    c = DecodeConfig::high_rtfx();
  } else if (!o.preset.empty()) {
    throw UsageError("unknown preset '" + o.preset + "'");
  }
  c.mode = parse_mode(o.mode);
  if (!o.tau_ctc.empty()) c.tau_ctc = parse_tau_ctc(o.tau_ctc);
  if (o.tau_slm) c.tau_slm = *o.tau_slm;
  c.budget_tokens = parse_budget(o.budget);
  c.max_new_tokens = o.max_new_tokens;
  c.workers = o.workers;
  c.logits_at_verification_positions_only = !o.full_context_logits;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline toy::CorpusSpec build_spec(const Options& o) {
  auto spec = toy::CorpusSpec::tuned();
  spec.seed = resolve_seed(o);
  spec.n_utts = o.n_utts;
  spec.alphabet_size = o.alphabet_size;
  if (o.temperature) spec.draft.temperature = *o.temperature;
  if (o.label_noise) spec.draft.label_noise = *o.label_noise;
  if (o.blank_rate) spec.draft.blank_rate = *o.blank_rate;
  if (o.fidelity) spec.verifier.fidelity = *o.fidelity;
  if (o.bias_rate) spec.verifier.bias_rate = *o.bias_rate;
  try {
    spec.verifier.distractor_profile = toy::parse_distractor_profile(o.distractor);
    spec.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return spec;
}

struct NamedCorpus {
  std::string name;
  toy::Corpus corpus;
};

inline std::vector<NamedCorpus> load_corpora(const Options& o, const toy::CorpusSpec& spec) {
  std::vector<NamedCorpus> out;
  if (o.manifests.empty()) {
    out.push_back({"synthetic", toy::make_corpus(spec)});
    return out;
  }
  std::set<std::string> taken;
  for (const auto& m : o.manifests) {
    const fs::path path(m);
    std::string name = path.stem().string();
    if (name == "manifest" && path.has_parent_path()) name = path.parent_path().filename().string();
    for (std::size_t k = 2; !taken.insert(name).second; ++k) name = path.stem().string() + "-" + std::to_string(k);
    out.push_back({name, io::load_corpus(path, spec.verifier)});
  }
  return out;
}

inline nlohmann::json number_or_inf(double x) {
  if (std::isinf(x)) return io::format_double(x);
  return x;
}

inline void write_text(const std::string& path, const std::string& text) {
  io::detail::write_file(path, text);
}

inline void print_row(std::ostream& out, const std::string& label, const Aggregates& a,
                      double speedup) {
  std::ostringstream line;
  line << "  " << std::left << std::setw(11) << label << std::right << std::fixed << std::setprecision(2)
       << std::setw(8) << a.wer << std::setw(14) << a.rtfx << std::setw(8) << a.pct_c << std::setw(8)
       << a.pct_l << std::setw(9) << a.verifier_calls << std::setw(9) << speedup << "\n";
  out << line.str();
}

inline int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  const DecodeConfig config = build_config(o, true);
  const auto spec = build_spec(o);
  const auto format = [&] {
    try {
      return io::parse_report_format(o.format);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }();

  const auto corpora = load_corpora(o, spec);
  nlohmann::json summary = nlohmann::json::array();
  RunReport merged;
  std::vector<Aggregates> per_corpus;
  std::size_t utterance_errors = 0;

  for (const auto& [name, corpus] : corpora) {
    std::unique_ptr<StagingStore> staging;
    if (!o.staging_dir.empty()) staging = std::make_unique<DiskStagingStore>(fs::path(o.staging_dir) / name);
    const RunReport baseline = run_full_ar(corpus, config);
    const RunReport run = config.mode == Mode::kFullAr ? baseline : run_corpus(corpus, config, staging.get());
    const Aggregates a = run.aggregates();
    const Aggregates b = baseline.aggregates();
    const double speedup = call_speedup(run, baseline);
    const ZTest z = two_proportion_z(static_cast<double>(a.wer_counts.errors()),
                                     static_cast<double>(std::max<std::size_t>(1, a.wer_counts.ref_len)),
                                     static_cast<double>(b.wer_counts.errors()),
                                     static_cast<double>(std::max<std::size_t>(1, b.wer_counts.ref_len)));
    utterance_errors += a.errors;
    per_corpus.push_back(a);

    out << "corpus " << name << " (" << a.utterances << " utterances)\n";
    out << "  mode            wer          rtfx      %C      %L    calls  speedup\n";
    if (config.mode != Mode::kFullAr) print_row(out, "full-ar", b, 1.0);
    print_row(out, std::string(to_string(config.mode)), a, speedup);
    out << "  z " << z.z << " p " << z.p_value << "\n";
    out << "  determinism_hash " << io::determinism_hash(run) << "\n";
    if (a.errors) err << "warning: " << a.errors << " utterance(s) in " << name << " failed\n";

    nlohmann::json entry = io::report_json(run);
    if (o.no_timing) entry.erase("timing");
    entry["corpus"] = name;
    entry["comparison"] = {{"full_ar_wer", b.wer},
                           {"full_ar_calls", b.verifier_calls},
                           {"call_speedup", number_or_inf(speedup)},
                           {"z", z.z},
                           {"p_value", z.p_value}};
    summary.push_back(entry);

    RunReport prefixed = run;
    if (corpora.size() > 1) {
      for (auto& r : prefixed.records) r.id = name + "/" + r.id;
    }
    merged = merge(std::move(merged), prefixed);
  }
  if (corpora.size() > 1) out << "macro_wer " << macro_wer(per_corpus) << "\n";

  if (!o.report.empty()) {
    if (format == io::ReportFormat::kJson) {
      nlohmann::json doc = {{"config",
                             {{"mode", std::string(to_string(config.mode))},
                              {"tau_ctc", io::format_tau_ctc(config.tau_ctc)},
                              {"tau_slm", config.tau_slm},
                              {"budget_tokens", io::format_double(config.budget_tokens == kUnboundedBudget
                                                                      ? std::numeric_limits<double>::infinity()
                                                                      : static_cast<double>(config.budget_tokens))}}},
                            {"corpora", summary},
                            {"macro_wer", macro_wer(per_corpus)}};
      write_text(o.report, doc.dump(2) + "\n");
    } else {
      write_text(o.report, io::report_csv(merged));
    }
  }
  return o.strict && utterance_errors > 0 ? kExitRuntime : kExitOk;
}

inline const toy::Corpus& single_corpus(const std::vector<NamedCorpus>& corpora) {
  return corpora.front().corpus;
}

inline int cmd_grid(const Options& o, bool ablate, std::ostream& out) {
  DecodeConfig config = build_config(o, false);
  const auto ctc = parse_grid(o.tau_ctc_grid, "--tau-ctc-grid", true);
  const auto slm = parse_grid(o.tau_slm_grid, "--tau-slm-grid", false);
  for (double t : slm) {
    if (!(t >= 0.0 && t <= 1.0)) throw UsageError("--tau-slm-grid values must lie in [0, 1]");
  }
  if (o.manifests.size() > 1) throw UsageError("sweep and ablate take a single corpus");
  const auto spec = build_spec(o);
  const auto corpora = load_corpora(o, spec);
  const auto rows = ablate ? run_ablation(single_corpus(corpora), config, ctc, slm)
                           : run_sweep(single_corpus(corpora), config, ctc, slm);
  const std::string csv = io::sweep_csv(rows, ablate);
  if (o.out.empty()) {
    out << csv;
  } else {
    write_text(o.out, csv);
    out << rows.size() << " rows written to " << o.out << "\n";
  }
  return kExitOk;
}

inline int cmd_gen_corpus(const Options& o, std::ostream& out) {
  if (o.n_utts == 0) throw UsageError("--n-utts must be >= 1");
  if (o.out_dir.empty()) throw UsageError("--out-dir is required");
  double tau = 0.7;
  if (o.preset == "high-rtfx") tau = DecodeConfig::high_rtfx().tau_ctc;
  else if (!o.preset.empty() && o.preset != "high-accuracy") throw UsageError("unknown preset '" + o.preset + "'");
  if (!o.tau_ctc.empty()) tau = parse_tau_ctc(o.tau_ctc);
  const auto spec = build_spec(o);

  const auto corpus = toy::make_corpus(spec);
  double entropy_sum = 0.0;
  std::size_t frames = 0, gated = 0;
  for (const auto& u : corpus.utterances) {
    const auto h = frame_entropies(u.posteriors);
    for (double x : h) entropy_sum += x;
    frames += h.size();
    gated += entropy_gate(h, tau);
  }
  const fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string());
  const auto records = io::manifest_for(corpus, dir, o.inline_spec ? std::nullopt
                                                                     : std::optional<std::string>("posteriors"));
  io::write_manifest(dir / "manifest.jsonl", records);

  out << "utterances " << corpus.utterances.size() << "\n";
  out << "frames " << frames << "\n";
  out << "mean_entropy " << (frames ? entropy_sum / static_cast<double>(frames) : 0.0) << "\n";
  out << "gate_rate " << 100.0 * static_cast<double>(gated) / static_cast<double>(corpus.utterances.size())
      << " (tau_ctc " << io::format_tau_ctc(tau) << ")\n";
  out << "manifest " << (dir / "manifest.jsonl").string() << "\n";
  return kExitOk;
}

inline void add_corpus_options(CLI::App* app, Options& o) {
  app->add_option("--manifest", o.manifests, "JSONL manifest(s); omit for a synthetic corpus");
  app->add_option("--n-utts", o.n_utts, "synthetic corpus size");
  app->add_option("--seed", o.seed, "synthetic corpus seed (fallback: SSD_SEED)");
  app->add_option("--alphabet-size", o.alphabet_size, "synthetic alphabet size");
  app->add_option("--temperature", o.temperature, "draft softening temperature");
  app->add_option("--label-noise", o.label_noise, "draft label corruption rate");
  app->add_option("--blank-rate", o.blank_rate, "draft blank frame fraction");
  app->add_option("--fidelity", o.fidelity, "toy verifier mass on the reference");
  app->add_option("--bias-rate", o.bias_rate, "toy verifier biased-step rate");
  app->add_option("--distractor", o.distractor, "toy verifier distractor profile")
      ->check(CLI::IsMember({"uniform", "geometric"}));
}

inline void add_decode_options(CLI::App* app, Options& o, bool with_mode) {
  app->add_option("--preset", o.preset, "high-accuracy or high-rtfx")
      ->check(CLI::IsMember({"high-accuracy", "high-rtfx"}));
  if (with_mode) {
    app->add_option("--tau-ctc", o.tau_ctc, "entropy gate threshold in nats, or always/never");
    app->add_option("--tau-slm", o.tau_slm, "verifier likelihood threshold in [0, 1]");
  }
  app->add_option("--max-batch-tokens", o.budget, "per-batch token budget, or inf");
  app->add_option("--max-new-tokens", o.max_new_tokens, "fallback generation bound");
  app->add_option("--workers", o.workers, "batch worker threads");
  app->add_flag("--full-context-logits", o.full_context_logits,
                "charge verification for the acoustic context as well");
}

// Runs the CLI on `args` (without the program name).
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative CTC/LLM decoding benchmarks"};
  app.require_subcommand(1);
  Options o;

  auto* bench = app.add_subcommand("bench", "decode corpora and compare with full autoregressive decoding");
  add_corpus_options(bench, o);
  add_decode_options(bench, o, true);
  bench->add_option("--mode", o.mode, "both, llm-only, ctc-only, full-ar or ctc-greedy");
  bench->add_option("--report", o.report, "report output path");
  bench->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  bench->add_flag("--strict", o.strict, "exit 1 if any utterance failed");
  bench->add_flag("--no-timing", o.no_timing, "omit wall-clock fields from the JSON report");
  bench->add_option("--staging-dir", o.staging_dir, "stage pending utterances on disk");

  auto* sweep = app.add_subcommand("sweep", "threshold grid over one corpus");
  add_corpus_options(sweep, o);
  add_decode_options(sweep, o, false);
  sweep->add_option("--mode", o.mode, "decoding mode");
  sweep->add_option("--tau-ctc-grid", o.tau_ctc_grid, "comma-separated gate thresholds");
  sweep->add_option("--tau-slm-grid", o.tau_slm_grid, "comma-separated verifier thresholds");
  sweep->add_option("--out", o.out, "CSV output path (default stdout)");

  auto* ablate = app.add_subcommand("ablate", "both / llm-only / ctc-only over a threshold grid");
  add_corpus_options(ablate, o);
  add_decode_options(ablate, o, false);
  ablate->add_option("--tau-ctc-grid", o.tau_ctc_grid, "comma-separated gate thresholds");
  ablate->add_option("--tau-slm-grid", o.tau_slm_grid, "comma-separated verifier thresholds");
  ablate->add_option("--out", o.out, "CSV output path (default stdout)");

  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic corpus to disk");
  add_corpus_options(gen, o);
  gen->add_option("--out-dir", o.out_dir, "output directory")->required();
  gen->add_option("--preset", o.preset, "threshold preset for the gate-rate summary");
  gen->add_option("--tau-ctc", o.tau_ctc, "gate threshold for the summary");
  gen->add_flag("--inline", o.inline_spec, "store generator parameters instead of posterior files");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (bench->parsed()) return cmd_bench(o, out, err);
    if (sweep->parsed()) return cmd_grid(o, false, out);
    if (ablate->parsed()) return cmd_grid(o, true, out);
    return cmd_gen_corpus(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace ssd::cli
