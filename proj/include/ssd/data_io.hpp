#pragma once

// File formats: line-delimited JSON manifests, binary posterior tensors,
// run reports (JSON / CSV) and threshold-sweep grids (CSV).
//
// Posterior file layout, all little-endian:
//   offset 0   4 bytes  magic "SSDP"
//   offset 4   u16      version (1)
//   offset 6   u32      T, frame count
//   offset 10  u32      V, distribution width
//   offset 14  u32      frame duration in microseconds
//   offset 18  T*V f32  row-major probabilities

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ssd/ctc.hpp"
#include "ssd/error.hpp"
#include "ssd/metrics.hpp"
#include "ssd/toy_models.hpp"

namespace ssd::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Number formatting

// Shortest representation that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "inf" || s == "always") return std::numeric_limits<double>::infinity();
  if (s == "-inf" || s == "never") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kParse, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string format_tau_ctc(double tau) {
  if (tau == kGateAlways) return "always";
  if (tau == kGateNever) return "never";
  return format_double(tau);
}

// ---------------------------------------------------------------------------
// Posterior files

inline constexpr std::array<char, 4> kPosteriorMagic = {'S', 'S', 'D', 'P'};
inline constexpr std::uint16_t kPosteriorVersion = 1;
inline constexpr std::size_t kPosteriorHeaderBytes = 18;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_posteriors(const FramePosteriors& post) {
  std::string out(kPosteriorMagic.begin(), kPosteriorMagic.end());
  detail::put_le<std::uint16_t>(out, kPosteriorVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(post.num_frames()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(post.vocab_size()));
  detail::put_le<std::uint32_t>(
      out, static_cast<std::uint32_t>(std::llround(post.frame_duration_s() * 1e6)));
  out.reserve(out.size() + post.data().size() * 4);
  for (float f : post.data()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

// Row sums are checked against 1 with tolerance 1e-5.
inline FramePosteriors decode_posteriors(std::string_view bytes) {
  if (bytes.size() < kPosteriorHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kPosteriorMagic.data(), 4) != 0) {
      throw Error(ErrorKind::kBadMagic, "not a posterior file");
    }
    throw Error(ErrorKind::kTruncated, "posterior header is incomplete");
  }
  if (std::memcmp(bytes.data(), kPosteriorMagic.data(), 4) != 0) {
    throw Error(ErrorKind::kBadMagic, "not a posterior file");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = detail::get_le<std::uint16_t>(p + 4);
  if (version != kPosteriorVersion) {
    throw Error(ErrorKind::kUnsupportedVersion, "posterior version " + std::to_string(version));
  }
  const auto frames = detail::get_le<std::uint32_t>(p + 6);
  const auto width = detail::get_le<std::uint32_t>(p + 10);
  const auto frame_us = detail::get_le<std::uint32_t>(p + 14);

  const std::size_t payload = bytes.size() - kPosteriorHeaderBytes;
  if (payload % 4 != 0) throw Error(ErrorKind::kTruncated, "payload ends mid-float");
  const std::uint64_t expected = static_cast<std::uint64_t>(frames) * width;
  if (payload / 4 != expected) {
    throw Error(ErrorKind::kSizeMismatch, "header declares " + std::to_string(expected) +
                                              " floats, payload holds " + std::to_string(payload / 4));
  }

  std::vector<float> data(static_cast<std::size_t>(expected));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + kPosteriorHeaderBytes + 4 * i));
  }
  FramePosteriors post(frames, width, std::move(data), static_cast<double>(frame_us) * 1e-6);
  if (auto bad = post.first_invalid_row(1e-5); bad >= 0) {
    throw Error(ErrorKind::kRowSum, "row " + std::to_string(bad) + " is not a distribution");
  }
  return post;
}

inline void write_posteriors(const fs::path& path, const FramePosteriors& post) {
  detail::write_file(path, encode_posteriors(post));
}

inline FramePosteriors read_posteriors(const fs::path& path) {
  return decode_posteriors(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Manifests

struct SyntheticRef {
  toy::CorpusSpec spec;
  std::size_t index = 0;
};

struct ManifestRecord {
  std::string id;
  double audio_duration_s = 0.0;
  std::string reference;
  std::optional<std::string> posterior_path;  // relative to the manifest
  std::optional<SyntheticRef> synthetic;
};

inline json draft_params_json(const toy::DraftParams& p) {
  return json{{"temperature", p.temperature},
              {"blank_rate", p.blank_rate},
              {"repeat_rate", p.repeat_rate},
              {"label_noise", p.label_noise},
              {"confidence_jitter", p.confidence_jitter},
              {"corrupt_margin", p.corrupt_margin}};
}

inline toy::DraftParams draft_params_from_json(const json& j) {
  toy::DraftParams p;
  j.at("temperature").get_to(p.temperature);
  j.at("blank_rate").get_to(p.blank_rate);
  j.at("repeat_rate").get_to(p.repeat_rate);
  j.at("label_noise").get_to(p.label_noise);
  j.at("confidence_jitter").get_to(p.confidence_jitter);
  j.at("corrupt_margin").get_to(p.corrupt_margin);
  return p;
}

inline json record_to_json(const ManifestRecord& r) {
  json j{{"id", r.id}, {"audio_duration_s", r.audio_duration_s}, {"reference", r.reference}};
  if (r.posterior_path) j["posterior_path"] = *r.posterior_path;
  if (r.synthetic) {
    const auto& s = r.synthetic->spec;
    j["synthetic"] = json{{"seed", s.seed},
                          {"index", r.synthetic->index},
                          {"alphabet_size", s.alphabet_size},
                          {"min_len", s.min_len},
                          {"max_len", s.max_len},
                          {"draft", draft_params_json(s.draft)}};
  }
  return j;
}

inline ManifestRecord record_from_json(const json& j) {
  ManifestRecord r;
  j.at("id").get_to(r.id);
  j.at("audio_duration_s").get_to(r.audio_duration_s);
  j.at("reference").get_to(r.reference);
  if (j.contains("posterior_path")) r.posterior_path = j.at("posterior_path").get<std::string>();
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    SyntheticRef ref;
    s.at("seed").get_to(ref.spec.seed);
    s.at("index").get_to(ref.index);
    s.at("alphabet_size").get_to(ref.spec.alphabet_size);
    s.at("min_len").get_to(ref.spec.min_len);
    s.at("max_len").get_to(ref.spec.max_len);
    ref.spec.draft = draft_params_from_json(s.at("draft"));
    r.synthetic = ref;
  }
  return r;
}

inline std::string encode_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

// One JSON object per line; blank lines are skipped. Errors name the
// 1-based line number.
inline std::vector<ManifestRecord> decode_manifest(std::string_view text) {
  std::vector<ManifestRecord> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = "line " + std::to_string(line_no);
    ManifestRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, where + ": " + e.what());
    }
    if (r.posterior_path.has_value() == r.synthetic.has_value()) {
      throw Error(ErrorKind::kParse, where + ": need exactly one of posterior_path / synthetic");
    }
    if (!(r.audio_duration_s > 0.0)) {
      throw Error(ErrorKind::kParse, where + ": audio_duration_s must be > 0");
    }
    if (!seen.insert(r.id).second) {
      throw Error(ErrorKind::kDuplicateId, where + ": duplicate id '" + r.id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  detail::write_file(path, encode_manifest(records));
}

inline std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kIo, "no such manifest " + path.string());
  return decode_manifest(detail::read_file(path));
}

// Manifest records for a synthetic corpus. With `posterior_dir` set, every
// utterance's posteriors are written there and referenced by path;
// otherwise records carry the inline synthetic spec.
inline std::vector<ManifestRecord> manifest_for(const toy::Corpus& corpus,
                                                const std::optional<fs::path>& manifest_dir,
                                                const std::optional<std::string>& posterior_subdir) {
  std::vector<ManifestRecord> out;
  if (posterior_subdir) {
    std::error_code ec;
    fs::create_directories(manifest_dir.value_or(fs::path(".")) / *posterior_subdir, ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create posterior dir " + *posterior_subdir);
  }
  for (const auto& u : corpus.utterances) {
    if (!(u.audio_duration_s > 0.0)) {
      throw Error(ErrorKind::kInvalidInput, "utterance '" + u.id + "' has no audio and cannot be listed");
    }
    ManifestRecord r;
    r.id = u.id;
    r.audio_duration_s = u.audio_duration_s;
    r.reference = u.reference_text;
    if (posterior_subdir) {
      const std::string rel = *posterior_subdir + "/" + u.id + ".ssdp";
      write_posteriors(manifest_dir.value_or(fs::path(".")) / rel, u.posteriors);
      r.posterior_path = rel;
    } else {
      r.synthetic = SyntheticRef{corpus.spec, u.index};
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Rebuilds a toy corpus from manifest records. Context handles are record
// positions; the verifier learns each reference from its transcript.
inline toy::Corpus corpus_from_manifest(const std::vector<ManifestRecord>& records,
                                        const fs::path& manifest_dir,
                                        const toy::VerifierParams& verifier) {
  std::optional<std::size_t> alphabet_size;
  std::vector<toy::SyntheticUtterance> utts;
  toy::CorpusSpec spec;
  spec.verifier = verifier;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    toy::SyntheticUtterance u;
    std::size_t width = 0;
    if (r.synthetic) {
      u = toy::make_utterance(r.synthetic->spec, r.synthetic->index);
      width = r.synthetic->spec.alphabet_size + 1;
      spec.seed = r.synthetic->spec.seed;
      spec.min_len = r.synthetic->spec.min_len;
      spec.max_len = r.synthetic->spec.max_len;
      spec.draft = r.synthetic->spec.draft;
    } else {
      u.posteriors = read_posteriors(manifest_dir / *r.posterior_path);
      width = u.posteriors.vocab_size();
    }
    if (width < 3 && u.posteriors.num_frames() > 0) {
      throw Error(ErrorKind::kParse, "record '" + r.id + "': posterior width too small");
    }
    if (u.posteriors.num_frames() > 0 || r.synthetic) {
      if (alphabet_size && *alphabet_size != width - 1) {
        throw Error(ErrorKind::kParse, "record '" + r.id + "': inconsistent vocabulary size");
      }
      alphabet_size = width - 1;
    }
    u.id = r.id;
    u.index = i;
    u.reference_text = r.reference;
    u.context.handle = i;
    u.context.declared_length =
        (u.posteriors.num_frames() + toy::kContextDownsample - 1) / toy::kContextDownsample;
    u.audio_duration_s = r.audio_duration_s;
    utts.push_back(std::move(u));
  }
  spec.alphabet_size = alphabet_size.value_or(2);
  spec.n_utts = utts.size();
  WordTokenizer tokenizer(toy::alphabet(spec.alphabet_size));
  for (auto& u : utts) u.reference = tokenizer.encode(u.reference_text);
  return toy::bind_corpus(spec, std::move(utts));
}

inline toy::Corpus load_corpus(const fs::path& manifest, const toy::VerifierParams& verifier) {
  return corpus_from_manifest(read_manifest(manifest), manifest.parent_path(), verifier);
}

// ---------------------------------------------------------------------------
// Reports

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline json aggregates_json(const Aggregates& a) {
  return json{{"utterances", a.utterances},
              {"errors", a.errors},
              {"ctc_gate", a.ctc_gate},
              {"llm_verified", a.llm_verified},
              {"fallback", a.fallback},
              {"full_ar", a.full_ar},
              {"wer", a.wer},
              {"sub", a.wer_counts.sub},
              {"del", a.wer_counts.del},
              {"ins", a.wer_counts.ins},
              {"ref_words", a.wer_counts.ref_len},
              {"pct_c", a.pct_c},
              {"pct_l", a.pct_l},
              {"pct_l_overall", a.pct_l_overall},
              {"verifier_calls", a.verifier_calls},
              {"mean_calls", a.mean_calls},
              {"audio_s", a.audio_s},
              {"cost_tokens", a.cost_tokens}};
}

inline json record_json(const UtteranceRecord& r) {
  return json{{"id", r.id},
              {"source", std::string(to_string(r.source))},
              {"prefix_len", r.prefix_len},
              {"tokens", r.tokens},
              {"hypothesis", r.hypothesis},
              {"reference", r.reference},
              {"sub", r.wer.sub},
              {"del", r.wer.del},
              {"ins", r.wer.ins},
              {"ref_len", r.wer.ref_len},
              {"verifier_calls", r.verifier_calls},
              {"generated", r.generated},
              {"truncated", r.truncated},
              {"error", r.error},
              {"message", r.message},
              {"audio_s", r.audio_s},
              {"cost_tokens", r.cost_tokens}};
}

inline UtteranceRecord record_from_json_report(const json& j) {
  UtteranceRecord r;
  j.at("id").get_to(r.id);
  r.source = parse_source(j.at("source").get<std::string>());
  j.at("prefix_len").get_to(r.prefix_len);
  j.at("tokens").get_to(r.tokens);
  j.at("hypothesis").get_to(r.hypothesis);
  j.at("reference").get_to(r.reference);
  j.at("sub").get_to(r.wer.sub);
  j.at("del").get_to(r.wer.del);
  j.at("ins").get_to(r.wer.ins);
  j.at("ref_len").get_to(r.wer.ref_len);
  j.at("verifier_calls").get_to(r.verifier_calls);
  j.at("generated").get_to(r.generated);
  j.at("truncated").get_to(r.truncated);
  j.at("error").get_to(r.error);
  j.at("message").get_to(r.message);
  j.at("audio_s").get_to(r.audio_s);
  j.at("cost_tokens").get_to(r.cost_tokens);
  return r;
}

// Report body without any wall-clock fields; this is what the determinism
// hash covers.
inline json report_body_json(const RunReport& report) {
  json records = json::array();
  for (const auto& r : report.records) records.push_back(record_json(r));
  return json{{"label", report.label},
              {"aggregates", aggregates_json(report.aggregates())},
              {"records", records}};
}

inline json report_timing_json(const RunReport& report) {
  json phases = json::array();
  for (const auto& p : report.phases) {
    phases.push_back(json{{"phase", p.phase},
                          {"utterances", p.utterances},
                          {"batches", p.batches},
                          {"oversized_batches", p.oversized_batches},
                          {"wall_time_s", p.wall_time_s}});
  }
  json per_utt = json::object();
  for (const auto& r : report.records) per_utt[r.id] = r.wall_time_s;
  const Aggregates a = report.aggregates();
  return json{{"wall_time_s", a.wall_time_s}, {"rtfx", a.rtfx}, {"phases", phases}, {"utterances", per_utt}};
}

inline std::string determinism_hash(const RunReport& report) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(report_body_json(report).dump())));
  return buf;
}

inline json report_json(const RunReport& report) {
  json j = report_body_json(report);
  j["determinism_hash"] = determinism_hash(report);
  j["timing"] = report_timing_json(report);
  return j;
}

inline RunReport report_from_json(const json& j) {
  RunReport report;
  j.at("label").get_to(report.label);
  for (const auto& r : j.at("records")) report.records.push_back(record_from_json_report(r));
  if (j.contains("timing")) {
    const json& t = j.at("timing");
    if (t.contains("utterances")) {
      for (auto& r : report.records) {
        if (t.at("utterances").contains(r.id)) t.at("utterances").at(r.id).get_to(r.wall_time_s);
      }
    }
    if (t.contains("phases")) {
      for (const auto& p : t.at("phases")) {
        PhaseStats s;
        p.at("phase").get_to(s.phase);
        p.at("utterances").get_to(s.utterances);
        p.at("batches").get_to(s.batches);
        p.at("oversized_batches").get_to(s.oversized_batches);
        p.at("wall_time_s").get_to(s.wall_time_s);
        report.phases.push_back(s);
      }
    }
  }
  return report;
}

// CSV quoting: fields with a comma, quote or newline are wrapped in quotes
// and inner quotes doubled.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorKind::kParse, "unterminated quoted CSV field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline constexpr std::string_view kReportCsvHeader =
    "id,source,prefix_len,sub,del,ins,ref_len,verifier_calls,generated,truncated,error,audio_s,"
    "cost_tokens,wall_time_s,hypothesis,reference,message";

inline std::string report_csv(const RunReport& report) {
  std::string out(kReportCsvHeader);
  out.push_back('\n');
  for (const auto& r : report.records) {
    out += csv_field(r.id) + "," + std::string(to_string(r.source)) + "," +
           std::to_string(r.prefix_len) + "," + std::to_string(r.wer.sub) + "," +
           std::to_string(r.wer.del) + "," + std::to_string(r.wer.ins) + "," +
           std::to_string(r.wer.ref_len) + "," + std::to_string(r.verifier_calls) + "," +
           std::to_string(r.generated) + "," + (r.truncated ? "1" : "0") + "," +
           (r.error ? "1" : "0") + "," + format_double(r.audio_s) + "," +
           format_double(r.cost_tokens) + "," + format_double(r.wall_time_s) + "," +
           csv_field(r.hypothesis) + "," + csv_field(r.reference) + "," + csv_field(r.message) + "\n";
  }
  return out;
}

inline RunReport report_from_csv(std::string_view text, std::string label = {}) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw Error(ErrorKind::kParse, "report CSV has no header");
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  if (header != kReportCsvHeader) throw Error(ErrorKind::kParse, "unexpected report CSV header");
  RunReport report;
  report.label = std::move(label);
  auto to_size = [](const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); };
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 17) throw Error(ErrorKind::kParse, "report CSV row " + std::to_string(i + 1) + " has wrong width");
    UtteranceRecord r;
    r.id = f[0];
    r.source = parse_source(f[1]);
    r.prefix_len = to_size(f[2]);
    r.wer.sub = to_size(f[3]);
    r.wer.del = to_size(f[4]);
    r.wer.ins = to_size(f[5]);
    r.wer.ref_len = to_size(f[6]);
    r.verifier_calls = to_size(f[7]);
    r.generated = to_size(f[8]);
    r.truncated = f[9] == "1";
    r.error = f[10] == "1";
    r.audio_s = parse_double(f[11]);
    r.cost_tokens = parse_double(f[12]);
    r.wall_time_s = parse_double(f[13]);
    r.hypothesis = f[14];
    r.reference = f[15];
    r.message = f[16];
    report.records.push_back(std::move(r));
  }
  return report;
}

enum class ReportFormat { kJson, kCsv };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  throw Error(ErrorKind::kConfig, "unknown report format '" + std::string(s) + "'");
}

inline void write_report(const fs::path& path, const RunReport& report, ReportFormat format) {
  detail::write_file(path, format == ReportFormat::kJson ? report_json(report).dump(2) + "\n"
                                                         : report_csv(report));
}

inline RunReport read_report(const fs::path& path, ReportFormat format) {
  const std::string text = detail::read_file(path);
  if (format == ReportFormat::kCsv) return report_from_csv(text);
  try {
    return report_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

// ---------------------------------------------------------------------------
// Sweep grids

struct SweepRow {
  std::string mode;  // empty for plain sweeps
  double tau_ctc = 0.0;
  double tau_slm = 0.0;
  double wer = 0.0;
  double rtfx = 0.0;
  double pct_c = 0.0;
  double pct_l = 0.0;
  std::size_t calls = 0;
  double speedup = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

inline constexpr std::string_view kSweepCsvHeader = "tau_ctc,tau_slm,wer,rtfx,pct_c,pct_l,calls,speedup";

inline std::string sweep_csv(const std::vector<SweepRow>& rows, bool with_mode) {
  std::string out = with_mode ? "mode," : "";
  out += kSweepCsvHeader;
  out.push_back('\n');
  for (const auto& r : rows) {
    if (with_mode) out += r.mode + ",";
    out += format_tau_ctc(r.tau_ctc) + "," + format_double(r.tau_slm) + "," + format_double(r.wer) +
           "," + format_double(r.rtfx) + "," + format_double(r.pct_c) + "," +
           format_double(r.pct_l) + "," + std::to_string(r.calls) + "," +
           format_double(r.speedup) + "\n";
  }
  return out;
}

inline std::vector<SweepRow> sweep_from_csv(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw Error(ErrorKind::kParse, "sweep CSV has no header");
  const bool with_mode = !rows[0].empty() && rows[0][0] == "mode";
  const std::size_t width = with_mode ? 9 : 8;
  std::vector<SweepRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != width) throw Error(ErrorKind::kParse, "sweep CSV row " + std::to_string(i + 1) + " has wrong width");
    std::size_t k = 0;
    SweepRow r;
    if (with_mode) r.mode = f[k++];
    r.tau_ctc = parse_double(f[k++]);
    r.tau_slm = parse_double(f[k++]);
    r.wer = parse_double(f[k++]);
    r.rtfx = parse_double(f[k++]);
    r.pct_c = parse_double(f[k++]);
    r.pct_l = parse_double(f[k++]);
    r.calls = static_cast<std::size_t>(std::stoull(f[k++]));
    r.speedup = parse_double(f[k++]);
    out.push_back(r);
  }
  return out;
}

inline void write_sweep(const fs::path& path, const std::vector<SweepRow>& rows, bool with_mode) {
  detail::write_file(path, sweep_csv(rows, with_mode));
}

}  // namespace ssd::io
