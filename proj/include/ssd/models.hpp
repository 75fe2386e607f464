#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ssd/ctc.hpp"
#include "ssd/error.hpp"
#include "ssd/verifier.hpp"

namespace ssd {

// Produces frame posteriors for an utterance (the CTC head of the encoder).
class DraftModel {
 public:
  virtual ~DraftModel() = default;
  virtual FramePosteriors posteriors(const AcousticContext& ctx) const = 0;
  virtual double frame_duration_s() const = 0;
};

// Draft model backed by precomputed posteriors, keyed by context handle.
class PosteriorTable final : public DraftModel {
 public:
  explicit PosteriorTable(double frame_duration_s = 0.08) : frame_duration_s_(frame_duration_s) {}

  void add(std::uint64_t handle, FramePosteriors post) { table_[handle] = std::move(post); }

  FramePosteriors posteriors(const AcousticContext& ctx) const override {
    auto it = table_.find(ctx.handle);
    if (it == table_.end()) {
      throw Error(ErrorKind::kModel, "no posteriors for context " + std::to_string(ctx.handle));
    }
    return it->second;
  }
  double frame_duration_s() const override { return frame_duration_s_; }
  std::size_t size() const { return table_.size(); }

 private:
  double frame_duration_s_;
  std::map<std::uint64_t, FramePosteriors> table_;
};

// One utterance as the pipeline sees it.
struct Utterance {
  std::string id;
  std::string reference;  // reference transcript
  AcousticContext context;
  double audio_duration_s = 0.0;
  std::size_t num_frames = 0;
};

}  // namespace ssd
