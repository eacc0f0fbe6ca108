#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pms/dataio/motion.hpp"

namespace pms::data {

/// One sample: `observed` history frames, `target` frames to predict, and up
/// to 30 further frames for rollout supervision. Frames are views into the
/// shared source sequence.
class UnitWindow {
 public:
  UnitWindow(std::shared_ptr<const MotionSequence> source, std::size_t start, std::size_t observed,
             std::size_t target, std::size_t extended)
      : source_(std::move(source)), start_(start), observed_(observed), target_(target), extended_(extended) {
    if (start_ + observed_ + target_ + extended_ > source_->frames()) {
      throw DataError("window exceeds source sequence " + source_->name());
    }
  }

  const MotionSequence& source() const noexcept { return *source_; }
  const std::string& action() const noexcept { return source_->name(); }
  std::size_t start() const noexcept { return start_; }
  std::size_t observed_length() const noexcept { return observed_; }
  std::size_t target_length() const noexcept { return target_; }
  std::size_t extended_length() const noexcept { return extended_; }
  std::size_t pose_size() const noexcept { return source_->pose_size(); }
  std::size_t joints() const noexcept { return source_->joints(); }

  std::span<const double> observed(std::size_t i) const { return source_->frame(start_ + i); }
  std::span<const double> target(std::size_t i) const { return source_->frame(start_ + observed_ + i); }
  std::span<const double> extended_future(std::size_t i) const {
    return source_->frame(start_ + observed_ + target_ + i);
  }
  /// Frame i after the observation: target frames first, then extended ones.
  std::span<const double> future(std::size_t i) const { return source_->frame(start_ + observed_ + i); }
  std::size_t future_length() const noexcept { return target_ + extended_; }

 private:
  std::shared_ptr<const MotionSequence> source_;
  std::size_t start_;
  std::size_t observed_;
  std::size_t target_;
  std::size_t extended_;
};

/// Windows at starts 0, stride, 2·stride, ... wherever observed + target
/// frames fit; each carries min(extended, remaining) extra frames.
inline std::vector<UnitWindow> make_windows(std::shared_ptr<const MotionSequence> seq, std::size_t observed,
                                            std::size_t target, std::size_t extended = 30, std::size_t stride = 10) {
  if (observed == 0 || target == 0 || stride == 0) throw DataError("make_windows: K, L and stride must be positive");
  std::vector<UnitWindow> out;
  const std::size_t frames = seq->frames();
  for (std::size_t s = 0; s + observed + target <= frames; s += stride) {
    const std::size_t remaining = frames - s - observed - target;
    out.emplace_back(seq, s, observed, target, std::min(extended, remaining));
  }
  return out;
}

inline std::vector<UnitWindow> make_windows(const MotionSequence& seq, std::size_t observed, std::size_t target,
                                            std::size_t extended = 30, std::size_t stride = 10) {
  return make_windows(std::make_shared<const MotionSequence>(seq), observed, target, extended, stride);
}

}  // namespace pms::data
