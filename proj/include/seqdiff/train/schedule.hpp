#pragma once

#include <cstddef>
#include <limits>

namespace seqdiff::train {

/// Reduce-on-plateau over validation loss. `observe` is called once per
/// epoch; the returned lr applies to the next epoch.
class PlateauSchedule {
 public:
  enum class Event { improved, waiting, decayed, stop };

  PlateauSchedule(double lr, double factor, std::size_t patience, std::size_t max_decays)
      : lr_(lr), factor_(factor), patience_(patience), max_decays_(max_decays) {}

  /// Baseline loss before any training; improvement means strictly below it.
  void start(double loss) { best_ = loss; }

  Event observe(double loss) {
    if (loss < best_) {
      best_ = loss;
      stale_ = 0;
      decays_since_best_ = 0;
      return Event::improved;
    }
    if (++stale_ < patience_) return Event::waiting;
    stale_ = 0;
    if (decays_since_best_ >= max_decays_) return Event::stop;
    lr_ *= factor_;
    ++decays_since_best_;
    ++decays_;
    return Event::decayed;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t decays() const { return decays_; }

 private:
  double lr_, factor_;
  std::size_t patience_, max_decays_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
  std::size_t decays_since_best_ = 0;
  std::size_t decays_ = 0;
};

}  // namespace seqdiff::train
