#pragma once

// Tick-quantized delay channel with uniform jitter and Bernoulli loss.
//
// One channel carries one direction. Delivery tick = send tick +
// round(delay / dt) + j, with j drawn uniformly from [-J, J] ticks,
// J = round(jitter / dt). Messages due at the same tick come out in seq order.

#include "isru/errors.hpp"
#include "isru/rng.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace isru::link {

struct ChannelConfig {
  double delay_each_way = 0.0;   // s
  double jitter = 0.0;           // s, half-width of the uniform distribution
  double loss_probability = 0.0;
  double tick_rate = 100.0;      // Hz
  std::uint64_t seed = 0;

  void validate() const {
    if (!(delay_each_way >= 0.0)) throw BadConfig("channel: delay must be >= 0");
    if (!(jitter >= 0.0) || jitter > delay_each_way) throw BadConfig("channel: need 0 <= jitter <= delay");
    if (!(loss_probability >= 0.0 && loss_probability <= 1.0)) throw BadConfig("channel: loss_probability must be in [0, 1]");
    if (!(tick_rate > 0.0)) throw BadConfig("channel: tick_rate must be > 0");
  }

  std::int64_t delay_ticks() const { return std::llround(delay_each_way * tick_rate); }
  std::int64_t jitter_ticks() const { return std::llround(jitter * tick_rate); }
};

struct LinkStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t max_in_flight = 0;
};

/// Msg must expose a public `seq` member (u64).
template <class Msg>
class DelayChannel {
 public:
  explicit DelayChannel(ChannelConfig cfg = {}) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

  const ChannelConfig& config() const { return cfg_; }

  /// Schedules `msg` or drops it. Returns the delivery tick, or -1 when dropped.
  std::int64_t push(Msg msg, std::int64_t now_tick) {
    ++stats_.sent;
    // Both draws happen on every push so the random stream does not depend on outcomes.
    const double u = rng_.uniform();
    const std::int64_t J = cfg_.jitter_ticks();
    const std::int64_t j = J > 0 ? rng_.uniform_int(-J, J) : 0;
    if (u < cfg_.loss_probability) {
      ++stats_.dropped;
      return -1;
    }
    const std::int64_t deliver = std::max(now_tick, now_tick + cfg_.delay_ticks() + j);
    const std::uint64_t seq = msg.seq;
    queue_.emplace(Key{deliver, seq, order_++}, std::move(msg));
    stats_.max_in_flight = std::max<std::uint64_t>(stats_.max_in_flight, queue_.size());
    return deliver;
  }

  /// Everything due at or before now_tick, by delivery tick then seq.
  std::vector<Msg> poll(std::int64_t now_tick) {
    std::vector<Msg> out;
    auto it = queue_.begin();
    while (it != queue_.end() && it->first.deliver <= now_tick) {
      out.push_back(std::move(it->second));
      it = queue_.erase(it);
    }
    stats_.delivered += out.size();
    return out;
  }

  std::size_t in_flight() const { return queue_.size(); }
  const LinkStats& stats() const { return stats_; }

 private:
  struct Key {
    std::int64_t deliver;
    std::uint64_t seq;
    std::uint64_t order;
    bool operator<(const Key& o) const {
      if (deliver != o.deliver) return deliver < o.deliver;
      if (seq != o.seq) return seq < o.seq;
      return order < o.order;
    }
  };

  ChannelConfig cfg_;
  Rng rng_;
  std::map<Key, Msg> queue_;
  std::uint64_t order_ = 0;
  LinkStats stats_;
};

template <class Msg>
LinkStats link_stats(const DelayChannel<Msg>& ch) {
  return ch.stats();
}

}  // namespace isru::link
