#ifndef SPINN_TESTS_SCHED_ORACLE_HPP_
#define SPINN_TESTS_SCHED_ORACLE_HPP_

// Brute-force reference for the scheduler. Metrics are rebuilt per sample
// from the raw profiles (no stop counts, no shared cost model) and the
// selection follows the lexicographic definition step by step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "spinn/bundle.hpp"
#include "spinn/scheduler.hpp"
#include "test_util.hpp"

namespace spinn::testing {

struct OracleMetrics {
  double v[kMetricCount] = {0, 0, 0, 0, 0};
  double get(Metric m) const { return v[static_cast<std::size_t>(m)]; }
};

struct OracleCandidate {
  std::uint32_t split_index = 0;
  std::uint32_t thr_index = 0;
  LayerId split_layer = 0;
  double thr = 0.0;
  OracleMetrics m;
};

// Progressive execution with fallback continuation, every exit active.
class TimingOracle {
 public:
  explicit TimingOracle(const Bundle& b) : b_(b) {
    const std::size_t n = b.graph().num_layers();
    dev_.assign(n + 1, 0.0);
    srv_.assign(n + 1, 0.0);
    for (LayerId l = 1; l <= n; ++l) {
      dev_[l] = dev_[l - 1] + b.device().layer_ms.at(l);
      srv_[l] = srv_[l - 1] + b.server().layer_ms.at(l);
      for (const ExitPoint& x : b.graph().exits()) {
        if (x.layer_id == l) {
          dev_[l] += b.device().exit_ms.at(x.exit_id);
          srv_[l] += b.server().exit_ms.at(x.exit_id);
        }
      }
    }
  }

  ExitId stop_of(const SampleTrace& s, double thr) const {
    for (ExitId e = 0; e < s.num_exits(); ++e) {
      if (s.confidence[e] > thr) return e;
    }
    return static_cast<ExitId>(s.num_exits() - 1);
  }

  // Decision seeing exits 0..last only.
  static ExitId decide(const SampleTrace& s, double thr, ExitId last) {
    ExitId best = 0;
    for (ExitId e = 0; e <= last; ++e) {
      if (s.confidence[e] > thr) return e;
      if (s.confidence[e] > s.confidence[best]) best = e;
    }
    return best;
  }

  OracleMetrics metrics(LayerId split, double thr, const SplitTransfer& tr, double ratio,
                        const Conditions& c) const {
    const auto& exits = b_.graph().exits();
    // Without a next exit every sample stops on the device.
    ExitId next = 0;
    for (const ExitPoint& x : exits) {
      if (x.layer_id > split) {
        next = x.exit_id;
        break;
      }
    }
    // Transfer plan.
    double up_bytes = static_cast<double>(tr.raw_wire_bytes);
    double pack = 0.0;
    if (tr.raw_wire_bytes > 0 && c.allow_compression && ratio > 0.0) {
      const double p = static_cast<double>(tr.raw_tensor_bytes) / c.pack_bytes_per_ms;
      bool yes;
      if (c.bandwidth_mbps > 0.0) {
        const double raw = static_cast<double>(tr.raw_wire_bytes) * 8.0 / 1000.0 /
                           c.bandwidth_mbps;
        yes = p + raw / ratio < raw;
      } else {
        yes = ratio > 1.0;
      }
      if (yes) {
        pack = p;
        up_bytes = static_cast<double>(tr.raw_wire_bytes) / ratio;
      }
    }
    const auto wire = [&](double bytes) {
      if (bytes <= 0.0) return 0.0;
      if (c.bandwidth_mbps <= 0.0) return std::numeric_limits<double>::infinity();
      return bytes * 8.0 / 1000.0 / c.bandwidth_mbps;
    };
    const double up = wire(up_bytes);
    const double down = wire(33.0);

    double sl = 0, sd = 0, sn = 0, ss = 0;
    std::uint64_t correct = 0;
    const auto& samples = b_.exits().samples;
    for (const SampleTrace& s : samples) {
      const ExitId stop = stop_of(s, thr);
      const LayerId stop_layer = exits[stop].layer_id;
      double lat = 0, dev = 0, net = 0, srv = 0;
      if (stop_layer <= split) {
        lat = dev = c.device_sf * dev_[stop_layer];
        correct += s.correct[decide(s, thr, static_cast<ExitId>(s.num_exits() - 1))];
      } else if (!c.server_available) {
        const double fb = c.device_sf * dev_[exits[next].layer_id];
        lat = dev = fb;
        correct += s.correct[decide(s, thr, next)];
      } else {
        correct += s.correct[decide(s, thr, static_cast<ExitId>(s.num_exits() - 1))];
        const double t_split = c.device_sf * dev_[split];
        const double t_start = t_split + pack + c.latency_ms + up;
        const double work = c.server_sf * (srv_[stop_layer] - srv_[split]);
        const double t_remote = t_start + work + c.latency_ms + down;
        const double fb = c.device_sf * dev_[exits[next].layer_id];
        if (stop == next && fb <= t_remote) {
          lat = dev = fb;
          const double cancel_at = fb + c.latency_ms;
          srv = std::min(std::max(cancel_at - t_start, 0.0), work);
          net = pack + up + (t_start + work <= cancel_at ? down : 0.0);
        } else {
          lat = t_remote;
          srv = work;
          net = pack + up + down;
          if (t_remote >= fb) {
            dev = fb;
          } else {
            // The device stops at the first layer boundary at or after the
            // remote result.
            dev = fb;
            for (LayerId l = split + 1; l <= exits[next].layer_id; ++l) {
              if (dev_[l] >= t_remote / c.device_sf) {
                dev = c.device_sf * dev_[l];
                break;
              }
            }
          }
        }
      }
      sl += lat;
      sd += dev;
      sn += net;
      ss += srv;
    }
    const double n = static_cast<double>(samples.size());
    OracleMetrics m;
    m.v[static_cast<std::size_t>(Metric::kLatency)] = sl / n;
    const double bottleneck = std::max(std::max(sd / n, sn / n), ss / n);
    m.v[static_cast<std::size_t>(Metric::kThroughput)] =
        bottleneck > 0.0 ? 1000.0 / bottleneck : std::numeric_limits<double>::max();
    m.v[static_cast<std::size_t>(Metric::kServerCost)] = ss / n;
    m.v[static_cast<std::size_t>(Metric::kDeviceCost)] = sd / n;
    m.v[static_cast<std::size_t>(Metric::kAccuracy)] = static_cast<double>(correct) / n;
    return m;
  }

 private:
  const Bundle& b_;
  std::vector<double> dev_;
  std::vector<double> srv_;
};

inline bool oracle_close(double a, double b) {
  return a == b || std::fabs(a - b) <= 1e-9 * std::max(std::fabs(a), std::fabs(b));
}

inline std::vector<OracleCandidate> oracle_candidates(const Bundle& b, const SearchSpace& space,
                                                      const std::vector<SplitTransfer>& tr,
                                                      const RatioTracker& ratios,
                                                      const Conditions& c) {
  const TimingOracle t(b);
  std::vector<OracleCandidate> out;
  for (const std::uint32_t si : space.split_indices) {
    for (const std::uint32_t ti : space.thr_indices) {
      OracleCandidate k;
      k.split_index = si;
      k.thr_index = ti;
      k.split_layer = b.splits()[si].layer_id;
      k.thr = b.thresholds()[ti];
      k.m = t.metrics(k.split_layer, k.thr, tr[si], ratios.estimate(si), c);
      out.push_back(k);
    }
  }
  return out;
}

// Lexicographic choice: hard constraints in order (an emptying constraint and
// all after it turn into violation objectives placed first), then each
// objective keeps only the candidates attaining its minimum.
inline OracleCandidate oracle_select(const std::vector<OracleCandidate>& all,
                                     const SlaSpec& sla) {
  std::vector<OracleCandidate> set = all;
  struct Obj {
    Metric metric;
    int kind;  // 0 min, 1 max, 2 |m - v|, 3 violation of (op, v)
    CompareOp op;
    double v;
  };
  std::vector<Obj> objs;
  for (std::size_t k = 0; k < sla.hard.size(); ++k) {
    const HardConstraint& h = sla.hard[k];
    std::vector<OracleCandidate> keep;
    for (const auto& x : set) {
      const double m = x.m.get(h.metric);
      bool ok = false;
      switch (h.op) {
        case CompareOp::kLe: ok = m <= h.thr; break;
        case CompareOp::kLt: ok = m < h.thr; break;
        case CompareOp::kGe: ok = m >= h.thr; break;
        case CompareOp::kGt: ok = m > h.thr; break;
        case CompareOp::kEq: ok = oracle_close(m, h.thr); break;
      }
      if (ok) keep.push_back(x);
    }
    if (keep.empty()) {
      for (std::size_t j = k; j < sla.hard.size(); ++j) {
        objs.push_back({sla.hard[j].metric, 3, sla.hard[j].op, sla.hard[j].thr});
      }
      break;
    }
    set = std::move(keep);
  }
  for (const SoftTarget& t : sla.soft) {
    const int kind = t.mode == SoftMode::kMin ? 0 : t.mode == SoftMode::kMax ? 1 : 2;
    objs.push_back({t.metric, kind, CompareOp::kLe, t.value});
  }
  const auto f = [](const Obj& o, double m) {
    switch (o.kind) {
      case 0: return m;
      case 1: return -m;
      case 2: return std::fabs(m - o.v);
      default:
        if (o.op == CompareOp::kLe || o.op == CompareOp::kLt) return m > o.v ? m - o.v : 0.0;
        if (o.op == CompareOp::kGe || o.op == CompareOp::kGt) return o.v > m ? o.v - m : 0.0;
        return std::fabs(m - o.v);
    }
  };
  for (const Obj& o : objs) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : set) best = std::min(best, f(o, x.m.get(o.metric)));
    std::vector<OracleCandidate> keep;
    for (const auto& x : set) {
      const double v = f(o, x.m.get(o.metric));
      if (v <= best || oracle_close(v, best)) keep.push_back(x);
    }
    set = std::move(keep);
  }
  // Ties: least server time, then the deepest split, then the highest
  // threshold.
  OracleCandidate pick = set.front();
  for (const auto& x : set) {
    const double a = x.m.get(Metric::kServerCost);
    const double p = pick.m.get(Metric::kServerCost);
    bool better;
    if (!oracle_close(a, p)) {
      better = a < p;
    } else if (x.split_layer != pick.split_layer) {
      better = x.split_layer > pick.split_layer;
    } else {
      better = x.thr > pick.thr;
    }
    if (better) pick = x;
  }
  return pick;
}

// Thresholds sit halfway between distinct candidate values so that no
// candidate lands on a boundary; some lie outside the range to force
// relaxation.
inline double pick_threshold(std::mt19937_64& rng, std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<double> d;
  for (double v : values) {
    if (d.empty() || std::fabs(v - d.back()) > 1e-6 * std::max(1.0, std::fabs(v))) d.push_back(v);
  }
  const int slot = std::uniform_int_distribution<int>(0, static_cast<int>(d.size()))(rng);
  if (slot == 0) return d.front() - 0.5 * std::max(1e-3, std::fabs(d.front()));
  if (slot == static_cast<int>(d.size())) return d.back() + 0.5 * std::max(1e-3, std::fabs(d.back()));
  return 0.5 * (d[slot - 1] + d[slot]);
}

inline SlaSpec random_sla(std::mt19937_64& rng, const std::vector<OracleCandidate>& cands) {
  std::uniform_int_distribution<int> metric_pick(0, static_cast<int>(kMetricCount) - 1);
  const auto column = [&](Metric m) {
    std::vector<double> v;
    for (const auto& c : cands) v.push_back(c.m.get(m));
    return v;
  };
  SlaSpec sla;
  const int hard = std::uniform_int_distribution<int>(0, 3)(rng);
  for (int i = 0; i < hard; ++i) {
    HardConstraint h;
    h.metric = static_cast<Metric>(metric_pick(rng));
    const int op = std::uniform_int_distribution<int>(0, 9)(rng);
    if (op == 9) {
      h.op = CompareOp::kEq;
      const auto& c = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
      h.thr = c.m.get(h.metric);
    } else {
      constexpr CompareOp ops[] = {CompareOp::kLe, CompareOp::kGe, CompareOp::kLt, CompareOp::kGt};
      h.op = ops[op % 4];
      h.thr = pick_threshold(rng, column(h.metric));
    }
    sla.hard.push_back(h);
  }
  std::vector<int> order(kMetricCount);
  for (std::size_t i = 0; i < kMetricCount; ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  const int soft = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int i = 0; i < soft; ++i) {
    SoftTarget t;
    t.metric = static_cast<Metric>(order[static_cast<std::size_t>(i)]);
    const int mode = std::uniform_int_distribution<int>(0, 2)(rng);
    t.mode = mode == 0 ? SoftMode::kMin : mode == 1 ? SoftMode::kMax : SoftMode::kValue;
    if (t.mode == SoftMode::kValue) t.value = pick_threshold(rng, column(t.metric));
    sla.soft.push_back(t);
  }
  return sla;
}

inline Conditions random_conditions(std::mt19937_64& rng) {
  Conditions c;
  c.device_sf = uniform(rng, 0.5, 3.0);
  c.server_sf = uniform(rng, 0.5, 4.0);
  c.latency_ms = uniform(rng, 0.0, 80.0);
  c.bandwidth_mbps = log_uniform(rng, 0.2, 2000.0);
  c.server_available = uniform(rng, 0.0, 1.0) > 0.15;
  c.allow_compression = uniform(rng, 0.0, 1.0) > 0.3;
  c.pack_bytes_per_ms = log_uniform(rng, 1e3, 1e6);
  return c;
}

}  // namespace spinn::testing

#endif  // SPINN_TESTS_SCHED_ORACLE_HPP_
