#pragma once

#include <compare>
#include <cstdint>
#include <vector>

namespace fairdispatch {

using NodeId = std::int32_t;

// A driver travelling on an edge is at no node and cannot be assigned.
inline constexpr NodeId kInTransit = -1;

// One rider trip demand, raised at timestep `t` from `origin` to `dest`.
struct Request {
  int id = 0;
  int t = 0;
  NodeId origin = 0;
  NodeId dest = 0;
};

// Ordered (origin, destination) pair; the forecasting unit.
struct OdPair {
  NodeId origin = 0;
  NodeId dest = 0;
  friend bool operator==(const OdPair&, const OdPair&) = default;
  friend auto operator<=>(const OdPair&, const OdPair&) = default;
};

// One assignment event. `driver_node` is the driver's location when the
// request was assigned, so the utility can be recomputed in a replay.
struct AssignmentRecord {
  int request_id = 0;
  int driver_id = 0;
  int step = 0;
  NodeId origin = 0;
  NodeId dest = 0;
  NodeId driver_node = 0;
  double utility = 0.0;
};

// Requests grouped by timestep; index = timestep relative to the timeline
// start. Buckets may be empty.
using Timeline = std::vector<std::vector<Request>>;

}  // namespace fairdispatch
