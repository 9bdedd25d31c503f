#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairdispatch/graph.hpp"
#include "fairdispatch/types.hpp"

namespace fairdispatch {

/// One parsed trip record. Times are epoch seconds, coordinates degrees.
struct RawTrip {
  std::int64_t pickup_time = 0;
  double pickup_lon = 0.0;
  double pickup_lat = 0.0;
  double dropoff_lon = 0.0;
  double dropoff_lat = 0.0;
  double travel_time = 0.0;  // seconds
};

struct BoundingBox {
  double min_lon = -180.0;
  double min_lat = -90.0;
  double max_lon = 180.0;
  double max_lat = 90.0;

  bool contains(double lon, double lat) const {
    return lon >= min_lon && lon <= max_lon && lat >= min_lat && lat <= max_lat;
  }
};

/// Column names in the trip-record CSV. Defaults match the public yellow-taxi
/// schema. Travel time comes from `travel_time` when present in the file,
/// otherwise from dropoff_time - pickup_time.
struct TripColumns {
  std::string pickup_time = "tpep_pickup_datetime";
  std::string dropoff_time = "tpep_dropoff_datetime";
  std::string pickup_lon = "pickup_longitude";
  std::string pickup_lat = "pickup_latitude";
  std::string dropoff_lon = "dropoff_longitude";
  std::string dropoff_lat = "dropoff_latitude";
  std::string travel_time = "trip_duration";  // optional column
};

struct ParseReport {
  int parsed = 0;
  int dropped_bbox = 0;
  int dropped_malformed = 0;
};

struct ParsedTrips {
  std::vector<RawTrip> trips;
  ParseReport report;
};

/// Parses "YYYY-MM-DD HH:MM:SS" (or with a 'T' separator) into epoch seconds.
std::optional<std::int64_t> parse_timestamp(const std::string& text);

/// Reads a comma-separated trip file. In-bbox, parseable rows are returned in
/// file order; malformed and out-of-bbox rows are counted, not fatal. A
/// missing file or missing required columns is a fatal input error.
ParsedTrips parse_trip_records(const std::string& path, const BoundingBox& bbox,
                               const TripColumns& columns = {});

/// Keeps trips whose pickup second-of-day lies in [start, end). Used for the
/// peak-window extraction.
std::vector<RawTrip> filter_time_of_day(const std::vector<RawTrip>& trips,
                                        int start_second, int end_second);

/// Maps coordinates to merged nodes: coordinates snap to a square grid of
/// cell size `merge_radius` degrees and each nonempty cell is one node.
/// Node ids are assigned in sorted cell order, so the mapping does not
/// depend on trip order.
class NodeMap {
 public:
  NodeMap() = default;
  NodeMap(double merge_radius, const std::vector<RawTrip>& trips);

  std::optional<NodeId> node_of(double lon, double lat) const;
  int num_nodes() const { return static_cast<int>(cells_.size()); }
  double merge_radius() const { return merge_radius_; }

 private:
  std::pair<std::int64_t, std::int64_t> cell_of(double lon, double lat) const;

  double merge_radius_ = 0.0;
  std::map<std::pair<std::int64_t, std::int64_t>, NodeId> cells_;
};

struct BuiltGraph {
  CityGraph graph;
  NodeMap node_map;
};

/// Grid-clusters trip endpoints into nodes and connects cell i to cell j
/// whenever some trip goes i -> j, with distance = mean travel time over
/// those trips. Self-loop pairs contribute no edge.
BuiltGraph build_graph(const std::vector<RawTrip>& trips, double merge_radius);

struct TimelineReport {
  int requests = 0;
  int dropped_same_node = 0;
};

struct BuiltTimeline {
  Timeline timeline;
  TimelineReport report;
  std::int64_t t_start = 0;
};

/// Buckets trips into request batches: t_r = floor((pickup - t_start) /
/// batch_seconds). Same-node trips are dropped and counted. `t_start`
/// defaults to the earliest pickup time.
BuiltTimeline build_request_timeline(const std::vector<RawTrip>& trips,
                                     const NodeMap& node_map,
                                     double batch_seconds,
                                     std::optional<std::int64_t> t_start = {});

/// Contiguous, disjoint, ordered split of a timeline into the historical
/// window (delta steps), the current step, and the future window (n steps).
struct HorizonSplit {
  Timeline historical;
  Timeline current;  // exactly one bucket
  Timeline future;
  int delta = 0;
};

HorizonSplit split_horizon(const Timeline& timeline, int delta, int n);

/// Per-timestep uniform subsampling (stratum = timestep): each bucket keeps
/// round(rate * size) requests chosen without replacement.
Timeline sample_timeline(const Timeline& timeline, double rate,
                         std::uint64_t seed);

/// Requests file: header line then one `t_r,s_r,d_r` triple per line.
void save_timeline(const Timeline& timeline, const std::string& path);
Timeline load_timeline(const std::string& path);

}  // namespace fairdispatch
