#include "fairdispatch/trips.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fairdispatch/util.hpp"

namespace fairdispatch {

namespace {

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
  const std::string s = trim(text);
  // YYYY-MM-DD[ T]HH:MM:SS
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' ||
      (s[10] != ' ' && s[10] != 'T') || s[13] != ':' || s[16] != ':')
    return std::nullopt;
  auto num = [&](int pos, int len) -> std::optional<int> {
    int v = 0;
    for (int i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  auto year = num(0, 4), month = num(5, 2), day = num(8, 2);
  auto hour = num(11, 2), minute = num(14, 2), second = num(17, 2);
  if (!year || !month || !day || !hour || !minute || !second) return std::nullopt;
  if (*month < 1 || *month > 12 || *day < 1 || *day > 31 || *hour > 23 ||
      *minute > 59 || *second > 59)
    return std::nullopt;
  return days_from_civil(*year, *month, *day) * 86400 + *hour * 3600 +
         *minute * 60 + *second;
}

ParsedTrips parse_trip_records(const std::string& path, const BoundingBox& bbox,
                               const TripColumns& columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trips: cannot read " + path);

  std::string header_line;
  if (!std::getline(in, header_line))
    throw std::runtime_error("trips: empty file " + path);
  const auto header = split_csv_line(header_line);
  auto col_index = [&](const std::string& name) -> int {
    for (size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return static_cast<int>(i);
    return -1;
  };
  const int c_ptime = col_index(columns.pickup_time);
  const int c_plon = col_index(columns.pickup_lon);
  const int c_plat = col_index(columns.pickup_lat);
  const int c_dlon = col_index(columns.dropoff_lon);
  const int c_dlat = col_index(columns.dropoff_lat);
  const int c_duration = col_index(columns.travel_time);
  const int c_dtime = col_index(columns.dropoff_time);
  if (c_ptime < 0 || c_plon < 0 || c_plat < 0 || c_dlon < 0 || c_dlat < 0)
    throw std::runtime_error("trips: missing required columns in " + path);
  if (c_duration < 0 && c_dtime < 0)
    throw std::runtime_error(
        "trips: need either a travel-time or a dropoff-time column in " + path);

  ParsedTrips out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++out.report.parsed;
    const auto fields = split_csv_line(line);
    const int needed = std::max({c_ptime, c_plon, c_plat, c_dlon, c_dlat,
                                 std::max(c_duration, c_dtime)});
    if (static_cast<int>(fields.size()) <= needed) {
      ++out.report.dropped_malformed;
      continue;
    }
    RawTrip trip;
    auto ptime = parse_timestamp(fields[c_ptime]);
    auto plon = parse_double(trim(fields[c_plon]));
    auto plat = parse_double(trim(fields[c_plat]));
    auto dlon = parse_double(trim(fields[c_dlon]));
    auto dlat = parse_double(trim(fields[c_dlat]));
    if (!ptime || !plon || !plat || !dlon || !dlat) {
      ++out.report.dropped_malformed;
      continue;
    }
    std::optional<double> duration;
    if (c_duration >= 0) {
      duration = parse_double(trim(fields[c_duration]));
    } else {
      auto dtime = parse_timestamp(fields[c_dtime]);
      if (dtime) duration = static_cast<double>(*dtime - *ptime);
    }
    if (!duration || *duration < 0.0) {
      ++out.report.dropped_malformed;
      continue;
    }
    if (!bbox.contains(*plon, *plat) || !bbox.contains(*dlon, *dlat)) {
      ++out.report.dropped_bbox;
      continue;
    }
    trip.pickup_time = *ptime;
    trip.pickup_lon = *plon;
    trip.pickup_lat = *plat;
    trip.dropoff_lon = *dlon;
    trip.dropoff_lat = *dlat;
    trip.travel_time = *duration;
    out.trips.push_back(trip);
  }
  return out;
}

std::vector<RawTrip> filter_time_of_day(const std::vector<RawTrip>& trips,
                                        int start_second, int end_second) {
  std::vector<RawTrip> out;
  for (const RawTrip& t : trips) {
    const int sod = static_cast<int>(((t.pickup_time % 86400) + 86400) % 86400);
    if (sod >= start_second && sod < end_second) out.push_back(t);
  }
  return out;
}

NodeMap::NodeMap(double merge_radius, const std::vector<RawTrip>& trips)
    : merge_radius_(merge_radius) {
  if (merge_radius <= 0.0)
    throw std::invalid_argument("node map: merge_radius must be positive");
  for (const RawTrip& t : trips) {
    cells_[cell_of(t.pickup_lon, t.pickup_lat)] = 0;
    cells_[cell_of(t.dropoff_lon, t.dropoff_lat)] = 0;
  }
  NodeId next = 0;
  for (auto& [cell, id] : cells_) id = next++;  // std::map: sorted cell order
}

std::pair<std::int64_t, std::int64_t> NodeMap::cell_of(double lon,
                                                       double lat) const {
  return {static_cast<std::int64_t>(std::floor(lon / merge_radius_)),
          static_cast<std::int64_t>(std::floor(lat / merge_radius_))};
}

std::optional<NodeId> NodeMap::node_of(double lon, double lat) const {
  auto it = cells_.find(cell_of(lon, lat));
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

BuiltGraph build_graph(const std::vector<RawTrip>& trips, double merge_radius) {
  if (trips.empty()) throw std::invalid_argument("build_graph: no trips");
  NodeMap node_map(merge_radius, trips);

  std::map<std::pair<NodeId, NodeId>, std::pair<double, int>> sums;
  for (const RawTrip& t : trips) {
    const NodeId i = *node_map.node_of(t.pickup_lon, t.pickup_lat);
    const NodeId j = *node_map.node_of(t.dropoff_lon, t.dropoff_lat);
    if (i == j) continue;
    auto& [sum, count] = sums[{i, j}];
    sum += t.travel_time;
    ++count;
  }
  std::vector<Edge> edges;
  edges.reserve(sums.size());
  for (const auto& [pair, acc] : sums)
    edges.push_back({pair.first, pair.second, acc.first / acc.second});
  return {CityGraph(node_map.num_nodes(), std::move(edges)), std::move(node_map)};
}

BuiltTimeline build_request_timeline(const std::vector<RawTrip>& trips,
                                     const NodeMap& node_map,
                                     double batch_seconds,
                                     std::optional<std::int64_t> t_start) {
  if (batch_seconds <= 0.0)
    throw std::invalid_argument("timeline: batch_seconds must be positive");
  BuiltTimeline out;
  if (trips.empty()) return out;

  std::int64_t start = t_start.value_or(
      std::min_element(trips.begin(), trips.end(), [](auto& a, auto& b) {
        return a.pickup_time < b.pickup_time;
      })->pickup_time);
  out.t_start = start;

  struct Pending {
    int t;
    NodeId s, d;
  };
  std::vector<Pending> pending;
  for (const RawTrip& trip : trips) {
    auto s = node_map.node_of(trip.pickup_lon, trip.pickup_lat);
    auto d = node_map.node_of(trip.dropoff_lon, trip.dropoff_lat);
    if (!s || !d)
      throw std::invalid_argument("timeline: node map does not cover a trip");
    if (trip.pickup_time < start)
      throw std::invalid_argument("timeline: trip before t_start");
    if (*s == *d) {
      ++out.report.dropped_same_node;
      continue;
    }
    const int t = static_cast<int>(
        std::floor(static_cast<double>(trip.pickup_time - start) / batch_seconds));
    pending.push_back({t, *s, *d});
  }
  int steps = 0;
  for (const Pending& p : pending) steps = std::max(steps, p.t + 1);
  out.timeline.resize(steps);
  // Ids are step-major so they are stable under per-step regrouping.
  std::stable_sort(pending.begin(), pending.end(),
                   [](const Pending& a, const Pending& b) { return a.t < b.t; });
  int next_id = 0;
  for (const Pending& p : pending) {
    out.timeline[p.t].push_back({next_id++, p.t, p.s, p.d});
    ++out.report.requests;
  }
  return out;
}

HorizonSplit split_horizon(const Timeline& timeline, int delta, int n) {
  if (delta < 0 || n < 0)
    throw std::invalid_argument("split_horizon: negative window");
  const int span = static_cast<int>(timeline.size());
  if (span < delta + 1 + n)
    throw std::invalid_argument("split_horizon: timeline spans " +
                                std::to_string(span) + " steps, need " +
                                std::to_string(delta + 1 + n));
  HorizonSplit split;
  split.delta = delta;
  split.historical.assign(timeline.begin(), timeline.begin() + delta);
  split.current.assign(timeline.begin() + delta, timeline.begin() + delta + 1);
  split.future.assign(timeline.begin() + delta + 1,
                      timeline.begin() + delta + 1 + n);
  return split;
}

Timeline sample_timeline(const Timeline& timeline, double rate,
                         std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0)
    throw std::invalid_argument("sample_timeline: rate outside [0, 1]");
  Timeline out(timeline.size());
  Rng rng = make_rng(mix_seed(seed, 0x5a39));
  for (size_t t = 0; t < timeline.size(); ++t) {
    const auto& bucket = timeline[t];
    const size_t keep = static_cast<size_t>(
        std::llround(rate * static_cast<double>(bucket.size())));
    if (keep >= bucket.size()) {
      out[t] = bucket;
      continue;
    }
    // Partial Fisher-Yates over indices, then restore arrival order.
    std::vector<size_t> idx(bucket.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (size_t i = 0; i < keep; ++i) {
      size_t j = i + rand_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    for (size_t i : idx) out[t].push_back(bucket[i]);
  }
  return out;
}

void save_timeline(const Timeline& timeline, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("timeline: cannot write " + path);
  out << "t_r,s_r,d_r\n";
  for (const auto& bucket : timeline)
    for (const Request& r : bucket)
      out << r.t << "," << r.origin << "," << r.dest << "\n";
}

Timeline load_timeline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("timeline: cannot read " + path);
  Timeline timeline;
  std::string line;
  bool first = true;
  int next_id = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (first) {
      first = false;
      if (line.find("t_r") != std::string::npos) continue;  // header
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw std::runtime_error("timeline: malformed line: " + line);
    const int t = std::stoi(fields[0]);
    const NodeId s = std::stoi(fields[1]);
    const NodeId d = std::stoi(fields[2]);
    if (t < 0) throw std::runtime_error("timeline: negative timestep");
    if (static_cast<int>(timeline.size()) <= t) timeline.resize(t + 1);
    timeline[t].push_back({next_id++, t, s, d});
  }
  return timeline;
}

}  // namespace fairdispatch
