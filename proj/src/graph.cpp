#include "fairdispatch/graph.hpp"

#include <fstream>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace fairdispatch {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

CityGraph::CityGraph(int num_nodes, std::vector<Edge> edges)
    : num_nodes_(num_nodes), edges_(std::move(edges)) {
  if (num_nodes_ < 0) throw std::invalid_argument("graph: negative node count");
  for (const Edge& e : edges_) {
    check_node(e.from);
    check_node(e.to);
    if (e.distance < 0.0)
      throw std::invalid_argument("graph: negative edge distance");
  }
  compute_all_pairs();
}

void CityGraph::check_node(NodeId node) const {
  if (node < 0 || node >= num_nodes_)
    throw std::out_of_range("graph: unknown node id " + std::to_string(node));
}

void CityGraph::compute_all_pairs() {
  std::vector<std::vector<std::pair<NodeId, double>>> adj(num_nodes_);
  for (const Edge& e : edges_) adj[e.from].emplace_back(e.to, e.distance);

  dist_.assign(num_nodes_, std::vector<double>(num_nodes_, kInf));
  using Item = std::pair<double, NodeId>;
  for (NodeId src = 0; src < num_nodes_; ++src) {
    auto& dist = dist_[src];
    dist[src] = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.emplace(0.0, src);
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      for (auto [v, w] : adj[u]) {
        if (d + w < dist[v]) {
          dist[v] = d + w;
          heap.emplace(dist[v], v);
        }
      }
    }
  }
}

std::optional<double> CityGraph::shortest_distance(NodeId from, NodeId to) const {
  check_node(from);
  check_node(to);
  double d = dist_[from][to];
  if (d == kInf) return std::nullopt;
  return d;
}

std::optional<double> CityGraph::trip_utility(NodeId driver_node,
                                              const Request& r) const {
  auto trip = shortest_distance(r.origin, r.dest);
  auto deadhead = shortest_distance(driver_node, r.origin);
  if (!trip || !deadhead) return std::nullopt;
  return *trip - *deadhead;
}

void CityGraph::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("graph: cannot write " + path);
  out << "nodes=" << num_nodes_ << "\n";
  out.precision(17);
  for (const Edge& e : edges_)
    out << e.from << " " << e.to << " " << e.distance << "\n";
}

CityGraph CityGraph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("graph: cannot read " + path);
  std::string header;
  if (!std::getline(in, header) || header.rfind("nodes=", 0) != 0)
    throw std::runtime_error("graph: missing nodes= header in " + path);
  int num_nodes = std::stoi(header.substr(6));
  std::vector<Edge> edges;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Edge e;
    if (!(row >> e.from >> e.to >> e.distance))
      throw std::runtime_error("graph: malformed edge line: " + line);
    edges.push_back(e);
  }
  return CityGraph(num_nodes, std::move(edges));
}

}  // namespace fairdispatch
