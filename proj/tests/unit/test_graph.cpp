#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "tsgcn/graph.hpp"

using namespace tsgcn;

namespace {

JointLayout make_layout(std::size_t n, std::vector<Edge> edges) {
  return JointLayout{"g" + std::to_string(n), n, std::move(edges), 0};
}

// Random valid layout: spanning tree plus a few extra distinct edges.
JointLayout random_layout(std::mt19937_64& rng) {
  const std::size_t n = 1 + rng() % 12;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<Edge> edges;
  for (std::size_t v = 1; v < n; ++v) {
    const std::size_t u = rng() % v;
    edges.emplace_back(u, v);
    seen.insert({u, v});
  }
  for (std::size_t extra = rng() % 5; n > 2 && extra > 0; --extra) {
    std::size_t a = rng() % n, b = rng() % n;
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (seen.insert({a, b}).second) edges.emplace_back(b, a);
  }
  return make_layout(n, edges);
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("neighbor sets of a 3-joint chain") {
    const auto g = build_graph(make_layout(3, {{0, 1}, {1, 2}}));
    CHECK(g.neighbors(0) == std::vector<std::size_t>{0, 1});
    CHECK(g.neighbors(1) == std::vector<std::size_t>{0, 1, 2});
    CHECK(g.neighbors(2) == std::vector<std::size_t>{1, 2});
  }

  TEST_CASE("single joint has itself as only neighbor") {
    const auto g = build_graph(make_layout(1, {}));
    CHECK(g.neighbors(0) == std::vector<std::size_t>{0});
  }

  TEST_CASE("COCO-18 nose neighbor count follows the edge list") {
    const auto layout = coco18_layout();
    std::size_t degree = 0;
    for (const auto& [a, b] : layout.edges) degree += (a == 0) + (b == 0);
    CHECK(degree == 3);  // neck and both eyes
    CHECK(build_graph(layout).neighbors(0).size() == 1 + degree);
  }

  TEST_CASE("raw adjacency examples") {
    const auto chain = adjacency(build_graph(make_layout(3, {{0, 1}, {1, 2}})));
    CHECK(chain.raw == Tensor({3, 3}, std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1, 0}));
    CHECK(chain.normalized.size() == 0);
    CHECK(adjacency(build_graph(make_layout(2, {}))).raw == Tensor({2, 2}, 0.0));
  }

  TEST_CASE("raw adjacency is symmetric and matches the edge list on 100 random layouts") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const auto layout = random_layout(rng);
      const auto raw = adjacency(build_graph(layout)).raw;
      const std::size_t n = layout.joint_count;
      std::set<std::pair<std::size_t, std::size_t>> edges;
      for (auto [a, b] : layout.edges) edges.insert({std::min(a, b), std::max(a, b)});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          REQUIRE(raw(i, j) == raw(j, i));
          const bool edge = edges.count({std::min(i, j), std::max(i, j)}) > 0;
          REQUIRE(raw(i, j) == (edge ? 1.0 : 0.0));
        }
    }
  }

  TEST_CASE("normalized adjacency examples") {
    const auto two = normalized_adjacency(make_layout(2, {{0, 1}}));
    CHECK(testing::max_abs_diff(two, Tensor({2, 2}, 0.5)) <= 1e-15);
    CHECK(normalized_adjacency(make_layout(1, {})) == Tensor({1, 1}, 1.0));
    const auto chain = normalized_adjacency(make_layout(3, {{0, 1}, {1, 2}}));
    CHECK(chain(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(chain(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
    CHECK(chain(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(chain(0, 2) == 0.0);
  }

  TEST_CASE("row sums are positive everywhere and exactly 1 on regular graphs") {
    auto row_sums = [](const Tensor& a) {
      std::vector<double> s(a.dim(0), 0.0);
      for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) s[i] += a(i, j);
      return s;
    };
    for (double s : row_sums(normalized_adjacency(make_layout(2, {{0, 1}})))) CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    const auto cycle = normalized_adjacency(make_layout(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
    for (double s : row_sums(cycle)) CHECK(s == doctest::Approx(1.0).epsilon(1e-15));

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial)
      for (double s : row_sums(normalized_adjacency(random_layout(rng)))) CHECK(s > 0.0);

    // Symmetric normalization does not bound row sums by 1 on irregular graphs:
    // a 3-leaf star hub gives 1/4 + 3/sqrt(8), each leaf 1/2 + 1/sqrt(8).
    const auto star = row_sums(normalized_adjacency(make_layout(4, {{0, 1}, {0, 2}, {0, 3}})));
    CHECK(star[0] == doctest::Approx(0.25 + 3.0 / std::sqrt(8.0)).epsilon(1e-15));
    CHECK(star[1] == doctest::Approx(0.5 + 1.0 / std::sqrt(8.0)).epsilon(1e-15));
  }

  TEST_CASE("normalized adjacency is symmetric with entries in [0, 1]") {
    std::mt19937_64 rng(9);
    for (const auto& layout : {coco18_layout(), kinect20_layout(), random_layout(rng), random_layout(rng)}) {
      const auto a = normalized_adjacency(layout);
      for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) {
          CHECK(std::abs(a(i, j) - a(j, i)) <= 1e-15);
          CHECK(a(i, j) >= 0.0);
          CHECK(a(i, j) <= 1.0);
        }
    }
  }

  TEST_CASE("edgeless graph normalizes to the identity") {
    const auto a = normalized_adjacency(make_layout(4, {}));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(a(i, j) == (i == j ? 1.0 : 0.0));
  }

  TEST_CASE("invalid edges are rejected") {
    CHECK_THROWS(build_graph(make_layout(2, {{0, 2}})));
    CHECK_THROWS(build_graph(make_layout(2, {{1, 1}})));
    CHECK_THROWS(build_graph(make_layout(3, {{0, 1}, {1, 0}})));
  }
}
