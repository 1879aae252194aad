#include "objslam/association.hpp"

#include <doctest.h>

#include <random>

using namespace objslam;

namespace {

Mask rect(int w, int h, int x0, int y0, int x1, int y1) {
  Mask m(w, h, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m(x, y) = 1;
  return m;
}

Detection det(Mask m, std::vector<double> dist, double score = 0.9) {
  return {std::move(m), std::move(dist), score};
}

// Rectangles and sparse speckle so every overlap regime turns up.
Mask random_mask(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> kind(0, 3), cx(0, w - 1), cy(0, h - 1), ext(1, 30);
  Mask m(w, h, 0);
  if (kind(rng) == 0) {
    std::bernoulli_distribution on(0.3);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = on(rng);
    return m;
  }
  const int x0 = cx(rng), y0 = cy(rng);
  return rect(w, h, x0, y0, std::min(w, x0 + ext(rng)), std::min(h, y0 + ext(rng)));
}

}  // namespace

TEST_CASE("detection filter thresholds are strict") {
  const int w = 160, h = 120;
  SUBCASE("area exactly 2500 is dropped, 2600 kept") {
    auto a = det(rect(w, h, 30, 30, 80, 80), {0.51, 0.49});
    auto b = det(rect(w, h, 30, 30, 82, 80), {0.51, 0.49});
    CHECK(mask_area(a.mask) == 2500);
    CHECK(mask_area(b.mask) == 2600);
    const auto kept = filter_detections({a, b});
    REQUIRE(kept.size() == 1);
    CHECK(mask_area(kept[0].mask) == 2600);
  }
  SUBCASE("border band") {
    auto at19 = det(rect(w, h, 19, 30, 80, 90), {0.9, 0.1});
    auto at20 = det(rect(w, h, 20, 30, 80, 90), {0.9, 0.1});
    auto right = det(rect(w, h, 80, 30, w - 19, 90), {0.9, 0.1});
    auto bottom = det(rect(w, h, 30, 30, 90, h - 19), {0.9, 0.1});
    const auto kept = filter_detections({at19, at20, right, bottom});
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].mask(20, 30) == 1);
  }
  SUBCASE("class confidence must exceed one half") {
    const auto kept = filter_detections({det(rect(w, h, 30, 30, 90, 90), {0.5, 0.5}),
                                         det(rect(w, h, 30, 30, 90, 90), {0.51, 0.49})});
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].class_dist[0] == 0.51);
  }
  SUBCASE("only the 100 best scores survive") {
    std::vector<Detection> raw;
    for (int i = 0; i < 150; ++i) raw.push_back(det(rect(w, h, 30, 30, 90, 90), {1.0}, i / 150.0));
    const auto kept = filter_detections(raw);
    REQUIRE(kept.size() == 100);
    CHECK(kept.front().score == doctest::Approx(149 / 150.0));
    CHECK(kept.back().score == doctest::Approx(50 / 150.0));
  }
}

TEST_CASE("association examples") {
  const int w = 64, h = 64;
  const Mask a = rect(w, h, 10, 10, 30, 30);
  const Mask b = rect(w, h, 40, 40, 60, 60);
  const std::map<int, Mask> rendered{{3, a}, {7, b}};

  CHECK(detection_overlap(a, a) == 1.0);
  CHECK(detection_overlap(b, a) == 0.0);

  const auto r = associate({det(a, {1.0, 0.0}), det(rect(w, h, 0, 40, 5, 45), {1.0, 0.0})}, rendered);
  CHECK(r.assignment == std::vector<int>{3, -1});
  CHECK(r.unmatched.size() == 1);

  SUBCASE("two detections on one volume merge") {
    const Mask left = rect(w, h, 10, 10, 20, 30);
    const Mask right = rect(w, h, 20, 10, 30, 30);
    const auto m = associate({det(left, {1.0, 0.0}, 0.4), det(right, {0.0, 1.0}, 0.8)}, rendered);
    REQUIRE(m.matched.count(3) == 1);
    const Detection& d = m.matched.at(3);
    CHECK(d.class_dist == std::vector<double>{0.5, 0.5});
    CHECK(d.mask == mask_union(left, right));
    CHECK(d.score == 0.8);
    CHECK(m.unmatched.empty());
  }
  SUBCASE("overlap of exactly 0.2 is not enough") {
    const Mask d = rect(w, h, 26, 10, 46, 15);  // 100 px, 20 inside a
    CHECK(detection_overlap(a, d) == 0.2);
    CHECK(associate({det(d, {1.0})}, rendered).assignment[0] == -1);
  }
  SUBCASE("equal overlap goes to the lowest id") {
    const std::map<int, Mask> twins{{9, a}, {4, a}};
    CHECK(associate({det(a, {1.0})}, twins).assignment[0] == 4);
  }
}

TEST_CASE("association equals brute-force evaluation on random masks") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> nd(0, 6), no(0, 6), ids(1, 40);
  const int w = 64, h = 64;
  for (int config = 0; config < 500; ++config) {
    std::map<int, Mask> rendered;
    const int n_obj = no(rng);
    while (static_cast<int>(rendered.size()) < n_obj) rendered[ids(rng)] = random_mask(rng, w, h);
    if (!rendered.empty() && config % 5 == 0) rendered[41] = rendered.begin()->second;  // tie
    std::vector<Detection> dets;
    const int n_det = nd(rng);
    for (int i = 0; i < n_det; ++i) {
      Mask m = random_mask(rng, w, h);
      if (!rendered.empty() && i % 3 == 0) {
        // Perturb a rendered mask so large overlaps are common.
        auto it = rendered.begin();
        std::advance(it, static_cast<long>(rng() % rendered.size()));
        m = it->second;
        for (int k = 0; k < 50; ++k) m[rng() % m.size()] ^= 1;
      }
      dets.push_back(det(m, {1.0}));
    }
    const auto res = associate(dets, rendered);
    REQUIRE(res.assignment.size() == dets.size());
    std::size_t matched_inputs = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      // Same denominator for every object, so argmax compares raw counts;
      // a > 1/5 is checked exactly as 5 |M_o n M_i| > |M_i|.
      long area = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) area += dets[i].mask(x, y) != 0;
      int expect = -1;
      long best = -1;
      for (const auto& [id, mo] : rendered) {
        long inter = 0;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) inter += (mo(x, y) != 0 && dets[i].mask(x, y) != 0);
        if (5 * inter > area && inter > best) {
          best = inter;
          expect = id;
        }
      }
      CHECK(res.assignment[i] == expect);
      matched_inputs += expect >= 0;
    }
    CHECK(res.unmatched.size() + matched_inputs == dets.size());
  }
}
