// Copyright (c) 2026 The pcbreid Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "pcb/diagnose.hpp"
#include "pcb/partition.hpp"

using namespace pcb;
using namespace pcb::diagnose;
namespace fs = std::filesystem;

namespace {

/// Every fiber of stripe i is the basis vector e_i.
ActivationTensor orthogonal_stripes(int rows, int cols, int parts) {
  ActivationTensor t(rows, cols, parts);
  for (int m = 0; m < rows; ++m) {
    for (int c = 0; c < cols; ++c) t.fiber(m, c)[partition::stripe_of_row(m, rows, parts)] = 1.0;
  }
  return t;
}

PartMap stripes(int rows, int cols, int parts) {
  PartMap map{rows, cols, parts, MapSource::kNearestPart, {}, {}};
  for (int m = 0; m < rows; ++m) {
    for (int c = 0; c < cols; ++c) map.labels.push_back(partition::stripe_of_row(m, rows, parts));
  }
  map.flagged.assign(map.labels.size(), false);
  return map;
}

}  // namespace

TEST_SUITE("diagnose") {
  TEST_CASE("orthogonal stripes reproduce the stripe layout; swapping two fibers flips two cells") {
    ActivationTensor t = orthogonal_stripes(6, 2, 3);
    const Matrix g = partition::uniform_pool(t, 3);
    const PartMap map = nearest_part_map(t, g);
    CHECK(map.labels == stripes(6, 2, 3).labels);
    CHECK(outlier_rate(map) == 0.0);

    const RowVector a = t.fiber(0, 1);
    t.fiber(0, 1) = t.fiber(5, 1);
    t.fiber(5, 1) = a;
    const PartMap swapped = nearest_part_map(t, g);
    CHECK(swapped.at(0, 1) == 2);
    CHECK(swapped.at(5, 1) == 0);
    CHECK(outlier_rate(swapped) == doctest::Approx(2.0 / 12.0));
  }

  TEST_CASE("p = 1 labels every cell 0") {
    testing::Gen gen(81);
    const ActivationTensor t = gen.tensor(5, 3, 4);
    const PartMap map = nearest_part_map(t, partition::uniform_pool(t, 1));
    CHECK(std::all_of(map.labels.begin(), map.labels.end(), [](int l) { return l == 0; }));
    CHECK(outlier_rate(map) == 0.0);
  }

  TEST_CASE("property: nearest-part labels lie in range and ties pick the lowest part") {
    testing::Gen gen(82);
    for (int trial = 0; trial < 50; ++trial) {
      const int p = gen.uniform_int(1, 4);
      const ActivationTensor t = gen.tensor(p * gen.uniform_int(1, 3), gen.uniform_int(1, 3), gen.uniform_int(1, 5));
      const PartMap map = nearest_part_map(t, partition::uniform_pool(t, p));
      CHECK_NOTHROW(map.validate());
      const double rate = outlier_rate(map);
      CHECK(rate >= 0.0);
      CHECK(rate <= 1.0);
    }
    ActivationTensor t(2, 1, 2);
    t.fiber(0, 0) << 1, 1;
    t.fiber(1, 0) << 1, 1;
    Matrix g(2, 2);
    g << 1, 0, 0, 1;
    const PartMap map = nearest_part_map(t, g);
    CHECK(map.labels == std::vector<int>{0, 0});
  }

  TEST_CASE("a zero-norm fiber keeps its stripe and is flagged") {
    ActivationTensor t = orthogonal_stripes(4, 1, 2);
    t.fiber(3, 0).setZero();
    const PartMap map = nearest_part_map(t, partition::uniform_pool(t, 2));
    CHECK(map.flagged[3]);
    CHECK(map.at(3, 0) == 1);
    CHECK(std::count(map.flagged.begin(), map.flagged.end(), true) == 1);
    CHECK_THROWS_AS(nearest_part_map(t, Matrix::Zero(2, 3)), ShapeError);
  }

  TEST_CASE("argmax map of a uniform assignment labels every cell 0 with equal masses") {
    const rpp::PartAssignment a{4, 2, Matrix::Constant(8, 4, 0.25)};
    const RppMapReport r = rpp_argmax_map(a);
    CHECK(std::all_of(r.map.labels.begin(), r.map.labels.end(), [](int l) { return l == 0; }));
    for (double m : r.masses) CHECK(m == doctest::Approx(2.0));
    CHECK(r.empty_count() == 0);
    // Identical columns are duplicates of each other.
    CHECK(r.duplicates.size() == 6);
    CHECK(r.collapsed());
  }

  TEST_CASE("argmax map of the one-hot stripe assignment is the stripe layout") {
    const rpp::PartAssignment a = rpp::stripe_assignment(8, 3, 4);
    const RppMapReport r = rpp_argmax_map(a);
    CHECK(r.map.labels == stripes(8, 3, 4).labels);
    for (double m : r.masses) CHECK(m == doctest::Approx(8.0 * 3.0 / 4.0));
    CHECK(r.counts == std::vector<int>{6, 6, 6, 6});
    CHECK_FALSE(r.collapsed());
  }

  TEST_CASE("near-zero mass parts are flagged empty") {
    Matrix probs = Matrix::Zero(10, 3);
    probs.col(0).setConstant(0.5);
    probs.col(1).setConstant(0.5 - 0.005);
    probs.col(2).setConstant(0.005);
    probs.block(0, 1, 5, 1).setConstant(0.0);
    probs.block(0, 0, 5, 1).setConstant(0.995);
    const RppMapReport r = rpp_argmax_map({10, 1, probs});
    CHECK(r.empty == std::vector<bool>{false, false, true});
    CHECK(r.empty_count() == 1);
    CHECK(r.collapsed());
    const RppMapReport lax = rpp_argmax_map({10, 1, probs}, {0.001, 0.95});
    CHECK(lax.empty_count() == 0);
  }

  TEST_CASE("property: argmax masses sum to M*N and counts sum to M*N") {
    testing::Gen gen(83);
    for (int trial = 0; trial < 50; ++trial) {
      const int rows = gen.uniform_int(1, 6);
      const int cols = gen.uniform_int(1, 4);
      const rpp::PartAssignment a = gen.assignment(rows, cols, gen.uniform_int(1, 6));
      const RppMapReport r = rpp_argmax_map(a);
      double mass = 0.0;
      for (double m : r.masses) mass += m;
      CHECK(mass == doctest::Approx(rows * cols).epsilon(1e-9));
      CHECK(std::accumulate(r.counts.begin(), r.counts.end(), 0) == rows * cols);
      CHECK_NOTHROW(r.map.validate());
    }
  }

  TEST_CASE("band boundaries follow the layout and the down-sampling factor") {
    const ingest::BandLayout layout{4, 2};
    const std::vector<double> b = band_boundaries(layout, 48, 4);
    REQUIRE(b.size() == 3);
    CHECK(b[0] == doctest::Approx(14.0 / 4.0));
    CHECK(b[1] == doctest::Approx(26.0 / 4.0));
    CHECK(b[2] == doctest::Approx(38.0 / 4.0));
    CHECK_THROWS_AS(band_boundaries({1, 0}, 48, 4), ConfigError);
  }

  TEST_CASE("boundary error is zero for a matching stripe layout and counts row offsets") {
    const std::vector<double> truth{3.0, 6.0, 9.0};
    CHECK(boundary_error(stripes(12, 4, 4), truth) == 0.0);
    CHECK(uniform_boundary_error(12, 4, 4, truth) == 0.0);
    const std::vector<double> shifted{4.0, 7.0, 10.0};
    CHECK(uniform_boundary_error(12, 4, 4, shifted) == doctest::Approx(1.0));
    PartMap map = stripes(12, 1, 4);
    map.labels[3] = 0;  // first boundary moves down by one row
    CHECK(boundary_error(map, truth) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(boundary_error(map, std::vector<double>{3.0}), ConfigError);
  }

  TEST_CASE("grid files round-trip and PNGs are written") {
    testing::Gen gen(84);
    PartMap map{5, 3, 4, MapSource::kRppArgmax, {}, std::vector<bool>(15, false)};
    for (int i = 0; i < 15; ++i) map.labels.push_back(gen.uniform_int(0, 3));
    const fs::path dir = testing::scratch_dir("grid");
    write_grid(map, dir / "m.txt");
    CHECK(read_grid(dir / "m.txt") == map);
    write_png(map, dir / "m.png", 4);
    std::ifstream png(dir / "m.png", std::ios::binary);
    char sig[8] = {};
    png.read(sig, 8);
    CHECK(std::string(sig + 1, 3) == "PNG");
    PartMap bad = map;
    bad.labels[0] = 4;
    CHECK_THROWS_AS(write_grid(bad, dir / "bad.txt"), ShapeError);
  }

  TEST_CASE("sweep report: one row per value, JSON round-trip, CSV and SVG") {
    const std::vector<std::string> values{"1", "2", "4", "6"};
    std::vector<retrieval::EvalResult> results(4);
    for (int i = 0; i < 4; ++i) {
      results[i].cmc = {0.1 * (i + 1), 0.2 * (i + 1)};
      results[i].map = 0.05 * (i + 1);
      results[i].evaluated = 10;
    }
    const std::vector<int> flags{0, 0, 1, 3};
    const SweepReport report = sweep_report("p", values, results, flags);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.rows[2].value == "4");
    CHECK(report.rows[2].rank1 == doctest::Approx(0.3));
    CHECK(report.rows[3].collapse_flags == 3);
    CHECK(SweepReport::from_json(report.to_json()) == report);
    const std::string csv = report.to_csv();
    CHECK(csv.starts_with("p,rank1,mAP,evaluated,skipped,collapse_flags\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(report.to_svg().find("<svg") != std::string::npos);
    const fs::path dir = testing::scratch_dir("sweep");
    write_sweep(report, dir);
    CHECK(fs::exists(dir / "sweep.json"));
    CHECK(fs::exists(dir / "sweep.csv"));
    CHECK(fs::exists(dir / "sweep.svg"));
    CHECK_THROWS_AS(sweep_report("p", std::span(values).first(3), results), ConfigError);
    CHECK_THROWS_AS(sweep_report("p", values, results, std::vector<int>{1}), ConfigError);
    CHECK_THROWS_AS(SweepReport::from_json("{"), DataError);
  }

  TEST_CASE("analyze reports nearest maps for PCB and refined maps with boundaries for RPP") {
    ingest::SyntheticOptions o;
    o.num_ids = 4;
    o.imgs_per_id = 4;
    o.shift_rows = 3;
    const ingest::DatasetManifest manifest = ingest::generate_synthetic(o);
    const auto samples = manifest.split(ingest::Split::kTrain);
    const ingest::ChannelStats stats = ingest::channel_stats(manifest);
    ModelConfig c;
    c.head.parts = 4;
    c.head.num_classes = 2;
    c.head.reduced_dim = 8;
    Model pcb(c, 1);
    const ModelDiagnosis d = analyze(pcb, samples, stats);
    REQUIRE(d.images.size() == samples.size());
    CHECK_FALSE(d.images[0].refined.has_value());
    CHECK(d.mean_outlier_rate >= 0.0);

    Model refined = rpp::build_rpp_head(pcb, true);
    const ModelDiagnosis r = analyze(refined, samples, stats);
    REQUIRE(r.images[0].refined.has_value());
    REQUIRE(r.mean_boundary_error.has_value());
    REQUIRE(r.mean_uniform_boundary_error.has_value());
    // Wc = 0: uniform assignment, every cell labeled 0.
    CHECK(r.collapsed_images == static_cast<int>(samples.size()));
    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j.contains("mean_outlier_rate"));
  }
}
