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

#include "pcb/diagnose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pcb/partition.hpp"

namespace pcb::diagnose {

namespace {

constexpr std::array<std::array<int, 3>, 12> kMapPalette{{
    {230, 25, 75},
    {60, 180, 75},
    {255, 225, 25},
    {0, 130, 200},
    {245, 130, 48},
    {145, 30, 180},
    {70, 240, 240},
    {240, 50, 230},
    {210, 245, 60},
    {250, 190, 212},
    {0, 128, 128},
    {170, 110, 40},
}};

}  // namespace

std::string to_string(MapSource source) {
  return source == MapSource::kNearestPart ? "nearest_part" : "rpp_argmax";
}

MapSource map_source_from_string(const std::string& name) {
  if (name == "nearest_part") return MapSource::kNearestPart;
  if (name == "rpp_argmax") return MapSource::kRppArgmax;
  throw DataError("unknown part map source: " + name);
}

void PartMap::validate() const {
  if (rows < 1 || cols < 1 || parts < 1) throw ShapeError("part map needs positive extents");
  const auto n = static_cast<std::size_t>(rows) * cols;
  if (labels.size() != n || flagged.size() != n) throw ShapeError("part map size does not match its extents");
  for (int l : labels) {
    if (l < 0 || l >= parts) throw ShapeError("part label " + std::to_string(l) + " outside [0, " + std::to_string(parts) + ")");
  }
}

PartMap nearest_part_map(const ActivationTensor& tensor, const Matrix& parts) {
  if (parts.cols() != tensor.channels()) throw ShapeError("part vectors and tensor disagree on channels");
  const int p = static_cast<int>(parts.rows());
  if (p < 1 || p > tensor.rows()) throw ShapeError("part count must lie in [1, M]");
  PartMap map{tensor.rows(), tensor.cols(), p, MapSource::kNearestPart, {}, {}};
  map.labels.resize(static_cast<std::size_t>(tensor.locations()));
  map.flagged.assign(map.labels.size(), false);

  Matrix unit = parts;
  for (int i = 0; i < p; ++i) {
    const double n = unit.row(i).norm();
    if (n > 0.0) unit.row(i) /= n;
  }
  for (int m = 0; m < tensor.rows(); ++m) {
    for (int c = 0; c < tensor.cols(); ++c) {
      const auto idx = static_cast<std::size_t>(m) * tensor.cols() + c;
      const auto f = tensor.fiber(m, c);
      const double norm = f.norm();
      if (norm == 0.0) {
        map.labels[idx] = partition::stripe_of_row(m, tensor.rows(), p);
        map.flagged[idx] = true;
        continue;
      }
      int best = 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < p; ++i) {
        const double sim = unit.row(i).dot(f) / norm;
        if (sim > best_sim) {
          best_sim = sim;
          best = i;
        }
      }
      map.labels[idx] = best;
    }
  }
  return map;
}

double outlier_rate(const PartMap& map) {
  map.validate();
  if (map.rows % map.parts != 0) throw ShapeError("outlier rate needs M divisible by p");
  std::size_t outliers = 0;
  for (int m = 0; m < map.rows; ++m) {
    const int stripe = partition::stripe_of_row(m, map.rows, map.parts);
    for (int c = 0; c < map.cols; ++c) outliers += map.at(m, c) != stripe;
  }
  return static_cast<double>(outliers) / static_cast<double>(map.labels.size());
}

int RppMapReport::empty_count() const {
  return static_cast<int>(std::count(empty.begin(), empty.end(), true));
}

RppMapReport rpp_argmax_map(const rpp::PartAssignment& assignment, const CollapseOptions& options) {
  const int p = assignment.parts();
  const auto n = static_cast<Eigen::Index>(assignment.rows) * assignment.cols;
  if (p < 1 || assignment.probs.rows() != n) throw ShapeError("assignment shape does not match its extents");
  RppMapReport report;
  report.map = PartMap{assignment.rows, assignment.cols, p, MapSource::kRppArgmax, {}, {}};
  report.map.labels.resize(static_cast<std::size_t>(n));
  report.map.flagged.assign(static_cast<std::size_t>(n), false);
  report.counts.assign(p, 0);
  for (Eigen::Index f = 0; f < n; ++f) {
    int best = 0;
    for (int i = 1; i < p; ++i) {
      if (assignment.probs(f, i) > assignment.probs(f, best)) best = i;
    }
    report.map.labels[static_cast<std::size_t>(f)] = best;
    ++report.counts[best];
  }
  const RowVector masses = assignment.masses();
  report.masses.assign(masses.data(), masses.data() + p);
  const double threshold = options.empty_fraction * static_cast<double>(n);
  for (int i = 0; i < p; ++i) report.empty.push_back(report.masses[i] < threshold);
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      if (report.empty[i] || report.empty[j]) continue;
      const auto a = assignment.probs.col(i);
      const auto b = assignment.probs.col(j);
      const double denom = a.norm() * b.norm();
      if (denom > 0.0 && a.dot(b) / denom > options.duplicate_cosine) report.duplicates.emplace_back(i, j);
    }
  }
  return report;
}

std::vector<double> band_boundaries(const ingest::BandLayout& layout, int image_height, int downsample) {
  if (layout.bands < 2) throw ConfigError("band layout needs at least 2 bands");
  if (downsample < 1) throw ConfigError("down-sampling factor must be positive");
  std::vector<double> out;
  for (int k = 1; k < layout.bands; ++k) out.push_back(layout.boundary_row(k, image_height) / downsample);
  return out;
}

double boundary_error(const PartMap& map, std::span<const double> boundaries) {
  map.validate();
  if (static_cast<int>(boundaries.size()) != map.parts - 1) {
    throw ConfigError("boundary error needs " + std::to_string(map.parts - 1) + " ground-truth boundaries, got " +
                      std::to_string(boundaries.size()));
  }
  if (boundaries.empty()) return 0.0;
  double total = 0.0;
  for (int c = 0; c < map.cols; ++c) {
    for (std::size_t k = 1; k <= boundaries.size(); ++k) {
      int above = 0;
      for (int m = 0; m < map.rows; ++m) above += map.at(m, c) < static_cast<int>(k);
      total += std::abs(above - boundaries[k - 1]);
    }
  }
  return total / (static_cast<double>(map.cols) * boundaries.size());
}

double uniform_boundary_error(int rows, int cols, int parts, std::span<const double> boundaries) {
  PartMap map{rows, cols, parts, MapSource::kNearestPart, {}, {}};
  for (int m = 0; m < rows; ++m) {
    for (int c = 0; c < cols; ++c) map.labels.push_back(partition::stripe_of_row(m, rows, parts));
  }
  map.flagged.assign(map.labels.size(), false);
  return boundary_error(map, boundaries);
}

void write_png(const PartMap& map, const std::filesystem::path& path, int cell) {
  map.validate();
  if (cell < 1) throw ConfigError("cell size must be positive");
  const int h = map.rows * cell;
  const int w = map.cols * cell;
  Image image(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto& color = kMapPalette[map.at(y / cell, x / cell) % kMapPalette.size()];
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = color[c] / 255.0;
    }
  }
  ingest::write_image(image, path);
}

void write_grid(const PartMap& map, const std::filesystem::path& path) {
  map.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# source=" << to_string(map.source) << " parts=" << map.parts << '\n';
  for (int m = 0; m < map.rows; ++m) {
    for (int c = 0; c < map.cols; ++c) out << (c ? " " : "") << map.at(m, c);
    out << '\n';
  }
}

PartMap read_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  PartMap map;
  std::string source;
  {
    std::istringstream hs(header);
    std::string hash, src, parts;
    hs >> hash >> src >> parts;
    if (hash != "#" || !src.starts_with("source=") || !parts.starts_with("parts=")) {
      throw DataError("malformed grid header in " + path.string());
    }
    map.source = map_source_from_string(src.substr(7));
    map.parts = std::stoi(parts.substr(6));
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int v = 0;
    int count = 0;
    while (ls >> v) {
      map.labels.push_back(v);
      ++count;
    }
    if (map.rows == 0) map.cols = count;
    if (count != map.cols) throw DataError("ragged grid row in " + path.string());
    ++map.rows;
  }
  map.flagged.assign(map.labels.size(), false);
  map.validate();
  return map;
}

std::string ModelDiagnosis::to_json() const {
  nlohmann::ordered_json j;
  j["images"] = images.size();
  j["mean_outlier_rate"] = mean_outlier_rate;
  j["collapsed_images"] = collapsed_images;
  j["empty_flags"] = empty_flags;
  j["duplicate_flags"] = duplicate_flags;
  j["mean_boundary_error"] = mean_boundary_error ? nlohmann::ordered_json(*mean_boundary_error) : nlohmann::ordered_json(nullptr);
  j["mean_uniform_boundary_error"] =
      mean_uniform_boundary_error ? nlohmann::ordered_json(*mean_uniform_boundary_error) : nlohmann::ordered_json(nullptr);
  j["per_image"] = nlohmann::ordered_json::array();
  for (const auto& im : images) {
    nlohmann::ordered_json row;
    row["path"] = im.path;
    row["outlier_rate"] = im.outlier_rate;
    if (im.refined) {
      row["masses"] = im.refined->masses;
      row["empty"] = im.refined->empty;
      row["duplicates"] = im.refined->duplicates;
    }
    if (im.boundary_error) {
      row["boundary_error"] = *im.boundary_error;
      row["uniform_boundary_error"] = *im.uniform_boundary_error;
    }
    j["per_image"].push_back(std::move(row));
  }
  return j.dump(2);
}

ModelDiagnosis analyze(Model& model, std::span<const ingest::ImageSample* const> samples,
                       const ingest::ChannelStats& normalization, const CollapseOptions& options) {
  ModelDiagnosis out;
  const int p = model.parts();
  const int d = model.config().backbone.total_downsample();
  double outlier_sum = 0.0;
  double boundary_sum = 0.0;
  double uniform_sum = 0.0;
  int boundary_count = 0;
  for (const auto* s : samples) {
    const Inference inf = model.infer(ingest::normalize(s->pixels, normalization));
    ImageDiagnosis im;
    im.path = s->relative_path;
    im.nearest = nearest_part_map(inf.tensor, partition::uniform_pool(inf.tensor, p));
    im.outlier_rate = outlier_rate(im.nearest);
    outlier_sum += im.outlier_rate;
    if (inf.assignment) {
      im.refined = rpp_argmax_map(*inf.assignment, options);
      out.collapsed_images += im.refined->collapsed();
      out.empty_flags += im.refined->empty_count();
      out.duplicate_flags += static_cast<int>(im.refined->duplicates.size());
      if (s->layout && s->layout->bands == p) {
        const auto boundaries = band_boundaries(*s->layout, s->pixels.height, d);
        im.boundary_error = boundary_error(im.refined->map, boundaries);
        im.uniform_boundary_error = uniform_boundary_error(inf.tensor.rows(), inf.tensor.cols(), p, boundaries);
        boundary_sum += *im.boundary_error;
        uniform_sum += *im.uniform_boundary_error;
        ++boundary_count;
      }
    }
    out.images.push_back(std::move(im));
  }
  if (!out.images.empty()) out.mean_outlier_rate = outlier_sum / static_cast<double>(out.images.size());
  if (boundary_count > 0) {
    out.mean_boundary_error = boundary_sum / boundary_count;
    out.mean_uniform_boundary_error = uniform_sum / boundary_count;
  }
  return out;
}

SweepReport sweep_report(const std::string& parameter, std::span<const std::string> values,
                         std::span<const retrieval::EvalResult> results, std::span<const int> collapse_flags) {
  if (values.size() != results.size()) {
    throw ConfigError("sweep has " + std::to_string(values.size()) + " configs but " + std::to_string(results.size()) +
                      " results");
  }
  if (!collapse_flags.empty() && collapse_flags.size() != values.size()) {
    throw ConfigError("sweep collapse flags do not match the config count");
  }
  SweepReport report{parameter, {}};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& r = results[i];
    report.rows.push_back({values[i], r.cmc.empty() ? 0.0 : r.cmc_at(1), r.map, r.evaluated, r.skipped,
                           collapse_flags.empty() ? 0 : collapse_flags[i]});
  }
  return report;
}

std::string SweepReport::to_json() const {
  nlohmann::ordered_json j;
  j["parameter"] = parameter;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"value", r.value},
                         {"rank1", r.rank1},
                         {"mAP", r.map},
                         {"evaluated", r.evaluated},
                         {"skipped", r.skipped},
                         {"collapse_flags", r.collapse_flags}});
  }
  return j.dump(2);
}

SweepReport SweepReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SweepReport report{j.at("parameter").get<std::string>(), {}};
    for (const auto& r : j.at("rows")) {
      report.rows.push_back({r.at("value").get<std::string>(), r.at("rank1").get<double>(), r.at("mAP").get<double>(),
                             r.at("evaluated").get<int>(), r.at("skipped").get<int>(),
                             r.at("collapse_flags").get<int>()});
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed sweep report: ") + e.what());
  }
}

std::string SweepReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << parameter << ",rank1,mAP,evaluated,skipped,collapse_flags\n";
  for (const auto& r : rows) {
    out << r.value << ',' << r.rank1 << ',' << r.map << ',' << r.evaluated << ',' << r.skipped << ','
        << r.collapse_flags << '\n';
  }
  return out.str();
}

std::string SweepReport::to_svg() const {
  constexpr int kWidth = 480;
  constexpr int kHeight = 320;
  constexpr int kLeft = 50;
  constexpr int kRight = 20;
  constexpr int kTop = 30;
  constexpr int kBottom = 50;
  const int plot_w = kWidth - kLeft - kRight;
  const int plot_h = kHeight - kTop - kBottom;
  const std::size_t n = rows.size();
  auto x_of = [&](std::size_t i) { return kLeft + (n <= 1 ? plot_w / 2.0 : plot_w * static_cast<double>(i) / (n - 1)); };
  auto y_of = [&](double v) { return kTop + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << y_of(v) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << v
        << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    svg << "<text x=\"" << x_of(i) << "\" y=\"" << kTop + plot_h + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
        << rows[i].value << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10 << "\" font-size=\"12\" text-anchor=\"middle\">"
      << parameter << "</text>\n";
  const std::array<std::pair<const char*, const char*>, 2> series{{{"rank-1", "#1f77b4"}, {"mAP", "#d62728"}}};
  for (std::size_t s = 0; s < series.size(); ++s) {
    svg << "<polyline fill=\"none\" stroke=\"" << series[s].second << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      svg << (i ? " " : "") << x_of(i) << ',' << y_of(s == 0 ? rows[i].rank1 : rows[i].map);
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
      svg << "<circle cx=\"" << x_of(i) << "\" cy=\"" << y_of(s == 0 ? rows[i].rank1 : rows[i].map)
          << "\" r=\"3\" fill=\"" << series[s].second << "\"/>\n";
    }
    svg << "<text x=\"" << kLeft + 10 + 80 * s << "\" y=\"" << kTop - 10 << "\" font-size=\"12\" fill=\""
        << series[s].second << "\">" << series[s].first << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_sweep(const SweepReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::array<std::pair<const char*, std::string>, 3> files{
      {{"sweep.json", report.to_json() + "\n"}, {"sweep.csv", report.to_csv()}, {"sweep.svg", report.to_svg()}}};
  for (const auto& [name, body] : files) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << body;
  }
}

}  // namespace pcb::diagnose
