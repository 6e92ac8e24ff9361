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

#include "pcb/model.hpp"

#include <cmath>
#include <string>

namespace pcb {

void ModelConfig::validate() const {
  const TensorShape shape = backbone::output_shape(backbone);
  const partition::HeadConfig& h = head;
  if (h.num_classes < 2) throw ConfigError("head needs at least 2 identity classes");
  if (h.reduced_dim < 1) throw ConfigError("reduced dimension must be positive");
  if (h.dropout < 0.0 || h.dropout >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  const int p = h.effective_parts();
  if (p < 1) throw ConfigError("part count must be at least 1");
  if (p > shape.rows) {
    throw ConfigError("p=" + std::to_string(p) + " exceeds the " + std::to_string(shape.rows) + " rows of T");
  }
  if (shape.rows % p != 0) {
    throw ConfigError("T has " + std::to_string(shape.rows) + " rows, not divisible by p=" + std::to_string(p));
  }
  if (rpp.enabled && h.mode == partition::HeadMode::kIDE) {
    throw ConfigError("refined part pooling needs a part-based head, not IDE");
  }
  if (rpp.epsilon <= 0.0) throw ConfigError("empty-part epsilon must be positive");
}

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  backbone_ = backbone::Backbone(config_.backbone);
  backbone_.register_params(store_, rng);

  const auto& h = config_.head;
  const int channels = config_.backbone.output_channels();
  const int p = parts();
  const int n_reduce = (h.shared_reduction || p == 1) ? 1 : p;
  for (int i = 0; i < n_reduce; ++i) {
    const std::string name = "head.reduce" + std::to_string(i);
    reductions_.emplace_back(name, channels, h.reduced_dim, !h.reduce_norm, std::sqrt(2.0 / channels));
    reductions_.back().register_params(store_, rng);
    if (h.reduce_norm) {
      reduction_norms_.emplace_back(name + ".bn", h.reduced_dim);
      reduction_norms_.back().register_params(store_);
    }
  }
  int n_classifiers = p;
  if (h.mode == partition::HeadMode::kVariant1 || h.mode == partition::HeadMode::kVariant2) n_classifiers = 1;
  for (int i = 0; i < n_classifiers; ++i) {
    classifiers_.emplace_back("head.classifier" + std::to_string(i), h.reduced_dim, h.num_classes, true, 0.01);
    classifiers_.back().register_params(store_, rng);
  }
  if (config_.rpp.enabled) {
    store_.add("rpp.part_classifier.weight", Matrix::Zero(p, channels));
    if (config_.rpp.bias) store_.add("rpp.part_classifier.bias", Matrix::Zero(1, p));
  }
  bind();
}

void Model::bind() {
  backbone_.bind(store_);
  for (auto& r : reductions_) r.bind(store_);
  for (auto& n : reduction_norms_) n.bind(store_);
  for (auto& c : classifiers_) c.bind(store_);
}

Model Model::clone() const {
  Model copy(config_, 0);
  for (const auto& [name, p] : store_.params()) copy.store_.at(name) = p;
  for (const auto& [name, b] : store_.buffers()) copy.store_.buffer(name) = b;
  return copy;
}

int Model::reduction_count() const { return static_cast<int>(reductions_.size()); }
int Model::classifier_count() const { return static_cast<int>(classifiers_.size()); }

rpp::PartClassifierParams Model::part_classifier() const {
  if (!config_.rpp.enabled) throw ConfigError("model has no part classifier");
  rpp::PartClassifierParams params;
  params.weight = store_.at("rpp.part_classifier.weight").value;
  if (config_.rpp.bias) params.bias = store_.at("rpp.part_classifier.bias").value.row(0);
  return params;
}

std::vector<partition::ReductionMap> Model::reduction_maps() const {
  std::vector<partition::ReductionMap> maps;
  for (std::size_t i = 0; i < reductions_.size(); ++i) {
    partition::ReductionMap m;
    m.weight = reductions_[i].weight();
    if (reductions_[i].has_bias()) m.bias = reductions_[i].bias_param()->value.row(0);
    if (config_.head.reduce_norm) {
      const std::string name = "head.reduce" + std::to_string(i) + ".bn";
      m.norm = partition::NormStats{store_.at(name + ".gamma").value.row(0), store_.at(name + ".beta").value.row(0),
                                    store_.buffer(name + ".running_mean").row(0),
                                    store_.buffer(name + ".running_var").row(0), layers::BatchNorm::kEpsilon};
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

std::vector<partition::ClassifierMap> Model::classifier_maps() const {
  std::vector<partition::ClassifierMap> maps;
  for (const auto& c : classifiers_) maps.push_back({c.weight(), c.bias_param()->value.row(0)});
  return maps;
}

namespace {

Matrix stack_parts(const std::vector<Matrix>& per_part) {
  const Eigen::Index b = per_part.front().rows();
  Matrix out(b * static_cast<Eigen::Index>(per_part.size()), per_part.front().cols());
  for (std::size_t i = 0; i < per_part.size(); ++i) out.middleRows(static_cast<Eigen::Index>(i) * b, b) = per_part[i];
  return out;
}

std::vector<Matrix> split_parts(const Matrix& stacked, int parts) {
  const Eigen::Index b = stacked.rows() / parts;
  std::vector<Matrix> out;
  for (int i = 0; i < parts; ++i) out.emplace_back(stacked.middleRows(i * b, b));
  return out;
}

}  // namespace

PassResult Model::run(std::span<const Image* const> images, std::span<const int> labels, const PassOptions& options,
                      std::mt19937_64& rng, bool backward, std::vector<Inference>* inference) {
  const int batch = static_cast<int>(images.size());
  if (batch == 0) throw ShapeError("empty batch");
  const bool with_labels = !labels.empty();
  if (with_labels && static_cast<int>(labels.size()) != batch) throw ShapeError("label count differs from batch size");
  const auto& h = config_.head;
  for (int label : labels) {
    if (label < 0 || label >= h.num_classes) {
      throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(h.num_classes) + ")");
    }
  }

  const std::vector<const Image*> image_list(images.begin(), images.end());
  const FeatureBatch trunk = backbone_.forward(image_list, options.trunk_norm, backward && options.trunk_backward);
  const int p = parts();
  const int channels = trunk.channels();
  PassResult result;

  // Pooling.
  std::vector<ActivationTensor> tensors;
  std::vector<rpp::PartAssignment> assignments;
  std::vector<rpp::SoftPoolResult> pools;
  std::vector<Matrix> pooled(p, Matrix(batch, channels));
  const bool refined = config_.rpp.enabled;
  const rpp::SoftPoolOptions pool_options{config_.rpp.normalize, config_.rpp.epsilon};
  rpp::PartClassifierParams part_params;
  if (refined) part_params = part_classifier();
  for (int b = 0; b < batch; ++b) {
    tensors.push_back(trunk.sample(b));
    Matrix g;
    if (refined) {
      assignments.push_back(rpp::assign(tensors.back(), part_params));
      pools.push_back(rpp::soft_pool(tensors.back(), assignments.back(), pool_options));
      result.empty_parts += pools.back().empty_count;
      g = pools.back().parts;
    } else {
      g = partition::uniform_pool(tensors.back(), p);
    }
    for (int i = 0; i < p; ++i) pooled[i].row(b) = g.row(i);
  }

  // Dropout on the pooled vectors.
  std::vector<Matrix> dropped = pooled;
  std::vector<Matrix> masks;
  if (options.dropout && h.dropout > 0.0) {
    const double keep = 1.0 - h.dropout;
    std::bernoulli_distribution coin(keep);
    for (int i = 0; i < p; ++i) {
      Matrix mask(batch, channels);
      for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = coin(rng) ? 1.0 / keep : 0.0;
      dropped[i] = pooled[i].cwiseProduct(mask);
      masks.push_back(std::move(mask));
    }
  }

  // Reduction: either one map per part or one shared map over stacked parts.
  const bool shared = reductions_.size() == 1;
  std::vector<Matrix> reduced(p);
  Matrix shared_input;
  Matrix shared_output;
  auto reduce = [&](std::size_t k, const Matrix& x) {
    Matrix z = reductions_[k].forward(x);
    if (h.reduce_norm) z = reduction_norms_[k].forward(z, options.head_norm, backward);
    return layers::relu(z);
  };
  if (shared) {
    shared_input = stack_parts(dropped);
    shared_output = reduce(0, shared_input);
    reduced = split_parts(shared_output, p);
  } else {
    for (int i = 0; i < p; ++i) reduced[i] = reduce(i, dropped[i]);
  }

  // Classifiers.
  const bool averaged = h.mode == partition::HeadMode::kVariant1;
  Matrix mean_reduced;
  std::vector<Matrix> logits;
  if (averaged) {
    mean_reduced = reduced[0];
    for (int i = 1; i < p; ++i) mean_reduced += reduced[i];
    mean_reduced /= static_cast<double>(p);
    logits.push_back(classifiers_[0].forward(mean_reduced));
  } else {
    for (int i = 0; i < p; ++i) logits.push_back(classifiers_[classifiers_.size() == 1 ? 0 : i].forward(reduced[i]));
  }
  std::vector<Matrix> probs;
  for (const Matrix& l : logits) probs.push_back(layers::softmax_rows(l));

  if (with_labels) {
    double total = 0.0;
    for (const Matrix& l : logits) {
      for (int b = 0; b < batch; ++b) {
        const double top = l.row(b).maxCoeff();
        total += top + std::log((l.row(b).array() - top).exp().sum()) - l(b, labels[b]);
      }
    }
    result.loss = total / batch;
    if (!std::isfinite(result.loss)) throw NumericError("non-finite training loss");
  }

  if (inference != nullptr) {
    inference->clear();
    for (int b = 0; b < batch; ++b) {
      Inference inf;
      inf.tensor = tensors[b];
      if (refined) {
        inf.assignment = assignments[b];
        inf.empty_parts = pools[b].empty_count;
      }
      inf.pooled.resize(p, channels);
      inf.reduced.resize(p, h.reduced_dim);
      for (int i = 0; i < p; ++i) {
        inf.pooled.row(i) = pooled[i].row(b);
        inf.reduced.row(i) = reduced[i].row(b);
      }
      inf.probs.resize(static_cast<Eigen::Index>(probs.size()), h.num_classes);
      for (std::size_t o = 0; o < probs.size(); ++o) inf.probs.row(static_cast<Eigen::Index>(o)) = probs[o].row(b);
      inference->push_back(std::move(inf));
    }
  }
  if (!backward) return result;
  if (!with_labels) throw ConfigError("backward pass needs labels");

  // Cross-entropy gradient, batch mean.
  std::vector<Matrix> grad_reduced(p);
  for (std::size_t o = 0; o < probs.size(); ++o) {
    Matrix dlogits = probs[o];
    for (int b = 0; b < batch; ++b) dlogits(b, labels[b]) -= 1.0;
    dlogits /= static_cast<double>(batch);
    if (averaged) {
      const Matrix dmean = classifiers_[0].backward(mean_reduced, dlogits) / static_cast<double>(p);
      for (int i = 0; i < p; ++i) grad_reduced[i] = dmean;
    } else {
      const std::size_t k = classifiers_.size() == 1 ? 0 : o;
      grad_reduced[o] = classifiers_[k].backward(reduced[o], dlogits);
    }
  }

  auto reduce_backward = [&](std::size_t k, const Matrix& x, const Matrix& y, const Matrix& dy) {
    Matrix dz = layers::relu_backward(y, dy);
    if (h.reduce_norm) dz = reduction_norms_[k].backward(dz);
    return reductions_[k].backward(x, dz);
  };
  std::vector<Matrix> grad_pooled(p);
  if (shared) {
    grad_pooled = split_parts(reduce_backward(0, shared_input, shared_output, stack_parts(grad_reduced)), p);
  } else {
    for (int i = 0; i < p; ++i) grad_pooled[i] = reduce_backward(i, dropped[i], reduced[i], grad_reduced[i]);
  }
  if (!masks.empty()) {
    for (int i = 0; i < p; ++i) grad_pooled[i] = grad_pooled[i].cwiseProduct(masks[i]);
  }

  FeatureBatch grad_trunk;
  grad_trunk.batch = batch;
  grad_trunk.rows = trunk.rows;
  grad_trunk.cols = trunk.cols;
  grad_trunk.data.resize(trunk.data.rows(), channels);
  const Eigen::Index n = trunk.locations();
  Parameter* wc = refined ? &store_.at("rpp.part_classifier.weight") : nullptr;
  Parameter* wc_bias = refined && config_.rpp.bias ? &store_.at("rpp.part_classifier.bias") : nullptr;
  for (int b = 0; b < batch; ++b) {
    Matrix grad_parts(p, channels);
    for (int i = 0; i < p; ++i) grad_parts.row(i) = grad_pooled[i].row(b);
    if (refined) {
      const rpp::SoftPoolGrad g =
          rpp::soft_pool_backward(tensors[b], assignments[b], pools[b], grad_parts, pool_options);
      const Matrix dlogits = rpp::assign_backward(assignments[b], g.assignment);
      wc->grad.noalias() += dlogits.transpose() * tensors[b].fibers();
      if (wc_bias != nullptr) wc_bias->grad.row(0) += dlogits.colwise().sum();
      grad_trunk.data.middleRows(b * n, n) = g.tensor + dlogits * part_params.weight;
    } else {
      grad_trunk.data.middleRows(b * n, n) = partition::uniform_pool_backward(grad_parts, tensors[b].shape());
    }
  }
  if (options.trunk_backward) backbone_.backward(grad_trunk);
  return result;
}

PassResult Model::train_pass(std::span<const Image* const> images, std::span<const int> labels,
                             const PassOptions& options, std::mt19937_64& rng) {
  return run(images, labels, options, rng, true, nullptr);
}

PassResult Model::loss(std::span<const Image* const> images, std::span<const int> labels, const PassOptions& options,
                       std::mt19937_64& rng) {
  return run(images, labels, options, rng, false, nullptr);
}

std::vector<Inference> Model::infer(std::span<const Image* const> images) {
  std::vector<Inference> out;
  std::mt19937_64 unused(0);
  const PassOptions eval{NormMode::kRunning, NormMode::kRunning, false, false};
  run(images, {}, eval, unused, false, &out);
  return out;
}

Inference Model::infer(const Image& image) {
  const Image* one[] = {&image};
  return std::move(infer(std::span<const Image* const>(one, 1)).front());
}

namespace rpp {

Model build_rpp_head(const Model& pcb, bool induced, std::optional<int> parts, SoftPoolOptions options) {
  const ModelConfig& source = pcb.config();
  if (source.rpp.enabled) throw ConfigError("source model already uses refined part pooling");
  if (parts && *parts != source.head.effective_parts()) {
    throw ConfigError("requested " + std::to_string(*parts) + "-part classifier for a p=" +
                      std::to_string(source.head.effective_parts()) + " model");
  }
  ModelConfig config = source;
  config.rpp.enabled = true;
  config.rpp.normalize = options.normalize;
  config.rpp.epsilon = options.epsilon;
  config.rpp.induced = induced;
  Model refined(config, 0);
  for (const auto& [name, p] : pcb.params().params()) refined.params().at(name).value = p.value;
  for (const auto& [name, b] : pcb.params().buffers()) refined.params().buffer(name) = b;
  return refined;
}

}  // namespace rpp
}  // namespace pcb
