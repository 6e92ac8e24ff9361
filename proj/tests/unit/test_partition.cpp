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

#include <numeric>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "model_gradcheck.hpp"
#include "pcb/model.hpp"
#include "pcb/partition.hpp"
#include "pcb/train.hpp"

using namespace pcb;
using namespace pcb::partition;

namespace {

ReductionMap random_map(testing::Gen& gen, int c, int r) {
  ReductionMap m;
  m.weight = gen.matrix(r, c);
  m.bias = gen.matrix(1, r).row(0);
  return m;
}

ClassifierMap random_classifier(testing::Gen& gen, int r, int k) {
  return {gen.matrix(k, r), gen.matrix(1, k).row(0)};
}

std::vector<Image> random_images(testing::Gen& gen, int n, int h, int w) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(gen.image(h, w));
  return out;
}

}  // namespace

TEST_SUITE("partition") {
  TEST_CASE("uniform_pool: 24x8 with p=6 averages 32 fibers per stripe") {
    testing::Gen gen(31);
    const ActivationTensor t = gen.tensor(24, 8, 5);
    const Matrix g = uniform_pool(t, 6);
    REQUIRE(g.rows() == 6);
    for (int i = 0; i < 6; ++i) {
      RowVector sum = RowVector::Zero(5);
      for (int m = 4 * i; m < 4 * i + 4; ++m) {
        for (int n = 0; n < 8; ++n) sum += t.fiber(m, n);
      }
      CHECK((g.row(i) - sum / 32.0).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("uniform_pool of a constant tensor is that constant") {
    ActivationTensor t(6, 3, 4);
    const RowVector c = (RowVector(4) << 1.5, -2.0, 0.0, 7.0).finished();
    t.fibers().rowwise() = c;
    const Matrix g = uniform_pool(t, 3);
    for (int i = 0; i < 3; ++i) CHECK((g.row(i) - c).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("uniform_pool: T 2x1x2 with fibers (1,2),(3,4), p=2") {
    Matrix f(2, 2);
    f << 1, 2, 3, 4;
    const Matrix g = uniform_pool(ActivationTensor(2, 1, f), 2);
    CHECK(g == f);
  }

  TEST_CASE("uniform_pool errors: p > M and indivisible M") {
    const ActivationTensor t(4, 2, 3);
    CHECK_THROWS_AS(uniform_pool(t, 5), ShapeError);
    CHECK_THROWS_AS(uniform_pool(t, 3), ShapeError);
    CHECK_THROWS_AS(uniform_pool(t, 0), ShapeError);
  }

  TEST_CASE("property: uniform_pool(T, 1) is the global average pool") {
    testing::Gen gen(32);
    for (int trial = 0; trial < 30; ++trial) {
      const ActivationTensor t = gen.tensor(gen.uniform_int(1, 8), gen.uniform_int(1, 5), gen.uniform_int(1, 6));
      CHECK((uniform_pool(t, 1) - Matrix(t.fibers().colwise().mean())).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("property: uniform_pool is equivariant to stripe permutations") {
    testing::Gen gen(33);
    for (int trial = 0; trial < 30; ++trial) {
      const int p = gen.uniform_int(1, 5);
      const int stripe = gen.uniform_int(1, 3);
      const int cols = gen.uniform_int(1, 4);
      const ActivationTensor t = gen.tensor(p * stripe, cols, gen.uniform_int(1, 5));
      std::vector<int> perm(p);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), gen.engine());
      ActivationTensor permuted = t;
      const int block = stripe * cols;
      for (int i = 0; i < p; ++i) permuted.fibers().middleRows(i * block, block) = t.fibers().middleRows(perm[i] * block, block);
      const Matrix g = uniform_pool(t, p);
      const Matrix gp = uniform_pool(permuted, p);
      for (int i = 0; i < p; ++i) CHECK((gp.row(i) - g.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("uniform_pool_backward matches finite differences") {
    testing::Gen gen(34);
    ActivationTensor t = gen.tensor(6, 2, 3);
    const Matrix r = gen.matrix(3, 3);
    const Matrix analytic = uniform_pool_backward(r, t.shape());
    const Matrix numeric = testing::numeric_gradient(t.fibers(), [&] { return uniform_pool(t, 3).cwiseProduct(r).sum(); });
    CHECK(testing::relative_error(analytic, numeric) < 1e-8);
  }

  TEST_CASE("reduce_dim: C=2048, r=256, p=6 gives 6 vectors of 256") {
    testing::Gen gen(35);
    const Matrix g = gen.matrix(6, 2048);
    std::vector<ReductionMap> maps;
    for (int i = 0; i < 6; ++i) maps.push_back(random_map(gen, 2048, 256));
    const Matrix h = reduce_dim(g, maps);
    CHECK(h.rows() == 6);
    CHECK(h.cols() == 256);
  }

  TEST_CASE("reduce_dim: identity map on positive parts is the identity") {
    testing::Gen gen(36);
    const Matrix g = gen.matrix(3, 4, 0.1, 2.0);
    std::vector<ReductionMap> maps(3);
    for (auto& m : maps) m.weight = Matrix::Identity(4, 4);
    CHECK(reduce_dim(g, maps) == g);
  }

  TEST_CASE("reduce_dim: zero input yields the rectified bias") {
    testing::Gen gen(37);
    std::vector<ReductionMap> maps;
    for (int i = 0; i < 2; ++i) maps.push_back(random_map(gen, 3, 5));
    const Matrix h = reduce_dim(Matrix::Zero(2, 3), maps);
    for (int i = 0; i < 2; ++i) CHECK(h.row(i) == RowVector(maps[i].bias.cwiseMax(0.0)));
  }

  TEST_CASE("reduce_dim maps are per part and errors on mismatch") {
    testing::Gen gen(38);
    const Matrix g = Matrix::Ones(2, 3);
    std::vector<ReductionMap> maps{random_map(gen, 3, 4), random_map(gen, 3, 4)};
    const Matrix h = reduce_dim(g, maps);
    CHECK(h.row(0) != h.row(1));
    std::vector<ReductionMap> wrong{random_map(gen, 5, 4), random_map(gen, 5, 4)};
    CHECK_THROWS_AS(reduce_dim(g, wrong), ShapeError);
    std::vector<ReductionMap> three{maps[0], maps[0], maps[0]};
    CHECK_THROWS_AS(reduce_dim(g, three), ShapeError);
  }

  TEST_CASE("classify outputs distributions; shared classifier on equal parts gives equal predictions") {
    testing::Gen gen(39);
    const Matrix h = gen.matrix(4, 6);
    std::vector<ClassifierMap> cls;
    for (int i = 0; i < 4; ++i) cls.push_back(random_classifier(gen, 6, 5));
    const Matrix probs = classify(h, cls);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(probs.row(i).sum() - 1.0) < 1e-6);
    CHECK((probs.array() >= 0.0).all());

    Matrix same(3, 6);
    same.rowwise() = h.row(0);
    const std::vector<ClassifierMap> shared{cls[0]};
    const Matrix p2 = classify(same, shared);
    CHECK(p2.row(0) == p2.row(1));
    CHECK(p2.row(1) == p2.row(2));
    CHECK_THROWS_AS(classify(h, std::vector<ClassifierMap>{cls[0], cls[1]}), ShapeError);
  }

  TEST_CASE("classify with permuted parts and classifiers permutes predictions") {
    testing::Gen gen(40);
    const Matrix h = gen.matrix(3, 4);
    std::vector<ClassifierMap> cls;
    for (int i = 0; i < 3; ++i) cls.push_back(random_classifier(gen, 4, 3));
    const std::vector<int> perm{2, 0, 1};
    Matrix hp(3, 4);
    std::vector<ClassifierMap> cp;
    for (int i = 0; i < 3; ++i) {
      hp.row(i) = h.row(perm[i]);
      cp.push_back(cls[perm[i]]);
    }
    const Matrix a = classify(h, cls);
    const Matrix b = classify(hp, cp);
    for (int i = 0; i < 3; ++i) CHECK(b.row(i) == a.row(perm[i]));
  }

  TEST_CASE("variant1_head examples") {
    testing::Gen gen(41);
    const ClassifierMap c = random_classifier(gen, 4, 3);
    const Matrix one = gen.matrix(1, 4);
    CHECK((variant1_head(one, c) - classify(one, std::span<const ClassifierMap>(&c, 1)).row(0)).cwiseAbs().maxCoeff() < 1e-15);

    Matrix equal(3, 4);
    equal.rowwise() = one.row(0);
    CHECK((variant1_head(equal, c) - variant1_head(one, c)).cwiseAbs().maxCoeff() < 1e-12);

    Matrix cancel(2, 4);
    cancel.row(0) = one.row(0);
    cancel.row(1) = -one.row(0);
    ClassifierMap unbiased = c;
    unbiased.bias.setZero();
    CHECK((variant1_head(cancel, unbiased) - RowVector::Constant(3, 1.0 / 3.0)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("ide_head: constant T pools to the fiber, equals the p=1 pipeline") {
    testing::Gen gen(42);
    ActivationTensor t(4, 2, 3);
    const RowVector c = gen.matrix(1, 3).row(0);
    t.fibers().rowwise() = c;
    IdeParams params{random_map(gen, 3, 4), random_classifier(gen, 4, 5)};
    params.reduction.norm = NormStats{RowVector::Ones(4), RowVector::Zero(4), RowVector::Zero(4), RowVector::Ones(4)};
    const RowVector out = ide_head(t, params);
    const Matrix g = uniform_pool(t, 1);
    CHECK((g.row(0) - c).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix h = reduce_dim(g, std::span<const ReductionMap>(&params.reduction, 1));
    const Matrix pipeline = classify(h, std::span<const ClassifierMap>(&params.classifier, 1));
    CHECK((out - pipeline.row(0)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(out.sum() - 1.0) < 1e-12);
  }

  TEST_CASE("model inference equals the standalone head maps") {
    testing::Gen gen(43);
    for (HeadMode mode : {HeadMode::kPCB, HeadMode::kVariant2, HeadMode::kIDE}) {
      ModelConfig c;
      c.head.mode = mode;
      c.head.parts = 4;
      c.head.num_classes = 5;
      c.head.reduced_dim = 8;
      Model model(c, 3);
      testing::randomize(model, gen, 0.3);
      for (auto& [name, b] : model.params().buffers()) {
        b = name.ends_with("running_var") ? gen.matrix(1, static_cast<int>(b.cols()), 0.5, 2.0)
                                          : gen.matrix(1, static_cast<int>(b.cols()));
      }
      const Image im = gen.image(48, 16);
      const Inference inf = model.infer(im);
      const Matrix g = uniform_pool(inf.tensor, model.parts());
      CHECK((inf.pooled - g).cwiseAbs().maxCoeff() < 1e-12);
      const auto maps = model.reduction_maps();
      const Matrix h = reduce_dim(g, maps);
      CHECK((inf.reduced - h).cwiseAbs().maxCoeff() < 1e-10);
      const auto cls = model.classifier_maps();
      CHECK((inf.probs - classify(h, cls)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  TEST_CASE("IDE inference is deterministic with dropout configured") {
    ModelConfig c;
    c.head.mode = HeadMode::kIDE;
    c.head.dropout = 0.5;
    c.head.num_classes = 4;
    Model model(c, 1);
    CHECK(model.parts() == 1);
    testing::Gen gen(44);
    const Image im = gen.image(48, 16);
    CHECK(model.infer(im).probs == model.infer(im).probs);
  }

  TEST_CASE("head gradients match finite differences for every head mode") {
    for (HeadMode mode : {HeadMode::kPCB, HeadMode::kVariant1, HeadMode::kVariant2, HeadMode::kIDE}) {
      for (bool shared : {false, true}) {
        testing::Gen gen(45);
        ModelConfig c = testing::tiny_model_config(4, 2, 6, 2, 3);
        c.head.mode = mode;
        c.head.shared_reduction = shared;
        Model model(c, 7);
        testing::randomize(model, gen);
        const auto images = random_images(gen, 3, 8, 4);
        const testing::GradReport report = testing::check_model_gradients(model, images, {0, 2, 1});
        INFO(to_string(mode) << " shared=" << shared << " worst " << report.worst_name);
        CHECK(report.worst < 1e-4);
      }
    }
  }

  TEST_CASE("PCB classifiers are parameter-disjoint") {
    testing::Gen gen(46);
    ModelConfig c = testing::tiny_model_config(4, 2, 6, 2, 3);
    Model model(c, 8);
    testing::randomize(model, gen);
    const auto images = random_images(gen, 3, 8, 4);
    std::vector<const Image*> batch;
    for (const auto& im : images) batch.push_back(&im);
    const std::vector<int> labels{1, 0, 2};
    const PassOptions options{NormMode::kBatch, NormMode::kBatch, false, true};
    std::mt19937_64 rng(0);
    auto grad_of = [&](const std::string& name) {
      model.params().zero_grad();
      model.train_pass(batch, labels, options, rng);
      return Matrix(model.params().at(name).grad);
    };
    const Matrix before = grad_of("head.classifier1.weight");
    model.params().at("head.classifier0.weight").value *= -3.0;
    model.params().at("head.classifier0.bias").value.setConstant(2.0);
    CHECK(grad_of("head.classifier1.weight") == before);

    // One step with classifier 0's gradient zeroed: classifier 1 moves exactly as before.
    Model a = model.clone();
    Model b = model.clone();
    for (Model* m : {&a, &b}) {
      m->params().zero_grad();
      m->train_pass(batch, labels, options, rng);
    }
    b.params().at("head.classifier0.weight").grad.setZero();
    b.params().at("head.classifier0.bias").grad.setZero();
    train::sgd_update(a.params(), 0.1, {}, 0.1);
    train::sgd_update(b.params(), 0.1, {}, 0.1);
    CHECK(a.params().at("head.classifier1.weight").value == b.params().at("head.classifier1.weight").value);
    CHECK(a.params().at("head.classifier0.weight").value != b.params().at("head.classifier0.weight").value);
  }

  TEST_CASE("head mode names round-trip") {
    for (HeadMode m : {HeadMode::kPCB, HeadMode::kVariant1, HeadMode::kVariant2, HeadMode::kIDE}) {
      CHECK(head_mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(head_mode_from_string("resnet"), ConfigError);
  }
}
