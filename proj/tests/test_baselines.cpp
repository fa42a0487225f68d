/*
 * Copyright 2026 The areal-downscale Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "downscale/baselines.hpp"
#include "downscale/errors.hpp"
#include "downscale/eval.hpp"

using namespace downscale;
using doctest::Approx;

namespace {

struct Setup {
    PartitionPtr coarse, fine;
    AggregationMap map;
};

Setup grids(GridSpec c, GridSpec f) {
    Setup s;
    s.coarse = std::make_shared<const Partition>(make_grid_partition(c, "c", "coarse"));
    s.fine = std::make_shared<const Partition>(make_grid_partition(f, "f", "fine"));
    s.map = build_aggregation(s.coarse, s.fine);
    return s;
}

double smooth(const Location2d& p) { return 2.0 + std::sin(2.5 * p.x()) + 0.5 * std::cos(3.0 * p.y()); }

Eigen::VectorXd field(const Partition& p) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) v(static_cast<Eigen::Index>(i)) = smooth(p[i].centroid);
    return v;
}

AuxPosterior posterior(const std::string& id, const Eigen::VectorXd& mean) {
    AuxPosterior p;
    p.dataset_id = id;
    p.mean = mean;
    p.cov = Eigen::MatrixXd::Zero(mean.size(), mean.size());
    return p;
}

}  // namespace

TEST_CASE("method names") {
    CHECK(parse_baseline_method("gpr") == BaselineMethod::gpr);
    CHECK(method_name(BaselineMethod::sd2) == "sd2");
    try {
        parse_baseline_method("kriging");
        FAIL("expected an error");
    } catch (const InputError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("gpr") != std::string::npos);
        CHECK(msg.find("lr") != std::string::npos);
        CHECK(msg.find("sd2") != std::string::npos);
    }
}

TEST_CASE("gpr on a constant field is constant") {
    const Setup s = grids({3, 3}, {9, 9});
    const ArealDataset a{"a", s.coarse, Eigen::VectorXd::Constant(9, 6.5), QuantityKind::intensive};
    const auto r = gpr_baseline(a, *s.fine);
    CHECK((r.prediction.array() - 6.5).abs().maxCoeff() < 1e-9);
    CHECK(r.variance.has_value());
}

TEST_CASE("gpr interpolates at shared centroids and reverts far away") {
    const Setup s = grids({3, 3}, {9, 9});
    const ArealDataset a{"a", s.coarse, field(*s.coarse), QuantityKind::intensive};
    GprBaselineOptions o;
    o.gp.center = true;
    const auto r = gpr_baseline(a, *s.fine, o);
    // Fine cell (1,1) has the same centroid as coarse cell (0,0).
    const auto fi = *s.fine->find("f1_1");
    CHECK(std::abs(r.prediction(static_cast<Eigen::Index>(fi)) - a.values(0)) < 1e-2);

    Region far;
    far.id = "far";
    far.geometry = {Polygon{{Ring{{99, 99}, {100, 99}, {100, 100}, {99, 100}, {99, 99}}}}};
    far.area = 1;
    far.centroid = Location2d(99.5, 99.5);
    const Partition remote("remote", {far});
    const auto rf = gpr_baseline(a, remote, o);
    CHECK(rf.prediction(0) == Approx(a.values.mean()).epsilon(1e-9));
}

TEST_CASE("lr reproduces a perfectly explanatory auxiliary") {
    const Setup s = grids({4, 3}, {12, 9});
    const Eigen::VectorXd f = field(*s.fine);
    const ArealDataset a{"a", s.coarse, s.map.H * f, QuantityKind::intensive};
    const auto r = lr_baseline(a, {posterior("x", f)}, s.map);
    CHECK(r.params.at("w:x") == Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(r.params.at("w:bias")) < 1e-9);
    CHECK((r.prediction - f).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_FALSE(r.variance.has_value());
}

TEST_CASE("lr without auxiliaries predicts the coarse mean") {
    const Setup s = grids({4, 3}, {8, 6});
    const ArealDataset a{"a", s.coarse, field(*s.coarse), QuantityKind::intensive};
    const auto r = lr_baseline(a, {}, s.map);
    CHECK((r.prediction.array() - a.values.mean()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("lr with duplicated columns matches the single-column fit") {
    const Setup s = grids({4, 3}, {8, 6});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    Eigen::VectorXd g(48), noise(12);
    for (Eigen::Index i = 0; i < 48; ++i) g(i) = n01(rng);
    for (Eigen::Index i = 0; i < 12; ++i) noise(i) = 0.2 * n01(rng);
    const ArealDataset a{"a", s.coarse, s.map.H * (1.5 * g) + noise, QuantityKind::intensive};
    const auto one = lr_baseline(a, {posterior("g", g)}, s.map);
    const auto two = lr_baseline(a, {posterior("g", g), posterior("h", g)}, s.map);
    CHECK((s.map.H * one.prediction - s.map.H * two.prediction).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(two.params.at("w:g") == Approx(two.params.at("w:h")).epsilon(1e-8));

    // Least-squares optimality against random probes.
    const Eigen::MatrixXd HF = s.map.H * build_design({posterior("g", g)}, 48).values;
    const double best = (a.values - s.map.H * one.prediction).norm();
    const Eigen::Vector2d w(one.params.at("w:g"), one.params.at("w:bias"));
    for (int t = 0; t < 200; ++t) {
        const Eigen::Vector2d probe = w + 0.1 * Eigen::Vector2d(n01(rng), n01(rng));
        CHECK(best <= (a.values - HF * probe).norm() + 1e-12);
    }
}

TEST_CASE("sd2 is lr plus the kriged residual") {
    const SyntheticInstance inst = generate_synthetic(SyntheticSpec::standard(4));
    const DataBundle b = inst.bundle();
    PipelineOptions o;
    o.restarts = 2;
    const auto aux = run_aux(b, o);
    const auto post = posteriors_of(aux);
    const auto lr = lr_baseline(b.target, post, b.map);
    const auto sd2 = sd2_baseline(b.target, post, b.map);
    CHECK((sd2.prediction - lr.prediction - sd2.kriged_residual).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(sd2.regression == lr.prediction);
}

TEST_CASE("sd2 with zero residuals is the regression surface") {
    const Setup s = grids({4, 3}, {12, 9});
    const Eigen::VectorXd f = field(*s.fine);
    const ArealDataset a{"a", s.coarse, s.map.H * (2.0 * f).eval(), QuantityKind::intensive};
    Sd2BaselineOptions o;
    o.fixed_residual_hyper = GPHyper{{1.0, 0.5}, 0.1};
    const auto r = sd2_baseline(a, {posterior("x", f)}, s.map, o);
    CHECK(r.coarse_residual.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((r.prediction - r.regression).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("sd2 without auxiliaries is the coarse mean plus kriged residuals") {
    const Setup s = grids({4, 3}, {8, 6});
    const ArealDataset a{"a", s.coarse, field(*s.coarse), QuantityKind::intensive};
    Sd2BaselineOptions o;
    o.fixed_residual_hyper = GPHyper{{0.8, 0.4}, 0.05};
    const auto r = sd2_baseline(a, {}, s.map, o);
    GPFit fit;
    fit.hyper = *o.fixed_residual_hyper;
    const Eigen::VectorXd resid = a.values.array() - a.values.mean();
    const auto direct = gp_predict(s.coarse->centroids(), resid, fit, o.gp.jitter, s.fine->centroids());
    CHECK((r.prediction - (direct.mean.array() + a.values.mean()).matrix()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sd2 coarse discrepancy as the residual noise shrinks") {
    const SyntheticInstance inst = generate_synthetic(SyntheticSpec::standard(6));
    const DataBundle b = inst.bundle();
    PipelineOptions po;
    po.restarts = 2;
    const auto post = posteriors_of(run_aux(b, po));
    const auto transform = bundle_transform(b);
    std::vector<double> gaps;
    for (double sigma : {1e-2, 1e-4, 1e-6}) {
        Sd2BaselineOptions o;
        o.transform = transform;
        o.gp.jitter = 0;
        o.fixed_residual_hyper = GPHyper{{0.3, 0.8}, sigma};
        const auto r = sd2_baseline(b.target, post, b.map, o);
        gaps.push_back((b.map.H * r.prediction - b.target.values).cwiseAbs().maxCoeff());
    }
    // Kriging interpolates at coarse centroids, not coarse means, so the gap
    // levels off rather than vanishing.
    CHECK(gaps[1] <= gaps[0]);
    CHECK(gaps[2] <= gaps[1] * (1 + 1e-3));
}

TEST_CASE("baselines are deterministic") {
    const SyntheticInstance inst = generate_synthetic(SyntheticSpec::standard(8));
    const DataBundle b = inst.bundle();
    PipelineOptions o;
    o.restarts = 2;
    for (auto m : {BaselineMethod::gpr, BaselineMethod::lr, BaselineMethod::sd2})
        CHECK(run_baseline(b, m, o).prediction == run_baseline(b, m, o).prediction);
}
