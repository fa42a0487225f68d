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
#include <filesystem>

#include "downscale/errors.hpp"
#include "downscale/eval.hpp"
#include "support.hpp"
#include "text_io.hpp"

using namespace downscale;
using doctest::Approx;

TEST_CASE("error metrics on small vectors") {
    const auto r = mape(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 1));
    CHECK(r.mape == Approx(0.25));
    CHECK(r.mae == Approx(0.5));

    const auto one = mape(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 1.0));
    CHECK(one.mape == Approx(0.5));
    CHECK(one.mae == Approx(1.0));
    CHECK(one.rmse == Approx(1.0));

    const Eigen::Vector3d t(1.5, -2.0, 4.0);
    const auto zero = mape(t, t);
    CHECK(zero.mape == 0.0);
    CHECK(zero.mae == 0.0);
    CHECK(zero.rmse == 0.0);
    CHECK(zero.rmspe == 0.0);

    const auto m = mape(Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(1.5, 1, 3.3, 6));
    CHECK(m.rmse >= m.mae);
    // Sample std (ddof 1) of APE [0.5, 0.5, 0.1, 0.5] over sqrt(4).
    CHECK(m.std_error_ape == Approx(0.1).epsilon(1e-12));
}

TEST_CASE("zero truth is an error naming the region") {
    try {
        mape(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1), {"north", "south"});
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("south") != std::string::npos);
    }
    CHECK_THROWS_AS(mape(Eigen::Vector2d(1, 2), Eigen::Vector3d(1, 2, 3)), InputError);
}

TEST_CASE("paired t-test against frozen values") {
    // Frozen from scipy.stats.ttest_rel.
    const auto r = paired_ttest(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d::Zero());
    CHECK(r.t == Approx(3.464101615137755).epsilon(1e-12));
    CHECK(r.p == Approx(0.07417990022744853).epsilon(1e-10));
    CHECK(r.df == 2);

    Eigen::VectorXd a(5), b(5);
    a << 0.1, 0.25, 0.3, 0.12, 0.5;
    b << 0.2, 0.22, 0.41, 0.3, 0.52;
    const auto s = paired_ttest(a, b);
    CHECK(s.t == Approx(-2.0715292138427266).epsilon(1e-12));
    CHECK(s.p == Approx(0.10704456850766718).epsilon(1e-10));
    const auto swapped = paired_ttest(b, a);
    CHECK(swapped.t == Approx(-s.t).epsilon(1e-14));
    CHECK(swapped.p == Approx(s.p).epsilon(1e-14));
}

TEST_CASE("paired t-test edge cases and stars") {
    const Eigen::Vector4d x(0.3, 0.1, 0.2, 0.4);
    const auto same = paired_ttest(x, x);
    CHECK(same.degenerate);
    CHECK(same.p == 1.0);
    CHECK(same.stars().empty());

    const Eigen::Vector4d d(1 + 1e-3, 1 - 1e-3, 1 + 2e-3, 1 - 2e-3);
    const auto strong = paired_ttest(d, Eigen::Vector4d::Zero());
    CHECK(strong.p < 0.01);
    CHECK(strong.stars() == "★★");

    TTestResult mid;
    mid.p = 0.03;
    CHECK(mid.stars() == "★");
    CHECK(mid.significant_05());
    CHECK_FALSE(mid.significant_01());
    CHECK_THROWS_AS(paired_ttest(Eigen::Vector2d(1, 2), Eigen::Vector2d(0, 0)), InputError);
}

TEST_CASE("grid partitions") {
    const Partition p = make_grid_partition({4, 2}, "g", "grid");
    CHECK(p.size() == 8);
    CHECK(p[0].id == "g0_0");
    CHECK(p[0].area == Approx(0.125));
    CHECK(p[0].centroid.x() == Approx(0.125));
    CHECK(p[7].centroid.y() == Approx(0.75));
    CHECK(make_grid_partition({12, 10}, "f", "fine")[0].id == "f00_0");
}

TEST_CASE("generator is deterministic in its seed") {
    const auto a = generate_synthetic(SyntheticSpec::standard(3));
    const auto b = generate_synthetic(SyntheticSpec::standard(3));
    const auto c = generate_synthetic(SyntheticSpec::standard(4));
    CHECK(a.z_true == b.z_true);
    CHECK(a.target.values == b.target.values);
    for (std::size_t s = 0; s < a.aux.size(); ++s) CHECK(a.aux[s].values == b.aux[s].values);
    CHECK(a.z_true != c.z_true);
    CHECK(a.coarse->size() == 30);
    CHECK(a.fine->size() == 120);
    CHECK(a.aux.size() == 3);
    CHECK(a.z_true.minCoeff() > 0);
}

TEST_CASE("equal grids give an identity aggregation") {
    SyntheticSpec s = SyntheticSpec::standard(1);
    s.coarse = s.fine;
    s.target_noise = 0;
    const auto inst = generate_synthetic(s);
    CHECK(inst.map.H.isApprox(Eigen::MatrixXd::Identity(120, 120)));
    CHECK((inst.target.values - inst.z_true).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampled coarse values average to the bias") {
    SyntheticSpec s;
    s.fine = {4, 2};
    s.coarse = {2, 1};
    s.fields = {{{1.0, 0.3}, 0.0}};
    s.aux = {{"x", {2, 2}, 0, 0.05}};
    s.target_kernel = {0.5, 0.4};
    s.target_noise = 0;
    s.bias = 2.0;
    const int N = 4000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    double offset = 0;
    for (int seed = 0; seed < N; ++seed) {
        s.seed = static_cast<std::uint64_t>(seed);
        const auto inst = generate_synthetic(s);
        sum += inst.target.values;
        offset = inst.positivity_offset;
    }
    // Each coarse value is a 4-cell average of a field with variance 0.25.
    const Eigen::Vector2d mean = sum / N;
    for (int i = 0; i < 2; ++i) CHECK(std::abs(mean(i) - (2.0 + offset)) < 4 * 0.5 / std::sqrt(N));
}

TEST_CASE("empirical covariance of the coarse values matches lambda") {
    SyntheticSpec s;
    s.fine = {2, 2};
    s.coarse = {2, 1};
    s.fields = {{{1.0, 1.0}, 0.8}, {{0.7, 0.6}, -0.5}};
    s.aux = {{"u", {2, 1}, 0, 0.05}, {"v", {2, 1}, 1, 0.05}};
    s.target_kernel = {0.5, 0.8};
    s.target_noise = 0.1;
    const int N = 10000;
    std::vector<Eigen::Vector2d> draws;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    AggregationMap map;
    Centroids X;
    for (int seed = 0; seed < N; ++seed) {
        s.seed = static_cast<std::uint64_t>(seed);
        const auto inst = generate_synthetic(s);
        draws.push_back(inst.target.values);
        mean += inst.target.values;
        if (seed == 0) {
            map = inst.map;
            X = inst.fine->centroids();
        }
    }
    mean /= N;
    Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
    for (const auto& d : draws) C += (d - mean) * (d - mean).transpose();
    C /= N - 1;

    // Lambda with prior field covariances standing in for the posteriors.
    std::vector<AuxPosterior> post(2);
    for (int k = 0; k < 2; ++k) {
        post[static_cast<std::size_t>(k)].dataset_id = "field" + std::to_string(k);
        post[static_cast<std::size_t>(k)].mean = Eigen::VectorXd::Zero(4);
        post[static_cast<std::size_t>(k)].cov = cov_matrix(s.fields[static_cast<std::size_t>(k)].kernel, X);
    }
    const auto prob = DownscaleProblem::make(Eigen::Vector2d::Zero(), post, X, map.H, 0.0);
    DownscaleParams p;
    p.w = Eigen::Vector3d(0.8, -0.5, 0.0);
    p.kernel = s.target_kernel;
    p.sigma = s.target_noise;
    const Eigen::MatrixXd L = assemble_lambda(p, prob).lambda;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(std::abs(C(i, j) - L(i, j)) <= 0.05 * std::abs(L(i, j)));
}

TEST_CASE("spec validation and JSON round trip") {
    const SyntheticSpec s = SyntheticSpec::twin(9);
    const SyntheticSpec back = synthetic_spec_from_json(nlohmann::json::parse(to_json(s).dump()));
    CHECK(to_json(back) == to_json(s));
    SyntheticSpec bad = s;
    bad.aux[0].field = 4;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = s;
    bad.aux[1].id = bad.aux[0].id;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = s;
    bad.coarse = {20, 20};
    CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("written instances load back as bundles") {
    const auto inst = generate_synthetic(SyntheticSpec::standard(2));
    const auto dir = testing::temp_dir("eval_write");
    write_synthetic(inst, dir.string());
    const DataBundle b = load_bundle(synthetic_paths(dir.string()));
    CHECK(b.coarse->ids() == inst.coarse->ids());
    CHECK(b.fine->ids() == inst.fine->ids());
    CHECK(b.aux.size() == 3);
    CHECK(b.map.H == inst.map.H);
    REQUIRE(b.truth.has_value());
    CHECK(b.truth->values == inst.z_true);
    CHECK(b.target.values == inst.target.values);
    for (std::size_t s = 0; s < b.aux.size(); ++s) CHECK(b.aux[s].values == inst.aux[s].values);
}

TEST_CASE("comparison tables") {
    const auto inst = generate_synthetic(SyntheticSpec::standard(5));
    const DataBundle b = inst.bundle();
    PipelineOptions o;
    o.restarts = 2;
    CHECK(run_comparison(b, {}, o).rows.empty());

    const auto single = run_comparison(b, {"gpr"}, o);
    REQUIRE(single.rows.size() == 1);
    CHECK_FALSE(single.rows[0].vs_reference.has_value());

    const auto full = run_comparison(b, {"proposed", "sd2", "lr", "gpr"}, o);
    REQUIRE(full.rows.size() == 4);
    CHECK(full.reference == "proposed");
    for (std::size_t i = 1; i < 4; ++i) CHECK(full.rows[i].vs_reference.has_value());
    const std::string csv = comparison_csv(full);
    CHECK(csv.rfind("method,mape,std_error_ape,mae,rmse,rmspe,t_vs_reference,p_vs_reference,stars\n", 0) == 0);
    const auto rows = text::parse_csv(csv);
    CHECK(rows.size() == 5);
    CHECK(comparison_text(full).find("proposed") != std::string::npos);

    CHECK_THROWS_AS(run_comparison(b, {"proposed", "magic"}, o), InputError);
    DataBundle no_truth = b;
    no_truth.truth.reset();
    CHECK_THROWS_AS(run_comparison(no_truth, {"gpr"}, o), InputError);
}
