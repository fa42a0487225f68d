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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "downscale/cli.hpp"
#include "downscale/eval.hpp"
#include "support.hpp"
#include "text_io.hpp"

using namespace downscale;
using downscale::testing::random_instance;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1 -------------------------------------------------------------------------
Outcome gradients() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> nc_d(2, 5), s_d(0, 3);
    double worst = 0;
    for (int t = 0; t < 10; ++t) {
        const int nc = nc_d(rng);
        const int nf = std::uniform_int_distribution<int>(std::max(4, nc), 12)(rng);
        const int S = s_d(rng);
        auto inst = random_instance(rng, nc, nf, S);
        const auto& prob = inst.problem;
        const Objective<double> f = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
            const DownscaleParams p = DownscaleParams::unpack(th);
            if (g) *g = grad_log_marginal(p, prob);
            return log_marginal(p, prob);
        };
        worst = std::max(worst, grad_check<double>(f, inst.params.pack()));
    }
    return {worst <= 1e-5, "max relative error " + fmt("%.2e", worst) + " over 10 instances (limit 1e-5)"};
}

// 2 -------------------------------------------------------------------------
Outcome marginalization() {
    std::mt19937_64 rng(202);
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
        const int nc = std::uniform_int_distribution<int>(1, 3)(rng);
        const int nf = std::uniform_int_distribution<int>(std::max(2, nc), 6)(rng);
        const int S = std::uniform_int_distribution<int>(0, 3)(rng);
        auto inst = random_instance(rng, nc, nf, S);
        const double closed = log_marginal(inst.params, inst.problem);
        const double brute = testing::brute_force_log_marginal(inst.params, inst.problem);
        worst = std::max(worst, std::abs(closed - brute));
    }
    return {worst <= 1e-10, "max |closed form - composition| " + fmt("%.2e", worst) + " over 20 instances (limit 1e-10)"};
}

// 3 -------------------------------------------------------------------------
Outcome lambda_forms() {
    std::mt19937_64 rng(303);
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
        const int nc = std::uniform_int_distribution<int>(1, 6)(rng);
        const int nf = std::uniform_int_distribution<int>(nc, 15)(rng);
        const int S = std::uniform_int_distribution<int>(0, 3)(rng);
        auto inst = random_instance(rng, nc, nf, S);
        const Eigen::MatrixXd m = assemble_lambda(inst.params, inst.problem).lambda;
        const Eigen::MatrixXd e = testing::entrywise_lambda(inst.params, inst.problem);
        worst = std::max(worst, (m - e).cwiseAbs().maxCoeff() / e.cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-12, "max relative deviation " + fmt("%.2e", worst) + " over 20 instances (limit 1e-12)"};
}

// 4 -------------------------------------------------------------------------
Outcome aggregation_limit() {
    std::mt19937_64 rng(404);
    double worst_h = 0, worst_i = 0;
    for (int t = 0; t < 10; ++t) {
        const int nc = std::uniform_int_distribution<int>(2, 6)(rng);
        const int nf = std::uniform_int_distribution<int>(nc + 1, 15)(rng);
        const int S = std::uniform_int_distribution<int>(0, 3)(rng);
        auto inst = random_instance(rng, nc, nf, S);
        inst.params.sigma = 1e-6;
        const Refinement ref = predict_fine(inst.params, inst.problem);
        worst_h = std::max(worst_h, (inst.problem.H * ref.mean - inst.problem.target).cwiseAbs().maxCoeff());
    }
    for (int t = 0; t < 10; ++t) {
        const int n = std::uniform_int_distribution<int>(2, 10)(rng);
        auto inst = random_instance(rng, n, n, std::uniform_int_distribution<int>(0, 3)(rng));
        inst.problem.H = Eigen::MatrixXd::Identity(n, n);
        inst.params.sigma = 1e-8;
        const Refinement ref = predict_fine(inst.params, inst.problem);
        worst_i = std::max(worst_i, (ref.mean - inst.problem.target).cwiseAbs().maxCoeff());
    }
    return {worst_h <= 1e-3 && worst_i <= 1e-4, "sigma=1e-6: max |H zbar - a| " + fmt("%.2e", worst_h) +
                                                    " (limit 1e-3); H=I, sigma=1e-8: max |zbar - a| " +
                                                    fmt("%.2e", worst_i) + " (limit 1e-4)"};
}

// 5 and 7 share one sweep over seeds ------------------------------------------
struct SweepRow {
    double proposed = 0, sd2 = 0, lr = 0, gpr = 0;
    double w_corr = 0;
};

std::vector<SweepRow> standard_sweep(int seeds, const PipelineOptions& opts) {
    std::vector<SweepRow> rows;
    for (int seed = 0; seed < seeds; ++seed) {
        const SyntheticInstance inst = generate_synthetic(SyntheticSpec::standard(static_cast<std::uint64_t>(seed)));
        const DataBundle b = inst.bundle();
        const auto aux = run_aux(b, opts);
        const ProposedRun run = run_proposed(b, opts, &aux);
        SweepRow r;
        const auto& z = b.truth->values;
        r.proposed = mape(z, run.refinement.mean).mape;
        r.sd2 = mape(z, run_baseline(b, BaselineMethod::sd2, opts, &aux).prediction).mape;
        r.lr = mape(z, run_baseline(b, BaselineMethod::lr, opts, &aux).prediction).mape;
        r.gpr = mape(z, run_baseline(b, BaselineMethod::gpr, opts, &aux).prediction).mape;
        const Eigen::Index S = static_cast<Eigen::Index>(inst.aux.size());
        r.w_corr = testing::pearson(run.fit.params.w.head(S), inst.true_w.head(S));
        rows.push_back(r);
    }
    return rows;
}

Outcome synthetic_recovery(const std::vector<SweepRow>& rows, double seconds) {
    int wins = 0;
    std::vector<double> corr;
    for (const auto& r : rows) {
        wins += r.proposed < r.gpr;
        corr.push_back(r.w_corr);
    }
    const double med = median(corr);
    const bool pass = wins >= 15 && med >= 0.8 && seconds < 300;
    return {pass, "proposed beats gpr in " + std::to_string(wins) + "/" + std::to_string(rows.size()) +
                      " seeds (need 15); median w correlation " + fmt("%.3f", med) + " (need 0.8); sweep " +
                      fmt("%.1f", seconds) + " s"};
}

Outcome comparison(const std::vector<SweepRow>& rows) {
    std::vector<double> p, s, l, g;
    for (const auto& r : rows) {
        p.push_back(r.proposed);
        s.push_back(r.sd2);
        l.push_back(r.lr);
        g.push_back(r.gpr);
    }
    const double mp = median(p), ms = median(s), ml = median(l), mg = median(g);
    bool ordering = mp < ms && ms <= ml && ml < mg;

    // End to end through the command line on a bundle written to disk.
    const auto dir = testing::temp_dir("acceptance_eval");
    write_synthetic(generate_synthetic(SyntheticSpec::standard(7)), (dir / "data").string());
    std::ostringstream out, err;
    const int rc = run_cli({"eval", "--data", (dir / "data").string(), "--out", (dir / "out").string()}, out, err);
    bool table_ok = rc == 0;
    if (table_ok) {
        const auto csv = text::parse_csv(text::read_file((dir / "out" / "comparison.csv").string()));
        table_ok = csv.size() == 5 && csv[0].size() == 9 && csv[1][0] == "proposed" && csv[2][0] == "sd2" &&
                   csv[3][0] == "lr" && csv[4][0] == "gpr";
    }
    return {ordering && table_ok, "median MAPE proposed " + fmt("%.4f", mp) + " < sd2 " + fmt("%.4f", ms) +
                                      " <= lr " + fmt("%.4f", ml) + " < gpr " + fmt("%.4f", mg) +
                                      "; file-bundle table " + (table_ok ? "produced" : "missing")};
}

// 6 -------------------------------------------------------------------------
Outcome granularity(const PipelineOptions& opts) {
    int smaller = 0;
    const int seeds = 20;
    std::vector<double> w_coarse, w_fine;
    for (int seed = 0; seed < seeds; ++seed) {
        const SyntheticInstance inst = generate_synthetic(SyntheticSpec::twin(static_cast<std::uint64_t>(seed)));
        const DataBundle b = inst.bundle();
        const auto aux = run_aux(b, opts);
        smaller += aux[1].posterior.avg_variance < aux[0].posterior.avg_variance;
        const ProposedRun run = run_proposed(b, opts, &aux);
        w_coarse.push_back(std::abs(run.fit.params.w(0)));
        w_fine.push_back(std::abs(run.fit.params.w(1)));
    }
    const double mc = median(w_coarse), mf = median(w_fine);
    return {smaller == seeds && mf > mc, "finer twin has smaller avg variance in " + std::to_string(smaller) + "/" +
                                             std::to_string(seeds) + " seeds; median |w| fine " + fmt("%.3f", mf) +
                                             " vs coarse " + fmt("%.3f", mc)};
}

// 8 -------------------------------------------------------------------------
Outcome baseline_identities(const PipelineOptions& opts) {
    const SyntheticInstance inst = generate_synthetic(SyntheticSpec::standard(3));
    const DataBundle b = inst.bundle();
    const auto aux = run_aux(b, opts);
    const auto lr = run_baseline(b, BaselineMethod::lr, opts, &aux);
    const auto sd2 = run_baseline(b, BaselineMethod::sd2, opts, &aux);
    const double d1 = (sd2.prediction - lr.prediction - sd2.kriged_residual).cwiseAbs().maxCoeff();

    // An auxiliary whose posterior mean is the truth itself explains a exactly.
    AuxPosterior perfect;
    perfect.dataset_id = "perfect";
    perfect.mean = inst.z_true;
    perfect.cov = Eigen::MatrixXd::Zero(inst.z_true.size(), inst.z_true.size());
    ArealDataset exact = b.target;
    exact.values = b.map.H * inst.z_true;
    const auto lr2 = lr_baseline(exact, {perfect}, b.map);
    const double d2 = (lr2.prediction - inst.z_true).cwiseAbs().maxCoeff();
    return {d1 <= 1e-10 && d2 <= 1e-8, "max |sd2 - lr - kriged residual| " + fmt("%.2e", d1) +
                                           " (limit 1e-10); perfect auxiliary reproduced within " + fmt("%.2e", d2) +
                                           " (limit 1e-8)"};
}

// 9 -------------------------------------------------------------------------
Outcome determinism() {
    const auto dir = testing::temp_dir("acceptance_determinism");
    const std::string data = (dir / "data").string();
    std::ostringstream out, err;
    bool ok = run_cli({"synth", "--out", data, "--seed", "11"}, out, err) == 0;
    const std::vector<std::string> files{"aux_models.json", "model.json", "prediction.csv", "baseline_sd2.csv",
                                         "baseline_gpr.csv"};
    std::vector<std::string> first;
    for (int run = 0; run < 2 && ok; ++run) {
        const std::string o = (dir / ("run" + std::to_string(run))).string();
        ok = run_cli({"fit", "--data", data, "--out", o, "--seed", "5"}, out, err) == 0 &&
             run_cli({"refine", "--data", data, "--out", o}, out, err) == 0 &&
             run_cli({"baseline", "--data", data, "--out", o, "--method", "sd2", "--seed", "5"}, out, err) == 0 &&
             run_cli({"baseline", "--data", data, "--out", o, "--method", "gpr", "--seed", "5"}, out, err) == 0;
        for (std::size_t k = 0; k < files.size() && ok; ++k) {
            const std::string bytes = text::read_file((std::filesystem::path(o) / files[k]).string());
            if (run == 0) first.push_back(bytes);
            else ok = ok && bytes == first[k];
        }
    }
    return {ok, ok ? "model JSON and prediction CSVs byte-identical across two runs with seed 5"
                   : "outputs differ or a run failed: " + err.str()};
}

}  // namespace

int main() {
    using clock = std::chrono::steady_clock;
    PipelineOptions opts;
    int failures = 0;
    auto report = [&](int id, const char* name, const Outcome& o) {
        std::printf("criterion %d [%s] %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    auto timed = [&](const std::function<Outcome()>& f, double limit) {
        const auto t0 = clock::now();
        Outcome o = f();
        const double s = std::chrono::duration<double>(clock::now() - t0).count();
        o.detail += "; " + fmt("%.2f", s) + " s";
        if (limit > 0 && s >= limit) {
            o.pass = false;
            o.detail += " exceeds " + fmt("%.0f", limit) + " s";
        }
        return o;
    };

    report(1, "gradient correctness", timed(gradients, 10));
    report(2, "marginalization oracle", timed(marginalization, 1));
    report(3, "lambda entrywise vs matrix form", timed(lambda_forms, 0));
    report(4, "aggregation-consistency limit", timed(aggregation_limit, 0));

    const auto t0 = clock::now();
    const auto rows = standard_sweep(20, opts);
    const double sweep_s = std::chrono::duration<double>(clock::now() - t0).count();
    report(5, "synthetic recovery", synthetic_recovery(rows, sweep_s));
    report(6, "granularity-uncertainty property", timed([&] { return granularity(opts); }, 0));
    report(7, "comparison table and method ordering", timed([&] { return comparison(rows); }, 0));
    report(8, "baseline structural identities", timed([&] { return baseline_identities(opts); }, 0));
    report(9, "determinism", timed(determinism, 0));

    std::printf("%d of 9 criteria passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
