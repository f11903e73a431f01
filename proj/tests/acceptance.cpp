// Release gate: every acceptance criterion in one binary. Each criterion
// prints a single [PASS]/[FAIL] line with its measured values and the pinned
// tolerance; the process exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "tvc/data.hpp"
#include "tvc/io.hpp"
#include "tvc/linalg.hpp"
#include "tvc/merge.hpp"
#include "tvc/metrics.hpp"
#include "tvc/nn.hpp"
#include "tvc/scenario.hpp"
#include "tvc/theory.hpp"
#include "tvc/train.hpp"

using namespace tvc;
using harness::Conditioning;
using harness::RunResult;
using harness::ScenarioConfig;
using harness::ScenarioKind;

namespace {

// ===== Pinned tolerances =====
constexpr double kGradTol = 1e-4;          // scaled max gradient error
constexpr double kCosineTol = 1e-12;       // cosine law exactness
constexpr double kCosineAt100 = 0.99995;   // inheritance at rho = 100
constexpr double kOracleTol = 1e-10;       // closed form vs iterative minimizer
constexpr double kRatioLo = 3.0;           // error ratio window for O(lambda^2):
constexpr double kRatioHi = 5.0;           //   4 +- 25% per lambda halving
constexpr double kWitnessRel = 0.10;       // first-order vs exact loss delta
constexpr double kNormRatioMin = 2.0;      // high-lr tau norm inflation
constexpr double kRelNormCap = 1.25;       // ||theta - theta_pre|| / (kappa ||tau||)
constexpr double kAccWithin = 0.02;        // student vs teacher accuracy
constexpr double kBestWithin = 0.05;       // conditioned best vs original best

int g_failures = 0;

std::string fmt(double v, int prec = 4) {
    std::ostringstream ss;
    ss.precision(prec);
    ss << v;
    return ss.str();
}

void report(const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << detail << "\n";
    std::cout.flush();
    if (!pass) ++g_failures;
}

void report_error(const std::string& name, const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
}

// ===== Shared helpers =====

nn::ParamVector random_params(const nn::ModelSpec& spec, std::uint64_t seed, double scl = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scl);
    nn::ParamVector p = nn::zeros_like(spec);
    for (double& v : p.values) v = dist(rng);
    return p;
}

// Central finite differences of the mean batch loss over every parameter,
// scaled by the largest analytic gradient entry.
double max_grad_error(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                      const nn::Batch& batch, const nn::LossSpec& loss) {
    const nn::ParamVector grad = nn::grad_loss(spec, theta, batch, loss);
    const double h = 1e-5;
    double scale = 0.0;
    for (double g : grad.values) scale = std::max(scale, std::abs(g));
    nn::ParamVector probe = theta;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double keep = probe.values[i];
        probe.values[i] = keep + h;
        const double up = nn::eval_batch(spec, probe, batch, loss).loss;
        probe.values[i] = keep - h;
        const double down = nn::eval_batch(spec, probe, batch, loss).loss;
        probe.values[i] = keep;
        worst = std::max(worst, std::abs((up - down) / (2.0 * h) - grad.values[i]));
    }
    return worst / (scale + 1e-8);
}

std::vector<double> gd_minimize(const theory::QuadTask& q, int iters, double step) {
    std::vector<double> theta(q.dim(), 0.0);
    for (int k = 0; k < iters; ++k) {
        const auto h_theta = linalg::matvec(q.h, theta);
        for (std::size_t i = 0; i < theta.size(); ++i)
            theta[i] -= step * (q.g[i] + h_theta[i]);
    }
    return theta;
}

// Mean over methods of the seed-mean normalized accuracy of unconditioned
// cells; the suite-level post-merge summary statistic.
double suite_mean_normalized(const RunResult& res, ScenarioKind sc) {
    double sum = 0.0;
    const auto methods = merge::all_methods();
    for (merge::Method m : methods)
        sum += harness::grid_mean_normalized(res, sc, m, Conditioning::none);
    return sum / static_cast<double>(methods.size());
}

// ===== Criterion 1: gradient correctness =====

void crit_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
        nn::ModelSpec spec;
        spec.input_dim = 4;
        spec.hidden_dims = {6, 5};
        spec.num_classes = 3;
        spec.activation = (c % 2 == 0) ? nn::Activation::relu : nn::Activation::tanh;

        nn::LossSpec loss;
        switch (c % 5) {
            case 0: loss.kind = nn::LossSpec::Kind::cross_entropy; break;
            case 1:
                loss.kind = nn::LossSpec::Kind::label_smoothing;
                loss.alpha = 0.1;
                break;
            case 2:
                loss.kind = nn::LossSpec::Kind::focal;
                loss.gamma = 10.0;
                break;
            case 3:
                loss.kind = nn::LossSpec::Kind::kd_soft;
                loss.t_tcr = 2.0;
                loss.t_stu = 5.0;
                break;
            case 4: loss.kind = nn::LossSpec::Kind::mixup; break;
        }

        std::mt19937_64 rng(1000 + c);
        std::normal_distribution<double> dist(0.0, 1.0);
        std::uniform_int_distribution<int> lab(0, 2);
        nn::Batch b;
        for (int i = 0; i < 4; ++i) {
            std::vector<double> x(spec.input_dim);
            for (double& v : x) v = dist(rng);
            b.inputs.push_back(std::move(x));
            b.labels.push_back(lab(rng));
        }
        if (loss.kind == nn::LossSpec::Kind::kd_soft) {
            for (std::size_t i = 0; i < b.size(); ++i) {
                std::vector<double> t(spec.num_classes);
                for (double& v : t) v = 2.0 * dist(rng);
                b.teacher_logits.push_back(std::move(t));
            }
        }
        if (loss.kind == nn::LossSpec::Kind::mixup) {
            for (std::size_t i = 0; i < b.size(); ++i) {
                std::vector<double> t(spec.num_classes, 0.0);
                t[static_cast<std::size_t>(b.labels[i])] = 0.4;
                t[static_cast<std::size_t>((b.labels[i] + 1) % 3)] = 0.6;
                b.soft_targets.push_back(std::move(t));
            }
        }
        worst = std::max(worst, max_grad_error(spec, random_params(spec, 2000 + c), b, loss));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report("C1 loss gradients vs central finite differences",
           worst < kGradTol && secs < 60.0,
           "max scaled error " + fmt(worst, 3) + " over 100 cases (tol " + fmt(kGradTol, 1) +
               "), " + fmt(secs, 2) + " s");
}

// ===== Criterion 2: cosine inheritance law =====

void crit_cosine_law() {
    double worst = 0.0;
    double cos_at_100 = 0.0;
    for (double rho : {1.0, 5.0, 10.0, 100.0}) {
        // Orthogonal by construction: disjoint support, norms 1 and rho.
        const std::vector<double> sum = {1.0, rho};
        const double cosv = rho / std::hypot(1.0, rho);
        const double measured =
            (sum[1] * rho) / (std::hypot(sum[0], sum[1]) * rho);
        worst = std::max(worst, std::abs(measured - cosv));
        if (rho == 100.0) cos_at_100 = measured;
    }
    // The same law on full parameter vectors through the merge layer.
    nn::ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {4};
    spec.num_classes = 2;
    const nn::ParamVector zero = nn::zeros_like(spec);
    for (double rho : {1.0, 5.0, 10.0, 100.0}) {
        nn::ParamVector a = nn::zeros_like(spec);
        nn::ParamVector b = nn::zeros_like(spec);
        const std::size_t half = a.values.size() / 2;
        for (std::size_t i = 0; i < half; ++i) a.values[i] = 1.0;
        for (std::size_t i = half; i < b.values.size(); ++i) b.values[i] = 1.0;
        const double na = nn::l2_norm(a);
        a *= 1.0 / na;
        b *= rho / nn::l2_norm(b);
        std::vector<merge::TaskVector> taus;
        taus.push_back(merge::compute_task_vector(a, zero, "t1"));
        taus.push_back(merge::compute_task_vector(b, zero, "t2"));
        const auto diag = merge::cosine_diagnostics(taus);
        worst = std::max(worst, std::abs(diag[1] - rho / std::hypot(1.0, rho)));
    }
    report("C2 cosine law for orthogonal task vectors",
           worst < kCosineTol && cos_at_100 > kCosineAt100,
           "max deviation " + fmt(worst, 3) + " (tol 1e-12), cos at rho=100 " +
               fmt(cos_at_100, 7) + " (> " + fmt(kCosineAt100, 6) + ")");
}

// ===== Criterion 3: quadratic oracle equivalence and O(lambda^2) =====

void crit_quadratic_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst_gap = 0.0;
    for (std::size_t dim = 2; dim <= 16; ++dim) {
        const theory::QuadTask q = theory::random_quad_task(dim, 300 + dim, 0.0);
        const auto tau = theory::newton_task_vector(q);
        const auto iterative = gd_minimize(q, 3000, 0.2);
        for (std::size_t i = 0; i < dim; ++i)
            worst_gap = std::max(worst_gap, std::abs(tau[i] - iterative[i]));
    }

    double ratio_lo = 1e9, ratio_hi = 0.0;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        for (std::size_t dim : {4u, 8u}) {
            theory::QuadTask q = theory::random_quad_task(dim, seed, 0.2);
            std::vector<double> errs;
            for (double lambda : {0.2, 0.1, 0.05}) {
                q.lambda_cal = lambda;
                const auto exact = theory::calibrated_task_vector_exact(q);
                const auto fo = theory::calibrated_task_vector_firstorder(q, true);
                std::vector<double> diff(dim);
                for (std::size_t i = 0; i < dim; ++i) diff[i] = exact[i] - fo[i];
                errs.push_back(linalg::norm2(diff));
            }
            for (int k = 0; k < 2; ++k) {
                const double r = errs[k] / errs[k + 1];
                ratio_lo = std::min(ratio_lo, r);
                ratio_hi = std::max(ratio_hi, r);
            }
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report("C3 closed-form task vector oracle and O(lambda^2) expansion error",
           worst_gap < kOracleTol && ratio_lo >= kRatioLo && ratio_hi <= kRatioHi && secs < 60.0,
           "dims 2-16 max gap " + fmt(worst_gap, 3) + " (tol 1e-10); halving ratios in [" +
               fmt(ratio_lo, 4) + ", " + fmt(ratio_hi, 4) + "] (window [3, 5]); " +
               fmt(secs, 2) + " s");
}

// ===== Criterion 4: merged-degradation witness =====

void crit_theorem_witness() {
    const theory::QuadTask q1 = theory::random_quad_task(8, 12, 1e-3, 1.0, true);
    const theory::QuadTask q2 = theory::random_quad_task(8, 1012, 1e-3, 1.0, true);
    const theory::MergeCoeffs coeffs{0.01, 0.01};
    const theory::LossDelta d = theory::merged_loss_delta(q1, q2, coeffs, 2);
    const double rel = std::abs(d.firstorder - d.exact) / std::abs(d.exact);
    report("C4 calibrated-merge degradation witness",
           d.exact > 0.0 && rel < kWitnessRel,
           "exact delta " + fmt(d.exact, 9) + " > 0, first-order " + fmt(d.firstorder, 9) +
               ", relative gap " + fmt(rel, 3) + " (tol 0.1)");
}

// ===== Criteria 5-11 on the shared default grid =====

void crit_norm_disparity(const RunResult& res) {
    double min_ratio = 1e9;
    for (const harness::BaselineResult& bl : res.baselines) {
        if (bl.scenario != ScenarioKind::norm_mismatch) continue;
        const std::size_t rot = static_cast<std::size_t>(bl.rotation);
        double others = 0.0;
        for (std::size_t t = 0; t < bl.tau_norms.size(); ++t)
            if (t != rot) others += bl.tau_norms[t];
        others /= static_cast<double>(bl.tau_norms.size() - 1);
        min_ratio = std::min(min_ratio, bl.tau_norms[rot] / others);
    }

    const double ta_nm = harness::grid_mean_normalized(res, ScenarioKind::norm_mismatch,
                                                       merge::Method::task_arithmetic,
                                                       Conditioning::none);
    const double ta_or = harness::grid_mean_normalized(res, ScenarioKind::original,
                                                       merge::Method::task_arithmetic,
                                                       Conditioning::none);
    const double ties_nm = harness::grid_mean_normalized(res, ScenarioKind::norm_mismatch,
                                                         merge::Method::ties, Conditioning::none);
    const double ties_or = harness::grid_mean_normalized(res, ScenarioKind::original,
                                                         merge::Method::ties, Conditioning::none);
    report("C5 high-lr norm disparity degrades task arithmetic and ties",
           min_ratio >= kNormRatioMin && ta_nm < ta_or && ties_nm < ties_or,
           "min norm ratio " + fmt(min_ratio, 3) + " (>= 2); task_arithmetic " + fmt(ta_nm) +
               " < " + fmt(ta_or) + ", ties " + fmt(ties_nm) + " < " + fmt(ties_or));
}

void crit_low_confidence(const RunResult& res) {
    double min_entropy_gap = 1e9;
    for (const harness::BaselineResult& lc : res.baselines) {
        if (lc.scenario != ScenarioKind::low_confidence) continue;
        for (const harness::BaselineResult& orig : res.baselines) {
            if (orig.scenario != ScenarioKind::original || orig.seed != lc.seed) continue;
            for (std::size_t t = 0; t < lc.individual_entropy.size(); ++t)
                min_entropy_gap = std::min(
                    min_entropy_gap, lc.individual_entropy[t] - orig.individual_entropy[t]);
        }
    }

    bool all_drop = true;
    std::string drops;
    for (merge::Method m : merge::all_methods()) {
        const double lc = harness::grid_mean_normalized(res, ScenarioKind::low_confidence, m,
                                                        Conditioning::none);
        const double orig =
            harness::grid_mean_normalized(res, ScenarioKind::original, m, Conditioning::none);
        all_drop = all_drop && lc < orig;
        drops += merge::to_string(m) + " " + fmt(lc, 3) + "<" + fmt(orig, 3) + " ";
    }
    report("C6 smoothed fine-tuning raises entropy and hurts every merge",
           min_entropy_gap > 0.0 && all_drop,
           "min per-task entropy gap " + fmt(min_entropy_gap, 3) + " > 0; " + drops);
}

void crit_conditioning_recovery(const RunResult& res) {
    bool all_up = true;
    std::string detail;
    double best_orig = 0.0;
    for (merge::Method m : merge::all_methods())
        best_orig = std::max(best_orig, harness::grid_mean_normalized(
                                            res, ScenarioKind::original, m, Conditioning::none));
    for (ScenarioKind sc : {ScenarioKind::norm_mismatch, ScenarioKind::low_confidence}) {
        double best_cond = 0.0;
        for (merge::Method m : merge::all_methods()) {
            const double cond = harness::grid_mean_normalized(res, sc, m, Conditioning::distac);
            const double raw = harness::grid_mean_normalized(res, sc, m, Conditioning::none);
            all_up = all_up && cond > raw;
            best_cond = std::max(best_cond, cond);
        }
        all_up = all_up && best_cond >= best_orig - kBestWithin;
        detail += std::string(sc == ScenarioKind::norm_mismatch ? "nm" : "lc") + " best " +
                  fmt(best_cond) + " vs original best " + fmt(best_orig) + "; ";
    }
    report("C7 conditioned merges beat unconditioned everywhere and near-match original",
           all_up, detail + "every method improved (tol 5 points on best)");
}

void crit_norm_control(const RunResult& res) {
    double worst = 0.0;
    bool any = false, aborted = false;
    for (const harness::ConditioningRecord& rec : res.conditioning) {
        if (rec.conditioning != Conditioning::distac) continue;
        any = true;
        worst = std::max(worst, rec.final_rel_norm);
        aborted = aborted || rec.aborted;
    }
    report("C8 conditioned weights stay within the norm budget",
           any && !aborted && worst <= kRelNormCap,
           "max ||theta - theta_pre|| / (kappa ||tau||) = " + fmt(worst, 4) + " (cap " +
               fmt(kRelNormCap, 3) + "), no aborts");
}

void crit_confidence_control(const RunResult& res) {
    bool ok = true;
    std::size_t n = 0;
    double worst_gap = 0.0;
    for (const harness::ConditioningRecord& rec : res.conditioning) {
        if (rec.scenario != ScenarioKind::low_confidence ||
            rec.conditioning != Conditioning::distac)
            continue;
        ++n;
        ok = ok && rec.student_entropy < rec.teacher_entropy;
        worst_gap = std::max(worst_gap, std::abs(rec.student_acc - rec.teacher_acc));
    }
    report("C9 distilled students sharpen without losing accuracy",
           n > 0 && ok && worst_gap <= kAccWithin,
           fmt(static_cast<double>(n), 3) + " low-confidence students, max |acc gap| " +
               fmt(worst_gap, 3) + " (tol 0.02), entropy strictly reduced");
}

void crit_shrink_vs_stretch(const RunResult& res) {
    bool ok = !res.kappa_sweeps.empty();
    double worst_margin = 1e9;
    for (const auto& [seed, task, curve] : res.kappa_sweeps) {
        double shrink = 1e9, stretch = 1e9;
        for (const auto& [kappa, acc] : curve) {
            if (kappa >= 0.5 - 1e-9 && kappa <= 1.0 + 1e-9) shrink = std::min(shrink, acc);
            if (kappa >= 2.0 - 1e-9 && kappa <= 3.0 + 1e-9) stretch = std::min(stretch, acc);
        }
        ok = ok && shrink >= stretch;
        worst_margin = std::min(worst_margin, shrink - stretch);
    }
    report("C10 shrinking task vectors is safe, stretching is not", ok,
           "min over tasks of (min acc kappa in [0.5,1] - min acc kappa in [2,3]) = " +
               fmt(worst_margin, 3) + " (>= 0), " +
               fmt(static_cast<double>(res.kappa_sweeps.size()), 3) + " curves");
}

void crit_scaling_alone(const RunResult& res) {
    const double scale = harness::grid_mean_normalized(
        res, ScenarioKind::norm_mismatch, merge::Method::task_arithmetic, Conditioning::scale_only);
    const double distac = harness::grid_mean_normalized(
        res, ScenarioKind::norm_mismatch, merge::Method::task_arithmetic, Conditioning::distac);
    report("C11 rescaling without distillation recovers less", scale < distac,
           "scale-only " + fmt(scale) + " < rescale+distill " + fmt(distac));
}

// ===== Criterion 12: calibration trade-off =====

void crit_calibration_tradeoff(const RunResult& main, unsigned jobs) {
    ScenarioConfig mini;
    mini.scenarios = {ScenarioKind::low_confidence};
    mini.conf_alpha = 0.01;
    mini.run_distac = false;
    mini.run_scale_only = false;
    mini.include_mtl = false;
    mini.run_kappa_sweep = false;
    mini.jobs = jobs;
    const RunResult mid = harness::run_grid(mini);

    const double v0 = suite_mean_normalized(main, ScenarioKind::original);
    const double v1 = suite_mean_normalized(mid, ScenarioKind::low_confidence);
    const double v2 = suite_mean_normalized(main, ScenarioKind::low_confidence);
    const bool monotone = v0 >= v1 && v1 >= v2;

    // Temperature scaling on a merged low-confidence model: the fitted
    // temperature must strictly reduce pooled validation NLL.
    ScenarioConfig ref;
    harness::DatasetSpec ds = ref.dataset;
    ds.seed = 424242;
    const harness::TaskSuite suite = harness::gen_synthetic_tasks(ds, ref.num_tasks);
    train::TrainConfig pre_cfg = ref.pretrain;
    pre_cfg.seed = 7;
    const nn::ParamVector theta0 = nn::he_uniform_init(ref.model, 7);
    const nn::ParamVector theta_pre =
        train::finetune(ref.model, theta0, suite.pretrain, pre_cfg).theta;

    std::vector<merge::TaskVector> taus;
    for (std::size_t t = 0; t < suite.tasks.size(); ++t) {
        train::TrainConfig ft = ref.train;
        ft.loss.kind = nn::LossSpec::Kind::label_smoothing;
        ft.loss.alpha = ref.conf_alpha;
        ft.seed = 100 + t;
        const nn::ParamVector theta_t =
            train::finetune(ref.model, theta_pre, suite.tasks[t].train, ft).theta;
        taus.push_back(merge::compute_task_vector(theta_t, theta_pre, suite.tasks[t].task_id));
    }
    const auto merge_at = [&](double l) {
        return merge::merge_task_arithmetic(theta_pre, taus, l);
    };
    const auto score = [&](const nn::ParamVector& theta) {
        double acc = 0.0;
        for (const harness::TaskData& td : suite.tasks)
            acc += metrics::accuracy(ref.model, theta, td.val);
        return acc / static_cast<double>(suite.tasks.size());
    };
    const double lam =
        merge::tune_lambda(merge_at, ref.merge.lambda_grid, score).lambda_star;
    const nn::ParamVector merged = merge_at(lam);

    nn::Dataset pooled;
    for (const harness::TaskData& td : suite.tasks) {
        pooled.inputs.insert(pooled.inputs.end(), td.val.inputs.begin(), td.val.inputs.end());
        pooled.labels.insert(pooled.labels.end(), td.val.labels.begin(), td.val.labels.end());
    }
    const double t_star = metrics::temperature_scale_fit(ref.model, merged, pooled);
    const double nll_raw = metrics::mean_nll(ref.model, merged, pooled, 1.0);
    const double nll_fit = metrics::mean_nll(ref.model, merged, pooled, t_star);

    report("C12 merge quality is nonincreasing in smoothing and temperature fit helps",
           monotone && nll_fit < nll_raw,
           "suite normalized over alpha {0, 0.01, 0.1}: " + fmt(v0) + " >= " + fmt(v1) +
               " >= " + fmt(v2) + "; T* " + fmt(t_star, 3) + " drops val NLL " + fmt(nll_raw, 4) +
               " -> " + fmt(nll_fit, 4));
}

// ===== Criterion 13: infrastructure =====

void crit_infrastructure(const RunResult& main, const std::string& json_a,
                         const std::string& csv_a) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "tvc_acceptance_io";
    fs::create_directories(dir);

    bool ckpt_ok = false, corrupt_ok = false, idx_ok = false;
    try {
        nn::ModelSpec spec;
        spec.input_dim = 5;
        spec.hidden_dims = {7, 3};
        spec.num_classes = 4;
        const nn::ParamVector theta = random_params(spec, 5150);
        const fs::path path = dir / "gate.ckpt";
        io::save_checkpoint(path, spec, theta);
        const io::Checkpoint ck = io::load_checkpoint(path);
        ckpt_ok = ck.spec == spec && ck.theta.values.size() == theta.values.size();
        for (std::size_t i = 0; ckpt_ok && i < theta.values.size(); ++i)
            ckpt_ok = ck.theta.values[i] == static_cast<double>(static_cast<float>(theta.values[i]));

        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes[bytes.size() - 9] ^= 0x10;
        const fs::path bad = dir / "gate_bad.ckpt";
        std::ofstream(bad, std::ios::binary) << bytes;
        try {
            io::load_checkpoint(bad);
        } catch (const io::CheckpointError& e) {
            corrupt_ok = e.code() == io::CheckpointErrc::checksum_mismatch;
        }

        const fs::path img = dir / "bad.images";
        std::ofstream(img, std::ios::binary) << std::string(16, 'J');
        const fs::path lab = dir / "bad.labels";
        std::ofstream(lab, std::ios::binary) << std::string("\x00\x00\x08\x01", 4) +
                                                    std::string("\x00\x00\x00\x01", 4) +
                                                    std::string(1, '\0');
        try {
            io::load_idx(img, lab);
        } catch (const io::IdxError& e) {
            idx_ok = e.code() == io::IdxErrc::bad_magic;
        }
    } catch (const std::exception&) {
        // flags stay false
    }
    fs::remove_all(dir);

    // Rerunning the very same grid serially must reproduce both reports byte
    // for byte.
    ScenarioConfig cfg;
    cfg.jobs = 1;
    const RunResult rerun = harness::run_grid(cfg);
    const bool deterministic =
        harness::results_json(rerun) == json_a && harness::table1_csv(rerun) == csv_a;
    (void)main;

    report("C13 checkpoint/idx safety and byte-identical grid reruns",
           ckpt_ok && corrupt_ok && idx_ok && deterministic,
           std::string("checkpoint roundtrip ") + (ckpt_ok ? "ok" : "BAD") +
               ", corruption detected " + (corrupt_ok ? "ok" : "BAD") + ", idx magic rejected " +
               (idx_ok ? "ok" : "BAD") + ", serial rerun identical " +
               (deterministic ? "ok" : "BAD"));
}

}  // namespace

int main() {
    std::cout << "acceptance gate\n";
    const auto t0 = std::chrono::steady_clock::now();

    try {
        crit_gradients();
    } catch (const std::exception& e) {
        report_error("C1 loss gradients vs central finite differences", e);
    }
    try {
        crit_cosine_law();
    } catch (const std::exception& e) {
        report_error("C2 cosine law for orthogonal task vectors", e);
    }
    try {
        crit_quadratic_oracle();
    } catch (const std::exception& e) {
        report_error("C3 closed-form task vector oracle and O(lambda^2) expansion error", e);
    }
    try {
        crit_theorem_witness();
    } catch (const std::exception& e) {
        report_error("C4 calibrated-merge degradation witness", e);
    }

    const unsigned jobs = std::max(1u, std::min(3u, std::thread::hardware_concurrency()));
    try {
        ScenarioConfig cfg;
        cfg.jobs = jobs;
        const RunResult grid = harness::run_grid(cfg);
        const std::string json_a = harness::results_json(grid);
        const std::string csv_a = harness::table1_csv(grid);

        try {
            crit_norm_disparity(grid);
        } catch (const std::exception& e) {
            report_error("C5 high-lr norm disparity degrades task arithmetic and ties", e);
        }
        try {
            crit_low_confidence(grid);
        } catch (const std::exception& e) {
            report_error("C6 smoothed fine-tuning raises entropy and hurts every merge", e);
        }
        try {
            crit_conditioning_recovery(grid);
        } catch (const std::exception& e) {
            report_error("C7 conditioned merges beat unconditioned everywhere and near-match original", e);
        }
        try {
            crit_norm_control(grid);
        } catch (const std::exception& e) {
            report_error("C8 conditioned weights stay within the norm budget", e);
        }
        try {
            crit_confidence_control(grid);
        } catch (const std::exception& e) {
            report_error("C9 distilled students sharpen without losing accuracy", e);
        }
        try {
            crit_shrink_vs_stretch(grid);
        } catch (const std::exception& e) {
            report_error("C10 shrinking task vectors is safe, stretching is not", e);
        }
        try {
            crit_scaling_alone(grid);
        } catch (const std::exception& e) {
            report_error("C11 rescaling without distillation recovers less", e);
        }
        try {
            crit_calibration_tradeoff(grid, jobs);
        } catch (const std::exception& e) {
            report_error("C12 merge quality is nonincreasing in smoothing and temperature fit helps", e);
        }
        try {
            crit_infrastructure(grid, json_a, csv_a);
        } catch (const std::exception& e) {
            report_error("C13 checkpoint/idx safety and byte-identical grid reruns", e);
        }
    } catch (const std::exception& e) {
        report_error("C5-C13 shared scenario grid", e);
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "acceptance: " << (13 - g_failures) << "/13 criteria passed in " << fmt(secs, 3)
              << " s\n";
    return g_failures == 0 ? 0 : 1;
}
