#include "tvc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <map>
#include <stdexcept>

#include "json.hpp"

#include "tvc/linalg.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace tvc::harness {

std::string to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::original: return "original";
        case ScenarioKind::norm_mismatch: return "norm_mismatch";
        case ScenarioKind::low_confidence: return "low_confidence";
        case ScenarioKind::combined: return "combined";
    }
    throw std::logic_error("bad ScenarioKind");
}

ScenarioKind scenario_from_string(const std::string& s) {
    if (s == "original") return ScenarioKind::original;
    if (s == "norm_mismatch") return ScenarioKind::norm_mismatch;
    if (s == "low_confidence") return ScenarioKind::low_confidence;
    if (s == "combined") return ScenarioKind::combined;
    throw std::invalid_argument("unknown scenario: " + s);
}

std::string to_string(ConfidenceMethod m) {
    switch (m) {
        case ConfidenceMethod::label_smoothing: return "label_smoothing";
        case ConfidenceMethod::mixup: return "mixup";
        case ConfidenceMethod::focal: return "focal";
    }
    throw std::logic_error("bad ConfidenceMethod");
}

ConfidenceMethod confidence_from_string(const std::string& s) {
    if (s == "label_smoothing") return ConfidenceMethod::label_smoothing;
    if (s == "mixup") return ConfidenceMethod::mixup;
    if (s == "focal") return ConfidenceMethod::focal;
    throw std::invalid_argument("unknown confidence method: " + s);
}

std::string to_string(Conditioning c) {
    switch (c) {
        case Conditioning::none: return "none";
        case Conditioning::scale_only: return "scale_only";
        case Conditioning::distac: return "distac";
    }
    throw std::logic_error("bad Conditioning");
}

ScenarioConfig::ScenarioConfig() {
    train = train::TrainConfig::desk_defaults();
    // A hotter fine-tuning rate carries each task further from the backbone,
    // which both separates the specialists (so merging has something to gain)
    // and makes over-scaled vectors genuinely destructive rather than benign.
    train.lr = 5.5e-3;
    pretrain = train::TrainConfig::desk_defaults();
    pretrain.steps = 800;
    pretrain.warmup_steps = 80;
    // Smoothed pretraining keeps the backbone's logit margins soft, the way a
    // generic open-vocabulary prior is calibrated rather than saturated; a
    // hard-CE mixture prior is too confident for merged vectors to refine.
    pretrain.loss.kind = nn::LossSpec::Kind::label_smoothing;
    pretrain.loss.alpha = 0.4;
    merge.lambda_grid = merge::MergeConfig::default_lambda_grid();
}

void ScenarioConfig::validate() const {
    if (scenarios.empty()) throw std::invalid_argument("scenario config: no scenarios");
    if (num_tasks < 2) throw std::invalid_argument("scenario config: need at least 2 tasks");
    if (seeds.empty()) throw std::invalid_argument("scenario config: no seeds");
    if (methods.empty()) throw std::invalid_argument("scenario config: no merge methods");
    if (highlr_factor <= 1.0)
        throw std::invalid_argument("scenario config: highlr_factor must exceed 1");
    if (conf_alpha < 0.0 || conf_alpha >= 1.0)
        throw std::invalid_argument("scenario config: conf_alpha must lie in [0, 1)");
    if (conf_gamma <= 0.0) throw std::invalid_argument("scenario config: conf_gamma must be > 0");
    if (jobs == 0) throw std::invalid_argument("scenario config: jobs must be >= 1");
    dataset.validate();
    model.validate();
    if (dataset.kind == DatasetKind::synthetic_gaussian) {
        if (model.input_dim != dataset.input_dim)
            throw std::invalid_argument("scenario config: model input_dim != dataset input_dim");
        if (model.num_classes != dataset.classes_per_task)
            throw std::invalid_argument("scenario config: model classes != dataset classes");
    }
    pretrain.validate();
    train.validate();
    merge.validate();
    kd.validate();
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t h = base + 0x9e3779b97f4a7c15ull;
    for (std::uint64_t v : {a, b}) {
        h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
    }
    return h;
}

// One forward pass per sample: accuracy, mean entropy and calibration scores
// together, so a split is read exactly once per use.
struct SplitEval {
    double acc = 0.0;
    double entropy = 0.0;
    std::vector<double> conf;
    std::vector<std::uint8_t> correct;
};

SplitEval eval_split(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                     const nn::Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("eval_split: empty dataset");
    SplitEval ev;
    ev.conf.reserve(data.size());
    ev.correct.reserve(data.size());
    std::size_t hits = 0;
    double entropy_sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::vector<double> logits = nn::forward_logits(spec, theta, data.inputs[i]);
        linalg::ProbVector probs = linalg::softmax_temp(logits, 1.0);
        int pred = metrics::argmax_lowest(logits);
        bool ok = pred == data.labels[i];
        if (ok) ++hits;
        ev.correct.push_back(ok ? 1 : 0);
        ev.conf.push_back(*std::max_element(probs.probs.begin(), probs.probs.end()));
        entropy_sum += linalg::entropy(probs);
    }
    ev.acc = static_cast<double>(hits) / static_cast<double>(data.size());
    ev.entropy = entropy_sum / static_cast<double>(data.size());
    return ev;
}

struct SeedOutput {
    std::vector<CellResult> cells;
    std::vector<BaselineResult> baselines;
    std::vector<MtlResult> mtl;
    std::vector<ConditioningRecord> conditioning;
    std::vector<std::pair<std::string, std::vector<train::StepRecord>>> train_histories;
    std::vector<std::pair<std::string, std::vector<distac::DistacStep>>> distac_histories;
    std::vector<std::tuple<std::uint64_t, std::string, std::vector<std::pair<double, double>>>>
        kappa_sweeps;
};

nn::LossSpec confidence_loss(const ScenarioConfig& cfg) {
    nn::LossSpec loss;
    switch (cfg.confidence_method) {
        case ConfidenceMethod::label_smoothing:
            loss.kind = nn::LossSpec::Kind::label_smoothing;
            loss.alpha = cfg.conf_alpha;
            break;
        case ConfidenceMethod::mixup:
            loss.kind = nn::LossSpec::Kind::mixup;
            break;
        case ConfidenceMethod::focal:
            loss.kind = nn::LossSpec::Kind::focal;
            loss.gamma = cfg.conf_gamma;
            break;
    }
    return loss;
}

bool uses(const std::vector<ScenarioKind>& v, ScenarioKind k) {
    return std::find(v.begin(), v.end(), k) != v.end();
}

// Empty string means the arm runs.
std::string skip_reason(const ScenarioConfig& cfg, ScenarioKind sc, Conditioning cond) {
    if (cond == Conditioning::none) return "";
    if (cond == Conditioning::scale_only) {
        if (!cfg.run_scale_only) return "skipped: scale_only arm disabled";
        if (sc == ScenarioKind::original)
            return "skipped: no norm disparity to rescale in the original scenario";
        if (sc == ScenarioKind::low_confidence)
            return "skipped: kappa = 1 rescaling is the identity here";
        return "";
    }
    // distac
    if (!cfg.run_distac) return "skipped: distac arm disabled";
    if (sc == ScenarioKind::original)
        return "skipped: conditioning targets the failure scenarios";
    return "";
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// Fixed emission order for arms; rotation loops sit outside.
constexpr Conditioning kArms[] = {Conditioning::none, Conditioning::scale_only,
                                  Conditioning::distac};

SeedOutput run_seed(const ScenarioConfig& cfg, std::uint64_t seed) {
    SeedOutput out;
    const std::size_t T = cfg.num_tasks;

    DatasetSpec dspec = cfg.dataset;
    dspec.seed = mix_seed(cfg.dataset.seed, seed, 11);
    TaskSuite suite = build_task_suite(dspec, T);

    nn::ParamVector init = nn::he_uniform_init(cfg.model, mix_seed(seed, 1));
    train::TrainConfig pcfg = cfg.pretrain;
    pcfg.seed = mix_seed(seed, 2);
    train::FinetuneResult pre = train::finetune(cfg.model, init, suite.pretrain, pcfg);
    out.train_histories.emplace_back("pretrain_" + seed_tag(seed), pre.history);
    const nn::ParamVector& theta_pre = pre.theta;

    auto run_ft = [&](std::size_t t, const train::TrainConfig& c, const std::string& tag) {
        train::FinetuneResult r = train::finetune(cfg.model, theta_pre, suite.tasks[t].train, c);
        out.train_histories.emplace_back(
            "finetune_" + tag + "_" + seed_tag(seed) + "_task" + std::to_string(t), r.history);
        return std::move(r.theta);
    };

    train::TrainConfig base_cfg = cfg.train;
    base_cfg.loss.kind = nn::LossSpec::Kind::cross_entropy;

    std::vector<nn::ParamVector> base_models;
    base_models.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        train::TrainConfig c = base_cfg;
        c.seed = mix_seed(seed, 10, t);
        base_models.push_back(run_ft(t, c, "base"));
    }

    const bool need_highlr =
        uses(cfg.scenarios, ScenarioKind::norm_mismatch) || uses(cfg.scenarios, ScenarioKind::combined);
    const bool need_lowconf =
        uses(cfg.scenarios, ScenarioKind::low_confidence) || uses(cfg.scenarios, ScenarioKind::combined);

    std::vector<nn::ParamVector> highlr_models;
    if (need_highlr) {
        for (std::size_t t = 0; t < T; ++t) {
            train::TrainConfig c = base_cfg;
            c.lr *= cfg.highlr_factor;
            c.seed = mix_seed(seed, 20, t);
            highlr_models.push_back(run_ft(t, c, "highlr"));
        }
    }

    std::vector<nn::ParamVector> lowconf_models;
    if (need_lowconf) {
        for (std::size_t t = 0; t < T; ++t) {
            train::TrainConfig c = base_cfg;
            c.loss = confidence_loss(cfg);
            c.seed = mix_seed(seed, 30, t);
            lowconf_models.push_back(run_ft(t, c, "lowconf"));
        }
    }

    std::vector<nn::ParamVector> combined_highlr_models;
    if (uses(cfg.scenarios, ScenarioKind::combined)) {
        for (std::size_t t = 0; t < T; ++t) {
            train::TrainConfig c = base_cfg;
            c.loss = confidence_loss(cfg);
            c.lr *= cfg.highlr_factor;
            c.seed = mix_seed(seed, 40, t);
            combined_highlr_models.push_back(run_ft(t, c, "combined_highlr"));
        }
    }

    std::vector<double> pretrained_acc(T);
    for (std::size_t t = 0; t < T; ++t)
        pretrained_acc[t] = eval_split(cfg.model, theta_pre, suite.tasks[t].test).acc;

    if (cfg.include_mtl) {
        std::vector<nn::Dataset> trains;
        for (const TaskData& td : suite.tasks) trains.push_back(td.train);
        train::TrainConfig c = base_cfg;
        c.seed = mix_seed(seed, 50);
        train::FinetuneResult r = train::train_mtl(cfg.model, theta_pre, trains, c);
        out.train_histories.emplace_back("mtl_" + seed_tag(seed), r.history);
        MtlResult mr;
        mr.seed = seed;
        for (std::size_t t = 0; t < T; ++t)
            mr.acc.push_back(eval_split(cfg.model, r.theta, suite.tasks[t].test).acc);
        out.mtl.push_back(std::move(mr));
    }

    if (cfg.run_kappa_sweep) {
        std::vector<double> grid = metrics::default_kappa_grid();
        for (std::size_t t = 0; t < T; ++t) {
            nn::ParamVector tau = base_models[t] - theta_pre;
            auto curve =
                metrics::scaling_sweep(cfg.model, theta_pre, tau, suite.tasks[t].test, grid);
            out.kappa_sweeps.emplace_back(seed, suite.tasks[t].task_id, std::move(curve));
        }
    }

    // ===== Grid cells =====

    for (ScenarioKind sc : cfg.scenarios) {
        const bool rotates = sc == ScenarioKind::norm_mismatch || sc == ScenarioKind::combined;
        std::vector<int> rotations;
        if (rotates)
            for (std::size_t r = 0; r < T; ++r) rotations.push_back(static_cast<int>(r));
        else
            rotations.push_back(-1);

        for (int rot : rotations) {
            // Unconditioned models of this arm.
            std::vector<const nn::ParamVector*> models(T);
            for (std::size_t t = 0; t < T; ++t) {
                switch (sc) {
                    case ScenarioKind::original: models[t] = &base_models[t]; break;
                    case ScenarioKind::norm_mismatch:
                        models[t] = static_cast<int>(t) == rot ? &highlr_models[t] : &base_models[t];
                        break;
                    case ScenarioKind::low_confidence: models[t] = &lowconf_models[t]; break;
                    case ScenarioKind::combined:
                        models[t] = static_cast<int>(t) == rot ? &combined_highlr_models[t]
                                                               : &lowconf_models[t];
                        break;
                }
            }

            BaselineResult bl;
            bl.scenario = sc;
            bl.seed = seed;
            bl.rotation = rot;
            bl.pretrained_acc = pretrained_acc;
            std::vector<merge::TaskVector> taus_raw;
            for (std::size_t t = 0; t < T; ++t) {
                SplitEval ev = eval_split(cfg.model, *models[t], suite.tasks[t].test);
                bl.individual_acc.push_back(ev.acc);
                bl.individual_entropy.push_back(ev.entropy);
                taus_raw.push_back(
                    merge::compute_task_vector(*models[t], theta_pre, suite.tasks[t].task_id));
                bl.tau_norms.push_back(nn::l2_norm(taus_raw.back().delta));
            }
            out.baselines.push_back(bl);

            for (Conditioning cond : kArms) {
                std::vector<CellResult> arm_cells;
                for (merge::Method m : cfg.methods) {
                    CellResult cell;
                    cell.scenario = sc;
                    cell.method = m;
                    cell.conditioning = cond;
                    cell.seed = seed;
                    cell.rotation = rot;
                    cell.lambda_star = kNaN;
                    cell.mask_density = kNaN;
                    arm_cells.push_back(std::move(cell));
                }

                std::string skip = skip_reason(cfg, sc, cond);
                if (!skip.empty()) {
                    for (CellResult& c : arm_cells) c.status = skip;
                    for (CellResult& c : arm_cells) out.cells.push_back(std::move(c));
                    continue;
                }

                // Build this arm's task vectors (conditioning happens here).
                std::vector<merge::TaskVector> taus = taus_raw;
                std::string cond_error;
                if (cond != Conditioning::none) {
                    try {
                        distac::KappaChoice choice{0, 1.0};
                        if (sc == ScenarioKind::norm_mismatch || sc == ScenarioKind::combined)
                            choice = distac::choose_kappa_norm_match(bl.tau_norms);

                        auto make_record = [&](std::size_t t, double kappa,
                                               const nn::ParamVector& theta_cond, bool aborted) {
                            ConditioningRecord rec;
                            rec.scenario = sc;
                            rec.seed = seed;
                            rec.rotation = rot;
                            rec.task_id = suite.tasks[t].task_id;
                            rec.conditioning = cond;
                            rec.kappa = kappa;
                            double denom = kappa * bl.tau_norms[t];
                            rec.final_rel_norm =
                                denom > 0 ? nn::l2_norm(theta_cond - theta_pre) / denom : kNaN;
                            SplitEval ev = eval_split(cfg.model, theta_cond, suite.tasks[t].test);
                            rec.student_entropy = ev.entropy;
                            rec.student_acc = ev.acc;
                            rec.teacher_entropy = bl.individual_entropy[t];
                            rec.teacher_acc = bl.individual_acc[t];
                            rec.aborted = aborted;
                            out.conditioning.push_back(rec);
                        };

                        if (cond == Conditioning::scale_only) {
                            // Rescale the outlier task vector; nothing else moves.
                            std::size_t t = choice.index;
                            nn::ParamVector theta_s = nn::axpy(theta_pre, choice.kappa,
                                                               taus_raw[t].delta);
                            taus[t] = merge::compute_task_vector(theta_s, theta_pre,
                                                                 suite.tasks[t].task_id, "scale");
                            make_record(t, choice.kappa, theta_s, false);
                        } else {
                            // DisTaC conditions every task vector. Norm mismatch
                            // shrinks each vector toward the mean norm of the
                            // others (never stretches; stretching is harmful);
                            // low confidence re-sharpens every vector at kappa 1.
                            distac::KDConfig kd = cfg.kd;
                            if (sc == ScenarioKind::norm_mismatch ||
                                sc == ScenarioKind::combined) {
                                distac::KDConfig prof = distac::KDConfig::norm_mismatch_profile();
                                kd.t_tcr = prof.t_tcr;
                                kd.t_stu = prof.t_stu;
                            } else {
                                distac::KDConfig prof = distac::KDConfig::low_confidence_profile();
                                kd.t_tcr = prof.t_tcr;
                                kd.t_stu = prof.t_stu;
                            }
                            const double total_norm =
                                std::accumulate(bl.tau_norms.begin(), bl.tau_norms.end(), 0.0);
                            for (std::size_t t = 0; t < T; ++t) {
                                distac::KDConfig kdt = kd;
                                if (sc == ScenarioKind::norm_mismatch ||
                                    sc == ScenarioKind::combined) {
                                    const double others =
                                        (total_norm - bl.tau_norms[t]) / static_cast<double>(T - 1);
                                    kdt.kappa = std::min(1.0, others / bl.tau_norms[t]);
                                } else {
                                    kdt.kappa = 1.0;
                                }
                                kdt.seed = mix_seed(seed, 60,
                                                    static_cast<std::uint64_t>(rot + 1) * 131 + t);
                                distac::DistacResult res = distac::distac_condition(
                                    cfg.model, theta_pre, taus_raw[t], suite.tasks[t].unlabeled,
                                    kdt, &suite.tasks[t].val);
                                out.distac_histories.emplace_back(
                                    "distac_" + to_string(sc) + "_" + seed_tag(seed) +
                                        (rot >= 0 ? "_rot" + std::to_string(rot) : "") + "_task" +
                                        std::to_string(t),
                                    res.history);
                                taus[t] = merge::compute_task_vector(
                                    res.theta, theta_pre, suite.tasks[t].task_id, "distac");
                                make_record(t, kdt.kappa, res.theta, res.aborted);
                            }
                        }
                    } catch (const std::exception& e) {
                        cond_error = std::string("failed: conditioning: ") + e.what();
                    }
                }
                if (!cond_error.empty()) {
                    for (CellResult& c : arm_cells) c.status = cond_error;
                    for (CellResult& c : arm_cells) out.cells.push_back(std::move(c));
                    continue;
                }

                // Merge cells of this arm share the conditioned task vectors.
                for (CellResult& cell : arm_cells) {
                    try {
                        merge::MergeConfig mc = cfg.merge;
                        mc.method = cell.method;
                        std::vector<double> grid = mc.lambda_grid.empty()
                                                       ? merge::MergeConfig::default_lambda_grid()
                                                       : mc.lambda_grid;
                        std::vector<std::string> warn;
                        nn::ParamVector merged = nn::zeros_like(cfg.model);
                        if (cell.method == merge::Method::uniform) {
                            merged = merge::merge_uniform(theta_pre, taus);
                        } else {
                            auto merge_at = [&](double lam) {
                                return merge::merge_with(theta_pre, taus, mc, lam, nullptr);
                            };
                            auto score = [&](const nn::ParamVector& th) {
                                double s = 0.0;
                                for (std::size_t t = 0; t < T; ++t)
                                    s += metrics::accuracy(cfg.model, th, suite.tasks[t].val);
                                return s / static_cast<double>(T);
                            };
                            merge::LambdaSearchResult sr = merge::tune_lambda(merge_at, grid, score);
                            cell.lambda_star = sr.lambda_star;
                            merged = merge::merge_with(theta_pre, taus, mc, sr.lambda_star, &warn);
                        }
                        cell.warnings = std::move(warn);
                        cell.cosine_diag = merge::cosine_diagnostics(taus);
                        if (cell.method == merge::Method::ties) {
                            auto masks = merge::ties_masks(taus, mc.ties_keep_fraction);
                            double d = 0.0;
                            for (const merge::MaskVector& mk : masks) d += mk.density();
                            cell.mask_density = d / static_cast<double>(masks.size());
                        } else if (cell.method == merge::Method::consensus) {
                            cell.mask_density =
                                merge::consensus_masks(taus, mc.tall_weight, mc.consensus_k)
                                    .consensus.density();
                        }

                        cell.test_reads.assign(T, 0);
                        std::vector<double> pooled_conf;
                        std::vector<std::uint8_t> pooled_correct;
                        double acc_sum = 0.0, norm_sum = 0.0, ent_sum = 0.0;
                        for (std::size_t t = 0; t < T; ++t) {
                            SplitEval ev = eval_split(cfg.model, merged, suite.tasks[t].test);
                            cell.test_reads[t] += 1;
                            TaskCellEval te;
                            te.task_id = suite.tasks[t].task_id;
                            te.accuracy = ev.acc;
                            te.normalized = bl.individual_acc[t] > 0.0
                                                ? ev.acc / bl.individual_acc[t]
                                                : kNaN;
                            te.entropy = ev.entropy;
                            acc_sum += te.accuracy;
                            norm_sum += te.normalized;
                            ent_sum += te.entropy;
                            cell.per_task.push_back(std::move(te));
                            pooled_conf.insert(pooled_conf.end(), ev.conf.begin(), ev.conf.end());
                            pooled_correct.insert(pooled_correct.end(), ev.correct.begin(),
                                                  ev.correct.end());
                        }
                        double nt = static_cast<double>(T);
                        cell.mean_accuracy = acc_sum / nt;
                        cell.mean_normalized = norm_sum / nt;
                        cell.mean_entropy = ent_sum / nt;
                        cell.reliability =
                            metrics::reliability_from_scores(pooled_conf, pooled_correct);
                        cell.status = "ok";
                    } catch (const std::exception& e) {
                        cell.status = std::string("failed: ") + e.what();
                    }
                }
                for (CellResult& c : arm_cells) out.cells.push_back(std::move(c));
            }
        }
    }
    return out;
}

std::string fmt(double v, const char* spec = "%.9g") {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

ordered_json jnum(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

ordered_json jnums(const std::vector<double>& v) {
    ordered_json a = ordered_json::array();
    for (double x : v) a.push_back(jnum(x));
    return a;
}

std::string cell_tag(const CellResult& c) {
    std::string s = to_string(c.scenario) + "_" + merge::to_string(c.method) + "_" +
                    to_string(c.conditioning) + "_" + seed_tag(c.seed);
    if (c.rotation >= 0) s += "_rot" + std::to_string(c.rotation);
    return s;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("short write to " + p.string());
}

}  // namespace

RunResult run_grid(const ScenarioConfig& cfg) {
    cfg.validate();
    RunResult res;
    res.config = cfg;

    const std::size_t n = cfg.seeds.size();
    std::vector<SeedOutput> outs(n);
    if (cfg.jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) outs[i] = run_seed(cfg, cfg.seeds[i]);
    } else {
        // Seeds are independent; run them in bounded windows and splice the
        // outputs back in seed order so concurrency never changes the report.
        for (std::size_t lo = 0; lo < n; lo += cfg.jobs) {
            std::size_t hi = std::min(n, lo + cfg.jobs);
            std::vector<std::future<SeedOutput>> futs;
            for (std::size_t i = lo; i < hi; ++i)
                futs.push_back(std::async(std::launch::async,
                                          [&cfg, s = cfg.seeds[i]] { return run_seed(cfg, s); }));
            for (std::size_t i = lo; i < hi; ++i) outs[i] = futs[i - lo].get();
        }
    }

    for (SeedOutput& so : outs) {
        std::move(so.cells.begin(), so.cells.end(), std::back_inserter(res.cells));
        std::move(so.baselines.begin(), so.baselines.end(), std::back_inserter(res.baselines));
        std::move(so.mtl.begin(), so.mtl.end(), std::back_inserter(res.mtl));
        std::move(so.conditioning.begin(), so.conditioning.end(),
                  std::back_inserter(res.conditioning));
        std::move(so.train_histories.begin(), so.train_histories.end(),
                  std::back_inserter(res.train_histories));
        std::move(so.distac_histories.begin(), so.distac_histories.end(),
                  std::back_inserter(res.distac_histories));
        std::move(so.kappa_sweeps.begin(), so.kappa_sweeps.end(),
                  std::back_inserter(res.kappa_sweeps));
    }
    return res;
}

std::string results_json(const RunResult& res) {
    const ScenarioConfig& cfg = res.config;
    ordered_json j;

    ordered_json jc;
    {
        ordered_json sc = ordered_json::array();
        for (ScenarioKind k : cfg.scenarios) sc.push_back(to_string(k));
        jc["scenarios"] = sc;
        jc["num_tasks"] = cfg.num_tasks;
        jc["seeds"] = cfg.seeds;
        jc["dataset"] = {{"kind", to_string(cfg.dataset.kind)},
                         {"classes_per_task", cfg.dataset.classes_per_task},
                         {"train_count", cfg.dataset.train_count},
                         {"val_count", cfg.dataset.val_count},
                         {"test_count", cfg.dataset.test_count},
                         {"unlabeled_count", cfg.dataset.unlabeled_count},
                         {"pretrain_count", cfg.dataset.pretrain_count},
                         {"input_dim", cfg.dataset.input_dim},
                         {"sigma", cfg.dataset.sigma},
                         {"min_separation_sigma", cfg.dataset.min_separation_sigma},
                         {"seed", cfg.dataset.seed}};
        ordered_json hidden = ordered_json::array();
        for (std::size_t h : cfg.model.hidden_dims) hidden.push_back(h);
        jc["model"] = {{"input_dim", cfg.model.input_dim},
                       {"hidden", hidden},
                       {"num_classes", cfg.model.num_classes},
                       {"activation", nn::to_string(cfg.model.activation)}};
        auto train_json = [](const train::TrainConfig& t) {
            return ordered_json{{"lr", t.lr},
                                {"steps", t.steps},
                                {"warmup_steps", t.warmup_steps},
                                {"schedule", t.schedule == train::Schedule::cosine ? "cosine"
                                                                                   : "constant"},
                                {"weight_decay", t.weight_decay},
                                {"batch_size", t.batch_size},
                                {"loss", nn::to_string(t.loss.kind)}};
        };
        jc["pretrain"] = train_json(cfg.pretrain);
        jc["train"] = train_json(cfg.train);
        jc["highlr_factor"] = cfg.highlr_factor;
        jc["confidence_method"] = to_string(cfg.confidence_method);
        jc["conf_alpha"] = cfg.conf_alpha;
        jc["conf_gamma"] = cfg.conf_gamma;
        jc["merge"] = {{"lambda_grid", cfg.merge.lambda_grid},
                       {"ties_keep_fraction", cfg.merge.ties_keep_fraction},
                       {"consensus_k", cfg.merge.consensus_k},
                       {"tall_weight", cfg.merge.tall_weight},
                       {"tsvm_rank", cfg.merge.tsvm_rank}};
        ordered_json meth = ordered_json::array();
        for (merge::Method m : cfg.methods) meth.push_back(merge::to_string(m));
        jc["methods"] = meth;
        jc["kd"] = {{"steps", cfg.kd.steps},
                    {"eta", cfg.kd.eta},
                    {"beta", cfg.kd.beta},
                    {"batch_size", cfg.kd.batch_size},
                    {"use_adamw", cfg.kd.use_adamw}};
        jc["run_distac"] = cfg.run_distac;
        jc["run_scale_only"] = cfg.run_scale_only;
        jc["include_mtl"] = cfg.include_mtl;
        jc["run_kappa_sweep"] = cfg.run_kappa_sweep;
    }
    j["config"] = jc;

    ordered_json jb = ordered_json::array();
    for (const BaselineResult& b : res.baselines) {
        jb.push_back({{"scenario", to_string(b.scenario)},
                      {"seed", b.seed},
                      {"rotation", b.rotation},
                      {"pretrained_acc", jnums(b.pretrained_acc)},
                      {"individual_acc", jnums(b.individual_acc)},
                      {"individual_entropy", jnums(b.individual_entropy)},
                      {"tau_norms", jnums(b.tau_norms)}});
    }
    j["baselines"] = jb;

    ordered_json jm = ordered_json::array();
    for (const MtlResult& m : res.mtl) jm.push_back({{"seed", m.seed}, {"acc", jnums(m.acc)}});
    j["mtl"] = jm;

    ordered_json jcond = ordered_json::array();
    for (const ConditioningRecord& r : res.conditioning) {
        jcond.push_back({{"scenario", to_string(r.scenario)},
                         {"seed", r.seed},
                         {"rotation", r.rotation},
                         {"task_id", r.task_id},
                         {"conditioning", to_string(r.conditioning)},
                         {"kappa", jnum(r.kappa)},
                         {"final_rel_norm", jnum(r.final_rel_norm)},
                         {"student_entropy", jnum(r.student_entropy)},
                         {"teacher_entropy", jnum(r.teacher_entropy)},
                         {"student_acc", jnum(r.student_acc)},
                         {"teacher_acc", jnum(r.teacher_acc)},
                         {"aborted", r.aborted}});
    }
    j["conditioning"] = jcond;

    ordered_json jcells = ordered_json::array();
    for (const CellResult& c : res.cells) {
        ordered_json pt = ordered_json::array();
        for (const TaskCellEval& te : c.per_task) {
            pt.push_back({{"task_id", te.task_id},
                          {"accuracy", jnum(te.accuracy)},
                          {"normalized", jnum(te.normalized)},
                          {"entropy", jnum(te.entropy)}});
        }
        ordered_json jc2 = {{"scenario", to_string(c.scenario)},
                            {"method", merge::to_string(c.method)},
                            {"conditioning", to_string(c.conditioning)},
                            {"seed", c.seed},
                            {"rotation", c.rotation},
                            {"status", c.status},
                            {"lambda_star", jnum(c.lambda_star)},
                            {"per_task", pt},
                            {"mean_accuracy", jnum(c.mean_accuracy)},
                            {"mean_normalized", jnum(c.mean_normalized)},
                            {"mean_entropy", jnum(c.mean_entropy)},
                            {"cosine_diag", jnums(c.cosine_diag)},
                            {"mask_density", jnum(c.mask_density)},
                            {"test_reads", c.test_reads},
                            {"ece", c.status == "ok" ? jnum(c.reliability.ece) : nullptr},
                            {"warnings", c.warnings}};
        jcells.push_back(jc2);
    }
    j["cells"] = jcells;

    ordered_json jk = ordered_json::array();
    for (const auto& [seed, task, curve] : res.kappa_sweeps) {
        ordered_json rows = ordered_json::array();
        for (auto [k, a] : curve) rows.push_back({{"kappa", jnum(k)}, {"accuracy", jnum(a)}});
        jk.push_back({{"seed", seed}, {"task_id", task}, {"curve", rows}});
    }
    j["kappa_sweeps"] = jk;

    return j.dump(2) + "\n";
}

namespace {

// Mean of `pick(cell)` over ok cells matching (sc, m, cond); NaN when none.
template <typename F>
double cell_mean(const RunResult& res, ScenarioKind sc, merge::Method m, Conditioning cond,
                 F pick) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const CellResult& c : res.cells) {
        if (c.scenario != sc || c.method != m || c.conditioning != cond) continue;
        if (c.status != "ok") continue;
        sum += pick(c);
        ++n;
    }
    return n ? sum / static_cast<double>(n) : kNaN;
}

}  // namespace

double grid_mean_normalized(const RunResult& res, ScenarioKind sc, merge::Method m,
                            Conditioning c) {
    return cell_mean(res, sc, m, c, [](const CellResult& x) { return x.mean_normalized; });
}

double grid_mean_accuracy(const RunResult& res, ScenarioKind sc, merge::Method m, Conditioning c) {
    return cell_mean(res, sc, m, c, [](const CellResult& x) { return x.mean_accuracy; });
}

std::string table1_csv(const RunResult& res) {
    const ScenarioConfig& cfg = res.config;
    std::string s = "method";
    for (ScenarioKind sc : cfg.scenarios)
        s += "," + to_string(sc) + "_acc," + to_string(sc) + "_norm";
    s += "\n";

    auto pct = [](double v) { return std::isfinite(v) ? fmt(v * 100.0, "%.2f") : std::string(); };

    // Baseline rows aggregate over seeds and rotations.
    auto baseline_row = [&](const std::string& label, auto accs, auto norms) {
        s += label;
        for (ScenarioKind sc : cfg.scenarios) {
            double asum = 0.0, nsum = 0.0;
            std::size_t an = 0, nn2 = 0;
            for (const BaselineResult& b : res.baselines) {
                if (b.scenario != sc) continue;
                for (std::size_t t = 0; t < b.individual_acc.size(); ++t) {
                    double a = accs(b, t);
                    double nr = norms(b, t);
                    if (std::isfinite(a)) { asum += a; ++an; }
                    if (std::isfinite(nr)) { nsum += nr; ++nn2; }
                }
            }
            s += "," + pct(an ? asum / an : kNaN) + "," + pct(nn2 ? nsum / nn2 : kNaN);
        }
        s += "\n";
    };

    baseline_row(
        "pretrained", [](const BaselineResult& b, std::size_t t) { return b.pretrained_acc[t]; },
        [](const BaselineResult& b, std::size_t t) {
            return b.individual_acc[t] > 0 ? b.pretrained_acc[t] / b.individual_acc[t] : kNaN;
        });
    baseline_row(
        "individual", [](const BaselineResult& b, std::size_t t) { return b.individual_acc[t]; },
        [](const BaselineResult&, std::size_t) { return 1.0; });

    if (!res.mtl.empty()) {
        // Joint training belongs to the original scenario; other columns stay
        // blank. Normalized is vs the original-arm individual models.
        s += "mtl";
        for (ScenarioKind sc : cfg.scenarios) {
            if (sc != ScenarioKind::original) {
                s += ",,";
                continue;
            }
            double asum = 0.0, nsum = 0.0;
            std::size_t n = 0;
            for (const MtlResult& m : res.mtl) {
                const BaselineResult* bl = nullptr;
                for (const BaselineResult& b : res.baselines)
                    if (b.scenario == ScenarioKind::original && b.seed == m.seed) bl = &b;
                for (std::size_t t = 0; t < m.acc.size(); ++t) {
                    asum += m.acc[t];
                    if (bl && bl->individual_acc[t] > 0) nsum += m.acc[t] / bl->individual_acc[t];
                    ++n;
                }
            }
            s += "," + pct(n ? asum / n : kNaN) + "," + pct(n ? nsum / n : kNaN);
        }
        s += "\n";
    }

    for (merge::Method m : cfg.methods) {
        for (Conditioning cond : kArms) {
            std::string label = merge::to_string(m);
            if (cond == Conditioning::scale_only) label += "+scale";
            if (cond == Conditioning::distac) label += "+distac";
            bool any = false;
            std::string row = label;
            for (ScenarioKind sc : cfg.scenarios) {
                double a = grid_mean_accuracy(res, sc, m, cond);
                double nr = grid_mean_normalized(res, sc, m, cond);
                if (std::isfinite(a)) any = true;
                row += "," + pct(a) + "," + pct(nr);
            }
            if (any) s += row + "\n";
        }
    }
    return s;
}

void report_emit(const RunResult& res, const fs::path& out_dir) {
    fs::create_directories(out_dir / "history");
    fs::create_directories(out_dir / "reliability");

    write_file(out_dir / "results.json", results_json(res));
    write_file(out_dir / "table1.csv", table1_csv(res));

    auto sorted_train = res.train_histories;
    std::sort(sorted_train.begin(), sorted_train.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [name, hist] : sorted_train) {
        std::string s = "step,loss,train_entropy\n";
        for (const train::StepRecord& r : hist)
            s += std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt(r.train_entropy) + "\n";
        write_file(out_dir / "history" / (name + ".csv"), s);
    }

    auto sorted_kd = res.distac_histories;
    std::sort(sorted_kd.begin(), sorted_kd.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [name, hist] : sorted_kd) {
        std::string s = "step,rel_accuracy,rel_norm,entropy,loss\n";
        for (const distac::DistacStep& r : hist)
            s += std::to_string(r.step) + "," + fmt(r.rel_accuracy) + "," + fmt(r.rel_norm) + "," +
                 fmt(r.entropy) + "," + fmt(r.loss) + "\n";
        write_file(out_dir / "history" / (name + ".csv"), s);
    }

    for (const CellResult& c : res.cells) {
        if (c.status != "ok") continue;
        std::string s = "bin_lo,bin_hi,mean_confidence,accuracy,count\n";
        for (const metrics::ReliabilityBin& b : c.reliability.bins)
            s += fmt(b.lo) + "," + fmt(b.hi) + "," + fmt(b.mean_confidence) + "," +
                 fmt(b.accuracy) + "," + std::to_string(b.count) + "\n";
        write_file(out_dir / "reliability" / (cell_tag(c) + ".csv"), s);
    }

    if (!res.kappa_sweeps.empty()) {
        std::string s = "seed,task_id,kappa,accuracy\n";
        for (const auto& [seed, task, curve] : res.kappa_sweeps)
            for (auto [k, a] : curve)
                s += std::to_string(seed) + "," + task + "," + fmt(k) + "," + fmt(a) + "\n";
        write_file(out_dir / "kappa_sweep.csv", s);
    }
}

}  // namespace tvc::harness
