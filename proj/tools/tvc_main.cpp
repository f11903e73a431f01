// Command-line front end: every pipeline stage as a subcommand, configured by
// an INI-style file plus --set overrides. Output lands under --out, then
// $TVC_OUT, then ./tvc_out.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tvc/config.hpp"
#include "tvc/data.hpp"
#include "tvc/distac.hpp"
#include "tvc/io.hpp"
#include "tvc/merge.hpp"
#include "tvc/metrics.hpp"
#include "tvc/scenario.hpp"
#include "tvc/theory.hpp"
#include "tvc/train.hpp"

namespace fs = std::filesystem;
using namespace tvc;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "Config file ([section] key=value)");
    cmd->add_option("--set", c.overrides, "Override, e.g. --set train.lr=1e-3");
    cmd->add_option("--out", c.out, "Output directory (default $TVC_OUT, then ./tvc_out)");
}

fs::path out_root(const CommonOpts& c) {
    if (!c.out.empty()) return c.out;
    if (const char* env = std::getenv("TVC_OUT"); env && *env) return env;
    return "tvc_out";
}

harness::ConfigFile load_config(const CommonOpts& c) {
    harness::ConfigFile f;
    if (!c.config_path.empty()) f = harness::ConfigFile::parse_file(c.config_path);
    for (const std::string& ov : c.overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set wants section.key=value, got '" + ov + "'");
        f.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    return f;
}

// ===== Config -> typed settings =====

nn::ModelSpec model_from(const harness::ConfigFile& f) {
    nn::ModelSpec m;
    m.input_dim = f.get_size("model", "input_dim", m.input_dim);
    if (f.has("model", "hidden_dims")) {
        m.hidden_dims.clear();
        for (std::uint64_t h : f.get_u64_list("model", "hidden_dims", {}))
            m.hidden_dims.push_back(static_cast<std::size_t>(h));
    }
    m.num_classes = f.get_size("model", "num_classes", m.num_classes);
    m.activation = nn::activation_from_string(
        f.get_str("model", "activation", nn::to_string(m.activation)));
    return m;
}

harness::DatasetSpec dataset_from(const harness::ConfigFile& f) {
    harness::DatasetSpec d;
    d.kind = harness::dataset_kind_from_string(
        f.get_str("dataset", "kind", harness::to_string(d.kind)));
    d.classes_per_task = f.get_size("dataset", "classes_per_task", d.classes_per_task);
    d.train_count = f.get_size("dataset", "train_count", d.train_count);
    d.val_count = f.get_size("dataset", "val_count", d.val_count);
    d.test_count = f.get_size("dataset", "test_count", d.test_count);
    d.unlabeled_count = f.get_size("dataset", "unlabeled_count", d.unlabeled_count);
    d.pretrain_count = f.get_size("dataset", "pretrain_count", d.pretrain_count);
    d.input_dim = f.get_size("dataset", "input_dim", d.input_dim);
    d.sigma = f.get_double("dataset", "sigma", d.sigma);
    d.min_separation_sigma =
        f.get_double("dataset", "min_separation_sigma", d.min_separation_sigma);
    d.seed = f.get_size("dataset", "seed", d.seed);
    d.images_path = f.get_str("dataset", "images_path", d.images_path);
    d.labels_path = f.get_str("dataset", "labels_path", d.labels_path);
    return d;
}

train::TrainConfig train_from(const harness::ConfigFile& f, const std::string& section,
                              train::TrainConfig base) {
    base.lr = f.get_double(section, "lr", base.lr);
    base.steps = f.get_size(section, "steps", base.steps);
    base.warmup_steps = f.get_size(section, "warmup_steps", base.warmup_steps);
    const std::string sched = f.get_str(
        section, "schedule", base.schedule == train::Schedule::cosine ? "cosine" : "constant");
    if (sched == "cosine")
        base.schedule = train::Schedule::cosine;
    else if (sched == "constant")
        base.schedule = train::Schedule::constant;
    else
        throw std::invalid_argument("config " + section + ".schedule: '" + sched + "'");
    base.weight_decay = f.get_double(section, "weight_decay", base.weight_decay);
    base.batch_size = f.get_size(section, "batch_size", base.batch_size);
    base.loss.kind = nn::loss_kind_from_string(
        f.get_str(section, "loss", nn::to_string(base.loss.kind)));
    base.loss.alpha = f.get_double(section, "loss_alpha", base.loss.alpha);
    base.loss.gamma = f.get_double(section, "loss_gamma", base.loss.gamma);
    base.seed = f.get_size(section, "seed", base.seed);
    base.freeze_head = f.get_bool(section, "freeze_head", base.freeze_head);
    return base;
}

merge::MergeConfig merge_from(const harness::ConfigFile& f) {
    merge::MergeConfig m;
    m.lambda_grid = merge::MergeConfig::default_lambda_grid();
    m.method = merge::method_from_string(f.get_str("merge", "method", merge::to_string(m.method)));
    m.lambda = f.get_double("merge", "lambda", m.lambda);
    m.lambda_grid = f.get_double_list("merge", "lambda_grid", m.lambda_grid);
    m.ties_keep_fraction = f.get_double("merge", "ties_keep_fraction", m.ties_keep_fraction);
    m.consensus_k = f.get_size("merge", "consensus_k", m.consensus_k);
    m.tall_weight = f.get_double("merge", "tall_weight", m.tall_weight);
    m.tsvm_rank = f.get_size("merge", "tsvm_rank", m.tsvm_rank);
    const std::string pol = f.get_str("merge", "tsvm_rank_policy", "per_task_topk");
    if (pol == "per_task_topk")
        m.tsvm_rank_policy = merge::TsvmRankPolicy::per_task_topk;
    else if (pol == "full")
        m.tsvm_rank_policy = merge::TsvmRankPolicy::full;
    else
        throw std::invalid_argument("config merge.tsvm_rank_policy: '" + pol + "'");
    return m;
}

distac::KDConfig kd_from(const harness::ConfigFile& f) {
    distac::KDConfig k;
    k.kappa = f.get_double("distac", "kappa", k.kappa);
    k.t_tcr = f.get_double("distac", "t_tcr", k.t_tcr);
    k.t_stu = f.get_double("distac", "t_stu", k.t_stu);
    k.beta = f.get_double("distac", "beta", k.beta);
    k.steps = f.get_size("distac", "steps", k.steps);
    k.eta = f.get_double("distac", "eta", k.eta);
    k.batch_size = f.get_size("distac", "batch_size", k.batch_size);
    k.seed = f.get_size("distac", "seed", k.seed);
    k.use_adamw = f.get_bool("distac", "use_adamw", k.use_adamw);
    return k;
}

harness::ScenarioConfig scenario_from(const harness::ConfigFile& f) {
    harness::ScenarioConfig s;
    if (f.has("scenario", "scenarios")) {
        s.scenarios.clear();
        for (const std::string& name : f.get_str_list("scenario", "scenarios", {}))
            s.scenarios.push_back(harness::scenario_from_string(name));
    }
    s.num_tasks = f.get_size("scenario", "num_tasks", s.num_tasks);
    s.seeds = f.get_u64_list("scenario", "seeds", s.seeds);
    s.highlr_factor = f.get_double("scenario", "highlr_factor", s.highlr_factor);
    s.confidence_method = harness::confidence_from_string(
        f.get_str("scenario", "confidence_method", harness::to_string(s.confidence_method)));
    s.conf_alpha = f.get_double("scenario", "conf_alpha", s.conf_alpha);
    s.conf_gamma = f.get_double("scenario", "conf_gamma", s.conf_gamma);
    if (f.has("scenario", "methods")) {
        s.methods.clear();
        for (const std::string& name : f.get_str_list("scenario", "methods", {}))
            s.methods.push_back(merge::method_from_string(name));
    }
    s.run_distac = f.get_bool("scenario", "run_distac", s.run_distac);
    s.run_scale_only = f.get_bool("scenario", "run_scale_only", s.run_scale_only);
    s.include_mtl = f.get_bool("scenario", "include_mtl", s.include_mtl);
    s.run_kappa_sweep = f.get_bool("scenario", "run_kappa_sweep", s.run_kappa_sweep);
    s.jobs = f.get_size("scenario", "jobs", s.jobs);

    s.dataset = dataset_from(f);
    s.model = model_from(f);
    s.pretrain = train_from(f, "pretrain", s.pretrain);
    s.train = train_from(f, "train", s.train);
    s.merge = merge_from(f);
    s.kd = kd_from(f);
    return s;
}

// Shared by the single-stage subcommands so they compose on disk: the suite
// is regenerated from the same [dataset] seed every time.
harness::TaskSuite suite_from(const harness::ConfigFile& f, std::size_t num_tasks) {
    return harness::build_task_suite(dataset_from(f), num_tasks);
}

// ===== Subcommands =====

int cmd_pretrain(const CommonOpts& co) {
    harness::ConfigFile f = load_config(co);
    harness::ScenarioConfig sc = scenario_from(f);
    fs::path root = out_root(co);
    fs::create_directories(root);

    harness::TaskSuite suite = suite_from(f, sc.num_tasks);
    nn::ParamVector init = nn::he_uniform_init(sc.model, sc.pretrain.seed);
    train::FinetuneResult res = train::finetune(sc.model, init, suite.pretrain, sc.pretrain);
    fs::path path = root / "pretrain.tvck";
    io::save_checkpoint(path, sc.model, res.theta);

    std::printf("pretrained %zu steps, final loss %.4f -> %s\n", sc.pretrain.steps,
                res.history.back().loss, path.string().c_str());
    for (std::size_t t = 0; t < suite.tasks.size(); ++t)
        std::printf("  %s zero-shot test acc %.4f\n", suite.tasks[t].task_id.c_str(),
                    metrics::accuracy(sc.model, res.theta, suite.tasks[t].test));
    return 0;
}

int cmd_finetune(const CommonOpts& co, std::size_t task, const std::string& init_path) {
    harness::ConfigFile f = load_config(co);
    harness::ScenarioConfig sc = scenario_from(f);
    fs::path root = out_root(co);
    fs::create_directories(root);
    harness::TaskSuite suite = suite_from(f, sc.num_tasks);
    if (task >= suite.tasks.size()) throw std::invalid_argument("no such task index");

    fs::path init = init_path.empty() ? root / "pretrain.tvck" : fs::path(init_path);
    io::Checkpoint ck = io::load_checkpoint(init);
    train::FinetuneResult res = train::finetune(ck.spec, ck.theta, suite.tasks[task].train,
                                                sc.train);
    fs::path path = root / ("task" + std::to_string(task) + ".tvck");
    io::save_checkpoint(path, ck.spec, res.theta);

    nn::ParamVector tau = res.theta - ck.theta;
    std::printf("finetuned %s (%s), test acc %.4f, ||tau|| %.4f -> %s\n",
                suite.tasks[task].task_id.c_str(), nn::to_string(sc.train.loss.kind).c_str(),
                metrics::accuracy(ck.spec, res.theta, suite.tasks[task].test), nn::l2_norm(tau),
                path.string().c_str());
    return 0;
}

int cmd_merge(const CommonOpts& co, const std::string& pre_path,
              std::vector<std::string> model_paths, bool tune) {
    harness::ConfigFile f = load_config(co);
    harness::ScenarioConfig sc = scenario_from(f);
    fs::path root = out_root(co);
    fs::create_directories(root);
    harness::TaskSuite suite = suite_from(f, sc.num_tasks);

    fs::path pre = pre_path.empty() ? root / "pretrain.tvck" : fs::path(pre_path);
    io::Checkpoint ck_pre = io::load_checkpoint(pre);
    if (model_paths.empty())
        for (std::size_t t = 0; t < sc.num_tasks; ++t)
            model_paths.push_back((root / ("task" + std::to_string(t) + ".tvck")).string());
    if (model_paths.size() > suite.tasks.size())
        throw std::invalid_argument("more models than tasks in the dataset");

    std::vector<merge::TaskVector> taus;
    std::vector<double> individual;
    for (std::size_t t = 0; t < model_paths.size(); ++t) {
        io::Checkpoint ck = io::load_checkpoint(model_paths[t]);
        taus.push_back(merge::compute_task_vector(ck.theta, ck_pre.theta,
                                                  suite.tasks[t].task_id));
        individual.push_back(metrics::accuracy(ck_pre.spec, ck.theta, suite.tasks[t].test));
    }

    merge::MergeConfig mc = sc.merge;
    double lambda = mc.lambda;
    if (tune && mc.method != merge::Method::uniform) {
        auto merge_at = [&](double lam) {
            return merge::merge_with(ck_pre.theta, taus, mc, lam, nullptr);
        };
        auto score = [&](const nn::ParamVector& th) {
            double s = 0.0;
            for (std::size_t t = 0; t < taus.size(); ++t)
                s += metrics::accuracy(ck_pre.spec, th, suite.tasks[t].val);
            return s / static_cast<double>(taus.size());
        };
        lambda = merge::tune_lambda(merge_at, mc.lambda_grid, score).lambda_star;
        std::printf("lambda tuned on validation: %.4f\n", lambda);
    }

    std::vector<std::string> warnings;
    nn::ParamVector merged = merge::merge_with(ck_pre.theta, taus, mc, lambda, &warnings);
    for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    fs::path path = root / "merged.tvck";
    io::save_checkpoint(path, ck_pre.spec, merged);

    std::printf("merged %zu tasks with %s (lambda %.4f) -> %s\n", taus.size(),
                merge::to_string(mc.method).c_str(), lambda, path.string().c_str());
    double mean_acc = 0.0, mean_norm = 0.0;
    for (std::size_t t = 0; t < taus.size(); ++t) {
        double acc = metrics::accuracy(ck_pre.spec, merged, suite.tasks[t].test);
        double norm = individual[t] > 0 ? acc / individual[t] : 0.0;
        mean_acc += acc;
        mean_norm += norm;
        std::printf("  %s test acc %.4f (normalized %.4f)\n", taus[t].task_id.c_str(), acc, norm);
    }
    std::printf("  mean acc %.4f, mean normalized %.4f\n", mean_acc / taus.size(),
                mean_norm / taus.size());
    return 0;
}

int cmd_distac(const CommonOpts& co, std::size_t task, const std::string& pre_path,
               const std::string& model_path, const std::string& profile, double kappa_flag) {
    harness::ConfigFile f = load_config(co);
    harness::ScenarioConfig sc = scenario_from(f);
    fs::path root = out_root(co);
    fs::create_directories(root / "history");
    harness::TaskSuite suite = suite_from(f, sc.num_tasks);
    if (task >= suite.tasks.size()) throw std::invalid_argument("no such task index");

    fs::path pre = pre_path.empty() ? root / "pretrain.tvck" : fs::path(pre_path);
    fs::path mdl = model_path.empty() ? root / ("task" + std::to_string(task) + ".tvck")
                                      : fs::path(model_path);
    io::Checkpoint ck_pre = io::load_checkpoint(pre);
    io::Checkpoint ck = io::load_checkpoint(mdl);

    distac::KDConfig kd = kd_from(f);
    if (!profile.empty()) {
        distac::KDConfig prof = profile == "norm_mismatch"
                                    ? distac::KDConfig::norm_mismatch_profile()
                                    : distac::KDConfig::low_confidence_profile();
        if (profile != "norm_mismatch" && profile != "low_confidence")
            throw std::invalid_argument("profile must be norm_mismatch or low_confidence");
        kd.t_tcr = prof.t_tcr;
        kd.t_stu = prof.t_stu;
        kd.kappa = prof.kappa;
    }
    if (kappa_flag > 0.0) kd.kappa = kappa_flag;

    merge::TaskVector tau =
        merge::compute_task_vector(ck.theta, ck_pre.theta, suite.tasks[task].task_id);
    distac::DistacResult res = distac::distac_condition(ck_pre.spec, ck_pre.theta, tau,
                                                        suite.tasks[task].unlabeled, kd,
                                                        &suite.tasks[task].val);

    fs::path path = root / ("task" + std::to_string(task) + "_distac.tvck");
    io::save_checkpoint(path, ck_pre.spec, res.theta);
    {
        std::ofstream hist(root / "history" / ("distac_task" + std::to_string(task) + ".csv"));
        hist << "step,rel_accuracy,rel_norm,entropy,loss\n";
        for (const distac::DistacStep& s : res.history)
            hist << s.step << ',' << s.rel_accuracy << ',' << s.rel_norm << ',' << s.entropy
                 << ',' << s.loss << '\n';
    }

    double teacher_ent = metrics::predictive_entropy(ck_pre.spec, ck.theta, suite.tasks[task].test);
    double student_ent = metrics::predictive_entropy(ck_pre.spec, res.theta,
                                                     suite.tasks[task].test);
    std::printf("conditioned %s: kappa %.4f, temps (%.1f, %.1f)%s -> %s\n",
                suite.tasks[task].task_id.c_str(), kd.kappa, kd.t_tcr, kd.t_stu,
                res.aborted ? " [aborted early]" : "", path.string().c_str());
    std::printf("  rel norm %.4f, teacher entropy %.4f -> student entropy %.4f\n",
                res.history.empty() ? 0.0 : res.history.back().rel_norm, teacher_ent, student_ent);
    std::printf("  teacher test acc %.4f, student test acc %.4f\n",
                metrics::accuracy(ck_pre.spec, ck.theta, suite.tasks[task].test),
                metrics::accuracy(ck_pre.spec, res.theta, suite.tasks[task].test));
    return 0;
}

int cmd_scenario(const CommonOpts& co, std::size_t jobs_flag) {
    harness::ConfigFile f = load_config(co);
    harness::ScenarioConfig sc = scenario_from(f);
    if (jobs_flag > 0) sc.jobs = jobs_flag;
    fs::path root = out_root(co);

    harness::RunResult res = harness::run_grid(sc);
    harness::report_emit(res, root);

    std::size_t ok = 0, skipped = 0, failed = 0;
    for (const harness::CellResult& c : res.cells) {
        if (c.status == "ok")
            ++ok;
        else if (c.status.rfind("skipped", 0) == 0)
            ++skipped;
        else
            ++failed;
    }
    std::printf("%zu cells: %zu ok, %zu skipped, %zu failed -> %s\n", res.cells.size(), ok,
                skipped, failed, root.string().c_str());
    std::fputs(harness::table1_csv(res).c_str(), stdout);
    return failed == 0 ? 0 : 1;
}

int cmd_theory(std::size_t dim, double lambda_cal, double alpha, double beta_m,
               std::uint64_t seed, bool full_fo, int neumann_order) {
    theory::QuadTask q1 = theory::random_quad_task(dim, seed, lambda_cal);
    theory::QuadTask q2 = theory::random_quad_task(dim, seed + 1, lambda_cal);

    auto norm = [](const std::vector<double>& v) { return linalg::norm2(v); };
    auto diff_norm = [&](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
        return norm(d);
    };

    std::printf("dim %zu, lambda_cal %.4g, seed %llu\n", dim, lambda_cal,
                static_cast<unsigned long long>(seed));
    int idx = 1;
    for (const theory::QuadTask* q : {&q1, &q2}) {
        std::vector<double> tau_ce = theory::newton_task_vector(*q);
        std::vector<double> exact = theory::calibrated_task_vector_exact(*q);
        std::vector<double> fo = theory::calibrated_task_vector_firstorder(*q, full_fo);
        std::printf("task %d: ||tau_ce|| %.6f, ||tau_cal|| %.6f, first-order error %.3e\n", idx,
                    norm(tau_ce), norm(exact), diff_norm(exact, fo));
        ++idx;
    }

    linalg::DenseMatrix approx = theory::neumann_inverse(q1.h, q1.a, lambda_cal, neumann_order);
    // Compare against the exact inverse action on g.
    std::vector<double> exact_vec = theory::calibrated_task_vector_exact(q1);
    std::vector<double> rhs(q1.dim());
    for (std::size_t i = 0; i < q1.dim(); ++i) rhs[i] = q1.g[i] + q1.lambda_cal * q1.b[i];
    std::vector<double> approx_vec = linalg::matvec(approx, rhs);
    for (double& v : approx_vec) v = -v;
    std::printf("neumann order %d: ||approx - exact|| %.3e\n", neumann_order,
                diff_norm(approx_vec, exact_vec));

    theory::MergeCoeffs coeffs{alpha, beta_m};
    for (int eval_task : {1, 2}) {
        theory::LossDelta d = theory::merged_loss_delta(q1, q2, coeffs, eval_task);
        std::printf("merged loss delta, task %d: exact %.6e, first-order %.6e\n", eval_task,
                    d.exact, d.firstorder);
    }
    return 0;
}

int cmd_report(const CommonOpts& co) {
    fs::path root = out_root(co);
    fs::path table = root / "table1.csv";
    fs::path results = root / "results.json";
    if (!fs::exists(results)) throw std::runtime_error("no results.json under " + root.string());

    std::ifstream jin(results);
    nlohmann::json j = nlohmann::json::parse(jin);

    if (fs::exists(table)) {
        std::ifstream tin(table);
        std::cout << tin.rdbuf();
    }

    // Headline: best mean normalized accuracy per scenario, recomputed from
    // the per-cell records.
    std::map<std::string, std::pair<std::string, double>> best;
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& c : j["cells"]) {
        if (c["status"] != "ok" || c["mean_normalized"].is_null()) continue;
        std::string key = std::string(c["scenario"]) + "|" + std::string(c["method"]) + "|" +
                          std::string(c["conditioning"]);
        auto& [sum, n] = sums[key];
        sum += double(c["mean_normalized"]);
        n += 1;
    }
    for (const auto& [key, sn] : sums) {
        std::string scen = key.substr(0, key.find('|'));
        double mean = sn.first / static_cast<double>(sn.second);
        auto it = best.find(scen);
        if (it == best.end() || mean > it->second.second)
            best[scen] = {key.substr(key.find('|') + 1), mean};
    }
    for (const auto& [scen, b] : best)
        std::printf("best %s: %s, mean normalized %.4f\n", scen.c_str(), b.first.c_str(),
                    b.second);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Task-vector merging workbench"};
    app.require_subcommand(1);

    CommonOpts co;
    std::size_t task = 0;
    std::string init_path, pre_path, model_path, profile;
    std::vector<std::string> model_paths;
    bool tune = false;
    double kappa_flag = 0.0;
    std::size_t jobs_flag = 0;

    std::size_t th_dim = 8;
    double th_lambda = 0.1, th_alpha = 0.05, th_beta = 0.05;
    std::uint64_t th_seed = 0;
    bool th_full = true;
    int th_order = 1;

    CLI::App* c_pre = app.add_subcommand("pretrain", "Train theta_pre on the class mixture");
    add_common(c_pre, co);

    CLI::App* c_ft = app.add_subcommand("finetune", "Fine-tune one task from a checkpoint");
    add_common(c_ft, co);
    c_ft->add_option("--task", task, "Task index")->required();
    c_ft->add_option("--init", init_path, "Starting checkpoint (default <out>/pretrain.tvck)");

    CLI::App* c_mg = app.add_subcommand("merge", "Merge task checkpoints");
    add_common(c_mg, co);
    c_mg->add_option("--pre", pre_path, "Pretrained checkpoint");
    c_mg->add_option("--models", model_paths, "Task checkpoints (default <out>/task<k>.tvck)");
    c_mg->add_flag("--tune", tune, "Pick lambda on the validation grid");

    CLI::App* c_kd = app.add_subcommand("distac", "Condition one task vector by distillation");
    add_common(c_kd, co);
    c_kd->add_option("--task", task, "Task index")->required();
    c_kd->add_option("--pre", pre_path, "Pretrained checkpoint");
    c_kd->add_option("--model", model_path, "Task checkpoint");
    c_kd->add_option("--profile", profile, "norm_mismatch or low_confidence temperatures");
    c_kd->add_option("--kappa", kappa_flag, "Rescale target (overrides profile)");

    CLI::App* c_sc = app.add_subcommand("scenario", "Run the full scenario grid");
    add_common(c_sc, co);
    c_sc->add_option("--jobs", jobs_flag, "Seed-level parallelism");

    CLI::App* c_th = app.add_subcommand("theory", "Quadratic-model oracle demo");
    c_th->add_option("--dim", th_dim, "Problem dimension");
    c_th->add_option("--lambda", th_lambda, "Calibration strength");
    c_th->add_option("--alpha", th_alpha, "Merge weight, task 1");
    c_th->add_option("--beta", th_beta, "Merge weight, task 2");
    c_th->add_option("--seed", th_seed, "Instance seed");
    c_th->add_flag("--full-firstorder,!--no-full-firstorder", th_full,
                   "Include the H^-1 A H^-1 g term");
    c_th->add_option("--neumann-order", th_order, "Series truncation order");

    CLI::App* c_rp = app.add_subcommand("report", "Print the table and headline numbers");
    add_common(c_rp, co);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_pre->parsed()) return cmd_pretrain(co);
        if (c_ft->parsed()) return cmd_finetune(co, task, init_path);
        if (c_mg->parsed()) return cmd_merge(co, pre_path, model_paths, tune);
        if (c_kd->parsed()) return cmd_distac(co, task, pre_path, model_path, profile, kappa_flag);
        if (c_sc->parsed()) return cmd_scenario(co, jobs_flag);
        if (c_th->parsed())
            return cmd_theory(th_dim, th_lambda, th_alpha, th_beta, th_seed, th_full, th_order);
        if (c_rp->parsed()) return cmd_report(co);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
