#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "tvc/data.hpp"
#include "tvc/distac.hpp"
#include "tvc/merge.hpp"
#include "tvc/metrics.hpp"
#include "tvc/train.hpp"

namespace tvc::harness {

enum class ScenarioKind : std::uint8_t { original, norm_mismatch, low_confidence, combined };
enum class ConfidenceMethod : std::uint8_t { label_smoothing, mixup, focal };
// Conditioning arms: none (raw task vectors), scale_only (kappa rescale, no
// distillation), distac (rescale + distillation).
enum class Conditioning : std::uint8_t { none, scale_only, distac };

std::string to_string(ScenarioKind k);
ScenarioKind scenario_from_string(const std::string& s);
std::string to_string(ConfidenceMethod m);
ConfidenceMethod confidence_from_string(const std::string& s);
std::string to_string(Conditioning c);

struct ScenarioConfig {
    std::vector<ScenarioKind> scenarios = {ScenarioKind::original, ScenarioKind::norm_mismatch,
                                           ScenarioKind::low_confidence};
    std::size_t num_tasks = 4;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    DatasetSpec dataset;
    nn::ModelSpec model;

    train::TrainConfig pretrain;  // desk profile, fewer steps
    train::TrainConfig train;     // desk profile, hard cross-entropy
    double highlr_factor = 10.0;  // norm_mismatch learning-rate bump

    ConfidenceMethod confidence_method = ConfidenceMethod::label_smoothing;
    double conf_alpha = 0.1;   // label smoothing strength
    double conf_gamma = 10.0;  // focal exponent

    merge::MergeConfig merge;
    std::vector<merge::Method> methods = merge::all_methods();

    distac::KDConfig kd;         // steps/eta/beta/batch; temps come from profiles
    bool run_distac = true;
    bool run_scale_only = true;  // extra arm where kappa rescaling is nontrivial
    bool include_mtl = true;     // joint-training reference on the original scenario
    bool run_kappa_sweep = true;
    std::size_t jobs = 1;        // seeds run in a small work pool when > 1

    ScenarioConfig();
    void validate() const;
};

// ===== Results =====

struct TaskCellEval {
    std::string task_id;
    double accuracy = 0.0;
    double normalized = 0.0;  // vs the arm's unconditioned individual model
    double entropy = 0.0;
};

struct CellResult {
    ScenarioKind scenario = ScenarioKind::original;
    merge::Method method = merge::Method::uniform;
    Conditioning conditioning = Conditioning::none;
    std::uint64_t seed = 0;
    int rotation = -1;  // rotating high-lr task index; -1 when not applicable
    std::string status;  // "ok", "skipped: ...", "failed: ..."
    double lambda_star = 0.0;  // NaN when the method has no lambda
    std::vector<TaskCellEval> per_task;
    double mean_accuracy = 0.0;
    double mean_normalized = 0.0;
    double mean_entropy = 0.0;
    std::vector<double> cosine_diag;  // cos(sum tau, tau_t) per task
    double mask_density = 0.0;        // NaN unless ties/consensus
    std::vector<std::size_t> test_reads;  // test-set passes per task in this cell
    metrics::ReliabilityReport reliability;  // pooled over tasks
    std::vector<std::string> warnings;
};

struct BaselineResult {
    ScenarioKind scenario = ScenarioKind::original;
    std::uint64_t seed = 0;
    int rotation = -1;
    std::vector<double> pretrained_acc;
    std::vector<double> individual_acc;      // unconditioned fine-tuned models
    std::vector<double> individual_entropy;  // test-split predictive entropy
    std::vector<double> tau_norms;
};

struct MtlResult {
    std::uint64_t seed = 0;
    std::vector<double> acc;
};

struct ConditioningRecord {
    ScenarioKind scenario = ScenarioKind::original;
    std::uint64_t seed = 0;
    int rotation = -1;
    std::string task_id;
    Conditioning conditioning = Conditioning::distac;
    double kappa = 1.0;
    double final_rel_norm = 0.0;   // ||theta - theta_pre|| / (kappa ||tau||)
    double student_entropy = 0.0;  // test split
    double teacher_entropy = 0.0;
    double student_acc = 0.0;
    double teacher_acc = 0.0;
    bool aborted = false;
};

struct RunResult {
    ScenarioConfig config;
    std::vector<CellResult> cells;
    std::vector<BaselineResult> baselines;
    std::vector<MtlResult> mtl;
    std::vector<ConditioningRecord> conditioning;
    std::vector<std::pair<std::string, std::vector<train::StepRecord>>> train_histories;
    std::vector<std::pair<std::string, std::vector<distac::DistacStep>>> distac_histories;
    // (seed, task_id, kappa-accuracy curve on the test split of base models)
    std::vector<std::tuple<std::uint64_t, std::string, std::vector<std::pair<double, double>>>>
        kappa_sweeps;
};

// Runs every (scenario x method x conditioning x seed x rotation) cell in a
// deterministic order; seeds may run concurrently (cfg.jobs) without
// changing the output. Each cell is attempted and recorded as ok, skipped
// (with reason), or failed (with the exception text).
RunResult run_grid(const ScenarioConfig& cfg);

// Serialized reports; exposed so determinism can be checked byte-for-byte.
std::string results_json(const RunResult& res);
std::string table1_csv(const RunResult& res);

// Writes results.json, table1.csv, history/*.csv, reliability/*.csv and
// kappa_sweep.csv under out_dir.
void report_emit(const RunResult& res, const std::filesystem::path& out_dir);

// Mean over cells (seeds and rotations) matching the key; NaN when none.
double grid_mean_normalized(const RunResult& res, ScenarioKind sc, merge::Method m, Conditioning c);
double grid_mean_accuracy(const RunResult& res, ScenarioKind sc, merge::Method m, Conditioning c);

}  // namespace tvc::harness
