#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tvc/distac.hpp"
#include "tvc/nn.hpp"

namespace tvc::harness {

enum class DatasetKind : std::uint8_t { synthetic_gaussian, idx_files };

std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DatasetSpec {
    DatasetKind kind = DatasetKind::synthetic_gaussian;
    std::size_t classes_per_task = 4;
    std::size_t train_count = 256;   // per task
    std::size_t val_count = 64;      // per task; ~20% of train by default
    std::size_t test_count = 128;    // per task
    std::size_t unlabeled_count = 512;  // per task, inputs only
    std::size_t pretrain_count = 1024;  // mixture set size
    std::size_t input_dim = 16;
    double sigma = 1.0;
    double min_separation_sigma = 4.0;  // pairwise class-mean distance floor
    std::uint64_t seed = 0;
    // idx_files only
    std::string images_path;
    std::string labels_path;

    void validate() const;
};

// Everything one task contributes to a run. The distillation inputs are a
// separate unlabeled pool by construction.
struct TaskData {
    std::string task_id;
    nn::Dataset train;
    nn::Dataset val;
    nn::Dataset test;
    distac::UnlabeledSet unlabeled;
};

struct TaskSuite {
    std::vector<TaskData> tasks;
    // Mixture over every class with coarse labels: adjacent local labels are
    // paired into super-groups shared by all tasks (identity below four
    // classes per task), so pretraining learns the input geometry and broad
    // layout but not any task's exact class assignment.
    nn::Dataset pretrain;
};

// Synthetic Gaussian tasks: num_tasks * classes_per_task cluster means with
// pairwise distance >= min_separation_sigma * sigma (std::runtime_error when
// placement keeps failing), disjoint class sets across tasks, near-balanced
// labels per split. Deterministic per spec.seed.
TaskSuite gen_synthetic_tasks(const DatasetSpec& spec, std::size_t num_tasks);

// Slices an IDX image/label pair into tasks: task t owns global labels
// [t*classes_per_task, (t+1)*classes_per_task), re-labeled locally. Splits
// are drawn per class after a seeded shuffle; throws std::runtime_error when
// a class runs out of samples.
TaskSuite load_idx_tasks(const DatasetSpec& spec, std::size_t num_tasks);

// Either of the above, keyed on spec.kind.
TaskSuite build_task_suite(const DatasetSpec& spec, std::size_t num_tasks);

}  // namespace tvc::harness
