#include "tvc/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tvc/io.hpp"

namespace tvc::harness {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Pretraining sees every cluster but only coarse structure: adjacent local
// labels are paired into super-groups shared by all tasks, so the pretrained
// model gets the broad layout right and fine-tuning refines it. With fewer
// than four classes per task there is nothing to coarsen.
int coarse_label(std::size_t local, std::size_t c_per) {
    if (c_per < 4) return static_cast<int>(local);
    return static_cast<int>(local / 2);
}

}  // namespace

std::string to_string(DatasetKind k) {
    return k == DatasetKind::synthetic_gaussian ? "synthetic_gaussian" : "idx_files";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "synthetic_gaussian") return DatasetKind::synthetic_gaussian;
    if (s == "idx_files") return DatasetKind::idx_files;
    throw std::invalid_argument("unknown dataset kind: " + s);
}

void DatasetSpec::validate() const {
    require(classes_per_task >= 2, "DatasetSpec: classes_per_task must be >= 2");
    require(train_count >= classes_per_task, "DatasetSpec: train_count must cover every class");
    require(val_count >= 1 && test_count >= 1, "DatasetSpec: val/test counts must be >= 1");
    require(input_dim >= 1, "DatasetSpec: input_dim must be >= 1");
    require(sigma > 0.0, "DatasetSpec: sigma must be > 0");
    require(min_separation_sigma > 0.0, "DatasetSpec: min_separation_sigma must be > 0");
    if (kind == DatasetKind::idx_files)
        require(!images_path.empty() && !labels_path.empty(),
                "DatasetSpec: idx_files needs images_path and labels_path");
}

// ===== Synthetic Gaussian tasks =====

namespace {

std::vector<std::vector<double>> place_means(std::size_t count, std::size_t dim, double min_dist,
                                             std::mt19937_64& rng) {
    std::uniform_real_distribution<double> box(-8.0, 8.0);
    std::vector<std::vector<double>> means;
    means.reserve(count);
    const int max_attempts = 1000;
    for (std::size_t c = 0; c < count; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
            std::vector<double> m(dim);
            for (double& v : m) v = box(rng);
            placed = true;
            for (const auto& other : means) {
                double d2 = 0.0;
                for (std::size_t i = 0; i < dim; ++i) d2 += (m[i] - other[i]) * (m[i] - other[i]);
                if (std::sqrt(d2) < min_dist) {
                    placed = false;
                    break;
                }
            }
            if (placed) means.push_back(std::move(m));
        }
        if (!placed)
            throw std::runtime_error("gen_synthetic_tasks: could not place class mean " +
                                     std::to_string(c) + " at separation " + std::to_string(min_dist) +
                                     " after " + std::to_string(max_attempts) + " attempts");
    }
    return means;
}

std::vector<double> sample_point(const std::vector<double>& mean, double sigma,
                                 std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, sigma);
    std::vector<double> x(mean.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + gauss(rng);
    return x;
}

}  // namespace

TaskSuite gen_synthetic_tasks(const DatasetSpec& spec, std::size_t num_tasks) {
    spec.validate();
    require(num_tasks >= 1, "gen_synthetic_tasks: num_tasks must be >= 1");
    std::mt19937_64 rng(spec.seed);

    const std::size_t c_per = spec.classes_per_task;
    const std::size_t total_classes = num_tasks * c_per;
    const auto means =
        place_means(total_classes, spec.input_dim, spec.min_separation_sigma * spec.sigma, rng);

    TaskSuite suite;
    suite.tasks.resize(num_tasks);
    for (std::size_t t = 0; t < num_tasks; ++t) {
        TaskData& td = suite.tasks[t];
        td.task_id = "task" + std::to_string(t);
        const auto fill = [&](nn::Dataset& ds, std::size_t count) {
            ds.inputs.reserve(count);
            ds.labels.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t local = i % c_per;  // near-balanced by construction
                ds.inputs.push_back(sample_point(means[t * c_per + local], spec.sigma, rng));
                ds.labels.push_back(static_cast<int>(local));
            }
        };
        fill(td.train, spec.train_count);
        fill(td.val, spec.val_count);
        fill(td.test, spec.test_count);
        td.unlabeled.inputs.reserve(spec.unlabeled_count);
        for (std::size_t i = 0; i < spec.unlabeled_count; ++i)
            td.unlabeled.inputs.push_back(
                sample_point(means[t * c_per + (i % c_per)], spec.sigma, rng));
    }

    suite.pretrain.inputs.reserve(spec.pretrain_count);
    suite.pretrain.labels.reserve(spec.pretrain_count);
    for (std::size_t i = 0; i < spec.pretrain_count; ++i) {
        const std::size_t g = i % total_classes;
        suite.pretrain.inputs.push_back(sample_point(means[g], spec.sigma, rng));
        suite.pretrain.labels.push_back(coarse_label(g % c_per, c_per));
    }
    return suite;
}

// ===== IDX slicing =====

TaskSuite load_idx_tasks(const DatasetSpec& spec, std::size_t num_tasks) {
    spec.validate();
    require(spec.kind == DatasetKind::idx_files, "load_idx_tasks: spec.kind must be idx_files");
    require(num_tasks >= 1, "load_idx_tasks: num_tasks must be >= 1");

    const nn::Dataset full = io::load_idx(spec.images_path, spec.labels_path);
    require(!full.inputs.empty(), "load_idx_tasks: dataset is empty");
    const std::size_t c_per = spec.classes_per_task;
    const std::size_t total_classes = num_tasks * c_per;

    std::vector<std::vector<std::size_t>> by_class(total_classes);
    for (std::size_t i = 0; i < full.size(); ++i) {
        const int y = full.labels[i];
        if (y >= 0 && static_cast<std::size_t>(y) < total_classes)
            by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    std::mt19937_64 rng(spec.seed);
    for (auto& idx : by_class) std::shuffle(idx.begin(), idx.end(), rng);

    // Cursor per class; splits consume samples class by class, round-robin.
    std::vector<std::size_t> cursor(total_classes, 0);
    const auto draw = [&](std::size_t global_class) -> std::size_t {
        auto& pool = by_class[global_class];
        if (cursor[global_class] >= pool.size())
            throw std::runtime_error("load_idx_tasks: class " + std::to_string(global_class) +
                                     " has only " + std::to_string(pool.size()) +
                                     " samples; splits need more");
        return pool[cursor[global_class]++];
    };

    TaskSuite suite;
    suite.tasks.resize(num_tasks);
    for (std::size_t t = 0; t < num_tasks; ++t) {
        TaskData& td = suite.tasks[t];
        td.task_id = "task" + std::to_string(t);
        const auto fill = [&](nn::Dataset& ds, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t local = i % c_per;
                const std::size_t src = draw(t * c_per + local);
                ds.inputs.push_back(full.inputs[src]);
                ds.labels.push_back(static_cast<int>(local));
            }
        };
        fill(td.train, spec.train_count);
        fill(td.val, spec.val_count);
        fill(td.test, spec.test_count);
        for (std::size_t i = 0; i < spec.unlabeled_count; ++i) {
            const std::size_t local = i % c_per;
            td.unlabeled.inputs.push_back(full.inputs[draw(t * c_per + local)]);
        }
    }

    for (std::size_t i = 0; i < spec.pretrain_count; ++i) {
        const std::size_t g = i % total_classes;
        auto& pool = by_class[g];
        require(!pool.empty(), "load_idx_tasks: class " + std::to_string(g) + " has no samples");
        // Wrap around the tail of the pool; pretraining may reuse inputs.
        const std::size_t src = pool[(cursor[g] + i / total_classes) % pool.size()];
        suite.pretrain.inputs.push_back(full.inputs[src]);
        suite.pretrain.labels.push_back(coarse_label(g % c_per, c_per));
    }
    return suite;
}

TaskSuite build_task_suite(const DatasetSpec& spec, std::size_t num_tasks) {
    return spec.kind == DatasetKind::synthetic_gaussian ? gen_synthetic_tasks(spec, num_tasks)
                                                        : load_idx_tasks(spec, num_tasks);
}

}  // namespace tvc::harness
