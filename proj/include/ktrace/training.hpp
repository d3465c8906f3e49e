#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ktrace/ability.hpp"
#include "ktrace/clustering.hpp"
#include "ktrace/dataset.hpp"
#include "ktrace/model.hpp"
#include "ktrace/types.hpp"

namespace ktrace {

struct TrainConfig {
    int d_k = 16;
    int d_h = 32;
    int k_clusters = 10;
    int g = 5;
    int max_seq_len = 200;
    int batch_size = 24;
    double learning_rate = 0.01;
    int epochs = 20;
    int folds = 5;
    std::uint64_t seed = 42;
    Mode mode = Mode::aa_dkta;
    double c_max = 5.0;
    double clip_norm = 5.0;
    EncodeOver encode_over = EncodeOver::skills;
    AbilityAgg ability_agg = AbilityAgg::sum;
    bool invert_ratio = false;
    bool attend_tagged_only = false;

    AbilityOptions ability_options() const { return {c_max, ability_agg, invert_ratio}; }
};

/// Student-level partition for one fold: 60/20/20 train/test/validation.
struct FoldSplit {
    std::vector<std::string> train_students;
    std::vector<std::string> validation_students;
    std::vector<std::string> test_students;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;  // mean summed-step loss per chunk
    double val_auc = 0.0;
};

struct Metrics {
    double auc = 0.0;
    double loss = 0.0;  // mean per-step cross entropy
    std::vector<EpochStats> history;
};

/// Everything a training run produces.
struct TrainedArtifacts {
    ModelParams params;
    ResponseTimeStats stats;
    std::optional<ClusterModel> clusters;  // absent in non-cluster modes
    Metrics metrics;
};

/// Deterministic student-level folds. Fold f uses block f as test and block
/// f+1 (mod folds) as validation; the rest train. Throws when there are fewer
/// students than folds.
std::vector<FoldSplit> split_folds(const std::vector<std::string>& student_ids, int folds,
                                   std::uint64_t seed);

/// theta <- theta - lr * grad for every active tensor.
void sgd_step(ModelParams& params, const Gradients& grads, double lr);

/// One sequence chunk ready for the model.
struct EncodedSequence {
    std::string student_id;
    int chunk_index = 0;
    std::vector<EncodedStep> steps;
    std::vector<int> labels;
};

/// Shared encoding path: per-student sequences -> ability timelines ->
/// per-segment cluster ids -> encoded steps. clusters may be null for
/// non-cluster modes (the cluster block then carries a constant id the model
/// never reads).
std::vector<EncodedSequence> encode_dataset(const std::vector<InteractionRecord>& records,
                                            const DatasetCatalog& catalog,
                                            const ResponseTimeStats& stats,
                                            const ClusterModel* clusters, const TrainConfig& config);

/// Full pipeline on one fold: fit timing stats on the training split, build
/// timelines, fit K-means on final cumulative ability vectors (cluster modes),
/// encode, then run shuffled mini-batch SGD with a validation pass per epoch.
/// Returns the checkpoint with the best validation AUC.
TrainedArtifacts train_model(const TrainConfig& config, const DatasetCatalog& catalog,
                             const std::vector<InteractionRecord>& records, const FoldSplit& split);

/// Pooled next-answer predictions over every sequence of the given students.
/// Throws std::runtime_error("AUC undefined...") when the split has one class.
Metrics evaluate(const ModelParams& params, const ResponseTimeStats& stats,
                 const ClusterModel* clusters, const TrainConfig& config,
                 const DatasetCatalog& catalog, const std::vector<InteractionRecord>& records,
                 const std::vector<std::string>& students);

/// Rank-based (Mann-Whitney) AUC; ties contribute one half. Throws when a
/// class is absent.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace ktrace
