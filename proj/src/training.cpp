#include "ktrace/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "ktrace/rng.hpp"

namespace ktrace {

namespace {

void validate_config(const TrainConfig& config) {
    if (config.d_k <= 0 || config.d_h <= 0 || config.k_clusters <= 0 || config.g <= 0 ||
        config.max_seq_len <= 0 || config.batch_size <= 0 || config.epochs < 0 ||
        config.folds < 3 || config.learning_rate < 0.0 || config.c_max <= 0.0) {
        throw std::invalid_argument("invalid training configuration");
    }
}

std::vector<InteractionRecord> filter_records(const std::vector<InteractionRecord>& records,
                                              const std::vector<std::string>& students) {
    std::unordered_set<std::string> keep(students.begin(), students.end());
    std::vector<InteractionRecord> out;
    for (const auto& rec : records) {
        if (keep.count(rec.student_id)) out.push_back(rec);
    }
    return out;
}

double clamped_bce(double y, int label) {
    double p = std::min(1.0 - 1e-7, std::max(1e-7, y));
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

std::vector<FoldSplit> split_folds(const std::vector<std::string>& student_ids, int folds,
                                   std::uint64_t seed) {
    if (folds < 3) throw std::invalid_argument("folds must be at least 3");
    std::vector<std::string> ids = student_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < static_cast<std::size_t>(folds)) {
        throw std::runtime_error("too few students for " + std::to_string(folds) + " folds");
    }
    Rng rng(mix_seed(seed, "folds"));
    rng.shuffle(ids);

    const std::size_t n = ids.size();
    std::vector<std::vector<std::string>> blocks(folds);
    std::size_t offset = 0;
    for (int b = 0; b < folds; ++b) {
        std::size_t size = n / folds + (static_cast<std::size_t>(b) < n % folds ? 1 : 0);
        blocks[b].assign(ids.begin() + offset, ids.begin() + offset + size);
        offset += size;
    }

    std::vector<FoldSplit> splits;
    for (int f = 0; f < folds; ++f) {
        FoldSplit split;
        split.test_students = blocks[f];
        split.validation_students = blocks[(f + 1) % folds];
        for (int b = 0; b < folds; ++b) {
            if (b == f || b == (f + 1) % folds) continue;
            split.train_students.insert(split.train_students.end(), blocks[b].begin(),
                                        blocks[b].end());
        }
        splits.push_back(std::move(split));
    }
    return splits;
}

void sgd_step(ModelParams& params, const Gradients& grads, double lr) {
    auto param_views = tensor_views(params);
    auto grad_views = tensor_views(const_cast<Gradients&>(grads), params.mode);
    if (param_views.size() != grad_views.size()) {
        throw std::invalid_argument("gradient/parameter tensor count mismatch");
    }
    for (std::size_t i = 0; i < param_views.size(); ++i) {
        if (param_views[i].size != grad_views[i].size) {
            throw std::invalid_argument("shape mismatch in tensor " + param_views[i].name);
        }
        for (std::size_t j = 0; j < param_views[i].size; ++j) {
            param_views[i].data[j] -= lr * grad_views[i].data[j];
        }
    }
}

std::vector<EncodedSequence> encode_dataset(const std::vector<InteractionRecord>& records,
                                            const DatasetCatalog& catalog,
                                            const ResponseTimeStats& stats,
                                            const ClusterModel* clusters,
                                            const TrainConfig& config) {
    const int m = config.encode_over == EncodeOver::skills ? catalog.skill_count
                                                           : catalog.exercise_count;
    std::vector<EncodedSequence> out;
    for (const StudentSequence& seq : build_sequences(records, config.max_seq_len)) {
        EncodedSequence enc;
        enc.student_id = seq.student_id;
        enc.chunk_index = seq.chunk_index;
        std::vector<int> per_segment;
        if (clusters) {
            AbilityTimeline timeline =
                build_timeline(seq, config.g, stats, catalog.skill_count, config.ability_options());
            per_segment = build_assignment_trace(timeline, *clusters).per_segment_cluster;
        }
        for (std::size_t t = 0; t < seq.steps.size(); ++t) {
            int cluster_id = clusters ? per_segment[t / static_cast<std::size_t>(config.g)] : 0;
            enc.steps.push_back(encode_step(seq.steps[t], m, cluster_id, config.k_clusters,
                                            config.encode_over));
            enc.labels.push_back(seq.steps[t].correct);
        }
        out.push_back(std::move(enc));
    }
    return out;
}

TrainedArtifacts train_model(const TrainConfig& config, const DatasetCatalog& catalog,
                             const std::vector<InteractionRecord>& records,
                             const FoldSplit& split) {
    validate_config(config);

    std::vector<InteractionRecord> train_records = filter_records(records, split.train_students);
    ResponseTimeStats stats = fit_response_time_stats(train_records);

    std::optional<ClusterModel> clusters;
    if (cluster_enabled(config.mode)) {
        std::vector<Vec> points;
        for (const StudentSequence& seq : build_sequences(train_records, config.max_seq_len)) {
            AbilityTimeline timeline =
                build_timeline(seq, config.g, stats, catalog.skill_count, config.ability_options());
            if (!timeline.cumulative.empty()) points.push_back(timeline.cumulative.back());
        }
        clusters = kmeans_fit(points, config.k_clusters, mix_seed(config.seed, "kmeans"));
    }
    const ClusterModel* cluster_ptr = clusters ? &*clusters : nullptr;

    std::vector<EncodedSequence> train_set =
        encode_dataset(train_records, catalog, stats, cluster_ptr, config);
    if (train_set.empty()) throw std::runtime_error("training split has no sequences");

    ModelDims dims;
    dims.d_k = config.d_k;
    dims.d_h = config.d_h;
    dims.m = config.encode_over == EncodeOver::skills ? catalog.skill_count
                                                      : catalog.exercise_count;
    dims.k_clusters = config.k_clusters;
    dims.concept_count = catalog.skill_count;
    dims.exercise_count = catalog.exercise_count;

    ModelParams params = init_params(dims, config.mode, config.seed);
    params.attend_tagged_only = config.attend_tagged_only;

    Rng shuffle_rng(mix_seed(config.seed, "shuffle"));
    Metrics metrics;
    ModelParams best_params = params;
    double best_auc = -1.0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            Gradients grads = Gradients::zeros_like(params);
            for (std::size_t i = start; i < stop; ++i) {
                const EncodedSequence& seq = train_set[order[i]];
                double loss = 0.0;
                Gradients g = backward_sequence(seq.steps, seq.labels, params, &loss);
                grads.add(g);
                epoch_loss += loss;
            }
            grads.scale(1.0 / static_cast<double>(stop - start));
            grads.clip_global_norm(config.clip_norm);
            sgd_step(params, grads, config.learning_rate);
        }
        double train_loss = epoch_loss / static_cast<double>(train_set.size());
        Metrics val = evaluate(params, stats, cluster_ptr, config, catalog, records,
                               split.validation_students);
        metrics.history.push_back({epoch, train_loss, val.auc});
        if (val.auc > best_auc) {
            best_auc = val.auc;
            best_params = params;
        }
    }

    TrainedArtifacts artifacts;
    artifacts.params = config.epochs > 0 ? best_params : params;
    artifacts.stats = std::move(stats);
    artifacts.clusters = std::move(clusters);
    artifacts.metrics = std::move(metrics);
    artifacts.metrics.auc = best_auc;
    artifacts.metrics.loss =
        artifacts.metrics.history.empty() ? 0.0 : artifacts.metrics.history.back().train_loss;
    return artifacts;
}

Metrics evaluate(const ModelParams& params, const ResponseTimeStats& stats,
                 const ClusterModel* clusters, const TrainConfig& config,
                 const DatasetCatalog& catalog, const std::vector<InteractionRecord>& records,
                 const std::vector<std::string>& students) {
    std::vector<InteractionRecord> subset = filter_records(records, students);
    if (subset.empty()) throw std::runtime_error("evaluation split is empty");

    std::vector<double> scores;
    std::vector<int> labels;
    double loss_sum = 0.0;
    for (const EncodedSequence& seq : encode_dataset(subset, catalog, stats, clusters, config)) {
        std::vector<StepOutput> outputs = forward_sequence(seq.steps, params);
        for (std::size_t t = 0; t < outputs.size(); ++t) {
            scores.push_back(outputs[t].y);
            labels.push_back(seq.labels[t]);
            loss_sum += clamped_bce(outputs[t].y, seq.labels[t]);
        }
    }

    Metrics metrics;
    metrics.auc = auc(scores, labels);
    metrics.loss = loss_sum / static_cast<double>(scores.size());
    return metrics;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::size_t positives = 0;
    for (int label : labels) positives += label == 1 ? 1 : 0;
    std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        throw std::runtime_error("AUC undefined: both classes must be present");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average 1-based ranks over tied scores, then the Mann-Whitney statistic
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    double n1 = static_cast<double>(positives);
    double n0 = static_cast<double>(negatives);
    return (rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

}  // namespace ktrace
