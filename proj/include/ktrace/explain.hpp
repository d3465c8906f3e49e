#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ktrace/training.hpp"
#include "ktrace/types.hpp"

namespace ktrace {

/// Trained pipeline state needed by read-only consumers (explanations,
/// traces, evaluation outside the training loop).
struct InferenceContext {
    ModelParams params;
    ResponseTimeStats stats;
    std::optional<ClusterModel> clusters;
    DatasetCatalog catalog;
    TrainConfig config;

    const ClusterModel* cluster_ptr() const { return clusters ? &*clusters : nullptr; }
};

/// Three-node explanation: target exercise -> argmax-attention concept ->
/// most recent prior interaction on that concept (absent when the student
/// never touched it).
struct InferencePath {
    int target_exercise = 0;
    int concept_id = 0;
    double attention_weight = 0.0;
    std::optional<std::size_t> evidence_step;
    std::optional<int> evidence_result;
    double probability = 0.5;
    std::string verdict_text;
};

/// Probed correctness probabilities: one row per observed step (a single
/// h_0 row for an empty history), one column per probed concept.
struct KnowledgeStateMatrix {
    std::vector<int> probe_concepts;
    std::vector<int> probe_exercises;
    std::vector<Vec> rows;
};

/// Runs the model over the history and explains the prediction for
/// target_exercise via the strongest-attention concept and the latest prior
/// interaction on it. Requires an attention-mode checkpoint and a known
/// exercise id.
InferencePath infer_path(const StudentSequence& history, int target_exercise,
                         const InferenceContext& ctx);

/// Probe exercise per concept: the most frequent exercise tagged with that
/// concept among the given records. Throws when a concept has no exercises.
std::vector<int> pick_representatives(const std::vector<InteractionRecord>& records,
                                      const DatasetCatalog& catalog,
                                      const std::vector<int>& concepts);

/// After each observed step, predicts every probe exercise as if it were the
/// next step.
KnowledgeStateMatrix knowledge_state_trace(const StudentSequence& history,
                                           const InferenceContext& ctx,
                                           const std::vector<int>& probe_concepts,
                                           const std::vector<int>& probe_exercises);

/// Cumulative ability vector at a segment boundary, paired with skill labels.
struct AbilitySnapshot {
    int segment_index = 0;
    std::vector<std::string> skill_labels;
    Vec values;
};

/// Throws std::out_of_range when at_segment is past the timeline.
AbilitySnapshot ability_snapshot(const AbilityTimeline& timeline, std::size_t at_segment,
                                 const DatasetCatalog& catalog);

/// Grayscale heatmap of the knowledge-state matrix (rows bottom-up in time).
std::string render_svg_heatmap(const KnowledgeStateMatrix& matrix);

}  // namespace ktrace
