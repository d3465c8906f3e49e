#include "ktrace/explain.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ktrace/io.hpp"

namespace ktrace {

namespace {

// Encodes a history the same way the training pipeline does and returns the
// hidden state after consuming all of it (h_0 for an empty history).
struct HistoryState {
    std::vector<EncodedStep> encoded;
    Vec h;
};

HistoryState run_history(const StudentSequence& history, const InferenceContext& ctx) {
    HistoryState state;
    state.h.assign(ctx.params.dims.d_h, 0.0);
    if (history.steps.empty()) return state;

    std::vector<EncodedSequence> encoded =
        encode_dataset(history.steps, ctx.catalog, ctx.stats, ctx.cluster_ptr(), ctx.config);
    if (encoded.size() != 1) {
        throw std::invalid_argument("history must be a single sequence chunk");
    }
    state.encoded = std::move(encoded[0].steps);

    std::vector<StepOutput> outputs = forward_sequence(state.encoded, ctx.params);
    // advance one more step so h reflects the full history
    const EncodedStep& last = state.encoded.back();
    Vec x(last.input_vector.begin(),
          last.input_vector.begin() + ctx.params.dims.input_width(ctx.params.mode));
    state.h = rnn_step(outputs.back().h, x, ctx.params);
    return state;
}

// Prediction for one exercise given a hidden state.
void probe_exercise(const Vec& h, int exercise_id, const InferenceContext& ctx, Vec* alpha_out,
                    double* y_out) {
    const ModelParams& params = ctx.params;
    Vec v = params.B.col(exercise_id);
    Vec w, alpha;
    if (attention_enabled(params.mode)) {
        if (params.attend_tagged_only) {
            alpha.assign(params.dims.concept_count, 0.0);
            alpha[ctx.catalog.exercise_to_skill[exercise_id]] = 1.0;
        } else {
            alpha = attention_weights(v, params.F_key);
        }
        w = mastery_read(alpha, params.F_val);
    } else {
        w = matvec(params.W_read, h);
    }
    Vec p;
    double y = 0.5;
    predict_step(w, v, h, params, p, y);
    if (alpha_out) *alpha_out = std::move(alpha);
    if (y_out) *y_out = y;
}

}  // namespace

InferencePath infer_path(const StudentSequence& history, int target_exercise,
                         const InferenceContext& ctx) {
    if (target_exercise < 0 || target_exercise >= ctx.catalog.exercise_count) {
        throw std::invalid_argument("unknown exercise id " + std::to_string(target_exercise));
    }
    if (!attention_enabled(ctx.params.mode)) {
        throw std::runtime_error("inference paths need an attention-mode checkpoint (dkt-a or aa-dkta)");
    }

    HistoryState state = run_history(history, ctx);
    Vec alpha;
    double y = 0.5;
    probe_exercise(state.h, target_exercise, ctx, &alpha, &y);

    // argmax attention, lowest index on ties
    int strongest = 0;
    for (std::size_t i = 1; i < alpha.size(); ++i) {
        if (alpha[i] > alpha[strongest]) strongest = static_cast<int>(i);
    }

    InferencePath path;
    path.target_exercise = target_exercise;
    path.concept_id = strongest;
    path.attention_weight = alpha[strongest];
    path.probability = y;
    for (std::size_t t = history.steps.size(); t-- > 0;) {
        if (history.steps[t].skill_id == strongest) {
            path.evidence_step = t;
            path.evidence_result = history.steps[t].correct;
            break;
        }
    }

    std::ostringstream text;
    std::string target_name = ctx.catalog.exercise_names[target_exercise];
    std::string concept_name = ctx.catalog.skill_names[strongest];
    text << "exercise " << target_name << " predicted " << (y >= 0.5 ? "correct" : "incorrect")
         << " (p=" << format_double(y) << "): strongest concept " << concept_name
         << " (attention " << format_double(path.attention_weight) << ")";
    if (path.evidence_step) {
        const InteractionRecord& ev = history.steps[*path.evidence_step];
        text << "; path " << target_name << " - " << concept_name << " - "
             << ctx.catalog.exercise_names[ev.exercise_id] << ": the student answered it "
             << (ev.correct ? "correctly" : "incorrectly") << " at step " << *path.evidence_step
             << ", " << (ev.correct ? "supporting mastery of" : "indicating low mastery of")
             << " concept " << concept_name;
    } else {
        text << "; no direct evidence: the student has no prior interaction on concept "
             << concept_name;
    }
    path.verdict_text = text.str();
    return path;
}

std::vector<int> pick_representatives(const std::vector<InteractionRecord>& records,
                                      const DatasetCatalog& catalog,
                                      const std::vector<int>& concepts) {
    std::map<std::pair<int, int>, long> counts;  // (skill, exercise) -> frequency
    for (const auto& rec : records) counts[{rec.skill_id, rec.exercise_id}] += 1;

    std::vector<int> representatives;
    for (int skill : concepts) {
        if (skill < 0 || skill >= catalog.skill_count) {
            throw std::invalid_argument("unknown concept id " + std::to_string(skill));
        }
        int best = -1;
        long best_count = -1;
        for (auto it = counts.lower_bound({skill, 0});
             it != counts.end() && it->first.first == skill; ++it) {
            if (it->second > best_count) {  // map order makes ties go to the lowest exercise id
                best_count = it->second;
                best = it->first.second;
            }
        }
        if (best < 0) {
            // fall back to the catalog tagging when the records never touch the concept
            for (int e = 0; e < catalog.exercise_count; ++e) {
                if (catalog.exercise_to_skill[e] == skill) {
                    best = e;
                    break;
                }
            }
        }
        if (best < 0) {
            throw std::runtime_error("concept " + std::to_string(skill) + " has no exercises");
        }
        representatives.push_back(best);
    }
    return representatives;
}

KnowledgeStateMatrix knowledge_state_trace(const StudentSequence& history,
                                           const InferenceContext& ctx,
                                           const std::vector<int>& probe_concepts,
                                           const std::vector<int>& probe_exercises) {
    if (probe_concepts.size() != probe_exercises.size() || probe_concepts.empty()) {
        throw std::invalid_argument("probe concepts and exercises must align and be nonempty");
    }
    KnowledgeStateMatrix matrix;
    matrix.probe_concepts = probe_concepts;
    matrix.probe_exercises = probe_exercises;

    auto probe_row = [&](const Vec& h) {
        Vec row(probe_exercises.size(), 0.5);
        for (std::size_t c = 0; c < probe_exercises.size(); ++c) {
            probe_exercise(h, probe_exercises[c], ctx, nullptr, &row[c]);
        }
        return row;
    };

    if (history.steps.empty()) {
        Vec h0(ctx.params.dims.d_h, 0.0);
        matrix.rows.push_back(probe_row(h0));
        return matrix;
    }

    std::vector<EncodedSequence> encoded =
        encode_dataset(history.steps, ctx.catalog, ctx.stats, ctx.cluster_ptr(), ctx.config);
    if (encoded.size() != 1) {
        throw std::invalid_argument("history must be a single sequence chunk");
    }
    const std::vector<EncodedStep>& steps = encoded[0].steps;
    const int in_w = ctx.params.dims.input_width(ctx.params.mode);

    Vec h(ctx.params.dims.d_h, 0.0);
    for (const EncodedStep& step : steps) {
        Vec x(step.input_vector.begin(), step.input_vector.begin() + in_w);
        h = rnn_step(h, x, ctx.params);
        matrix.rows.push_back(probe_row(h));
    }
    return matrix;
}

AbilitySnapshot ability_snapshot(const AbilityTimeline& timeline, std::size_t at_segment,
                                 const DatasetCatalog& catalog) {
    if (at_segment >= timeline.cumulative.size()) {
        throw std::out_of_range("segment index " + std::to_string(at_segment) +
                                " past the timeline (" +
                                std::to_string(timeline.cumulative.size()) + " segments)");
    }
    AbilitySnapshot snapshot;
    snapshot.segment_index = static_cast<int>(at_segment);
    snapshot.values = timeline.cumulative[at_segment];
    snapshot.skill_labels = catalog.skill_names;
    return snapshot;
}

std::string render_svg_heatmap(const KnowledgeStateMatrix& matrix) {
    const int cell = 14;
    const int rows = static_cast<int>(matrix.rows.size());
    const int cols = rows > 0 ? static_cast<int>(matrix.rows[0].size()) : 0;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell << "\" height=\""
        << rows * cell << "\">\n";
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            int shade = static_cast<int>(matrix.rows[r][c] * 255.0);
            shade = std::clamp(shade, 0, 255);
            svg << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell
                << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ','
                << shade << ")\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace ktrace
