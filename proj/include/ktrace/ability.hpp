#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ktrace/linalg.hpp"
#include "ktrace/types.hpp"

namespace ktrace {

/// Per-(skill, exercise) mean response time over correct answers, with a
/// global mean fallback for cells never answered correctly in training.
struct ResponseTimeStats {
    struct Cell {
        double mean = 0.0;
        int count = 0;
    };
    std::map<std::pair<int, int>, Cell> cells;  // (skill_id, exercise_id)
    double global_mean = 0.0;

    /// Mean correct response time for (skill, exercise), or global_mean when
    /// the cell is absent.
    double lookup(int skill_id, int exercise_id) const {
        auto it = cells.find({skill_id, exercise_id});
        return it == cells.end() ? global_mean : it->second.mean;
    }
};

/// How increments on one skill combine within a segment.
enum class AbilityAgg { sum, mean };

struct AbilityOptions {
    double c_max = 5.0;            // elementwise clip bound
    AbilityAgg agg = AbilityAgg::sum;
    bool invert_ratio = false;     // use average/own time instead of own/average
};

/// Per-segment ability values over all skills, clipped to c_max.
struct AbilityVector {
    Vec values;
    std::size_t start_step = 0;
    std::size_t end_step = 0;
};

/// Per-segment and cumulative ability of one sequence. cumulative[s] is the
/// clipped elementwise sum of per_segment[0..s].
struct AbilityTimeline {
    std::string student_id;
    int chunk_index = 0;
    std::vector<AbilityVector> per_segment;
    std::vector<Vec> cumulative;
};

/// Fits mean correct response times on the training split. Flagged (imputed)
/// records are excluded from the averages. Throws std::runtime_error
/// "cannot fit timing statistics" when there is no usable correct answer.
ResponseTimeStats fit_response_time_stats(const std::vector<InteractionRecord>& train_records);

/// Ability gained from one record: 0 for incorrect answers, otherwise the
/// response-time ratio against the population mean, clipped to c_max.
double ability_increment(const InteractionRecord& record, const ResponseTimeStats& stats,
                         const AbilityOptions& opts = {});

/// Accumulates increments per skill over one segment into a |K|-vector,
/// starting from zeros and clipping elementwise to c_max.
AbilityVector ability_vector(const Segment& segment, const ResponseTimeStats& stats,
                             int skill_count, const AbilityOptions& opts = {});

/// Per-segment vectors plus clipped prefix sums for one sequence.
AbilityTimeline build_timeline(const StudentSequence& seq, int g, const ResponseTimeStats& stats,
                               int skill_count, const AbilityOptions& opts = {});

}  // namespace ktrace
