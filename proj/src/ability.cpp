#include "ktrace/ability.hpp"

#include <algorithm>
#include <stdexcept>

#include "ktrace/dataset.hpp"

namespace ktrace {

ResponseTimeStats fit_response_time_stats(const std::vector<InteractionRecord>& train_records) {
    ResponseTimeStats stats;
    std::map<std::pair<int, int>, std::pair<double, int>> sums;  // (sum, count)
    double global_sum = 0.0;
    long global_count = 0;
    for (const auto& rec : train_records) {
        if (rec.correct != 1 || rec.time_imputed) continue;
        auto& cell = sums[{rec.skill_id, rec.exercise_id}];
        cell.first += rec.response_time;
        cell.second += 1;
        global_sum += rec.response_time;
        ++global_count;
    }
    if (global_count == 0) {
        throw std::runtime_error("cannot fit timing statistics: no correct answers in training split");
    }
    for (const auto& [key, cell] : sums) {
        stats.cells[key] = {cell.first / cell.second, cell.second};
    }
    stats.global_mean = global_sum / static_cast<double>(global_count);
    return stats;
}

double ability_increment(const InteractionRecord& record, const ResponseTimeStats& stats,
                         const AbilityOptions& opts) {
    if (record.correct == 0) return 0.0;
    double average = stats.lookup(record.skill_id, record.exercise_id);
    double ratio;
    if (opts.invert_ratio) {
        ratio = record.response_time > 0.0 ? average / record.response_time : opts.c_max;
    } else {
        ratio = average > 0.0 ? record.response_time / average : opts.c_max;
    }
    return std::min(ratio, opts.c_max);
}

AbilityVector ability_vector(const Segment& segment, const ResponseTimeStats& stats,
                             int skill_count, const AbilityOptions& opts) {
    AbilityVector out;
    out.start_step = segment.begin;
    out.end_step = segment.end;
    out.values.assign(static_cast<std::size_t>(skill_count), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(skill_count), 0);
    for (std::size_t i = segment.begin; i < segment.end; ++i) {
        const InteractionRecord& rec = segment.parent->steps[i];
        if (rec.skill_id < 0 || rec.skill_id >= skill_count) {
            throw std::out_of_range("skill id " + std::to_string(rec.skill_id) +
                                    " outside catalog range");
        }
        if (rec.correct != 1) continue;
        out.values[rec.skill_id] += ability_increment(rec, stats, opts);
        ++counts[rec.skill_id];
    }
    if (opts.agg == AbilityAgg::mean) {
        for (int k = 0; k < skill_count; ++k) {
            if (counts[k] > 0) out.values[k] /= counts[k];
        }
    }
    for (double& v : out.values) v = std::min(v, opts.c_max);
    return out;
}

AbilityTimeline build_timeline(const StudentSequence& seq, int g, const ResponseTimeStats& stats,
                               int skill_count, const AbilityOptions& opts) {
    AbilityTimeline timeline;
    timeline.student_id = seq.student_id;
    timeline.chunk_index = seq.chunk_index;
    Vec running(static_cast<std::size_t>(skill_count), 0.0);
    for (const Segment& segment : segment_sequence(seq, g)) {
        AbilityVector vec = ability_vector(segment, stats, skill_count, opts);
        for (std::size_t k = 0; k < running.size(); ++k) running[k] += vec.values[k];
        Vec clipped = running;
        for (double& v : clipped) v = std::min(v, opts.c_max);
        timeline.per_segment.push_back(std::move(vec));
        timeline.cumulative.push_back(std::move(clipped));
    }
    return timeline;
}

}  // namespace ktrace
