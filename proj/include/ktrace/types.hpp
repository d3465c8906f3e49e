#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ktrace/linalg.hpp"

namespace ktrace {

/// One student-exercise event. Ids are dense 0-based indices into the
/// catalog; response_time is in seconds. order_key is strictly increasing
/// within a student after ingestion.
struct InteractionRecord {
    std::string student_id;
    int exercise_id = 0;
    int skill_id = 0;
    int correct = 0;
    double response_time = 0.0;
    std::int64_t order_key = 0;
    bool time_imputed = false;  // response time was missing and filled with the dataset median
};

/// A student's ordered interaction history, possibly one chunk of a longer
/// history split at max_sequence_length.
struct StudentSequence {
    std::string student_id;
    std::vector<InteractionRecord> steps;
    int chunk_index = 0;
};

/// Contiguous window of g steps inside a sequence (the last one may be
/// shorter). Holds [begin, end) indices into parent->steps.
struct Segment {
    const StudentSequence* parent = nullptr;
    std::size_t begin = 0;
    std::size_t end = 0;
    int segment_index = 0;

    std::size_t size() const { return end - begin; }
};

/// Id space of a dataset: dense exercise/skill indices plus the raw names
/// they were mapped from, and the exercise -> skill tagging.
struct DatasetCatalog {
    int exercise_count = 0;
    int skill_count = 0;
    std::vector<int> exercise_to_skill;       // indexed by dense exercise id
    std::vector<std::string> exercise_names;  // raw id for each dense exercise id
    std::vector<std::string> skill_names;     // raw id for each dense skill id
    std::vector<std::string> student_ids;     // first-seen order
};

/// Model-ready encoding of one step: one-hot interaction block of width 2m
/// concatenated with a one-hot cluster block of width k_clusters.
struct EncodedStep {
    Vec input_vector;
    int exercise_id = 0;
    int skill_id = 0;
    int label = 0;
    int interaction_index = 0;  // position of the 1 in the interaction block
    int cluster_index = 0;      // position of the 1 in the cluster block, relative to 2m
};

}  // namespace ktrace
