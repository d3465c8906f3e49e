#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ktrace/types.hpp"

namespace ktrace {

/// Column names used when reading an interaction CSV. Defaults match the
/// canonical schema; remap for foreign files. The order column is optional:
/// when empty or absent from the header, file row order is used.
struct ParseSchema {
    std::string student = "student_id";
    std::string exercise = "exercise_id";
    std::string skill = "skill_id";
    std::string correct = "correct";
    std::string response_time = "ms_response_time";
    std::string order = "order";
};

/// Reads an interaction CSV (UTF-8, header row) and remaps raw ids to dense
/// 0-based indices. Rows with an empty response-time cell get the dataset
/// median and are flagged. Cells with semicolon-separated skill lists are
/// duplicated, one record per skill. Per student, records are ordered by
/// (order column, file row) and re-keyed to strictly increasing order_keys.
///
/// Throws std::runtime_error on unreadable files, missing mandatory columns,
/// correctness outside {0,1}, or negative response times.
std::pair<DatasetCatalog, std::vector<InteractionRecord>> parse_interactions(
    const std::string& path, const ParseSchema& schema = {});

/// Same, but resolves raw ids against an existing catalog instead of building
/// a fresh mapping. Unknown exercise/skill ids are an error; new students are
/// appended to the returned catalog copy.
std::pair<DatasetCatalog, std::vector<InteractionRecord>> parse_interactions(
    const std::string& path, const ParseSchema& schema, const DatasetCatalog& catalog);

/// Groups records per student (sorted by order_key) and splits histories
/// longer than max_len into consecutive chunks. Throws on duplicate
/// (student_id, order_key) pairs ("ambiguous ordering").
std::vector<StudentSequence> build_sequences(const std::vector<InteractionRecord>& records,
                                             int max_len = 200);

/// Cuts a sequence into ceil(len/g) windows of g steps; the last window may
/// be shorter. The returned segments point into seq, which must outlive them.
std::vector<Segment> segment_sequence(const StudentSequence& seq, int g = 5);

/// Which id the interaction one-hot block runs over.
enum class EncodeOver { skills, exercises };

/// Builds the 2m + k_clusters input vector with ones at
/// index + correct*m and 2m + cluster_id. index is the record's skill id
/// (EncodeOver::skills) or exercise id (EncodeOver::exercises).
EncodedStep encode_step(const InteractionRecord& record, int m, int cluster_id, int k_clusters,
                        EncodeOver over = EncodeOver::skills);

/// Synthetic-dataset settings. Each student holds a latent per-skill ability
/// theta[k] = general + offset[k]; a correct answer on skill k bumps theta[k]
/// by drift. Correctness is Bernoulli(logistic(theta - difficulty)); response
/// time is log-normal with median base_time * exp(-time_ability_slope * theta).
struct SyntheticConfig {
    int students = 200;
    int skills = 6;
    int exercises_per_skill = 5;
    int steps_per_student = 100;
    double drift = 0.1;
    double general_sigma = 1.0;   // student-level ability spread
    double ability_sigma = 0.5;   // per-skill spread around the student level
    double difficulty_sigma = 1.0;
    double base_time = 20.0;      // seconds
    double time_sigma = 0.3;      // log-space noise
    double time_ability_slope = 0.5;
};

/// Deterministic generator: same (config, seed) yields identical records.
/// Throws std::invalid_argument on nonpositive counts.
std::pair<DatasetCatalog, std::vector<InteractionRecord>> generate_synthetic(
    const SyntheticConfig& config, std::uint64_t seed);

/// Writes records in the canonical CSV schema (ms_response_time in integer
/// milliseconds; imputed times are written back as empty cells).
void write_interactions_csv(const std::string& path, const DatasetCatalog& catalog,
                            const std::vector<InteractionRecord>& records);

}  // namespace ktrace
