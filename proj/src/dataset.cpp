#include "ktrace/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "ktrace/rng.hpp"

namespace ktrace {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Splits one CSV line, honoring double quotes and "" escapes.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

double parse_number(const std::string& text, const std::string& what) {
    std::string t = trim(text);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
        throw std::runtime_error("cannot parse " + what + " value '" + text + "'");
    }
    return value;
}

struct IdMapper {
    std::unordered_map<std::string, int> index;
    std::vector<std::string> names;
    bool frozen = false;

    int get(const std::string& raw, const std::string& what) {
        auto it = index.find(raw);
        if (it != index.end()) return it->second;
        if (frozen) throw std::runtime_error("unknown " + what + " id '" + raw + "'");
        int id = static_cast<int>(names.size());
        index.emplace(raw, id);
        names.push_back(raw);
        return id;
    }
};

struct RawRow {
    std::string student;
    int exercise = 0;
    int skill = 0;
    int correct = 0;
    double response_time = 0.0;  // seconds
    bool time_missing = false;
    double raw_order = 0.0;
    std::size_t file_pos = 0;
};

std::pair<DatasetCatalog, std::vector<InteractionRecord>> parse_core(
    const std::string& path, const ParseSchema& schema, const DatasetCatalog* base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");

    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw std::runtime_error("dataset file '" + path + "' has no header row");
    }
    // strip a UTF-8 BOM if present
    if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        header_line.erase(0, 3);
    }
    std::vector<std::string> header = split_csv_line(header_line);
    auto find_col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == name) return static_cast<int>(i);
        }
        return -1;
    };
    const int col_student = find_col(schema.student);
    const int col_exercise = find_col(schema.exercise);
    const int col_skill = find_col(schema.skill);
    const int col_correct = find_col(schema.correct);
    const int col_time = find_col(schema.response_time);
    const int col_order = schema.order.empty() ? -1 : find_col(schema.order);
    auto require = [&](int col, const std::string& name) {
        if (col < 0) throw std::runtime_error("missing mandatory column '" + name + "'");
    };
    require(col_student, schema.student);
    require(col_exercise, schema.exercise);
    require(col_skill, schema.skill);
    require(col_correct, schema.correct);
    require(col_time, schema.response_time);

    IdMapper exercises, skills;
    std::unordered_map<std::string, int> student_index;
    std::vector<std::string> student_order;
    if (base) {
        for (std::size_t i = 0; i < base->exercise_names.size(); ++i) {
            exercises.index.emplace(base->exercise_names[i], static_cast<int>(i));
        }
        exercises.names = base->exercise_names;
        exercises.frozen = true;
        for (std::size_t i = 0; i < base->skill_names.size(); ++i) {
            skills.index.emplace(base->skill_names[i], static_cast<int>(i));
        }
        skills.names = base->skill_names;
        skills.frozen = true;
        for (const auto& s : base->student_ids) {
            student_index.emplace(s, static_cast<int>(student_order.size()));
            student_order.push_back(s);
        }
    }

    std::vector<RawRow> rows;
    std::vector<std::pair<int, int>> exercise_skill_pairs;  // first-seen tagging
    std::string line;
    std::size_t line_no = 1;
    std::size_t pos = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        auto cell = [&](int col) -> std::string {
            return col < static_cast<int>(fields.size()) ? fields[col] : std::string();
        };
        std::string student = trim(cell(col_student));
        if (student.empty()) {
            throw std::runtime_error("empty student id at line " + std::to_string(line_no));
        }
        if (!student_index.count(student)) {
            student_index.emplace(student, static_cast<int>(student_order.size()));
            student_order.push_back(student);
        }
        double correct_value = parse_number(cell(col_correct), "correctness");
        if (correct_value != 0.0 && correct_value != 1.0) {
            throw std::runtime_error("invalid correctness value '" + trim(cell(col_correct)) +
                                     "' at line " + std::to_string(line_no));
        }
        std::string time_text = trim(cell(col_time));
        bool time_missing = time_text.empty();
        double seconds = 0.0;
        if (!time_missing) {
            double ms = parse_number(time_text, "response time");
            if (ms < 0.0) {
                throw std::runtime_error("negative response time at line " + std::to_string(line_no));
            }
            seconds = ms / 1000.0;
        }
        double raw_order = col_order >= 0 && !trim(cell(col_order)).empty()
                               ? parse_number(cell(col_order), "order")
                               : static_cast<double>(line_no);
        int exercise = exercises.get(trim(cell(col_exercise)), "exercise");

        // semicolon-separated skill lists become one record per skill
        std::string skill_cell = trim(cell(col_skill));
        std::vector<std::string> skill_names;
        std::stringstream ss(skill_cell);
        std::string part;
        while (std::getline(ss, part, ';')) {
            part = trim(part);
            if (!part.empty()) skill_names.push_back(part);
        }
        if (skill_names.empty()) {
            throw std::runtime_error("empty skill id at line " + std::to_string(line_no));
        }
        for (const std::string& skill_name : skill_names) {
            RawRow row;
            row.student = student;
            row.exercise = exercise;
            row.skill = skills.get(skill_name, "skill");
            row.correct = static_cast<int>(correct_value);
            row.response_time = seconds;
            row.time_missing = time_missing;
            row.raw_order = raw_order;
            row.file_pos = pos++;
            exercise_skill_pairs.emplace_back(row.exercise, row.skill);
            rows.push_back(std::move(row));
        }
    }

    // catalog-level median response time for imputation
    std::vector<double> present;
    present.reserve(rows.size());
    for (const auto& r : rows) {
        if (!r.time_missing) present.push_back(r.response_time);
    }
    double median = 0.0;
    if (!present.empty()) {
        std::sort(present.begin(), present.end());
        std::size_t n = present.size();
        median = n % 2 == 1 ? present[n / 2] : 0.5 * (present[n / 2 - 1] + present[n / 2]);
    }

    // order within each student by (order column, file position), then re-key
    std::unordered_map<std::string, std::vector<std::size_t>> by_student;
    for (std::size_t i = 0; i < rows.size(); ++i) by_student[rows[i].student].push_back(i);
    std::vector<std::int64_t> order_keys(rows.size(), 0);
    for (auto& [student, idxs] : by_student) {
        std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
            if (rows[a].raw_order != rows[b].raw_order) return rows[a].raw_order < rows[b].raw_order;
            return rows[a].file_pos < rows[b].file_pos;
        });
        std::int64_t key = 0;
        for (std::size_t idx : idxs) order_keys[idx] = key++;
    }

    DatasetCatalog catalog;
    catalog.exercise_names = exercises.names;
    catalog.skill_names = skills.names;
    catalog.exercise_count = static_cast<int>(exercises.names.size());
    catalog.skill_count = static_cast<int>(skills.names.size());
    catalog.student_ids = student_order;
    catalog.exercise_to_skill.assign(catalog.exercise_count, -1);
    if (base) {
        catalog.exercise_to_skill = base->exercise_to_skill;
        catalog.exercise_to_skill.resize(catalog.exercise_count, -1);
    }
    for (auto [e, k] : exercise_skill_pairs) {
        if (catalog.exercise_to_skill[e] < 0) catalog.exercise_to_skill[e] = k;
    }

    std::vector<InteractionRecord> records;
    records.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const RawRow& r = rows[i];
        InteractionRecord rec;
        rec.student_id = r.student;
        rec.exercise_id = r.exercise;
        rec.skill_id = r.skill;
        rec.correct = r.correct;
        rec.response_time = r.time_missing ? median : r.response_time;
        rec.time_imputed = r.time_missing;
        rec.order_key = order_keys[i];
        records.push_back(std::move(rec));
    }
    return {std::move(catalog), std::move(records)};
}

}  // namespace

std::pair<DatasetCatalog, std::vector<InteractionRecord>> parse_interactions(
    const std::string& path, const ParseSchema& schema) {
    return parse_core(path, schema, nullptr);
}

std::pair<DatasetCatalog, std::vector<InteractionRecord>> parse_interactions(
    const std::string& path, const ParseSchema& schema, const DatasetCatalog& catalog) {
    return parse_core(path, schema, &catalog);
}

std::vector<StudentSequence> build_sequences(const std::vector<InteractionRecord>& records,
                                             int max_len) {
    if (max_len <= 0) throw std::invalid_argument("max_len must be positive");
    std::unordered_map<std::string, std::size_t> student_slot;
    std::vector<std::pair<std::string, std::vector<InteractionRecord>>> grouped;
    for (const auto& rec : records) {
        auto it = student_slot.find(rec.student_id);
        if (it == student_slot.end()) {
            it = student_slot.emplace(rec.student_id, grouped.size()).first;
            grouped.emplace_back(rec.student_id, std::vector<InteractionRecord>());
        }
        grouped[it->second].second.push_back(rec);
    }

    std::vector<StudentSequence> sequences;
    for (auto& [student, recs] : grouped) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const InteractionRecord& a, const InteractionRecord& b) {
                             return a.order_key < b.order_key;
                         });
        for (std::size_t i = 1; i < recs.size(); ++i) {
            if (recs[i].order_key == recs[i - 1].order_key) {
                throw std::runtime_error("ambiguous ordering for student '" + student + "'");
            }
        }
        int chunk = 0;
        for (std::size_t start = 0; start < recs.size(); start += max_len) {
            StudentSequence seq;
            seq.student_id = student;
            seq.chunk_index = chunk++;
            std::size_t stop = std::min(recs.size(), start + static_cast<std::size_t>(max_len));
            seq.steps.assign(recs.begin() + start, recs.begin() + stop);
            sequences.push_back(std::move(seq));
        }
    }
    return sequences;
}

std::vector<Segment> segment_sequence(const StudentSequence& seq, int g) {
    if (g <= 0) throw std::invalid_argument("segment length g must be positive");
    std::vector<Segment> segments;
    std::size_t len = seq.steps.size();
    std::size_t width = static_cast<std::size_t>(g);
    for (std::size_t start = 0, index = 0; start < len; start += width, ++index) {
        Segment s;
        s.parent = &seq;
        s.begin = start;
        s.end = std::min(len, start + width);
        s.segment_index = static_cast<int>(index);
        segments.push_back(s);
    }
    return segments;
}

EncodedStep encode_step(const InteractionRecord& record, int m, int cluster_id, int k_clusters,
                        EncodeOver over) {
    if (m <= 0 || k_clusters <= 0) throw std::invalid_argument("m and k_clusters must be positive");
    int index = over == EncodeOver::skills ? record.skill_id : record.exercise_id;
    if (index < 0 || index >= m) {
        throw std::out_of_range("encode index " + std::to_string(index) + " out of range [0," +
                                std::to_string(m) + ")");
    }
    if (cluster_id < 0 || cluster_id >= k_clusters) {
        throw std::out_of_range("cluster id " + std::to_string(cluster_id) + " out of range [0," +
                                std::to_string(k_clusters) + ")");
    }
    if (record.correct != 0 && record.correct != 1) {
        throw std::invalid_argument("invalid correctness value " + std::to_string(record.correct));
    }
    EncodedStep step;
    step.exercise_id = record.exercise_id;
    step.skill_id = record.skill_id;
    step.label = record.correct;
    step.interaction_index = index + record.correct * m;
    step.cluster_index = cluster_id;
    step.input_vector.assign(static_cast<std::size_t>(2 * m + k_clusters), 0.0);
    step.input_vector[step.interaction_index] = 1.0;
    step.input_vector[2 * m + cluster_id] = 1.0;
    return step;
}

std::pair<DatasetCatalog, std::vector<InteractionRecord>> generate_synthetic(
    const SyntheticConfig& config, std::uint64_t seed) {
    if (config.students <= 0 || config.skills <= 0 || config.exercises_per_skill <= 0 ||
        config.steps_per_student <= 0) {
        throw std::invalid_argument("synthetic generator counts must be positive");
    }
    const int exercise_count = config.skills * config.exercises_per_skill;

    DatasetCatalog catalog;
    catalog.exercise_count = exercise_count;
    catalog.skill_count = config.skills;
    catalog.exercise_to_skill.resize(exercise_count);
    for (int e = 0; e < exercise_count; ++e) {
        catalog.exercise_to_skill[e] = e / config.exercises_per_skill;
        catalog.exercise_names.push_back(std::to_string(e));
    }
    for (int k = 0; k < config.skills; ++k) catalog.skill_names.push_back(std::to_string(k));

    Rng rng(seed);
    std::vector<double> difficulty(exercise_count);
    for (int e = 0; e < exercise_count; ++e) difficulty[e] = rng.normal(0.0, config.difficulty_sigma);

    std::vector<InteractionRecord> records;
    records.reserve(static_cast<std::size_t>(config.students) * config.steps_per_student);
    char name[32];
    for (int s = 0; s < config.students; ++s) {
        std::snprintf(name, sizeof(name), "s%04d", s);
        catalog.student_ids.emplace_back(name);
        double general = rng.normal(0.0, config.general_sigma);
        std::vector<double> theta(config.skills);
        for (int k = 0; k < config.skills; ++k) {
            theta[k] = general + rng.normal(0.0, config.ability_sigma);
        }
        for (int t = 0; t < config.steps_per_student; ++t) {
            int skill = rng.uniform_int(config.skills);
            int exercise = skill * config.exercises_per_skill + rng.uniform_int(config.exercises_per_skill);
            double p = 1.0 / (1.0 + std::exp(-(theta[skill] - difficulty[exercise])));
            int correct = rng.uniform() < p ? 1 : 0;
            double log_median = std::log(config.base_time) - config.time_ability_slope * theta[skill];
            double seconds = rng.lognormal(log_median, config.time_sigma);
            if (correct) theta[skill] += config.drift;

            InteractionRecord rec;
            rec.student_id = name;
            rec.exercise_id = exercise;
            rec.skill_id = skill;
            rec.correct = correct;
            rec.response_time = seconds;
            rec.order_key = t;
            records.push_back(std::move(rec));
        }
    }
    return {std::move(catalog), std::move(records)};
}

void write_interactions_csv(const std::string& path, const DatasetCatalog& catalog,
                            const std::vector<InteractionRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset file '" + path + "'");
    out << "student_id,exercise_id,skill_id,correct,ms_response_time,order\n";
    for (const auto& rec : records) {
        out << rec.student_id << ',' << catalog.exercise_names[rec.exercise_id] << ','
            << catalog.skill_names[rec.skill_id] << ',' << rec.correct << ',';
        if (!rec.time_imputed) out << std::llround(rec.response_time * 1000.0);
        out << ',' << rec.order_key << '\n';
    }
    if (!out.good()) throw std::runtime_error("failed writing dataset file '" + path + "'");
}

}  // namespace ktrace
