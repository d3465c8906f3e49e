#include "ktrace/io.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace ktrace {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

json read_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(std::string("cannot open ") + what + " file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("malformed ") + what + " file '" + path +
                                 "': " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const json& j, const char* what) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(std::string("cannot write ") + what + " file '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out.good()) {
        throw std::runtime_error(std::string("failed writing ") + what + " file '" + path + "'");
    }
}

void check_schema(const json& j, const char* what) {
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion) {
        throw std::runtime_error(std::string(what) + ": unsupported schema_version");
    }
}

json matrix_to_json(const Matrix& m) {
    return json{{"shape", {m.rows, m.cols}}, {"data", m.data}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
    Matrix m(j.at("shape").at(0).get<int>(), j.at("shape").at(1).get<int>());
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) {
        throw std::runtime_error("checkpoint tensor " + name + " has inconsistent shape");
    }
    m.data = std::move(data);
    return m;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

void save_catalog(const std::string& path, const DatasetCatalog& catalog) {
    json map = json::object();
    for (int e = 0; e < catalog.exercise_count; ++e) {
        map[std::to_string(e)] = catalog.exercise_to_skill[e];
    }
    json j{{"schema_version", kSchemaVersion},
           {"exercise_count", catalog.exercise_count},
           {"skill_count", catalog.skill_count},
           {"exercise_to_skill", map},
           {"exercise_names", catalog.exercise_names},
           {"skill_names", catalog.skill_names},
           {"student_ids", catalog.student_ids}};
    write_json_file(path, j, "catalog");
}

DatasetCatalog load_catalog(const std::string& path) {
    json j = read_json_file(path, "catalog");
    check_schema(j, "catalog");
    DatasetCatalog catalog;
    catalog.exercise_count = j.at("exercise_count").get<int>();
    catalog.skill_count = j.at("skill_count").get<int>();
    catalog.exercise_names = j.at("exercise_names").get<std::vector<std::string>>();
    catalog.skill_names = j.at("skill_names").get<std::vector<std::string>>();
    catalog.student_ids = j.at("student_ids").get<std::vector<std::string>>();
    catalog.exercise_to_skill.assign(catalog.exercise_count, -1);
    for (const auto& [key, value] : j.at("exercise_to_skill").items()) {
        catalog.exercise_to_skill.at(std::stoul(key)) = value.get<int>();
    }
    return catalog;
}

void save_stats(const std::string& path, const ResponseTimeStats& stats) {
    json cells = json::object();
    for (const auto& [key, cell] : stats.cells) {
        cells[std::to_string(key.first) + ":" + std::to_string(key.second)] =
            json{{"mean", cell.mean}, {"count", cell.count}};
    }
    json j{{"schema_version", kSchemaVersion},
           {"global_mean", stats.global_mean},
           {"cells", cells}};
    write_json_file(path, j, "stats");
}

ResponseTimeStats load_stats(const std::string& path) {
    json j = read_json_file(path, "stats");
    check_schema(j, "stats");
    ResponseTimeStats stats;
    stats.global_mean = j.at("global_mean").get<double>();
    for (const auto& [key, value] : j.at("cells").items()) {
        std::size_t colon = key.find(':');
        if (colon == std::string::npos) throw std::runtime_error("stats: malformed cell key " + key);
        int skill = std::stoi(key.substr(0, colon));
        int exercise = std::stoi(key.substr(colon + 1));
        stats.cells[{skill, exercise}] = {value.at("mean").get<double>(),
                                          value.at("count").get<int>()};
    }
    return stats;
}

void save_cluster_model(const std::string& path, const ClusterModel& model) {
    json j{{"schema_version", kSchemaVersion},
           {"k", model.k},
           {"dim", model.dim},
           {"seed", model.seed},
           {"inertia", model.inertia},
           {"centroids", model.centroids}};
    write_json_file(path, j, "cluster model");
}

ClusterModel load_cluster_model(const std::string& path) {
    json j = read_json_file(path, "cluster model");
    check_schema(j, "cluster model");
    ClusterModel model;
    model.k = j.at("k").get<int>();
    model.dim = j.at("dim").get<int>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.inertia = j.at("inertia").get<double>();
    model.centroids = j.at("centroids").get<std::vector<Vec>>();
    if (static_cast<int>(model.centroids.size()) != model.k) {
        throw std::runtime_error("cluster model: centroid count differs from k");
    }
    return model;
}

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed) {
    json tensors = json::object();
    tensors["B"] = matrix_to_json(params.B);
    if (attention_enabled(params.mode)) {
        tensors["F_key"] = matrix_to_json(params.F_key);
        tensors["F_val"] = matrix_to_json(params.F_val);
    } else {
        tensors["W_read"] = matrix_to_json(params.W_read);
    }
    tensors["W_xh"] = matrix_to_json(params.W_xh);
    tensors["W_hh"] = matrix_to_json(params.W_hh);
    tensors["b_h"] = params.b_h;
    tensors["W1"] = matrix_to_json(params.W1);
    tensors["b1"] = params.b1;
    tensors["W2"] = params.W2;
    tensors["b2"] = params.b2;

    json j{{"schema_version", kSchemaVersion},
           {"mode", mode_to_string(params.mode)},
           {"attend_tagged_only", params.attend_tagged_only},
           {"seed", seed},
           {"dims",
            {{"d_k", params.dims.d_k},
             {"d_h", params.dims.d_h},
             {"m", params.dims.m},
             {"k_clusters", params.dims.k_clusters},
             {"concept_count", params.dims.concept_count},
             {"exercise_count", params.dims.exercise_count}}},
           {"tensors", tensors}};
    write_json_file(path, j, "checkpoint");
}

ModelParams load_checkpoint(const std::string& path) {
    json j = read_json_file(path, "checkpoint");
    check_schema(j, "checkpoint");
    ModelParams params;
    params.mode = mode_from_string(j.at("mode").get<std::string>());
    params.attend_tagged_only = j.at("attend_tagged_only").get<bool>();
    const json& dims = j.at("dims");
    params.dims.d_k = dims.at("d_k").get<int>();
    params.dims.d_h = dims.at("d_h").get<int>();
    params.dims.m = dims.at("m").get<int>();
    params.dims.k_clusters = dims.at("k_clusters").get<int>();
    params.dims.concept_count = dims.at("concept_count").get<int>();
    params.dims.exercise_count = dims.at("exercise_count").get<int>();

    const json& tensors = j.at("tensors");
    params.B = matrix_from_json(tensors.at("B"), "B");
    if (attention_enabled(params.mode)) {
        params.F_key = matrix_from_json(tensors.at("F_key"), "F_key");
        params.F_val = matrix_from_json(tensors.at("F_val"), "F_val");
    } else {
        params.W_read = matrix_from_json(tensors.at("W_read"), "W_read");
    }
    params.W_xh = matrix_from_json(tensors.at("W_xh"), "W_xh");
    params.W_hh = matrix_from_json(tensors.at("W_hh"), "W_hh");
    params.b_h = tensors.at("b_h").get<Vec>();
    params.W1 = matrix_from_json(tensors.at("W1"), "W1");
    params.b1 = tensors.at("b1").get<Vec>();
    params.W2 = tensors.at("W2").get<Vec>();
    params.b2 = tensors.at("b2").get<double>();
    return params;
}

void save_metrics_csv(const std::string& path, const Metrics& metrics) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics file '" + path + "'");
    out << "epoch,loss,val_auc\n";
    for (const EpochStats& row : metrics.history) {
        out << row.epoch << ',' << format_double(row.train_loss) << ','
            << format_double(row.val_auc) << '\n';
    }
    if (!out.good()) throw std::runtime_error("failed writing metrics file '" + path + "'");
}

namespace {

template <typename T>
T get_typed(const json& j, const std::string& key, const char* type_name) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw std::runtime_error("config key '" + key + "' must be " + type_name);
    }
}

}  // namespace

void apply_config_json(TrainConfig& config, const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("malformed config JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config must be a JSON object");

    for (const auto& [key, value] : j.items()) {
        if (key == "d_k") config.d_k = get_typed<int>(value, key, "an integer");
        else if (key == "d_h") config.d_h = get_typed<int>(value, key, "an integer");
        else if (key == "k_clusters") config.k_clusters = get_typed<int>(value, key, "an integer");
        else if (key == "g") config.g = get_typed<int>(value, key, "an integer");
        else if (key == "max_seq_len") config.max_seq_len = get_typed<int>(value, key, "an integer");
        else if (key == "batch_size") config.batch_size = get_typed<int>(value, key, "an integer");
        else if (key == "learning_rate")
            config.learning_rate = get_typed<double>(value, key, "a number");
        else if (key == "epochs") config.epochs = get_typed<int>(value, key, "an integer");
        else if (key == "folds") config.folds = get_typed<int>(value, key, "an integer");
        else if (key == "seed") config.seed = get_typed<std::uint64_t>(value, key, "an integer");
        else if (key == "mode")
            config.mode = mode_from_string(get_typed<std::string>(value, key, "a string"));
        else if (key == "c_max") config.c_max = get_typed<double>(value, key, "a number");
        else if (key == "clip_norm") config.clip_norm = get_typed<double>(value, key, "a number");
        else if (key == "encode_over") {
            std::string v = get_typed<std::string>(value, key, "a string");
            if (v == "skills") config.encode_over = EncodeOver::skills;
            else if (v == "exercises") config.encode_over = EncodeOver::exercises;
            else throw std::runtime_error("config key 'encode_over' must be skills|exercises");
        } else if (key == "ability_agg") {
            std::string v = get_typed<std::string>(value, key, "a string");
            if (v == "sum") config.ability_agg = AbilityAgg::sum;
            else if (v == "mean") config.ability_agg = AbilityAgg::mean;
            else throw std::runtime_error("config key 'ability_agg' must be sum|mean");
        } else if (key == "invert_ratio")
            config.invert_ratio = get_typed<bool>(value, key, "a boolean");
        else if (key == "attend_tagged_only")
            config.attend_tagged_only = get_typed<bool>(value, key, "a boolean");
        else if (key == "columns" || key == "synth") {
            // consumed by the CLI layer
        } else {
            throw std::runtime_error("unknown config key '" + key + "'");
        }
    }
}

TrainConfig train_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TrainConfig config;
    apply_config_json(config, text);
    return config;
}

std::string train_config_to_json(const TrainConfig& config) {
    json j{{"d_k", config.d_k},
           {"d_h", config.d_h},
           {"k_clusters", config.k_clusters},
           {"g", config.g},
           {"max_seq_len", config.max_seq_len},
           {"batch_size", config.batch_size},
           {"learning_rate", config.learning_rate},
           {"epochs", config.epochs},
           {"folds", config.folds},
           {"seed", config.seed},
           {"mode", mode_to_string(config.mode)},
           {"c_max", config.c_max},
           {"clip_norm", config.clip_norm},
           {"encode_over", config.encode_over == EncodeOver::skills ? "skills" : "exercises"},
           {"ability_agg", config.ability_agg == AbilityAgg::sum ? "sum" : "mean"},
           {"invert_ratio", config.invert_ratio},
           {"attend_tagged_only", config.attend_tagged_only}};
    return j.dump(2);
}

}  // namespace ktrace
