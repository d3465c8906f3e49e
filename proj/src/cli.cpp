#include "ktrace/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "ktrace/ability.hpp"
#include "ktrace/clustering.hpp"
#include "ktrace/dataset.hpp"
#include "ktrace/explain.hpp"
#include "ktrace/io.hpp"
#include "ktrace/model.hpp"
#include "ktrace/training.hpp"

namespace ktrace {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonArgs {
    std::string config_path;
    std::string mode = "aa-dkta";
    std::uint64_t seed = 42;
    bool mode_given = false;
    bool seed_given = false;
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--mode", args.mode, "model variant: dkt|dkt-a|aa-dkt|aa-dkta")
        ->check(CLI::IsMember({"dkt", "dkt-a", "aa-dkt", "aa-dkta"}))
        ->each([&args](const std::string&) { args.mode_given = true; });
    cmd->add_option("--seed", args.seed, "run seed")
        ->each([&args](const std::string&) { args.seed_given = true; });
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// defaults < config file < explicit flags
TrainConfig resolve_config(const CommonArgs& args) {
    TrainConfig config;
    if (!args.config_path.empty()) apply_config_json(config, read_file(args.config_path));
    if (args.mode_given) config.mode = mode_from_string(args.mode);
    if (args.seed_given) config.seed = args.seed;
    return config;
}

json config_json_for(const std::string& path) {
    if (path.empty()) return json::object();
    return json::parse(read_file(path));
}

void write_manifest(const fs::path& out_dir, const std::string& command, std::uint64_t seed,
                    const json& config, const json& inputs, const json& artifacts) {
    json manifest{{"schema_version", 1},   {"tool", "ktrace"},
                  {"tool_version", kToolVersion}, {"command", command},
                  {"seed", seed},          {"config", config},
                  {"inputs", inputs},      {"artifacts", artifacts}};
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in '" + out_dir.string() + "'");
    out << manifest.dump(2) << '\n';
}

fs::path prepare_out_dir(const std::string& out) {
    if (out.empty()) throw std::runtime_error("--out directory is required");
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

SyntheticConfig synth_from_json(const json& j) {
    SyntheticConfig synth;
    if (!j.is_object()) return synth;
    for (const auto& [key, value] : j.items()) {
        if (key == "students") synth.students = value.get<int>();
        else if (key == "skills") synth.skills = value.get<int>();
        else if (key == "exercises_per_skill") synth.exercises_per_skill = value.get<int>();
        else if (key == "steps_per_student") synth.steps_per_student = value.get<int>();
        else if (key == "drift") synth.drift = value.get<double>();
        else if (key == "general_sigma") synth.general_sigma = value.get<double>();
        else if (key == "ability_sigma") synth.ability_sigma = value.get<double>();
        else if (key == "difficulty_sigma") synth.difficulty_sigma = value.get<double>();
        else if (key == "base_time") synth.base_time = value.get<double>();
        else if (key == "time_sigma") synth.time_sigma = value.get<double>();
        else if (key == "time_ability_slope") synth.time_ability_slope = value.get<double>();
        else throw std::runtime_error("unknown config key 'synth." + key + "'");
    }
    return synth;
}

ParseSchema schema_from_json(const json& j) {
    ParseSchema schema;
    if (!j.is_object()) return schema;
    for (const auto& [key, value] : j.items()) {
        if (key == "student") schema.student = value.get<std::string>();
        else if (key == "exercise") schema.exercise = value.get<std::string>();
        else if (key == "skill") schema.skill = value.get<std::string>();
        else if (key == "correct") schema.correct = value.get<std::string>();
        else if (key == "response_time") schema.response_time = value.get<std::string>();
        else if (key == "order") schema.order = value.get<std::string>();
        else throw std::runtime_error("unknown config key 'columns." + key + "'");
    }
    return schema;
}

struct ModelDir {
    InferenceContext ctx;
    int fold = 0;
    std::string dataset_path;
};

// applies --config / --seed / --mode on top of a loaded model context;
// a mode that contradicts the checkpoint is an error, not a reinterpretation
void apply_overrides(struct ModelDir& model, const CommonArgs& common);

ModelDir load_model_dir(const std::string& dir_arg) {
    fs::path dir(dir_arg);
    fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw std::runtime_error("missing manifest file '" + manifest_path.string() + "'");
    }
    json manifest = json::parse(read_file(manifest_path.string()));

    ModelDir model;
    TrainConfig config;
    if (manifest.contains("config")) apply_config_json(config, manifest["config"].dump());
    model.ctx.config = config;
    if (manifest.contains("fold")) model.fold = manifest["fold"].get<int>();
    if (manifest.contains("inputs") && manifest["inputs"].contains("dataset")) {
        model.dataset_path = manifest["inputs"]["dataset"].get<std::string>();
    }

    fs::path checkpoint = dir / "checkpoint.json";
    if (!fs::exists(checkpoint)) {
        throw std::runtime_error("missing checkpoint file '" + checkpoint.string() + "'");
    }
    model.ctx.params = load_checkpoint(checkpoint.string());
    model.ctx.stats = load_stats((dir / "stats.json").string());
    model.ctx.catalog = load_catalog((dir / "catalog.json").string());
    if (cluster_enabled(model.ctx.params.mode)) {
        model.ctx.clusters = load_cluster_model((dir / "clusters.json").string());
    }
    return model;
}

void apply_overrides(ModelDir& model, const CommonArgs& common) {
    if (!common.config_path.empty()) {
        apply_config_json(model.ctx.config, read_file(common.config_path));
    }
    if (common.seed_given) model.ctx.config.seed = common.seed;
    if (common.mode_given) {
        Mode requested = mode_from_string(common.mode);
        if (requested != model.ctx.params.mode) {
            throw std::runtime_error("checkpoint was trained in mode " +
                                     mode_to_string(model.ctx.params.mode) +
                                     "; cannot evaluate it as " + common.mode);
        }
    }
}

std::vector<InteractionRecord> load_records_pinned(const std::string& dataset,
                                                   const ParseSchema& schema,
                                                   const DatasetCatalog& catalog) {
    auto [ignored, records] = parse_interactions(dataset, schema, catalog);
    (void)ignored;
    return records;
}

StudentSequence student_history(const std::vector<InteractionRecord>& records,
                                const std::string& student, int max_seq_len, int chunk) {
    std::vector<InteractionRecord> own;
    for (const auto& rec : records) {
        if (rec.student_id == student) own.push_back(rec);
    }
    if (own.empty()) throw std::runtime_error("student '" + student + "' not found in dataset");
    std::vector<StudentSequence> chunks = build_sequences(own, max_seq_len);
    int index = chunk < 0 ? static_cast<int>(chunks.size()) - 1 : chunk;
    if (index < 0 || index >= static_cast<int>(chunks.size())) {
        throw std::runtime_error("chunk index out of range for student '" + student + "'");
    }
    return chunks[static_cast<std::size_t>(index)];
}

int find_exercise(const DatasetCatalog& catalog, const std::string& raw) {
    for (int e = 0; e < catalog.exercise_count; ++e) {
        if (catalog.exercise_names[e] == raw) return e;
    }
    throw std::runtime_error("unknown exercise id '" + raw + "'");
}

int find_skill(const DatasetCatalog& catalog, const std::string& raw) {
    for (int k = 0; k < catalog.skill_count; ++k) {
        if (catalog.skill_names[k] == raw) return k;
    }
    throw std::runtime_error("unknown skill id '" + raw + "'");
}

void validate_json_artifact(const fs::path& path) {
    json parsed = json::parse(read_file(path.string()));  // throws on malformed output
    (void)parsed;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const CommonArgs& common, const std::string& out, SyntheticConfig synth,
              const std::vector<std::pair<std::string, double>>& overrides) {
    fs::path dir = prepare_out_dir(out);
    json config_snapshot = config_json_for(common.config_path);
    if (config_snapshot.contains("synth")) synth = synth_from_json(config_snapshot["synth"]);
    for (const auto& [key, value] : overrides) {
        if (key == "students") synth.students = static_cast<int>(value);
        else if (key == "skills") synth.skills = static_cast<int>(value);
        else if (key == "exercises_per_skill") synth.exercises_per_skill = static_cast<int>(value);
        else if (key == "steps_per_student") synth.steps_per_student = static_cast<int>(value);
        else if (key == "drift") synth.drift = value;
        else if (key == "general_sigma") synth.general_sigma = value;
        else if (key == "ability_sigma") synth.ability_sigma = value;
        else if (key == "difficulty_sigma") synth.difficulty_sigma = value;
        else if (key == "base_time") synth.base_time = value;
        else if (key == "time_sigma") synth.time_sigma = value;
        else if (key == "time_ability_slope") synth.time_ability_slope = value;
    }

    json synth_json{{"students", synth.students},
                    {"skills", synth.skills},
                    {"exercises_per_skill", synth.exercises_per_skill},
                    {"steps_per_student", synth.steps_per_student},
                    {"drift", synth.drift},
                    {"general_sigma", synth.general_sigma},
                    {"ability_sigma", synth.ability_sigma},
                    {"difficulty_sigma", synth.difficulty_sigma},
                    {"base_time", synth.base_time},
                    {"time_sigma", synth.time_sigma},
                    {"time_ability_slope", synth.time_ability_slope}};
    write_manifest(dir, "synth", common.seed, json{{"synth", synth_json}}, json::object(),
                   json{{"dataset", "dataset.csv"}, {"catalog", "catalog.json"}});

    auto [catalog, records] = generate_synthetic(synth, common.seed);
    write_interactions_csv((dir / "dataset.csv").string(), catalog, records);
    save_catalog((dir / "catalog.json").string(), catalog);
    validate_json_artifact(dir / "catalog.json");
    std::cout << "wrote " << records.size() << " interactions for " << synth.students
              << " students to " << (dir / "dataset.csv").string() << '\n';
    return 0;
}

int cmd_ingest(const CommonArgs& common, const std::string& dataset, const std::string& out,
               ParseSchema schema) {
    fs::path dir = prepare_out_dir(out);
    json config_snapshot = config_json_for(common.config_path);
    if (config_snapshot.contains("columns")) schema = schema_from_json(config_snapshot["columns"]);

    write_manifest(dir, "ingest", common.seed, config_snapshot, json{{"dataset", dataset}},
                   json{{"catalog", "catalog.json"}, {"normalized", "normalized.csv"}});
    auto [catalog, records] = parse_interactions(dataset, schema);
    save_catalog((dir / "catalog.json").string(), catalog);
    write_interactions_csv((dir / "normalized.csv").string(), catalog, records);
    validate_json_artifact(dir / "catalog.json");
    std::cout << "ingested " << records.size() << " records, |E|=" << catalog.exercise_count
              << " |K|=" << catalog.skill_count << " students=" << catalog.student_ids.size()
              << '\n';
    return 0;
}

void write_train_artifacts(const fs::path& dir, const TrainedArtifacts& artifacts,
                           const DatasetCatalog& catalog, std::uint64_t seed) {
    save_catalog((dir / "catalog.json").string(), catalog);
    save_stats((dir / "stats.json").string(), artifacts.stats);
    if (artifacts.clusters) save_cluster_model((dir / "clusters.json").string(), *artifacts.clusters);
    save_checkpoint((dir / "checkpoint.json").string(), artifacts.params, seed);
    save_metrics_csv((dir / "metrics.csv").string(), artifacts.metrics);
    validate_json_artifact(dir / "catalog.json");
    validate_json_artifact(dir / "stats.json");
    if (artifacts.clusters) validate_json_artifact(dir / "clusters.json");
    validate_json_artifact(dir / "checkpoint.json");
}

int cmd_train(const std::string& dataset, const std::string& out, int fold,
              const TrainConfig& config) {
    fs::path dir = prepare_out_dir(out);

    json artifacts_json{{"catalog", "catalog.json"},
                        {"stats", "stats.json"},
                        {"checkpoint", "checkpoint.json"},
                        {"metrics", "metrics.csv"}};
    if (cluster_enabled(config.mode)) artifacts_json["clusters"] = "clusters.json";
    json manifest_config = json::parse(train_config_to_json(config));
    json manifest{{"schema_version", 1},
                  {"tool", "ktrace"},
                  {"tool_version", kToolVersion},
                  {"command", "train"},
                  {"seed", config.seed},
                  {"fold", fold},
                  {"config", manifest_config},
                  {"inputs", json{{"dataset", dataset}}},
                  {"artifacts", artifacts_json}};
    {
        std::ofstream mout(dir / "manifest.json");
        if (!mout) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
        mout << manifest.dump(2) << '\n';
    }

    auto [catalog, records] = parse_interactions(dataset);
    std::vector<FoldSplit> splits = split_folds(catalog.student_ids, config.folds, config.seed);
    if (fold < 0 || fold >= static_cast<int>(splits.size())) {
        throw std::runtime_error("fold index out of range");
    }
    TrainedArtifacts artifacts = train_model(config, catalog, records, splits[fold]);
    write_train_artifacts(dir, artifacts, catalog, config.seed);

    std::cout << "trained " << mode_to_string(config.mode) << " for " << config.epochs
              << " epochs; best validation auc=" << format_double(artifacts.metrics.auc) << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& model_dir, std::string dataset,
             const std::string& split_name, const std::string& out) {
    ModelDir model = load_model_dir(model_dir);
    apply_overrides(model, common);
    if (dataset.empty()) dataset = model.dataset_path;
    if (dataset.empty()) throw std::runtime_error("--dataset is required (manifest has no input)");

    std::vector<InteractionRecord> records =
        load_records_pinned(dataset, ParseSchema{}, model.ctx.catalog);
    std::vector<FoldSplit> splits =
        split_folds(model.ctx.catalog.student_ids, model.ctx.config.folds, model.ctx.config.seed);
    const FoldSplit& split = splits.at(static_cast<std::size_t>(model.fold));
    const std::vector<std::string>* students = &split.test_students;
    if (split_name == "train") students = &split.train_students;
    else if (split_name == "validation") students = &split.validation_students;
    else if (split_name != "test") throw std::runtime_error("unknown split '" + split_name + "'");

    Metrics metrics = evaluate(model.ctx.params, model.ctx.stats, model.ctx.cluster_ptr(),
                               model.ctx.config, model.ctx.catalog, records, *students);
    std::cout << "split=" << split_name << " auc=" << format_double(metrics.auc)
              << " loss=" << format_double(metrics.loss) << '\n';
    if (!out.empty()) {
        fs::path dir = prepare_out_dir(out);
        write_manifest(dir, "eval", model.ctx.config.seed,
                       json::parse(train_config_to_json(model.ctx.config)),
                       json{{"dataset", dataset}, {"model_dir", model_dir}},
                       json{{"eval", "eval.json"}});
        json j{{"schema_version", 1},
               {"split", split_name},
               {"auc", metrics.auc},
               {"loss", metrics.loss}};
        {
            std::ofstream jout(dir / "eval.json");
            jout << j.dump(2) << '\n';
        }
        validate_json_artifact(dir / "eval.json");
    }
    return 0;
}

int cmd_predict(const CommonArgs& common, const std::string& model_dir, std::string dataset,
                const std::string& student, int chunk, const std::string& out) {
    ModelDir model = load_model_dir(model_dir);
    apply_overrides(model, common);
    if (dataset.empty()) dataset = model.dataset_path;
    std::vector<InteractionRecord> records =
        load_records_pinned(dataset, ParseSchema{}, model.ctx.catalog);
    StudentSequence history =
        student_history(records, student, model.ctx.config.max_seq_len, chunk);

    std::vector<EncodedSequence> encoded = encode_dataset(
        history.steps, model.ctx.catalog, model.ctx.stats, model.ctx.cluster_ptr(), model.ctx.config);
    std::vector<StepOutput> outputs = forward_sequence(encoded[0].steps, model.ctx.params);

    fs::path dir = prepare_out_dir(out);
    write_manifest(dir, "predict", model.ctx.config.seed,
                   json::parse(train_config_to_json(model.ctx.config)),
                   json{{"dataset", dataset}, {"model_dir", model_dir}, {"student", student}},
                   json{{"predictions", "predictions.csv"}});
    std::ofstream csv(dir / "predictions.csv");
    csv << "step,exercise_id,skill_id,label,prob\n";
    for (std::size_t t = 0; t < outputs.size(); ++t) {
        const InteractionRecord& rec = history.steps[t];
        csv << t << ',' << model.ctx.catalog.exercise_names[rec.exercise_id] << ','
            << model.ctx.catalog.skill_names[rec.skill_id] << ',' << rec.correct << ','
            << format_double(outputs[t].y) << '\n';
    }
    if (!csv.good()) throw std::runtime_error("failed writing predictions.csv");
    std::cout << "wrote " << outputs.size() << " predictions for student " << student << '\n';
    return 0;
}

int cmd_explain(const CommonArgs& common, const std::string& model_dir, std::string dataset,
                const std::string& student, const std::string& target_raw, int chunk,
                const std::string& out) {
    ModelDir model = load_model_dir(model_dir);
    apply_overrides(model, common);
    if (dataset.empty()) dataset = model.dataset_path;
    std::vector<InteractionRecord> records =
        load_records_pinned(dataset, ParseSchema{}, model.ctx.catalog);
    StudentSequence history =
        student_history(records, student, model.ctx.config.max_seq_len, chunk);
    int target = find_exercise(model.ctx.catalog, target_raw);

    InferencePath path = infer_path(history, target, model.ctx);
    std::cout << path.verdict_text << '\n';

    if (!out.empty()) {
        fs::path dir = prepare_out_dir(out);
        write_manifest(dir, "explain", model.ctx.config.seed,
                       json::parse(train_config_to_json(model.ctx.config)),
                       json{{"dataset", dataset},
                            {"model_dir", model_dir},
                            {"student", student},
                            {"target", target_raw}},
                       json{{"path", "path.json"}});
        json j{{"schema_version", 1},
               {"target_exercise", model.ctx.catalog.exercise_names[path.target_exercise]},
               {"concept", model.ctx.catalog.skill_names[path.concept_id]},
               {"attention_weight", path.attention_weight},
               {"probability", path.probability},
               {"verdict", path.verdict_text}};
        if (path.evidence_step) {
            j["evidence_step"] = *path.evidence_step;
            j["evidence_result"] = *path.evidence_result;
        }
        {
            std::ofstream jout(dir / "path.json");
            jout << j.dump(2) << '\n';
        }
        validate_json_artifact(dir / "path.json");
    }
    return 0;
}

int cmd_trace(const CommonArgs& common, const std::string& model_dir, std::string dataset,
              const std::string& student, const std::string& probes_arg, int chunk, bool svg,
              const std::string& out) {
    ModelDir model = load_model_dir(model_dir);
    apply_overrides(model, common);
    if (dataset.empty()) dataset = model.dataset_path;
    std::vector<InteractionRecord> records =
        load_records_pinned(dataset, ParseSchema{}, model.ctx.catalog);
    StudentSequence history =
        student_history(records, student, model.ctx.config.max_seq_len, chunk);

    std::vector<int> probe_concepts;
    if (probes_arg.empty()) {
        probe_concepts.resize(static_cast<std::size_t>(model.ctx.catalog.skill_count));
        std::iota(probe_concepts.begin(), probe_concepts.end(), 0);
    } else {
        std::stringstream ss(probes_arg);
        std::string part;
        while (std::getline(ss, part, ',')) probe_concepts.push_back(find_skill(model.ctx.catalog, part));
    }

    // representative exercise = most frequent one among the training students
    std::vector<FoldSplit> splits =
        split_folds(model.ctx.catalog.student_ids, model.ctx.config.folds, model.ctx.config.seed);
    const FoldSplit& split = splits.at(static_cast<std::size_t>(model.fold));
    std::unordered_set<std::string> train_set(split.train_students.begin(),
                                              split.train_students.end());
    std::vector<InteractionRecord> train_records;
    for (const auto& rec : records) {
        if (train_set.count(rec.student_id)) train_records.push_back(rec);
    }
    std::vector<int> probe_exercises =
        pick_representatives(train_records, model.ctx.catalog, probe_concepts);

    KnowledgeStateMatrix matrix =
        knowledge_state_trace(history, model.ctx, probe_concepts, probe_exercises);

    fs::path dir = prepare_out_dir(out);
    json artifacts{{"trace", "trace.csv"}, {"ability", "ability.csv"}};
    if (svg) artifacts["heatmap"] = "trace.svg";
    write_manifest(dir, "trace", model.ctx.config.seed,
                   json::parse(train_config_to_json(model.ctx.config)),
                   json{{"dataset", dataset}, {"model_dir", model_dir}, {"student", student}},
                   artifacts);

    std::ofstream csv(dir / "trace.csv");
    csv << "step";
    for (int c : probe_concepts) csv << ",c" << model.ctx.catalog.skill_names[c];
    csv << '\n';
    for (std::size_t r = 0; r < matrix.rows.size(); ++r) {
        csv << r;
        for (double y : matrix.rows[r]) csv << ',' << format_double(y);
        csv << '\n';
    }
    if (!csv.good()) throw std::runtime_error("failed writing trace.csv");
    if (svg) {
        std::ofstream sout(dir / "trace.svg");
        sout << render_svg_heatmap(matrix);
    }

    // radar data: cumulative ability snapshot at every segment boundary
    AbilityTimeline timeline =
        build_timeline(history, model.ctx.config.g, model.ctx.stats,
                       model.ctx.catalog.skill_count, model.ctx.config.ability_options());
    std::ofstream radar(dir / "ability.csv");
    radar << "segment";
    for (const std::string& label : model.ctx.catalog.skill_names) radar << ",k" << label;
    radar << '\n';
    for (std::size_t s = 0; s < timeline.cumulative.size(); ++s) {
        AbilitySnapshot snapshot = ability_snapshot(timeline, s, model.ctx.catalog);
        radar << s;
        for (double v : snapshot.values) radar << ',' << format_double(v);
        radar << '\n';
    }
    if (!radar.good()) throw std::runtime_error("failed writing ability.csv");

    std::cout << "traced " << matrix.rows.size() << " steps over " << probe_concepts.size()
              << " concepts\n";
    return 0;
}

int cmd_cluster_report(const CommonArgs& common, const std::string& model_dir,
                       std::string dataset, const std::string& out) {
    ModelDir model = load_model_dir(model_dir);
    apply_overrides(model, common);
    if (!model.ctx.clusters) {
        throw std::runtime_error("model was trained without clustering (mode " +
                                 mode_to_string(model.ctx.params.mode) + ")");
    }
    if (dataset.empty()) dataset = model.dataset_path;
    std::vector<InteractionRecord> records =
        load_records_pinned(dataset, ParseSchema{}, model.ctx.catalog);

    const ClusterModel& clusters = *model.ctx.clusters;
    std::vector<long> population(clusters.k, 0);
    std::map<std::size_t, std::pair<long, long>> migrations;  // segment -> (changed, total)
    for (const StudentSequence& seq : build_sequences(records, model.ctx.config.max_seq_len)) {
        AbilityTimeline timeline =
            build_timeline(seq, model.ctx.config.g, model.ctx.stats,
                           model.ctx.catalog.skill_count, model.ctx.config.ability_options());
        AssignmentTrace trace = build_assignment_trace(timeline, clusters);
        if (trace.per_segment_cluster.empty()) continue;
        population[trace.per_segment_cluster.back()] += 1;
        for (std::size_t s = 1; s < trace.per_segment_cluster.size(); ++s) {
            auto& cell = migrations[s];
            cell.second += 1;
            if (trace.per_segment_cluster[s] != trace.per_segment_cluster[s - 1]) cell.first += 1;
        }
    }

    fs::path dir = prepare_out_dir(out);
    write_manifest(dir, "cluster-report", model.ctx.config.seed,
                   json::parse(train_config_to_json(model.ctx.config)),
                   json{{"dataset", dataset}, {"model_dir", model_dir}},
                   json{{"clusters", "report_clusters.csv"},
                        {"migrations", "report_migrations.csv"}});

    std::ofstream ccsv(dir / "report_clusters.csv");
    ccsv << "cluster,population,centroid_norm\n";
    for (int c = 0; c < clusters.k; ++c) {
        double norm = std::sqrt(dot(clusters.centroids[c], clusters.centroids[c]));
        ccsv << c << ',' << population[c] << ',' << format_double(norm) << '\n';
    }
    std::ofstream mcsv(dir / "report_migrations.csv");
    mcsv << "segment,changed,total\n";
    for (const auto& [segment, cell] : migrations) {
        mcsv << segment << ',' << cell.first << ',' << cell.second << '\n';
    }
    if (!ccsv.good() || !mcsv.good()) throw std::runtime_error("failed writing cluster report");
    std::cout << "cluster report written to " << dir.string() << '\n';
    return 0;
}

int cmd_sweep_k(const std::string& dataset, const std::string& out, const std::string& k_list_arg,
                int repeats, int fold, const TrainConfig& base) {
    std::vector<int> k_values;
    {
        std::stringstream ss(k_list_arg);
        std::string part;
        while (std::getline(ss, part, ',')) k_values.push_back(std::stoi(part));
    }
    if (k_values.empty() || repeats <= 0) {
        throw std::runtime_error("sweep-k needs a K list and positive repeats");
    }

    fs::path dir = prepare_out_dir(out);
    write_manifest(dir, "sweep-k", base.seed, json::parse(train_config_to_json(base)),
                   json{{"dataset", dataset}, {"k_list", k_list_arg}, {"repeats", repeats}},
                   json{{"sweep", "sweep.csv"}});

    auto [catalog, records] = parse_interactions(dataset);
    std::ofstream csv(dir / "sweep.csv");
    csv << "k,auc,auc_std\n";
    for (int k : k_values) {
        std::vector<double> aucs;
        for (int r = 0; r < repeats; ++r) {
            TrainConfig config = base;
            config.k_clusters = k;
            config.seed = base.seed + static_cast<std::uint64_t>(r);
            std::vector<FoldSplit> splits =
                split_folds(catalog.student_ids, config.folds, config.seed);
            TrainedArtifacts artifacts =
                train_model(config, catalog, records, splits.at(static_cast<std::size_t>(fold)));
            Metrics test = evaluate(artifacts.params, artifacts.stats,
                                    artifacts.clusters ? &*artifacts.clusters : nullptr, config,
                                    catalog, records, splits.at(static_cast<std::size_t>(fold)).test_students);
            aucs.push_back(test.auc);
            std::cout << "k=" << k << " repeat=" << r << " test auc=" << format_double(test.auc)
                      << '\n';
        }
        double mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / aucs.size();
        double var = 0.0;
        for (double a : aucs) var += (a - mean) * (a - mean);
        double stddev = aucs.size() > 1 ? std::sqrt(var / (aucs.size() - 1)) : 0.0;
        csv << k << ',' << format_double(mean) << ',' << format_double(stddev) << '\n';
    }
    if (!csv.good()) throw std::runtime_error("failed writing sweep.csv");
    std::cout << "sweep written to " << (dir / "sweep.csv").string() << '\n';
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"knowledge tracing pipeline: ability attributes, dynamic grouping, "
                 "attention-based prediction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    // synth
    CommonArgs synth_common;
    std::string synth_out;
    SyntheticConfig synth_defaults;
    std::vector<std::pair<std::string, double>> synth_overrides;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common_options(synth_cmd, synth_common);
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    auto add_synth_opt = [&](const std::string& flag, const std::string& key, const char* help) {
        synth_cmd->add_option_function<double>(
            flag, [&synth_overrides, key](double v) { synth_overrides.emplace_back(key, v); }, help);
    };
    add_synth_opt("--students", "students", "student count");
    add_synth_opt("--skills", "skills", "knowledge concept count");
    add_synth_opt("--exercises-per-skill", "exercises_per_skill", "exercises per concept");
    add_synth_opt("--steps", "steps_per_student", "interactions per student");
    add_synth_opt("--drift", "drift", "ability gain per correct answer");
    add_synth_opt("--general-sigma", "general_sigma", "student-level ability spread");
    add_synth_opt("--ability-sigma", "ability_sigma", "per-skill ability spread");
    add_synth_opt("--difficulty-sigma", "difficulty_sigma", "exercise difficulty spread");
    add_synth_opt("--base-time", "base_time", "median response time in seconds");
    add_synth_opt("--time-sigma", "time_sigma", "log-space response time noise");
    add_synth_opt("--time-slope", "time_ability_slope", "how sharply time shrinks with ability");

    // ingest
    CommonArgs ingest_common;
    std::string ingest_dataset, ingest_out;
    ParseSchema ingest_schema;
    auto* ingest_cmd = app.add_subcommand("ingest", "normalize an interaction CSV");
    add_common_options(ingest_cmd, ingest_common);
    ingest_cmd->add_option("--dataset", ingest_dataset, "input CSV")->required();
    ingest_cmd->add_option("--out", ingest_out, "output directory")->required();
    ingest_cmd->add_option("--col-student", ingest_schema.student, "student column name");
    ingest_cmd->add_option("--col-exercise", ingest_schema.exercise, "exercise column name");
    ingest_cmd->add_option("--col-skill", ingest_schema.skill, "skill column name");
    ingest_cmd->add_option("--col-correct", ingest_schema.correct, "correctness column name");
    ingest_cmd->add_option("--col-time", ingest_schema.response_time, "response time column name");
    ingest_cmd->add_option("--col-order", ingest_schema.order, "order column name");

    // train
    CommonArgs train_common;
    std::string train_dataset, train_out;
    int train_fold = 0;
    std::optional<int> train_k, train_epochs;
    std::optional<double> train_lr;
    auto* train_cmd = app.add_subcommand("train", "run the full training pipeline on one fold");
    add_common_options(train_cmd, train_common);
    train_cmd->add_option("--dataset", train_dataset, "input CSV")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--fold", train_fold, "fold index");
    train_cmd->add_option("--k-clusters", train_k, "number of ability groups");
    train_cmd->add_option("--epochs", train_epochs, "training epochs");
    train_cmd->add_option("--lr", train_lr, "learning rate");

    // eval
    CommonArgs eval_common;
    std::string eval_model, eval_dataset, eval_split = "test", eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common_options(eval_cmd, eval_common);
    eval_cmd->add_option("--model-dir", eval_model, "directory produced by train")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "input CSV (defaults to the training input)");
    eval_cmd->add_option("--split", eval_split, "train|validation|test");
    eval_cmd->add_option("--out", eval_out, "optional output directory");

    // predict
    CommonArgs pred_common;
    std::string pred_model, pred_dataset, pred_student, pred_out;
    int pred_chunk = -1;
    auto* pred_cmd = app.add_subcommand("predict", "per-step probabilities for one student");
    add_common_options(pred_cmd, pred_common);
    pred_cmd->add_option("--model-dir", pred_model, "directory produced by train")->required();
    pred_cmd->add_option("--dataset", pred_dataset, "input CSV");
    pred_cmd->add_option("--student", pred_student, "student id")->required();
    pred_cmd->add_option("--chunk", pred_chunk, "history chunk (-1 = last)");
    pred_cmd->add_option("--out", pred_out, "output directory")->required();

    // explain
    CommonArgs exp_common;
    std::string exp_model, exp_dataset, exp_student, exp_target, exp_out;
    int exp_chunk = -1;
    auto* exp_cmd = app.add_subcommand("explain", "inference path for a target exercise");
    add_common_options(exp_cmd, exp_common);
    exp_cmd->add_option("--model-dir", exp_model, "directory produced by train")->required();
    exp_cmd->add_option("--dataset", exp_dataset, "input CSV");
    exp_cmd->add_option("--student", exp_student, "student id")->required();
    exp_cmd->add_option("--target", exp_target, "target exercise id")->required();
    exp_cmd->add_option("--chunk", exp_chunk, "history chunk (-1 = last)");
    exp_cmd->add_option("--out", exp_out, "optional output directory");

    // trace
    CommonArgs trace_common;
    std::string trace_model, trace_dataset, trace_student, trace_probes, trace_out;
    int trace_chunk = -1;
    bool trace_svg = false;
    auto* trace_cmd = app.add_subcommand("trace", "knowledge-state matrix over a history");
    add_common_options(trace_cmd, trace_common);
    trace_cmd->add_option("--model-dir", trace_model, "directory produced by train")->required();
    trace_cmd->add_option("--dataset", trace_dataset, "input CSV");
    trace_cmd->add_option("--student", trace_student, "student id")->required();
    trace_cmd->add_option("--probes", trace_probes, "comma-separated skill ids (default: all)");
    trace_cmd->add_option("--chunk", trace_chunk, "history chunk (-1 = last)");
    trace_cmd->add_flag("--svg", trace_svg, "also write an SVG heatmap");
    trace_cmd->add_option("--out", trace_out, "output directory")->required();

    // cluster-report
    CommonArgs rep_common;
    std::string rep_model, rep_dataset, rep_out;
    auto* rep_cmd = app.add_subcommand("cluster-report", "population and migration statistics");
    add_common_options(rep_cmd, rep_common);
    rep_cmd->add_option("--model-dir", rep_model, "directory produced by train")->required();
    rep_cmd->add_option("--dataset", rep_dataset, "input CSV");
    rep_cmd->add_option("--out", rep_out, "output directory")->required();

    // sweep-k
    CommonArgs sweep_common;
    std::string sweep_dataset, sweep_out, sweep_k_list = "3,5,10";
    int sweep_repeats = 1, sweep_fold = 0;
    std::optional<int> sweep_epochs;
    std::optional<double> sweep_lr;
    auto* sweep_cmd = app.add_subcommand("sweep-k", "train/eval over a list of K values");
    add_common_options(sweep_cmd, sweep_common);
    sweep_cmd->add_option("--dataset", sweep_dataset, "input CSV")->required();
    sweep_cmd->add_option("--out", sweep_out, "output directory")->required();
    sweep_cmd->add_option("--k-list", sweep_k_list, "comma-separated K values");
    sweep_cmd->add_option("--repeats", sweep_repeats, "runs per K (seeds seed..seed+r-1)");
    sweep_cmd->add_option("--fold", sweep_fold, "fold index");
    sweep_cmd->add_option("--epochs", sweep_epochs, "training epochs");
    sweep_cmd->add_option("--lr", sweep_lr, "learning rate");

    std::vector<const char*> argv;
    argv.push_back("ktrace");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth_common, synth_out, synth_defaults, synth_overrides);
        if (ingest_cmd->parsed()) return cmd_ingest(ingest_common, ingest_dataset, ingest_out, ingest_schema);
        if (train_cmd->parsed()) {
            TrainConfig config = resolve_config(train_common);
            if (train_k) config.k_clusters = *train_k;
            if (train_epochs) config.epochs = *train_epochs;
            if (train_lr) config.learning_rate = *train_lr;
            return cmd_train(train_dataset, train_out, train_fold, config);
        }
        if (eval_cmd->parsed())
            return cmd_eval(eval_common, eval_model, eval_dataset, eval_split, eval_out);
        if (pred_cmd->parsed())
            return cmd_predict(pred_common, pred_model, pred_dataset, pred_student, pred_chunk,
                               pred_out);
        if (exp_cmd->parsed())
            return cmd_explain(exp_common, exp_model, exp_dataset, exp_student, exp_target,
                               exp_chunk, exp_out);
        if (trace_cmd->parsed())
            return cmd_trace(trace_common, trace_model, trace_dataset, trace_student, trace_probes,
                             trace_chunk, trace_svg, trace_out);
        if (rep_cmd->parsed())
            return cmd_cluster_report(rep_common, rep_model, rep_dataset, rep_out);
        if (sweep_cmd->parsed()) {
            TrainConfig config = resolve_config(sweep_common);
            if (sweep_epochs) config.epochs = *sweep_epochs;
            if (sweep_lr) config.learning_rate = *sweep_lr;
            return cmd_sweep_k(sweep_dataset, sweep_out, sweep_k_list, sweep_repeats, sweep_fold,
                               config);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << "error: no command selected\n";
    return 1;
}

}  // namespace ktrace
