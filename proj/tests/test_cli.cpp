#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ktrace/cli.hpp"
#include "ktrace/io.hpp"

using namespace ktrace;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliFixture {
    fs::path root{"tmp_cli"};

    CliFixture() {
        fs::remove_all(root);
        fs::create_directories(root);
    }

    std::string dir(const std::string& name) const { return (root / name).string(); }

    int synth_small(const std::string& out) const {
        return run_command({"synth", "--out", out, "--seed", "5", "--students", "40", "--skills",
                            "3", "--exercises-per-skill", "3", "--steps", "30", "--drift", "0.2"});
    }

    int train_small(const std::string& dataset, const std::string& out,
                    const std::string& mode = "aa-dkta") const {
        return run_command({"train", "--dataset", dataset, "--out", out, "--seed", "5", "--mode",
                            mode, "--epochs", "2", "--k-clusters", "3"});
    }
};

}  // namespace

TEST_CASE("unknown commands and bad flags exit nonzero") {
    CHECK(run_command({"frobnicate"}) != 0);
    CHECK(run_command({}) != 0);
    CHECK(run_command({"train"}) != 0);  // missing required flags
}

TEST_CASE("synth then train produce the documented artifacts") {
    CliFixture fx;
    REQUIRE(fx.synth_small(fx.dir("data")) == 0);
    CHECK(fs::exists(fx.root / "data" / "manifest.json"));
    CHECK(fs::exists(fx.root / "data" / "dataset.csv"));
    CHECK(fs::exists(fx.root / "data" / "catalog.json"));

    std::string dataset = (fx.root / "data" / "dataset.csv").string();
    REQUIRE(fx.train_small(dataset, fx.dir("model")) == 0);
    for (const char* name : {"manifest.json", "catalog.json", "stats.json", "clusters.json",
                             "checkpoint.json", "metrics.csv"}) {
        CAPTURE(name);
        CHECK(fs::exists(fx.root / "model" / name));
    }
    std::string metrics = slurp(fx.root / "model" / "metrics.csv");
    CHECK(metrics.rfind("epoch,loss,val_auc\n", 0) == 0);
}

TEST_CASE("training twice with one manifest is byte-identical") {
    CliFixture fx;
    REQUIRE(fx.synth_small(fx.dir("data")) == 0);
    std::string dataset = (fx.root / "data" / "dataset.csv").string();
    REQUIRE(fx.train_small(dataset, fx.dir("m1")) == 0);
    REQUIRE(fx.train_small(dataset, fx.dir("m2")) == 0);
    CHECK(slurp(fx.root / "m1" / "metrics.csv") == slurp(fx.root / "m2" / "metrics.csv"));
    CHECK(slurp(fx.root / "m1" / "checkpoint.json") == slurp(fx.root / "m2" / "checkpoint.json"));
}

TEST_CASE("eval, predict, explain, trace, and cluster-report run against a model dir") {
    CliFixture fx;
    REQUIRE(fx.synth_small(fx.dir("data")) == 0);
    std::string dataset = (fx.root / "data" / "dataset.csv").string();
    REQUIRE(fx.train_small(dataset, fx.dir("model")) == 0);
    std::string model = fx.dir("model");

    CHECK(run_command({"eval", "--model-dir", model, "--split", "test", "--out", fx.dir("eval")}) ==
          0);
    CHECK(fs::exists(fx.root / "eval" / "eval.json"));

    // any student present in the dataset works; synthetic ids are s0000..
    CHECK(run_command({"predict", "--model-dir", model, "--student", "s0000", "--out",
                       fx.dir("pred")}) == 0);
    CHECK(fs::exists(fx.root / "pred" / "predictions.csv"));

    CHECK(run_command({"explain", "--model-dir", model, "--student", "s0000", "--target", "0",
                       "--out", fx.dir("exp")}) == 0);
    CHECK(fs::exists(fx.root / "exp" / "path.json"));

    CHECK(run_command({"trace", "--model-dir", model, "--student", "s0000", "--svg", "--out",
                       fx.dir("trace")}) == 0);
    CHECK(fs::exists(fx.root / "trace" / "trace.csv"));
    CHECK(fs::exists(fx.root / "trace" / "trace.svg"));
    CHECK(fs::exists(fx.root / "trace" / "ability.csv"));

    CHECK(run_command({"cluster-report", "--model-dir", model, "--out", fx.dir("rep")}) == 0);
    CHECK(fs::exists(fx.root / "rep" / "report_clusters.csv"));
    CHECK(fs::exists(fx.root / "rep" / "report_migrations.csv"));
}

TEST_CASE("a conflicting --mode on eval is rejected") {
    CliFixture fx;
    REQUIRE(fx.synth_small(fx.dir("data")) == 0);
    std::string dataset = (fx.root / "data" / "dataset.csv").string();
    REQUIRE(fx.train_small(dataset, fx.dir("model")) == 0);
    CHECK(run_command({"eval", "--model-dir", fx.dir("model"), "--mode", "dkt"}) != 0);
    CHECK(run_command({"eval", "--model-dir", fx.dir("model"), "--mode", "aa-dkta"}) == 0);
}

TEST_CASE("eval with a missing checkpoint names the path") {
    CliFixture fx;
    fs::create_directories(fx.root / "empty_model");
    {
        std::ofstream manifest(fx.root / "empty_model" / "manifest.json");
        manifest << "{\"schema_version\":1,\"config\":{}}\n";
    }
    CHECK(run_command({"eval", "--model-dir", fx.dir("empty_model"), "--dataset", "nowhere.csv"}) !=
          0);
}

TEST_CASE("sweep-k emits one row per K") {
    CliFixture fx;
    REQUIRE(fx.synth_small(fx.dir("data")) == 0);
    std::string dataset = (fx.root / "data" / "dataset.csv").string();
    REQUIRE(run_command({"sweep-k", "--dataset", dataset, "--out", fx.dir("sweep"), "--k-list",
                         "2,3", "--epochs", "1", "--seed", "5"}) == 0);
    std::string csv = slurp(fx.root / "sweep" / "sweep.csv");
    CHECK(csv.rfind("k,auc,auc_std\n", 0) == 0);
    CHECK(csv.find("\n2,") != std::string::npos);
    CHECK(csv.find("\n3,") != std::string::npos);
}

TEST_CASE("unknown config keys are named in the error") {
    CliFixture fx;
    fs::path config = fx.root / "bad.json";
    {
        std::ofstream out(config);
        out << "{\"learning_rat\": 0.1}\n";
    }
    REQUIRE(fx.synth_small(fx.dir("data")) == 0);
    std::string dataset = (fx.root / "data" / "dataset.csv").string();
    CHECK(run_command({"train", "--dataset", dataset, "--out", fx.dir("bad_model"), "--config",
                       config.string()}) != 0);
}

TEST_CASE("config file values apply and flags win over them") {
    CliFixture fx;
    fs::path config = fx.root / "config.json";
    {
        std::ofstream out(config);
        out << "{\"epochs\": 1, \"d_k\": 6, \"d_h\": 10, \"mode\": \"dkt\"}\n";
    }
    REQUIRE(fx.synth_small(fx.dir("data")) == 0);
    std::string dataset = (fx.root / "data" / "dataset.csv").string();
    REQUIRE(run_command({"train", "--dataset", dataset, "--out", fx.dir("model"), "--config",
                         config.string(), "--mode", "aa-dkt", "--seed", "5"}) == 0);
    ModelParams params = load_checkpoint((fx.root / "model" / "checkpoint.json").string());
    CHECK(params.mode == Mode::aa_dkt);  // flag overrode the config file
    CHECK(params.dims.d_k == 6);         // config file applied
}
