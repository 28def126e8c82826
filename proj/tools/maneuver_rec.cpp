// Command-line front end: synth | prepare | train | evaluate | predict.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 dimension/compatibility error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "maneuver/maneuver.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDimension = 4;

maneuver::PipelineConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
    maneuver::PipelineConfig cfg = path.empty() ? maneuver::PipelineConfig{} : maneuver::load_pipeline_config(path);
    if (seed) cfg.override_seed(*seed);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    namespace mp = maneuver::pipeline;

    CLI::App app{"Driving maneuver recognition pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data_dir;
    std::string dataset_dir;
    std::string model_path;
    std::string input = "-";
    std::string split = "test";

    auto* synth = app.add_subcommand("synth", "Generate synthetic driver recordings (CSV)");
    auto* prepare = app.add_subcommand("prepare", "Split, scale, window and rebalance recordings");
    auto* train = app.add_subcommand("train", "Fit the LSTM model on a prepared dataset");
    auto* evaluate = app.add_subcommand("evaluate", "Confusion, recall and precision reports");
    auto* predict = app.add_subcommand("predict", "Label a CSV stream with sliding-window predictions");

    for (auto* cmd : {synth, prepare, train}) {
        cmd->add_option("--config", config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "Seed override for every seeded stage");
        cmd->add_option("--out", out, "Output directory")->required();
    }
    prepare->add_option("--data", data_dir, "Directory of recording CSVs")->required();
    train->add_option("--dataset", dataset_dir, "Prepared dataset directory")->required();

    evaluate->add_option("--model", model_path, "Model file")->required();
    evaluate->add_option("--dataset", dataset_dir, "Prepared dataset directory")->required();
    evaluate->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"test", "train"}));
    evaluate->add_option("--out", out, "Output directory")->required();

    predict->add_option("--model", model_path, "Model file")->required();
    predict->add_option("--input", input, "Input CSV, '-' for stdin");
    predict->add_option("--out", out, "Output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*synth) {
            mp::cmd_synth(resolve_config(config_path, seed), out);
        } else if (*prepare) {
            mp::cmd_prepare(resolve_config(config_path, seed), data_dir, out);
        } else if (*train) {
            mp::cmd_train(resolve_config(config_path, seed), dataset_dir, out);
        } else if (*evaluate) {
            mp::cmd_evaluate(model_path, dataset_dir, out, split == "train" ? mp::SplitChoice::train : mp::SplitChoice::test);
        } else if (*predict) {
            std::ifstream file;
            std::istream* in = &std::cin;
            if (input != "-") {
                file.open(input, std::ios::binary);
                if (!file) throw maneuver::DataError("cannot open '" + input + "'");
                in = &file;
            }
            if (out.empty()) {
                mp::cmd_predict(model_path, *in, std::cout);
            } else {
                std::ofstream os(out, std::ios::binary);
                if (!os) throw maneuver::DataError("cannot write '" + out + "'");
                mp::cmd_predict(model_path, *in, os);
            }
        }
    } catch (const maneuver::ConfigError& e) {
        maneuver::log::error(e.what());
        return kExitConfig;
    } catch (const maneuver::DimensionError& e) {
        maneuver::log::error(e.what());
        return kExitDimension;
    } catch (const maneuver::DataError& e) {
        maneuver::log::error(e.what());
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        maneuver::log::error(e.what());
        return kExitData;
    }
    return 0;
}
