#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "commands.hpp"
#include "freqguide/errors.hpp"

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kVocabulary = 4, kNotAvailable = 5 };

}  // namespace

int main(int argc, char** argv) {
    using namespace freqguide;
    CLI::App cli{"Pair finetuning, stepwise prompting and Fourier-guided sampling on a synthetic sprite benchmark"};
    cli.require_subcommand(1);

    std::optional<std::string> config_file;
    cli.add_option("--config", config_file, "flat key = value config file");

    std::map<std::string, std::string> flags;
    for (const auto& key : app::RunConfig::keys()) {
        cli.add_option_function<std::string>(
               "--" + app::flag_name(key), [&flags, key](const std::string& v) { flags[key] = v; },
               app::RunConfig::help(key))
            ->option_text("VALUE");
    }

    auto* gen = cli.add_subcommand("gen-dataset", "render the benchmark triples and the base training set");
    auto* train = cli.add_subcommand("train-base", "train (or resume) the base denoiser");
    auto* transfer = cli.add_subcommand("transfer", "finetune on one pair and sample the transferred image");
    auto* evaluate = cli.add_subcommand("evaluate", "run the ablation grid and write the report");
    auto* show = cli.add_subcommand("show-config", "print the effective configuration");
    for (auto* sub : {gen, train, transfer, evaluate, show}) sub->fallthrough();

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return cli.exit(e) == 0 ? kOk : kConfig;
    }

    try {
        app::RunConfig cfg;
        if (config_file) cfg.apply_file(*config_file);
        cfg.apply_environment();
        for (const auto& [key, value] : flags) cfg.set(key, value);

        if (*gen) {
            std::cout << app::cmd_gen_dataset(cfg, std::cout).string() << "\n";
        } else if (*train) {
            std::cout << app::cmd_train_base(cfg, std::cout).string() << "\n";
        } else if (*transfer) {
            std::cout << app::cmd_transfer(cfg, std::cout).string() << "\n";
        } else if (*evaluate) {
            std::cout << app::cmd_evaluate(cfg, std::cout).string() << "\n";
        } else if (*show) {
            cfg.validate();
            for (const auto& [key, value] : cfg.to_map()) std::cout << key << " = " << value << "\n";
        }
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const VocabularyError& e) {
        std::cerr << "vocabulary error: " << e.what() << "\n";
        return kVocabulary;
    } catch (const NotAvailableError& e) {
        std::cerr << "not available: " << e.what() << "\n";
        return kNotAvailable;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}
