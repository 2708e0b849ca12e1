#include "ptycho/cli.hpp"

#include <CLI11.hpp>

#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"ptycho-latent: ptychography simulation and latent-space reconstruction"};
    app.require_subcommand(1);

    struct Common {
        std::vector<std::string> configs;
        std::vector<std::string> sets;
        std::string out;
        bool force = false;
    };

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "synthesize a diffraction stack bundle from a ground-truth image"},
        {"train-ae", "train the autoencoder on IDX data and write the weights archive"},
        {"reconstruct", "recover an object from a stack bundle (conventional or latent mode)"},
        {"sweep", "photon-count sweep: simulate + reconstruct in both modes, PSNR per point"},
        {"landscape", "loss-landscape grid around a converged latent solution"},
        {"make-dataset", "synthesize an MNIST-format IDX dataset from the bundled glyph corpus"},
    };

    std::map<std::string, Common> opts;
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        Common& c = opts[name];
        sub->add_option("--config", c.configs, "key=value config file (repeatable)")
            ->check(CLI::ExistingFile);
        sub->add_option("--set", c.sets, "override a config key, e.g. --set photons=1e6");
        sub->add_option("--out", c.out, "output directory")->required();
        sub->add_flag("--force", c.force, "allow writing into a non-empty output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    const Common& c = opts[name];
    return ptycho::cli::run_command(name, c.configs, c.sets, c.out, c.force);
}
