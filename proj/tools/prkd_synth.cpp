// Writes a procedural garment-like IDX dataset for machines without FashionMNIST.
#include "prkd/data.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic garment dataset in IDX format", "prkd-synth"};
    std::string out;
    std::int64_t train = 6000;
    std::int64_t test = 1000;
    std::uint64_t seed = 0;
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--train", train, "Images in the train file")->capture_default_str();
    app.add_option("--test", test, "Images in the t10k file")->capture_default_str();
    app.add_option("--seed", seed, "Generator seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    try {
        prkd::data::write_synthetic_dataset(out, train, test, seed);
    } catch (const std::exception& e) {
        std::cerr << "io-error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
