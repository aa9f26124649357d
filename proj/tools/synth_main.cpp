#include <CLI11.hpp>
#include <iostream>

#include "was/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate a synthetic 10-class dataset in CIFAR-10 binary layout"};
    std::string out_dir = "synth-cifar10";
    int64_t train_per_class = 500;
    int64_t test_per_class = 100;
    uint64_t seed = 1;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--train-per-class", train_per_class, "train images per class");
    app.add_option("--test-per-class", test_per_class, "test images per class");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    was::synth::write_synthetic_cifar10(out_dir, train_per_class, test_per_class, seed);
    std::cout << "wrote " << train_per_class * 10 << " train / " << test_per_class * 10
              << " test records to " << out_dir << "\n";
    return 0;
}
