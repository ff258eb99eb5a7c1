#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dems/train.hpp"

using namespace dems;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dems_train_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path tiny_dataset(const std::string& name, int n, std::uint64_t seed = 5,
                      double min_foreground = 0.01) {
    const auto dir = fresh_dir(name);
    SynthParams params;
    params.height = params.width = 64;
    params.min_foreground = min_foreground;
    synth_generate(dir, n, seed, params);
    return dir;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!fields.empty()) rows.push_back(fields);
    }
    return rows;
}

TrainConfig tiny_config() {
    TrainConfig config;
    config.batch_size = 4;
    config.max_iterations = 8;
    config.lambda_update_period = 4;
    config.labeled_fraction = 0.34;
    config.base_channels = 4;
    config.input_size = 32;
    config.val_interval = 4;
    config.seed = 11;
    return config;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("cosine learning-rate schedule endpoints") {
    TrainConfig config;
    config.max_iterations = 2000;
    CHECK(lr_schedule(0, config) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_schedule(2000, config) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lr_schedule(1000, config) == doctest::Approx(0.005).epsilon(1e-9));
    CHECK_THROWS_AS(lr_schedule(-1, config), std::invalid_argument);
    CHECK_THROWS_AS(lr_schedule(2001, config), std::invalid_argument);
}

TEST_CASE("config validation rejects bad settings") {
    TrainConfig config;
    CHECK_NOTHROW(config.validate());
    auto bad = config;
    bad.batch_size = 7;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = config;
    bad.max_iterations = 100;
    bad.lambda_update_period = 150;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = config;
    bad.oaa_level = 6;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = config;
    bad.input_size = 100;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = config;
    bad.labeled_fraction = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("epoch sampler sees every element twice before any third visit") {
    EpochSampler sampler({0, 1, 2, 3});
    RandomStream rng(3);
    std::map<int, int> counts;
    for (int i = 0; i < 8; ++i) counts[sampler.next(rng)]++;
    for (const auto& [idx, count] : counts) CHECK(count == 2);
    for (int i = 0; i < 4; ++i) counts[sampler.next(rng)]++;
    for (const auto& [idx, count] : counts) CHECK(count == 3);
}

TEST_CASE("tiny run writes every artifact and a plateaued lambda") {
    const auto data = tiny_dataset("artifacts", 12);
    const auto out = fresh_dir("artifacts_out");
    const auto result = train(tiny_config(), data, out);

    CHECK(fs::exists(result.split_record));
    CHECK(fs::exists(result.loss_log));
    CHECK(fs::exists(result.val_log));
    CHECK(fs::exists(result.best_checkpoint));
    CHECK(fs::exists(result.final_checkpoint));
    CHECK(fs::exists(out / "manifest.txt"));
    CHECK(result.best_val_dsc >= 0.0);

    const auto rows = read_csv(result.loss_log);
    REQUIRE(rows.size() == 9);  // header + 8 iterations
    CHECK(rows[0][0] == "iteration");
    CHECK(rows[0][1] == "lambda");

    // lambda constant within each 4-iteration window and nondecreasing across.
    const double lam0 = std::stod(rows[1][1]);
    for (int i = 1; i <= 4; ++i) CHECK(std::stod(rows[i][1]) == lam0);
    const double lam1 = std::stod(rows[5][1]);
    for (int i = 5; i <= 8; ++i) CHECK(std::stod(rows[i][1]) == lam1);
    CHECK(lam1 >= lam0);
    // t_max = 8/4 = 2: first window t=0 -> e^-5, second t=1.
    CHECK(lam0 == doctest::Approx(std::exp(-5.0)).epsilon(1e-6));
    CHECK(lam1 == doctest::Approx(std::exp(-5.0 * 0.25)).epsilon(1e-6));

    // every logged quantity is finite and the total splits per Eq. 5
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double lambda = std::stod(rows[i][1]);
        const double fusion = std::stod(rows[i][2]);
        const double soft = std::stod(rows[i][3]);
        const double unsup = std::stod(rows[i][5]);
        const double total = std::stod(rows[i][6]);
        CHECK(std::isfinite(total));
        CHECK(total == doctest::Approx(fusion + lambda * (soft + unsup)).epsilon(1e-4));
        CHECK(total >= fusion - 1e-9);
    }
}

TEST_CASE("identical config and seed reproduce split and losses") {
    const auto data = tiny_dataset("repro", 12);
    const auto out_a = fresh_dir("repro_a");
    const auto out_b = fresh_dir("repro_b");
    const auto config = tiny_config();
    train(config, data, out_a);
    train(config, data, out_b);

    std::ifstream split_a(out_a / "split.txt"), split_b(out_b / "split.txt");
    const std::string text_a((std::istreambuf_iterator<char>(split_a)),
                             std::istreambuf_iterator<char>());
    const std::string text_b((std::istreambuf_iterator<char>(split_b)),
                             std::istreambuf_iterator<char>());
    CHECK(text_a == text_b);

    const auto rows_a = read_csv(out_a / "losses.csv");
    const auto rows_b = read_csv(out_b / "losses.csv");
    REQUIRE(rows_a.size() == rows_b.size());
    for (std::size_t i = 1; i < rows_a.size(); ++i) {
        CHECK(std::abs(std::stod(rows_a[i][6]) - std::stod(rows_b[i][6])) < 1e-6);
    }
}

TEST_CASE("supervised-only ablation trains on labeled batches only") {
    const auto data = tiny_dataset("supervised", 12);
    const auto out = fresh_dir("supervised_out");
    auto config = tiny_config();
    config.toggles = {false, false, false, false};
    const auto result = train(config, data, out);
    CHECK(fs::exists(result.final_checkpoint));

    const auto rows = read_csv(result.loss_log);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(std::stod(rows[i][5]) == 0.0);  // unsupervised column
    }
}

TEST_CASE("evaluation is deterministic and guards against misuse") {
    const auto data = tiny_dataset("eval", 12);
    const auto out = fresh_dir("eval_out");
    const auto result = train(tiny_config(), data, out);

    const auto a = evaluate(result.best_checkpoint, data, EvalSubset::Val, result.split_record);
    const auto b = evaluate(result.best_checkpoint, data, EvalSubset::Val, result.split_record);
    REQUIRE(a.per_image.size() == b.per_image.size());
    for (std::size_t i = 0; i < a.per_image.size(); ++i) {
        CHECK(a.per_image[i].dsc == b.per_image[i].dsc);
        CHECK(a.per_image[i].id == b.per_image[i].id);
    }

    // External evaluation on the training root shares every identifier.
    CHECK_THROWS_AS(
        evaluate(result.best_checkpoint, data, EvalSubset::External, result.split_record),
        std::runtime_error);

    // Input-size expectation mismatch.
    CHECK_THROWS_AS(
        evaluate(result.best_checkpoint, data, EvalSubset::Val, result.split_record, 224),
        std::invalid_argument);

    // Subsets that need a split record refuse to run without one.
    CHECK_THROWS_AS(evaluate(result.best_checkpoint, data, EvalSubset::Val),
                    std::invalid_argument);

    // predict_masks pairs line up with the val subset size.
    const auto pairs =
        predict_masks(result.best_checkpoint, data, EvalSubset::Val, result.split_record);
    CHECK(pairs.size() == a.per_image.size());
}

TEST_CASE("a deliberately overfit run memorizes its training images") {
    const auto data = tiny_dataset("overfit", 10, 21, 0.05);
    const auto out = fresh_dir("overfit_out");
    TrainConfig config;
    config.batch_size = 4;
    config.max_iterations = 300;
    config.lambda_update_period = 100;
    config.labeled_fraction = 1.0;
    config.oaa_level = 1;  // near-clean supervision
    config.toggles = {true, false, false, false};
    config.base_channels = 8;
    config.input_size = 64;
    config.val_interval = 100;
    config.seed = 2;
    const auto result = train(config, data, out);

    const auto report =
        evaluate(result.final_checkpoint, data, EvalSubset::Train, result.split_record);
    CHECK(report.mean.dsc > 0.95);
}

}  // TEST_SUITE
