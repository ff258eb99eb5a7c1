#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dems/data.hpp"

using namespace dems;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dems_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DatasetManifest fake_manifest(std::size_t n) {
    DatasetManifest manifest;
    manifest.target_height = manifest.target_width = 32;
    for (std::size_t i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "id_%04zu", i);
        manifest.entries.push_back({"", "", buf});
    }
    return manifest;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("synthetic generation is deterministic and in range") {
    SynthParams params;
    params.height = params.width = 64;
    const auto dir_a = fresh_dir("synth_a");
    const auto dir_b = fresh_dir("synth_b");
    synth_generate(dir_a, 8, 77, params);
    synth_generate(dir_b, 8, 77, params);

    const double area = 64.0 * 64.0;
    for (int i = 0; i < 8; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%05d.png", i);
        CHECK(read_bytes(dir_a / "images" / name) == read_bytes(dir_b / "images" / name));
        CHECK(read_bytes(dir_a / "masks" / name) == read_bytes(dir_b / "masks" / name));

        const auto mask = read_mask_8bit(dir_a / "masks" / name);
        const double fraction = static_cast<double>(mask.foreground_count()) / area;
        CHECK(fraction >= 0.01);
        CHECK(fraction <= 0.20);
    }
}

TEST_CASE("loading a synthetic dataset round-trips binary masks") {
    SynthParams params;
    params.height = params.width = 64;
    const auto dir = fresh_dir("synth_load");
    synth_generate(dir, 10, 3, params);

    const auto dataset = load_dataset(dir, 64, 64);
    CHECK(dataset.samples.size() == 10);
    CHECK(dataset.manifest.entries.size() == 10);
    for (std::size_t i = 1; i < dataset.manifest.entries.size(); ++i) {
        CHECK(dataset.manifest.entries[i - 1].id < dataset.manifest.entries[i].id);
    }
    for (const auto& sample : dataset.samples) {
        REQUIRE(sample.mask.has_value());
        CHECK(sample.mask->foreground_count() > 0);
        for (auto v : sample.mask->data) CHECK(v <= 1);
        for (float v : sample.image.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("resizing a non-square input keeps masks binary") {
    const auto dir = fresh_dir("resize");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    Image img(300, 400, 0.25f);
    Mask mask(300, 400);
    for (int r = 100; r < 200; ++r) {
        for (int c = 120; c < 260; ++c) mask.at(r, c) = 1;
    }
    write_image_8bit(dir / "images" / "a.png", img);
    write_mask_8bit(dir / "masks" / "a.png", mask);

    const auto dataset = load_dataset(dir, 224, 224);
    REQUIRE(dataset.samples.size() == 1);
    const auto& loaded = *dataset.samples[0].mask;
    CHECK(loaded.height == 224);
    CHECK(loaded.width == 224);
    std::set<std::uint8_t> values(loaded.data.begin(), loaded.data.end());
    for (auto v : values) CHECK(v <= 1);
    CHECK(loaded.foreground_count() > 0);
}

TEST_CASE("load errors: missing mask and empty directory") {
    const auto dir = fresh_dir("missing_mask");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    write_image_8bit(dir / "images" / "a.png", Image(16, 16, 0.5f));
    CHECK_THROWS_AS(load_dataset(dir, 16, 16), std::runtime_error);

    const auto empty = fresh_dir("empty");
    fs::create_directories(empty / "images");
    fs::create_directories(empty / "masks");
    CHECK_THROWS_AS(load_dataset(empty, 16, 16), std::runtime_error);
}

TEST_CASE("unreadable image files are reported") {
    const auto dir = fresh_dir("garbage");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    std::ofstream(dir / "images" / "a.png") << "not a png";
    std::ofstream(dir / "masks" / "a.png") << "not a png";
    CHECK_THROWS_AS(load_dataset(dir, 16, 16), std::runtime_error);
}

TEST_CASE("split honors the 7:3 ratio and labeled rounding") {
    const auto ten = split(fake_manifest(10), 1, 0.5);
    CHECK(ten.train_ids.size() == 7);
    CHECK(ten.val_ids.size() == 3);

    // 154 entries at 20% labeled: 108 train, 22 labeled.
    const auto bus = split(fake_manifest(154), 9, 0.2);
    CHECK(bus.train_ids.size() == 108);
    CHECK(bus.val_ids.size() == 46);
    CHECK(bus.labeled_ids.size() == 22);
}

TEST_CASE("split is deterministic and disjoint") {
    const auto manifest = fake_manifest(50);
    const auto a = split(manifest, 1234, 0.2);
    const auto b = split(manifest, 1234, 0.2);
    CHECK(a.train_ids == b.train_ids);
    CHECK(a.val_ids == b.val_ids);
    CHECK(a.labeled_ids == b.labeled_ids);

    const auto c = split(manifest, 1235, 0.2);
    CHECK(a.train_ids != c.train_ids);

    std::set<std::string> train(a.train_ids.begin(), a.train_ids.end());
    for (const auto& id : a.val_ids) CHECK(train.count(id) == 0);
    for (const auto& id : a.labeled_ids) CHECK(train.count(id) == 1);
}

TEST_CASE("split counts match the closed-form rounding rule for n in 4..1000") {
    for (std::size_t n = 4; n <= 1000; ++n) {
        const auto spec = split(fake_manifest(n), 7, 0.2);
        const auto n_val = static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(n)));
        CHECK(spec.val_ids.size() == n_val);
        CHECK(spec.train_ids.size() == n - n_val);
        auto expected_labeled = static_cast<std::size_t>(
            std::floor(0.2 * static_cast<double>(n - n_val) + 0.5));
        expected_labeled = std::max<std::size_t>(expected_labeled, 1);
        CHECK(spec.labeled_ids.size() == expected_labeled);
    }
}

TEST_CASE("split input validation") {
    CHECK_THROWS_AS(split(fake_manifest(3), 1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(split(fake_manifest(10), 1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(split(fake_manifest(10), 1, 1.5), std::invalid_argument);
}

TEST_CASE("split record round-trips through disk") {
    const auto spec = split(fake_manifest(23), 99, 0.4);
    const auto path = fresh_dir("split") / "split.txt";
    save_split(path, spec);
    const auto loaded = load_split(path);
    CHECK(loaded.seed == spec.seed);
    CHECK(loaded.labeled_fraction == doctest::Approx(spec.labeled_fraction));
    CHECK(loaded.train_ids == spec.train_ids);
    CHECK(loaded.val_ids == spec.val_ids);
    CHECK(loaded.labeled_ids == spec.labeled_ids);
}

TEST_CASE("mask files with only 0 and 255 binarize losslessly") {
    const auto dir = fresh_dir("binary_mask");
    Mask mask(32, 32);
    for (int r = 4; r < 12; ++r) {
        for (int c = 6; c < 20; ++c) mask.at(r, c) = 1;
    }
    write_mask_8bit(dir / "m.png", mask);
    const auto loaded = read_mask_8bit(dir / "m.png");
    CHECK(loaded.data == mask.data);
}

}  // TEST_SUITE
