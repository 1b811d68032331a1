#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "lsplab/classifier.hpp"
#include "lsplab/dataset.hpp"
#include "lsplab/idx.hpp"
#include "lsplab/metrics.hpp"
#include "lsplab/rng.hpp"

using namespace lsplab;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lsplab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("rng is deterministic and splits into independent streams") {
    Rng a(RngSeed{42}), b(RngSeed{42});
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(RngSeed{42});
    Rng s1 = c.split(1), s2 = c.split(2);
    CHECK(s1.next_u64() != s2.next_u64());

    // split is independent of how much the parent has been consumed
    Rng d(RngSeed{42});
    d.next_u64();
    CHECK(d.split(1).next_u64() == Rng(RngSeed{42}).split(1).next_u64());
}

TEST_CASE("rng uniform and normal ranges") {
    Rng rng(7);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(sum / 10000.0 == doctest::Approx(0.5).epsilon(0.05));

    double nsum = 0.0, nsq = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double n = rng.normal();
        nsum += n;
        nsq += n * n;
    }
    CHECK(nsum / 10000.0 == doctest::Approx(0.0).epsilon(0.05));
    CHECK(nsq / 10000.0 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("tensor and label invariants") {
    CHECK_THROWS_AS(ImageTensor(0, 4, 1), std::invalid_argument);
    ImageTensor img(2, 3, 1, 0.5);
    CHECK(img.size() == 6);
    validate(img);
    img.data[0] = 1.5;
    CHECK_THROWS_AS(validate(img), std::invalid_argument);

    SoftLabel one_hot = SoftLabel::one_hot(4, 2);
    CHECK(one_hot.argmax() == 2);
    validate(one_hot);
    CHECK_THROWS_AS(SoftLabel({0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(SoftLabel({-0.1, 1.1}), std::invalid_argument);
}

TEST_CASE("split_for_poisoning sizes match the configured fraction") {
    auto data = generate_synthetic_dataset(10, 10, 8, 8, RngSeed{1});
    REQUIRE(data.size() == 100);

    auto [ben, poi] = split_for_poisoning(data, 0.10, RngSeed{3});
    CHECK(ben.size() == 90);
    CHECK(poi.size() == 10);

    auto [ben0, poi0] = split_for_poisoning(data, 0.0, RngSeed{3});
    CHECK(ben0.size() == 100);
    CHECK(poi0.size() == 0);

    CHECK_THROWS_AS(split_for_poisoning(data, 1.0, RngSeed{3}),
                    std::invalid_argument);
    CHECK_THROWS_AS(split_for_poisoning(data, -0.1, RngSeed{3}),
                    std::invalid_argument);
}

TEST_CASE("split_for_poisoning handles a 50% split of a large dataset") {
    LabeledDataset data;
    data.num_classes = 10;
    for (int i = 0; i < 40000; ++i)
        data.samples.push_back(
            {ImageTensor(2, 2, 1, 0.1), SoftLabel::one_hot(10, i % 10)});
    auto [ben, poi] = split_for_poisoning(data, 0.5, RngSeed{9});
    CHECK(ben.size() == 20000);
    CHECK(poi.size() == 20000);
}

TEST_CASE("split_for_poisoning is a stratified partition") {
    auto data = generate_synthetic_dataset(5, 37, 8, 8, RngSeed{11});
    for (double fraction : {0.1, 0.25, 0.37, 0.8}) {
        auto [ben, poi] = split_for_poisoning(data, fraction, RngSeed{5});
        CHECK(ben.size() + poi.size() == data.size());
        CHECK(poi.size() ==
              static_cast<std::size_t>(std::floor(data.size() * fraction)));

        // multiset union equals the input (compare sorted image payloads)
        auto key = [](const std::pair<ImageTensor, SoftLabel>& s) {
            return std::make_pair(s.second.argmax(), s.first.data);
        };
        std::vector<std::pair<int, std::vector<double>>> before, after;
        for (const auto& s : data.samples) before.push_back(key(s));
        for (const auto& s : ben.samples) after.push_back(key(s));
        for (const auto& s : poi.samples) after.push_back(key(s));
        std::sort(before.begin(), before.end());
        std::sort(after.begin(), after.end());
        CHECK(before == after);

        // class proportions within one sample per class
        std::vector<int> total(5, 0), poisoned(5, 0);
        for (const auto& s : data.samples) ++total[s.second.argmax()];
        for (const auto& s : poi.samples) ++poisoned[s.second.argmax()];
        for (int c = 0; c < 5; ++c) {
            const double exact = total[c] * fraction;
            CHECK(poisoned[c] >= static_cast<int>(std::floor(exact)) - 1);
            CHECK(poisoned[c] <= static_cast<int>(std::ceil(exact)) + 1);
        }
    }
}

TEST_CASE("synthetic dataset is deterministic and well formed") {
    auto a = generate_synthetic_dataset(10, 100, 16, 16, RngSeed{21});
    auto b = generate_synthetic_dataset(10, 100, 16, 16, RngSeed{21});
    REQUIRE(a.size() == 1000);
    CHECK(a.num_classes == 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.image(i).data == b.image(i).data);  // bit identical
        CHECK(a.label(i).probs == b.label(i).probs);
        double sum = 0.0;
        for (double p : a.label(i).probs) sum += p;
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
    auto c = generate_synthetic_dataset(10, 2, 16, 16, RngSeed{22});
    CHECK(c.image(0).data != a.image(0).data);

    CHECK_THROWS_AS(generate_synthetic_dataset(1, 10, 8, 8, RngSeed{0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_synthetic_dataset(4, 0, 8, 8, RngSeed{0}),
                    std::invalid_argument);
}

TEST_CASE("a small cnn separates the synthetic classes") {
    auto train_set = generate_synthetic_dataset(2, 500, 12, 12, RngSeed{31});
    auto test_set = generate_synthetic_dataset(2, 150, 12, 12, RngSeed{32});

    Classifier model({12, 12, 1}, 2, arch_preset("tiny", 2), RngSeed{7});
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 32;
    tc.seed = RngSeed{8};
    Classifier trained = train(model, train_set, tc);
    CHECK(benign_accuracy(trained, test_set) >= 0.95);
}

TEST_CASE("dataset directory round trip") {
    auto dir = temp_dir("dataset_io");
    auto data = generate_synthetic_dataset(3, 4, 8, 8, RngSeed{5});
    data.split_tag = SplitTag::test;
    save_dataset(data, dir, 5);
    auto loaded = load_dataset(dir);
    REQUIRE(loaded.size() == data.size());
    CHECK(loaded.num_classes == 3);
    CHECK(loaded.split_tag == SplitTag::test);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(loaded.image(i).height == 8);
        // float32 storage: equal to within one float ulp
        for (std::size_t j = 0; j < data.image(i).data.size(); ++j)
            CHECK(loaded.image(i).data[j] ==
                  doctest::Approx(data.image(i).data[j]).epsilon(1e-6));
        CHECK(loaded.label(i).argmax() == data.label(i).argmax());
    }
}

namespace {

void write_be_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_idx_pair(const std::filesystem::path& images,
                    const std::filesystem::path& labels, int count, int rows,
                    int cols, int label_count) {
    std::ofstream img(images, std::ios::binary);
    write_be_u32(img, 0x00000803);
    write_be_u32(img, static_cast<std::uint32_t>(count));
    write_be_u32(img, static_cast<std::uint32_t>(rows));
    write_be_u32(img, static_cast<std::uint32_t>(cols));
    for (int i = 0; i < count * rows * cols; ++i) {
        unsigned char b = static_cast<unsigned char>(i % 256);
        img.write(reinterpret_cast<const char*>(&b), 1);
    }
    std::ofstream lab(labels, std::ios::binary);
    write_be_u32(lab, 0x00000801);
    write_be_u32(lab, static_cast<std::uint32_t>(label_count));
    for (int i = 0; i < label_count; ++i) {
        unsigned char b = static_cast<unsigned char>(i % 3);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

}  // namespace

TEST_CASE("idx loader reads mnist-layout files") {
    auto dir = temp_dir("idx");
    write_idx_pair(dir / "img", dir / "lab", 15, 4, 5, 15);
    auto data = load_idx_dataset(dir / "img", dir / "lab");
    REQUIRE(data.size() == 15);
    CHECK(data.image(0).height == 4);
    CHECK(data.image(0).width == 5);
    CHECK(data.image(0).data.size() == 20);
    CHECK(data.num_classes == 3);
    // pixel bytes run 0..255 cyclically, so byte 255 appears and must scale
    // to exactly 1.0
    bool saw_255 = false;
    for (std::size_t i = 0; i < data.size(); ++i)
        for (double v : data.image(i).data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            if (v == 1.0) saw_255 = true;
        }
    CHECK(saw_255);
}

TEST_CASE("idx loader names the offending field") {
    auto dir = temp_dir("idx_bad");
    write_idx_pair(dir / "img", dir / "lab", 10, 3, 3, 9);  // count mismatch
    CHECK_THROWS_WITH_AS(load_idx_dataset(dir / "img", dir / "lab"),
                         doctest::Contains("count mismatch"), std::runtime_error);

    {
        std::ofstream img(dir / "img2", std::ios::binary);
        write_be_u32(img, 0x00000777);  // wrong magic
    }
    write_idx_pair(dir / "img3", dir / "lab3", 2, 3, 3, 2);
    CHECK_THROWS_WITH_AS(load_idx_dataset(dir / "img2", dir / "lab3"),
                         doctest::Contains("magic"), std::runtime_error);

    {
        std::ofstream img(dir / "img4", std::ios::binary);
        write_be_u32(img, 0x00000803);
        write_be_u32(img, 5);  // then truncated
    }
    CHECK_THROWS_WITH_AS(load_idx_dataset(dir / "img4", dir / "lab3"),
                         doctest::Contains("truncated"), std::runtime_error);
}
