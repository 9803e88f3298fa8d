#include <doctest.h>

#include <fstream>

#include "lnc/checkpoint.hpp"
#include "support.hpp"

using namespace lnc;
using lnc::testing::TempDir;

namespace {

nn::Batch random_input(const nn::Model& m, int b, uint64_t seed) {
    nn::Batch in;
    in.b = b;
    in.c = m.in_c;
    in.h = m.in_h;
    in.w = m.in_w;
    in.data.resize(static_cast<size_t>(b) * in.sample_size());
    std::mt19937_64 rng(seed);
    for (auto& v : in.data) v = static_cast<float>(uniform01(rng));
    return in;
}

}  // namespace

TEST_CASE("checkpoint save/load round trip") {
    TempDir dir("ckpt");
    nn::Model m = nn::build_classifier_net(16, 16);
    nn::init_params(m, 12);
    TrainingMeta meta{3, 0.125, 0.25, 99};
    ModelCheckpoint ckpt = checkpoint_from_model(m, meta);
    save_checkpoint(ckpt, dir.path / "m.ckpt");
    ModelCheckpoint back = load_checkpoint(dir.path / "m.ckpt");

    SUBCASE("tensors are bit-identical") {
        REQUIRE(back.tensors.size() == ckpt.tensors.size());
        for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
            CHECK(back.tensors[i].name == ckpt.tensors[i].name);
            CHECK(back.tensors[i].shape == ckpt.tensors[i].shape);
            CHECK(back.tensors[i].values == ckpt.tensors[i].values);
        }
        CHECK(back.arch_id == m.arch_id);
        CHECK(back.meta.epochs == 3);
        CHECK(back.meta.seed == 99);
    }
    SUBCASE("forward outputs equal pre-save outputs on 10 random inputs") {
        nn::Model reloaded = model_from_checkpoint(back);
        for (int trial = 0; trial < 10; ++trial) {
            nn::Batch in = random_input(m, 1, 300 + trial);
            nn::Batch a = nn::forward(m, in);
            nn::Batch b = nn::forward(reloaded, in);
            CHECK(a.data == b.data);
        }
    }
    SUBCASE("conv tensors carry [c_out, c_in, k, k] shapes") {
        CHECK(back.tensors[0].name == "conv1.w");
        CHECK(back.tensors[0].shape == std::vector<int64_t>{8, 2, 3, 3});
        CHECK(back.tensors[1].shape == std::vector<int64_t>{8});
    }
}

TEST_CASE("checkpoint corruption and mismatch errors") {
    TempDir dir("ckpt_bad");
    nn::Model m = nn::build_classifier_net(16, 16);
    nn::init_params(m, 13);
    ModelCheckpoint ckpt = checkpoint_from_model(m, {});
    save_checkpoint(ckpt, dir.path / "m.ckpt");

    SUBCASE("truncated blob fails the digest check") {
        auto blob = dir.path / "m.ckpt.bin";
        std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 4);
        CHECK_THROWS_WITH_AS(load_checkpoint(dir.path / "m.ckpt"),
                             doctest::Contains("digest mismatch"), std::runtime_error);
    }
    SUBCASE("corrupted blob fails the digest check") {
        std::fstream f(dir.path / "m.ckpt.bin",
                       std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(10);
        char x = 0x5a;
        f.write(&x, 1);
        f.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(dir.path / "m.ckpt"),
                             doctest::Contains("digest mismatch"), std::runtime_error);
    }
    SUBCASE("unknown arch id is rejected when rebuilding") {
        ModelCheckpoint bad = ckpt;
        bad.arch_id = "mystery_net";
        CHECK_THROWS_WITH_AS(model_from_checkpoint(bad), doctest::Contains("unknown arch"),
                             std::runtime_error);
    }
}

TEST_CASE("transfer_weights") {
    nn::Model src = nn::build_segmentation_net(16, 16);
    nn::init_params(src, 21);
    ModelCheckpoint ckpt = checkpoint_from_model(src, {});

    SUBCASE("two independently constructed instances agree within 0 ulp") {
        nn::Model a = nn::build_segmentation_net(16, 16);
        nn::Model b = nn::build_segmentation_net(16, 16);
        nn::init_params(a, 1);  // different starting points
        nn::init_params(b, 2);
        transfer_weights(ckpt, a);
        transfer_weights(ckpt, b);
        nn::Batch in = random_input(src, 2, 5);
        nn::Batch ya = nn::forward(a, in);
        nn::Batch yb = nn::forward(b, in);
        nn::Batch ys = nn::forward(src, in);
        CHECK(ya.data == yb.data);
        CHECK(ya.data == ys.data);
    }
    SUBCASE("missing tensor is reported by name") {
        ModelCheckpoint missing = ckpt;
        missing.tensors.erase(missing.tensors.begin() + 4);  // enc3_conv.w
        nn::Model target = nn::build_segmentation_net(16, 16);
        CHECK_THROWS_WITH_AS(transfer_weights(missing, target),
                             doctest::Contains("enc3_conv.w"), std::runtime_error);
    }
    SUBCASE("shape mismatch is reported by name") {
        nn::Model wrong_size = nn::build_segmentation_net(32, 32);
        CHECK_NOTHROW(transfer_weights(ckpt, wrong_size));  // convs are size-agnostic

        ModelCheckpoint clipped = ckpt;
        clipped.tensors[0].values.pop_back();
        clipped.tensors[0].shape = {63, 1, 3, 3};
        nn::Model target = nn::build_segmentation_net(16, 16);
        CHECK_THROWS_WITH_AS(transfer_weights(clipped, target),
                             doctest::Contains("enc1_conv.w"), std::runtime_error);
    }
    SUBCASE("extra tensors are rejected") {
        ModelCheckpoint extra = ckpt;
        extra.tensors.push_back({"ghost.w", {1}, {0.f}});
        nn::Model target = nn::build_segmentation_net(16, 16);
        CHECK_THROWS(transfer_weights(extra, target));
    }
}
