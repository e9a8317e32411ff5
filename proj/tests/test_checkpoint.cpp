#include <doctest.h>

#include <fstream>

#include "owslr/checkpoint.hpp"
#include "test_support.hpp"

using namespace owslr;

namespace {

RunConfig small_run() {
    return parse_config("num_blocks = 1\nD = 4\nmlp_hidden = 8\nepochs = 4\nmilestones = 2\ncrop = 12\n"
                        "points_per_image = 16\nbatch_images = 2\nseed = 5");
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
}

TrainingSession trained_session() {
    auto s = new_session(small_run());
    const std::vector<ImageBuffer> imgs{testing::texture(16, 16, 3, 1), testing::texture(14, 18, 3, 2)};
    run_epoch(s, imgs);
    return s;
}

} // namespace

TEST_CASE("save and load reproduce the session bit for bit") {
    testing::TempDir dir("ckpt");
    const auto s = trained_session();
    save_checkpoint(s, dir / "a.ckpt");
    const auto back = load_checkpoint(dir / "a.ckpt");

    CHECK(to_text(back.config) == to_text(s.config));
    CHECK(back.epoch == 1);
    CHECK(back.optimizer.t == s.optimizer.t);
    auto a = s.model.named_parameters();
    auto b = back.model.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK((a[i].second->data() == b[i].second->data()).all());
        CHECK((s.optimizer.m[i] == back.optimizer.m[i]).all());
        CHECK((s.optimizer.v[i] == back.optimizer.v[i]).all());
    }
    auto rng_a = s.rng;
    auto rng_b = back.rng;
    CHECK(rng_a() == rng_b());

    // saving the loaded session gives the same bytes
    save_checkpoint(back, dir / "b.ckpt");
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
}

TEST_CASE("resumed training continues identically") {
    testing::TempDir dir("resume");
    auto s = trained_session();
    save_checkpoint(s, dir / "a.ckpt");
    auto r = load_checkpoint(dir / "a.ckpt");
    const std::vector<ImageBuffer> imgs{testing::texture(16, 16, 3, 1), testing::texture(14, 18, 3, 2)};
    CHECK(run_epoch(s, imgs) == run_epoch(r, imgs));
    CHECK((s.model.parameters().back()->data() == r.model.parameters().back()->data()).all());
}

TEST_CASE("load into an existing model checks keys and shapes") {
    testing::TempDir dir("into");
    const auto s = trained_session();
    save_checkpoint(s, dir / "a.ckpt");

    auto same = init_model<float>(s.config.model, 99);
    load_checkpoint_into(dir / "a.ckpt", same);
    CHECK((same.parameters().front()->data() == s.model.parameters().front()->data()).all());

    auto cfg = s.config.model;
    cfg.backbone.width = 6;
    cfg.decoder.D = 6;
    auto wider = init_model<float>(cfg, 1);
    CHECK_THROWS_WITH_AS(load_checkpoint_into(dir / "a.ckpt", wider), doctest::Contains("backbone.head.w"),
                         ShapeError);
}

TEST_CASE("damaged checkpoints are rejected") {
    testing::TempDir dir("bad");
    save_checkpoint(trained_session(), dir / "a.ckpt");
    const std::string good = slurp(dir / "a.ckpt");

    auto magic = good;
    magic[0] = 'X';
    spit(dir / "magic.ckpt", magic);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "magic.ckpt"), doctest::Contains("bad magic"), FormatError);

    auto version = good;
    version[good.find('\n') - 1] = '9';
    spit(dir / "version.ckpt", version);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "version.ckpt"), doctest::Contains("version"), FormatError);

    spit(dir / "trunc.ckpt", good.substr(0, good.size() - 7));
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), FormatError);
    spit(dir / "trunc2.ckpt", good.substr(0, 20));
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc2.ckpt"), FormatError);

    auto renamed = good;
    const auto at = renamed.find("backbone.head.w");
    REQUIRE(at != std::string::npos);
    renamed.replace(at, 15, "backbone.heax.w");
    spit(dir / "key.ckpt", renamed);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "key.ckpt"), doctest::Contains("backbone.heax.w"), FormatError);

    spit(dir / "extra.ckpt", good + "x");
    CHECK_THROWS_AS(load_checkpoint(dir / "extra.ckpt"), FormatError);

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}
