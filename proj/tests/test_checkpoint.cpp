#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "motion/checkpoint.hpp"
#include "motion/errors.hpp"
#include "motion/synth.hpp"
#include "test_util.hpp"

using namespace motion;

namespace {

ModelHyper small_hyper() {
    ModelHyper h;
    h.hidden = 8;
    h.latent_z = 4;
    h.latent_c = 3;
    h.heads = 2;
    h.spl_hidden = 4;
    h.disc_hidden = 4;
    return h;
}

Checkpoint make_checkpoint(std::uint64_t seed) {
    SynthSpec spec;
    spec.n_subjects = 1;
    spec.n_activities = 1;
    spec.trials = 1;
    spec.frames = 40;
    spec.seed = seed;
    const auto windows = window_sequences(synth_generate(spec), 15, 15, 2);
    return {ModelParams(small_hyper(), default_skeleton(), seed), fit_stats(windows), {{"phase", "1"}, {"seed", "3"}}};
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary) << bytes;
}

// Overwrites the single-character value that follows `key` in a key/value block.
std::string patch_value(std::string bytes, const std::string& key, char value) {
    const auto at = bytes.find(key);
    if (at == std::string::npos) throw std::runtime_error("key not found");
    bytes[at + key.size() + 4] = value;
    return bytes;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
    test_util::TempDir dir("ckpt");
    const Checkpoint c = make_checkpoint(1);
    save_checkpoint(dir / "a.ckpt", c);
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(back.params.hyper(), c.params.hyper());
    EXPECT_EQ(back.params.tree(), c.params.tree());
    EXPECT_EQ(back.meta, c.meta);
    EXPECT_EQ(back.stats.position.mean, c.stats.position.mean);
    EXPECT_EQ(back.stats.acceleration.stddev, c.stats.acceleration.stddev);
    const auto a = c.params.parameters(), b = back.params.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]->name, b[i]->name);
        EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
    }
    save_checkpoint(dir / "b.ckpt", back);
    EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
}

TEST(Checkpoint, NonDefaultTreeSurvives) {
    test_util::TempDir dir("ckpt");
    ModelHyper h = small_hyper();
    h.joints = 5;
    h.spl_residual = true;
    Checkpoint c{ModelParams(h, synthetic_skeleton(5), 2), {}, {}};
    for (CoordStats* s : {&c.stats.position, &c.stats.velocity, &c.stats.acceleration}) {
        s->mean.assign(15, 0.0);
        s->stddev.assign(15, 1.0);
    }
    save_checkpoint(dir / "c.ckpt", c);
    const Checkpoint back = load_checkpoint(dir / "c.ckpt");
    EXPECT_EQ(back.params.tree(), synthetic_skeleton(5));
    EXPECT_TRUE(back.params.hyper().spl_residual);
}

TEST(Checkpoint, GroupHashTracksOnlyItsGroup) {
    Checkpoint c = make_checkpoint(3);
    std::array<std::uint64_t, kParamGroupCount> before{};
    for (std::size_t g = 0; g < kParamGroupCount; ++g) before[g] = group_hash(c.params, static_cast<ParamGroup>(g));
    c.params.decoder.gru.b.value[0] = std::nextafter(c.params.decoder.gru.b.value[0], 1.0);
    for (std::size_t g = 0; g < kParamGroupCount; ++g) {
        const auto group = static_cast<ParamGroup>(g);
        if (group == ParamGroup::decoder) {
            EXPECT_NE(group_hash(c.params, group), before[g]);
        } else {
            EXPECT_EQ(group_hash(c.params, group), before[g]) << group_name(group);
        }
    }
    EXPECT_NE(serialize_group(c.params, ParamGroup::encoder), serialize_group(c.params, ParamGroup::latent));
}

TEST(Checkpoint, RejectsCorruptFiles) {
    test_util::TempDir dir("ckpt");
    save_checkpoint(dir / "ok.ckpt", make_checkpoint(4));
    const std::string bytes = read_bytes(dir / "ok.ckpt");

    write_bytes(dir / "trunc.ckpt", bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), ParseError);

    std::string magic = bytes;
    magic[0] = 'X';
    write_bytes(dir / "magic.ckpt", magic);
    EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), ParseError);

    write_bytes(dir / "trail.ckpt", bytes + "x");
    EXPECT_THROW(load_checkpoint(dir / "trail.ckpt"), ParseError);

    EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), ParseError);
}

TEST(Checkpoint, RejectsShapeMismatchAgainstHyper) {
    test_util::TempDir dir("ckpt");
    save_checkpoint(dir / "ok.ckpt", make_checkpoint(5));
    write_bytes(dir / "bad.ckpt", patch_value(read_bytes(dir / "ok.ckpt"), "spl_hidden", '5'));
    try {
        load_checkpoint(dir / "bad.ckpt");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, RejectsUnknownGroup) {
    test_util::TempDir dir("ckpt");
    save_checkpoint(dir / "ok.ckpt", make_checkpoint(6));
    std::string bytes = read_bytes(dir / "ok.ckpt");
    // The first occurrence of a group name is the group header itself.
    const std::string header = std::string("\x07\0\0\0", 4) + "decoder";
    const auto at = bytes.find(header);
    ASSERT_NE(at, std::string::npos);
    bytes[at + header.size() - 1] = 'x';
    write_bytes(dir / "bad.ckpt", bytes);
    try {
        load_checkpoint(dir / "bad.ckpt");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("decodex"), std::string::npos) << e.what();
    }
}
