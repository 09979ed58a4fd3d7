#include "emoq/config.hpp"

#include <gtest/gtest.h>

using namespace emoq;

TEST(Config, ProfilesExistAndValidate) {
    for (const auto& name : profile_names()) {
        RunConfig c = profile_preset(name);
        if (!c.synthetic) c.manifest = "m.jsonl";
        EXPECT_EQ(c.profile, name);
        EXPECT_NO_THROW(c.validate()) << name;
    }
    EXPECT_THROW(profile_preset("nope"), ConfigError);
}

TEST(Config, ProfileValues) {
    RunConfig bold = profile_preset("bold-like");
    EXPECT_DOUBLE_EQ(bold.optim.base_lr, 1e-4);
    EXPECT_DOUBLE_EQ(bold.optim.vision_multiplier, 0.01);
    EXPECT_EQ(bold.optim.batch_size, 4u);
    RunConfig emotic = profile_preset("emotic-like");
    EXPECT_TRUE(emotic.optim.freeze_vision);
    RunConfig caers = profile_preset("caers-like");
    EXPECT_EQ(caers.model.qformer.task, TaskKind::single_label);
    EXPECT_EQ(caers.model.qformer.num_classes, 7u);
}

TEST(Config, ParseAppliesProfileFirst) {
    RunConfig c = parse_run_config("# comment\nbase_lr = 0.5\nprofile = caers-like\n\nbatch_size=3  # trailing\n");
    EXPECT_EQ(c.profile, "caers-like");
    EXPECT_DOUBLE_EQ(c.optim.base_lr, 0.5);
    EXPECT_EQ(c.optim.batch_size, 3u);
}

TEST(Config, SeedPropagates) {
    RunConfig c = parse_run_config("seed = 42\n");
    EXPECT_EQ(c.model.seed, 42u);
    EXPECT_EQ(c.optim.seed, 42u);
    EXPECT_EQ(c.synth.seed, 42u);
}

TEST(Config, ErrorsNameTheKey) {
    try {
        parse_run_config("bogus_key = 1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos);
    }
    EXPECT_THROW(parse_run_config("batch_size = many\n"), ConfigError);
    EXPECT_THROW(parse_run_config("no equals sign\n"), ConfigError);
}

TEST(Config, ManifestTurnsOffSynthetic) {
    RunConfig c = parse_run_config("manifest = data/m.jsonl\n");
    EXPECT_FALSE(c.synthetic);
    EXPECT_EQ(c.manifest, "data/m.jsonl");
}
