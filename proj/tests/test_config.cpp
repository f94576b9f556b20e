#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rdp/config.hpp"
#include "rdp/error.hpp"

using namespace rdp;

TEST(Config, DefaultsAreToyDpct) {
  auto c = config_from_json(Json::object());
  EXPECT_EQ(c.mode, Mode::dpct);
  EXPECT_EQ(c.model.channels, 64);
  EXPECT_EQ(c.model.downsample_factor, 8);
  EXPECT_EQ(c.loss.beta_scalar, 0.0);
  EXPECT_EQ(c.loss.c_p, 1.0);
  EXPECT_EQ(c.loss.epsilon, 1e-6);
  EXPECT_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.train.constant_map_fraction, 0.8);
  EXPECT_EQ(c.train.decay_start_fraction, 0.5);
}

TEST(Config, CctDefaultsToFixedPerceptionWeight) {
  auto c = config_from_json(Json{{"mode", "cct"}});
  EXPECT_EQ(c.mode, Mode::cct);
  EXPECT_EQ(c.loss.beta_scalar, 8.0);
  auto d = config_from_json(Json{{"mode", "cct"}, {"loss", {{"beta_scalar", 2.0}}}});
  EXPECT_EQ(d.loss.beta_scalar, 2.0);
}

TEST(Config, PaperPreset) {
  auto c = config_from_json(Json{{"preset", "paper"}, {"data", {{"crop_size", 256}}}});
  EXPECT_EQ(c.model.channels, 320);
  EXPECT_EQ(c.model.bottleneck, 256);
  EXPECT_EQ(c.model.cond_rb_count, 3);
  EXPECT_EQ(c.rate.grid.size(), 26u);
  EXPECT_THROW(config_from_json(Json{{"preset", "huge"}}), RejectedInput);
}

TEST(Config, UnknownKeysAreAllListed) {
  Json j{{"foo", 1}, {"model", {{"chanels", 3}}}, {"train", {{"steps", 5}, {"batch_size", 4}}}};
  try {
    config_from_json(j);
    FAIL();
  } catch (const RejectedInput& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("foo"), std::string::npos) << msg;
    EXPECT_NE(msg.find("model.chanels"), std::string::npos) << msg;
    EXPECT_NE(msg.find("train.steps"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("batch_size"), std::string::npos) << msg;
  }
}

TEST(Config, BadValuesAreRejected) {
  EXPECT_THROW(config_from_json(Json{{"train", {{"batch_size", "eight"}}}}), RejectedInput);
  EXPECT_THROW(config_from_json(Json{{"mode", "both"}}), RejectedInput);
  EXPECT_THROW(config_from_json(Json{{"eval", {{"betas", {0.0, 9.0}}}}}), RejectedInput);
  EXPECT_THROW(config_from_json(Json{{"data", {{"crop_size", 60}}}}), RejectedInput);
  EXPECT_THROW(config_from_json(Json{{"channel", {{"snr_db", "loud"}}}}), RejectedInput);
  EXPECT_THROW(config_from_json(Json{{"model", 3}}), RejectedInput);
}

TEST(Config, NoiselessSnrSpellings) {
  for (const Json& v : {Json("inf"), Json("noiseless"), Json(nullptr)}) {
    auto c = config_from_json(Json{{"channel", {{"snr_db", v}}}});
    EXPECT_TRUE(std::isinf(c.channel.snr_db));
  }
  auto c = config_from_json(Json{{"eval", {{"snrs_db", {1.0, "inf"}}}}});
  ASSERT_EQ(c.eval.snrs_db.size(), 2u);
  EXPECT_TRUE(std::isinf(c.eval.snrs_db[1]));
}

TEST(Config, Overrides) {
  Json doc = Json::object();
  apply_overrides(doc, {"train.rd_steps=250", "loss.lambda=0.005", "train.out_dir=/tmp/x y",
                        "eval.betas=[0,2]", "mode=cct"});
  auto c = config_from_json(doc);
  EXPECT_EQ(c.train.rd_steps, 250);
  EXPECT_EQ(c.loss.lambda, 0.005);
  EXPECT_EQ(c.train.out_dir, "/tmp/x y");
  EXPECT_EQ(c.eval.betas, (std::vector<double>{0.0, 2.0}));
  EXPECT_EQ(c.mode, Mode::cct);
  EXPECT_THROW(apply_overrides(doc, {"no_equals_sign"}), RejectedInput);
}

TEST(Config, JsonRoundTrip) {
  Json doc = Json::object();
  apply_overrides(doc, {"mode=cct", "channel.kind=rayleigh", "channel.snr_db=inf", "train.seed=7",
                        "eval.prompt_sets=[[\"car\"],[\"car\",\"road\"]]", "model.beta_max=4",
                        "eval.betas=[0,4]", "rate.eta=0.25"});
  auto c = config_from_json(doc);
  auto j = config_to_json(c);
  auto back = config_from_json(j);
  EXPECT_EQ(config_to_json(back), j);
  EXPECT_EQ(back.channel.kind, channel::Kind::rayleigh);
  EXPECT_TRUE(std::isinf(back.channel.snr_db));
  EXPECT_EQ(back.train.seed, 7u);
  EXPECT_EQ(back.model.beta_max, 4.0);
  EXPECT_EQ(back.rate.eta, 0.25);
  EXPECT_EQ(back.loss.eta, 0.25);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "rdp_config_test.json";
  {
    std::ofstream f(path);
    f << R"({"train": {"rd_steps": 12}, "channel": {"snr_db": 3}})";
  }
  auto c = load_config(path);
  EXPECT_EQ(c.train.rd_steps, 12);
  EXPECT_EQ(c.channel.snr_db, 3.0);
  {
    std::ofstream f(path);
    f << "{not json";
  }
  EXPECT_THROW(load_config(path), RejectedInput);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), std::exception);
}
