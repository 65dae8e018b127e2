#include "ctxkoop/checkpoint.hpp"
#include "ctxkoop/errors.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <limits>

using namespace ctxkoop;
using namespace ctxkoop::testing;
using nlohmann::json;

namespace {

Standardizer some_standardizer(Eigen::Index features) {
    std::mt19937_64 rng(2);
    return Standardizer::from_moments(-97.3, 2.25, random_vector(features, rng),
                                     random_vector(features, rng).cwiseAbs());
}

template <class Model>
void expect_same_model(const Model& a, const Model& b) {
    EXPECT_EQ(a.dims, b.dims);
    EXPECT_EQ(flatten(a.blocks()), flatten(b.blocks()));
    EXPECT_EQ(a.csi_enc.activation, b.csi_enc.activation);
}

}  // namespace

TEST(Checkpoint, PiaeRoundTripIsBitExact) {
    const PiaeModel m = randomized<PiaeModel>(tiny_dims(), 1);
    const Checkpoint ck{m, {0.5, 0.25, 2.0, 1.0}, 77, some_standardizer(tiny_dims().ctx_in)};
    const std::string text = checkpoint_to_json(ck);
    const Checkpoint back = checkpoint_from_json(text);
    expect_same_model(std::get<PiaeModel>(back.model), m);
    EXPECT_EQ(back.rng_seed, 77u);
    EXPECT_EQ(back.loss_weights.gamma, 2.0);
    ASSERT_TRUE(back.standardizer.has_value());
    EXPECT_TRUE(*back.standardizer == *ck.standardizer);
    EXPECT_EQ(checkpoint_to_json(back), text);
    EXPECT_EQ(json::parse(text).at("format_version"), kPiaeFormat);
}

TEST(Checkpoint, VkaeRoundTripIsBitExact) {
    VkaeModel m = randomized<VkaeModel>(tiny_dims(), 2);
    m.sigma2_h = 0.123456789012345678;
    m.sigma2_u = 3.0 / 7.0;
    const Checkpoint ck{m, {}, 5, std::nullopt};
    const auto path = std::filesystem::temp_directory_path() / "ctxkoop_test_vkae.json";
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    const auto& v = std::get<VkaeModel>(back.model);
    expect_same_model(v, m);
    EXPECT_EQ(v.sigma2_h, m.sigma2_h);
    EXPECT_EQ(v.sigma2_u, m.sigma2_u);
    EXPECT_FALSE(back.standardizer.has_value());
}

TEST(Checkpoint, FullSizeModelRoundTrip) {
    const PiaeModel m = PiaeModel::init({}, 3);
    const Checkpoint back = checkpoint_from_json(checkpoint_to_json({m, {}, 3, std::nullopt}));
    expect_same_model(std::get<PiaeModel>(back.model), m);
}

TEST(Checkpoint, RejectsNonFiniteParameters) {
    PiaeModel m = randomized<PiaeModel>(tiny_dims(), 4);
    m.K(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW((void)checkpoint_to_json({m, {}, 0, std::nullopt}), NumericError);
}

TEST(Checkpoint, SchemaViolations) {
    const PiaeModel m = randomized<PiaeModel>(tiny_dims(), 5);
    const json good = json::parse(checkpoint_to_json({m, {}, 0, some_standardizer(tiny_dims().ctx_in)}));

    json bad_version = good;
    bad_version["format_version"] = "ctxkoop.piae.v0";
    EXPECT_THROW((void)checkpoint_from_json(bad_version.dump()), SchemaError);

    json missing = good;
    missing.erase("weights");
    EXPECT_THROW((void)checkpoint_from_json(missing.dump()), SchemaError);

    json bad_shape = good;
    bad_shape["weights"]["K"].erase(0);
    EXPECT_THROW((void)checkpoint_from_json(bad_shape.dump()), SchemaError);

    json bad_dims = good;
    bad_dims["dims"]["csi_latent"] = 4;
    EXPECT_THROW((void)checkpoint_from_json(bad_dims.dump()), SchemaError);

    json bad_cell = good;
    bad_cell["weights"]["csi_dec"]["b2"][0] = "x";
    EXPECT_THROW((void)checkpoint_from_json(bad_cell.dump()), SchemaError);

    json bad_act = good;
    bad_act["weights"]["csi_dec"]["activation"] = "tanh";
    EXPECT_THROW((void)checkpoint_from_json(bad_act.dump()), SchemaError);

    EXPECT_THROW((void)checkpoint_from_json("{\"format_version\": "), ParseError);
    EXPECT_THROW((void)checkpoint_from_json("[1, 2, 3]"), SchemaError);
    EXPECT_THROW((void)load_checkpoint("/nonexistent/ckpt.json"), InputError);
}
