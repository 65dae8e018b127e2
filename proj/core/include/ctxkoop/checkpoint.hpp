#pragma once

// Versioned JSON persistence for trained models and trainer state.

#include "ctxkoop/optim.hpp"
#include "ctxkoop/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace ctxkoop {

inline constexpr std::string_view kPiaeFormat = "ctxkoop.piae.v1";
inline constexpr std::string_view kVkaeFormat = "ctxkoop.vkae.v1";

struct Checkpoint {
    AnyModel model;
    LossWeights loss_weights;
    std::uint64_t rng_seed = 0;
    /// Moments needed to map forecasts back to dB. Absent for bare models.
    std::optional<Standardizer> standardizer;
};

/// Doubles are written in shortest round-trip form, so load(save(x)) is bit-exact.
/// Throws NumericError for non-finite parameters.
std::string checkpoint_to_json(const Checkpoint& ckpt);

/// Throws ParseError for malformed JSON and SchemaError for a wrong format_version, missing
/// fields or shapes that disagree with dims.
Checkpoint checkpoint_from_json(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws InputError if the file cannot be opened.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Everything a Trainer holds: model, optimizer moments, loss history, standardizer moments
/// and the starting latent of the next forecast.
std::string trainer_state_json(const Trainer& trainer);

}  // namespace ctxkoop
