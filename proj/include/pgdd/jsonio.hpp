#pragma once

#include <json.hpp>

#include "pgdd/distill.hpp"
#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/oracle.hpp"
#include "pgdd/schedule.hpp"

namespace pgdd {

// JSON forms used both in checkpoint metadata and in experiment configs.
// The from_* direction is strict: unknown keys are an error, so a typo in a
// config cannot silently fall back to a default.

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where);

nlohmann::json schedule_to_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

nlohmann::json denoiser_spec_to_json(const DenoiserSpec& s);
DenoiserSpec denoiser_spec_from_json(const nlohmann::json& j);

nlohmann::json guide_spec_to_json(const GuideSpec& g);
GuideSpec guide_spec_from_json(const nlohmann::json& j, const DenoiserSpec& base);

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults);

nlohmann::json mixture_to_json(const MixtureSpec& m);
MixtureSpec mixture_from_json(const nlohmann::json& j);

}  // namespace pgdd
