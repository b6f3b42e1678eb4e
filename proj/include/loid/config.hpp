#pragma once

#include <string>

#include "loid/data.hpp"
#include "loid/encoder.hpp"
#include "loid/pipeline.hpp"

namespace loid {

// Resolved run configuration: desk-profile defaults, optionally overridden by
// a JSON config file, then by CLI flags.
struct AppConfig {
    std::string profile = "desk";  // "desk" or "paper"
    EncoderConfig encoder;
    TrainConfig train;
    SynthSpec synth;

    void validate() const {
        encoder.validate();
        train.validate();
        synth.validate();
    }
};

AppConfig load_config(const std::string& path);

// resolved config as a JSON string, for manifests
std::string config_to_json(const AppConfig& cfg);

}  // namespace loid
