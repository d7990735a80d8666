#pragma once

#include <string>

#include "whar/config.hpp"
#include "whar/synth.hpp"

namespace whar {

// Everything a run needs, resolvable from one config file.
struct FullConfig {
  ModelConfig model;
  TrainConfig train;
  GenConfig gen;
};

// Flat key = value grammar with [section] headers and # comments:
//
//   [model]
//   sensors = 6
//   mfe.channels = 32   # dotted keys address nested blocks
//
// Unknown sections or keys are rejected with their line number, as are
// unparsable values. Parsing starts from the defaults, so a file mentions
// only what it overrides. validate() runs on the result.
FullConfig parse_config_text(const std::string& text,
                             const std::string& origin);
FullConfig parse_config_file(const std::string& path);

// Canonical rendering: fixed section and key order, round-trip-exact
// numbers. parse(serialize(c)) == c, and equal configs serialize to equal
// bytes, which makes the text usable as a config fingerprint.
std::string serialize_config(const FullConfig& cfg);

}  // namespace whar
