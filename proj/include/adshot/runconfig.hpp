#pragma once
#include <string>

#include "adshot/model.hpp"
#include "adshot/probe.hpp"

namespace adshot {

// Plain-text key=value configuration with bracketed section headers:
//
//   [model]
//   L=2
//   H=4
//   d=32
//   V=260
//   rope_base=10000
//   seed=42
//   max_position=4096
//
//   [probe]
//   tau=0.65
//   step=4
//   probes_per_round=4
//   max_shots=32
//   prompt="Are you confident enough to answer? "
//
//   [paths]
//   cache=pool.adshpool
//   shots=shots.txt
//   queries=queries.txt
//
// '#' starts a comment; values may be double-quoted to preserve edge
// whitespace. Unknown sections or keys are rejected.
struct RunConfig {
    ModelConfig model;
    ProbeConfig probe;
    struct Paths {
        std::string cache;
        std::string shots;
        std::string queries;
    } paths;
};

RunConfig default_run_config();

// Throws IoError on unreadable files and FormatError on syntax errors or
// unknown keys (with the line number in the message).
RunConfig parse_run_config(const std::string& path);

} // namespace adshot
