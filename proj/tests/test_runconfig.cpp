#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "adshot/errors.hpp"
#include "adshot/runconfig.hpp"

using namespace adshot;

namespace {

std::filesystem::path write_config(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << body;
    return path;
}

} // namespace

TEST_CASE("defaults are a valid model and probe setup") {
    const RunConfig cfg = default_run_config();
    CHECK_NOTHROW(cfg.model.validate());
    CHECK_NOTHROW(cfg.probe.validate());
    CHECK(cfg.model.hidden_dim == cfg.model.num_heads * cfg.model.head_dim);
}

TEST_CASE("a full config file parses with every section") {
    const auto path = write_config("adshot_cfg_full.cfg", R"(# full config
[model]
L=3
H=2
d=16
V=260
rope_base=50000
seed=99
max_position=1024

[probe]
tau=0.5
step=2
probes_per_round=3
max_shots=12
prompt="Sure about it? "

[paths]
cache=/tmp/pool.bin
shots=shots.txt
queries=q.txt
)");
    const RunConfig cfg = parse_run_config(path.string());
    CHECK(cfg.model.num_layers == 3);
    CHECK(cfg.model.num_heads == 2);
    CHECK(cfg.model.head_dim == 16);
    CHECK(cfg.model.hidden_dim == 32);
    CHECK(cfg.model.rope_base == 50000.0);
    CHECK(cfg.model.weight_seed == 99);
    CHECK(cfg.model.max_position == 1024);
    CHECK(cfg.probe.tau == 0.5);
    CHECK(cfg.probe.step == 2);
    CHECK(cfg.probe.probes_per_round == 3);
    CHECK(cfg.probe.max_shots == 12);
    CHECK(cfg.probe.probe_prompt == "Sure about it? ");
    CHECK(cfg.paths.cache == "/tmp/pool.bin");
    CHECK(cfg.paths.shots == "shots.txt");
    CHECK(cfg.paths.queries == "q.txt");
    std::filesystem::remove(path);
}

TEST_CASE("unknown keys are rejected with the line number") {
    const auto path = write_config("adshot_cfg_badkey.cfg", "[model]\nL=2\nwat=3\n");
    try {
        parse_run_config(path.string());
        FAIL("expected rejection");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        CHECK(std::string(e.what()).find("wat") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("unknown sections, bare keys and bad values are rejected") {
    const auto a = write_config("adshot_cfg_badsec.cfg", "[nope]\nx=1\n");
    CHECK_THROWS_AS(parse_run_config(a.string()), FormatError);
    std::filesystem::remove(a);

    const auto b = write_config("adshot_cfg_nosec.cfg", "L=2\n");
    CHECK_THROWS_AS(parse_run_config(b.string()), FormatError);
    std::filesystem::remove(b);

    const auto c = write_config("adshot_cfg_noval.cfg", "[model]\nL two\n");
    CHECK_THROWS_AS(parse_run_config(c.string()), FormatError);
    std::filesystem::remove(c);

    const auto d = write_config("adshot_cfg_badnum.cfg", "[model]\nL=abc\n");
    CHECK_THROWS_AS(parse_run_config(d.string()), FormatError);
    std::filesystem::remove(d);
}

TEST_CASE("missing files are I/O errors") {
    CHECK_THROWS_AS(parse_run_config("/nonexistent/adshot.cfg"), IoError);
}

TEST_CASE("hidden dimension follows H*d from the file") {
    const auto path = write_config("adshot_cfg_hidden.cfg", "[model]\nH=8\nd=4\n");
    const RunConfig cfg = parse_run_config(path.string());
    CHECK(cfg.model.hidden_dim == 32);
    CHECK_NOTHROW(cfg.model.validate());
    std::filesystem::remove(path);
}
