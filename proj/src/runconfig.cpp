#include "adshot/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "adshot/errors.hpp"

namespace adshot {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw FormatError("config line " + std::to_string(line) + ": " + what);
}

long long parse_int(const std::string& v, int line) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        fail(line, "expected integer, got '" + v + "'");
    }
    return out;
}

double parse_real(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) fail(line, "expected number, got '" + v + "'");
        return out;
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception&) {
        fail(line, "expected number, got '" + v + "'");
    }
}

} // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.model.num_layers = 2;
    cfg.model.num_heads = 4;
    cfg.model.head_dim = 32;
    cfg.model.hidden_dim = 128;
    cfg.model.vocab_size = kVocabSize;
    cfg.model.rope_base = 10000.0;
    cfg.model.weight_seed = 42;
    cfg.model.max_position = 4096;
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    RunConfig cfg = default_run_config();

    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            section = line.substr(1, line.size() - 2);
            if (section != "model" && section != "probe" && section != "paths") {
                fail(line_no, "unknown section [" + section + "]");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = unquote(trim(line.substr(eq + 1)));
        if (section.empty()) fail(line_no, "key '" + key + "' outside any section");

        if (section == "model") {
            if (key == "L") cfg.model.num_layers = static_cast<int>(parse_int(value, line_no));
            else if (key == "H") cfg.model.num_heads = static_cast<int>(parse_int(value, line_no));
            else if (key == "d") cfg.model.head_dim = static_cast<int>(parse_int(value, line_no));
            else if (key == "V") cfg.model.vocab_size = static_cast<int>(parse_int(value, line_no));
            else if (key == "rope_base") cfg.model.rope_base = parse_real(value, line_no);
            else if (key == "seed") cfg.model.weight_seed = static_cast<std::uint64_t>(parse_int(value, line_no));
            else if (key == "max_position") cfg.model.max_position = static_cast<int>(parse_int(value, line_no));
            else fail(line_no, "unknown key '" + key + "' in [model]");
        } else if (section == "probe") {
            if (key == "tau") cfg.probe.tau = parse_real(value, line_no);
            else if (key == "step") cfg.probe.step = static_cast<int>(parse_int(value, line_no));
            else if (key == "probes_per_round") cfg.probe.probes_per_round = static_cast<int>(parse_int(value, line_no));
            else if (key == "max_shots") cfg.probe.max_shots = static_cast<int>(parse_int(value, line_no));
            else if (key == "prompt") cfg.probe.probe_prompt = value;
            else fail(line_no, "unknown key '" + key + "' in [probe]");
        } else {
            if (key == "cache") cfg.paths.cache = value;
            else if (key == "shots") cfg.paths.shots = value;
            else if (key == "queries") cfg.paths.queries = value;
            else fail(line_no, "unknown key '" + key + "' in [paths]");
        }
    }
    cfg.model.hidden_dim = cfg.model.num_heads * cfg.model.head_dim;
    return cfg;
}

} // namespace adshot
