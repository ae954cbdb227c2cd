// adshot: adaptive many-shot in-context-learning inference on a tiny
// deterministic transformer. Subcommands: build-cache, rank, probe, infer,
// bench, verify. Exit codes: 0 ok, 1 usage, 2 verification failure,
// 3 I/O or format error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adshot/engine.hpp"
#include "adshot/errors.hpp"
#include "adshot/kvpool.hpp"
#include "adshot/probe.hpp"
#include "adshot/reposition.hpp"
#include "adshot/retrieval.hpp"
#include "adshot/runconfig.hpp"
#include "adshot/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFail = 2;
constexpr int kExitIo = 3;

// Shots/queries files: UTF-8, one item per line; "\n" and "\\" escapes.
std::string unescape(const std::string& line) {
    std::string out;
    out.reserve(line.size());
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && i + 1 < line.size()) {
            ++i;
            out += (line[i] == 'n') ? '\n' : line[i];
        } else {
            out += line[i];
        }
    }
    return out;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw adshot::IoError("cannot open: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(unescape(line));
    }
    return lines;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\n') out += "\\n";
        else if (c == '\\') out += "\\\\";
        else out += c;
    }
    return out;
}

struct Common {
    std::string config_path;
    std::string cache_path;

    adshot::RunConfig load() const {
        adshot::RunConfig cfg = config_path.empty() ? adshot::default_run_config()
                                                    : adshot::parse_run_config(config_path);
        if (!cache_path.empty()) cfg.paths.cache = cache_path;
        return cfg;
    }
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config_path, "run configuration file (key=value sections)");
    cmd->add_option("--cache", common.cache_path, "cache pool path (overrides [paths] cache)");
}

adshot::CachePool load_cache(const adshot::RunConfig& cfg, const adshot::Model& model) {
    if (cfg.paths.cache.empty()) {
        throw adshot::IoError("no cache path given (use --cache or [paths] cache)");
    }
    return adshot::load_pool(cfg.paths.cache, model.config(), model.fingerprint());
}

void write_summary(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path);
    if (!out) throw adshot::IoError("cannot write summary: " + path);
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

int cmd_build_cache(const Common& common, const std::string& shots_path,
                    const std::string& out_path, const std::string& instruction) {
    const adshot::RunConfig cfg = common.load();
    const std::string shots_file = shots_path.empty() ? cfg.paths.shots : shots_path;
    if (shots_file.empty()) throw adshot::IoError("no shots file given");
    const std::string out_file = out_path.empty() ? cfg.paths.cache : out_path;
    if (out_file.empty()) throw adshot::IoError("no output path given");

    const std::vector<std::string> shots = read_lines(shots_file);
    if (shots.empty()) {
        throw adshot::FormatError("shots file is empty: " + shots_file);
    }
    const adshot::Model model = adshot::Model::init(cfg.model);
    adshot::CachePool pool;
    try {
        pool = adshot::build_pool(model, shots,
                                  instruction.empty() ? std::nullopt
                                                      : std::optional<std::string>(instruction));
    } catch (const std::invalid_argument& e) {
        // Name the offending line (ids are line order, 1-based for humans).
        std::string msg = e.what();
        const std::string prefix = "build_pool: example ";
        if (msg.rfind(prefix, 0) == 0) {
            const std::size_t idx = std::stoul(msg.substr(prefix.size()));
            throw adshot::FormatError("shots file line " + std::to_string(idx + 1) + ": " +
                                      msg.substr(msg.find(": ", prefix.size()) + 2));
        }
        throw;
    }
    adshot::save_pool(pool, out_file);

    std::size_t key_floats = 0;
    for (const auto& [id, block] : pool.blocks) {
        key_floats += static_cast<std::size_t>(block.token_count) * cfg.model.num_layers *
                      cfg.model.hidden_dim;
    }
    std::printf("built %zu blocks\n", pool.blocks.size());
    std::printf("total key bytes: %zu\n", key_floats * sizeof(float));
    std::printf("cache: %s\n", out_file.c_str());
    return kExitOk;
}

int cmd_rank(const Common& common, const std::string& query, int layer, int top) {
    const adshot::RunConfig cfg = common.load();
    const adshot::Model model = adshot::Model::init(cfg.model);
    const adshot::CachePool pool = load_cache(cfg, model);
    const int use_layer = layer < 0 ? cfg.model.num_layers - 1 : layer;
    const adshot::ActiveSet set = adshot::rank(model, pool, query, use_layer);
    const std::size_t n = top <= 0 ? set.ranked_ids.size()
                                   : std::min<std::size_t>(top, set.ranked_ids.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::printf("id=%llu score=%.9g\n", static_cast<unsigned long long>(set.ranked_ids[i]),
                    static_cast<double>(set.scores[i]));
    }
    return kExitOk;
}

void print_trace(const adshot::EntropyTrace& trace) {
    for (std::size_t r = 0; r < trace.rounds.size(); ++r) {
        const auto& round = trace.rounds[r];
        for (std::size_t i = 0; i < round.counts.size(); ++i) {
            std::printf("round=%zu count=%d H=%.4f\n", r, round.counts[i], round.entropies[i]);
        }
    }
    std::printf("%s=%d\n", trace.fallback ? "fallback" : "chosen", trace.chosen_count);
}

int cmd_probe(const Common& common, const std::string& query, double tau, int step, int probes,
              int max_shots) {
    adshot::RunConfig cfg = common.load();
    if (tau > 0) cfg.probe.tau = tau;
    if (step > 0) cfg.probe.step = step;
    if (probes > 0) cfg.probe.probes_per_round = probes;
    if (max_shots > 0) cfg.probe.max_shots = max_shots;
    cfg.probe.validate();

    const adshot::Model model = adshot::Model::init(cfg.model);
    const adshot::CachePool pool = load_cache(cfg, model);
    const adshot::ActiveSet active = adshot::rank(model, pool, query, cfg.model.num_layers - 1);
    const adshot::EntropyTrace trace = adshot::adaptive_select(model, pool, active, query, cfg.probe);
    print_trace(trace);
    return kExitOk;
}

int cmd_infer(const Common& common, const std::string& query, int max_new,
              const std::string& summary_path) {
    const adshot::RunConfig cfg = common.load();
    const adshot::Model model = adshot::Model::init(cfg.model);
    const adshot::CachePool pool = load_cache(cfg, model);

    adshot::EngineOptions opts;
    opts.max_new_tokens = max_new;
    const adshot::InferenceReport report = adshot::answer(model, pool, query, cfg.probe, opts);

    print_trace(report.entropy_trace);
    std::printf("shots=%d\n", report.chosen_shots);
    std::printf("answer=%s\n", escape(report.answer).c_str());
    std::printf("rank_ms=%.3f probe_ms=%.3f assemble_ms=%.3f decode_ms=%.3f total_ms=%.3f\n",
                report.timing.rank_ms, report.timing.probe_ms, report.timing.assemble_ms,
                report.timing.decode_ms, report.timing.total_ms);
    if (!summary_path.empty()) {
        write_summary(summary_path,
                      {{"query", escape(report.query_text)},
                       {"shots", std::to_string(report.chosen_shots)},
                       {"answer", escape(report.answer)},
                       {"total_ms", std::to_string(report.timing.total_ms)}});
    }
    return kExitOk;
}

int cmd_bench(const Common& common, const std::string& queries_path, int max_new, int force_shots,
              const std::string& summary_path) {
    const adshot::RunConfig cfg = common.load();
    const std::string qfile = queries_path.empty() ? cfg.paths.queries : queries_path;
    if (qfile.empty()) throw adshot::IoError("no queries file given");
    const std::vector<std::string> queries = read_lines(qfile);

    const adshot::Model model = adshot::Model::init(cfg.model);
    const adshot::CachePool pool = load_cache(cfg, model);

    adshot::EngineOptions opts;
    opts.max_new_tokens = max_new;
    if (force_shots >= 0) opts.force_shots = force_shots;
    const adshot::BenchReport report = adshot::bench(model, pool, queries, cfg.probe, opts);

    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& row = report.rows[i];
        std::printf("query=%zu shots=%d cached_ms=%.3f full_ms=%.3f speedup=%.2f\n", i,
                    row.chosen_shots, row.cached_ms, row.full_ms, row.full_ms / row.cached_ms);
    }
    std::printf("cached_mean_ms=%.3f full_mean_ms=%.3f speedup=%.2f\n", report.cached_mean_ms,
                report.full_mean_ms, report.speedup);
    if (!summary_path.empty()) {
        write_summary(summary_path, {{"queries", std::to_string(report.rows.size())},
                                     {"cached_mean_ms", std::to_string(report.cached_mean_ms)},
                                     {"full_mean_ms", std::to_string(report.full_mean_ms)},
                                     {"speedup", std::to_string(report.speedup)}});
    }
    return kExitOk;
}

int cmd_verify(const Common& common) {
    const adshot::RunConfig cfg = common.load();
    cfg.model.validate(); // the config must at least be usable
    const std::vector<adshot::PropertyResult> results = adshot::run_verification();
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    std::printf("%s\n", all_pass ? "all properties passed" : "verification FAILED");
    return all_pass ? kExitOk : kExitVerifyFail;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive many-shot ICL inference engine"};
    app.require_subcommand(1);

    Common common;

    auto* build = app.add_subcommand("build-cache", "prefill a shots file into a cache pool");
    std::string shots_path, out_path, instruction;
    add_common(build, common);
    build->add_option("--shots", shots_path, "shots file, one example per line");
    build->add_option("--out", out_path, "output cache path");
    build->add_option("--instruction", instruction, "optional instruction prefix to cache");

    auto* rank_cmd = app.add_subcommand("rank", "rank cached examples against a query");
    std::string query;
    int layer = -1, top = 0;
    add_common(rank_cmd, common);
    rank_cmd->add_option("--query", query, "query text")->required();
    rank_cmd->add_option("--layer", layer, "scoring layer (default: last)");
    rank_cmd->add_option("--top", top, "print only the top k");

    auto* probe_cmd = app.add_subcommand("probe", "run adaptive probe selection for a query");
    double tau = -1;
    int step = -1, probes = -1, max_shots = -1;
    add_common(probe_cmd, common);
    probe_cmd->add_option("--query", query, "query text")->required();
    probe_cmd->add_option("--tau", tau, "entropy threshold");
    probe_cmd->add_option("--step", step, "shots added per candidate");
    probe_cmd->add_option("--probes", probes, "probes per round");
    probe_cmd->add_option("--max-shots", max_shots, "shot budget");

    auto* infer_cmd = app.add_subcommand("infer", "full pipeline: rank, probe, assemble, decode");
    int max_new = 32;
    std::string summary_path;
    add_common(infer_cmd, common);
    infer_cmd->add_option("--query", query, "query text")->required();
    infer_cmd->add_option("--max-new", max_new, "max tokens to generate");
    infer_cmd->add_option("--summary", summary_path, "write key=value summary file");

    auto* bench_cmd = app.add_subcommand("bench", "compare cached vs full-prefill latency");
    std::string queries_path;
    int force_shots = -1;
    add_common(bench_cmd, common);
    bench_cmd->add_option("--queries", queries_path, "queries file, one per line");
    bench_cmd->add_option("--max-new", max_new, "max tokens to generate");
    bench_cmd->add_option("--force-shots", force_shots, "bypass probing with a fixed shot count");
    bench_cmd->add_option("--summary", summary_path, "write key=value summary file");

    auto* verify_cmd = app.add_subcommand("verify", "run the invariant suite");
    add_common(verify_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (build->parsed()) return cmd_build_cache(common, shots_path, out_path, instruction);
        if (rank_cmd->parsed()) return cmd_rank(common, query, layer, top);
        if (probe_cmd->parsed()) return cmd_probe(common, query, tau, step, probes, max_shots);
        if (infer_cmd->parsed()) return cmd_infer(common, query, max_new, summary_path);
        if (bench_cmd->parsed()) return cmd_bench(common, queries_path, max_new, force_shots, summary_path);
        if (verify_cmd->parsed()) return cmd_verify(common);
    } catch (const adshot::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const adshot::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const adshot::FingerprintMismatch& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    }
    return kExitUsage;
}
