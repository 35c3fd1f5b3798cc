#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "specdec/engine.hpp"
#include "specdec/kv_cache.hpp"
#include "specdec/model.hpp"
#include "specdec/padding_analysis.hpp"

namespace {

using namespace specdec;

std::vector<std::string> read_prompts(const std::string& path, int count) {
    std::ifstream in(path);
    SPECDEC_CHECK(in.good(), IoError, "cannot open corpus: " + path);
    std::vector<std::string> prompts;
    std::string line;
    while (static_cast<int>(prompts.size()) < count && std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        prompts.push_back(line);
    }
    SPECDEC_CHECK(static_cast<int>(prompts.size()) == count, ConfigError,
                  "corpus " + path + " has only " + std::to_string(prompts.size()) +
                      " lines but batch size is " + std::to_string(count));
    return prompts;
}

void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    SPECDEC_CHECK(out.good(), IoError, "cannot open output file: " + path);
    out << body;
    SPECDEC_CHECK(out.good(), IoError, "write failed: " + path);
}

struct MakeModelArgs {
    std::string out_dir;
    int layers = 2;
    int heads = 2;
    int head_dim = 16;
    int max_positions = 512;
    uint64_t seed = ModelConfig{}.init_seed;
    int draft_layers = 1;
    uint64_t draft_seed = 0;  // 0 means "seed + 1"
};

int run_make_model(const MakeModelArgs& args) {
    SPECDEC_CHECK(std::filesystem::is_directory(args.out_dir), IoError,
                  "output directory does not exist: " + args.out_dir);
    ModelConfig target_cfg;
    target_cfg.num_layers = args.layers;
    target_cfg.num_heads = args.heads;
    target_cfg.head_dim = args.head_dim;
    target_cfg.max_positions = args.max_positions;
    target_cfg.init_seed = args.seed;
    ModelConfig draft_cfg = target_cfg;
    draft_cfg.num_layers = args.draft_layers;
    draft_cfg.init_seed = args.draft_seed != 0 ? args.draft_seed : args.seed + 1;

    Model target = Model::init(target_cfg);
    Model draft = Model::init(draft_cfg);
    std::string target_path = args.out_dir + "/target.bin";
    std::string draft_path = args.out_dir + "/draft.bin";
    target.save(target_path);
    draft.save(draft_path);
    std::cout << "wrote " << target_path << " (checksum " << std::hex
              << target.weight_checksum() << std::dec << ")\n";
    std::cout << "wrote " << draft_path << " (checksum " << std::hex
              << draft.weight_checksum() << std::dec << ")\n";
    return 0;
}

struct DecodeArgs {
    std::string model_path;
    std::string draft_path;
    std::string corpus_path;
    std::string out_path;
    std::string mode = "ems";
    std::string predictor = "draft";
    EngineConfig config;
};

DecodeResult run_one(const DecodeArgs& args, const EngineConfig& config,
                     const Model& target, const Model* draft) {
    std::vector<std::string> prompts = read_prompts(args.corpus_path, config.batch_size);
    if (config.mode == Mode::greedy) return decode_greedy(prompts, config, target);
    return decode_speculative(prompts, config, target, draft);
}

int run_decode(DecodeArgs& args) {
    args.config.mode = mode_from_string(args.mode);
    args.config.predictor = predictor_from_string(args.predictor);
    Model target = Model::load(args.model_path);
    std::unique_ptr<Model> draft;
    bool needs_draft = args.config.mode != Mode::greedy &&
                       args.config.predictor == PredictorKind::draft;
    if (!args.draft_path.empty()) {
        draft = std::make_unique<Model>(Model::load(args.draft_path));
    }
    SPECDEC_CHECK(!needs_draft || draft != nullptr, ConfigError,
                  "the draft predictor needs --draft-model");
    DecodeResult result = run_one(args, args.config, target, draft.get());
    std::string body = results_json(args.config, result);
    if (args.out_path.empty()) {
        std::cout << body << "\n";
    } else {
        write_text_file(args.out_path, body);
        std::cout << "wrote " << args.out_path << "\n";
    }
    return 0;
}

struct BenchArgs {
    DecodeArgs base;
    std::vector<int> batch_sizes{1, 2, 4};
    std::string out_prefix = "bench";
};

bool check(bool ok, const std::string& label) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << label << "\n";
    return ok;
}

bool same_steps(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].samples.size() != b[i].samples.size() || a[i].tau_max != b[i].tau_max) {
            return false;
        }
        for (size_t j = 0; j < a[i].samples.size(); ++j) {
            const SampleStep& x = a[i].samples[j];
            const SampleStep& y = b[i].samples[j];
            if (x.sample != y.sample || x.k != y.k || x.tau != y.tau ||
                x.input_padding != y.input_padding || x.kv_padding != y.kv_padding ||
                x.clipped != y.clipped) {
                return false;
            }
        }
    }
    return true;
}

int run_bench(BenchArgs& args) {
    args.base.config.predictor = predictor_from_string(args.base.predictor);
    Model target = Model::load(args.base.model_path);
    std::unique_ptr<Model> draft;
    if (!args.base.draft_path.empty()) {
        draft = std::make_unique<Model>(Model::load(args.base.draft_path));
    }
    SPECDEC_CHECK(args.base.config.predictor != PredictorKind::draft || draft != nullptr,
                  ConfigError, "the draft predictor needs --draft-model");

    std::ostringstream csv;
    csv << "batch_size,mode,predictor,k,total_tokens,decode_steps,avg_acceptance_length,"
           "avg_padding_ratio,total_input_padding,total_kv_padding,useful_kv_writes,"
           "padding_kv_writes,total_tokens_processed,decode_seconds,tokens_per_second_"
           "decode,tokens_per_second_total\n";
    nlohmann::json report = nlohmann::json::array();
    bool all_ok = true;

    for (int batch : args.batch_sizes) {
        EngineConfig config = args.base.config;
        config.batch_size = batch;
        std::map<Mode, DecodeResult> results;
        for (Mode mode : {Mode::greedy, Mode::vanilla, Mode::ems}) {
            config.mode = mode;
            DecodeResult result = run_one(args.base, config, target, draft.get());
            const RunMetrics& m = result.metrics;
            char line[512];
            std::snprintf(line, sizeof(line),
                          "%d,%s,%s,%d,%lld,%d,%.17g,%.17g,%lld,%lld,%lld,%lld,%lld,%.6f,"
                          "%.3f,%.3f\n",
                          batch, to_string(mode).c_str(),
                          to_string(config.predictor).c_str(), config.k,
                          static_cast<long long>(m.total_tokens_generated), m.decode_steps,
                          m.avg_acceptance_length, m.avg_padding_ratio,
                          static_cast<long long>(m.total_input_padding),
                          static_cast<long long>(m.total_kv_padding),
                          static_cast<long long>(m.useful_kv_writes),
                          static_cast<long long>(m.padding_kv_writes),
                          static_cast<long long>(m.total_tokens_processed),
                          m.decode_seconds, m.tokens_per_second_decode,
                          m.tokens_per_second_total);
            csv << line;
            config.mode = mode;
            report.push_back(nlohmann::json::parse(results_json(config, result)));
            results.emplace(mode, std::move(result));
        }

        const DecodeResult& greedy = results.at(Mode::greedy);
        const DecodeResult& vanilla = results.at(Mode::vanilla);
        const DecodeResult& ems = results.at(Mode::ems);
        std::string tag = " (batch " + std::to_string(batch) + ")";
        all_ok &= check(vanilla.generated_tokens == greedy.generated_tokens,
                        "aligned speculative output matches greedy" + tag);
        all_ok &= check(ems.generated_tokens == greedy.generated_tokens,
                        "unpad speculative output matches greedy" + tag);
        all_ok &= check(same_steps(vanilla.steps, ems.steps),
                        "aligned and unpad step records agree" + tag);
        all_ok &= check(ems.metrics.padding_kv_writes == 0,
                        "unpad run wrote zero padding slots" + tag);
        all_ok &= check(vanilla.metrics.useful_kv_writes == ems.metrics.useful_kv_writes,
                        "useful writes agree across layouts" + tag);
        int64_t vanilla_total =
            vanilla.metrics.useful_kv_writes + vanilla.metrics.padding_kv_writes;
        int64_t ems_total = ems.metrics.useful_kv_writes + ems.metrics.padding_kv_writes;
        all_ok &= check(vanilla_total - ems_total == vanilla.metrics.total_kv_padding,
                        "write gap equals the acceptance shortfall sum" + tag);
        all_ok &= check(vanilla.metrics.total_tokens_processed -
                                ems.metrics.total_tokens_processed ==
                            vanilla.metrics.total_input_padding +
                                vanilla.metrics.total_kv_padding,
                        "processed-token gap equals total padding" + tag);
    }

    write_text_file(args.out_prefix + ".csv", csv.str());
    write_text_file(args.out_prefix + ".json",
                    report.dump(2, ' ', false, nlohmann::json::error_handler_t::replace));
    std::cout << "wrote " << args.out_prefix << ".csv and " << args.out_prefix << ".json\n";
    if (!all_ok) {
        std::cerr << "bench invariant violations detected\n";
        return 1;
    }
    return 0;
}

struct SimulateArgs {
    std::vector<double> p_grid;
    std::vector<int> b_grid{1, 2, 4, 8, 16, 32};
    int cap = 8;
    int64_t trials = 100000;
    uint64_t seed = 1;
    std::string out_path = "sweep.csv";
    std::string json_path;
};

int run_simulate(SimulateArgs& args) {
    if (args.p_grid.empty()) {
        for (int i = 2; i <= 19; ++i) args.p_grid.push_back(0.05 * i);
    }
    std::vector<SweepRow> rows = sweep(args.p_grid, args.b_grid, args.cap, args.trials,
                                       args.seed);
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    write_text_file(args.out_path, csv.str());
    std::cout << "wrote " << args.out_path << "\n";
    if (!args.json_path.empty()) {
        nlohmann::json out = nlohmann::json::array();
        for (const SweepRow& row : rows) {
            out.push_back({{"p", row.p},
                           {"b", row.b},
                           {"cap", row.cap},
                           {"estimator", row.estimator},
                           {"trials", row.trials},
                           {"E_tau_max", row.estimate.e_tau_max},
                           {"E_delta_bar", row.estimate.e_delta_bar},
                           {"E_r_bar", row.estimate.e_r_bar}});
        }
        write_text_file(args.json_path, out.dump(2));
        std::cout << "wrote " << args.json_path << "\n";
    }
    return 0;
}

void add_engine_flags(CLI::App* cmd, DecodeArgs& args, bool with_mode) {
    cmd->add_option("--model", args.model_path, "target model checkpoint")->required();
    cmd->add_option("--draft-model", args.draft_path, "draft model checkpoint");
    cmd->add_option("--corpus", args.corpus_path, "prompt file, one prompt per line")
        ->required();
    if (with_mode) {
        cmd->add_option("--mode", args.mode, "greedy | vanilla | ems")
            ->check(CLI::IsMember({"greedy", "vanilla", "ems"}));
    }
    cmd->add_option("--predictor", args.predictor, "draft | retrieval | synthetic")
        ->check(CLI::IsMember({"draft", "retrieval", "synthetic"}));
    cmd->add_option("--batch-size", args.config.batch_size, "samples decoded together")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--k", args.config.k, "draft tokens per step")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--match-len", args.config.match_len, "retrieval n-gram length")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--copy-len", args.config.copy_len, "retrieval copy budget")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--max-new-tokens", args.config.max_new_tokens,
                    "generation budget per sample")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", args.config.seed, "engine seed");
    cmd->add_option("--synthetic-p", args.config.synthetic_accuracy,
                    "synthetic predictor hit rate in [0,1)");
    cmd->add_flag("--stop-on-eos,!--no-stop-on-eos", args.config.stop_on_eos,
                  "stop a sample at the end-of-text token");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic multi-sample speculative decoding workbench"};
    app.set_config("--config", "", "key=value config file; flags take precedence");
    app.require_subcommand(1);

    MakeModelArgs make_args;
    CLI::App* make_cmd = app.add_subcommand("make-model", "create seeded model checkpoints");
    make_cmd->add_option("--out", make_args.out_dir, "existing output directory")
        ->required();
    make_cmd->add_option("--layers", make_args.layers)->check(CLI::PositiveNumber);
    make_cmd->add_option("--heads", make_args.heads)->check(CLI::PositiveNumber);
    make_cmd->add_option("--head-dim", make_args.head_dim)->check(CLI::PositiveNumber);
    make_cmd->add_option("--max-positions", make_args.max_positions)
        ->check(CLI::PositiveNumber);
    make_cmd->add_option("--seed", make_args.seed);
    make_cmd->add_option("--draft-layers", make_args.draft_layers)
        ->check(CLI::PositiveNumber);
    make_cmd->add_option("--draft-seed", make_args.draft_seed);

    DecodeArgs decode_args;
    CLI::App* decode_cmd = app.add_subcommand("decode", "run one decoding configuration");
    add_engine_flags(decode_cmd, decode_args, true);
    decode_cmd->add_option("--out", decode_args.out_path, "results JSON path");

    BenchArgs bench_args;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "compare greedy, aligned, and unpad decoding");
    add_engine_flags(bench_cmd, bench_args.base, false);
    bench_cmd->add_option("--batch-sizes", bench_args.batch_sizes, "comma-separated list")
        ->delimiter(',');
    bench_cmd->add_option("--out", bench_args.out_prefix, "output prefix for .csv/.json");

    SimulateArgs sim_args;
    CLI::App* sim_cmd =
        app.add_subcommand("simulate-padding", "padding overhead model: exact and sampled");
    sim_cmd->add_option("--p-grid", sim_args.p_grid, "acceptance rates")->delimiter(',');
    sim_cmd->add_option("--b-grid", sim_args.b_grid, "batch sizes")->delimiter(',');
    sim_cmd->add_option("--cap", sim_args.cap)->check(CLI::PositiveNumber);
    sim_cmd->add_option("--trials", sim_args.trials)->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sim_args.seed);
    sim_cmd->add_option("--out", sim_args.out_path, "sweep CSV path");
    sim_cmd->add_option("--json", sim_args.json_path, "optional JSON mirror path");

    CLI11_PARSE(app, argc, argv);
    try {
        if (make_cmd->parsed()) return run_make_model(make_args);
        if (decode_cmd->parsed()) return run_decode(decode_args);
        if (bench_cmd->parsed()) return run_bench(bench_args);
        if (sim_cmd->parsed()) return run_simulate(sim_args);
    } catch (const specdec::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
