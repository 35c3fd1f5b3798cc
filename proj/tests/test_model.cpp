#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "naive_model.hpp"
#include "specdec/kv_cache.hpp"
#include "specdec/model.hpp"
#include "specdec/ragged.hpp"
#include "specdec/rng.hpp"
#include "specdec/tokenizer.hpp"

using namespace specdec;
using namespace specdec::ragged;
using testsupport::naive_forward;

namespace {

ModelConfig tiny_config(uint64_t seed = 0x7E57) {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.head_dim = 8;
    cfg.max_positions = 64;
    cfg.init_seed = seed;
    return cfg;
}

TokenSequence prompt_tokens(const std::string& text) {
    TokenSequence out{tok::kBos};
    TokenSequence bytes = tok::tokenize(text);
    out.insert(out.end(), bytes.begin(), bytes.end());
    return out;
}

std::vector<TokenSlot> fresh_slots(const RaggedBatch& batch) {
    std::vector<TokenSlot> slots;
    for (int i = 0; i < batch.total_input_token_nums; ++i) {
        slots.push_back(restore_indices(batch.token_nums_per_sample, i));
    }
    return slots;
}

float max_abs_diff(const LogitsRow& a, const LogitsRow& b) {
    REQUIRE(a.size() == b.size());
    float worst = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("specdec_model_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("softmax normalizes and shrugs off large shared offsets") {
    std::vector<float> probs = softmax({1.0f, 1.0f, 1.0f, 1.0f});
    for (float p : probs) CHECK(p == doctest::Approx(0.25f));

    std::vector<float> shifted = softmax({1000.0f, 1001.0f});
    std::vector<float> plain = softmax({0.0f, 1.0f});
    CHECK(shifted[0] == plain[0]);
    CHECK(shifted[1] == plain[1]);
    CHECK(std::isfinite(shifted[0]));

    float total = 0.0f;
    for (float p : softmax({-3.0f, 0.5f, 2.0f})) total += p;
    CHECK(total == doctest::Approx(1.0f));

    CHECK_THROWS_AS(softmax({}), ContractError);
}

TEST_CASE("greedy_next picks the argmax and breaks ties toward low ids") {
    CHECK(greedy_next({0.1f, 0.9f, 0.3f}) == 1);
    CHECK(greedy_next({0.5f, 0.9f, 0.9f, 0.2f}) == 1);
    CHECK(greedy_next({2.0f, 2.0f}) == 0);
    CHECK(greedy_next({-1.0f}) == 0);
}

TEST_CASE("config validation rejects non-positive dimensions") {
    ModelConfig cfg = tiny_config();
    cfg.num_layers = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.num_heads = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.head_dim = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.vocab_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.max_positions = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("initialization is a pure function of the config") {
    Model a = Model::init(tiny_config(123));
    Model b = Model::init(tiny_config(123));
    CHECK(a.weight_checksum() == b.weight_checksum());
    CHECK(a.weight_checksum() != Model::init(tiny_config(124)).weight_checksum());

    ModelConfig deeper = tiny_config(123);
    deeper.num_layers = 3;
    CHECK(a.weight_checksum() != Model::init(deeper).weight_checksum());
}

TEST_CASE("checkpoint round trip preserves weights and behavior") {
    TempDir dir;
    Model a = Model::init(tiny_config(0xC0FFEE));
    a.save(dir.file("model.bin"));
    Model b = Model::load(dir.file("model.bin"));
    CHECK(a.weight_checksum() == b.weight_checksum());
    CHECK(b.config().num_layers == 2);
    CHECK(b.config().max_positions == 64);

    TokenSequence prompt = prompt_tokens("same weights, same logits");
    std::vector<LogitsRow> la = naive_forward(a, prompt);
    std::vector<LogitsRow> lb = naive_forward(b, prompt);
    REQUIRE(la.size() == lb.size());
    for (size_t i = 0; i < la.size(); ++i) CHECK(max_abs_diff(la[i], lb[i]) == 0.0f);
}

TEST_CASE("checkpoint loading rejects damaged files") {
    TempDir dir;
    Model a = Model::init(tiny_config());
    a.save(dir.file("good.bin"));

    CHECK_THROWS_AS(Model::load(dir.file("missing.bin")), IoError);

    {
        std::ofstream out(dir.file("garbage.bin"), std::ios::binary);
        out << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(Model::load(dir.file("garbage.bin")), IoError);

    // Truncation: drop the last 40 bytes.
    {
        std::ifstream in(dir.file("good.bin"), std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out(dir.file("short.bin"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
    }
    CHECK_THROWS_AS(Model::load(dir.file("short.bin")), IoError);

    // Trailing junk after the payload.
    {
        std::ifstream in(dir.file("good.bin"), std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        bytes += "extra";
        std::ofstream out(dir.file("long.bin"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(Model::load(dir.file("long.bin")), IoError);
}

TEST_CASE("checksum notices a single flipped payload byte") {
    TempDir dir;
    Model a = Model::init(tiny_config());
    a.save(dir.file("model.bin"));
    std::fstream f(dir.file("model.bin"),
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(200);  // somewhere inside the first weight tensor
    char byte = 0;
    f.seekg(200);
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x40);
    f.seekp(200);
    f.write(&byte, 1);
    f.close();
    Model b = Model::load(dir.file("model.bin"));
    CHECK(a.weight_checksum() != b.weight_checksum());
}

TEST_CASE("forward rejects non-finite weights instead of propagating them") {
    TempDir dir;
    Model a = Model::init(tiny_config());
    a.save(dir.file("model.bin"));
    // Header is magic + version + five dims + seed = 36 bytes; the first
    // payload float belongs to the token embedding.
    std::fstream f(dir.file("model.bin"),
                   std::ios::binary | std::ios::in | std::ios::out);
    float nan = std::numeric_limits<float>::quiet_NaN();
    f.seekp(36);
    f.write(reinterpret_cast<const char*>(&nan), sizeof(nan));
    f.close();
    Model b = Model::load(dir.file("model.bin"));
    UnpadArena cache(b.config().num_layers, 1, 16, b.config().hidden());
    RaggedBatch batch = concatenate_inputs({{tok::kBos, 42}});
    CHECK_THROWS_AS(b.forward(batch, cache, fresh_slots(batch)), Error);
}

TEST_CASE("cached forward matches the full-recompute reference on one sample") {
    Model model = Model::init(tiny_config(0xAB1E));
    TokenSequence prompt = prompt_tokens("the quick brown fox");
    std::vector<LogitsRow> expected = naive_forward(model, prompt);

    UnpadArena cache(model.config().num_layers, 1, 64, model.config().hidden());
    RaggedBatch batch = concatenate_inputs({prompt});
    std::vector<LogitsRow> got = model.forward(batch, cache, fresh_slots(batch));
    REQUIRE(got.size() == expected.size());
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(max_abs_diff(got[i], expected[i]) <= 1e-5f);
    }
}

TEST_CASE("incremental decoding over the cache matches recomputing from scratch") {
    Model model = Model::init(tiny_config(0x17C4));
    TokenSequence prompt = prompt_tokens("incremental caching must not drift");
    const int mid = 7;

    UnpadArena cache(model.config().num_layers, 1, 64, model.config().hidden());
    TokenSequence head(prompt.begin(), prompt.begin() + mid);
    TokenSequence tail(prompt.begin() + mid, prompt.end());

    RaggedBatch first = concatenate_inputs({head});
    model.forward(first, cache, fresh_slots(first));
    cache.commit_accepted(0, mid);

    RaggedBatch second = concatenate_inputs({tail});
    std::vector<TokenSlot> slots;
    for (int i = 0; i < static_cast<int>(tail.size()); ++i) slots.push_back({0, mid + i});
    std::vector<LogitsRow> got = model.forward(second, cache, slots);

    std::vector<LogitsRow> expected = naive_forward(model, prompt);
    REQUIRE(got.size() == tail.size());
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(max_abs_diff(got[i], expected[mid + i]) <= 1e-5f);
    }
}

TEST_CASE("a ragged two-sample batch reproduces each sample's solo logits") {
    Model model = Model::init(tiny_config(0xBA7C4));
    TokenSequence a = prompt_tokens("short one");
    TokenSequence b = prompt_tokens("a noticeably longer second sample");

    UnpadArena cache(model.config().num_layers, 2, 64, model.config().hidden());
    RaggedBatch batch = concatenate_inputs({a, b});
    std::vector<LogitsRow> got = model.forward(batch, cache, fresh_slots(batch));

    std::vector<LogitsRow> ea = naive_forward(model, a);
    std::vector<LogitsRow> eb = naive_forward(model, b);
    REQUIRE(got.size() == a.size() + b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(max_abs_diff(got[i], ea[i]) <= 1e-5f);
    for (size_t i = 0; i < b.size(); ++i) {
        CHECK(max_abs_diff(got[a.size() + i], eb[i]) <= 1e-5f);
    }
}

TEST_CASE("aligned grid with left-pad holes gives bit-identical logits to the unpad layout") {
    Model model = Model::init(tiny_config(0xB17));
    TokenSequence a = prompt_tokens("hi");
    TokenSequence b = prompt_tokens("longer");
    const int pmax = static_cast<int>(b.size());
    const int holes = pmax - static_cast<int>(a.size());
    REQUIRE(holes > 0);

    UnpadArena unpad(model.config().num_layers, 2, 64, model.config().hidden());
    RaggedBatch batch = concatenate_inputs({a, b});
    std::vector<LogitsRow> reference = model.forward(batch, unpad, fresh_slots(batch));

    PaddedGrid grid(model.config().num_layers, 2, 64, model.config().hidden());
    std::vector<TokenId> tokens;
    std::vector<TokenPlan> plans;
    for (int row = 0; row < holes; ++row) grid.mark_hole(0, row);
    for (int i = 0; i < static_cast<int>(a.size()); ++i) {
        tokens.push_back(a[i]);
        plans.push_back({0, i, holes + i, true});
    }
    for (int i = 0; i < pmax; ++i) {
        tokens.push_back(b[i]);
        plans.push_back({1, i, i, true});
    }
    std::vector<LogitsRow> got = model.forward_planned(tokens, plans, grid);

    REQUIRE(got.size() == reference.size());
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(max_abs_diff(got[i], reference[i]) == 0.0f);
    }
}

TEST_CASE("pad query tokens are pure spectators") {
    Model model = Model::init(tiny_config(0x5150));
    TokenSequence prompt = prompt_tokens("spectators");
    const int plen = static_cast<int>(prompt.size());

    auto run_step = [&](bool with_pads) {
        PaddedGrid grid(model.config().num_layers, 1, 64, model.config().hidden());
        std::vector<TokenPlan> plans;
        for (int i = 0; i < plen; ++i) plans.push_back({0, i, i, true});
        model.forward_planned(prompt, plans, grid);
        grid.commit_prefill({0}, {plen});

        std::vector<TokenId> step_tokens = {42, 43};
        std::vector<TokenPlan> step_plans = {{0, plen, plen, true},
                                             {0, plen + 1, plen + 1, true}};
        if (with_pads) {
            step_tokens.push_back(tok::kPad);
            step_plans.push_back({0, plen + 2, plen + 2, false});
        }
        return model.forward_planned(step_tokens, step_plans, grid);
    };

    std::vector<LogitsRow> bare = run_step(false);
    std::vector<LogitsRow> padded = run_step(true);
    REQUIRE(padded.size() == 3);
    CHECK(max_abs_diff(bare[0], padded[0]) == 0.0f);
    CHECK(max_abs_diff(bare[1], padded[1]) == 0.0f);
}

TEST_CASE("logits only depend on the causal prefix") {
    Model model = Model::init(tiny_config(0xCA05));
    TokenSequence base = prompt_tokens("causality check");
    TokenSequence later = base;
    later[later.size() - 2] = 99;  // change a token near the end
    TokenSequence earlier = base;
    earlier[1] = 99;  // change a token near the start

    std::vector<LogitsRow> lb = naive_forward(model, base);
    std::vector<LogitsRow> ll = naive_forward(model, later);
    std::vector<LogitsRow> le = naive_forward(model, earlier);

    // Everything strictly before the late edit is untouched, bit for bit.
    for (size_t i = 0; i + 2 < base.size(); ++i) {
        CHECK(max_abs_diff(lb[i], ll[i]) == 0.0f);
    }
    // The edited position itself feeds its own logits.
    CHECK(max_abs_diff(lb[base.size() - 2], ll[base.size() - 2]) > 0.0f);
    // An early edit reaches the final position through attention.
    CHECK(max_abs_diff(lb.back(), le.back()) > 0.0f);
}

TEST_CASE("forward validates its inputs") {
    Model model = Model::init(tiny_config());
    UnpadArena cache(model.config().num_layers, 1, 64, model.config().hidden());

    RaggedBatch oov = concatenate_inputs({{tok::kBos, 9999}});
    CHECK_THROWS_AS(model.forward(oov, cache, fresh_slots(oov)), ContractError);

    RaggedBatch ok = concatenate_inputs({{tok::kBos, 42}});
    std::vector<TokenSlot> wrong = {{0, 0}, {0, 2}};  // gap against the cache extent
    CHECK_THROWS_AS(model.forward(ok, cache, wrong), ContractError);

    std::vector<TokenSlot> misordered = {{0, 1}, {0, 0}};
    CHECK_THROWS_AS(model.forward(ok, cache, misordered), ContractError);

    // Walking past max_positions must fail loudly, not wrap.
    ModelConfig small = tiny_config();
    small.max_positions = 4;
    Model cramped = Model::init(small);
    UnpadArena little(small.num_layers, 1, 8, small.hidden());
    RaggedBatch too_long = concatenate_inputs({{tok::kBos, 10, 11, 12, 13}});
    CHECK_THROWS_AS(cramped.forward(too_long, little, fresh_slots(too_long)),
                    CapacityError);
}
