#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "exstyle/checkpoint.hpp"
#include "exstyle/config.hpp"
#include "exstyle/corpus.hpp"
#include "exstyle/pgm.hpp"
#include "exstyle/train.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace exstyle;
namespace fs = std::filesystem;

namespace {

fs::path temp_root() {
    const fs::path p = fs::temp_directory_path() / "exstyle_harness_tests";
    fs::create_directories(p);
    return p;
}

// A small corpus shared by the training tests; generated once per run.
const std::string& small_corpus() {
    static std::string dir = [] {
        CorpusConfig cc;
        cc.out_dir = (temp_root() / "corpus_small").string();
        cc.master_seed = 99;
        cc.n_source = 20;
        cc.n_target = 20;
        cc.n_heldout_source = 10;
        cc.n_heldout_target = 10;
        if (!fs::exists(fs::path(cc.out_dir) / "manifest.csv")) make_dataset(cc);
        return cc.out_dir;
    }();
    return dir;
}

TrainConfig small_config(int steps) {
    TrainConfig cfg;
    cfg.corpus_dir = small_corpus();
    cfg.steps = steps;
    cfg.checkpoint_every = 1000000;  // keep the loop from writing unless asked
    cfg.out_dir = (temp_root() / "run").string();
    return cfg;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool params_bit_equal(const ModelBundle& a, const ModelBundle& b) {
    if (a.params.size() != b.params.size()) return false;
    for (const auto& [name, t] : a.params)
        if (!bit_equal(*t.data, *b.p(name).data)) return false;
    return true;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(EXSTYLE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config defaults round-trip through their text form") {
    TrainConfig a;
    TrainConfig b;
    b.apply(ConfigMap::parse_string(a.to_text()));
    CHECK(a.to_text() == b.to_text());

    const fs::path p = temp_root() / "roundtrip.cfg";
    {
        std::ofstream out(p);
        out << a.to_text();
    }
    CHECK(load_train_config(p.string()).to_text() == a.to_text());
}

TEST_CASE("config rejects unknown keys and malformed values") {
    TrainConfig cfg;
    CHECK_THROWS(cfg.apply(ConfigMap::parse_string("[train]\nbogus_knob = 1\n")));
    CHECK_THROWS(cfg.apply(ConfigMap::parse_string("[train]\nsteps = twelve\n")));
    CHECK_THROWS(cfg.apply(ConfigMap::parse_string("[nonsense]\nsteps = 1\n")));
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS(bad.validate());
    bad = TrainConfig{};
    bad.beta1 = 1.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("checkpoint files round-trip bit-exactly and reject corruption") {
    std::mt19937_64 rng(5);
    std::map<std::string, Tensor> entries;
    entries.emplace("alpha", Tensor::normal({3, 4}, 0.0, 10.0, rng));
    entries.emplace("beta.gamma", Tensor::uniform({7}, -1e300, 1e300, rng));
    entries.emplace("tiny", Tensor::scalar(-0.0));

    const fs::path p = temp_root() / "ckpt_roundtrip.bin";
    save_checkpoint(p.string(), entries);
    const auto back = load_checkpoint(p.string());
    REQUIRE(back.size() == entries.size());
    for (const auto& [name, t] : entries) {
        REQUIRE(back.count(name) == 1);
        CHECK(back.at(name).shape == t.shape);
        CHECK(bit_equal(*back.at(name).data, *t.data));
    }

    // writing the same entries twice gives identical bytes
    const fs::path p2 = temp_root() / "ckpt_roundtrip2.bin";
    save_checkpoint(p2.string(), entries);
    CHECK(file_bytes(p) == file_bytes(p2));

    std::string bytes = file_bytes(p);
    bytes[0] ^= 0x40;
    const fs::path bad = temp_root() / "ckpt_bad.bin";
    {
        std::ofstream out(bad, std::ios::binary);
        out << bytes;
    }
    CHECK_THROWS(load_checkpoint(bad.string()));
    CHECK_THROWS(load_checkpoint((temp_root() / "does_not_exist.bin").string()));
}

TEST_CASE("trainer save/load preserves parameters and optimizer state bit-exactly") {
    Pools pools = load_pools(small_corpus());
    Trainer tr = make_trainer(small_config(2));
    train_step(tr, pools);
    train_step(tr, pools);

    const fs::path p = temp_root() / "trainer.bin";
    save_trainer(tr, p.string());
    Trainer back = make_trainer(small_config(2));
    load_trainer(back, p.string());

    CHECK(back.step == tr.step);
    CHECK(params_bit_equal(tr.models, back.models));
    CHECK(back.opt_g.t == tr.opt_g.t);
    CHECK(back.opt_es.t == tr.opt_es.t);
    for (const auto& [name, buf] : tr.opt_d.m) CHECK(bit_equal(buf, back.opt_d.m.at(name)));
    for (const auto& [name, buf] : tr.opt_g.v) CHECK(bit_equal(buf, back.opt_g.v.at(name)));
}

TEST_CASE("training is bit-exactly deterministic in (config, seed)") {
    Pools pools = load_pools(small_corpus());
    Trainer a = make_trainer(small_config(3));
    Trainer b = make_trainer(small_config(3));
    for (int i = 0; i < 3; ++i) {
        const LossRecord ra = train_step(a, pools);
        const LossRecord rb = train_step(b, pools);
        CHECK(ra.total == rb.total);
        CHECK(ra.style == rb.style);
        CHECK(ra.adv_d == rb.adv_d);
    }
    CHECK(params_bit_equal(a.models, b.models));
}

TEST_CASE("a checkpoint taken mid-run resumes bit-exactly") {
    Pools pools = load_pools(small_corpus());
    Trainer full = make_trainer(small_config(6));
    std::vector<LossRecord> full_records;
    for (int i = 0; i < 6; ++i) full_records.push_back(train_step(full, pools));

    Trainer half = make_trainer(small_config(6));
    for (int i = 0; i < 3; ++i) train_step(half, pools);
    const fs::path p = temp_root() / "mid.bin";
    save_trainer(half, p.string());

    Trainer resumed = make_trainer(small_config(6));
    load_trainer(resumed, p.string());
    REQUIRE(resumed.step == 3);
    for (int i = 3; i < 6; ++i) {
        const LossRecord r = train_step(resumed, pools);
        CHECK(r.total == full_records[static_cast<std::size_t>(i)].total);
    }
    CHECK(params_bit_equal(full.models, resumed.models));
}

TEST_CASE("a non-finite loss aborts the step with the offending term named") {
    Pools pools = load_pools(small_corpus());
    Trainer tr = make_trainer(small_config(1));
    tr.models.p("d.c1.w").array() = std::nan("");
    const int step_before = tr.step;
    CHECK_THROWS_WITH_AS(train_step(tr, pools),
                         doctest::Contains("non-finite"), std::runtime_error);
    CHECK(tr.step == step_before);
    CHECK(tr.opt_d.t == 0);
}

TEST_CASE("the style loss trends down over 200 steps") {
    Pools pools = load_pools(small_corpus());
    Trainer tr = make_trainer(small_config(200));
    std::vector<double> style;
    for (int i = 0; i < 200; ++i) style.push_back(train_step(tr, pools).style);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) {
        head += style[static_cast<std::size_t>(i)] / 20;
        tail += style[static_cast<std::size_t>(180 + i)] / 20;
    }
    INFO("first-20 mean ", head, " last-20 mean ", tail);
    CHECK(tail < head);
}

TEST_CASE("translate keeps dimensions and is deterministic") {
    Pools pools = load_pools(small_corpus());
    ModelBundle m = init_models(64, 31);
    const Tensor& x = pools.src_heldout.front();
    const Tensor& e = pools.tgt_heldout.front();
    double s1 = 0.0, s2 = 0.0;
    Tensor a = translate_image(m, x, e, &s1);
    Tensor b = translate_image(m, x, e, &s2);
    CHECK(a.shape == x.shape);
    CHECK(bit_equal(*a.data, *b.data));
    CHECK(s1 == s2);
    CHECK(std::abs(s1) <= 1.0 + 1e-12);
}

TEST_CASE("augment stream covers every source with uniformly sampled exemplars") {
    Pools pools = load_pools(small_corpus());
    ModelBundle m = init_models(64, 31);
    auto items = augment_stream(m, pools.src_heldout, pools.tgt_heldout, 17);
    REQUIRE(items.size() == pools.src_heldout.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(items[i].source_index == i);
        CHECK(items[i].exemplar_index < pools.tgt_heldout.size());
        CHECK(items[i].image.shape == pools.src_heldout[i].shape);
    }
    auto again = augment_stream(m, pools.src_heldout, pools.tgt_heldout, 17);
    for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(again[i].exemplar_index == items[i].exemplar_index);
        CHECK(bit_equal(*again[i].image.data, *items[i].image.data));
    }

    // two seeds give different assignments
    const auto i1 = augment_exemplar_indices(50, 20, 1);
    const auto i2 = augment_exemplar_indices(50, 20, 2);
    CHECK(i1 != i2);
    CHECK_THROWS(augment_exemplar_indices(0, 5, 1));
    CHECK_THROWS(augment_exemplar_indices(5, 0, 1));

    // marginal uniformity: 10000 draws over 5 targets, binomial 3-sigma band
    const auto idx = augment_exemplar_indices(10000, 5, 1234);
    std::vector<int> counts(5, 0);
    for (std::size_t v : idx) ++counts[v];
    const double expected = 10000.0 / 5;
    const double sigma = std::sqrt(10000.0 * 0.2 * 0.8);
    for (int c : counts) CHECK(std::abs(c - expected) <= 3 * sigma);
}

TEST_CASE("CLI rejects bad invocations with usage errors") {
    CHECK(run_cli("") == 1);
    CHECK(run_cli("frobnicate") == 1);
    CHECK(run_cli("train --bogus-flag 1") == 1);
    CHECK(run_cli("train --config /nonexistent/missing.toml") == 1);
    CHECK(run_cli("translate --checkpoint /nonexistent.bin --input a.pgm --exemplar b.pgm") == 2);
    CHECK(run_cli("--print-config") == 0);
}

TEST_CASE("CLI corpus generation is byte-identical under a fixed seed") {
    const fs::path cfgp = temp_root() / "cli_corpus.cfg";
    const fs::path d1 = temp_root() / "cli_corpus_1";
    const fs::path d2 = temp_root() / "cli_corpus_2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    {
        std::ofstream out(cfgp);
        out << "[corpus]\nn_source = 12\nn_target = 12\nn_heldout_source = 10\n"
               "n_heldout_target = 10\n";
    }
    const std::string base = "gen-corpus --config " + cfgp.string() + " --seed 7 --out ";
    REQUIRE(run_cli(base + d1.string()) == 0);
    REQUIRE(run_cli(base + d2.string()) == 0);

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d1)) files.push_back(e.path().filename());
    REQUIRE(files.size() == 45);  // 44 images + manifest
    for (const auto& f : files) {
        REQUIRE(fs::exists(d2 / f));
        CHECK(file_bytes(d1 / f) == file_bytes(d2 / f));
    }
}
