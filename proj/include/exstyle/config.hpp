#pragma once

#include "exstyle/corpus.hpp"
#include "exstyle/losses.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace exstyle {

// Line-oriented "key = value" file with [section] headers; '#' starts a
// comment. Keys are stored fully qualified as "section.key".
struct ConfigMap {
    std::map<std::string, std::string> values;

    static ConfigMap parse_string(const std::string& text);
    static ConfigMap parse_file(const std::string& path);

    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
};

// Every knob of a training run; defaults reproduce the desk experiment.
struct TrainConfig {
    LossWeights weights;          // lambda/tau defaults live in LossWeights
    int style_dim = 256;
    int negatives = 8;            // contrastive negatives per style query
    int patch_size = 32;          // contrastive crop side
    int nce_locations = 64;       // sampled positions per tapped layer
    int batch_size = 4;
    int steps = 2000;
    double lr_g = 2e-4;           // generator + heads
    double lr_d = 2e-4;
    double lr_es = 1e-4;          // style encoder
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 7;
    int checkpoint_every = 500;
    std::string corpus_dir = "corpus";
    std::string out_dir = "run";
    CorpusConfig corpus;          // used by corpus generation

    // Applies overrides from a parsed file; unknown keys are rejected.
    void apply(const ConfigMap& cfg);
    void validate() const;

    // Full round-trippable listing of every setting.
    std::string to_text() const;
};

TrainConfig load_train_config(const std::string& path);

}  // namespace exstyle
