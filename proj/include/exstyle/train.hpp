#pragma once

#include "exstyle/config.hpp"
#include "exstyle/models.hpp"
#include "exstyle/optimizer.hpp"
#include "exstyle/stylespace.hpp"

#include <string>
#include <vector>

namespace exstyle {

// Per-step loss values, all batch means.
struct LossRecord {
    int step = 0;
    double adv_g = 0.0;
    double adv_d = 0.0;
    double patch_nce = 0.0;
    double style = 0.0;
    double consistency = 0.0;
    double total = 0.0;  // adv_g + lambda_nce*patch_nce + lambda_style*style + lambda_con*consistency
};

// Image pools loaded from a corpus directory; family labels are carried for
// evaluation only and never consulted by training.
struct Pools {
    std::vector<Tensor> src_train, tgt_train, src_heldout, tgt_heldout;
    std::vector<std::string> src_train_ids, tgt_train_ids, src_heldout_ids, tgt_heldout_ids;
    std::vector<std::uint64_t> src_heldout_seeds;  // anatomy seeds, for mask oracles
    std::vector<int> tgt_train_family, tgt_heldout_family;
};

Pools load_pools(const std::string& corpus_dir);

struct Trainer {
    TrainConfig cfg;
    ModelBundle models;
    Adam opt_g, opt_d, opt_es;
    int step = 0;  // completed steps
};

Trainer make_trainer(const TrainConfig& cfg);

// One full D -> G -> E_S update. All randomness derives from
// (cfg.seed, trainer.step), so a resumed run continues bit-exactly.
// A non-finite loss restores the pre-step parameters and throws, naming the
// offending term.
LossRecord train_step(Trainer& tr, const Pools& pools);

// Runs steps until cfg.steps, appending to <out_dir>/train_log.csv and
// writing checkpoint.bin every cfg.checkpoint_every steps and at the end.
std::vector<LossRecord> train_loop(Trainer& tr, const Pools& pools);

// Model + optimizer + step counter; bit-exact round trip.
void save_trainer(const Trainer& tr, const std::string& path);
void load_trainer(Trainer& tr, const std::string& path);

// generate(x, encode_style(exemplar)); optionally reports
// sim(E_S(output), E_S(exemplar)).
Tensor translate_image(const ModelBundle& m, const Tensor& x, const Tensor& exemplar,
                       double* sim_out = nullptr);

struct AugmentItem {
    Tensor image;
    std::size_t source_index = 0;
    std::size_t exemplar_index = 0;
};

// The exemplar assignment used by augment_stream: one uniformly drawn target
// index per source, fully determined by (n_sources, n_targets, seed).
std::vector<std::size_t> augment_exemplar_indices(std::size_t n_sources, std::size_t n_targets,
                                                  std::uint64_t seed);

// One translated image per source, each conditioned on a uniformly sampled
// exemplar from the target pool; deterministic under seed.
std::vector<AugmentItem> augment_stream(const ModelBundle& m, const std::vector<Tensor>& sources,
                                        const std::vector<Tensor>& targets, std::uint64_t seed);

// Encode a pool into a StyleBank for clustering/analysis.
StyleBank embed_pool(const ModelBundle& m, const std::vector<Tensor>& images,
                     const std::vector<std::string>& ids);

}  // namespace exstyle
