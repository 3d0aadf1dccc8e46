#include "exstyle/train.hpp"

#include "exstyle/checkpoint.hpp"
#include "exstyle/corpus.hpp"
#include "exstyle/losses.hpp"
#include "exstyle/perturb.hpp"
#include "exstyle/pgm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace exstyle {

namespace {

namespace fs = std::filesystem;

double urand(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(urand(rng, 0.0, 1.0) * static_cast<double>(n));
}

Tensor as_chw(const Tensor& img) {
    if (img.rank() == 3) return img;
    Tensor out = img;
    out.shape = {1, img.shape[0], img.shape[1]};
    return out;
}

Tensor crop(const Tensor& img, int r, int c, int side) {
    const int h = img.shape[1], w = img.shape[2];
    if (r < 0 || c < 0 || r + side > h || c + side > w)
        throw std::invalid_argument("crop out of bounds");
    Tensor out = Tensor::zeros({1, side, side});
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            (*out.data)[static_cast<std::size_t>(y * side + x)] =
                (*img.data)[static_cast<std::size_t>((r + y) * w + (c + x))];
    return out;
}

// One perturbation kind per training iteration, N independent instances.
PerturbationSpec sample_negative_spec(PerturbKind kind, std::mt19937_64& rng) {
    const PerturbRanges r;
    PerturbationSpec spec;
    spec.kind = kind;
    spec.seed = rng();
    const bool all = kind == PerturbKind::mixture;
    if (all || kind == PerturbKind::contrast) spec.gamma = urand(rng, r.gamma_min, r.gamma_max);
    if (all || kind == PerturbKind::gaussian_smooth)
        spec.sigma = urand(rng, r.sigma_min, r.sigma_max);
    if (all || kind == PerturbKind::gaussian_noise)
        spec.noise_std = urand(rng, r.noise_min, r.noise_max);
    if (all || kind == PerturbKind::bias_field)
        spec.strength = urand(rng, r.strength_min, r.strength_max);
    return spec;
}

std::map<std::string, std::vector<double>> snapshot_params(const ModelBundle& m) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, t] : m.params) out.emplace(name, *t.data);
    return out;
}

void restore_params(ModelBundle& m, const std::map<std::string, std::vector<double>>& snap) {
    for (auto& [name, t] : m.params) *t.data = snap.at(name);
}

StyleVec to_stylevec(const Tensor& t) {
    return Eigen::Map<const Eigen::VectorXd>(t.data->data(), t.size());
}

}  // namespace

Pools load_pools(const std::string& corpus_dir) {
    const auto manifest = read_manifest((fs::path(corpus_dir) / "manifest.csv").string());
    Pools pools;
    for (const ManifestEntry& e : manifest) {
        Tensor img = as_chw(read_pgm((fs::path(corpus_dir) / e.filename).string()));
        if (e.domain == "source") {
            if (e.split == "train") {
                pools.src_train.push_back(img);
                pools.src_train_ids.push_back(e.filename);
            } else {
                pools.src_heldout.push_back(img);
                pools.src_heldout_ids.push_back(e.filename);
                pools.src_heldout_seeds.push_back(e.anatomy_seed);
            }
        } else {
            if (e.split == "train") {
                pools.tgt_train.push_back(img);
                pools.tgt_train_ids.push_back(e.filename);
                pools.tgt_train_family.push_back(e.family_id);
            } else {
                pools.tgt_heldout.push_back(img);
                pools.tgt_heldout_ids.push_back(e.filename);
                pools.tgt_heldout_family.push_back(e.family_id);
            }
        }
    }
    if (pools.src_train.empty() || pools.tgt_train.empty())
        throw std::runtime_error("corpus at " + corpus_dir + " has empty training pools");
    return pools;
}

Trainer make_trainer(const TrainConfig& cfg) {
    cfg.validate();
    Trainer tr;
    tr.cfg = cfg;
    tr.models = init_models(cfg.style_dim, mix_seed(cfg.seed, 0x1217));
    tr.opt_g = Adam{cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_eps};
    tr.opt_d = Adam{cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_eps};
    tr.opt_es = Adam{cfg.lr_es, cfg.beta1, cfg.beta2, cfg.adam_eps};
    return tr;
}

LossRecord train_step(Trainer& tr, const Pools& pools) {
    const TrainConfig& cfg = tr.cfg;
    ModelBundle& m = tr.models;
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x57E50000ULL + static_cast<std::uint64_t>(tr.step)));
    const int B = cfg.batch_size;
    const int S = cfg.nce_locations;
    const int side = pools.src_train.front().shape[1];

    // draw the whole step's randomness up front, in a fixed order
    std::vector<std::size_t> src_idx, tgt_idx, es_idx;
    for (int b = 0; b < B; ++b) {
        src_idx.push_back(pick(rng, pools.src_train.size()));
        tgt_idx.push_back(pick(rng, pools.tgt_train.size()));
    }
    std::vector<LayerLocations> locs(static_cast<std::size_t>(B));
    const std::vector<int>& tap_channels = nce_tap_channels();
    for (int b = 0; b < B; ++b) {
        const int dims[3] = {side, side / 2, side / 4};
        for (std::size_t l = 0; l < tap_channels.size(); ++l) {
            std::vector<std::pair<int, int>> layer;
            for (int s = 0; s < S; ++s)
                layer.emplace_back(static_cast<int>(pick(rng, static_cast<std::size_t>(dims[l]))),
                                   static_cast<int>(pick(rng, static_cast<std::size_t>(dims[l]))));
            locs[static_cast<std::size_t>(b)].push_back(std::move(layer));
        }
    }
    struct EsDraw {
        std::size_t exemplar;
        int qr, qc, pr, pc;
        std::vector<PerturbationSpec> negs;
    };
    std::vector<EsDraw> es(static_cast<std::size_t>(B));
    const int max_corner = side - cfg.patch_size;
    for (int b = 0; b < B; ++b) {
        EsDraw& d = es[static_cast<std::size_t>(b)];
        d.exemplar = pick(rng, pools.tgt_train.size());
        d.qr = static_cast<int>(pick(rng, static_cast<std::size_t>(max_corner + 1)));
        d.qc = static_cast<int>(pick(rng, static_cast<std::size_t>(max_corner + 1)));
        d.pr = static_cast<int>(pick(rng, static_cast<std::size_t>(max_corner + 1)));
        d.pc = static_cast<int>(pick(rng, static_cast<std::size_t>(max_corner + 1)));
        const auto kind = static_cast<PerturbKind>(pick(rng, 5));
        for (int n = 0; n < cfg.negatives; ++n) d.negs.push_back(sample_negative_spec(kind, rng));
    }

    const auto snap = snapshot_params(m);
    auto opt_d_back = tr.opt_d;
    auto opt_g_back = tr.opt_g;
    auto opt_es_back = tr.opt_es;
    auto fail_msg = [&](const std::string& msg) {
        restore_params(m, snap);
        tr.opt_d = opt_d_back;
        tr.opt_g = opt_g_back;
        tr.opt_es = opt_es_back;
        m.zero_all_grads();
        throw std::runtime_error(msg + " at step " + std::to_string(tr.step) +
                                 "; step aborted, parameters restored");
    };
    auto fail = [&](const std::string& term) { fail_msg("non-finite " + term); };
    auto checked = [&](const Tensor& t, const char* term) {
        if (!std::isfinite(t.value())) fail(term);
        return t.value();
    };

    LossRecord rec;
    rec.step = tr.step;

    try {
    // detached exemplar style vectors, shared by the D and G phases
    std::vector<Tensor> v_detached;
    for (int b = 0; b < B; ++b)
        v_detached.push_back(
            encode_style(nullptr, m, pools.tgt_train[tgt_idx[static_cast<std::size_t>(b)]]));

    // ---- generate once per item; the same outputs feed the D and G phases ----
    Tape tape_g;
    std::vector<GenTaps> taps_x(static_cast<std::size_t>(B));
    std::vector<Tensor> y_hat;
    for (int b = 0; b < B; ++b) {
        const Tensor& x = pools.src_train[src_idx[static_cast<std::size_t>(b)]];
        const Tensor code =
            generator_encode(&tape_g, m, x, &taps_x[static_cast<std::size_t>(b)]);
        y_hat.push_back(
            generator_decode(&tape_g, m, code, v_detached[static_cast<std::size_t>(b)]));
    }

    // ---- discriminator phase ----
    std::vector<Tensor> d_real_values;
    {
        Tape tape;
        Tensor loss = Tensor::scalar(0.0);
        for (int b = 0; b < B; ++b) {
            const Tensor& y = pools.tgt_train[tgt_idx[static_cast<std::size_t>(b)]];
            const Tensor d_real = discriminate(&tape, m, y);
            const Tensor d_fake =
                discriminate(&tape, m, y_hat[static_cast<std::size_t>(b)].detached());
            d_real_values.push_back(d_real.detached());
            loss = ops::add(&tape, loss, adversarial_losses(&tape, d_real, d_fake).first);
        }
        loss = ops::scale(&tape, loss, 1.0 / B);
        rec.adv_d = checked(loss, "adversarial_d");
        tape.backward(loss);
        tr.opt_d.step(m, m.group("d"));
        m.zero_all_grads();
    }

    // ---- generator phase, scored against the freshly updated discriminator ----
    {
        Tape& tape = tape_g;
        Tensor adv = Tensor::scalar(0.0);
        Tensor nce = Tensor::scalar(0.0);
        Tensor con = Tensor::scalar(0.0);
        for (int b = 0; b < B; ++b) {
            const Tensor& v = v_detached[static_cast<std::size_t>(b)];
            const Tensor& yh = y_hat[static_cast<std::size_t>(b)];
            const Tensor d_fake = discriminate(&tape, m, yh);
            adv = ops::add(&tape, adv,
                           adversarial_losses(&tape, d_real_values[static_cast<std::size_t>(b)],
                                              d_fake)
                               .second);

            GenTaps taps_y;
            generator_encode(&tape, m, yh, &taps_y);
            const auto feats_in = extract_patch_features(
                &tape, m, taps_x[static_cast<std::size_t>(b)], locs[static_cast<std::size_t>(b)]);
            const auto feats_out =
                extract_patch_features(&tape, m, taps_y, locs[static_cast<std::size_t>(b)]);
            nce = ops::add(&tape, nce,
                           patch_nce(&tape, feats_out, feats_in, cfg.weights.tau_patch));

            const Tensor v_gen = encode_style(&tape, m, yh);
            con = ops::add(&tape, con, style_consistency(&tape, v, v_gen));
        }
        adv = ops::scale(&tape, adv, 1.0 / B);
        nce = ops::scale(&tape, nce, 1.0 / B);
        con = ops::scale(&tape, con, 1.0 / B);
        rec.adv_g = checked(adv, "adversarial_g");
        rec.patch_nce = checked(nce, "patch_nce");
        rec.consistency = checked(con, "consistency");
        Tensor loss = ops::add(&tape, adv, ops::scale(&tape, nce, cfg.weights.lambda_nce));
        loss = ops::add(&tape, loss, ops::scale(&tape, con, cfg.weights.lambda_con));
        tape.backward(loss);
        // E_S stays frozen here: its accumulated gradients are discarded
        tr.opt_g.step(m, m.group("g"));
        m.zero_all_grads();
    }

    // ---- style encoder phase ----
    {
        Tape tape;
        Tensor loss = Tensor::scalar(0.0);
        for (int b = 0; b < B; ++b) {
            const EsDraw& d = es[static_cast<std::size_t>(b)];
            const Tensor& img = pools.tgt_train[d.exemplar];
            const Tensor query = crop(img, d.qr, d.qc, cfg.patch_size);
            const Tensor positive = crop(img, d.pr, d.pc, cfg.patch_size);
            const Tensor vq = encode_style(&tape, m, query);
            const Tensor vp = encode_style(&tape, m, positive);
            std::vector<Tensor> vn;
            for (const PerturbationSpec& spec : d.negs)
                vn.push_back(encode_style(&tape, m, apply(spec, positive)));
            loss = ops::add(&tape, loss, style_nce(&tape, vq, vp, vn, cfg.weights.tau_style));
        }
        loss = ops::scale(&tape, loss, 1.0 / B);
        rec.style = checked(loss, "style");
        Tensor weighted = ops::scale(&tape, loss, cfg.weights.lambda_style);
        tape.backward(weighted);
        tr.opt_es.step(m, m.group("es"));
        m.zero_all_grads();
    }
    } catch (const std::invalid_argument& e) {
        // finite guards inside the loss functions fire before the per-term
        // checks above; give them the same abort-and-restore treatment
        if (std::string(e.what()).find("non-finite") != std::string::npos) fail_msg(e.what());
        throw;
    }

    rec.total = rec.adv_g + cfg.weights.lambda_nce * rec.patch_nce +
                cfg.weights.lambda_style * rec.style + cfg.weights.lambda_con * rec.consistency;
    ++tr.step;
    return rec;
}

std::vector<LossRecord> train_loop(Trainer& tr, const Pools& pools) {
    const TrainConfig& cfg = tr.cfg;
    fs::create_directories(cfg.out_dir);
    const fs::path log_path = fs::path(cfg.out_dir) / "train_log.csv";
    const bool fresh = !fs::exists(log_path) || tr.step == 0;
    std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open " + log_path.string());
    if (fresh) log << "step,adv_g,adv_d,patch_nce,style,consistency,total\n";
    log.precision(17);

    {
        std::ofstream cfg_out(fs::path(cfg.out_dir) / "config.txt");
        cfg_out << cfg.to_text();
    }

    const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
    std::vector<LossRecord> records;
    while (tr.step < cfg.steps) {
        const LossRecord rec = train_step(tr, pools);
        log << rec.step << ',' << rec.adv_g << ',' << rec.adv_d << ',' << rec.patch_nce << ','
            << rec.style << ',' << rec.consistency << ',' << rec.total << '\n';
        log.flush();
        records.push_back(rec);
        if (tr.step % cfg.checkpoint_every == 0 || tr.step == cfg.steps) save_trainer(tr, ckpt);
    }
    return records;
}

void save_trainer(const Trainer& tr, const std::string& path) {
    std::map<std::string, Tensor> entries;
    for (const auto& [name, t] : tr.models.params) entries.emplace(name, t);
    tr.opt_g.export_state("opt.g", entries);
    tr.opt_d.export_state("opt.d", entries);
    tr.opt_es.export_state("opt.es", entries);
    entries.emplace("meta.step", Tensor::scalar(static_cast<double>(tr.step)));
    entries.emplace("meta.style_dim", Tensor::scalar(static_cast<double>(tr.cfg.style_dim)));
    save_checkpoint(path, entries);
}

void load_trainer(Trainer& tr, const std::string& path) {
    const auto entries = load_checkpoint(path);
    const auto meta = entries.find("meta.step");
    if (meta == entries.end()) throw std::runtime_error("checkpoint lacks meta.step: " + path);
    for (auto& [name, t] : tr.models.params) {
        const auto it = entries.find(name);
        if (it == entries.end())
            throw std::runtime_error("checkpoint missing parameter '" + name + "'");
        if (it->second.shape != t.shape)
            throw std::runtime_error("checkpoint shape mismatch for '" + name + "'");
        *t.data = *it->second.data;
    }
    tr.opt_g.import_state("opt.g", entries);
    tr.opt_d.import_state("opt.d", entries);
    tr.opt_es.import_state("opt.es", entries);
    tr.step = static_cast<int>(meta->second.value());
}

Tensor translate_image(const ModelBundle& m, const Tensor& x, const Tensor& exemplar,
                       double* sim_out) {
    const Tensor v = encode_style(nullptr, m, as_chw(exemplar));
    const Tensor out = generate(nullptr, m, as_chw(x), v);
    if (sim_out) {
        const Tensor v_out = encode_style(nullptr, m, out);
        *sim_out = to_stylevec(v_out).dot(to_stylevec(v));
    }
    return out;
}

std::vector<std::size_t> augment_exemplar_indices(std::size_t n_sources, std::size_t n_targets,
                                                  std::uint64_t seed) {
    if (n_sources == 0 || n_targets == 0)
        throw std::invalid_argument("augment_stream: empty image pool");
    std::mt19937_64 rng(mix_seed(seed, 0xA06));
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_sources; ++i) out.push_back(pick(rng, n_targets));
    return out;
}

std::vector<AugmentItem> augment_stream(const ModelBundle& m, const std::vector<Tensor>& sources,
                                        const std::vector<Tensor>& targets, std::uint64_t seed) {
    const auto idx = augment_exemplar_indices(sources.size(), targets.size(), seed);
    std::vector<AugmentItem> out;
    for (std::size_t i = 0; i < sources.size(); ++i)
        out.push_back({translate_image(m, sources[i], targets[idx[i]]), i, idx[i]});
    return out;
}

StyleBank embed_pool(const ModelBundle& m, const std::vector<Tensor>& images,
                     const std::vector<std::string>& ids) {
    if (images.size() != ids.size())
        throw std::invalid_argument("embed_pool: id/image count mismatch");
    StyleBank bank;
    for (std::size_t i = 0; i < images.size(); ++i)
        bank.entries.push_back({ids[i], to_stylevec(encode_style(nullptr, m, as_chw(images[i])))});
    bank.validate();
    return bank;
}

}  // namespace exstyle
