#include "exstyle/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace exstyle {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        out.values[section.empty() ? key : section + "." + key] = value;
    }
    return out;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size())
        throw std::invalid_argument("config key '" + key + "': bad number '" + it->second + "'");
    return v;
}

int ConfigMap::get_int(const std::string& key, int fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size())
        throw std::invalid_argument("config key '" + key + "': bad integer '" + it->second + "'");
    return v;
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size())
        throw std::invalid_argument("config key '" + key + "': bad integer '" + it->second + "'");
    return v;
}

void TrainConfig::apply(const ConfigMap& cfg) {
    static const std::set<std::string> known = {
        "train.style_dim",   "train.negatives",   "train.patch_size", "train.nce_locations",
        "train.batch_size",  "train.steps",       "train.lr_g",       "train.lr_d",
        "train.lr_es",       "train.beta1",       "train.beta2",      "train.adam_eps",
        "train.seed",        "train.checkpoint_every", "train.corpus_dir", "train.out_dir",
        "loss.lambda_style", "loss.lambda_con",   "loss.lambda_nce",  "loss.tau_style",
        "loss.tau_patch",
        "corpus.dir",        "corpus.master_seed", "corpus.size",     "corpus.families",
        "corpus.n_source",   "corpus.n_target",   "corpus.n_heldout_source",
        "corpus.n_heldout_target",
    };
    for (const auto& [key, value] : cfg.values)
        if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");

    style_dim = cfg.get_int("train.style_dim", style_dim);
    negatives = cfg.get_int("train.negatives", negatives);
    patch_size = cfg.get_int("train.patch_size", patch_size);
    nce_locations = cfg.get_int("train.nce_locations", nce_locations);
    batch_size = cfg.get_int("train.batch_size", batch_size);
    steps = cfg.get_int("train.steps", steps);
    lr_g = cfg.get_double("train.lr_g", lr_g);
    lr_d = cfg.get_double("train.lr_d", lr_d);
    lr_es = cfg.get_double("train.lr_es", lr_es);
    beta1 = cfg.get_double("train.beta1", beta1);
    beta2 = cfg.get_double("train.beta2", beta2);
    adam_eps = cfg.get_double("train.adam_eps", adam_eps);
    seed = cfg.get_u64("train.seed", seed);
    checkpoint_every = cfg.get_int("train.checkpoint_every", checkpoint_every);
    corpus_dir = cfg.get_string("train.corpus_dir", corpus_dir);
    out_dir = cfg.get_string("train.out_dir", out_dir);

    weights.lambda_style = cfg.get_double("loss.lambda_style", weights.lambda_style);
    weights.lambda_con = cfg.get_double("loss.lambda_con", weights.lambda_con);
    weights.lambda_nce = cfg.get_double("loss.lambda_nce", weights.lambda_nce);
    weights.tau_style = cfg.get_double("loss.tau_style", weights.tau_style);
    weights.tau_patch = cfg.get_double("loss.tau_patch", weights.tau_patch);

    corpus.out_dir = cfg.get_string("corpus.dir", corpus.out_dir);
    corpus.master_seed = cfg.get_u64("corpus.master_seed", corpus.master_seed);
    corpus.size = cfg.get_int("corpus.size", corpus.size);
    corpus.families = cfg.get_int("corpus.families", corpus.families);
    corpus.n_source = cfg.get_int("corpus.n_source", corpus.n_source);
    corpus.n_target = cfg.get_int("corpus.n_target", corpus.n_target);
    corpus.n_heldout_source = cfg.get_int("corpus.n_heldout_source", corpus.n_heldout_source);
    corpus.n_heldout_target = cfg.get_int("corpus.n_heldout_target", corpus.n_heldout_target);
    validate();
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(style_dim, "style_dim");
    positive(negatives, "negatives");
    positive(patch_size, "patch_size");
    positive(nce_locations, "nce_locations");
    positive(batch_size, "batch_size");
    positive(steps, "steps");
    positive(lr_g, "lr_g");
    positive(lr_d, "lr_d");
    positive(lr_es, "lr_es");
    positive(adam_eps, "adam_eps");
    positive(checkpoint_every, "checkpoint_every");
    positive(weights.tau_style, "tau_style");
    positive(weights.tau_patch, "tau_patch");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("adam betas must lie in [0, 1)");
    if (patch_size < 32) throw std::invalid_argument("patch_size must be >= 32");
}

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "[train]\n"
        << "style_dim = " << style_dim << "\n"
        << "negatives = " << negatives << "\n"
        << "patch_size = " << patch_size << "\n"
        << "nce_locations = " << nce_locations << "\n"
        << "batch_size = " << batch_size << "\n"
        << "steps = " << steps << "\n"
        << "lr_g = " << lr_g << "\n"
        << "lr_d = " << lr_d << "\n"
        << "lr_es = " << lr_es << "\n"
        << "beta1 = " << beta1 << "\n"
        << "beta2 = " << beta2 << "\n"
        << "adam_eps = " << adam_eps << "\n"
        << "seed = " << seed << "\n"
        << "checkpoint_every = " << checkpoint_every << "\n"
        << "corpus_dir = " << corpus_dir << "\n"
        << "out_dir = " << out_dir << "\n"
        << "\n[loss]\n"
        << "lambda_style = " << weights.lambda_style << "\n"
        << "lambda_con = " << weights.lambda_con << "\n"
        << "lambda_nce = " << weights.lambda_nce << "\n"
        << "tau_style = " << weights.tau_style << "\n"
        << "tau_patch = " << weights.tau_patch << "\n"
        << "\n[corpus]\n"
        << "dir = " << corpus.out_dir << "\n"
        << "master_seed = " << corpus.master_seed << "\n"
        << "size = " << corpus.size << "\n"
        << "families = " << corpus.families << "\n"
        << "n_source = " << corpus.n_source << "\n"
        << "n_target = " << corpus.n_target << "\n"
        << "n_heldout_source = " << corpus.n_heldout_source << "\n"
        << "n_heldout_target = " << corpus.n_heldout_target << "\n";
    return out.str();
}

TrainConfig load_train_config(const std::string& path) {
    TrainConfig cfg;
    cfg.apply(ConfigMap::parse_file(path));
    return cfg;
}

}  // namespace exstyle
