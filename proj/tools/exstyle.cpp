// Command-line front end: corpus generation, training, translation,
// interpolation, embedding analysis, clustering, and gradient checking.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "exstyle/checkpoint.hpp"
#include "exstyle/config.hpp"
#include "exstyle/corpus.hpp"
#include "exstyle/gradcheck_suite.hpp"
#include "exstyle/pgm.hpp"
#include "exstyle/slerp.hpp"
#include "exstyle/stylespace.hpp"
#include "exstyle/train.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace exstyle;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void print_usage(std::ostream& os) {
    os << "usage: exstyle <subcommand> [options]\n"
          "\n"
          "subcommands:\n"
          "  gen-corpus   generate the synthetic two-domain corpus\n"
          "  train        run the training loop\n"
          "  translate    restyle one source image with one exemplar\n"
          "  interpolate  sweep the style between two exemplars\n"
          "  embed        write style vectors of a target pool to styles.csv\n"
          "  cluster      cluster a target pool; writes clusters.csv + scatter.pgm\n"
          "  grad-check   run the finite-difference gradient suite\n"
          "\n"
          "global options:\n"
          "  --config PATH     read settings from a config file\n"
          "  --seed U64        override the master seed\n"
          "  --out DIR         override the output directory\n"
          "  --print-config    print the effective config and exit\n"
          "\n"
          "subcommand options:\n"
          "  train        --resume\n"
          "  translate    --checkpoint PATH --input PGM --exemplar PGM\n"
          "  interpolate  --checkpoint PATH --input PGM --exemplar-a PGM\n"
          "               --exemplar-b PGM [--steps N]\n"
          "  embed        --checkpoint PATH --corpus DIR [--split train|heldout|all]\n"
          "  cluster      --checkpoint PATH --corpus DIR [--split ...]\n"
          "               [--kmin N] [--kmax N]\n";
}

struct Args {
    std::string subcommand;
    std::map<std::string, std::string> options;  // flag name (no --) -> value
    bool print_config = false;
    bool resume = false;

    bool has(const std::string& k) const { return options.count(k) != 0; }
    std::string get(const std::string& k) const {
        auto it = options.find(k);
        if (it == options.end()) throw UsageError("missing required option --" + k);
        return it->second;
    }
    std::string get_or(const std::string& k, const std::string& fallback) const {
        auto it = options.find(k);
        return it == options.end() ? fallback : it->second;
    }
};

Args parse_args(int argc, char** argv) {
    static const std::map<std::string, std::vector<std::string>> valued = {
        {"gen-corpus", {"config", "seed", "out"}},
        {"train", {"config", "seed", "out"}},
        {"translate", {"config", "seed", "out", "checkpoint", "input", "exemplar"}},
        {"interpolate",
         {"config", "seed", "out", "checkpoint", "input", "exemplar-a", "exemplar-b", "steps"}},
        {"embed", {"config", "seed", "out", "checkpoint", "corpus", "split"}},
        {"cluster", {"config", "seed", "out", "checkpoint", "corpus", "split", "kmin", "kmax"}},
        {"grad-check", {"config", "seed", "out"}},
    };
    Args args;
    if (argc < 2) throw UsageError("no subcommand given");
    args.subcommand = argv[1];
    if (args.subcommand == "--print-config") {  // allowed without a subcommand
        args.print_config = true;
        args.subcommand = "";
        if (argc > 2 && std::string(argv[2]) == "--config" && argc > 3)
            args.options["config"] = argv[3];
        else if (argc > 2)
            throw UsageError("unexpected argument after --print-config");
        return args;
    }
    auto known = valued.find(args.subcommand);
    if (known == valued.end()) throw UsageError("unknown subcommand '" + args.subcommand + "'");
    for (int i = 2; i < argc; ++i) {
        std::string a = argv[i];
        if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
        a = a.substr(2);
        if (a == "print-config") {
            args.print_config = true;
            continue;
        }
        if (a == "resume" && args.subcommand == "train") {
            args.resume = true;
            continue;
        }
        bool ok = false;
        for (const std::string& v : known->second) ok = ok || v == a;
        if (!ok) throw UsageError("unknown option '--" + a + "' for " + args.subcommand);
        if (i + 1 >= argc) throw UsageError("option '--" + a + "' needs a value");
        args.options[a] = argv[++i];
    }
    return args;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("invalid " + what + " '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("invalid " + what + " '" + s + "'");
    }
}

TrainConfig effective_config(const Args& args) {
    TrainConfig cfg;
    if (args.has("config")) {
        const std::string path = args.get("config");
        if (!fs::exists(path)) throw UsageError("config file not found: " + path);
        cfg = load_train_config(path);
    }
    if (args.has("seed")) {
        cfg.seed = parse_u64(args.get("seed"), "seed");
        cfg.corpus.master_seed = cfg.seed;
    }
    if (args.has("out")) cfg.out_dir = args.get("out");
    return cfg;
}

// Rebuild a trainer whose models match the checkpoint's style dimension, then
// load parameters and optimizer state.
Trainer trainer_from_checkpoint(const std::string& path, TrainConfig cfg) {
    if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
    const auto entries = load_checkpoint(path);
    const auto dim = entries.find("meta.style_dim");
    if (dim == entries.end())
        throw std::runtime_error("checkpoint lacks meta.style_dim: " + path);
    cfg.style_dim = static_cast<int>(dim->second.value());
    Trainer tr = make_trainer(cfg);
    load_trainer(tr, path);
    return tr;
}

Tensor load_image(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("image not found: " + path);
    Tensor img = read_pgm(path);
    Tensor chw = img;
    chw.shape = {1, img.shape[0], img.shape[1]};
    return chw;
}

StyleVec style_of(const ModelBundle& m, const Tensor& img) {
    const Tensor v = encode_style(nullptr, m, img);
    return Eigen::Map<const Eigen::VectorXd>(v.data->data(), v.size());
}

// Target-pool images selected by manifest split ("all" keeps both splits).
std::pair<std::vector<Tensor>, std::vector<std::string>> target_pool(
    const std::string& corpus_dir, const std::string& split) {
    if (split != "train" && split != "heldout" && split != "all")
        throw UsageError("invalid --split '" + split + "' (train|heldout|all)");
    const auto manifest = read_manifest((fs::path(corpus_dir) / "manifest.csv").string());
    std::vector<Tensor> images;
    std::vector<std::string> ids;
    for (const ManifestEntry& e : manifest) {
        if (e.domain != "target") continue;
        if (split != "all" && e.split != split) continue;
        images.push_back(load_image((fs::path(corpus_dir) / e.filename).string()));
        ids.push_back(e.filename);
    }
    if (images.empty())
        throw std::runtime_error("no target images for split '" + split + "' in " + corpus_dir);
    return {std::move(images), std::move(ids)};
}

int cmd_gen_corpus(const Args& args) {
    TrainConfig cfg = effective_config(args);
    CorpusConfig cc = cfg.corpus;
    if (args.has("out")) cc.out_dir = args.get("out");
    const auto manifest = make_dataset(cc);
    std::cout << "wrote " << manifest.size() << " images to " << cc.out_dir << "\n";
    return 0;
}

int cmd_train(const Args& args) {
    TrainConfig cfg = effective_config(args);
    Trainer tr;
    const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
    if (args.resume) {
        tr = trainer_from_checkpoint(ckpt, cfg);
        std::cout << "resuming from step " << tr.step << "\n";
    } else {
        tr = make_trainer(cfg);
    }
    Pools pools = load_pools(cfg.corpus_dir);
    const auto records = train_loop(tr, pools);
    if (!records.empty()) {
        const LossRecord& last = records.back();
        std::cout << "finished at step " << tr.step << " total=" << last.total << "\n";
    } else {
        std::cout << "nothing to do: checkpoint already at step " << tr.step << "\n";
    }
    return 0;
}

int cmd_translate(const Args& args) {
    TrainConfig cfg = effective_config(args);
    Trainer tr = trainer_from_checkpoint(args.get("checkpoint"), cfg);
    const std::string in_path = args.get("input");
    const std::string ex_path = args.get("exemplar");
    Tensor x = load_image(in_path);
    Tensor exemplar = load_image(ex_path);
    double sim = 0.0;
    Tensor out = translate_image(tr.models, x, exemplar, &sim);

    fs::create_directories(cfg.out_dir);
    const std::string in_id = fs::path(in_path).stem().string();
    const std::string ex_id = fs::path(ex_path).stem().string();
    const fs::path out_img = fs::path(cfg.out_dir) / (in_id + "__" + ex_id + ".pgm");
    write_pgm(out_img.string(), out);
    std::ofstream csv(fs::path(cfg.out_dir) / "translate.csv");
    csv.precision(17);
    csv << "input,exemplar,similarity\n" << in_id << ',' << ex_id << ',' << sim << '\n';
    std::cout << "wrote " << out_img.string() << " (similarity " << sim << ")\n";
    return 0;
}

int cmd_interpolate(const Args& args) {
    TrainConfig cfg = effective_config(args);
    Trainer tr = trainer_from_checkpoint(args.get("checkpoint"), cfg);
    const int steps = args.has("steps") ? parse_int(args.get("steps"), "steps") : 8;
    if (steps < 2) throw UsageError("--steps must be at least 2");
    Tensor x = load_image(args.get("input"));
    const StyleVec v0 = style_of(tr.models, load_image(args.get("exemplar-a")));
    const StyleVec v1 = style_of(tr.models, load_image(args.get("exemplar-b")));

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(fs::path(cfg.out_dir) / "interpolate.csv");
    csv.precision(17);
    csv << "t,angle_to_v0,similarity_to_v0,similarity_to_v1\n";
    const auto traj = slerp_trajectory(v0, v1, steps);
    for (int i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) / (steps - 1);
        const StyleVec& v = traj[static_cast<std::size_t>(i)];
        Tensor vt = Tensor::from({static_cast<int>(v.size())},
                                 std::vector<double>(v.data(), v.data() + v.size()));
        Tensor img = generate(nullptr, tr.models, x, vt);
        char name[32];
        std::snprintf(name, sizeof name, "interp_%03d.pgm", i);
        write_pgm((fs::path(cfg.out_dir) / name).string(), img);
        csv << t << ',' << angle_between(v0, v) << ',' << v0.dot(v) << ',' << v1.dot(v) << '\n';
    }
    std::cout << "wrote " << steps << " images and interpolate.csv to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_embed(const Args& args) {
    TrainConfig cfg = effective_config(args);
    Trainer tr = trainer_from_checkpoint(args.get("checkpoint"), cfg);
    const std::string corpus_dir = args.get_or("corpus", cfg.corpus_dir);
    auto [images, ids] = target_pool(corpus_dir, args.get_or("split", "all"));
    StyleBank bank = embed_pool(tr.models, images, ids);

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(fs::path(cfg.out_dir) / "styles.csv");
    csv.precision(17);
    csv << "image_id";
    for (int j = 1; j <= bank.dim(); ++j) csv << ",v" << j;
    csv << '\n';
    for (const auto& e : bank.entries) {
        csv << e.image_id;
        for (int j = 0; j < bank.dim(); ++j) csv << ',' << e.v[j];
        csv << '\n';
    }
    std::cout << "wrote " << bank.size() << " style vectors to "
              << (fs::path(cfg.out_dir) / "styles.csv").string() << "\n";
    return 0;
}

// 2-D scatter of the PCA projection: one gray level per cluster, exemplars
// marked with a bright 5-pixel cross.
void write_scatter(const std::string& path, const StyleBank& bank,
                   const std::vector<bool>& is_exemplar, int k) {
    const int side = 256;
    Tensor img = Tensor::zeros({side, side});
    const auto& p = bank.pca2;
    const double xmin = p.col(0).minCoeff(), xmax = p.col(0).maxCoeff();
    const double ymin = p.col(1).minCoeff(), ymax = p.col(1).maxCoeff();
    const double xs = xmax > xmin ? (side - 17) / (xmax - xmin) : 0.0;
    const double ys = ymax > ymin ? (side - 17) / (ymax - ymin) : 0.0;
    auto put = [&](int r, int c, double v) {
        if (r >= 0 && r < side && c >= 0 && c < side)
            img[r * side + c] = std::max(img[static_cast<std::int64_t>(r) * side + c], v);
    };
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const int c = 8 + static_cast<int>((p(static_cast<Eigen::Index>(i), 0) - xmin) * xs);
        const int r = 8 + static_cast<int>((p(static_cast<Eigen::Index>(i), 1) - ymin) * ys);
        const double shade = 0.35 + 0.5 * bank.labels[i] / std::max(1, k - 1);
        for (int dr = 0; dr < 2; ++dr)
            for (int dc = 0; dc < 2; ++dc) put(r + dr, c + dc, shade);
        if (is_exemplar[i])
            for (int d = -2; d <= 2; ++d) {
                put(r + d, c, 1.0);
                put(r, c + d, 1.0);
            }
    }
    write_pgm(path, img);
}

int cmd_cluster(const Args& args) {
    TrainConfig cfg = effective_config(args);
    Trainer tr = trainer_from_checkpoint(args.get("checkpoint"), cfg);
    const std::string corpus_dir = args.get_or("corpus", cfg.corpus_dir);
    auto [images, ids] = target_pool(corpus_dir, args.get_or("split", "all"));
    StyleBank bank = embed_pool(tr.models, images, ids);

    const int n = static_cast<int>(bank.size());
    int kmin = args.has("kmin") ? parse_int(args.get("kmin"), "kmin") : 2;
    int kmax = args.has("kmax") ? parse_int(args.get("kmax"), "kmax") : 6;
    if (kmin < 2 || kmax < kmin) throw UsageError("need 2 <= kmin <= kmax");
    kmax = std::min(kmax, n - 1);
    const int k = select_k(bank, kmin, kmax, cfg.seed);
    bank.labels = kmeans(bank, k, cfg.seed).labels;
    bank.pca2 = pca_project(bank, 2);
    const std::vector<double> typ = typicality(bank, bank.labels);
    const std::vector<std::string> exemplars = select_exemplars(bank, bank.labels);
    std::vector<bool> is_ex(bank.size(), false);
    for (std::size_t i = 0; i < bank.size(); ++i)
        is_ex[i] = bank.entries[i].image_id == exemplars[static_cast<std::size_t>(bank.labels[i])];

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(fs::path(cfg.out_dir) / "clusters.csv");
    csv.precision(17);
    csv << "image_id,pca_x,pca_y,label,typicality,is_exemplar\n";
    for (std::size_t i = 0; i < bank.size(); ++i)
        csv << bank.entries[i].image_id << ',' << bank.pca2(static_cast<Eigen::Index>(i), 0)
            << ',' << bank.pca2(static_cast<Eigen::Index>(i), 1) << ',' << bank.labels[i] << ','
            << typ[i] << ',' << (is_ex[i] ? 1 : 0) << '\n';
    write_scatter((fs::path(cfg.out_dir) / "scatter.pgm").string(), bank, is_ex, k);
    std::cout << "selected k=" << k << "; wrote clusters.csv and scatter.pgm to " << cfg.out_dir
              << "\n";
    return 0;
}

int cmd_grad_check(const Args& args) {
    const std::uint64_t seed = args.has("seed") ? parse_u64(args.get("seed"), "seed") : 1234;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& suite : {run_op_gradient_suite(seed), run_loss_gradient_suite(seed)}) {
        for (const GradCheckResult& r : suite) {
            std::printf("%-24s max rel error %.3e\n", r.name.c_str(), r.max_rel_error);
            if (r.max_rel_error > worst) {
                worst = r.max_rel_error;
                worst_name = r.name;
            }
        }
    }
    std::printf("worst relative error: %.3e (%s)\n", worst, worst_name.c_str());
    return worst < 1e-4 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    Args args;
    try {
        args = parse_args(argc, argv);
        if (args.print_config) {
            std::cout << effective_config(args).to_text();
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        print_usage(std::cerr);
        return 1;
    }
    try {
        if (args.subcommand == "gen-corpus") return cmd_gen_corpus(args);
        if (args.subcommand == "train") return cmd_train(args);
        if (args.subcommand == "translate") return cmd_translate(args);
        if (args.subcommand == "interpolate") return cmd_interpolate(args);
        if (args.subcommand == "embed") return cmd_embed(args);
        if (args.subcommand == "cluster") return cmd_cluster(args);
        if (args.subcommand == "grad-check") return cmd_grad_check(args);
        throw UsageError("unknown subcommand '" + args.subcommand + "'");
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        print_usage(std::cerr);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
