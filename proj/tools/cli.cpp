#include "cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "pan/alignment.hpp"
#include "pan/checkpoint.hpp"
#include "pan/config.hpp"
#include "pan/data.hpp"
#include "pan/fedsim.hpp"
#include "pan/permutation.hpp"

namespace pan::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    int jobs = 0;
    std::vector<std::string> sets;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
    sub->add_option("--config", flags.config, "key = value configuration file");
    sub->add_option("--seed", flags.seed, "root seed (overrides the config file)");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--jobs", flags.jobs, "maximum worker threads (0 = OpenMP default)");
    sub->add_option("--set", flags.sets, "override, key=value (repeatable)");
}

Settings resolve(const CommonFlags& flags) {
    KeyValueConfig kv = flags.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(flags.config);
    for (const auto& s : flags.sets) kv.set(s);
    if (flags.seed) kv.set("seed", std::to_string(*flags.seed));
    return Settings::from(kv);
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class OutputDir {
public:
    explicit OutputDir(const std::string& path) : root_(path) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec) throw ConfigError("cannot create output directory " + path + ": " + ec.message());
    }
    fs::path path(const std::string& name) const { return root_ / name; }
    void write(const std::string& name, const std::string& content) const {
        std::ofstream f(path(name), std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write " + path(name).string());
        f << content;
    }

private:
    fs::path root_;
};

void write_provenance(const OutputDir& dir, const Settings& s, const std::string& command) {
    dir.write("config.txt", "# pansim " + command + "\n" + s.echo());
}

json config_json(const Settings& s) {
    json cfg = json::object();
    std::stringstream ss(s.echo());
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return cfg;
}

void require_file(const std::string& key, const std::string& path) {
    if (path.empty()) throw ConfigError(key + " is not set");
    if (!fs::exists(path)) throw ConfigError(key + ": no such file '" + path + "'");
}

std::pair<Dataset, Dataset> load_data(const Settings& s) {
    if (s.dataset == "synthetic")
        return gen_synthetic_split(s.synth_n_train, s.synth_n_test, s.synth_dim, s.synth_classes, s.synth_separation,
                                   s.synth_seed);
    if (s.dataset == "idx") {
        require_file("idx.train_images", s.idx_train_images);
        require_file("idx.train_labels", s.idx_train_labels);
        require_file("idx.test_images", s.idx_test_images);
        require_file("idx.test_labels", s.idx_test_labels);
        Dataset train = load_idx(s.idx_train_images, s.idx_train_labels, s.idx_classes);
        Dataset test = load_idx(s.idx_test_images, s.idx_test_labels, train.num_classes);
        if (test.dim() != train.dim()) throw FormatError("IDX train and test image sizes differ");
        return {std::move(train), std::move(test)};
    }
    throw ConfigError("dataset must be 'synthetic' or 'idx', got '" + s.dataset + "'");
}

std::vector<std::size_t> layer_sizes(const Settings& s, const Dataset& d) {
    std::vector<std::size_t> sizes{d.dim()};
    sizes.insert(sizes.end(), s.hidden.begin(), s.hidden.end());
    sizes.push_back(d.num_classes);
    return sizes;
}

int cmd_train_central(const Settings& s, const OutputDir& dir, std::ostream& out) {
    const auto [train, test] = load_data(s);
    const Mlp init = make_mlp(layer_sizes(s, train), s.pan, Rng::derive_seed(s.seed, {0x1417}));
    const CentralTrainResult r = train_central(init, train, test, s.central_training(), s.seed);

    std::string csv = "epoch,accuracy\n";
    for (std::size_t e = 0; e < r.accuracy.size(); ++e) csv += std::to_string(e + 1) + "," + num(r.accuracy[e]) + "\n";
    write_provenance(dir, s, "train-central");
    dir.write("curve.csv", csv);
    save_checkpoint(dir.path("model.ckpt").string(), {r.model, s.seed});
    json summary = {{"command", "train-central"},
                    {"seed", s.seed},
                    {"steps", r.steps},
                    {"final_accuracy", r.accuracy.empty() ? 0.0 : r.accuracy.back()},
                    {"config", config_json(s)}};
    dir.write("summary.json", summary.dump(2) + "\n");
    out << "final accuracy " << num(r.accuracy.empty() ? 0.0 : r.accuracy.back()) << "\n";
    return kOk;
}

int cmd_shuffle_test(const Settings& s, const OutputDir& dir, std::ostream& out) {
    if (s.shuffle_checkpoint.empty()) throw ConfigError("shuffle.checkpoint is not set");
    const Checkpoint ckpt = load_checkpoint(s.shuffle_checkpoint);
    std::vector<ShuffleTestPoint> grid;
    for (double psf : s.shuffle_psfs)
        for (PanMode mode : s.shuffle_modes)
            for (double a : s.shuffle_amplitudes)
                for (double t : s.shuffle_periods) {
                    if (!(psf >= 0.0 && psf <= 1.0)) throw ConfigError("shuffle.psf values must lie in [0, 1]");
                    grid.push_back({psf, {mode, a, t}});
                }
    const auto rows = shuffle_test(ckpt.model, grid, s.shuffle_trials, s.shuffle_batch, s.seed);
    std::string csv = "p_sf,amplitude,period,mode,err_mean,err_max,r_kept\n";
    for (const auto& r : rows)
        csv += num(r.point.p_sf) + "," + num(r.point.pan.amplitude) + "," + num(r.point.pan.period) + "," +
               to_string(r.point.pan.mode) + "," + num(r.err_mean) + "," + num(r.err_max) + "," + num(r.r_kept) + "\n";
    write_provenance(dir, s, "shuffle-test");
    dir.write("shuffle_test.csv", csv);
    out << rows.size() << " shuffle-test rows written\n";
    return kOk;
}

int cmd_fed_run(const Settings& s, const OutputDir& dir, std::ostream& out) {
    const auto [train, test] = load_data(s);
    const bool sweep = !s.alphas.empty();
    const std::vector<double> alphas = sweep ? s.alphas : std::vector<double>{s.alpha};
    write_provenance(dir, s, "fed-run");
    for (double alpha : alphas) {
        const FederationConfig cfg = s.federation(alpha);
        const MetricsLog log = run_experiment(cfg, train, test);
        const std::string suffix = sweep ? "_alpha" + num(alpha) : "";

        std::string csv = "round,accuracy";
        for (std::size_t l = 1; l <= log.final_model.depth(); ++l) csv += ",div_l" + std::to_string(l);
        csv += ",client_distance,shuffles,r_kept\n";
        for (const auto& m : log.rounds) {
            csv += std::to_string(m.round) + "," + num(m.accuracy);
            for (double d : m.divergence) csv += "," + num(d);
            csv += "," + num(m.client_distance) + "," + num(m.mean_shuffles) + "," + num(m.r_kept) + "\n";
        }
        dir.write("rounds" + suffix + ".csv", csv);
        save_checkpoint(dir.path("global" + suffix + ".ckpt").string(), {log.final_model, s.seed});
        json summary = {{"command", "fed-run"},
                        {"seed", s.seed},
                        {"alpha", alpha},
                        {"rounds", log.rounds.size()},
                        {"final_accuracy", log.final_accuracy},
                        {"best_accuracy", log.best_accuracy},
                        {"client_sizes", log.client_sizes},
                        {"config", config_json(s)}};
        dir.write("summary" + suffix + ".json", summary.dump(2) + "\n");
        out << "alpha " << num(alpha) << ": final accuracy " << num(log.final_accuracy) << "\n";
    }
    return kOk;
}

std::vector<Checkpoint> load_checkpoints(const Settings& s) {
    if (s.analyze_checkpoints.size() < 2) throw ConfigError("analyze.checkpoints needs at least two paths");
    std::vector<Checkpoint> ckpts;
    for (const auto& p : s.analyze_checkpoints) ckpts.push_back(load_checkpoint(p));
    for (const auto& c : ckpts)
        if (c.model.sizes != ckpts[0].model.sizes) throw ShapeError("checkpoints have different architectures");
    return ckpts;
}

Dataset probe_set(const Dataset& test, std::size_t n) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < std::min(n, test.size()); ++i) rows.push_back(i);
    return test.subset(rows);
}

int cmd_analyze(const Settings& s, const OutputDir& dir, std::ostream& out, const std::vector<std::string>& tasks,
                const std::string& command) {
    const auto ckpts = load_checkpoints(s);
    std::vector<Mlp> models;
    for (const auto& c : ckpts) models.push_back(c.model);
    const std::size_t layer = s.analyze_layer;
    if (layer == 0 || layer >= models[0].depth())
        throw ConfigError("analyze.layer must name a hidden layer (1.." + std::to_string(models[0].depth() - 1) + ")");

    auto needs_data = [&] {
        for (const auto& t : tasks)
            if (t == "match" || t == "prefvec" || t == "fusion") return true;
        return false;
    }();
    Dataset test;
    if (needs_data) {
        test = load_data(s).second;
        if (test.dim() != models[0].sizes.front() || test.num_classes != models[0].sizes.back())
            throw ShapeError("dataset does not match checkpoint input/output sizes");
    }
    const Dataset probe = needs_data ? probe_set(test, s.analyze_probe) : Dataset{};

    json summary = {{"command", command}, {"seed", s.seed}, {"checkpoints", s.analyze_checkpoints}, {"layer", layer}};
    write_provenance(dir, s, command);
    for (const auto& task : tasks) {
        if (task == "divergence") {
            std::string csv = "layer,divergence\n";
            json divs = json::array();
            for (std::size_t l = 1; l <= models[0].depth(); ++l) {
                const double d = weight_divergence(models, l);
                csv += std::to_string(l) + "," + num(d) + "\n";
                divs.push_back(d);
            }
            dir.write("divergence.csv", csv);
            summary["divergence"] = divs;
        } else if (task == "match") {
            const ActivationProfile ref = collect_activations(models[0], probe.features, layer);
            std::string csv = "checkpoint,neuron,assigned\n";
            json ratios = json::array();
            for (std::size_t k = 1; k < models.size(); ++k) {
                const ActivationProfile other = collect_activations(models[k], probe.features, layer);
                const AssignmentResult r = match_neurons(ref, other);
                for (std::size_t i = 0; i < r.assignment.size(); ++i)
                    csv += std::to_string(k) + "," + std::to_string(i) + "," + std::to_string(r.assignment.index[i]) + "\n";
                ratios.push_back({{"checkpoint", k}, {"match_ratio", r.match_ratio}, {"cost", r.cost}});
                if (s.analyze_dense) {
                    const Matrix dense = r.assignment.to_dense();
                    std::string d;
                    for (std::size_t i = 0; i < dense.rows(); ++i) {
                        for (std::size_t j = 0; j < dense.cols(); ++j) d += (j ? "," : "") + num(dense(i, j));
                        d += "\n";
                    }
                    dir.write("match_dense_" + std::to_string(k) + ".csv", d);
                }
            }
            dir.write("match.csv", csv);
            summary["match"] = ratios;
        } else if (task == "prefvec") {
            std::vector<PreferenceMatrix> prefs;
            for (const auto& m : models) prefs.push_back(preference_vectors(m, probe, layer));
            std::string csv = "checkpoint,neuron,argmax";
            for (std::size_t c = 0; c < prefs[0].values.cols(); ++c) csv += ",p_" + std::to_string(c);
            csv += "\n";
            json agree = json::array();
            for (std::size_t k = 0; k < prefs.size(); ++k) {
                std::size_t same = 0;
                for (std::size_t i = 0; i < prefs[k].argmax.size(); ++i) {
                    csv += std::to_string(k) + "," + std::to_string(i) + "," + std::to_string(prefs[k].argmax[i]);
                    for (std::size_t c = 0; c < prefs[k].values.cols(); ++c) csv += "," + num(prefs[k].values(i, c));
                    csv += "\n";
                    same += prefs[k].argmax[i] == prefs[0].argmax[i];
                }
                if (k > 0) agree.push_back({{"checkpoint", k}, {"same_argmax", same}});
            }
            dir.write("prefvec.csv", csv);
            summary["prefvec"] = agree;
        } else if (task == "fusion") {
            const FusionCurve curve = fusion_curve(models[0], models[1], test, s.analyze_fusion_grid);
            std::string csv = "mu,accuracy\n";
            for (std::size_t i = 0; i < curve.mu.size(); ++i) csv += num(curve.mu[i]) + "," + num(curve.accuracy[i]) + "\n";
            dir.write("fusion.csv", csv);
            summary["fusion"] = {{"mu", curve.mu}, {"accuracy", curve.accuracy}};
        } else {
            throw ConfigError("unknown analysis task '" + task + "'");
        }
    }
    summary["config"] = config_json(s);
    dir.write(command == "analyze" ? "analysis.json" : command + ".json", summary.dump(2) + "\n");
    out << command << " done (" << tasks.size() << " task(s))\n";
    return kOk;
}

int cmd_partition(const Settings& s, const OutputDir& dir, std::ostream& out) {
    const Dataset train = load_data(s).first;
    const auto alphas = s.alphas.empty() ? std::vector<double>{s.alpha} : s.alphas;
    write_provenance(dir, s, "partition");
    for (double alpha : alphas) {
        const FederationConfig cfg = s.federation(alpha);
        const auto parts = partition_dirichlet(train, {cfg.clients, alpha, Rng::derive_seed(cfg.seed, {0xd1c7})});
        const auto counts = partition_counts(train, parts);
        std::string csv = "client,class,count\n";
        for (std::size_t k = 0; k < counts.size(); ++k)
            for (std::size_t c = 0; c < counts[k].size(); ++c)
                csv += std::to_string(k) + "," + std::to_string(c) + "," + std::to_string(counts[k][c]) + "\n";
        const std::string suffix = s.alphas.empty() ? "" : "_alpha" + num(alpha);
        dir.write("partition" + suffix + ".csv", csv);
        out << "alpha " << num(alpha) << ": mean label TV distance " << num(mean_label_tv_distance(train, parts)) << "\n";
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Federated learning with position-aware neurons: simulator and analysis tools", "pansim"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        CLI::App* app = nullptr;
        CommonFlags flags;
    };
    std::vector<Sub> subs = {
        {"train-central", "train one model centrally; writes curve.csv and model.ckpt"},
        {"shuffle-test", "sweep (P_sf, A, T, mode) over a checkpoint; writes shuffle_test.csv"},
        {"fed-run", "run a federated experiment; writes rounds.csv and summary.json"},
        {"analyze", "divergence, matching, preference vectors, and fusion over checkpoints"},
        {"match", "optimal-assignment neuron matching between checkpoints"},
        {"prefvec", "per-neuron class preference vectors"},
        {"partition", "Dirichlet partition statistics; writes partition.csv"},
    };
    for (auto& s : subs) {
        s.app = app.add_subcommand(s.name, s.help);
        add_common(s.app, s.flags);
    }

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        for (auto& s : subs) {
            if (!*s.app) continue;
            const Settings settings = resolve(s.flags);
            if (s.flags.jobs < 0) throw ConfigError("--jobs must be non-negative");
            if (s.flags.jobs > 0) omp_set_num_threads(s.flags.jobs);
            const OutputDir dir(s.flags.out);
            const std::string name = s.name;
            if (name == "train-central") return cmd_train_central(settings, dir, out);
            if (name == "shuffle-test") return cmd_shuffle_test(settings, dir, out);
            if (name == "fed-run") return cmd_fed_run(settings, dir, out);
            if (name == "analyze") return cmd_analyze(settings, dir, out, settings.analyze_tasks, name);
            if (name == "match") return cmd_analyze(settings, dir, out, {"match"}, name);
            if (name == "prefvec") return cmd_analyze(settings, dir, out, {"prefvec"}, name);
            if (name == "partition") return cmd_partition(settings, dir, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumericalError;
    } catch (const FormatError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::out_of_range& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    return kConfigError;
}

}  // namespace pan::cli
