#include "pan/config.hpp"

#include <cerrno>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace pan {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
    return out;
}

double to_real(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(out))
        throw ConfigError(key + ": expected a real number, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + f(xs[i]);
    return out;
}

struct Field {
    std::function<void(Settings&, const std::string&, const std::string&)> set;
    std::function<std::string(const Settings&)> get;
};

#define PAN_COUNT(member) \
    Field { [](Settings& s, const std::string& k, const std::string& v) { s.member = to_count(k, v); }, \
            [](const Settings& s) { return std::to_string(s.member); } }
#define PAN_REAL(member) \
    Field { [](Settings& s, const std::string& k, const std::string& v) { s.member = to_real(k, v); }, \
            [](const Settings& s) { return fmt_real(s.member); } }
#define PAN_TEXT(member) \
    Field { [](Settings& s, const std::string&, const std::string& v) { s.member = v; }, \
            [](const Settings& s) { return s.member; } }
#define PAN_REALS(member) \
    Field { [](Settings& s, const std::string& k, const std::string& v) { \
               s.member.clear(); \
               for (const auto& x : split_list(v)) s.member.push_back(to_real(k, x)); }, \
            [](const Settings& s) { return join(s.member, fmt_real); } }
#define PAN_TEXTS(member) \
    Field { [](Settings& s, const std::string&, const std::string& v) { s.member = split_list(v); }, \
            [](const Settings& s) { return join(s.member, [](const std::string& x) { return x; }); } }

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"seed", {[](Settings& s, const std::string& k, const std::string& v) { s.seed = to_u64(k, v); },
                  [](const Settings& s) { return std::to_string(s.seed); }}},
        {"dataset", PAN_TEXT(dataset)},
        {"synth.n_train", PAN_COUNT(synth_n_train)},
        {"synth.n_test", PAN_COUNT(synth_n_test)},
        {"synth.dim", PAN_COUNT(synth_dim)},
        {"synth.classes", PAN_COUNT(synth_classes)},
        {"synth.separation", PAN_REAL(synth_separation)},
        {"synth.seed", {[](Settings& s, const std::string& k, const std::string& v) { s.synth_seed = to_u64(k, v); },
                        [](const Settings& s) { return std::to_string(s.synth_seed); }}},
        {"idx.train_images", PAN_TEXT(idx_train_images)},
        {"idx.train_labels", PAN_TEXT(idx_train_labels)},
        {"idx.test_images", PAN_TEXT(idx_test_images)},
        {"idx.test_labels", PAN_TEXT(idx_test_labels)},
        {"idx.classes", PAN_COUNT(idx_classes)},
        {"model.hidden",
         {[](Settings& s, const std::string& k, const std::string& v) {
              s.hidden.clear();
              for (const auto& x : split_list(v)) {
                  const auto w = to_count(k, x);
                  if (w == 0) throw ConfigError(k + ": hidden widths must be positive");
                  s.hidden.push_back(w);
              }
          },
          [](const Settings& s) { return join(s.hidden, [](std::size_t x) { return std::to_string(x); }); }}},
        {"pan.mode", {[](Settings& s, const std::string&, const std::string& v) { s.pan.mode = parse_pan_mode(v); },
                      [](const Settings& s) { return to_string(s.pan.mode); }}},
        {"pan.amplitude", PAN_REAL(pan.amplitude)},
        {"pan.period", PAN_REAL(pan.period)},
        {"train.lr", PAN_REAL(lr)},
        {"train.momentum", PAN_REAL(momentum)},
        {"train.batch_size", PAN_COUNT(batch_size)},
        {"train.epochs", PAN_COUNT(epochs)},
        {"train.warmup_steps", PAN_COUNT(warmup_steps)},
        {"fed.clients", PAN_COUNT(clients)},
        {"fed.ratio", PAN_REAL(ratio)},
        {"fed.local_epochs", PAN_COUNT(local_epochs)},
        {"fed.rounds", PAN_COUNT(rounds)},
        {"fed.alpha", PAN_REAL(alpha)},
        {"fed.alphas", PAN_REALS(alphas)},
        {"fed.algorithm", {[](Settings& s, const std::string&, const std::string& v) { s.algorithm = parse_algorithm(v); },
                           [](const Settings& s) { return to_string(s.algorithm); }}},
        {"fed.prox_mu", PAN_REAL(prox_mu)},
        {"fed.server_lr", PAN_REAL(server_lr)},
        {"fed.server_momentum", PAN_REAL(server_momentum)},
        {"fed.weighted", {[](Settings& s, const std::string& k, const std::string& v) { s.weighted = to_bool(k, v); },
                          [](const Settings& s) { return std::string(s.weighted ? "true" : "false"); }}},
        {"fed.shuffle_nsf", PAN_REAL(shuffle_nsf)},
        {"fed.shuffle_psf", PAN_REAL(shuffle_psf)},
        {"shuffle.checkpoint", PAN_TEXT(shuffle_checkpoint)},
        {"shuffle.psf", PAN_REALS(shuffle_psfs)},
        {"shuffle.amplitudes", PAN_REALS(shuffle_amplitudes)},
        {"shuffle.periods", PAN_REALS(shuffle_periods)},
        {"shuffle.modes",
         {[](Settings& s, const std::string&, const std::string& v) {
              s.shuffle_modes.clear();
              for (const auto& x : split_list(v)) s.shuffle_modes.push_back(parse_pan_mode(x));
          },
          [](const Settings& s) { return join(s.shuffle_modes, [](PanMode m) { return to_string(m); }); }}},
        {"shuffle.trials", PAN_COUNT(shuffle_trials)},
        {"shuffle.batch", PAN_COUNT(shuffle_batch)},
        {"analyze.checkpoints", PAN_TEXTS(analyze_checkpoints)},
        {"analyze.tasks", PAN_TEXTS(analyze_tasks)},
        {"analyze.layer", PAN_COUNT(analyze_layer)},
        {"analyze.probe", PAN_COUNT(analyze_probe)},
        {"analyze.fusion_grid", PAN_REALS(analyze_fusion_grid)},
        {"analyze.dense", {[](Settings& s, const std::string& k, const std::string& v) { s.analyze_dense = to_bool(k, v); },
                           [](const Settings& s) { return std::string(s.analyze_dense ? "true" : "false"); }}},
    };
    return table;
}

#undef PAN_COUNT
#undef PAN_REAL
#undef PAN_TEXT
#undef PAN_REALS
#undef PAN_TEXTS

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
    KeyValueConfig kv;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        kv.values_[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

void KeyValueConfig::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = trim(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    values_[key] = trim(assignment.substr(eq + 1));
}

Settings Settings::from(const KeyValueConfig& kv) {
    Settings s;
    for (const auto& [key, value] : kv.values()) {
        const auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
        it->second.set(s, key, value);
    }
    return s;
}

std::string Settings::echo() const {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
    return out;
}

FederationConfig Settings::federation(double alpha_value) const {
    FederationConfig c;
    c.clients = clients;
    c.ratio = ratio;
    c.local_epochs = local_epochs;
    c.rounds = rounds;
    c.batch_size = batch_size;
    c.alpha = alpha_value;
    c.lr = lr;
    c.momentum = momentum;
    c.warmup_steps = warmup_steps;
    c.algorithm = algorithm;
    c.prox_mu = prox_mu;
    c.server_lr = server_lr;
    c.server_momentum = server_momentum;
    c.pan = pan;
    c.shuffle_nsf = shuffle_nsf;
    c.shuffle_psf = shuffle_psf;
    c.weighted = weighted;
    c.hidden = hidden;
    c.seed = seed;
    return c;
}

LocalTrainConfig Settings::central_training() const {
    LocalTrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.lr = lr;
    c.momentum = momentum;
    c.warmup_steps = warmup_steps;
    return c;
}

}  // namespace pan
