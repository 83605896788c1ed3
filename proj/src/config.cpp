#include "dsss/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dsss/error.hpp"

namespace dsss {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
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

[[noreturn]] void bad_value(const std::string& key, const std::string& value, int line,
                            int column) {
    throw ConfigError("bad value '" + value + "' for key '" + key + "'", line, column);
}

// One setter per key; setters throw std::exception on unparseable values,
// which the caller converts into a located ConfigError.
using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

double parse_real(const std::string& v) {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
}

std::int64_t parse_int(const std::string& v) {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
}

std::uint64_t parse_uint(const std::string& v) {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size() || (!v.empty() && v[0] == '-')) throw std::invalid_argument(v);
    return x;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::invalid_argument(v);
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"group", [](ExperimentConfig& c, const std::string& v) { c.group = v; }},
        {"k", [](ExperimentConfig& c, const std::string& v) { c.k = static_cast<int>(parse_int(v)); }},
        {"image", [](ExperimentConfig& c, const std::string& v) { c.image = parse_int(v); }},
        {"beta", [](ExperimentConfig& c, const std::string& v) { c.beta = parse_real(v); }},
        {"alpha_q", [](ExperimentConfig& c, const std::string& v) { c.alpha_q = parse_real(v); }},
        {"crop_size",
         [](ExperimentConfig& c, const std::string& v) { c.crop_size = parse_int(v); }},
        {"lr", [](ExperimentConfig& c, const std::string& v) { c.lr = parse_real(v); }},
        {"momentum", [](ExperimentConfig& c, const std::string& v) { c.momentum = parse_real(v); }},
        {"poly_power",
         [](ExperimentConfig& c, const std::string& v) { c.poly_power = parse_real(v); }},
        {"iterations",
         [](ExperimentConfig& c, const std::string& v) { c.iterations = static_cast<int>(parse_int(v)); }},
        {"batch", [](ExperimentConfig& c, const std::string& v) { c.batch = static_cast<int>(parse_int(v)); }},
        {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = parse_uint(v); }},
        {"seeds",
         [](ExperimentConfig& c, const std::string& v) {
             c.seeds.clear();
             for (const auto& item : split_list(v)) c.seeds.push_back(parse_uint(item));
         }},
        {"groups", [](ExperimentConfig& c, const std::string& v) { c.groups = split_list(v); }},
        {"eps", [](ExperimentConfig& c, const std::string& v) { c.eps = parse_real(v); }},
        {"lambda_mode",
         [](ExperimentConfig& c, const std::string& v) { c.lambda_mode = v; }},
        {"detach_flow",
         [](ExperimentConfig& c, const std::string& v) { c.detach_flow = parse_bool(v); }},
        {"detach_sensitivity",
         [](ExperimentConfig& c, const std::string& v) { c.detach_sensitivity = parse_bool(v); }},
        {"detach_alignment",
         [](ExperimentConfig& c, const std::string& v) { c.detach_alignment = parse_bool(v); }},
        {"rescale", [](ExperimentConfig& c, const std::string& v) { c.rescale = parse_bool(v); }},
        {"rgb_c1", [](ExperimentConfig& c, const std::string& v) { c.rgb_c1 = static_cast<int>(parse_int(v)); }},
        {"rgb_c2", [](ExperimentConfig& c, const std::string& v) { c.rgb_c2 = static_cast<int>(parse_int(v)); }},
        {"depth_c1", [](ExperimentConfig& c, const std::string& v) { c.depth_c1 = static_cast<int>(parse_int(v)); }},
        {"depth_c2", [](ExperimentConfig& c, const std::string& v) { c.depth_c2 = static_cast<int>(parse_int(v)); }},
        {"train_dir", [](ExperimentConfig& c, const std::string& v) { c.train_dir = v; }},
        {"eval_dirs",
         [](ExperimentConfig& c, const std::string& v) { c.eval_dirs = split_list(v); }},
        {"loss_every",
         [](ExperimentConfig& c, const std::string& v) { c.loss_every = static_cast<int>(parse_int(v)); }},
        {"gradcheck_corrupt",
         [](ExperimentConfig& c, const std::string& v) { c.gradcheck_corrupt = v; }},
    };
    return table;
}

void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value, int line,
              int key_col, int value_col) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown key '" + key + "'", line, key_col);
    try {
        it->second(cfg, value);
    } catch (const std::exception&) {
        bad_value(key, value, line, value_col);
    }
}

std::string render_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_same_v<T, std::string>)
            out += items[i];
        else
            out += std::to_string(items[i]);
    }
    return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(ss, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key=value", line_no,
                              static_cast<int>(raw.find_first_not_of(" \t")) + 1);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", line_no, 1);
        const int key_col = static_cast<int>(raw.find(key)) + 1;
        const auto value_pos = value.empty() ? raw.size() : raw.find(value, raw.find('='));
        apply_kv(cfg, key, value, line_no, key_col, static_cast<int>(value_pos) + 1);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

void apply_override(ExperimentConfig& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key=value, got '" + kv + "'", 0, 1);
    const std::string key = trim(kv.substr(0, eq));
    const std::string value = trim(kv.substr(eq + 1));
    apply_kv(cfg, key, value, 0, 1, static_cast<int>(eq) + 2);
}

void validate_config(const ExperimentConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ConfigError(msg, 0, 0); };
    auto check_group = [&](const std::string& g) {
        if (g.size() != 1 || g[0] < 'A' || g[0] > 'G') fail("unknown group '" + g + "'");
    };
    check_group(cfg.group);
    if (cfg.groups.empty()) fail("groups list is empty");
    for (const auto& g : cfg.groups) check_group(g);
    if (cfg.k < 2) fail("k must be >= 2");
    if (cfg.image < 16) fail("image must be >= 16");
    if (cfg.image % 4 != 0) fail("image must be divisible by 4");
    if (cfg.beta < 0) fail("beta must be >= 0");
    if (cfg.alpha_q < 0 || cfg.alpha_q > 1) fail("alpha_q must lie in [0,1]");
    if (cfg.crop_size < 1) fail("crop_size must be positive");
    if (cfg.lr <= 0) fail("lr must be positive");
    if (cfg.momentum < 0 || cfg.momentum >= 1) fail("momentum must lie in [0,1)");
    if (cfg.poly_power <= 0) fail("poly_power must be positive");
    if (cfg.iterations < 1) fail("iterations must be positive");
    if (cfg.batch < 1) fail("batch must be positive");
    if (cfg.seeds.empty()) fail("seeds list is empty");
    if (cfg.eps <= 0) fail("eps must be positive");
    if (cfg.lambda_mode != "per_item" && cfg.lambda_mode != "per_batch")
        fail("lambda_mode must be per_item or per_batch");
    if (cfg.rgb_c1 < 1 || cfg.rgb_c2 < 1 || cfg.depth_c1 < 1 || cfg.depth_c2 < 1)
        fail("channel counts must be positive");
    if (cfg.loss_every < 1) fail("loss_every must be positive");
    if (!cfg.gradcheck_corrupt.empty() && cfg.gradcheck_corrupt != "rgb_encoder" &&
        cfg.gradcheck_corrupt != "depth_encoder" && cfg.gradcheck_corrupt != "decoder" &&
        cfg.gradcheck_corrupt != "csss_conv")
        fail("gradcheck_corrupt must name a parameter group");
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["group"] = cfg.group;
    kv["k"] = std::to_string(cfg.k);
    kv["image"] = std::to_string(cfg.image);
    kv["beta"] = render_real(cfg.beta);
    kv["alpha_q"] = render_real(cfg.alpha_q);
    kv["crop_size"] = std::to_string(cfg.crop_size);
    kv["lr"] = render_real(cfg.lr);
    kv["momentum"] = render_real(cfg.momentum);
    kv["poly_power"] = render_real(cfg.poly_power);
    kv["iterations"] = std::to_string(cfg.iterations);
    kv["batch"] = std::to_string(cfg.batch);
    kv["seed"] = std::to_string(cfg.seed);
    kv["seeds"] = join(cfg.seeds);
    kv["groups"] = join(cfg.groups);
    kv["eps"] = render_real(cfg.eps);
    kv["lambda_mode"] = cfg.lambda_mode;
    kv["detach_flow"] = cfg.detach_flow ? "true" : "false";
    kv["detach_sensitivity"] = cfg.detach_sensitivity ? "true" : "false";
    kv["detach_alignment"] = cfg.detach_alignment ? "true" : "false";
    kv["rescale"] = cfg.rescale ? "true" : "false";
    kv["rgb_c1"] = std::to_string(cfg.rgb_c1);
    kv["rgb_c2"] = std::to_string(cfg.rgb_c2);
    kv["depth_c1"] = std::to_string(cfg.depth_c1);
    kv["depth_c2"] = std::to_string(cfg.depth_c2);
    kv["train_dir"] = cfg.train_dir;
    kv["eval_dirs"] = join(cfg.eval_dirs);
    kv["loss_every"] = std::to_string(cfg.loss_every);
    kv["gradcheck_corrupt"] = cfg.gradcheck_corrupt;
    std::string out;
    for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
    return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string bytes = serialize_config(cfg);
    std::uint64_t h = 14695981039346656037ull;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dsss
