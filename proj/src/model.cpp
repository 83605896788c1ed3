#include "dsss/model.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "dsss/error.hpp"
#include "dsss/netpbm.hpp"
#include "dsss/nn.hpp"
#include "dsss/stylize.hpp"

namespace dsss {

namespace {

Tensor he_weight(int cout, int cin, int kh, int kw, StreamRng& rng) {
    const double s = std::sqrt(2.0 / (static_cast<double>(cin) * kh * kw));
    std::vector<double> v(static_cast<std::size_t>(cout) * cin * kh * kw);
    for (auto& x : v) x = s * rng.normal();
    return Tensor({cout, cin, kh, kw}, std::move(v));
}

ConvLayer make_layer(int cout, int cin, int k, StreamRng& rng) {
    return ConvLayer{he_weight(cout, cin, k, k, rng), Tensor::zeros({1, cout, 1, 1})};
}

void check_group(const std::string& g) {
    if (g.size() != 1 || g[0] < 'A' || g[0] > 'G')
        throw ConfigError("unknown group \"" + g + "\"", 0, 0);
}

Tensor encode_rgb(const ModelParams& m, const Tensor& rgb) {
    Tensor h1 = relu(conv2d(rgb, m.rgb1.weight, m.rgb1.bias, 2, 1));
    return conv2d(h1, m.rgb2.weight, m.rgb2.bias, 2, 1);
}

Tensor encode_depth(const ModelParams& m, const Tensor& depth) {
    Tensor h1 = relu(conv2d(depth, m.d1.weight, m.d1.bias, 2, 1));
    Tensor h2 = relu(conv2d(h1, m.d2.weight, m.d2.bias, 2, 1));
    return conv2d(h2, m.dproj.weight, m.dproj.bias, 1, 0);
}

Tensor decode(const ModelParams& m, const Tensor& feat) {
    Tensor h = relu(conv2d(feat, m.dec1.weight, m.dec1.bias, 1, 1));
    return upsample_bilinear(conv2d(h, m.dec2.weight, m.dec2.bias, 1, 1), 4);
}

// CHSS threshold: one established alpha per application — the q-quantile of
// the difference map over every labeled position in the batch. A batch with
// no labeled pixel masks nothing.
double chss_alpha(const Tensor& delta, const LabelMap& labels, double q) {
    std::vector<double> vals;
    for (std::int64_t b = 0; b < labels.b; ++b)
        for (std::int64_t y = 0; y < labels.h; ++y)
            for (std::int64_t x = 0; x < labels.w; ++x)
                if (labels.at(b, y, x) != LabelMap::IGNORE) vals.push_back(delta.at(b, 0, y, x));
    return vals.empty() ? std::numeric_limits<double>::max() : quantile(std::move(vals), q);
}

std::string format_real(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

}  // namespace

ModelParams ModelParams::init(const ExperimentConfig& cfg, StreamRng& rng) {
    ModelParams m;
    m.rgb1 = make_layer(cfg.rgb_c1, 3, 3, rng);
    m.rgb2 = make_layer(cfg.rgb_c2, cfg.rgb_c1, 3, rng);
    m.d1 = make_layer(cfg.depth_c1, 1, 3, rng);
    m.d2 = make_layer(cfg.depth_c2, cfg.depth_c1, 3, rng);
    m.dproj = make_layer(cfg.rgb_c2, cfg.depth_c2, 1, rng);
    m.dec1 = make_layer(cfg.rgb_c2, cfg.rgb_c2, 3, rng);
    m.dec2 = make_layer(cfg.k, cfg.rgb_c2, 3, rng);
    m.csss_w = Tensor::scalar(1.0);
    m.csss_b = Tensor::scalar(0.0);
    return m;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_params() {
    return {
        {"rgb1.weight", &rgb1.weight}, {"rgb1.bias", &rgb1.bias},
        {"rgb2.weight", &rgb2.weight}, {"rgb2.bias", &rgb2.bias},
        {"d1.weight", &d1.weight},     {"d1.bias", &d1.bias},
        {"d2.weight", &d2.weight},     {"d2.bias", &d2.bias},
        {"dproj.weight", &dproj.weight}, {"dproj.bias", &dproj.bias},
        {"dec1.weight", &dec1.weight}, {"dec1.bias", &dec1.bias},
        {"dec2.weight", &dec2.weight}, {"dec2.bias", &dec2.bias},
        {"csss.weight", &csss_w},      {"csss.bias", &csss_b},
    };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_params() const {
    auto mutable_view = const_cast<ModelParams*>(this)->named_params();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
    return out;
}

std::int64_t ModelParams::param_count() const {
    std::int64_t n = 0;
    for (auto& [name, t] : named_params()) n += t->numel();
    return n;
}

ModelParams track(Tape& tape, const ModelParams& params) {
    ModelParams t = params;
    for (auto& [name, p] : t.named_params()) *p = tape.watch(*p);
    return t;
}

BatchView batch_from_samples(const Dataset& data, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw ValidationError("batch_from_samples: empty index list");
    for (std::size_t i : idx)
        if (i >= data.samples.size())
            throw ValidationError("batch_from_samples: index " + std::to_string(i) +
                                  " out of range (dataset has " +
                                  std::to_string(data.samples.size()) + " samples)");
    const Sample& first = data.samples[idx[0]];
    const Shape rs = first.rgb.shape();
    const Shape ds = first.depth.shape();
    const std::int64_t n = static_cast<std::int64_t>(idx.size());
    std::vector<double> rgb, depth;
    rgb.reserve(static_cast<std::size_t>(n * rs.numel()));
    depth.reserve(static_cast<std::size_t>(n * ds.numel()));
    LabelMap labels{n, first.labels.h, first.labels.w, {}};
    labels.v.reserve(static_cast<std::size_t>(n * first.labels.h * first.labels.w));
    for (std::size_t i : idx) {
        const Sample& s = data.samples[i];
        if (s.rgb.shape() != rs || s.depth.shape() != ds || s.labels.h != first.labels.h ||
            s.labels.w != first.labels.w)
            throw ShapeError("batch_from_samples: mixed sample shapes");
        auto rv = s.rgb.values();
        auto dv = s.depth.values();
        rgb.insert(rgb.end(), rv.begin(), rv.end());
        depth.insert(depth.end(), dv.begin(), dv.end());
        labels.v.insert(labels.v.end(), s.labels.v.begin(), s.labels.v.end());
    }
    return {Tensor({n, rs.c, rs.h, rs.w}, std::move(rgb)),
            Tensor({n, ds.c, ds.h, ds.w}, std::move(depth)), std::move(labels)};
}

ForwardResult forward(const ModelParams& m, const BatchView& batch, const ExperimentConfig& cfg,
                      bool training, std::uint64_t seed, std::int64_t step) {
    check_group(cfg.group);
    const char g = cfg.group[0];

    ForwardResult r;
    Tensor z_rgb = encode_rgb(m, batch.rgb);
    Tensor trunk;
    Tensor styled;

    if (g == 'A') {
        trunk = z_rgb;
    } else {
        Tensor z_d = encode_depth(m, batch.depth);
        if (g == 'B') {
            trunk = fuse_rgbd(z_d, z_rgb);
        } else {
            const Shape fs = z_rgb.shape();
            Tensor diff;
            if (training) {
                if (g == 'F' || g == 'G') {
                    StreamRng crop_rng = StreamRng::stream(seed, "crop", step);
                    Flow flow = compute_flow(z_rgb, z_d, cfg.crop_size, crop_rng, cfg.eps);
                    if (cfg.detach_flow) {
                        flow.d_mu = flow.d_mu.detached();
                        flow.d_sigma = flow.d_sigma.detached();
                    }
                    StreamRng lam_rng = StreamRng::stream(seed, "lambda", step);
                    std::vector<double> lv;
                    if (cfg.lambda_mode == "per_batch") {
                        lv.assign(static_cast<std::size_t>(fs.b), lam_rng.uniform());
                    } else {
                        for (std::int64_t b = 0; b < fs.b; ++b) lv.push_back(lam_rng.uniform());
                    }
                    styled = apply_flow(z_d, flow, Tensor({fs.b, 1, 1, 1}, std::move(lv)),
                                        cfg.eps);
                } else {
                    StreamRng rsm_rng = StreamRng::stream(seed, "rsm", step);
                    styled = perturb_rsm(z_d, rsm_rng);
                }
                diff = feature_difference(z_d, styled);
                if (cfg.detach_sensitivity) diff = diff.detached();
            } else {
                // Self-difference convention: no stylized view exists, so the
                // detector sees an exactly zero response.
                diff = feature_difference(z_d, z_d);
            }

            LabelMap lab = training ? downsample_labels(batch.labels, fs.h, fs.w)
                                    : LabelMap::filled(fs.b, fs.h, fs.w, LabelMap::IGNORE);
            Tensor fine;
            if (g == 'C') {
                fine = mul(z_d, channel_sensitivity_gcss(diff));
            } else if (g == 'E') {
                Tensor delta = channel_mean(diff);
                Tensor mask = hard_mask(delta, chss_alpha(delta, lab, cfg.alpha_q)).map;
                fine = refine_depth(z_d, add_scalar(scale(mask, -1.0), 1.0));
            } else {
                r.bundle = build_sensitivity(diff, lab, cfg.k, m.csss_w, m.csss_b, cfg.rescale);
                r.has_bundle = true;
                fine = refine_depth(z_d, r.bundle.non_sensitive);
            }
            trunk = fuse_rgbd(fine, z_rgb);
        }
    }

    r.logits = decode(m, trunk);
    if (training) {
        Tensor ce = cross_entropy(r.logits, batch.labels);
        if (g == 'G') {
            Tensor zr = cfg.detach_alignment ? z_rgb.detached() : z_rgb;
            Tensor sa = soft_alignment_loss(zr, styled, cfg.beta);
            r.loss = total_loss(ce, sa);
            r.report = {ce.item(), sa.item(), r.loss.item(), cfg.beta};
        } else {
            r.loss = ce;
            r.report = {ce.item(), 0.0, ce.item(), cfg.beta};
        }
    }
    return r;
}

double poly_lr(double lr0, std::int64_t step, std::int64_t total, double power) {
    if (total <= 0) throw ValidationError("poly_lr: total must be positive");
    if (step < 0 || step > total) throw ValidationError("poly_lr: step outside [0, total]");
    return lr0 * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total), power);
}

TrainResult train(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed,
                  std::ostream* log) {
    check_group(cfg.group);
    if (data.samples.empty()) throw ValidationError("train: empty dataset");

    StreamRng init_rng = StreamRng::stream(seed, "init", 0);
    ModelParams params = ModelParams::init(cfg, init_rng);
    StreamRng shuffle = StreamRng::stream(seed, "shuffle", 0);

    auto raw = params.named_params();
    std::vector<std::vector<double>> velocity(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        velocity[i].assign(static_cast<std::size_t>(raw[i].second->numel()), 0.0);

    std::vector<TrailPoint> trail;
    const std::int64_t total = cfg.iterations;
    for (std::int64_t t = 0; t < total; ++t) {
        std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch));
        for (auto& i : idx)
            i = static_cast<std::size_t>(
                shuffle.uniform_int(static_cast<std::int64_t>(data.samples.size())));
        BatchView batch = batch_from_samples(data, idx);

        Tape tape;
        ModelParams tracked = track(tape, params);
        ForwardResult fr = forward(tracked, batch, cfg, true, seed, t);

        auto dump = [&](const char* what) {
            if (!log) return;
            *log << "divergence at step " << t << ": " << what << " (ce=" << fr.report.ce
                 << " sa=" << fr.report.sa << " total=" << fr.report.total << ")\nbatch:";
            for (std::size_t i : idx) *log << ' ' << data.entries[i].id;
            *log << '\n';
        };
        if (!std::isfinite(fr.report.total)) {
            dump("loss is not finite");
            throw DivergenceError("training loss is not finite", t);
        }

        const double lr_t = poly_lr(cfg.lr, t, total, cfg.poly_power);
        Gradients grads = tape.backward(fr.loss);
        auto watched = tracked.named_params();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            Tensor grad = grads.at(*watched[i].second);
            auto gv = grad.values();
            auto pv = raw[i].second->values();
            std::vector<double> next(pv.begin(), pv.end());
            auto& vel = velocity[i];
            bool finite = true;
            for (std::size_t j = 0; j < next.size(); ++j) {
                vel[j] = cfg.momentum * vel[j] + gv[j];
                next[j] -= lr_t * vel[j];
                finite = finite && std::isfinite(next[j]);
            }
            if (!finite) {
                dump("parameter update is not finite");
                throw DivergenceError("parameter update is not finite", t);
            }
            *raw[i].second = Tensor(raw[i].second->shape(), std::move(next));
        }

        if (t % cfg.loss_every == 0 || t == total - 1) {
            trail.push_back({static_cast<int>(t), fr.report.ce, fr.report.sa, fr.report.total,
                             lr_t});
            if (log)
                *log << "step " << t << " ce " << fr.report.ce << " sa " << fr.report.sa
                     << " total " << fr.report.total << " lr " << lr_t << '\n';
        }
    }
    return {std::move(params), std::move(trail)};
}

EvalResult evaluate(const ModelParams& params, const ExperimentConfig& cfg, const Dataset& data) {
    if (data.samples.empty()) throw ValidationError("evaluate: empty dataset");
    ConfusionMatrix cm(cfg.k);
    const std::size_t n = data.samples.size();
    const std::size_t chunk = static_cast<std::size_t>(std::max(cfg.batch, 1));
    for (std::size_t start = 0; start < n; start += chunk) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
        BatchView batch = batch_from_samples(data, idx);
        ForwardResult fr = forward(params, batch, cfg, false, 0, 0);
        cm.update(argmax_labels(fr.logits), batch.labels);
    }
    return {miou(cm), cm};
}

double AblationTable::mean(const std::string& group, const std::string& domain) const {
    double sum = 0;
    int n = 0;
    for (const auto& r : runs)
        if (r.group == group && r.domain == domain) {
            sum += r.miou;
            ++n;
        }
    if (n == 0) throw ValidationError("no runs for group " + group + " on " + domain);
    return sum / n;
}

double AblationTable::sd(const std::string& group, const std::string& domain) const {
    std::vector<double> vals;
    for (const auto& r : runs)
        if (r.group == group && r.domain == domain) vals.push_back(r.miou);
    if (vals.empty()) throw ValidationError("no runs for group " + group + " on " + domain);
    if (vals.size() < 2) return 0.0;
    double m = 0;
    for (double v : vals) m += v;
    m /= static_cast<double>(vals.size());
    double ss = 0;
    for (double v : vals) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(vals.size() - 1));
}

double AblationTable::group_mean(const std::string& group) const {
    double sum = 0;
    for (const auto& d : domains) sum += mean(group, d);
    return sum / static_cast<double>(domains.size());
}

std::string AblationTable::to_csv() const {
    std::string out = "group";
    for (const auto& d : domains) out += "," + d + "_mean," + d + "_sd";
    out += ",mean\n";
    for (const auto& g : groups) {
        out += g;
        for (const auto& d : domains)
            out += "," + format_real("%.4f", mean(g, d)) + "," + format_real("%.4f", sd(g, d));
        out += "," + format_real("%.4f", group_mean(g)) + "\n";
    }
    return out;
}

std::string AblationTable::runs_to_csv() const {
    std::string out = "group,seed,domain,miou\n";
    for (const auto& r : runs)
        out += r.group + "," + std::to_string(r.seed) + "," + r.domain + "," +
               format_real("%.6f", r.miou) + "\n";
    return out;
}

AblationTable ablate(const ExperimentConfig& cfg, const Dataset& train_data,
                     const std::vector<std::pair<std::string, Dataset>>& eval_sets,
                     int max_workers, const std::string& out_dir, std::ostream* log) {
    if (cfg.groups.size() < 2) throw ConfigError("ablate needs at least 2 groups", 0, 0);
    if (cfg.seeds.size() < 2) throw ConfigError("ablate needs at least 2 seeds", 0, 0);
    for (const auto& g : cfg.groups) check_group(g);
    if (eval_sets.empty()) throw ValidationError("ablate: no evaluation sets");

    struct Cell {
        std::string group;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& g : cfg.groups)
        for (std::uint64_t s : cfg.seeds) cells.push_back({g, s});

    std::vector<std::vector<AblationRun>> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr first_error;

    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                ExperimentConfig c = cfg;
                c.group = cells[i].group;
                c.seed = cells[i].seed;
                TrainResult tr = train(c, train_data, c.seed, nullptr);
                for (const auto& [name, ds] : eval_sets) {
                    EvalResult ev = evaluate(tr.params, c, ds);
                    rows[i].push_back({c.group, c.seed, name, ev.report.mean});
                }
                if (!out_dir.empty())
                    save_checkpoint(out_dir + "/" + c.group + "_" + std::to_string(c.seed) +
                                        ".ckpt",
                                    tr.params, c);
                if (log) {
                    std::lock_guard<std::mutex> lock(mu);
                    *log << "group " << c.group << " seed " << c.seed << " done";
                    for (const auto& r : rows[i]) *log << "  " << r.domain << " " << r.miou;
                    *log << '\n';
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };

    const int workers =
        std::max(1, std::min<int>(max_workers, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    AblationTable table;
    table.groups = cfg.groups;
    for (const auto& [name, ds] : eval_sets) table.domains.push_back(name);
    for (auto& r : rows) table.runs.insert(table.runs.end(), r.begin(), r.end());
    std::sort(table.runs.begin(), table.runs.end(), [](const AblationRun& a, const AblationRun& b) {
        return std::tie(a.group, a.seed, a.domain) < std::tie(b.group, b.seed, b.domain);
    });
    return table;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ExperimentConfig& cfg) {
    auto named = params.named_params();
    std::int64_t total = 0;
    std::string head = "DSSS-CKPT 1\n";
    head += "config " + config_hash(cfg) + "\n";
    head += "group " + cfg.group + "\n";
    head += "k " + std::to_string(cfg.k) + "\n";
    head += "tensors " + std::to_string(named.size()) + "\n";
    for (auto& [name, t] : named) {
        const Shape s = t->shape();
        head += name + " " + std::to_string(s.b) + " " + std::to_string(s.c) + " " +
                std::to_string(s.h) + " " + std::to_string(s.w) + "\n";
        total += t->numel();
    }
    head += "blob " + std::to_string(total * 8) + "\n";

    std::string blob;
    blob.reserve(static_cast<std::size_t>(total) * 8);
    for (auto& [name, t] : named)
        for (double v : t->values()) {
            const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            for (int byte = 0; byte < 8; ++byte)
                blob.push_back(static_cast<char>((bits >> (8 * byte)) & 0xff));
        }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("short write to " + path);
}

ModelParams load_checkpoint(const std::string& path, const ExperimentConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto read_line = [&]() {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos)
            throw FormatError(path + ": truncated checkpoint header",
                              static_cast<std::int64_t>(pos));
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    auto fail = [&](const std::string& msg, std::size_t at) {
        throw FormatError(path + ": " + msg, static_cast<std::int64_t>(at));
    };

    if (read_line() != "DSSS-CKPT 1") fail("not a checkpoint", 0);

    auto read_field = [&](const std::string& key) {
        const std::size_t at = pos;
        std::string line = read_line();
        if (line.rfind(key + " ", 0) != 0) fail("expected \"" + key + "\" field", at);
        return line.substr(key.size() + 1);
    };

    read_field("config");  // informational; shapes below are authoritative
    const std::string group = read_field("group");
    if (group != cfg.group)
        throw ConfigError("checkpoint group " + group + " does not match config group " +
                              cfg.group,
                          0, 0);
    const std::string kstr = read_field("k");
    if (kstr != std::to_string(cfg.k))
        throw ConfigError("checkpoint k " + kstr + " does not match config k " +
                              std::to_string(cfg.k),
                          0, 0);

    StreamRng scratch = StreamRng::stream(0, "init", 0);
    ModelParams params = ModelParams::init(cfg, scratch);
    auto named = params.named_params();

    const std::string count = read_field("tensors");
    if (count != std::to_string(named.size())) fail("tensor count mismatch", pos);

    std::int64_t total = 0;
    for (auto& [name, t] : named) {
        const std::size_t at = pos;
        const Shape s = t->shape();
        const std::string want = name + " " + std::to_string(s.b) + " " + std::to_string(s.c) +
                                 " " + std::to_string(s.h) + " " + std::to_string(s.w);
        if (read_line() != want) fail("tensor record mismatch, expected \"" + want + "\"", at);
        total += t->numel();
    }

    const std::string blob_len = read_field("blob");
    if (blob_len != std::to_string(total * 8)) fail("blob length mismatch", pos);
    if (bytes.size() - pos != static_cast<std::size_t>(total) * 8)
        fail("blob payload truncated or oversized", bytes.size());

    for (auto& [name, t] : named) {
        std::vector<double> v(static_cast<std::size_t>(t->numel()));
        for (auto& x : v) {
            std::uint64_t bits = 0;
            for (int byte = 0; byte < 8; ++byte)
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++]))
                        << (8 * byte);
            x = std::bit_cast<double>(bits);
        }
        *t = Tensor(t->shape(), std::move(v));
    }
    return params;
}

namespace {

Gray8 to_gray(const Tensor& map) {
    const Shape s = map.shape();
    if (s.b != 1 || s.c != 1) throw ShapeError("to_gray: expected [1,1,H,W], got " + to_string(s));
    Gray8 g{s.h, s.w, std::vector<std::uint8_t>(static_cast<std::size_t>(s.h * s.w))};
    auto v = map.values();
    for (std::size_t i = 0; i < g.v.size(); ++i) {
        const double x = std::clamp(v[i], 0.0, 1.0);
        g.v[i] = static_cast<std::uint8_t>(std::lround(255.0 * x));
    }
    return g;
}

}  // namespace

void export_prediction(const Tensor& logits, int num_classes, const std::string& path) {
    const Shape s = logits.shape();
    if (s.b != 1) throw ShapeError("export_prediction: expected a single item");
    LabelMap pred = argmax_labels(logits);
    auto palette = class_palette(num_classes);
    std::vector<double> rgb(static_cast<std::size_t>(3 * s.h * s.w));
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            const auto& colour = palette[pred.at(0, y, x)];
            for (int ch = 0; ch < 3; ++ch)
                rgb[static_cast<std::size_t>((ch * s.h + y) * s.w + x)] = colour[ch];
        }
    write_ppm(path, Tensor({1, 3, s.h, s.w}, std::move(rgb)));
}

void export_sensitivity(const ModelParams& params, const Sample& sample,
                        const ExperimentConfig& cfg, const std::string& dir,
                        const std::string& id) {
    check_group(cfg.group);
    if (cfg.group != "D" && cfg.group != "F" && cfg.group != "G")
        throw ConfigError("group " + cfg.group + " has no sensitivity maps", 0, 0);
    BatchView batch{sample.rgb, sample.depth, sample.labels};
    ForwardResult fr = forward(params, batch, cfg, false, 0, 0);
    write_pgm8(dir + "/" + id + ".sg.pgm", to_gray(fr.bundle.global));
    write_pgm8(dir + "/" + id + ".ng.pgm", to_gray(fr.bundle.non_sensitive));
    export_prediction(fr.logits, cfg.k, dir + "/" + id + ".pred.ppm");
}

}  // namespace dsss
