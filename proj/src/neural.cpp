#include "evseq/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "evseq/error.hpp"

namespace evseq {

void NetConfig::validate() const {
    if (n1 < 1 || n2 < 1 || n3 < 1) throw RangeError("layer sizes must be >= 1");
    if (!(density > 0.0 && density <= 1.0)) throw RangeError("density must be in (0, 1]");
    if (k < 1 || k > n2) throw RangeError("k must be in [1, n2]");
    if (!(beta >= 0.0 && beta <= 1.0)) throw RangeError("beta must be in [0, 1]");
    if (!(eta >= 0.0)) throw RangeError("eta must be >= 0");
    if (!(w_max >= 0.0)) throw RangeError("w_max must be >= 0");
}

std::int64_t SparseRows::nonzeros() const {
    return std::count_if(weight.begin(), weight.end(), [](float w) { return w != 0.0f; });
}

int SparseRows::row_nonzeros(int r) const {
    const auto first = weight.begin() + static_cast<std::ptrdiff_t>(r) * per_row;
    return static_cast<int>(std::count_if(first, first + per_row, [](float w) { return w != 0.0f; }));
}

void SparseRows::multiply(std::span<const double> x, std::span<double> y) const {
    for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * per_row;
        double sum = 0.0;
        for (int e = 0; e < per_row; ++e) sum += static_cast<double>(weight[base + e]) * x[index[base + e]];
        y[r] = sum;
    }
}

Network::Network(NetConfig config, SparseRows w12, SparseRows w23, std::vector<float> wrec)
    : config_(config), w12_(std::move(w12)), w23_(std::move(w23)), wrec_(std::move(wrec)) {
    config_.validate();
    if (w12_.rows != config_.n2 || w12_.cols != config_.n1 || w23_.rows != config_.n3 ||
        w23_.cols != config_.n2 ||
        wrec_.size() != static_cast<std::size_t>(config_.n3) * config_.n3) {
        throw ShapeError("network weight shapes do not match configuration");
    }
}

void Network::reinforce(int to, int from) {
    float& w = wrec_[static_cast<std::size_t>(to) * config_.n3 + from];
    w = static_cast<float>(std::min(static_cast<double>(w) + config_.eta, config_.w_max));
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

SparseRows random_rows(int rows, int cols, double density, std::mt19937_64& rng) {
    SparseRows m;
    m.rows = rows;
    m.cols = cols;
    m.per_row = static_cast<int>(std::round(density * cols));
    m.index.resize(static_cast<std::size_t>(rows) * m.per_row);
    m.weight.resize(m.index.size());

    std::vector<std::int32_t> pool(static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        std::iota(pool.begin(), pool.end(), 0);
        for (int e = 0; e < m.per_row; ++e) {
            const auto pick = e + bounded(rng, static_cast<std::uint64_t>(cols - e));
            std::swap(pool[e], pool[pick]);
        }
        std::sort(pool.begin(), pool.begin() + m.per_row);

        const std::size_t base = static_cast<std::size_t>(r) * m.per_row;
        std::vector<double> w(static_cast<std::size_t>(m.per_row));
        double norm = 0.0;
        for (auto& v : w) {
            do {
                v = 2.0 * unit_uniform(rng) - 1.0;
            } while (v == 0.0);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int e = 0; e < m.per_row; ++e) {
            m.index[base + e] = pool[e];
            m.weight[base + e] = static_cast<float>(w[e] / norm);
        }
    }
    return m;
}

}  // namespace

Network init_network(const NetConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    SparseRows w12 = random_rows(config.n2, config.n1, config.density, rng);
    SparseRows w23 = random_rows(config.n3, config.n2, config.density, rng);
    std::vector<float> wrec(static_cast<std::size_t>(config.n3) * config.n3, 0.0f);
    return Network(config, std::move(w12), std::move(w23), std::move(wrec));
}

std::vector<double> k_winners(std::span<const double> pre, int k) {
    std::vector<std::size_t> positive;
    for (std::size_t i = 0; i < pre.size(); ++i)
        if (pre[i] > 0.0) positive.push_back(i);
    const std::size_t keep = std::min(positive.size(), static_cast<std::size_t>(std::max(k, 0)));
    std::partial_sort(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(keep),
                      positive.end(), [&](std::size_t a, std::size_t b) {
                          return pre[a] != pre[b] ? pre[a] > pre[b] : a < b;
                      });
    std::vector<double> out(pre.size(), 0.0);
    for (std::size_t i = 0; i < keep; ++i) out[positive[i]] = pre[positive[i]];
    return out;
}

int argmax_lowest(std::span<const double> values, bool* degenerate) {
    int best = 0;
    bool all_equal = true;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] != values[0]) all_equal = false;
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    if (degenerate) *degenerate = all_equal;
    return best;
}

FeedforwardOutput feedforward_step(const Network& net, std::span<const double> image) {
    const auto& cfg = net.config();
    if (image.size() != static_cast<std::size_t>(cfg.n1)) {
        throw ShapeError("network expects " + std::to_string(cfg.n1) + " inputs, got " +
                         std::to_string(image.size()));
    }
    std::vector<double> pre(static_cast<std::size_t>(cfg.n2));
    net.w12().multiply(image, pre);
    FeedforwardOutput out;
    out.a2 = k_winners(pre, cfg.k);
    out.a3.assign(static_cast<std::size_t>(cfg.n3), 0.0);
    net.w23().multiply(out.a2, out.a3);
    out.winner = argmax_lowest(out.a3, &out.degenerate);
    return out;
}

TrainResult train_traverse(const Network& net, const FrameSequence& images) {
    if (images.size() < 2) throw TooShortError("training needs at least 2 images");
    images.check_uniform();
    TrainResult result{net, {}, 0};
    result.winners.reserve(images.size());
    for (const auto& img : images.frames) {
        result.winners.push_back(feedforward_step(net, img.pixels).winner);
    }
    for (std::size_t t = 0; t + 1 < result.winners.size(); ++t) {
        result.network.reinforce(result.winners[t + 1], result.winners[t]);
        ++result.increments;
    }
    return result;
}

TraverseResult test_traverse(const Network& net, const FrameSequence& images) {
    if (images.empty()) throw TooShortError("recall needs at least 1 image");
    images.check_uniform();
    const auto& cfg = net.config();
    const auto n3 = static_cast<std::size_t>(cfg.n3);
    const auto& wrec = net.wrec();

    TraverseResult result;
    std::vector<double> prev;
    for (const auto& img : images.frames) {
        FeedforwardOutput ff = feedforward_step(net, img.pixels);
        std::vector<double> a3 = std::move(ff.a3);
        if (!prev.empty()) {
            const double peak = *std::max_element(prev.begin(), prev.end());
            if (peak > 1e-12) {
                for (double& v : prev) v /= peak;
            }
            for (std::size_t i = 0; i < n3; ++i) {
                double rec = 0.0;
                const float* row = wrec.data() + i * n3;
                for (std::size_t j = 0; j < n3; ++j) {
                    if (row[j] != 0.0f) rec += static_cast<double>(row[j]) * prev[j];
                }
                a3[i] = (1.0 - cfg.beta) * a3[i] + cfg.beta * rec;
            }
        }
        bool degenerate = false;
        result.hypotheses.push_back(argmax_lowest(a3, &degenerate));
        result.degenerate.push_back(degenerate);
        result.activations.push_back(a3);
        prev = std::move(a3);
    }
    return result;
}

FrameSequence normalize_for_network(const FrameSequence& images, int patch_size) {
    FrameSequence out;
    out.frame_period_us = images.frame_period_us;
    out.origin_us = images.origin_us;
    out.frames.reserve(images.size());
    for (const auto& img : images.frames) out.frames.push_back(patch_normalize(img, patch_size));
    return out;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_sparse(std::ostream& out, const SparseRows& m) {
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols));
    detail::put_u32(out, static_cast<std::uint32_t>(m.per_row));
    for (auto i : m.index) detail::put_u32(out, static_cast<std::uint32_t>(i));
    for (float w : m.weight) detail::put_f32(out, w);
}

SparseRows get_sparse(std::istream& in, const std::string& path) {
    SparseRows m;
    m.rows = static_cast<int>(detail::get_u32(in, "rows"));
    m.cols = static_cast<int>(detail::get_u32(in, "cols"));
    m.per_row = static_cast<int>(detail::get_u32(in, "per-row count"));
    if (m.rows < 0 || m.cols < 0 || m.per_row < 0 || m.per_row > m.cols) {
        throw IoError(path + ": corrupt sparse header");
    }
    const std::size_t n = static_cast<std::size_t>(m.rows) * m.per_row;
    m.index.resize(n);
    m.weight.resize(n);
    for (auto& i : m.index) {
        i = static_cast<std::int32_t>(detail::get_u32(in, "sparse index"));
        if (i < 0 || i >= m.cols) throw IoError(path + ": sparse index out of range");
    }
    for (auto& w : m.weight) w = detail::get_f32(in, "sparse weight");
    return m;
}

}  // namespace

void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const auto& c = net.config();
    out.write("EVNN", 4);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(c.n1));
    detail::put_u32(out, static_cast<std::uint32_t>(c.n2));
    detail::put_u32(out, static_cast<std::uint32_t>(c.n3));
    detail::put_u32(out, static_cast<std::uint32_t>(c.k));
    detail::put_f64(out, c.density);
    detail::put_f64(out, c.beta);
    detail::put_f64(out, c.eta);
    detail::put_f64(out, c.w_max);
    detail::put_u64(out, c.seed);
    put_sparse(out, net.w12());
    put_sparse(out, net.w23());
    detail::put_u32(out, static_cast<std::uint32_t>(c.n3));
    detail::put_u32(out, static_cast<std::uint32_t>(c.n3));
    for (float w : net.wrec()) detail::put_f32(out, w);
    if (!out) throw IoError("write failure on " + path);
}

Network load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    detail::expect_magic(in, "EVNN", path);
    const auto version = detail::get_u32(in, "version");
    if (version != kCheckpointVersion) {
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    NetConfig c;
    c.n1 = static_cast<int>(detail::get_u32(in, "n1"));
    c.n2 = static_cast<int>(detail::get_u32(in, "n2"));
    c.n3 = static_cast<int>(detail::get_u32(in, "n3"));
    c.k = static_cast<int>(detail::get_u32(in, "k"));
    c.density = detail::get_f64(in, "density");
    c.beta = detail::get_f64(in, "beta");
    c.eta = detail::get_f64(in, "eta");
    c.w_max = detail::get_f64(in, "w_max");
    c.seed = detail::get_u64(in, "seed");
    if (c.n1 <= 0 || c.n2 <= 0 || c.n3 <= 0 || c.n3 > 1 << 16) {
        throw IoError(path + ": corrupt layer sizes");
    }
    SparseRows w12 = get_sparse(in, path);
    SparseRows w23 = get_sparse(in, path);
    const auto rr = detail::get_u32(in, "recurrent rows");
    const auto rc = detail::get_u32(in, "recurrent cols");
    if (rr != static_cast<std::uint32_t>(c.n3) || rc != rr) {
        throw IoError(path + ": recurrent matrix shape mismatch");
    }
    std::vector<float> wrec(static_cast<std::size_t>(rr) * rc);
    for (float& w : wrec) w = detail::get_f32(in, "recurrent weight");
    try {
        return Network(c, std::move(w12), std::move(w23), std::move(wrec));
    } catch (const Error& e) {
        throw IoError(path + ": " + e.what());
    }
}

void write_traverse_csv(const TraverseResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "step,winner,degenerate\n";
    for (std::size_t t = 0; t < result.hypotheses.size(); ++t) {
        out << t << ',' << result.hypotheses[t] << ',' << (result.degenerate[t] ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failure on " + path);
}

void write_winners_csv(const std::vector<int>& winners, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "step,winner\n";
    for (std::size_t t = 0; t < winners.size(); ++t) out << t << ',' << winners[t] << '\n';
    if (!out) throw IoError("write failure on " + path);
}

std::vector<int> read_winner_column(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<int> winners;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("step", 0) == 0) continue;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string step, winner;
        if (!std::getline(ls, step, ',') || !std::getline(ls, winner, ',')) {
            throw FormatError(line_no, "expected step,winner");
        }
        try {
            std::size_t used = 0;
            const int w = std::stoi(winner, &used);
            if (used != winner.size()) throw std::invalid_argument(winner);
            if (std::stoul(step) != winners.size()) throw FormatError(line_no, "steps must be consecutive from 0");
            winners.push_back(w);
        } catch (const std::logic_error&) {
            throw FormatError(line_no, "malformed winner row");
        }
    }
    return winners;
}

void write_activation_csv(const TraverseResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    char buf[32];
    for (const auto& row : result.activations) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.9g", row[i]);
            if (i) out << ',';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failure on " + path);
}

}  // namespace evseq
