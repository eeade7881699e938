#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evseq/frames.hpp"

namespace evseq {

struct NetConfig {
    int n1 = 768;    // input units (32x24)
    int n2 = 3072;   // sparsification units
    int n3 = 555;    // output units
    double density = 0.20;
    int k = 154;     // active L2 units per step
    double beta = 0.5;   // weight of the recurrent term during recall
    double eta = 1.0;    // recurrent learning increment
    double w_max = 1.0;  // recurrent weight cap
    std::uint64_t seed = 1;

    void validate() const;
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Fixed fan-in sparse matrix: every row holds `per_row` (column, weight)
/// entries with ascending columns.
struct SparseRows {
    int rows = 0;
    int cols = 0;
    int per_row = 0;
    std::vector<std::int32_t> index;  // rows * per_row
    std::vector<float> weight;        // rows * per_row

    std::int64_t nonzeros() const;
    int row_nonzeros(int r) const;
    void multiply(std::span<const double> x, std::span<double> y) const;

    friend bool operator==(const SparseRows&, const SparseRows&) = default;
};

class Network {
public:
    Network() = default;
    Network(NetConfig config, SparseRows w12, SparseRows w23, std::vector<float> wrec);

    const NetConfig& config() const { return config_; }
    const SparseRows& w12() const { return w12_; }
    const SparseRows& w23() const { return w23_; }
    /// Row-major n3 x n3; entry (to, from).
    const std::vector<float>& wrec() const { return wrec_; }
    float recurrent(int to, int from) const {
        return wrec_[static_cast<std::size_t>(to) * config_.n3 + from];
    }

    /// Adds eta to (to, from), saturating at w_max.
    void reinforce(int to, int from);

    friend bool operator==(const Network&, const Network&) = default;

private:
    NetConfig config_;
    SparseRows w12_;
    SparseRows w23_;
    std::vector<float> wrec_;
};

struct FeedforwardOutput {
    std::vector<double> a2;
    std::vector<double> a3;
    int winner = 0;
    bool degenerate = false;
};

struct TraverseResult {
    std::vector<int> hypotheses;
    std::vector<std::vector<double>> activations;
    std::vector<bool> degenerate;
};

struct TrainResult {
    Network network;
    std::vector<int> winners;
    std::int64_t increments = 0;
};

Network init_network(const NetConfig& config);

/// Rectify, keep the k largest (ties to the lower index), zero the rest.
std::vector<double> k_winners(std::span<const double> pre, int k);

/// Smallest index attaining the maximum; `degenerate` set when all entries are equal.
int argmax_lowest(std::span<const double> values, bool* degenerate = nullptr);

FeedforwardOutput feedforward_step(const Network& net, std::span<const double> image);

/// Learns recurrent weights from the feedforward winner order; feedforward
/// weights are untouched.
TrainResult train_traverse(const Network& net, const FrameSequence& images);

/// Recall with activity mixed between the feedforward drive and the learned
/// recurrent projection of the previous, max-normalized state.
TraverseResult test_traverse(const Network& net, const FrameSequence& images);

/// Patch-normalizes each image for network input (shape unchanged).
FrameSequence normalize_for_network(const FrameSequence& images, int patch_size);

// "EVNN" checkpoint, version 1.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// CSV: step,winner,degenerate
void write_traverse_csv(const TraverseResult& result, const std::string& path);
void write_winners_csv(const std::vector<int>& winners, const std::string& path);
std::vector<int> read_winner_column(const std::string& path);
// One row per step, n3 comma-separated activations.
void write_activation_csv(const TraverseResult& result, const std::string& path);

}  // namespace evseq
