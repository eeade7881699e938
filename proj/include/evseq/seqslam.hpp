#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "evseq/frames.hpp"

namespace evseq {

/// Reference x query dissimilarities, row-major with rows = reference frames.
struct DifferenceMatrix {
    std::size_t rows = 0;  // N_ref
    std::size_t cols = 0;  // N_query
    std::vector<double> values;
    bool normalized = false;

    DifferenceMatrix() = default;
    DifferenceMatrix(std::size_t r, std::size_t c, double fill = 0.0, bool norm = false)
        : rows(r), cols(c), values(r * c, fill), normalized(norm) {}

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    friend bool operator==(const DifferenceMatrix&, const DifferenceMatrix&) = default;
};

struct SeqParams {
    int ds = 100;              // sequence length in query frames
    double v_step = 0.04;      // slope grid spacing
    double prior_band = 0.25;  // fractional half-width of the slope band around the prior
    int contrast_window = 10;  // rows in the local normalization window
    double accept_gap = 1.0;   // required (S2 - S1) / std(scores)
    int exclude_width = 10;    // rows around the best endpoint excluded from S2

    void validate() const;
};

/// Per-frame speed measurements in any consistent unit.
struct SpeedPrior {
    std::vector<double> ref_speed;
    std::vector<double> query_speed;

    static SpeedPrior uniform(std::size_t n_ref, std::size_t n_query);
};

struct MatchResult {
    std::int64_t query_index = 0;
    std::int64_t best_ref_index = -1;  // -1 when no trajectory fits
    double slope = 0.0;                // reference frames per query frame
    double score = 0.0;
    double gap_sigma = 0.0;
    bool accepted = false;

    bool matched() const { return best_ref_index >= 0; }
    friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Mean absolute pixel difference between every reference/query frame pair.
DifferenceMatrix difference_matrix(const FrameSequence& ref, const FrameSequence& query,
                                   int threads = 1);

/// Rows [lo, hi) of the contrast window centered on row i, truncated at the edges.
struct RowWindow {
    std::size_t lo;
    std::size_t hi;
};
RowWindow contrast_window(std::size_t i, std::size_t rows, int window);

/// Per column, standardizes each entry by the mean/std of its local row window.
DifferenceMatrix contrast_normalize(const DifferenceMatrix& d, int window, int threads = 1);

/// Round half away from zero, as used for trajectory rows.
std::int64_t trajectory_row(std::int64_t start, double slope, int k);

/// Sum of Dn along the line starting at reference row `start` and ending at
/// query column `query_end`. Throws RangeError if the line leaves the matrix.
double trajectory_score(const DifferenceMatrix& dn, std::int64_t start, double slope,
                        std::int64_t query_end, int ds);

/// Candidate slopes for prior ratio rho: rho + n*v_step for integer n, kept
/// within [rho(1-band), rho(1+band)], ascending.
std::vector<double> slope_candidates(double rho, const SeqParams& params);

/// Prior slope ratio for the query window ending at q.
double prior_ratio(const SpeedPrior& prior, std::size_t query_end, int ds);

/// Best trajectory per query q in [ds-1, N_query). Ties go to the smaller
/// endpoint row, then the smaller slope.
std::vector<MatchResult> sequence_match(const DifferenceMatrix& dn, const SeqParams& params,
                                        const SpeedPrior& prior, int threads = 1);

/// Exhaustive reference implementation of sequence_match, kept deliberately
/// naive. Intended for small matrices.
std::vector<MatchResult> brute_force_match(const DifferenceMatrix& dn, const SeqParams& params,
                                           const SpeedPrior& prior);

// CSV: query,best_ref,slope,score,gap_sigma,accepted
void write_matches(const std::vector<MatchResult>& results, std::ostream& out);
std::vector<MatchResult> read_matches(std::istream& in);
void write_match_file(const std::vector<MatchResult>& results, const std::string& path);
std::vector<MatchResult> read_match_file(const std::string& path);

// CSV of the full matrix, one row per reference frame.
void write_matrix_csv(const DifferenceMatrix& d, const std::string& path);

}  // namespace evseq
