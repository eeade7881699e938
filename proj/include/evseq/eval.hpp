#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evseq/seqslam.hpp"

namespace evseq {

/// Expected reference index per query frame, -1 where none applies.
struct GroundTruth {
    std::vector<std::int64_t> ref;
    int tolerance = 5;
};

struct EvalReport {
    std::size_t total = 0;
    std::size_t accepted = 0;
    std::size_t correct = 0;
    double coverage = 0.0;   // correct / total
    double precision = 1.0;  // correct / accepted
    bool precision_undefined = false;  // nothing accepted; precision reported as 1.0
    double mean_abs_error = 0.0;       // frames, over correct matches
};

EvalReport score_matches(std::span<const MatchResult> results, const GroundTruth& truth);

/// Fraction of steps whose hypothesis equals the training winner of the
/// ground-truth place.
double score_hypotheses(std::span<const int> hypotheses, std::span<const int> train_winners,
                        const GroundTruth& truth);

/// Binary PGM (P5, maxval 255), min -> 0 and max -> 255 linearly, rounding
/// half away from zero. A constant matrix renders all zeros.
std::vector<std::uint8_t> quantize_for_pgm(std::span<const double> values);
void export_pgm(std::span<const double> values, std::size_t rows, std::size_t cols,
                const std::string& path);
void export_pgm(const DifferenceMatrix& matrix, const std::string& path);

// CSV: query,ref (ref = -1 for none)
void write_truth_csv(const GroundTruth& truth, const std::string& path);
GroundTruth read_truth_csv(const std::string& path, int tolerance);

void write_report(const EvalReport& report, std::ostream& out);

}  // namespace evseq
