#include "evseq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "evseq/error.hpp"

namespace evseq {

EvalReport score_matches(std::span<const MatchResult> results, const GroundTruth& truth) {
    if (truth.tolerance < 0) throw RangeError("tolerance must be >= 0");
    EvalReport report;
    report.total = results.size();
    double abs_error = 0.0;
    for (const auto& r : results) {
        if (r.query_index < 0 || r.query_index >= static_cast<std::int64_t>(truth.ref.size())) {
            throw RangeError("query " + std::to_string(r.query_index) + " has no ground truth");
        }
        if (!r.accepted) continue;
        ++report.accepted;
        const std::int64_t expected = truth.ref[static_cast<std::size_t>(r.query_index)];
        if (expected < 0 || r.best_ref_index < 0) continue;
        const auto err = std::abs(r.best_ref_index - expected);
        if (err <= truth.tolerance) {
            ++report.correct;
            abs_error += static_cast<double>(err);
        }
    }
    if (report.total > 0) {
        report.coverage = static_cast<double>(report.correct) / static_cast<double>(report.total);
    }
    if (report.accepted == 0) {
        report.precision = 1.0;
        report.precision_undefined = true;
    } else {
        report.precision =
            static_cast<double>(report.correct) / static_cast<double>(report.accepted);
    }
    if (report.correct > 0) report.mean_abs_error = abs_error / static_cast<double>(report.correct);
    return report;
}

double score_hypotheses(std::span<const int> hypotheses, std::span<const int> train_winners,
                        const GroundTruth& truth) {
    if (hypotheses.size() != truth.ref.size()) {
        throw RangeError("hypothesis count does not match ground truth");
    }
    if (hypotheses.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto place = truth.ref[i];
        if (place < 0) continue;
        if (place >= static_cast<std::int64_t>(train_winners.size())) {
            throw RangeError("ground truth place " + std::to_string(place) + " not trained");
        }
        if (hypotheses[i] == train_winners[static_cast<std::size_t>(place)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(hypotheses.size());
}

std::vector<std::uint8_t> quantize_for_pgm(std::span<const double> values) {
    std::vector<std::uint8_t> bytes(values.size(), 0);
    if (values.empty()) return bytes;
    if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
        throw RangeError("cannot render non-finite values");
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0.0)) return bytes;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double level = std::round((values[i] - lo) / range * 255.0);
        bytes[i] = static_cast<std::uint8_t>(std::clamp(level, 0.0, 255.0));
    }
    return bytes;
}

void export_pgm(std::span<const double> values, std::size_t rows, std::size_t cols,
                const std::string& path) {
    if (values.size() != rows * cols) throw ShapeError("matrix size does not match rows*cols");
    const auto bytes = quantize_for_pgm(values);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "P5\n" << cols << ' ' << rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on " + path);
}

void export_pgm(const DifferenceMatrix& matrix, const std::string& path) {
    export_pgm(matrix.values, matrix.rows, matrix.cols, path);
}

void write_truth_csv(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "query,ref\n";
    for (std::size_t j = 0; j < truth.ref.size(); ++j) out << j << ',' << truth.ref[j] << '\n';
    if (!out) throw IoError("write failure on " + path);
}

GroundTruth read_truth_csv(const std::string& path, int tolerance) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    GroundTruth truth;
    truth.tolerance = tolerance;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("query", 0) == 0) continue;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError(line_no, "expected query,ref");
        try {
            std::size_t used = 0;
            const std::string q = line.substr(0, comma);
            const std::string r = line.substr(comma + 1);
            const long long query = std::stoll(q, &used);
            if (used != q.size()) throw std::invalid_argument(q);
            const long long ref = std::stoll(r, &used);
            if (used != r.size() || ref < -1) throw std::invalid_argument(r);
            if (query != static_cast<long long>(truth.ref.size())) {
                throw FormatError(line_no, "queries must be consecutive from 0");
            }
            truth.ref.push_back(ref);
        } catch (const std::logic_error&) {
            throw FormatError(line_no, "malformed truth row");
        }
    }
    return truth;
}

void write_report(const EvalReport& report, std::ostream& out) {
    out << "queries=" << report.total << '\n'
        << "accepted=" << report.accepted << '\n'
        << "correct=" << report.correct << '\n'
        << "coverage=" << report.coverage << '\n'
        << "precision=" << report.precision << (report.precision_undefined ? " (undefined)" : "")
        << '\n'
        << "mean_abs_error=" << report.mean_abs_error << '\n';
}

}  // namespace evseq
