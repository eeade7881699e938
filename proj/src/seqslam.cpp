#include "evseq/seqslam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "evseq/error.hpp"
#include "evseq/parallel.hpp"

namespace evseq {

void SeqParams::validate() const {
    if (ds < 2) throw RangeError("ds must be >= 2");
    if (!(v_step > 0.0)) throw RangeError("v_step must be > 0");
    if (!(prior_band > 0.0 && prior_band < 1.0)) throw RangeError("prior band must be in (0, 1)");
    if (contrast_window < 2) throw RangeError("contrast window must be >= 2");
    if (!(accept_gap >= 0.0)) throw RangeError("accept gap must be >= 0");
    if (exclude_width < 1) throw RangeError("exclude width must be >= 1");
}

SpeedPrior SpeedPrior::uniform(std::size_t n_ref, std::size_t n_query) {
    return SpeedPrior{std::vector<double>(n_ref, 1.0), std::vector<double>(n_query, 1.0)};
}

DifferenceMatrix difference_matrix(const FrameSequence& ref, const FrameSequence& query,
                                   int threads) {
    ref.check_uniform();
    query.check_uniform();
    if (!ref.empty() && !query.empty() &&
        (ref.width() != query.width() || ref.height() != query.height())) {
        throw ShapeError("reference and query frames differ in shape");
    }
    DifferenceMatrix d(ref.size(), query.size());
    if (ref.empty() || query.empty()) return d;
    const std::size_t n_px = ref.frames.front().size();
    const double inv = 1.0 / static_cast<double>(n_px);
    parallel_for(ref.size(), threads, [&](std::size_t i) {
        const double* a = ref.frames[i].pixels.data();
        double* row = d.values.data() + i * d.cols;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double* b = query.frames[j].pixels.data();
            double sum = 0.0;
            for (std::size_t p = 0; p < n_px; ++p) sum += std::abs(a[p] - b[p]);
            row[j] = sum * inv;
        }
    });
    return d;
}

RowWindow contrast_window(std::size_t i, std::size_t rows, int window) {
    const auto half = static_cast<std::int64_t>(window / 2);
    const std::int64_t lo = static_cast<std::int64_t>(i) - half;
    const std::int64_t hi = lo + window;
    return RowWindow{static_cast<std::size_t>(std::max<std::int64_t>(lo, 0)),
                     static_cast<std::size_t>(
                         std::min<std::int64_t>(hi, static_cast<std::int64_t>(rows)))};
}

DifferenceMatrix contrast_normalize(const DifferenceMatrix& d, int window, int threads) {
    if (window < 2) throw RangeError("contrast window must be >= 2");
    DifferenceMatrix out(d.rows, d.cols, 0.0, true);
    parallel_for(d.cols, threads, [&](std::size_t j) {
        for (std::size_t i = 0; i < d.rows; ++i) {
            const auto [lo, hi] = contrast_window(i, d.rows, window);
            const double n = static_cast<double>(hi - lo);
            double sum = 0.0;
            for (std::size_t r = lo; r < hi; ++r) sum += d.at(r, j);
            const double mean = sum / n;
            double ss = 0.0;
            for (std::size_t r = lo; r < hi; ++r) {
                const double dev = d.at(r, j) - mean;
                ss += dev * dev;
            }
            const double sd = std::sqrt(ss / n);
            out.at(i, j) = sd < 1e-12 ? 0.0 : (d.at(i, j) - mean) / sd;
        }
    });
    return out;
}

std::int64_t trajectory_row(std::int64_t start, double slope, int k) {
    return static_cast<std::int64_t>(std::round(static_cast<double>(start) + slope * k));
}

double trajectory_score(const DifferenceMatrix& dn, std::int64_t start, double slope,
                        std::int64_t query_end, int ds) {
    const std::int64_t first_col = query_end - ds + 1;
    if (ds < 1 || first_col < 0 || query_end >= static_cast<std::int64_t>(dn.cols)) {
        throw RangeError("trajectory columns outside matrix");
    }
    double sum = 0.0;
    for (int k = 0; k < ds; ++k) {
        const std::int64_t row = trajectory_row(start, slope, k);
        if (row < 0 || row >= static_cast<std::int64_t>(dn.rows)) {
            throw RangeError("trajectory row " + std::to_string(row) + " outside matrix");
        }
        sum += dn.at(static_cast<std::size_t>(row), static_cast<std::size_t>(first_col + k));
    }
    return sum;
}

std::vector<double> slope_candidates(double rho, const SeqParams& params) {
    const double lo = rho * (1.0 - params.prior_band);
    const double hi = rho * (1.0 + params.prior_band);
    const auto steps = static_cast<std::int64_t>(std::floor(rho * params.prior_band / params.v_step));
    std::vector<double> slopes;
    for (std::int64_t n = -steps; n <= steps; ++n) {
        const double v = rho + static_cast<double>(n) * params.v_step;
        if (v >= lo && v <= hi) slopes.push_back(v);
    }
    return slopes;
}

namespace {

void check_prior(const DifferenceMatrix& dn, const SeqParams& params, const SpeedPrior& prior) {
    params.validate();
    if (!dn.normalized) throw Error("sequence matching needs a contrast-normalized matrix");
    if (prior.ref_speed.size() != dn.rows || prior.query_speed.size() != dn.cols) {
        throw PriorShapeError("speed prior lengths (" + std::to_string(prior.ref_speed.size()) +
                              ", " + std::to_string(prior.query_speed.size()) +
                              ") do not match matrix (" + std::to_string(dn.rows) + ", " +
                              std::to_string(dn.cols) + ")");
    }
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!std::all_of(prior.ref_speed.begin(), prior.ref_speed.end(), positive) ||
        !std::all_of(prior.query_speed.begin(), prior.query_speed.end(), positive)) {
        throw PriorShapeError("speed prior entries must be positive");
    }
    if (dn.cols < static_cast<std::size_t>(params.ds)) {
        throw TooShortError("query sequence shorter than ds = " + std::to_string(params.ds));
    }
}

bool better(double score, std::int64_t end, double slope, const MatchResult& best) {
    if (score != best.score) return score < best.score;
    if (end != best.best_ref_index) return end < best.best_ref_index;
    return slope < best.slope;
}

}  // namespace

double prior_ratio(const SpeedPrior& prior, std::size_t query_end, int ds) {
    double q_sum = 0.0;
    for (std::size_t j = query_end + 1 - static_cast<std::size_t>(ds); j <= query_end; ++j) {
        q_sum += prior.query_speed[j];
    }
    double r_sum = 0.0;
    for (double v : prior.ref_speed) r_sum += v;
    const double q_mean = q_sum / ds;
    const double r_mean = r_sum / static_cast<double>(prior.ref_speed.size());
    return q_mean / r_mean;
}

std::vector<MatchResult> sequence_match(const DifferenceMatrix& dn, const SeqParams& params,
                                        const SpeedPrior& prior, int threads) {
    check_prior(dn, params, prior);
    const std::size_t n_ref = dn.rows;
    const std::size_t first_q = static_cast<std::size_t>(params.ds) - 1;
    const auto ds = params.ds;

    // Column-major copy: the inner sum walks rows of neighbouring columns.
    std::vector<double> cols(dn.values.size());
    for (std::size_t i = 0; i < dn.rows; ++i)
        for (std::size_t j = 0; j < dn.cols; ++j) cols[j * n_ref + i] = dn.at(i, j);

    std::vector<MatchResult> results(dn.cols - first_q);
    parallel_for(results.size(), threads, [&](std::size_t idx) {
        const std::size_t q = first_q + idx;
        const std::vector<double> slopes = slope_candidates(prior_ratio(prior, q, ds), params);
        const double* base = cols.data() + (q + 1 - ds) * n_ref;

        MatchResult best;
        best.query_index = static_cast<std::int64_t>(q);
        best.score = std::numeric_limits<double>::infinity();
        std::vector<double> scores;
        std::vector<double> end_min(n_ref, std::numeric_limits<double>::infinity());

        for (std::size_t s = 0; s < n_ref && !slopes.empty(); ++s) {
            const auto start = static_cast<std::int64_t>(s);
            if (trajectory_row(start, slopes.front(), ds - 1) >= static_cast<std::int64_t>(n_ref)) {
                break;
            }
            for (double v : slopes) {
                const std::int64_t end = trajectory_row(start, v, ds - 1);
                if (end >= static_cast<std::int64_t>(n_ref)) break;
                double sum = 0.0;
                for (int k = 0; k < ds; ++k) {
                    sum += base[static_cast<std::size_t>(k) * n_ref +
                                static_cast<std::size_t>(trajectory_row(start, v, k))];
                }
                scores.push_back(sum);
                auto& em = end_min[static_cast<std::size_t>(end)];
                em = std::min(em, sum);
                if (better(sum, end, v, best)) {
                    best.score = sum;
                    best.best_ref_index = end;
                    best.slope = v;
                }
            }
        }

        if (scores.empty()) {
            results[idx] = MatchResult{best.query_index, -1, 0.0, 0.0, 0.0, false};
            return;
        }

        double sum = 0.0;
        for (double x : scores) sum += x;
        const double mean = sum / static_cast<double>(scores.size());
        double ss = 0.0;
        for (double x : scores) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(scores.size()));

        double second = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < n_ref; ++e) {
            const auto dist = std::abs(static_cast<std::int64_t>(e) - best.best_ref_index);
            if (dist > params.exclude_width) second = std::min(second, end_min[e]);
        }
        best.gap_sigma =
            (sd < 1e-12 || !std::isfinite(second)) ? 0.0 : (second - best.score) / sd;
        best.accepted = best.gap_sigma >= params.accept_gap;
        results[idx] = best;
    });
    return results;
}

std::vector<MatchResult> brute_force_match(const DifferenceMatrix& dn, const SeqParams& params,
                                           const SpeedPrior& prior) {
    check_prior(dn, params, prior);
    struct Candidate {
        double score;
        std::int64_t end;
        double slope;
    };
    const auto n_ref = static_cast<std::int64_t>(dn.rows);
    const auto n_query = static_cast<std::int64_t>(dn.cols);
    std::vector<MatchResult> results;
    for (std::int64_t q = params.ds - 1; q < n_query; ++q) {
        const double rho = prior_ratio(prior, static_cast<std::size_t>(q), params.ds);
        const std::vector<double> slopes = slope_candidates(rho, params);

        std::vector<Candidate> cands;
        for (std::int64_t s = 0; s < n_ref; ++s) {
            for (double v : slopes) {
                bool inside = true;
                for (int k = 0; k < params.ds; ++k) {
                    const std::int64_t row = trajectory_row(s, v, k);
                    if (row < 0 || row >= n_ref) inside = false;
                }
                if (!inside) continue;
                cands.push_back({trajectory_score(dn, s, v, q, params.ds),
                                 trajectory_row(s, v, params.ds - 1), v});
            }
        }

        MatchResult r;
        r.query_index = q;
        if (cands.empty()) {
            results.push_back(r);
            continue;
        }

        const Candidate* best = &cands.front();
        for (const auto& c : cands) {
            if (c.score < best->score ||
                (c.score == best->score &&
                 (c.end < best->end || (c.end == best->end && c.slope < best->slope)))) {
                best = &c;
            }
        }

        double total = 0.0;
        for (const auto& c : cands) total += c.score;
        const double mean = total / static_cast<double>(cands.size());
        double ss = 0.0;
        for (const auto& c : cands) ss += (c.score - mean) * (c.score - mean);
        const double sd = std::sqrt(ss / static_cast<double>(cands.size()));

        bool have_second = false;
        double second = 0.0;
        for (const auto& c : cands) {
            if (std::abs(c.end - best->end) <= params.exclude_width) continue;
            if (!have_second || c.score < second) second = c.score;
            have_second = true;
        }

        r.best_ref_index = best->end;
        r.slope = best->slope;
        r.score = best->score;
        r.gap_sigma = (sd < 1e-12 || !have_second) ? 0.0 : (second - best->score) / sd;
        r.accepted = r.gap_sigma >= params.accept_gap;
        results.push_back(r);
    }
    return results;
}

namespace {

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_matches(const std::vector<MatchResult>& results, std::ostream& out) {
    out << "query,best_ref,slope,score,gap_sigma,accepted\n";
    for (const auto& r : results) {
        out << r.query_index << ',' << r.best_ref_index << ',' << format_real(r.slope) << ','
            << format_real(r.score) << ',' << format_real(r.gap_sigma) << ','
            << (r.accepted ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failure");
}

std::vector<MatchResult> read_matches(std::istream& in) {
    std::vector<MatchResult> results;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("query", 0) == 0) continue;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field[6];
        for (int f = 0; f < 6; ++f) {
            if (!std::getline(ls, field[f], ',')) throw FormatError(line_no, "expected 6 fields");
        }
        std::string extra;
        if (std::getline(ls, extra)) throw FormatError(line_no, "expected 6 fields");
        try {
            std::size_t used = 0;
            auto whole = [&](const std::string& s) {
                if (used != s.size()) throw std::invalid_argument(s);
            };
            MatchResult r;
            r.query_index = std::stoll(field[0], &used);
            whole(field[0]);
            r.best_ref_index = std::stoll(field[1], &used);
            whole(field[1]);
            r.slope = std::stod(field[2], &used);
            whole(field[2]);
            r.score = std::stod(field[3], &used);
            whole(field[3]);
            r.gap_sigma = std::stod(field[4], &used);
            whole(field[4]);
            if (field[5] != "0" && field[5] != "1") throw std::invalid_argument(field[5]);
            r.accepted = field[5] == "1";
            results.push_back(r);
        } catch (const std::logic_error&) {
            throw FormatError(line_no, "malformed match row");
        }
    }
    return results;
}

void write_match_file(const std::vector<MatchResult>& results, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_matches(results, out);
}

std::vector<MatchResult> read_match_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_matches(in);
}

void write_matrix_csv(const DifferenceMatrix& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < d.rows; ++i) {
        for (std::size_t j = 0; j < d.cols; ++j) {
            if (j) out << ',';
            out << format_real(d.at(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failure on " + path);
}

}  // namespace evseq
