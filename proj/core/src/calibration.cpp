#include "ecdd/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "ecdd/error.hpp"
#include "ecdd/random.hpp"

namespace ecdd {

namespace {

constexpr double kKeyTolerance = 1e-9;

// Fit weights are 1 / half_width^2 of each point's acceptable-limit interval.
constexpr double kMinHalfWidth = 0.005;
constexpr double kUnbandedHalfWidth = 0.5;
// Narrower bands sit on a cliff of the ARL0 step function and cannot be hit.
constexpr double kMinBandWidth = 1e-3;
constexpr int kReweightRounds = 60;
constexpr double kReweightFactor = 1.5;

bool same_key(const TableEntry& e, double lambda, double arl0) {
    return std::abs(e.lambda - lambda) <= kKeyTolerance &&
           std::abs(e.arl0 - arl0) <= kKeyTolerance * std::max(1.0, arl0);
}

void check_chart_args(double p0, double lambda) {
    if (!(p0 > 0.0 && p0 < 1.0))
        throw InputError("p0 must lie strictly inside (0,1), got " + std::to_string(p0));
    if (!(lambda > 0.0 && lambda < 1.0))
        throw InputError("lambda must lie strictly inside (0,1), got " + std::to_string(lambda));
}

// sigma_Z(t) for t = 1..n, after which it equals the asymptote to double precision.
std::vector<double> sigma_schedule(double p0, double lambda) {
    const double base = p0 * (1.0 - p0) * lambda / (2.0 - lambda);
    const double r2 = (1.0 - lambda) * (1.0 - lambda);
    std::vector<double> out;
    double decay = 1.0;
    while (true) {
        decay *= r2;
        out.push_back(std::sqrt(base * (1.0 - decay)));
        if (1.0 - decay == 1.0) break;
    }
    return out;
}

// One resumable replication of the known-p0 chart. It records every time the
// standardized statistic (Z_t - p0) / sigma_Z(t) reaches a new running maximum,
// which is enough to recover its run length for any limit below that maximum.
struct LadderRun {
    explicit LadderRun(std::uint64_t seed) : rng(seed) {}

    Rng rng;
    long t = 0;
    double z = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<long, double>> ladder;

    long run_length(double limit, long max_len) const {
        for (const auto& [time, value] : ladder)
            if (value > limit) return time;
        return max_len;
    }
};

class LadderSampler {
  public:
    LadderSampler(double p0, double lambda, long reps, long max_len, std::uint64_t seed)
        : p0_(p0), lambda_(lambda), max_len_(max_len), sigma_(sigma_schedule(p0, lambda)) {
        runs_.reserve(static_cast<std::size_t>(reps));
        for (long i = 0; i < reps; ++i)
            runs_.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
    }

    // Advances every run until its maximum exceeds `limit` or it is censored.
    void extend(double limit) {
        const double keep = 1.0 - lambda_;
        for (auto& run : runs_) {
            while (run.best <= limit && run.t < max_len_) {
                ++run.t;
                const int x = bernoulli(run.rng, p0_);
                run.z = keep * run.z + lambda_ * x;
                const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(run.t),
                                                              sigma_.size()) - 1;
                const double s = (run.z - p0_) / sigma_[idx];
                if (s > run.best) {
                    run.best = s;
                    run.ladder.emplace_back(run.t, s);
                }
            }
        }
    }

    double mean_run_length(double limit) const {
        long double total = 0;
        for (const auto& run : runs_) total += run.run_length(limit, max_len_);
        return static_cast<double>(total / static_cast<long double>(runs_.size()));
    }

    // Nearest recorded maximum strictly above / below `x`, over all runs.
    double next_value_above(double x, double cap) const {
        double best = cap;
        for (const auto& run : runs_)
            for (const auto& [time, value] : run.ladder)
                if (value > x && value < best) best = value;
        return best;
    }
    double next_value_below(double x, double floor) const {
        double best = floor;
        for (const auto& run : runs_)
            for (const auto& [time, value] : run.ladder)
                if (value < x && value > best) best = value;
        return best;
    }

  private:
    double p0_;
    double lambda_;
    long max_len_;
    std::vector<double> sigma_;
    std::vector<LadderRun> runs_;
};

}  // namespace

double TableEntry::evaluate(double p_hat) const {
    const double p = std::clamp(p_hat, p0_min, p0_max);
    double sum = 0.0;
    for (std::size_t k = 0; k < coefficients.size(); ++k)
        sum += coefficients[k] * std::pow(p, basis_powers[k]);
    return sum;
}

void TableEntry::validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("table entry lambda outside (0,1)");
    if (!(arl0 > 1.0)) throw ConfigError("table entry arl0 must exceed 1");
    if (basis_powers.size() != coefficients.size() || coefficients.empty())
        throw ConfigError("table entry basis_powers and coefficients differ in length");
    if (std::any_of(basis_powers.begin(), basis_powers.end(), [](int k) { return k < 0; }))
        throw ConfigError("table entry basis powers must be nonnegative");
    if (!(p0_min > 0.0 && p0_min < p0_max && p0_max < 1.0))
        throw ConfigError("table entry p0 range must satisfy 0 < p0_min < p0_max < 1");
    constexpr int kScan = 1000;
    for (int i = 0; i <= kScan; ++i) {
        const double p = p0_min + (p0_max - p0_min) * i / kScan;
        if (!(evaluate(p) > 0.0)) {
            std::ostringstream msg;
            msg << "table entry (lambda=" << lambda << ", arl0=" << arl0
                << ") yields a nonpositive limit at p0=" << p;
            throw ConfigError(msg.str());
        }
    }
}

CalibrationTable CalibrationTable::paper() {
    const std::vector<int> powers{0, 1, 3, 5, 7};
    auto make = [&](double arl0, std::vector<double> coef, double p0_max) {
        TableEntry e;
        e.lambda = 0.2;
        e.arl0 = arl0;
        e.basis_powers = powers;
        e.coefficients = std::move(coef);
        e.p0_min = 0.01;
        e.p0_max = p0_max;
        e.provenance.source = Provenance::Source::Paper;
        e.provenance.note = "published polynomial; p0_max restricted to the range where L > 0";
        return e;
    };
    CalibrationTable table;
    table.insert(make(100.0, {2.76, -6.23, 18.12, -312.45, 1002.18}, 0.38));
    table.insert(make(400.0, {3.97, -6.56, 48.73, -330.13, 848.18}, 0.5));
    table.insert(make(1000.0, {1.17, 7.56, -21.24, 112.12, -987.23}, 0.45));
    return table;
}

void CalibrationTable::insert(TableEntry entry) {
    entry.validate();
    if (find(entry.lambda, entry.arl0) != nullptr) {
        std::ostringstream msg;
        msg << "duplicate calibration entry for lambda=" << entry.lambda
            << ", arl0=" << entry.arl0;
        throw ConfigError(msg.str());
    }
    entries_.push_back(std::move(entry));
}

void CalibrationTable::upsert(TableEntry entry) {
    entry.validate();
    for (auto& e : entries_) {
        if (same_key(e, entry.lambda, entry.arl0)) {
            e = std::move(entry);
            return;
        }
    }
    entries_.push_back(std::move(entry));
}

const TableEntry* CalibrationTable::find(double lambda, double arl0) const noexcept {
    for (const auto& e : entries_)
        if (same_key(e, lambda, arl0)) return &e;
    return nullptr;
}

const TableEntry& CalibrationTable::at(double lambda, double arl0) const {
    if (const auto* e = find(lambda, arl0)) return *e;
    std::ostringstream msg;
    msg << "no calibration entry for lambda=" << lambda << ", arl0=" << arl0;
    throw LookupError(msg.str());
}

double eval_limit(const CalibrationTable& table, double lambda, double arl0, double p_hat) {
    return table.at(lambda, arl0).evaluate(p_hat);
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json table_to_json(const CalibrationTable& table) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : table.entries()) {
        nlohmann::json prov;
        if (e.provenance.source == Provenance::Source::Paper) {
            prov["source"] = "paper";
        } else {
            prov["source"] = "fitted";
            prov["seed"] = e.provenance.seed;
            prov["reps"] = e.provenance.reps;
            prov["grid"] = e.provenance.grid;
            prov["max_abs_residual"] = e.provenance.max_abs_residual;
        }
        if (!e.provenance.note.empty()) prov["note"] = e.provenance.note;
        entries.push_back({{"lambda", e.lambda},
                           {"arl0", e.arl0},
                           {"basis_powers", e.basis_powers},
                           {"coefficients", e.coefficients},
                           {"p0_min", e.p0_min},
                           {"p0_max", e.p0_max},
                           {"provenance", prov}});
    }
    return {{"version", kTableFormatVersion}, {"entries", entries}};
}

CalibrationTable table_from_json(const nlohmann::json& doc) {
    try {
        const int version = doc.at("version").get<int>();
        if (version != kTableFormatVersion)
            throw ParseError("unsupported calibration table version " + std::to_string(version));
        CalibrationTable table;
        for (const auto& item : doc.at("entries")) {
            TableEntry e;
            e.lambda = item.at("lambda").get<double>();
            e.arl0 = item.at("arl0").get<double>();
            e.basis_powers = item.at("basis_powers").get<std::vector<int>>();
            e.coefficients = item.at("coefficients").get<std::vector<double>>();
            e.p0_min = item.at("p0_min").get<double>();
            e.p0_max = item.at("p0_max").get<double>();
            const auto& prov = item.at("provenance");
            const auto source = prov.at("source").get<std::string>();
            if (source == "paper") {
                e.provenance.source = Provenance::Source::Paper;
            } else if (source == "fitted") {
                e.provenance.source = Provenance::Source::Fitted;
                e.provenance.seed = prov.at("seed").get<std::uint64_t>();
                e.provenance.reps = prov.at("reps").get<long>();
                e.provenance.grid = prov.at("grid").get<std::vector<double>>();
                e.provenance.max_abs_residual = prov.value("max_abs_residual", 0.0);
            } else {
                throw ParseError("unknown provenance source '" + source + "'");
            }
            e.provenance.note = prov.value("note", std::string{});
            table.insert(std::move(e));
        }
        return table;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("malformed calibration table: ") + ex.what());
    }
}

CalibrationTable load_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open calibration table " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    return table_from_json(doc);
}

void save_table(const CalibrationTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write calibration table " + path.string());
    // nlohmann emits doubles with round-trip precision.
    out << table_to_json(table).dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Monte Carlo

RunLengthEstimate estimate_arl0(double p0, double lambda, double limit, long reps, long max_len,
                                std::uint64_t seed) {
    check_chart_args(p0, lambda);
    if (reps < 1) throw InputError("reps must be at least 1");
    if (max_len < 1) throw InputError("max_len must be at least 1");

    const double var_x = p0 * (1.0 - p0);
    const double shrink = lambda / (2.0 - lambda);
    const double r2 = (1.0 - lambda) * (1.0 - lambda);

    RunLengthEstimate out;
    out.reps = reps;
    long double sum = 0.0L;
    long double sum_sq = 0.0L;
    for (long i = 0; i < reps; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        double z = 0.0;
        double decay = 1.0;
        long t = 0;
        bool flagged = false;
        while (t < max_len) {
            ++t;
            decay *= r2;
            const double sigma_z = std::sqrt(var_x * shrink * (1.0 - decay));
            z = (1.0 - lambda) * z + lambda * bernoulli(rng, p0);
            if (z > p0 + limit * sigma_z) {
                flagged = true;
                break;
            }
        }
        if (!flagged) ++out.censored;
        sum += t;
        sum_sq += static_cast<long double>(t) * t;
    }
    const long double n = reps;
    const long double mean = sum / n;
    out.mean = static_cast<double>(mean);
    if (reps > 1) {
        const long double var = (sum_sq - n * mean * mean) / (n - 1);
        out.std_error = std::sqrt(static_cast<double>(std::max<long double>(var, 0)) / reps);
    }
    return out;
}

LimitSearchResult search_limit(double p0, double lambda, double target_arl0,
                               const LimitSearchOptions& options) {
    check_chart_args(p0, lambda);
    if (!(target_arl0 > 1.0)) throw InputError("target ARL0 must exceed 1");
    if (!(options.tol_rel > 0.0 && options.tol_rel < 0.5))
        throw InputError("tol_rel must lie in (0, 0.5)");
    if (options.reps < 1) throw InputError("reps must be at least 1");

    const long max_len = options.max_len > 0
                             ? options.max_len
                             : static_cast<long>(std::ceil(100.0 * target_arl0));
    const double band_low = target_arl0 * (1.0 - options.tol_rel);
    const double band_high = target_arl0 * (1.0 + options.tol_rel);
    LadderSampler sampler(p0, lambda, options.reps, max_len, options.seed);

    auto describe = [&](const std::string& what) {
        std::ostringstream msg;
        msg << "limit search failed for p0=" << p0 << ", lambda=" << lambda
            << ", target ARL0=" << target_arl0 << ": " << what;
        return msg.str();
    };

    sampler.extend(0.0);
    const double arl_at_zero = sampler.mean_run_length(0.0);
    if (arl_at_zero > band_high) {
        std::ostringstream what;
        what << "ARL0 at limit 0 is already " << arl_at_zero;
        throw SearchError(describe(what.str()));
    }

    // Bracket expansion until the upper edge of the tolerance band is passed.
    // ARL0 is nondecreasing in the limit for every sample path.
    double hi = 0.0;
    double arl_hi = arl_at_zero;
    while (arl_hi <= band_high && hi < options.limit_max) {
        hi = std::min(hi + options.bracket_step, options.limit_max);
        sampler.extend(hi);
        arl_hi = sampler.mean_run_length(hi);
    }
    if (arl_hi < target_arl0) {
        std::ostringstream what;
        what << "ARL0 at limit " << options.limit_max << " is only " << arl_hi;
        throw SearchError(describe(what.str()));
    }

    // On the fixed sample ARL0(L) is a right-continuous step function.
    // first_reaching(v) = inf { L in [0, hi] : ARL0(L) >= v }.
    auto first_reaching = [&](double value) {
        if (arl_at_zero >= value) return 0.0;
        if (sampler.mean_run_length(hi) < value) return hi;
        double lo = 0.0;
        double up = hi;
        for (int iter = 0; iter < 200 && up - lo > 1e-13 * std::max(1.0, up); ++iter) {
            const double mid = 0.5 * (lo + up);
            if (sampler.mean_run_length(mid) >= value)
                up = mid;
            else
                lo = mid;
        }
        return up;
    };

    LimitSearchResult result;
    result.band_lo = first_reaching(band_low);
    result.band_hi = first_reaching(std::nextafter(band_high, HUGE_VAL));
    if (result.band_hi > result.band_lo) {
        // The centre of the acceptable interval is the choice least sensitive
        // to sampling noise.
        result.limit = 0.5 * (result.band_lo + result.band_hi);
        result.arl0 = sampler.mean_run_length(result.limit);
        result.within_tolerance = true;
        return result;
    }

    // The step at the crossing jumps over the whole band: take the interior of
    // whichever neighbouring plateau is closer to the target.
    const double step_at = first_reaching(target_arl0);
    const double above = sampler.next_value_above(step_at, options.limit_max);
    const double right = 0.5 * (step_at + above);
    result.limit = right;
    result.arl0 = sampler.mean_run_length(right);
    if (step_at > 0.0) {
        const double below = sampler.next_value_below(step_at, 0.0);
        const double left = 0.5 * (below + step_at);
        const double arl_left = sampler.mean_run_length(left);
        if (left > 0.0 && std::abs(arl_left - target_arl0) < std::abs(result.arl0 - target_arl0)) {
            result.limit = left;
            result.arl0 = arl_left;
        }
    }
    result.within_tolerance = std::abs(result.arl0 - target_arl0) <= options.tol_rel * target_arl0;
    return result;
}

double find_limit(double p0, double lambda, double target_arl0, long reps, double tol_rel,
                  std::uint64_t seed) {
    LimitSearchOptions options;
    options.reps = reps;
    options.tol_rel = tol_rel;
    options.seed = seed;
    const auto result = search_limit(p0, lambda, target_arl0, options);
    if (!result.within_tolerance) {
        std::ostringstream msg;
        msg << "limit search for p0=" << p0 << ", lambda=" << lambda << ", target ARL0="
            << target_arl0 << " could not reach the tolerance band: closest limit "
            << result.limit << " gives ARL0 " << result.arl0;
        throw SearchError(msg.str());
    }
    return result.limit;
}

std::vector<double> fit_polynomial(const std::vector<double>& x, const std::vector<double>& y,
                                   const std::vector<int>& powers) {
    return fit_polynomial(x, y, powers, std::vector<double>(x.size(), 1.0));
}

std::vector<double> fit_polynomial(const std::vector<double>& x, const std::vector<double>& y,
                                   const std::vector<int>& powers,
                                   const std::vector<double>& weights) {
    if (x.size() != y.size() || x.size() != weights.size())
        throw FitError("x, y and weights differ in length");
    if (powers.empty()) throw FitError("empty basis");
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto m = static_cast<Eigen::Index>(powers.size());
    if (n < m) throw FitError("fewer points than basis functions");

    Eigen::MatrixXd design(n, m);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(weights[i] > 0.0)) throw FitError("weights must be positive");
        const double root_w = std::sqrt(weights[i]);
        for (Eigen::Index k = 0; k < m; ++k) design(i, k) = root_w * std::pow(x[i], powers[k]);
        rhs(i) = root_w * y[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-12);
    if (qr.rank() < m)
        throw FitError("rank-deficient design: " + std::to_string(qr.rank()) +
                       " independent columns for " + std::to_string(m) + " basis functions");
    const Eigen::VectorXd coef = qr.solve(rhs);
    return {coef.data(), coef.data() + coef.size()};
}

std::vector<double> default_p0_grid() {
    std::vector<double> grid;
    for (int i = 5; i <= 50; ++i) grid.push_back(i / 100.0);
    return grid;
}

TableEntry fit_table(double lambda, double target_arl0, const std::vector<double>& p0_grid,
                     const std::vector<int>& basis_powers, long reps, std::uint64_t seed,
                     double tol_rel) {
    if (p0_grid.size() <= basis_powers.size())
        throw FitError("grid must contain more points than basis functions");
    for (double p : p0_grid)
        if (p < 0.01 || p > 0.99) throw FitError("grid points must lie within [0.01, 0.99]");

    // Duplicates make the design singular; check before spending simulation time.
    {
        std::vector<double> sorted = p0_grid;
        std::sort(sorted.begin(), sorted.end());
        const auto distinct = std::unique(sorted.begin(), sorted.end()) - sorted.begin();
        if (static_cast<std::size_t>(distinct) < basis_powers.size())
            throw FitError("grid has only " + std::to_string(distinct) + " distinct points");
    }

    std::vector<LimitSearchResult> points;
    points.reserve(p0_grid.size());
    int misses = 0;
    for (std::size_t i = 0; i < p0_grid.size(); ++i) {
        LimitSearchOptions options;
        options.reps = reps;
        options.tol_rel = tol_rel;
        options.seed = derive_seed(seed, i);
        points.push_back(search_limit(p0_grid[i], lambda, target_arl0, options));
        if (!points.back().within_tolerance) ++misses;
    }

    // Weighted least squares: a point whose acceptable band is wide barely
    // constrains the curve. Points the fit leaves outside their band get their
    // weight raised until the curve passes through every band (or we give up).
    std::vector<double> limits;
    std::vector<double> weights;
    std::vector<bool> banded;
    for (const auto& r : points) {
        limits.push_back(r.limit);
        banded.push_back(r.band_hi - r.band_lo > kMinBandWidth);
        const double half = banded.back() ? 0.5 * (r.band_hi - r.band_lo) : kUnbandedHalfWidth;
        weights.push_back(1.0 / std::pow(std::max(half, kMinHalfWidth), 2));
    }

    TableEntry entry;
    entry.lambda = lambda;
    entry.arl0 = target_arl0;
    entry.basis_powers = basis_powers;
    entry.p0_min = *std::min_element(p0_grid.begin(), p0_grid.end());
    entry.p0_max = *std::max_element(p0_grid.begin(), p0_grid.end());

    // Keep the round that leaves the fewest points outside their band; once the
    // bands are jointly unreachable the weights only trade one miss for another.
    std::vector<double> best;
    int outside = static_cast<int>(points.size()) + 1;
    for (int round = 0; round < kReweightRounds; ++round) {
        entry.coefficients = fit_polynomial(p0_grid, limits, basis_powers, weights);
        int missed = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!banded[i]) continue;
            const double fitted = entry.evaluate(p0_grid[i]);
            if (fitted < points[i].band_lo || fitted >= points[i].band_hi) {
                weights[i] *= kReweightFactor;
                ++missed;
            }
        }
        if (missed < outside) {
            outside = missed;
            best = entry.coefficients;
        }
        if (missed == 0) break;
    }
    entry.coefficients = best;

    entry.provenance.source = Provenance::Source::Fitted;
    entry.provenance.seed = seed;
    entry.provenance.reps = reps;
    entry.provenance.grid = p0_grid;
    double worst = 0.0;
    for (std::size_t i = 0; i < p0_grid.size(); ++i)
        worst = std::max(worst, std::abs(entry.evaluate(p0_grid[i]) - limits[i]));
    entry.provenance.max_abs_residual = worst;
    std::ostringstream note;
    note << "weighted fit, per-point tolerance " << tol_rel;
    if (misses > 0) note << "; " << misses << " grid point(s) have no limit inside the band";
    if (outside > 0) note << "; fitted curve leaves " << outside << " grid point(s) outside their band";
    entry.provenance.note = note.str();
    return entry;
}

}  // namespace ecdd
