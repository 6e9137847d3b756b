#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ecdd {

/// Where a table entry came from. Paper entries carry no simulation settings.
struct Provenance {
    enum class Source { Paper, Fitted };

    Source source = Source::Fitted;
    std::uint64_t seed = 0;
    long reps = 0;
    std::vector<double> grid;
    double max_abs_residual = 0.0;
    std::string note;
};

/// One control-limit curve L(p0) for a fixed (lambda, ARL0) pair:
/// L = sum_k coefficients[k] * p0^basis_powers[k].
struct TableEntry {
    double lambda = 0.2;
    double arl0 = 100.0;
    std::vector<int> basis_powers;
    std::vector<double> coefficients;
    double p0_min = 0.01;
    double p0_max = 0.99;
    Provenance provenance;

    /// Evaluates the polynomial at `p_hat` clamped to [p0_min, p0_max].
    double evaluate(double p_hat) const;

    /// Throws ConfigError when sizes disagree, the range is empty, or L <= 0
    /// somewhere on a fine scan of [p0_min, p0_max].
    void validate() const;
};

/// Set of curves keyed by (lambda, arl0); at most one entry per pair.
class CalibrationTable {
  public:
    CalibrationTable() = default;

    /// Table 1 polynomials for lambda = 0.2 and ARL0 in {100, 400, 1000}.
    static CalibrationTable paper();

    void insert(TableEntry entry);
    /// Adds or replaces the entry for the same (lambda, arl0).
    void upsert(TableEntry entry);

    const TableEntry* find(double lambda, double arl0) const noexcept;
    const TableEntry& at(double lambda, double arl0) const;

    const std::vector<TableEntry>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }

  private:
    std::vector<TableEntry> entries_;
};

inline constexpr int kTableFormatVersion = 1;

nlohmann::json table_to_json(const CalibrationTable& table);
CalibrationTable table_from_json(const nlohmann::json& doc);
CalibrationTable load_table(const std::filesystem::path& path);
void save_table(const CalibrationTable& table, const std::filesystem::path& path);

/// Control limit for the current estimate; throws LookupError on a missing entry.
double eval_limit(const CalibrationTable& table, double lambda, double arl0, double p_hat);

struct RunLengthEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long reps = 0;
    long censored = 0;
};

/// Monte Carlo run length of the known-p0 Bernoulli EWMA chart started at
/// Z_0 = 0: the first t with Z_t > p0 + limit * sigma_Z(t). Runs longer than
/// `max_len` are counted as `max_len`.
RunLengthEstimate estimate_arl0(double p0, double lambda, double limit, long reps, long max_len,
                                std::uint64_t seed);

struct LimitSearchOptions {
    long reps = 10000;
    double tol_rel = 0.05;
    /// 0 means 100 * target_arl0.
    long max_len = 0;
    double limit_max = 20.0;
    double bracket_step = 0.25;
    std::uint64_t seed = 1;
};

struct LimitSearchResult {
    double limit = 0.0;
    double arl0 = 0.0;  // in-sample ARL0 at `limit`
    bool within_tolerance = false;
    /// Limits in [band_lo, band_hi) keep the in-sample ARL0 inside the
    /// tolerance band; empty when band_hi <= band_lo.
    double band_lo = 0.0;
    double band_hi = 0.0;
};

/// Search for the limit achieving `target_arl0` with the full diagnostics.
/// Never throws on a tolerance miss; the closest achievable limit is returned.
LimitSearchResult search_limit(double p0, double lambda, double target_arl0,
                               const LimitSearchOptions& options);

/// Limit whose in-control ARL0 lies within target * (1 +- tol_rel).
/// Throws SearchError when no such limit exists in (0, limit_max].
double find_limit(double p0, double lambda, double target_arl0, long reps, double tol_rel,
                  std::uint64_t seed);

/// Least-squares coefficients of y on {x^k : k in powers}. Throws FitError
/// when the design matrix is rank deficient.
std::vector<double> fit_polynomial(const std::vector<double>& x, const std::vector<double>& y,
                                   const std::vector<int>& powers);
/// Weighted variant; every weight must be positive.
std::vector<double> fit_polynomial(const std::vector<double>& x, const std::vector<double>& y,
                                   const std::vector<int>& powers,
                                   const std::vector<double>& weights);

/// Full degree-7 basis {0, 1, ..., 7}.
inline const std::vector<int>& default_basis_powers() {
    static const std::vector<int> powers{0, 1, 2, 3, 4, 5, 6, 7};
    return powers;
}

/// Constant plus odd powers, the shape of the published polynomials.
inline const std::vector<int>& odd_basis_powers() {
    static const std::vector<int> powers{0, 1, 3, 5, 7};
    return powers;
}

/// 0.05 to 0.50 in steps of 0.01.
std::vector<double> default_p0_grid();

/// Calibrates one curve: a limit search at every grid point followed by a
/// polynomial fit. `tol_rel` applies to the per-point searches.
TableEntry fit_table(double lambda, double target_arl0, const std::vector<double>& p0_grid,
                     const std::vector<int>& basis_powers, long reps, std::uint64_t seed,
                     double tol_rel = 0.10);

}  // namespace ecdd
