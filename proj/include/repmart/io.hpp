#pragma once

#include "repmart/esg.hpp"
#include "repmart/fit.hpp"
#include "repmart/metrics.hpp"
#include "repmart/portfolios.hpp"

#include <filesystem>
#include <string>

namespace repmart {

// Driver CSV: one row per path, d*T columns t-major, header x_t{t}_d{j}.
void write_driver_csv(const std::filesystem::path& path, const DriverPaths& drivers);
// Returns the sample matrix (n x dT) plus the parsed (T, d) from the header.
struct DriverCsv {
    Matrix x;
    int horizon = 0;
    int dim = 0;
};
DriverCsv read_driver_csv(const std::filesystem::path& path);

// Cashflow CSV: path_id, zeta_1..zeta_T, terminal.
void write_cashflow_csv(const std::filesystem::path& path, const CashflowSample& sample);
CashflowSample read_cashflow_csv(const std::filesystem::path& path);

// Value distribution CSV: path_id, value.
void write_values_csv(const std::filesystem::path& path, const ValueDistribution& dist);

// Lee-Carter override CSV: age_lo, age_hi, a_x, b_x.
LeeCarterTable read_lee_carter_csv(const std::filesystem::path& path);

// Structured configs ---------------------------------------------------------

std::string esg_config_to_json(const EsgConfig& cfg);
EsgConfig esg_config_from_json(const std::string& text);
EsgConfig load_esg_config(const std::filesystem::path& path);

std::string fit_config_to_json(const FitConfig& cfg);
FitConfig fit_config_from_json(const std::string& text);

std::string model_to_json(const ReplicatingMartingale& model);
ReplicatingMartingale model_from_json(const std::string& text);

// FNV-1a hash of the canonical config text, hex-encoded.
std::string config_hash(const std::string& canonical_text);

// Report files -----------------------------------------------------------------

// report.csv rows: method, family, samples, maturity, metric, value.
void write_report_csv(const std::filesystem::path& path, const RiskReport& report);
// boxplot.csv rows: method, maturity, samples, repetition, signed rel ES error.
void write_boxplot_csv(const std::filesystem::path& path, const RiskReport& report);
// Aligned text table (method columns by sample-size rows, one block per metric).
std::string format_report_table(const RiskReport& report);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace repmart
