#include "repmart/io.hpp"

#include "repmart/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace repmart {

namespace {

// Shortest round-trip decimal representation.
std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) {
        std::ostringstream msg;
        msg << "CSV parse error at row " << row << ", column " << col + 1 << ": '" << cell << "'";
        throw std::invalid_argument(msg.str());
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    return in;
}

} // namespace

void write_driver_csv(const std::filesystem::path& path, const DriverPaths& drivers) {
    std::ofstream out = open_out(path);
    const int T = drivers.horizon();
    const int d = drivers.dim();
    for (int t = 1; t <= T; ++t)
        for (int j = 1; j <= d; ++j)
            out << (t == 1 && j == 1 ? "" : ",") << "x_t" << t << "_d" << j;
    out << '\n';
    for (int p = 0; p < drivers.n_paths(); ++p) {
        auto row = drivers.x.path(p);
        for (std::size_t c = 0; c < row.size(); ++c)
            out << (c == 0 ? "" : ",") << fmt_double(row[c]);
        out << '\n';
    }
}

DriverCsv read_driver_csv(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("driver CSV is empty: " + path.string());
    const auto header = split_csv_line(line);
    DriverCsv out;
    // Header cells are x_t{t}_d{j}, t-major.
    int max_t = 0, max_d = 0;
    for (const auto& cell : header) {
        int t = 0, j = 0;
        if (std::sscanf(cell.c_str(), "x_t%d_d%d", &t, &j) != 2)
            throw std::invalid_argument("driver CSV has unexpected header cell: " + cell);
        max_t = std::max(max_t, t);
        max_d = std::max(max_d, j);
    }
    if (static_cast<std::size_t>(max_t) * max_d != header.size())
        throw std::invalid_argument("driver CSV header does not cover a full (T, d) grid");
    out.horizon = max_t;
    out.dim = max_d;

    std::vector<double> values;
    std::size_t rows = 0;
    for (std::size_t r = 1; std::getline(in, line); ++r) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "CSV parse error at row " << r << ": expected " << header.size()
                << " cells, found " << cells.size();
            throw std::invalid_argument(msg.str());
        }
        for (std::size_t c = 0; c < cells.size(); ++c) values.push_back(parse_cell(cells[c], r, c));
        ++rows;
    }
    out.x = Matrix(rows, header.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < header.size(); ++c)
            out.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                values[r * header.size() + c];
    return out;
}

void write_cashflow_csv(const std::filesystem::path& path, const CashflowSample& sample) {
    std::ofstream out = open_out(path);
    out << "path_id";
    for (int t = 1; t <= sample.horizon; ++t) out << ",zeta_" << t;
    out << ",terminal\n";
    for (int p = 0; p < sample.n_paths; ++p) {
        out << p;
        for (int t = 1; t <= sample.horizon; ++t) out << ',' << fmt_double(sample.zeta_at(p, t));
        out << ',' << fmt_double(sample.terminal[p]) << '\n';
    }
}

CashflowSample read_cashflow_csv(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("cashflow CSV is empty: " + path.string());
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header.front() != "path_id" || header.back() != "terminal")
        throw std::invalid_argument("cashflow CSV has unexpected header");
    const int T = static_cast<int>(header.size()) - 2;

    CashflowSample out;
    out.horizon = T;
    for (std::size_t r = 1; std::getline(in, line); ++r) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            std::ostringstream msg;
            msg << "CSV parse error at row " << r << ": expected " << header.size()
                << " cells, found " << cells.size();
            throw std::invalid_argument(msg.str());
        }
        for (int t = 0; t < T; ++t) out.zeta.push_back(parse_cell(cells[t + 1], r, t + 1));
        out.terminal.push_back(parse_cell(cells.back(), r, cells.size() - 1));
        ++out.n_paths;
    }
    return out;
}

void write_values_csv(const std::filesystem::path& path, const ValueDistribution& dist) {
    std::ofstream out = open_out(path);
    out << "path_id,value\n";
    for (Eigen::Index i = 0; i < dist.values.size(); ++i)
        out << i << ',' << fmt_double(dist.values[i]) << '\n';
}

LeeCarterTable read_lee_carter_csv(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("Lee-Carter CSV is empty: " + path.string());
    LeeCarterTable table;
    for (std::size_t r = 1; std::getline(in, line); ++r) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 4) {
            std::ostringstream msg;
            msg << "CSV parse error at row " << r << ": expected 4 cells (age_lo, age_hi, a_x, b_x)";
            throw std::invalid_argument(msg.str());
        }
        LeeCarterRow row;
        row.age_lo = static_cast<int>(parse_cell(cells[0], r, 0));
        row.age_hi = static_cast<int>(parse_cell(cells[1], r, 1));
        row.a = parse_cell(cells[2], r, 2);
        row.b = parse_cell(cells[3], r, 3);
        table.rows.push_back(row);
    }
    if (table.rows.empty()) throw std::invalid_argument("Lee-Carter CSV has no rows");
    return table;
}

// Configs ----------------------------------------------------------------------

std::string esg_config_to_json(const EsgConfig& cfg) {
    nlohmann::json j;
    j["kappa"] = cfg.kappa;
    j["sigma_r"] = cfg.sigma_r;
    j["b0"] = cfg.b0;
    j["r0"] = cfg.r0;
    j["sigma_eq"] = cfg.sigma_eq;
    j["sigma_re"] = cfg.sigma_re;
    j["rho_eq_rate"] = cfg.rho_eq_rate;
    j["rho_re_rate"] = cfg.rho_re_rate;
    j["index_init"] = cfg.index_init;
    j["lc_k0"] = cfg.lc_k0;
    j["lc_drift"] = cfg.lc_drift;
    j["lc_eps_sigma"] = cfg.lc_eps_sigma;
    j["horizon"] = cfg.horizon;
    j["dim"] = cfg.dim;
    return j.dump(2);
}

EsgConfig esg_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    EsgConfig cfg;
    auto get = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    get("kappa", cfg.kappa);
    get("sigma_r", cfg.sigma_r);
    get("b0", cfg.b0);
    get("r0", cfg.r0);
    get("sigma_eq", cfg.sigma_eq);
    get("sigma_re", cfg.sigma_re);
    get("rho_eq_rate", cfg.rho_eq_rate);
    get("rho_re_rate", cfg.rho_re_rate);
    get("index_init", cfg.index_init);
    get("lc_k0", cfg.lc_k0);
    get("lc_drift", cfg.lc_drift);
    get("lc_eps_sigma", cfg.lc_eps_sigma);
    if (j.contains("horizon")) cfg.horizon = j.at("horizon").get<int>();
    if (j.contains("dim")) cfg.dim = j.at("dim").get<int>();
    if (j.contains("lc_table_csv"))
        cfg.lc_table = read_lee_carter_csv(j.at("lc_table_csv").get<std::string>());
    cfg.validate();
    return cfg;
}

EsgConfig load_esg_config(const std::filesystem::path& path) {
    return esg_config_from_json(read_text_file(path));
}

namespace {

const char* family_name(FitFamily f) {
    switch (f) {
        case FitFamily::full_hermite: return "full_hermite";
        case FitFamily::poly_ldr: return "poly_ldr";
        case FitFamily::relu_net: return "relu_net";
        case FitFamily::lasso_full_poly: return "lasso_full_poly";
    }
    return "full_hermite";
}

FitFamily family_from_name(const std::string& s) {
    if (s == "full_hermite") return FitFamily::full_hermite;
    if (s == "poly_ldr") return FitFamily::poly_ldr;
    if (s == "relu_net") return FitFamily::relu_net;
    if (s == "lasso_full_poly") return FitFamily::lasso_full_poly;
    throw std::invalid_argument("unknown fit family: " + s);
}

const char* start_name(LdrStart s) {
    switch (s) {
        case LdrStart::folding: return "folding";
        case LdrStart::diagonal: return "diagonal";
        case LdrStart::random: return "random";
    }
    return "folding";
}

LdrStart start_from_name(const std::string& s) {
    if (s == "folding") return LdrStart::folding;
    if (s == "diagonal") return LdrStart::diagonal;
    if (s == "random") return LdrStart::random;
    throw std::invalid_argument("unknown LDR start: " + s);
}

} // namespace

std::string fit_config_to_json(const FitConfig& cfg) {
    nlohmann::json j;
    j["mode"] = cfg.mode == FitMode::regress_later ? "regress_later" : "regress_now";
    j["family"] = family_name(cfg.family);
    j["driver_dim"] = cfg.driver_dim;
    j["delta"] = cfg.delta;
    j["p"] = cfg.p;
    j["relu_nodes"] = cfg.relu_nodes;
    j["ldr_start"] = start_name(cfg.ldr_start);
    j["grad_tol"] = cfg.grad_tol;
    j["max_iter"] = cfg.max_iter;
    j["lbfgs_memory"] = cfg.lbfgs_memory;
    j["wolfe_c1"] = cfg.wolfe_c1;
    j["wolfe_c2"] = cfg.wolfe_c2;
    j["basis_cap"] = cfg.basis_cap;
    j["seed"] = cfg.seed;
    return j.dump(2);
}

FitConfig fit_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    FitConfig cfg;
    if (j.contains("mode"))
        cfg.mode = j.at("mode").get<std::string>() == "regress_now" ? FitMode::regress_now
                                                                    : FitMode::regress_later;
    if (j.contains("family")) cfg.family = family_from_name(j.at("family").get<std::string>());
    if (j.contains("driver_dim")) cfg.driver_dim = j.at("driver_dim").get<int>();
    if (j.contains("delta")) cfg.delta = j.at("delta").get<int>();
    if (j.contains("p")) cfg.p = j.at("p").get<int>();
    if (j.contains("relu_nodes")) cfg.relu_nodes = j.at("relu_nodes").get<int>();
    if (j.contains("ldr_start")) cfg.ldr_start = start_from_name(j.at("ldr_start").get<std::string>());
    if (j.contains("grad_tol")) cfg.grad_tol = j.at("grad_tol").get<double>();
    if (j.contains("max_iter")) cfg.max_iter = j.at("max_iter").get<int>();
    if (j.contains("lbfgs_memory")) cfg.lbfgs_memory = j.at("lbfgs_memory").get<int>();
    if (j.contains("wolfe_c1")) cfg.wolfe_c1 = j.at("wolfe_c1").get<double>();
    if (j.contains("wolfe_c2")) cfg.wolfe_c2 = j.at("wolfe_c2").get<double>();
    if (j.contains("basis_cap")) cfg.basis_cap = j.at("basis_cap").get<std::int64_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

std::string model_to_json(const ReplicatingMartingale& model) {
    nlohmann::json j;
    j["spec"] = nlohmann::json::parse(feature_map_to_json(model.spec));
    j["beta"] = std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size());
    j["diagnostics"] = {{"residual", model.diagnostics.residual},
                        {"iterations", model.diagnostics.iterations},
                        {"converged", model.diagnostics.converged},
                        {"jitter_used", model.diagnostics.jitter_used},
                        {"line_search_warning", model.diagnostics.line_search_warning},
                        {"loss_trace", model.diagnostics.loss_trace}};
    return j.dump();
}

ReplicatingMartingale model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ReplicatingMartingale model;
    model.spec = feature_map_from_json(j.at("spec").dump());
    const auto beta = j.at("beta").get<std::vector<double>>();
    model.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    if (j.contains("diagnostics")) {
        const auto& d = j.at("diagnostics");
        model.diagnostics.residual = d.value("residual", 0.0);
        model.diagnostics.iterations = d.value("iterations", 0);
        model.diagnostics.converged = d.value("converged", true);
        model.diagnostics.jitter_used = d.value("jitter_used", false);
        model.diagnostics.line_search_warning = d.value("line_search_warning", false);
        if (d.contains("loss_trace"))
            model.diagnostics.loss_trace = d.at("loss_trace").get<std::vector<double>>();
    }
    if (model.beta.size() != model.spec.feature_count())
        throw std::invalid_argument("model_from_json: beta length does not match feature count");
    return model;
}

std::string config_hash(const std::string& canonical_text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Reports ------------------------------------------------------------------------

void write_report_csv(const std::filesystem::path& path, const RiskReport& report) {
    std::ofstream out = open_out(path);
    out << "method,family,samples,maturity,metric,value\n";
    for (const auto& cell : report.cells) {
        auto row = [&](const char* metric, double value) {
            out << cell.method << ',' << cell.method << ',' << cell.samples << ','
                << report.maturity << ',' << metric << ',' << fmt_double(value) << '\n';
        };
        row("mape_pv_pct", cell.mape_pv);
        row("mape_es_pct", cell.mape_es);
        if (cell.has_l1) row("mean_rel_l1_pct", cell.mean_rel_l1);
        row("mean_seconds", cell.mean_seconds);
        if (cell.failures > 0) row("failed_runs", cell.failures);
    }
}

void write_boxplot_csv(const std::filesystem::path& path, const RiskReport& report) {
    std::ofstream out = open_out(path);
    out << "method,maturity,samples,repetition,rel_es_error\n";
    for (const auto& cell : report.cells) {
        for (std::size_t rep = 0; rep < cell.result.runs.size(); ++rep) {
            const auto& run = cell.result.runs[rep];
            if (run.failed) continue;
            out << cell.method << ',' << report.maturity << ',' << cell.samples << ',' << rep
                << ',' << fmt_double((run.es_hat - report.bench_es) / report.bench_es) << '\n';
        }
    }
}

std::string format_report_table(const RiskReport& report) {
    // Collect method order and sample sizes as first seen.
    std::vector<std::string> methods;
    std::vector<int> sizes;
    for (const auto& cell : report.cells) {
        if (std::find(methods.begin(), methods.end(), cell.method) == methods.end())
            methods.push_back(cell.method);
        if (std::find(sizes.begin(), sizes.end(), cell.samples) == sizes.end())
            sizes.push_back(cell.samples);
    }
    auto find_cell = [&](const std::string& method, int samples) -> const ExperimentCell* {
        for (const auto& cell : report.cells)
            if (cell.method == method && cell.samples == samples) return &cell;
        return nullptr;
    };

    std::ostringstream out;
    out << report.portfolio << ", maturity " << report.maturity << ", R = " << report.repetitions
        << ", alpha = " << report.alpha << '\n';
    out << "benchmark: v0 = " << report.bench_v0 << ", ES = " << report.bench_es << " ("
        << report.bench_provenance << ")\n";
    struct Block {
        const char* title;
        double ExperimentCell::* field;
        bool l1_only;
    };
    const Block blocks[] = {{"MApE PV (%)", &ExperimentCell::mape_pv, false},
                            {"MApE ES (%)", &ExperimentCell::mape_es, false},
                            {"Mean relative L1 (%)", &ExperimentCell::mean_rel_l1, true},
                            {"Runtime (s)", &ExperimentCell::mean_seconds, false}};
    for (const auto& block : blocks) {
        out << '\n' << block.title << '\n';
        out << std::setw(10) << "samples";
        for (const auto& m : methods) out << std::setw(std::max<int>(12, m.size() + 2)) << m;
        out << '\n';
        for (int samples : sizes) {
            out << std::setw(10) << samples;
            for (const auto& m : methods) {
                const ExperimentCell* cell = find_cell(m, samples);
                const int width = std::max<int>(12, m.size() + 2);
                if (!cell || (block.l1_only && !cell->has_l1)) {
                    out << std::setw(width) << "-";
                } else {
                    std::ostringstream v;
                    v << std::fixed << std::setprecision(block.field == &ExperimentCell::mean_seconds ? 2 : 3)
                      << cell->*(block.field);
                    out << std::setw(width) << v.str();
                }
            }
            out << '\n';
        }
    }
    return out.str();
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out = open_out(path);
    out << text;
}

} // namespace repmart
