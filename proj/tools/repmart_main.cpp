#include "repmart/errors.hpp"
#include "repmart/io.hpp"
#include "repmart/metrics.hpp"
#include "repmart/parallel.hpp"
#include "repmart/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace repmart;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPartial = 4;

Portfolio parse_portfolio(const std::string& name, int maturity) {
    if (name == "european_call") return Portfolio{CallSpec{100.0, maturity}};
    if (name == "variable_annuity") {
        AnnuitySpec spec;
        spec.maturity = maturity;
        return Portfolio{spec};
    }
    throw std::invalid_argument("unknown portfolio: " + name +
                                " (expected european_call or variable_annuity)");
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("REPMART_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 0; // hardware concurrency
}

// simulate: dataset files plus a manifest binding them to config and seed.
int cmd_simulate(const std::string& portfolio_name, int maturity, int samples,
                 std::uint64_t seed, const std::string& esg_path, const fs::path& out_dir) {
    Portfolio portfolio = parse_portfolio(portfolio_name, maturity);
    EsgConfig esg;
    if (!esg_path.empty()) esg = load_esg_config(esg_path);
    esg.dim = portfolio.required_dim();
    esg.horizon = maturity;
    esg.validate();

    fs::create_directories(out_dir);
    DriverPaths drivers = sample_driver(samples, maturity, esg.dim, seed);
    EconomicPaths econ = simulate_economy(drivers, esg);
    CashflowSample cashflows = portfolio.evaluate(econ);

    write_driver_csv(out_dir / "drivers.csv", drivers);
    write_cashflow_csv(out_dir / "cashflows.csv", cashflows);

    const std::string esg_text = esg_config_to_json(esg);
    json manifest;
    manifest["portfolio"] = portfolio_name;
    manifest["maturity"] = maturity;
    manifest["samples"] = samples;
    manifest["driver_dim"] = esg.dim;
    manifest["seed"] = seed;
    manifest["esg_config"] = json::parse(esg_text);
    manifest["config_hash"] = config_hash(esg_text + "|" + portfolio_name + "|" +
                                          std::to_string(maturity));
    write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << samples << " paths to " << out_dir.string() << '\n';
    return 0;
}

int cmd_fit(const fs::path& data_dir, const std::string& fit_path, const fs::path& model_path,
            int horizon, const std::string& warm_path) {
    FitConfig cfg = fit_config_from_json(read_text_file(fit_path));

    DriverCsv drivers = read_driver_csv(data_dir / "drivers.csv");
    CashflowSample cashflows = read_cashflow_csv(data_dir / "cashflows.csv");
    if (cashflows.n_paths != drivers.x.rows())
        throw std::invalid_argument("fit: drivers and cashflows disagree on path count");

    json dataset_info;
    const fs::path manifest_path = data_dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        json manifest = json::parse(read_text_file(manifest_path));
        if (manifest.contains("driver_dim") && manifest["driver_dim"].get<int>() != cfg.driver_dim)
            throw std::invalid_argument(
                "fit: dataset driver_dim " + manifest["driver_dim"].dump() +
                " does not match fit config driver_dim " + std::to_string(cfg.driver_dim));
        dataset_info["config_hash"] = manifest.value("config_hash", std::string{});
        dataset_info["seed"] = manifest.value("seed", 0ULL);
    }
    if (drivers.dim != cfg.driver_dim)
        throw std::invalid_argument("fit: driver CSV dimension does not match fit config");

    TrainingSet train;
    train.x = std::move(drivers.x);
    train.y = Eigen::Map<const Vector>(cashflows.terminal.data(),
                                       static_cast<Eigen::Index>(cashflows.terminal.size()));

    ReplicatingMartingale model;
    json extra;
    if (cfg.mode == FitMode::regress_now) {
        RegressNowModel now = fit_regress_now(train, horizon, cfg);
        model.spec = std::move(now.spec);
        model.beta = std::move(now.beta);
        model.diagnostics = std::move(now.diagnostics);
        // The intercept-only time-0 estimate travels with the model so
        // evaluation can form the value change self-contained.
        extra["regress_now"] = {{"horizon", now.horizon}, {"v0", now.v0}};
    } else if (!warm_path.empty()) {
        ReplicatingMartingale warm = model_from_json(read_text_file(warm_path));
        model = fit_regress_later_warm(train, cfg, warm);
    } else {
        model = fit_regress_later(train, cfg);
    }
    json model_json = json::parse(model_to_json(model));
    for (auto& [key, value] : extra.items()) model_json[key] = value;
    if (!dataset_info.empty()) model_json["dataset"] = dataset_info;
    model_json["fit_config_hash"] = config_hash(fit_config_to_json(cfg));
    write_text_file(model_path, model_json.dump() + "\n");

    std::cout << "family " << model.spec.family_name() << ", features "
              << model.spec.feature_count() << ", residual " << model.diagnostics.residual
              << ", iterations " << model.diagnostics.iterations << '\n';
    if (!model.diagnostics.loss_trace.empty()) {
        const fs::path log = model_path.parent_path() / (model_path.stem().string() + "_log.csv");
        std::ostringstream text;
        text << "iteration,loss\n";
        for (std::size_t i = 0; i < model.diagnostics.loss_trace.size(); ++i)
            text << i << ',' << model.diagnostics.loss_trace[i] << '\n';
        write_text_file(log, text.str());
    }
    return 0;
}

int cmd_evaluate(const std::string& model_path, const fs::path& data_dir, int horizon,
                 double alpha, const fs::path& out_path) {
    const std::string model_text = read_text_file(model_path);
    ReplicatingMartingale model = model_from_json(model_text);
    DriverCsv drivers = read_driver_csv(data_dir / "drivers.csv");
    const int dt = model.spec.driver_dim * horizon;
    if (drivers.x.cols() < dt)
        throw std::invalid_argument("evaluate: dataset shorter than requested horizon");

    ValueDistribution dist = eval_value_process(model, drivers.x.leftCols(dt), horizon);
    // Regress-now models carry their intercept-only time-0 estimate.
    const json model_json = json::parse(model_text);
    if (model_json.contains("regress_now"))
        dist.v0 = model_json.at("regress_now").at("v0").get<double>();
    if (!out_path.empty()) write_values_csv(out_path, dist);

    const Vector losses = delta_v_losses(dist, dist.v0);
    std::cout << "v0 " << dist.v0 << '\n'
              << "VaR_" << alpha << " " << value_at_risk(losses, alpha) << '\n'
              << "ES_" << alpha << " " << expected_shortfall(losses, alpha) << '\n';
    return 0;
}

MethodSpec parse_method(const json& j, int driver_dim) {
    MethodSpec m;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "nested_mc")
        m.kind = MethodSpec::Kind::nested_mc;
    else if (kind == "regress_now")
        m.kind = MethodSpec::Kind::regress_now;
    else if (kind == "regress_later")
        m.kind = MethodSpec::Kind::regress_later;
    else
        throw std::invalid_argument("unknown method kind: " + kind);
    if (j.contains("fit")) m.fit = fit_config_from_json(j.at("fit").dump());
    m.fit.driver_dim = driver_dim;
    if (j.contains("inner_grid")) m.nmc_inner_grid = j.at("inner_grid").get<std::vector<int>>();
    m.label = j.value("label", kind);
    return m;
}

// File-backed cell store under <out>/cells, keyed by the plan hash.
class JsonCellCache : public CellCache {
public:
    JsonCellCache(fs::path dir, std::string plan_hash, bool read_existing)
        : dir_(std::move(dir)), plan_hash_(std::move(plan_hash)), read_(read_existing) {
        fs::create_directories(dir_);
    }

    bool load(const std::string& method, int samples, ExperimentCell& out) override {
        if (!read_) return false;
        const fs::path file = cell_path(method, samples);
        if (!fs::exists(file)) return false;
        const json j = json::parse(read_text_file(file));
        if (j.value("plan_hash", std::string{}) != plan_hash_) return false;
        out.method = j.at("method").get<std::string>();
        out.samples = j.at("samples").get<int>();
        out.mape_pv = j.at("mape_pv").get<double>();
        out.mape_es = j.at("mape_es").get<double>();
        out.mean_rel_l1 = j.value("mean_rel_l1", 0.0);
        out.has_l1 = j.value("has_l1", false);
        out.mean_seconds = j.value("mean_seconds", 0.0);
        out.failures = j.value("failures", 0);
        out.result.method = out.method;
        out.result.samples = out.samples;
        out.result.dataset_id = j.value("dataset_id", std::string{});
        for (const auto& rj : j.at("runs")) {
            RunRecord run;
            run.v0_hat = rj.value("v0_hat", 0.0);
            run.es_hat = rj.value("es_hat", 0.0);
            run.l1_num = rj.value("l1_num", 0.0);
            run.seconds = rj.value("seconds", 0.0);
            run.has_l1 = rj.value("has_l1", false);
            run.failed = rj.value("failed", false);
            run.error = rj.value("error", std::string{});
            run.fit_iterations = rj.value("fit_iterations", 0);
            run.fit_converged = rj.value("fit_converged", true);
            run.fit_residual = rj.value("fit_residual", 0.0);
            out.result.runs.push_back(std::move(run));
        }
        return true;
    }

    void store(const ExperimentCell& cell) override {
        json j;
        j["plan_hash"] = plan_hash_;
        j["method"] = cell.method;
        j["samples"] = cell.samples;
        j["mape_pv"] = cell.mape_pv;
        j["mape_es"] = cell.mape_es;
        j["mean_rel_l1"] = cell.mean_rel_l1;
        j["has_l1"] = cell.has_l1;
        j["mean_seconds"] = cell.mean_seconds;
        j["failures"] = cell.failures;
        j["dataset_id"] = cell.result.dataset_id;
        json runs = json::array();
        for (const auto& run : cell.result.runs) {
            runs.push_back({{"v0_hat", run.v0_hat},
                            {"es_hat", run.es_hat},
                            {"l1_num", run.l1_num},
                            {"seconds", run.seconds},
                            {"has_l1", run.has_l1},
                            {"failed", run.failed},
                            {"error", run.error},
                            {"fit_iterations", run.fit_iterations},
                            {"fit_converged", run.fit_converged},
                            {"fit_residual", run.fit_residual}});
        }
        j["runs"] = std::move(runs);
        write_text_file(cell_path(cell.method, cell.samples), j.dump() + "\n");
    }

private:
    fs::path cell_path(const std::string& method, int samples) const {
        std::string name = method;
        for (char& c : name)
            if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
        return dir_ / (name + "_" + std::to_string(samples) + ".json");
    }

    fs::path dir_;
    std::string plan_hash_;
    bool read_;
};

int cmd_experiment(const std::string& plan_path, fs::path out_dir, bool resume,
                   std::uint64_t seed_override) {
    const std::string plan_text = read_text_file(plan_path);
    json plan = json::parse(plan_text);
    if (seed_override != 0) plan["master_seed"] = seed_override;

    const std::string portfolio_name = plan.at("portfolio").get<std::string>();
    const int maturity = plan.at("maturity").get<int>();
    Portfolio portfolio = parse_portfolio(portfolio_name, maturity);

    EsgConfig esg;
    if (plan.contains("esg")) esg = esg_config_from_json(plan.at("esg").dump());
    esg.dim = portfolio.required_dim();
    esg.horizon = maturity;
    esg.validate();

    const auto sizes = plan.at("sample_sizes").get<std::vector<int>>();
    const int repetitions = plan.at("repetitions").get<int>();
    const std::uint64_t master_seed = plan.value("master_seed", 1ULL);
    const double alpha = plan.value("alpha", 0.99);
    const int risk_horizon = plan.value("risk_horizon", 1);
    if (out_dir.empty()) out_dir = plan.value("out", std::string("experiment_out"));
    fs::create_directories(out_dir);

    const std::string plan_hash = config_hash(plan.dump());
    const fs::path report_path = out_dir / "report.csv";
    const fs::path manifest_path = out_dir / "manifest.json";
    if (resume && fs::exists(manifest_path) && fs::exists(report_path)) {
        json manifest = json::parse(read_text_file(manifest_path));
        if (manifest.value("plan_hash", std::string{}) == plan_hash &&
            manifest.value("complete", false)) {
            std::cout << "experiment already complete (plan hash " << plan_hash
                      << "); nothing to do\n";
            return 0;
        }
    }

    // Shared validation set and benchmark.
    const json bench_spec = plan.value("benchmark", json{{"kind", "closed_form"}});
    const int n_validation = bench_spec.value("n_validation", 100000);
    Matrix validation =
        sample_validation_prefix(esg, n_validation, risk_horizon, derive_seed(master_seed, 0xBEEF));
    const std::string dataset_id = "validation_" + plan_hash;

    BenchmarkDistribution bench;
    const std::string bench_kind = bench_spec.value("kind", std::string("closed_form"));
    if (bench_kind == "closed_form") {
        if (!std::holds_alternative<CallSpec>(portfolio.spec))
            throw std::invalid_argument("closed_form benchmark is only available for the call");
        bench = make_call_benchmark_closed_form(esg, std::get<CallSpec>(portfolio.spec),
                                                validation, risk_horizon, alpha, dataset_id);
    } else if (bench_kind == "nested_mc") {
        bench = make_benchmark_nested_mc(portfolio, esg, validation, risk_horizon,
                                         bench_spec.value("n_inner", 1000), alpha,
                                         derive_seed(master_seed, 0xB13C), dataset_id);
    } else {
        throw std::invalid_argument("unknown benchmark kind: " + bench_kind);
    }

    std::vector<MethodSpec> methods;
    for (const auto& mj : plan.at("methods")) methods.push_back(parse_method(mj, esg.dim));

    JsonCellCache cache(out_dir / "cells", plan_hash, resume);
    RiskReport report = run_macro_experiment(portfolio, esg, methods, sizes, repetitions, bench,
                                             validation, master_seed, &cache);

    write_report_csv(report_path, report);
    write_boxplot_csv(out_dir / "boxplot.csv", report);
    write_text_file(out_dir / "report.txt", format_report_table(report));

    int failures = 0;
    for (const auto& cell : report.cells) failures += cell.failures;
    json manifest;
    manifest["plan_hash"] = plan_hash;
    manifest["master_seed"] = master_seed;
    manifest["benchmark"] = {{"v0", report.bench_v0},
                             {"es", report.bench_es},
                             {"provenance", report.bench_provenance},
                             {"n_validation", n_validation}};
    manifest["failed_runs"] = failures;
    manifest["complete"] = true;
    write_text_file(manifest_path, manifest.dump(2) + "\n");

    std::cout << format_report_table(report);
    if (failures > 0) {
        std::cerr << failures << " repetitions failed; see report.csv\n";
        return kExitPartial;
    }
    return 0;
}

int cmd_report(const fs::path& dir) {
    std::cout << read_text_file(dir / "report.txt");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"replicating-martingale toolkit: simulate, fit, evaluate, experiment, report"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: hardware, env REPMART_THREADS)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a training dataset");
    std::string sim_portfolio = "european_call", sim_esg, sim_out = "dataset";
    int sim_maturity = 5, sim_samples = 1000;
    std::uint64_t sim_seed = 1;
    sim->add_option("--portfolio", sim_portfolio, "european_call | variable_annuity");
    sim->add_option("--maturity", sim_maturity, "portfolio maturity T");
    sim->add_option("--samples,-n", sim_samples, "number of paths");
    sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_option("--config", sim_esg, "ESG config JSON");
    sim->add_option("--out", sim_out, "output directory");

    // fit
    auto* fit = app.add_subcommand("fit", "fit a replicating martingale to a dataset");
    std::string fit_data = "dataset", fit_cfg_path, fit_model = "model.json";
    int fit_horizon = 1;
    fit->add_option("--data", fit_data, "dataset directory (drivers.csv + cashflows.csv)");
    fit->add_option("--fit", fit_cfg_path, "fit config JSON")->required();
    fit->add_option("--out", fit_model, "output model file");
    fit->add_option("--horizon", fit_horizon, "horizon t for regress_now mode");
    std::string fit_warm;
    fit->add_option("--warm-start", fit_warm, "existing model file to start the optimizer from");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "evaluate a fitted model on a dataset");
    std::string ev_model = "model.json", ev_data = "dataset", ev_out;
    int ev_horizon = 1;
    double ev_alpha = 0.99;
    ev->add_option("--model", ev_model, "model JSON file");
    ev->add_option("--data", ev_data, "dataset directory");
    ev->add_option("--horizon", ev_horizon, "risk horizon t");
    ev->add_option("--alpha", ev_alpha, "confidence level");
    ev->add_option("--out", ev_out, "value distribution CSV");

    // experiment
    auto* ex = app.add_subcommand("experiment", "run a macro-run experiment plan");
    std::string ex_plan, ex_out;
    bool ex_resume = false;
    ex->add_option("--plan", ex_plan, "experiment plan JSON")->required();
    ex->add_option("--out", ex_out, "output directory (default from plan)");
    ex->add_flag("--resume", ex_resume, "skip when the same plan already completed");
    std::uint64_t ex_seed = 0;
    ex->add_option("--seed", ex_seed, "override the plan's master seed");

    // report
    auto* rep = app.add_subcommand("report", "print the aligned report table");
    std::string rep_dir = "experiment_out";
    rep->add_option("--dir", rep_dir, "experiment output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    set_thread_count(resolve_threads(threads));

    try {
        if (sim->parsed())
            return cmd_simulate(sim_portfolio, sim_maturity, sim_samples, sim_seed, sim_esg, sim_out);
        if (fit->parsed()) return cmd_fit(fit_data, fit_cfg_path, fit_model, fit_horizon, fit_warm);
        if (ev->parsed()) return cmd_evaluate(ev_model, ev_data, ev_horizon, ev_alpha, ev_out);
        if (ex->parsed()) return cmd_experiment(ex_plan, ex_out, ex_resume, ex_seed);
        if (rep->parsed()) return cmd_report(rep_dir);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ConfigError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
