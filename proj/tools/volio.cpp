// volio: command-line front end for the ball-prolate expansion library.
// Subcommands cover basis/cache generation, volume expansion and
// reconstruction, error budgets, and the reproducibility experiments.

#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <gpswf/gpswf.hpp>

namespace {

const double kPi = std::acos(-1.0);

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        out.push_back(s.substr(start, comma == std::string::npos ? comma : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

double to_double(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("cannot parse ") + what + " from '" + s + "'");
    }
}

int to_int(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("cannot parse ") + what + " from '" + s + "'");
    }
}

std::vector<double> to_doubles(const std::string& s, const char* what) {
    std::vector<double> out;
    for (const std::string& part : split_csv(s)) out.push_back(to_double(part, what));
    return out;
}

std::vector<int> to_ints(const std::string& s, const char* what) {
    std::vector<int> out;
    for (const std::string& part : split_csv(s)) out.push_back(to_int(part, what));
    return out;
}

std::array<double, 3> to_vec3(const std::string& s, const char* what) {
    const std::vector<double> v = to_doubles(s, what);
    if (v.size() != 3) throw std::invalid_argument(std::string(what) + " needs exactly 3 comma-separated values");
    return {v[0], v[1], v[2]};
}

// One subcommand's string-typed flags plus the bookkeeping needed to let a
// JSON config file fill in anything the command line left unset. CLI11 keeps
// references to the members, so instances must never move once attached.
struct Args {
    CLI::App* cmd = nullptr;
    std::string config;
    bool print_summary = false;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    CLI::Option* summary_opt = nullptr;

    void attach(CLI::App* app) {
        cmd = app;
        cmd->add_option("--config", config, "JSON config file; explicit flags take precedence");
        summary_opt = cmd->add_flag("--print-summary", print_summary, "print a human-readable summary to stdout");
    }

    void flag(const std::string& name, const std::string& help) {
        auto [it, fresh] = values.emplace(name, std::string());
        options[name] = cmd->add_option("--" + name, it->second, help);
    }

    bool given(const std::string& name) const { return options.at(name)->count() > 0; }
    bool has(const std::string& name) const { return given(name) || !values.at(name).empty(); }
    std::string get(const std::string& name, const std::string& fallback = {}) const {
        const std::string& v = values.at(name);
        return v.empty() && !given(name) ? fallback : v;
    }

    // flags win; config only fills options that were not passed
    void merge_config() {
        if (config.empty()) return;
        std::ifstream in(config);
        if (!in) throw gpswf::io_error("cannot read config file: " + config);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw gpswf::format_error("config file is not valid JSON: " + config + ": " + e.what());
        }
        if (!j.is_object()) throw gpswf::format_error("config file must hold a JSON object: " + config);
        for (const auto& [key, val] : j.items()) {
            if (key == "print-summary") {
                if (summary_opt->count() == 0 && val.is_boolean()) print_summary = val.get<bool>();
                continue;
            }
            auto it = options.find(key);
            if (it == options.end())
                throw gpswf::format_error("config key '" + key + "' is not a flag of this command");
            if (it->second->count() > 0) continue;
            std::string text;
            if (val.is_string()) {
                text = val.get<std::string>();
            } else if (val.is_array()) {
                for (std::size_t i = 0; i < val.size(); ++i) {
                    if (i) text += ',';
                    text += val[i].is_string() ? val[i].get<std::string>() : val[i].dump();
                }
            } else {
                text = val.dump();
            }
            values[key] = text;
        }
    }
};

double resolved_T(const Args& a, double fallback) {
    const bool hasT = a.has("T"), hasLog = a.has("logT");
    if (hasT && hasLog) throw std::invalid_argument("give either --T or --logT, not both");
    if (hasT) return to_double(a.get("T"), "--T");
    if (hasLog) return std::pow(10.0, to_double(a.get("logT"), "--logT"));
    return fallback;
}

std::vector<double> resolved_T_list(const Args& a, const std::vector<double>& fallback) {
    const bool hasT = a.has("T"), hasLog = a.has("logT");
    if (hasT && hasLog) throw std::invalid_argument("give either --T or --logT, not both");
    if (hasT) return to_doubles(a.get("T"), "--T");
    if (hasLog) {
        std::vector<double> out;
        for (double lg : to_doubles(a.get("logT"), "--logT")) out.push_back(std::pow(10.0, lg));
        return out;
    }
    return fallback;
}

int resolved_parallelism(const Args& a) {
    if (!a.has("parallelism")) return static_cast<int>(gpswf::default_parallelism());
    const int p = to_int(a.get("parallelism"), "--parallelism");
    if (p < 1) throw std::invalid_argument("--parallelism must be at least 1");
    return p;
}

std::filesystem::path resolved_cache(const Args& a, const char* fallback = "cache") {
    const std::string dir = a.get("cache-dir", fallback);
    if (dir.empty()) return {};
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw gpswf::io_error("cannot create cache directory: " + dir + ": " + ec.message());
    return dir;
}

std::vector<double> default_sigmas() {
    std::vector<double> s;
    for (int k = 0; k <= 6; ++k) s.push_back(std::pow(10.0, -3.0 + 2.0 * k / 6.0));
    return s;
}

// ---------------------------------------------------------------------------

int cmd_basis(Args& a) {
    a.merge_config();
    const double c = to_double(a.get("c"), "--c");
    const int L = to_int(a.get("L"), "--L");
    const double T = resolved_T(a, 1.0);
    const std::filesystem::path cache = resolved_cache(a);
    const std::string output = a.get("output", "basis_manifest.json");

    const gpswf::RadialBank bank(gpswf::BandSpec{c}, cache);
    const gpswf::TruncationSet set = gpswf::truncation_set(bank, T);
    if (set.count() == 0) std::fprintf(stderr, "warning: the truncation set is empty at T=%g\n", T);
    gpswf::write_basis_manifest(output, set, gpswf::GridSpec{L});
    if (a.print_summary) {
        const std::size_t samples = gpswf::grid_points_in_ball(gpswf::GridSpec{L}).size();
        std::printf("basis: c=%.17g L=%d T=%g count=%zu samples=%zu ratio=%.6f\n", c, L, T, set.count(), samples,
                    static_cast<double>(set.count()) / static_cast<double>(samples));
    }
    return 0;
}

int cmd_expand(Args& a) {
    a.merge_config();
    const double c = to_double(a.get("c"), "--c");
    const double T = resolved_T(a, 1.0);
    const std::filesystem::path cache = resolved_cache(a);
    const std::string input = a.get("input");
    if (input.empty()) throw std::invalid_argument("expand needs --input (a volume file)");
    const std::string output = a.get("output", "coefficients.csv");

    const gpswf::VolumeSamples vol = gpswf::read_volume(input);
    if (a.has("L") && to_int(a.get("L"), "--L") != vol.grid.L) {
        char msg[128];
        std::snprintf(msg, sizeof(msg), "expand: volume sampling rate L=%d does not match --L %d", vol.grid.L,
                      to_int(a.get("L"), "--L"));
        throw gpswf::constraint_error(msg);
    }
    const gpswf::RadialBank bank(gpswf::BandSpec{c}, cache);
    const gpswf::TruncationSet set = gpswf::truncation_set(bank, T);
    const std::vector<std::complex<double>> f = gpswf::extract_inside(vol);
    const gpswf::CoefficientSet cs = gpswf::expand(bank, set, vol.grid, f, resolved_parallelism(a));
    gpswf::write_coefficients(output, cs);
    if (a.print_summary)
        std::printf("expand: c=%.17g L=%d T=%g coefficients=%zu -> %s\n", c, vol.grid.L, T, cs.count(),
                    output.c_str());
    return 0;
}

int cmd_reconstruct(Args& a) {
    a.merge_config();
    const double c = to_double(a.get("c"), "--c");
    const int L = to_int(a.get("L"), "--L");
    const std::filesystem::path cache = resolved_cache(a);
    const std::string input = a.get("input");
    if (input.empty()) throw std::invalid_argument("reconstruct needs --input (a coefficient CSV)");
    const std::string output = a.get("output", "reconstruction.vol");

    const gpswf::RadialBank bank(gpswf::BandSpec{c}, cache);
    const gpswf::CoefficientSet cs = gpswf::read_coefficients(input);
    gpswf::VolumeSamples vol = gpswf::reconstruct_on_lattice(cs, bank, gpswf::GridSpec{L}, resolved_parallelism(a));
    gpswf::write_volume(output, vol);
    if (a.print_summary)
        std::printf("reconstruct: c=%.17g L=%d coefficients=%zu -> %s\n", c, L, cs.count(), output.c_str());
    return 0;
}

int cmd_bound(Args& a) {
    a.merge_config();
    const int L = a.has("L") ? to_int(a.get("L"), "--L") : 16;
    const double c = a.has("c") ? to_double(a.get("c"), "--c") : kPi * L;
    const double T = resolved_T(a, 1.0);
    const std::array<double, 3> mu = to_vec3(a.get("mu", "0.1,0.1,0.1"), "--mu");
    const std::vector<double> sigmas =
        a.has("sigma-list") ? to_doubles(a.get("sigma-list"), "--sigma-list") : default_sigmas();
    const std::string output = a.get("output", "budget.json");

    const gpswf::BandSpec band{c};
    const gpswf::GridSpec grid{L};
    nlohmann::ordered_json j;
    j["c"] = c;
    j["L"] = L;
    j["T"] = T;
    j["mu"] = {mu[0], mu[1], mu[2]};
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (double sigma : sigmas) {
        const gpswf::GaussianSpec g{sigma, mu};
        const gpswf::GaussianOracles oracle = gpswf::gaussian_oracles(band, g);
        const double out_l2 = gpswf::outside_sample_l2(grid, [&](const std::array<double, 3>& x) {
            return gpswf::gaussian_value(g, x);
        });
        const gpswf::ErrorBudget b = gpswf::error_budget(band, grid, T, oracle.eps, oracle.delta_c, out_l2);
        nlohmann::ordered_json row;
        row["sigma"] = sigma;
        row["eps"] = b.eps;
        row["delta_c"] = b.delta_c;
        row["eta"] = b.eta;
        row["outside_l2"] = b.outside_l2;
        row["eps_term"] = b.eps_term;
        row["delta_term"] = b.delta_term;
        row["eta_term"] = b.eta_term;
        row["total"] = b.total;
        row["dominant"] = gpswf::dominant_term(b);
        rows.push_back(std::move(row));
        if (a.print_summary)
            std::printf("bound: sigma=%.6g total=%.6g dominant=%s\n", sigma, b.total, gpswf::dominant_term(b));
    }
    j["budgets"] = std::move(rows);
    std::ofstream out(output, std::ios::trunc);
    if (!out) throw gpswf::io_error("cannot write budget JSON: " + output);
    out << j.dump(2) << '\n';
    if (!out) throw gpswf::io_error("short write on budget JSON: " + output);
    return 0;
}

int cmd_xi(Args& a) {
    a.merge_config();
    const std::vector<int> L_list = a.has("L") ? to_ints(a.get("L"), "--L") : std::vector<int>{8, 16, 24, 32};
    const double r1 = a.has("r1") ? to_double(a.get("r1"), "--r1") : 0.95;
    const double radius = a.has("lattice-radius") ? to_double(a.get("lattice-radius"), "--lattice-radius") : 4.0;
    const std::string output = a.get("output", "xi_scan.csv");

    const gpswf::XiSlopeResult res = gpswf::xi_slope_experiment(L_list, r1, radius, resolved_parallelism(a));
    gpswf::write_xi_csv(output, res.rows);
    if (a.print_summary) {
        for (const gpswf::XiScanRow& row : res.rows)
            std::printf("xi: L=%d c=%.6g norm_sq_scaled=%.8e tail_bound=%.3e\n", row.L, row.c, row.norm_sq_scaled,
                        row.tail_bound);
        std::printf("xi: fitted slope=%.6f\n", res.slope);
    }
    return 0;
}

int cmd_gram(Args& a) {
    a.merge_config();
    const double c = a.has("c") ? to_double(a.get("c"), "--c") : 8.0 * kPi;
    const int L = a.has("L") ? to_int(a.get("L"), "--L") : 8;
    const std::vector<double> Ts = resolved_T_list(a, {1.0, 10.0, 100.0, 1000.0});
    const std::filesystem::path cache = resolved_cache(a);
    const std::string output = a.get("output", "gram.csv");

    const gpswf::RadialBank bank(gpswf::BandSpec{c}, cache);
    std::vector<gpswf::GramReport> reports;
    for (double T : Ts) {
        reports.push_back(gpswf::gram_deviation(bank, gpswf::GridSpec{L}, T));
        if (a.print_summary)
            std::printf("gram: T=%g size=%zu max_deviation=%.6e min_tau=%.3e\n", T, reports.back().tau.size(),
                        reports.back().max_deviation, reports.back().min_tau);
    }
    gpswf::write_gram_csv(output, reports);
    return 0;
}

int cmd_table1(Args& a) {
    a.merge_config();
    const std::vector<int> L_list = a.has("L") ? to_ints(a.get("L"), "--L") : std::vector<int>{16};
    std::vector<double> logT_list;
    if (a.has("logT")) {
        logT_list = to_doubles(a.get("logT"), "--logT");
    } else if (a.has("T")) {
        for (double T : to_doubles(a.get("T"), "--T")) logT_list.push_back(std::log10(T));
    } else {
        for (int lg = -6; lg <= 6; ++lg) logT_list.push_back(lg);
    }
    const std::filesystem::path cache = resolved_cache(a);
    const std::string output = a.get("output", "table1.csv");

    const gpswf::Table1Result res = gpswf::table1(L_list, logT_list, cache);
    gpswf::write_table1_csv(output, res);
    if (a.print_summary) {
        std::printf("table1: samples");
        for (std::size_t s : res.samples) std::printf(" %zu", s);
        std::printf("\n");
        for (std::size_t ti = 0; ti < logT_list.size(); ++ti) {
            std::printf("table1: logT=%+g", logT_list[ti]);
            for (std::size_t li = 0; li < L_list.size(); ++li) std::printf(" %.4f", res.ratio[ti][li]);
            std::printf("\n");
        }
    }
    return 0;
}

int cmd_demo_gaussian(Args& a) {
    a.merge_config();
    const int L = a.has("L") ? to_int(a.get("L"), "--L") : 16;
    const double c = kPi * L; // the sweep is defined at the critical bandlimit
    const double T = resolved_T(a, 1.0);
    const std::array<double, 3> mu = to_vec3(a.get("mu", "0.1,0.1,0.1"), "--mu");
    const std::vector<double> sigmas =
        a.has("sigma-list") ? to_doubles(a.get("sigma-list"), "--sigma-list") : default_sigmas();
    const std::filesystem::path cache = resolved_cache(a);
    const std::string output = a.get("output", "gaussian_sweep.csv");

    const gpswf::RadialBank bank(gpswf::BandSpec{c}, cache);
    const gpswf::SweepResult res =
        gpswf::gaussian_sweep(bank, gpswf::GridSpec{L}, T, sigmas, mu, resolved_parallelism(a));
    gpswf::write_gaussian_csv(output, res);
    if (a.print_summary)
        for (const gpswf::SweepRow& row : res.rows)
            std::printf("demo-gaussian: sigma=%.6g measured=%.6e bound=%.6e dominant=%s\n", row.sigma,
                        row.measured_error, row.budget.total, gpswf::dominant_term(row.budget));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"volio: ball-prolate volume expansion, reconstruction, and experiments"};
    app.require_subcommand(1);
    app.footer("exit codes: 0 ok, 1 runtime error, 2 constraint violation, 3 malformed input format, 4 I/O error");

    std::vector<std::pair<std::unique_ptr<Args>, std::function<int(Args&)>>> commands;
    auto make = [&](const char* name, const char* help, std::function<int(Args&)> fn,
                    const std::vector<std::pair<const char*, const char*>>& flags) {
        CLI::App* sub = app.add_subcommand(name, help);
        commands.emplace_back(std::make_unique<Args>(), std::move(fn));
        commands.back().first->attach(sub);
        for (const auto& [flag, text] : flags) commands.back().first->flag(flag, text);
    };

    make("basis", "solve the radial eigenproblems and write a basis manifest", cmd_basis,
         {{"c", "bandlimit"},
          {"L", "sampling rate"},
          {"T", "truncation parameter"},
          {"logT", "log10 of the truncation parameter"},
          {"output", "manifest path (default basis_manifest.json)"},
          {"cache-dir", "radial cache directory (default cache)"},
          {"parallelism", "worker threads"}});
    make("expand", "project a sampled volume onto the truncated basis", cmd_expand,
         {{"c", "bandlimit (must satisfy c <= pi*L)"},
          {"T", "truncation parameter"},
          {"logT", "log10 of the truncation parameter"},
          {"L", "expected sampling rate (cross-checked against the volume)"},
          {"input", "volume file (raw float64 plus .json sidecar)"},
          {"output", "coefficient CSV path (default coefficients.csv)"},
          {"cache-dir", "radial cache directory (default cache)"},
          {"parallelism", "worker threads"}});
    make("reconstruct", "synthesize a volume from a coefficient CSV", cmd_reconstruct,
         {{"c", "bandlimit"},
          {"L", "sampling rate of the output volume"},
          {"input", "coefficient CSV"},
          {"output", "volume path (default reconstruction.vol)"},
          {"cache-dir", "radial cache directory (default cache)"},
          {"parallelism", "worker threads"}});
    make("bound", "error budget for the Gaussian family, written as JSON", cmd_bound,
         {{"c", "bandlimit (default pi*L)"},
          {"L", "sampling rate (default 16)"},
          {"T", "truncation parameter"},
          {"logT", "log10 of the truncation parameter"},
          {"mu", "Gaussian center as x,y,z (default 0.1,0.1,0.1)"},
          {"sigma-list", "comma-separated sigma values"},
          {"output", "budget JSON path (default budget.json)"},
          {"parallelism", "worker threads"}});
    make("xi", "lattice-sum scaling experiment and slope fit", cmd_xi,
         {{"L", "comma-separated sampling rates (default 8,16,24,32)"},
          {"r1", "inner evaluation radius (default 0.95)"},
          {"lattice-radius", "lattice truncation radius (default 4)"},
          {"output", "CSV path (default xi_scan.csv)"},
          {"parallelism", "worker threads"}});
    make("gram", "Gram deviation of the normalized sampled basis", cmd_gram,
         {{"c", "bandlimit (default 8*pi)"},
          {"L", "sampling rate (default 8)"},
          {"T", "comma-separated truncation parameters (default 1,10,100,1000)"},
          {"logT", "comma-separated log10 truncation parameters"},
          {"output", "CSV path (default gram.csv)"},
          {"cache-dir", "radial cache directory (default cache)"},
          {"parallelism", "worker threads"}});
    make("table1", "ratio of truncation-set size to in-ball samples at c = pi*L", cmd_table1,
         {{"L", "comma-separated sampling rates (default 16)"},
          {"T", "comma-separated truncation parameters"},
          {"logT", "comma-separated log10 truncation parameters (default -6..6)"},
          {"output", "CSV path (default table1.csv)"},
          {"cache-dir", "radial cache directory (default cache)"},
          {"parallelism", "worker threads"}});
    make("demo-gaussian", "Gaussian error-versus-bound sweep at c = pi*L", cmd_demo_gaussian,
         {{"L", "sampling rate (default 16)"},
          {"T", "truncation parameter (default 1)"},
          {"logT", "log10 of the truncation parameter"},
          {"mu", "Gaussian center as x,y,z (default 0.1,0.1,0.1)"},
          {"sigma-list", "comma-separated sigma values (default logspace 1e-3..1e-1)"},
          {"output", "CSV path (default gaussian_sweep.csv)"},
          {"cache-dir", "radial cache directory (default cache)"},
          {"parallelism", "worker threads"}});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        for (auto& [args, fn] : commands)
            if (args->cmd->parsed()) return fn(*args);
        std::fprintf(stderr, "error: no subcommand selected\n");
        return 1;
    } catch (const gpswf::constraint_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const gpswf::format_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const gpswf::io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
