#pragma once

// Batch pipelines behind the spectra-lab tool: one JSON config in, CSV data and a
// manifest out. Output is a pure function of the config, so reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "json.hpp"
#include "spectra_lab/compress.hpp"
#include "spectra_lab/ensembles.hpp"
#include "spectra_lab/entanglement.hpp"
#include "spectra_lab/errors.hpp"
#include "spectra_lab/hamiltonian.hpp"
#include "spectra_lab/predictor.hpp"
#include "spectra_lab/relaxation.hpp"
#include "spectra_lab/twolevel.hpp"

namespace spectra_lab {

inline constexpr const char* kVersion = "0.1.0";

namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { kOk = 0, kInvalidConfig = 2, kNumericalFailure = 3, kInfeasible = 4 };

class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

enum class Mode { Predict, PredictPlus, Actual, EntropySweep, TwoLevel, Ensemble, SlackTable };

inline const std::vector<std::pair<Mode, std::string>>& mode_names() {
    static const std::vector<std::pair<Mode, std::string>> names{
        {Mode::Predict, "predict"},           {Mode::PredictPlus, "predict-plus"}, {Mode::Actual, "actual"},
        {Mode::EntropySweep, "entropy-sweep"}, {Mode::TwoLevel, "two-level"},     {Mode::Ensemble, "ensemble"},
        {Mode::SlackTable, "slack-table"}};
    return names;
}

inline std::string to_string(Mode m) {
    for (const auto& [mode, name] : mode_names())
        if (mode == m) return name;
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (const auto& [mode, name] : mode_names())
        if (name == s) return mode;
    throw ConfigError("unknown mode '" + s + "'");
}

struct ModelSpec {
    std::string kind = "afhm1d";  // afhm1d | afhm2d | pauli
    int n = 10;
    int side = 4;
    std::string file;  // pauli JSON
    std::string boundary = "periodic";
};

struct RunConfig {
    Mode mode = Mode::Predict;
    ModelSpec model;
    json bipartition = "halves";    // "halves", "left:K" or a list of A sites
    std::vector<Index> D{4, 8, 16};
    std::optional<double> m;        // unset: take m from the compressed ground state
    double width = 0.1;
    std::string out = "out";
    std::string cache_dir;          // empty: <out>/gamma-cache
    std::uint64_t seed = 1;
    int sweeps = 0;
    bool full_2d = false;
    std::string entropy_sectors = "middle";  // middle | all
    std::vector<double> renyi{1.0, std::numeric_limits<double>::infinity()};
    // two-level
    TwoLevelSystem two_level{0.0, 1.0, 1.0, 3.0};
    int points = 99;
    std::optional<double> p_quantum, p_classical;
    // ensemble
    std::vector<Index> ensemble_d{2, 4, 8};
    std::size_t trials = 10000;
    std::vector<std::string> alphas{"uniform", "heavy"};

    static RunConfig from_json(const json& j) {
        RunConfig c;
        try {
            static const std::vector<std::string> known{
                "mode", "model", "bipartition", "D", "m", "width", "out", "cache_dir", "seed", "sweeps", "full_2d",
                "entropy_sectors", "renyi", "two_level", "points", "p_quantum", "p_classical", "ensemble_d", "trials",
                "alphas"};
            if (!j.is_object()) throw ConfigError("config must be a JSON object");
            for (const auto& [key, value] : j.items())
                if (std::find(known.begin(), known.end(), key) == known.end())
                    throw ConfigError("unknown config field '" + key + "'");
            if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
            if (j.contains("model")) {
                const auto& m = j.at("model");
                c.model.kind = m.value("kind", c.model.kind);
                c.model.n = m.value("n", c.model.n);
                c.model.side = m.value("side", c.model.side);
                c.model.file = m.value("file", c.model.file);
                c.model.boundary = m.value("boundary", c.model.boundary);
            }
            if (j.contains("bipartition")) c.bipartition = j.at("bipartition");
            if (j.contains("D")) c.D = j.at("D").get<std::vector<Index>>();
            if (j.contains("m")) {
                const auto& m = j.at("m");
                if (m.is_string()) {
                    if (m.get<std::string>() != "from-compression") throw ConfigError("m must be a number or \"from-compression\"");
                } else {
                    c.m = m.get<double>();
                }
            }
            c.width = j.value("width", c.width);
            c.out = j.value("out", c.out);
            c.cache_dir = j.value("cache_dir", c.cache_dir);
            c.seed = j.value("seed", c.seed);
            c.sweeps = j.value("sweeps", c.sweeps);
            c.full_2d = j.value("full_2d", c.full_2d);
            c.entropy_sectors = j.value("entropy_sectors", c.entropy_sectors);
            if (j.contains("renyi")) {
                c.renyi.clear();
                for (const auto& a : j.at("renyi"))
                    c.renyi.push_back(a.is_string() && a.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                                     : a.get<double>());
            }
            if (j.contains("two_level")) {
                const auto& t = j.at("two_level");
                c.two_level = {t.value("xi1", 0.0), t.value("xi2", 1.0), t.value("a1", 1.0), t.value("a2", 3.0)};
            }
            c.points = j.value("points", c.points);
            if (j.contains("p_quantum")) c.p_quantum = j.at("p_quantum").get<double>();
            if (j.contains("p_classical")) c.p_classical = j.at("p_classical").get<double>();
            if (j.contains("ensemble_d")) c.ensemble_d = j.at("ensemble_d").get<std::vector<Index>>();
            c.trials = j.value("trials", c.trials);
            if (j.contains("alphas")) c.alphas = j.at("alphas").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        return c;
    }

    json to_json() const {
        json renyi_json = json::array();
        for (double a : renyi) renyi_json.push_back(std::isinf(a) ? json("inf") : json(a));
        json j = {{"mode", cli::to_string(mode)},
                  {"model",
                   {{"kind", model.kind}, {"n", model.n}, {"side", model.side}, {"file", model.file},
                    {"boundary", model.boundary}}},
                  {"bipartition", bipartition},
                  {"D", D},
                  {"m", m ? json(*m) : json("from-compression")},
                  {"width", width},
                  {"out", out},
                  {"cache_dir", cache_dir},
                  {"seed", seed},
                  {"sweeps", sweeps},
                  {"full_2d", full_2d},
                  {"entropy_sectors", entropy_sectors},
                  {"renyi", renyi_json},
                  {"two_level", {{"xi1", two_level.xi1}, {"xi2", two_level.xi2}, {"a1", two_level.a1}, {"a2", two_level.a2}}},
                  {"points", points},
                  {"ensemble_d", ensemble_d},
                  {"trials", trials},
                  {"alphas", alphas}};
        if (p_quantum) j["p_quantum"] = *p_quantum;
        if (p_classical) j["p_classical"] = *p_classical;
        return j;
    }

    void validate() const {
        auto need = [](bool ok, const std::string& what) {
            if (!ok) throw ConfigError(what);
        };
        need(width > 0.0 && std::isfinite(width), "width must be positive");
        need(model.kind == "afhm1d" || model.kind == "afhm2d" || model.kind == "pauli",
             "model.kind must be afhm1d, afhm2d or pauli");
        need(model.boundary == "periodic" || model.boundary == "open", "model.boundary must be periodic or open");
        if (model.kind == "pauli") need(!model.file.empty(), "model.file is required for pauli models");
        need(!D.empty(), "D list must not be empty");
        for (Index d : D) need(d >= 1, "D values must be >= 1");
        if (m) need(*m > 0.0 && std::isfinite(*m), "m must be positive");
        need(sweeps >= 0, "sweeps must be >= 0");
        need(entropy_sectors == "middle" || entropy_sectors == "all", "entropy_sectors must be middle or all");
        for (double a : renyi) need(a >= 0.0, "renyi orders must be >= 0");
        need(points >= 1, "points must be >= 1");
        need(trials >= 2, "trials must be >= 2");
        for (Index d : ensemble_d) need(d >= 1, "ensemble_d values must be >= 1");
        for (const auto& a : alphas) need(a == "uniform" || a == "heavy", "alphas entries must be uniform or heavy");
        if (mode == Mode::TwoLevel) {
            try {
                two_level.validate();
            } catch (const InvalidArgument& e) {
                throw ConfigError(e.what());
            }
            need(p_quantum.has_value() == p_classical.has_value(), "p_quantum and p_classical go together");
        }
    }
};

/// Writes `# figure: <tag>` and a header, then rows with round-trip precision.
class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::string& tag, const std::vector<std::string>& columns)
        : out_(path, std::ios::binary), width_(columns.size()) {
        if (!out_) throw Error("cannot write " + path.string());
        out_ << "# " << tag << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }

    void row(const std::vector<double>& values) {
        detail::require(values.size() == width_, "CsvWriter: row width differs from header");
        char buf[40];
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", values[i]);
            out_ << (i ? "," : "") << buf;
        }
        out_ << "\n";
    }

private:
    std::ofstream out_;
    std::size_t width_;
};

inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

struct RunResult {
    int exit_code = kOk;
    std::string message;
    json manifest;
};

namespace internal {

inline PauliHamiltonian build_model(const ModelSpec& spec) {
    const Boundary b = spec.boundary == "open" ? Boundary::Open : Boundary::Periodic;
    if (spec.kind == "afhm1d") return build_afhm_1d(spec.n, b);
    if (spec.kind == "afhm2d") return build_afhm_2d(spec.side, b);
    std::ifstream in(spec.file);
    if (!in) throw ConfigError("cannot read model file " + spec.file);
    try {
        return PauliHamiltonian::from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model file: ") + e.what());
    }
}

inline Bipartition parse_bipartition(const json& spec, int n) {
    try {
        if (spec.is_string()) {
            const auto s = spec.get<std::string>();
            if (s == "halves") return Bipartition::halves(n);
            if (s.rfind("left:", 0) == 0) return Bipartition::left_right(n, std::stoi(s.substr(5)));
            throw ConfigError("bipartition must be \"halves\", \"left:K\" or a site list");
        }
        return Bipartition(n, spec.get<std::vector<int>>());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("bipartition: ") + e.what());
    }
}

/// Energies and stable ranks of every eigenstate, plus the states when they fit in memory.
struct EigenProfile {
    std::vector<double> E;
    std::vector<double> M;
    std::optional<EigenSystem> es;
};

inline constexpr int kDenseProfileQubits = 14;

inline EigenProfile eigen_profile(const PauliHamiltonian& h, const Bipartition& cut, bool allow_streaming) {
    EigenProfile p;
    const int n = h.qubits();
    if (n <= kDenseProfileQubits) {
        p.es = full_eigensystem(h, h.preserves_weight());
        for (Index i = 0; i < p.es->size(); ++i) {
            p.E.push_back(p.es->energies(i));
            p.M.push_back(stable_schmidt_rank(p.es->state(i), cut));
        }
        return p;
    }
    if (!allow_streaming)
        throw ConfigError("n = " + std::to_string(n) + " needs the full eigensystem; pass --full-2d to stream it");
    if (!h.preserves_weight()) throw ConfigError("streaming eigensystems need a weight-preserving Hamiltonian");
    std::vector<std::pair<double, double>> pairs;
    for_each_eigenpair(h, [&](double e, const StateVector& v) { pairs.emplace_back(e, stable_schmidt_rank(v, cut)); });
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto [e, m] : pairs) {
        p.E.push_back(e);
        p.M.push_back(m);
    }
    return p;
}

struct CompressedState {
    Index D = 0;
    StateVector state;
    double m = 0.0;
    double energy = 0.0;
    double fidelity = 0.0;
};

inline std::vector<CompressedState> compressed_ground_states(const PauliHamiltonian& h, const StateVector& ground,
                                                             const Bipartition& cut, const RunConfig& c) {
    std::vector<CompressedState> out;
    for (Index D : c.D) {
        auto mps = compress_state(ground, D);
        if (c.sweeps > 0) mps = sweep_refine(std::move(mps), h, c.sweeps).mps;
        CompressedState s;
        s.D = D;
        s.state = mps.contract().normalized();
        s.m = stable_schmidt_rank(s.state, cut);
        s.energy = h.expectation(s.state);
        s.fidelity = fidelity(s.state, ground);
        out.push_back(std::move(s));
    }
    return out;
}

/// (label, m) pairs: either the override once, or one per compressed state.
inline std::vector<std::pair<Index, double>> m_values(const RunConfig& c, const std::vector<CompressedState>& states) {
    if (c.m) return {{0, *c.m}};
    std::vector<std::pair<Index, double>> out;
    for (const auto& s : states) out.emplace_back(s.D, s.m);
    return out;
}

inline std::string spectra_tag(const RunConfig& c, bool actual) {
    if (c.model.kind == "afhm2d") return actual ? "figure: fig2b" : "figure: fig2a";
    return "figure: fig3";
}

inline std::vector<double> offsets(const std::vector<double>& E) {
    std::vector<double> x;
    for (double e : E) x.push_back(e - E.front());
    return x;
}

struct Context {
    const RunConfig& config;
    fs::path out;
    json derived = json::object();
    std::vector<std::string> artifacts;

    fs::path file(const std::string& name) {
        artifacts.push_back(name);
        return out / name;
    }
};

inline void write_broadened(Context& ctx, const std::string& name, const std::string& tag,
                            const std::vector<double>& x, const std::vector<std::pair<Index, std::vector<std::vector<double>>>>& series,
                            const std::vector<std::string>& value_columns) {
    const auto grid = default_grid(0.0, x.back(), ctx.config.width);
    std::vector<std::string> cols{"D", "E_minus_E1"};
    for (const auto& v : value_columns) cols.push_back("density_" + v);
    CsvWriter w(ctx.file(name), tag, cols);
    for (const auto& [D, ps] : series) {
        std::vector<std::vector<double>> curves;
        for (const auto& p : ps) curves.push_back(broaden(x, p, ctx.config.width, grid));
        for (std::size_t g = 0; g < grid.size(); ++g) {
            std::vector<double> row{static_cast<double>(D), grid[g]};
            for (const auto& c : curves) row.push_back(c[g]);
            w.row(row);
        }
    }
}

inline void run_spectra(Context& ctx, bool plus) {
    const auto& c = ctx.config;
    const auto h = build_model(c.model);
    const auto cut = parse_bipartition(c.bipartition, h.qubits());
    if (plus && h.qubits() > kDenseProfileQubits)
        throw ConfigError("predict-plus needs the pairwise norm matrix, limited to n <= 14");
    const auto profile = eigen_profile(h, cut, c.full_2d);
    std::vector<CompressedState> states;
    if (!c.m) states = compressed_ground_states(h, ground_state(h).state, cut, c);
    const auto x = offsets(profile.E);

    std::optional<GammaMatrix> gamma;
    if (plus) {
        const fs::path cache = c.cache_dir.empty() ? ctx.out / "gamma-cache" : fs::path(c.cache_dir);
        gamma = cached_gamma_matrix(cache, h, *profile.es, cut);
    }

    std::vector<std::string> cols{"D", "m", "E", "E_minus_E1", "p_cr"};
    if (plus) cols.push_back("p_crplus");
    CsvWriter w(ctx.file(plus ? "spectrum_crplus.csv" : "spectrum_cr.csv"), spectra_tag(c, false), cols);
    std::vector<std::pair<Index, std::vector<std::vector<double>>>> series;
    json per_d = json::array();
    for (const auto& [D, m] : m_values(c, states)) {
        const SpectrumProblem problem{profile.E, profile.M, m};
        const auto cr = predict(problem);
        json entry = {{"D", D}, {"m", m}, {"case", to_string(cr.kind)}, {"optimum_energy_cr", cr.optimum_energy}};
        entry["nu_star"] = cr.nu_star ? json(*cr.nu_star) : json(nullptr);
        std::vector<std::vector<double>> ps{cr.p};
        std::optional<CRPlusSolution> sol;
        if (plus) {
            sol = solve_cr_plus(profile.E, *gamma, m);
            entry["optimum_energy_crplus"] = sol->optimum_energy;
            entry["lambda_crplus"] = sol->lambda;
            entry["duality_gap_crplus"] = sol->duality_gap;
            ps.push_back(sol->p);
        }
        for (std::size_t i = 0; i < profile.E.size(); ++i) {
            std::vector<double> row{static_cast<double>(D), m, profile.E[i], x[i], cr.p[i]};
            if (plus) row.push_back(sol->p[i]);
            w.row(row);
        }
        series.emplace_back(D, std::move(ps));
        per_d.push_back(entry);
    }
    std::vector<std::string> names{"cr"};
    if (plus) names.push_back("crplus");
    write_broadened(ctx, plus ? "broadened_crplus.csv" : "broadened_cr.csv", spectra_tag(c, false), x, series, names);
    ctx.derived["k"] = profile.E.size();
    ctx.derived["E1"] = profile.E.front();
    ctx.derived["ground_chi"] = profile.M.front();
    ctx.derived["per_D"] = per_d;
}

inline void run_actual(Context& ctx) {
    const auto& c = ctx.config;
    const auto h = build_model(c.model);
    const auto cut = parse_bipartition(c.bipartition, h.qubits());
    const auto ground = ground_state(h);
    const auto states = compressed_ground_states(h, ground.state, cut, c);
    std::optional<EigenSystem> es;
    if (h.qubits() <= kDenseProfileQubits)
        es = full_eigensystem(h, h.preserves_weight());
    else if (!c.full_2d)
        throw ConfigError("n = " + std::to_string(h.qubits()) + " needs the full eigensystem; pass --full-2d to stream it");

    CsvWriter w(ctx.file("spectrum_actual.csv"), spectra_tag(c, true), {"D", "m", "E", "E_minus_E1", "p_actual"});
    std::vector<std::pair<Index, std::vector<std::vector<double>>>> series;
    std::vector<double> x;
    json per_d = json::array();
    for (const auto& s : states) {
        const auto spec = es ? overlap_spectrum(s.state, *es, cut) : overlap_spectrum_streaming(s.state, h, cut);
        x = offsets(spec.energies);
        for (std::size_t i = 0; i < spec.p.size(); ++i) w.row({static_cast<double>(s.D), spec.m, spec.energies[i], x[i], spec.p[i]});
        series.emplace_back(s.D, std::vector<std::vector<double>>{spec.p});
        per_d.push_back({{"D", s.D}, {"m", spec.m}, {"energy", spec.energy}, {"fidelity", s.fidelity}});
    }
    write_broadened(ctx, "broadened_actual.csv", spectra_tag(c, true), x, series, {"actual"});
    ctx.derived["E1"] = ground.energy;
    ctx.derived["per_D"] = per_d;
}

inline void run_entropy_sweep(Context& ctx) {
    const auto& c = ctx.config;
    const auto h = build_model(c.model);
    const int n = h.qubits();
    const auto cut = parse_bipartition(c.bipartition, n);
    if (!h.preserves_weight()) throw ConfigError("entropy-sweep needs a weight-preserving Hamiltonian");
    const bool all = c.entropy_sectors == "all" || c.full_2d;
    if (n > DenseLimits{}.sector_qubits) throw ConfigError("entropy-sweep: n above the sector limit");

    struct Row {
        int w;
        double e;
        EntropyProfile s;
    };
    std::vector<Row> rows;
    std::vector<double> orders{std::numeric_limits<double>::infinity()};
    for (double a : c.renyi)
        if (!std::isinf(a)) orders.push_back(a);
    auto visit_sector = [&](int w) {
        for_each_eigenpair_in_sector(h, w, [&](double e, const StateVector& v) { rows.push_back({w, e, entropy_profile(v, cut, orders)}); });
    };
    if (all)
        for (int w = 0; w <= n; ++w) visit_sector(w);
    else
        visit_sector(n / 2);
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.e < b.e; });
    const double e1 = rows.front().e;

    std::vector<std::string> cols{"sector_weight", "E", "E_minus_E1", "S_min"};
    for (std::size_t i = 1; i < orders.size(); ++i) {
        std::ostringstream name;
        name << "S_" << orders[i];
        cols.push_back(name.str());
    }
    CsvWriter w(ctx.file("entropy.csv"), "figure: fig1", cols);
    std::vector<std::vector<std::pair<double, double>>> binned(orders.size());
    for (const auto& r : rows) {
        std::vector<double> row{static_cast<double>(r.w), r.e, r.e - e1};
        for (std::size_t i = 0; i < orders.size(); ++i) {
            const double s = r.s.s_alpha[i].second;
            row.push_back(s);
            binned[i].emplace_back(r.e - e1, s);
        }
        w.row(row);
    }
    std::vector<std::string> bin_cols{"j", "center"};
    for (std::size_t i = 3; i < cols.size(); ++i) bin_cols.push_back("mean_" + cols[i]);
    bin_cols.push_back("count");
    CsvWriter b(ctx.file("entropy_bins.csv"), "figure: fig1", bin_cols);
    std::vector<std::vector<Bin>> bins;
    for (const auto& series : binned) bins.push_back(bin_means(series));
    for (std::size_t j = 0; j < bins.front().size(); ++j) {
        std::vector<double> row{static_cast<double>(bins.front()[j].j), bins.front()[j].center};
        for (const auto& series : bins) row.push_back(series[j].mean);
        row.push_back(static_cast<double>(bins.front()[j].count));
        b.row(row);
    }
    ctx.derived["rows"] = rows.size();
    ctx.derived["E1"] = e1;
    ctx.derived["ground_chi"] = rows.front().s.chi;
    ctx.derived["sectors"] = all ? "all" : "middle";
    ctx.derived["entropy_ceiling_bits"] = static_cast<double>(std::min(cut.a().size(), cut.b().size()));
}

inline void run_two_level(Context& ctx) {
    const auto& c = ctx.config;
    CsvWriter w(ctx.file("two_level.csv"), "figure: two-level", {"mu", "m", "p", "E"});
    const auto sweep = two_level_sweep(c.two_level, c.points);
    for (const auto& pt : sweep) w.row({pt.mu, pt.m, pt.p, pt.energy});
    ctx.derived["m_range"] = {sweep.front().m, sweep.back().m};
    if (c.p_quantum) {
        const auto r = advantage(c.two_level, *c.p_quantum, *c.p_classical);
        ctx.derived["advantage"] = {{"m_Q", r.m_q}, {"m_C", r.m_c}, {"ratio", r.ratio}, {"case", to_string(r.case_tag)},
                                    {"ratio_bound", r.ratio_bound}, {"bounds_hold", r.bounds_hold}};
    }
}

inline void run_ensemble(Context& ctx) {
    const auto& c = ctx.config;
    json reports = json::array();
    std::uint64_t stream = 0;
    for (Index d : c.ensemble_d)
        for (const auto& kind : c.alphas) {
            const auto alpha = kind == "uniform" ? uniform_alpha(d * d) : heavy_tailed_alpha(d * d);
            auto j = ab_statistics(alpha, d, c.trials, splitmix64(c.seed, stream++)).to_json();
            j["alpha"] = kind;
            reports.push_back(j);
        }
    std::ofstream(ctx.file("ensemble.json"), std::ios::binary) << reports.dump(2) << "\n";
    const auto scaling = norm_scaling_check(c.ensemble_d, c.trials, splitmix64(c.seed, stream++));
    std::ofstream(ctx.file("norm_scaling.json"), std::ios::binary) << scaling.to_json().dump(2) << "\n";
    json ratios = json::array();
    for (const auto& r : reports) ratios.push_back({{"d", r["d"]}, {"alpha", r["alpha"]}, {"ratio", r["ratio"]}});
    ctx.derived["ratios"] = ratios;
    ctx.derived["median_ratio"] = scaling.median_ratio;
}

inline void run_slack_table(Context& ctx) {
    const auto& c = ctx.config;
    const auto h = build_model(c.model);
    const auto cut = parse_bipartition(c.bipartition, h.qubits());
    const auto ground = ground_state(h).state;
    CsvWriter w(ctx.file("slack_table.csv"), "table: slack", {"D", "inv_sqrt_m", "A", "C", "B_value"});
    json rows = json::array();
    if (h.qubits() <= kDenseProfileQubits) {
        const auto es = full_eigensystem(h, h.preserves_weight());
        const fs::path cache = c.cache_dir.empty() ? ctx.out / "gamma-cache" : fs::path(c.cache_dir);
        const auto gamma = cached_gamma_matrix(cache, h, es, cut);
        for (const auto& r : slack_table(ground, c.D, es, cut, &gamma)) {
            w.row({static_cast<double>(r.D), r.inv_sqrt_m, r.A, r.C, r.B});
            rows.push_back({{"D", r.D}, {"m", r.m}, {"inv_sqrt_m", r.inv_sqrt_m}, {"B", r.B}});
        }
    } else {
        if (!c.full_2d)
            throw ConfigError("n = " + std::to_string(h.qubits()) + " needs the full eigensystem; pass --full-2d to stream it");
        // Streaming: B needs only |alpha_i| and ||Gamma_i||; C would need all pairs and is skipped.
        const auto states = compressed_ground_states(h, ground, cut, c);
        std::vector<linalg::CompensatedSum> b(states.size());
        for_each_eigenpair(h, [&](double, const StateVector& v) {
            const double norm = linalg::spectral_norm(reshape_state(v, cut));
            for (std::size_t s = 0; s < states.size(); ++s) b[s].add(std::abs(v.dot(states[s].state)) * norm);
        });
        for (std::size_t s = 0; s < states.size(); ++s) {
            const double inv = 1.0 / std::sqrt(states[s].m);
            w.row({static_cast<double>(states[s].D), inv, linalg::spectral_norm(reshape_state(states[s].state, cut)),
                   std::numeric_limits<double>::quiet_NaN(), b[s].value()});
            rows.push_back({{"D", states[s].D}, {"m", states[s].m}, {"inv_sqrt_m", inv}, {"B", b[s].value()}});
        }
    }
    ctx.derived["rows"] = rows;
}

}  // namespace internal

/// Runs one pipeline. Exit codes: 2 invalid config, 3 numerical failure, 4 infeasible.
inline RunResult run(const RunConfig& config) {
    RunResult result;
    try {
        config.validate();
        internal::Context ctx{config, fs::path(config.out)};
        fs::create_directories(ctx.out);
        switch (config.mode) {
            case Mode::Predict: internal::run_spectra(ctx, false); break;
            case Mode::PredictPlus: internal::run_spectra(ctx, true); break;
            case Mode::Actual: internal::run_actual(ctx); break;
            case Mode::EntropySweep: internal::run_entropy_sweep(ctx); break;
            case Mode::TwoLevel: internal::run_two_level(ctx); break;
            case Mode::Ensemble: internal::run_ensemble(ctx); break;
            case Mode::SlackTable: internal::run_slack_table(ctx); break;
        }
        const json cfg = config.to_json();
        result.manifest = {{"config", cfg},
                           {"config_hash", fnv1a_hex(cfg.dump())},
                           {"versions",
                            {{"spectra_lab", kVersion},
                             {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                           "." + std::to_string(EIGEN_MINOR_VERSION)},
                             {"boost", BOOST_LIB_VERSION}}},
                           {"artifacts", ctx.artifacts},
                           {"derived", ctx.derived}};
        std::ofstream(ctx.out / "manifest.json", std::ios::binary) << result.manifest.dump(2) << "\n";
        result.message = "wrote " + std::to_string(ctx.artifacts.size()) + " artifact(s) to " + ctx.out.string();
    } catch (const InfeasibleError& e) {
        result.exit_code = kInfeasible;
        result.message = std::string("INFEASIBLE: ") + e.what();
    } catch (const InvalidArgument& e) {
        result.exit_code = kInvalidConfig;
        result.message = std::string("invalid config: ") + e.what();
    } catch (const NumericalError& e) {
        result.exit_code = kNumericalFailure;
        result.message = std::string("numerical failure: ") + e.what();
    } catch (const std::exception& e) {
        result.exit_code = kNumericalFailure;
        result.message = std::string("error: ") + e.what();
    }
    return result;
}

inline std::vector<Index> parse_d_list(const std::string& text) {
    std::vector<Index> out;
    std::stringstream s(text);
    std::string item;
    while (std::getline(s, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size()) throw ConfigError("bad D entry '" + item + "'");
            out.push_back(static_cast<Index>(v));
        } catch (const std::logic_error&) {
            throw ConfigError("bad D entry '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty D list");
    return out;
}

}  // namespace cli
}  // namespace spectra_lab
