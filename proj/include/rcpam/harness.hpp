#pragma once

// Experiment configuration, seeded execution of single grid points, sweeps
// over (fiber length x SNR x N_out x seed), and CSV/JSON result emission.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "rcpam/error.hpp"
#include "rcpam/esn.hpp"
#include "rcpam/eval.hpp"
#include "rcpam/link_sim.hpp"
#include "rcpam/rng.hpp"

namespace rcpam::harness {

inline constexpr const char* code_version = "rcpam 1.0.0";

struct ExperimentConfig {
    std::string label = "experiment";
    link::LinkConfig link;                // snr_db, fiber_length_km, n_symbols and seed are set per point
    std::vector<double> snr_db;           // grid
    std::vector<double> fiber_length_km;  // grid
    esn::EsnConfig esn;                   // n_out, sps, num_slices and seed are set per point
    std::vector<std::size_t> n_out;       // list
    std::vector<double> ridge_lambda_grid; // optional validation search; empty = fixed esn.ridge_lambda
    double train_fraction = 0.15;
    std::size_t total_symbols = 1u << 18;
    std::vector<std::uint64_t> seeds{1};

    bool operator==(const ExperimentConfig&) const;
};

namespace detail {

inline bool same(const link::LinkConfig& a, const link::LinkConfig& b)
{
    return std::tie(a.baud_rate, a.sps, a.rolloff, a.rrc_span_symbols, a.dispersion_ps_nm_km, a.wavelength_nm, a.num_slices,
                    a.mzm_mod_index, a.share_carrier)
           == std::tie(b.baud_rate, b.sps, b.rolloff, b.rrc_span_symbols, b.dispersion_ps_nm_km, b.wavelength_nm, b.num_slices,
                       b.mzm_mod_index, b.share_carrier);
}

inline bool same(const esn::EsnConfig& a, const esn::EsnConfig& b)
{
    return std::tie(a.k, a.n_res, a.spectral_radius, a.leak, a.s_in, a.s_res, a.s_out, a.readout_density, a.input_scaling,
                    a.ridge_lambda, a.washout)
           == std::tie(b.k, b.n_res, b.spectral_radius, b.leak, b.s_in, b.s_res, b.s_out, b.readout_density, b.input_scaling,
                       b.ridge_lambda, b.washout);
}

} // namespace detail

inline bool ExperimentConfig::operator==(const ExperimentConfig& o) const
{
    return label == o.label && detail::same(link, o.link) && snr_db == o.snr_db && fiber_length_km == o.fiber_length_km
           && detail::same(esn, o.esn) && n_out == o.n_out && ridge_lambda_grid == o.ridge_lambda_grid
           && train_fraction == o.train_fraction && total_symbols == o.total_symbols && seeds == o.seeds;
}

/// Default SNR grid: 8 to 30 dB in 1 dB steps.
inline std::vector<double> default_snr_grid()
{
    std::vector<double> g;
    for (int s = 8; s <= 30; ++s) g.push_back(s);
    return g;
}

// ---------------------------------------------------------------------------
// Config file
//
// JSON with // and /* */ comments. Sections "link" and "esn" plus top-level
// run settings; see configs/example.json for the annotated schema. The only
// required field is link.fiber_length_km.

namespace detail {

using json = nlohmann::json;

class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object()) throw validation_error(name("") + " must be an object");
    }

    std::string name(const std::string& key) const { return path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key); }

    bool has(const std::string& key)
    {
        seen_.insert(key);
        return obj_.contains(key);
    }

    double number(const std::string& key, double fallback)
    {
        if (!has(key)) return fallback;
        return as_number(obj_.at(key), name(key));
    }

    std::size_t count(const std::string& key, std::size_t fallback)
    {
        if (!has(key)) return fallback;
        return as_count(obj_.at(key), name(key));
    }

    bool boolean(const std::string& key, bool fallback)
    {
        if (!has(key)) return fallback;
        const auto& v = obj_.at(key);
        if (!v.is_boolean()) throw validation_error(name(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback)
    {
        if (!has(key)) return fallback;
        const auto& v = obj_.at(key);
        if (!v.is_string()) throw validation_error(name(key) + ": expected a string");
        return v.get<std::string>();
    }

    /// Number, array of numbers, or {"start","stop","step"} range.
    std::optional<std::vector<double>> grid(const std::string& key)
    {
        if (!has(key)) return std::nullopt;
        const auto& v = obj_.at(key);
        const auto field = name(key);
        std::vector<double> out;
        if (v.is_number()) {
            out.push_back(as_number(v, field));
        } else if (v.is_array()) {
            for (const auto& e : v) out.push_back(as_number(e, field));
        } else if (v.is_object()) {
            Reader r(v, field);
            if (!r.has("start") || !r.has("stop") || !r.has("step"))
                throw validation_error(field + ": range needs start, stop and step");
            const double start = r.number("start", 0), stop = r.number("stop", 0), step = r.number("step", 0);
            r.reject_unknown();
            if (!(step > 0)) throw validation_error(field + ".step must be > 0");
            const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
            for (long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
        } else {
            throw validation_error(field + ": expected a number, an array or a range object");
        }
        return out;
    }

    std::optional<std::vector<std::size_t>> counts(const std::string& key)
    {
        if (!has(key)) return std::nullopt;
        const auto& v = obj_.at(key);
        std::vector<std::size_t> out;
        if (v.is_array())
            for (const auto& e : v) out.push_back(as_count(e, name(key)));
        else
            out.push_back(as_count(v, name(key)));
        return out;
    }

    std::optional<std::vector<std::uint64_t>> seeds(const std::string& key)
    {
        if (!has(key)) return std::nullopt;
        const auto& v = obj_.at(key);
        std::vector<std::uint64_t> out;
        auto one = [&](const json& e) {
            if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0))
                throw validation_error(name(key) + ": seeds must be non-negative integers");
            out.push_back(e.get<std::uint64_t>());
        };
        if (v.is_array())
            for (const auto& e : v) one(e);
        else
            one(v);
        return out;
    }

    const json& child(const std::string& key)
    {
        static const json empty = json::object();
        if (!has(key)) return empty;
        return obj_.at(key);
    }

    void reject_unknown() const
    {
        for (const auto& [key, value] : obj_.items())
            if (!seen_.count(key)) throw validation_error("unknown key '" + name(key) + "'");
    }

private:
    static double as_number(const json& v, const std::string& field)
    {
        if (!v.is_number()) throw validation_error(field + ": expected a number");
        return v.get<double>();
    }

    static std::size_t as_count(const json& v, const std::string& field)
    {
        if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) return v.get<std::size_t>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d >= 0 && d == std::floor(d) && d < 9.0e15) return static_cast<std::size_t>(d);
        }
        throw validation_error(field + ": expected a non-negative integer");
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename T>
void require_sorted(const std::vector<T>& v, const std::string& field)
{
    if (v.empty()) throw validation_error(field + ": grid must not be empty");
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) throw validation_error(field + ": grid must be strictly increasing");
}

inline std::size_t line_of(const std::string& text, std::size_t byte)
{
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

} // namespace detail

/// Checks cross-field invariants. Throws validation_error naming the field.
inline void validate(const ExperimentConfig& cfg)
{
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) throw validation_error("train_fraction must lie in (0, 1)");
    if (cfg.total_symbols == 0) throw validation_error("total_symbols must be > 0");
    if (cfg.seeds.empty()) throw validation_error("seeds must not be empty");
    detail::require_sorted(cfg.snr_db, "link.snr_db");
    detail::require_sorted(cfg.fiber_length_km, "link.fiber_length_km");
    detail::require_sorted(cfg.n_out, "esn.n_out");
    for (double lambda : cfg.ridge_lambda_grid)
        if (!(lambda >= 0)) throw validation_error("esn.ridge_lambda_grid: values must be >= 0");

    auto link = cfg.link;
    link.n_symbols = cfg.total_symbols;
    for (double len : cfg.fiber_length_km) {
        link.fiber_length_km = len;
        link.validate();
    }
    for (double snr : cfg.snr_db)
        if (std::isnan(snr)) throw validation_error("link.snr_db: values must be numbers");
    auto e = cfg.esn;
    e.sps = cfg.link.sps;
    e.num_slices = cfg.link.num_slices;
    for (auto n : cfg.n_out) {
        e.n_out = n;
        e.validate();
    }
}

/// Parses config text. Throws config_parse_error (with line) or validation_error (with field).
inline ExperimentConfig parse_config(const std::string& text)
{
    using detail::json;
    json root;
    const bool blank = std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
    if (blank) {
        root = json::object();
    } else {
        try {
            root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
        } catch (const json::parse_error& e) {
            throw config_parse_error(std::string("config parse error: ") + e.what(), detail::line_of(text, e.byte));
        }
    }

    ExperimentConfig cfg;
    detail::Reader top(root, "");
    cfg.label = top.text("label", cfg.label);
    cfg.train_fraction = top.number("train_fraction", cfg.train_fraction);
    cfg.total_symbols = top.count("total_symbols", cfg.total_symbols);
    if (auto s = top.seeds("seeds")) cfg.seeds = *s;

    {
        detail::Reader r(top.child("link"), "link");
        auto& l = cfg.link;
        l.baud_rate = r.number("baud_rate", l.baud_rate);
        l.sps = r.count("sps", l.sps);
        l.rolloff = r.number("rolloff", l.rolloff);
        l.rrc_span_symbols = r.count("rrc_span_symbols", l.rrc_span_symbols);
        l.dispersion_ps_nm_km = r.number("dispersion_ps_nm_km", l.dispersion_ps_nm_km);
        l.wavelength_nm = r.number("wavelength_nm", l.wavelength_nm);
        l.num_slices = r.count("num_slices", l.num_slices);
        l.mzm_mod_index = r.number("mzm_mod_index", l.mzm_mod_index);
        l.share_carrier = r.boolean("share_carrier", l.share_carrier);
        auto lengths = r.grid("fiber_length_km");
        if (!lengths) throw validation_error("missing required field 'link.fiber_length_km'");
        cfg.fiber_length_km = *lengths;
        cfg.snr_db = r.grid("snr_db").value_or(default_snr_grid());
        r.reject_unknown();
    }
    {
        detail::Reader r(top.child("esn"), "esn");
        auto& e = cfg.esn;
        e.k = r.count("k", e.k);
        e.n_res = r.count("n_res", e.n_res);
        cfg.n_out = r.counts("n_out").value_or(std::vector<std::size_t>{1});
        e.spectral_radius = r.number("spectral_radius", e.spectral_radius);
        e.leak = r.number("leak", e.leak);
        e.s_in = r.number("s_in", e.s_in);
        e.s_res = r.number("s_res", e.s_res);
        e.s_out = r.number("s_out", e.s_out);
        e.readout_density = r.number("readout_density", e.readout_density);
        e.input_scaling = r.number("input_scaling", e.input_scaling);
        e.ridge_lambda = r.number("ridge_lambda", e.ridge_lambda);
        cfg.ridge_lambda_grid = r.grid("ridge_lambda_grid").value_or(std::vector<double>{});
        e.washout = r.count("washout", e.washout);
        r.reject_unknown();
    }
    top.reject_unknown();
    validate(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw validation_error("cannot read config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

inline nlohmann::json to_json(const ExperimentConfig& cfg)
{
    nlohmann::json j;
    j["label"] = cfg.label;
    j["train_fraction"] = cfg.train_fraction;
    j["total_symbols"] = cfg.total_symbols;
    j["seeds"] = cfg.seeds;
    const auto& l = cfg.link;
    j["link"] = {{"baud_rate", l.baud_rate},
                 {"sps", l.sps},
                 {"rolloff", l.rolloff},
                 {"rrc_span_symbols", l.rrc_span_symbols},
                 {"dispersion_ps_nm_km", l.dispersion_ps_nm_km},
                 {"fiber_length_km", cfg.fiber_length_km},
                 {"wavelength_nm", l.wavelength_nm},
                 {"num_slices", l.num_slices},
                 {"snr_db", cfg.snr_db},
                 {"mzm_mod_index", l.mzm_mod_index},
                 {"share_carrier", l.share_carrier}};
    const auto& e = cfg.esn;
    j["esn"] = {{"k", e.k},
                {"n_res", e.n_res},
                {"n_out", cfg.n_out},
                {"spectral_radius", e.spectral_radius},
                {"leak", e.leak},
                {"s_in", e.s_in},
                {"s_res", e.s_res},
                {"s_out", e.s_out},
                {"readout_density", e.readout_density},
                {"input_scaling", e.input_scaling},
                {"ridge_lambda", e.ridge_lambda},
                {"ridge_lambda_grid", cfg.ridge_lambda_grid},
                {"washout", e.washout}};
    return j;
}

inline std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Records

struct GridPoint {
    double fiber_length_km = 0.0;
    double snr_db = 0.0;
    std::size_t n_out = 1;
};

struct SweepRecord {
    std::string label;
    std::uint64_t seed = 0;
    double snr_db = 0.0;
    double fiber_length_km = 0.0;
    std::size_t n_out = 0;
    std::size_t n_res = 0;
    double ber = std::nan("");
    double ser = std::nan("");
    std::vector<double> per_position_ber;
    double rmps = std::nan("");
    std::size_t train_symbols = 0;
    std::size_t test_symbols = 0;
    double wall_time_s = 0.0;
    std::size_t window = 0;  // M = 2k+1
    std::string error;       // empty on success

    bool ok() const noexcept { return error.empty(); }
    std::uint64_t n_bits() const noexcept { return 2 * static_cast<std::uint64_t>(test_symbols); }
    std::uint64_t n_bit_errors() const noexcept
    {
        return ok() ? static_cast<std::uint64_t>(std::llround(ber * static_cast<double>(n_bits()))) : 0;
    }
};

namespace detail {

inline link::LinkConfig link_for(const ExperimentConfig& cfg, double length, double snr, std::uint64_t seed)
{
    auto l = cfg.link;
    l.fiber_length_km = length;
    l.snr_db = snr;
    l.n_symbols = cfg.total_symbols;
    l.seed = seed;
    return l;
}

inline esn::EsnConfig esn_for(const ExperimentConfig& cfg, std::size_t n_out, std::uint64_t seed)
{
    auto e = cfg.esn;
    e.n_out = n_out;
    e.sps = cfg.link.sps;
    e.num_slices = cfg.link.num_slices;
    e.seed = derive_seed(seed, stream::esn);
    return e;
}

inline SweepRecord blank_record(const ExperimentConfig& cfg, const GridPoint& pt, std::uint64_t seed)
{
    SweepRecord rec;
    rec.label = cfg.label;
    rec.seed = seed;
    rec.snr_db = pt.snr_db;
    rec.fiber_length_km = pt.fiber_length_km;
    rec.n_out = pt.n_out;
    rec.n_res = cfg.esn.n_res;
    rec.window = cfg.esn.window();
    rec.rmps = eval::complexity_rmps(esn_for(cfg, pt.n_out, seed));
    return rec;
}

/// Step ranges of the split: training uses steps [0, train_steps), testing
/// [test_begin, n_steps). The gap between them covers at least k symbols.
struct Split {
    std::size_t train_steps = 0;
    std::size_t test_begin = 0;
};

inline Split split_steps(double train_fraction, std::size_t total_symbols, const esn::EsnConfig& ecfg, std::size_t n_steps)
{
    const std::size_t n_out = ecfg.n_out;
    Split s;
    s.train_steps = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(total_symbols))) / n_out;
    s.test_begin = s.train_steps + (ecfg.k + n_out - 1) / n_out;
    if (s.train_steps <= ecfg.washout) throw validation_error("training region is not longer than the washout");
    if (s.test_begin >= n_steps) throw validation_error("no symbols left for testing; increase total_symbols");
    return s;
}

/// Train on a contiguous prefix of the usable symbols, leave a k-symbol gap,
/// and test on the rest. One reservoir pass; the state is continuous.
inline SweepRecord evaluate_point(const ExperimentConfig& cfg, const GridPoint& pt, std::uint64_t seed,
                                  const link::SlicedObservation& obs, const link::SymbolFrame& frame,
                                  const esn::EsnWeights& weights_in, std::size_t guard,
                                  esn::EsnWeights* trained = nullptr)
{
    const auto started = std::chrono::steady_clock::now();
    SweepRecord rec = blank_record(cfg, pt, seed);
    const auto ecfg = esn_for(cfg, pt.n_out, seed);
    const auto ds = esn::build_windows(obs, frame, ecfg, guard);

    const std::size_t n_out = ecfg.n_out;
    const auto split = split_steps(cfg.train_fraction, cfg.total_symbols, ecfg, ds.n_steps);
    const std::size_t train_steps = split.train_steps, test_begin = split.test_begin;

    esn::EsnWeights w = weights_in;
    const std::size_t n_res = w.n_res();
    std::vector<double> test_estimates((ds.n_steps - test_begin) * n_out);
    std::vector<int> truth(test_estimates.size());

    // Readout statistics. With a lambda grid the last 20% of the training
    // steps validate the choice before the final fit on all of them.
    const bool tune = !cfg.ridge_lambda_grid.empty();
    const std::size_t fit_end = tune ? ecfg.washout + (train_steps - ecfg.washout) * 4 / 5 : train_steps;
    esn::ReadoutAccumulator fit(n_res, n_out), val(n_res, n_out);

    esn::Vector x = esn::Vector::Zero(static_cast<Eigen::Index>(n_res));
    esn::Vector u(static_cast<Eigen::Index>(ds.n_in()));
    esn::Vector pre(static_cast<Eigen::Index>(n_res));
    auto step = [&](std::size_t t) {
        ds.input(t, std::span<double>(u.data(), static_cast<std::size_t>(u.size())));
        pre.noalias() = w.w_in * u;
        pre.noalias() += w.w_res * x;
        x = (1.0 - ecfg.leak) * x + ecfg.leak * pre.array().tanh().matrix();
    };

    for (std::size_t t = 0; t < train_steps; ++t) {
        step(t);
        if (t < ecfg.washout) continue;
        (t < fit_end ? fit : val).add(x, ds.targets.row(static_cast<Eigen::Index>(t)));
    }
    double lambda = ecfg.ridge_lambda;
    if (tune) {
        lambda = esn::select_ridge_lambda(fit, val, w.out_mask, cfg.ridge_lambda_grid);
        fit.merge(std::move(val));
    }
    w.w_out = esn::solve_readout(fit, w.out_mask, lambda);
    if (trained) *trained = w;

    for (std::size_t t = train_steps; t < ds.n_steps; ++t) {
        step(t);
        if (t < test_begin) continue;
        const esn::Vector y = esn::readout(w, x);
        const std::size_t base = (t - test_begin) * n_out;
        for (std::size_t o = 0; o < n_out; ++o) {
            test_estimates[base + o] = y(static_cast<Eigen::Index>(o));
            truth[base + o] = frame.levels[ds.center_symbol_index(t) + o];
        }
    }

    const auto decided = eval::hard_decision(test_estimates);
    const auto rep = eval::count_errors(decided, truth, n_out);
    rec.ber = rep.ber;
    rec.ser = rep.ser;
    rec.per_position_ber = rep.per_position_ber;
    rec.train_symbols = train_steps * n_out;
    rec.test_symbols = truth.size();
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

inline std::string record_key(const std::string& label, double length, double snr, std::size_t n_out, std::uint64_t seed)
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "|%.17g|%.17g|%zu|%llu", length, snr, n_out, static_cast<unsigned long long>(seed));
    return label + buf;
}

inline std::string record_key(const SweepRecord& r) { return record_key(r.label, r.fiber_length_km, r.snr_db, r.n_out, r.seed); }

} // namespace detail

/// Simulates one grid point end to end: link, split, train, test, BER and RMPS.
/// Failures are returned as records with `error` set.
inline SweepRecord run_experiment(const ExperimentConfig& cfg, const GridPoint& pt, std::uint64_t seed,
                                  esn::EsnWeights* trained = nullptr)
{
    try {
        const auto lcfg = detail::link_for(cfg, pt.fiber_length_km, pt.snr_db, seed);
        const auto clean = link::simulate_link_noiseless(lcfg);
        const auto obs = link::load_noise(clean.observation, pt.snr_db, seed);
        const auto weights = esn::init_weights(detail::esn_for(cfg, pt.n_out, seed));
        return detail::evaluate_point(cfg, pt, seed, obs, clean.frame, weights, link::guard_symbols(lcfg), trained);
    } catch (const std::exception& e) {
        auto rec = detail::blank_record(cfg, pt, seed);
        rec.error = e.what();
        return rec;
    }
}

// ---------------------------------------------------------------------------
// Sweeps

nlohmann::json record_to_json(const SweepRecord& r);
SweepRecord record_from_json(const nlohmann::json& j);

struct SweepOptions {
    std::size_t parallel = 1;
    /// Append-only JSON-lines log of finished records. Records already in the
    /// log are reused instead of recomputed. Empty disables logging.
    std::string log_path;
};

/// Number of records a sweep produces.
inline std::size_t sweep_size(const ExperimentConfig& cfg)
{
    return cfg.fiber_length_km.size() * cfg.snr_db.size() * cfg.n_out.size() * cfg.seeds.size();
}

/// Runs the Cartesian product fiber_length x snr x n_out x seed and returns the
/// records in that order. Work is grouped per (fiber length, seed): the
/// noiseless link and the weight draw per N_out are shared by all SNR points.
inline std::vector<SweepRecord> run_sweep(const ExperimentConfig& cfg, const SweepOptions& opt = {})
{
    validate(cfg);
    const std::size_t n_len = cfg.fiber_length_km.size(), n_snr = cfg.snr_db.size(), n_nout = cfg.n_out.size(),
                      n_seed = cfg.seeds.size();
    auto index_of = [&](std::size_t li, std::size_t si, std::size_t oi, std::size_t ki) {
        return ((li * n_snr + si) * n_nout + oi) * n_seed + ki;
    };

    std::map<std::string, SweepRecord> done;
    if (!opt.log_path.empty() && std::filesystem::exists(opt.log_path)) {
        std::ifstream is(opt.log_path);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            try {
                auto rec = record_from_json(nlohmann::json::parse(line));
                if (rec.ok()) done[detail::record_key(rec)] = std::move(rec);
            } catch (const std::exception&) {
                // a torn final line from an interrupted run is ignored
            }
        }
    }
    std::ofstream log;
    if (!opt.log_path.empty()) {
        bool torn = false;
        if (std::ifstream tail(opt.log_path, std::ios::binary | std::ios::ate); tail && tail.tellg() > 0) {
            tail.seekg(-1, std::ios::end);
            torn = tail.get() != '\n';
        }
        log.open(opt.log_path, std::ios::app);
        if (torn) log << '\n';
        if (!log) throw std::runtime_error("cannot open record log " + opt.log_path);
    }
    std::mutex log_mutex;

    std::vector<SweepRecord> out(sweep_size(cfg));
    auto run_group = [&](std::size_t li, std::size_t ki) {
        const double length = cfg.fiber_length_km[li];
        const std::uint64_t seed = cfg.seeds[ki];

        std::vector<std::size_t> pending;
        for (std::size_t si = 0; si < n_snr; ++si)
            for (std::size_t oi = 0; oi < n_nout; ++oi) {
                const auto key = detail::record_key(cfg.label, length, cfg.snr_db[si], cfg.n_out[oi], seed);
                const auto idx = index_of(li, si, oi, ki);
                if (auto it = done.find(key); it != done.end())
                    out[idx] = it->second;
                else
                    pending.push_back(idx);
            }
        if (pending.empty()) return;

        auto fail_all = [&](const std::string& msg) {
            for (std::size_t si = 0; si < n_snr; ++si)
                for (std::size_t oi = 0; oi < n_nout; ++oi) {
                    const auto idx = index_of(li, si, oi, ki);
                    if (std::find(pending.begin(), pending.end(), idx) == pending.end()) continue;
                    out[idx] = detail::blank_record(cfg, {length, cfg.snr_db[si], cfg.n_out[oi]}, seed);
                    out[idx].error = msg;
                }
        };

        std::optional<link::LinkOutput> clean;
        std::size_t guard = 0;
        try {
            const auto lcfg = detail::link_for(cfg, length, cfg.snr_db.front(), seed);
            clean = link::simulate_link_noiseless(lcfg);
            guard = link::guard_symbols(lcfg);
        } catch (const std::exception& e) {
            fail_all(e.what());
            return;
        }

        std::vector<std::optional<esn::EsnWeights>> weights(n_nout);
        std::vector<std::string> weight_errors(n_nout);
        for (std::size_t si = 0; si < n_snr; ++si) {
            std::optional<link::SlicedObservation> noisy;
            for (std::size_t oi = 0; oi < n_nout; ++oi) {
                const auto idx = index_of(li, si, oi, ki);
                if (std::find(pending.begin(), pending.end(), idx) == pending.end()) continue;
                const GridPoint pt{length, cfg.snr_db[si], cfg.n_out[oi]};
                SweepRecord rec;
                try {
                    if (!weights[oi] && weight_errors[oi].empty()) {
                        try {
                            weights[oi] = esn::init_weights(detail::esn_for(cfg, pt.n_out, seed));
                        } catch (const std::exception& e) {
                            weight_errors[oi] = e.what();
                        }
                    }
                    if (!weight_errors[oi].empty()) throw std::runtime_error(weight_errors[oi]);
                    if (!noisy) noisy = link::load_noise(clean->observation, pt.snr_db, seed);
                    rec = detail::evaluate_point(cfg, pt, seed, *noisy, clean->frame, *weights[oi], guard);
                } catch (const std::exception& e) {
                    rec = detail::blank_record(cfg, pt, seed);
                    rec.error = e.what();
                }
                if (rec.ok() && log.is_open()) {
                    const std::lock_guard lock(log_mutex);
                    log << record_to_json(rec).dump() << '\n' << std::flush;
                }
                out[idx] = std::move(rec);
            }
        }
    };

    const std::size_t n_groups = n_len * n_seed;
    const std::size_t workers = std::clamp<std::size_t>(opt.parallel, 1, std::max<std::size_t>(n_groups, 1));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t g = next++; g < n_groups; g = next++) run_group(g / n_seed, g % n_seed);
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Result files

inline const std::vector<std::string>& csv_columns()
{
    static const std::vector<std::string> cols{"label",  "seed",          "snr_db",       "fiber_length_km", "n_out",
                                               "n_res",  "ber",           "ser",          "per_position_ber", "rmps",
                                               "train_symbols", "test_symbols", "wall_time_s", "window",          "error"};
    return cols;
}

namespace detail {

inline std::string fmt_double(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_quote(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string join_positions(const std::vector<double>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ";" : "") + fmt_double(v[i]);
    return out;
}

/// RFC-4180 reader: returns rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw validation_error("csv: unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string timestamp_utc()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace detail

inline nlohmann::json record_to_json(const SweepRecord& r)
{
    auto num = [](double v) -> nlohmann::json { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    nlohmann::json pos = nlohmann::json::array();
    for (double v : r.per_position_ber) pos.push_back(num(v));
    return {{"label", r.label},         {"seed", r.seed},           {"snr_db", r.snr_db},
            {"fiber_length_km", r.fiber_length_km}, {"n_out", r.n_out}, {"n_res", r.n_res},
            {"ber", num(r.ber)},        {"ser", num(r.ser)},        {"per_position_ber", pos},
            {"rmps", num(r.rmps)},      {"train_symbols", r.train_symbols}, {"test_symbols", r.test_symbols},
            {"wall_time_s", r.wall_time_s}, {"window", r.window},   {"error", r.error}};
}

inline SweepRecord record_from_json(const nlohmann::json& j)
{
    auto num = [](const nlohmann::json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
    SweepRecord r;
    r.label = j.at("label").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.snr_db = j.at("snr_db").get<double>();
    r.fiber_length_km = j.at("fiber_length_km").get<double>();
    r.n_out = j.at("n_out").get<std::size_t>();
    r.n_res = j.at("n_res").get<std::size_t>();
    r.ber = num(j.at("ber"));
    r.ser = num(j.at("ser"));
    for (const auto& v : j.at("per_position_ber")) r.per_position_ber.push_back(num(v));
    r.rmps = num(j.at("rmps"));
    r.train_symbols = j.at("train_symbols").get<std::size_t>();
    r.test_symbols = j.at("test_symbols").get<std::size_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.window = j.at("window").get<std::size_t>();
    r.error = j.at("error").get<std::string>();
    return r;
}

inline std::string records_to_csv(const std::vector<SweepRecord>& records)
{
    std::string out;
    const auto& cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
    out += "\n";
    for (const auto& r : records) {
        using detail::fmt_double;
        const std::vector<std::string> f{detail::csv_quote(r.label),
                                         std::to_string(r.seed),
                                         fmt_double(r.snr_db),
                                         fmt_double(r.fiber_length_km),
                                         std::to_string(r.n_out),
                                         std::to_string(r.n_res),
                                         fmt_double(r.ber),
                                         fmt_double(r.ser),
                                         detail::join_positions(r.per_position_ber),
                                         fmt_double(r.rmps),
                                         std::to_string(r.train_symbols),
                                         std::to_string(r.test_symbols),
                                         fmt_double(r.wall_time_s),
                                         std::to_string(r.window),
                                         detail::csv_quote(r.error)};
        for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
        out += "\n";
    }
    return out;
}

inline std::vector<SweepRecord> records_from_csv(const std::string& text)
{
    const auto rows = detail::parse_csv(text);
    if (rows.empty()) throw validation_error("results csv: missing header");
    if (rows.front() != csv_columns()) throw validation_error("results csv: unexpected header");
    auto num = [](const std::string& s) { return std::strtod(s.c_str(), nullptr); };
    auto cnt = [](const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); };
    std::vector<SweepRecord> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != csv_columns().size())
            throw validation_error("results csv: row " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields");
        SweepRecord r;
        r.label = f[0];
        r.seed = std::stoull(f[1]);
        r.snr_db = num(f[2]);
        r.fiber_length_km = num(f[3]);
        r.n_out = cnt(f[4]);
        r.n_res = cnt(f[5]);
        r.ber = num(f[6]);
        r.ser = num(f[7]);
        std::stringstream ss(f[8]);
        for (std::string tok; std::getline(ss, tok, ';');) r.per_position_ber.push_back(num(tok));
        r.rmps = num(f[9]);
        r.train_symbols = cnt(f[10]);
        r.test_symbols = cnt(f[11]);
        r.wall_time_s = num(f[12]);
        r.window = cnt(f[13]);
        r.error = f[14];
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<SweepRecord> read_results(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return records_from_csv(ss.str());
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

} // namespace detail

/// Writes results.csv and manifest.json into out_dir (created if needed).
inline void write_results(const std::vector<SweepRecord>& records, const ExperimentConfig& cfg, const std::string& out_dir,
                          const std::string& started_at = {})
{
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    detail::write_text(dir / "results.csv", records_to_csv(records));

    nlohmann::json manifest;
    manifest["code_version"] = code_version;
    manifest["config"] = to_json(cfg);
    manifest["seeds"] = cfg.seeds;
    manifest["records"] = records.size();
    manifest["failed_records"] = std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok(); });
    manifest["started_at"] = started_at.empty() ? detail::timestamp_utc() : started_at;
    manifest["finished_at"] = detail::timestamp_utc();
    detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Aggregation and plot data

/// Series identity: one equalizer variant at one fiber length.
struct SeriesKey {
    std::string label;
    std::size_t n_res = 0;
    std::size_t window = 0;
    std::size_t n_out = 0;
    double fiber_length_km = 0.0;
    auto operator<=>(const SeriesKey&) const = default;
};

struct AggregatedPoint {
    double snr_db = 0.0;
    std::uint64_t n_bit_errors = 0;
    std::uint64_t n_bits = 0;
    double median_ber = 0.0;
    std::size_t n_seeds = 0;

    double pooled_ber() const { return n_bits ? static_cast<double>(n_bit_errors) / static_cast<double>(n_bits) : 0.0; }
};

inline double median(std::vector<double> v)
{
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Successful records grouped by series, then by SNR (ascending), pooled over seeds.
inline std::map<SeriesKey, std::vector<AggregatedPoint>> aggregate(const std::vector<SweepRecord>& records)
{
    std::map<SeriesKey, std::map<double, std::vector<const SweepRecord*>>> groups;
    for (const auto& r : records)
        if (r.ok()) groups[{r.label, r.n_res, r.window, r.n_out, r.fiber_length_km}][r.snr_db].push_back(&r);

    std::map<SeriesKey, std::vector<AggregatedPoint>> out;
    for (const auto& [key, by_snr] : groups) {
        auto& series = out[key];
        for (const auto& [snr, recs] : by_snr) {
            AggregatedPoint p;
            p.snr_db = snr;
            std::vector<double> bers;
            for (const auto* r : recs) {
                p.n_bit_errors += r->n_bit_errors();
                p.n_bits += r->n_bits();
                bers.push_back(r->ber);
            }
            p.median_ber = median(bers);
            p.n_seeds = recs.size();
            series.push_back(p);
        }
    }
    return out;
}

inline eval::BerSnrCurve to_curve(const std::vector<AggregatedPoint>& points)
{
    eval::BerSnrCurve c;
    for (const auto& p : points) c.add(p.snr_db, p.n_bit_errors, p.n_bits);
    return c;
}

struct PlotDataSummary {
    std::size_t ber_series = 0;
    std::size_t penalty_rows = 0;
    std::size_t rmps_rows = 0;
    std::vector<std::string> notes;
};

/// Writes fig2a_ber_vs_snr.csv, fig2b_snr_penalty.csv and fig2c_rmps.csv.
/// Penalties are referenced to the single-output window-23 series at 0 km.
inline PlotDataSummary emit_plot_data(const std::vector<SweepRecord>& records, const eval::FecThreshold& fec,
                                      const std::string& out_dir)
{
    using detail::fmt_double;
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

    PlotDataSummary summary;
    const auto series = aggregate(records);

    std::string a = "label,n_res,window,n_out,fiber_length_km,snr_db,ber,ber_median,floor_flag,n_seeds\n";
    for (const auto& [key, pts] : series) {
        ++summary.ber_series;
        const auto curve = to_curve(pts);
        for (std::size_t i = 0; i < pts.size(); ++i)
            a += detail::csv_quote(key.label) + "," + std::to_string(key.n_res) + "," + std::to_string(key.window) + ","
                 + std::to_string(key.n_out) + "," + fmt_double(key.fiber_length_km) + "," + fmt_double(pts[i].snr_db) + ","
                 + fmt_double(curve.points[i].ber) + "," + fmt_double(pts[i].median_ber) + ","
                 + (curve.points[i].floor_flag ? "1" : "0") + "," + std::to_string(pts[i].n_seeds) + "\n";
    }
    detail::write_text(dir / "fig2a_ber_vs_snr.csv", a);

    std::optional<double> ref_snr;
    std::string ref_status = "no_reference";
    for (const auto& [key, pts] : series) {
        if (key.n_out != 1 || key.window != 23 || key.fiber_length_km != 0.0) continue;
        try {
            ref_snr = eval::snr_at_threshold(to_curve(pts), fec);
            ref_status = "ok";
        } catch (const std::exception& e) {
            ref_status = std::string("reference: ") + e.what();
        }
        break;
    }
    if (!ref_snr) summary.notes.push_back("penalty reference unavailable: " + ref_status);

    std::string b = "label,n_res,window,n_out,fiber_length_km,snr_at_threshold_db,penalty_db,status\n";
    for (const auto& [key, pts] : series) {
        std::string status = "ok";
        double snr = std::nan(""), penalty = std::nan("");
        try {
            snr = eval::snr_at_threshold(to_curve(pts), fec);
            if (ref_snr)
                penalty = snr - *ref_snr;
            else
                status = "no_reference";
        } catch (const not_bracketed&) {
            status = "not_bracketed";
        } catch (const non_monotone&) {
            status = "non_monotone";
        } catch (const validation_error&) {
            status = "too_few_points";
        }
        if (status != "ok")
            summary.notes.push_back(key.label + " n_out=" + std::to_string(key.n_out) + " L=" + fmt_double(key.fiber_length_km)
                                    + " km: " + status);
        b += detail::csv_quote(key.label) + "," + std::to_string(key.n_res) + "," + std::to_string(key.window) + ","
             + std::to_string(key.n_out) + "," + fmt_double(key.fiber_length_km) + "," + fmt_double(snr) + ","
             + fmt_double(penalty) + "," + status + "\n";
        ++summary.penalty_rows;
    }
    detail::write_text(dir / "fig2b_snr_penalty.csv", b);

    std::map<std::tuple<std::string, std::size_t, std::size_t, std::size_t>, double> variants;
    for (const auto& r : records) variants.emplace(std::make_tuple(r.label, r.window, r.n_res, r.n_out), r.rmps);
    std::string c = "label,window,n_res,n_out,rmps\n";
    for (const auto& [key, rmps] : variants) {
        const auto& [label, window, n_res, n_out] = key;
        c += detail::csv_quote(label) + "," + std::to_string(window) + "," + std::to_string(n_res) + "," + std::to_string(n_out)
             + "," + fmt_double(rmps) + "\n";
        ++summary.rmps_rows;
    }
    detail::write_text(dir / "fig2c_rmps.csv", c);
    return summary;
}

} // namespace rcpam::harness
