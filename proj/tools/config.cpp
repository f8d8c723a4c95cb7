#include "config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "tspread/cluster.hpp"

namespace tspread::app {

using nlohmann::json;

namespace {

/// Walks one JSON object, remembering the field path for error messages and
/// rejecting keys nobody asked for.
class Reader {
public:
    Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail(path_, "expected an object");
    }

    /// Call once every known key has been read.
    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
        }
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string& key, double fallback) {
        const json* v = find(key);
        return v ? to_number(*v, at(key)) : fallback;
    }

    long integer(const std::string& key, long fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer()) fail(at(key), "expected an integer");
        return v->get<long>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) fail(at(key), "expected true or false");
        return v->get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) fail(at(key), "expected a string");
        return v->get<std::string>();
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& what) {
        throw ConfigError(path + ": " + what);
    }

    /// Numbers, or the strings "inf" / "infinity" for an unbounded entry.
    static double to_number(const json& v, const std::string& path) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
        }
        fail(path, "expected a number");
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array()) Reader::fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Reader::to_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

/// A scalar applies to every off-diagonal entry; an array of arrays gives the full N x N matrix.
Matrix cost_matrix(const json& v, const std::string& path, std::size_t n) {
    Matrix m(n);
    if (!v.is_array()) {
        const double x = Reader::to_number(v, path);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) m(a, b) = a == b ? 0.0 : x;
        }
        return m;
    }
    if (v.size() != n) Reader::fail(path, "expected " + std::to_string(n) + " rows");
    for (std::size_t a = 0; a < n; ++a) {
        const auto row = number_list(v[a], path + "[" + std::to_string(a) + "]");
        if (row.size() != n) Reader::fail(path + "[" + std::to_string(a) + "]", "expected " + std::to_string(n) + " entries");
        for (std::size_t b = 0; b < n; ++b) m(a, b) = row[b];
    }
    return m;
}

void read_users(const json& v, ScenarioConfig& c) {
    if (!v.is_array() || v.empty()) Reader::fail("users", "expected a non-empty array");
    for (std::size_t i = 0; i < v.size(); ++i) {
        Reader r(v[i], "users[" + std::to_string(i) + "]");
        UserConfig u;
        u.distance_m = r.number("distance_m", u.distance_m);
        u.arrival_rate = r.number("arrival_rate", u.arrival_rate);
        u.mean_file_bytes = r.number("mean_file_bytes", u.mean_file_bytes);
        r.finish();
        c.users.push_back(u);
    }
}

void read_channel(const json& v, ChannelConfig& ch) {
    Reader r(v, "channel");
    ch.bandwidth_hz = r.number("bandwidth_hz", ch.bandwidth_hz);
    ch.tx_psd = r.number("tx_psd_w_per_mhz", ch.tx_psd);
    ch.noise_psd = r.number("noise_psd_w_per_mhz", ch.noise_psd);
    ch.path_loss_exponent = r.number("path_loss_exponent", ch.path_loss_exponent);
    ch.slot_s = r.number("slot_s", ch.slot_s);
    ch.doppler_hz = r.number("doppler_hz", ch.doppler_hz);
    ch.num_states = static_cast<int>(r.integer("num_states", ch.num_states));
    r.finish();
}

void read_fading(const json& v, ScenarioConfig& c) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "iid") {
            c.fading = FadingProcess::iid();
        } else if (s == "gauss-markov" || s == "gauss_markov") {
            c.fading = FadingProcess{FadingProcess::Kind::gauss_markov, -1.0};   // resolved after channel is read
        } else {
            Reader::fail("fading", "expected \"iid\", \"gauss-markov\" or {\"correlation\": x}");
        }
        return;
    }
    Reader r(v, "fading");
    const double rho = r.number("correlation", 0.0);
    r.finish();
    if (!(rho >= 0.0 && rho < 1.0)) Reader::fail("fading.correlation", "must be in [0, 1)");
    c.fading = FadingProcess{FadingProcess::Kind::gauss_markov, rho};
}

void read_scheduler(const json& v, SchedulerPolicy& s) {
    if (v.is_string()) {
        try {
            s.kind = scheduler_kind_from_string(v.get<std::string>());
        } catch (const InvalidInput& e) {
            Reader::fail("scheduler", e.what());
        }
        return;
    }
    Reader r(v, "scheduler");
    try {
        s.kind = scheduler_kind_from_string(r.text("kind", to_string(s.kind)));
    } catch (const InvalidInput& e) {
        Reader::fail("scheduler.kind", e.what());
    }
    s.log_rule_b = r.number("log_rule_b", s.log_rule_b);
    if (const json* a = r.find("log_rule_a")) s.log_rule_a = number_list(*a, "scheduler.log_rule_a");
    s.log_rule_argmin = r.boolean("log_rule_argmin", s.log_rule_argmin);
    r.finish();
}

void read_costs(const json& v, ScenarioConfig& c) {
    Reader r(v, "costs");
    const std::size_t n = c.users.size();
    c.costs = CostModel::uniform(n, 0.0, 1.0, 0.0);
    if (const json* e = r.find("eta_s")) c.costs.eta = cost_matrix(*e, "costs.eta_s", n);
    if (const json* p = r.find("phi_j")) c.costs.phi = cost_matrix(*p, "costs.phi_j", n);
    if (const json* w = r.find("weight")) c.costs.weights = cost_matrix(*w, "costs.weight", n);
    r.finish();
}

void read_stopping(const json& v, StoppingRule& s) {
    Reader r(v, "stopping");
    s.relative_half_width = r.number("relative_half_width", s.relative_half_width);
    s.confidence = r.number("confidence", s.confidence);
    s.power_floor_w = r.number("power_floor_w", s.power_floor_w);
    s.min_batches = static_cast<int>(r.integer("min_batches", s.min_batches));
    s.initial_batch_arrivals = r.number("initial_batch_arrivals", s.initial_batch_arrivals);
    s.warmup_fraction = r.number("warmup_fraction", s.warmup_fraction);
    s.max_sim_time_s = r.number("max_sim_time_s", s.max_sim_time_s);
    r.finish();
}

void read_clusters(const json& v, ScenarioConfig& c) {
    if (v.is_array()) {
        for (std::size_t l = 0; l < v.size(); ++l) {
            const std::string where = "clusters[" + std::to_string(l) + "]";
            if (!v[l].is_array()) Reader::fail(where, "expected an array of user indices");
            std::vector<int> members;
            for (const auto& u : v[l]) {
                if (!u.is_number_integer()) Reader::fail(where, "expected an array of user indices");
                members.push_back(u.get<int>());
            }
            c.clusters.push_back(members);
        }
        return;
    }
    // Formation from positions: {"positions": [[x, y], ...], "comm_range_m": r, "num_heads": k}
    Reader r(v, "clusters");
    const json* pos = r.find("positions");
    if (!pos || !pos->is_array() || pos->size() != c.users.size()) {
        Reader::fail("clusters.positions", "expected one [x, y] pair per user");
    }
    std::vector<Position> positions;
    for (std::size_t i = 0; i < pos->size(); ++i) {
        const auto xy = number_list((*pos)[i], "clusters.positions[" + std::to_string(i) + "]");
        if (xy.size() != 2) Reader::fail("clusters.positions[" + std::to_string(i) + "]", "expected [x, y]");
        positions.push_back({xy[0], xy[1]});
    }
    const double range = r.number("comm_range_m", 0.0);
    const long heads = r.integer("num_heads", 1);
    if (heads < 1) Reader::fail("clusters.num_heads", "must be >= 1");
    r.finish();
    try {
        c.clusters = form_clusters(positions, range, static_cast<std::size_t>(heads)).clusters;
    } catch (const InvalidInput& e) {
        Reader::fail("clusters", e.what());
    }
}

void read_verify(const json& v, VerifySettings& s) {
    Reader r(v, "verify");
    if (const json* o = r.find("on_off")) {
        Reader on(*o, "verify.on_off");
        s.on_off = true;
        s.p_on = on.number("p_on", s.p_on);
        if (!(s.p_on > 0.0 && s.p_on <= 1.0)) Reader::fail("verify.on_off.p_on", "must be in (0, 1]");
        on.finish();
    }
    s.truncation = static_cast<int>(r.integer("truncation", s.truncation));
    if (s.truncation < 2) Reader::fail("verify.truncation", "must be >= 2");
    const long states = r.integer("states", static_cast<long>(s.states));
    const long samples = r.integer("samples", static_cast<long>(s.samples));
    if (states < 1 || samples < 1) Reader::fail("verify", "states and samples must be >= 1");
    s.states = static_cast<std::size_t>(states);
    s.samples = static_cast<std::size_t>(samples);
    s.seed = static_cast<std::uint64_t>(r.integer("seed", static_cast<long>(s.seed)));
    r.finish();
}

}  // namespace

AppConfig parse_config(const json& doc) {
    AppConfig app;
    ScenarioConfig& c = app.scenario;
    {
        Reader r(doc, "");
        const json* users = r.find("users");
        if (!users) Reader::fail("users", "required field missing");
        read_users(*users, c);
        if (const json* v = r.find("channel")) read_channel(*v, c.channel);
        if (const json* v = r.find("fading")) read_fading(*v, c);
        if (const json* v = r.find("scheduler")) read_scheduler(*v, c.scheduler);
        if (const json* v = r.find("dispatcher")) {
            if (!v->is_string()) Reader::fail("dispatcher", "expected a string");
            try {
                c.dispatcher = dispatcher_from_string(v->get<std::string>());
            } catch (const InvalidInput& e) {
                Reader::fail("dispatcher", e.what());
            }
        }
        if (const json* v = r.find("costs")) read_costs(*v, c);
        c.local_link_congested = r.boolean("local_link_congested", c.local_link_congested);
        const long seed = r.integer("seed", static_cast<long>(c.seed));
        if (seed < 0) Reader::fail("seed", "must be >= 0");
        c.seed = static_cast<std::uint64_t>(seed);
        if (const json* v = r.find("stopping")) read_stopping(*v, c.stopping);
        c.dp_truncation = static_cast<int>(r.integer("dp_truncation", c.dp_truncation));
        c.heuristic_truncation = static_cast<int>(r.integer("heuristic_truncation", c.heuristic_truncation));
        if (const json* v = r.find("clusters")) read_clusters(*v, c);
        if (const json* v = r.find("solver")) {
            Reader sr(*v, "solver");
            c.solver.tolerance = sr.number("tolerance", c.solver.tolerance);
            c.solver.max_iterations = sr.integer("max_iterations", c.solver.max_iterations);
            sr.finish();
        }
        c.alpha_window_slots = r.integer("alpha_window_slots", c.alpha_window_slots);
        c.alpha_check_slots = r.integer("alpha_check_slots", c.alpha_check_slots);
        c.alpha_hysteresis = r.number("alpha_hysteresis", c.alpha_hysteresis);
        c.instability_backlog = r.integer("instability_backlog", c.instability_backlog);
        c.instability_batches = static_cast<int>(r.integer("instability_batches", c.instability_batches));
        if (const json* v = r.find("weights")) app.weights = number_list(*v, "weights");
        if (const json* v = r.find("verify")) read_verify(*v, app.verify);
        r.finish();
    }
    if (c.fading.kind == FadingProcess::Kind::gauss_markov && c.fading.correlation < 0.0) {
        try {
            c.fading = FadingProcess::gauss_markov(c.channel);
        } catch (const InvalidInput& e) {
            Reader::fail("fading", e.what());
        }
    }
    try {
        c.validate();
    } catch (const InvalidInput& e) {
        // validate() messages already lead with the field name.
        throw ConfigError(e.what());
    }
    for (double w : app.weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) Reader::fail("weights", "entries must be finite and >= 0");
    }
    return app;
}

AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(doc);
}

json to_json(const SimReport& r) {
    json matrix = json::array();
    for (std::size_t a = 0; a < r.reroute_rate.size(); ++a) {
        json row = json::array();
        for (std::size_t b = 0; b < r.reroute_rate.size(); ++b) row.push_back(r.reroute_rate(a, b));
        matrix.push_back(row);
    }
    return json{
        {"mean_delay_s", r.mean_delay_s},
        {"delay_half_width_s", r.delay_half_width},
        {"rerouting_power_w", r.rerouting_power_w},
        {"power_half_width_w", r.power_half_width},
        {"reroute_rate_files_per_s", matrix},
        {"mean_total_queue", r.mean_total_queue},
        {"littles_law_delay_s", r.littles_law_delay_s},
        {"slots", r.slots},
        {"batches", r.batches},
        {"batch_length_s", r.batch_length_s},
        {"measured_time_s", r.measured_time_s},
        {"energy_j", r.energy_j},
        {"files_generated", r.files_generated},
        {"files_completed", r.files_completed},
        {"files_in_system", r.files_in_system},
        {"generated_by_owner", r.generated_by_owner},
        {"completed_by_owner", r.completed_by_owner},
        {"in_system_by_owner", r.in_system_by_owner},
        {"alpha", r.alpha},
        {"target_met", r.target_met},
    };
}

json to_json(const ScenarioConfig& c) {
    json users = json::array();
    for (const auto& u : c.users) {
        users.push_back({{"distance_m", u.distance_m}, {"arrival_rate", u.arrival_rate},
                         {"mean_file_bytes", u.mean_file_bytes}});
    }
    auto matrix = [](const Matrix& m) {
        json out = json::array();
        for (std::size_t a = 0; a < m.size(); ++a) {
            json row = json::array();
            for (std::size_t b = 0; b < m.size(); ++b) {
                if (std::isinf(m(a, b))) {
                    row.push_back("inf");
                } else {
                    row.push_back(m(a, b));
                }
            }
            out.push_back(row);
        }
        return out;
    };
    json doc{
        {"users", users},
        {"channel",
         {{"bandwidth_hz", c.channel.bandwidth_hz},
          {"tx_psd_w_per_mhz", c.channel.tx_psd},
          {"noise_psd_w_per_mhz", c.channel.noise_psd},
          {"path_loss_exponent", c.channel.path_loss_exponent},
          {"slot_s", c.channel.slot_s},
          {"doppler_hz", c.channel.doppler_hz},
          {"num_states", c.channel.num_states}}},
        {"scheduler",
         {{"kind", to_string(c.scheduler.kind)},
          {"log_rule_b", c.scheduler.log_rule_b},
          {"log_rule_argmin", c.scheduler.log_rule_argmin}}},
        {"dispatcher", to_string(c.dispatcher)},
        {"costs", {{"eta_s", matrix(c.costs.eta)}, {"phi_j", matrix(c.costs.phi)}, {"weight", matrix(c.costs.weights)}}},
        {"local_link_congested", c.local_link_congested},
        {"seed", c.seed},
        {"stopping",
         {{"relative_half_width", c.stopping.relative_half_width},
          {"confidence", c.stopping.confidence},
          {"power_floor_w", c.stopping.power_floor_w},
          {"min_batches", c.stopping.min_batches},
          {"initial_batch_arrivals", c.stopping.initial_batch_arrivals},
          {"warmup_fraction", c.stopping.warmup_fraction},
          {"max_sim_time_s", c.stopping.max_sim_time_s}}},
        {"dp_truncation", c.dp_truncation},
        {"heuristic_truncation", c.heuristic_truncation},
        {"solver", {{"tolerance", c.solver.tolerance}, {"max_iterations", c.solver.max_iterations}}},
        {"clusters", c.clusters},
    };
    if (!c.scheduler.log_rule_a.empty()) doc["scheduler"]["log_rule_a"] = c.scheduler.log_rule_a;
    if (c.fading.kind == FadingProcess::Kind::iid) {
        doc["fading"] = "iid";
    } else {
        doc["fading"] = {{"correlation", c.fading.correlation}};
    }
    return doc;
}

}  // namespace tspread::app
