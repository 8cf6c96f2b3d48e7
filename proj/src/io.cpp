#include "regretel/io.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

namespace regretel {

namespace {

std::string at(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string at(const std::string& path, size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

void expect_object(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ParseError(path, "expected an object");
}

void expect_array(const Json& j, const std::string& path, size_t size = SIZE_MAX) {
    if (!j.is_array()) throw ParseError(path, "expected an array");
    if (size != SIZE_MAX && j.size() != size)
        throw ParseError(path, "expected " + std::to_string(size) + " entries, got " +
                                   std::to_string(j.size()));
}

void only_keys(const Json& j, const std::string& path, std::initializer_list<const char*> keys) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok |= it.key() == k;
        if (!ok) throw ParseError(at(path, it.key()), "unknown field");
    }
}

const Json& need(const Json& j, const std::string& path, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw ParseError(at(path, key), "missing field");
    return *it;
}

double num(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ParseError(path, "expected a number");
    return j.get<double>();
}

// null stands for infinity where a limit may be absent.
double num_or_inf(const Json& j, const std::string& path) {
    if (j.is_null()) return std::numeric_limits<double>::infinity();
    return num(j, path);
}

Json inf_as_null(double x) { return std::isinf(x) ? Json(nullptr) : Json(x); }

long long integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
    return j.get<long long>();
}

int int32(const Json& j, const std::string& path) {
    const auto v = integer(j, path);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ParseError(path, "integer out of range");
    return static_cast<int>(v);
}

bool boolean(const Json& j, const std::string& path) {
    if (!j.is_boolean()) throw ParseError(path, "expected true or false");
    return j.get<bool>();
}

std::string text(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ParseError(path, "expected a string");
    return j.get<std::string>();
}

std::vector<double> numbers(const Json& j, const std::string& path, size_t size = SIZE_MAX) {
    expect_array(j, path, size);
    std::vector<double> out;
    out.reserve(j.size());
    for (size_t i = 0; i < j.size(); ++i) out.push_back(num(j[i], at(path, i)));
    return out;
}

template <class F>
void optional_field(const Json& j, const std::string& path, const char* key, F&& read) {
    const auto it = j.find(key);
    if (it != j.end()) read(*it, at(path, key));
}

// Runs a library constructor and re-labels its validation error with the path.
template <class F>
auto build(const std::string& path, F&& make) {
    try {
        return make();
    } catch (const ParseError&) {
        throw;
    } catch (const ModelError& e) {
        throw ParseError(path, e.what());
    } catch (const InconsistencyError& e) {
        throw ParseError(path, e.what());
    }
}

template <class E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> names,
             const char* what) {
    for (const auto& [name, value] : names)
        if (s == name) return value;
    std::string all;
    for (const auto& [name, value] : names) all += (all.empty() ? "" : ", ") + std::string(name);
    throw ModelError(std::string("unknown ") + what + " '" + s + "' (expected " + all + ")");
}

template <class E, class P>
E enum_field(const Json& j, const std::string& path, P parse) {
    const auto s = text(j, path);
    try {
        return parse(s);
    } catch (const ModelError& e) {
        throw ParseError(path, e.what());
    }
}

const char* method_name(ExactMethod m) {
    switch (m) {
    case ExactMethod::Auto: return "auto";
    case ExactMethod::Mip: return "mip";
    case ExactMethod::EndpointSearch: return "endpoint";
    }
    return "?";
}

ExactMethod parse_method(const std::string& s) {
    return parse_enum<ExactMethod>(
        s, {{"auto", ExactMethod::Auto}, {"mip", ExactMethod::Mip}, {"endpoint", ExactMethod::EndpointSearch}},
        "exact method");
}

SessionStatus parse_status(const std::string& s) {
    return parse_enum<SessionStatus>(s,
                                     {{"active", SessionStatus::Active},
                                      {"converged", SessionStatus::Converged},
                                      {"budget_exhausted", SessionStatus::BudgetExhausted},
                                      {"no_query", SessionStatus::NoQuery},
                                      {"stopped", SessionStatus::Stopped}},
                                     "session status");
}

char status_code(lp::VarStatus s) {
    switch (s) {
    case lp::VarStatus::Basic: return 'B';
    case lp::VarStatus::AtLower: return 'L';
    case lp::VarStatus::AtUpper: return 'U';
    case lp::VarStatus::Free: return 'F';
    }
    return '?';
}

Json basis_json(const lp::Basis& b) {
    std::string s;
    s.reserve(b.status.size());
    for (auto v : b.status) s += status_code(v);
    return s;
}

lp::Basis basis_from_json(const Json& j, const std::string& path) {
    lp::Basis b;
    for (char c : text(j, path)) {
        switch (c) {
        case 'B': b.status.push_back(lp::VarStatus::Basic); break;
        case 'L': b.status.push_back(lp::VarStatus::AtLower); break;
        case 'U': b.status.push_back(lp::VarStatus::AtUpper); break;
        case 'F': b.status.push_back(lp::VarStatus::Free); break;
        default: throw ParseError(path, std::string("bad basis status '") + c + "'");
        }
    }
    return b;
}

BoundQuery query_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"s", "a", "b", "epsilon"});
    BoundQuery q;
    q.s = int32(need(j, path, "s"), at(path, "s"));
    q.a = int32(need(j, path, "a"), at(path, "a"));
    q.b = num(need(j, path, "b"), at(path, "b"));
    optional_field(j, path, "epsilon", [&](const Json& v, const std::string& p) { q.epsilon = num(v, p); });
    return q;
}

MetricSnapshot snapshot_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    MetricSnapshot m;
    m.query_index = int32(need(j, path, "query_index"), at(path, "query_index"));
    m.mmr = num(need(j, path, "mmr"), at(path, "mmr"));
    m.mmr_lower = num(need(j, path, "mmr_lower"), at(path, "mmr_lower"));
    m.exact = boolean(need(j, path, "exact"), at(path, "exact"));
    m.maximin_value = num(need(j, path, "maximin_value"), at(path, "maximin_value"));
    optional_field(j, path, "true_regret",
                   [&](const Json& v, const std::string& p) { m.true_regret = num(v, p); });
    m.chi = num(need(j, path, "chi"), at(path, "chi"));
    m.distinct_pairs = int32(need(j, path, "distinct_pairs"), at(path, "distinct_pairs"));
    m.elapsed_ms = num(need(j, path, "elapsed_ms"), at(path, "elapsed_ms"));
    return m;
}

WitnessConstraint witness_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    WitnessConstraint w;
    w.r = numbers(need(j, path, "r"), at(path, "r"));
    w.value = num(need(j, path, "value"), at(path, "value"));
    optional_field(j, path, "g", [&](const Json& v, const std::string& p) { w.g = numbers(v, p); });
    return w;
}

} // namespace

Json parse_json(const std::string& textv, const std::string& origin) {
    try {
        return Json::parse(textv);
    } catch (const Json::parse_error& e) {
        // Byte offset to line:column.
        size_t line = 1, col = 1;
        const size_t stop = std::min<size_t>(e.byte == 0 ? 0 : e.byte - 1, textv.size());
        for (size_t i = 0; i < stop; ++i) {
            if (textv[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(col),
                         "invalid JSON");
    }
}

Json read_json_file(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ModelError("cannot open " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str(), file);
}

void write_json_file(const std::string& file, const Json& j) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot write " + file);
    out << j.dump(2) << '\n';
    if (!out) throw ModelError("write failed: " + file);
}

Json to_json(const Mdp& mdp) {
    Json tr = Json::array();
    for (int s = 0; s < mdp.states(); ++s) {
        Json row = Json::array();
        for (int a = 0; a < mdp.actions(); ++a) {
            Json list = Json::array();
            for (const auto& t : mdp.successors(s, a)) list.push_back({t.state, t.prob});
            row.push_back(std::move(list));
        }
        tr.push_back(std::move(row));
    }
    return {{"n", mdp.states()},
            {"k", mdp.actions()},
            {"gamma", mdp.gamma()},
            {"alpha", mdp.initial()},
            {"transitions", std::move(tr)}};
}

Mdp mdp_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"n", "k", "gamma", "alpha", "transitions"});
    const int n = int32(need(j, path, "n"), at(path, "n"));
    const int k = int32(need(j, path, "k"), at(path, "k"));
    if (n < 1) throw ParseError(at(path, "n"), "must be at least 1");
    if (k < 1) throw ParseError(at(path, "k"), "must be at least 1");
    const double gamma = num(need(j, path, "gamma"), at(path, "gamma"));
    const auto alpha = numbers(need(j, path, "alpha"), at(path, "alpha"), n);
    const std::string tp = at(path, "transitions");
    const Json& tj = need(j, path, "transitions");
    expect_array(tj, tp, n);
    std::vector<std::vector<Transition>> tr(static_cast<size_t>(n) * k);
    for (int s = 0; s < n; ++s) {
        const std::string sp = at(tp, s);
        expect_array(tj[s], sp, k);
        for (int a = 0; a < k; ++a) {
            const std::string ap = at(sp, a);
            const Json& list = tj[s][a];
            expect_array(list, ap);
            double total = 0.0;
            for (size_t i = 0; i < list.size(); ++i) {
                const std::string ep = at(ap, i);
                expect_array(list[i], ep, 2);
                const int t = int32(list[i][0], at(ep, 0));
                const double p = num(list[i][1], at(ep, 1));
                if (t < 0 || t >= n) throw ParseError(at(ep, 0), "state index out of range");
                if (!(p >= 0.0)) throw ParseError(at(ep, 1), "probability must be nonnegative");
                total += p;
                tr[s * k + a].push_back({t, p});
            }
            if (std::abs(total - 1.0) > 1e-9)
                throw ParseError(ap, "probabilities sum to " + std::to_string(total) + ", not 1");
        }
    }
    return build(path, [&] { return Mdp(n, k, std::move(tr), gamma, alpha); });
}

Json matrix_json(const std::vector<double>& v, int n, int k) {
    Json m = Json::array();
    for (int s = 0; s < n; ++s)
        m.push_back(std::vector<double>(v.begin() + s * k, v.begin() + (s + 1) * k));
    return m;
}

std::vector<double> matrix_from_json(const Json& j, int n, int k, const std::string& path) {
    expect_array(j, path, n);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(n) * k);
    for (int s = 0; s < n; ++s) {
        const auto row = numbers(j[s], at(path, s), k);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

Json to_json(const RewardPolytope& R) {
    const int k = R.actions();
    Json cons = Json::array();
    for (const auto& c : R.constraints()) {
        Json terms = Json::array();
        for (const auto& t : c.terms) terms.push_back(Json::array({t.index / k, t.index % k, t.coeff}));
        cons.push_back({{"terms", std::move(terms)}, {"rhs", c.rhs}});
    }
    return {{"lo", matrix_json(R.lower(), R.states(), k)},
            {"hi", matrix_json(R.upper(), R.states(), k)},
            {"constraints", std::move(cons)}};
}

RewardPolytope polytope_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"lo", "hi", "constraints"});
    const Json& lj = need(j, path, "lo");
    expect_array(lj, at(path, "lo"));
    if (lj.empty()) throw ParseError(at(path, "lo"), "needs at least one state");
    expect_array(lj[0], at(at(path, "lo"), 0));
    const int n = static_cast<int>(lj.size());
    const int k = static_cast<int>(lj[0].size());
    if (k == 0) throw ParseError(at(at(path, "lo"), 0), "needs at least one action");
    auto lo = matrix_from_json(lj, n, k, at(path, "lo"));
    auto hi = matrix_from_json(need(j, path, "hi"), n, k, at(path, "hi"));
    for (int i = 0; i < n * k; ++i)
        if (!(lo[i] <= hi[i]))
            throw ParseError(at(at(path, "lo"), i / k) + "[" + std::to_string(i % k) + "]",
                             "lower bound exceeds upper bound");
    std::vector<LinearConstraint> cons;
    optional_field(j, path, "constraints", [&](const Json& cj, const std::string& cp) {
        expect_array(cj, cp);
        for (size_t c = 0; c < cj.size(); ++c) {
            const std::string p = at(cp, c);
            expect_object(cj[c], p);
            only_keys(cj[c], p, {"terms", "rhs"});
            LinearConstraint lc;
            const Json& tj = need(cj[c], p, "terms");
            expect_array(tj, at(p, "terms"));
            for (size_t t = 0; t < tj.size(); ++t) {
                const std::string tp = at(at(p, "terms"), t);
                expect_array(tj[t], tp, 3);
                const int s = int32(tj[t][0], at(tp, 0));
                const int a = int32(tj[t][1], at(tp, 1));
                if (s < 0 || s >= n) throw ParseError(at(tp, 0), "state index out of range");
                if (a < 0 || a >= k) throw ParseError(at(tp, 1), "action index out of range");
                lc.terms.push_back({s * k + a, num(tj[t][2], at(tp, 2))});
            }
            lc.rhs = num(need(cj[c], p, "rhs"), at(p, "rhs"));
            cons.push_back(std::move(lc));
        }
    });
    return build(path, [&] { return RewardPolytope(n, k, std::move(lo), std::move(hi), std::move(cons)); });
}

Json to_json(const Instance& inst) {
    Json j = {{"mdp", to_json(inst.mdp)}, {"polytope", to_json(inst.polytope)}};
    if (!inst.r_true.empty())
        j["r_true"] = matrix_json(inst.r_true, inst.mdp.states(), inst.mdp.actions());
    return j;
}

Instance instance_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"mdp", "polytope", "r_true"});
    auto mdp = mdp_from_json(need(j, path, "mdp"), at(path, "mdp"));
    auto R = polytope_from_json(need(j, path, "polytope"), at(path, "polytope"));
    if (R.states() != mdp.states() || R.actions() != mdp.actions())
        throw ParseError(at(path, "polytope"), "dimensions do not match the MDP");
    RewardVector r;
    optional_field(j, path, "r_true", [&](const Json& v, const std::string& p) {
        r = matrix_from_json(v, mdp.states(), mdp.actions(), p);
        if (!R.contains(r, 1e-9)) throw ParseError(p, "lies outside the polytope");
    });
    return {std::move(mdp), std::move(R), std::move(r)};
}

Json to_json(const RandomMdpSpec& s) {
    return {{"n", s.n},         {"k", s.k},         {"seed", s.seed},  {"rmin", s.rmin},
            {"rmax", s.rmax},   {"width", s.width}, {"gamma", s.gamma}};
}

RandomMdpSpec random_spec_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"n", "k", "seed", "rmin", "rmax", "width", "gamma"});
    RandomMdpSpec s;
    optional_field(j, path, "n", [&](const Json& v, const std::string& p) { s.n = int32(v, p); });
    optional_field(j, path, "k", [&](const Json& v, const std::string& p) { s.k = int32(v, p); });
    optional_field(j, path, "seed", [&](const Json& v, const std::string& p) {
        if (!v.is_number_unsigned()) throw ParseError(p, "expected a nonnegative integer");
        s.seed = v.get<std::uint64_t>();
    });
    optional_field(j, path, "rmin", [&](const Json& v, const std::string& p) { s.rmin = num(v, p); });
    optional_field(j, path, "rmax", [&](const Json& v, const std::string& p) { s.rmax = num(v, p); });
    optional_field(j, path, "width", [&](const Json& v, const std::string& p) { s.width = num(v, p); });
    optional_field(j, path, "gamma", [&](const Json& v, const std::string& p) { s.gamma = num(v, p); });
    build(path, [&] {
        s.validate();
        return 0;
    });
    return s;
}

Json to_json(const AutonomicSpec& s) {
    return {{"servers", s.servers},
            {"units", s.units},
            {"demand_levels", s.demand_levels},
            {"demand_chain", s.demand_chain},
            {"kappa", s.kappa},
            {"utility_lo", s.utility_lo},
            {"utility_hi", s.utility_hi},
            {"monotone", s.monotone},
            {"seed", s.seed},
            {"gamma", s.gamma}};
}

AutonomicSpec autonomic_spec_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"servers", "units", "demand_levels", "demand_chain", "kappa", "utility_lo",
                        "utility_hi", "monotone", "seed", "gamma"});
    AutonomicSpec s;
    const auto table = [](const Json& v, const std::string& p) {
        expect_array(v, p);
        std::vector<std::vector<double>> t;
        for (size_t i = 0; i < v.size(); ++i) t.push_back(numbers(v[i], at(p, i)));
        return t;
    };
    optional_field(j, path, "servers", [&](const Json& v, const std::string& p) { s.servers = int32(v, p); });
    optional_field(j, path, "units", [&](const Json& v, const std::string& p) { s.units = int32(v, p); });
    optional_field(j, path, "demand_levels",
                   [&](const Json& v, const std::string& p) { s.demand_levels = int32(v, p); });
    optional_field(j, path, "demand_chain",
                   [&](const Json& v, const std::string& p) { s.demand_chain = table(v, p); });
    optional_field(j, path, "kappa", [&](const Json& v, const std::string& p) { s.kappa = num(v, p); });
    optional_field(j, path, "utility_lo",
                   [&](const Json& v, const std::string& p) { s.utility_lo = table(v, p); });
    optional_field(j, path, "utility_hi",
                   [&](const Json& v, const std::string& p) { s.utility_hi = table(v, p); });
    optional_field(j, path, "monotone", [&](const Json& v, const std::string& p) { s.monotone = boolean(v, p); });
    optional_field(j, path, "seed", [&](const Json& v, const std::string& p) {
        if (!v.is_number_unsigned()) throw ParseError(p, "expected a nonnegative integer");
        s.seed = v.get<std::uint64_t>();
    });
    optional_field(j, path, "gamma", [&](const Json& v, const std::string& p) { s.gamma = num(v, p); });
    build(path, [&] {
        s.validate();
        return 0;
    });
    return s;
}

SubproblemMode parse_mode(const std::string& s) {
    return parse_enum<SubproblemMode>(s,
                                      {{"exact", SubproblemMode::Exact},
                                       {"relaxed", SubproblemMode::Relaxed},
                                       {"alternating", SubproblemMode::Alternating}},
                                      "mode");
}

Criterion parse_criterion(const std::string& s) {
    return parse_enum<Criterion>(
        s, {{"mmr", Criterion::MinimaxRegret}, {"maximin", Criterion::Maximin}}, "criterion");
}

Strategy parse_strategy(const std::string& s) {
    return parse_enum<Strategy>(s, {{"hlg", Strategy::HLG}, {"cs", Strategy::CS}}, "strategy");
}

QueryResponse parse_response(const std::string& s) {
    return parse_enum<QueryResponse>(
        s, {{"yes", QueryResponse::Yes}, {"no", QueryResponse::No}, {"unsure", QueryResponse::Unsure}},
        "response");
}

Json to_json(const RegretOptions& o) {
    return {{"tolerance", o.tolerance},
            {"max_iterations", o.max_iterations},
            {"time_limit_ms", inf_as_null(o.time_limit_ms)},
            {"alternating_rounds", o.alternating_rounds},
            {"relaxed_polish_rounds", o.relaxed_polish_rounds},
            {"cuts_per_iteration", o.cuts_per_iteration},
            {"exact_method", method_name(o.exact.method)},
            {"node_limit", o.exact.node_limit}};
}

RegretOptions regret_options_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"tolerance", "max_iterations", "time_limit_ms", "alternating_rounds",
                        "relaxed_polish_rounds", "cuts_per_iteration", "exact_method", "node_limit"});
    RegretOptions o;
    optional_field(j, path, "tolerance", [&](const Json& v, const std::string& p) { o.tolerance = num(v, p); });
    optional_field(j, path, "max_iterations",
                   [&](const Json& v, const std::string& p) { o.max_iterations = int32(v, p); });
    optional_field(j, path, "time_limit_ms",
                   [&](const Json& v, const std::string& p) { o.time_limit_ms = num_or_inf(v, p); });
    optional_field(j, path, "alternating_rounds",
                   [&](const Json& v, const std::string& p) { o.alternating_rounds = int32(v, p); });
    optional_field(j, path, "relaxed_polish_rounds",
                   [&](const Json& v, const std::string& p) { o.relaxed_polish_rounds = int32(v, p); });
    optional_field(j, path, "cuts_per_iteration",
                   [&](const Json& v, const std::string& p) { o.cuts_per_iteration = int32(v, p); });
    optional_field(j, path, "exact_method", [&](const Json& v, const std::string& p) {
        o.exact.method = enum_field<ExactMethod>(v, p, parse_method);
    });
    optional_field(j, path, "node_limit",
                   [&](const Json& v, const std::string& p) { o.exact.node_limit = integer(v, p); });
    return o;
}

Json to_json(const ElicitationConfig& c) {
    return {{"criterion", c.criterion == Criterion::MinimaxRegret ? "mmr" : "maximin"},
            {"strategy", c.strategy == Strategy::HLG ? "hlg" : "cs"},
            {"mode", to_string(c.mode)},
            {"tau", c.tau},
            {"budget", c.budget},
            {"stride", c.stride},
            {"certify_stride", c.certify_stride},
            {"certify_node_limit", c.certify_node_limit},
            {"unsure_epsilon", c.unsure_epsilon},
            {"cut_pool", c.cut_pool},
            {"regret", to_json(c.regret)}};
}

ElicitationConfig config_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    only_keys(j, path, {"criterion", "strategy", "mode", "tau", "budget", "stride", "certify_stride",
                        "certify_node_limit", "unsure_epsilon", "cut_pool", "regret"});
    ElicitationConfig c;
    optional_field(j, path, "criterion", [&](const Json& v, const std::string& p) {
        c.criterion = enum_field<Criterion>(v, p, parse_criterion);
    });
    optional_field(j, path, "strategy", [&](const Json& v, const std::string& p) {
        c.strategy = enum_field<Strategy>(v, p, parse_strategy);
    });
    optional_field(j, path, "mode", [&](const Json& v, const std::string& p) {
        c.mode = enum_field<SubproblemMode>(v, p, parse_mode);
    });
    optional_field(j, path, "tau", [&](const Json& v, const std::string& p) { c.tau = num(v, p); });
    optional_field(j, path, "budget", [&](const Json& v, const std::string& p) { c.budget = int32(v, p); });
    optional_field(j, path, "stride", [&](const Json& v, const std::string& p) { c.stride = int32(v, p); });
    optional_field(j, path, "certify_stride",
                   [&](const Json& v, const std::string& p) { c.certify_stride = int32(v, p); });
    optional_field(j, path, "certify_node_limit",
                   [&](const Json& v, const std::string& p) { c.certify_node_limit = integer(v, p); });
    optional_field(j, path, "unsure_epsilon",
                   [&](const Json& v, const std::string& p) { c.unsure_epsilon = num(v, p); });
    optional_field(j, path, "cut_pool", [&](const Json& v, const std::string& p) { c.cut_pool = int32(v, p); });
    optional_field(j, path, "regret",
                   [&](const Json& v, const std::string& p) { c.regret = regret_options_from_json(v, p); });
    build(path, [&] {
        c.validate();
        return 0;
    });
    return c;
}

Json to_json(const BoundQuery& q) {
    return {{"s", q.s}, {"a", q.a}, {"b", q.b}, {"epsilon", q.epsilon}};
}

Json to_json(const MetricSnapshot& m, bool include_truth) {
    Json j = {{"query_index", m.query_index},
              {"mmr", m.mmr},
              {"mmr_lower", m.mmr_lower},
              {"exact", m.exact},
              {"maximin_value", m.maximin_value},
              {"chi", m.chi},
              {"distinct_pairs", m.distinct_pairs},
              {"elapsed_ms", m.elapsed_ms}};
    if (include_truth && m.true_regret) j["true_regret"] = *m.true_regret;
    return j;
}

Json to_json(const WitnessConstraint& w) {
    Json j = {{"r", w.r}, {"value", w.value}};
    if (!w.g.empty()) j["g"] = w.g;
    return j;
}

Json to_json(const ElicitationSession::State& st) {
    Json log = Json::array();
    for (const auto& rec : st.log)
        log.push_back({{"query", to_json(rec.query)}, {"response", to_string(rec.response)}});
    Json trace = Json::array();
    for (const auto& m : st.trace) trace.push_back(to_json(m));
    Json cuts = Json::array();
    for (const auto& w : st.cuts) cuts.push_back(to_json(w));
    Json j = {{"config", to_json(st.config)},
              {"initial", to_json(st.initial)},
              {"current", to_json(st.current)},
              {"tau", st.tau},
              {"budget", st.budget},
              {"unsure_epsilon", st.unsure_epsilon},
              {"log", std::move(log)},
              {"trace", std::move(trace)},
              {"pending", st.pending ? to_json(*st.pending) : Json(nullptr)},
              {"status", to_string(st.status)},
              {"policy", st.policy},
              {"witness_occupancy", st.witness_occupancy},
              {"witness_reward", st.witness_reward},
              {"asked", st.asked},
              {"fallbacks", st.fallbacks},
              {"solved_at", st.solved_at},
              {"compute_ms", st.compute_ms},
              {"relaxed_basis", basis_json(st.relaxed_basis)},
              {"cuts", std::move(cuts)}};
    if (st.user)
        j["user"] = {{"r_true", st.user->r_true},
                     {"actions", st.user->actions},
                     {"epsilon", st.user->epsilon}};
    return j;
}

ElicitationSession::State state_from_json(const Json& j, const std::string& path) {
    expect_object(j, path);
    ElicitationSession::State st(config_from_json(need(j, path, "config"), at(path, "config")),
                                 polytope_from_json(need(j, path, "initial"), at(path, "initial")));
    st.current = polytope_from_json(need(j, path, "current"), at(path, "current"));
    optional_field(j, path, "user", [&](const Json& v, const std::string& p) {
        expect_object(v, p);
        SimulatedUser u;
        u.r_true = numbers(need(v, p, "r_true"), at(p, "r_true"));
        u.actions = int32(need(v, p, "actions"), at(p, "actions"));
        u.epsilon = num(need(v, p, "epsilon"), at(p, "epsilon"));
        st.user = std::move(u);
    });
    st.tau = num(need(j, path, "tau"), at(path, "tau"));
    st.budget = int32(need(j, path, "budget"), at(path, "budget"));
    st.unsure_epsilon = num(need(j, path, "unsure_epsilon"), at(path, "unsure_epsilon"));

    const std::string lp = at(path, "log");
    const Json& lj = need(j, path, "log");
    expect_array(lj, lp);
    for (size_t i = 0; i < lj.size(); ++i) {
        const std::string p = at(lp, i);
        expect_object(lj[i], p);
        QueryRecord rec;
        rec.query = query_from_json(need(lj[i], p, "query"), at(p, "query"));
        rec.response = enum_field<QueryResponse>(need(lj[i], p, "response"), at(p, "response"),
                                                 parse_response);
        st.log.push_back(rec);
    }
    const std::string tp = at(path, "trace");
    const Json& tj = need(j, path, "trace");
    expect_array(tj, tp);
    for (size_t i = 0; i < tj.size(); ++i) st.trace.push_back(snapshot_from_json(tj[i], at(tp, i)));

    const Json& pj = need(j, path, "pending");
    if (!pj.is_null()) st.pending = query_from_json(pj, at(path, "pending"));
    st.status = enum_field<SessionStatus>(need(j, path, "status"), at(path, "status"), parse_status);
    st.policy = numbers(need(j, path, "policy"), at(path, "policy"));
    st.witness_occupancy = numbers(need(j, path, "witness_occupancy"), at(path, "witness_occupancy"));
    st.witness_reward = numbers(need(j, path, "witness_reward"), at(path, "witness_reward"));
    {
        const std::string p = at(path, "asked");
        const Json& aj = need(j, path, "asked");
        expect_array(aj, p);
        for (size_t i = 0; i < aj.size(); ++i) st.asked.push_back(int32(aj[i], at(p, i)));
    }
    st.fallbacks = int32(need(j, path, "fallbacks"), at(path, "fallbacks"));
    st.solved_at = int32(need(j, path, "solved_at"), at(path, "solved_at"));
    st.compute_ms = num(need(j, path, "compute_ms"), at(path, "compute_ms"));
    st.relaxed_basis = basis_from_json(need(j, path, "relaxed_basis"), at(path, "relaxed_basis"));
    {
        const std::string p = at(path, "cuts");
        const Json& cj = need(j, path, "cuts");
        expect_array(cj, p);
        for (size_t i = 0; i < cj.size(); ++i) st.cuts.push_back(witness_from_json(cj[i], at(p, i)));
    }
    return st;
}

} // namespace regretel
