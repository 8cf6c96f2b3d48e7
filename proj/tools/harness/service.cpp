#include "regretel/harness.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <algorithm>
#include <filesystem>
#include <iostream>

namespace regretel {

namespace {

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Json error_body(const std::string& msg) { return {{"error", msg}}; }

std::pair<int, Json> not_found(const std::string& id) {
    return {404, error_body("no session '" + id + "'")};
}

Json policy_matrix(const Mdp& mdp, const Occupancy& f) {
    const auto pi = policy_of_occupancy(mdp, f);
    return matrix_json(pi.prob, mdp.states(), mdp.actions());
}

} // namespace

Json session_view(const std::string& id, const ElicitationSession& s, bool simulated) {
    const auto& st = s.state();
    const auto& mdp = s.mdp();
    const int n = mdp.states(), k = mdp.actions();
    Json trace = Json::array();
    for (const auto& m : st.trace) trace.push_back(to_json(m, simulated));
    std::vector<double> asked(st.asked.begin(), st.asked.end());
    Json actions = Json::array();
    const auto pi = policy_of_occupancy(mdp, st.policy);
    for (int x = 0; x < n; ++x) actions.push_back(pi.action(x));
    return {{"id", id},
            {"mode", simulated ? "simulated" : "human"},
            {"status", to_string(s.status())},
            {"active", s.active()},
            {"certified", s.certified()},
            {"criterion", st.config.criterion == Criterion::MinimaxRegret ? "mmr" : "maximin"},
            {"strategy", st.config.strategy == Strategy::HLG ? "hlg" : "cs"},
            {"solver_mode", to_string(st.config.mode)},
            {"n", n},
            {"k", k},
            {"query", st.pending ? to_json(*st.pending) : Json(nullptr)},
            {"lo", matrix_json(st.current.lower(), n, k)},
            {"hi", matrix_json(st.current.upper(), n, k)},
            {"initial_lo", matrix_json(st.initial.lower(), n, k)},
            {"initial_hi", matrix_json(st.initial.upper(), n, k)},
            {"asked", matrix_json(asked, n, k)},
            {"trace", std::move(trace)},
            {"policy", policy_matrix(mdp, st.policy)},
            {"policy_actions", std::move(actions)},
            {"queries", st.log.size()},
            {"distinct_pairs", s.distinct_pairs()},
            {"mmr", st.trace.back().mmr},
            {"tau", st.tau},
            {"budget", st.budget}};
}

SessionService::SessionService(std::string state_dir, std::string static_dir)
    : state_dir_(std::move(state_dir)), static_dir_(std::move(static_dir)),
      server_(std::make_unique<httplib::Server>()) {
    if (!state_dir_.empty()) {
        std::filesystem::create_directories(state_dir_);
        load_all();
    }
    routes();
}

SessionService::~SessionService() { stop(); }

bool SessionService::listen(const std::string& host, int port) { return server_->listen(host, port); }

int SessionService::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }

bool SessionService::listen_after_bind() { return server_->listen_after_bind(); }

void SessionService::stop() {
    if (server_) server_->stop();
}

bool SessionService::running() const { return server_->is_running(); }

size_t SessionService::size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

Json SessionService::view_of(const Entry& e) const {
    auto v = session_view(e.id, e.session, e.simulated);
    v["created"] = e.created;
    v["updated"] = e.updated;
    return v;
}

void SessionService::persist(const Entry& e) const {
    if (state_dir_.empty()) return;
    const Json doc = {{"id", e.id},
                      {"simulated", e.simulated},
                      {"created", e.created},
                      {"updated", e.updated},
                      {"mdp", to_json(e.session.mdp())},
                      {"state", to_json(e.session.state())}};
    // Write then rename so a crash never leaves half a snapshot.
    const auto final_path = std::filesystem::path(state_dir_) / (e.id + ".json");
    const auto tmp = final_path.string() + ".tmp";
    write_json_file(tmp, doc);
    std::filesystem::rename(tmp, final_path);
}

void SessionService::load_all() {
    for (const auto& file : std::filesystem::directory_iterator(state_dir_)) {
        if (file.path().extension() != ".json") continue;
        try {
            const auto doc = read_json_file(file.path().string());
            auto mdp = mdp_from_json(doc.at("mdp"), "mdp");
            auto st = state_from_json(doc.at("state"), "state");
            const std::string id = doc.at("id").get<std::string>();
            auto e = std::make_shared<Entry>(id, doc.at("simulated").get<bool>(),
                                             doc.at("created").get<std::string>(),
                                             doc.at("updated").get<std::string>(),
                                             ElicitationSession(std::move(mdp), std::move(st)));
            if (e->simulated != e->session.simulated())
                throw ModelError("simulated flag disagrees with the stored state");
            sessions_[id] = std::move(e);
            if (id.size() > 1 && id[0] == 's') {
                try {
                    next_id_ = std::max(next_id_, std::stoul(id.substr(1)) + 1);
                } catch (const std::exception&) {
                }
            }
        } catch (const std::exception& ex) {
            std::cerr << "skipping " << file.path().string() << ": " << ex.what() << '\n';
        }
    }
}

std::pair<int, Json> SessionService::create(const Json& body) {
    try {
        if (!body.is_object()) throw ParseError("body", "expected an object");
        int sources = 0;
        for (const char* key : {"random", "autonomic", "instance"}) sources += body.contains(key);
        if (sources != 1)
            throw ParseError("body", "give exactly one of random, autonomic or instance");

        Instance inst = body.contains("random")     ? gen_random(random_spec_from_json(body["random"], "body.random"))
                        : body.contains("autonomic") ? gen_autonomic(autonomic_spec_from_json(body["autonomic"], "body.autonomic"))
                                                     : instance_from_json(body["instance"], "body.instance");

        Json cfg_json = body.value("config", Json::object());
        for (const char* key : {"criterion", "strategy", "mode", "budget", "tau"})
            if (body.contains(key)) {
                if (cfg_json.contains(key))
                    throw ParseError(std::string("body.") + key, "also given inside config");
                cfg_json[key] = body[key];
            }
        for (auto it = body.begin(); it != body.end(); ++it) {
            static const char* known[] = {"random",   "autonomic", "instance", "config",
                                          "criterion", "strategy", "mode",     "budget",
                                          "tau",       "simulated", "user_epsilon"};
            if (std::find_if(std::begin(known), std::end(known),
                             [&](const char* k) { return it.key() == k; }) == std::end(known))
                throw ParseError("body." + it.key(), "unknown field");
        }
        const auto cfg = config_from_json(cfg_json, "body.config");

        bool simulated = !inst.r_true.empty();
        if (body.contains("simulated")) {
            if (!body["simulated"].is_boolean()) throw ParseError("body.simulated", "expected true or false");
            simulated = body["simulated"].get<bool>();
        }
        if (simulated && inst.r_true.empty())
            throw ParseError("body.simulated", "simulated sessions need r_true");
        double eps = 0.0;
        if (body.contains("user_epsilon")) {
            if (!body["user_epsilon"].is_number()) throw ParseError("body.user_epsilon", "expected a number");
            eps = body["user_epsilon"].get<double>();
        }
        std::optional<SimulatedUser> user;
        if (simulated) user = SimulatedUser{inst.r_true, inst.mdp.actions(), eps};

        ElicitationSession session(std::move(inst.mdp), std::move(inst.polytope), cfg, std::move(user));
        std::string id;
        {
            std::lock_guard lock(mu_);
            id = "s" + std::to_string(next_id_++);
        }
        const auto stamp = now_utc();
        auto e = std::make_shared<Entry>(id, simulated, stamp, stamp, std::move(session));
        std::lock_guard elock(e->mu);
        persist(*e);
        {
            std::lock_guard lock(mu_);
            sessions_[id] = e;
        }
        auto v = view_of(*e);
        v["baseline"] = v["trace"][0];
        return {201, std::move(v)};
    } catch (const ModelError& ex) {
        return {422, error_body(ex.what())};
    } catch (const InconsistencyError& ex) {
        return {422, error_body(ex.what())};
    }
}

std::pair<int, Json> SessionService::view(const std::string& id) {
    const auto e = find(id);
    if (!e) return not_found(id);
    std::lock_guard lock(e->mu);
    return {200, view_of(*e)};
}

std::pair<int, Json> SessionService::answer(const std::string& id, const Json& body) {
    const auto e = find(id);
    if (!e) return not_found(id);
    if (!body.is_object() || !body.contains("response") || !body["response"].is_string())
        return {422, error_body("body.response: expected \"yes\", \"no\", \"unsure\" or \"auto\"")};
    for (auto it = body.begin(); it != body.end(); ++it)
        if (it.key() != "response") return {422, error_body("body." + it.key() + ": unknown field")};
    const auto text = body["response"].get<std::string>();
    std::lock_guard lock(e->mu);
    if (!e->session.active()) return {409, error_body("session has terminated")};
    try {
        if (text == "auto") {
            if (!e->simulated) return {422, error_body("body.response: \"auto\" needs a simulated session")};
            e->session.answer_simulated();
        } else {
            e->session.answer(parse_response(text));
        }
    } catch (const SessionClosed& ex) {
        return {409, error_body(ex.what())};
    } catch (const ModelError& ex) {
        return {422, error_body(std::string("body.response: ") + ex.what())};
    } catch (const InconsistencyError& ex) {
        return {422, error_body(ex.what())};
    }
    e->updated = now_utc();
    persist(*e);
    return {200, view_of(*e)};
}

std::pair<int, Json> SessionService::stop_session(const std::string& id) {
    const auto e = find(id);
    if (!e) return not_found(id);
    std::lock_guard lock(e->mu);
    if (e->session.active()) {
        e->session.stop();
        e->updated = now_utc();
        persist(*e);
    }
    return {200, view_of(*e)};
}

std::pair<int, Json> SessionService::remove(const std::string& id) {
    std::shared_ptr<Entry> e;
    {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) return not_found(id);
        e = std::move(it->second);
        sessions_.erase(it);
    }
    std::lock_guard lock(e->mu);
    if (!state_dir_.empty()) std::filesystem::remove(std::filesystem::path(state_dir_) / (id + ".json"));
    return {200, {{"deleted", id}}};
}

void SessionService::routes() {
    auto& srv = *server_;
    const auto reply = [](httplib::Response& res, const std::pair<int, Json>& out) {
        res.status = out.first;
        res.set_content(out.second.dump(), "application/json");
    };
    const auto body_of = [](const httplib::Request& req) -> std::optional<Json> {
        try {
            return Json::parse(req.body.empty() ? std::string("{}") : req.body);
        } catch (const Json::parse_error&) {
            return std::nullopt;
        }
    };
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    srv.Post("/api/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
        const auto body = body_of(req);
        if (!body) return reply(res, {422, error_body("body: invalid JSON")});
        reply(res, create(*body));
    });
    srv.Get(R"(/api/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, view(req.matches[1]));
    });
    srv.Post(R"(/api/sessions/([^/]+)/answer)",
             [=, this](const httplib::Request& req, httplib::Response& res) {
                 const std::string id = req.matches[1];
                 if (!find(id)) return reply(res, not_found(id));
                 const auto body = body_of(req);
                 if (!body) return reply(res, {422, error_body("body: invalid JSON")});
                 reply(res, answer(id, *body));
             });
    srv.Post(R"(/api/sessions/([^/]+)/stop)", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, stop_session(req.matches[1]));
    });
    srv.Delete(R"(/api/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        reply(res, remove(req.matches[1]));
    });
    if (!static_dir_.empty() && !srv.set_mount_point("/", static_dir_))
        throw ModelError("static directory not found: " + static_dir_);
}

} // namespace regretel
