#include "doctest.h"

#include "regretel/harness.hpp"
#include "test_util.hpp"

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace regretel;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

// Service on an ephemeral port, stopped on scope exit.
struct Running {
    SessionService service;
    std::thread thread;
    int port = -1;

    explicit Running(std::string state_dir = {}) : service(std::move(state_dir)) {
        port = service.bind_any("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { service.listen_after_bind(); });
        for (int i = 0; i < 200 && !service.running(); ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ~Running() {
        service.stop();
        thread.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

Json body_of(const httplib::Result& r) {
    REQUIRE(r);
    return Json::parse(r->body);
}

httplib::Result post(httplib::Client& c, const std::string& path, const Json& j) {
    return c.Post(path, j.dump(), "application/json");
}

// The same stochastic-looking history must come out whichever way a run is
// driven; timings are the only fields allowed to differ.
Json strip_timing(Json st) {
    st.erase("compute_ms");
    for (auto& m : st["trace"]) m.erase("elapsed_ms");
    return st;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
    args.insert(args.begin(), "regretel");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

std::string slurp(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json unit_box_instance() {
    // One state, two self-loop actions, rewards in [0,1]: MMR = 10 at gamma 0.95.
    const Mdp mdp(1, 2, {{{0, 1.0}}, {{0, 1.0}}}, 0.95, {1.0});
    const RewardPolytope R(1, 2, {0, 0}, {1, 1});
    return to_json(Instance{mdp, R, {}});
}

} // namespace

TEST_CASE("service: simulated session replays run_elicitation exactly") {
    TempDir dir("regretel_test_replay");
    Running srv(dir.path.string());
    auto c = srv.client();
    const Json create = {{"random", {{"n", 4}, {"k", 3}, {"seed", 5}}}, {"budget", 30}};
    auto res = post(c, "/api/sessions", create);
    REQUIRE(res->status == 201);
    const auto view = body_of(res);
    const std::string id = view["id"];
    CHECK(view["mode"] == "simulated");
    CHECK(view["baseline"] == view["trace"][0]);
    CHECK(view["baseline"].contains("true_regret"));
    CHECK(view["query"].is_object());

    const auto inst = gen_random({.n = 4, .k = 3, .seed = 5});
    ElicitationConfig cfg;
    cfg.budget = 30;
    ElicitationSession local(inst.mdp, inst.polytope, cfg, SimulatedUser{inst.r_true, 3, 0.0});
    std::vector<QueryResponse> answers;
    run_elicitation(local, [&](const BoundQuery& q) -> std::optional<QueryResponse> {
        answers.push_back(simulate_response(SimulatedUser{inst.r_true, 3, 0.0}, q));
        return answers.back();
    });

    // Drive the service with explicit answers, checking each posted query.
    Json last;
    for (size_t i = 0; i < answers.size(); ++i) {
        const auto q = body_of(c.Get("/api/sessions/" + id))["query"];
        CHECK(q["s"] == local.log()[i].query.s);
        CHECK(q["a"] == local.log()[i].query.a);
        CHECK(q["b"].get<double>() == local.log()[i].query.b);
        res = post(c, "/api/sessions/" + id + "/answer", {{"response", to_string(answers[i])}});
        REQUIRE(res->status == 200);
        last = body_of(res);
    }
    CHECK(last["status"] == to_string(local.status()));
    CHECK(last["active"] == false);
    CHECK(last["query"].is_null());
    CHECK(last["certified"] == local.certified());
    REQUIRE(last["trace"].size() == local.trace().size());
    for (size_t i = 0; i < local.trace().size(); ++i) {
        CHECK(last["trace"][i]["mmr"].get<double>() == local.trace()[i].mmr);
        CHECK(last["trace"][i]["chi"].get<double>() == local.trace()[i].chi);
        CHECK(last["trace"][i]["true_regret"].get<double>() == *local.trace()[i].true_regret);
    }
    CHECK(last["lo"] == matrix_json(local.polytope().lower(), 4, 3));
    CHECK(last["hi"] == matrix_json(local.polytope().upper(), 4, 3));
    if (local.certified()) CHECK(last["mmr"].get<double>() <= last["tau"].get<double>());

    // The persisted state is the whole transition history.
    const auto saved = read_json_file(dir / (id + ".json"));
    CHECK(strip_timing(saved["state"]) == strip_timing(to_json(local.state())));

    // A finished session refuses further answers.
    res = post(c, "/api/sessions/" + id + "/answer", {{"response", "yes"}});
    CHECK(res->status == 409);
}

TEST_CASE("service: auto answers match the simulated user") {
    Running srv;
    auto c = srv.client();
    const Json create = {{"random", {{"n", 3}, {"k", 2}, {"seed", 8}}}, {"budget", 15}};
    const std::string id = body_of(post(c, "/api/sessions", create))["id"];
    Json view;
    do {
        auto res = post(c, "/api/sessions/" + id + "/answer", {{"response", "auto"}});
        REQUIRE(res->status == 200);
        view = body_of(res);
    } while (view["active"] == true);

    const auto inst = gen_random({.n = 3, .k = 2, .seed = 8});
    ElicitationConfig cfg;
    cfg.budget = 15;
    ElicitationSession local(inst.mdp, inst.polytope, cfg, SimulatedUser{inst.r_true, 2, 0.0});
    run_elicitation(local);
    CHECK(view["queries"] == local.log().size());
    CHECK(view["trace"].back()["mmr"].get<double>() == local.trace().back().mmr);
}

TEST_CASE("service: human session, midpoint answer and error codes") {
    Running srv;
    auto c = srv.client();
    const Json create = {{"instance", unit_box_instance()}, {"strategy", "hlg"}, {"mode", "exact"}};
    auto res = post(c, "/api/sessions", create);
    REQUIRE(res->status == 201);
    auto view = body_of(res);
    const std::string id = view["id"];
    CHECK(view["mode"] == "human");
    CHECK_FALSE(view["baseline"].contains("true_regret"));
    CHECK(view["mmr"].get<double>() == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(view["query"]["s"] == 0);
    CHECK(view["query"]["a"] == 0);
    CHECK(view["query"]["b"] == 0.5);

    res = post(c, "/api/sessions/" + id + "/answer", {{"response", "yes"}});
    REQUIRE(res->status == 200);
    view = body_of(res);
    CHECK(view["lo"][0][0] == 0.5);
    CHECK(view["hi"][0][0] == 1.0);
    for (const auto& m : view["trace"]) CHECK_FALSE(m.contains("true_regret"));

    CHECK(post(c, "/api/sessions/" + id + "/answer", {{"response", "auto"}})->status == 422);
    CHECK(post(c, "/api/sessions/" + id + "/answer", {{"response", "maybe"}})->status == 422);
    CHECK(post(c, "/api/sessions/" + id + "/answer", {{"answer", "yes"}})->status == 422);
    CHECK(c.Post("/api/sessions/" + id + "/answer", "{not json", "application/json")->status == 422);
    CHECK(c.Get("/api/sessions/nope")->status == 404);
    CHECK(post(c, "/api/sessions/nope/answer", {{"response", "yes"}})->status == 404);

    // Stop is idempotent and freezes the view.
    res = post(c, "/api/sessions/" + id + "/stop", Json::object());
    REQUIRE(res->status == 200);
    auto stopped = body_of(res);
    CHECK(stopped["status"] == "stopped");
    CHECK(stopped["mmr"] == stopped["trace"].back()["mmr"]);
    auto again = body_of(post(c, "/api/sessions/" + id + "/stop", Json::object()));
    stopped.erase("updated");
    again.erase("updated");
    CHECK(stopped == again);
    CHECK(post(c, "/api/sessions/" + id + "/answer", {{"response", "no"}})->status == 409);

    CHECK(c.Delete("/api/sessions/" + id)->status == 200);
    CHECK(c.Get("/api/sessions/" + id)->status == 404);
    CHECK(c.Delete("/api/sessions/" + id)->status == 404);
}

TEST_CASE("service: malformed creation bodies are 422") {
    Running srv;
    auto c = srv.client();
    const auto status = [&](const Json& j) { return post(c, "/api/sessions", j)->status; };
    CHECK(status({{"random", {{"n", 0}}}}) == 422);
    CHECK(status(Json::object()) == 422);
    CHECK(status({{"random", Json::object()}, {"instance", unit_box_instance()}}) == 422);
    CHECK(status({{"random", Json::object()}, {"strategy", "psychic"}}) == 422);
    CHECK(status({{"random", Json::object()}, {"colour", "blue"}}) == 422);
    CHECK(status({{"instance", unit_box_instance()}, {"simulated", true}}) == 422);
    CHECK(c.Post("/api/sessions", "[", "application/json")->status == 422);
    const auto err = body_of(post(c, "/api/sessions", {{"random", {{"n", "ten"}}}}));
    CHECK(err["error"] == "body.random.n: expected an integer");
}

TEST_CASE("service: double answer to the same query") {
    // The second answer of a pair targets the query that has since been
    // replaced; on a terminated one-query session it must be refused.
    Running srv;
    auto c = srv.client();
    const Mdp mdp(1, 2, {{{0, 1.0}}, {{0, 1.0}}}, 0.95, {1.0});
    // Action 1 dominates except on a sliver; one "no" on r(0,0) settles it.
    const RewardPolytope R(1, 2, {0, 0.6}, {1, 1});
    const Json create = {{"instance", to_json(Instance{mdp, R, {}})}, {"mode", "exact"}};
    const std::string id = body_of(post(c, "/api/sessions", create))["id"];
    CHECK(post(c, "/api/sessions/" + id + "/answer", {{"response", "no"}})->status == 200);
    CHECK(post(c, "/api/sessions/" + id + "/answer", {{"response", "no"}})->status == 409);
}

TEST_CASE("service: sessions survive a restart") {
    TempDir dir("regretel_test_state");
    std::string id;
    Json before;
    {
        Running srv(dir.path.string());
        auto c = srv.client();
        const Json create = {{"random", {{"n", 3}, {"k", 2}, {"seed", 2}}}, {"simulated", false}};
        id = body_of(post(c, "/api/sessions", create))["id"];
        post(c, "/api/sessions/" + id + "/answer", {{"response", "yes"}});
        before = body_of(c.Get("/api/sessions/" + id));
        CHECK(fs::exists(dir / (id + ".json")));
    }
    {
        Running srv(dir.path.string());
        CHECK(srv.service.size() == 1);
        auto c = srv.client();
        auto after = body_of(c.Get("/api/sessions/" + id));
        CHECK(after == before);
        // New ids never collide with restored ones.
        const auto fresh = body_of(post(c, "/api/sessions", {{"random", {{"n", 2}, {"k", 2}}}}));
        CHECK(fresh["id"] != id);
        // The restored session continues as if nothing happened.
        auto res = post(c, "/api/sessions/" + id + "/answer", {{"response", "no"}});
        CHECK(res->status == 200);
        CHECK(c.Delete("/api/sessions/" + id)->status == 200);
        CHECK_FALSE(fs::exists(dir / (id + ".json")));
    }
}

TEST_CASE("service: concurrent answers are serialized per session") {
    Running srv;
    auto c0 = srv.client();
    const Json create = {{"random", {{"n", 3}, {"k", 2}, {"seed", 4}}}, {"budget", 12}};
    const std::string id = body_of(post(c0, "/api/sessions", create))["id"];
    std::vector<std::thread> pool;
    std::atomic<int> ok{0}, conflict{0};
    for (int t = 0; t < 4; ++t)
        pool.emplace_back([&] {
            auto c = srv.client();
            for (int i = 0; i < 6; ++i) {
                const auto r = post(c, "/api/sessions/" + id + "/answer", {{"response", "auto"}});
                if (r && r->status == 200) ++ok;
                if (r && r->status == 409) ++conflict;
            }
        });
    for (auto& t : pool) t.join();
    const auto view = body_of(c0.Get("/api/sessions/" + id));
    CHECK(view["queries"] == ok.load());
    CHECK(ok + conflict == 24);

    const auto inst = gen_random({.n = 3, .k = 2, .seed = 4});
    ElicitationConfig cfg;
    cfg.budget = 12;
    ElicitationSession local(inst.mdp, inst.polytope, cfg, SimulatedUser{inst.r_true, 2, 0.0});
    run_elicitation(local);
    CHECK(view["queries"] == local.log().size());
}

TEST_CASE("cli: solve prints delta and exit codes") {
    TempDir dir("regretel_test_cli");
    write_json_file(dir / "box.json", unit_box_instance());
    std::string out;
    CHECK(cli({"solve", dir / "box.json"}, &out) == 0);
    CHECK(out.find("mmr 10\n") != std::string::npos);
    CHECK(out.find("certified yes") != std::string::npos);

    const Mdp mdp(1, 2, {{{0, 1.0}}, {{0, 1.0}}}, 0.95, {1.0});
    write_json_file(dir / "flat.json", to_json(Instance{mdp, RewardPolytope(1, 2, {3, 3}, {3, 3}), {}}));
    CHECK(cli({"solve", dir / "flat.json", "--out", dir / "sol.json"}, &out) == 0);
    CHECK(out.find("mmr 0\n") != std::string::npos);
    CHECK(read_json_file(dir / "sol.json")["mmr"] == 0.0);

    // An iteration cap leaves the solve uncertified.
    write_json_file(dir / "rand.json", to_json(gen_random({.n = 6, .k = 3, .seed = 1})));
    CHECK(cli({"solve", dir / "rand.json", "--max-iterations", "1"}, &out) == 2);
    CHECK(out.find("certified no") != std::string::npos);

    CHECK(cli({"maximin", dir / "box.json"}, &out) == 0);
    CHECK(out.find("security_value 0\n") != std::string::npos);

    std::string err;
    std::ofstream(dir / "bad.json") << R"({"mdp": {"n": 1, "k": 2, "gamma": 0.95, "alpha": [1],
        "transitions": [[[[0, 1.0]], [[0, "one"]]]]}, "polytope": {"lo": [[0, 0]], "hi": [[1, 1]]}})";
    CHECK(cli({"solve", dir / "bad.json"}, &out, &err) == 1);
    CHECK(err == "error: instance.mdp.transitions[0][1][0][1]: expected a number\n");
    CHECK(cli({"solve", dir / "missing.json"}, &out, &err) == 1);
    CHECK(cli({"solve", dir / "box.json", "--mode", "fast"}, &out, &err) != 0);
    CHECK(cli({"frobnicate"}, &out, &err) != 0);
}

TEST_CASE("cli: generators and elicit") {
    TempDir dir("regretel_test_cli2");
    std::string out;
    CHECK(cli({"gen-random", "--n", "4", "--k", "2", "--seed", "3", "--out", dir / "r.json"}) == 0);
    const auto inst = instance_from_json(read_json_file(dir / "r.json"));
    CHECK(inst.mdp.states() == 4);
    CHECK(to_json(inst) == to_json(gen_random({.n = 4, .k = 2, .seed = 3})));

    CHECK(cli({"gen-autonomic"}, &out) == 0);
    const auto auto_inst = instance_from_json(Json::parse(out));
    CHECK(auto_inst.mdp.states() == 90);
    CHECK(auto_inst.mdp.actions() == 10);

    CHECK(cli({"elicit", "--instance", dir / "r.json", "--budget", "200", "--out", dir / "t.csv", "--no-timing",
               "--state", dir / "s.json"},
              &out) == 0);
    CHECK(out.find("certified yes") != std::string::npos);
    const auto csv = slurp(dir / "t.csv");
    CHECK(csv.rfind("query_index,mmr,maximin_value,true_regret,chi,distinct_pairs,elapsed_ms\n", 0) == 0);
    const auto saved = read_json_file(dir / "s.json");
    ElicitationSession resumed(mdp_from_json(saved["mdp"]), state_from_json(saved["state"]));
    CHECK(resumed.certified());

    // A budget too small to finish is an uncertified outcome.
    CHECK(cli({"elicit", "--instance", dir / "r.json", "--budget", "1"}, &out) == 2);

    write_json_file(dir / "human.json", to_json(Instance{inst.mdp, inst.polytope, {}}));
    std::string err;
    CHECK(cli({"elicit", "--instance", dir / "human.json"}, &out, &err) == 1);
    CHECK(err.find("--interactive") != std::string::npos);
}

TEST_CASE("experiment: budget 0 gives baseline-only curves") {
    ExperimentPlan plan;
    plan.random = {.n = 3, .k = 2};
    plan.repetitions = 2;
    plan.config.budget = 0;
    const auto res = run_experiment(plan);
    REQUIRE(res.procedures.size() == 4);
    for (const auto& p : res.procedures) {
        CHECK(p.mean_curve.size() == 1);
        for (const auto& r : p.reps) {
            CHECK(r.ok);
            CHECK(r.queries == 0);
            CHECK(r.status == "budget_exhausted");
        }
    }
    CHECK(res.procedures[0].procedure.name() == "MMR-HLG");
    CHECK(res.procedures[3].procedure.name() == "MM-CS");
}

TEST_CASE("experiment: deterministic bytes, parallel or not") {
    TempDir a("regretel_test_exp_a"), b("regretel_test_exp_b");
    std::string out;
    const std::vector<std::string> common = {"experiment", "--n", "4", "--k", "2", "--reps", "2",
                                             "--budget", "12", "--no-timing"};
    auto args = common;
    args.insert(args.end(), {"--out", a.path.string()});
    CHECK(cli(args, &out) == 0);
    args = common;
    args.insert(args.end(), {"--out", b.path.string(), "--jobs", "3"});
    CHECK(cli(args, &out) == 0);
    for (const char* f : {"MMR-CS.csv", "MMR-HLG.csv", "MM-CS.csv", "MM-HLG.csv", "MMR-CS_rep1.csv",
                          "summary.json"}) {
        const auto x = slurp(a / f);
        CHECK_MESSAGE(!x.empty(), f);
        CHECK_MESSAGE(x == slurp(b / f), f);
    }
    const auto summary = read_json_file(a / "summary.json");
    REQUIRE(summary["procedures"].size() == 4);
    const auto& p = summary["procedures"][1];
    CHECK(p["procedure"] == "MMR-CS");
    CHECK(p["failures"] == 0);
    CHECK(p.contains("mean_final_chi_ratio"));
    CHECK(p.contains("mean_queries_to_zero_regret"));
    CHECK(p.contains("mean_distinct_pairs"));
    CHECK_FALSE(p.contains("mean_elapsed_ms"));
}

TEST_CASE("experiment: failures are recorded per repetition") {
    TempDir dir("regretel_test_exp_fail");
    // A file instance without r_true cannot drive a simulated user.
    const Mdp mdp(1, 2, {{{0, 1.0}}, {{0, 1.0}}}, 0.95, {1.0});
    write_json_file(dir / "i.json", to_json(Instance{mdp, RewardPolytope(1, 2, {0, 0}, {1, 1}), {}}));
    ExperimentPlan plan;
    plan.domain = ExperimentPlan::Domain::File;
    plan.instance_file = dir / "i.json";
    plan.procedures = {Procedure::parse("MMR-CS")};
    plan.repetitions = 2;
    const auto res = run_experiment(plan);
    for (const auto& r : res.procedures[0].reps) {
        CHECK_FALSE(r.ok);
        CHECK(r.error.find("r_true") != std::string::npos);
    }
    CHECK(res.summary()["procedures"][0]["failures"] == 2);
    CHECK_THROWS_AS(Procedure::parse("MMR-XX"), ModelError);
}

TEST_CASE("experiment plan json") {
    const auto plan = plan_from_json(Json::parse(R"({
        "random": {"n": 5, "k": 2}, "procedures": ["MMR-CS", "MM-HLG"], "repetitions": 3,
        "seed": 100, "config": {"budget": 7}, "timing": false, "out_dir": "x"})"));
    CHECK(plan.random.n == 5);
    CHECK(plan.procedures.size() == 2);
    CHECK(plan.procedures[1].criterion == Criterion::Maximin);
    CHECK(plan.repetitions == 3);
    CHECK(plan.seed == 100);
    CHECK(plan.config.budget == 7);
    CHECK_FALSE(plan.timing);
    CHECK(experiment_instance(plan, 1).mdp.states() == 5);
    CHECK(to_json(experiment_instance(plan, 1)) == to_json(gen_random({.n = 5, .k = 2, .seed = 101})));
    CHECK_THROWS_WITH_AS(plan_from_json(Json::parse(R"({"repetitions": 0})")),
                         "plan: repetitions must be at least 1", ParseError);
    CHECK_THROWS_WITH_AS(plan_from_json(Json::parse(R"({"procedures": ["MMR-CS", 3]})")),
                         "plan.procedures[1]: expected a string", ParseError);
}
