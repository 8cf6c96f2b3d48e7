#include "regretel/harness.hpp"
#include "regretel/maximin.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace regretel {

namespace {

const std::vector<std::string> kModes = {"exact", "relaxed", "alternating"};
const std::vector<std::string> kCriteria = {"mmr", "maximin"};
const std::vector<std::string> kStrategies = {"hlg", "cs"};

// Flags shared by elicit and experiment.
struct SessionFlags {
    std::string criterion = "mmr";
    std::string strategy = "cs";
    std::string mode = "relaxed";
    double tau = -1.0;
    int budget = -1;
    int certify_stride = ElicitationConfig{}.certify_stride;
    std::string config_file;

    void add(CLI::App* app, bool with_criterion_strategy) {
        if (with_criterion_strategy) {
            app->add_option("--criterion", criterion, "mmr or maximin")
                ->check(CLI::IsMember(kCriteria))
                ->capture_default_str();
            app->add_option("--strategy", strategy, "hlg or cs")
                ->check(CLI::IsMember(kStrategies))
                ->capture_default_str();
        }
        app->add_option("--mode", mode, "max regret subproblem")
            ->check(CLI::IsMember(kModes))
            ->capture_default_str();
        app->add_option("--tau", tau, "stop at minimax regret <= tau (default 1e-6 x initial)");
        app->add_option("--budget", budget, "query budget (default 4 x pairs)");
        app->add_option("--certify-stride", certify_stride,
                        "exact max regret every this many queries (0 = never)")
            ->capture_default_str();
        app->add_option("--config", config_file, "JSON elicitation config; flags override it");
    }

    // Flags apply on top of the config file; without one their defaults
    // are the library defaults anyway.
    ElicitationConfig config(const CLI::App* app) const {
        ElicitationConfig c = config_file.empty() ? ElicitationConfig{}
                                                  : config_from_json(read_json_file(config_file));
        const auto given = [&](const char* flag) { return config_file.empty() || app->count(flag) > 0; };
        if (app->get_option_no_throw("--criterion")) {
            if (given("--criterion")) c.criterion = parse_criterion(criterion);
            if (given("--strategy")) c.strategy = parse_strategy(strategy);
        }
        if (given("--mode")) c.mode = parse_mode(mode);
        if (given("--tau")) c.tau = tau;
        if (given("--budget")) c.budget = budget;
        if (given("--certify-stride")) c.certify_stride = certify_stride;
        c.validate();
        return c;
    }
};

// Instance from a file or one of the generators.
struct SourceFlags {
    std::string instance;
    std::string domain = "random";
    RandomMdpSpec random;
    std::string autonomic_file;
    std::uint64_t seed = 0;

    void add(CLI::App* app) {
        app->add_option("--instance", instance, "instance JSON file");
        app->add_option("--domain", domain, "generator when no --instance is given")
            ->check(CLI::IsMember({"random", "autonomic"}))
            ->capture_default_str();
        app->add_option("--n", random.n, "random MDP states")->capture_default_str();
        app->add_option("--k", random.k, "random MDP actions")->capture_default_str();
        app->add_option("--width", random.width, "random MDP box width scale")->capture_default_str();
        app->add_option("--autonomic-spec", autonomic_file, "autonomic spec JSON file");
        app->add_option("--seed", seed, "generator seed")->capture_default_str();
    }

    Instance load() const {
        if (!instance.empty()) return instance_from_json(read_json_file(instance));
        if (domain == "autonomic") {
            auto spec = autonomic_file.empty()
                            ? AutonomicSpec{}
                            : autonomic_spec_from_json(read_json_file(autonomic_file));
            spec.seed = seed;
            return gen_autonomic(spec);
        }
        auto spec = random;
        spec.seed = seed;
        return gen_random(spec);
    }
};

void print_policy(std::ostream& out, const Mdp& mdp, const Occupancy& f) {
    const auto pi = policy_of_occupancy(mdp, f);
    out << "policy:\n";
    for (int s = 0; s < mdp.states(); ++s) {
        out << "  s" << s << ':';
        for (int a = 0; a < mdp.actions(); ++a)
            if (pi(s, a) > 1e-9) out << " a" << a << '=' << pi(s, a);
        out << '\n';
    }
}

void write_text(const std::string& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot write " + file);
    out << text;
}

int cmd_solve(const std::string& criterion, const std::string& mode, const std::string& file,
              double tolerance, int max_iterations, double time_limit, const std::string& out_file,
              const std::string& trace_file, bool timing, std::ostream& out) {
    const auto inst = instance_from_json(read_json_file(file));
    out << std::setprecision(10);
    if (criterion == "maximin") {
        const auto mm = maximin(inst.mdp, inst.polytope);
        out << "criterion maximin\nsecurity_value " << mm.value << '\n';
        print_policy(out, inst.mdp, mm.f);
        if (!out_file.empty())
            write_json_file(out_file, {{"criterion", "maximin"},
                                       {"security_value", mm.value},
                                       {"f", mm.f},
                                       {"worst_reward", mm.worst}});
        return 0;
    }
    RegretOptions opts;
    opts.mode = parse_mode(mode);
    opts.tolerance = tolerance;
    opts.max_iterations = max_iterations;
    if (time_limit > 0) opts.time_limit_ms = time_limit * 1000.0;
    const auto sol = minimax_regret(inst.mdp, inst.polytope, opts);
    out << "criterion mmr\nmode " << to_string(opts.mode) << "\nstatus " << to_string(sol.status)
        << "\nmmr " << sol.delta << "\nupper_bound " << sol.upper_bound << "\ncertified "
        << (sol.certified ? "yes" : "no") << "\niterations " << sol.iterations << '\n';
    print_policy(out, inst.mdp, sol.f);
    out << "witness_reward:";
    for (double x : sol.witness.r) out << ' ' << x;
    out << '\n';
    if (!trace_file.empty()) {
        std::ostringstream csv;
        write_trace_csv(csv, sol.trace, timing);
        write_text(trace_file, csv.str());
    }
    if (!out_file.empty())
        write_json_file(out_file, {{"criterion", "mmr"},
                                   {"mode", to_string(opts.mode)},
                                   {"status", to_string(sol.status)},
                                   {"mmr", sol.delta},
                                   {"upper_bound", sol.upper_bound},
                                   {"certified", sol.certified},
                                   {"iterations", sol.iterations},
                                   {"f", sol.f},
                                   {"policy", matrix_json(policy_of_occupancy(inst.mdp, sol.f).prob,
                                                          inst.mdp.states(), inst.mdp.actions())},
                                   {"witness", to_json(sol.witness)}});
    return sol.certified ? 0 : 2;
}

SessionService* g_service = nullptr;

extern "C" void on_signal(int) {
    if (g_service) g_service->stop();
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Minimax regret policies and reward elicitation for MDPs", "regretel"};
    app.require_subcommand(1);

    // solve / maximin
    std::string file, criterion = "mmr", mode = "exact", out_file, trace_file;
    double tolerance = 1e-6, time_limit = 0;
    int max_iterations = 1000;
    bool no_timing = false;
    auto* solve = app.add_subcommand("solve", "minimax regret (or maximin) policy for an instance");
    auto* mm = app.add_subcommand("maximin", "maximin policy for an instance");
    for (auto* sub : {solve, mm}) {
        sub->add_option("instance", file, "instance JSON file")->required();
        sub->add_option("--out", out_file, "write the solution as JSON");
    }
    solve->add_option("--criterion", criterion)->check(CLI::IsMember(kCriteria))->capture_default_str();
    solve->add_option("--mode", mode)->check(CLI::IsMember(kModes))->capture_default_str();
    solve->add_option("--tolerance", tolerance)->capture_default_str();
    solve->add_option("--max-iterations", max_iterations)->capture_default_str();
    solve->add_option("--time-limit", time_limit, "seconds (0 = none)");
    solve->add_option("--trace", trace_file, "write the constraint generation trace as CSV");
    solve->add_flag("--no-timing", no_timing, "write elapsed_ms as 0");

    // elicit
    auto* elicit = app.add_subcommand("elicit", "run one elicitation session");
    SessionFlags eflags;
    SourceFlags esource;
    double user_eps = 0.0;
    bool interactive = false;
    std::string state_file;
    eflags.add(elicit, true);
    esource.add(elicit);
    elicit->add_option("--user-epsilon", user_eps, "simulated user's indifference half-width");
    elicit->add_flag("--interactive", interactive,
                     "answer queries on stdin (y/n/u, q to quit) instead of simulating");
    elicit->add_option("--out", out_file, "write the metric trace as CSV");
    elicit->add_option("--state", state_file, "write the final session state as JSON");
    elicit->add_flag("--no-timing", no_timing, "write elapsed_ms as 0");

    // experiment
    auto* exp = app.add_subcommand("experiment", "compare elicitation procedures over repetitions");
    SessionFlags xflags;
    SourceFlags xsource;
    std::string plan_file, out_dir, procedures;
    int reps = 1, jobs = 1;
    xflags.add(exp, false);
    xsource.add(exp);
    exp->add_option("--plan", plan_file, "JSON plan; flags given explicitly override it");
    exp->add_option("--procedures", procedures, "comma list of MMR-HLG, MMR-CS, MM-HLG, MM-CS");
    exp->add_option("--reps", reps, "repetitions (seeds seed .. seed+reps-1)")->capture_default_str();
    exp->add_option("--jobs", jobs, "parallel workers")->capture_default_str();
    exp->add_option("--user-epsilon", user_eps);
    exp->add_option("--out", out_dir, "output directory");
    exp->add_flag("--no-timing", no_timing, "write elapsed_ms as 0");

    // generators
    auto* gr = app.add_subcommand("gen-random", "random semi-sparse MDP instance");
    RandomMdpSpec rspec;
    gr->add_option("--n", rspec.n)->capture_default_str();
    gr->add_option("--k", rspec.k)->capture_default_str();
    gr->add_option("--seed", rspec.seed)->capture_default_str();
    gr->add_option("--rmin", rspec.rmin)->capture_default_str();
    gr->add_option("--rmax", rspec.rmax)->capture_default_str();
    gr->add_option("--width", rspec.width)->capture_default_str();
    gr->add_option("--gamma", rspec.gamma)->capture_default_str();
    gr->add_option("--out", out_file, "output file (default stdout)");

    auto* ga = app.add_subcommand("gen-autonomic", "server resource allocation instance");
    std::string spec_file;
    std::uint64_t aseed = 0;
    bool monotone = false;
    ga->add_option("--spec", spec_file, "autonomic spec JSON file");
    ga->add_option("--seed", aseed)->capture_default_str();
    ga->add_flag("--monotone", monotone, "add utility monotonicity constraints");
    ga->add_option("--out", out_file, "output file (default stdout)");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    std::string host = "127.0.0.1", state_dir, static_dir;
    int port = 8080;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--state-dir", state_dir, "persist sessions here");
    serve->add_option("--static", static_dir, "serve files from this directory at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (solve->parsed() || mm->parsed()) {
            return cmd_solve(mm->parsed() ? "maximin" : criterion, mode, file, tolerance,
                             max_iterations, time_limit, out_file, trace_file, !no_timing, out);
        }
        if (elicit->parsed()) {
            auto inst = esource.load();
            const auto cfg = eflags.config(elicit);
            std::optional<SimulatedUser> user;
            if (!interactive) {
                if (inst.r_true.empty())
                    throw ModelError("instance has no r_true; use --interactive to answer yourself");
                user = SimulatedUser{inst.r_true, inst.mdp.actions(), user_eps};
            }
            ElicitationSession s(inst.mdp, inst.polytope, cfg, user);
            if (interactive) {
                run_elicitation(s, [&](const BoundQuery& q) -> std::optional<QueryResponse> {
                    for (;;) {
                        out << "Is r(" << q.s << ',' << q.a << ") >= " << q.b << "? [y/n/u/q] "
                            << std::flush;
                        std::string line;
                        if (!std::getline(std::cin, line) || line == "q") return std::nullopt;
                        if (line == "y") return QueryResponse::Yes;
                        if (line == "n") return QueryResponse::No;
                        if (line == "u") return QueryResponse::Unsure;
                    }
                });
            } else {
                run_elicitation(s);
            }
            const auto& last = s.trace().back();
            out << std::setprecision(10) << "status " << to_string(s.status()) << "\nqueries "
                << s.log().size() << "\ndistinct_pairs " << s.distinct_pairs() << "\nmmr "
                << last.mmr << "\ninitial_mmr " << s.trace().front().mmr << "\nchi_ratio "
                << last.chi / s.trace().front().chi << '\n';
            if (last.true_regret) out << "true_regret " << *last.true_regret << '\n';
            out << "certified " << (s.certified() ? "yes" : "no") << '\n';
            print_policy(out, s.mdp(), s.policy());
            if (!out_file.empty()) {
                std::ostringstream csv;
                write_metrics_csv(csv, s.trace(), !no_timing);
                write_text(out_file, csv.str());
            }
            if (!state_file.empty())
                write_json_file(state_file, {{"mdp", to_json(s.mdp())}, {"state", to_json(s.state())}});
            return s.certified() ? 0 : 2;
        }
        if (exp->parsed()) {
            ExperimentPlan plan = plan_file.empty() ? ExperimentPlan{} : plan_from_json(read_json_file(plan_file));
            const bool planned = !plan_file.empty();
            const auto given = [&](const char* flag) { return exp->count(flag) > 0 || !planned; };
            if (!xsource.instance.empty()) {
                plan.domain = ExperimentPlan::Domain::File;
                plan.instance_file = xsource.instance;
            } else if (given("--domain")) {
                plan.domain = xsource.domain == "autonomic" ? ExperimentPlan::Domain::Autonomic
                                                            : ExperimentPlan::Domain::Random;
                if (!xsource.autonomic_file.empty())
                    plan.autonomic = autonomic_spec_from_json(read_json_file(xsource.autonomic_file));
            }
            if (given("--n")) plan.random.n = xsource.random.n;
            if (given("--k")) plan.random.k = xsource.random.k;
            if (given("--width")) plan.random.width = xsource.random.width;
            if (given("--seed")) plan.seed = xsource.seed;
            if (given("--reps")) plan.repetitions = reps;
            if (given("--jobs")) plan.jobs = jobs;
            if (given("--user-epsilon")) plan.user_epsilon = user_eps;
            if (given("--out")) plan.out_dir = out_dir;
            if (no_timing) plan.timing = false;
            if (planned) {
                auto c = plan.config;
                if (exp->count("--mode")) c.mode = parse_mode(xflags.mode);
                if (exp->count("--tau")) c.tau = xflags.tau;
                if (exp->count("--budget")) c.budget = xflags.budget;
                if (exp->count("--certify-stride")) c.certify_stride = xflags.certify_stride;
                plan.config = c;
            } else {
                plan.config = xflags.config(exp);
            }
            if (!procedures.empty()) {
                plan.procedures.clear();
                std::stringstream ss(procedures);
                for (std::string p; std::getline(ss, p, ',');) plan.procedures.push_back(Procedure::parse(p));
            }
            if (plan.out_dir.empty()) throw ModelError("experiment needs --out (or out_dir in the plan)");
            const auto res = run_experiment(plan);
            auto summary = res.summary();
            for (auto& p : summary["procedures"]) {
                p.erase("reps");
                if (!plan.timing) p.erase("mean_elapsed_ms");
            }
            out << summary.dump(2) << '\n';
            for (const auto& pr : res.procedures)
                for (const auto& r : pr.reps)
                    if (!r.ok)
                        err << pr.procedure.name() << " seed " << r.seed << ": " << r.error << '\n';
            return 0;
        }
        if (gr->parsed() || ga->parsed()) {
            Instance inst = [&] {
                if (gr->parsed()) return gen_random(rspec);
                auto spec = spec_file.empty() ? AutonomicSpec{} : autonomic_spec_from_json(read_json_file(spec_file));
                if (ga->count("--seed")) spec.seed = aseed;
                if (monotone) spec.monotone = true;
                return gen_autonomic(spec);
            }();
            const Json j = to_json(inst);
            if (out_file.empty())
                out << j.dump(2) << '\n';
            else
                write_json_file(out_file, j);
            return 0;
        }
        if (serve->parsed()) {
            SessionService service(state_dir, static_dir);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            out << "listening on http://" << host << ':' << port << std::endl;
            const bool ok = service.listen(host, port);
            g_service = nullptr;
            if (!ok) {
                err << "error: cannot listen on " << host << ':' << port << '\n';
                return 1;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace regretel
