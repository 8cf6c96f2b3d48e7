#include "regretel/harness.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

namespace regretel {

std::string Procedure::name() const {
    return std::string(criterion == Criterion::MinimaxRegret ? "MMR" : "MM") + "-" +
           (strategy == Strategy::HLG ? "HLG" : "CS");
}

Procedure Procedure::parse(const std::string& name) {
    for (auto c : {Criterion::MinimaxRegret, Criterion::Maximin})
        for (auto s : {Strategy::HLG, Strategy::CS}) {
            const Procedure p{c, s};
            if (p.name() == name) return p;
        }
    throw ModelError("unknown procedure '" + name + "' (expected MMR-HLG, MMR-CS, MM-HLG, MM-CS)");
}

void ExperimentPlan::validate() const {
    if (repetitions < 1) throw ModelError("repetitions must be at least 1");
    if (procedures.empty()) throw ModelError("at least one procedure is required");
    if (jobs < 1) throw ModelError("jobs must be at least 1");
    if (!(user_epsilon >= 0.0)) throw ModelError("user epsilon must be nonnegative");
    if (domain == Domain::File && instance_file.empty())
        throw ModelError("file domain needs an instance file");
    config.validate();
}

Instance experiment_instance(const ExperimentPlan& plan, int rep) {
    switch (plan.domain) {
    case ExperimentPlan::Domain::Random: {
        auto spec = plan.random;
        spec.seed = plan.seed + rep;
        return gen_random(spec);
    }
    case ExperimentPlan::Domain::Autonomic: {
        auto spec = plan.autonomic;
        spec.seed = plan.seed + rep;
        return gen_autonomic(spec);
    }
    case ExperimentPlan::Domain::File: break;
    }
    auto inst = instance_from_json(read_json_file(plan.instance_file));
    if (inst.r_true.empty()) throw ModelError(plan.instance_file + ": experiments need r_true");
    return inst;
}

namespace {

std::optional<int> first_below(const std::vector<MetricSnapshot>& trace, double limit,
                               auto&& value) {
    for (const auto& m : trace)
        if (value(m) <= limit) return m.query_index;
    return std::nullopt;
}

RepetitionResult run_one(const ExperimentPlan& plan, const Procedure& proc, int rep) {
    RepetitionResult out;
    out.seed = plan.seed + rep;
    try {
        auto inst = experiment_instance(plan, rep);
        auto cfg = plan.config;
        cfg.criterion = proc.criterion;
        cfg.strategy = proc.strategy;
        ElicitationSession s(inst.mdp, inst.polytope, cfg,
                             SimulatedUser{inst.r_true, inst.mdp.actions(), plan.user_epsilon});
        run_elicitation(s);
        out.trace = s.trace();
        out.ok = true;
        out.status = to_string(s.status());
        out.queries = static_cast<int>(s.log().size());
        out.pairs = s.distinct_pairs();
        const auto& first = out.trace.front();
        const auto& last = out.trace.back();
        out.final_chi_ratio = first.chi > 0.0 ? last.chi / first.chi : 1.0;
        out.mmr_1pct = first_below(out.trace, 0.01 * first.mmr,
                                   [](const MetricSnapshot& m) { return m.mmr; });
        out.true_1pct = first_below(out.trace, 0.01 * *first.true_regret,
                                    [](const MetricSnapshot& m) { return *m.true_regret; });
        out.mmr_zero = first_below(out.trace, s.state().tau,
                                   [](const MetricSnapshot& m) { return m.mmr; });
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

std::vector<MetricSnapshot> mean_curve(const std::vector<RepetitionResult>& reps) {
    size_t len = 0;
    int count = 0;
    for (const auto& r : reps)
        if (r.ok) {
            len = std::max(len, r.trace.size());
            ++count;
        }
    std::vector<MetricSnapshot> out(len);
    for (size_t i = 0; i < len; ++i) {
        auto& m = out[i];
        m.query_index = static_cast<int>(i);
        double truth = 0.0, pairs = 0.0;
        bool have_truth = true;
        for (const auto& r : reps) {
            if (!r.ok) continue;
            const auto& x = r.trace[std::min(i, r.trace.size() - 1)];
            m.mmr += x.mmr / count;
            m.mmr_lower += x.mmr_lower / count;
            m.maximin_value += x.maximin_value / count;
            m.chi += x.chi / count;
            m.elapsed_ms += x.elapsed_ms / count;
            pairs += x.distinct_pairs;
            if (x.true_regret)
                truth += *x.true_regret / count;
            else
                have_truth = false;
        }
        // Mean distinct pairs, rounded: the CSV column is an integer count.
        m.distinct_pairs = static_cast<int>(std::lround(pairs / count));
        if (have_truth) m.true_regret = truth;
    }
    return out;
}

void write_csv(const std::filesystem::path& file, const std::vector<MetricSnapshot>& trace,
               bool timing) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot write " + file.string());
    write_metrics_csv(out, trace, timing);
}

Json opt(const std::optional<int>& v) { return v ? Json(*v) : Json(nullptr); }

} // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan) {
    plan.validate();
    const int P = static_cast<int>(plan.procedures.size());
    const int R = plan.repetitions;
    ExperimentResult res;
    res.procedures.resize(P);
    for (int p = 0; p < P; ++p) {
        res.procedures[p].procedure = plan.procedures[p];
        res.procedures[p].reps.resize(R);
    }

    std::atomic<int> next{0};
    const auto worker = [&] {
        for (int w; (w = next.fetch_add(1)) < P * R;)
            res.procedures[w / R].reps[w % R] = run_one(plan, plan.procedures[w / R], w % R);
    };
    const int jobs = std::min(plan.jobs, P * R);
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& pr : res.procedures) pr.mean_curve = mean_curve(pr.reps);

    if (!plan.out_dir.empty()) {
        const std::filesystem::path dir(plan.out_dir);
        std::filesystem::create_directories(dir);
        for (const auto& pr : res.procedures) {
            const auto name = pr.procedure.name();
            write_csv(dir / (name + ".csv"), pr.mean_curve, plan.timing);
            for (int i = 0; i < R; ++i)
                if (pr.reps[i].ok)
                    write_csv(dir / (name + "_rep" + std::to_string(i) + ".csv"), pr.reps[i].trace,
                              plan.timing);
        }
        auto summary = res.summary();
        if (!plan.timing)
            for (auto& p : summary["procedures"]) p.erase("mean_elapsed_ms");
        write_json_file((dir / "summary.json").string(), summary);
    }
    return res;
}

Json ExperimentResult::summary() const {
    Json procs = Json::array();
    for (const auto& pr : procedures) {
        Json reps = Json::array();
        int ok = 0;
        double chi = 0, queries = 0, pairs = 0, elapsed = 0;
        // Unreached targets count at the run's last index, so these means
        // are lower bounds whenever reached < ok.
        double to_mmr = 0, to_true = 0, to_zero = 0;
        int hit_mmr = 0, hit_true = 0, hit_zero = 0;
        for (const auto& r : pr.reps) {
            Json j = {{"seed", r.seed}, {"ok", r.ok}};
            if (!r.ok) {
                j["error"] = r.error;
                reps.push_back(std::move(j));
                continue;
            }
            ++ok;
            const int last = r.trace.back().query_index;
            chi += r.final_chi_ratio;
            queries += r.queries;
            pairs += r.pairs;
            elapsed += r.trace.back().elapsed_ms;
            to_mmr += r.mmr_1pct.value_or(last);
            to_true += r.true_1pct.value_or(last);
            to_zero += r.mmr_zero.value_or(last);
            hit_mmr += r.mmr_1pct.has_value();
            hit_true += r.true_1pct.has_value();
            hit_zero += r.mmr_zero.has_value();
            j["status"] = r.status;
            j["queries"] = r.queries;
            j["distinct_pairs"] = r.pairs;
            j["final_chi_ratio"] = r.final_chi_ratio;
            j["queries_to_1pct_mmr"] = opt(r.mmr_1pct);
            j["queries_to_1pct_true_regret"] = opt(r.true_1pct);
            j["queries_to_zero_regret"] = opt(r.mmr_zero);
            reps.push_back(std::move(j));
        }
        Json p = {{"procedure", pr.procedure.name()},
                  {"repetitions", pr.reps.size()},
                  {"failures", pr.reps.size() - ok}};
        if (ok > 0) {
            p["mean_final_chi_ratio"] = chi / ok;
            p["mean_queries"] = queries / ok;
            p["mean_distinct_pairs"] = pairs / ok;
            p["mean_queries_to_1pct_mmr"] = to_mmr / ok;
            p["mean_queries_to_1pct_true_regret"] = to_true / ok;
            p["mean_queries_to_zero_regret"] = to_zero / ok;
            p["reached_1pct_mmr"] = hit_mmr;
            p["reached_1pct_true_regret"] = hit_true;
            p["reached_zero_regret"] = hit_zero;
            p["mean_elapsed_ms"] = elapsed / ok;
        }
        p["reps"] = std::move(reps);
        procs.push_back(std::move(p));
    }
    return {{"procedures", std::move(procs)}};
}

ExperimentPlan plan_from_json(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ParseError(path, "expected an object");
    ExperimentPlan plan;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = it.key();
        const std::string p = path + "." + key;
        const Json& v = *it;
        if (key == "random") {
            plan.domain = ExperimentPlan::Domain::Random;
            plan.random = random_spec_from_json(v, p);
        } else if (key == "autonomic") {
            plan.domain = ExperimentPlan::Domain::Autonomic;
            plan.autonomic = autonomic_spec_from_json(v, p);
        } else if (key == "instance_file") {
            if (!v.is_string()) throw ParseError(p, "expected a string");
            plan.domain = ExperimentPlan::Domain::File;
            plan.instance_file = v.get<std::string>();
        } else if (key == "procedures") {
            if (!v.is_array()) throw ParseError(p, "expected an array");
            plan.procedures.clear();
            for (size_t i = 0; i < v.size(); ++i) {
                const std::string ip = p + "[" + std::to_string(i) + "]";
                if (!v[i].is_string()) throw ParseError(ip, "expected a string");
                try {
                    plan.procedures.push_back(Procedure::parse(v[i].get<std::string>()));
                } catch (const ModelError& e) {
                    throw ParseError(ip, e.what());
                }
            }
        } else if (key == "repetitions" || key == "jobs") {
            if (!v.is_number_integer()) throw ParseError(p, "expected an integer");
            (key == "jobs" ? plan.jobs : plan.repetitions) = v.get<int>();
        } else if (key == "seed") {
            if (!v.is_number_unsigned()) throw ParseError(p, "expected a nonnegative integer");
            plan.seed = v.get<std::uint64_t>();
        } else if (key == "config") {
            plan.config = config_from_json(v, p);
        } else if (key == "user_epsilon") {
            if (!v.is_number()) throw ParseError(p, "expected a number");
            plan.user_epsilon = v.get<double>();
        } else if (key == "out_dir") {
            if (!v.is_string()) throw ParseError(p, "expected a string");
            plan.out_dir = v.get<std::string>();
        } else if (key == "timing") {
            if (!v.is_boolean()) throw ParseError(p, "expected true or false");
            plan.timing = v.get<bool>();
        } else {
            throw ParseError(p, "unknown field");
        }
    }
    try {
        plan.validate();
    } catch (const ModelError& e) {
        throw ParseError(path, e.what());
    }
    return plan;
}

} // namespace regretel
