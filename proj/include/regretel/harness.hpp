#pragma once

// Experiment runner and HTTP session service behind the command line tool.

#include "regretel/domains.hpp"
#include "regretel/elicitation.hpp"
#include "regretel/io.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace regretel {

/// criterion x strategy, named MMR-HLG, MMR-CS, MM-HLG, MM-CS.
struct Procedure {
    Criterion criterion = Criterion::MinimaxRegret;
    Strategy strategy = Strategy::CS;
    std::string name() const;
    static Procedure parse(const std::string& name);
};

struct ExperimentPlan {
    enum class Domain { Random, Autonomic, File };
    Domain domain = Domain::Random;
    /// Repetition i uses seed + i for the generator.
    RandomMdpSpec random;
    AutonomicSpec autonomic;
    std::string instance_file;
    std::vector<Procedure> procedures = {{Criterion::MinimaxRegret, Strategy::HLG},
                                         {Criterion::MinimaxRegret, Strategy::CS},
                                         {Criterion::Maximin, Strategy::HLG},
                                         {Criterion::Maximin, Strategy::CS}};
    int repetitions = 1;
    std::uint64_t seed = 0;
    /// Base settings; criterion and strategy are overridden per procedure.
    ElicitationConfig config;
    /// Simulated user's indifference half-width.
    double user_epsilon = 0.0;
    /// Output directory; empty writes nothing.
    std::string out_dir;
    /// False writes elapsed_ms as 0 so output is byte-reproducible.
    bool timing = true;
    int jobs = 1;

    void validate() const;
};

struct RepetitionResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::string status;
    std::vector<MetricSnapshot> trace;
    int queries = 0;
    int pairs = 0;
    double final_chi_ratio = 0.0;
    /// First query index with the quantity at or below 1% of its initial value.
    std::optional<int> mmr_1pct, true_1pct;
    /// First query index with mmr <= tau.
    std::optional<int> mmr_zero;
};

struct ProcedureResult {
    Procedure procedure;
    std::vector<RepetitionResult> reps;
    /// Per-query mean across the successful repetitions; runs that ended
    /// early carry their last snapshot forward.
    std::vector<MetricSnapshot> mean_curve;
};

struct ExperimentResult {
    std::vector<ProcedureResult> procedures;
    Json summary() const;
};

/// Per-rep instance for the plan's domain.
Instance experiment_instance(const ExperimentPlan& plan, int rep);

/// Runs every procedure on every repetition; failures are recorded per
/// repetition. Writes <dir>/<procedure>.csv (mean curve),
/// <dir>/<procedure>_rep<i>.csv and <dir>/summary.json when out_dir is set.
ExperimentResult run_experiment(const ExperimentPlan& plan);

ExperimentPlan plan_from_json(const Json& j, const std::string& path = "plan");

/// Sessions over HTTP:
///   POST   /api/sessions              create; body {random|autonomic|instance, config..., simulated}
///   GET    /api/sessions/{id}         view
///   POST   /api/sessions/{id}/answer  {"response": "yes"|"no"|"unsure"|"auto"}
///   POST   /api/sessions/{id}/stop    terminate (idempotent)
///   DELETE /api/sessions/{id}
class SessionService {
public:
    /// With a state directory every transition is written to <dir>/<id>.json
    /// and existing snapshots are loaded at construction.
    explicit SessionService(std::string state_dir = {}, std::string static_dir = {});
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    /// Binds and serves until stop(); returns false if the bind failed.
    bool listen(const std::string& host, int port);
    /// Binds to a free port and returns it, or -1.
    int bind_any(const std::string& host);
    /// Serves on a socket bound by bind_any().
    bool listen_after_bind();
    void stop();
    bool running() const;

    /// HTTP-free core, also used by the handlers. Each returns {status, body}.
    std::pair<int, Json> create(const Json& body);
    std::pair<int, Json> view(const std::string& id);
    std::pair<int, Json> answer(const std::string& id, const Json& body);
    std::pair<int, Json> stop_session(const std::string& id);
    std::pair<int, Json> remove(const std::string& id);

    size_t size() const;

private:
    struct Entry {
        Entry(std::string i, bool sim, std::string c, std::string u, ElicitationSession s)
            : id(std::move(i)), simulated(sim), created(std::move(c)), updated(std::move(u)),
              session(std::move(s)) {}

        std::string id;
        bool simulated = false;
        std::string created, updated;
        ElicitationSession session;
        std::mutex mu;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    Json view_of(const Entry& e) const;
    void persist(const Entry& e) const;
    void load_all();
    void routes();

    std::string state_dir_, static_dir_;
    std::unique_ptr<httplib::Server> server_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    unsigned long next_id_ = 1;
};

/// Command line entry point; returns the process exit code: 0 on a
/// certified result, 2 when uncertified, 1 on bad input.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// JSON view of a session as served by GET; `simulated` controls whether
/// true-regret fields appear.
Json session_view(const std::string& id, const ElicitationSession& s, bool simulated);

} // namespace regretel
