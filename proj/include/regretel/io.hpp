#pragma once

// JSON file formats shared by the command line tool and the session service.
//
//   MDP:      {"n", "k", "gamma", "alpha": [n], "transitions": [s][a] -> [[t, p], ...]}
//   Polytope: {"lo": [n][k], "hi": [n][k], "constraints": [{"terms": [[s, a, c], ...], "rhs"}]}
//   Instance: {"mdp", "polytope", "r_true": [n][k] (optional)}
//
// Readers report the offending field as a path such as
// "mdp.transitions[3][1][0]".

#include "regretel/domains.hpp"
#include "regretel/elicitation.hpp"
#include "regretel/errors.hpp"
#include "regretel/mdp.hpp"
#include "regretel/reward_space.hpp"

#include <json.hpp>

#include <string>

namespace regretel {

using Json = nlohmann::json;

/// Malformed document; what() starts with the field path (or line:column
/// for syntax errors).
class ParseError : public ModelError {
public:
    ParseError(const std::string& path, const std::string& msg)
        : ModelError(path + ": " + msg), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// Reads and parses a file; syntax errors carry line and column.
Json read_json_file(const std::string& file);
Json parse_json(const std::string& text, const std::string& origin = "<input>");
void write_json_file(const std::string& file, const Json& j);

Json to_json(const Mdp& mdp);
Mdp mdp_from_json(const Json& j, const std::string& path = "mdp");

Json to_json(const RewardPolytope& R);
RewardPolytope polytope_from_json(const Json& j, const std::string& path = "polytope");

/// Flat vector as an n x k matrix and back.
Json matrix_json(const std::vector<double>& v, int n, int k);
std::vector<double> matrix_from_json(const Json& j, int n, int k, const std::string& path);

Json to_json(const Instance& inst);
Instance instance_from_json(const Json& j, const std::string& path = "instance");

Json to_json(const RandomMdpSpec& spec);
/// Missing fields keep their defaults.
RandomMdpSpec random_spec_from_json(const Json& j, const std::string& path = "random");
Json to_json(const AutonomicSpec& spec);
AutonomicSpec autonomic_spec_from_json(const Json& j, const std::string& path = "autonomic");

SubproblemMode parse_mode(const std::string& s);
Criterion parse_criterion(const std::string& s);
Strategy parse_strategy(const std::string& s);
QueryResponse parse_response(const std::string& s);

Json to_json(const RegretOptions& opts);
RegretOptions regret_options_from_json(const Json& j, const std::string& path = "regret");
Json to_json(const ElicitationConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
ElicitationConfig config_from_json(const Json& j, const std::string& path = "config");

Json to_json(const BoundQuery& q);
Json to_json(const MetricSnapshot& m, bool include_truth = true);
Json to_json(const WitnessConstraint& w);

/// Complete session state, doubles round-tripped exactly.
Json to_json(const ElicitationSession::State& st);
ElicitationSession::State state_from_json(const Json& j, const std::string& path = "state");

} // namespace regretel
