#pragma once

// JSON file formats for sets, plant models, controllers, invariant sets and
// guarantee reports. Numbers are written with round-trip precision.

#include <handsoff/conditions.hpp>
#include <handsoff/controller.hpp>
#include <handsoff/model.hpp>

#include <json.hpp>

#include <stdexcept>
#include <string>

namespace handsoff {

using Json = nlohmann::json;

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Json matrix_to_json(const Matrix& M);
Json vector_to_json(const Vector& v);
// `cols` is used when the array is empty (an n x 0 or 0 x cols matrix).
Matrix matrix_from_json(const Json& j, const std::string& what, Eigen::Index cols = 0);
Vector vector_from_json(const Json& j, const std::string& what);

// {"H": [[...]], "b": [...]} or {"V": [[...], ...]} (one point per row)
Json polytope_to_json(const HPolytope& P);
Json polytope_to_json(const VPolytope& P);
HPolytope hpolytope_from_json(const Json& j, const std::string& what);

// {"A", "B", "Ts", "sets": {"S", "X", "U", "D", "W", "V"},
//  "params": {"eps_p", "eps_m", "eps_s", "delta"}}
Json model_to_json(const PlantModel& m);
PlantModel model_from_json(const Json& j);

// {"A_K", "B_K", "C_K", "D_K"}
Json controller_to_json(const ControllerRealization& K);
ControllerRealization controller_from_json(const Json& j);

// {"H_I_tilde", "H_O", optional "H_I"}
Json sets_to_json(const InvariantSets& s);
InvariantSets sets_from_json(const Json& j);

Json report_to_json(const GuaranteeReport& r);
Json validation_to_json(const ValidationReport& r);
Json derived_to_json(const DerivedSets& d, const HZOuterBox& hz);

// Reads and parses a file; ParseError names the path on failure.
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace handsoff
