#include <handsoff/io.hpp>

#include <cmath>
#include <fstream>

namespace handsoff {

namespace {

const Json& field(const Json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(what + ": missing field \"" + key + "\"");
    return j.at(key);
}

double number(const Json& j, const std::string& what) {
    if (!j.is_number()) throw ParseError(what + ": expected a number");
    return j.get<double>();
}

double optional_number(const Json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::quiet_NaN();
    return number(j.at(key), what + "." + key);
}

}  // namespace

Json matrix_to_json(const Matrix& M) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
        rows.push_back(row);
    }
    return rows;
}

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Matrix matrix_from_json(const Json& j, const std::string& what, Eigen::Index cols) {
    if (!j.is_array()) throw ParseError(what + ": expected an array of rows");
    if (j.empty()) return Matrix(0, cols);
    const auto r = j.size();
    if (!j[0].is_array()) throw ParseError(what + ": expected an array of rows");
    const auto c = j[0].size();
    Matrix M(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        if (!j[i].is_array() || j[i].size() != c) throw ParseError(what + ": ragged row " + std::to_string(i));
        for (std::size_t k = 0; k < c; ++k) M(i, k) = number(j[i][k], what);
    }
    return M;
}

Vector vector_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw ParseError(what + ": expected an array");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], what);
    return v;
}

Json polytope_to_json(const HPolytope& P) { return {{"H", matrix_to_json(P.H())}, {"b", vector_to_json(P.b())}}; }

Json polytope_to_json(const VPolytope& P) { return {{"V", matrix_to_json(P.V.transpose())}}; }

HPolytope hpolytope_from_json(const Json& j, const std::string& what) {
    try {
        if (j.is_object() && j.contains("V")) {
            const Matrix pts = matrix_from_json(j.at("V"), what + ".V");
            if (pts.rows() == 0) throw ParseError(what + ": empty vertex list");
            return to_hpolytope(VPolytope(pts.transpose()));
        }
        const Matrix H = matrix_from_json(field(j, "H", what), what + ".H");
        const Vector b = vector_from_json(field(j, "b", what), what + ".b");
        return {H, b};
    } catch (const std::invalid_argument& e) {
        throw ParseError(what + ": " + e.what());
    } catch (const SetError& e) {
        throw ParseError(what + ": " + e.what());
    }
}

Json model_to_json(const PlantModel& m) {
    Json params = Json::object();
    auto put = [&](const char* key, double v) {
        if (!std::isnan(v)) params[key] = v;
    };
    put("eps_p", m.eps_p);
    put("eps_m", m.eps_m);
    put("eps_s", m.eps_s);
    put("delta", m.delta);
    return {{"A", matrix_to_json(m.A)},
            {"B", matrix_to_json(m.B)},
            {"Ts", m.Ts},
            {"sets",
             {{"S", polytope_to_json(m.S)},
              {"X", polytope_to_json(m.X)},
              {"U", polytope_to_json(m.U)},
              {"D", polytope_to_json(m.D)},
              {"W", polytope_to_json(m.W)},
              {"V", polytope_to_json(m.V)}}},
            {"params", params}};
}

PlantModel model_from_json(const Json& j) {
    PlantModel m;
    m.A = matrix_from_json(field(j, "A", "model"), "model.A");
    m.B = matrix_from_json(field(j, "B", "model"), "model.B");
    if (j.contains("Ts")) m.Ts = number(j.at("Ts"), "model.Ts");
    const Json& sets = field(j, "sets", "model");
    m.S = hpolytope_from_json(field(sets, "S", "model.sets"), "model.sets.S");
    m.X = hpolytope_from_json(field(sets, "X", "model.sets"), "model.sets.X");
    m.U = hpolytope_from_json(field(sets, "U", "model.sets"), "model.sets.U");
    m.D = hpolytope_from_json(field(sets, "D", "model.sets"), "model.sets.D");
    m.W = hpolytope_from_json(field(sets, "W", "model.sets"), "model.sets.W");
    m.V = hpolytope_from_json(field(sets, "V", "model.sets"), "model.sets.V");
    const Json params = j.contains("params") ? j.at("params") : Json::object();
    m.eps_p = optional_number(params, "eps_p", "model.params");
    m.eps_m = optional_number(params, "eps_m", "model.params");
    m.eps_s = optional_number(params, "eps_s", "model.params");
    m.delta = optional_number(params, "delta", "model.params");
    try {
        m.check_dimensions();
    } catch (const std::invalid_argument& e) {
        throw ParseError(e.what());
    }
    return m;
}

Json controller_to_json(const ControllerRealization& K) {
    return {{"A_K", matrix_to_json(K.A_K)},
            {"B_K", matrix_to_json(K.B_K)},
            {"C_K", matrix_to_json(K.C_K)},
            {"D_K", matrix_to_json(K.D_K)}};
}

ControllerRealization controller_from_json(const Json& j) {
    ControllerRealization K;
    K.D_K = matrix_from_json(field(j, "D_K", "controller"), "controller.D_K");
    K.A_K = matrix_from_json(field(j, "A_K", "controller"), "controller.A_K");
    K.B_K = matrix_from_json(field(j, "B_K", "controller"), "controller.B_K", K.D_K.cols());
    K.C_K = matrix_from_json(field(j, "C_K", "controller"), "controller.C_K", K.A_K.rows());
    if (K.C_K.rows() == 0 && K.A_K.rows() == 0) K.C_K.resize(K.D_K.rows(), 0);
    try {
        K.check_dimensions();
    } catch (const std::invalid_argument& e) {
        throw ParseError(e.what());
    }
    return K;
}

Json sets_to_json(const InvariantSets& s) {
    Json out = {{"H_I_tilde", matrix_to_json(s.lifted_inner.H())}, {"H_O", matrix_to_json(s.outer.H())}};
    if (s.inner_explicit) out["H_I"] = matrix_to_json(*s.inner_explicit);
    return out;
}

InvariantSets sets_from_json(const Json& j) {
    InvariantSets s;
    try {
        s.lifted_inner = SymmetricBoxImage(matrix_from_json(field(j, "H_I_tilde", "sets"), "sets.H_I_tilde"));
        s.outer = SymmetricBoxImage(matrix_from_json(field(j, "H_O", "sets"), "sets.H_O"));
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("sets: ") + e.what());
    }
    if (j.contains("H_I") && !j.at("H_I").is_null()) s.inner_explicit = matrix_from_json(j.at("H_I"), "sets.H_I");
    return s;
}

Json report_to_json(const GuaranteeReport& r) {
    Json conditions = Json::array();
    for (const auto& c : r.conditions) {
        conditions.push_back({{"name", c.name},
                              {"verdict", std::string(to_string(c.verdict))},
                              {"worst_slack", c.worst_slack},
                              {"worst_facet", c.worst_facet},
                              {"required", c.required},
                              {"detail", c.detail}});
    }
    return {{"all_pass", r.all_pass()},
            {"conditions", conditions},
            {"spectral_radius", r.spectral_radius},
            {"alpha", r.alpha},
            {"beta", r.beta},
            {"mu", r.mu},
            {"T_max", r.T_max},
            {"alpha_direct", r.inner.alpha_direct},
            {"beta_direct", r.inner.beta_direct},
            {"tail_bound", r.inner.tail_bound}};
}

Json validation_to_json(const ValidationReport& r) {
    Json checks = Json::array();
    for (const auto& c : r.checks) {
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"margin", c.margin}, {"detail", c.detail}});
    }
    return {{"passed", r.passed()}, {"checks", checks}};
}

Json derived_to_json(const DerivedSets& d, const HZOuterBox& hz) {
    return {{"S_plus", polytope_to_json(d.S_plus)},
            {"S_c", polytope_to_json(d.S_c)},
            {"N", polytope_to_json(d.N)},
            {"S_monitor", polytope_to_json(d.S_monitor)},
            {"H_Z", matrix_to_json(hz.H_Z)},
            {"H_Z_symmetrized", hz.symmetrized},
            {"H_Z_note", hz.note}};
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace handsoff
