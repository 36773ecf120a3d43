#include "stablekit/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace stablekit {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw Error("model config: " + what + " at " + path);
}

double need_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

std::string need_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

Expr parse_field_expr(const json& j, const std::string& path) {
    const std::string s = need_string(j, path);
    try {
        return parse_expr(s);
    } catch (const ParseError& e) {
        fail(path, std::string("expression error: ") + e.what());
    }
}

} // namespace

ModelSpec parse_model_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw Error(std::string("model config: invalid JSON: ") + e.what());
    }
    ModelSpec m;
    m.name = j.value("name", std::string("custom"));
    if (!j.contains("dimension")) fail("/dimension", "missing");
    m.d = static_cast<int>(need_number(j["dimension"], "/dimension"));
    if (m.d != 1 && m.d != 2) fail("/dimension", "must be 1 or 2");
    if (!j.contains("alpha")) fail("/alpha", "missing");
    m.alpha = parse_field_expr(j["alpha"], "/alpha");
    if (!j.contains("lambda")) fail("/lambda", "missing");
    m.lambda = parse_field_expr(j["lambda"], "/lambda");

    if (j.contains("drift")) {
        if (!j["drift"].is_array()) fail("/drift", "expected an array of expressions");
        const auto& arr = j["drift"];
        if (static_cast<int>(arr.size()) != m.d) fail("/drift", "length must equal dimension");
        for (int c = 0; c < m.d; ++c)
            m.drift[static_cast<size_t>(c)] =
                parse_field_expr(arr[static_cast<size_t>(c)],
                                 "/drift/" + std::to_string(c));
    }

    if (!j.contains("sigma")) fail("/sigma", "missing");
    const json& js = j["sigma"];
    if (!js.contains("atoms") || !js["atoms"].is_array()) fail("/sigma/atoms", "missing array");
    m.sigma.d = m.d;
    for (size_t i = 0; i < js["atoms"].size(); ++i) {
        const json& atom = js["atoms"][i];
        const std::string p = "/sigma/atoms/" + std::to_string(i);
        if (!atom.contains("dir") || !atom["dir"].is_array())
            fail(p + "/dir", "missing direction");
        Vec dir = zero_vec(m.d);
        if (static_cast<int>(atom["dir"].size()) != m.d)
            fail(p + "/dir", "length must equal dimension");
        for (int c = 0; c < m.d; ++c)
            dir[c] = need_number(atom["dir"][static_cast<size_t>(c)],
                                 p + "/dir/" + std::to_string(c));
        m.sigma.dirs.push_back(dir);
        if (!atom.contains("weight")) fail(p + "/weight", "missing");
        m.sigma.weights.push_back(need_number(atom["weight"], p + "/weight"));
    }
    if (js.contains("rotation") && !js["rotation"].is_null()) {
        const std::string rname = need_string(js["rotation"]["name"], "/sigma/rotation/name");
        if (rname == "align-e1") {
            m.sigma.rotation.kind = RotationMap::Kind::AlignE1;
            if (js["rotation"].contains("r_inner"))
                m.sigma.rotation.r_inner =
                    need_number(js["rotation"]["r_inner"], "/sigma/rotation/r_inner");
            if (js["rotation"].contains("r_outer"))
                m.sigma.rotation.r_outer =
                    need_number(js["rotation"]["r_outer"], "/sigma/rotation/r_outer");
        } else {
            fail("/sigma/rotation/name", "unknown rotation '" + rname + "'");
        }
    }

    if (j.contains("nu") && !j["nu"].is_null()) {
        const json& jn = j["nu"];
        PerturbationKernel nu;
        if (jn.contains("mu_tail_q")) {
            nu.kind = PerturbationKernel::Kind::MuTail;
            nu.mu_tail_q = need_number(jn["mu_tail_q"], "/nu/mu_tail_q");
        } else {
            nu.kind = PerturbationKernel::Kind::Atoms;
            if (!jn.contains("atoms") || !jn["atoms"].is_array())
                fail("/nu/atoms", "missing array");
            for (size_t i = 0; i < jn["atoms"].size(); ++i) {
                const json& atom = jn["atoms"][i];
                const std::string p = "/nu/atoms/" + std::to_string(i);
                PerturbationKernel::AtomGen g;
                if (!atom.contains("jump") || !atom["jump"].is_array())
                    fail(p + "/jump", "missing array of expressions");
                if (static_cast<int>(atom["jump"].size()) != m.d)
                    fail(p + "/jump", "length must equal dimension");
                for (int c = 0; c < m.d; ++c)
                    g.jump[static_cast<size_t>(c)] =
                        parse_field_expr(atom["jump"][static_cast<size_t>(c)],
                                         p + "/jump/" + std::to_string(c));
                if (!atom.contains("mass")) fail(p + "/mass", "missing");
                g.mass = parse_field_expr(atom["mass"], p + "/mass");
                nu.atoms.push_back(std::move(g));
            }
            if (jn.contains("beta")) nu.beta = parse_field_expr(jn["beta"], "/nu/beta");
        }
        if (!jn.contains("eps_nu")) fail("/nu/eps_nu", "missing");
        nu.eps_nu = need_number(jn["eps_nu"], "/nu/eps_nu");
        m.nu = std::move(nu);
    }

    if (!j.contains("bounds")) fail("/bounds", "missing");
    const json& jb = j["bounds"];
    m.alpha_min = need_number(jb.value("alpha_min", json()), "/bounds/alpha_min");
    m.alpha_max = need_number(jb.value("alpha_max", json()), "/bounds/alpha_max");
    m.lambda_min = need_number(jb.value("lambda_min", json()), "/bounds/lambda_min");
    m.lambda_max = need_number(jb.value("lambda_max", json()), "/bounds/lambda_max");
    m.eta = j.value("eta", 1.0);
    m.h_frak = j.value("h_frak", 1.0);
    m.eps_balance = j.value("eps_balance", 1.0);
    m.check_basic();
    return m;
}

ModelSpec load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model_json(buf.str());
}

std::string model_to_json(const ModelSpec& m) {
    std::ostringstream os;
    os.precision(17);
    os << "{\n  \"name\": \"" << m.name << "\",\n  \"dimension\": " << m.d
       << ",\n  \"alpha\": \"" << m.alpha.print() << "\",\n  \"lambda\": \"" << m.lambda.print()
       << "\",\n  \"drift\": [";
    for (int c = 0; c < m.d; ++c) {
        os << (c ? ", " : "");
        os << '"' << (m.drift[static_cast<size_t>(c)].empty()
                          ? "0"
                          : m.drift[static_cast<size_t>(c)].print())
           << '"';
    }
    os << "],\n  \"sigma\": {\"atoms\": [";
    for (size_t i = 0; i < m.sigma.size(); ++i) {
        os << (i ? ", " : "") << "{\"dir\": [";
        for (int c = 0; c < m.d; ++c) os << (c ? ", " : "") << m.sigma.dirs[i][c];
        os << "], \"weight\": " << m.sigma.weights[i] << "}";
    }
    os << "], \"rotation\": ";
    if (m.sigma.rotation.active())
        os << "{\"name\": \"align-e1\", \"r_inner\": " << m.sigma.rotation.r_inner
           << ", \"r_outer\": " << m.sigma.rotation.r_outer << "}";
    else
        os << "null";
    os << "},\n  \"nu\": ";
    if (!m.nu) {
        os << "null";
    } else if (m.nu->kind == PerturbationKernel::Kind::MuTail) {
        os << "{\"mu_tail_q\": " << m.nu->mu_tail_q << ", \"eps_nu\": " << m.nu->eps_nu << "}";
    } else {
        os << "{\"atoms\": [";
        for (size_t i = 0; i < m.nu->atoms.size(); ++i) {
            const auto& g = m.nu->atoms[i];
            os << (i ? ", " : "") << "{\"jump\": [";
            for (int c = 0; c < m.d; ++c)
                os << (c ? ", " : "") << '"' << g.jump[static_cast<size_t>(c)].print() << '"';
            os << "], \"mass\": \"" << g.mass.print() << "\"}";
        }
        os << "], \"beta\": \"" << (m.nu->beta.empty() ? "0" : m.nu->beta.print())
           << "\", \"eps_nu\": " << m.nu->eps_nu << "}";
    }
    os << ",\n  \"bounds\": {\"alpha_min\": " << m.alpha_min
       << ", \"alpha_max\": " << m.alpha_max << ", \"lambda_min\": " << m.lambda_min
       << ", \"lambda_max\": " << m.lambda_max << "},\n  \"eta\": " << m.eta
       << ",\n  \"h_frak\": " << m.h_frak << ",\n  \"eps_balance\": " << m.eps_balance
       << "\n}\n";
    return os.str();
}

std::string model_hash(const ModelSpec& model) {
    const std::string s = model_to_json(model);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

} // namespace stablekit
