#include "hedge/nn/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace hedge::nn {

using nlohmann::json;

namespace {

json number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

double parse_number(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    throw std::invalid_argument("expected a number in checkpoint");
}

}  // namespace

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (std::size_t i = 0; i < m.size(); ++i) data.push_back(number(m[i]));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto& data = j.at("data");
    if (data.size() != rows * cols) throw std::invalid_argument("matrix data length does not match shape");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) m[i] = parse_number(data[i]);
    return m;
}

json spec_to_json(const NetSpec& spec) {
    return {{"input_dim", spec.input_dim},  {"hidden", spec.hidden},           {"output_dim", spec.output_dim},
            {"batchnorm", spec.batchnorm},  {"bn_momentum", spec.bn_momentum}, {"bn_eps", spec.bn_eps}};
}

NetSpec spec_from_json(const json& j) {
    NetSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.output_dim = j.at("output_dim").get<std::size_t>();
    s.batchnorm = j.at("batchnorm").get<std::vector<bool>>();
    s.bn_momentum = j.value("bn_momentum", 0.1);
    s.bn_eps = j.value("bn_eps", 1e-5);
    s.validate();
    return s;
}

json params_to_json(const ParamStore& params) {
    json linear = json::array();
    for (const auto& l : params.linear) {
        linear.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", matrix_to_json(l.bias)}});
    }
    json bn = json::array();
    for (const auto& b : params.bn) {
        json e = {{"enabled", b.enabled}};
        if (b.enabled) {
            e["scale"] = matrix_to_json(b.scale);
            e["shift"] = matrix_to_json(b.shift);
            e["running_mean"] = matrix_to_json(b.running_mean);
            e["running_var"] = matrix_to_json(b.running_var);
        }
        bn.push_back(std::move(e));
    }
    return {{"linear", std::move(linear)}, {"bn", std::move(bn)}};
}

ParamStore params_from_json(const json& j, const NetSpec& spec) {
    ParamStore p;
    for (const auto& l : j.at("linear")) {
        p.linear.push_back({matrix_from_json(l.at("weight")), matrix_from_json(l.at("bias"))});
    }
    for (const auto& e : j.at("bn")) {
        BnLayer b;
        b.enabled = e.at("enabled").get<bool>();
        if (b.enabled) {
            b.scale = matrix_from_json(e.at("scale"));
            b.shift = matrix_from_json(e.at("shift"));
            b.running_mean = matrix_from_json(e.at("running_mean"));
            b.running_var = matrix_from_json(e.at("running_var"));
        }
        p.bn.push_back(std::move(b));
    }
    p.check_shapes(spec);
    return p;
}

json optimizer_to_json(const Optimizer& opt) {
    json m = json::array();
    json v = json::array();
    for (const auto& x : opt.first_moment()) m.push_back(matrix_to_json(x));
    for (const auto& x : opt.second_moment()) v.push_back(matrix_to_json(x));
    const auto& a = opt.adam_config();
    return {{"algorithm", opt.algorithm() == Algorithm::adam ? "adam" : "sgd"},
            {"beta1", a.beta1},
            {"beta2", a.beta2},
            {"eps", a.eps},
            {"adam_lr", a.lr},
            {"lr", opt.lr()},
            {"steps", opt.step_count()},
            {"adam_steps", opt.adam_step_count()},
            {"m", std::move(m)},
            {"v", std::move(v)}};
}

Optimizer optimizer_from_json(const json& j) {
    AdamConfig a;
    a.beta1 = j.at("beta1").get<double>();
    a.beta2 = j.at("beta2").get<double>();
    a.eps = j.at("eps").get<double>();
    a.lr = j.value("adam_lr", j.at("lr").get<double>());
    const auto alg = j.at("algorithm").get<std::string>();
    if (alg != "adam" && alg != "sgd") throw std::invalid_argument("unknown optimizer algorithm " + alg);
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    for (const auto& x : j.at("m")) m.push_back(matrix_from_json(x));
    for (const auto& x : j.at("v")) v.push_back(matrix_from_json(x));
    Optimizer o = Optimizer::adam(a);
    o.restore(alg == "adam" ? Algorithm::adam : Algorithm::sgd, a, j.at("lr").get<double>(),
              j.at("steps").get<std::uint64_t>(), j.value("adam_steps", j.at("steps").get<std::uint64_t>()),
              std::move(m), std::move(v));
    return o;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(1) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path);
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

}  // namespace hedge::nn
