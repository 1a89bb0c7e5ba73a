#include "hedge/io.hpp"

#include <stdexcept>

namespace hedge {

using nlohmann::json;

json to_json(const MarketParams& m) {
    return {{"mu", m.mu},         {"sigma", m.sigma},       {"gamma", m.gamma},     {"shares", m.shares},
            {"xi_vol", m.xi_vol}, {"phi_init", m.phi_init}, {"horizon", m.horizon}};
}

json to_json(const CostSpec& c) {
    if (!c.liquidity.is_constant()) throw std::invalid_argument("only constant liquidity can be serialized");
    json j = {{"kind", c.kind == CostKind::quadratic ? "quadratic" : "power"},
              {"lambda", c.lambda},
              {"liquidity", c.liquidity.level()}};
    if (c.kind == CostKind::power) j["q"] = c.q;
    return j;
}

json to_json(const TimeGrid& g) { return {{"horizon", g.horizon()}, {"n_steps", g.n_steps()}}; }

MarketParams market_from_json(const json& j) {
    MarketParams m;
    m.mu = j.at("mu").get<double>();
    m.sigma = j.at("sigma").get<double>();
    m.gamma = j.at("gamma").get<double>();
    m.shares = j.at("shares").get<double>();
    m.xi_vol = j.at("xi_vol").get<double>();
    m.phi_init = j.at("phi_init").get<double>();
    m.horizon = j.at("horizon").get<double>();
    return m;
}

CostSpec cost_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    CostSpec c;
    if (kind == "quadratic") {
        c = CostSpec::quadratic(j.at("lambda").get<double>());
    } else if (kind == "power") {
        c = CostSpec::power(j.at("q").get<double>(), j.at("lambda").get<double>());
    } else {
        throw std::invalid_argument("unknown cost kind '" + kind + "'");
    }
    if (j.contains("liquidity")) c.liquidity = Liquidity::constant(j.at("liquidity").get<double>());
    return c;
}

TimeGrid grid_from_json(const json& j) {
    return TimeGrid(j.at("horizon").get<double>(), j.at("n_steps").get<std::size_t>());
}

}  // namespace hedge
