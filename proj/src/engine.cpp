#include "hedge/engine.hpp"

#include <algorithm>
#include <stdexcept>

namespace hedge {

namespace {

class ConstantSession final : public EngineSession {
public:
    explicit ConstantSession(double rate) : rate_(rate) {}
    void rates(const StepBatch&, std::span<double> out) override { std::fill(out.begin(), out.end(), rate_); }

private:
    double rate_;
};

}  // namespace

std::unique_ptr<EngineSession> ZeroEngine::start(std::size_t) const { return std::make_unique<ConstantSession>(0.0); }

std::unique_ptr<EngineSession> ConstantRateEngine::start(std::size_t) const {
    return std::make_unique<ConstantSession>(rate_);
}

void require_grid(const TimeGrid& expected, const TimeGrid& actual, const std::string& engine) {
    if (!(expected == actual)) {
        throw std::invalid_argument(engine + " engine was built for T=" + std::to_string(expected.horizon()) +
                                    ", N=" + std::to_string(expected.n_steps()) + " but evaluated on T=" +
                                    std::to_string(actual.horizon()) + ", N=" + std::to_string(actual.n_steps()));
    }
}

}  // namespace hedge
