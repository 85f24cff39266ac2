#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fivegang/errors.hpp"

namespace fivegang::cloud {

inline constexpr double kSigmaFloor = 1e-9;
inline constexpr double kDefaultThreshold = 4.0;

/// Per-index baseline of a stream learnt from training windows.
struct AnomalyModel
{
    std::vector<double> mean;
    std::vector<double> sigma;
    std::size_t trained_on = 0;
    double threshold_k = kDefaultThreshold;

    nlohmann::json to_json() const
    {
        return {{"length", mean.size()}, {"trained_on", trained_on}, {"threshold_k", threshold_k},
                {"mean", mean},          {"sigma", sigma}};
    }
};

struct Alarm
{
    std::string stream;
    std::int64_t t_us = 0;
    double score = 0.0;
    double threshold_k = 0.0;
    std::size_t index = 0; // sample index attaining the score
};

/// Sample mean and unbiased standard deviation per index, sigma floored.
inline AnomalyModel train(std::span<const std::vector<double>> windows, double threshold_k = kDefaultThreshold)
{
    if (windows.size() < 2)
        throw InsufficientTraining("need at least 2 training windows, got " + std::to_string(windows.size()));
    const std::size_t n = windows.front().size();
    for (const auto& w : windows)
        if (w.size() != n)
            throw ShapeMismatch("training windows differ in length");
    AnomalyModel m;
    m.trained_on = windows.size();
    m.threshold_k = threshold_k;
    m.mean.assign(n, 0.0);
    m.sigma.assign(n, 0.0);
    const double count = static_cast<double>(windows.size());
    for (const auto& w : windows)
        for (std::size_t i = 0; i < n; ++i)
            m.mean[i] += w[i];
    for (auto& v : m.mean)
        v /= count;
    for (const auto& w : windows)
        for (std::size_t i = 0; i < n; ++i)
            m.sigma[i] += (w[i] - m.mean[i]) * (w[i] - m.mean[i]);
    for (auto& s : m.sigma)
        s = std::max(kSigmaFloor, std::sqrt(s / (count - 1.0)));
    return m;
}

/// max_i |x_i - mean_i| / sigma_i, with the index where it is attained.
inline std::pair<double, std::size_t> anomaly_score(const AnomalyModel& m, std::span<const double> window)
{
    if (window.size() != m.mean.size())
        throw ShapeMismatch("window length " + std::to_string(window.size()) + " != model length " +
                            std::to_string(m.mean.size()));
    double best = 0.0;
    std::size_t at = 0;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const double z = std::abs(window[i] - m.mean[i]) / m.sigma[i];
        if (z > best) {
            best = z;
            at = i;
        }
    }
    return {best, at};
}

inline std::optional<Alarm> detect(const AnomalyModel& m, std::span<const double> window)
{
    const auto [score, at] = anomaly_score(m, window);
    if (!(score > m.threshold_k))
        return std::nullopt;
    Alarm a;
    a.score = score;
    a.threshold_k = m.threshold_k;
    a.index = at;
    return a;
}

} // namespace fivegang::cloud
