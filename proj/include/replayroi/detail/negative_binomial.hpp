#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace replayroi {

template <class Rng>
std::int64_t sample_negative_binomial(Rng& rng, double mean, double phi) {
    if (mean <= 0.0) return 0;
    std::gamma_distribution<double> gamma(phi, mean / phi);
    const double rate = gamma(rng);
    if (rate <= 0.0) return 0;
    std::poisson_distribution<std::int64_t> poisson(rate);
    return poisson(rng);
}

} // namespace replayroi
