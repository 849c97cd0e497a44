#pragma once

#include "rrmdp/errors.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rrmdp {

/// One offline transition (s, a, r, s').
struct Transition {
    int s;
    int a;
    double r;
    int sp;

    friend bool operator==(const Transition&, const Transition&) = default;
};

/// Offline transitions drawn under the nominal model, plus how they were drawn.
struct Dataset {
    int n_states = 0;
    int n_actions = 0;
    std::string mu_spec = "uniform"; ///< descriptor of the data-generating distribution
    std::uint64_t seed = 0;
    std::vector<Transition> records;

    std::size_t size() const noexcept { return records.size(); }

    void validate() const {
        if (n_states < 1 || n_actions < 1) throw ConfigError("dataset: n_states and n_actions must be positive");
        if (records.empty()) throw ConfigError("dataset is empty");
        for (const auto& t : records)
            if (t.s < 0 || t.s >= n_states || t.sp < 0 || t.sp >= n_states || t.a < 0 ||
                t.a >= n_actions)
                throw ConfigError("dataset record has an out-of-range index");
    }
};

} // namespace rrmdp
