#pragma once
// Per-detector deadtime bookkeeping shared by the hardware-deadtime replay
// and the deadtime exploit: sensitivity is the minimum over a set of active
// block windows, each a hard-dead interval followed by a recovery ramp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "linksim/linksim.hpp"

namespace qkd::linksim {

struct deadtime_state {
    std::deque<uint64_t> window_starts;
    uint64_t dead_gates = 0;
    std::vector<double> ramp; // per-gate sensitivity after the dead interval

    uint64_t full_gates() const { return dead_gates + ramp.size(); }

    // Sensitivity multiplier at gate g; prunes expired windows on the way.
    double sensitivity(uint64_t g) {
        while (!window_starts.empty() && g >= window_starts.front() + full_gates())
            window_starts.pop_front();
        double m = 1.0;
        for (uint64_t s : window_starts) {
            if (g < s) continue; // cross-link window not yet begun
            uint64_t dt = g - s;
            double v = dt < dead_gates ? 0.0 : ramp[std::size_t(dt - dead_gates)];
            m = std::min(m, v);
        }
        return m;
    }

    void push(uint64_t g) { window_starts.push_back(g); }
};

inline deadtime_state make_deadtime_state(const detector_model& d) {
    deadtime_state st;
    st.dead_gates = uint64_t(std::llround(d.deadtime_s / d.gate_period_s));
    if (!d.recovery_profile.empty()) {
        st.ramp = d.recovery_profile;
    } else if (d.recovery_end_s > d.deadtime_s) {
        auto ramp_gates =
            uint64_t(std::llround((d.recovery_end_s - d.deadtime_s) / d.gate_period_s));
        st.ramp.reserve(std::size_t(ramp_gates));
        for (uint64_t k = 0; k < ramp_gates; ++k)
            st.ramp.push_back(double(k + 1) / double(ramp_gates));
    }
    if (st.ramp.empty()) st.ramp.push_back(1.0); // degenerate: instant recovery
    return st;
}

} // namespace qkd::linksim
