#pragma once

#include "mdm/core_model.hpp"
#include "mdm/io.hpp"

namespace mdm::test {

/// Plausible optical card: about 8 GHz/V detuning, Q rising with reverse bias.
inline ResonatorParams golden_resonator() {
    ResonatorParams p;
    p.lambda_ref = 1566.7e-9;
    p.lambda0_coeffs = {{1566.7e-9, 65e-12, 3e-12}};
    p.tau_c_coeffs = {{20e-12, 0.8e-12, 0.2e-12}};
    p.tau_l_coeffs = {{30e-12, 4e-12, 0.5e-12}};
    p.v_range = {-0.5, 2.5};
    p.gamma = 251e-12 / 1e-3;
    return p;
}

inline io::ModelCard golden_card() {
    io::ModelCard card;
    card.resonator = golden_resonator();
    card.electrical = ElectricalParams{};
    return card;
}

}  // namespace mdm::test
