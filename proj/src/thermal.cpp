#include "mdm/thermal.hpp"

#include "mdm/errors.hpp"

#include <cmath>
#include <sstream>

namespace mdm {

void ThermalParams::validate() const {
    if (!(gamma > 0.0) || !(rh > 0.0) || !(tau_h > 0.0))
        throw Error(ErrorCode::BadArgument, "gamma, rh and tau_h must be positive");
}

HeaterPower heater_power(const ThermalParams& tp, double v_h) {
    if (!(v_h >= 0.0 && v_h <= kMaxHeaterVoltage)) {
        std::ostringstream os;
        os << "heater voltage " << v_h << " V outside [0, " << kMaxHeaterVoltage << "] V";
        throw Error(ErrorCode::HeaterOverdrive, os.str());
    }
    return {v_h * v_h / tp.rh, v_h / tp.rh};
}

double wavelength_shift_static(const ThermalParams& tp, double ph) {
    if (!(ph >= 0.0)) throw Error(ErrorCode::BadArgument, "heater power must be >= 0");
    return tp.gamma * ph;
}

ThermalState wavelength_shift_step(const ThermalParams& tp, const ThermalState& st, double ph, double dt) {
    if (!tp.dynamic) throw Error(ErrorCode::BadArgument, "wavelength_shift_step requires dynamic mode");
    if (!(dt > 0.0)) throw Error(ErrorCode::BadArgument, "dt must be positive");
    const double target = wavelength_shift_static(tp, ph);
    return {target + (st.d_lambda - target) * std::exp(-dt / tp.tau_h)};
}

}  // namespace mdm
