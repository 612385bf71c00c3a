#include "mdm/electrical.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <cmath>
#include <sstream>

namespace mdm {

void ElectricalParams::validate() const {
    for (double x : {cj0, rs, cox, rsi, cpad, z0, rh}) {
        if (!(x > 0.0) || !std::isfinite(x))
            throw Error(ErrorCode::BadArgument, "resistances and capacitances must be positive");
    }
    if (!(mj > 0.0 && mj < 1.0)) throw Error(ErrorCode::BadArgument, "mj must lie in (0, 1)");
    if (!(vbi > 0.0)) throw Error(ErrorCode::BadArgument, "vbi must be positive");
}

double junction_capacitance(const ElectricalParams& ep, double v_m) {
    if (!(v_m > ep.forward_limit())) {
        std::ostringstream os;
        os << "junction voltage " << v_m << " V below depletion limit " << ep.forward_limit() << " V";
        throw Error(ErrorCode::ForwardBiasLimit, os.str());
    }
    return ep.cj0 / std::pow(1.0 + v_m / ep.vbi, ep.mj);
}

ElectricalDerivatives network_derivatives(const ElectricalParams& ep, const ElectricalState& st, double v_src) {
    const double i_sub = (st.v1 - st.v_cox) / ep.rsi;
    const double i_j = (st.v1 - st.v_m) / ep.rs;
    return {((v_src - st.v1) / ep.z0 - i_sub - i_j) / ep.cpad, i_sub / ep.cox,
            i_j / junction_capacitance(ep, st.v_m)};
}

NetworkCurrents network_currents(const ElectricalParams& ep, const ElectricalState& st, double v_src,
                                 const ElectricalDerivatives& d) {
    return {(v_src - st.v1) / ep.z0, ep.cpad * d.dv1, ep.cox * d.dv_cox,
            junction_capacitance(ep, st.v_m) * d.dv_m};
}

std::complex<double> input_impedance(const ElectricalParams& ep, double v_bias, double f_hz) {
    if (!(f_hz > 0.0)) throw Error(ErrorCode::BadArgument, "frequency must be positive");
    using namespace std::complex_literals;
    const double w = kTwoPi * f_hz;
    const std::complex<double> y_pad = 1.0i * w * ep.cpad;
    const std::complex<double> y_sub = 1.0 / (ep.rsi + 1.0 / (1.0i * w * ep.cox));
    const std::complex<double> y_j = 1.0 / (ep.rs + 1.0 / (1.0i * w * junction_capacitance(ep, v_bias)));
    return 1.0 / (y_pad + y_sub + y_j);
}

std::complex<double> s11(const ElectricalParams& ep, double v_bias, double f_hz) {
    const auto z = input_impedance(ep, v_bias, f_hz);
    return (z - ep.z0) / (z + ep.z0);
}

double electrical_bandwidth(const ElectricalParams& ep, double v_bias) {
    return 1.0 / (kTwoPi * ep.rs * junction_capacitance(ep, v_bias));
}

std::vector<S11Point> s11_sweep(const ElectricalParams& ep, double v_bias, const std::vector<double>& freqs_hz) {
    std::vector<S11Point> out;
    out.reserve(freqs_hz.size());
    for (double f : freqs_hz) out.push_back({f, s11(ep, v_bias, f)});
    return out;
}

}  // namespace mdm
