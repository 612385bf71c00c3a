#pragma once

#include "mdm/core_model.hpp"
#include "mdm/electrical.hpp"
#include "mdm/stimulus.hpp"
#include "mdm/thermal.hpp"
#include "mdm/trace.hpp"

#include <array>
#include <limits>
#include <optional>

namespace mdm {

/// Time derivative of the energy amplitude in the analytic frame of `rp.lambda_ref`.
[[nodiscard]] ResonatorState resonator_derivatives(const ResonatorParams& rp, const ResonatorState& st, double v_m,
                                                   double d_lambda, FieldSample e_in);

/// Eout = Ein - j mu a.
[[nodiscard]] FieldSample output_field(const ResonatorParams& rp, const ResonatorState& st, double v_m,
                                       FieldSample e_in);

enum class IntegrationMethod {
    DormandPrince45,  // explicit embedded 5(4) pair
    Rosenbrock23,     // linearly implicit, L-stable 2(3) pair
    Rosenbrock34,     // linearly implicit 4(3) pair
    Rodas4,           // stiffly accurate, L-stable 4(3) pair
};

[[nodiscard]] const char* to_string(IntegrationMethod m) noexcept;

enum class InitialCondition { SteadyState, Zero };

struct SolverConfig {
    double rel_tol = 1e-6;
    double abs_tol_field = 1e-9;    // sqrt(W), applied to mu*a
    double abs_tol_voltage = 1e-6;  // V
    double max_step = std::numeric_limits<double>::infinity();
    double min_step = 1e-20;
    double t_end = 0.0;
    IntegrationMethod method = IntegrationMethod::DormandPrince45;
    InitialCondition initial = InitialCondition::SteadyState;
    std::optional<ResonatorState> initial_resonator;  // overrides `initial` for the optical state

    void validate() const;
};

/// Full joint state: optical amplitude, network voltages, thermo-optic shift.
struct SimState {
    ResonatorState resonator;
    ElectricalState electrical;
    ThermalState thermal;
    double t = 0.0;
};

/// Baseband steady-state amplitude for the instantaneous drive at time t.
[[nodiscard]] ResonatorState steady_state_baseband(const ResonatorParams& rp, double v_m, double d_lambda,
                                                   FieldSample e_in, double laser_offset_hz);

/// Joint adaptive integration of the optical, electrical and thermal states.
[[nodiscard]] Trace integrate_adaptive(const ResonatorParams& rp, const ElectricalParams& ep,
                                       const ThermalParams& tp, const SolverConfig& cfg, const Stimulus& drive);

struct BaselineConfig {
    double dt = 100e-15;
    double t_end = 0.0;
    bool nonlinear_cj = false;  // constant Cj = Cj0 unless set
    std::size_t record_stride = 1;
    InitialCondition initial = InitialCondition::SteadyState;
};

/// Clock-driven reference: per tick, exact homogeneous + steady-state update with frozen
/// coefficients and one backward-Euler electrical substep.
[[nodiscard]] Trace integrate_fixed_baseline(const ResonatorParams& rp, const ElectricalParams& ep,
                                             const ThermalParams& tp, const BaselineConfig& cfg,
                                             const Stimulus& drive);

namespace detail {

inline constexpr std::size_t kStateSize = 6;  // ax, ay, v1, v_cox, v_m, d_lambda
using StateVector = std::array<double, kStateSize>;
using Jacobian = std::array<std::array<double, kStateSize>, kStateSize>;

/// Right-hand side of the coupled system; exposed for tests.
class CoupledSystem {
public:
    CoupledSystem(const ResonatorParams& rp, const ElectricalParams& ep, const ThermalParams& tp,
                  const Stimulus& drive);

    [[nodiscard]] StateVector derivatives(double t, double piece_time, const StateVector& y) const;
    /// Jacobian d f / d y and the explicit time derivative d f / d t.
    void jacobian(double t, double piece_time, const StateVector& y, Jacobian& jac, StateVector& dfdt) const;
    /// Thermo-optic shift in effect (state value when dynamic, gamma*Ph otherwise).
    [[nodiscard]] double d_lambda(double piece_time, const StateVector& y) const;
    [[nodiscard]] TraceSample observe(double t, double piece_time, const StateVector& y,
                                      const StateVector& dydt) const;
    [[nodiscard]] StateVector initial_state(const SolverConfig& cfg) const;
    /// Throws OutOfRangeBias or ForwardBiasLimit when an accepted state leaves the model's domain.
    void check_state(const StateVector& y) const;

private:
    struct Coefficients {
        double w0;     // baseband resonance (rad/s)
        double inv_tau;
        double mu;
        double dw_dvm;
        double dw_dl;
        double dinv_tau_dvm;
        double dmu_dvm;
    };
    [[nodiscard]] Coefficients coefficients(double v_m, double d_lambda) const;
    [[nodiscard]] double clamp_bias(double v_m) const;

    const ResonatorParams& rp_;
    const ElectricalParams& ep_;
    const ThermalParams& tp_;
    const Stimulus& drive_;
    double omega_ref_;
};

}  // namespace detail

}  // namespace mdm
