// sequence_config.hpp: description of one pump -> microwave -> probe run.
#pragma once

#include "fmw/liouville.hpp"
#include "fmw/operators.hpp"
#include "fmw/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fmw {

/// Default operating point: 90 kHz resonant dressing, 10% pump duty.
/// Floor of the default Floquet cutoff.
inline constexpr int kDefaultCutoff = 14;

inline FieldConfig default_field_config() {
    FieldConfig f;
    f.omega_rf = hz_to_rad_s(90e3);
    f.dc = hz_to_rad_s(90e3);
    f.rf_amplitude = hz_to_rad_s(2e3);
    f.pump.mode = Modulation::Pulsed;
    f.pump.rate = hz_to_rad_s(2e3);
    f.pump.duty = 0.1;
    f.relaxation = hz_to_rad_s(10.0);
    f.mw.mode = Modulation::CW;
    f.mw.rabi_pi = hz_to_rad_s(1e3);
    f.mw.rabi_sigma_plus = hz_to_rad_s(1e3);
    f.mw.rabi_sigma_minus = hz_to_rad_s(1e3);
    f.mw.duty = 0.1;
    return f;
}

struct SequenceConfig {
    FieldConfig field = default_field_config();
    PreparedState input;
    int mw_periods = 20;
    int probe_periods = 1;
    int window_periods = 1;
    Manifold probe_manifold = Manifold::F2;
    double gain = 1.0;
    /// Floquet cutoff; 0 selects default_cutoff().
    int Q = 0;
    int samples_per_period = 64;
    ModeExtraction extraction = ModeExtraction::Physical;

    double period() const { return two_pi / field.omega_rf; }
    double mw_duration() const { return mw_periods * period(); }

    int default_cutoff() const {
        int q = kDefaultCutoff;
        if (field.mw.mode == Modulation::Pulsed && field.mw_on())
            q = std::max(q, static_cast<int>(std::ceil(3.0 / field.mw.duty - 1e-9)));
        return q;
    }
    int cutoff() const { return Q > 0 ? Q : default_cutoff(); }

    /// Field configuration with rho_in taken from the prepared input state.
    FieldConfig resolved_field() const {
        FieldConfig f = field;
        f.rho_in = prepare_input_state(input);
        return f;
    }

    void validate() const {
        field.validate();
        if (mw_periods < 0) throw ConfigError("mw_periods must be >= 0");
        if (probe_periods < 1) throw ConfigError("probe_periods must be >= 1");
        if (window_periods < 1 || window_periods > probe_periods)
            throw ConfigError("window_periods must lie in [1, probe_periods]");
        if (!(gain > 0.0) || !std::isfinite(gain)) throw ConfigError("gain must be > 0");
        if (Q < 0) throw ConfigError("Q must be >= 0 (0 selects the default)");
        if (samples_per_period < 32) throw ConfigError("samples_per_period must be >= 32");
        if (field.pump.mode == Modulation::Off && field.relaxation == 0.0)
            throw ConfigError("pump stage needs a pump or relaxation to reach a steady state");
    }
};

}  // namespace fmw
