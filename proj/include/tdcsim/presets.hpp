#pragma once

#include <cstdint>
#include <string>

#include "tdcsim/delay_line.hpp"

namespace tdcsim {

/// Synthetic reconstructions of the two boards the workbench models.
/// TDC1 is the long-chain design (996 bins at 100 MHz); TDC2 is one
/// representative 96-bin sub-chain of the phase-shifted 260 MHz design.
/// The generator constants are calibrated so exact-width characterization
/// reproduces the reference DNL/INL/sigma figures; see configs/presets.json.
enum class PresetName { Tdc1Raw, Tdc1Opt, Tdc2Raw, Tdc2Opt };

PresetName preset_from_string(const std::string& name);
std::string to_string(PresetName name);

DelayLine build_preset(PresetName name, std::uint64_t seed);

/// The calibrated mitigation plan that maps a family's raw preset onto its
/// optimized counterpart (tdc1 covers Tdc1Raw/Tdc1Opt, tdc2 likewise).
MitigationPlan preset_plan(PresetName name);

/// Canonical JSON echo of the generator constants; kept in sync with
/// configs/presets.json by a test.
std::string preset_generator_config_json();

}  // namespace tdcsim
