#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace gpk {

/// Stance state of the gait: left single stance, double stance, right single stance.
enum class PhaseLabel : std::uint8_t { Left = 0, Double = 1, Right = 2 };

/// Numeric phase encoding; only -1, 0 and +1 are produced by `phase_to_value`.
using PhaseValue = double;

inline constexpr std::array<PhaseLabel, 3> kAllPhases{PhaseLabel::Left, PhaseLabel::Double,
                                                      PhaseLabel::Right};

[[nodiscard]] constexpr PhaseValue phase_to_value(PhaseLabel label) noexcept {
  switch (label) {
    case PhaseLabel::Left:
      return -1.0;
    case PhaseLabel::Double:
      return 0.0;
    case PhaseLabel::Right:
      return 1.0;
  }
  return 0.0;
}

/// Inverse of `phase_to_value`; only the three exact encodings are accepted.
[[nodiscard]] constexpr std::optional<PhaseLabel> value_to_phase(PhaseValue value) noexcept {
  if (value == -1.0) return PhaseLabel::Left;
  if (value == 0.0) return PhaseLabel::Double;
  if (value == 1.0) return PhaseLabel::Right;
  return std::nullopt;
}

/// Class index used by classifier outputs: [Left, Double, Right].
[[nodiscard]] constexpr std::size_t phase_index(PhaseLabel label) noexcept {
  return static_cast<std::size_t>(label);
}

[[nodiscard]] constexpr std::string_view phase_name(PhaseLabel label) noexcept {
  switch (label) {
    case PhaseLabel::Left:
      return "left";
    case PhaseLabel::Double:
      return "double";
    case PhaseLabel::Right:
      return "right";
  }
  return "?";
}

}  // namespace gpk
