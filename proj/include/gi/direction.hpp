#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace gi {

/// Quantized velocity alphabet: the zero symbol plus eight unit directions
/// 45 degrees apart. L1..L4 sit at 0, 45, 90 and 135 degrees; the negated
/// symbols are their antipodes.
enum class Direction : int {
  Zero = 0,
  L1,
  L2,
  L3,
  L4,
  NegL1,
  NegL2,
  NegL3,
  NegL4,
};

inline constexpr std::array<Direction, 9> kAllDirections = {
    Direction::Zero,  Direction::L1,    Direction::L2,    Direction::L3,   Direction::L4,
    Direction::NegL1, Direction::NegL2, Direction::NegL3, Direction::NegL4};

constexpr Direction negate(Direction d) {
  switch (d) {
    case Direction::Zero: return Direction::Zero;
    case Direction::L1: return Direction::NegL1;
    case Direction::L2: return Direction::NegL2;
    case Direction::L3: return Direction::NegL3;
    case Direction::L4: return Direction::NegL4;
    case Direction::NegL1: return Direction::L1;
    case Direction::NegL2: return Direction::L2;
    case Direction::NegL3: return Direction::L3;
    case Direction::NegL4: return Direction::L4;
  }
  return Direction::Zero;
}

constexpr bool is_negative(Direction d) { return static_cast<int>(d) >= static_cast<int>(Direction::NegL1); }

/// Axis family 1..4 (a symbol and its negation share a family); 0 for Zero.
constexpr int family(Direction d) {
  int v = static_cast<int>(d);
  return v == 0 ? 0 : ((v - 1) % 4) + 1;
}

constexpr Direction positive_of_family(int fam) { return static_cast<Direction>(fam); }

std::string_view to_string(Direction d);
std::optional<Direction> parse_direction(std::string_view s);

/// Unit vector for a direction; zero vector for Direction::Zero.
Eigen::Vector2d direction_vector(Direction d);

}  // namespace gi
