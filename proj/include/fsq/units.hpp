#pragma once

#include <numbers>

namespace fsq {

// All frequencies inside the library are angular (rad/s). Conversions to and
// from ordinary frequency happen only at I/O boundaries.
namespace units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double hz = two_pi;
inline constexpr double khz = two_pi * 1e3;
inline constexpr double mhz = two_pi * 1e6;
inline constexpr double ghz = two_pi * 1e9;
inline constexpr double thz = two_pi * 1e12;

inline constexpr double second = 1.0;
inline constexpr double ms = 1e-3;
inline constexpr double us = 1e-6;
inline constexpr double ns = 1e-9;

inline constexpr double deg = pi / 180.0;

constexpr double to_hz(double angular) { return angular / two_pi; }
constexpr double from_hz(double hertz) { return hertz * two_pi; }

}  // namespace units

// CODATA 2018 exact / recommended values.
namespace constants {

inline constexpr double planck = 6.62607015e-34;            // J s
inline constexpr double hbar = planck / units::two_pi;      // J s
inline constexpr double boltzmann = 1.380649e-23;           // J/K
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double bohr_magneton_hz_per_gauss = 1.399624e6;  // mu_B / h
inline constexpr double mass_sr88_u = 87.9056;

}  // namespace constants

}  // namespace fsq
