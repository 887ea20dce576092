#pragma once

#include <iosfwd>
#include <string>

#include "hwobs/model.hpp"

namespace hwobs {

// Highway configuration files are sectioned key = value text:
//
//   [diagram]          v_f, w_c, rho_c, rho_m
//   [topology]         N, pattern = paper | onramps = 2,5  offramps = 3,6
//   [ramps]            beta, xi: single value (uniform) or seg:value list
//   [discretization]   l, T
//
// '#' and ';' start comments. All values in SI units.
HighwayConfig parse_highway_config(std::istream& is);
HighwayConfig load_highway_config(const std::string& path);

std::string render_highway_config(const HighwayConfig& cfg);

} // namespace hwobs
