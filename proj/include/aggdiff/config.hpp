#pragma once

#include <functional>
#include <map>
#include <string>

#include "aggdiff/evolution.hpp"
#include "aggdiff/io.hpp"

namespace aggdiff {

namespace detail {

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

inline InitialKind parse_initial_kind(const std::string& s) {
  static const std::map<std::string, InitialKind> names{{"gaussian", InitialKind::gaussian},
                                                       {"disk", InitialKind::disk},
                                                       {"two_bumps", InitialKind::two_bumps},
                                                       {"file", InitialKind::file},
                                                       {"steady", InitialKind::steady}};
  const auto it = names.find(s);
  if (it == names.end()) throw ConfigError("initial.kind: unknown kind '" + s + "'");
  return it->second;
}

inline const char* initial_kind_name(InitialKind k) {
  switch (k) {
    case InitialKind::gaussian: return "gaussian";
    case InitialKind::disk: return "disk";
    case InitialKind::two_bumps: return "two_bumps";
    case InitialKind::file: return "file";
    case InitialKind::steady: return "steady";
  }
  return "gaussian";
}

inline FaceReconstruction parse_face(const std::string& s) {
  if (s == "upwind") return FaceReconstruction::upwind;
  if (s == "limited") return FaceReconstruction::limited;
  if (s == "centered") return FaceReconstruction::centered;
  throw ConfigError("scheme.face: expected upwind, limited or centered, got '" + s + "'");
}

inline const char* face_name(FaceReconstruction f) {
  switch (f) {
    case FaceReconstruction::upwind: return "upwind";
    case FaceReconstruction::limited: return "limited";
    case FaceReconstruction::centered: return "centered";
  }
  return "centered";
}

}  // namespace detail

/**
 * SolverConfig from dotted keys:
 *
 *   m, mass, kernel, epsilon, t_end, seed, interaction, safety
 *   grid.n, grid.side, grid.rmax, grid.radial
 *   snapshot.every, diagnostics.every, scheme.face
 *   initial.kind, initial.center_x, initial.center_y, initial.width,
 *   initial.radius, initial.separation, initial.weight, initial.noise, initial.path
 *   assert.mass_tol, assert.energy_tol, assert.blowup_factor, assert.blowup_window
 *
 * Missing keys keep their defaults; unknown keys are rejected.
 */
inline SolverConfig solver_config_from(const FlatConfig& flat) {
  SolverConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto num = [](double& target) -> Setter {
    return [&target](const std::string& k, const std::string& v) { target = detail::parse_double(v, k); };
  };
  auto count = [](std::size_t& target) -> Setter {
    return [&target](const std::string& k, const std::string& v) { target = detail::parse_count(v, k); };
  };
  const std::map<std::string, Setter> setters{
      {"m", num(c.m)},
      {"mass", num(c.mass)},
      {"kernel", [&](const std::string&, const std::string& v) { c.kernel = v; }},
      {"epsilon", num(c.epsilon)},
      {"t_end", num(c.t_end)},
      {"safety", num(c.safety)},
      {"seed", [&](const std::string& k, const std::string& v) { c.seed = detail::parse_count(v, k); }},
      {"interaction", [&](const std::string& k, const std::string& v) { c.interaction = detail::parse_bool(v, k); }},
      {"grid.n", count(c.grid.n)},
      {"grid.side", num(c.grid.side)},
      {"grid.rmax", num(c.grid.rmax)},
      {"grid.radial", [&](const std::string& k, const std::string& v) { c.grid.radial = detail::parse_bool(v, k); }},
      {"snapshot.every", num(c.snapshot_every)},
      {"diagnostics.every", count(c.diagnostics_every)},
      {"scheme.face", [&](const std::string&, const std::string& v) { c.reconstruction = detail::parse_face(v); }},
      {"initial.kind", [&](const std::string&, const std::string& v) { c.initial.kind = detail::parse_initial_kind(v); }},
      {"initial.center_x", num(c.initial.center[0])},
      {"initial.center_y", num(c.initial.center[1])},
      {"initial.width", num(c.initial.width)},
      {"initial.radius", num(c.initial.radius)},
      {"initial.separation", num(c.initial.separation)},
      {"initial.weight", num(c.initial.weight)},
      {"initial.noise", num(c.initial.noise)},
      {"initial.path", [&](const std::string&, const std::string& v) { c.initial.path = v; }},
      {"assert.mass_tol", num(c.mass_tolerance)},
      {"assert.energy_tol", num(c.energy_tolerance)},
      {"assert.blowup_factor", num(c.blowup_factor)},
      {"assert.blowup_window", num(c.blowup_window)},
  };
  for (const auto& [k, v] : flat) {
    const auto it = setters.find(k);
    if (it == setters.end()) throw ConfigError("config: unknown key '" + k + "'");
    it->second(k, v);
  }
  if (c.initial.kind == InitialKind::file && c.initial.path.empty())
    throw ConfigError("config: initial.kind=file needs initial.path");
  c.validate();
  return c;
}

/// Every field of a configuration as dotted keys (the resolved form recorded in manifests).
inline FlatConfig to_flat_config(const SolverConfig& c) {
  using detail::format_double;
  FlatConfig f{
      {"m", format_double(c.m)},
      {"mass", format_double(c.mass)},
      {"kernel", c.kernel},
      {"epsilon", format_double(c.epsilon)},
      {"t_end", format_double(c.t_end)},
      {"safety", format_double(c.safety)},
      {"seed", std::to_string(c.seed)},
      {"interaction", c.interaction ? "true" : "false"},
      {"grid.n", std::to_string(c.grid.n)},
      {"grid.side", format_double(c.grid.side)},
      {"grid.rmax", format_double(c.grid.rmax)},
      {"grid.radial", c.grid.radial ? "true" : "false"},
      {"snapshot.every", format_double(c.snapshot_every)},
      {"diagnostics.every", std::to_string(c.diagnostics_every)},
      {"scheme.face", detail::face_name(c.reconstruction)},
      {"initial.kind", detail::initial_kind_name(c.initial.kind)},
      {"initial.center_x", format_double(c.initial.center[0])},
      {"initial.center_y", format_double(c.initial.center[1])},
      {"initial.width", format_double(c.initial.width)},
      {"initial.radius", format_double(c.initial.radius)},
      {"initial.separation", format_double(c.initial.separation)},
      {"initial.weight", format_double(c.initial.weight)},
      {"initial.noise", format_double(c.initial.noise)},
      {"assert.mass_tol", format_double(c.mass_tolerance)},
      {"assert.energy_tol", format_double(c.energy_tolerance)},
      {"assert.blowup_factor", format_double(c.blowup_factor)},
      {"assert.blowup_window", format_double(c.blowup_window)},
  };
  if (!c.initial.path.empty()) f["initial.path"] = c.initial.path;
  return f;
}

}  // namespace aggdiff
