// SPDX-License-Identifier: MIT

/**
 * @file io.cpp
 * @brief Scenario JSON parsing/serialization, CSV writers, CSI dumps.
 */

#include "anchorsense/io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "anchorsense_version.hpp"

namespace asense {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kDegToRad = kPi / 180.0;

[[noreturn]] void fail(const std::string& what) { throw ScenarioError(what); }

/// Rejects keys outside the documented schema so typos surface immediately.
void check_keys(const ordered_json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known) fail("unknown key \"" + item.key() + "\" in " + where);
  }
}

double get_number(const ordered_json& obj, const std::string& where,
                  const char* key) {
  if (!obj.contains(key) || !obj[key].is_number())
    fail(where + "." + key + " must be a number");
  return obj[key].get<double>();
}

double get_number_or(const ordered_json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number())
    fail(std::string(key) + " must be a number");
  return obj[key].get<double>();
}

int get_int(const ordered_json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key) || !obj[key].is_number_integer())
    fail(where + "." + key + " must be an integer");
  return obj[key].get<int>();
}

Position2D get_position(const ordered_json& obj, const std::string& where) {
  if (!obj.contains("position_m") || !obj["position_m"].is_array() ||
      obj["position_m"].size() != 2)
    fail(where + ".position_m must be an [x, y] pair");
  const auto& p = obj["position_m"];
  if (!p[0].is_number() || !p[1].is_number())
    fail(where + ".position_m entries must be numbers");
  return {p[0].get<double>(), p[1].get<double>()};
}

std::pair<double, double> get_pair(const ordered_json& obj,
                                   const std::string& where, const char* key) {
  if (!obj.contains(key) || !obj[key].is_array() || obj[key].size() != 2 ||
      !obj[key][0].is_number() || !obj[key][1].is_number())
    fail(where + "." + key + " must be a two-number array");
  return {obj[key][0].get<double>(), obj[key][1].get<double>()};
}

std::pair<double, double> get_range(const ordered_json& obj,
                                    const std::string& where, const char* key) {
  const auto [lo, hi] = get_pair(obj, where, key);
  if (lo > hi) fail(where + "." + key + " has lo > hi");
  return {lo, hi};
}

ordered_json position_json(const Position2D& p) {
  return ordered_json::array({p.x, p.y});
}

/// File-unit value whose conversion back to code units is bit-exact.
/// The naive conversion can be an ulp off; searching its immediate
/// neighbours recovers the witness whenever the code value itself came
/// from a file-unit number (it always does for parsed scenarios).
template <typename ToCode>
double exact_file_value(double code_value, double naive, ToCode to_code) {
  if (to_code(naive) == code_value) return naive;
  double lo = naive;
  double hi = naive;
  for (int i = 0; i < 4; ++i) {
    lo = std::nextafter(lo, -std::numeric_limits<double>::infinity());
    hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    if (to_code(lo) == code_value) return lo;
    if (to_code(hi) == code_value) return hi;
  }
  return naive;
}

double meters_from_seconds(double seconds) {
  return exact_file_value(seconds, seconds * kSpeedOfLight,
                          [](double m) { return m / kSpeedOfLight; });
}

double degrees_from_radians(double radians) {
  return exact_file_value(radians, radians / kDegToRad,
                          [](double deg) { return deg * kDegToRad; });
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
  ordered_json root;
  try {
    root = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    fail(std::string("scenario is not valid JSON: ") + e.what());
  }
  check_keys(root, "scenario",
             {"name", "waveform", "bs", "ue", "anchors", "statics", "dynamics",
              "channel", "noise", "clock"});

  ScenarioConfig cfg;
  if (root.contains("name")) {
    if (!root["name"].is_string()) fail("scenario.name must be a string");
    cfg.name = root["name"].get<std::string>();
  }

  // Waveform ------------------------------------------------------------
  if (!root.contains("waveform")) fail("scenario.waveform is required");
  const auto& wf = root["waveform"];
  check_keys(wf, "waveform",
             {"delta_f_hz", "n_subcarriers", "t0_s", "n_symbols", "m_tx",
              "m_rx", "carrier_freq_hz"});
  cfg.waveform.delta_f_hz = get_number(wf, "waveform", "delta_f_hz");
  cfg.waveform.n_subcarriers = get_int(wf, "waveform", "n_subcarriers");
  cfg.waveform.t0_s = get_number(wf, "waveform", "t0_s");
  cfg.waveform.n_symbols = get_int(wf, "waveform", "n_symbols");
  cfg.waveform.m_tx = get_int(wf, "waveform", "m_tx");
  cfg.waveform.m_rx = get_int(wf, "waveform", "m_rx");
  cfg.waveform.carrier_freq_hz =
      get_number_or(wf, "carrier_freq_hz", cfg.waveform.carrier_freq_hz);
  if (cfg.waveform.delta_f_hz <= 0.0 || cfg.waveform.t0_s <= 0.0 ||
      cfg.waveform.n_subcarriers < 2 || cfg.waveform.n_symbols < 2 ||
      cfg.waveform.m_tx < 1 || cfg.waveform.m_rx < 1)
    fail("waveform values out of range");

  // Terminals ------------------------------------------------------------
  if (root.contains("bs")) {
    check_keys(root["bs"], "bs", {"position_m"});
    cfg.scene.bs_position = get_position(root["bs"], "bs");
  }
  if (!root.contains("ue")) fail("scenario.ue is required");
  check_keys(root["ue"], "ue", {"position_m", "rotation_deg"});
  cfg.scene.ue_position = get_position(root["ue"], "ue");
  cfg.scene.ue_rotation_rho =
      get_number_or(root["ue"], "rotation_deg", 0.0) * kDegToRad;

  // Reflectors -----------------------------------------------------------
  const auto parse_reflector = [](const ordered_json& obj,
                                  const std::string& where, Position2D* pos,
                                  double* sigma) {
    *pos = get_position(obj, where);
    *sigma = get_number_or(obj, "reflecting_factor_m2", 1.0);
    if (*sigma <= 0.0) fail(where + ".reflecting_factor_m2 must be positive");
  };
  if (root.contains("anchors")) {
    if (!root["anchors"].is_array()) fail("scenario.anchors must be an array");
    int i = 0;
    for (const auto& obj : root["anchors"]) {
      const std::string where = "anchors[" + std::to_string(i++) + "]";
      check_keys(obj, where, {"position_m", "reflecting_factor_m2"});
      AnchorPoint a;
      parse_reflector(obj, where, &a.position, &a.reflecting_factor);
      cfg.scene.anchors.push_back(a);
    }
  }
  if (root.contains("statics")) {
    if (!root["statics"].is_array()) fail("scenario.statics must be an array");
    int i = 0;
    for (const auto& obj : root["statics"]) {
      const std::string where = "statics[" + std::to_string(i++) + "]";
      check_keys(obj, where, {"position_m", "reflecting_factor_m2"});
      StaticObject s;
      parse_reflector(obj, where, &s.position, &s.reflecting_factor);
      cfg.scene.static_objects.push_back(s);
    }
  }
  if (root.contains("dynamics")) {
    if (!root["dynamics"].is_array())
      fail("scenario.dynamics must be an array");
    int i = 0;
    for (const auto& obj : root["dynamics"]) {
      const std::string where = "dynamics[" + std::to_string(i++) + "]";
      check_keys(obj, where,
                 {"position_m", "reflecting_factor_m2", "doppler_hz",
                  "velocity_mps"});
      DynamicTarget d;
      parse_reflector(obj, where, &d.position, &d.reflecting_factor);
      const bool has_doppler = obj.contains("doppler_hz");
      const bool has_velocity = obj.contains("velocity_mps");
      if (has_doppler == has_velocity)
        fail(where + " needs exactly one of doppler_hz or velocity_mps");
      if (has_doppler) {
        d.doppler_hz = get_number(obj, where, "doppler_hz");
      } else {
        const auto [vx, vy] = get_pair(obj, where, "velocity_mps");
        d.velocity_mps = std::array<double, 2>{vx, vy};
      }
      cfg.scene.dynamic_targets.push_back(d);
    }
  }

  // Channel --------------------------------------------------------------
  if (root.contains("channel")) {
    const auto& ch = root["channel"];
    check_keys(ch, "channel",
               {"carrier_wavelength_m", "tx_power_w", "include_los",
                "allow_delay_alias"});
    cfg.scene.carrier_wavelength =
        get_number_or(ch, "carrier_wavelength_m", cfg.scene.carrier_wavelength);
    cfg.scene.tx_power = get_number_or(ch, "tx_power_w", cfg.scene.tx_power);
    if (ch.contains("include_los")) {
      if (!ch["include_los"].is_boolean())
        fail("channel.include_los must be a boolean");
      cfg.scene.include_los = ch["include_los"].get<bool>();
    }
    if (ch.contains("allow_delay_alias")) {
      if (!ch["allow_delay_alias"].is_boolean())
        fail("channel.allow_delay_alias must be a boolean");
      cfg.allow_delay_alias = ch["allow_delay_alias"].get<bool>();
    }
    if (cfg.scene.carrier_wavelength <= 0.0 || cfg.scene.tx_power <= 0.0)
      fail("channel values out of range");
  }

  // Noise ----------------------------------------------------------------
  if (!root.contains("noise")) fail("scenario.noise is required");
  const auto& noise = root["noise"];
  check_keys(noise, "noise", {"sigma_n_sq_w", "thermal"});
  if (noise.contains("sigma_n_sq_w") == noise.contains("thermal"))
    fail("noise needs exactly one of sigma_n_sq_w or thermal");
  if (noise.contains("sigma_n_sq_w")) {
    cfg.noise_sigma_sq = get_number(noise, "noise", "sigma_n_sq_w");
  } else {
    const auto& th = noise["thermal"];
    check_keys(th, "noise.thermal", {"noise_figure", "temperature_k"});
    cfg.noise_sigma_sq =
        NoiseModel::thermal(cfg.waveform.bandwidth_hz(),
                            get_number_or(th, "noise_figure", 10.0),
                            get_number_or(th, "temperature_k", 290.0))
            .sigma_n_sq;
  }
  if (cfg.noise_sigma_sq < 0.0) fail("noise power must be non-negative");

  // Clock ----------------------------------------------------------------
  if (root.contains("clock")) {
    const auto& ck = root["clock"];
    check_keys(ck, "clock",
               {"tmo_range_m", "cfo_range_rad", "pin_ctau_o0_m",
                "pin_cfo0_rad"});
    if (ck.contains("tmo_range_m")) {
      const auto [lo, hi] = get_range(ck, "clock", "tmo_range_m");
      cfg.clock.tmo_min_s = lo / kSpeedOfLight;
      cfg.clock.tmo_max_s = hi / kSpeedOfLight;
    }
    if (ck.contains("cfo_range_rad")) {
      const auto [lo, hi] = get_range(ck, "clock", "cfo_range_rad");
      cfg.clock.cfo_min_rad = lo;
      cfg.clock.cfo_max_rad = hi;
    }
    if (ck.contains("pin_ctau_o0_m") && !ck["pin_ctau_o0_m"].is_null()) {
      if (!ck["pin_ctau_o0_m"].is_number())
        fail("clock.pin_ctau_o0_m must be a number or null");
      cfg.clock.pin_tmo0_s = ck["pin_ctau_o0_m"].get<double>() / kSpeedOfLight;
    }
    if (ck.contains("pin_cfo0_rad") && !ck["pin_cfo0_rad"].is_null()) {
      if (!ck["pin_cfo0_rad"].is_number())
        fail("clock.pin_cfo0_rad must be a number or null");
      cfg.clock.pin_cfo0_rad = ck["pin_cfo0_rad"].get<double>();
    }
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open scenario file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_scenario(text.str());
  } catch (const ScenarioError& e) {
    fail(path + ": " + e.what());
  }
}

std::string scenario_to_json(const ScenarioConfig& config) {
  ordered_json root;
  root["name"] = config.name;
  root["waveform"] = {{"delta_f_hz", config.waveform.delta_f_hz},
                      {"n_subcarriers", config.waveform.n_subcarriers},
                      {"t0_s", config.waveform.t0_s},
                      {"n_symbols", config.waveform.n_symbols},
                      {"m_tx", config.waveform.m_tx},
                      {"m_rx", config.waveform.m_rx},
                      {"carrier_freq_hz", config.waveform.carrier_freq_hz}};
  root["bs"] = {{"position_m", position_json(config.scene.bs_position)}};
  root["ue"] = {{"position_m", position_json(config.scene.ue_position)},
                {"rotation_deg",
                 degrees_from_radians(config.scene.ue_rotation_rho)}};
  root["anchors"] = ordered_json::array();
  for (const auto& a : config.scene.anchors)
    root["anchors"].push_back({{"position_m", position_json(a.position)},
                               {"reflecting_factor_m2", a.reflecting_factor}});
  root["statics"] = ordered_json::array();
  for (const auto& s : config.scene.static_objects)
    root["statics"].push_back({{"position_m", position_json(s.position)},
                               {"reflecting_factor_m2", s.reflecting_factor}});
  root["dynamics"] = ordered_json::array();
  for (const auto& d : config.scene.dynamic_targets) {
    ordered_json obj = {{"position_m", position_json(d.position)},
                        {"reflecting_factor_m2", d.reflecting_factor}};
    if (d.doppler_hz) obj["doppler_hz"] = *d.doppler_hz;
    if (d.velocity_mps)
      obj["velocity_mps"] =
          ordered_json::array({(*d.velocity_mps)[0], (*d.velocity_mps)[1]});
    root["dynamics"].push_back(obj);
  }
  root["channel"] = {{"carrier_wavelength_m", config.scene.carrier_wavelength},
                     {"tx_power_w", config.scene.tx_power},
                     {"include_los", config.scene.include_los},
                     {"allow_delay_alias", config.allow_delay_alias}};
  root["noise"] = {{"sigma_n_sq_w", config.noise_sigma_sq}};
  ordered_json clock = {
      {"tmo_range_m",
       ordered_json::array({meters_from_seconds(config.clock.tmo_min_s),
                            meters_from_seconds(config.clock.tmo_max_s)})},
      {"cfo_range_rad", ordered_json::array({config.clock.cfo_min_rad,
                                             config.clock.cfo_max_rad})}};
  clock["pin_ctau_o0_m"] =
      config.clock.pin_tmo0_s
          ? ordered_json(meters_from_seconds(*config.clock.pin_tmo0_s))
          : ordered_json(nullptr);
  clock["pin_cfo0_rad"] = config.clock.pin_cfo0_rad
                              ? ordered_json(*config.clock.pin_cfo0_rad)
                              : ordered_json(nullptr);
  root["clock"] = clock;
  return root.dump(2) + "\n";
}

std::string format_double(double value) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  std::string best = buf;
  // %g switches to exponent notation early; plain digits read better for
  // whole numbers ("-20" instead of "-2e+01") when they are no longer.
  if (std::nearbyint(value) == value && std::abs(value) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", value);
    if (std::strtod(buf, nullptr) == value && std::strlen(buf) <= best.size())
      best = buf;
  }
  return best;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) fail("cannot write file: " + path);
  out << text;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "metric,grid_value,value,trials,seed\n";
  for (const MetricRow& r : rows)
    out << r.metric << ',' << format_double(r.grid_value) << ','
        << format_double(r.value) << ',' << r.trials << ',' << r.seed << '\n';
  write_text_file(path, out.str());
}

void write_xy_csv(const std::string& path, const std::string& x_name,
                  const std::string& y_name, const std::vector<double>& x,
                  const std::vector<double>& y) {
  if (x.size() != y.size()) fail("xy CSV columns differ in length");
  std::ostringstream out;
  out << x_name << ',' << y_name << '\n';
  for (std::size_t i = 0; i < x.size(); ++i)
    out << format_double(x[i]) << ',' << format_double(y[i]) << '\n';
  write_text_file(path, out.str());
}

namespace {

constexpr char kCsiMagic[4] = {'A', 'C', 'S', 'I'};
constexpr std::uint32_t kCsiVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T take(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  return value;
}

}  // namespace

void write_csi_dump(const std::string& path, const CsiTensor& csi,
                    bool single_precision) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) fail("cannot write CSI dump: " + path);

  out.write(kCsiMagic, 4);
  put<std::uint32_t>(out, kCsiVersion);
  put<std::uint32_t>(out, single_precision ? 1 : 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(csi.subcarriers()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(csi.symbols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(csi.pairs()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(csi.waveform().m_tx));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(csi.waveform().m_rx));
  put<double>(out, csi.waveform().delta_f_hz);
  put<double>(out, csi.waveform().t0_s);
  // Payload order matches storage: n fastest, then k, then m.
  if (single_precision) {
    for (const cplx& v : csi.raw()) {
      put<float>(out, static_cast<float>(v.real()));
      put<float>(out, static_cast<float>(v.imag()));
    }
  } else {
    out.write(reinterpret_cast<const char*>(csi.raw().data()),
              static_cast<std::streamsize>(csi.raw().size() * sizeof(cplx)));
  }
  if (!out) fail("short write on CSI dump: " + path);
}

CsiTensor read_csi_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open CSI dump: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCsiMagic, 4) != 0)
    fail("not a CSI dump (bad magic): " + path);
  if (take<std::uint32_t>(in) != kCsiVersion)
    fail("unsupported CSI dump version: " + path);
  const std::uint32_t dtype = take<std::uint32_t>(in);
  if (dtype > 1) fail("unsupported CSI dump dtype: " + path);
  const auto n = take<std::uint32_t>(in);
  const auto k = take<std::uint32_t>(in);
  const auto m = take<std::uint32_t>(in);
  const auto m_tx = take<std::uint32_t>(in);
  const auto m_rx = take<std::uint32_t>(in);
  Waveform wf;
  wf.n_subcarriers = static_cast<int>(n);
  wf.n_symbols = static_cast<int>(k);
  wf.m_tx = static_cast<int>(m_tx);
  wf.m_rx = static_cast<int>(m_rx);
  wf.delta_f_hz = take<double>(in);
  wf.t0_s = take<double>(in);
  if (!in || n < 2 || k < 1 || m < 1 || m > m_tx * m_rx)
    fail("corrupt CSI dump header: " + path);

  CsiTensor csi(wf, static_cast<int>(m));
  if (dtype == 1) {
    for (cplx& v : csi.raw()) {
      const float re = take<float>(in);
      const float im = take<float>(in);
      v = {static_cast<double>(re), static_cast<double>(im)};
    }
  } else {
    in.read(reinterpret_cast<char*>(csi.raw().data()),
            static_cast<std::streamsize>(csi.raw().size() * sizeof(cplx)));
  }
  if (!in) fail("truncated CSI dump payload: " + path);
  return csi;
}

const char* library_version() { return ANCHORSENSE_VERSION; }

}  // namespace asense
