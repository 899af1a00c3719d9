#include "gpk/gait_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "gpk/csv.hpp"
#include "gpk/error.hpp"

namespace gpk {

namespace {

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }
constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

std::array<JointRange, kNumJoints> joint_rom() noexcept {
  const JointRange hip{deg(-30.0), deg(125.0)};
  const JointRange knee{deg(-5.0), deg(125.0)};
  const JointRange ankle{deg(-70.0), deg(70.0)};
  return {hip, knee, ankle, hip, knee, ankle};
}

bool within_rom(const JointAngles& angles, double slack_fraction) noexcept {
  const auto rom = joint_rom();
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const double slack = slack_fraction * (rom[j].max - rom[j].min);
    if (!(angles[j] >= rom[j].min - slack && angles[j] <= rom[j].max + slack)) return false;
  }
  return true;
}

GaitDataset GaitDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > samples.size()) throw ContractError("slice out of range");
  GaitDataset out;
  out.sample_rate = sample_rate;
  out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

SpeedProfile SpeedProfile::calibration() {
  SpeedProfile p;
  for (double v : {1.0, 2.0, 3.0, 3.5, 3.0, 2.0, 1.0}) p.segments.push_back({v, 30.0});
  p.transition_duration = 2.0;
  return p;
}

SpeedProfile SpeedProfile::constant(double speed_kmh, double duration_s) {
  SpeedProfile p;
  p.segments.push_back({speed_kmh, duration_s});
  return p;
}

SpeedProfile SpeedProfile::free_walk(std::uint64_t seed, double duration_s) {
  constexpr double kMean = 2.5;
  constexpr double kJitter = 0.15;
  std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
  std::uniform_real_distribution<double> jitter(-kJitter, kJitter);
  const double cycle = 1.0 / gait_model::cycle_frequency(kMean);
  SpeedProfile p;
  p.transition_duration = 0.25 * cycle;
  double elapsed = 0.0;
  while (elapsed < duration_s - 1e-9) {
    const double len = std::min(cycle, duration_s - elapsed);
    p.segments.push_back({kMean * (1.0 + jitter(rng)), len});
    elapsed += len;
  }
  return p;
}

double SpeedProfile::total_duration() const noexcept {
  double total = 0.0;
  for (const auto& s : segments) total += s.duration_s;
  return total;
}

double SpeedProfile::speed_at(double t) const noexcept {
  double start = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    const bool last = i + 1 == segments.size();
    if (t < start + seg.duration_s || last) {
      const double local = t - start;
      const double ramp = std::min(transition_duration, seg.duration_s);
      if (i > 0 && ramp > 0.0 && local < ramp) {
        const double prev = segments[i - 1].speed_kmh;
        return prev + (seg.speed_kmh - prev) * std::max(local, 0.0) / ramp;
      }
      return seg.speed_kmh;
    }
    start += seg.duration_s;
  }
  return 0.0;
}

void SpeedProfile::validate() const {
  if (segments.empty()) throw ConfigError("speed profile has no segments");
  if (!(transition_duration >= 0.0)) throw ConfigError("transition duration must be >= 0");
  for (const auto& s : segments) {
    if (!(s.speed_kmh >= 0.0) || !std::isfinite(s.speed_kmh)) {
      throw ConfigError("segment speed must be finite and >= 0");
    }
    if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) {
      throw ConfigError("segment duration must be finite and > 0");
    }
  }
}

namespace gait_model {

double cycle_frequency(double speed_kmh) noexcept {
  if (speed_kmh <= 0.0) return 0.0;
  return 0.45 * std::min(1.0, speed_kmh / 0.5) + 0.16 * speed_kmh;
}

double double_stance_fraction(double speed_kmh) noexcept {
  return std::clamp(0.35 - 0.05 * speed_kmh, 0.10, 0.35);
}

double amplitude_scale(double speed_kmh) noexcept {
  if (speed_kmh <= 0.0) return 0.0;
  return std::min(1.0, speed_kmh / 0.5) * (0.7 + 0.1 * std::min(speed_kmh, 5.0));
}

std::array<double, 3> leg_angles(double s, double amplitude) noexcept {
  const double w = kTwoPi * s;
  const double hip = 0.15 + amplitude * (0.33 * std::cos(w) + 0.04 * std::cos(2.0 * w + 0.3));
  // Third knee harmonic gives the stance-phase flexion hump.
  const double knee = 0.6 + amplitude * (-0.35 * std::cos(w - kTwoPi * 0.72) +
                                         0.12 * std::cos(2.0 * (w - kTwoPi * 0.15)) +
                                         0.05 * std::cos(3.0 * w + 0.8));
  const double ankle = 0.05 + amplitude * (0.15 * std::sin(w - kTwoPi * 0.1) +
                                           0.10 * std::sin(2.0 * w + 0.5));
  return {hip, knee, ankle};
}

PhaseLabel label_at(double u, double double_fraction) noexcept {
  const double half = 0.5 * double_fraction;
  if (u < half) return PhaseLabel::Double;
  if (u < 0.5) return PhaseLabel::Left;
  if (u < 0.5 + half) return PhaseLabel::Double;
  return PhaseLabel::Right;
}

}  // namespace gait_model

GaitDataset generate_gait(const SpeedProfile& profile, std::uint64_t seed, double noise_std,
                          double sample_rate) {
  profile.validate();
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be > 0");
  if (!(noise_std >= 0.0)) throw ConfigError("noise std must be >= 0");

  std::mt19937_64 rng(seed);
  // Per-recording "subject" variation: start of the cycle and per-joint amplitude gains.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double cycle = unit(rng);
  std::array<double, kNumJoints> gain{};
  for (auto& g : gain) g = 0.95 + 0.1 * unit(rng);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);

  const auto n = static_cast<std::size_t>(std::llround(profile.total_duration() * sample_rate));
  GaitDataset out;
  out.sample_rate = sample_rate;
  out.samples.reserve(n);

  PhaseLabel previous = PhaseLabel::Double;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / sample_rate;
    const double v = profile.speed_at(t);
    const double amp = gait_model::amplitude_scale(v);
    const double u = cycle - std::floor(cycle);

    GaitSample s;
    s.t = t;
    const auto left = gait_model::leg_angles(u, amp);
    const double ur = u + 0.5 - std::floor(u + 0.5);
    const auto right = gait_model::leg_angles(ur, amp);
    for (std::size_t j = 0; j < 3; ++j) {
      s.angles[j] = left[j];
      s.angles[j + 3] = right[j];
    }
    if (amp > 0.0) {
      // Gains act on the oscillating part only, so standing posture is unchanged.
      const auto rest = gait_model::leg_angles(0.0, 0.0);
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        s.angles[j] = rest[j % 3] + gain[j] * (s.angles[j] - rest[j % 3]);
      }
    }
    if (noise_std > 0.0) {
      for (auto& a : s.angles) a += noise(rng);
    }

    PhaseLabel label = v > 0.0 ? gait_model::label_at(u, gait_model::double_stance_fraction(v))
                               : PhaseLabel::Double;
    // A single stance never hands over directly to the opposite one.
    if ((previous == PhaseLabel::Left && label == PhaseLabel::Right) ||
        (previous == PhaseLabel::Right && label == PhaseLabel::Left)) {
      label = PhaseLabel::Double;
    }
    s.phase = label;
    previous = label;
    out.samples.push_back(s);

    cycle += gait_model::cycle_frequency(v) / sample_rate;
  }
  return out;
}

void save_csv(const GaitDataset& dataset, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "t,lh,lk,la,rh,rk,ra,phase\n";
  for (const auto& s : dataset.samples) {
    f << csv::format_double(s.t);
    for (double a : s.angles) f << ',' << csv::format_double(a);
    f << ',' << static_cast<int>(phase_to_value(s.phase)) << '\n';
  }
  if (!f) throw Error("write failed for " + path.string());
}

GaitDataset load_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(f, line)) throw ParseError(0, "no samples");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,lh,lk,la,rh,rk,ra,phase") {
    throw ParseError(line_no, "unexpected header '" + line + "'");
  }

  GaitDataset out;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = csv::split(line);
    if (fields.size() != 8) {
      throw ParseError(line_no, "expected 8 fields, got " + std::to_string(fields.size()));
    }
    GaitSample s;
    const auto t = csv::parse_double(fields[0]);
    if (!t || !std::isfinite(*t)) throw ParseError(line_no, "bad timestamp");
    s.t = *t;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const auto a = csv::parse_double(fields[j + 1]);
      if (!a || !std::isfinite(*a)) throw ParseError(line_no, "bad angle in column " + std::to_string(j + 2));
      s.angles[j] = *a;
    }
    const std::string_view token = fields[7];
    if (token == "-1") {
      s.phase = PhaseLabel::Left;
    } else if (token == "0") {
      s.phase = PhaseLabel::Double;
    } else if (token == "1") {
      s.phase = PhaseLabel::Right;
    } else {
      throw ParseError(line_no, "unknown phase token '" + std::string(token) + "'");
    }
    if (!out.samples.empty() && !(s.t > out.samples.back().t)) {
      throw ParseError(line_no, "timestamps not strictly increasing");
    }
    out.samples.push_back(s);
  }
  if (out.samples.empty()) throw ParseError(0, "no samples");

  if (out.samples.size() >= 2) {
    const double span = out.samples.back().t - out.samples.front().t;
    double rate = static_cast<double>(out.samples.size() - 1) / span;
    const double rounded = std::round(rate);
    if (std::abs(rate - rounded) < 1e-6 * rounded) rate = rounded;
    out.sample_rate = rate;
  }
  return out;
}

LabelCounts count_labels(const GaitDataset& dataset) noexcept {
  LabelCounts c;
  for (const auto& s : dataset.samples) {
    switch (s.phase) {
      case PhaseLabel::Left:
        ++c.left;
        break;
      case PhaseLabel::Double:
        ++c.double_stance;
        break;
      case PhaseLabel::Right:
        ++c.right;
        break;
    }
  }
  return c;
}

}  // namespace gpk
