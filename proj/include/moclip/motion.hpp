#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "moclip/errors.hpp"
#include "moclip/rng.hpp"
#include "moclip/skeleton.hpp"

namespace moclip {

/// T frames × J joints × 3 coordinates (metres), row-major.
struct MotionSequence {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<double> positions;
  std::string class_label;
  std::uint64_t seed = 0;

  double at(std::size_t t, std::size_t j, std::size_t c) const { return positions[(t * joints + j) * 3 + c]; }
  double& at(std::size_t t, std::size_t j, std::size_t c) { return positions[(t * joints + j) * 3 + c]; }

  bool finite() const {
    for (double v : positions) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const MotionSequence&, const MotionSequence&) = default;
};

/// Discrete performance attributes carried by both the motion and its caption.
struct MotionStyle {
  int posture = 0;  // 0 upright, 1 crouched, 2 hunched
  int feet = 1;     // 0 together, 1 apart, 2 wide
  int place = 1;    // 0 front, 1 middle, 2 back
};

inline constexpr std::array<const char*, 3> kPostureWords = {"upright", "crouched", "hunched"};
inline constexpr std::array<const char*, 3> kFeetWords = {"together", "apart", "wide"};
inline constexpr std::array<const char*, 3> kPlaceWords = {"front", "middle", "back"};

inline MotionStyle style_for_seed(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "style"));
  MotionStyle s;
  s.posture = static_cast<int>(rng.below(3));
  s.feet = static_cast<int>(rng.below(3));
  s.place = static_cast<int>(rng.below(3));
  return s;
}

inline constexpr double kFrameRate = 20.0;

namespace detail {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

inline Vec3 mat_vec(const Mat3& a, const Vec3& v) {
  return {a[0] * v[0] + a[1] * v[1] + a[2] * v[2], a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
          a[6] * v[0] + a[7] * v[1] + a[8] * v[2]};
}

inline Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {1, 0, 0, 0, c, -s, 0, s, c};
}
inline Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c, 0, s, 0, 1, 0, -s, 0, c};
}
inline Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c, -s, 0, s, c, 0, 0, 0, 1};
}

/// Joint rotation relative to the parent frame. `flex` swings a hanging limb toward +z,
/// `raise` lifts it sideways toward +x, `twist` turns about the vertical.
struct JointAngles {
  double flex = 0.0;
  double raise = 0.0;
  double twist = 0.0;
};

inline Mat3 local_rotation(const JointAngles& a) {
  return mat_mul(rot_y(a.twist), mat_mul(rot_z(a.raise), rot_x(-a.flex)));
}

// Rest offsets of the toy skeleton relative to each parent; y up, +x is the body's left.
inline const std::array<Vec3, 14>& toy_offsets() {
  static const std::array<Vec3, 14> offsets = {{
      {0.0, 0.95, 0.0},     // root (absolute)
      {0.0, 0.45, 0.0},     // spine
      {0.18, 0.0, 0.0},     // left_shoulder
      {0.0, -0.28, 0.0},    // left_elbow
      {0.0, -0.26, 0.0},    // left_hand
      {-0.18, 0.0, 0.0},    // right_shoulder
      {0.0, -0.28, 0.0},    // right_elbow
      {0.0, -0.26, 0.0},    // right_hand
      {0.10, 0.0, 0.0},     // left_hip
      {0.0, -0.45, 0.0},    // left_knee
      {0.0, -0.45, 0.0},    // left_foot
      {-0.10, 0.0, 0.0},    // right_hip
      {0.0, -0.45, 0.0},    // right_knee
      {0.0, -0.45, 0.0},    // right_foot
  }};
  return offsets;
}

/// Per-frame pose: root translation plus angles for every joint.
struct Pose {
  Vec3 root_shift{0.0, 0.0, 0.0};
  std::array<JointAngles, 14> angles{};
};

enum Joint : std::size_t {
  kRoot = 0, kSpine = 1,
  kLShoulder = 2, kLElbow = 3, kLHand = 4,
  kRShoulder = 5, kRElbow = 6, kRHand = 7,
  kLHip = 8, kLKnee = 9, kLFoot = 10,
  kRHip = 11, kRKnee = 12, kRFoot = 13,
};

inline void forward_kinematics(const Skeleton& skeleton, const Pose& pose, double* out) {
  const auto& offsets = toy_offsets();
  std::array<Mat3, 14> global{};
  std::array<Vec3, 14> pos{};
  for (std::size_t j = 0; j < skeleton.joint_count(); ++j) {
    const Mat3 local = local_rotation(pose.angles[j]);
    if (j == 0) {
      global[0] = local;
      for (int c = 0; c < 3; ++c) pos[0][c] = offsets[0][c] + pose.root_shift[c];
    } else {
      const std::size_t p = skeleton.parent(j);
      const Vec3 off = mat_vec(global[p], offsets[j]);
      for (int c = 0; c < 3; ++c) pos[j][c] = pos[p][c] + off[c];
      global[j] = mat_mul(global[p], local);
    }
    for (int c = 0; c < 3; ++c) out[j * 3 + static_cast<std::size_t>(c)] = pos[j][c];
  }
}

/// Continuous per-sample variation on top of the discrete style.
struct Performance {
  double omega = 0.0;  // angular frequency, rad/s
  double amp = 1.0;
  double phase = 0.0;
};

using PoseFn = std::function<Pose(double t, const Performance&)>;

inline double smooth01(double s) { return 0.5 + 0.5 * s; }

inline Pose walk_pose(double t, const Performance& p) {
  Pose pose;
  const double a = p.amp;
  const double w = p.omega * t + p.phase;
  const double s = std::sin(w);
  pose.angles[kLHip].flex = 0.5 * a * s;
  pose.angles[kRHip].flex = -0.5 * a * s;
  pose.angles[kLKnee].flex = -0.35 * a * (1.0 + std::cos(w));
  pose.angles[kRKnee].flex = -0.35 * a * (1.0 - std::cos(w));
  pose.angles[kLShoulder].flex = -0.4 * a * s;
  pose.angles[kRShoulder].flex = 0.4 * a * s;
  pose.angles[kLElbow].flex = 0.3;
  pose.angles[kRElbow].flex = 0.3;
  pose.angles[kSpine].flex = 0.05 * a;
  pose.root_shift = {0.0, 0.03 * a * std::cos(2.0 * w), 0.0};
  return pose;
}

inline Pose jump_pose(double t, const Performance& p) {
  Pose pose;
  const double a = p.amp;
  const double up = smooth01(std::sin(p.omega * t + p.phase));
  const double down = 1.0 - up;
  pose.root_shift = {0.0, 0.3 * a * up * up - 0.15 * a * down, 0.0};
  pose.angles[kLHip].flex = pose.angles[kRHip].flex = 0.6 * a * down;
  pose.angles[kLKnee].flex = pose.angles[kRKnee].flex = -1.0 * a * down;
  pose.angles[kLShoulder].flex = pose.angles[kRShoulder].flex = 1.5 * a * up;
  pose.angles[kLShoulder].raise = 0.2 * a * up;
  pose.angles[kRShoulder].raise = -0.2 * a * up;
  pose.angles[kSpine].flex = 0.25 * a * down;
  return pose;
}

inline Pose wave_left_pose(double t, const Performance& p) {
  Pose pose;
  const double a = p.amp;
  const double s = std::sin(p.omega * t + p.phase);
  pose.angles[kLShoulder].raise = 2.1 + 0.4 * a;
  pose.angles[kLElbow].raise = 0.3 + 0.7 * a * s;
  pose.angles[kLHand].raise = 0.3 * a * s;
  pose.angles[kRShoulder].raise = -0.1;
  pose.angles[kSpine].raise = -0.05 * a * s;
  return pose;
}

inline Pose kick_left_pose(double t, const Performance& p) {
  Pose pose;
  const double a = p.amp;
  const double w = p.omega * t + p.phase;
  const double lift = smooth01(std::sin(w));
  pose.angles[kLHip].flex = 1.3 * a * lift * lift;
  pose.angles[kLKnee].flex = -0.9 * a * smooth01(std::cos(w)) * lift;
  pose.angles[kRKnee].flex = -0.15 * a;
  pose.angles[kLShoulder].raise = 0.35 + 0.2 * a * lift;
  pose.angles[kRShoulder].raise = -0.35 - 0.2 * a * lift;
  pose.angles[kSpine].flex = -0.2 * a * lift;
  return pose;
}

inline Pose clap_pose(double t, const Performance& p) {
  Pose pose;
  const double a = p.amp;
  const double open = smooth01(std::sin(p.omega * t + p.phase));
  pose.angles[kLShoulder].flex = pose.angles[kRShoulder].flex = 1.35;
  pose.angles[kLShoulder].twist = 0.15 + 0.9 * a * open;
  pose.angles[kRShoulder].twist = -(0.15 + 0.9 * a * open);
  pose.angles[kLElbow].raise = -0.5;
  pose.angles[kRElbow].raise = 0.5;
  pose.angles[kSpine].flex = 0.05 * a * open;
  return pose;
}

inline Pose spin_pose(double t, const Performance& p) {
  Pose pose;
  const double a = p.amp;
  pose.angles[kRoot].twist = 0.5 * p.omega * t + p.phase;
  pose.angles[kLShoulder].raise = 0.4 + 0.9 * a;
  pose.angles[kRShoulder].raise = -(0.4 + 0.9 * a);
  pose.angles[kLKnee].flex = pose.angles[kRKnee].flex = -0.2 * a;
  pose.angles[kLHip].flex = pose.angles[kRHip].flex = 0.1 * a;
  pose.root_shift = {0.0, -0.03 * a, 0.0};
  return pose;
}

inline void apply_style(Pose& pose, const MotionStyle& style) {
  static constexpr std::array<double, 3> spread = {-0.08, 0.1, 0.3};
  static constexpr std::array<double, 3> depth = {0.8, 0.0, -0.8};
  pose.root_shift[2] += depth.at(static_cast<std::size_t>(style.place));
  pose.angles[kLHip].raise += spread.at(static_cast<std::size_t>(style.feet));
  pose.angles[kRHip].raise -= spread.at(static_cast<std::size_t>(style.feet));
  if (style.posture == 1) {
    pose.root_shift[1] -= 0.25;
    pose.angles[kLHip].flex += 0.6;
    pose.angles[kRHip].flex += 0.6;
    pose.angles[kLKnee].flex -= 1.1;
    pose.angles[kRKnee].flex -= 1.1;
  } else if (style.posture == 2) {
    pose.angles[kSpine].flex += 0.8;
  }
}

struct ClassDef {
  PoseFn pose;      // empty for classes defined as the mirror of another
  std::string mirror_of;
  double base_hz = 1.0;
  std::vector<std::string> templates;
};

inline const std::map<std::string, ClassDef>& class_registry() {
  static const std::map<std::string, ClassDef> registry = [] {
    std::map<std::string, ClassDef> r;
    r["walk"] = {walk_pose, "", 1.0,
                 {"a person walks {posture} with feet {feet} at the {place}",
                  "a person walks at the {place} {posture} with feet {feet}",
                  "a person walks with feet {feet} at the {place} {posture}",
                  "a person walks {posture} at the {place} with feet {feet}"}};
    r["jump"] = {jump_pose, "", 0.9,
                 {"a person jumps {posture} with feet {feet} at the {place}",
                  "a person jumps at the {place} {posture} with feet {feet}",
                  "a person jumps with feet {feet} at the {place} {posture}",
                  "a person jumps {posture} at the {place} with feet {feet}"}};
    r["wave_left"] = {wave_left_pose, "", 1.4,
                      {"a person waves the left hand {posture} with feet {feet} at the {place}",
                       "a person waves the left hand at the {place} {posture} with feet {feet}",
                       "a person waves the left hand with feet {feet} at the {place} {posture}",
                       "a person waves the left hand {posture} at the {place} with feet {feet}"}};
    r["kick_left"] = {kick_left_pose, "", 0.7,
                      {"a person kicks the left leg {posture} with feet {feet} at the {place}",
                       "a person kicks the left leg at the {place} {posture} with feet {feet}",
                       "a person kicks the left leg with feet {feet} at the {place} {posture}",
                       "a person kicks the left leg {posture} at the {place} with feet {feet}"}};
    r["clap"] = {clap_pose, "", 1.5,
                 {"a person claps both hands {posture} with feet {feet} at the {place}",
                  "a person claps both hands at the {place} {posture} with feet {feet}",
                  "a person claps both hands with feet {feet} at the {place} {posture}",
                  "a person claps both hands {posture} at the {place} with feet {feet}"}};
    r["spin"] = {spin_pose, "", 0.8,
                 {"a person spins around {posture} with feet {feet} at the {place}",
                  "a person spins around at the {place} {posture} with feet {feet}",
                  "a person spins around with feet {feet} at the {place} {posture}",
                  "a person spins around {posture} at the {place} with feet {feet}"}};
    r["wave_right"] = {{}, "wave_left", 0.0, {}};
    r["kick_right"] = {{}, "kick_left", 0.0, {}};
    return r;
  }();
  return registry;
}

inline std::string registered_list() {
  std::string s;
  for (const auto& [name, def] : class_registry()) {
    if (!s.empty()) s += ", ";
    s += name;
  }
  return s;
}

inline const ClassDef& lookup_class(const std::string& name) {
  const auto& reg = class_registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    throw ConfigError("unknown motion class '" + name + "'; registered classes: " + registered_list());
  }
  return it->second;
}

}  // namespace detail

/// Registered procedural classes, in the default dataset order.
inline std::vector<std::string> default_classes() {
  return {"walk", "jump", "wave_left", "wave_right", "kick_left", "kick_right", "clap", "spin"};
}

inline std::vector<std::string> registered_classes() {
  std::vector<std::string> names;
  for (const auto& [name, def] : detail::class_registry()) names.push_back(name);
  return names;
}

/// Signature verb that every caption of the class contains.
inline std::string signature_verb(const std::string& class_name) {
  detail::lookup_class(class_name);
  return class_name.substr(0, class_name.find('_'));
}

inline std::string mirror_class_label(const std::string& label) {
  auto ends_with = [&](const std::string& suffix) {
    return label.size() >= suffix.size() && label.compare(label.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with("_left")) return label.substr(0, label.size() - 5) + "_right";
  if (ends_with("_right")) return label.substr(0, label.size() - 6) + "_left";
  return label;
}

/// Negates x and swaps left/right joint trajectories.
inline MotionSequence mirror_motion(const MotionSequence& m, const Skeleton& skeleton) {
  if (m.joints != skeleton.joint_count()) {
    throw DimensionError("mirror_motion: motion has " + std::to_string(m.joints) + " joints, skeleton has " +
                         std::to_string(skeleton.joint_count()));
  }
  const auto pairs = skeleton.mirror_pairs();
  MotionSequence out = m;
  out.class_label = mirror_class_label(m.class_label);
  for (std::size_t t = 0; t < m.frames; ++t) {
    for (std::size_t j = 0; j < m.joints; ++j) {
      const std::size_t src = pairs[j];
      out.at(t, j, 0) = -m.at(t, src, 0);
      out.at(t, j, 1) = m.at(t, src, 1);
      out.at(t, j, 2) = m.at(t, src, 2);
    }
  }
  return out;
}

/// Swaps whole "left"/"right" tokens.
inline std::string mirror_text(const std::string& caption) {
  std::istringstream in(caption);
  std::string word, out;
  while (in >> word) {
    if (word == "left") {
      word = "right";
    } else if (word == "right") {
      word = "left";
    }
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

/// Motion of `class_name` with an explicit style; `seed` drives the continuous jitter.
inline MotionSequence generate_motion(const std::string& class_name, const Skeleton& skeleton, std::size_t frames,
                                      std::uint64_t seed, const MotionStyle& style) {
  const auto& def = detail::lookup_class(class_name);
  if (frames == 0) throw ConfigError("generate_motion: frame count must be positive");
  if (skeleton.name() != toy_skeleton().name() || skeleton.joint_count() != toy_skeleton().joint_count()) {
    throw ConfigError("generate_motion: procedural classes are defined for the '" + toy_skeleton().name() +
                      "' skeleton, got '" + skeleton.name() + "'");
  }
  if (!def.mirror_of.empty()) {
    return mirror_motion(generate_motion(def.mirror_of, skeleton, frames, seed, style), skeleton);
  }

  Rng rng(derive_seed(seed, "performance"));
  detail::Performance perf;
  perf.omega = 2.0 * std::numbers::pi * def.base_hz * rng.uniform(0.8, 1.25);
  perf.amp = rng.uniform(0.7, 1.2);
  perf.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  MotionSequence m;
  m.frames = frames;
  m.joints = skeleton.joint_count();
  m.positions.assign(frames * m.joints * 3, 0.0);
  m.class_label = class_name;
  m.seed = seed;
  for (std::size_t t = 0; t < frames; ++t) {
    detail::Pose pose = def.pose(static_cast<double>(t) / kFrameRate, perf);
    detail::apply_style(pose, style);
    detail::forward_kinematics(skeleton, pose, m.positions.data() + t * m.joints * 3);
  }
  return m;
}

/// Motion whose style is itself derived from the seed.
inline MotionSequence generate_motion(const std::string& class_name, const Skeleton& skeleton, std::size_t frames,
                                      std::uint64_t seed) {
  return generate_motion(class_name, skeleton, frames, seed, style_for_seed(seed));
}

/// Caption for (class, seed): a seeded template choice with the style words filled in.
inline std::string caption_for(const std::string& class_name, std::uint64_t seed) {
  const auto& def = detail::lookup_class(class_name);
  if (!def.mirror_of.empty()) return mirror_text(caption_for(def.mirror_of, seed));
  const MotionStyle style = style_for_seed(seed);
  Rng rng(derive_seed(seed, "caption"));
  std::string text = def.templates.at(static_cast<std::size_t>(rng.below(def.templates.size())));
  auto fill = [&text](const std::string& slot, const std::string& word) {
    const auto pos = text.find(slot);
    if (pos != std::string::npos) text.replace(pos, slot.size(), word);
  };
  fill("{posture}", kPostureWords.at(static_cast<std::size_t>(style.posture)));
  fill("{feet}", kFeetWords.at(static_cast<std::size_t>(style.feet)));
  fill("{place}", kPlaceWords.at(static_cast<std::size_t>(style.place)));
  return text;
}

}  // namespace moclip
