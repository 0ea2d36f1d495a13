#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "moclip/errors.hpp"
#include "moclip/ops.hpp"

namespace moclip {

struct EndEffectors {
  std::size_t left_hand = 0;
  std::size_t right_hand = 0;
  std::size_t left_foot = 0;
  std::size_t right_foot = 0;

  std::array<std::size_t, 4> all() const { return {left_hand, right_hand, left_foot, right_foot}; }
};

/// Kinematic tree. Joint 0 is the root and is its own parent.
class Skeleton {
 public:
  Skeleton(std::string name, std::vector<std::string> joint_names, std::vector<std::size_t> parents,
           std::optional<EndEffectors> end_effectors = std::nullopt)
      : name_(std::move(name)),
        joint_names_(std::move(joint_names)),
        parents_(std::move(parents)),
        end_effectors_(end_effectors) {
    validate();
  }

  const std::string& name() const { return name_; }
  std::size_t joint_count() const { return parents_.size(); }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  const std::vector<std::size_t>& parents() const { return parents_; }
  std::size_t parent(std::size_t j) const { return parents_.at(j); }
  const std::optional<EndEffectors>& end_effectors() const { return end_effectors_; }

  bool is_leaf(std::size_t j) const {
    for (std::size_t k = 1; k < parents_.size(); ++k) {
      if (parents_[k] == j) return false;
    }
    return true;
  }

  /// Left/right partner of every joint, derived from "left"/"right" in the joint names.
  /// Unpaired joints map to themselves.
  std::vector<std::size_t> mirror_pairs() const {
    std::vector<std::size_t> pairs(joint_count());
    for (std::size_t j = 0; j < joint_count(); ++j) {
      pairs[j] = j;
      const std::string partner = swap_side(joint_names_[j]);
      if (partner == joint_names_[j]) continue;
      for (std::size_t k = 0; k < joint_count(); ++k) {
        if (joint_names_[k] == partner) pairs[j] = k;
      }
      if (pairs[j] == j) {
        throw ConfigError("skeleton '" + name_ + "': joint '" + joint_names_[j] + "' has no partner '" +
                          partner + "'");
      }
    }
    return pairs;
  }

  static std::string swap_side(const std::string& s) {
    if (s.rfind("left", 0) == 0) return "right" + s.substr(4);
    if (s.rfind("right", 0) == 0) return "left" + s.substr(5);
    return s;
  }

 private:
  void validate() const {
    const std::size_t J = parents_.size();
    if (J == 0) throw ConfigError("skeleton '" + name_ + "' has no joints");
    if (joint_names_.size() != J) throw ConfigError("skeleton '" + name_ + "': name count differs from joint count");
    if (parents_[0] != 0) throw ConfigError("skeleton '" + name_ + "': joint 0 must be the root");
    for (std::size_t j = 1; j < J; ++j) {
      if (parents_[j] >= J || parents_[j] == j) {
        throw ConfigError("skeleton '" + name_ + "': invalid parent for joint " + std::to_string(j));
      }
      // every chain must reach the root within J steps
      std::size_t k = j, steps = 0;
      while (k != 0 && steps <= J) {
        k = parents_[k];
        ++steps;
      }
      if (k != 0) throw ConfigError("skeleton '" + name_ + "': cycle through joint " + std::to_string(j));
    }
    if (end_effectors_) {
      auto ee = end_effectors_->all();
      for (std::size_t a = 0; a < ee.size(); ++a) {
        if (ee[a] >= J || !is_leaf(ee[a])) {
          throw ConfigError("skeleton '" + name_ + "': end effector " + std::to_string(ee[a]) + " is not a leaf joint");
        }
        for (std::size_t b = a + 1; b < ee.size(); ++b) {
          if (ee[a] == ee[b]) throw ConfigError("skeleton '" + name_ + "': end effectors must be distinct");
        }
      }
    }
  }

  std::string name_;
  std::vector<std::string> joint_names_;
  std::vector<std::size_t> parents_;
  std::optional<EndEffectors> end_effectors_;
};

/// The 14-joint toy body: pelvis root, chest, then four three-joint limbs.
/// Hands and feet sit at indices 4, 7, 10 and 13.
inline const Skeleton& toy_skeleton() {
  static const Skeleton skeleton(
      "toy14",
      {"root", "spine", "left_shoulder", "left_elbow", "left_hand", "right_shoulder", "right_elbow",
       "right_hand", "left_hip", "left_knee", "left_foot", "right_hip", "right_knee", "right_foot"},
      {0, 0, 1, 2, 3, 1, 5, 6, 0, 8, 9, 0, 11, 12}, EndEffectors{4, 7, 10, 13});
  return skeleton;
}

/// Spatial attention mask over joints: self, parent/child, and (with cross_limb) all
/// pairs of end effectors.
inline AttentionMask attention_mask(const Skeleton& skeleton, bool cross_limb) {
  const std::size_t J = skeleton.joint_count();
  AttentionMask mask{J, std::vector<bool>(J * J, false)};
  for (std::size_t j = 0; j < J; ++j) {
    mask.allowed[j * J + j] = true;
    const std::size_t p = skeleton.parent(j);
    mask.allowed[j * J + p] = true;
    mask.allowed[p * J + j] = true;
  }
  if (cross_limb && skeleton.end_effectors()) {
    for (std::size_t a : skeleton.end_effectors()->all())
      for (std::size_t b : skeleton.end_effectors()->all()) mask.allowed[a * J + b] = true;
  }
  return mask;
}

}  // namespace moclip
