#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "ciao/errors.hpp"

namespace ciao {

struct Categorical {
  int class_id = 0;
  friend bool operator==(const Categorical&, const Categorical&) = default;
};

struct Distribution {
  std::vector<float> probs;
  friend bool operator==(const Distribution&, const Distribution&) = default;
};

struct MultiLabelBinary {
  std::vector<std::uint8_t> flags;
  friend bool operator==(const MultiLabelBinary&, const MultiLabelBinary&) = default;
};

struct Dimensional {
  float arousal = 0.0f;
  float valence = 0.0f;
  friend bool operator==(const Dimensional&, const Dimensional&) = default;
};

using LabelScheme = std::variant<Categorical, Distribution, MultiLabelBinary, Dimensional>;

enum class LabelKind { categorical, distribution, multilabel, dimensional };

inline std::string_view to_string(LabelKind k) {
  switch (k) {
    case LabelKind::categorical: return "categorical";
    case LabelKind::distribution: return "distribution";
    case LabelKind::multilabel: return "multilabel";
    case LabelKind::dimensional: return "dimensional";
  }
  return "categorical";
}

inline LabelKind parse_label_kind(std::string_view s) {
  if (s == "categorical") return LabelKind::categorical;
  if (s == "distribution") return LabelKind::distribution;
  if (s == "multilabel") return LabelKind::multilabel;
  if (s == "dimensional") return LabelKind::dimensional;
  throw ValidationError("unknown label scheme '" + std::string(s) + "'");
}

inline LabelKind kind_of(const LabelScheme& label) { return static_cast<LabelKind>(label.index()); }

/// Width of the prediction head a scheme needs.
inline std::size_t head_width(LabelKind kind, std::size_t num_classes) {
  return kind == LabelKind::dimensional ? 2 : num_classes;
}

/// Throws when the label violates its scheme's invariants or class count.
inline void validate_label(const LabelScheme& label, std::size_t num_classes) {
  std::visit(
      [&](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Categorical>) {
          if (l.class_id < 0 || static_cast<std::size_t>(l.class_id) >= num_classes)
            throw ValidationError("categorical label " + std::to_string(l.class_id) + " out of range");
        } else if constexpr (std::is_same_v<L, Distribution>) {
          if (l.probs.size() != num_classes) throw ValidationError("distribution label has wrong length");
          double s = 0.0;
          for (float p : l.probs) {
            if (!(p >= 0.0f)) throw ValidationError("distribution label has a negative entry");
            s += p;
          }
          if (std::abs(s - 1.0) > 1e-6) throw ValidationError("distribution label does not sum to 1");
        } else if constexpr (std::is_same_v<L, MultiLabelBinary>) {
          if (l.flags.size() != num_classes) throw ValidationError("multi-label flags have wrong length");
          for (auto f : l.flags)
            if (f > 1) throw ValidationError("multi-label flags must be 0 or 1");
        } else {
          if (!(std::abs(l.arousal) <= 1.0f && std::abs(l.valence) <= 1.0f))
            throw ValidationError("dimensional label outside [-1,1]");
        }
      },
      label);
}

}  // namespace ciao
