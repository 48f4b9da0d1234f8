#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gsq {

/// Role of a row in the variable vector. Quadrature pairs (x, p) carry the
/// symplectic structure; classical parameters (e.g. a magnetic field) are
/// single rows without a conjugate partner.
enum class LabelKind { Position, Momentum, Classical };

struct Label {
    std::string name;
    LabelKind kind = LabelKind::Position;

    bool operator==(const Label& other) const = default;
};

inline Label pos(std::string name) { return {std::move(name), LabelKind::Position}; }
inline Label mom(std::string name) { return {std::move(name), LabelKind::Momentum}; }
inline Label classical(std::string name) { return {std::move(name), LabelKind::Classical}; }

/// Convenience: the (x_<stem>, p_<stem>) pair of one bosonic mode.
inline std::vector<Label> mode_pair(const std::string& stem) {
    return {pos("x_" + stem), mom("p_" + stem)};
}

inline void require_unique(const std::vector<Label>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j)
            if (labels[i].name == labels[j].name)
                throw std::invalid_argument("duplicate label: " + labels[i].name);
}

}  // namespace gsq
