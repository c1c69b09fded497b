#pragma once

#include <string>
#include <vector>

#include "dmpct/volume.hpp"

namespace dmpct {

struct LabeledCase {
    std::string id;
    Volume volume;
    LabelMask mask;
};

struct UnlabeledCase {
    std::string id;
    Volume volume;
};

/// Labelled, unlabelled and held-out cases sharing one organ count K.
struct Dataset {
    std::uint16_t num_classes = 0;
    std::vector<LabeledCase> labeled;
    std::vector<UnlabeledCase> unlabeled;
    std::vector<LabeledCase> test;

    /// Throws when a mask disagrees with K or with its volume's dims.
    void validate() const {
        auto check = [&](const LabeledCase& c) {
            if (c.mask.num_classes() != num_classes)
                throw InvalidArgument("case " + c.id + " has K=" + std::to_string(c.mask.num_classes()) +
                                      ", dataset K=" + std::to_string(num_classes));
            if (c.mask.dims() != c.volume.dims())
                throw DimsMismatch("case " + c.id + " mask dims " + to_string(c.mask.dims()) + " vs volume " +
                                   to_string(c.volume.dims()));
        };
        for (const auto& c : labeled) check(c);
        for (const auto& c : test) check(c);
    }
};

} // namespace dmpct
