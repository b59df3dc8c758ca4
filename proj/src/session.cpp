#include "vjump/session.hpp"

#include "vjump/error.hpp"

namespace vjump {

void ImuSession::validate() const {
    if (samples.rows() == 0) throw ValidationError("session '" + subject_id + "' is empty");
    if (samples.cols() != kNumChannels) {
        throw DimensionError("session '" + subject_id + "' has " + std::to_string(samples.cols()) +
                             " channels, expected 6 (ax,ay,az,gx,gy,gz)");
    }
    if (!samples.all_finite()) {
        throw ValidationError("session '" + subject_id + "' contains non-finite samples");
    }
    if (labels && labels->size() != samples.rows()) {
        throw DimensionError("session '" + subject_id + "' has " + std::to_string(labels->size()) +
                             " labels for " + std::to_string(samples.rows()) + " samples");
    }
}

}  // namespace vjump
