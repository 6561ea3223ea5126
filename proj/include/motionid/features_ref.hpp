#pragma once

#include "motionid/features.hpp"

// Naive reference featurizer: recomputes everything frame by frame from the
// definitions, with no sliding windows, prefix sums, or shared scratch. It is
// deliberately slow and kept as the oracle the optimized path is tested and
// benchmarked against. Only the stream name table and preset definitions are
// shared with the fast path; all computation here is independent.

namespace motionid {

FeatureMatrix featurize_session_reference(const Session& session,
                                          const FeaturePreset& preset,
                                          const FeatureParams& params = {});

}  // namespace motionid
