#pragma once

#include <vector>

namespace semimatch {

// One annotated match: pixel coordinates in the source and target images.
struct KeypointPair {
    double src_x = 0, src_y = 0;
    double tgt_x = 0, tgt_y = 0;
};

using Keypoints = std::vector<KeypointPair>;

}  // namespace semimatch
