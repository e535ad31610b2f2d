#pragma once

#include <vector>

#include "roadtagger/tensor.hpp"

namespace roadtagger {

// Per-vertex probability vectors for both attribute heads.
// Lane class c corresponds to a lane count of c+1; type 0 is residential,
// type 1 is primary.
struct PredictionSet {
    Tensor lane_probs;  // V x lane classes
    Tensor type_probs;  // V x 2

    int vertex_count() const { return lane_probs.rows(); }

    std::vector<int> lane_argmax() const;  // lane counts, 1-based
    std::vector<int> type_argmax() const;  // 0 or 1
};

int argmax_row(const Tensor& t, int row);

}  // namespace roadtagger
