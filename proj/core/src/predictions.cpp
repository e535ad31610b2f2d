#include "roadtagger/predictions.hpp"

namespace roadtagger {

int argmax_row(const Tensor& t, int row) {
    int best = 0;
    for (int c = 1; c < t.cols(); ++c)
        if (t.at(row, c) > t.at(row, best)) best = c;
    return best;
}

std::vector<int> PredictionSet::lane_argmax() const {
    std::vector<int> out(lane_probs.rows());
    for (int r = 0; r < lane_probs.rows(); ++r) out[r] = argmax_row(lane_probs, r) + 1;
    return out;
}

std::vector<int> PredictionSet::type_argmax() const {
    std::vector<int> out(type_probs.rows());
    for (int r = 0; r < type_probs.rows(); ++r) out[r] = argmax_row(type_probs, r);
    return out;
}

}  // namespace roadtagger
