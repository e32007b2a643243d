#pragma once

#include <array>
#include <string>
#include <vector>

#include "stainforge/image.hpp"

namespace stainforge {

// A patch with its class label, flattened stain matrix (H row then E row) used as
// the regression target, and the id of the center it came from.
struct LabeledPatch {
    Image8 patch;
    int y = 0;
    std::array<double, 6> m{};
    int center_id = 0;
};

struct Dataset {
    std::vector<LabeledPatch> items;
    int n_classes = 0;
};

struct SplitDataset {
    Dataset train;
    Dataset val;
    Dataset internal_test;
    Dataset external_test;
};

// Directory layout: center_<id>/class_<k>/patch_<n>.png, manifest.csv with columns
// path,y,center_id,m00..m05, and splits.csv with columns path,split.
void write_dataset(const SplitDataset& ds, const std::string& dir);
SplitDataset load_dataset(const std::string& dir);

} // namespace stainforge
