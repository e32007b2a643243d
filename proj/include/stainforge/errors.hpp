#pragma once

#include <stdexcept>

namespace stainforge {

struct NotEnoughTissue : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateStain : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyTissue : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteGradient : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyDataset : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SingleDomain : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientCenters : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ImageTooSmall : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UndefinedKappa : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SampleTooSmall : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateData : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientSamples : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidConfig : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace stainforge
