#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace swinq {

/// A decoded, preprocessed image [S, S, C] with its class index.
struct Sample {
  std::string path;
  std::vector<float> pixels;
  std::size_t label = 0;
};

}  // namespace swinq
