#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "outpaint/networks.hpp"

namespace outpaint::test {

struct Row {
  std::string type;
  std::int64_t kernel;
  std::int64_t stride;
  std::int64_t channels;
};

// Reference layer tables, typed in by hand from the reference architecture.
// kernel/stride 0 stand for "None" on upsample rows.

inline std::vector<Row> encoder_rows() {
  return {{"Conv", 7, 1, 64},    {"Conv", 3, 1, 128},  {"Conv", 3, 2, 128},
          {"Conv", 3, 1, 256},   {"Conv", 3, 2, 256},  {"Conv", 3, 1, 512},
          {"Conv", 3, 2, 512},   {"Conv", 3, 1, 1024}, {"Conv", 3, 2, 1024},
          {"Conv", 3, 1, 1024},  {"Conv", 3, 2, 1024}};
}

inline std::vector<Row> decoder_rows(const std::string& block, std::int64_t out_nc) {
  return {{block, 3, 1, 1024},      {"Upsample", 0, 0, 1024}, {block, 3, 1, 1024},
          {block, 3, 1, 1024},      {"Upsample", 0, 0, 1024}, {block, 3, 1, 512},
          {"Upsample", 0, 0, 512},  {block, 3, 1, 256},       {"Upsample", 0, 0, 256},
          {block, 3, 1, 128},       {"Upsample", 0, 0, 128},  {block, 3, 1, 64},
          {"Conv", 3, 1, out_nc}};
}

inline std::vector<Row> discriminator_rows() {
  return {{"Conv", 4, 2, 64}, {"Conv", 4, 2, 128}, {"Conv", 4, 2, 256},
          {"Conv", 4, 1, 512}, {"Conv", 4, 1, 1}};
}

/// Empty string on match, otherwise a description of the first difference.
inline std::string compare_rows(const std::vector<LayerRecord>& actual,
                                const std::vector<Row>& expected) {
  if (actual.size() != expected.size())
    return "row count " + std::to_string(actual.size()) + " != " + std::to_string(expected.size());
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const auto& a = actual[i];
    const auto& e = expected[i];
    if (a.type != e.type || a.kernel != e.kernel || a.stride != e.stride ||
        a.channels != e.channels)
      return "row " + std::to_string(i) + ": got " + a.type + " k" + std::to_string(a.kernel) +
             " s" + std::to_string(a.stride) + " c" + std::to_string(a.channels) + ", want " +
             e.type + " k" + std::to_string(e.kernel) + " s" + std::to_string(e.stride) + " c" +
             std::to_string(e.channels);
  }
  return {};
}

}  // namespace outpaint::test
