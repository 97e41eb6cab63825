#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsmoe/engine.hpp"
#include "hsmoe/synthgen.hpp"

namespace hsmoe {

/// Rectangular dataset: header `x_1,...,x_d,y[,z_true]`, one observation
/// per row. z_true is 1-based on disk and 0-based in memory.
struct Dataset {
  std::size_t dim = 0;
  std::vector<Observation> observations;
  std::optional<std::vector<std::size_t>> z_true;
};

/// Throws ParseError naming the row and column of the first problem.
Dataset parse_dataset_csv(const std::string& text);
Dataset read_dataset_csv(const std::filesystem::path& path);
std::string format_dataset_csv(const Dataset& data);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

nlohmann::ordered_json to_json(const GroundTruth& truth);
nlohmann::ordered_json to_json(const SynthConfig& cfg);
nlohmann::ordered_json to_json(const FilterConfig& cfg);
FilterConfig filter_config_from_json(const nlohmann::json& j);

/// Full filter snapshot: sufficient statistics as nested arrays.
nlohmann::ordered_json filter_state_to_json(const FilterState& fs);
/// Throws ParseError on a malformed snapshot.
FilterState filter_state_from_json(const nlohmann::json& j);

std::string to_string(ResampleScheme s);
std::string to_string(PhiRefresh p);
ResampleScheme parse_resample_scheme(const std::string& s);
PhiRefresh parse_phi_refresh(const std::string& s);

/// Write `contents` to `path` through a temporary file in the same
/// directory, so a failure never leaves a partial file behind. Throws
/// std::runtime_error if the directory is missing or unwritable.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace hsmoe
