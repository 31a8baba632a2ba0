#pragma once

#include <filesystem>
#include <vector>

#include "dgcount/synth.hpp"

namespace dgcount::synth {

// One directory per split. For each sample, with id zero-padded to six
// digits:
//   <id>.pgm   binary graymap, maxval 65535 (16-bit big-endian samples)
//   <id>.txt   one "row col" pair per line
//   <id>.json  {"sample_id", "style_id", "subdomain_label", "kernel_size", "sigma"}
// Densities are not stored; import rebuilds them from the points.
void export_split(const std::vector<CrowdSample>& samples, const std::filesystem::path& dir);
std::vector<CrowdSample> import_split(const std::filesystem::path& dir);

void write_pgm(const Tensor& image, const std::filesystem::path& path);
Tensor read_pgm(const std::filesystem::path& path);

}  // namespace dgcount::synth
