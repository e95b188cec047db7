#pragma once

#include <json.hpp>

#include <string>

#include "tabrec/sampler.hpp"

namespace tabrec {

inline constexpr const char* kVersionString = "tabrec 0.1.0";

// Writes a posterior archive as a directory of delimited-text files plus a
// JSON manifest:
//   summary.csv        per-cell posterior summaries at all three levels
//   samples.csv        retained level-1 class cells, delta-encoded triplets
//   traces.csv         beta and hyper-parameter draws (geostatistical runs)
//   acceptance.csv     per-sweep acceptance rates, chains concatenated
//   convergence.csv    split-chain potential-scale-reduction per scalar
//   beta_contrasts.txt decile contrast table (geostatistical runs)
//   manifest.json      model settings, seed, counters, extra keys
// Manifests carry no timestamps so identical seeds give identical bytes.
void write_archive(const std::string& dir, const PosteriorArchive& archive,
                   const nlohmann::json& extra_manifest = nlohmann::json::object());

// Reads an archive directory back. Level-2/3 values per sample are re-derived
// from the level-1 cells; histograms are rebuilt.
PosteriorArchive load_archive(const std::string& dir,
                              const SpatialHierarchy& hierarchy);

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRow>& rows);

}  // namespace tabrec
