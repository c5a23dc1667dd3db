#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "htrkit/ctc.hpp"

namespace htrkit {

enum class DecodeMode { kGreedy, kBeam };

struct FileFailure {
  std::string file;
  std::string error;
};

struct DecodeSummary {
  std::size_t files = 0;  // successfully decoded
  std::vector<FileFailure> failures;
  double mean_score = 0.0;

  bool ok() const { return failures.empty(); }
};

/// Decodes every *.emit file of `emissions_dir` into a same-stem .txt file in
/// `out_dir`. Per-file errors, including an alphabet differing from the first
/// readable file (by name order), are collected instead of aborting the job.
DecodeSummary decode_directory(const std::filesystem::path& emissions_dir,
                               const DecodeParams& params, DecodeMode mode,
                               const std::filesystem::path& out_dir, std::size_t workers = 1);

std::string summary_json(const DecodeSummary& summary);

}  // namespace htrkit
